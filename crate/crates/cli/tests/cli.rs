use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn specpol(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_specpol"));
    cmd.args(args).env("RUST_LOG", "error");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "status {:?}, stderr {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn err_json(out: &Output, code: i32) -> Value {
    assert_eq!(out.status.code(), Some(code), "stderr {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn small_blaschke1(dir: &Path, extra: &[&str]) -> Value {
    let d = dir.to_str().unwrap();
    let mut args = vec![
        "run", "--experiment", "blaschke1", "--output_dir", d, "--N", "21", "--M", "200",
        "--grid_n_re", "9", "--grid_n_im", "7",
    ];
    args.extend_from_slice(extra);
    ok_json(&specpol(&args, &[]))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn json_file(dir: &Path, name: &str) -> Value {
    serde_json::from_slice(&read(dir, name)).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let sa = small_blaschke1(&a, &[]);
    small_blaschke1(&b, &[]);
    let single = tmp.path().join("single");
    specpol(
        &["run", "--experiment", "blaschke1", "--output_dir", single.to_str().unwrap(), "--N", "21",
          "--M", "200", "--grid_n_re", "9", "--grid_n_im", "7"],
        &[("SPECPOL_THREADS", "1")],
    );
    for f in ["truth.json", "eigenvalues.json", "residuals.csv", "gram.json"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
        assert_eq!(read(&a, f), read(&single, f), "{f} with one thread");
    }
    assert_eq!(sa["files"].as_array().unwrap().len(), 5);
    let csv = String::from_utf8(read(&a, "residuals.csv")).unwrap();
    assert!(csv.starts_with("re_lambda,im_lambda,residual\n-1.5,-1.5,"));
    assert_eq!(csv.lines().count(), 1 + 9 * 7);
}

#[test]
fn meta_json_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    small_blaschke1(&a, &["--space", "sobolev", "--s", "-2"]);
    let meta = json_file(&a, "meta.json");
    assert_eq!(meta["space"], "sobolev");
    assert_eq!(meta["s"], -2.0);
    assert_eq!(meta["N"], 21);
    assert!(meta["versions"]["specpol"].is_string());

    let b = tmp.path().join("b");
    let meta_path = a.join("meta.json");
    ok_json(&specpol(
        &["run", "--config", meta_path.to_str().unwrap(), "--output_dir", b.to_str().unwrap()],
        &[],
    ));
    for f in ["truth.json", "eigenvalues.json", "residuals.csv", "gram.json"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    let mut meta_b = json_file(&b, "meta.json");
    meta_b["output_dir"] = meta["output_dir"].clone();
    assert_eq!(meta_b, meta);
}

#[test]
fn flags_override_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    let out = tmp.path().join("out");
    fs::write(
        &cfg,
        format!(
            "experiment = \"blaschke1\"\nspace = \"l2\"\nN = 21\nM = 100\noutput_dir = {:?}\n\
             [grid]\nn_re = 5\nn_im = 5\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let s = ok_json(&specpol(&["run", "--config", cfg.to_str().unwrap(), "--N", "11"], &[]));
    assert_eq!(s["eigenvalues"], 11);
    assert_eq!(s["space"], "l2");
    let meta = json_file(&out, "meta.json");
    assert_eq!((meta["N"].as_u64(), meta["M"].as_u64()), (Some(11), Some(100)));
    let report = json_file(&out, "eigenvalues.json");
    let first = &report["eigenvalues"][0];
    assert!((first["re"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(first["accepted"], true);
    assert_eq!(report["epsilon"], 0.01);
    assert_eq!(report["space"], "l2");
}

#[test]
fn config_errors_exit_2_with_field() {
    let e = err_json(&specpol(&["run", "--experiment", "blaschke2"], &[]), 2);
    assert_eq!(e["error"]["kind"], "config");
    assert_eq!(e["error"]["field"], "mu_re");

    let e = err_json(
        &specpol(&["run", "--experiment", "blaschke2", "--mu_re", "0.4"], &[]),
        2,
    );
    assert!(e["error"]["message"].as_str().unwrap().contains("1/3"));

    let e = err_json(&specpol(&["run", "--experiment", "lemma_check"], &[("SPECPOL_THREADS", "zero")]), 2);
    assert_eq!(e["error"]["field"], "SPECPOL_THREADS");

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "experiment = \"blaschke1\"\nradius = 0.5\n").unwrap();
    let e = err_json(&specpol(&["run", "--config", cfg.to_str().unwrap()], &[]), 2);
    assert!(e["error"]["message"].as_str().unwrap().contains("radius"));

    let out = specpol(&["run", "--experiment", "nonsense"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn grid_recomputes_the_saved_field() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    small_blaschke1(&a, &[]);
    let out = tmp.path().join("regrid.csv");
    let s = ok_json(&specpol(
        &["grid", "--gram", a.join("gram.json").to_str().unwrap(), "--out", out.to_str().unwrap(),
          "--grid_n_re", "9", "--grid_n_im", "7"],
        &[],
    ));
    assert_eq!(s["points"], 63);
    let parse = |b: &[u8]| specpol::io::read_residual_csv(b).unwrap();
    let saved = parse(&read(&a, "residuals.csv"));
    let again = parse(&fs::read(&out).unwrap());
    for ((z1, r1), (z2, r2)) in saved.iter().zip(&again) {
        assert_eq!(z1, z2);
        assert!((r1 - r2).abs() < 1e-7 * (1.0 + r1), "{z1}: {r1} vs {r2}");
    }
}

#[test]
fn indefinite_gram_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let gram = tmp.path().join("gram.json");
    fs::write(
        &gram,
        r#"{"n":2,"G":[[1,0],[2,0],[2,0],[1,0]],"A":[[0,0],[0,0],[0,0],[0,0]],"J":[[0,0],[0,0],[0,0],[0,0]]}"#,
    )
    .unwrap();
    let out = tmp.path().join("x.csv");
    let e = err_json(
        &specpol(&["grid", "--gram", gram.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]),
        3,
    );
    assert_eq!(e["error"]["kind"], "numerical");
    assert!(!out.exists());
}

#[test]
fn classify_rethresholds_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    small_blaschke1(&a, &[]);
    let path = a.join("eigenvalues.json");
    let tight = tmp.path().join("tight.json");
    let out = specpol(
        &["classify", "--eigenvalues", path.to_str().unwrap(), "--epsilon", "1e-6", "--out",
          tight.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success());
    let loose = specpol(&["classify", "--eigenvalues", path.to_str().unwrap(), "--epsilon", "10"], &[]);
    let loose: Value = serde_json::from_slice(&loose.stdout).unwrap();
    let tight: Value = serde_json::from_slice(&fs::read(&tight).unwrap()).unwrap();
    let orig = json_file(&a, "eigenvalues.json");
    assert_eq!(tight["epsilon"], 1e-6);
    assert_eq!(tight["space"], orig["space"]);
    assert_eq!(tight["meta"], orig["meta"]);
    let flags = |v: &Value| -> Vec<bool> {
        v["eigenvalues"].as_array().unwrap().iter().map(|e| e["accepted"].as_bool().unwrap()).collect()
    };
    for ((t, o), l) in flags(&tight).into_iter().zip(flags(&orig)).zip(flags(&loose)) {
        assert!(!t || o);
        assert!(!o || l);
    }
    assert!(flags(&loose).iter().all(|&x| x));
    let bad = specpol(&["classify", "--eigenvalues", path.to_str().unwrap(), "--epsilon", "-1"], &[]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn ingest_counts_pairs_and_reports_bad_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let three = tmp.path().join("three.csv");
    fs::write(&three, "x,y\n0,1\n2,3\n4,5\n").unwrap();
    let pairs = tmp.path().join("pairs.csv");
    let s = ok_json(&specpol(
        &["ingest", "--input", three.to_str().unwrap(), "--out", pairs.to_str().unwrap()],
        &[],
    ));
    assert_eq!((s["pairs"].as_u64(), s["dim"].as_u64()), (Some(2), Some(2)));
    assert_eq!(fs::read_to_string(&pairs).unwrap(), "x0,x1,y0,y1\n0,1,2,3\n2,3,4,5\n");

    let long = tmp.path().join("long.csv");
    let text: String = (0..125_000).map(|i| format!("{}\n", i as f64 * 1e-3)).collect();
    fs::write(&long, text).unwrap();
    let s = ok_json(&specpol(&["ingest", "--input", long.to_str().unwrap(), "--stride", "50"], &[]));
    assert_eq!(s["pairs"], 2499);

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,4\n5,oops\n").unwrap();
    let e = err_json(&specpol(&["ingest", "--input", bad.to_str().unwrap()], &[]), 2);
    assert_eq!(e["error"]["line"], 3);

    let e = err_json(&specpol(&["ingest", "--input", three.to_str().unwrap(), "--stride", "3"], &[]), 2);
    assert!(e["error"]["message"].as_str().unwrap().contains("too few"));
}

#[test]
fn sweeps_write_an_index() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("norm");
    ok_json(&specpol(
        &["run", "--experiment", "normality_sweep", "--output_dir", d.to_str().unwrap(), "--N", "21",
          "--M", "200", "--s_values=-6,-3,0"],
        &[],
    ));
    let index = json_file(&d, "index.json");
    let devs: Vec<f64> = index.as_array().unwrap().iter().map(|e| e["deviation"].as_f64().unwrap()).collect();
    assert_eq!(devs.len(), 3);
    assert!(devs[0] < devs[1] && devs[1] < devs[2], "{devs:?}");
    for e in index.as_array().unwrap() {
        let f = json_file(&d, e["file"].as_str().unwrap());
        assert_eq!(f["deviation"], e["deviation"]);
    }
    assert!(String::from_utf8(read(&d, "normality.csv")).unwrap().starts_with("s,deviation\n-6,"));

    let d = tmp.path().join("sob");
    ok_json(&specpol(
        &["run", "--experiment", "sobolev_sweep", "--output_dir", d.to_str().unwrap(), "--N", "21",
          "--M", "200", "--s_values=-2,1", "--grid_n_re", "5", "--grid_n_im", "5"],
        &[],
    ));
    let index = json_file(&d, "index.json");
    assert_eq!(index.as_array().unwrap().len(), 2);
    for e in index.as_array().unwrap() {
        for key in ["eigenvalues", "residuals", "gram"] {
            assert!(d.join(e[key].as_str().unwrap()).exists());
        }
    }
    assert!(d.join("truth.json").exists());
}

#[test]
fn lemma_check_meets_its_target() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("lemma");
    let s = ok_json(&specpol(
        &["run", "--experiment", "lemma_check", "--output_dir", d.to_str().unwrap(), "--M", "600"],
        &[],
    ));
    assert!(s["max_relative_deviation"].as_f64().unwrap() < 0.05);
    assert_eq!(json_file(&d, "lemma.json")["samples"].as_array().unwrap().len(), 5);
}

#[test]
fn trajectory_pipeline_separates_the_wells() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("traj");
    let s = ok_json(&specpol(
        &["run", "--experiment", "trajectory_pipeline", "--output_dir", d.to_str().unwrap(),
          "--steps", "6000", "--grid_n_re", "5", "--grid_n_im", "5"],
        &[],
    ));
    assert!(s["agreement_with_wells"].as_f64().unwrap() >= 0.95, "{s}");
    let part = json_file(&d, "partition.json");
    assert_eq!(part["n_clusters"], 2);
    assert_eq!(part["labels"].as_array().unwrap().len(), s["M"].as_u64().unwrap() as usize);
    assert!((part["dominant_eigs"][0]["re"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    let meta = json_file(&d, "meta.json");
    assert_eq!(meta["c_sq"], "auto-cov");
    assert_eq!(meta["stride"], 5);
}

#[test]
fn kernel_blaschke_has_wells_at_the_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("kb");
    ok_json(&specpol(
        &["run", "--experiment", "kernel_blaschke", "--output_dir", d.to_str().unwrap(),
          "--M", "400", "--rank_r", "60", "--grid_n_re", "3", "--grid_n_im", "3"],
        &[],
    ));
    let report = json_file(&d, "eigenvalues.json");
    let first = &report["eigenvalues"][0];
    assert!((first["re"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(report["meta"]["rank_r"], 60);
    assert!(d.join("residuals_original.csv").exists());
    let truth = json_file(&d, "truth.json");
    assert!((truth["base"]["re"].as_f64().unwrap() + 0.75 * std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
}
