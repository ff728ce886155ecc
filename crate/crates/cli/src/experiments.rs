//! The case-study experiments and their artifact files.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use specpol::dictionaries::{
    make_snapshots, read_trajectory_csv, Dictionary, SnapshotScheme, SnapshotSet,
};
use specpol::dynamics::{true_spectrum, CircleMap, TrueSpectrum};
use specpol::edmd::{deviation_from_normality, fit_edmd, resdmd_grid, residual_of_pair, Operator};
use specpol::io::{residual_csv, write_atomic, ComplexPoint};
use specpol::kernel::{
    auto_cov_c_sq, eval_expansion, kernel_grams, kresdmd_modified_grid, kresdmd_original_grid,
    KernelResDmd, KernelSpec,
};
use specpol::residual::FieldMeta;
use specpol::spaces::{assemble_gram_triple, CoeffBand, GramSource, GramTriple, InnerProductSpec};
use specpol::spectral::{
    classify_eigenvalues, metastable_partition, near_one, partition_agreement, KMeansConfig,
    SpectralReport,
};
use specpol::synthetic::DoubleWell;
use specpol::{Error, Result, C64};

use crate::config::{CSq, Config, Experiment, MapName, Snapshots, SpaceName};

/// `eigenvalues.json`: the report plus the space and run details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(flatten)]
    pub report: SpectralReport,
    pub space: String,
    pub meta: Value,
}

#[derive(Debug, Serialize)]
struct TruthFile {
    base: ComplexPoint,
    n_max: usize,
    points: Vec<ComplexPoint>,
}

fn point(z: C64) -> ComplexPoint {
    ComplexPoint { re: z.re, im: z.im }
}

fn truth_file(t: &TrueSpectrum) -> TruthFile {
    TruthFile {
        base: point(t.base),
        n_max: t.n_max,
        points: t.points.iter().map(|&z| point(z)).collect(),
    }
}

/// Collects written file names in order.
pub struct Out {
    dir: PathBuf,
    pub files: Vec<String>,
}

impl Out {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }
}

fn circle_map(cfg: &Config) -> Result<CircleMap> {
    match cfg.map {
        Some(MapName::Blaschke2) => CircleMap::blaschke_squared(cfg.mu()),
        _ => CircleMap::blaschke_product(cfg.mu()),
    }
}

fn space_spec(cfg: &Config, s: Option<f64>) -> InnerProductSpec {
    match cfg.space {
        Some(SpaceName::Sobolev) => InnerProductSpec::SobolevHs {
            s: s.or(cfg.s).unwrap_or(0.0),
        },
        Some(SpaceName::HardyDual) => InnerProductSpec::HardyDual {
            radius_r: cfg.radius_r.unwrap_or(0.75),
        },
        _ => InnerProductSpec::EmpiricalL2,
    }
}

fn dictionary(cfg: &Config) -> Result<Dictionary> {
    let n = cfg.n.unwrap_or(41);
    if cfg.fourier_pi_scaling == Some(true) {
        Dictionary::fourier_pi_scaled(n)
    } else {
        Dictionary::fourier(n)
    }
}

fn band(cfg: &Config) -> CoeffBand {
    cfg.band.map_or(CoeffBand::Auto, CoeffBand::Literal)
}

fn snapshots(cfg: &Config, map: &CircleMap) -> Result<SnapshotSet> {
    let scheme = match cfg.snapshots {
        Some(Snapshots::MonteCarlo) => SnapshotScheme::MonteCarlo {
            seed: cfg.seed.unwrap_or(0),
        },
        _ => SnapshotScheme::EquispacedCircle,
    };
    make_snapshots(map, cfg.m.unwrap_or(1000), scheme)
}

fn gram_triple(
    cfg: &Config,
    map: &CircleMap,
    dict: &Dictionary,
    space: &InnerProductSpec,
) -> Result<(GramTriple, Vec<Value>)> {
    if space.is_weighted() {
        let gt = assemble_gram_triple(
            GramSource::Map {
                map,
                min_samples: cfg.m.unwrap_or(1000),
            },
            dict,
            space,
            band(cfg),
        )?;
        return Ok((gt, Vec::new()));
    }
    let snaps = snapshots(cfg, map)?;
    let dm = specpol::dictionaries::assemble_data_matrices(dict, &snaps)?;
    let warnings = dm
        .rank_warning
        .map(|w| json!({ "rank_warning": w }))
        .into_iter()
        .collect();
    let gt = assemble_gram_triple(
        GramSource::Data {
            matrices: &dm,
            weights: &snaps.weights,
        },
        dict,
        space,
        band(cfg),
    )?;
    Ok((gt, warnings))
}

fn field_meta(cfg: &Config, n: usize, space: &str, method: &str) -> FieldMeta {
    FieldMeta {
        m: cfg.m.unwrap_or(0),
        n,
        space: space.into(),
        method: method.into(),
    }
}

fn grid_points(cfg: &Config) -> Vec<C64> {
    cfg.grid.spec().points()
}

/// Runs the experiment and returns a JSON summary for stdout.
pub fn run(cfg: &Config) -> Result<Value> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut out = Out::new(&dir);
    let exp = cfg.experiment.expect("resolved config has an experiment");
    let mut summary = match exp {
        Experiment::Blaschke1 | Experiment::Blaschke2 => edmd_experiment(cfg, &mut out)?,
        Experiment::SobolevSweep => sobolev_sweep(cfg, &mut out)?,
        Experiment::NormalitySweep => normality_sweep(cfg, &mut out)?,
        Experiment::KernelBlaschke => kernel_blaschke(cfg, &mut out)?,
        Experiment::TrajectoryPipeline => trajectory_pipeline(cfg, &mut out)?,
        Experiment::LemmaCheck => lemma_check(cfg, &mut out)?,
    };
    let meta = Config {
        versions: Some(json!({ "specpol": env!("CARGO_PKG_VERSION") })),
        ..cfg.clone()
    };
    out.json("meta.json", &meta)?;
    summary["experiment"] = serde_json::to_value(exp)?;
    summary["output_dir"] = json!(dir);
    summary["files"] = json!(out.files);
    Ok(summary)
}

/// EDMD on one space: eigenvalues of K with their pair residuals, the residual field
/// and the Gram triple. Files get `suffix` before their extension.
fn edmd_files(
    cfg: &Config,
    out: &mut Out,
    map: &CircleMap,
    space: &InnerProductSpec,
    truth: Option<&TrueSpectrum>,
    suffix: &str,
) -> Result<Value> {
    let dict = dictionary(cfg)?;
    let (gt, warnings) = gram_triple(cfg, map, &dict, space)?;
    let pairs = fit_edmd(&gt)?.eigenpairs(Operator::Koopman)?;
    let eigs: Vec<C64> = pairs.iter().map(|p| p.value).collect();
    let epsilon = cfg.epsilon.unwrap_or(1e-2);
    let report = classify_eigenvalues(
        &eigs,
        |i, z| residual_of_pair(&gt, z, &pairs[i].vector),
        epsilon,
        truth,
    );
    let accepted = report.accepted().count();
    let label = space.label();
    let file = ReportFile {
        report,
        space: label.clone(),
        meta: json!({
            "operator": "koopman",
            "residual": "eigenpair",
            "N": gt.n(),
            "M": cfg.m,
            "band": gt.band(),
            "warnings": warnings,
        }),
    };
    out.json(&format!("eigenvalues{suffix}.json"), &file)?;
    let field = resdmd_grid(&gt, grid_points(cfg), field_meta(cfg, gt.n(), &label, "resdmd"));
    out.bytes(&format!("residuals{suffix}.csv"), &residual_csv(&field)?)?;
    out.json(
        &format!("gram{suffix}.json"),
        &specpol::io::GramFile::from_triple(&gt),
    )?;
    Ok(json!({
        "space": label,
        "eigenvalues": eigs.len(),
        "accepted": accepted,
        "min_residual": field.argmin().map(|(z, v)| json!({ "re": z.re, "im": z.im, "residual": v })),
    }))
}

fn edmd_experiment(cfg: &Config, out: &mut Out) -> Result<Value> {
    let map = circle_map(cfg)?;
    let truth = true_spectrum(&map, None)?;
    out.json("truth.json", &truth_file(&truth))?;
    edmd_files(cfg, out, &map, &space_spec(cfg, None), Some(&truth), "")
}

fn sweep_tag(s: f64) -> String {
    format!("_s{s}")
}

fn sobolev_sweep(cfg: &Config, out: &mut Out) -> Result<Value> {
    let map = circle_map(cfg)?;
    let truth = true_spectrum(&map, None)?;
    out.json("truth.json", &truth_file(&truth))?;
    let mut index = Vec::new();
    for &s in cfg.s_values.as_deref().unwrap_or_default() {
        let tag = sweep_tag(s);
        let summary = edmd_files(cfg, out, &map, &space_spec(cfg, Some(s)), Some(&truth), &tag)?;
        index.push(json!({
            "s": s,
            "eigenvalues": format!("eigenvalues{tag}.json"),
            "residuals": format!("residuals{tag}.csv"),
            "gram": format!("gram{tag}.json"),
            "accepted": summary["accepted"],
        }));
    }
    out.json("index.json", &index)?;
    Ok(json!({ "sweep": index.len() }))
}

fn normality_sweep(cfg: &Config, out: &mut Out) -> Result<Value> {
    let map = circle_map(cfg)?;
    let dict = dictionary(cfg)?;
    let m = cfg.m.unwrap_or(1000);
    let values = cfg.s_values.clone().unwrap_or_default();
    let devs = values
        .iter()
        .map(|&s| deviation_from_normality(&map, &dict, m, &space_spec(cfg, Some(s)), band(cfg)))
        .collect::<Result<Vec<f64>>>()?;
    let mut index = Vec::new();
    let mut csv = String::from("s,deviation\n");
    for (&s, &d) in values.iter().zip(&devs) {
        let name = format!("normality{}.json", sweep_tag(s));
        out.json(&name, &json!({ "s": s, "deviation": d }))?;
        index.push(json!({ "s": s, "deviation": d, "file": name }));
        csv.push_str(&format!("{s},{d}\n"));
    }
    out.bytes("normality.csv", csv.as_bytes())?;
    out.json("index.json", &index)?;
    Ok(json!({ "deviations": index }))
}

fn kernel_report(
    model: &KernelResDmd,
    epsilon: f64,
    truth: Option<&TrueSpectrum>,
) -> Result<(SpectralReport, Vec<specpol::kernel::KernelEigenpair>)> {
    let pairs = model.kedmd()?;
    let eigs: Vec<C64> = pairs.iter().map(|p| p.value).collect();
    let report = classify_eigenvalues(&eigs, |_, z| model.kres(z), epsilon, truth);
    Ok((report, pairs))
}

fn kernel_blaschke(cfg: &Config, out: &mut Out) -> Result<Value> {
    let map = circle_map(cfg)?;
    let truth = true_spectrum(&map, None)?;
    out.json("truth.json", &truth_file(&truth))?;
    let snaps = snapshots(cfg, &map)?;
    let c_sq = match cfg.c_sq {
        Some(CSq::Value(c)) => c,
        _ => auto_cov_c_sq(&snaps)?,
    };
    let kernel = KernelSpec::gaussian(c_sq)?;
    let model = KernelResDmd::new(&kernel_grams(&kernel, &snaps)?, cfg.rank_r)?;
    let (report, _) = kernel_report(&model, cfg.epsilon.unwrap_or(1e-2), Some(&truth))?;
    let accepted = report.accepted().count();
    let label = format!("gaussian(c_sq={c_sq})");
    out.json(
        "eigenvalues.json",
        &ReportFile {
            report,
            space: label.clone(),
            meta: json!({
                "residual": "kres",
                "M": snaps.len(),
                "rank_r": model.rank(),
                "warnings": model.svd.warning.map(|w| json!({ "rank_deficiency": w })).into_iter().collect::<Vec<_>>(),
            }),
        },
    )?;
    let meta = |method: &str| FieldMeta {
        m: snaps.len(),
        n: model.rank(),
        space: label.clone(),
        method: method.into(),
    };
    let modified = kresdmd_modified_grid(&model, grid_points(cfg), meta("kresdmd-modified"));
    out.bytes("residuals.csv", &residual_csv(&modified)?)?;
    let original = kresdmd_original_grid(&model, grid_points(cfg), meta("kresdmd-original"));
    out.bytes("residuals_original.csv", &residual_csv(&original)?)?;
    Ok(json!({ "c_sq": c_sq, "rank_r": model.rank(), "accepted": accepted }))
}

fn trajectory_pipeline(cfg: &Config, out: &mut Out) -> Result<Value> {
    let stride = cfg.stride.unwrap_or(1);
    let (states, wells) = match &cfg.trajectory {
        Some(path) => {
            let file = std::fs::File::open(path)?;
            (read_trajectory_csv(std::io::BufReader::new(file))?, None)
        }
        None => {
            let t = DoubleWell::default().sample(cfg.steps.unwrap_or(10_000), cfg.seed.unwrap_or(0));
            (t.states, Some(t.wells))
        }
    };
    let snaps = SnapshotSet::from_trajectory(&states, stride)?;
    let c_sq = match cfg.c_sq {
        Some(CSq::Value(c)) => c,
        _ => auto_cov_c_sq(&snaps)?,
    };
    let kernel = KernelSpec::gaussian(c_sq)?;
    let rank = cfg.rank_r.map(|r| r.min(snaps.len()));
    let model = KernelResDmd::new(&kernel_grams(&kernel, &snaps)?, rank)?;
    let (report, pairs) = kernel_report(&model, cfg.epsilon.unwrap_or(5e-2), None)?;

    let k = cfg.n_clusters.unwrap_or(2);
    let eigs: Vec<C64> = pairs.iter().map(|p| p.value).collect();
    let dominant = near_one(&eigs, 0.1, 1e-8);
    if dominant.len() < k {
        return Err(Error::Degenerate(format!(
            "{} real eigenvalues near 1, need {k} for {k} clusters",
            dominant.len()
        )));
    }
    let chosen = &dominant[..k];
    let vectors: Vec<Vec<C64>> = chosen.iter().map(|&i| pairs[i].lifted.clone()).collect();
    let values: Vec<C64> = chosen.iter().map(|&i| eigs[i]).collect();
    let seed = cfg.seed.unwrap_or(0);
    let part = metastable_partition(&vectors, &values, k, KMeansConfig { seed, ..Default::default() })?;
    // Labels refer to the first state of each pair.
    let agreement = match &wells {
        Some(w) => {
            let kept: Vec<usize> = w.iter().step_by(stride).copied().take(snaps.len()).collect();
            Some(partition_agreement(&part.labels, &kept)?)
        }
        None => None,
    };

    let label = format!("gaussian(c_sq={c_sq})");
    let accepted = report.accepted().count();
    out.json(
        "eigenvalues.json",
        &ReportFile {
            report,
            space: label.clone(),
            meta: json!({
                "residual": "kres",
                "M": snaps.len(),
                "rank_r": model.rank(),
                "warnings": model.svd.warning.map(|w| json!({ "rank_deficiency": w })).into_iter().collect::<Vec<_>>(),
            }),
        },
    )?;
    out.json(
        "partition.json",
        &json!({
            "n_clusters": part.n_clusters,
            "dominant_eigs": values.iter().map(|&z| point(z)).collect::<Vec<_>>(),
            "kres": values.iter().map(|&z| model.kres(z)).collect::<Result<Vec<_>>>()?,
            "labels": part.labels,
            "agreement_with_wells": agreement,
        }),
    )?;
    let field = kresdmd_modified_grid(
        &model,
        grid_points(cfg),
        FieldMeta {
            m: snaps.len(),
            n: model.rank(),
            space: label,
            method: "kresdmd-modified".into(),
        },
    );
    out.bytes("residuals.csv", &residual_csv(&field)?)?;
    Ok(json!({
        "M": snaps.len(),
        "c_sq": c_sq,
        "rank_r": model.rank(),
        "accepted": accepted,
        "dominant_eigs": values.iter().map(|&z| point(z)).collect::<Vec<_>>(),
        "agreement_with_wells": agreement,
    }))
}

/// Explicit-feature kernel with distinct weights `a_n² = 2^{−|n|}` (`n ≥ 0`) and
/// `2^{−|n|−1/2}` (`n < 0`), `|n| ≤ 10`.
fn lemma_features() -> (Vec<i64>, Vec<f64>) {
    let indices: Vec<i64> = (-10..=10).collect();
    let weights = indices
        .iter()
        .map(|&n| {
            let e = n.abs() as f64 + if n < 0 { 0.5 } else { 0.0 };
            2f64.powf(-e / 2.0)
        })
        .collect();
    (indices, weights)
}

const LEMMA_LAMBDAS: [(f64, f64); 5] = [(0.9, 0.0), (-0.4, 0.2), (0.5, 0.0), (0.3, 0.6), (-0.2, -0.7)];
const LEMMA_NODES: usize = 4096;

/// Compares `kres²` with the feature-weighted energy of `(L − λ̄)h` for the minimizing
/// `h`, where `L` is applied through its two preimages.
fn lemma_check(cfg: &Config, out: &mut Out) -> Result<Value> {
    let map = circle_map(cfg)?;
    let snaps = snapshots(cfg, &map)?;
    let (indices, weights) = lemma_features();
    let kernel = KernelSpec::fourier_features(indices.clone(), weights.clone())?;
    let model = KernelResDmd::new(&kernel_grams(&kernel, &snaps)?, cfg.rank_r)?;
    let nodes = specpol::dictionaries::equispaced_circle(LEMMA_NODES);

    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (re, im) in LEMMA_LAMBDAS {
        let z = C64::new(re, im);
        let (kres, w) = model.kres_minimizer(z)?;
        let beta = model.lift_coefficients(&w);
        let h = |x: C64| eval_expansion(&kernel, &snaps, &beta, &[x]);
        let f = nodes
            .par_iter()
            .map(|&x| {
                let mut lh = C64::new(0.0, 0.0);
                for y in map.preimages(x)? {
                    lh += h(y) / map.derivative(y)?.norm();
                }
                Ok(lh - z.conj() * h(x))
            })
            .collect::<Result<Vec<C64>>>()?;
        let energy: f64 = indices
            .iter()
            .zip(&weights)
            .map(|(&j, &a)| {
                let c: C64 = nodes
                    .iter()
                    .zip(&f)
                    .map(|(x, v)| v * x.powi(-j as i32))
                    .sum::<C64>()
                    / LEMMA_NODES as f64;
                a * a * c.norm_sqr()
            })
            .sum();
        let dev = (kres * kres - energy).abs() / energy;
        worst = worst.max(dev);
        rows.push(json!({
            "lambda": point(z),
            "kres_sq": kres * kres,
            "quadrature": energy,
            "relative_deviation": dev,
        }));
    }
    out.json(
        "lemma.json",
        &json!({
            "M": snaps.len(),
            "rank_r": model.rank(),
            "samples": rows,
            "max_relative_deviation": worst,
        }),
    )?;
    Ok(json!({ "max_relative_deviation": worst, "target": 0.05, "pass": worst < 0.05 }))
}
