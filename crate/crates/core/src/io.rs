//! CSV/JSON export and import.
//!
//! Floats are written in Rust's shortest round-trip form, so reruns produce
//! byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use faer::{c64, Mat};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::residual::ResidualField;
use crate::spaces::GramTriple;

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Domain(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// `re_lambda,im_lambda,residual` rows; unevaluated points are written as `NaN`.
pub fn residual_csv(field: &ResidualField) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["re_lambda", "im_lambda", "residual"])
        .map_err(csv_err)?;
    for (z, v) in field.grid.iter().zip(&field.values) {
        w.write_record([z.re.to_string(), z.im.to_string(), v.to_string()])
            .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_residual_csv(bytes: &[u8]) -> Result<Vec<(C64, f64)>> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or(Error::Parse {
                    line: k + 2,
                    column: c + 1,
                    message: "expected a number".into(),
                })
        };
        out.push((C64::new(field(0)?, field(1)?), field(2)?));
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoint {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueRecord {
    pub re: f64,
    pub im: f64,
    pub residual: Option<f64>,
}

/// `[{re, im, residual}, ...]`
pub fn eigenvalues_json(values: &[(C64, Option<f64>)]) -> Result<String> {
    let recs: Vec<EigenvalueRecord> = values
        .iter()
        .map(|(z, r)| EigenvalueRecord {
            re: z.re,
            im: z.im,
            residual: r.filter(|v| v.is_finite()),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&recs)?)
}

/// Serialized Gram triple: square matrices as row-major `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramFile {
    pub n: usize,
    #[serde(rename = "G")]
    pub g: Vec<[f64; 2]>,
    #[serde(rename = "A")]
    pub a: Vec<[f64; 2]>,
    #[serde(rename = "J")]
    pub j: Vec<[f64; 2]>,
}

fn flatten(m: &CMat) -> Vec<[f64; 2]> {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| [m[(i, j)].re, m[(i, j)].im]))
        .collect()
}

fn unflatten(n: usize, v: &[[f64; 2]], name: &str) -> Result<CMat> {
    if v.len() != n * n {
        return Err(Error::Shape(format!(
            "{name} has {} entries, expected {}",
            v.len(),
            n * n
        )));
    }
    Ok(Mat::from_fn(n, n, |i, j| {
        let [re, im] = v[i * n + j];
        c64::new(re, im)
    }))
}

impl GramFile {
    pub fn from_triple(gt: &GramTriple) -> Self {
        Self {
            n: gt.n(),
            g: flatten(&gt.g),
            a: flatten(&gt.a),
            j: flatten(&gt.j),
        }
    }

    pub fn into_triple(self) -> Result<GramTriple> {
        let g = unflatten(self.n, &self.g, "G")?;
        let a = unflatten(self.n, &self.a, "A")?;
        let j = unflatten(self.n, &self.j, "J")?;
        GramTriple::from_parts(g, a, j)
    }
}
