//! CSV emission with atomic writes and a hashed run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::pattern::GainMatrix;
use crate::scenario::ScenarioResult;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Formats like C's `%.9g`: nine significant digits, trailing zeros removed,
/// scientific notation outside `[1e-5, 1e9)`.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn db(v: f64) -> f64 {
    10.0 * v.log10()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(name: &str, header: Vec<&'static str>) -> Self {
        CsvTable {
            name: name.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// The CSV files a result produces; empty families are omitted.
pub fn result_tables(r: &ScenarioResult) -> Vec<CsvTable> {
    let f = fmt_sig;
    let mut tables = Vec::new();

    if !r.rates.is_empty() {
        let mut t = CsvTable::new(
            "rates.csv",
            vec![
                "scheme", "drop", "user", "x", "y", "power_w", "sinr_db", "rate_bps",
            ],
        );
        t.rows = r
            .rates
            .iter()
            .map(|row| {
                vec![
                    row.scheme.short_name().into(),
                    row.drop.to_string(),
                    row.user.to_string(),
                    f(row.x),
                    f(row.y),
                    f(row.power_w),
                    f(db(row.sinr)),
                    f(row.rate_bps),
                ]
            })
            .collect();
        tables.push(t);
    }
    if !r.heatmap.is_empty() {
        let mut t = CsvTable::new("heatmap.csv", vec!["x_m", "y_m", "se_bps_per_hz"]);
        t.rows = r
            .heatmap
            .iter()
            .map(|g| vec![f(g.x), f(g.y), f(g.se)])
            .collect();
        tables.push(t);
    }
    if !r.footprint.is_empty() {
        let mut t = CsvTable::new("footprint.csv", vec!["x_m", "y_m", "beam", "se_bps_per_hz"]);
        t.rows = r
            .footprint
            .iter()
            .map(|g| vec![f(g.x), f(g.y), g.beam.to_string(), f(g.se)])
            .collect();
        tables.push(t);
    }
    if !r.cdf.is_empty() {
        let mut t = CsvTable::new("cdf.csv", vec!["scheme", "se_bps_per_hz", "cdf"]);
        t.rows = r
            .cdf
            .iter()
            .map(|c| vec![c.scheme.short_name().into(), f(c.se), f(c.cdf)])
            .collect();
        tables.push(t);
    }
    if !r.sweep.is_empty() {
        let mut t = CsvTable::new(
            "sweep.csv",
            vec![
                "scheme",
                "parameter",
                "value",
                "sum_rate_bps",
                "min_sinr_db",
            ],
        );
        t.rows = r
            .sweep
            .iter()
            .map(|s| {
                vec![
                    s.scheme.short_name().into(),
                    s.parameter.into(),
                    f(s.value),
                    f(s.sum_rate_bps),
                    f(db(s.min_sinr)),
                ]
            })
            .collect();
        tables.push(t);
    }
    if !r.selection.is_empty() {
        let mut t = CsvTable::new("selection.csv", vec!["user", "element"]);
        t.rows = r
            .selection
            .iter()
            .map(|(k, m)| vec![k.to_string(), m.to_string()])
            .collect();
        tables.push(t);
    }
    if !r.convergence.is_empty() {
        let mut t = CsvTable::new(
            "convergence.csv",
            vec!["iteration", "eta_min", "eta_max", "feasible"],
        );
        t.rows = r
            .convergence
            .iter()
            .map(|c| {
                vec![
                    c.iteration.to_string(),
                    f(c.eta_min),
                    f(c.eta_max),
                    c.feasible.to_string(),
                ]
            })
            .collect();
        tables.push(t);
    }
    tables
}

pub fn geometry_table(g: &ArrayGeometry) -> CsvTable {
    let f = fmt_sig;
    let mut t = CsvTable::new(
        "geometry.csv",
        vec![
            "index", "x", "y", "z", "bx", "by", "bz", "d_m", "theta_m", "phi_m",
        ],
    );
    t.rows = g
        .elements
        .iter()
        .enumerate()
        .map(|(i, e)| {
            vec![
                i.to_string(),
                f(e.position.x),
                f(e.position.y),
                f(e.position.z),
                f(e.boresight.x),
                f(e.boresight.y),
                f(e.boresight.z),
                f(e.polar.distance),
                f(e.polar.theta_deg),
                f(e.polar.phi_deg),
            ]
        })
        .collect();
    t
}

/// Row = user, column = element, linear gains.
pub fn gains_table(g: &GainMatrix) -> CsvTable {
    let mut t = CsvTable::new("gains.csv", vec!["user", "element", "gain_linear"]);
    for (k, row) in g.rows().enumerate() {
        for (m, v) in row.iter().enumerate() {
            t.rows.push(vec![k.to_string(), m.to_string(), fmt_sig(*v)]);
        }
    }
    t
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub files: Vec<ManifestEntry>,
}

/// Creates `dir` if needed and checks that a file can be created in it.
pub fn preflight(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Writes through a temp file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes every table and then the manifest listing their hashes.
pub fn emit_tables(
    dir: &Path,
    tables: &[CsvTable],
    mut manifest: RunManifest,
) -> Result<RunManifest> {
    manifest.output_dir = dir.to_path_buf();
    manifest.files.clear();
    for t in tables {
        let body = t.render();
        write_atomic(&dir.join(&t.name), body.as_bytes())?;
        manifest.files.push(ManifestEntry {
            file: t.name.clone(),
            sha256: sha256_hex(body.as_bytes()),
            bytes: body.len() as u64,
        });
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_atomic(&dir.join(MANIFEST_NAME), json.as_bytes())?;
    Ok(manifest)
}

/// Checks that every file listed in a manifest exists with its recorded hash.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let mut bad = Vec::new();
    for e in &m.files {
        let p = dir.join(&e.file);
        match fs::read(&p) {
            Ok(bytes) if sha256_hex(&bytes) == e.sha256 => {}
            _ => bad.push(e.file.clone()),
        }
    }
    Ok(bad)
}
