//! Structured run records and the plot-data writers.

use serde::{Deserialize, Serialize};
use srflab::heat::{HeatKernel, Propagator};
use srflab::stochastic::PathEnsemble;
use srflab::transport::TransportPlan;
use srflab::verify::CheckReport;
use std::fs;
use std::path::Path;

/// One serialized check outcome; mirrors the library report plus run context.
#[derive(Debug, Serialize, Deserialize)]
pub struct Record {
    pub name: String,
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub location: String,
    pub params: Vec<(String, String)>,
    pub note: Option<String>,
    pub seed: u64,
    pub version: String,
}

pub fn version_string() -> String {
    format!("srflab {}", env!("CARGO_PKG_VERSION"))
}

impl Record {
    pub fn from_report(rep: &CheckReport<f64>, seed: u64) -> Self {
        Self {
            name: rep.name.clone(),
            slack: rep.slack,
            tolerance: rep.tolerance,
            pass: rep.pass,
            location: format!("{:?}", rep.location),
            params: rep.params.clone(),
            note: rep.note.clone(),
            seed,
            version: version_string(),
        }
    }

    pub fn plain(name: &str, slack: f64, tolerance: f64, seed: u64) -> Self {
        Self {
            name: name.into(),
            slack,
            tolerance,
            pass: slack >= -tolerance,
            location: "Global".into(),
            params: Vec::new(),
            note: None,
            seed,
            version: version_string(),
        }
    }

    pub fn with_params(mut self, params: Vec<(String, String)>) -> Self {
        self.params = params;
        self
    }
}

pub fn write_records(out: &Path, name: &str, records: &[Record]) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let path = out.join(format!("{name}.json"));
    fs::write(path, serde_json::to_string_pretty(records).unwrap())
}

pub fn write_csv(out: &Path, name: &str, header: &str, rows: &[String]) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(out.join(format!("{name}.csv")), text)
}

/// Matrix CSV with a header row naming the flow parameters.
pub fn write_propagator_csv(out: &Path, name: &str, prop: &Propagator<f64>) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let mut text = format!(
        "# s={}, t={}, steps={}, scheme={}\n",
        prop.s, prop.t, prop.steps, prop.scheme
    );
    for i in 0..prop.matrix.rows {
        let row: Vec<String> = prop.matrix.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(out.join(format!("{name}.csv")), text)
}

pub fn write_kernel_csv(
    out: &Path,
    name: &str,
    kernel: &HeatKernel<f64>,
    steps: usize,
) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let mut text = format!(
        "# s={}, t={}, steps={steps}, scheme=implicit-euler\n",
        kernel.s, kernel.t
    );
    for i in 0..kernel.values.rows {
        let row: Vec<String> =
            kernel.values.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(out.join(format!("{name}.csv")), text)
}

/// Sparse triplet CSV `(x_index, y_index, mass)`.
pub fn write_plan_csv(out: &Path, name: &str, plan: &TransportPlan<f64>) -> std::io::Result<()> {
    let rows: Vec<String> = plan
        .entries
        .iter()
        .map(|&(i, j, m)| format!("{i},{j},{m:.17e}"))
        .collect();
    write_csv(out, name, "x_index,y_index,mass", &rows)
}

/// Ensemble CSV `(path_id, time, vertex1[, vertex2])`.
pub fn write_ensemble_csv(
    out: &Path,
    name: &str,
    ens: &PathEnsemble<f64>,
) -> std::io::Result<()> {
    let mut rows = Vec::with_capacity(ens.n_paths * ens.times.len());
    for p in 0..ens.n_paths {
        for (k, &time) in ens.times.iter().enumerate() {
            if ens.coupled {
                let (a, b) = ens.pair(p, k);
                rows.push(format!("{p},{time},{a},{b}"));
            } else {
                rows.push(format!("{p},{time},{}", ens.vertex(p, k)));
            }
        }
    }
    let header = if ens.coupled {
        "path_id,time,vertex1,vertex2"
    } else {
        "path_id,time,vertex1"
    };
    write_csv(out, name, header, &rows)
}

/// Reads every `*.json` record file in a results directory.
pub fn read_all_records(dir: &Path) -> Result<Vec<(String, Vec<Record>)>, String> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| format!("cannot read {}: {e}", dir.display()))?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    for path in files {
        let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let records: Vec<Record> =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        out.push((
            path.file_stem().unwrap().to_string_lossy().into_owned(),
            records,
        ));
    }
    Ok(out)
}
