//! Parameter grids over a base scenario.
//!
//! A sweep file is a scenario file plus a `[sweep]` table of lists; the grid
//! is their Cartesian product, enumerated in key order with the last key
//! varying fastest.
//!
//! ```toml
//! mode = "hyperbolic"
//! # ... the usual scenario keys ...
//! [sweep]
//! p = [0.9, 1.5]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{parse_config, OUTPUT_ROOT_ENV};
use super::run::run_scenario_in;
use crate::error::{usage, Error, Result};

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub base: toml::Table,
    pub axes: Vec<(String, Vec<toml::Value>)>,
}

pub fn parse_sweep(text: &str) -> Result<SweepConfig> {
    let mut base: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::ConfigSyntax(e.to_string()))?;
    let sweep = match base.remove("sweep") {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(crate::error::config("sweep", "must be a table of lists")),
        None => return Err(usage("sweep file has no [sweep] table")),
    };
    let mut axes = Vec::new();
    for (key, value) in sweep {
        match value {
            toml::Value::Array(values) if !values.is_empty() => axes.push((key, values)),
            toml::Value::Array(_) => return Err(usage(format!("sweep axis `{key}` is empty"))),
            _ => return Err(crate::error::config(&format!("sweep.{key}"), "must be a list")),
        }
    }
    if axes.is_empty() {
        return Err(usage("sweep grid is empty"));
    }
    Ok(SweepConfig { base, axes })
}

impl SweepConfig {
    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.1.len()).product()
    }

    /// Overrides of cell `index`, one per axis.
    pub fn cell(&self, index: usize) -> Vec<(String, toml::Value)> {
        let mut rest = index;
        let mut out: Vec<_> = self
            .axes
            .iter()
            .rev()
            .map(|(k, vals)| {
                let v = vals[rest % vals.len()].clone();
                rest /= vals.len();
                (k.clone(), v)
            })
            .collect();
        out.reverse();
        out
    }

    pub fn output_dir(&self) -> PathBuf {
        let dir = PathBuf::from(self.base.get("output_dir").and_then(|v| v.as_str()).unwrap_or("out"));
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub index: usize,
    pub overrides: Vec<(String, String)>,
    pub passed: bool,
    pub termination: Option<String>,
    pub final_t: Option<f64>,
    pub final_a12u2: Option<f64>,
    pub final_v2: Option<f64>,
    pub tail_floor: Option<f64>,
    pub sup_gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub cells: Vec<CellResult>,
    pub aggregate: PathBuf,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(|c| c.passed)
    }
}

fn show(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn run_cell(cfg: &SweepConfig, index: usize, root: &Path) -> CellResult {
    let overrides = cfg.cell(index);
    let mut result = CellResult {
        index,
        overrides: overrides.iter().map(|(k, v)| (k.clone(), show(v))).collect(),
        passed: false,
        termination: None,
        final_t: None,
        final_a12u2: None,
        final_v2: None,
        tail_floor: None,
        sup_gap: None,
        error: None,
    };
    let mut table = cfg.base.clone();
    for (k, v) in overrides {
        table.insert(k, v);
    }
    let dir = root.join(format!("cell_{index:03}"));
    table.insert("output_dir".into(), toml::Value::String(dir.display().to_string()));
    let outcome = toml::to_string(&table)
        .map_err(|e| Error::ConfigSyntax(e.to_string()))
        .and_then(|text| parse_config(&text))
        .and_then(|scenario| run_scenario_in(&scenario, &dir));
    match outcome {
        Ok(m) => {
            result.passed = m.passed;
            if let Some(flow) = m.hyperbolic.as_ref().or(m.parabolic.as_ref()) {
                result.termination = Some(format!("{:?}", flow.termination));
                result.final_t = Some(flow.final_t);
                result.final_a12u2 = Some(flow.final_a12u2);
                result.final_v2 = Some(flow.final_v2);
                result.tail_floor = Some(flow.tail_floor);
            }
            result.sup_gap = m.gap.map(|g| g.sup_gap);
            if !m.passed {
                result.error = Some(m.failures.join("; "));
            }
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

/// Runs every cell (in parallel) under `root` and writes `root/sweep.csv` in cell order.
pub fn run_sweep_in(cfg: &SweepConfig, root: &Path) -> Result<SweepReport> {
    let n = cfg.cell_count();
    if n == 0 {
        return Err(usage("sweep grid is empty"));
    }
    fs::create_dir_all(root)?;
    let cells: Vec<CellResult> = (0..n).into_par_iter().map(|i| run_cell(cfg, i, root)).collect();

    let aggregate = root.join("sweep.csv");
    let mut w = csv::Writer::from_path(&aggregate)?;
    let mut header = vec!["cell".to_string()];
    header.extend(cfg.axes.iter().map(|a| a.0.clone()));
    header.extend(
        [
            "passed",
            "termination",
            "final_t",
            "final_a12u2",
            "final_v2",
            "tail_floor",
            "sup_gap",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    let num = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
    for c in &cells {
        let mut row = vec![c.index.to_string()];
        row.extend(c.overrides.iter().map(|o| o.1.clone()));
        row.push(c.passed.to_string());
        row.push(c.termination.clone().unwrap_or_default());
        row.extend([c.final_t, c.final_a12u2, c.final_v2, c.tail_floor, c.sup_gap].map(num));
        row.push(c.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(SweepReport { cells, aggregate })
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    run_sweep_in(cfg, &cfg.output_dir())
}
