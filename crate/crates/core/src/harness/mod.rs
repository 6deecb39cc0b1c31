//! Configuration files, scenario runs, sweeps and the lemma suites: the
//! pieces the command-line tool is built from.

mod config;
mod run;
mod sweep;

pub use config::{
    load_config, parse_config, DataSpec, RunMode, SamplingKind, ScenarioConfig, SpectrumKind, OUTPUT_ROOT_ENV,
    REQUIRED_KEYS,
};
pub use run::{
    default_fit_tolerance, fit_csv, read_csv_column, run_scenario, run_scenario_in, snapshots, write_trajectory_csv,
    FitRecord, FlowSummary, GapSummary, OracleCheck, RunManifest, WallClock, CSV_COLUMNS, ENERGY_TOL, ORACLE_TOL,
};
pub use sweep::{parse_sweep, run_sweep, run_sweep_in, CellResult, SweepConfig, SweepReport};

use crate::comparison::suite::{run_lemma_suites, LemmaSuiteReport};
use crate::error::Result;

/// Runs both comparison suites; `report.passed()` is the exit condition.
pub fn verify_lemmas(seed: u64, count: usize) -> Result<LemmaSuiteReport> {
    run_lemma_suites(seed, count)
}
