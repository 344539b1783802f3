//! Configuration files, experiment drivers and result files for the CLI.

mod experiment;
mod io;
mod suite;

pub use experiment::{
    ablation, mean_std, run_file_stem, run_manifest, table1_manifest, tune, AblationPoint, Cell,
    CellSummary, ExperimentManifest, OutputOptions, RunStatus, RunSummary, SummaryTable,
    TuneOutcome, TuneScore, TuningConfig, ABLATION_BETAS, ABLATION_GAMMAS, DEFAULT_GRID,
};
pub use io::{
    format_float, load_config, load_json, read_csv, write_csv, write_dat, write_json,
    write_trajectory_dat, CsvRow, CSV_HEADER,
};
pub use suite::{verify_suite, Expectation, SuiteEntry, SuiteOptions};
