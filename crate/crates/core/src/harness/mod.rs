//! Scenarios, benchmark suites and reporting.

pub mod catalog;
pub mod frames;
pub mod report;
pub mod scenario;
pub mod suite;
pub mod tasks;
pub mod wrinkle;

pub use frames::render_frames;
pub use report::{Aggregate, RunMeta, SuiteReport, Summary};
pub use scenario::{
    load_scenario, load_suite, parse_scenario, parse_suite, PoseSpec, Scenario, SimSpec, Suite,
    TaskParams,
};
pub use suite::{run_suite, RunOptions, SuiteRun};
pub use tasks::{
    prepare_cloth, run_trial, trial_rng, trial_setup, TrialOutcome, TrialRow, TrialSetup,
};
pub use wrinkle::{apply_ridge, random_ridges, Ridge};
