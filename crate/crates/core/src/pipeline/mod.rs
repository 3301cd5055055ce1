//! Batch front end: configuration, counts files, runs, reports and verification.

pub mod config;
pub mod files;
pub mod reference;
pub mod report;
pub mod run;
pub mod verify;

pub use config::{NoiseConfig, RunConfig, RunMode};
pub use files::CountsFile;
pub use report::{Aggregate, CertificationReport, CurveRow, ReportRow};
pub use run::{run, run_to_dir, simulate_to_dir, RunOutput, ThetaArtifacts};
pub use verify::{verify_dir, VerifyReport};
