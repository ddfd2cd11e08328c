mod analysis;
mod bayes;
mod data;

pub use analysis::{duration, saccades};
pub use bayes::{fit, report, roc_cmd, score};
pub use data::{ingest, simulate};

/// Non-fatal per-item failures; any entry makes the run exit nonzero.
#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: Vec<String>,
}
