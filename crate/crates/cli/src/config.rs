use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use fixmark_core::clustering::{Linkage, Metric};
use fixmark_core::data::{Delimiter, IngestFormat};
use fixmark_core::markov::{BfEstimator, ClusterMethod, ClusteringConfig, CombineRule, ScoreConfig};

/// Effective settings for one run: defaults, overlaid by `--config`, then by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub cluster_method: ClusterMethod,
    pub metric: Metric,
    pub linkage: Linkage,
    pub knn: Option<usize>,
    pub restarts: usize,
    pub k_max: usize,
    pub mc_samples: usize,
    pub combine: CombineRule,
    pub estimator: BfEstimator,
    pub seed: u64,
    pub threshold: f64,
    pub delimiter: Delimiter,
    pub header: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            out_dir: PathBuf::from("out"),
            cluster_method: ClusterMethod::Kmeans,
            metric: Metric::L2,
            linkage: Linkage::Ward,
            knn: None,
            restarts: 10,
            k_max: 10,
            mc_samples: 10_000,
            combine: CombineRule::Geometric,
            estimator: BfEstimator::MonteCarlo,
            seed: 0,
            threshold: 0.2,
            delimiter: Delimiter::Comma,
            header: false,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Kmeans,
    Hier,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    L1,
    L2,
    Linf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LinkageArg {
    Ward,
    Complete,
    Upgma,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CombineArg {
    Geometric,
    Arithmetic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Mc,
    Exact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DelimiterArg {
    Comma,
    Whitespace,
}

/// Flags shared by every subcommand. Unset flags fall through to the
/// config file and then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON file with any subset of the run settings.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Input file or directory.
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Directory for all outputs (default `out`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub cluster_method: Option<MethodArg>,
    #[arg(long, global = true, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, global = true, value_enum)]
    pub linkage: Option<LinkageArg>,
    /// Assign held-out fixations by k nearest training neighbours.
    #[arg(long, global = true, value_name = "N")]
    pub knn: Option<usize>,
    /// k-means random starts (default 10).
    #[arg(long, global = true, value_name = "N")]
    pub restarts: Option<usize>,
    /// Largest number of clusters scored (default 10).
    #[arg(long, global = true, value_name = "N")]
    pub k_max: Option<usize>,
    /// Monte Carlo draws per Bayes factor (default 10000).
    #[arg(long, global = true, value_name = "N")]
    pub mc_samples: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub combine: Option<CombineArg>,
    /// Per-subject Bayes factor: Monte Carlo or the closed form.
    #[arg(long, global = true, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Master seed for clustering starts, Monte Carlo and simulation (default 0).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Bayes-factor classification threshold (default 0.2).
    #[arg(long, global = true, value_name = "X")]
    pub threshold: Option<f64>,
    /// Column separator of raw fixation files.
    #[arg(long, global = true, value_enum)]
    pub delimiter: Option<DelimiterArg>,
    /// Raw fixation files start with a header row.
    #[arg(long, global = true)]
    pub header: bool,
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> anyhow::Result<RunConfig> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &args.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &args.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = args.cluster_method {
            cfg.cluster_method = match v {
                MethodArg::Kmeans => ClusterMethod::Kmeans,
                MethodArg::Hier => ClusterMethod::Hierarchical,
            };
        }
        if let Some(v) = args.metric {
            cfg.metric = match v {
                MetricArg::L1 => Metric::L1,
                MetricArg::L2 => Metric::L2,
                MetricArg::Linf => Metric::Linf,
            };
        }
        if let Some(v) = args.linkage {
            cfg.linkage = match v {
                LinkageArg::Ward => Linkage::Ward,
                LinkageArg::Complete => Linkage::Complete,
                LinkageArg::Upgma => Linkage::Upgma,
            };
        }
        if args.knn.is_some() {
            cfg.knn = args.knn;
        }
        if let Some(v) = args.restarts {
            cfg.restarts = v;
        }
        if let Some(v) = args.k_max {
            cfg.k_max = v;
        }
        if let Some(v) = args.mc_samples {
            cfg.mc_samples = v;
        }
        if let Some(v) = args.combine {
            cfg.combine = match v {
                CombineArg::Geometric => CombineRule::Geometric,
                CombineArg::Arithmetic => CombineRule::Arithmetic,
            };
        }
        if let Some(v) = args.estimator {
            cfg.estimator = match v {
                EstimatorArg::Mc => BfEstimator::MonteCarlo,
                EstimatorArg::Exact => BfEstimator::ClosedForm,
            };
        }
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        if let Some(v) = args.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = args.delimiter {
            cfg.delimiter = match v {
                DelimiterArg::Comma => Delimiter::Comma,
                DelimiterArg::Whitespace => Delimiter::Whitespace,
            };
        }
        if args.header {
            cfg.header = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.k_max < 2 {
            bail!("--k-max must be at least 2 (got {})", self.k_max);
        }
        if self.restarts < 1 {
            bail!("--restarts must be at least 1");
        }
        if self.mc_samples < 1 {
            bail!("--mc-samples must be at least 1");
        }
        if self.knn == Some(0) {
            bail!("--knn must be at least 1");
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            bail!("--threshold must be a positive number (got {})", self.threshold);
        }
        Ok(())
    }

    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig {
            clustering: ClusteringConfig {
                method: self.cluster_method,
                metric: self.metric,
                linkage: self.linkage,
                knn: self.knn,
                restarts: self.restarts,
            },
            mc_samples: self.mc_samples,
            estimator: self.estimator,
            combine: self.combine,
            seed: self.seed,
        }
    }

    pub fn ingest_format(&self) -> IngestFormat {
        IngestFormat {
            delimiter: self.delimiter,
            header: self.header,
        }
    }

    /// The `--input` path, or an error naming the flag.
    pub fn require_input(&self) -> anyhow::Result<&Path> {
        match &self.input {
            Some(p) => Ok(p),
            None => bail!("no input given; pass --input PATH or set `input` in the config file"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"k_max": 4, "seed": 9, "cluster_method": "hier", "metric": "l1"}"#).unwrap();
        let args = CommonArgs {
            config: Some(path),
            seed: Some(3),
            ..CommonArgs::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.k_max, 4);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.cluster_method, ClusterMethod::Hierarchical);
        assert_eq!(cfg.metric, Metric::L1);
        assert_eq!(cfg.mc_samples, 10_000);
        assert_eq!(cfg.restarts, 10);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"kmax": 4}"#).unwrap();
        let args = CommonArgs {
            config: Some(path),
            ..CommonArgs::default()
        };
        assert!(RunConfig::resolve(&args).is_err());
        let args = CommonArgs {
            k_max: Some(1),
            ..CommonArgs::default()
        };
        assert!(RunConfig::resolve(&args).is_err());
    }
}
