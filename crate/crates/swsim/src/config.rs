//! Experiment configuration: a single JSON document that fully determines
//! a run. Unknown fields are rejected so configs stay diffable and typos
//! fail loudly. One master seed drives everything; components derive their
//! sub-seeds by fixed labels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::PairParams;
use crate::sources::{JointSource, SourceError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config kind is {found}, expected {expected}")]
    KindMismatch { expected: String, found: String },
    #[error(transparent)]
    Source(#[from] SourceError),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Which experiment a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Region,
    Simulate,
    Sweep,
    Verify,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Region => "region",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Verify => "verify",
        };
        f.write_str(s)
    }
}

/// Source description as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum SourceConfig {
    /// Independent pair draws from a joint table, `joint_table[x][y]`.
    IidPair {
        x_alphabet: usize,
        y_alphabet: usize,
        joint_table: Vec<Vec<f64>>,
    },
    /// Markov chain over pair states `x * y_alphabet + y`, row-major
    /// transition matrix.
    JointMarkov {
        x_alphabet: usize,
        y_alphabet: usize,
        transition: Vec<Vec<f64>>,
    },
}

impl SourceConfig {
    pub fn build(&self) -> std::result::Result<JointSource, SourceError> {
        match self {
            SourceConfig::IidPair {
                x_alphabet,
                y_alphabet,
                joint_table,
            } => JointSource::new_iid_pair(*x_alphabet, *y_alphabet, joint_table.clone()),
            SourceConfig::JointMarkov {
                x_alphabet,
                y_alphabet,
                transition,
            } => JointSource::new_joint_markov(*x_alphabet, *y_alphabet, transition.clone()),
        }
    }
}

/// Pair-construction settings; the master seed is injected at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairConfig {
    pub a: usize,
    pub b: usize,
    pub ell: usize,
    pub eta: f64,
    pub m_s: usize,
    pub m_l: usize,
    pub target_coverage_s: f64,
    pub target_coverage_l: f64,
    pub marker_window: usize,
    pub eps0: f64,
    pub min_blocks: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        let p = PairParams::default();
        Self {
            a: p.a,
            b: p.b,
            ell: p.ell,
            eta: p.eta,
            m_s: p.m_s,
            m_l: p.m_l,
            target_coverage_s: p.target_coverage_s,
            target_coverage_l: p.target_coverage_l,
            marker_window: p.marker_window,
            eps0: p.eps0,
            min_blocks: p.min_blocks,
        }
    }
}

impl PairConfig {
    pub fn to_params(&self, master_seed: u64) -> PairParams {
        PairParams {
            a: self.a,
            b: self.b,
            ell: self.ell,
            eta: self.eta,
            m_s: self.m_s,
            m_l: self.m_l,
            target_coverage_s: self.target_coverage_s,
            target_coverage_l: self.target_coverage_l,
            marker_window: self.marker_window,
            eps0: self.eps0,
            min_blocks: self.min_blocks,
            seed: master_seed,
        }
    }
}

fn default_improve_rounds() -> usize {
    1
}

fn default_improve_eps() -> f64 {
    0.001
}

/// Settings of the repainting improvement rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImproveConfig {
    #[serde(default = "default_improve_eps")]
    pub eps: f64,
    #[serde(default = "default_improve_eps")]
    pub delta: f64,
    #[serde(default = "default_improve_rounds")]
    pub rounds: usize,
}

/// Grid of the rate-region sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub a_values: Vec<usize>,
    pub b_values: Vec<usize>,
}

impl SweepConfig {
    pub fn grid(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &a in &self.a_values {
            for &b in &self.b_values {
                out.push((a, b));
            }
        }
        out
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub source: SourceConfig,
    /// Orbit length; the orbit seed is derived from the master seed.
    pub orbit_length: usize,
    /// Master seed of the run.
    pub seed: u64,
    #[serde(default)]
    pub pair: PairConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improve: Option<ImproveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    /// Also decode a fresh orbit with the trained maps.
    #[serde(default)]
    pub train_test: bool,
    /// Output directory; flags and the environment may override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn expect_kind(&self, expected: ExperimentKind) -> Result<()> {
        if self.kind != expected {
            return Err(ConfigError::KindMismatch {
                expected: expected.to_string(),
                found: self.kind.to_string(),
            });
        }
        Ok(())
    }

    /// The doubly symmetric binary source at crossover `p`, as a config.
    pub fn dsbs_source(p: f64) -> SourceConfig {
        let q = 1.0 - p;
        SourceConfig::IidPair {
            x_alphabet: 2,
            y_alphabet: 2,
            joint_table: vec![vec![q / 2.0, p / 2.0], vec![p / 2.0, q / 2.0]],
        }
    }
}
