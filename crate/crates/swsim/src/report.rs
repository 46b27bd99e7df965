//! CSV rows and run manifests.
//!
//! All floating-point CSV fields use fixed decimal formatting with nine
//! significant digits so that identical runs produce byte-identical files;
//! `runtime_ms` is the one column excluded from determinism comparisons,
//! and [`strip_runtime_columns`] removes it for exactly that purpose.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::codec::{ImproveReport, PairCodec, ReconstructionReport, SweepCell};
use crate::sources::{RateMethod, RateRegion};

/// Fixed decimal with nine significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (8 - exponent).clamp(0, 17) as usize;
    format!("{x:.decimals$}")
}

/// Drop every column named `runtime_ms` from a CSV document.
pub fn strip_runtime_columns(csv: &str) -> String {
    let mut lines = csv.lines();
    let Some(header) = lines.next() else {
        return String::new();
    };
    let keep: Vec<bool> = header.split(',').map(|c| c != "runtime_ms").collect();
    let filter = |line: &str| -> String {
        line.split(',')
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(f, _)| f)
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = vec![filter(header)];
    out.extend(lines.map(filter));
    out.join("\n")
}

pub const REGION_HEADER: &str = "source,h,h_given_x,h_given_y,h_marginal_x,h_marginal_y,method";

pub fn region_row(source_tag: &str, r: &RateRegion) -> String {
    let method = match r.method {
        RateMethod::Exact => "exact".to_string(),
        RateMethod::Estimated {
            x_block_len,
            y_block_len,
        } => format!("estimated(kx={x_block_len};ky={y_block_len})"),
    };
    format!(
        "{source_tag},{},{},{},{},{},{method}",
        fmt_sig(r.h),
        fmt_sig(r.h_given_x),
        fmt_sig(r.h_given_y),
        fmt_sig(r.h_marginal_x),
        fmt_sig(r.h_marginal_y),
    )
}

pub const SIMULATE_HEADER: &str = "source,a,b,m_s,m_l,ell,eta,coverage_s,coverage_l,\
psi_singleton_frac,phi5_singleton_frac,error_frac,runtime_ms";

pub fn simulate_row(
    source_tag: &str,
    codec: &PairCodec,
    report: &ReconstructionReport,
    runtime_ms: u128,
) -> String {
    let p = &codec.params;
    format!(
        "{source_tag},{},{},{},{},{},{},{},{},{},{},{},{runtime_ms}",
        p.a,
        p.b,
        p.m_s,
        p.m_l,
        p.ell,
        fmt_sig(p.eta),
        fmt_sig(codec.diagnostics.coverage_s),
        fmt_sig(codec.diagnostics.coverage_l),
        fmt_sig(codec.diagnostics.psi_singleton_frac),
        fmt_sig(codec.diagnostics.phi5_singleton_frac),
        fmt_sig(report.error_fraction),
    )
}

pub fn sweep_row(
    source_tag: &str,
    cell: &SweepCell,
    m_s: usize,
    m_l: usize,
    ell: usize,
    eta: f64,
) -> String {
    format!(
        "{source_tag},{},{},{m_s},{m_l},{ell},{},{},{},{},{},{},{}",
        cell.a,
        cell.b,
        fmt_sig(eta),
        fmt_sig(cell.coverage_s),
        fmt_sig(cell.coverage_l),
        fmt_sig(cell.psi_singleton_frac),
        fmt_sig(cell.phi5_singleton_frac),
        fmt_sig(cell.error_frac),
        cell.runtime_ms,
    )
}

pub const IMPROVE_HEADER: &str = "source,round,f_value,head_len,distance,distance_bound,\
error_before,error_after,runtime_ms";

pub fn improve_row(source_tag: &str, round: usize, r: &ImproveReport, runtime_ms: u128) -> String {
    format!(
        "{source_tag},{round},{},{},{},{},{},{},{runtime_ms}",
        fmt_sig(r.f_value),
        r.head_len,
        fmt_sig(r.distance),
        fmt_sig(r.distance_bound),
        fmt_sig(r.error_before),
        fmt_sig(r.error_after),
    )
}

/// Everything needed to reproduce and audit a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: String,
    pub master_seed: u64,
    /// Labeled sub-seeds actually used by the run.
    pub seed_tree: BTreeMap<String, u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub diagnostics: serde_json::Value,
    pub warnings: Vec<String>,
    pub runtime_ms: u128,
}

impl RunManifest {
    pub fn new(kind: &str, master_seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: "swsim",
            version: env!("CARGO_PKG_VERSION"),
            kind: kind.to_string(),
            master_seed,
            seed_tree: BTreeMap::new(),
            config,
            outputs: Vec::new(),
            diagnostics: serde_json::Value::Null,
            warnings: Vec::new(),
            runtime_ms: 0,
        }
    }

    pub fn record_seed(&mut self, label: &str) {
        self.seed_tree.insert(
            label.to_string(),
            crate::seeding::sub_seed(self.master_seed, label),
        );
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
