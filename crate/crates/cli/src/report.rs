//! Report documents written by the commands. Every report carries the
//! manifest needed to reproduce it.

use avrc_core::bounds::{BoundKind, BoundReport};
use avrc_core::symmetrizability::{CapacityClassification, SymmetrizabilityVerdict};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, without `--out`.
    pub argv: Vec<String>,
    /// Fully resolved options, defaults included.
    pub options: serde_json::Value,
    pub seeds: Vec<u64>,
    pub version: String,
    pub wall_clock_seconds: f64,
}

/// Only the manifest of any report.
#[derive(Debug, Clone, Deserialize)]
pub struct ManifestOnly {
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingRow {
    pub lower: BoundKind,
    pub upper: BoundKind,
    pub lower_value: f64,
    pub upper_value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub tolerance: f64,
    pub holds: bool,
    pub checks: Vec<OrderingRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub manifest: RunManifest,
    pub reports: Vec<BoundReport>,
    pub ordering: OrderingCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedVerdict {
    pub condition: String,
    /// What the witness rows are indexed by.
    pub witness_given: String,
    pub verdict: Option<SymmetrizabilityVerdict>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymcheckReport {
    pub manifest: RunManifest,
    pub verdicts: Vec<NamedVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub manifest: RunManifest,
    pub classification: CapacityClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub n: usize,
    pub blocks: usize,
    pub rate_prime: f64,
    pub rate_double_prime: f64,
    pub jammer: String,
    pub trials: u64,
    pub errors: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
    pub block_errors: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub manifest: RunManifest,
    pub rows: Vec<SimRow>,
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports hold finite values");
    s.push('\n');
    s
}

fn kind_name(kind: BoundKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn bounds_csv(r: &BoundsReport) -> String {
    let mut out = String::from("kind,value,converged,iterations,residual\n");
    for b in &r.reports {
        out += &format!(
            "{},{},{},{},{}\n",
            kind_name(b.kind),
            b.value,
            b.diagnostics.converged,
            b.diagnostics.iterations,
            b.diagnostics.residual
        );
    }
    out
}

pub fn symcheck_csv(r: &SymcheckReport) -> String {
    let mut out = String::from("condition,symmetrizable,max_violation,witness\n");
    for v in &r.verdicts {
        match &v.verdict {
            Some(verdict) => {
                let witness = verdict
                    .witness
                    .as_ref()
                    .map(|w| {
                        w.rows()
                            .iter()
                            .map(|row| row.probs().iter().map(|p| p.to_string()).collect::<Vec<_>>().join("/"))
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default();
                out += &format!("{},{},{},{}\n", v.condition, verdict.symmetrizable, verdict.max_violation, witness);
            }
            None => out += &format!("{},,,\n", v.condition),
        }
    }
    out
}

pub fn classify_csv(r: &ClassifyReport) -> String {
    let c = &r.classification;
    let name = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
    let reasons: Vec<String> = c.reasons.iter().map(|x| name(serde_json::to_value(x).unwrap_or_default())).collect();
    format!(
        "verdict,reasons\n{},{}\n",
        name(serde_json::to_value(c.verdict).unwrap_or_default()),
        reasons.join(";")
    )
}

pub fn simulate_csv(r: &SimulateReport) -> String {
    let mut out = String::from("n,B,R',R'',jammer,trials,errors,p_hat,ci_lo,ci_hi,seed\n");
    for row in &r.rows {
        out += &format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            row.n,
            row.blocks,
            row.rate_prime,
            row.rate_double_prime,
            row.jammer,
            row.trials,
            row.errors,
            row.p_hat,
            row.ci_lo,
            row.ci_hi,
            row.seed
        );
    }
    out
}
