//! Channel specification files.
//!
//! ```json
//! {
//!   "sizes": {"x": 2, "x1": 1, "s": 2, "y": 2, "y1": 1},
//!   "kernel": {"sparse": [[0, 0, 0, 0, 0, "1"], [1, 0, 1, 0, 0, "1"], ...]},
//!   "q": {"kind": "full_simplex", "states": 2}
//! }
//! ```
//!
//! `kernel` is either `{"nested": W[x][x1][s][y][y1]}` or `{"sparse": [[y,
//! y1, x, x1, s, p], ...]}` with unlisted entries zero. Probabilities are
//! decimal strings (plain numbers are accepted too).

use std::path::Path;

use avrc_core::{Alphabets, OrthogonalSplit, Pmf, RelayChannel, StateUncertainty};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Row-sum tolerance applied to parsed kernels.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prob {
    Text(String),
    Number(f64),
}

impl Prob {
    pub fn value(&self) -> Result<f64, CliError> {
        let v = match self {
            Prob::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| CliError::Spec(format!("'{s}' is not a decimal probability")))?,
            Prob::Number(v) => *v,
        };
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(CliError::Spec(format!("probability {v} outside [0, 1]")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    Nested(Vec<Vec<Vec<Vec<Vec<Prob>>>>>),
    Sparse(Vec<(usize, usize, usize, usize, usize, Prob)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpecFile {
    pub sizes: Alphabets,
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orthogonal_split: Option<OrthogonalSplit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<StateUncertainty>,
}

/// A parsed and validated specification.
#[derive(Debug, Clone)]
pub struct ChannelSpec {
    pub channel: RelayChannel,
    pub orthogonal_split: Option<OrthogonalSplit>,
    pub q: Option<StateUncertainty>,
}

impl ChannelSpecFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Spec(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Spec(format!("malformed channel spec: {e}")))
    }

    fn flat_kernel(&self) -> Result<Vec<f64>, CliError> {
        let a = self.sizes;
        let len = a.x * a.x1 * a.s * a.y * a.y1;
        let mut out = vec![0.0; len];
        let index = |x: usize, x1: usize, s: usize, y: usize, y1: usize| (((x * a.x1 + x1) * a.s + s) * a.y + y) * a.y1 + y1;
        match &self.kernel {
            KernelSpec::Nested(w) => {
                let shape_err = || CliError::Spec(format!("nested kernel must have shape {}x{}x{}x{}x{}", a.x, a.x1, a.s, a.y, a.y1));
                if w.len() != a.x {
                    return Err(shape_err());
                }
                for (x, wx) in w.iter().enumerate() {
                    if wx.len() != a.x1 {
                        return Err(shape_err());
                    }
                    for (x1, wx1) in wx.iter().enumerate() {
                        if wx1.len() != a.s {
                            return Err(shape_err());
                        }
                        for (s, ws) in wx1.iter().enumerate() {
                            if ws.len() != a.y {
                                return Err(shape_err());
                            }
                            for (y, wy) in ws.iter().enumerate() {
                                if wy.len() != a.y1 {
                                    return Err(shape_err());
                                }
                                for (y1, p) in wy.iter().enumerate() {
                                    out[index(x, x1, s, y, y1)] = p.value()?;
                                }
                            }
                        }
                    }
                }
            }
            KernelSpec::Sparse(entries) => {
                let mut seen = vec![false; len];
                for (y, y1, x, x1, s, p) in entries {
                    if *x >= a.x || *x1 >= a.x1 || *s >= a.s || *y >= a.y || *y1 >= a.y1 {
                        return Err(CliError::Spec(format!("sparse entry ({y}, {y1}, {x}, {x1}, {s}) out of range")));
                    }
                    let i = index(*x, *x1, *s, *y, *y1);
                    if std::mem::replace(&mut seen[i], true) {
                        return Err(CliError::Spec(format!("sparse entry ({y}, {y1}, {x}, {x1}, {s}) listed twice")));
                    }
                    out[i] = p.value()?;
                }
            }
        }
        Ok(out)
    }

    /// Converts to a channel. Rows must sum to one within [`ROW_SUM_TOL`]
    /// and are then renormalized exactly.
    pub fn resolve(&self) -> Result<ChannelSpec, CliError> {
        let a = self.sizes;
        let mut kernel = self.flat_kernel()?;
        let row = a.y * a.y1;
        for (r, chunk) in kernel.chunks_mut(row).enumerate() {
            let total: f64 = chunk.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                let s = r % a.s;
                let x1 = (r / a.s) % a.x1;
                let x = r / (a.s * a.x1);
                return Err(CliError::Spec(format!("row (x={x}, x1={x1}, s={s}) sums to {total}")));
            }
            chunk.iter_mut().for_each(|p| *p /= total);
        }
        let channel = RelayChannel::new(a, kernel)?;
        if let Some(split) = self.orthogonal_split {
            if split.x_prime * split.x_double_prime != a.x {
                return Err(CliError::Spec("orthogonal split does not factor |X|".into()));
            }
        }
        let q = self.q.as_ref().map(|q| validate_q(q, a.s)).transpose()?;
        Ok(ChannelSpec { channel, orthogonal_split: self.orthogonal_split, q })
    }
}

/// Rebuilds a deserialized state set through the checked constructors.
pub fn validate_q(q: &StateUncertainty, states: usize) -> Result<StateUncertainty, CliError> {
    let q = match q {
        StateUncertainty::FullSimplex { states } => {
            if *states == 0 {
                return Err(CliError::Spec("state set over an empty alphabet".into()));
            }
            StateUncertainty::full_simplex(*states)
        }
        StateUncertainty::FiniteList { pmfs } => {
            let pmfs = pmfs.iter().map(|p| Pmf::new(p.probs().to_vec())).collect::<Result<Vec<_>, _>>()?;
            StateUncertainty::finite(pmfs)?
        }
        StateUncertainty::Box { lo, hi } => StateUncertainty::boxed(lo.clone(), hi.clone())?,
    };
    if q.num_states() != states {
        return Err(CliError::Spec(format!("state set has {} letters, channel has {states}", q.num_states())));
    }
    Ok(q)
}

fn parse_vector(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| Prob::Text(t.to_string()).value())
        .collect()
}

/// Parses `--q`: `simplex`, `list:PATH` (JSON array of pmfs) or
/// `box:LO1,LO2,...;HI1,HI2,...`.
pub fn parse_q_flag(flag: &str, states: usize) -> Result<StateUncertainty, CliError> {
    let q = if flag == "simplex" {
        StateUncertainty::full_simplex(states)
    } else if let Some(path) = flag.strip_prefix("list:") {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Spec(format!("cannot read {path}: {e}")))?;
        let rows: Vec<Vec<Prob>> =
            serde_json::from_str(&text).map_err(|e| CliError::Spec(format!("malformed pmf list: {e}")))?;
        let pmfs = rows
            .iter()
            .map(|r| {
                let v = r.iter().map(Prob::value).collect::<Result<Vec<_>, _>>()?;
                Pmf::with_tolerance(v, ROW_SUM_TOL).map_err(CliError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        StateUncertainty::finite(pmfs)?
    } else if let Some(rest) = flag.strip_prefix("box:") {
        let (lo, hi) = rest
            .split_once(';')
            .ok_or_else(|| CliError::Usage("box needs LO;HI vectors".into()))?;
        StateUncertainty::boxed(parse_vector(lo)?, parse_vector(hi)?)?
    } else {
        return Err(CliError::Usage(format!("unknown --q value '{flag}'")));
    };
    validate_q(&q, states)
}
