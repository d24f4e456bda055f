//! Entropy and conditional mutual information of finite joint distributions,
//! in bits.

use serde::{Deserialize, Serialize};

use crate::channel::RelayChannel;
use crate::error::{AvrcError, Result};
use crate::probability::{Pmf, SUM_TOL};

/// Largest negative round-off accepted before a mutual information is
/// treated as an internal error.
pub const NEGATIVE_MI_GUARD: f64 = 1e-10;

/// Role of one axis of a [`JointDist`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    U,
    X,
    X1,
    XPrime,
    XDoublePrime,
    S,
    Y,
    Y1,
    Aux(u8),
}

/// A probability tensor over named axes, first axis most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDist {
    axes: Vec<Axis>,
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl JointDist {
    pub fn new(axes: Vec<Axis>, sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if axes.len() != sizes.len() || axes.is_empty() {
            return Err(AvrcError::DimensionMismatch("one size per axis required".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].contains(a) {
                return Err(AvrcError::InvalidArgument(format!("axis {a:?} repeated")));
            }
        }
        let len: usize = sizes.iter().product();
        if len == 0 || probs.len() != len {
            return Err(AvrcError::DimensionMismatch(format!(
                "tensor has {} entries, axes need {len}",
                probs.len()
            )));
        }
        // Validates nonnegativity and total mass.
        Pmf::with_tolerance(probs, SUM_TOL).map(|p| Self { axes, sizes, probs: p.into_vec() })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn position(&self, axis: Axis) -> Option<usize> {
        self.axes.iter().position(|a| *a == axis)
    }

    /// Positions of the given named axes.
    pub fn positions(&self, axes: &[Axis]) -> Result<Vec<usize>> {
        axes.iter()
            .map(|a| {
                self.position(*a)
                    .ok_or_else(|| AvrcError::InvalidArgument(format!("no axis {a:?}")))
            })
            .collect()
    }

    /// Marginal on `keep` (positions, in the given order).
    pub fn marginal(&self, keep: &[usize]) -> Vec<f64> {
        let out_len: usize = keep.iter().map(|&k| self.sizes[k]).product();
        let mut out = vec![0.0; out_len];
        let mut digits = vec![0usize; self.sizes.len()];
        for &p in &self.probs {
            let idx = keep.iter().fold(0, |acc, &k| acc * self.sizes[k] + digits[k]);
            out[idx] += p;
            for d in (0..digits.len()).rev() {
                digits[d] += 1;
                if digits[d] < self.sizes[d] {
                    break;
                }
                digits[d] = 0;
            }
        }
        out
    }

    /// Marginal as a new `JointDist` over the named axes.
    pub fn marginal_dist(&self, keep: &[Axis]) -> Result<JointDist> {
        let pos = self.positions(keep)?;
        let sizes = pos.iter().map(|&k| self.sizes[k]).collect();
        JointDist::new(keep.to_vec(), sizes, self.marginal(&pos))
    }
}

/// `-sum p log2 p` with `0 log 0 = 0`.
pub fn entropy_of(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

/// Entropy of the marginal on `axes` (positions), in bits.
pub fn entropy(dist: &JointDist, axes: &[usize]) -> f64 {
    entropy_of(&dist.marginal(axes))
}

fn check_axes(dist: &JointDist, groups: &[&[usize]]) -> Result<()> {
    let mut seen = vec![false; dist.sizes.len()];
    for g in groups {
        for &k in *g {
            if k >= seen.len() {
                return Err(AvrcError::InvalidArgument(format!("axis position {k} out of range")));
            }
            if seen[k] {
                return Err(AvrcError::InvalidArgument(format!("axis position {k} used twice")));
            }
            seen[k] = true;
        }
    }
    Ok(())
}

/// `I(A; B | C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)`, clamped at zero.
pub fn conditional_mutual_information(dist: &JointDist, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    check_axes(dist, &[a, b, c])?;
    let ac: Vec<usize> = a.iter().chain(c).copied().collect();
    let bc: Vec<usize> = b.iter().chain(c).copied().collect();
    let abc: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
    let value = entropy(dist, &ac) + entropy(dist, &bc) - entropy(dist, &abc) - entropy(dist, c);
    clamp_information(value)
}

/// Same as [`conditional_mutual_information`] with named axes.
pub fn cmi_named(dist: &JointDist, a: &[Axis], b: &[Axis], c: &[Axis]) -> Result<f64> {
    conditional_mutual_information(dist, &dist.positions(a)?, &dist.positions(b)?, &dist.positions(c)?)
}

pub(crate) fn clamp_information(value: f64) -> Result<f64> {
    if value < -NEGATIVE_MI_GUARD {
        return Err(AvrcError::Consistency(format!("mutual information {value} is negative")));
    }
    Ok(value.max(0.0))
}

/// `h(t) = -t log2 t - (1-t) log2 (1-t)`.
pub fn binary_entropy(t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(AvrcError::InvalidArgument(format!("{t} is not a probability")));
    }
    Ok(entropy_of(&[t, 1.0 - t]))
}

/// Joint of `(.., X, X1, Y, Y1)` from an input law whose last two axes are
/// `X` and `X1`, through the channel averaged under `q`.
pub fn induced_joint(inputs: &JointDist, channel: &RelayChannel, q: &Pmf) -> Result<JointDist> {
    let a = channel.sizes();
    let k = inputs.axes.len();
    if k < 2 || inputs.axes[k - 2] != Axis::X || inputs.axes[k - 1] != Axis::X1 {
        return Err(AvrcError::DimensionMismatch("input law must end with axes X, X1".into()));
    }
    if inputs.sizes[k - 2] != a.x || inputs.sizes[k - 1] != a.x1 {
        return Err(AvrcError::DimensionMismatch(format!(
            "input law is over {}x{} letters, channel inputs are {}x{}",
            inputs.sizes[k - 2],
            inputs.sizes[k - 1],
            a.x,
            a.x1
        )));
    }
    if inputs.axes.contains(&Axis::Y) || inputs.axes.contains(&Axis::Y1) {
        return Err(AvrcError::InvalidArgument("input law already has output axes".into()));
    }
    let avg = channel.average_channel(q)?;
    let out = a.y * a.y1;
    let pairs = a.x * a.x1;
    let mut probs = Vec::with_capacity(inputs.probs.len() * out);
    for (i, &p) in inputs.probs.iter().enumerate() {
        let xx1 = i % pairs;
        let row = &avg.kernel()[xx1 * out..(xx1 + 1) * out];
        probs.extend(row.iter().map(|w| p * w));
    }
    let mut axes = inputs.axes.clone();
    axes.extend([Axis::Y, Axis::Y1]);
    let mut sizes = inputs.sizes.clone();
    sizes.extend([a.y, a.y1]);
    JointDist::new(axes, sizes, probs)
}
