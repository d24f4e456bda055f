//! State-dependent relay channels `W(y, y1 | x, x1, s)`, their marginals and
//! the structural tests (degradedness, orthogonal sender components) that
//! select closed-form capacity expressions.

use serde::{Deserialize, Serialize};

use crate::error::{AvrcError, Result};
use crate::probability::{Pmf, MEMBERSHIP_TOL};

/// Row-sum tolerance for channel kernels.
pub const KERNEL_TOL: f64 = 1e-12;

/// Default tolerance for factorization tests.
pub const STRUCTURE_TOL: f64 = 1e-9;

/// Alphabet sizes of a relay channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabets {
    pub x: usize,
    pub x1: usize,
    pub s: usize,
    pub y: usize,
    pub y1: usize,
}

/// A memoryless state-dependent relay channel.
///
/// The kernel is stored flat in `[x][x1][s][y][y1]` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayChannel {
    sizes: Alphabets,
    kernel: Vec<f64>,
}

impl RelayChannel {
    /// Builds and validates a channel from a flat `[x][x1][s][y][y1]` kernel.
    pub fn new(sizes: Alphabets, kernel: Vec<f64>) -> Result<Self> {
        let ch = Self::new_unchecked(sizes, kernel)?;
        ch.validate()?;
        Ok(ch)
    }

    /// Builds without checking row-stochasticity (only the shape).
    pub fn new_unchecked(sizes: Alphabets, kernel: Vec<f64>) -> Result<Self> {
        let Alphabets { x, x1, s, y, y1 } = sizes;
        if [x, x1, s, y, y1].iter().any(|&k| k == 0 || k > 256) {
            return Err(AvrcError::InvalidChannel(
                "alphabet sizes must lie in 1..=256".into(),
            ));
        }
        let expected = x * x1 * s * y * y1;
        if kernel.len() != expected {
            return Err(AvrcError::DimensionMismatch(format!(
                "kernel has {} entries, expected {expected}",
                kernel.len()
            )));
        }
        Ok(Self { sizes, kernel })
    }

    /// Builds a channel from a function giving `W(y, y1 | x, x1, s)`.
    pub fn from_fn(sizes: Alphabets, f: impl Fn(usize, usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut kernel = Vec::with_capacity(sizes.x * sizes.x1 * sizes.s * sizes.y * sizes.y1);
        for x in 0..sizes.x {
            for x1 in 0..sizes.x1 {
                for s in 0..sizes.s {
                    for y in 0..sizes.y {
                        for y1 in 0..sizes.y1 {
                            kernel.push(f(x, x1, s, y, y1));
                        }
                    }
                }
            }
        }
        Self::new(sizes, kernel)
    }

    pub fn sizes(&self) -> Alphabets {
        self.sizes
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    #[inline]
    pub fn index(&self, x: usize, x1: usize, s: usize, y: usize, y1: usize) -> usize {
        let a = &self.sizes;
        (((x * a.x1 + x1) * a.s + s) * a.y + y) * a.y1 + y1
    }

    #[inline]
    pub fn prob(&self, x: usize, x1: usize, s: usize, y: usize, y1: usize) -> f64 {
        self.kernel[self.index(x, x1, s, y, y1)]
    }

    /// The `(y, y1)` row for input `(x, x1, s)`, laid out `[y][y1]`.
    pub fn row(&self, x: usize, x1: usize, s: usize) -> &[f64] {
        let start = self.index(x, x1, s, 0, 0);
        &self.kernel[start..start + self.sizes.y * self.sizes.y1]
    }

    /// Confirms nonnegativity and row-stochasticity, naming the first bad row.
    pub fn validate(&self) -> Result<()> {
        let a = self.sizes;
        for x in 0..a.x {
            for x1 in 0..a.x1 {
                for s in 0..a.s {
                    let row = self.row(x, x1, s);
                    if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                        return Err(AvrcError::InvalidChannel(format!(
                            "row (x={x}, x1={x1}, s={s}) has entry {p}"
                        )));
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > KERNEL_TOL {
                        return Err(AvrcError::InvalidChannel(format!(
                            "row (x={x}, x1={x1}, s={s}) sums to {total}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sender-relay and sender-destination marginal kernels
    /// `(W_{Y1|X,X1,S}, W_{Y|X,X1,S})`.
    pub fn marginals(&self) -> (StateKernel, StateKernel) {
        let a = self.sizes;
        let mut relay = StateKernel::zeros(a.x, a.x1, a.s, a.y1);
        let mut dest = StateKernel::zeros(a.x, a.x1, a.s, a.y);
        for x in 0..a.x {
            for x1 in 0..a.x1 {
                for s in 0..a.s {
                    for y in 0..a.y {
                        for y1 in 0..a.y1 {
                            let p = self.prob(x, x1, s, y, y1);
                            *relay.get_mut(x, x1, s, y1) += p;
                            *dest.get_mut(x, x1, s, y) += p;
                        }
                    }
                }
            }
        }
        (relay, dest)
    }

    /// The state-averaged channel `sum_s q(s) W(., . | x, x1, s)`, with a
    /// single dummy state.
    pub fn average_channel(&self, q: &Pmf) -> Result<RelayChannel> {
        let a = self.sizes;
        if q.support_size() != a.s {
            return Err(AvrcError::DimensionMismatch(format!(
                "state pmf has {} letters, channel has {}",
                q.support_size(),
                a.s
            )));
        }
        let out = a.y * a.y1;
        let mut kernel = vec![0.0; a.x * a.x1 * out];
        for x in 0..a.x {
            for x1 in 0..a.x1 {
                let dst = &mut kernel[(x * a.x1 + x1) * out..(x * a.x1 + x1 + 1) * out];
                for s in 0..a.s {
                    let w = q[s];
                    if w == 0.0 {
                        continue;
                    }
                    for (d, p) in dst.iter_mut().zip(self.row(x, x1, s)) {
                        *d += w * p;
                    }
                }
            }
        }
        let sizes = Alphabets { s: 1, ..a };
        RelayChannel::new_unchecked(sizes, kernel)
    }

    /// Whether `Y` is conditionally independent of `X` given `(Y1, X1, S)`.
    ///
    /// The witness is the pooled conditional `p(y | y1, x1, s)` (uniform on
    /// conditioning events of zero probability); the test passes when it
    /// reproduces the kernel to within `tol` in every entry.
    pub fn check_degraded(&self, tol: f64) -> Factorization {
        self.factorize(Output::Y1First, tol)
    }

    /// Whether `Y1` is conditionally independent of `X` given `(Y, X1, S)`.
    pub fn check_reversely_degraded(&self, tol: f64) -> Factorization {
        self.factorize(Output::YFirst, tol)
    }

    fn factorize(&self, order: Output, tol: f64) -> Factorization {
        let a = self.sizes;
        // `given` is the output the other one is conditioned on.
        let (n_given, n_out) = match order {
            Output::Y1First => (a.y1, a.y),
            Output::YFirst => (a.y, a.y1),
        };
        let entry = |x, x1, s, g, o| match order {
            Output::Y1First => self.prob(x, x1, s, o, g),
            Output::YFirst => self.prob(x, x1, s, g, o),
        };
        let mut conditional = vec![0.0; a.x1 * a.s * n_given * n_out];
        let mut max_residual: f64 = 0.0;
        for x1 in 0..a.x1 {
            for s in 0..a.s {
                for g in 0..n_given {
                    let base = ((x1 * a.s + s) * n_given + g) * n_out;
                    let mut mass = 0.0;
                    for x in 0..a.x {
                        for o in 0..n_out {
                            let p = entry(x, x1, s, g, o);
                            conditional[base + o] += p;
                            mass += p;
                        }
                    }
                    let cond = &mut conditional[base..base + n_out];
                    if mass > 0.0 {
                        cond.iter_mut().for_each(|c| *c /= mass);
                    } else {
                        cond.iter_mut().for_each(|c| *c = 1.0 / n_out as f64);
                    }
                    for x in 0..a.x {
                        let given_mass: f64 = (0..n_out).map(|o| entry(x, x1, s, g, o)).sum();
                        for o in 0..n_out {
                            let r = (entry(x, x1, s, g, o) - given_mass * cond[o]).abs();
                            max_residual = max_residual.max(r);
                        }
                    }
                }
            }
        }
        Factorization {
            holds: max_residual <= tol,
            max_residual,
            x1_size: a.x1,
            s_size: a.s,
            given_size: n_given,
            out_size: n_out,
            conditional,
        }
    }

    /// Whether the relay link `W_{Y1|X,X1,S}` does not depend on the state.
    pub fn relay_link_state_free(&self, tol: f64) -> bool {
        self.marginals().0.state_spread() <= tol
    }

    /// Whether the direct link `W_{Y|X,X1,S}` does not depend on the state.
    pub fn direct_link_state_free(&self, tol: f64) -> bool {
        self.marginals().1.state_spread() <= tol
    }

    /// Tests `W = W_{Y|X',X1,S} W_{Y1|X'',X1,S}` under the declared split
    /// `x = x' * |X''| + x''`.
    pub fn detect_orthogonal_sender(&self, split: OrthogonalSplit, tol: f64) -> Result<OrthogonalReport> {
        let a = self.sizes;
        if split.x_prime * split.x_double_prime != a.x {
            return Err(AvrcError::InvalidArgument(format!(
                "split {}x{} does not match |X| = {}",
                split.x_prime, split.x_double_prime, a.x
            )));
        }
        let (relay, dest) = self.marginals();
        let mut residual: f64 = 0.0;
        for xp in 0..split.x_prime {
            for xpp in 0..split.x_double_prime {
                let x = split.join(xp, xpp);
                for x1 in 0..a.x1 {
                    for s in 0..a.s {
                        for y in 0..a.y {
                            // Y may not depend on X''.
                            let y_ref = dest.get(split.join(xp, 0), x1, s, y);
                            residual = residual.max((dest.get(x, x1, s, y) - y_ref).abs());
                            for y1 in 0..a.y1 {
                                let product = dest.get(x, x1, s, y) * relay.get(x, x1, s, y1);
                                residual = residual.max((self.prob(x, x1, s, y, y1) - product).abs());
                            }
                        }
                        for y1 in 0..a.y1 {
                            // Y1 may not depend on X'.
                            let y1_ref = relay.get(split.join(0, xpp), x1, s, y1);
                            residual = residual.max((relay.get(x, x1, s, y1) - y1_ref).abs());
                        }
                    }
                }
            }
        }
        Ok(OrthogonalReport {
            split,
            factorizes: residual <= tol,
            direct_link_state_free: dest.state_spread() <= tol,
            max_residual: residual,
        })
    }

    /// Runs every structural test.
    pub fn structure(&self, split: Option<OrthogonalSplit>, tol: f64) -> Result<StructureReport> {
        let orthogonal_sender = match split {
            Some(split) => Some(self.detect_orthogonal_sender(split, tol)?),
            None => None,
        };
        Ok(StructureReport {
            degraded: self.check_degraded(tol).holds,
            reversely_degraded: self.check_reversely_degraded(tol).holds,
            relay_link_state_free: self.relay_link_state_free(tol),
            direct_link_state_free: self.direct_link_state_free(tol),
            orthogonal_sender,
        })
    }
}

#[derive(Clone, Copy)]
enum Output {
    Y1First,
    YFirst,
}

/// Result of a degradedness test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    pub holds: bool,
    pub max_residual: f64,
    x1_size: usize,
    s_size: usize,
    given_size: usize,
    out_size: usize,
    conditional: Vec<f64>,
}

impl Factorization {
    /// Witness conditional: `p(y | y1, x1, s)` for the degraded test,
    /// `p(y1 | y, x1, s)` for the reversed one.
    pub fn conditional(&self, given: usize, x1: usize, s: usize, out: usize) -> f64 {
        self.conditional[((x1 * self.s_size + s) * self.given_size + given) * self.out_size + out]
    }

    /// The witness as a kernel over `out` with inputs `(given, x1)` and state
    /// `s`, i.e. the channel `W_{Y | Y1, X1, S}` in the degraded case.
    pub fn as_kernel(&self) -> StateKernel {
        let mut k = StateKernel::zeros(self.given_size, self.x1_size, self.s_size, self.out_size);
        for g in 0..self.given_size {
            for x1 in 0..self.x1_size {
                for s in 0..self.s_size {
                    for o in 0..self.out_size {
                        *k.get_mut(g, x1, s, o) = self.conditional(g, x1, s, o);
                    }
                }
            }
        }
        k
    }
}

/// A state-dependent kernel `K(o | a, c, s)` with an input `a`, a context
/// `c` held fixed by the symmetrizability relation, and a state `s`.
///
/// Marginals of a relay channel are `K(y | x, x1, s)` and `K(y1 | x, x1, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateKernel {
    pub inputs: usize,
    pub contexts: usize,
    pub states: usize,
    pub outputs: usize,
    data: Vec<f64>,
}

impl StateKernel {
    pub fn zeros(inputs: usize, contexts: usize, states: usize, outputs: usize) -> Self {
        Self {
            inputs,
            contexts,
            states,
            outputs,
            data: vec![0.0; inputs * contexts * states * outputs],
        }
    }

    pub fn from_fn(
        inputs: usize,
        contexts: usize,
        states: usize,
        outputs: usize,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut k = Self::zeros(inputs, contexts, states, outputs);
        for a in 0..inputs {
            for c in 0..contexts {
                for s in 0..states {
                    for o in 0..outputs {
                        *k.get_mut(a, c, s, o) = f(a, c, s, o);
                    }
                }
            }
        }
        k
    }

    #[inline]
    fn offset(&self, a: usize, c: usize, s: usize, o: usize) -> usize {
        ((a * self.contexts + c) * self.states + s) * self.outputs + o
    }

    #[inline]
    pub fn get(&self, a: usize, c: usize, s: usize, o: usize) -> f64 {
        self.data[self.offset(a, c, s, o)]
    }

    #[inline]
    pub fn get_mut(&mut self, a: usize, c: usize, s: usize, o: usize) -> &mut f64 {
        let i = self.offset(a, c, s, o);
        &mut self.data[i]
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..self.inputs {
            for c in 0..self.contexts {
                for s in 0..self.states {
                    let start = self.offset(a, c, s, 0);
                    let row = &self.data[start..start + self.outputs];
                    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                        return Err(AvrcError::InvalidChannel(format!(
                            "kernel row (a={a}, c={c}, s={s}) has a negative entry"
                        )));
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > 1e-10 {
                        return Err(AvrcError::InvalidChannel(format!(
                            "kernel row (a={a}, c={c}, s={s}) sums to {total}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest change of any entry across states.
    pub fn state_spread(&self) -> f64 {
        let mut spread: f64 = 0.0;
        for a in 0..self.inputs {
            for c in 0..self.contexts {
                for o in 0..self.outputs {
                    let (lo, hi) = (0..self.states)
                        .map(|s| self.get(a, c, s, o))
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                            (lo.min(p), hi.max(p))
                        });
                    spread = spread.max(hi - lo);
                }
            }
        }
        spread
    }
}

/// Index split `x = x' * |X''| + x''` of the sender alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrthogonalSplit {
    pub x_prime: usize,
    pub x_double_prime: usize,
}

impl OrthogonalSplit {
    #[inline]
    pub fn join(&self, xp: usize, xpp: usize) -> usize {
        xp * self.x_double_prime + xpp
    }

    #[inline]
    pub fn parts(&self, x: usize) -> (usize, usize) {
        (x / self.x_double_prime, x % self.x_double_prime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalReport {
    pub split: OrthogonalSplit,
    pub factorizes: bool,
    pub direct_link_state_free: bool,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub degraded: bool,
    pub reversely_degraded: bool,
    pub relay_link_state_free: bool,
    pub direct_link_state_free: bool,
    pub orthogonal_sender: Option<OrthogonalReport>,
}

/// The set `Q` of state distributions the jammer may choose from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateUncertainty {
    FullSimplex { states: usize },
    FiniteList { pmfs: Vec<Pmf> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl StateUncertainty {
    pub fn full_simplex(states: usize) -> Self {
        assert!(states > 0, "state alphabet must be nonempty");
        Self::FullSimplex { states }
    }

    pub fn finite(pmfs: Vec<Pmf>) -> Result<Self> {
        let Some(first) = pmfs.first() else {
            return Err(AvrcError::InvalidArgument("empty list of state pmfs".into()));
        };
        let k = first.support_size();
        if pmfs.iter().any(|p| p.support_size() != k) {
            return Err(AvrcError::DimensionMismatch(
                "state pmfs have different support sizes".into(),
            ));
        }
        Ok(Self::FiniteList { pmfs })
    }

    /// Per-letter interval constraints intersected with the simplex.
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(AvrcError::DimensionMismatch("box bounds lengths differ".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(0.0 <= *l && l <= h && *h <= 1.0)) {
            return Err(AvrcError::InvalidArgument(
                "box bounds need 0 <= lo <= hi <= 1".into(),
            ));
        }
        let (sl, sh): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
        if sl > 1.0 + MEMBERSHIP_TOL || sh < 1.0 - MEMBERSHIP_TOL {
            return Err(AvrcError::InvalidArgument(
                "box does not intersect the probability simplex".into(),
            ));
        }
        Ok(Self::Box { lo, hi })
    }

    pub fn num_states(&self) -> usize {
        match self {
            Self::FullSimplex { states } => *states,
            Self::FiniteList { pmfs } => pmfs[0].support_size(),
            Self::Box { lo, .. } => lo.len(),
        }
    }

    /// Per-letter bounds for the continuous cases, `None` for a finite list.
    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::FullSimplex { states } => Some((vec![0.0; *states], vec![1.0; *states])),
            Self::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            Self::FiniteList { .. } => None,
        }
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        self.within_sup_distance(q, 0.0)
    }

    /// Whether some member of the set lies within sup-distance `radius` of `t`.
    pub fn within_sup_distance(&self, t: &[f64], radius: f64) -> bool {
        let r = radius + MEMBERSHIP_TOL;
        match self {
            Self::FullSimplex { .. } => true,
            Self::FiniteList { pmfs } => pmfs.iter().any(|q| {
                q.probs().iter().zip(t).all(|(a, b)| (a - b).abs() <= r)
            }),
            Self::Box { lo, hi } => {
                let mut low_sum = 0.0;
                let mut high_sum = 0.0;
                for ((&l, &h), &ts) in lo.iter().zip(hi).zip(t) {
                    let a = l.max(ts - r);
                    let b = h.min(ts + r);
                    if a > b {
                        return false;
                    }
                    low_sum += a;
                    high_sum += b;
                }
                low_sum <= 1.0 + MEMBERSHIP_TOL && high_sum >= 1.0 - MEMBERSHIP_TOL
            }
        }
    }

    /// Euclidean projection onto the set for the continuous cases.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match self.bounds() {
            Some((lo, hi)) => project_box_simplex(v, &lo, &hi),
            None => {
                let Self::FiniteList { pmfs } = self else { unreachable!() };
                // Nearest listed member.
                pmfs.iter()
                    .min_by(|a, b| {
                        let da: f64 = a.probs().iter().zip(v).map(|(p, x)| (p - x).powi(2)).sum();
                        let db: f64 = b.probs().iter().zip(v).map(|(p, x)| (p - x).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .map(|p| p.probs().to_vec())
                    .unwrap()
            }
        }
    }
}

/// Projection onto `{q : lo <= q <= hi, sum q = 1}` by bisection on the
/// shift `tau` in `q = clamp(v - tau, lo, hi)`.
pub fn project_box_simplex(v: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let mass = |tau: f64| -> f64 {
        v.iter()
            .zip(lo.iter().zip(hi))
            .map(|(x, (l, h))| (x - tau).clamp(*l, *h))
            .sum()
    };
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut a, mut b) = (vmin - 1.0, vmax);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mass(mid) > 1.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-16 {
            break;
        }
    }
    let tau = 0.5 * (a + b);
    let mut q: Vec<f64> = v
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(x, (l, h))| (x - tau).clamp(*l, *h))
        .collect();
    // Put the residual bisection error on a coordinate with slack.
    let err = 1.0 - q.iter().sum::<f64>();
    if err != 0.0 {
        if let Some(i) = (0..q.len()).find(|&i| q[i] + err >= lo[i] && q[i] + err <= hi[i]) {
            q[i] += err;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn example_channel_is_valid_and_degraded() {
        let ch = catalog::bsc_relay_with_additive_state(0.25);
        ch.validate().unwrap();
        assert!(ch.check_degraded(STRUCTURE_TOL).holds);
        assert!(!ch.check_reversely_degraded(STRUCTURE_TOL).holds);
        assert!(ch.relay_link_state_free(STRUCTURE_TOL));
        assert!(!ch.direct_link_state_free(STRUCTURE_TOL));
    }

    #[test]
    fn validate_names_the_bad_row() {
        let sizes = Alphabets { x: 2, x1: 1, s: 1, y: 2, y1: 1 };
        let ch = RelayChannel::new_unchecked(sizes, vec![0.5, 0.5, 0.5, 0.4]).unwrap();
        let err = ch.validate().unwrap_err().to_string();
        assert!(err.contains("x=1, x1=0, s=0"), "{err}");
    }

    #[test]
    fn bsc_pair_validates() {
        let sizes = Alphabets { x: 2, x1: 2, s: 1, y: 2, y1: 2 };
        let bsc = |a: usize, b: usize, e: f64| if a == b { 1.0 - e } else { e };
        let ch = RelayChannel::from_fn(sizes, |x, _, _, y, y1| bsc(x, y, 0.1) * bsc(x, y1, 0.2));
        assert!(ch.is_ok());
    }

    #[test]
    fn example_marginals() {
        let theta = 0.3;
        let ch = catalog::bsc_relay_with_additive_state(theta);
        let (relay, dest) = ch.marginals();
        for x in 0..2 {
            for x1 in 0..2 {
                for s in 0..2 {
                    for y1 in 0..2 {
                        let want = if y1 == x { 1.0 - theta } else { theta };
                        assert!((relay.get(x, x1, s, y1) - want).abs() < 1e-15);
                    }
                    for y in 0..3 {
                        let want = if y == x1 + s { 1.0 } else { 0.0 };
                        assert_eq!(dest.get(x, x1, s, y), want);
                    }
                }
            }
        }
        relay.validate().unwrap();
        dest.validate().unwrap();
    }

    #[test]
    fn product_kernel_marginals_recover_factors() {
        let sizes = Alphabets { x: 2, x1: 1, s: 2, y: 2, y1: 3 };
        let a = |x: usize, s: usize, y: usize| [[0.2, 0.8], [0.6, 0.4], [0.5, 0.5], [1.0, 0.0]][x * 2 + s][y];
        let b = |x: usize, s: usize, y1: usize| {
            [[0.1, 0.2, 0.7], [0.3, 0.3, 0.4], [0.0, 1.0, 0.0], [0.25, 0.25, 0.5]][x * 2 + s][y1]
        };
        let ch = RelayChannel::from_fn(sizes, |x, _, s, y, y1| a(x, s, y) * b(x, s, y1)).unwrap();
        let (relay, dest) = ch.marginals();
        for x in 0..2 {
            for s in 0..2 {
                for y in 0..2 {
                    assert!((dest.get(x, 0, s, y) - a(x, s, y)).abs() < 1e-15);
                }
                for y1 in 0..3 {
                    assert!((relay.get(x, 0, s, y1) - b(x, s, y1)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn direct_copy_is_not_degraded() {
        // Y = X, Y1 constant.
        let sizes = Alphabets { x: 2, x1: 1, s: 1, y: 2, y1: 1 };
        let ch = RelayChannel::from_fn(sizes, |x, _, _, y, _| (x == y) as u8 as f64).unwrap();
        assert!(!ch.check_degraded(STRUCTURE_TOL).holds);
        // A constant Y1 is trivially independent of everything.
        assert!(ch.check_reversely_degraded(STRUCTURE_TOL).holds);
    }

    #[test]
    fn example_reverse_degradedness_fails_on_an_explicit_slice() {
        // At (y=0, x1=0, s=0) the relay output still tracks X.
        let ch = catalog::bsc_relay_with_additive_state(0.2);
        let p_y1 = |x: usize, y1: usize| ch.prob(x, 0, 0, 0, y1) / (0..2).map(|t| ch.prob(x, 0, 0, 0, t)).sum::<f64>();
        assert!((p_y1(0, 0) - p_y1(1, 0)).abs() > 0.5);
        assert!(!ch.check_reversely_degraded(STRUCTURE_TOL).holds);
    }

    #[test]
    fn average_channel_examples() {
        let ch = catalog::bsc_relay_with_additive_state(0.1);
        let point = ch.average_channel(&Pmf::point(2, 1)).unwrap();
        for x in 0..2 {
            for x1 in 0..2 {
                assert_eq!(point.row(x, x1, 0), ch.row(x, x1, 1));
            }
        }
        let avg = ch.average_channel(&Pmf::uniform(2)).unwrap();
        avg.validate().unwrap();
        let (_, dest) = avg.marginals();
        for x in 0..2 {
            for x1 in 0..2 {
                for y in 0..3 {
                    let want = if y == x1 || y == x1 + 1 { 0.5 } else { 0.0 };
                    assert!((dest.get(x, x1, 0, y) - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn orthogonal_detection() {
        let ch = catalog::bsc_relay_with_additive_state(0.2);
        let report = ch
            .detect_orthogonal_sender(OrthogonalSplit { x_prime: 1, x_double_prime: 2 }, STRUCTURE_TOL)
            .unwrap();
        assert!(report.factorizes);
        assert!(!report.direct_link_state_free);
        assert!(ch
            .detect_orthogonal_sender(OrthogonalSplit { x_prime: 3, x_double_prime: 1 }, STRUCTURE_TOL)
            .is_err());

        // Y = X'' breaks the split.
        let sizes = Alphabets { x: 4, x1: 1, s: 1, y: 2, y1: 2 };
        let split = OrthogonalSplit { x_prime: 2, x_double_prime: 2 };
        let ch = RelayChannel::from_fn(sizes, |x, _, _, y, y1| {
            let (_, xpp) = split.parts(x);
            ((y == xpp) as u8 as f64) * 0.5 * (y1 < 2) as u8 as f64
        })
        .unwrap();
        assert!(!ch.detect_orthogonal_sender(split, STRUCTURE_TOL).unwrap().factorizes);
    }

    #[test]
    fn box_projection_and_membership() {
        let q = StateUncertainty::boxed(vec![0.0, 0.89], vec![0.11, 1.0]).unwrap();
        assert!(q.contains(&[0.1, 0.9]));
        assert!(!q.contains(&[0.2, 0.8]));
        let p = q.project(&[0.5, 0.5]);
        assert!((p[0] - 0.11).abs() < 1e-12 && (p[1] - 0.89).abs() < 1e-12);
        assert!(StateUncertainty::boxed(vec![0.6, 0.6], vec![1.0, 1.0]).is_err());
    }
}
