//! Finite-alphabet probability primitives: pmfs, conditional pmfs, sequences,
//! empirical types and letter typicality.

use serde::{Deserialize, Serialize};

use crate::channel::StateUncertainty;
use crate::error::{AvrcError, Result};

/// Tolerance used when validating that a vector sums to one.
pub const SUM_TOL: f64 = 1e-12;

/// Slack applied to typicality and type-set membership comparisons.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// A probability vector over `{0, .., len-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, SUM_TOL)
    }

    /// Validates with a caller supplied tolerance on the total mass.
    pub fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(AvrcError::InvalidDistribution("empty support".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(AvrcError::InvalidDistribution(format!(
                "entry {i} is {p}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(AvrcError::InvalidDistribution(format!(
                "entries sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes a nonnegative weight vector.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(AvrcError::InvalidDistribution(
                "weights must be nonnegative with positive total".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "uniform pmf needs a nonempty support");
        Self {
            probs: vec![1.0 / size as f64; size],
        }
    }

    pub fn point(size: usize, at: usize) -> Self {
        assert!(at < size, "point mass outside the support");
        let mut probs = vec![0.0; size];
        probs[at] = 1.0;
        Self { probs }
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn max_abs_diff(&self, other: &Pmf) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Total variation distance.
    pub fn total_variation(&self, other: &Pmf) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

impl std::ops::Index<usize> for Pmf {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

/// A family of pmfs indexed by a conditioning value, e.g. `J(s|x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondPmf {
    rows: Vec<Pmf>,
}

impl CondPmf {
    pub fn new(rows: Vec<Pmf>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(AvrcError::InvalidDistribution(
                "conditional pmf needs at least one row".into(),
            ));
        };
        let width = first.support_size();
        if rows.iter().any(|r| r.support_size() != width) {
            return Err(AvrcError::InvalidDistribution(
                "rows have different support sizes".into(),
            ));
        }
        Ok(Self { rows })
    }

    /// Builds from a row-major table, validating each row.
    pub fn from_table(given_size: usize, support_size: usize, table: &[f64]) -> Result<Self> {
        if table.len() != given_size * support_size {
            return Err(AvrcError::DimensionMismatch(format!(
                "table has {} entries, expected {}",
                table.len(),
                given_size * support_size
            )));
        }
        let rows = table
            .chunks(support_size)
            .map(|row| Pmf::with_tolerance(row.to_vec(), 1e-9))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    /// Row `given` is a point mass at `f(given)`.
    pub fn deterministic(given_size: usize, support_size: usize, f: impl Fn(usize) -> usize) -> Self {
        let rows = (0..given_size).map(|g| Pmf::point(support_size, f(g))).collect();
        Self { rows }
    }

    pub fn given_size(&self) -> usize {
        self.rows.len()
    }

    pub fn support_size(&self) -> usize {
        self.rows[0].support_size()
    }

    pub fn row(&self, given: usize) -> &Pmf {
        &self.rows[given]
    }

    pub fn rows(&self) -> &[Pmf] {
        &self.rows
    }

    pub fn prob(&self, given: usize, value: usize) -> f64 {
        self.rows[given][value]
    }

    /// Row-major table `[given][value]`.
    pub fn to_table(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.probs().iter().copied()).collect()
    }
}

/// A finite sequence of alphabet indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sequence {
    symbols: Vec<u8>,
    alphabet_size: usize,
}

impl Sequence {
    pub fn new(symbols: Vec<u8>, alphabet_size: usize) -> Result<Self> {
        if alphabet_size == 0 || alphabet_size > 256 {
            return Err(AvrcError::InvalidArgument(format!(
                "alphabet size {alphabet_size} outside 1..=256"
            )));
        }
        if let Some(s) = symbols.iter().find(|s| **s as usize >= alphabet_size) {
            return Err(AvrcError::InvalidArgument(format!(
                "symbol {s} outside alphabet of size {alphabet_size}"
            )));
        }
        Ok(Self {
            symbols,
            alphabet_size,
        })
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Symbol counts of a sequence.
pub fn symbol_counts(symbols: &[u8], alphabet_size: usize) -> Vec<u64> {
    let mut counts = vec![0u64; alphabet_size];
    for &s in symbols {
        counts[s as usize] += 1;
    }
    counts
}

/// Empirical type (relative letter frequencies) of a sequence.
pub fn empirical_type(seq: &Sequence) -> Result<Pmf> {
    if seq.is_empty() {
        return Err(AvrcError::InvalidArgument(
            "empirical type of an empty sequence".into(),
        ));
    }
    let n = seq.len() as f64;
    let probs = symbol_counts(seq.symbols(), seq.alphabet_size())
        .into_iter()
        .map(|c| c as f64 / n)
        .collect();
    Pmf::new(probs)
}

/// Which letter-typicality definition `A^delta(P)` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypicalityFlavor {
    /// `|f(a) - P(a)| <= delta * P(a)` for every letter.
    #[default]
    Robust,
    /// `|f(a) - P(a)| <= delta / |A|` plus `f(a) = 0` whenever `P(a) = 0`.
    Strong,
}

/// Typicality test on joint symbol counts against a target pmf.
///
/// `counts` and `target` are indexed by the same flattened joint alphabet.
pub fn counts_are_typical(
    counts: &[u32],
    n: usize,
    target: &[f64],
    delta: f64,
    flavor: TypicalityFlavor,
) -> bool {
    debug_assert_eq!(counts.len(), target.len());
    let inv_n = 1.0 / n as f64;
    match flavor {
        TypicalityFlavor::Robust => counts.iter().zip(target).all(|(&c, &p)| {
            let f = c as f64 * inv_n;
            if p <= 0.0 {
                c == 0
            } else {
                (f - p).abs() <= delta * p + MEMBERSHIP_TOL
            }
        }),
        TypicalityFlavor::Strong => {
            let slack = delta / target.len() as f64;
            counts.iter().zip(target).all(|(&c, &p)| {
                if p <= 0.0 {
                    c == 0
                } else {
                    (c as f64 * inv_n - p).abs() <= slack + MEMBERSHIP_TOL
                }
            })
        }
    }
}

/// Flattened joint-symbol index of position `i` across several sequences,
/// first sequence most significant.
fn joint_index(seqs: &[&Sequence], i: usize) -> usize {
    seqs.iter().fold(0usize, |acc, s| {
        acc * s.alphabet_size() + s.symbols()[i] as usize
    })
}

/// Joint symbol counts of a tuple of equal-length sequences.
pub fn joint_counts(seqs: &[&Sequence]) -> Result<Vec<u32>> {
    let Some(first) = seqs.first() else {
        return Err(AvrcError::InvalidArgument("no sequences".into()));
    };
    let n = first.len();
    if seqs.iter().any(|s| s.len() != n) {
        return Err(AvrcError::DimensionMismatch(
            "sequences have different lengths".into(),
        ));
    }
    let size: usize = seqs.iter().map(|s| s.alphabet_size()).product();
    let mut counts = vec![0u32; size];
    for i in 0..n {
        counts[joint_index(seqs, i)] += 1;
    }
    Ok(counts)
}

/// Whether the tuple `seqs` is jointly `delta`-typical with respect to
/// `joint`, a pmf over the product alphabet (first sequence most significant).
pub fn is_jointly_typical(
    seqs: &[&Sequence],
    joint: &Pmf,
    delta: f64,
    flavor: TypicalityFlavor,
) -> Result<bool> {
    let counts = joint_counts(seqs)?;
    if counts.len() != joint.support_size() {
        return Err(AvrcError::DimensionMismatch(format!(
            "joint pmf has {} letters, product alphabet has {}",
            joint.support_size(),
            counts.len()
        )));
    }
    let n = seqs[0].len();
    if n == 0 {
        return Err(AvrcError::InvalidArgument("empty sequences".into()));
    }
    Ok(counts_are_typical(&counts, n, joint.probs(), delta, flavor))
}

/// Number of `n`-types over an alphabet of `k` letters, `C(n+k-1, k-1)`.
pub fn type_count(n: usize, k: usize) -> u128 {
    let (top, r) = ((n + k - 1) as u128, (k - 1) as u128);
    let r = r.min(top - r);
    (0..r).fold(1u128, |acc, i| acc * (top - i) / (i + 1))
}

/// Iterator over all compositions of `n` into `k` nonnegative parts.
///
/// The first `k - 1` parts run as an odometer bounded by `n`; the last part
/// takes the remainder.
#[derive(Debug, Clone)]
pub struct Compositions {
    head: Vec<usize>,
    head_sum: usize,
    n: usize,
    done: bool,
}

impl Compositions {
    pub fn new(n: usize, k: usize) -> Self {
        assert!(k > 0, "compositions need at least one part");
        Self {
            head: vec![0; k - 1],
            head_sum: 0,
            n,
            done: false,
        }
    }
}

impl Iterator for Compositions {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let mut out = self.head.clone();
        out.push(self.n - self.head_sum);

        let mut i = self.head.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.head_sum < self.n {
                self.head[i] += 1;
                self.head_sum += 1;
                break;
            }
            self.head_sum -= self.head[i];
            self.head[i] = 0;
        }
        Some(out)
    }
}

/// Radius `delta_1 = delta / (2 |S|)` used to build the state-type set.
pub fn state_type_radius(delta: f64, num_states: usize) -> f64 {
    delta / (2.0 * num_states as f64)
}

/// All `n`-types over the state alphabet within sup-distance `delta / (2|S|)`
/// of some member of `q_set`.
pub fn state_type_set(q_set: &StateUncertainty, n: usize, delta: f64) -> Result<Vec<Pmf>> {
    if n == 0 {
        return Err(AvrcError::InvalidArgument("n must be positive".into()));
    }
    if !(delta > 0.0) {
        return Err(AvrcError::InvalidArgument("delta must be positive".into()));
    }
    state_type_set_with_radius(q_set, n, state_type_radius(delta, q_set.num_states()))
}

/// Same as [`state_type_set`] with the closeness radius given directly.
pub fn state_type_set_with_radius(
    q_set: &StateUncertainty,
    n: usize,
    radius: f64,
) -> Result<Vec<Pmf>> {
    if n == 0 {
        return Err(AvrcError::InvalidArgument("n must be positive".into()));
    }
    let k = q_set.num_states();
    let nf = n as f64;
    let mut out = Vec::new();
    for counts in Compositions::new(n, k) {
        let t: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
        if q_set.within_sup_distance(&t, radius) {
            out.push(Pmf::with_tolerance(t, 1e-9)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(symbols: &[u8], k: usize) -> Sequence {
        Sequence::new(symbols.to_vec(), k).unwrap()
    }

    #[test]
    fn empirical_type_examples() {
        assert_eq!(empirical_type(&seq(&[0, 1, 0, 1], 2)).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(empirical_type(&seq(&[0, 0, 0], 2)).unwrap().probs(), &[1.0, 0.0]);
        assert_eq!(
            empirical_type(&seq(&[0, 1, 2, 2], 3)).unwrap().probs(),
            &[0.25, 0.25, 0.5]
        );
        assert!(empirical_type(&seq(&[], 2)).is_err());
    }

    #[test]
    fn sequence_rejects_out_of_range_symbol() {
        assert!(Sequence::new(vec![0, 2], 2).is_err());
    }

    #[test]
    fn pmf_validation() {
        assert!(Pmf::new(vec![0.5, 0.5]).is_ok());
        assert!(Pmf::new(vec![0.5, 0.4]).is_err());
        assert!(Pmf::new(vec![1.5, -0.5]).is_err());
        assert!(Pmf::new(vec![]).is_err());
    }

    #[test]
    fn typicality_examples() {
        let half = Pmf::new(vec![0.5, 0.5]).unwrap();
        assert!(is_jointly_typical(&[&seq(&[0, 1, 1, 0], 2)], &half, 0.0, TypicalityFlavor::Robust).unwrap());
        assert!(!is_jointly_typical(&[&seq(&[0, 0, 0, 0], 2)], &half, 0.1, TypicalityFlavor::Robust).unwrap());
        assert!(is_jointly_typical(&[&seq(&[0, 1], 2), &seq(&[0], 2)], &half, 0.1, TypicalityFlavor::Robust).is_err());
    }

    #[test]
    fn typicality_zero_mass_clause() {
        let p = Pmf::new(vec![1.0, 0.0]).unwrap();
        assert!(!is_jointly_typical(&[&seq(&[0, 0, 0, 1], 2)], &p, 10.0, TypicalityFlavor::Robust).unwrap());
        assert!(!is_jointly_typical(&[&seq(&[0, 0, 0, 1], 2)], &p, 10.0, TypicalityFlavor::Strong).unwrap());
    }

    #[test]
    fn three_sequence_tuple_at_floor_composition() {
        // Joint over 2x2x2 letters; build a length-40 tuple whose joint
        // composition is floor(40 * P) with the leftover put on the largest letter.
        let p = [0.3, 0.05, 0.1, 0.05, 0.1, 0.1, 0.05, 0.25];
        let n = 40usize;
        let mut counts: Vec<usize> = p.iter().map(|x| (x * n as f64).floor() as usize).collect();
        let short = n - counts.iter().sum::<usize>();
        counts[0] += short;
        let (mut a, mut b, mut c) = (vec![], vec![], vec![]);
        for (idx, &cnt) in counts.iter().enumerate() {
            for _ in 0..cnt {
                a.push((idx >> 2) as u8);
                b.push(((idx >> 1) & 1) as u8);
                c.push((idx & 1) as u8);
            }
        }
        let joint = Pmf::new(p.to_vec()).unwrap();
        let (a, b, c) = (seq(&a, 2), seq(&b, 2), seq(&c, 2));
        // Direct count: the largest relative deviation of this composition.
        let worst = counts
            .iter()
            .zip(p)
            .map(|(&k, q)| ((k as f64 / n as f64) - q).abs() / q)
            .fold(0.0, f64::max);
        assert!(is_jointly_typical(&[&a, &b, &c], &joint, worst, TypicalityFlavor::Robust).unwrap());
        assert!(!is_jointly_typical(&[&a, &b, &c], &joint, worst * 0.5, TypicalityFlavor::Robust).unwrap() || worst == 0.0);
    }

    #[test]
    fn compositions_enumerate_all_types() {
        for n in 0..7 {
            for k in 1..5 {
                let all: Vec<_> = Compositions::new(n, k).collect();
                assert_eq!(all.len() as u128, type_count(n, k), "n={n} k={k}");
                assert!(all.iter().all(|c| c.iter().sum::<usize>() == n));
                let mut dedup = all.clone();
                dedup.sort();
                dedup.dedup();
                assert_eq!(dedup.len(), all.len());
            }
        }
    }

    #[test]
    fn state_type_set_examples() {
        let simplex = StateUncertainty::full_simplex(2);
        for n in 1..8 {
            assert_eq!(state_type_set(&simplex, n, 0.3).unwrap().len(), n + 1);
        }

        // Enumerate the five 4-types and keep those within 0.1 of (1, 0).
        let single = StateUncertainty::finite(vec![Pmf::new(vec![1.0, 0.0]).unwrap()]).unwrap();
        let expected: Vec<Vec<f64>> = (0..=4)
            .map(|c| vec![c as f64 / 4.0, 1.0 - c as f64 / 4.0])
            .filter(|t| (t[0] - 1.0).abs().max(t[1].abs()) <= 0.1)
            .collect();
        let got: Vec<Vec<f64>> = state_type_set_with_radius(&single, 4, 0.1)
            .unwrap()
            .into_iter()
            .map(Pmf::into_vec)
            .collect();
        assert_eq!(got, expected);
        assert_eq!(got, vec![vec![1.0, 0.0]]);
        // delta = 0.4 gives delta_1 = 0.4 / 4 = 0.1.
        assert_eq!(state_type_set(&single, 4, 0.4).unwrap().len(), 1);

        let half = StateUncertainty::finite(vec![Pmf::uniform(2)]).unwrap();
        let got = state_type_set_with_radius(&half, 2, 0.0).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].probs(), &[0.5, 0.5]);
    }
}
