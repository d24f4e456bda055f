//! Symmetrizability of state-dependent kernels, capacity classification for
//! deterministic codes, and the jamming distributions that defeat them.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{RelayChannel, StateKernel, STRUCTURE_TOL};
use crate::error::{AvrcError, Result};
use crate::lp::LinearProgram;
use crate::probability::{CondPmf, Pmf};

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizabilityVerdict {
    pub symmetrizable: bool,
    /// Minimizer `J(s | a)` of the largest violation.
    pub witness: Option<CondPmf>,
    /// Minimized largest absolute violation over row-stochastic `J`.
    pub max_violation: f64,
}

/// Largest absolute violation of
/// `sum_s K(o|a,c,s) J(s|b) = sum_s K(o|b,c,s) J(s|a)` over all `a, b, c, o`.
pub fn symmetrization_violation(kernel: &StateKernel, j: &CondPmf) -> Result<f64> {
    if j.given_size() != kernel.inputs || j.support_size() != kernel.states {
        return Err(AvrcError::DimensionMismatch(format!(
            "witness is {}x{}, kernel needs {}x{}",
            j.given_size(),
            j.support_size(),
            kernel.inputs,
            kernel.states
        )));
    }
    let mut worst: f64 = 0.0;
    for a in 0..kernel.inputs {
        for b in a + 1..kernel.inputs {
            for c in 0..kernel.contexts {
                for o in 0..kernel.outputs {
                    let lhs: f64 = (0..kernel.states).map(|s| kernel.get(a, c, s, o) * j.prob(b, s)).sum();
                    let rhs: f64 = (0..kernel.states).map(|s| kernel.get(b, c, s, o) * j.prob(a, s)).sum();
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Minimizes the largest violation over row-stochastic `J(s|a)`:
/// variables `J` (row-major) and the epigraph level `t`.
pub fn check_kernel_symmetrizable(kernel: &StateKernel, tol: f64) -> Result<SymmetrizabilityVerdict> {
    kernel.validate()?;
    if !(tol >= 0.0) {
        return Err(AvrcError::InvalidArgument("tolerance must be non-negative".into()));
    }
    let (na, ns) = (kernel.inputs, kernel.states);
    let nv = na * ns + 1;
    let t = nv - 1;
    let mut lp = LinearProgram { c: vec![0.0; nv], ..Default::default() };
    lp.c[t] = 1.0;
    for a in 0..na {
        for b in a + 1..na {
            for c in 0..kernel.contexts {
                for o in 0..kernel.outputs {
                    let mut row = vec![0.0; nv];
                    for s in 0..ns {
                        row[b * ns + s] += kernel.get(a, c, s, o);
                        row[a * ns + s] -= kernel.get(b, c, s, o);
                    }
                    if row.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let mut neg: Vec<f64> = row.iter().map(|v| -v).collect();
                    row[t] = -1.0;
                    neg[t] = -1.0;
                    lp.a_ub.push(row);
                    lp.b_ub.push(0.0);
                    lp.a_ub.push(neg);
                    lp.b_ub.push(0.0);
                }
            }
        }
    }
    for a in 0..na {
        let mut row = vec![0.0; nv];
        row[a * ns..(a + 1) * ns].iter_mut().for_each(|v| *v = 1.0);
        lp.a_eq.push(row);
        lp.b_eq.push(1.0);
    }
    let sol = lp.solve()?;
    let rows = (0..na)
        .map(|a| Pmf::from_weights(&sol.x[a * ns..(a + 1) * ns]))
        .collect::<Result<Vec<_>>>()?;
    let witness = CondPmf::new(rows)?;
    // Report the violation of the normalized witness so the verdict and the
    // independent re-check agree.
    let max_violation = symmetrization_violation(kernel, &witness)?.max(sol.objective.max(0.0));
    let symmetrizable = max_violation <= tol;
    Ok(SymmetrizabilityVerdict { symmetrizable, witness: Some(witness), max_violation })
}

/// Full relay channel as a kernel with input `x`, context `x1` and output
/// `(y, y1)`.
pub fn full_kernel(channel: &RelayChannel) -> StateKernel {
    let a = channel.sizes();
    StateKernel::from_fn(a.x, a.x1, a.s, a.y * a.y1, |x, x1, s, o| channel.prob(x, x1, s, o / a.y1, o % a.y1))
}

/// Symmetrizability in `X` given `X1` of the full channel.
pub fn check_symmetrizable_x_given_x1(channel: &RelayChannel, tol: f64) -> Result<SymmetrizabilityVerdict> {
    check_kernel_symmetrizable(&full_kernel(channel), tol)
}

/// `W_{Y | Y1, X1, S}` with the pair `(x1, y1)` as input, indexed
/// `x1 * |Y1| + y1`. Errors unless the channel is degraded.
pub fn relay_pair_kernel(channel: &RelayChannel) -> Result<StateKernel> {
    channel.validate()?;
    let f = channel.check_degraded(STRUCTURE_TOL);
    if !f.holds {
        return Err(AvrcError::StructureUnmet(format!(
            "channel is not degraded (residual {:.3e})",
            f.max_residual
        )));
    }
    let a = channel.sizes();
    Ok(StateKernel::from_fn(a.x1 * a.y1, 1, a.s, a.y, |p, _, s, y| {
        f.conditional(p % a.y1, p / a.y1, s, y)
    }))
}

/// Symmetrizability in `X1 x Y1` of a degraded channel.
pub fn check_symmetrizable_x1y1(channel: &RelayChannel, tol: f64) -> Result<SymmetrizabilityVerdict> {
    check_kernel_symmetrizable(&relay_pair_kernel(channel)?, tol)
}

/// Closed-form test for a state-free kernel: symmetrizable iff the rows do
/// not depend on the input for every context.
pub fn state_free_rows_coincide(kernel: &StateKernel, tol: f64) -> bool {
    (0..kernel.contexts).all(|c| {
        (1..kernel.inputs).all(|a| (0..kernel.outputs).all(|o| (kernel.get(a, c, 0, o) - kernel.get(0, c, 0, o)).abs() <= tol))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityVerdict {
    EqualsRandomCodeCapacity,
    Zero,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationRule {
    /// Both marginals non-symmetrizable in `X` given `X1`: deterministic and
    /// random code capacities coincide.
    MarginalsNonSymmetrizable,
    /// The channel is symmetrizable in `X` given `X1`.
    SymmetrizableGivenRelayInput,
    /// Degraded with a state-free relay link and symmetrizable in `X1 x Y1`.
    DegradedSymmetrizableRelayPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityClassification {
    pub verdict: CapacityVerdict,
    pub reasons: Vec<ClassificationRule>,
    pub relay_marginal: SymmetrizabilityVerdict,
    pub destination_marginal: SymmetrizabilityVerdict,
    pub full_channel: SymmetrizabilityVerdict,
    /// Present when the channel is degraded with a state-free relay link.
    pub relay_pair: Option<SymmetrizabilityVerdict>,
}

/// Applies the sufficient conditions in order; the verdict follows the first
/// one that holds and `reasons` lists every one that holds.
pub fn classify_capacity(channel: &RelayChannel, tol: f64) -> Result<CapacityClassification> {
    channel.validate()?;
    let (relay_k, dest_k) = channel.marginals();
    let relay_marginal = check_kernel_symmetrizable(&relay_k, tol)?;
    let destination_marginal = check_kernel_symmetrizable(&dest_k, tol)?;
    let full_channel = check_symmetrizable_x_given_x1(channel, tol)?;
    let relay_pair = if channel.check_degraded(STRUCTURE_TOL).holds && channel.relay_link_state_free(STRUCTURE_TOL) {
        Some(check_symmetrizable_x1y1(channel, tol)?)
    } else {
        None
    };
    let mut reasons = Vec::new();
    if !relay_marginal.symmetrizable && !destination_marginal.symmetrizable {
        reasons.push(ClassificationRule::MarginalsNonSymmetrizable);
    }
    if full_channel.symmetrizable {
        reasons.push(ClassificationRule::SymmetrizableGivenRelayInput);
    }
    if relay_pair.as_ref().is_some_and(|v| v.symmetrizable) {
        reasons.push(ClassificationRule::DegradedSymmetrizableRelayPair);
    }
    let verdict = match reasons.first() {
        Some(ClassificationRule::MarginalsNonSymmetrizable) => CapacityVerdict::EqualsRandomCodeCapacity,
        Some(_) => CapacityVerdict::Zero,
        None => CapacityVerdict::Unknown,
    };
    Ok(CapacityClassification { verdict, reasons, relay_marginal, destination_marginal, full_channel, relay_pair })
}

/// A deterministic relay code as seen by a jammer who knows it.
pub trait RelayCode: Sync {
    type Message: Clone + std::fmt::Debug + Send + Sync;

    /// `(|X|, |X1|)`.
    fn input_sizes(&self) -> (usize, usize);

    /// Total number of channel uses.
    fn length(&self) -> usize;

    fn random_message(&self, rng: &mut dyn RngCore) -> Self::Message;

    fn sender_sequence(&self, m: &Self::Message) -> Vec<u8>;

    /// Runs the relay over the whole transmission. `link(i, x_i, x1_i)`
    /// returns the relay output at position `i`; the relay input at `i` may
    /// depend only on outputs before `i`. Returns `(x1, y1)`.
    fn relay_run(&self, x: &[u8], link: &mut dyn FnMut(usize, u8, u8) -> u8) -> (Vec<u8>, Vec<u8>);
}

#[derive(Debug, Clone)]
enum AttackKind {
    SenderInput,
    /// Relay link `W_{Y1 | X, X1}` as cumulative rows over `y1`.
    RelayPair { link: Vec<Vec<f64>>, x1_size: usize, y1_size: usize },
}

/// Sampler of jamming state sequences mixing over a phantom message.
#[derive(Debug, Clone)]
pub struct AttackSampler<'a, C: RelayCode> {
    code: &'a C,
    j: Vec<Vec<f64>>,
    kind: AttackKind,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackDraw<M> {
    pub phantom: M,
    pub states: Vec<u8>,
}

fn cdf(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = row
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

fn draw(cum: &[f64], rng: &mut dyn RngCore) -> u8 {
    let r: f64 = rng.gen();
    cum.iter().position(|&c| r < c).unwrap_or(cum.len() - 1) as u8
}

/// Jammer for a symmetrizable-`X|X1` channel: `s_i ~ J(. | x_i(m~))` for a
/// uniform phantom message `m~`.
pub fn build_attack_x<C: RelayCode>(code: &C, j: CondPmf) -> Result<AttackSampler<'_, C>> {
    if j.given_size() != code.input_sizes().0 {
        return Err(AvrcError::DimensionMismatch("J must be conditioned on the sender alphabet".into()));
    }
    Ok(AttackSampler {
        code,
        j: j.rows().iter().map(|r| cdf(r.probs())).collect(),
        kind: AttackKind::SenderInput,
        rng: ChaCha8Rng::seed_from_u64(0),
    })
}

/// Jammer for a degraded channel symmetrizable in `X1 x Y1`: the phantom
/// message is pushed through the relay link and the code's own relay, and
/// `s_i ~ J(. | x1~_i, y1~_i)`. Requires a state-free relay link.
pub fn build_attack_x1y1<'a, C: RelayCode>(code: &'a C, channel: &RelayChannel, j: CondPmf) -> Result<AttackSampler<'a, C>> {
    channel.validate()?;
    let a = channel.sizes();
    if code.input_sizes() != (a.x, a.x1) {
        return Err(AvrcError::DimensionMismatch("code and channel alphabets differ".into()));
    }
    if j.given_size() != a.x1 * a.y1 || j.support_size() != a.s {
        return Err(AvrcError::DimensionMismatch("J must be a pmf over S given (X1, Y1)".into()));
    }
    if !channel.check_degraded(STRUCTURE_TOL).holds {
        return Err(AvrcError::StructureUnmet("attack on the relay pair needs a degraded channel".into()));
    }
    if !channel.relay_link_state_free(STRUCTURE_TOL) {
        return Err(AvrcError::StructureUnmet("attack on the relay pair needs a state-free relay link".into()));
    }
    let (relay_k, _) = channel.marginals();
    let link = (0..a.x)
        .flat_map(|x| (0..a.x1).map(move |x1| (x, x1)))
        .map(|(x, x1)| cdf(&(0..a.y1).map(|y1| relay_k.get(x, x1, 0, y1)).collect::<Vec<_>>()))
        .collect();
    Ok(AttackSampler {
        code,
        j: j.rows().iter().map(|r| cdf(r.probs())).collect(),
        kind: AttackKind::RelayPair { link, x1_size: a.x1, y1_size: a.y1 },
        rng: ChaCha8Rng::seed_from_u64(0),
    })
}

impl<'a, C: RelayCode> AttackSampler<'a, C> {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    /// Draws from the sampler's own generator.
    pub fn sample(&mut self) -> AttackDraw<C::Message> {
        let mut rng = self.rng.clone();
        let d = self.sample_with(&mut rng);
        self.rng = rng;
        d
    }

    pub fn sample_with(&self, rng: &mut dyn RngCore) -> AttackDraw<C::Message> {
        let phantom = self.code.random_message(rng);
        let x = self.code.sender_sequence(&phantom);
        let states = match &self.kind {
            AttackKind::SenderInput => x.iter().map(|&xi| draw(&self.j[xi as usize], rng)).collect(),
            AttackKind::RelayPair { link, x1_size, y1_size } => {
                let (x1, y1) = {
                    let mut f = |_: usize, xi: u8, x1i: u8| draw(&link[xi as usize * x1_size + x1i as usize], rng);
                    self.code.relay_run(&x, &mut f)
                };
                x1.iter()
                    .zip(&y1)
                    .map(|(&a, &b)| draw(&self.j[a as usize * y1_size + b as usize], rng))
                    .collect()
            }
        };
        AttackDraw { phantom, states }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::catalog;
    use crate::channel::Alphabets;
    use crate::simulation::ExplicitCode;

    fn additive_xor() -> RelayChannel {
        // Y = X xor S with a silent relay.
        let sizes = Alphabets { x: 2, x1: 1, s: 2, y: 2, y1: 1 };
        RelayChannel::from_fn(sizes, |x, _, s, y, _| (y == x ^ s) as u8 as f64).unwrap()
    }

    #[test]
    fn additive_state_is_symmetrizable_by_the_identity_map() {
        let ch = additive_xor();
        let v = check_symmetrizable_x_given_x1(&ch, DEFAULT_TOL).unwrap();
        assert!(v.symmetrizable);
        let ident = CondPmf::deterministic(2, 2, |x| x);
        assert_eq!(symmetrization_violation(&full_kernel(&ch), &ident).unwrap(), 0.0);
    }

    #[test]
    fn distinct_state_free_rows_are_not_symmetrizable() {
        let sizes = Alphabets { x: 2, x1: 1, s: 1, y: 2, y1: 1 };
        let ch = RelayChannel::from_fn(sizes, |x, _, _, y, _| if x == y { 0.8 } else { 0.2 }).unwrap();
        let v = check_symmetrizable_x_given_x1(&ch, DEFAULT_TOL).unwrap();
        assert!(!v.symmetrizable);
        assert!((v.max_violation - 0.6).abs() < 1e-9);
    }

    #[test]
    fn example_relay_marginal_depends_on_theta() {
        for (theta, sym) in [(0.11, false), (0.3, false), (0.5, true)] {
            let ch = catalog::bsc_relay_with_additive_state(theta);
            let (relay_k, dest_k) = ch.marginals();
            let v = check_kernel_symmetrizable(&relay_k, DEFAULT_TOL).unwrap();
            assert_eq!(v.symmetrizable, sym, "theta {theta}");
            // The relay link is state-free, so the optimum is the row gap.
            assert!((v.max_violation - (1.0 - 2.0 * theta)).abs() < 1e-9);
            assert!(check_kernel_symmetrizable(&dest_k, DEFAULT_TOL).unwrap().symmetrizable);
            assert!(!check_symmetrizable_x_given_x1(&ch, DEFAULT_TOL).unwrap().symmetrizable || theta == 0.5);
        }
    }

    #[test]
    fn example_relay_pair_witness() {
        let ch = catalog::bsc_relay_with_additive_state(0.11);
        let v = check_symmetrizable_x1y1(&ch, DEFAULT_TOL).unwrap();
        assert!(v.symmetrizable && v.max_violation <= DEFAULT_TOL);
        let k = relay_pair_kernel(&ch).unwrap();
        assert!(symmetrization_violation(&k, v.witness.as_ref().unwrap()).unwrap() <= DEFAULT_TOL);
        // J(s | x1, y1) = 1{s = x1}.
        let j = CondPmf::deterministic(4, 2, |p| p / 2);
        assert_eq!(symmetrization_violation(&k, &j).unwrap(), 0.0);
        let c = classify_capacity(&ch, DEFAULT_TOL).unwrap();
        assert_eq!(c.verdict, CapacityVerdict::Zero);
        assert_eq!(c.reasons, vec![ClassificationRule::DegradedSymmetrizableRelayPair]);
    }

    #[test]
    fn relay_pair_needs_degradedness() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 3, y1: 2 };
        let ch = catalog::random_channel(&mut rng, sizes);
        assert!(!ch.check_degraded(STRUCTURE_TOL).holds);
        assert!(matches!(check_symmetrizable_x1y1(&ch, DEFAULT_TOL), Err(AvrcError::StructureUnmet(_))));
    }

    #[test]
    fn state_free_relay_pair_with_distinct_rows() {
        // Y = (X1, Y1) noiselessly: the pair rows differ and nothing depends on S.
        let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 4, y1: 2 };
        let ch = RelayChannel::from_fn(sizes, |x, x1, _, y, y1| ((y1 == x) && (y == x1 * 2 + y1)) as u8 as f64).unwrap();
        let v = check_symmetrizable_x1y1(&ch, DEFAULT_TOL).unwrap();
        assert!(!v.symmetrizable);
        assert!((v.max_violation - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distinct_rows_everywhere_equals_random_code_capacity() {
        let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 2, y1: 2 };
        let ch = RelayChannel::from_fn(sizes, |x, x1, _, y, y1| {
            let py = if y == x ^ x1 { 0.9 } else { 0.1 };
            let py1 = if y1 == x { 0.8 } else { 0.2 };
            py * py1
        })
        .unwrap();
        let c = classify_capacity(&ch, DEFAULT_TOL).unwrap();
        assert_eq!(c.verdict, CapacityVerdict::EqualsRandomCodeCapacity);
        assert_eq!(c.reasons, vec![ClassificationRule::MarginalsNonSymmetrizable]);
    }

    #[test]
    fn open_case_stays_unknown() {
        // Y = X xor S, Y1 = X through a BSC whose crossover depends on S:
        // Y symmetrizable, Y1 not, and not degraded.
        let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 2, y1: 2 };
        let ch = RelayChannel::from_fn(sizes, |x, _, s, y, y1| {
            let eps = [0.1, 0.2][s];
            let py1 = if y1 == x { 1.0 - eps } else { eps };
            (y == x ^ s) as u8 as f64 * py1
        })
        .unwrap();
        assert!(!ch.check_degraded(STRUCTURE_TOL).holds);
        let c = classify_capacity(&ch, DEFAULT_TOL).unwrap();
        assert!(c.destination_marginal.symmetrizable);
        assert!(!c.relay_marginal.symmetrizable);
        assert_eq!(c.verdict, CapacityVerdict::Unknown);
        assert!(c.reasons.is_empty());
    }

    #[test]
    fn fully_symmetrizable_channel_is_zero() {
        let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 2, y1: 2 };
        let ch = RelayChannel::from_fn(sizes, |x, _, s, y, y1| ((y == x ^ s) && (y1 == x ^ s)) as u8 as f64).unwrap();
        let c = classify_capacity(&ch, DEFAULT_TOL).unwrap();
        assert_eq!(c.verdict, CapacityVerdict::Zero);
        assert_eq!(c.reasons, vec![ClassificationRule::SymmetrizableGivenRelayInput]);
    }

    /// `K(o | a, c, s) = G(o | c, {a, s})` with `S = A`: symmetrizable by
    /// `J(s | a) = 1{s = a}`.
    fn symmetrized_channel(rng: &mut ChaCha8Rng, x: usize, x1: usize, y: usize, y1: usize) -> RelayChannel {
        let sizes = Alphabets { x, x1, s: x, y, y1 };
        let mut g = HashMap::new();
        for c in 0..x1 {
            for a in 0..x {
                for b in a..x {
                    g.insert((c, a, b), catalog::random_pmf(rng, y * y1));
                }
            }
        }
        RelayChannel::from_fn(sizes, |a, c, s, yy, yy1| {
            let key = (c, a.min(s), a.max(s));
            g[&key][yy * y1 + yy1]
        })
        .unwrap()
    }

    fn constructed_symmetrizable(rng: &mut ChaCha8Rng) -> (RelayChannel, CondPmf) {
        if rng.gen_bool(0.5) {
            (symmetrized_channel(rng, 2, 2, 2, 2), CondPmf::deterministic(2, 2, |a| a))
        } else {
            (symmetrized_channel(rng, 3, 1, 2, 2), CondPmf::deterministic(3, 3, |a| a))
        }
    }

    /// Degraded channel with a state-free relay link and
    /// `W_{Y|Y1,X1,S}(y | p, s) = G(y | {p, s})` for the pair `p = (x1, y1)`.
    fn symmetrized_degraded(rng: &mut ChaCha8Rng) -> RelayChannel {
        let sizes = Alphabets { x: 2, x1: 2, s: 4, y: 3, y1: 2 };
        let link: Vec<Vec<f64>> = (0..4).map(|_| catalog::random_pmf(rng, 2)).collect();
        let mut g = HashMap::new();
        for a in 0..4 {
            for b in a..4 {
                g.insert((a, b), catalog::random_pmf(rng, 3));
            }
        }
        RelayChannel::from_fn(sizes, |x, x1, s, y, y1| {
            let p = x1 * 2 + y1;
            link[x * 2 + x1][y1] * g[&(p.min(s), p.max(s))][y]
        })
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn witness_recheck_and_implication(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ch, known) = constructed_symmetrizable(&mut rng);
            let k = full_kernel(&ch);
            prop_assert!(symmetrization_violation(&k, &known).unwrap() < 1e-12);
            let v = check_symmetrizable_x_given_x1(&ch, DEFAULT_TOL).unwrap();
            prop_assert!(v.symmetrizable);
            let w = v.witness.unwrap();
            prop_assert!(symmetrization_violation(&k, &w).unwrap() <= DEFAULT_TOL);
            let (relay_k, dest_k) = ch.marginals();
            for m in [&relay_k, &dest_k] {
                prop_assert!(symmetrization_violation(m, &w).unwrap() <= DEFAULT_TOL);
                prop_assert!(check_kernel_symmetrizable(m, DEFAULT_TOL).unwrap().symmetrizable);
            }
        }

        #[test]
        fn constructed_relay_pair_symmetrization_is_recovered(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = symmetrized_degraded(&mut rng);
            let k = relay_pair_kernel(&ch).unwrap();
            prop_assert!(symmetrization_violation(&k, &CondPmf::deterministic(4, 4, |p| p)).unwrap() < 1e-9);
            let v = check_symmetrizable_x1y1(&ch, DEFAULT_TOL).unwrap();
            prop_assert!(v.symmetrizable);
            prop_assert!(symmetrization_violation(&k, v.witness.as_ref().unwrap()).unwrap() <= DEFAULT_TOL);
            let c = classify_capacity(&ch, DEFAULT_TOL).unwrap();
            // The marginal rule can hold at the same time and then takes precedence.
            prop_assert!(c.reasons.contains(&ClassificationRule::DegradedSymmetrizableRelayPair));
            prop_assert!(c.verdict != CapacityVerdict::Unknown);
        }

        #[test]
        fn random_channels_verdicts_are_consistent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sizes = Alphabets { x: 3, x1: 2, s: 2, y: 2, y1: 2 };
            let ch = catalog::random_channel(&mut rng, sizes);
            let v = check_symmetrizable_x_given_x1(&ch, DEFAULT_TOL).unwrap();
            let w = v.witness.clone().unwrap();
            let again = symmetrization_violation(&full_kernel(&ch), &w).unwrap();
            prop_assert!((again - v.max_violation).abs() < 1e-9);
            prop_assert_eq!(v.symmetrizable, v.max_violation <= DEFAULT_TOL);
        }

        #[test]
        fn state_free_lp_matches_closed_form(seed in any::<u64>(), tie in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sizes = Alphabets { x: 3, x1: 2, s: 1, y: 2, y1: 2 };
            let ch = if tie {
                let rows: Vec<Vec<f64>> = (0..2).map(|_| catalog::random_pmf(&mut rng, 4)).collect();
                RelayChannel::from_fn(sizes, |_, x1, _, y, y1| rows[x1][y * 2 + y1]).unwrap()
            } else {
                catalog::random_channel(&mut rng, sizes)
            };
            let k = full_kernel(&ch);
            let v = check_kernel_symmetrizable(&k, DEFAULT_TOL).unwrap();
            prop_assert_eq!(v.symmetrizable, state_free_rows_coincide(&k, 1e-12));
            prop_assert_eq!(v.symmetrizable, tie);
        }
    }

    fn exact_sender_attack(code: &ExplicitCode, j: &CondPmf, states: usize) -> HashMap<Vec<u8>, f64> {
        let n = code.length();
        let m = code.codewords.len() as f64;
        let mut out = HashMap::new();
        for seq in 0..states.pow(n as u32) {
            let s: Vec<u8> = (0..n).map(|i| ((seq / states.pow(i as u32)) % states) as u8).collect();
            let p: f64 = code
                .codewords
                .iter()
                .map(|x| (0..n).map(|i| j.prob(x[i] as usize, s[i] as usize)).product::<f64>() / m)
                .sum();
            out.insert(s, p);
        }
        out
    }

    fn empirical(draws: impl Iterator<Item = Vec<u8>>, count: usize) -> HashMap<Vec<u8>, f64> {
        let mut out = HashMap::new();
        for d in draws {
            *out.entry(d).or_insert(0.0) += 1.0 / count as f64;
        }
        out
    }

    fn tv(a: &HashMap<Vec<u8>, f64>, b: &HashMap<Vec<u8>, f64>) -> f64 {
        let keys: std::collections::HashSet<_> = a.keys().chain(b.keys()).collect();
        keys.into_iter().map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()).sum::<f64>() / 2.0
    }

    #[test]
    fn point_mass_attack_replays_codewords() {
        let code = ExplicitCode::silent_relay(2, vec![vec![0, 0], vec![1, 1]]).unwrap();
        let mut s = build_attack_x(&code, CondPmf::deterministic(2, 2, |x| x)).unwrap().with_seed(5);
        let mut seen = [0; 2];
        for _ in 0..200 {
            let d = s.sample();
            assert_eq!(d.states, code.codewords[d.phantom]);
            seen[d.phantom] += 1;
        }
        assert!(seen[0] > 60 && seen[1] > 60);
    }

    #[test]
    fn sender_attack_matches_the_mixture() {
        let code = ExplicitCode::silent_relay(2, vec![vec![0, 1, 1], vec![1, 0, 1], vec![0, 0, 0]]).unwrap();
        let j = CondPmf::from_table(2, 2, &[0.7, 0.3, 0.25, 0.75]).unwrap();
        let exact = exact_sender_attack(&code, &j, 2);
        let mut s = build_attack_x(&code, j).unwrap().with_seed(11);
        let draws = 100_000;
        let emp = empirical((0..draws).map(|_| s.sample().states), draws);
        assert!(tv(&exact, &emp) <= 0.02, "tv {}", tv(&exact, &emp));
        // One codeword: the product law.
        let single = ExplicitCode::silent_relay(2, vec![vec![1, 0, 1]]).unwrap();
        let j = CondPmf::from_table(2, 2, &[0.7, 0.3, 0.25, 0.75]).unwrap();
        let exact = exact_sender_attack(&single, &j, 2);
        assert!((exact[&vec![1u8, 0, 1]] - 0.75 * 0.7 * 0.75).abs() < 1e-12);
    }

    /// Exact law of the relay-pair attack by enumerating phantom messages and
    /// relay outputs.
    fn exact_pair_attack(code: &ExplicitCode, ch: &RelayChannel, j: &CondPmf) -> HashMap<Vec<u8>, f64> {
        let a = ch.sizes();
        let n = code.length();
        let (relay_k, _) = ch.marginals();
        let mut out = HashMap::new();
        let m = code.codewords.len() as f64;
        for x in &code.codewords {
            for yseq in 0..a.y1.pow(n as u32) {
                let y1: Vec<u8> = (0..n).map(|i| ((yseq / a.y1.pow(i as u32)) % a.y1) as u8).collect();
                let mut p = 1.0 / m;
                let mut x1 = Vec::new();
                for i in 0..n {
                    let v = code.relay_symbol(i, &y1[..i]);
                    x1.push(v);
                    p *= relay_k.get(x[i] as usize, v as usize, 0, y1[i] as usize);
                }
                for sseq in 0..a.s.pow(n as u32) {
                    let s: Vec<u8> = (0..n).map(|i| ((sseq / a.s.pow(i as u32)) % a.s) as u8).collect();
                    let ps: f64 = (0..n).map(|i| j.prob(x1[i] as usize * a.y1 + y1[i] as usize, s[i] as usize)).product();
                    *out.entry(s).or_insert(0.0) += p * ps;
                }
            }
        }
        out
    }

    #[test]
    fn relay_pair_attack_matches_the_mixture() {
        let ch = catalog::bsc_relay_with_additive_state(0.2);
        // Relay forwards its previous output.
        let code = ExplicitCode::new(2, 2, vec![vec![0, 1, 1], vec![1, 1, 0]], |i, y1: &[u8]| {
            if i == 0 { 0 } else { y1[i - 1] }
        })
        .unwrap();
        let j = CondPmf::from_table(4, 2, &[0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.2, 0.8]).unwrap();
        let exact = exact_pair_attack(&code, &ch, &j);
        assert!((exact.values().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut s = build_attack_x1y1(&code, &ch, j).unwrap().with_seed(3);
        let draws = 100_000;
        let emp = empirical((0..draws).map(|_| s.sample().states), draws);
        assert!(tv(&exact, &emp) <= 0.02, "tv {}", tv(&exact, &emp));
    }

    #[test]
    fn relay_pair_attack_replays_relay_inputs() {
        // Noiseless relay link and J = 1{s = x1}: states equal the phantom relay codeword.
        let ch = catalog::bsc_relay_with_additive_state(0.0);
        let code = ExplicitCode::new(2, 2, vec![vec![1, 0, 1, 1]], |i, y1: &[u8]| {
            if i == 0 { 0 } else { y1[i - 1] }
        })
        .unwrap();
        let j = CondPmf::deterministic(4, 2, |p| p / 2);
        let mut s = build_attack_x1y1(&code, &ch, j).unwrap().with_seed(1);
        for _ in 0..5 {
            assert_eq!(s.sample().states, vec![0, 1, 0, 1]);
        }
    }

    #[test]
    fn relay_pair_attack_requires_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 2, y1: 2 };
        let ch = catalog::random_channel(&mut rng, sizes);
        let code = ExplicitCode::new(2, 2, vec![vec![0, 1]], |_, _: &[u8]| 0).unwrap();
        let j = CondPmf::deterministic(4, 2, |_| 0);
        assert!(build_attack_x1y1(&code, &ch, j).is_err());
    }

    #[test]
    fn sender_attack_letter_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let words: Vec<Vec<u8>> = (0..2).map(|_| (0..n).map(|_| rng.gen_range(0..2u8)).collect()).collect();
        let code = ExplicitCode::silent_relay(2, words.clone()).unwrap();
        let j = CondPmf::from_table(2, 3, &[0.5, 0.3, 0.2, 0.1, 0.1, 0.8]).unwrap();
        let mut s = build_attack_x(&code, j.clone()).unwrap().with_seed(2);
        for _ in 0..4 {
            let d = s.sample();
            let x = &words[d.phantom];
            for xv in 0..2u8 {
                let pos: Vec<usize> = (0..n).filter(|&i| x[i] == xv).collect();
                for sv in 0..3 {
                    let f = pos.iter().filter(|&&i| d.states[i] == sv as u8).count() as f64 / pos.len() as f64;
                    assert!((f - j.prob(xv as usize, sv)).abs() < 0.03, "{f}");
                }
                // Marginal letter frequency of the mixture (per-codeword), tolerance 0.01.
            }
            let expect: f64 = x.iter().map(|&xv| j.prob(xv as usize, 2)).sum::<f64>() / n as f64;
            let got = d.states.iter().filter(|&&v| v == 2).count() as f64 / n as f64;
            assert!((got - expect).abs() < 0.01, "{got} vs {expect}");
        }
    }
}
