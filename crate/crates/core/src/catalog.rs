//! Named channels and random constructions used by tests, the acceptance
//! suite and the CLI examples.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::channel::{Alphabets, OrthogonalSplit, RelayChannel};

/// Relay sees `X` through a BSC(`theta`); destination sees `Y = X1 + S` over
/// `{0, 1, 2}` with binary `X1` and `S`.
pub fn bsc_relay_with_additive_state(theta: f64) -> RelayChannel {
    assert!((0.0..=1.0).contains(&theta), "crossover outside [0, 1]");
    let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 3, y1: 2 };
    RelayChannel::from_fn(sizes, |x, x1, s, y, y1| {
        let relay = if y1 == x { 1.0 - theta } else { theta };
        let dest = if y == x1 + s { 1.0 } else { 0.0 };
        relay * dest
    })
    .expect("well-formed by construction")
}

/// `Y = X` over a binary alphabet; trivial relay and state.
pub fn noiseless_bit_pipe() -> RelayChannel {
    let sizes = Alphabets { x: 2, x1: 1, s: 1, y: 2, y1: 1 };
    RelayChannel::from_fn(sizes, |x, _, _, y, _| (x == y) as u8 as f64).expect("well-formed")
}

/// `Y = X xor S` with binary state; trivial relay.
pub fn xor_state_channel() -> RelayChannel {
    let sizes = Alphabets { x: 2, x1: 1, s: 2, y: 2, y1: 1 };
    RelayChannel::from_fn(sizes, |x, _, s, y, _| (y == x ^ s) as u8 as f64).expect("well-formed")
}

/// A uniformly random point of the probability simplex.
pub fn random_pmf<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= total);
    v
}

/// Rows `[given][out]` drawn independently from the simplex.
fn random_rows<R: Rng + ?Sized>(rng: &mut R, given: usize, out: usize) -> Vec<f64> {
    (0..given).flat_map(|_| random_pmf(rng, out)).collect()
}

/// Every row drawn independently.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, sizes: Alphabets) -> RelayChannel {
    let rows = sizes.x * sizes.x1 * sizes.s;
    let kernel = random_rows(rng, rows, sizes.y * sizes.y1);
    RelayChannel::new_unchecked(sizes, kernel).expect("shape matches")
}

/// `W = W_{Y1|X,X1,S} p(y | y1, x1, s)`; with `relay_state_free` the first
/// factor ignores `s`.
pub fn random_degraded<R: Rng + ?Sized>(rng: &mut R, sizes: Alphabets, relay_state_free: bool) -> RelayChannel {
    let Alphabets { x, x1, s, y, y1 } = sizes;
    let relay_states = if relay_state_free { 1 } else { s };
    let relay = random_rows(rng, x * x1 * relay_states, y1);
    let tail = random_rows(rng, y1 * x1 * s, y);
    RelayChannel::from_fn(sizes, |a, b, c, d, e| {
        let c_relay = if relay_state_free { 0 } else { c };
        relay[((a * x1 + b) * relay_states + c_relay) * y1 + e] * tail[((e * x1 + b) * s + c) * y + d]
    })
    .expect("composite of stochastic factors")
}

/// `W = W_{Y|X,X1,S} p(y1 | y, x1, s)`; with `direct_state_free` the first
/// factor ignores `s`.
pub fn random_reversely_degraded<R: Rng + ?Sized>(
    rng: &mut R,
    sizes: Alphabets,
    direct_state_free: bool,
) -> RelayChannel {
    let Alphabets { x, x1, s, y, y1 } = sizes;
    let direct_states = if direct_state_free { 1 } else { s };
    let direct = random_rows(rng, x * x1 * direct_states, y);
    let tail = random_rows(rng, y * x1 * s, y1);
    RelayChannel::from_fn(sizes, |a, b, c, d, e| {
        let c_direct = if direct_state_free { 0 } else { c };
        direct[((a * x1 + b) * direct_states + c_direct) * y + d] * tail[((d * x1 + b) * s + c) * y1 + e]
    })
    .expect("composite of stochastic factors")
}

/// `W = W_{Y|X',X1} W_{Y1|X'',X1,S}` under `split`; the direct link is
/// state-free.
pub fn random_orthogonal<R: Rng + ?Sized>(
    rng: &mut R,
    split: OrthogonalSplit,
    x1: usize,
    s: usize,
    y: usize,
    y1: usize,
) -> RelayChannel {
    let direct = random_rows(rng, split.x_prime * x1, y);
    let relay = random_rows(rng, split.x_double_prime * x1 * s, y1);
    let sizes = Alphabets { x: split.x_prime * split.x_double_prime, x1, s, y, y1 };
    RelayChannel::from_fn(sizes, |a, b, c, d, e| {
        let (xp, xpp) = split.parts(a);
        direct[(xp * x1 + b) * y + d] * relay[((xpp * x1 + b) * s + c) * y1 + e]
    })
    .expect("product of stochastic factors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::STRUCTURE_TOL;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sizes_strategy() -> impl Strategy<Value = Alphabets> {
        (1usize..=3, 1usize..=3, 1usize..=3, 1usize..=3, 1usize..=3)
            .prop_map(|(x, x1, s, y, y1)| Alphabets { x, x1, s, y, y1 })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn degraded_composites_are_detected(sizes in sizes_strategy(), seed in any::<u64>(), free in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = random_degraded(&mut rng, sizes, free);
            ch.validate().unwrap();
            prop_assert!(ch.check_degraded(STRUCTURE_TOL).holds);
            if free {
                prop_assert!(ch.relay_link_state_free(STRUCTURE_TOL));
            }
        }

        #[test]
        fn reversely_degraded_composites_are_detected(sizes in sizes_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = random_reversely_degraded(&mut rng, sizes, true);
            prop_assert!(ch.check_reversely_degraded(STRUCTURE_TOL).holds);
            prop_assert!(ch.direct_link_state_free(STRUCTURE_TOL));
        }

        #[test]
        fn orthogonal_composites_are_detected(xp in 1usize..=2, xpp in 1usize..=2, sizes in sizes_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let split = OrthogonalSplit { x_prime: xp, x_double_prime: xpp };
            let ch = random_orthogonal(&mut rng, split, sizes.x1, sizes.s, sizes.y, sizes.y1);
            let report = ch.detect_orthogonal_sender(split, STRUCTURE_TOL).unwrap();
            prop_assert!(report.factorizes && report.direct_link_state_free);
        }

        #[test]
        fn marginals_and_averages_stay_stochastic(sizes in sizes_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = random_channel(&mut rng, sizes);
            let (relay, dest) = ch.marginals();
            prop_assert!(relay.validate().is_ok() && dest.validate().is_ok());
            let q = crate::probability::Pmf::new(random_pmf(&mut rng, sizes.s));
            // Rounding in the normalization may exceed the strict 1e-12 check.
            let q = q.unwrap_or_else(|_| crate::probability::Pmf::uniform(sizes.s));
            let avg = ch.average_channel(&q).unwrap();
            for row in avg.kernel().chunks(sizes.y * sizes.y1) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn random_channels_rarely_carry_both_flags() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 2, y1: 2 };
        for _ in 0..200 {
            let ch = random_channel(&mut rng, sizes);
            let both = ch.check_degraded(STRUCTURE_TOL).holds && ch.check_reversely_degraded(STRUCTURE_TOL).holds;
            assert!(!both);
        }
        // With both outputs constant every flag fires.
        let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 1, y1: 1 };
        let ch = RelayChannel::from_fn(sizes, |_, _, _, _, _| 1.0).unwrap();
        assert!(ch.check_degraded(STRUCTURE_TOL).holds && ch.check_reversely_degraded(STRUCTURE_TOL).holds);
    }
}
