//! Block Markov partial decode-forward codes over a state-dependent relay
//! channel: random codebook generation, relay forward decoding, backward
//! decoding at the destination, per-block permutation randomization and
//! Monte Carlo error estimation under several jammers.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{RelayChannel, StateUncertainty};
use crate::error::{AvrcError, Result};
use crate::information::{Axis, JointDist};
use crate::probability::{counts_are_typical, state_type_set, CondPmf, Pmf, TypicalityFlavor};
use crate::symmetrizability::{AttackSampler, RelayCode};

/// Default cap on stored codebook symbols.
pub const DEFAULT_MEMORY_CAP: u64 = 1 << 24;
/// Environment variable overriding [`DEFAULT_MEMORY_CAP`].
pub const MEMORY_CAP_ENV: &str = "AVRC_MEM_CAP";
/// Largest state-type set the decoders will scan.
pub const MAX_STATE_TYPES: usize = 200_000;

/// 97.5% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    /// Block length.
    pub n: usize,
    /// Number of blocks `B`.
    pub blocks: usize,
    /// `R'` in bits per channel use; `n R'` must be an integer.
    pub rate_prime: f64,
    /// `R''` in bits per channel use; `n R''` must be an integer.
    pub rate_double_prime: f64,
    pub delta: f64,
    pub flavor: TypicalityFlavor,
    pub seed: u64,
    /// Overrides the codebook symbol cap (otherwise the environment or
    /// [`DEFAULT_MEMORY_CAP`]).
    pub memory_cap: Option<u64>,
}

impl Default for CodeParams {
    fn default() -> Self {
        Self {
            n: 100,
            blocks: 4,
            rate_prime: 0.0,
            rate_double_prime: 0.0,
            delta: 0.05,
            flavor: TypicalityFlavor::Robust,
            seed: 0,
            memory_cap: None,
        }
    }
}

fn memory_cap(params: &CodeParams) -> u64 {
    params
        .memory_cap
        .or_else(|| std::env::var(MEMORY_CAP_ENV).ok().and_then(|v| v.parse().ok()))
        .unwrap_or(DEFAULT_MEMORY_CAP)
}

/// `n R` as a whole number of bits.
fn quantized_bits(n: usize, rate: f64, name: &str) -> Result<u32> {
    let bits = n as f64 * rate;
    if !(rate >= 0.0) || (bits - bits.round()).abs() > 1e-9 {
        return Err(AvrcError::InvalidArgument(format!(
            "{name} = {rate} is not a multiple of 1/n with n = {n}"
        )));
    }
    let bits = bits.round();
    if bits > 62.0 {
        return Err(AvrcError::ResourceCap(format!("{name} asks for 2^{bits} messages")));
    }
    Ok(bits as u32)
}

/// Codebooks of one block, flat in `[prev][cur][pp][n]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBook {
    pub prev: usize,
    pub cur: usize,
    pub pp: usize,
    /// `x1(m'_{b-1})`.
    pub x1: Vec<u8>,
    /// `u(m'_b | m'_{b-1})`.
    pub u: Vec<u8>,
    /// `x(m'_b, m''_b | m'_{b-1})`.
    pub x: Vec<u8>,
}

/// Message parts `m'_1..m'_{B-1}` and `m''_1..m''_{B-1}`, zero-based (index
/// 0 is the fixed message `1`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MessageTuple {
    pub prime: Vec<usize>,
    pub double_prime: Vec<usize>,
}

/// Per-`q` joint tables used by the three typicality tests.
#[derive(Debug, Clone)]
struct Targets {
    /// `P(u, x1, y1)`.
    relay: Vec<Vec<f64>>,
    /// `P(u, x1, y)`.
    backward: Vec<Vec<f64>>,
    /// `P(u, x, x1, y)`.
    second: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BlockMarkovCode {
    params: CodeParams,
    u_size: usize,
    x_size: usize,
    x1_size: usize,
    y_size: usize,
    y1_size: usize,
    m_prime: usize,
    m_double_prime: usize,
    law: JointDist,
    books: Vec<BlockBook>,
    state_types: Vec<Pmf>,
    targets: Arc<Targets>,
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = probs.iter().map(|p| {
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

/// Conditional cumulative tables of `law` on axis `target` given the others
/// in `given` (positions), for each assignment of `given`.
fn conditional_cdf(law: &JointDist, given: &[usize], target: usize) -> Vec<Vec<f64>> {
    let mut keep = given.to_vec();
    keep.push(target);
    let m = law.marginal(&keep);
    let k = law.sizes()[target];
    m.chunks(k)
        .map(|row| {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                cumulative(&row.iter().map(|p| p / total).collect::<Vec<_>>())
            } else {
                cumulative(&vec![1.0 / k as f64; k])
            }
        })
        .collect()
}

fn law_layout(channel: &RelayChannel, law: &JointDist) -> Result<usize> {
    let a = channel.sizes();
    if law.axes() != [Axis::U, Axis::X, Axis::X1] || law.sizes()[1..] != [a.x, a.x1] {
        return Err(AvrcError::DimensionMismatch(
            "code law must be over axes (U, X, X1) matching the channel inputs".into(),
        ));
    }
    if law.sizes()[0] > 256 {
        return Err(AvrcError::InvalidArgument("U alphabet exceeds 256 letters".into()));
    }
    Ok(law.sizes()[0])
}

fn targets(channel: &RelayChannel, law: &JointDist, types: &[Pmf]) -> Targets {
    let a = channel.sizes();
    let u_size = law.sizes()[0];
    let (relay_k, dest_k) = channel.marginals();
    let p = law.probs();
    let mut out = Targets { relay: Vec::new(), backward: Vec::new(), second: Vec::new() };
    for q in types {
        let mut relay = vec![0.0; u_size * a.x1 * a.y1];
        let mut backward = vec![0.0; u_size * a.x1 * a.y];
        let mut second = vec![0.0; u_size * a.x * a.x1 * a.y];
        for u in 0..u_size {
            for x in 0..a.x {
                for x1 in 0..a.x1 {
                    let w = p[(u * a.x + x) * a.x1 + x1];
                    if w == 0.0 {
                        continue;
                    }
                    for s in 0..a.s {
                        let ws = w * q[s];
                        if ws == 0.0 {
                            continue;
                        }
                        for y1 in 0..a.y1 {
                            relay[(u * a.x1 + x1) * a.y1 + y1] += ws * relay_k.get(x, x1, s, y1);
                        }
                        for y in 0..a.y {
                            let v = ws * dest_k.get(x, x1, s, y);
                            backward[(u * a.x1 + x1) * a.y + y] += v;
                            second[((u * a.x + x) * a.x1 + x1) * a.y + y] += v;
                        }
                    }
                }
            }
        }
        out.relay.push(relay);
        out.backward.push(backward);
        out.second.push(second);
    }
    out
}

/// Draws the `B` independent codebooks of a block Markov code.
pub fn build_code(
    channel: &RelayChannel,
    law: &JointDist,
    q_set: &StateUncertainty,
    params: &CodeParams,
) -> Result<BlockMarkovCode> {
    channel.validate()?;
    let u_size = law_layout(channel, law)?;
    let (n, b_count) = (params.n, params.blocks);
    if n == 0 || b_count == 0 {
        return Err(AvrcError::InvalidArgument("n and B must be positive".into()));
    }
    let k1 = quantized_bits(n, params.rate_prime, "R'")?;
    let k2 = quantized_bits(n, params.rate_double_prime, "R''")?;
    let (m1, m2) = (1u64 << k1, 1u64 << k2);
    // Symbols stored: per block x1 (prev), u (prev cur), x (prev cur pp).
    let mut symbols: u128 = 0;
    for b in 1..=b_count {
        let prev = if b == 1 { 1 } else { m1 as u128 };
        let (cur, pp) = if b < b_count { (m1 as u128, m2 as u128) } else { (1, 1) };
        symbols += n as u128 * prev * (1 + cur + cur * pp);
    }
    let cap = memory_cap(params);
    if symbols > cap as u128 {
        return Err(AvrcError::ResourceCap(format!(
            "codebooks need {symbols} symbols, cap is {cap} (set {MEMORY_CAP_ENV} to raise it)"
        )));
    }
    let a = channel.sizes();
    let x1_cdf = conditional_cdf(law, &[], 2);
    let u_cdf = conditional_cdf(law, &[2], 0);
    let x_cdf = conditional_cdf(law, &[0, 2], 1);
    let mut books = Vec::with_capacity(b_count);
    for b in 1..=b_count {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(b as u64);
        let prev = if b == 1 { 1 } else { m1 as usize };
        let (cur, pp) = if b < b_count { (m1 as usize, m2 as usize) } else { (1, 1) };
        let x1: Vec<u8> = (0..prev * n).map(|_| draw(&x1_cdf[0], &mut rng)).collect();
        let mut u = Vec::with_capacity(prev * cur * n);
        for m in 0..prev {
            let x1w = &x1[m * n..(m + 1) * n];
            for _ in 0..cur {
                u.extend(x1w.iter().map(|&v| draw(&u_cdf[v as usize], &mut rng)));
            }
        }
        let mut x = Vec::with_capacity(prev * cur * pp * n);
        for m in 0..prev {
            let x1w = &x1[m * n..(m + 1) * n];
            for c in 0..cur {
                let uw = &u[(m * cur + c) * n..(m * cur + c + 1) * n];
                for _ in 0..pp {
                    x.extend(
                        uw.iter()
                            .zip(x1w)
                            .map(|(&uu, &vv)| draw(&x_cdf[uu as usize * a.x1 + vv as usize], &mut rng)),
                    );
                }
            }
        }
        books.push(BlockBook { prev, cur, pp, x1, u, x });
    }
    BlockMarkovCode::from_books(channel, law, q_set, params, books, u_size, m1 as usize, m2 as usize)
}

impl BlockMarkovCode {
    #[allow(clippy::too_many_arguments)]
    fn from_books(
        channel: &RelayChannel,
        law: &JointDist,
        q_set: &StateUncertainty,
        params: &CodeParams,
        books: Vec<BlockBook>,
        u_size: usize,
        m_prime: usize,
        m_double_prime: usize,
    ) -> Result<Self> {
        let a = channel.sizes();
        if q_set.num_states() != a.s {
            return Err(AvrcError::DimensionMismatch("state set does not match the channel".into()));
        }
        if !(params.delta > 0.0) {
            return Err(AvrcError::InvalidArgument("delta must be positive".into()));
        }
        let types = state_type_set(q_set, params.n, params.delta)?;
        if types.len() > MAX_STATE_TYPES {
            return Err(AvrcError::ResourceCap(format!("{} state types exceed the scan limit", types.len())));
        }
        let targets = Arc::new(targets(channel, law, &types));
        Ok(Self {
            params: params.clone(),
            u_size,
            x_size: a.x,
            x1_size: a.x1,
            y_size: a.y,
            y1_size: a.y1,
            m_prime,
            m_double_prime,
            law: law.clone(),
            books,
            state_types: types,
            targets,
        })
    }

    /// Builds a code from explicit codebooks, e.g. for engineered tests.
    /// Every block must hold `prev/cur/pp` counts consistent with the
    /// boundary conventions and the message counts.
    pub fn from_codebooks(
        channel: &RelayChannel,
        law: &JointDist,
        q_set: &StateUncertainty,
        params: &CodeParams,
        books: Vec<BlockBook>,
    ) -> Result<Self> {
        let u_size = law_layout(channel, law)?;
        let b_count = books.len();
        if b_count == 0 || b_count != params.blocks {
            return Err(AvrcError::InvalidArgument("one codebook per block required".into()));
        }
        let m1 = if b_count > 1 { books[0].cur } else { 1 };
        let m2 = if b_count > 1 { books[0].pp } else { 1 };
        let n = params.n;
        let a = channel.sizes();
        for (i, bk) in books.iter().enumerate() {
            let b = i + 1;
            let prev = if b == 1 { 1 } else { m1 };
            let (cur, pp) = if b < b_count { (m1, m2) } else { (1, 1) };
            if (bk.prev, bk.cur, bk.pp) != (prev, cur, pp)
                || bk.x1.len() != prev * n
                || bk.u.len() != prev * cur * n
                || bk.x.len() != prev * cur * pp * n
            {
                return Err(AvrcError::DimensionMismatch(format!("codebook of block {b} has the wrong shape")));
            }
            if bk.x1.iter().any(|&v| v as usize >= a.x1)
                || bk.u.iter().any(|&v| v as usize >= u_size)
                || bk.x.iter().any(|&v| v as usize >= a.x)
            {
                return Err(AvrcError::InvalidArgument(format!("codebook of block {b} has out-of-range symbols")));
            }
        }
        Self::from_books(channel, law, q_set, params, books, u_size, m1, m2)
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn blocks(&self) -> usize {
        self.params.blocks
    }

    pub fn message_counts(&self) -> (usize, usize) {
        (self.m_prime, self.m_double_prime)
    }

    pub fn law(&self) -> &JointDist {
        &self.law
    }

    pub fn book(&self, b: usize) -> &BlockBook {
        &self.books[b - 1]
    }

    pub fn state_types(&self) -> &[Pmf] {
        &self.state_types
    }

    fn slice(v: &[u8], idx: usize, n: usize) -> &[u8] {
        &v[idx * n..(idx + 1) * n]
    }

    fn x1_word(&self, b: usize, prev: usize) -> &[u8] {
        Self::slice(&self.books[b - 1].x1, prev, self.params.n)
    }

    fn u_word(&self, b: usize, prev: usize, cur: usize) -> &[u8] {
        let bk = &self.books[b - 1];
        Self::slice(&bk.u, prev * bk.cur + cur, self.params.n)
    }

    fn x_word(&self, b: usize, prev: usize, cur: usize, pp: usize) -> &[u8] {
        let bk = &self.books[b - 1];
        Self::slice(&bk.x, (prev * bk.cur + cur) * bk.pp + pp, self.params.n)
    }

    fn check_messages(&self, m: &MessageTuple) -> Result<()> {
        let k = self.params.blocks - 1;
        if m.prime.len() != k || m.double_prime.len() != k {
            return Err(AvrcError::DimensionMismatch(format!("expected {k} message parts of each kind")));
        }
        if m.prime.iter().any(|&v| v >= self.m_prime) || m.double_prime.iter().any(|&v| v >= self.m_double_prime) {
            return Err(AvrcError::InvalidArgument("message index out of range".into()));
        }
        Ok(())
    }

    /// Message parts active in block `b`: `(m'_{b-1}, m'_b, m''_b)` with the
    /// boundary parts fixed to index 0.
    fn parts(&self, b: usize, m: &MessageTuple) -> (usize, usize, usize) {
        let prev = if b == 1 { 0 } else { m.prime[b - 2] };
        let (cur, pp) = if b == self.params.blocks { (0, 0) } else { (m.prime[b - 1], m.double_prime[b - 1]) };
        (prev, cur, pp)
    }

    pub fn random_messages(&self, rng: &mut dyn RngCore) -> MessageTuple {
        let k = self.params.blocks - 1;
        MessageTuple {
            prime: (0..k).map(|_| rng.gen_range(0..self.m_prime)).collect(),
            double_prime: (0..k).map(|_| rng.gen_range(0..self.m_double_prime)).collect(),
        }
    }

    fn is_typical(&self, counts: &[u32], table: &[f64]) -> bool {
        counts_are_typical(counts, self.params.n, table, self.params.delta, self.params.flavor)
    }

    fn typical_for_some_q(&self, counts: &[u32], tables: &[Vec<f64>]) -> bool {
        tables.iter().any(|t| self.is_typical(counts, t))
    }
}

/// Encoder and relay inputs of block `b` (1-based): `x(m'_b, m''_b | m'_{b-1})`
/// and `x1(relay_estimate_prev)`.
pub fn transmit_block(
    code: &BlockMarkovCode,
    b: usize,
    messages: &MessageTuple,
    relay_estimate_prev: usize,
) -> Result<(Vec<u8>, Vec<u8>)> {
    if b == 0 || b > code.params.blocks {
        return Err(AvrcError::InvalidArgument(format!("block {b} outside 1..={}", code.params.blocks)));
    }
    code.check_messages(messages)?;
    let prev_count = code.books[b - 1].prev;
    if relay_estimate_prev >= prev_count {
        return Err(AvrcError::InvalidArgument(format!(
            "relay estimate {relay_estimate_prev} outside 0..{prev_count}"
        )));
    }
    let (prev, cur, pp) = code.parts(b, messages);
    Ok((code.x_word(b, prev, cur, pp).to_vec(), code.x1_word(b, relay_estimate_prev).to_vec()))
}

/// Relay estimate of `m'_b` from its block-`b` output; index 0 when no
/// candidate or several candidates pass.
pub fn relay_decode(code: &BlockMarkovCode, b: usize, y1: &[u8], prev_estimate: usize) -> usize {
    assert!(b >= 1 && b <= code.params.blocks, "block outside the code");
    let n = code.params.n;
    assert_eq!(y1.len(), n, "relay output has the wrong length");
    let bk = &code.books[b - 1];
    let x1w = code.x1_word(b, prev_estimate);
    let size = code.u_size * code.x1_size * code.y1_size;
    let mut found = None;
    let mut counts = vec![0u32; size];
    for m in 0..bk.cur {
        counts.iter_mut().for_each(|c| *c = 0);
        let uw = code.u_word(b, prev_estimate, m);
        for i in 0..n {
            counts[(uw[i] as usize * code.x1_size + x1w[i] as usize) * code.y1_size + y1[i] as usize] += 1;
        }
        if code.typical_for_some_q(&counts, &code.targets.relay) {
            if found.is_some() {
                return 0;
            }
            found = Some(m);
        }
    }
    found.unwrap_or(0)
}

/// Outcome of backward decoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    pub messages: MessageTuple,
    /// Per block `b = 1..B-1`: decoding of `m'_b` failed (none or several).
    pub prime_errors: Vec<bool>,
    /// Per block `b = 1..B-1`: decoding of `m''_b` failed.
    pub double_prime_errors: Vec<bool>,
}

/// Backward decoding from the destination outputs of all `B` blocks.
pub fn backward_decode(code: &BlockMarkovCode, y_blocks: &[Vec<u8>]) -> Result<DecodeOutcome> {
    let b_count = code.params.blocks;
    let n = code.params.n;
    if y_blocks.len() != b_count || y_blocks.iter().any(|y| y.len() != n) {
        return Err(AvrcError::DimensionMismatch(format!("expected {b_count} blocks of length {n}")));
    }
    let k = b_count - 1;
    let mut prime = vec![0usize; k];
    let mut prime_errors = vec![false; k];
    // hat m'_B is fixed.
    let mut next = 0usize;
    let size1 = code.u_size * code.x1_size * code.y_size;
    let mut counts = vec![0u32; size1];
    for b in (1..=k).rev() {
        let y = &y_blocks[b];
        let mut found = None;
        let mut ambiguous = false;
        for m in 0..code.m_prime {
            counts.iter_mut().for_each(|c| *c = 0);
            let uw = code.u_word(b + 1, m, next);
            let x1w = code.x1_word(b + 1, m);
            for i in 0..n {
                counts[(uw[i] as usize * code.x1_size + x1w[i] as usize) * code.y_size + y[i] as usize] += 1;
            }
            if code.typical_for_some_q(&counts, &code.targets.backward) {
                if found.is_some() {
                    ambiguous = true;
                    break;
                }
                found = Some(m);
            }
        }
        match (found, ambiguous) {
            (Some(m), false) => prime[b - 1] = m,
            _ => {
                prime_errors[b - 1] = true;
                prime[b - 1] = 0;
            }
        }
        next = prime[b - 1];
    }
    let mut double_prime = vec![0usize; k];
    let mut double_prime_errors = vec![false; k];
    let size2 = code.u_size * code.x_size * code.x1_size * code.y_size;
    let mut counts = vec![0u32; size2];
    for b in (1..=k).rev() {
        let y = &y_blocks[b - 1];
        let prev = if b == 1 { 0 } else { prime[b - 2] };
        let cur = prime[b - 1];
        let uw = code.u_word(b, prev, cur);
        let x1w = code.x1_word(b, prev);
        let mut found = None;
        let mut ambiguous = false;
        for m in 0..code.m_double_prime {
            counts.iter_mut().for_each(|c| *c = 0);
            let xw = code.x_word(b, prev, cur, m);
            for i in 0..n {
                let idx = ((uw[i] as usize * code.x_size + xw[i] as usize) * code.x1_size + x1w[i] as usize)
                    * code.y_size
                    + y[i] as usize;
                counts[idx] += 1;
            }
            if code.typical_for_some_q(&counts, &code.targets.second) {
                if found.is_some() {
                    ambiguous = true;
                    break;
                }
                found = Some(m);
            }
        }
        match (found, ambiguous) {
            (Some(m), false) => double_prime[b - 1] = m,
            _ => double_prime_errors[b - 1] = true,
        }
    }
    Ok(DecodeOutcome { messages: MessageTuple { prime, double_prime }, prime_errors, double_prime_errors })
}

/// `B` permutations of `0..n`, one per block; `(pi s)_i = s_{pi(i)}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationTuple {
    perms: Vec<Vec<u32>>,
}

impl PermutationTuple {
    pub fn new(perms: Vec<Vec<u32>>) -> Result<Self> {
        for p in &perms {
            let mut seen = vec![false; p.len()];
            for &i in p {
                if i as usize >= p.len() || std::mem::replace(&mut seen[i as usize], true) {
                    return Err(AvrcError::InvalidArgument("not a permutation".into()));
                }
            }
        }
        Ok(Self { perms })
    }

    pub fn identity(n: usize, blocks: usize) -> Self {
        Self { perms: vec![(0..n as u32).collect(); blocks] }
    }

    pub fn random(n: usize, blocks: usize, rng: &mut dyn RngCore) -> Self {
        use rand::seq::SliceRandom;
        let perms = (0..blocks)
            .map(|_| {
                let mut p: Vec<u32> = (0..n as u32).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        Self { perms }
    }

    pub fn block(&self, b: usize) -> &[u32] {
        &self.perms[b - 1]
    }

    /// `pi_b(s)`.
    pub fn apply(&self, b: usize, s: &[u8]) -> Vec<u8> {
        self.perms[b - 1].iter().map(|&i| s[i as usize]).collect()
    }

    /// `pi_b^{-1}(s)`.
    pub fn apply_inverse(&self, b: usize, s: &[u8]) -> Vec<u8> {
        let mut out = vec![0u8; s.len()];
        for (i, &p) in self.perms[b - 1].iter().enumerate() {
            out[p as usize] = s[i];
        }
        out
    }
}

/// A code used with a fixed permutation tuple: transmitters send
/// `pi_b^{-1}` of each codeword and receivers apply `pi_b` to each received
/// block before decoding.
#[derive(Debug, Clone)]
pub struct RandomizedCode<'a> {
    pub code: &'a BlockMarkovCode,
    pub perms: PermutationTuple,
}

/// Draws the permutation tuple of a randomized code.
pub fn randomize(code: &BlockMarkovCode, seed: u64) -> RandomizedCode<'_> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RandomizedCode { code, perms: PermutationTuple::random(code.n(), code.blocks(), &mut rng) }
}

/// How a code is used across trials.
#[derive(Debug, Clone)]
pub enum CodeUse<'a> {
    Plain(&'a BlockMarkovCode),
    Fixed(RandomizedCode<'a>),
    /// A fresh permutation tuple per trial (shared randomness).
    FreshPermutations(&'a BlockMarkovCode),
}

impl<'a> CodeUse<'a> {
    pub fn code(&self) -> &'a BlockMarkovCode {
        match self {
            Self::Plain(c) | Self::FreshPermutations(c) => c,
            Self::Fixed(r) => r.code,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JammerStrategy {
    Iid { q: Pmf },
    PerBlock { qs: Vec<Pmf> },
    FixedSequence { states: Vec<u8> },
    /// `J(s | x)`.
    AttackX { j: CondPmf },
    /// `J(s | x1, y1)`, rows ordered `x1 * |Y1| + y1`.
    AttackX1Y1 { j: CondPmf },
}

impl JammerStrategy {
    pub fn label(&self) -> String {
        match self {
            Self::Iid { q } => format!("iid:{}", join_probs(q.probs())),
            Self::PerBlock { .. } => "per_block".into(),
            Self::FixedSequence { .. } => "fixed_sequence".into(),
            Self::AttackX { .. } => "attack_x".into(),
            Self::AttackX1Y1 { .. } => "attack_x1y1".into(),
        }
    }
}

fn join_probs(p: &[f64]) -> String {
    p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("/")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub trials: u64,
    pub errors: u64,
    pub p_hat: f64,
    pub wilson_interval: (f64, f64),
    /// Trials in which a message part of block `b` (index `b - 1`) was wrong.
    pub block_errors: Vec<u64>,
}

impl ErrorEstimate {
    pub fn new(trials: u64, errors: u64, block_errors: Vec<u64>) -> Self {
        let p_hat = if trials == 0 { 0.0 } else { errors as f64 / trials as f64 };
        Self { trials, errors, p_hat, wilson_interval: wilson_interval(errors, trials), block_errors }
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Cumulative output tables `[x][x1][s]` over `(y, y1)` pairs.
struct ChannelSampler {
    rows: Vec<Vec<f64>>,
    x1: usize,
    s: usize,
    y1: usize,
}

impl ChannelSampler {
    fn new(channel: &RelayChannel) -> Self {
        let a = channel.sizes();
        let mut rows = Vec::with_capacity(a.x * a.x1 * a.s);
        for x in 0..a.x {
            for x1 in 0..a.x1 {
                for s in 0..a.s {
                    rows.push(cumulative(channel.row(x, x1, s)));
                }
            }
        }
        Self { rows, x1: a.x1, s: a.s, y1: a.y1 }
    }

    fn sample(&self, x: u8, x1: u8, s: u8, rng: &mut dyn RngCore) -> (u8, u8) {
        let row = &self.rows[(x as usize * self.x1 + x1 as usize) * self.s + s as usize];
        let o = draw(row, rng) as usize;
        ((o / self.y1) as u8, (o % self.y1) as u8)
    }
}

/// Everything that crossed the channel in one transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub x: Vec<Vec<u8>>,
    pub x1: Vec<Vec<u8>>,
    pub y: Vec<Vec<u8>>,
    pub y1: Vec<Vec<u8>>,
    pub relay_estimates: Vec<usize>,
}

/// Sends `messages` over the channel with physical state sequence `states`
/// (length `nB`). With `perms`, inputs are `pi_b^{-1}` of codewords and
/// receivers un-permute with `pi_b`; the returned `y` blocks are as seen by
/// the decoder.
fn transmit(
    channel: &ChannelSampler,
    code: &BlockMarkovCode,
    perms: Option<&PermutationTuple>,
    messages: &MessageTuple,
    states: &[u8],
    rng: &mut dyn RngCore,
) -> Transcript {
    let n = code.n();
    let b_count = code.blocks();
    let mut t = Transcript { x: vec![], x1: vec![], y: vec![], y1: vec![], relay_estimates: vec![] };
    let mut estimate = 0usize;
    for b in 1..=b_count {
        let (prev, cur, pp) = code.parts(b, messages);
        let xw = code.x_word(b, prev, cur, pp);
        let x1w = code.x1_word(b, estimate);
        let (xs, x1s) = match perms {
            Some(p) => (p.apply_inverse(b, xw), p.apply_inverse(b, x1w)),
            None => (xw.to_vec(), x1w.to_vec()),
        };
        let sb = &states[(b - 1) * n..b * n];
        let mut y = Vec::with_capacity(n);
        let mut y1 = Vec::with_capacity(n);
        for i in 0..n {
            let (a, c) = channel.sample(xs[i], x1s[i], sb[i], rng);
            y.push(a);
            y1.push(c);
        }
        let (y, y1) = match perms {
            Some(p) => (p.apply(b, &y), p.apply(b, &y1)),
            None => (y, y1),
        };
        if b < b_count {
            estimate = relay_decode(code, b, &y1, estimate);
            t.relay_estimates.push(estimate);
        }
        t.x.push(xs);
        t.x1.push(x1s);
        t.y.push(y);
        t.y1.push(y1);
    }
    t
}

fn draw_states(
    jammer: &JammerStrategy,
    sampler: Option<&AttackSampler<'_, BlockMarkovCode>>,
    n: usize,
    b_count: usize,
    rng: &mut dyn RngCore,
) -> Vec<u8> {
    match jammer {
        JammerStrategy::Iid { q } => {
            let cdf = cumulative(q.probs());
            (0..n * b_count).map(|_| draw(&cdf, rng)).collect()
        }
        JammerStrategy::PerBlock { qs } => {
            let mut out = Vec::with_capacity(n * b_count);
            for q in qs {
                let cdf = cumulative(q.probs());
                out.extend((0..n).map(|_| draw(&cdf, rng)));
            }
            out
        }
        JammerStrategy::FixedSequence { states } => states.clone(),
        JammerStrategy::AttackX { .. } | JammerStrategy::AttackX1Y1 { .. } => {
            sampler.expect("attack sampler prepared").sample_with(rng).states
        }
    }
}

fn check_jammer(channel: &RelayChannel, code: &BlockMarkovCode, jammer: &JammerStrategy) -> Result<()> {
    let a = channel.sizes();
    let total = code.n() * code.blocks();
    match jammer {
        JammerStrategy::Iid { q } if q.support_size() != a.s => {
            Err(AvrcError::DimensionMismatch("jammer pmf does not match the state alphabet".into()))
        }
        JammerStrategy::PerBlock { qs } if qs.len() != code.blocks() || qs.iter().any(|q| q.support_size() != a.s) => {
            Err(AvrcError::DimensionMismatch("per-block jammer needs one state pmf per block".into()))
        }
        JammerStrategy::FixedSequence { states } if states.len() != total || states.iter().any(|&s| s as usize >= a.s) => {
            Err(AvrcError::InvalidArgument(format!("fixed state sequence must hold {total} valid states")))
        }
        _ => Ok(()),
    }
}

/// Seeded generator for trial `index` of a run.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Monte Carlo estimate of the average error probability. A trial fails if
/// any of the `2(B-1)` message parts is decoded wrongly.
pub fn estimate_error(
    channel: &RelayChannel,
    code: CodeUse<'_>,
    jammer: &JammerStrategy,
    trials: u64,
    seed: u64,
) -> Result<ErrorEstimate> {
    if trials == 0 {
        return Err(AvrcError::InvalidArgument("at least one trial is required".into()));
    }
    let base = code.code();
    let a = channel.sizes();
    if (a.x, a.x1, a.y, a.y1) != (base.x_size, base.x1_size, base.y_size, base.y1_size) {
        return Err(AvrcError::DimensionMismatch("code and channel alphabets differ".into()));
    }
    check_jammer(channel, base, jammer)?;
    let attack = match jammer {
        JammerStrategy::AttackX { j } => Some(crate::symmetrizability::build_attack_x(base, j.clone())?),
        JammerStrategy::AttackX1Y1 { j } => Some(crate::symmetrizability::build_attack_x1y1(base, channel, j.clone())?),
        _ => None,
    };
    let sampler = ChannelSampler::new(channel);
    let (n, b_count) = (base.n(), base.blocks());
    let k = b_count - 1;
    let outcomes: Vec<(bool, Vec<bool>)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let messages = base.random_messages(&mut rng);
            let states = draw_states(jammer, attack.as_ref(), n, b_count, &mut rng);
            let fresh;
            let perms = match &code {
                CodeUse::Plain(_) => None,
                CodeUse::Fixed(r) => Some(&r.perms),
                CodeUse::FreshPermutations(_) => {
                    fresh = PermutationTuple::random(n, b_count, &mut rng);
                    Some(&fresh)
                }
            };
            let t = transmit(&sampler, base, perms, &messages, &states, &mut rng);
            let out = backward_decode(base, &t.y).expect("shapes match by construction");
            let blocks: Vec<bool> = (0..k)
                .map(|i| {
                    out.prime_errors[i]
                        || out.double_prime_errors[i]
                        || out.messages.prime[i] != messages.prime[i]
                        || out.messages.double_prime[i] != messages.double_prime[i]
                })
                .collect();
            (blocks.iter().any(|&e| e), blocks)
        })
        .collect();
    let errors = outcomes.iter().filter(|o| o.0).count() as u64;
    let mut block_errors = vec![0u64; k];
    for (_, blocks) in &outcomes {
        for (i, &e) in blocks.iter().enumerate() {
            block_errors[i] += e as u64;
        }
    }
    Ok(ErrorEstimate::new(trials, errors, block_errors))
}

impl RelayCode for BlockMarkovCode {
    type Message = MessageTuple;

    fn input_sizes(&self) -> (usize, usize) {
        (self.x_size, self.x1_size)
    }

    fn length(&self) -> usize {
        self.n() * self.blocks()
    }

    fn random_message(&self, rng: &mut dyn RngCore) -> MessageTuple {
        self.random_messages(rng)
    }

    fn sender_sequence(&self, m: &MessageTuple) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.length());
        for b in 1..=self.blocks() {
            let (prev, cur, pp) = self.parts(b, m);
            out.extend_from_slice(self.x_word(b, prev, cur, pp));
        }
        out
    }

    fn relay_run(&self, x: &[u8], link: &mut dyn FnMut(usize, u8, u8) -> u8) -> (Vec<u8>, Vec<u8>) {
        let n = self.n();
        let mut x1_all = Vec::with_capacity(self.length());
        let mut y1_all = Vec::with_capacity(self.length());
        let mut estimate = 0usize;
        for b in 1..=self.blocks() {
            let x1w = self.x1_word(b, estimate).to_vec();
            let mut y1 = Vec::with_capacity(n);
            for i in 0..n {
                let pos = (b - 1) * n + i;
                y1.push(link(pos, x[pos], x1w[i]));
            }
            if b < self.blocks() {
                estimate = relay_decode(self, b, &y1, estimate);
            }
            x1_all.extend_from_slice(&x1w);
            y1_all.extend_from_slice(&y1);
        }
        (x1_all, y1_all)
    }
}

/// A code given by explicit sender codewords and a per-symbol relay
/// function `x1_i = f(i, y1^{i-1})`.
#[derive(Clone)]
pub struct ExplicitCode {
    pub x_size: usize,
    pub x1_size: usize,
    pub codewords: Vec<Vec<u8>>,
    relay: Arc<dyn Fn(usize, &[u8]) -> u8 + Send + Sync>,
}

impl std::fmt::Debug for ExplicitCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExplicitCode").field("codewords", &self.codewords).finish_non_exhaustive()
    }
}

impl ExplicitCode {
    pub fn new(
        x_size: usize,
        x1_size: usize,
        codewords: Vec<Vec<u8>>,
        relay: impl Fn(usize, &[u8]) -> u8 + Send + Sync + 'static,
    ) -> Result<Self> {
        let Some(first) = codewords.first() else {
            return Err(AvrcError::InvalidArgument("codebook is empty".into()));
        };
        if codewords.iter().any(|c| c.len() != first.len() || c.iter().any(|&v| v as usize >= x_size)) {
            return Err(AvrcError::InvalidArgument("codewords must share a length and the input alphabet".into()));
        }
        Ok(Self { x_size, x1_size, codewords, relay: Arc::new(relay) })
    }

    /// Relay input fixed at 0.
    pub fn silent_relay(x_size: usize, codewords: Vec<Vec<u8>>) -> Result<Self> {
        Self::new(x_size, 1, codewords, |_, _| 0)
    }

    pub fn relay_symbol(&self, i: usize, y1_prefix: &[u8]) -> u8 {
        (self.relay)(i, y1_prefix)
    }
}

impl RelayCode for ExplicitCode {
    type Message = usize;

    fn input_sizes(&self) -> (usize, usize) {
        (self.x_size, self.x1_size)
    }

    fn length(&self) -> usize {
        self.codewords[0].len()
    }

    fn random_message(&self, rng: &mut dyn RngCore) -> usize {
        rng.gen_range(0..self.codewords.len())
    }

    fn sender_sequence(&self, m: &usize) -> Vec<u8> {
        self.codewords[*m].clone()
    }

    fn relay_run(&self, x: &[u8], link: &mut dyn FnMut(usize, u8, u8) -> u8) -> (Vec<u8>, Vec<u8>) {
        let mut x1 = Vec::with_capacity(x.len());
        let mut y1 = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let v = (self.relay)(i, &y1);
            x1.push(v);
            y1.push(link(i, x[i], v));
        }
        (x1, y1)
    }
}
