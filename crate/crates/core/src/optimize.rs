//! Max-min ascent over input laws with per-term minimization over state
//! laws. Objectives have the shape
//! `max_theta min_b sum_{t in b} inf_{q in Q} I_t(theta, q)`
//! where every `I_t` is a conditional mutual information of the joint
//! `p(inputs) * sum_s q(s) W(y, y1 | x, x1, s)`.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::catalog::random_pmf;
use crate::channel::{project_box_simplex, RelayChannel, StateUncertainty};

/// Smoothing weight used when differentiating at the simplex boundary.
const GRAD_MIX: f64 = 1e-10;
const GOLDEN: f64 = 0.618_033_988_749_895;

/// One `I(A; B | C)` over the joint axes `(inputs.., Y, Y1)`, stored as
/// joint-index to marginal-index maps.
#[derive(Debug, Clone)]
pub(crate) struct Term {
    maps: [Vec<u32>; 4],
    lens: [usize; 4],
}

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    n_in: usize,
    n_out: usize,
    n_states: usize,
    /// `W` expanded to input index, `[s][i * n_out + o]`.
    ws: Vec<Vec<f64>>,
    axis_sizes: Vec<usize>,
    terms: Vec<Term>,
}

impl Problem {
    /// `xx1[i]` gives the channel input pair `x * |X1| + x1` of input index `i`.
    pub(crate) fn new(channel: &RelayChannel, input_sizes: &[usize], xx1: &[usize]) -> Self {
        let a = channel.sizes();
        let n_in: usize = input_sizes.iter().product();
        assert_eq!(xx1.len(), n_in);
        let n_out = a.y * a.y1;
        let ws = (0..a.s)
            .map(|s| {
                let mut w = Vec::with_capacity(n_in * n_out);
                for &pair in xx1 {
                    w.extend_from_slice(channel.row(pair / a.x1, pair % a.x1, s));
                }
                w
            })
            .collect();
        let mut axis_sizes = input_sizes.to_vec();
        axis_sizes.extend([a.y, a.y1]);
        Self {
            n_in,
            n_out,
            n_states: a.s,
            ws,
            axis_sizes,
            terms: Vec::new(),
        }
    }

    /// Registers `I(A; B | C)` given as joint-axis positions; returns its id.
    pub(crate) fn add_term(&mut self, a: &[usize], b: &[usize], c: &[usize]) -> usize {
        let groups: [Vec<usize>; 4] = [
            a.iter().chain(c).copied().collect(),
            b.iter().chain(c).copied().collect(),
            a.iter().chain(b).chain(c).copied().collect(),
            c.to_vec(),
        ];
        let total = self.n_in * self.n_out;
        let mut maps: [Vec<u32>; 4] = Default::default();
        let mut lens = [0usize; 4];
        for (g, axes) in groups.iter().enumerate() {
            lens[g] = axes.iter().map(|&k| self.axis_sizes[k]).product();
            let mut map = Vec::with_capacity(total);
            let mut digits = vec![0usize; self.axis_sizes.len()];
            for _ in 0..total {
                let idx = axes.iter().fold(0, |acc, &k| acc * self.axis_sizes[k] + digits[k]);
                map.push(idx as u32);
                for d in (0..digits.len()).rev() {
                    digits[d] += 1;
                    if digits[d] < self.axis_sizes[d] {
                        break;
                    }
                    digits[d] = 0;
                }
            }
            maps[g] = map;
        }
        self.terms.push(Term { maps, lens });
        self.terms.len() - 1
    }

    pub(crate) fn n_in(&self) -> usize {
        self.n_in
    }

    fn mixed_channel(&self, q: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n_in * self.n_out];
        for (s, &qs) in q.iter().enumerate() {
            if qs == 0.0 {
                continue;
            }
            for (d, v) in w.iter_mut().zip(&self.ws[s]) {
                *d += qs * v;
            }
        }
        w
    }

    fn joint(&self, p: &[f64], wq: &[f64]) -> Vec<f64> {
        let mut joint = Vec::with_capacity(wq.len());
        for (i, &pi) in p.iter().enumerate() {
            joint.extend(wq[i * self.n_out..(i + 1) * self.n_out].iter().map(|w| pi * w));
        }
        joint
    }

    fn marginals(&self, term: &Term, joint: &[f64]) -> [Vec<f64>; 4] {
        let mut out: [Vec<f64>; 4] = Default::default();
        for g in 0..4 {
            let mut m = vec![0.0; term.lens[g]];
            for (&idx, &pk) in term.maps[g].iter().zip(joint) {
                m[idx as usize] += pk;
            }
            out[g] = m;
        }
        out
    }

    fn term_value_on_joint(&self, t: usize, joint: &[f64]) -> f64 {
        let term = &self.terms[t];
        let m = self.marginals(term, joint);
        let h = |v: &[f64]| -> f64 { -v.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>() };
        (h(&m[0]) + h(&m[1]) - h(&m[2]) - h(&m[3])).max(0.0)
    }

    /// Value of term `t` at input law `p` and state law `q`.
    pub(crate) fn term_value(&self, t: usize, p: &[f64], q: &[f64]) -> f64 {
        let wq = self.mixed_channel(q);
        self.term_value_on_joint(t, &self.joint(p, &wq))
    }

    /// Gradient of term `t` with respect to the joint, evaluated on slightly
    /// smoothed `p` and `q`; returns `(dI/dP, mixed channel)`.
    fn joint_gradient(&self, t: usize, p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pe: Vec<f64> = p.iter().map(|x| (1.0 - GRAD_MIX) * x + GRAD_MIX / p.len() as f64).collect();
        let qe: Vec<f64> = q.iter().map(|x| (1.0 - GRAD_MIX) * x + GRAD_MIX / q.len() as f64).collect();
        let wq = self.mixed_channel(&qe);
        let joint = self.joint(&pe, &wq);
        let term = &self.terms[t];
        let m = self.marginals(term, &joint);
        let logs: Vec<Vec<f64>> = m.iter().map(|v| v.iter().map(|x| x.log2()).collect()).collect();
        let g = (0..joint.len())
            .map(|k| {
                if joint[k] <= 0.0 {
                    return 0.0;
                }
                logs[2][term.maps[2][k] as usize] + logs[3][term.maps[3][k] as usize]
                    - logs[0][term.maps[0][k] as usize]
                    - logs[1][term.maps[1][k] as usize]
            })
            .collect();
        (g, wq)
    }

    /// Gradient of term `t` in `p` at fixed `q`.
    pub(crate) fn grad_p(&self, t: usize, p: &[f64], q: &[f64]) -> Vec<f64> {
        let (g, wq) = self.joint_gradient(t, p, q);
        (0..self.n_in)
            .map(|i| {
                let r = i * self.n_out..(i + 1) * self.n_out;
                g[r.clone()].iter().zip(&wq[r]).filter(|(_, &w)| w > 0.0).map(|(a, w)| a * w).sum()
            })
            .collect()
    }

    /// Gradient of term `t` in `q` at fixed `p`.
    fn grad_q(&self, t: usize, p: &[f64], q: &[f64]) -> Vec<f64> {
        let (g, _) = self.joint_gradient(t, p, q);
        (0..self.n_states)
            .map(|s| {
                let mut acc = 0.0;
                for (i, &pi) in p.iter().enumerate() {
                    if pi == 0.0 {
                        continue;
                    }
                    let r = i * self.n_out..(i + 1) * self.n_out;
                    for (a, w) in g[r.clone()].iter().zip(&self.ws[s][r]) {
                        if *w > 0.0 {
                            acc += pi * a * w;
                        }
                    }
                }
                acc
            })
            .collect()
    }
}

/// Where the inner minimization over state laws runs.
#[derive(Debug, Clone)]
pub(crate) enum QDomain {
    Points(Vec<Vec<f64>>),
    /// `q = (1 - t, t)` with `t` in `[lo, hi]`.
    Segment { lo: f64, hi: f64 },
    Polytope { lo: Vec<f64>, hi: Vec<f64> },
}

impl QDomain {
    pub(crate) fn from_uncertainty(set: &StateUncertainty) -> Self {
        match set {
            StateUncertainty::FiniteList { pmfs } => Self::Points(pmfs.iter().map(|p| p.probs().to_vec()).collect()),
            _ => {
                let (lo, hi) = set.bounds().expect("continuous set has bounds");
                match lo.len() {
                    1 => Self::Points(vec![vec![1.0]]),
                    2 => Self::Segment {
                        lo: lo[1].max(1.0 - hi[0]).clamp(0.0, 1.0),
                        hi: hi[1].min(1.0 - lo[0]).clamp(0.0, 1.0),
                    },
                    _ => Self::Polytope { lo, hi },
                }
            }
        }
    }

    pub(crate) fn fixed(q: Vec<f64>) -> Self {
        Self::Points(vec![q])
    }
}

/// Convex minimization of a term over the state domain.
pub(crate) fn minimize_term(problem: &Problem, t: usize, p: &[f64], domain: &QDomain, tol: f64) -> (f64, Vec<f64>) {
    let f = |q: &[f64]| problem.term_value(t, p, q);
    match domain {
        QDomain::Points(points) => {
            let mut best = (f64::INFINITY, points[0].clone());
            for q in points {
                let v = f(q);
                if v < best.0 {
                    best = (v, q.clone());
                }
            }
            best
        }
        QDomain::Segment { lo, hi } => {
            let g = |t: f64| f(&[1.0 - t, t]);
            let (t, v) = golden_section(g, *lo, *hi, tol);
            (v, vec![1.0 - t, t])
        }
        QDomain::Polytope { lo, hi } => {
            let start = project_box_simplex(&vec![1.0 / lo.len() as f64; lo.len()], lo, hi);
            projected_descent(problem, t, p, start, lo, hi, tol)
        }
    }
}

/// Minimizes a unimodal function on `[a, b]`, checking the endpoints too.
pub(crate) fn golden_section(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    if b - a <= tol {
        let m = 0.5 * (a + b);
        return (m, f(m));
    }
    let (mut a, mut b) = (a, b);
    let (fa0, fb0) = (f(a), f(b));
    let (a0, b0) = (a, b);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    if fa0 < best.1 {
        best = (a0, fa0);
    }
    if fb0 < best.1 {
        best = (b0, fb0);
    }
    best
}

fn projected_descent(
    problem: &Problem,
    t: usize,
    p: &[f64],
    start: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    tol: f64,
) -> (f64, Vec<f64>) {
    let mut q = start;
    let mut v = problem.term_value(t, p, &q);
    let mut step = 0.1;
    for _ in 0..500 {
        let g = problem.grad_q(t, p, &q);
        let mut moved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = q.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let cand = project_box_simplex(&cand, lo, hi);
            let vc = problem.term_value(t, p, &cand);
            if vc < v - 1e-15 {
                let shift = cand.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                q = cand;
                let gain = v - vc;
                v = vc;
                step *= 2.0;
                moved = shift > tol * 1e-3 && gain > tol * 1e-6;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (v, q)
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Maps optimization variables (a product of simplices) to the input law.
pub(crate) trait Parametrization: Sync {
    fn dim(&self) -> usize;
    fn blocks(&self) -> Vec<Range<usize>>;
    fn to_input(&self, theta: &[f64]) -> Vec<f64>;
    fn pullback(&self, theta: &[f64], g_input: &[f64]) -> Vec<f64>;

    /// Positive rescaling of `g`, constant within each block.
    fn precondition(&self, _theta: &[f64], _g: &mut [f64]) {}

    fn project(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = theta.to_vec();
        for r in self.blocks() {
            let proj = project_simplex(&theta[r.clone()]);
            out[r].copy_from_slice(&proj);
        }
        out
    }

    /// Uniform within each block.
    fn center(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for r in self.blocks() {
            let w = 1.0 / r.len() as f64;
            out[r].iter_mut().for_each(|x| *x = w);
        }
        out
    }

    fn random(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for r in self.blocks() {
            let v = random_pmf(rng, r.len());
            out[r].copy_from_slice(&v);
        }
        out
    }
}

/// The input law itself.
pub(crate) struct FullJoint {
    pub n: usize,
}

impl Parametrization for FullJoint {
    fn dim(&self) -> usize {
        self.n
    }
    fn blocks(&self) -> Vec<Range<usize>> {
        vec![0..self.n]
    }
    fn to_input(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }
    fn pullback(&self, _theta: &[f64], g: &[f64]) -> Vec<f64> {
        g.to_vec()
    }
}

/// A law on a smaller alphabet placed on a fixed subset of input indices.
pub(crate) struct Embedding {
    pub n_input: usize,
    pub target: Vec<usize>,
}

impl Parametrization for Embedding {
    fn dim(&self) -> usize {
        self.target.len()
    }
    fn blocks(&self) -> Vec<Range<usize>> {
        vec![0..self.target.len()]
    }
    fn to_input(&self, theta: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_input];
        for (&i, &v) in self.target.iter().zip(theta) {
            p[i] += v;
        }
        p
    }
    fn pullback(&self, _theta: &[f64], g: &[f64]) -> Vec<f64> {
        self.target.iter().map(|&i| g[i]).collect()
    }
}

/// `p(x', x'', x1) = a(x1) b(x' | x1) c(x'' | x1)` with inputs ordered
/// `(x', x'', x1)`.
pub(crate) struct ProductForm {
    pub xp: usize,
    pub xpp: usize,
    pub x1: usize,
}

impl ProductForm {
    fn offsets(&self) -> (usize, usize) {
        (self.x1, self.x1 + self.x1 * self.xp)
    }
}

impl Parametrization for ProductForm {
    fn dim(&self) -> usize {
        self.x1 * (1 + self.xp + self.xpp)
    }
    fn blocks(&self) -> Vec<Range<usize>> {
        let (ob, oc) = self.offsets();
        let mut out = vec![0..self.x1];
        out.extend((0..self.x1).map(|k| ob + k * self.xp..ob + (k + 1) * self.xp));
        out.extend((0..self.x1).map(|k| oc + k * self.xpp..oc + (k + 1) * self.xpp));
        out
    }
    fn to_input(&self, theta: &[f64]) -> Vec<f64> {
        let (ob, oc) = self.offsets();
        let mut p = Vec::with_capacity(self.xp * self.xpp * self.x1);
        for a in 0..self.xp {
            for b in 0..self.xpp {
                for k in 0..self.x1 {
                    p.push(theta[k] * theta[ob + k * self.xp + a] * theta[oc + k * self.xpp + b]);
                }
            }
        }
        p
    }
    fn pullback(&self, theta: &[f64], g: &[f64]) -> Vec<f64> {
        let (ob, oc) = self.offsets();
        let mut out = vec![0.0; self.dim()];
        for a in 0..self.xp {
            for b in 0..self.xpp {
                for k in 0..self.x1 {
                    let gi = g[(a * self.xpp + b) * self.x1 + k];
                    let (pa, pb, pc) = (theta[k], theta[ob + k * self.xp + a], theta[oc + k * self.xpp + b]);
                    out[k] += gi * pb * pc;
                    out[ob + k * self.xp + a] += gi * pa * pc;
                    out[oc + k * self.xpp + b] += gi * pa * pb;
                }
            }
        }
        out
    }

    /// Conditional rows scale with `a(x1)`; undo that so rows under a
    /// rarely used relay symbol still move.
    fn precondition(&self, theta: &[f64], g: &mut [f64]) {
        let (ob, oc) = self.offsets();
        for k in 0..self.x1 {
            let w = 1.0 / theta[k].max(1e-3);
            g[ob + k * self.xp..ob + (k + 1) * self.xp].iter_mut().for_each(|v| *v *= w);
            g[oc + k * self.xpp..oc + (k + 1) * self.xpp].iter_mut().for_each(|v| *v *= w);
        }
    }
}

/// The max-min structure: each branch sums the inner infima of its terms.
#[derive(Debug, Clone)]
pub(crate) struct Objective {
    pub terms: Vec<usize>,
    /// Indices into `terms`.
    pub branches: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub input: Vec<f64>,
    pub term_values: Vec<f64>,
    pub term_q: Vec<Vec<f64>>,
    pub value: f64,
}

impl Evaluation {
    fn branch_values(&self, obj: &Objective) -> Vec<f64> {
        obj.branches.iter().map(|b| b.iter().map(|&k| self.term_values[k]).sum()).collect()
    }
}

pub(crate) struct Ascent<'a> {
    pub problem: &'a Problem,
    pub objective: &'a Objective,
    pub domain: &'a QDomain,
    pub param: &'a dyn Parametrization,
    pub inner_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct AscentResult {
    pub theta: Vec<f64>,
    pub eval: Evaluation,
    pub iterations: usize,
    pub converged: bool,
}

impl Ascent<'_> {
    pub(crate) fn evaluate(&self, theta: &[f64]) -> Evaluation {
        let input = self.param.to_input(theta);
        let mut term_values = Vec::with_capacity(self.objective.terms.len());
        let mut term_q = Vec::with_capacity(self.objective.terms.len());
        for &t in &self.objective.terms {
            let (v, q) = minimize_term(self.problem, t, &input, self.domain, self.inner_tol);
            term_values.push(v);
            term_q.push(q);
        }
        let mut eval = Evaluation { input, term_values, term_q, value: 0.0 };
        eval.value = eval.branch_values(self.objective).into_iter().fold(f64::INFINITY, f64::min);
        eval
    }

    fn branch_gradient(&self, theta: &[f64], eval: &Evaluation, branch: &[usize]) -> Vec<f64> {
        let mut g_input = vec![0.0; self.problem.n_in()];
        for &k in branch {
            let g = self.problem.grad_p(self.objective.terms[k], &eval.input, &eval.term_q[k]);
            g_input.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let mut g = self.param.pullback(theta, &g_input);
        self.param.precondition(theta, &mut g);
        // Tangent to each simplex block.
        for r in self.param.blocks() {
            let mean = g[r.clone()].iter().sum::<f64>() / r.len() as f64;
            g[r].iter_mut().for_each(|x| *x -= mean);
        }
        g
    }

    /// Projected ascent on `min_b f_b` from one start.
    pub(crate) fn run(&self, start: &[f64], max_iterations: usize, tol: f64) -> AscentResult {
        let mut theta = self.param.project(start);
        let mut eval = self.evaluate(&theta);
        let mut step = 0.5;
        let mut eps_active = 1e-2;
        let mut stall = 0usize;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iterations {
            iterations += 1;
            let values = eval.branch_values(self.objective);
            let phi = eval.value;
            let active: Vec<usize> = (0..values.len()).filter(|&b| values[b] <= phi + eps_active).collect();
            let grads: Vec<Vec<f64>> = active
                .iter()
                .map(|&b| self.branch_gradient(&theta, &eval, &self.objective.branches[b]))
                .collect();
            let dir = min_norm_combination(&grads);
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut accepted = false;
            if norm > 1e-12 {
                for _ in 0..50 {
                    let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                    let cand = self.param.project(&cand);
                    let moved = cand.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    if moved < 1e-15 {
                        break;
                    }
                    let ce = self.evaluate(&cand);
                    if ce.value > phi + 1e-15 {
                        let gain = ce.value - phi;
                        theta = cand;
                        eval = ce;
                        step = (step * 2.0).min(1e3);
                        accepted = true;
                        stall = if gain < tol * 1e-3 { stall + 1 } else { 0 };
                        break;
                    }
                    step *= 0.5;
                }
            }
            if !accepted {
                step = step.max(1e-6);
                if eps_active > 1e-9 {
                    eps_active *= 0.1;
                    continue;
                }
                converged = true;
                break;
            }
            if stall >= 25 {
                converged = true;
                break;
            }
        }
        AscentResult { theta, eval, iterations, converged }
    }

    /// Multistart: the given seeds, the block-uniform point, then random
    /// points up to `count` starts in total. Ties keep the earliest start.
    pub(crate) fn multistart(
        &self,
        seeds: &[Vec<f64>],
        count: usize,
        rng_seed: u64,
        max_iterations: usize,
        tol: f64,
    ) -> (AscentResult, usize) {
        let mut starts: Vec<Vec<f64>> = seeds.to_vec();
        starts.push(self.param.center());
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        while starts.len() < count.max(seeds.len() + 1) {
            starts.push(self.param.random(&mut rng));
        }
        let results: Vec<AscentResult> = starts.par_iter().map(|s| self.run(s, max_iterations, tol)).collect();
        let total: usize = results.iter().map(|r| r.iterations).sum();
        let mut best = 0;
        for (i, r) in results.iter().enumerate() {
            if r.eval.value > results[best].eval.value + 1e-12 {
                best = i;
            }
        }
        (results[best].clone(), total)
    }
}

/// Minimum-norm point of the convex hull of one or two vectors.
fn min_norm_combination(grads: &[Vec<f64>]) -> Vec<f64> {
    match grads.len() {
        0 => Vec::new(),
        1 => grads[0].clone(),
        _ => {
            // Pairwise reduction; the objectives here have at most two branches.
            let mut acc = grads[0].clone();
            for g in &grads[1..] {
                let diff: Vec<f64> = acc.iter().zip(g).map(|(a, b)| a - b).collect();
                let dd: f64 = diff.iter().map(|x| x * x).sum();
                let lambda = if dd <= 0.0 {
                    0.5
                } else {
                    (-(g.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>()) / dd).clamp(0.0, 1.0)
                };
                acc = acc.iter().zip(g).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            }
            acc
        }
    }
}
