//! Capacity bounds for compound and arbitrarily varying relay channels,
//! computed as max-min problems over input and state laws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{OrthogonalSplit, RelayChannel, StateUncertainty, STRUCTURE_TOL};
use crate::error::{AvrcError, Result};
use crate::information::{Axis, JointDist};
use crate::optimize::{
    golden_section, Ascent, AscentResult, Embedding, FullJoint, Objective, Parametrization, Problem, ProductForm,
    QDomain,
};
use crate::probability::{Compositions, Pmf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Points per unit interval of the state grid used by outer minimizations.
    pub grid_resolution: usize,
    pub multistart_count: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Alphabet size of the auxiliary `U`; `None` means `|X| |X1| + 2`.
    pub u_cardinality: Option<usize>,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            grid_resolution: 32,
            multistart_count: 8,
            max_iterations: 2000,
            tolerance: 1e-4,
            u_cardinality: None,
            seed: 0,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(AvrcError::InvalidArgument("tolerance must be positive".into()));
        }
        if self.u_cardinality == Some(0) {
            return Err(AvrcError::InvalidArgument("u_cardinality must be at least 1".into()));
        }
        if self.grid_resolution == 0 || self.multistart_count == 0 || self.max_iterations == 0 {
            return Err(AvrcError::InvalidArgument(
                "grid_resolution, multistart_count and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }

    fn inner_tol(&self) -> f64 {
        (self.tolerance * 1e-4).max(1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Cutset,
    PartialDf,
    FullDf,
    Direct,
    Orthogonal,
    DegradedClosedForm,
}

/// How `U` is tied to the inputs in the partial decode-forward bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcedU {
    Free,
    Empty,
    EqualsX,
    EqualsXDoublePrime(OrthogonalSplit),
}

/// One mutual-information term with the state law attaining its infimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermReport {
    pub a: Vec<Axis>,
    pub b: Vec<Axis>,
    pub c: Vec<Axis>,
    pub value: f64,
    pub worst_q: Pmf,
}

impl TermReport {
    pub fn label(&self) -> String {
        let names = |v: &[Axis]| v.iter().map(axis_name).collect::<Vec<_>>().join(",");
        if self.c.is_empty() {
            format!("I({};{})", names(&self.a), names(&self.b))
        } else {
            format!("I({};{}|{})", names(&self.a), names(&self.b), names(&self.c))
        }
    }
}

fn axis_name(a: &Axis) -> String {
    match a {
        Axis::U => "U".into(),
        Axis::X => "X".into(),
        Axis::X1 => "X1".into(),
        Axis::XPrime => "X'".into(),
        Axis::XDoublePrime => "X''".into(),
        Axis::S => "S".into(),
        Axis::Y => "Y".into(),
        Axis::Y1 => "Y1".into(),
        Axis::Aux(k) => format!("A{k}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Gap between `value` and a fresh evaluation at the reported point.
    pub residual: f64,
    pub converged: bool,
}

/// The objective is `min_b sum_{t in branches[b]} terms[t].value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: f64,
    pub argmax_p: JointDist,
    pub terms: Vec<TermReport>,
    pub branches: Vec<Vec<usize>>,
    pub diagnostics: Diagnostics,
}

type TermSpec = (Vec<Axis>, Vec<Axis>, Vec<Axis>);

fn spec(a: &[Axis], b: &[Axis], c: &[Axis]) -> TermSpec {
    (a.to_vec(), b.to_vec(), c.to_vec())
}

/// Input alphabet layout: named axes plus the channel input pair of each
/// input index.
struct Space {
    axes: Vec<Axis>,
    sizes: Vec<usize>,
    xx1: Vec<usize>,
}

impl Space {
    fn xx1(channel: &RelayChannel) -> Self {
        let a = channel.sizes();
        Self { axes: vec![Axis::X, Axis::X1], sizes: vec![a.x, a.x1], xx1: (0..a.x * a.x1).collect() }
    }

    fn uxx1(channel: &RelayChannel, u: usize) -> Self {
        let a = channel.sizes();
        let pairs = a.x * a.x1;
        Self {
            axes: vec![Axis::U, Axis::X, Axis::X1],
            sizes: vec![u, a.x, a.x1],
            xx1: (0..u * pairs).map(|i| i % pairs).collect(),
        }
    }

    fn orthogonal(channel: &RelayChannel, split: OrthogonalSplit) -> Self {
        let x1 = channel.sizes().x1;
        let mut xx1 = Vec::new();
        for a in 0..split.x_prime {
            for b in 0..split.x_double_prime {
                for k in 0..x1 {
                    xx1.push(split.join(a, b) * x1 + k);
                }
            }
        }
        Self {
            axes: vec![Axis::XPrime, Axis::XDoublePrime, Axis::X1],
            sizes: vec![split.x_prime, split.x_double_prime, x1],
            xx1,
        }
    }

    /// Rebuilds the layout of a reported input law.
    fn from_law(channel: &RelayChannel, law: &JointDist) -> Result<Self> {
        let a = channel.sizes();
        match law.axes() {
            [Axis::X, Axis::X1] if law.sizes() == [a.x, a.x1] => Ok(Self::xx1(channel)),
            [Axis::U, Axis::X, Axis::X1] if law.sizes()[1..] == [a.x, a.x1] => Ok(Self::uxx1(channel, law.sizes()[0])),
            [Axis::XPrime, Axis::XDoublePrime, Axis::X1] => {
                let split = OrthogonalSplit { x_prime: law.sizes()[0], x_double_prime: law.sizes()[1] };
                if split.x_prime * split.x_double_prime != a.x || law.sizes()[2] != a.x1 {
                    return Err(AvrcError::DimensionMismatch("input law does not fit the channel".into()));
                }
                Ok(Self::orthogonal(channel, split))
            }
            _ => Err(AvrcError::DimensionMismatch("unsupported input law layout".into())),
        }
    }

    fn position(&self, axis: Axis) -> usize {
        match axis {
            Axis::Y => self.axes.len(),
            Axis::Y1 => self.axes.len() + 1,
            _ => self.axes.iter().position(|a| *a == axis).expect("axis belongs to the space"),
        }
    }

    fn problem(&self, channel: &RelayChannel, specs: &[TermSpec]) -> (Problem, Vec<usize>) {
        let mut problem = Problem::new(channel, &self.sizes, &self.xx1);
        let pos = |v: &[Axis]| v.iter().map(|&a| self.position(a)).collect::<Vec<_>>();
        let ids = specs.iter().map(|(a, b, c)| problem.add_term(&pos(a), &pos(b), &pos(c))).collect();
        (problem, ids)
    }

    fn law(&self, p: &[f64]) -> Result<JointDist> {
        // Renormalize away projection round-off.
        let total: f64 = p.iter().sum();
        let probs = p.iter().map(|x| x.max(0.0) / total).collect();
        JointDist::new(self.axes.clone(), self.sizes.clone(), probs)
    }
}

fn to_pmf(q: &[f64]) -> Result<Pmf> {
    let total: f64 = q.iter().sum();
    Pmf::with_tolerance(q.iter().map(|x| x.max(0.0) / total).collect(), 1e-9)
}

fn check_states(channel: &RelayChannel, q_set: &StateUncertainty) -> Result<()> {
    if q_set.num_states() != channel.sizes().s {
        return Err(AvrcError::DimensionMismatch(format!(
            "state set is over {} letters, channel has {}",
            q_set.num_states(),
            channel.sizes().s
        )));
    }
    Ok(())
}

struct Solved {
    input: Vec<f64>,
    theta: Vec<f64>,
    term_values: Vec<f64>,
    term_q: Vec<Vec<f64>>,
    value: f64,
    iterations: usize,
    converged: bool,
}

impl Solved {
    fn from_ascent(r: AscentResult, iterations: usize) -> Self {
        Self {
            input: r.eval.input,
            theta: r.theta,
            term_values: r.eval.term_values,
            term_q: r.eval.term_q,
            value: r.eval.value,
            iterations,
            converged: r.converged,
        }
    }
}

fn finish(
    channel: &RelayChannel,
    kind: BoundKind,
    space: &Space,
    specs: &[TermSpec],
    branches: Vec<Vec<usize>>,
    solved: Solved,
) -> Result<BoundReport> {
    let terms = specs
        .iter()
        .zip(solved.term_values.iter().zip(&solved.term_q))
        .map(|((a, b, c), (&value, q))| {
            Ok(TermReport { a: a.clone(), b: b.clone(), c: c.clone(), value, worst_q: to_pmf(q)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = BoundReport {
        kind,
        value: solved.value.max(0.0),
        argmax_p: space.law(&solved.input)?,
        terms,
        branches,
        diagnostics: Diagnostics { iterations: solved.iterations, residual: 0.0, converged: solved.converged },
    };
    report.diagnostics.residual = (reevaluate(channel, &report)? - report.value).abs();
    Ok(report)
}

/// Objective value at the reported input law and per-term state laws.
pub fn reevaluate(channel: &RelayChannel, report: &BoundReport) -> Result<f64> {
    let space = Space::from_law(channel, &report.argmax_p)?;
    let specs: Vec<TermSpec> = report.terms.iter().map(|t| (t.a.clone(), t.b.clone(), t.c.clone())).collect();
    for (a, b, c) in &specs {
        for axis in a.iter().chain(b).chain(c) {
            if !matches!(axis, Axis::Y | Axis::Y1) && !space.axes.contains(axis) {
                return Err(AvrcError::InvalidArgument(format!("term uses axis {axis:?} missing from the law")));
            }
        }
    }
    let (problem, ids) = space.problem(channel, &specs);
    let p = report.argmax_p.probs();
    let values: Vec<f64> = ids
        .iter()
        .zip(&report.terms)
        .map(|(&id, t)| problem.term_value(id, p, t.worst_q.probs()))
        .collect();
    Ok(report
        .branches
        .iter()
        .map(|b| b.iter().map(|&k| values[k]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        .max(0.0))
}

/// `max_theta min_b sum inf_q` under the given parametrization.
#[allow(clippy::too_many_arguments)]
fn solve_max_min(
    channel: &RelayChannel,
    space: &Space,
    specs: &[TermSpec],
    branches: &[Vec<usize>],
    domain: &QDomain,
    param: &dyn Parametrization,
    seeds: &[Vec<f64>],
    starts: usize,
    opts: &OptimizerOptions,
) -> Solved {
    let (problem, ids) = space.problem(channel, specs);
    let objective = Objective { terms: ids, branches: branches.to_vec() };
    let ascent = Ascent { problem: &problem, objective: &objective, domain, param, inner_tol: opts.inner_tol() };
    let (best, iterations) = ascent.multistart(seeds, starts, opts.seed, opts.max_iterations, opts.tolerance);
    Solved::from_ascent(best, iterations)
}

/// `min_{q in Q} max_p min_b sum_t I_t(p, q)` with a grid over `Q` refined
/// locally.
fn solve_min_max(
    channel: &RelayChannel,
    space: &Space,
    specs: &[TermSpec],
    branches: &[Vec<usize>],
    q_set: &StateUncertainty,
    opts: &OptimizerOptions,
) -> Solved {
    let (problem, ids) = space.problem(channel, specs);
    let objective = Objective { terms: ids, branches: branches.to_vec() };
    let param = FullJoint { n: problem.n_in() };
    let inner = |q: &[f64], warm: Option<&[f64]>| -> Solved {
        let domain = QDomain::fixed(q.to_vec());
        let ascent =
            Ascent { problem: &problem, objective: &objective, domain: &domain, param: &param, inner_tol: opts.inner_tol() };
        let seeds: Vec<Vec<f64>> = warm.map(|w| vec![w.to_vec()]).unwrap_or_default();
        // The inner problem is concave; two starts guard against stalls at
        // the boundary.
        let (best, iterations) = ascent.multistart(&seeds, 2, opts.seed, opts.max_iterations, opts.tolerance * 1e-2);
        Solved::from_ascent(best, iterations)
    };
    let better = |a: Solved, b: Solved| -> Solved {
        let iterations = a.iterations + b.iterations;
        let converged = a.converged && b.converged;
        let mut best = if b.value < a.value - 1e-12 { b } else { a };
        best.iterations = iterations;
        best.converged = converged;
        best
    };
    let sweep = |points: Vec<Vec<f64>>| -> (Vec<Vec<f64>>, Vec<Solved>) {
        let solved: Vec<Solved> = points.par_iter().map(|q| inner(q, None)).collect();
        (points, solved)
    };
    let argmin = |solved: &[Solved]| -> usize {
        let mut k = 0;
        for (i, s) in solved.iter().enumerate() {
            if s.value < solved[k].value - 1e-12 {
                k = i;
            }
        }
        k
    };
    let total_iterations = |solved: &[Solved]| solved.iter().map(|s| s.iterations).sum::<usize>();

    match QDomain::from_uncertainty(q_set) {
        QDomain::Points(points) => {
            let (_, solved) = sweep(points);
            let k = argmin(&solved);
            let iterations = total_iterations(&solved);
            let converged = solved.iter().all(|s| s.converged);
            let mut best = solved.into_iter().nth(k).unwrap();
            best.iterations = iterations;
            best.converged = converged;
            best
        }
        QDomain::Segment { lo, hi } => {
            let r = opts.grid_resolution;
            let grid: Vec<f64> = (0..=r).map(|k| lo + (hi - lo) * k as f64 / r as f64).collect();
            let (_, solved) = sweep(grid.iter().map(|&t| vec![1.0 - t, t]).collect());
            let k = argmin(&solved);
            let (a, b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(r)]);
            let warm = solved[k].theta.clone();
            let cell = std::sync::Mutex::new((0usize, true));
            let (t, _) = golden_section(
                |t| {
                    let s = inner(&[1.0 - t, t], Some(&warm));
                    let mut c = cell.lock().unwrap();
                    c.0 += s.iterations;
                    c.1 &= s.converged;
                    s.value
                },
                a,
                b,
                (opts.tolerance * 1e-2).max(1e-9),
            );
            let refined = inner(&[1.0 - t, t], Some(&warm));
            let (extra, extra_ok) = *cell.lock().unwrap();
            let iterations = total_iterations(&solved) + extra;
            let converged = solved.iter().all(|s| s.converged) && extra_ok;
            let grid_best = solved.into_iter().nth(k).unwrap();
            let mut best = better(grid_best, refined);
            best.iterations = iterations;
            best.converged = converged;
            best
        }
        QDomain::Polytope { lo, hi } => {
            let states = lo.len();
            let r = opts.grid_resolution.min(64 / states.max(1)).max(2);
            let mut points: Vec<Vec<f64>> = Compositions::new(r, states)
                .map(|c| c.iter().map(|&k| k as f64 / r as f64).collect::<Vec<f64>>())
                .map(|q| crate::channel::project_box_simplex(&q, &lo, &hi))
                .collect();
            points.sort_by(|a, b| a.partial_cmp(b).unwrap());
            points.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
            let (points, solved) = sweep(points);
            let k = argmin(&solved);
            let mut iterations = total_iterations(&solved);
            let mut converged = solved.iter().all(|s| s.converged);
            let mut q = points[k].clone();
            let mut best = solved.into_iter().nth(k).unwrap();
            // Pattern search along pairwise mass transfers.
            let mut h = 1.0 / r as f64;
            while h > (opts.tolerance * 1e-2).max(1e-7) {
                let mut improved = false;
                for i in 0..states {
                    for j in 0..states {
                        if i == j {
                            continue;
                        }
                        let mut cand = q.clone();
                        cand[i] += h;
                        cand[j] -= h;
                        let cand = crate::channel::project_box_simplex(&cand, &lo, &hi);
                        let s = inner(&cand, Some(&best.theta));
                        iterations += s.iterations;
                        converged &= s.converged;
                        if s.value < best.value - 1e-12 {
                            best = s;
                            q = cand;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    h *= 0.5;
                }
            }
            best.iterations = iterations;
            best.converged = converged;
            best
        }
    }
}

fn cutset_specs() -> (Vec<TermSpec>, Vec<Vec<usize>>) {
    (
        vec![
            spec(&[Axis::X, Axis::X1], &[Axis::Y], &[]),
            spec(&[Axis::X], &[Axis::Y, Axis::Y1], &[Axis::X1]),
        ],
        vec![vec![0], vec![1]],
    )
}

fn full_df_specs() -> (Vec<TermSpec>, Vec<Vec<usize>>) {
    (
        vec![
            spec(&[Axis::X, Axis::X1], &[Axis::Y], &[]),
            spec(&[Axis::X], &[Axis::Y1], &[Axis::X1]),
        ],
        vec![vec![0], vec![1]],
    )
}

fn direct_specs() -> (Vec<TermSpec>, Vec<Vec<usize>>) {
    (vec![spec(&[Axis::X], &[Axis::Y], &[Axis::X1])], vec![vec![0]])
}

fn partial_df_specs() -> (Vec<TermSpec>, Vec<Vec<usize>>) {
    (
        vec![
            spec(&[Axis::U, Axis::X1], &[Axis::Y], &[]),
            spec(&[Axis::X], &[Axis::Y], &[Axis::X1, Axis::U]),
            spec(&[Axis::U], &[Axis::Y1], &[Axis::X1]),
        ],
        vec![vec![0, 1], vec![2, 1]],
    )
}

fn orthogonal_specs() -> (Vec<TermSpec>, Vec<Vec<usize>>) {
    (
        vec![
            spec(&[Axis::XPrime, Axis::X1], &[Axis::Y], &[]),
            spec(&[Axis::XDoublePrime], &[Axis::Y1], &[Axis::X1]),
            spec(&[Axis::XPrime], &[Axis::Y], &[Axis::X1]),
        ],
        vec![vec![0], vec![1, 2]],
    )
}

fn prepare(channel: &RelayChannel, q_set: &StateUncertainty, opts: &OptimizerOptions) -> Result<()> {
    channel.validate()?;
    check_states(channel, q_set)?;
    opts.validate()
}

/// `inf_q max_p min{I_q(X,X1;Y), I_q(X;Y,Y1|X1)}`.
pub fn cutset_bound(channel: &RelayChannel, q_set: &StateUncertainty, opts: &OptimizerOptions) -> Result<BoundReport> {
    prepare(channel, q_set, opts)?;
    let space = Space::xx1(channel);
    let (specs, branches) = cutset_specs();
    let solved = solve_min_max(channel, &space, &specs, &branches, q_set, opts);
    finish(channel, BoundKind::Cutset, &space, &specs, branches, solved)
}

/// `max_p inf_q I_q(X;Y|X1)`.
pub fn direct_transmission_bound(
    channel: &RelayChannel,
    q_set: &StateUncertainty,
    opts: &OptimizerOptions,
) -> Result<BoundReport> {
    prepare(channel, q_set, opts)?;
    let space = Space::xx1(channel);
    let (specs, branches) = direct_specs();
    let param = FullJoint { n: space.xx1.len() };
    let domain = QDomain::from_uncertainty(q_set);
    let solved = solve_max_min(channel, &space, &specs, &branches, &domain, &param, &[], opts.multistart_count, opts);
    finish(channel, BoundKind::Direct, &space, &specs, branches, solved)
}

/// `max_p min{inf_q I_q(X,X1;Y), inf_q I_q(X;Y1|X1)}`.
pub fn full_df_bound(channel: &RelayChannel, q_set: &StateUncertainty, opts: &OptimizerOptions) -> Result<BoundReport> {
    prepare(channel, q_set, opts)?;
    let space = Space::xx1(channel);
    let (specs, branches) = full_df_specs();
    let param = FullJoint { n: space.xx1.len() };
    let domain = QDomain::from_uncertainty(q_set);
    let solved = solve_max_min(channel, &space, &specs, &branches, &domain, &param, &[], opts.multistart_count, opts);
    finish(channel, BoundKind::FullDf, &space, &specs, branches, solved)
}

/// `max_{p(u,x,x1)} min{inf_q I_q(U,X1;Y) + inf_q I_q(X;Y|X1,U),
/// inf_q I_q(U;Y1|X1) + inf_q I_q(X;Y|X1,U)}`, each infimum taken separately.
pub fn partial_df_bound(channel: &RelayChannel, q_set: &StateUncertainty, opts: &OptimizerOptions) -> Result<BoundReport> {
    partial_df_bound_with(channel, q_set, ForcedU::Free, opts)
}

/// [`partial_df_bound`] with `U` optionally pinned to a function of `X`.
pub fn partial_df_bound_with(
    channel: &RelayChannel,
    q_set: &StateUncertainty,
    forced: ForcedU,
    opts: &OptimizerOptions,
) -> Result<BoundReport> {
    prepare(channel, q_set, opts)?;
    let a = channel.sizes();
    let (specs, branches) = partial_df_specs();
    let domain = QDomain::from_uncertainty(q_set);
    let pairs = a.x * a.x1;
    // Input index of (u, x, x1) is u * pairs + x * |X1| + x1.
    let embed = |u_of_x: &dyn Fn(usize) -> usize| -> Vec<usize> {
        (0..pairs).map(|xx1| u_of_x(xx1 / a.x1) * pairs + xx1).collect()
    };
    let (space, solved) = match forced {
        ForcedU::Free => {
            let u = opts.u_cardinality.unwrap_or(pairs + 2);
            let space = Space::uxx1(channel, u);
            // Seed with the direct and full decode-forward optimizers placed
            // on U = const and U = X respectively.
            let direct = direct_transmission_bound(channel, q_set, opts)?;
            let full = full_df_bound(channel, q_set, opts)?;
            let mut seeds = Vec::new();
            let mut s = vec![0.0; u * pairs];
            s[..pairs].copy_from_slice(direct.argmax_p.probs());
            seeds.push(s);
            if u >= a.x {
                let mut s = vec![0.0; u * pairs];
                for (xx1, &p) in full.argmax_p.probs().iter().enumerate() {
                    s[(xx1 / a.x1) * pairs + xx1] = p;
                }
                seeds.push(s);
            }
            let param = FullJoint { n: u * pairs };
            let count = opts.multistart_count + seeds.len();
            let solved = solve_max_min(channel, &space, &specs, &branches, &domain, &param, &seeds, count, opts);
            (space, solved)
        }
        ForcedU::Empty => {
            let space = Space::uxx1(channel, 1);
            let param = FullJoint { n: pairs };
            let solved = solve_max_min(channel, &space, &specs, &branches, &domain, &param, &[], opts.multistart_count, opts);
            (space, solved)
        }
        ForcedU::EqualsX => {
            let space = Space::uxx1(channel, a.x);
            let param = Embedding { n_input: a.x * pairs, target: embed(&|x| x) };
            let solved = solve_max_min(channel, &space, &specs, &branches, &domain, &param, &[], opts.multistart_count, opts);
            (space, solved)
        }
        ForcedU::EqualsXDoublePrime(split) => {
            if split.x_prime * split.x_double_prime != a.x {
                return Err(AvrcError::InvalidArgument("split does not match |X|".into()));
            }
            let space = Space::uxx1(channel, split.x_double_prime);
            let param = Embedding { n_input: split.x_double_prime * pairs, target: embed(&|x| split.parts(x).1) };
            let solved = solve_max_min(channel, &space, &specs, &branches, &domain, &param, &[], opts.multistart_count, opts);
            (space, solved)
        }
    };
    finish(channel, BoundKind::PartialDf, &space, &specs, branches, solved)
}

/// Closed forms for the degraded classes with a state-free link:
/// degraded gives `max_p min{inf_q I_q(X,X1;Y), I(X;Y1|X1)}`, reversely
/// degraded gives `min_q max_p I_q(X;Y|X1)`.
pub fn degraded_closed_form(
    channel: &RelayChannel,
    q_set: &StateUncertainty,
    opts: &OptimizerOptions,
) -> Result<BoundReport> {
    prepare(channel, q_set, opts)?;
    let space = Space::xx1(channel);
    if channel.check_degraded(STRUCTURE_TOL).holds && channel.relay_link_state_free(STRUCTURE_TOL) {
        let (specs, branches) = full_df_specs();
        let param = FullJoint { n: space.xx1.len() };
        let domain = QDomain::from_uncertainty(q_set);
        let solved = solve_max_min(channel, &space, &specs, &branches, &domain, &param, &[], opts.multistart_count, opts);
        return finish(channel, BoundKind::DegradedClosedForm, &space, &specs, branches, solved);
    }
    if channel.check_reversely_degraded(STRUCTURE_TOL).holds && channel.direct_link_state_free(STRUCTURE_TOL) {
        let (specs, branches) = direct_specs();
        let solved = solve_min_max(channel, &space, &specs, &branches, q_set, opts);
        return finish(channel, BoundKind::DegradedClosedForm, &space, &specs, branches, solved);
    }
    Err(AvrcError::StructureUnmet(
        "need a degraded channel with state-free relay link or a reversely degraded channel with state-free direct link"
            .into(),
    ))
}

/// `max` over `p(x1) p(x'|x1) p(x''|x1)` of
/// `min{I(X',X1;Y), inf_q I_q(X'';Y1|X1) + I(X';Y|X1)}`.
pub fn orthogonal_components_capacity(
    channel: &RelayChannel,
    q_set: &StateUncertainty,
    split: OrthogonalSplit,
    opts: &OptimizerOptions,
) -> Result<BoundReport> {
    prepare(channel, q_set, opts)?;
    let report = channel.detect_orthogonal_sender(split, STRUCTURE_TOL)?;
    if !report.factorizes || !report.direct_link_state_free {
        return Err(AvrcError::StructureUnmet(format!(
            "orthogonal factorization {} with state-free direct link {}",
            report.factorizes, report.direct_link_state_free
        )));
    }
    let space = Space::orthogonal(channel, split);
    let (specs, branches) = orthogonal_specs();
    let param = ProductForm { xp: split.x_prime, xpp: split.x_double_prime, x1: channel.sizes().x1 };
    let domain = QDomain::from_uncertainty(q_set);
    let solved = solve_max_min(channel, &space, &specs, &branches, &domain, &param, &[], opts.multistart_count, opts);
    finish(channel, BoundKind::Orthogonal, &space, &specs, branches, solved)
}

/// Both orders of the cutset objective `min{I_q(X,X1;Y), I_q(X;Y,Y1|X1)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxGap {
    pub min_max: f64,
    pub max_min: f64,
    pub gap: f64,
}

/// `|min_q max_p F - max_p min_q F|` for the cutset objective `F`.
pub fn minimax_gap(channel: &RelayChannel, q_set: &StateUncertainty, opts: &OptimizerOptions) -> Result<f64> {
    minimax_orders(channel, q_set, opts).map(|g| g.gap)
}

pub fn minimax_orders(channel: &RelayChannel, q_set: &StateUncertainty, opts: &OptimizerOptions) -> Result<MinimaxGap> {
    prepare(channel, q_set, opts)?;
    let space = Space::xx1(channel);
    let (specs, branches) = cutset_specs();
    let min_max = solve_min_max(channel, &space, &specs, &branches, q_set, opts).value;
    let param = FullJoint { n: space.xx1.len() };
    let domain = QDomain::from_uncertainty(q_set);
    let max_min =
        solve_max_min(channel, &space, &specs, &branches, &domain, &param, &[], opts.multistart_count, opts).value;
    Ok(MinimaxGap { min_max, max_min, gap: (min_max - max_min).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::channel::Alphabets;
    use crate::information::binary_entropy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simplex(s: usize) -> StateUncertainty {
        StateUncertainty::full_simplex(s)
    }

    fn example_target(theta: f64) -> f64 {
        0.5f64.min(1.0 - binary_entropy(theta).unwrap())
    }

    #[test]
    fn noiseless_pipe_bounds_are_one() {
        let ch = catalog::noiseless_bit_pipe();
        let o = OptimizerOptions::default();
        for r in [
            cutset_bound(&ch, &simplex(1), &o).unwrap(),
            direct_transmission_bound(&ch, &simplex(1), &o).unwrap(),
        ] {
            assert!((r.value - 1.0).abs() < 1e-6, "{:?}", r.kind);
        }
    }

    #[test]
    fn xor_state_bounds_vanish() {
        let ch = catalog::xor_state_channel();
        let o = OptimizerOptions::default();
        let c = cutset_bound(&ch, &simplex(2), &o).unwrap();
        assert!(c.value < 1e-6);
        assert!((c.terms[0].worst_q[0] - 0.5).abs() < 1e-3);
        assert!(direct_transmission_bound(&ch, &simplex(2), &o).unwrap().value < 1e-6);
    }

    #[test]
    fn xor_state_with_bounded_state_law() {
        // q(1) <= 0.11 turns the channel into at worst a BSC(0.11).
        let ch = catalog::xor_state_channel();
        let q = StateUncertainty::boxed(vec![0.89, 0.0], vec![1.0, 0.11]).unwrap();
        let r = direct_transmission_bound(&ch, &q, &OptimizerOptions::default()).unwrap();
        assert!((r.value - (1.0 - binary_entropy(0.11).unwrap())).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn example_channel_bounds() {
        let o = OptimizerOptions::default();
        for theta in [0.0, 0.25, 0.5] {
            let ch = catalog::bsc_relay_with_additive_state(theta);
            let target = example_target(theta);
            let f = full_df_bound(&ch, &simplex(2), &o).unwrap();
            assert!((f.value - target).abs() < 1e-3, "full df {theta}: {}", f.value);
            let c = cutset_bound(&ch, &simplex(2), &o).unwrap();
            assert!((c.value - target).abs() < 1e-3, "cutset {theta}: {}", c.value);
            let d = degraded_closed_form(&ch, &simplex(2), &o).unwrap();
            assert!((d.value - target).abs() < 1e-3);
            assert!(direct_transmission_bound(&ch, &simplex(2), &o).unwrap().value < 1e-6);
            assert!(f.diagnostics.residual < 1e-9);
        }
    }

    #[test]
    fn relay_link_destroyed_kills_full_df() {
        let sizes = Alphabets { x: 2, x1: 2, s: 1, y: 2, y1: 1 };
        let ch = RelayChannel::from_fn(sizes, |x, _, _, y, _| (x == y) as u8 as f64).unwrap();
        let r = full_df_bound(&ch, &simplex(1), &OptimizerOptions::default()).unwrap();
        assert!(r.value < 1e-6);
    }

    #[test]
    fn single_state_full_df_matches_direct_evaluation() {
        // Classical decode-forward on a fixed channel, checked against a
        // fine grid over p(x, x1) for binary inputs.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ch = catalog::random_channel(&mut rng, Alphabets { x: 2, x1: 2, s: 1, y: 2, y1: 2 });
        let r = full_df_bound(&ch, &simplex(1), &OptimizerOptions::default()).unwrap();
        let space = Space::xx1(&ch);
        let (specs, _) = full_df_specs();
        let (problem, ids) = space.problem(&ch, &specs);
        let steps = 60;
        let mut best: f64 = 0.0;
        for a in 0..=steps {
            for b in 0..=steps - a {
                for c in 0..=steps - a - b {
                    let d = steps - a - b - c;
                    let p: Vec<f64> = [a, b, c, d].iter().map(|&k| k as f64 / steps as f64).collect();
                    let v = problem.term_value(ids[0], &p, &[1.0]).min(problem.term_value(ids[1], &p, &[1.0]));
                    best = best.max(v);
                }
            }
        }
        assert!(r.value >= best - 1e-9, "{} < grid {best}", r.value);
        assert!(r.value - best < 5e-3);
    }

    #[test]
    fn structure_preconditions_are_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = catalog::random_channel(&mut rng, Alphabets { x: 2, x1: 2, s: 2, y: 2, y1: 2 });
        let o = OptimizerOptions::default();
        assert!(matches!(degraded_closed_form(&ch, &simplex(2), &o), Err(AvrcError::StructureUnmet(_))));
        let split = OrthogonalSplit { x_prime: 1, x_double_prime: 2 };
        let ex = catalog::bsc_relay_with_additive_state(0.1);
        assert!(matches!(
            orthogonal_components_capacity(&ex, &simplex(2), split, &o),
            Err(AvrcError::StructureUnmet(_))
        ));
    }

    #[test]
    fn reversely_degraded_closed_form_ignores_state_arm() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 2, y1: 2 };
        let ch = catalog::random_reversely_degraded(&mut rng, sizes, true);
        let o = OptimizerOptions::default();
        let r = degraded_closed_form(&ch, &simplex(2), &o).unwrap();
        // Direct link alone: max_p I(X;Y|X1) evaluated at any q.
        let d = direct_transmission_bound(&ch, &simplex(2), &o).unwrap();
        assert!((r.value - d.value).abs() < 1e-4, "{} vs {}", r.value, d.value);
    }

    #[test]
    fn orthogonal_dead_arms() {
        let o = OptimizerOptions::default();
        let split = OrthogonalSplit { x_prime: 2, x_double_prime: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // |Y| = 1 kills the direct link.
        let ch = catalog::random_orthogonal(&mut rng, split, 2, 2, 1, 2);
        let r = orthogonal_components_capacity(&ch, &simplex(2), split, &o).unwrap();
        assert!(r.value < 1e-6);
        // |Y1| = 1: value is max min{I(X',X1;Y), I(X';Y|X1)} = max I(X';Y|X1).
        let ch = catalog::random_orthogonal(&mut rng, split, 2, 2, 3, 1);
        let r = orthogonal_components_capacity(&ch, &simplex(2), split, &o).unwrap();
        let d = direct_transmission_bound(&ch, &simplex(2), &o).unwrap();
        assert!((r.value - d.value).abs() < 1e-3, "{} vs {}", r.value, d.value);
    }

    #[test]
    fn reported_point_reproduces_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = catalog::random_channel(&mut rng, Alphabets { x: 2, x1: 2, s: 2, y: 2, y1: 3 });
        let o = OptimizerOptions { multistart_count: 3, ..Default::default() };
        for r in [
            cutset_bound(&ch, &simplex(2), &o).unwrap(),
            partial_df_bound(&ch, &simplex(2), &o).unwrap(),
        ] {
            assert!((reevaluate(&ch, &r).unwrap() - r.value).abs() <= r.diagnostics.residual + 1e-12);
            assert!(r.diagnostics.residual < 1e-9);
        }
    }

    #[test]
    fn three_state_box_inner_minimum() {
        // Y = X + S mod 3 over ternary alphabets.
        let sizes = Alphabets { x: 3, x1: 1, s: 3, y: 3, y1: 1 };
        let ch = RelayChannel::from_fn(sizes, |x, _, s, y, _| (y == (x + s) % 3) as u8 as f64).unwrap();
        let q = StateUncertainty::boxed(vec![0.8, 0.0, 0.0], vec![1.0, 0.1, 0.1]).unwrap();
        let r = direct_transmission_bound(&ch, &q, &OptimizerOptions::default()).unwrap();
        // Worst law (0.8, 0.1, 0.1) gives log2 3 - H(0.8, 0.1, 0.1).
        let h = -(0.8f64 * 0.8f64.log2() + 0.2 * 0.1f64.log2());
        assert!((r.value - (3f64.log2() - h)).abs() < 1e-5, "{}", r.value);
    }

    #[test]
    fn enlarging_q_never_raises_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let o = OptimizerOptions { multistart_count: 3, ..Default::default() };
        for _ in 0..3 {
            let ch = catalog::random_channel(&mut rng, Alphabets { x: 2, x1: 2, s: 2, y: 2, y1: 2 });
            let small = StateUncertainty::finite(vec![Pmf::new(vec![0.3, 0.7]).unwrap(), Pmf::new(vec![0.9, 0.1]).unwrap()]).unwrap();
            let big = simplex(2);
            let pairs = [
                (full_df_bound(&ch, &small, &o).unwrap().value, full_df_bound(&ch, &big, &o).unwrap().value),
                (direct_transmission_bound(&ch, &small, &o).unwrap().value, direct_transmission_bound(&ch, &big, &o).unwrap().value),
                (cutset_bound(&ch, &small, &o).unwrap().value, cutset_bound(&ch, &big, &o).unwrap().value),
            ];
            for (s, b) in pairs {
                assert!(b <= s + 1e-6, "{b} > {s}");
            }
        }
    }

    #[test]
    fn minimax_orders_coincide_on_certified_classes() {
        let o = OptimizerOptions { tolerance: 1e-3, ..Default::default() };
        let ex = catalog::bsc_relay_with_additive_state(0.2);
        assert!(minimax_gap(&ex, &simplex(2), &o).unwrap() < 2.0 * o.tolerance);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sizes = Alphabets { x: 2, x1: 2, s: 2, y: 2, y1: 2 };
        let ch = catalog::random_reversely_degraded(&mut rng, sizes, true);
        let g = minimax_orders(&ch, &simplex(2), &o).unwrap();
        assert!(g.gap < 2.0 * o.tolerance, "{g:?}");
        assert!(g.max_min <= g.min_max + 2.0 * o.tolerance);
    }

    #[test]
    fn orthogonal_matches_forced_double_prime() {
        let o = OptimizerOptions::default();
        let split = OrthogonalSplit { x_prime: 2, x_double_prime: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let ch = catalog::random_orthogonal(&mut rng, split, 2, 2, 2, 2);
            let a = orthogonal_components_capacity(&ch, &simplex(2), split, &o).unwrap().value;
            let b = partial_df_bound_with(&ch, &simplex(2), ForcedU::EqualsXDoublePrime(split), &o).unwrap().value;
            assert!((a - b).abs() < 2.0 * o.tolerance, "{a} vs {b}");
        }
    }
}
