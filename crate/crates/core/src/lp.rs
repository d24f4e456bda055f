//! Dense two-phase simplex for small linear programs
//! `min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0`.
//! Dantzig pricing with a fallback to Bland's rule on degenerate stalls; the
//! problems solved here have at most a few hundred rows.

use crate::error::{AvrcError, Result};

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    t: Vec<Vec<f64>>,
    /// Reduced costs of the current objective, same layout.
    z: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
}

/// Degenerate pivots in a row before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        self.t[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(v, pr)| *v -= f * pr);
                row[c] = 0.0;
            }
        }
        let f = self.z[c];
        if f != 0.0 {
            self.z.iter_mut().zip(&pivot_row).for_each(|(v, pr)| *v -= f * pr);
            self.z[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn set_cost(&mut self, cost: &[f64]) {
        let mut z = cost.to_vec();
        z.push(0.0);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                z.iter_mut().zip(&self.t[i]).for_each(|(v, a)| *v -= cb * a);
            }
        }
        self.z = z;
    }

    /// Minimizes `cost . x` over columns with `allowed[j]`; returns false
    /// when unbounded. Dantzig pricing, falling back to Bland's rule while
    /// pivots stay degenerate.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool], max_pivots: usize) -> Result<bool> {
        self.set_cost(cost);
        let mut stalled = 0usize;
        loop {
            if self.pivots > max_pivots {
                return Err(AvrcError::LinearProgram("pivot limit reached".into()));
            }
            let bland = stalled >= STALL_LIMIT;
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..self.cols {
                if !allowed[j] || self.z[j] >= -PIVOT_TOL {
                    continue;
                }
                if bland {
                    enter = Some((j, self.z[j]));
                    break;
                }
                if enter.map_or(true, |(_, best)| self.z[j] < best) {
                    enter = Some((j, self.z[j]));
                }
            }
            let Some((c, _)) = enter else { return Ok(true) };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[c] > PIVOT_TOL {
                    let ratio = row[self.cols].max(0.0) / row[c];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                            let better = if !tie {
                                ratio < best
                            } else if bland {
                                self.basis[i] < self.basis[k]
                            } else {
                                row[c] > self.t[k][c]
                            };
                            if better { Some((i, ratio)) } else { Some((k, best)) }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else { return Ok(false) };
            stalled = if ratio <= 1e-12 { stalled + 1 } else { 0 };
            self.pivot(r, c);
        }
    }
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.c.len();
        if self.a_ub.iter().chain(&self.a_eq).any(|r| r.len() != n)
            || self.a_ub.len() != self.b_ub.len()
            || self.a_eq.len() != self.b_eq.len()
        {
            return Err(AvrcError::DimensionMismatch("linear program shapes disagree".into()));
        }
        let m_ub = self.a_ub.len();
        let m = m_ub + self.a_eq.len();
        // Columns: originals, one slack per inequality, one artificial per row.
        let cols = n + m_ub + m;
        let mut t = Vec::with_capacity(m);
        for (i, (row, &b)) in self.a_ub.iter().zip(&self.b_ub).enumerate() {
            let mut r = vec![0.0; cols + 1];
            r[..n].copy_from_slice(row);
            r[n + i] = 1.0;
            r[cols] = b;
            t.push(r);
        }
        for (row, &b) in self.a_eq.iter().zip(&self.b_eq) {
            let mut r = vec![0.0; cols + 1];
            r[..n].copy_from_slice(row);
            r[cols] = b;
            t.push(r);
        }
        for (i, r) in t.iter_mut().enumerate() {
            if r[cols] < 0.0 {
                r.iter_mut().for_each(|v| *v = -*v);
            }
            r[n + m_ub + i] = 1.0;
        }
        let mut tab = Tableau { t, z: Vec::new(), basis: (0..m).map(|i| n + m_ub + i).collect(), cols, pivots: 0 };
        let max_pivots = 50 * (cols + m) + 1000;

        let mut phase1 = vec![0.0; cols];
        phase1[n + m_ub..].iter_mut().for_each(|v| *v = 1.0);
        tab.optimize(&phase1, &vec![true; cols], max_pivots)?;
        let infeasibility: f64 = tab.basis.iter().enumerate().filter(|(_, &b)| b >= n + m_ub).map(|(i, _)| tab.t[i][cols]).sum();
        if infeasibility > FEAS_TOL {
            return Err(AvrcError::LinearProgram(format!("infeasible (phase one residual {infeasibility:e})")));
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.t.len() {
            if tab.basis[i] >= n + m_ub {
                if let Some(j) = (0..n + m_ub).find(|&j| tab.t[i][j].abs() > PIVOT_TOL) {
                    tab.pivot(i, j);
                } else {
                    tab.t.remove(i);
                    tab.basis.remove(i);
                    continue;
                }
            }
            i += 1;
        }
        let mut cost = vec![0.0; cols];
        cost[..n].copy_from_slice(&self.c);
        let mut allowed = vec![true; cols];
        allowed[n + m_ub..].iter_mut().for_each(|v| *v = false);
        if !tab.optimize(&cost, &allowed, max_pivots)? {
            return Err(AvrcError::LinearProgram("unbounded".into()));
        }
        let mut x = vec![0.0; n];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < n {
                x[b] = tab.t[i][cols].max(0.0);
            }
        }
        let objective = self.c.iter().zip(&x).map(|(a, b)| a * b).sum();
        Ok(LpSolution { x, objective, pivots: tab.pivots })
    }
}
