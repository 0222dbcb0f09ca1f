//! Bounded-variable revised simplex for the dual form of the discretized L1
//! problem:
//!
//!   maximize mu   subject to   sum_j A_j v_j + lam * mu = 0,   |v_j| <= w_j.
//!
//! The basis has only (degree+1) columns, so the factorization stays tiny and
//! well conditioned no matter how fine the node grid is. The primal
//! polynomial is recovered from the row multipliers at optimality.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BoxInstance {
    /// Equality row count (degree + 1).
    pub rows: usize,
    /// Dense column per bounded variable, height `rows`.
    pub cols: Vec<Vec<f64>>,
    /// |v_j| <= bound_j (bound_j >= 0).
    pub bounds: Vec<f64>,
    /// Objective coefficients of the bounded variables (maximized).
    pub obj: Vec<f64>,
    /// Column of a free variable added to the maximized objective.
    pub free_col: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BoxSolution {
    /// Optimal objective value (free variable plus obj.v).
    pub mu: f64,
    /// Bounded variables at optimality.
    pub v: Vec<f64>,
    /// Row multipliers.
    pub y: Vec<f64>,
    pub nonunique: bool,
    pub iterations: usize,
}

const TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, PartialEq)]
enum State {
    Lower,
    Upper,
    Basic,
}

struct Solver<'a> {
    inst: &'a BoxInstance,
    m: usize,
    ncols: usize, // bounded + free + artificials
    n_bounded: usize,
    free_idx: usize,
    art_from: usize,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    phase1: bool,
}

impl<'a> Solver<'a> {
    fn col(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n_bounded {
            out.copy_from_slice(&self.inst.cols[j]);
        } else if j == self.free_idx {
            if let Some(fc) = &self.inst.free_col {
                out.copy_from_slice(fc);
            }
        } else {
            out[j - self.art_from] = 1.0;
        }
    }

    fn lower(&self, j: usize) -> f64 {
        if j < self.n_bounded {
            -self.inst.bounds[j]
        } else if j == self.free_idx {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    }

    fn upper(&self, j: usize) -> f64 {
        if j < self.n_bounded {
            self.inst.bounds[j]
        } else {
            f64::INFINITY
        }
    }

    fn cost(&self, j: usize) -> f64 {
        if self.phase1 {
            if j >= self.art_from {
                1.0
            } else {
                0.0
            }
        } else if j == self.free_idx {
            -1.0
        } else if j < self.n_bounded {
            -self.inst.obj[j]
        } else {
            0.0
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if j == self.free_idx {
            return 0.0; // free variable rests at zero until it enters
        }
        match self.state[j] {
            State::Lower => self.lower(j),
            State::Upper => self.upper(j),
            State::Basic => unreachable!(),
        }
    }

    fn refactorize(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut col = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            self.col(bj, &mut col);
            for r in 0..m {
                b[(r, i)] = col[r];
            }
        }
        let inv = b.try_inverse().ok_or_else(|| {
            Error::InvalidArgument("singular basis in bounded simplex".into())
        })?;
        for i in 0..m {
            for r in 0..m {
                self.binv[i * m + r] = inv[(i, r)];
            }
        }
        self.recompute_xb();
        Ok(())
    }

    fn recompute_xb(&mut self) {
        let m = self.m;
        // rhs is zero; basic values balance the nonbasic bound values
        let mut resid = vec![0.0; m];
        let mut col = vec![0.0; m];
        for j in 0..self.ncols {
            if self.state[j] != State::Basic {
                let v = self.nonbasic_value(j);
                if v != 0.0 {
                    self.col(j, &mut col);
                    for r in 0..m {
                        resid[r] -= col[r] * v;
                    }
                }
            }
        }
        for i in 0..m {
            let mut acc = 0.0;
            for r in 0..m {
                acc += self.binv[i * m + r] * resid[r];
            }
            self.xb[i] = acc;
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let c = self.cost(bj);
            if c != 0.0 {
                for r in 0..m {
                    y[r] += c * self.binv[i * m + r];
                }
            }
        }
        y
    }

    fn binv_col(&self, j: usize, out: &mut [f64]) {
        let m = self.m;
        let mut col = vec![0.0; m];
        self.col(j, &mut col);
        for i in 0..m {
            let mut acc = 0.0;
            for r in 0..m {
                acc += self.binv[i * m + r] * col[r];
            }
            out[i] = acc;
        }
    }

    fn pivot_update(&mut self, leave_row: usize, u: &[f64]) {
        let m = self.m;
        let piv = u[leave_row];
        for r in 0..m {
            self.binv[leave_row * m + r] /= piv;
        }
        for i in 0..m {
            if i != leave_row && u[i] != 0.0 {
                for r in 0..m {
                    self.binv[i * m + r] -= u[i] * self.binv[leave_row * m + r];
                }
            }
        }
    }

    fn run(&mut self, bland_after: usize) -> Result<usize> {
        let mut iterations = 0;
        let mut u = vec![0.0; self.m];
        let max_iter = 60 * (self.ncols + self.m) + 10_000;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::Cycling(iterations));
            }
            if iterations % 100 == 0 {
                self.refactorize()?;
            }
            let bland = iterations > bland_after;
            let y = self.duals();
            // entering: direction of improvement for a minimization
            let mut entering: Option<(usize, f64)> = None;
            let mut best = TOL;
            for j in 0..self.ncols {
                if self.state[j] == State::Basic {
                    continue;
                }
                if !self.phase1 && j >= self.art_from {
                    continue;
                }
                if j == self.free_idx && self.inst.free_col.is_none() {
                    continue;
                }
                let d = self.cost(j)
                    - self
                        .inst_col_dot(j, &y);
                let (improves, dir) = if j == self.free_idx {
                    (d.abs() > TOL, -d.signum())
                } else {
                    match self.state[j] {
                        State::Lower => (d < -TOL, 1.0),
                        State::Upper => (d > TOL, -1.0),
                        State::Basic => unreachable!(),
                    }
                };
                if improves {
                    let score = d.abs();
                    if bland {
                        entering = Some((j, dir));
                        break;
                    }
                    if score > best {
                        best = score;
                        entering = Some((j, dir));
                    }
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(iterations);
            };
            self.binv_col(q, &mut u);
            // step length: first basic variable to hit one of its bounds, or
            // the entering variable flipping to its other bound
            let mut t_best = if q == self.free_idx {
                f64::INFINITY
            } else {
                self.upper(q) - self.lower(q)
            };
            let mut leave: Option<usize> = None;
            let mut leave_to_upper = false;
            for i in 0..self.m {
                let delta = -dir * u[i];
                let bi = self.basis[i];
                if delta < -PIVOT_TOL {
                    // decreasing toward its lower bound
                    let lo = self.lower(bi);
                    if lo.is_finite() {
                        let t = (self.xb[i] - lo) / (-delta);
                        if t < t_best - 1e-15 {
                            t_best = t;
                            leave = Some(i);
                            leave_to_upper = false;
                        }
                    }
                } else if delta > PIVOT_TOL {
                    let hi = self.upper(bi);
                    if hi.is_finite() {
                        let t = (hi - self.xb[i]) / delta;
                        if t < t_best - 1e-15 {
                            t_best = t;
                            leave = Some(i);
                            leave_to_upper = true;
                        }
                    }
                }
            }
            if !t_best.is_finite() {
                return Err(Error::Unbounded);
            }
            let t = t_best.max(0.0);
            match leave {
                None => {
                    // bound flip of the entering variable
                    for i in 0..self.m {
                        self.xb[i] -= dir * t * u[i];
                    }
                    self.state[q] = match self.state[q] {
                        State::Lower => State::Upper,
                        State::Upper => State::Lower,
                        State::Basic => unreachable!(),
                    };
                }
                Some(r) => {
                    let entering_val = if q == self.free_idx {
                        dir * t
                    } else {
                        self.nonbasic_value(q) + dir * t
                    };
                    for i in 0..self.m {
                        self.xb[i] -= dir * t * u[i];
                    }
                    let old = self.basis[r];
                    self.state[old] = if leave_to_upper {
                        State::Upper
                    } else {
                        State::Lower
                    };
                    self.pivot_update(r, &u);
                    self.basis[r] = q;
                    self.state[q] = State::Basic;
                    self.xb[r] = entering_val;
                }
            }
        }
    }

    fn inst_col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n_bounded {
            self.inst.cols[j].iter().zip(y).map(|(&a, &b)| a * b).sum()
        } else if j == self.free_idx {
            match &self.inst.free_col {
                Some(fc) => fc.iter().zip(y).map(|(&a, &b)| a * b).sum(),
                None => 0.0,
            }
        } else {
            y[j - self.art_from]
        }
    }
}

/// Maximizes the free variable subject to the balance equations and the box
/// bounds. Two-phase; artificial columns carry phase 1.
pub fn solve_box_lp(inst: &BoxInstance) -> Result<BoxSolution> {
    let m = inst.rows;
    let n = inst.cols.len();
    if inst.bounds.len() != n || inst.obj.len() != n {
        return Err(Error::InvalidArgument("inconsistent box instance".into()));
    }
    if inst.free_col.as_ref().is_some_and(|fc| fc.len() != m) {
        return Err(Error::InvalidArgument("bad free column".into()));
    }
    for c in &inst.cols {
        if c.len() != m {
            return Err(Error::InvalidArgument("bad column height".into()));
        }
    }
    if inst.bounds.iter().any(|&b| !(b >= 0.0)) {
        return Err(Error::InvalidArgument("negative bound".into()));
    }
    solve_with_row_flips(inst)
}

fn solve_with_row_flips(inst: &BoxInstance) -> Result<BoxSolution> {
    // choose row signs from the all-lower starting residual so the
    // artificial basis starts feasible
    let m = inst.rows;
    let n = inst.cols.len();
    let mut resid = vec![0.0; m];
    for (j, col) in inst.cols.iter().enumerate() {
        for r in 0..m {
            resid[r] -= col[r] * (-inst.bounds[j]);
        }
    }
    let signs: Vec<f64> = resid.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    let flipped = BoxInstance {
        rows: m,
        cols: inst
            .cols
            .iter()
            .map(|c| c.iter().zip(&signs).map(|(&v, &s)| v * s).collect())
            .collect(),
        bounds: inst.bounds.clone(),
        obj: inst.obj.clone(),
        free_col: inst
            .free_col
            .as_ref()
            .map(|fc| fc.iter().zip(&signs).map(|(&v, &s)| v * s).collect()),
    };
    let free_idx = n;
    let art_from = n + 1;
    let ncols = n + 1 + m;
    let mut solver = Solver {
        inst: &flipped,
        m,
        ncols,
        n_bounded: n,
        free_idx,
        art_from,
        state: vec![State::Lower; ncols],
        basis: (art_from..art_from + m).collect(),
        binv: vec![0.0; m * m],
        xb: vec![0.0; m],
        phase1: true,
    };
    for i in 0..m {
        solver.state[art_from + i] = State::Basic;
    }
    solver.refactorize()?;
    let mut iterations = solver.run(40 * (ncols + m))?;
    let p1: f64 = solver
        .basis
        .iter()
        .enumerate()
        .filter(|&(_, &bj)| bj >= art_from)
        .map(|(i, _)| solver.xb[i].abs())
        .sum();
    if p1 > 1e-8 {
        return Err(Error::Infeasible);
    }
    solver.phase1 = false;
    iterations += solver.run(40 * (ncols + m))?;
    let mut out = finish(solver, iterations)?;
    // undo row flips in the multipliers
    for (yi, s) in out.y.iter_mut().zip(&signs) {
        *yi *= s;
    }
    Ok(out)
}

fn finish(mut solver: Solver<'_>, iterations: usize) -> Result<BoxSolution> {
    solver.refactorize()?;
    solver.phase1 = false;
    let y = solver.duals();
    let mut v = vec![0.0; solver.n_bounded];
    let mut mu = 0.0;
    for j in 0..solver.n_bounded {
        if solver.state[j] != State::Basic {
            v[j] = solver.nonbasic_value(j);
        }
    }
    for (i, &bj) in solver.basis.iter().enumerate() {
        if bj < solver.n_bounded {
            v[bj] = solver.xb[i];
        } else if bj == solver.free_idx {
            mu = solver.xb[i];
        }
    }
    mu += solver
        .inst
        .obj
        .iter()
        .zip(&v)
        .map(|(&c, &vj)| c * vj)
        .sum::<f64>();
    let mut nonunique = false;
    for j in 0..solver.n_bounded {
        if solver.state[j] != State::Basic {
            let d = -solver.inst_col_dot(j, &y);
            if d.abs() <= TOL {
                nonunique = true;
                break;
            }
        }
    }
    Ok(BoxSolution {
        mu,
        v,
        y,
        nonunique,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tiny_markov_instance() {
        // maximize mu with v1 + v2 + mu = 0, |v| <= 1: mu = 2
        let inst = BoxInstance {
            rows: 1,
            cols: vec![vec![1.0], vec![1.0]],
            bounds: vec![1.0, 1.0],
            obj: vec![0.0, 0.0],
            free_col: Some(vec![1.0]),
        };
        let sol = solve_box_lp(&inst).unwrap();
        assert_abs_diff_eq!(sol.mu, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn two_row_instance() {
        // v_j with columns (1, x_j): maximize mu s.t. sum v_j = 0,
        // sum x_j v_j + mu = 0, |v_j| <= 1, nodes -1, 0, 1: mu = 2
        let inst = BoxInstance {
            rows: 2,
            cols: vec![vec![1.0, -1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            bounds: vec![1.0, 1.0, 1.0],
            obj: vec![0.0, 0.0, 0.0],
            free_col: Some(vec![0.0, 1.0]),
        };
        let sol = solve_box_lp(&inst).unwrap();
        assert_abs_diff_eq!(sol.mu, 2.0, epsilon = 1e-9);
        // residuals balance
        assert_abs_diff_eq!(sol.v.iter().sum::<f64>(), 0.0, epsilon = 1e-9);
    }
}
