//! Dense two-phase revised simplex with an explicit basis inverse.
//!
//! Sized for the discretized L1 instances this crate produces (a few thousand
//! rows). Dantzig pricing by default; a stall detector switches to Bland's
//! rule, which breaks degenerate cycles at the cost of speed.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// a.x >= b
    Ge,
    /// a.x = b
    Eq,
}

/// Column-wise sparse LP: minimize c.x subject to rows of kind Ge/Eq, with
/// x_j >= 0 unless marked free.
#[derive(Debug, Clone)]
pub struct LpInstance {
    pub n_rows: usize,
    pub objective: Vec<f64>,
    pub columns: Vec<Vec<(usize, f64)>>,
    pub free: Vec<bool>,
    pub row_kind: Vec<RowKind>,
    pub rhs: Vec<f64>,
}

impl LpInstance {
    pub fn n_cols(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        if self.columns.len() != self.n_cols() || self.free.len() != self.n_cols() {
            return Err(Error::InvalidArgument("inconsistent column data".into()));
        }
        if self.row_kind.len() != self.n_rows || self.rhs.len() != self.n_rows {
            return Err(Error::InvalidArgument("inconsistent row data".into()));
        }
        for col in &self.columns {
            for &(r, v) in col {
                if r >= self.n_rows || !v.is_finite() {
                    return Err(Error::InvalidArgument("bad column entry".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers of the original instance.
    pub duals: Vec<f64>,
    /// A zero reduced cost off-basis at optimality flags alternative optima.
    pub nonunique: bool,
    pub iterations: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const GOOD_PIVOT: f64 = 1e-7;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-10;
const STALL_LIMIT: usize = 400;
const REFACTOR_EVERY: usize = 250;
/// Deterministic relaxation of inequality rows; breaks the total degeneracy
/// of instances whose right-hand side is identically zero.
const PERTURB: f64 = 2e-10;

struct Tableau {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost2: Vec<f64>,
    cost1: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// split-variable partner; the two halves are never basic together
    partner: Vec<Option<usize>>,
    binv: Vec<f64>, // row-major m x m
    xb: Vec<f64>,
    artificial_from: usize,
}

impl Tableau {
    fn col_dot(&self, col: usize, y: &[f64]) -> f64 {
        self.cols[col].iter().map(|&(r, v)| y[r] * v).sum()
    }

    fn binv_times_col(&self, col: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(r, v) in &self.cols[col] {
            let row_off = r; // binv is row-major: binv[i*m + r] entries of column r
            for i in 0..self.m {
                out[i] += self.binv[i * self.m + row_off] * v;
            }
        }
    }

    fn dual_vector(&self, phase1: bool) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = if phase1 { self.cost1[bj] } else { self.cost2[bj] };
            if cb != 0.0 {
                for r in 0..m {
                    y[r] += cb * self.binv[i * m + r];
                }
            }
        }
        y
    }

    fn refactorize(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = nalgebra::DMatrix::<f64>::zeros(m, m);
        for (i, &bj) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[bj] {
                b[(r, i)] = v;
            }
        }
        let inv = b
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("singular basis during refactorization".into()))?;
        for i in 0..m {
            for r in 0..m {
                self.binv[i * m + r] = inv[(i, r)];
            }
        }
        // xb = binv * rhs
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for i in 0..m {
            let mut acc = 0.0;
            for r in 0..m {
                acc += self.binv[i * m + r] * self.rhs[r];
            }
            if acc < 0.0 {
                if acc < -1e-6 * scale {
                    return Err(Error::InvalidArgument(
                        "numerical loss of primal feasibility".into(),
                    ));
                }
                acc = 0.0;
            }
            self.xb[i] = acc;
        }
        Ok(())
    }

    fn pivot(&mut self, entering: usize, leave_row: usize, u: &[f64]) {
        let m = self.m;
        let piv = u[leave_row];
        let old = self.basis[leave_row];
        self.in_basis[old] = false;
        self.basis[leave_row] = entering;
        self.in_basis[entering] = true;
        // update binv: row leave_row /= piv; other rows -= u_i * new row
        let (head, _) = self.binv.split_at_mut(0);
        debug_assert!(head.is_empty());
        for r in 0..m {
            self.binv[leave_row * m + r] /= piv;
        }
        for i in 0..m {
            if i == leave_row {
                continue;
            }
            let f = u[i];
            if f != 0.0 {
                for r in 0..m {
                    self.binv[i * m + r] -= f * self.binv[leave_row * m + r];
                }
            }
        }
        let t = self.xb[leave_row] / piv;
        for i in 0..m {
            if i != leave_row {
                self.xb[i] -= u[i] * t;
                if self.xb[i] < 0.0 && self.xb[i] > -1e-8 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[leave_row] = t;
    }
}

fn run_phase(tab: &mut Tableau, phase1: bool, scale: f64) -> Result<usize> {
    let n_cols = tab.cols.len();
    let mut iterations = 0;
    let mut bland = false;
    let mut stall = 0;
    let mut last_obj = f64::INFINITY;
    let mut u = vec![0.0; tab.m];
    let mut excluded: Vec<usize> = Vec::new();
    let max_iter = 80 * (tab.m + n_cols) + 20_000;
    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::Cycling(iterations));
        }
        if iterations % REFACTOR_EVERY == 0 {
            tab.refactorize()?;
        }
        let y = tab.dual_vector(phase1);
        // entering variable
        let mut entering = None;
        let mut best = -COST_TOL * scale;
        for j in 0..n_cols {
            if tab.in_basis[j] {
                continue;
            }
            let cj = if phase1 { tab.cost1[j] } else { tab.cost2[j] };
            if !phase1 && j >= tab.artificial_from {
                continue; // artificials may not re-enter in phase 2
            }
            if let Some(p) = tab.partner[j] {
                if tab.in_basis[p] {
                    continue; // would make the basis exactly singular
                }
            }
            if excluded.contains(&j) {
                continue;
            }
            let d = cj - tab.col_dot(j, &y);
            if bland {
                if d < -COST_TOL * scale {
                    entering = Some(j);
                    break;
                }
            } else if d < best {
                best = d;
                entering = Some(j);
            }
        }
        let Some(q) = entering else {
            return Ok(iterations);
        };
        tab.binv_times_col(q, &mut u);
        // Harris two-pass ratio test: the relaxed step bound caps how far any
        // basic variable can be driven negative, independent of pivot sizes;
        // within that bound take the largest pivot (or lowest index under
        // Bland's rule, still requiring a usable pivot when one exists)
        let mut t_max = f64::INFINITY;
        for i in 0..tab.m {
            if u[i] > PIVOT_TOL {
                t_max = t_max.min((tab.xb[i].max(0.0) + FEAS_TOL) / u[i]);
            }
        }
        if t_max.is_infinite() {
            return Err(Error::Unbounded);
        }
        let mut max_piv = 0.0f64;
        for i in 0..tab.m {
            if u[i] > PIVOT_TOL && tab.xb[i].max(0.0) / u[i] <= t_max {
                max_piv = max_piv.max(u[i]);
            }
        }
        if max_piv < GOOD_PIVOT && excluded.len() < 64 {
            // only numerically tiny pivots available for this column; try a
            // different entering variable first
            excluded.push(q);
            continue;
        }
        let piv_floor = if max_piv >= GOOD_PIVOT {
            GOOD_PIVOT
        } else {
            PIVOT_TOL
        };
        let mut leave: Option<usize> = None;
        let mut best_piv = 0.0;
        for i in 0..tab.m {
            if u[i] >= piv_floor && tab.xb[i].max(0.0) / u[i] <= t_max {
                let better = if bland {
                    leave.map_or(true, |l| tab.basis[i] < tab.basis[l])
                } else {
                    u[i] > best_piv
                };
                if better {
                    best_piv = u[i];
                    leave = Some(i);
                }
            }
        }
        let r = leave.unwrap();
        tab.pivot(q, r, &u);
        excluded.clear();
        // stall detection drives the switch to Bland's rule
        let obj: f64 = tab
            .basis
            .iter()
            .enumerate()
            .map(|(i, &bj)| {
                let c = if phase1 { tab.cost1[bj] } else { tab.cost2[bj] };
                c * tab.xb[i]
            })
            .sum();
        if obj < last_obj - 1e-12 * (1.0 + last_obj.abs()) {
            stall = 0;
            last_obj = obj;
        } else {
            stall += 1;
            if stall > STALL_LIMIT {
                bland = true;
            }
        }
    }
}

/// Solves the instance, returning primal values, objective, and the dual
/// multipliers of the original rows.
pub fn solve_dense_lp(inst: &LpInstance) -> Result<LpSolution> {
    inst.validate()?;
    let m = inst.n_rows;
    let n_orig = inst.n_cols();

    // relax each inequality by a deterministic hash-spread epsilon
    let rhs_pert: Vec<f64> = inst
        .rhs
        .iter()
        .enumerate()
        .map(|(r, &b)| match inst.row_kind[r] {
            RowKind::Ge => {
                let h = ((r as u64).wrapping_mul(2654435761) >> 7) & 1023;
                b - PERTURB * (1.0 + b.abs()) * (1.0 + h as f64 / 1024.0)
            }
            RowKind::Eq => b,
        })
        .collect();

    // standard form: split free vars, add surplus columns for Ge rows,
    // normalize rhs >= 0, then artificials.
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut cost2: Vec<f64> = Vec::new();
    let mut partner: Vec<Option<usize>> = Vec::new();
    // map original var -> (pos col, neg col option)
    let mut var_map: Vec<(usize, Option<usize>)> = Vec::with_capacity(n_orig);
    let flip: Vec<f64> = rhs_pert
        .iter()
        .map(|&b| if b < 0.0 { -1.0 } else { 1.0 })
        .collect();
    for j in 0..n_orig {
        let col: Vec<(usize, f64)> = inst.columns[j]
            .iter()
            .map(|&(r, v)| (r, v * flip[r]))
            .collect();
        let pos = cols.len();
        cols.push(col.clone());
        cost2.push(inst.objective[j]);
        if inst.free[j] {
            let neg = cols.len();
            cols.push(col.into_iter().map(|(r, v)| (r, -v)).collect());
            cost2.push(-inst.objective[j]);
            partner.push(Some(neg));
            partner.push(Some(pos));
            var_map.push((pos, Some(neg)));
        } else {
            partner.push(None);
            var_map.push((pos, None));
        }
    }
    let mut surplus_of_row: Vec<Option<usize>> = vec![None; m];
    for r in 0..m {
        if inst.row_kind[r] == RowKind::Ge {
            let j = cols.len();
            cols.push(vec![(r, -flip[r])]);
            cost2.push(0.0);
            partner.push(None);
            surplus_of_row[r] = Some(j);
        }
    }
    let rhs: Vec<f64> = rhs_pert.iter().map(|&b| b.abs()).collect();

    // crash basis: surplus columns cover rows where the -1 surplus is basic
    // at value zero (rhs 0); everything else gets an artificial.
    let artificial_from = cols.len();
    let mut basis = vec![usize::MAX; m];
    for r in 0..m {
        if rhs[r] <= 0.0 {
            if let Some(s) = surplus_of_row[r] {
                // surplus coefficient is -flip[r] = -1 after normalization only
                // when flip = +1; rhs 0 rows always have flip = +1
                basis[r] = s;
            }
        }
    }
    let mut cost1 = vec![0.0; cols.len()];
    for r in 0..m {
        if basis[r] == usize::MAX {
            let j = cols.len();
            cols.push(vec![(r, 1.0)]);
            cost2.push(0.0);
            cost1.push(1.0);
            partner.push(None);
            basis[r] = j;
        }
    }
    let n_cols = cols.len();
    let mut in_basis = vec![false; n_cols];
    for &b in &basis {
        in_basis[b] = true;
    }

    let mut tab = Tableau {
        m,
        cols,
        cost2,
        cost1,
        rhs: rhs.clone(),
        basis,
        in_basis,
        partner,
        binv: vec![0.0; m * m],
        xb: vec![0.0; m],
        artificial_from,
    };
    tab.refactorize()?;

    let scale = 1.0 + inst.objective.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let mut total_iter = 0;
    let needs_phase1 = tab.basis.iter().any(|&b| b >= artificial_from);
    if needs_phase1 {
        total_iter += run_phase(&mut tab, true, 1.0)?;
        let p1: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|&(_, &bj)| bj >= artificial_from)
            .map(|(i, _)| tab.xb[i])
            .sum();
        if p1 > 1e-7 {
            return Err(Error::Infeasible);
        }
        // pivot out artificials stuck at zero level where possible
        let mut u = vec![0.0; m];
        for i in 0..m {
            if tab.basis[i] >= artificial_from {
                let mut done = false;
                for j in 0..artificial_from {
                    if tab.in_basis[j] {
                        continue;
                    }
                    tab.binv_times_col(j, &mut u);
                    if u[i].abs() > 1e-7 {
                        tab.pivot(j, i, &u);
                        done = true;
                        break;
                    }
                }
                let _ = done; // redundant row: artificial stays basic at zero
            }
        }
    }
    total_iter += run_phase(&mut tab, false, scale)?;
    // fresh factorization so the reported solution and duals do not carry
    // accumulated update error; re-optimize if the refresh exposes leftover
    // negative reduced costs
    for _ in 0..4 {
        tab.refactorize()?;
        let before = total_iter;
        total_iter += run_phase(&mut tab, false, scale)?;
        if total_iter == before + 1 {
            break;
        }
    }

    // nonuniqueness: zero reduced cost on a nonbasic structural column
    let y = tab.dual_vector(false);
    let mut nonunique = false;
    for j in 0..artificial_from {
        if !tab.in_basis[j] {
            let d = tab.cost2[j] - tab.col_dot(j, &y);
            if d.abs() <= COST_TOL * scale {
                nonunique = true;
                break;
            }
        }
    }

    let mut x_std = vec![0.0; n_cols];
    for (i, &bj) in tab.basis.iter().enumerate() {
        x_std[bj] = tab.xb[i];
    }
    let mut x = vec![0.0; n_orig];
    for (j, &(p, n)) in var_map.iter().enumerate() {
        x[j] = x_std[p] - n.map_or(0.0, |nj| x_std[nj]);
    }
    // verify the reported point against the original rows
    let mut ax = vec![0.0; m];
    for j in 0..n_orig {
        if x[j] != 0.0 {
            for &(r, v) in &inst.columns[j] {
                ax[r] += v * x[j];
            }
        }
    }
    let xsup = x.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    for r in 0..m {
        let tol = 1e-6 * (1.0 + rhs_pert[r].abs() + xsup);
        let bad = match inst.row_kind[r] {
            RowKind::Ge => ax[r] < rhs_pert[r] - tol,
            RowKind::Eq => (ax[r] - rhs_pert[r]).abs() > tol,
        };
        if bad {
            return Err(Error::InvalidArgument(format!(
                "solution violates row {r} by {:.3e}",
                (ax[r] - rhs_pert[r]).abs()
            )));
        }
    }
    let objective: f64 = inst
        .objective
        .iter()
        .zip(&x)
        .map(|(&c, &v)| c * v)
        .sum();
    let duals: Vec<f64> = (0..m).map(|r| y[r] * flip[r]).collect();
    Ok(LpSolution {
        x,
        objective,
        duals,
        nonunique,
        iterations: total_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simple(
        objective: Vec<f64>,
        rows: Vec<(Vec<f64>, RowKind, f64)>,
        free: Vec<bool>,
    ) -> LpInstance {
        let n = objective.len();
        let mut columns = vec![Vec::new(); n];
        for (r, (coef, _, _)) in rows.iter().enumerate() {
            for (j, &v) in coef.iter().enumerate() {
                if v != 0.0 {
                    columns[j].push((r, v));
                }
            }
        }
        LpInstance {
            n_rows: rows.len(),
            objective,
            columns,
            free,
            row_kind: rows.iter().map(|r| r.1).collect(),
            rhs: rows.iter().map(|r| r.2).collect(),
        }
    }

    #[test]
    fn minimize_x_with_lower_bound() {
        // min x s.t. x >= 1
        let inst = simple(
            vec![1.0],
            vec![(vec![1.0], RowKind::Ge, 1.0)],
            vec![false],
        );
        let sol = solve_dense_lp(&inst).unwrap();
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        // x <= 0 (i.e. -x >= 0) and x >= 1
        let inst = simple(
            vec![0.0],
            vec![
                (vec![-1.0], RowKind::Ge, 0.0),
                (vec![1.0], RowKind::Ge, 1.0),
            ],
            vec![false],
        );
        assert!(matches!(solve_dense_lp(&inst), Err(Error::Infeasible)));
    }

    #[test]
    fn unbounded_detected() {
        // min -x, x free, one vacuous row
        let inst = simple(
            vec![-1.0],
            vec![(vec![0.0], RowKind::Ge, 0.0)],
            vec![true],
        );
        assert!(matches!(solve_dense_lp(&inst), Err(Error::Unbounded)));
    }

    #[test]
    fn equality_with_free_variable() {
        // min |t| style: min t s.t. t - x >= 0, t + x >= 0, x = 3 -> t = 3
        let inst = simple(
            vec![0.0, 1.0],
            vec![
                (vec![-1.0, 1.0], RowKind::Ge, 0.0),
                (vec![1.0, 1.0], RowKind::Ge, 0.0),
                (vec![1.0, 0.0], RowKind::Eq, 3.0),
            ],
            vec![true, false],
        );
        let sol = solve_dense_lp(&inst).unwrap();
        assert_abs_diff_eq!(sol.objective, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn duals_satisfy_strong_duality() {
        // min 2a + 3b s.t. a + b >= 4, a - b >= -2  (a,b >= 0)
        let inst = simple(
            vec![2.0, 3.0],
            vec![
                (vec![1.0, 1.0], RowKind::Ge, 4.0),
                (vec![1.0, -1.0], RowKind::Ge, -2.0),
            ],
            vec![false, false],
        );
        let sol = solve_dense_lp(&inst).unwrap();
        let dual_obj = 4.0 * sol.duals[0] - 2.0 * sol.duals[1];
        assert_abs_diff_eq!(sol.objective, dual_obj, epsilon = 1e-8);
        assert!(sol.duals[0] >= -1e-10 && sol.duals[1] >= -1e-10);
    }
}
