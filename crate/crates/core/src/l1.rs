//! The discretized primal: minimize int_E |P| w dx over polynomials of degree
//! at most n, normalized by a linear functional, by F(0)=1 with the dx/|x|
//! weight, or in best-approximation form against a fixed f. |P| is linearized
//! with one auxiliary variable per node and the instance handed to the dense
//! simplex.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boxlp::{solve_box_lp, BoxInstance, BoxSolution};
use crate::error::{Error, Result};
use crate::interval::{build_composite_quadrature, IntervalSystem, QuadratureGrid, WeightSpec};
use crate::poly::{poly_real_roots, ChebPoly, Polynomial, RootList};
use crate::simplex::{LpInstance, RowKind};

/// The normalization functional Lambda(P) = sum lambda_k c_k on monomial
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFunctional {
    lambdas: Vec<f64>,
}

impl LinearFunctional {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.iter().map(|l| l * l).sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument(
                "functional must have sum lambda_k^2 > 0".into(),
            ));
        }
        Ok(Self { lambdas })
    }

    /// Lambda_infinity: picks out the leading coefficient of degree n.
    pub fn leading(n: usize) -> Self {
        let mut l = vec![0.0; n + 1];
        l[n] = 1.0;
        Self { lambdas: l }
    }

    /// Lambda_{x0}: point evaluation, lambda_k = x0^k.
    pub fn point(x0: f64, n: usize) -> Self {
        let mut l = Vec::with_capacity(n + 1);
        let mut p = 1.0;
        for _ in 0..=n {
            l.push(p);
            p *= x0;
        }
        Self { lambdas: l }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn degree(&self) -> usize {
        self.lambdas.len() - 1
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lambdas: self.lambdas.iter().map(|l| c * l).collect(),
        }
    }

    pub fn apply(&self, p: &Polynomial) -> f64 {
        self.lambdas
            .iter()
            .zip(p.coeffs().iter().chain(std::iter::repeat(&0.0)))
            .map(|(&l, &c)| l * c)
            .sum()
    }
}

/// What normalizes the competitor class.
#[derive(Clone)]
pub enum SolveMode {
    /// Lambda(P) = 1.
    Functional(LinearFunctional),
    /// F(0) = 1 with the dx/|x| weight: the truncated problem on E away from 0.
    NormalizedAtZero,
    /// Best approximation of f: minimize int |f - P| w dx.
    Approximate(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl SolveMode {
    pub fn approximate<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        SolveMode::Approximate(Arc::new(f))
    }
}

impl fmt::Debug for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveMode::Functional(l) => write!(f, "Functional({:?})", l.lambdas),
            SolveMode::NormalizedAtZero => write!(f, "NormalizedAtZero"),
            SolveMode::Approximate(_) => write!(f, "Approximate(..)"),
        }
    }
}

/// Grid refinement schedule: cell counts double per level until the change in
/// the objective drops below `refine_tol` (relative) or `levels` is reached.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSchedule {
    pub base_cells: usize,
    pub levels: usize,
    pub grade: usize,
    pub refine_tol: f64,
}

impl Default for GridSchedule {
    fn default() -> Self {
        Self {
            base_cells: 48,
            levels: 3,
            grade: 8,
            refine_tol: 1e-4,
        }
    }
}

impl GridSchedule {
    pub fn with_cells(base_cells: usize, levels: usize, grade: usize) -> Self {
        Self {
            base_cells,
            levels,
            grade,
            refine_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelReport {
    pub cells: usize,
    pub nodes: usize,
    pub m_value: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub levels: Vec<LevelReport>,
    /// Richardson-extrapolated objective from the last two levels.
    pub richardson: Option<f64>,
    pub m_finest: f64,
    pub nonunique: bool,
    /// max_i of the discrete dual density magnitude; <= 1 + tol at optimality.
    pub dual_density_sup: f64,
    /// Relative misalignment of the sign moments with the functional.
    pub functional_alignment: f64,
}

/// Extremal polynomial, optimal value, zeros and sign pattern.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtremalSolution {
    pub f: Polynomial,
    /// Evaluation path used instead of monomial coefficients for degree > 20.
    pub cheb: Option<ChebPoly>,
    pub m_value: f64,
    pub zeros: RootList,
    pub gap_signs: Vec<i8>,
    /// e^{-M/2}, reported in normalized-at-0 mode.
    pub lambda0: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl ExtremalSolution {
    pub fn eval(&self, x: f64) -> f64 {
        match &self.cheb {
            Some(c) => c.eval(x),
            None => self.f.eval(x),
        }
    }
}

enum LpBasis {
    Monomial { scales: Vec<f64> },
    Chebyshev { a: f64, b: f64 },
}

impl LpBasis {
    fn choose(degree: usize, system: &IntervalSystem) -> Self {
        let (a, b) = system.hull();
        if degree > 20 {
            LpBasis::Chebyshev { a, b }
        } else {
            // per-column scaling by the hull bound on |x|^k keeps the scaling
            // identical across refinement levels
            let r = a.abs().max(b.abs()).max(1e-12);
            let mut scales = Vec::with_capacity(degree + 1);
            let mut p = 1.0;
            for _ in 0..=degree {
                scales.push(p);
                p *= r;
            }
            LpBasis::Monomial { scales }
        }
    }

    fn degree_row(&self, x: f64, degree: usize) -> Vec<f64> {
        match self {
            LpBasis::Monomial { scales } => {
                let mut row = Vec::with_capacity(degree + 1);
                let mut p = 1.0;
                for s in scales {
                    row.push(p / s);
                    p *= x;
                }
                row
            }
            LpBasis::Chebyshev { a, b } => ChebPoly::basis_row(x, degree, *a, *b),
        }
    }

    /// Lambda applied to each basis polynomial.
    fn functional_row(&self, lam: &LinearFunctional, degree: usize) -> Vec<f64> {
        match self {
            LpBasis::Monomial { scales } => (0..=degree)
                .map(|k| lam.lambdas().get(k).copied().unwrap_or(0.0) / scales[k])
                .collect(),
            LpBasis::Chebyshev { a, b } => {
                let mut row = Vec::with_capacity(degree + 1);
                let mut tk_prev = Polynomial::one();
                row.push(lam.apply(&tk_prev));
                if degree >= 1 {
                    let scale = 2.0 / (b - a);
                    let shift = -(a + b) / (b - a);
                    let u = Polynomial::new(vec![shift, scale]);
                    let mut tk = u.clone();
                    row.push(lam.apply(&tk));
                    for _ in 2..=degree {
                        let next = u.mul(&tk).scale(2.0).add(&tk_prev.scale(-1.0));
                        tk_prev = tk;
                        tk = next;
                        row.push(lam.apply(&tk));
                    }
                }
                row
            }
        }
    }

    fn to_solution(&self, coeffs: &[f64], system: &IntervalSystem) -> (Polynomial, Option<ChebPoly>) {
        match self {
            LpBasis::Monomial { scales } => (
                Polynomial::new(
                    coeffs
                        .iter()
                        .zip(scales)
                        .map(|(&c, &s)| c / s)
                        .collect(),
                ),
                None,
            ),
            LpBasis::Chebyshev { .. } => {
                let (a, b) = system.hull();
                let cp = ChebPoly {
                    coeffs: coeffs.to_vec(),
                    a,
                    b,
                };
                (cp.to_monomial(), Some(cp))
            }
        }
    }
}

/// The primal instance in the shape handed to the dense simplex: one
/// auxiliary variable per node, rows t_i -+ P(x_i) >= -+f_i, and the
/// normalization row when a functional is present.
pub fn build_lp_instance(
    grid: &QuadratureGrid,
    basis: &LpBasis,
    degree: usize,
    fvals: Option<&[f64]>,
    functional_row: Option<&[f64]>,
) -> LpInstance {
    let n_nodes = grid.len();
    let n_coeff = degree + 1;
    let n_rows = 2 * n_nodes + functional_row.map_or(0, |_| 1);
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_coeff + n_nodes];
    let mut rhs = vec![0.0; n_rows];
    for (i, &x) in grid.nodes.iter().enumerate() {
        let row = basis.degree_row(x, degree);
        for (k, &v) in row.iter().enumerate() {
            if v != 0.0 {
                columns[k].push((2 * i, -v));
                columns[k].push((2 * i + 1, v));
            }
        }
        columns[n_coeff + i].push((2 * i, 1.0));
        columns[n_coeff + i].push((2 * i + 1, 1.0));
        if let Some(f) = fvals {
            rhs[2 * i] = -f[i];
            rhs[2 * i + 1] = f[i];
        }
    }
    let mut row_kind = vec![RowKind::Ge; 2 * n_nodes];
    if let Some(lr) = functional_row {
        let r = 2 * n_nodes;
        for (k, &v) in lr.iter().enumerate() {
            if v != 0.0 {
                columns[k].push((r, v));
            }
        }
        rhs[r] = 1.0;
        row_kind.push(RowKind::Eq);
    }
    let mut objective = vec![0.0; n_coeff];
    objective.extend(grid.weights.iter().copied());
    let mut free = vec![true; n_coeff];
    free.extend(std::iter::repeat(false).take(n_nodes));
    LpInstance {
        n_rows,
        objective,
        columns,
        free,
        row_kind,
        rhs,
    }
}

/// The same discretized problem in its bounded-variable dual form, which the
/// solver actually runs: maximize the normalization multiplier (or f.v in
/// approximation mode) over node values |v_i| <= w_i balancing the basis
/// moments.
pub fn build_box_instance(
    grid: &QuadratureGrid,
    basis: &LpBasis,
    degree: usize,
    fvals: Option<&[f64]>,
    functional_row: Option<&[f64]>,
) -> BoxInstance {
    let rows = degree + 1;
    let cols: Vec<Vec<f64>> = grid
        .nodes
        .iter()
        .map(|&x| basis.degree_row(x, degree))
        .collect();
    BoxInstance {
        rows,
        cols,
        bounds: grid.weights.clone(),
        obj: match fvals {
            Some(f) => f.to_vec(),
            None => vec![0.0; grid.len()],
        },
        free_col: functional_row.map(|r| r.to_vec()),
    }
}

fn dual_diagnostics(
    grid: &QuadratureGrid,
    sol: &BoxSolution,
    lam: Option<&LinearFunctional>,
    degree: usize,
) -> (f64, f64) {
    // v_i/w_i is the discrete dual density; |g| <= 1 holds by the box bounds
    // and the moment alignment by the balance rows, so these recomputations
    // double as solver sanity checks.
    let mut sup = 0.0f64;
    let mut g = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let w = grid.weights[i].max(1e-300);
        let gi = sol.v[i] / w;
        sup = sup.max(gi.abs());
        g.push(gi);
    }
    let alignment = match lam {
        Some(lam) => {
            // v_k = sum w_i g_i x_i^k should be proportional to lambda
            let v: Vec<f64> = (0..=degree)
                .map(|k| {
                    grid.nodes
                        .iter()
                        .zip(&grid.weights)
                        .zip(&g)
                        .map(|((&x, &w), &gi)| w * gi * x.powi(k as i32))
                        .sum()
                })
                .collect();
            let ll: f64 = lam.lambdas().iter().map(|l| l * l).sum();
            let vl: f64 = v
                .iter()
                .zip(lam.lambdas())
                .map(|(&a, &b)| a * b)
                .sum();
            let c = vl / ll;
            let num: f64 = v
                .iter()
                .zip(lam.lambdas())
                .map(|(&a, &b)| (a - c * b).powi(2))
                .sum::<f64>()
                .sqrt();
            let den = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            num / den
        }
        None => 0.0,
    };
    (sup, alignment)
}

fn residual_sign_changes(
    grid: &QuadratureGrid,
    resid: impl Fn(f64) -> f64,
) -> RootList {
    let mut roots = Vec::new();
    for i in 0..grid.len().saturating_sub(1) {
        let (x0, x1) = (grid.nodes[i], grid.nodes[i + 1]);
        if grid.band_index[i] != grid.band_index[i + 1] {
            continue;
        }
        let (f0, f1) = (resid(x0), resid(x1));
        if f0 == 0.0 {
            roots.push(x0);
            continue;
        }
        if f0.signum() != f1.signum() {
            let (mut a, mut b) = (x0, x1);
            let mut fa = f0;
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let fm = resid(m);
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    let multiplicities = vec![1; roots.len()];
    RootList {
        roots,
        multiplicities,
    }
}

/// Solves the discretized L1 problem with grid refinement. The reported value
/// is Richardson-extrapolated from the last two levels when the extrapolation
/// is stable, otherwise the finest-grid value; both appear in diagnostics.
pub fn solve_l1(
    system: &IntervalSystem,
    weight: &WeightSpec,
    mode: &SolveMode,
    degree: usize,
    schedule: &GridSchedule,
) -> Result<ExtremalSolution> {
    weight.validate(system)?;
    let functional = match mode {
        SolveMode::Functional(l) => {
            if l.degree() > degree {
                return Err(Error::InvalidArgument(format!(
                    "functional degree {} exceeds polynomial degree {}",
                    l.degree(),
                    degree
                )));
            }
            Some(l.clone())
        }
        SolveMode::NormalizedAtZero => {
            let (b0, a0) = system.hull();
            if b0 <= 0.0 && a0 >= 0.0 {
                return Err(Error::InvalidArgument(
                    "normalized-at-0 needs 0 outside the hull of E".into(),
                ));
            }
            Some(LinearFunctional::point(0.0, degree))
        }
        SolveMode::Approximate(_) => None,
    };

    let mut levels: Vec<LevelReport> = Vec::new();
    let mut history: Vec<(Vec<f64>, f64)> = Vec::new(); // basis coeffs, M
    let mut final_grid: Option<QuadratureGrid> = None;
    let mut final_sol: Option<BoxSolution> = None;

    let basis = LpBasis::choose(degree, system);
    let mut cells = schedule.base_cells.max(4);
    for level in 0..schedule.levels.max(1) {
        let grid = build_composite_quadrature(system, weight, cells, schedule.grade)?;
        let fvals: Option<Vec<f64>> = match mode {
            SolveMode::Approximate(f) => Some(grid.nodes.iter().map(|&x| f(x)).collect()),
            _ => None,
        };
        let lrow = functional
            .as_ref()
            .map(|l| basis.functional_row(l, degree));
        let inst = build_box_instance(&grid, &basis, degree, fvals.as_deref(), lrow.as_deref());
        let sol = solve_box_lp(&inst)?;
        let m = sol.mu;
        // the polynomial is the negated row multiplier vector; the functional
        // normalization below fixes the overall sign
        let coeffs: Vec<f64> = sol.y.iter().map(|&v| -v).collect();
        levels.push(LevelReport {
            cells,
            nodes: grid.len(),
            m_value: m,
            iterations: sol.iterations,
        });
        history.push((coeffs, m));
        let stop = levels.len() >= 2 && {
            let prev = levels[levels.len() - 2].m_value;
            (m - prev).abs() <= schedule.refine_tol * m.abs().max(1e-12)
        };
        final_grid = Some(grid);
        final_sol = Some(sol);
        if stop && level + 1 < schedule.levels {
            break;
        }
        cells *= 2;
    }

    let grid = final_grid.unwrap();
    let sol = final_sol.unwrap();
    let m_finest = history.last().unwrap().1;

    // Richardson in the cell width: error from the kinks of |P| is O(h^2)
    let (coeff_best, richardson) = if history.len() >= 2 {
        let (c2, m2) = history.last().unwrap().clone();
        let (c1, m1) = history[history.len() - 2].clone();
        let m_ext = (4.0 * m2 - m1) / 3.0;
        let stable = (m_ext - m2).abs() <= 0.2 * m2.abs().max(1e-12);
        let c_ext: Vec<f64> = c2
            .iter()
            .zip(&c1)
            .map(|(&a, &b)| (4.0 * a - b) / 3.0)
            .collect();
        if stable {
            (c_ext, Some(m_ext))
        } else {
            (c2, Some(m_ext))
        }
    } else {
        (history[0].0.clone(), None)
    };
    let m_value = match richardson {
        Some(ext) if (ext - m_finest).abs() <= 0.2 * m_finest.abs().max(1e-12) => ext,
        _ => m_finest,
    };

    // normalization cleanup: enforce Lambda(F) = 1 exactly in basis space
    let mut coeff_best = coeff_best;
    let mut m_value = m_value;
    if let Some(l) = &functional {
        let lrow = basis.functional_row(l, degree);
        let lv: f64 = lrow.iter().zip(&coeff_best).map(|(&a, &b)| a * b).sum();
        if lv.abs() > 1e-300 {
            for c in coeff_best.iter_mut() {
                *c /= lv;
            }
            m_value /= lv.abs();
        }
    }
    let (f, cheb) = basis.to_solution(&coeff_best, system);

    let (b0, a0) = system.hull();
    let zeros = match mode {
        SolveMode::Approximate(fun) => {
            let fc = f.clone();
            let ch = cheb.clone();
            residual_sign_changes(&grid, move |x| {
                fun(x)
                    - match &ch {
                        Some(c) => c.eval(x),
                        None => fc.eval(x),
                    }
            })
        }
        _ => poly_real_roots(&f, b0, a0)?,
    };

    let gap_signs: Vec<i8> = system
        .gaps()
        .iter()
        .map(|g| {
            let v = match &cheb {
                Some(c) => c.eval(g.midpoint()),
                None => f.eval(g.midpoint()),
            };
            if v >= 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();

    let (dual_sup, alignment) = dual_diagnostics(&grid, &sol, functional.as_ref(), degree);
    let lambda0 = match mode {
        SolveMode::NormalizedAtZero => Some((-m_value / 2.0).exp()),
        _ => None,
    };

    Ok(ExtremalSolution {
        f,
        cheb,
        m_value,
        zeros,
        gap_signs,
        lambda0,
        diagnostics: Diagnostics {
            levels,
            richardson,
            m_finest,
            nonunique: sol.nonunique,
            dual_density_sup: dual_sup,
            functional_alignment: alignment,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::make_interval_system;
    use crate::poly::monic_chebyshev_second;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chebyshev_value_degree_three() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let sol = solve_l1(
            &e,
            &WeightSpec::Unit,
            &SolveMode::Functional(LinearFunctional::leading(3)),
            3,
            &GridSchedule::default(),
        )
        .unwrap();
        assert!((sol.m_value - 0.25).abs() < 0.25 * 1e-3, "M = {}", sol.m_value);
        let u3 = monic_chebyshev_second(3);
        for i in 0..=6 {
            let x = -1.0 + i as f64 / 3.0;
            assert!((sol.f.eval(x) - u3.eval(x)).abs() < 5e-3);
        }
    }

    #[test]
    fn approximate_constant_markov_function() {
        // degree-0 best approximation of 1/(x-1.25) on [-1,1]: 2 ln(5/3)
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let sol = solve_l1(
            &e,
            &WeightSpec::Unit,
            &SolveMode::approximate(|x: f64| 1.0 / (x - 1.25)),
            0,
            &GridSchedule::with_cells(64, 3, 8),
        )
        .unwrap();
        let expect = 2.0 * (5f64 / 3.0).ln();
        assert!(
            (sol.m_value - expect).abs() < 1e-4,
            "M = {} vs {expect}",
            sol.m_value
        );
    }

    #[test]
    fn normalized_at_zero_degree_zero_is_log_mass() {
        let e = make_interval_system(&[[-2.0, -1.0]]).unwrap();
        let sol = solve_l1(
            &e,
            &WeightSpec::RecipAbs,
            &SolveMode::NormalizedAtZero,
            0,
            &GridSchedule::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(sol.m_value, 2f64.ln(), epsilon = 1e-6);
        assert_abs_diff_eq!(sol.f.eval(0.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            sol.lambda0.unwrap(),
            (-2f64.ln() / 2.0).exp(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn value_monotone_in_degree() {
        let e = make_interval_system(&[[-1.0, -0.4], [0.1, 1.0]]).unwrap();
        let mut prev = f64::INFINITY;
        for n in 1..=4 {
            let sol = solve_l1(
                &e,
                &WeightSpec::Unit,
                &SolveMode::Functional(LinearFunctional::leading(n)),
                n,
                &GridSchedule::default(),
            )
            .unwrap();
            assert!(sol.m_value <= prev + 1e-6);
            prev = sol.m_value;
        }
    }

    #[test]
    fn functional_scaling_covariance() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let lam = LinearFunctional::leading(2);
        let a = solve_l1(
            &e,
            &WeightSpec::Unit,
            &SolveMode::Functional(lam.clone()),
            2,
            &GridSchedule::default(),
        )
        .unwrap();
        let b = solve_l1(
            &e,
            &WeightSpec::Unit,
            &SolveMode::Functional(lam.scaled(2.0)),
            2,
            &GridSchedule::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(b.m_value, a.m_value / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn dual_density_bounded_at_optimum() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let sol = solve_l1(
            &e,
            &WeightSpec::Unit,
            &SolveMode::Functional(LinearFunctional::leading(4)),
            4,
            &GridSchedule::default(),
        )
        .unwrap();
        assert!(sol.diagnostics.dual_density_sup <= 1.0 + 1e-6);
        assert!(sol.diagnostics.functional_alignment < 1e-6);
    }

    #[test]
    fn rejects_functional_degree_above_polynomial_degree() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        assert!(solve_l1(
            &e,
            &WeightSpec::Unit,
            &SolveMode::Functional(LinearFunctional::leading(4)),
            3,
            &GridSchedule::default(),
        )
        .is_err());
    }
}
