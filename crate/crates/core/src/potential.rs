//! Finite-gap Green's functions through the abelian-differential route (monic
//! numerator with vanishing gap periods), the half-line closed forms, the
//! Widom sum over critical points, and growth-rate estimation against a
//! harmonic majorant.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::{build_quadrature, gauss_legendre, IntervalSystem, WeightSpec};
use crate::poly::Polynomial;

/// H(t) = prod over bands (t - lo)(t - hi); negative on band interiors,
/// positive on gaps and outside the hull.
fn h_poly(system: &IntervalSystem) -> Polynomial {
    let mut p = Polynomial::one();
    for b in system.bands() {
        p = p.mul(&Polynomial::new(vec![-b.lo, 1.0]));
        p = p.mul(&Polynomial::new(vec![-b.hi, 1.0]));
    }
    p
}

/// Green data for the differential dG = N(t) dt / sqrt(H(t)): the numerator,
/// its critical points (one per gap), the achieved gap-period residuals, and
/// the Widom sum.
#[derive(Debug, Clone, Serialize)]
pub struct GreenData {
    pub numerator: Polynomial,
    pub critical_points: Vec<f64>,
    pub gap_period_residuals: Vec<f64>,
    pub widom_sum: f64,
    /// None means the pole sits at infinity.
    pub pole: Option<f64>,
}

fn gap_quadrature(
    system: &IntervalSystem,
    f: &dyn Fn(f64) -> f64,
    gap_index: usize,
    order: usize,
) -> Result<f64> {
    let gap = system.gaps()[gap_index];
    let one_gap = IntervalSystem::new(&[[gap.lo, gap.hi]])?;
    let h = h_poly(system);
    let w = WeightSpec::tabulated(move |t: f64| 1.0 / h.eval(t).abs().sqrt());
    let grid = build_quadrature(&one_gap, &w, order, true)?;
    Ok(grid.integrate(f))
}

/// Solves the m x m linear system pinning the numerator: the real period of
/// dG over each gap vanishes. For a finite pole z0 the numerator is
/// sqrt(H(z0))/(t - z0) + Q(t) with deg Q = m - 1 chosen by the same periods;
/// for the pole at infinity it is monic of degree m.
fn numerator_for(system: &IntervalSystem, pole: Option<f64>, order: usize) -> Result<GreenData> {
    let m = system.gap_count();
    let h = h_poly(system);
    let mut mat = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for j in 0..m {
        for k in 0..m {
            mat[(j, k)] = gap_quadrature(system, &|t| t.powi(k as i32), j, order)?;
        }
        match pole {
            None => {
                rhs[j] = -gap_quadrature(system, &|t| t.powi(m as i32), j, order)?;
            }
            Some(z0) => {
                let hz = h.eval(z0);
                if hz <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "finite pole must lie off E with H(z0) > 0".into(),
                    ));
                }
                let shz = hz.sqrt();
                rhs[j] = -gap_quadrature(system, &|t| shz / (t - z0), j, order)?;
            }
        }
    }
    let coeffs = match m {
        0 => Vec::new(),
        _ => mat
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::DegenerateGeometry("singular gap-period matrix".into()))?
            .iter()
            .copied()
            .collect::<Vec<f64>>(),
    };
    let q = {
        let mut c = coeffs.clone();
        if pole.is_none() {
            c.push(1.0); // monic degree m
        } else if c.is_empty() {
            c.push(0.0);
        }
        Polynomial::new(c)
    };
    // residuals of the solved periods
    let mut residuals = Vec::with_capacity(m);
    for j in 0..m {
        let r = match pole {
            None => gap_quadrature(system, &|t| q.eval(t), j, order)?,
            Some(z0) => {
                let shz = h.eval(z0).sqrt();
                gap_quadrature(system, &|t| shz / (t - z0) + q.eval(t), j, order)?
            }
        };
        residuals.push(r.abs());
    }
    // one critical point per gap: the zero of the numerator there
    let mut critical = Vec::with_capacity(m);
    for (j, gap) in system.gaps().iter().enumerate() {
        let f = |t: f64| match pole {
            None => q.eval(t),
            Some(z0) => h.eval(z0).sqrt() / (t - z0) + q.eval(t),
        };
        let (mut a, mut b) = (gap.lo + 1e-12, gap.hi - 1e-12);
        let (fa, fb) = (f(a), f(b));
        if fa.signum() == fb.signum() {
            return Err(Error::DegenerateGeometry(format!(
                "no sign change of the numerator in gap {j}"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if f(mid).signum() == fa.signum() {
                a = mid;
            } else {
                b = mid;
            }
        }
        critical.push(0.5 * (a + b));
    }
    Ok(GreenData {
        numerator: q,
        critical_points: critical,
        gap_period_residuals: residuals,
        widom_sum: 0.0,
        pole,
    })
}

/// sqrt of H along a path, with the branch tracked by continuity from a real
/// anchor right of the hull where sqrt(H) > 0.
struct BranchTracker {
    prev: Complex64,
}

impl BranchTracker {
    fn new(anchor: Complex64) -> Self {
        Self { prev: anchor }
    }

    fn eval(&mut self, h: Complex64) -> Complex64 {
        let mut s = h.sqrt();
        if (s - self.prev).norm() > (s + self.prev).norm() {
            s = -s;
        }
        self.prev = s;
        s
    }
}

fn h_eval_complex(system: &IntervalSystem, z: Complex64) -> Complex64 {
    let mut p = Complex64::new(1.0, 0.0);
    for b in system.bands() {
        p *= (z - b.lo) * (z - b.hi);
    }
    p
}

/// Integrates dG along a straight segment with `steps` Gauss panels,
/// tracking the square-root branch.
fn segment_integral(
    system: &IntervalSystem,
    data: &GreenData,
    from: Complex64,
    to: Complex64,
    steps: usize,
    tracker: &mut BranchTracker,
) -> Complex64 {
    let (nodes, weights) = gauss_legendre(12);
    let mut acc = Complex64::new(0.0, 0.0);
    let h = h_poly(system);
    let _ = h;
    for s in 0..steps {
        let a = from + (to - from) * (s as f64 / steps as f64);
        let b = from + (to - from) * ((s + 1) as f64 / steps as f64);
        let mid = (a + b) * 0.5;
        let half = (b - a) * 0.5;
        for (&t, &w) in nodes.iter().zip(&weights) {
            let z = mid + half * t;
            let hz = h_eval_complex(system, z);
            let sq = tracker.eval(hz);
            let num = match data.pole {
                None => {
                    let mut acc2 = Complex64::new(0.0, 0.0);
                    for &c in data.numerator.coeffs().iter().rev() {
                        acc2 = acc2 * z + c;
                    }
                    acc2
                }
                Some(z0) => {
                    let mut acc2 = Complex64::new(0.0, 0.0);
                    for &c in data.numerator.coeffs().iter().rev() {
                        acc2 = acc2 * z + c;
                    }
                    acc2 + h_eval_complex(system, Complex64::new(z0, 0.0)).sqrt() / (z - z0)
                }
            };
            acc += half * w * num / sq;
        }
    }
    acc
}

/// Green's function value at z. The path starts at the rightmost band
/// endpoint (where G = 0), runs along the real axis with an endpoint
/// substitution absorbing the inverse-square-root start, climbs over the
/// bands, and descends to z; the real part of the integral is
/// path-independent off E.
fn green_value(system: &IntervalSystem, data: &GreenData, z: Complex64, order: usize) -> f64 {
    let (b0, a0) = system.hull();
    let span = (a0 - b0).max(1.0);
    // leg 1: real axis from a0 to x1 = a0 + d, substitution t = a0 + s^2
    let x1 = a0 + span.max((z - a0).norm()) * 2.0;
    let (nodes, weights) = gauss_legendre(order);
    let smax = (x1 - a0).sqrt();
    let mut acc = 0.0;
    for (&t, &w) in nodes.iter().zip(&weights) {
        let s = 0.5 * smax * (t + 1.0);
        let x = a0 + s * s;
        let hv = h_poly(system).eval(x).max(1e-300);
        let num = match data.pole {
            None => data.numerator.eval(x),
            Some(z0) => data.numerator.eval(x) + h_poly(system).eval(z0).sqrt() / (x - z0),
        };
        acc += 0.5 * smax * w * num / hv.sqrt() * 2.0 * s;
    }
    let mut total = Complex64::new(acc, 0.0);
    // remaining legs: x1 -> x1 + i d -> Re z + i d -> z
    let d = span * 2.0;
    let p1 = Complex64::new(x1, 0.0);
    let p2 = Complex64::new(x1, d);
    let p3 = Complex64::new(z.re, d.max(z.im.abs() + 0.5 * span));
    let p3 = Complex64::new(p3.re, if z.im < 0.0 { -p3.im } else { p3.im });
    let anchor_h = h_eval_complex(system, p1).sqrt();
    let mut tracker = BranchTracker::new(anchor_h);
    total += segment_integral(system, data, p1, p2, 24, &mut tracker);
    total += segment_integral(system, data, p2, p3, 48, &mut tracker);
    total += segment_integral(system, data, p3, z, 48, &mut tracker);
    total.re
}

/// Green's function of the complement of E with pole at infinity (or at a
/// finite real point off E). Returns the differential data (numerator,
/// critical points, period residuals, Widom sum) and the value at z.
pub fn finite_gap_green(
    system: &IntervalSystem,
    z: Complex64,
    pole: Option<f64>,
    order: usize,
) -> Result<(GreenData, f64)> {
    if system.distance(z.re, z.im) < 1e-10 {
        return Err(Error::ProximityToSupport { dist: 0.0 });
    }
    let mut data = numerator_for(system, pole, order)?;
    let value = green_value(system, &data, z, order.max(24));
    let widom: f64 = data
        .critical_points
        .clone()
        .iter()
        .map(|&c| green_value(system, &data, Complex64::new(c, 0.0), order.max(24)))
        .sum();
    data.widom_sum = widom;
    Ok((data, value))
}

/// Closed forms on the half line E = (-inf, -1]: the Martin function
/// Re sqrt(z+1), its Nevanlinna companion i sqrt(z+1), the minimal deviation
/// M(2l) = 2 ln coth(l), the claimed extremal G_{2l}, and the elementary
/// M_n(v) = 2 ln((1+v^n)/(1-v^n)) linked by v^n = e^{-2l}.
#[derive(Debug, Clone, Serialize)]
pub struct HalflineValues {
    pub lambda: f64,
    pub m_two_lambda: f64,
    pub martin_at: Option<f64>,
    pub g_two_lambda_at: Option<(f64, f64)>,
}

pub fn martin_halfline(z: Complex64) -> f64 {
    (z + 1.0).sqrt().re
}

/// Theta(z) = -M_*(z) + i M(z) = i sqrt(z+1).
pub fn martin_conjugate(z: Complex64) -> Complex64 {
    Complex64::new(0.0, 1.0) * (z + 1.0).sqrt()
}

pub fn m_two_lambda(lambda: f64) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    Ok(2.0 * (1.0 / lambda.tanh()).ln())
}

/// The claimed extremal entire approximant of 1/x of type 2l.
pub fn g_two_lambda(lambda: f64, z: Complex64) -> Complex64 {
    let s = (z + 1.0).sqrt();
    let one = Complex64::new(1.0, 0.0);
    if s.norm() < 1e-8 {
        // sinh(2ls)/(2ls) -> 1 + (2l s)^2/6
        let u = 2.0 * lambda * s;
        (one - (one + u * u / 6.0)) / z
    } else {
        (one - (2.0 * lambda * s).sinh() / (s * 2.0 * lambda)) / z
    }
}

pub fn m_n_of_v(n: u32, v: f64) -> Result<f64> {
    if !(0.0 < v && v < 1.0) {
        return Err(Error::InvalidArgument("need v in (0,1)".into()));
    }
    let vn = v.powi(n as i32);
    Ok(2.0 * ((1.0 + vn) / (1.0 - vn)).ln())
}

pub fn halfline_formulas(lambda: f64, z: Option<Complex64>) -> Result<HalflineValues> {
    Ok(HalflineValues {
        lambda,
        m_two_lambda: m_two_lambda(lambda)?,
        martin_at: z.map(martin_halfline),
        g_two_lambda_at: z.map(|zz| {
            let g = g_two_lambda(lambda, zz);
            (g.re, g.im)
        }),
    })
}

/// Both sides of the half-line discrepancy report: the L1 distance
/// int_{-inf}^{-1} |1/x - G_{2l}| dx, reduced analytically to
/// (1/l) int_0^inf |sin 2ls|/(1+s^2) ds, next to 2 ln coth l. Reported, not
/// asserted equal.
#[derive(Debug, Clone, Serialize)]
pub struct DiscrepancyReport {
    pub lambda: f64,
    pub l1_distance: f64,
    pub m_two_lambda: f64,
}

pub fn g_two_lambda_discrepancy(lambda: f64) -> Result<DiscrepancyReport> {
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    // integrate |sin(2 l s)|/(1+s^2) per half-period, then correct the tail
    // by its mean value 2/pi
    let half_period = std::f64::consts::PI / (2.0 * lambda);
    let pieces = ((400.0 / half_period) as usize).clamp(64, 200_000);
    let (nodes, weights) = gauss_legendre(8);
    let mut acc = 0.0;
    for k in 0..pieces {
        let a = k as f64 * half_period;
        let b = a + half_period;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (&t, &w) in nodes.iter().zip(&weights) {
            let s = mid + half * t;
            acc += half * w * (2.0 * lambda * s).sin().abs() / (1.0 + s * s);
        }
    }
    let s_end = pieces as f64 * half_period;
    acc += (2.0 / std::f64::consts::PI)
        * (std::f64::consts::FRAC_PI_2 - s_end.atan());
    Ok(DiscrepancyReport {
        lambda,
        l1_distance: acc / lambda,
        m_two_lambda: m_two_lambda(lambda)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrendStatus {
    Monotone,
    Inconclusive,
}

/// Extrapolated limit of log|F(x)| / majorant(x) along a sample schedule.
/// Callers supply log|F| directly so large arguments cannot overflow.
#[derive(Debug, Clone, Serialize)]
pub struct TypeEstimate {
    pub estimate: f64,
    pub samples: Vec<(f64, f64)>,
    pub status: TrendStatus,
}

pub fn exponential_type<F, M>(log_f: F, majorant: M, schedule: &[f64]) -> Result<TypeEstimate>
where
    F: Fn(f64) -> f64,
    M: Fn(f64) -> f64,
{
    if schedule.len() < 3 {
        return Err(Error::InvalidArgument(
            "schedule needs at least three points".into(),
        ));
    }
    let samples: Vec<(f64, f64)> = schedule
        .iter()
        .map(|&x| (majorant(x), log_f(x) / majorant(x)))
        .collect();
    // two-point extrapolation in 1/majorant: e(x) = d - c/m(x) gives
    // d = (e2 m2 - e1 m1)/(m2 - m1)
    let (m1, e1) = samples[samples.len() - 2];
    let (m2, e2) = samples[samples.len() - 1];
    if (m2 - m1).abs() < 1e-12 * m2.abs() {
        return Err(Error::InvalidArgument("majorant not separating".into()));
    }
    let estimate = (e2 * m2 - e1 * m1) / (m2 - m1);
    // trend: successive ratios should move monotonically toward the estimate
    let mut monotone = true;
    for w in samples.windows(2) {
        let d0 = (w[0].1 - estimate).abs();
        let d1 = (w[1].1 - estimate).abs();
        if d1 > d0 * 1.2 + 1e-9 {
            monotone = false;
        }
    }
    Ok(TypeEstimate {
        estimate,
        samples,
        status: if monotone {
            TrendStatus::Monotone
        } else {
            TrendStatus::Inconclusive
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::make_interval_system;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_interval_green_closed_form() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let (_, g) = finite_gap_green(&e, Complex64::new(2.0, 0.0), None, 48).unwrap();
        assert_abs_diff_eq!(g, (2f64 + 3f64.sqrt()).ln(), epsilon = 1e-6);
    }

    #[test]
    fn green_robin_constant() {
        // for E = [-1,1]: G(z) - ln|z| -> ln 2
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let z = Complex64::new(1e4, 0.0);
        let (_, g) = finite_gap_green(&e, z, None, 48).unwrap();
        assert_abs_diff_eq!(g - z.re.ln(), 2f64.ln(), epsilon = 1e-4);
    }

    #[test]
    fn symmetric_two_band_critical_point() {
        let e = make_interval_system(&[[-1.0, -0.5], [0.5, 1.0]]).unwrap();
        let (data, _) = finite_gap_green(&e, Complex64::new(2.0, 0.0), None, 64).unwrap();
        assert_eq!(data.critical_points.len(), 1);
        assert_abs_diff_eq!(data.critical_points[0], 0.0, epsilon = 1e-10);
        assert!(data.gap_period_residuals[0] <= 1e-10);
        assert!(data.widom_sum.is_finite() && data.widom_sum > 0.0);
    }

    #[test]
    fn green_symmetry_and_positivity() {
        let e = make_interval_system(&[[-1.0, -0.5], [0.5, 1.0]]).unwrap();
        for &(re, im) in &[(0.0, 0.3), (1.4, 0.2), (0.2, 1.0)] {
            let (_, gp) = finite_gap_green(&e, Complex64::new(re, im), None, 48).unwrap();
            let (_, gm) = finite_gap_green(&e, Complex64::new(-re, im), None, 48).unwrap();
            assert!(gp > 0.0);
            assert_abs_diff_eq!(gp, gm, epsilon = 1e-8);
        }
    }

    #[test]
    fn martin_normalization_and_harmonicity() {
        assert_abs_diff_eq!(martin_halfline(Complex64::new(0.0, 0.0)), 1.0);
        // discrete mean value test off E
        let z = Complex64::new(0.7, 0.9);
        let r = 0.05;
        let mut mean = 0.0;
        let n = 64;
        for k in 0..n {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            mean += martin_halfline(z + Complex64::new(r * th.cos(), r * th.sin()));
        }
        mean /= n as f64;
        assert_abs_diff_eq!(mean, martin_halfline(z), epsilon = 1e-10);
        // M vanishes on E
        assert_abs_diff_eq!(martin_halfline(Complex64::new(-2.0, 0.0)), 0.0, epsilon = 1e-12);
        // Theta is Nevanlinna: positive imaginary part upstairs
        assert!(martin_conjugate(Complex64::new(0.3, 0.4)).im > 0.0);
    }

    #[test]
    fn half_line_closed_forms() {
        assert_abs_diff_eq!(m_two_lambda(0.5).unwrap(), 1.5438734, epsilon = 1e-6);
        // identity 2 ln coth l = M_n(v) with v^n = e^{-2l}
        for &(n, lambda) in &[(8u32, 0.5f64), (16, 1.0), (32, 0.25)] {
            let v = (-2.0 * lambda / n as f64).exp();
            assert_abs_diff_eq!(
                m_n_of_v(n, v).unwrap(),
                m_two_lambda(lambda).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn g_two_lambda_finite_at_minus_one() {
        // z = -1 is a removable point of the sinh ratio
        let g = g_two_lambda(0.5, Complex64::new(-1.0 + 1e-12, 0.0));
        assert!(g.norm() < 10.0);
    }

    #[test]
    fn discrepancy_report_emits_both_numbers() {
        for &l in &[0.25, 0.5, 1.0, 2.0] {
            let rep = g_two_lambda_discrepancy(l).unwrap();
            assert!(rep.l1_distance.is_finite() && rep.l1_distance > 0.0);
            assert!(rep.m_two_lambda.is_finite() && rep.m_two_lambda > 0.0);
        }
    }

    #[test]
    fn exponential_type_of_cosh() {
        let lambda = 0.5;
        let est = exponential_type(
            |x: f64| {
                // log cosh(2 l sqrt(x+1)) without overflow
                let u = 2.0 * lambda * (x + 1.0).sqrt();
                u + (1.0 + (-2.0 * u).exp()).ln() - 2f64.ln()
            },
            |x: f64| (x + 1.0).sqrt(),
            &[1e2, 1e3, 1e4, 1e5, 1e6],
        )
        .unwrap();
        assert!((est.estimate - 2.0 * lambda).abs() < 1e-2, "{est:?}");
        assert_eq!(est.status, TrendStatus::Monotone);
    }

    #[test]
    fn exponential_type_of_constant_is_zero() {
        let est = exponential_type(
            |_| 0.0,
            |x: f64| (x + 1.0).sqrt(),
            &[1e2, 1e3, 1e4],
        )
        .unwrap();
        assert_abs_diff_eq!(est.estimate, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn exponential_type_of_polynomial_against_green_majorant() {
        // degree-3 polynomial vs the Green majorant of E = [-1, 1]:
        // log|x|^3 / (log|x| + ln 2) -> 3
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let majorant = move |x: f64| {
            let (_, g) = finite_gap_green(&e, Complex64::new(x, 0.0), None, 32).unwrap();
            g
        };
        let est = exponential_type(
            |x: f64| 3.0 * x.abs().ln(),
            majorant,
            &[1e2, 1e3, 1e4, 1e5, 1e6],
        )
        .unwrap();
        assert!((est.estimate - 3.0).abs() < 1e-2, "{est:?}");
    }
}
