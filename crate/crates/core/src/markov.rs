//! The moment-problem dual: bisection over the sup-norm bound L, testing for
//! every sign configuration whether the dual-symbol coefficients are moments
//! of a positive measure on the hull, via localized Hankel positivity.
//!
//! The symbol prescribes only the first n+2 expansion coefficients; the
//! solution's higher moments are free. That freedom enters all 2^m sequences
//! through one shared tail shift of the last moment, so feasibility asks for
//! a common shift landing every configuration inside its admissible interval.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::{IntervalSystem, SignConfiguration};
use crate::l1::LinearFunctional;
use crate::laurent::{dual_symbol_series, MomentSequence};

/// Minimal eigenvalue of one localized Hankel form, relative to a fixed scale.
#[derive(Debug, Clone, Serialize)]
pub struct FormReport {
    pub name: &'static str,
    pub size: usize,
    pub min_eig: f64,
}

/// Per-configuration verdict with the tested forms.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub delta_index: usize,
    pub forms: Vec<FormReport>,
    pub feasible: bool,
    pub failing: Option<usize>,
}

fn hankel_min_eig(m: &[f64]) -> Option<(usize, f64)> {
    if m.is_empty() {
        return None;
    }
    let p = (m.len() - 1) / 2;
    let h = DMatrix::<f64>::from_fn(p + 1, p + 1, |i, j| m[i + j]);
    let eig = h.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Some((p + 1, min))
}

fn localized_forms(s: &[f64], beta: f64, alpha: f64) -> Vec<(&'static str, Vec<f64>)> {
    let n = s.len() - 1;
    let mut out = Vec::with_capacity(4);
    out.push(("H[s]", s.to_vec()));
    if n >= 1 {
        out.push((
            "H[(x-b)s]",
            (0..n).map(|k| s[k + 1] - beta * s[k]).collect(),
        ));
        out.push((
            "H[(a-x)s]",
            (0..n).map(|k| alpha * s[k] - s[k + 1]).collect(),
        ));
    }
    if n >= 2 {
        out.push((
            "H[(x-b)(a-x)s]",
            (0..n - 1)
                .map(|k| (alpha + beta) * s[k + 1] - s[k + 2] - alpha * beta * s[k])
                .collect(),
        ));
    }
    out
}

fn moment_scale(s: &[f64], beta: f64, alpha: f64) -> f64 {
    let r = alpha.abs().max(beta.abs()).max(1.0);
    let smax = s.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    smax.max(1.0) * r * r
}

/// Tests whether `s` is the truncated moment sequence of a positive measure
/// on [beta, alpha]: the plain Hankel form plus the localized forms for the
/// shifted moments of (x-beta) dmu, (alpha-x) dmu, and (when the sequence is
/// long enough) (x-beta)(alpha-x) dmu.
pub fn hankel_feasible_on_interval(
    s: &MomentSequence,
    interval: (f64, f64),
    tol: f64,
) -> FeasibilityReport {
    report_for(&s.s, interval.0, interval.1, tol, 0)
}

fn report_for(s: &[f64], beta: f64, alpha: f64, tol: f64, delta_index: usize) -> FeasibilityReport {
    let scale = moment_scale(s, beta, alpha);
    let mut forms = Vec::new();
    let mut failing = None;
    for (i, (name, seq)) in localized_forms(s, beta, alpha).into_iter().enumerate() {
        if let Some((size, min)) = hankel_min_eig(&seq) {
            let rel = min / scale;
            if rel < -tol && failing.is_none() {
                failing = Some(i);
            }
            forms.push(FormReport {
                name,
                size,
                min_eig: rel,
            });
        }
    }
    FeasibilityReport {
        delta_index,
        forms,
        feasible: failing.is_none(),
        failing,
    }
}

fn min_form_eig(s: &[f64], beta: f64, alpha: f64, scale: f64) -> f64 {
    localized_forms(s, beta, alpha)
        .into_iter()
        .filter_map(|(_, seq)| hankel_min_eig(&seq))
        .map(|(_, min)| min / scale)
        .fold(f64::INFINITY, f64::min)
}

/// Admissible interval for the last moment of `s` (all other moments fixed),
/// or None when no value makes the sequence feasible. The minimal form
/// eigenvalue is concave in the last moment, so ternary search followed by
/// endpoint bisection is exact.
fn tail_interval(s: &[f64], beta: f64, alpha: f64, tol: f64) -> Option<(f64, f64)> {
    let scale = moment_scale(s, beta, alpha);
    let last = s.len() - 1;
    let r = alpha.abs().max(beta.abs()).max(1.0);
    let radius = 4.0 * r.powi(last as i32) * s[0].abs().max(1.0) + 1.0;
    let mut buf = s.to_vec();
    let mut g = |v: f64| {
        buf[last] = v;
        let out = min_form_eig(&buf, beta, alpha, scale);
        out
    };
    let (mut lo, mut hi) = (s[last] - radius, s[last] + radius);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if g(m1) < g(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let peak = 0.5 * (lo + hi);
    if g(peak) < -tol {
        return None;
    }
    // left endpoint: g crosses -tol between peak - radius and peak
    let (mut a, mut b) = (peak - 2.0 * radius, peak);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if g(m) >= -tol {
            b = m;
        } else {
            a = m;
        }
    }
    let left = b;
    let (mut a, mut b) = (peak, peak + 2.0 * radius);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if g(m) >= -tol {
            a = m;
        } else {
            b = m;
        }
    }
    Some((left, a))
}

/// Expansion coefficients turned into candidate measure moments:
/// sigma_k = -c_{k+1} for k = 0..n+1, requiring the symbol to order n+2.
fn symbol_moments(
    system: &IntervalSystem,
    delta: &SignConfiguration,
    functional: &LinearFunctional,
    bound: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let series = dual_symbol_series(system, delta, functional, bound, n + 2)?;
    Ok((0..=n + 1).map(|k| -series.coeff(k + 1)).collect())
}

/// Smallest feasible bound with bisection bracket and certificates just
/// above and below.
#[derive(Debug, Clone, Serialize)]
pub struct DualSolution {
    pub bound: f64,
    pub bracket: (f64, f64),
    pub reports_feasible: Vec<FeasibilityReport>,
    pub reports_infeasible: Vec<FeasibilityReport>,
    pub trials: usize,
}

struct TailData {
    delta_index: usize,
    interval: Option<(f64, f64)>,
    last: f64,
    report: FeasibilityReport,
}

fn configuration_data(
    system: &IntervalSystem,
    functional: &LinearFunctional,
    bound: f64,
    n: usize,
    tol: f64,
) -> Result<Vec<TailData>> {
    let (beta, alpha) = system.hull();
    let m = system.gap_count();
    let configs = SignConfiguration::enumerate(m);
    configs
        .par_iter()
        .map(|delta| {
            let s = symbol_moments(system, delta, functional, bound, n)?;
            let interval = tail_interval(&s, beta, alpha, tol);
            let report = report_for(&s, beta, alpha, tol, delta.index());
            Ok(TailData {
                delta_index: delta.index(),
                interval,
                last: *s.last().unwrap(),
                report,
            })
        })
        .collect()
}

fn coupled_feasible(data: &[TailData]) -> bool {
    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for d in data {
        match d.interval {
            None => return false,
            Some((lo, hi)) => {
                // shared shift t moves every last moment to last - t
                t_lo = t_lo.max(d.last - hi);
                t_hi = t_hi.min(d.last - lo);
            }
        }
    }
    t_lo <= t_hi + 1e-12
}

/// Solves for the smallest L such that every sign configuration admits a
/// representing measure, by geometric bisection.
pub fn solve_markov_l(
    system: &IntervalSystem,
    functional: &LinearFunctional,
    n: usize,
    tol: f64,
) -> Result<DualSolution> {
    if functional.degree() > n {
        return Err(Error::InvalidArgument(
            "functional degree exceeds n".into(),
        ));
    }
    let psd_tol = 1e-11;
    let (mut lo, mut hi) = (1e-6, 1e6);
    let mut trials = 0;
    let feasible_at = |l: f64, trials: &mut usize| -> Result<bool> {
        *trials += 1;
        let data = configuration_data(system, functional, l, n, psd_tol)?;
        Ok(coupled_feasible(&data))
    };
    if !feasible_at(hi, &mut trials)? {
        return Err(Error::NoFeasibleBound { lo, hi });
    }
    if feasible_at(lo, &mut trials)? {
        // degenerate: feasible arbitrarily close to zero
        return Err(Error::NoFeasibleBound { lo: 0.0, hi: lo });
    }
    while hi / lo > 1.0 + tol {
        let mid = (lo * hi).sqrt();
        if feasible_at(mid, &mut trials)? {
            hi = mid;
        } else {
            lo = mid;
        }
        if trials > 400 {
            break;
        }
    }
    let eps = tol.max(1e-12);
    let upper = configuration_data(system, functional, hi * (1.0 + eps), n, psd_tol)?;
    let lower = configuration_data(system, functional, lo * (1.0 - eps), n, psd_tol)?;
    Ok(DualSolution {
        bound: hi,
        bracket: (lo, hi),
        reports_feasible: upper.into_iter().map(|d| d.report).collect(),
        reports_infeasible: lower.into_iter().map(|d| d.report).collect(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::make_interval_system;
    use crate::laurent::MomentSequence;

    #[test]
    fn point_mass_sequence_feasible() {
        let s = MomentSequence {
            s: vec![1.0, 0.5, 0.25],
        };
        let r = hankel_feasible_on_interval(&s, (-1.0, 1.0), 1e-10);
        assert!(r.feasible, "{r:?}");
    }

    #[test]
    fn lebesgue_moments_feasible() {
        let s = MomentSequence {
            s: vec![2.0, 0.0, 2.0 / 3.0],
        };
        let r = hankel_feasible_on_interval(&s, (-1.0, 1.0), 1e-10);
        assert!(r.feasible);
    }

    #[test]
    fn outside_point_mass_infeasible() {
        // moments of a point mass at 2 violate the (x-b)(a-x) form on [-1,1]
        let s = MomentSequence {
            s: vec![1.0, 2.0, 4.0],
        };
        let r = hankel_feasible_on_interval(&s, (-1.0, 1.0), 1e-10);
        assert!(!r.feasible);
        let prod = r.forms.iter().find(|f| f.name == "H[(x-b)(a-x)s]").unwrap();
        assert!(prod.min_eig < 0.0);
    }

    #[test]
    fn single_band_leading_functional_degree_one() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let lam = LinearFunctional::leading(1);
        let sol = solve_markov_l(&e, &lam, 1, 1e-8).unwrap();
        assert!(
            (sol.bound - 1.0).abs() < 1e-5,
            "L = {} bracket {:?}",
            sol.bound,
            sol.bracket
        );
    }

    #[test]
    fn single_band_leading_functional_degree_three() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let lam = LinearFunctional::leading(3);
        let sol = solve_markov_l(&e, &lam, 3, 1e-8).unwrap();
        assert!(
            (sol.bound - 4.0).abs() < 4.0 * 1e-5,
            "L = {} bracket {:?}",
            sol.bound,
            sol.bracket
        );
    }

    #[test]
    fn feasibility_monotone_in_bound() {
        let e = make_interval_system(&[[-1.0, -0.4], [0.1, 1.0]]).unwrap();
        let lam = LinearFunctional::leading(2);
        let sol = solve_markov_l(&e, &lam, 2, 1e-7).unwrap();
        // spot checks at 2L and L/2
        let up = configuration_data(&e, &lam, 2.0 * sol.bound, 2, 1e-11).unwrap();
        assert!(coupled_feasible(&up));
        let down = configuration_data(&e, &lam, 0.5 * sol.bound, 2, 1e-11).unwrap();
        assert!(!coupled_feasible(&down));
    }

    #[test]
    fn verdicts_invariant_under_band_relabeling() {
        let a = make_interval_system(&[[-1.0, -0.4], [0.1, 1.0]]).unwrap();
        let b = make_interval_system(&[[0.1, 1.0], [-1.0, -0.4]]).unwrap();
        assert_eq!(a, b);
        let lam = LinearFunctional::leading(2);
        let ra = solve_markov_l(&a, &lam, 2, 1e-7).unwrap();
        let rb = solve_markov_l(&b, &lam, 2, 1e-7).unwrap();
        assert_eq!(ra.bound, rb.bound);
    }
}
