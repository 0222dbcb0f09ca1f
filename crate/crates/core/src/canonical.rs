//! Determinant-one transfer-matrix chains built from Jacobi recurrences, the
//! J-expansion check, the Cauchy-transform identities tying first/second-kind
//! pairs to the resolvent, and the matrix transforms for rescaled or shifted
//! resolvents.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::QuadratureGrid;
use crate::l1::ExtremalSolution;
use crate::orthopoly::{orthopolys_from_moments, OrthoPair, Recurrence, ResolventMeasure};
use crate::report::{CheckResult, VerificationReport};

/// A 2x2 matrix value at one evaluation point, det = 1 up to roundoff.
#[derive(Debug, Clone, Serialize)]
pub struct CanonicalMatrix {
    pub z: Complex64,
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl CanonicalMatrix {
    pub fn identity(z: Complex64) -> Self {
        Self {
            z,
            a: Complex64::new(1.0, 0.0),
            b: Complex64::new(0.0, 0.0),
            c: Complex64::new(0.0, 0.0),
            d: Complex64::new(1.0, 0.0),
        }
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    pub fn mul(&self, rhs: &CanonicalMatrix) -> CanonicalMatrix {
        CanonicalMatrix {
            z: self.z,
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }
}

/// One step of the chain: [[(z - a_k)/b_{k+1}, -1/b_{k+1}], [b_{k+1}, 0]],
/// determinant exactly one.
pub fn step_matrix(a_k: f64, b_next: f64, z: Complex64) -> Result<CanonicalMatrix> {
    if b_next <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "off-diagonal coefficient must be positive, got {b_next}"
        )));
    }
    Ok(CanonicalMatrix {
        z,
        a: (z - a_k) / b_next,
        b: Complex64::new(-1.0 / b_next, 0.0),
        c: Complex64::new(b_next, 0.0),
        d: Complex64::new(0.0, 0.0),
    })
}

/// Ordered product of the first `n` step matrices of a recurrence. Applied to
/// (p_0, 0), the top row reproduces the orthonormal polynomial of degree n up
/// to the recorded mass normalization.
pub fn transfer_matrix_product(
    rec: &Recurrence,
    n: usize,
    z: Complex64,
) -> Result<CanonicalMatrix> {
    if n > rec.len() {
        return Err(Error::InvalidArgument(format!(
            "chain length {n} exceeds recurrence length {}",
            rec.len()
        )));
    }
    let mut prod = CanonicalMatrix::identity(z);
    for k in 0..n {
        let step = step_matrix(rec.a[k], rec.b[k], z)?;
        prod = step.mul(&prod);
    }
    Ok(prod)
}

/// Minimal eigenvalue of (M* J M - J)/(z - conj z); nonnegative for transfer
/// chains evaluated off the real axis.
pub fn j_expanding_check(m: &CanonicalMatrix) -> Result<f64> {
    if m.z.im == 0.0 {
        return Err(Error::InvalidArgument(
            "J-form is undefined for real z".into(),
        ));
    }
    // J = [[0, -1], [1, 0]]; form = (M^* J M - J)/(z - zbar)
    let (a, b, c, d) = (m.a, m.b, m.c, m.d);
    // M^* J M entries
    let e11 = c.conj() * a - a.conj() * c;
    let e12 = c.conj() * b - a.conj() * d;
    let e21 = d.conj() * a - b.conj() * c;
    let e22 = d.conj() * b - b.conj() * d;
    let denom = m.z - m.z.conj();
    let f11 = e11 / denom;
    let f12 = (e12 + Complex64::new(1.0, 0.0)) / denom;
    let f21 = (e21 - Complex64::new(1.0, 0.0)) / denom;
    let f22 = e22 / denom;
    // hermitian 2x2 eigenvalues
    let t = 0.5 * (f11.re + f22.re);
    let det = f11.re * f22.re - (f12 * f21).re;
    let disc = (t * t - det).max(0.0).sqrt();
    Ok(t - disc)
}

/// Transforms of the matrix under changes of the resolvent function.
#[derive(Debug, Clone, Copy)]
pub enum CanonicalTransform {
    /// R -> lambda R: B -> lambda B, C -> C/lambda.
    Scale(f64),
    /// R -> R + q: conjugation by the shear [[1, q], [0, 1]].
    Shift(f64),
    /// R -> R - 1/z: first column becomes [A - C/z, C]/(1 - C'(0)); the
    /// second column is completed so the determinant is preserved.
    PoleShift { c_prime_0: f64 },
}

pub fn apply_canonical_transform(
    m: &CanonicalMatrix,
    transform: CanonicalTransform,
) -> Result<CanonicalMatrix> {
    match transform {
        CanonicalTransform::Scale(lambda) => {
            if lambda <= 0.0 {
                return Err(Error::InvalidArgument("scale must be positive".into()));
            }
            Ok(CanonicalMatrix {
                z: m.z,
                a: m.a,
                b: m.b * lambda,
                c: m.c / lambda,
                d: m.d,
            })
        }
        CanonicalTransform::Shift(q) => {
            // [[1, q], [0, 1]] * M * [[1, -q], [0, 1]]
            let a = m.a + q * m.c;
            let b = m.b + q * m.d;
            let c = m.c;
            let d = m.d;
            Ok(CanonicalMatrix {
                z: m.z,
                a,
                b: b - q * a,
                c,
                d: d - q * c,
            })
        }
        CanonicalTransform::PoleShift { c_prime_0 } => {
            let denom = 1.0 - c_prime_0;
            if denom.abs() < 1e-14 {
                return Err(Error::SingularNormalization(
                    "pole shift needs C'(0) != 1".into(),
                ));
            }
            let inv_z = Complex64::new(1.0, 0.0) / m.z;
            Ok(CanonicalMatrix {
                z: m.z,
                a: (m.a - m.c * inv_z) / denom,
                b: (m.b - m.d * inv_z) * denom,
                c: m.c / denom,
                d: m.d * denom,
            })
        }
    }
}

/// Residuals of the resolvent identities for an orthonormal pair (C, A) and
/// its measure, sampled at points off E:
///  (i)  int C^2 dmu/(x-z) = C(z) (C(z)R(z) + A(z)),
///  (ii) (1/R) int C A dmu/(x-z) = A(z)C(z) + A(z)^2/R(z),
/// with R(z) = int dmu/(x-z) evaluated by the same quadrature.
pub fn identity_residuals(
    pair: &OrthoPair,
    grid: &QuadratureGrid,
    atom: Option<f64>,
    z_samples: &[Complex64],
    min_distance: f64,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::default();
    let cauchy = |f: &dyn Fn(f64) -> f64, z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
            acc += w * f(x) / (Complex64::new(x, 0.0) - z);
        }
        if let Some(q) = atom {
            acc += q * f(0.0) / (-z);
        }
        acc
    };
    for (k, &z) in z_samples.iter().enumerate() {
        let too_close = grid
            .nodes
            .iter()
            .any(|&x| (Complex64::new(x, 0.0) - z).norm() < min_distance);
        if too_close || (atom.is_some() && z.norm() < min_distance) {
            return Err(Error::ProximityToSupport {
                dist: min_distance,
            });
        }
        let r = cauchy(&|_| 1.0, z);
        let cz = pair.first.eval_complex(z);
        let az = pair.second.eval_complex(z);
        let lhs1 = cauchy(&|x| pair.first.eval(x).powi(2), z);
        let rhs1 = cz * (cz * r + az);
        let scale1 = lhs1.norm().max(rhs1.norm()).max(1e-12);
        report.push(
            CheckResult::new(
                format!("first_kind_identity_{k}"),
                (lhs1 - rhs1).norm() / scale1,
                1e-6,
            )
            .with_note(format!("z = {z}")),
        );
        let lhs2 = cauchy(&|x| pair.first.eval(x) * pair.second.eval(x), z) / r;
        let rhs2 = az * cz + az * az / r;
        let scale2 = lhs2.norm().max(rhs2.norm()).max(1e-12);
        report.push(
            CheckResult::new(
                format!("second_kind_identity_{k}"),
                (lhs2 - rhs2).norm() / scale2,
                1e-6,
            )
            .with_note(format!("z = {z}")),
        );
    }
    Ok(report)
}

/// The truncated analogue of the closed-form value identity: with C the
/// degree-n orthonormal polynomial of the resolvent measure (origin atom plus
/// band density), e^{M/2} is compared against
/// 1 + int (C(x)/(C'(0) x))^2 rho(x) dx.
#[derive(Debug, Clone, Serialize)]
pub struct ValueIdentityReport {
    pub degree: usize,
    pub m_value: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_residual: f64,
    pub c_at_origin: f64,
}

pub fn value_identity_residual(
    measure: &ResolventMeasure,
    m_value: f64,
    degree: usize,
) -> Result<ValueIdentityReport> {
    let mom = measure.moments(2 * degree)?;
    let (_, pairs) = orthopolys_from_moments(&mom)?;
    let pair = pairs
        .iter()
        .find(|p| p.degree == degree)
        .ok_or(Error::RankDeficient { degree })?;
    let c = &pair.first;
    let cp0 = c.derivative().eval(0.0);
    if cp0.abs() < 1e-300 {
        return Err(Error::SingularNormalization("C'(0) = 0".into()));
    }
    let rhs = 1.0 + measure.integrate_band(|x| (c.eval(x) / (cp0 * x)).powi(2));
    let lhs = (0.5 * m_value).exp();
    Ok(ValueIdentityReport {
        degree,
        m_value,
        lhs,
        rhs,
        rel_residual: (lhs - rhs).abs() / lhs,
        c_at_origin: c.eval(0.0),
    })
}

/// Sign configuration matching the computed extremal polynomial: +1 on gaps
/// where F > 0, -1 where F < 0.
pub fn delta_from_gap_signs(sol: &ExtremalSolution) -> Vec<i8> {
    sol.gap_signs.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::{build_quadrature, make_interval_system, WeightSpec};
    use crate::orthopoly::measure_moments;
    use approx::assert_abs_diff_eq;

    fn free_jacobi(n: usize) -> Recurrence {
        Recurrence {
            a: vec![0.0; n],
            b: vec![1.0; n],
            mass: 1.0,
        }
    }

    #[test]
    fn single_step_matrix() {
        let z = Complex64::new(0.3, 0.2);
        let m = step_matrix(0.0, 1.0, z).unwrap();
        assert_eq!(m.a, z);
        assert_eq!(m.b, Complex64::new(-1.0, 0.0));
        assert_eq!(m.c, Complex64::new(1.0, 0.0));
        assert_abs_diff_eq!((m.det() - 1.0).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn chain_determinant_is_one() {
        // deterministic pseudo-random coefficients
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut state = 88172645463325252u64;
        let mut rnd = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            a.push(2.0 * rnd() - 1.0);
            b.push(0.2 + rnd());
        }
        let rec = Recurrence { a, b, mass: 1.0 };
        let m = transfer_matrix_product(&rec, 20, Complex64::new(0.4, 0.9)).unwrap();
        assert!((m.det() - 1.0).norm() <= 1e-12);
    }

    #[test]
    fn top_left_matches_direct_recurrence() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let grid = build_quadrature(&e, &WeightSpec::Unit, 32, false).unwrap();
        let mom = measure_moments(&grid, 12).unwrap();
        let (rec, pairs) = orthopolys_from_moments(&mom).unwrap();
        let z = Complex64::new(0.37, 0.0);
        let n = 5;
        let m = transfer_matrix_product(&rec, n, z).unwrap();
        // (p_n, b_n p_{n-1}) = product * (p_0, 0)
        let p0 = 1.0 / mom[0].sqrt();
        let top = m.a * p0;
        let pn = pairs.iter().find(|p| p.degree == n).unwrap();
        assert_abs_diff_eq!(top.re, pn.first.eval(z.re), epsilon = 1e-10);
        assert_abs_diff_eq!(top.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_matrix_form_is_zero() {
        let m = CanonicalMatrix::identity(Complex64::new(0.0, 1.0));
        assert_abs_diff_eq!(j_expanding_check(&m).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn single_step_form_at_i() {
        // [[z, -1], [1, 0]] at z = i: form = diag(1, 0), min eig 0
        let m = step_matrix(0.0, 1.0, Complex64::new(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(j_expanding_check(&m).unwrap(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn chain_is_j_expanding() {
        let rec = free_jacobi(20);
        let m = transfer_matrix_product(&rec, 20, Complex64::new(0.3, 0.7)).unwrap();
        assert!(j_expanding_check(&m).unwrap() >= -1e-10);
    }

    #[test]
    fn real_z_rejected() {
        let m = CanonicalMatrix::identity(Complex64::new(0.5, 0.0));
        assert!(j_expanding_check(&m).is_err());
    }

    #[test]
    fn scale_transform_preserves_det() {
        let m = step_matrix(0.2, 0.8, Complex64::new(0.1, 0.5)).unwrap();
        let s = apply_canonical_transform(&m, CanonicalTransform::Scale(2.0)).unwrap();
        assert_eq!(s.b, m.b * 2.0);
        assert_eq!(s.c, m.c / 2.0);
        assert!((s.det() - 1.0).norm() < 1e-13);
    }

    #[test]
    fn shift_then_unshift_is_identity() {
        let m = step_matrix(0.2, 0.8, Complex64::new(0.1, 0.5)).unwrap();
        let s = apply_canonical_transform(&m, CanonicalTransform::Shift(1.7)).unwrap();
        let back = apply_canonical_transform(&s, CanonicalTransform::Shift(-1.7)).unwrap();
        for (x, y) in [(back.a, m.a), (back.b, m.b), (back.c, m.c), (back.d, m.d)] {
            assert!((x - y).norm() < 1e-13);
        }
        assert!((s.det() - 1.0).norm() < 1e-13);
    }

    #[test]
    fn pole_shift_singular_when_cprime_is_one() {
        let m = CanonicalMatrix::identity(Complex64::new(0.0, 1.0));
        let got = apply_canonical_transform(&m, CanonicalTransform::PoleShift { c_prime_0: 1.0 });
        assert!(matches!(got, Err(Error::SingularNormalization(_))));
    }

    #[test]
    fn pole_shift_first_column_and_det() {
        let z = Complex64::new(0.4, 1.1);
        let m = step_matrix(-0.3, 1.2, z).unwrap();
        let cp0 = 0.25;
        let t =
            apply_canonical_transform(&m, CanonicalTransform::PoleShift { c_prime_0: cp0 })
                .unwrap();
        let denom = 1.0 - cp0;
        assert!((t.a - (m.a - m.c / z) / denom).norm() < 1e-13);
        assert!((t.c - m.c / denom).norm() < 1e-13);
        assert!((t.det() - m.det()).norm() < 1e-12);
    }

    #[test]
    fn legendre_identity_at_two() {
        // analytic oracle: int C_1^2/(x-2) dx = (3/2) (4 - 4 ln 3) = -0.5917
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let grid = build_quadrature(&e, &WeightSpec::Unit, 48, false).unwrap();
        let mom = measure_moments(&grid, 6).unwrap();
        let (_, pairs) = orthopolys_from_moments(&mom).unwrap();
        let pair = pairs.iter().find(|p| p.degree == 1).unwrap();
        let z = Complex64::new(2.0, 0.0);
        let report = identity_residuals(pair, &grid, None, &[z], 1e-6).unwrap();
        assert!(report.all_pass(), "{report:?}");
        // and the raw value matches the oracle
        let lhs: f64 = grid.integrate(|x| pair.first.eval(x).powi(2) / (x - 2.0));
        assert_abs_diff_eq!(lhs, 1.5 * (4.0 - 4.0 * 3f64.ln()), epsilon = 1e-4);
    }

    #[test]
    fn identities_decay_like_one_over_z() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let grid = build_quadrature(&e, &WeightSpec::Unit, 48, false).unwrap();
        let mom = measure_moments(&grid, 8).unwrap();
        let (_, pairs) = orthopolys_from_moments(&mom).unwrap();
        let pair = pairs.iter().find(|p| p.degree == 2).unwrap();
        let z = Complex64::new(1e3, 0.0);
        let lhs: f64 = grid.integrate(|x| pair.first.eval(x).powi(2) / (x - z.re));
        let r: f64 = grid.integrate(|x| 1.0 / (x - z.re));
        let rhs = pair.first.eval(z.re) * (pair.first.eval(z.re) * r + pair.second.eval(z.re));
        // both sides decay like -1/z; their ratio approaches 1
        assert_abs_diff_eq!(lhs * z.re, -1.0, epsilon = 1e-2);
        assert_abs_diff_eq!(lhs / rhs, 1.0, epsilon = 1e-2);
    }
}
