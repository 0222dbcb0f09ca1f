//! Truncated formal series in 1/z about infinity: products by Cauchy
//! convolution, log by formal integration, exp by the usual derivative
//! recurrence, and the square-root-ratio expansions that make up the dual
//! symbol of the Markov moment problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{IntervalSystem, SignConfiguration};
use crate::l1::LinearFunctional;

/// Coefficients c_0..c_K of sum_k c_k z^{-k}. Combining series of different
/// truncation order truncates to the shorter one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaurentSeries {
    c: Vec<f64>,
}

impl LaurentSeries {
    pub fn new(c: Vec<f64>) -> Self {
        assert!(!c.is_empty());
        Self { c }
    }

    pub fn one(order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = 1.0;
        Self { c }
    }

    pub fn zero(order: usize) -> Self {
        Self {
            c: vec![0.0; order + 1],
        }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    pub fn truncate(&self, order: usize) -> Self {
        let mut c = self.c.clone();
        c.truncate(order + 1);
        c.resize(order + 1, 0.0);
        Self { c }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let k = self.order().min(other.order());
        let mut c = vec![0.0; k + 1];
        for i in 0..=k {
            for j in 0..=k - i {
                c[i + j] += self.c[i] * other.c[j];
            }
        }
        Self { c }
    }

    /// exp(S) for a series with finite constant term; coefficient recurrence
    /// t_n = (1/n) sum_{k=1}^{n} k s_k t_{n-k}, scaled by e^{s_0}.
    pub fn exp(&self) -> Self {
        let k = self.order();
        let mut t = vec![0.0; k + 1];
        t[0] = 1.0;
        for n in 1..=k {
            let mut acc = 0.0;
            for j in 1..=n {
                acc += j as f64 * self.c[j] * t[n - j];
            }
            t[n] = acc / n as f64;
        }
        let scale = self.c[0].exp();
        Self {
            c: t.into_iter().map(|v| v * scale).collect(),
        }
    }

    /// log(S) for a series with c_0 = 1.
    pub fn log(&self) -> Result<Self> {
        if self.c[0] <= 0.0 {
            return Err(Error::Branch(format!(
                "log of series with leading coefficient {}",
                self.c[0]
            )));
        }
        if (self.c[0] - 1.0).abs() > 1e-14 {
            // normalize and add back the constant
            let inv = 1.0 / self.c[0];
            let norm = Self {
                c: self.c.iter().map(|v| v * inv).collect(),
            };
            let mut l = norm.log()?;
            l.c[0] += self.c[0].ln();
            return Ok(l);
        }
        let k = self.order();
        let mut l = vec![0.0; k + 1];
        for n in 1..=k {
            let mut acc = 0.0;
            for j in 1..n {
                acc += j as f64 * l[j] * self.c[n - j];
            }
            l[n] = self.c[n] - acc / n as f64;
        }
        Ok(Self { c: l })
    }

    /// S^{p/2} via exp((p/2) log S); requires positive leading coefficient.
    pub fn pow_half(&self, p: i32) -> Result<Self> {
        let l = self.log()?;
        let scaled = Self {
            c: l.c.iter().map(|v| v * (p as f64) * 0.5).collect(),
        };
        Ok(scaled.exp())
    }
}

/// Expansion of sqrt((z-a)/(z-b)) about infinity, truncated at `order`.
pub fn sqrt_ratio(a: f64, b: f64, order: usize) -> Result<LaurentSeries> {
    ratio_pow_half(a, b, 1, order)
}

/// Expansion of ((z-a)/(z-b))^{p/2} about infinity.
pub fn ratio_pow_half(a: f64, b: f64, p: i32, order: usize) -> Result<LaurentSeries> {
    // (z-a)/(z-b) = (1 - a/z) * sum_k b^k z^{-k}
    let mut num = vec![0.0; order + 1];
    num[0] = 1.0;
    if order >= 1 {
        num[1] = -a;
    }
    let mut den = vec![0.0; order + 1];
    let mut bk = 1.0;
    for d in den.iter_mut() {
        *d = bk;
        bk *= b;
    }
    let ratio = LaurentSeries::new(num).mul(&LaurentSeries::new(den));
    ratio.pow_half(p)
}

/// Moment-style coefficient vector s_0..s_{n+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSequence {
    pub s: Vec<f64>,
}

impl MomentSequence {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// The full dual symbol
/// sqrt((z-a0)/(z-b0)) * prod_j sqrt((z-a_j)/(z-b_j))^{delta_j}
///   * exp((1/2L)(lambda_0/z + ... + lambda_n/z^{n+1}))
/// expanded to the requested truncation order.
pub fn dual_symbol_series(
    system: &IntervalSystem,
    delta: &SignConfiguration,
    functional: &LinearFunctional,
    bound: f64,
    order: usize,
) -> Result<LaurentSeries> {
    if bound <= 0.0 {
        return Err(Error::InvalidArgument("L must be positive".into()));
    }
    if delta.len() != system.gap_count() {
        return Err(Error::InvalidArgument(format!(
            "sign configuration length {} != gap count {}",
            delta.len(),
            system.gap_count()
        )));
    }
    let (b0, a0) = system.hull();
    let mut s = sqrt_ratio(a0, b0, order)?;
    for (gap, &d) in system.gaps().iter().zip(delta.signs()) {
        s = s.mul(&ratio_pow_half(gap.lo, gap.hi, d as i32, order)?);
    }
    let mut expo = vec![0.0; order + 1];
    for (k, &lk) in functional.lambdas().iter().enumerate() {
        if k + 1 <= order {
            expo[k + 1] = lk / (2.0 * bound);
        }
    }
    Ok(s.mul(&LaurentSeries::new(expo).exp()))
}

/// Coefficients s_0..s_{n+1} of the dual symbol for a degree-n functional.
pub fn expand_dual_symbol(
    system: &IntervalSystem,
    delta: &SignConfiguration,
    functional: &LinearFunctional,
    bound: f64,
    n: usize,
) -> Result<MomentSequence> {
    let series = dual_symbol_series(system, delta, functional, bound, n + 1)?;
    Ok(MomentSequence {
        s: series.coeffs().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::make_interval_system;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sqrt_ratio_reference_expansions() {
        // sqrt((z+1)/(z-1)) = 1 + 1/z + 1/(2z^2) + 1/(2z^3) + ...
        let s = sqrt_ratio(-1.0, 1.0, 3).unwrap();
        for (k, expect) in [1.0, 1.0, 0.5, 0.5].iter().enumerate() {
            assert_abs_diff_eq!(s.coeff(k), expect, epsilon = 1e-14);
        }
        let s = sqrt_ratio(1.0, -1.0, 3).unwrap();
        for (k, expect) in [1.0, -1.0, 0.5, -0.5].iter().enumerate() {
            assert_abs_diff_eq!(s.coeff(k), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn exp_of_zero_is_one() {
        let z = LaurentSeries::zero(5);
        assert_eq!(z.exp().coeffs(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dual_symbol_plain_band() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let delta = SignConfiguration::new(vec![]).unwrap();
        let lam = LinearFunctional::new(vec![0.0, 0.0, 1.0]).unwrap();
        // large L: the exponential factor is ~1, so the head matches
        // sqrt((z-1)/(z+1))
        let m = expand_dual_symbol(&e, &delta, &lam, 1e12, 2).unwrap();
        assert_abs_diff_eq!(m.s[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.s[1], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(m.s[2], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn dual_symbol_with_exponential_factor() {
        // E=[-1,1], lambda_0=1 others 0, L=1/2:
        // product of (1,-1,1/2,-1/2) with e^{1/z} = (1,1,1/2,1/6)
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let delta = SignConfiguration::new(vec![]).unwrap();
        let lam = LinearFunctional::new(vec![1.0, 0.0, 0.0]).unwrap();
        let m = expand_dual_symbol(&e, &delta, &lam, 0.5, 2).unwrap();
        assert_abs_diff_eq!(m.s[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.s[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.s[2], 0.0, epsilon = 1e-14);
        let m = expand_dual_symbol(&e, &delta, &lam, 0.5, 3).unwrap();
        assert_abs_diff_eq!(m.s[3], -1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn leading_coefficient_always_one() {
        let e = make_interval_system(&[[-2.0, -1.0], [0.5, 1.5], [2.0, 3.0]]).unwrap();
        for delta in SignConfiguration::enumerate(2) {
            let lam = LinearFunctional::new(vec![0.3, -1.0, 0.7]).unwrap();
            let m = expand_dual_symbol(&e, &delta, &lam, 2.5, 2).unwrap();
            assert_abs_diff_eq!(m.s[0], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn opposite_signs_multiply_to_square_of_plain_symbol() {
        let e = make_interval_system(&[[-2.0, -1.0], [0.0, 1.0]]).unwrap();
        let lam = LinearFunctional::new(vec![1.0, 0.5]).unwrap();
        let l = 1.7;
        let k = 8;
        let d = SignConfiguration::new(vec![1]).unwrap();
        let a = dual_symbol_series(&e, &d, &lam, l, k).unwrap();
        let b = dual_symbol_series(&e, &d.negated(), &lam, l, k).unwrap();
        let prod = a.mul(&b);
        // delta and -delta multiply to the delta-free squared symbol
        let plain = {
            let (b0, a0) = e.hull();
            let base = sqrt_ratio(a0, b0, k).unwrap();
            let mut expo = vec![0.0; k + 1];
            for (i, &lk) in lam.lambdas().iter().enumerate() {
                expo[i + 1] = lk / (2.0 * l);
            }
            let efac = LaurentSeries::new(expo).exp();
            base.mul(&efac).mul(&base.mul(&efac))
        };
        for i in 0..=k {
            assert_abs_diff_eq!(prod.coeff(i), plain.coeff(i), epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn sqrt_ratio_times_reciprocal_is_one(a in -3.0f64..0.0, w in 0.1f64..3.0) {
            let b = a + w;
            let s = sqrt_ratio(a, b, 10).unwrap();
            let r = sqrt_ratio(b, a, 10).unwrap();
            let prod = s.mul(&r);
            prop_assert!((prod.coeff(0) - 1.0).abs() < 1e-13);
            for k in 1..=10 {
                prop_assert!(prod.coeff(k).abs() < 1e-13 * 2f64.max(b.abs().max(a.abs())).powi(k as i32));
            }
        }

        #[test]
        fn exp_log_round_trip(c in proptest::collection::vec(-0.8f64..0.8, 1..12)) {
            let mut v = vec![1.0];
            v.extend(c);
            let s = LaurentSeries::new(v);
            let back = s.log().unwrap().exp();
            for k in 0..=s.order() {
                prop_assert!((back.coeff(k) - s.coeff(k)).abs() < 1e-12 * (1.0 + s.coeff(k).abs()));
            }
        }
    }
}
