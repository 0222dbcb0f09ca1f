//! Real polynomial arithmetic, root isolation via companion-matrix
//! eigenvalues with bisection polish, and the monic second-kind Chebyshev
//! polynomials that solve the single-interval problem in closed form.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real polynomial, coefficients ascending in degree. The highest
/// stored coefficient is nonzero unless the polynomial is identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn one() -> Self {
        Self { coeffs: vec![1.0] }
    }

    /// x^k
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Self { coeffs: c }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    /// Horner evaluation; exact for degree <= 1.
    pub fn eval(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for &c in self.coeffs.iter().rev() {
            v = v * x + c;
        }
        v
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let mut v = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            v = v * z + c;
        }
        v
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        Polynomial::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, &c)| (i as f64 + 1.0) * c)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut c = vec![0.0; n];
        for (i, &a) in self.coeffs.iter().enumerate() {
            c[i] += a;
        }
        for (i, &b) in other.coeffs.iter().enumerate() {
            c[i] += b;
        }
        Polynomial::new(c)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.is_zero() || other.is_zero() {
            return Polynomial::zero();
        }
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Polynomial::new(c)
    }
}

/// Monic Chebyshev polynomial of the second kind, p_{k+1} = x p_k - p_{k-1}/4.
/// Its L1 norm on [-1, 1] is 2^{1-n}.
pub fn monic_chebyshev_second(n: usize) -> Polynomial {
    let mut prev = Polynomial::one();
    if n == 0 {
        return prev;
    }
    let mut cur = Polynomial::monomial(1);
    for _ in 1..n {
        let next = Polynomial::monomial(1)
            .mul(&cur)
            .add(&prev.scale(-0.25));
        prev = cur;
        cur = next;
    }
    cur
}

/// Sorted real roots with multiplicities grouped by a clustering tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootList {
    pub roots: Vec<f64>,
    pub multiplicities: Vec<usize>,
}

impl RootList {
    pub fn simple(&self) -> bool {
        self.multiplicities.iter().all(|&m| m == 1)
    }

    pub fn total(&self) -> usize {
        self.multiplicities.iter().sum()
    }
}

fn bisect_polish(p: &Polynomial, x0: f64, h0: f64) -> f64 {
    // look for a sign change near x0 and bisect it; multiple roots keep x0
    let mut h = h0;
    for _ in 0..8 {
        let (mut a, mut b) = (x0 - h, x0 + h);
        let (fa, fb) = (p.eval(a), p.eval(b));
        if fa == 0.0 {
            return a;
        }
        if fb == 0.0 {
            return b;
        }
        if fa.signum() != fb.signum() {
            for _ in 0..120 {
                let m = 0.5 * (a + b);
                let fm = p.eval(m);
                if fm == 0.0 {
                    return m;
                }
                if fm.signum() == p.eval(a).signum() {
                    a = m;
                } else {
                    b = m;
                }
                if b - a < 1e-16 * (1.0 + x0.abs()) {
                    break;
                }
            }
            return 0.5 * (a + b);
        }
        h *= 4.0;
        if h > 1e-3 * (1.0 + x0.abs()) {
            break;
        }
    }
    x0
}

/// All real roots of `p` inside [lo, hi], via companion-matrix eigenvalues
/// filtered to near-real and polished by bisection on sign changes.
pub fn poly_real_roots(p: &Polynomial, lo: f64, hi: f64) -> Result<RootList> {
    if p.is_zero() {
        return Err(Error::RootFinding("zero polynomial".into()));
    }
    if p.coeffs().iter().any(|c| !c.is_finite()) {
        return Err(Error::RootFinding("non-finite coefficients".into()));
    }
    let n = p.degree();
    if n == 0 {
        return Ok(RootList {
            roots: vec![],
            multiplicities: vec![],
        });
    }
    let lead = p.leading();
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -p.coeffs()[i] / lead;
    }
    let eig = comp.complex_eigenvalues();
    if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::RootFinding(format!(
            "companion eigenvalues not finite; leading coefficient {lead:.3e}"
        )));
    }
    let scale = (hi - lo).abs().max(1.0);
    let im_tol = 1e-7 * scale;
    let mut roots: Vec<f64> = eig
        .iter()
        .filter(|z| z.im.abs() <= im_tol)
        .map(|z| z.re)
        .filter(|&x| x >= lo - 1e-9 * scale && x <= hi + 1e-9 * scale)
        .map(|x| bisect_polish(p, x, 1e-9 * scale))
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // cluster near-equal roots into multiplicities
    let cluster_tol = 1e-7 * scale;
    let mut out_roots = Vec::new();
    let mut mult = Vec::new();
    for r in roots {
        match out_roots.last() {
            Some(&last) if (r - last) < cluster_tol => {
                *mult.last_mut().unwrap() += 1;
            }
            _ => {
                out_roots.push(r);
                mult.push(1);
            }
        }
    }
    Ok(RootList {
        roots: out_roots,
        multiplicities: mult,
    })
}

/// Chebyshev-basis representation on [a, b], used as the evaluation path for
/// high degrees where monomial coefficients are ill-conditioned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChebPoly {
    pub coeffs: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl ChebPoly {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let u = (2.0 * x - (self.a + self.b)) / (self.b - self.a);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let t = 2.0 * u * b1 - b2 + c;
            b2 = b1;
            b1 = t;
        }
        self.coeffs[0] + u * b1 - b2
    }

    /// Values of T_0..T_n at the mapped point, for assembling design matrices.
    pub fn basis_row(x: f64, n: usize, a: f64, b: f64) -> Vec<f64> {
        let u = (2.0 * x - (a + b)) / (b - a);
        let mut row = Vec::with_capacity(n + 1);
        row.push(1.0);
        if n >= 1 {
            row.push(u);
        }
        for k in 2..=n {
            let v = 2.0 * u * row[k - 1] - row[k - 2];
            row.push(v);
        }
        row
    }

    /// Expands into monomial coefficients. Accurate only for moderate degree.
    pub fn to_monomial(&self) -> Polynomial {
        let n = self.degree();
        // T_k in u, then substitute u = (2x - (a+b))/(b-a)
        let mut tk_prev = Polynomial::one();
        let mut acc = tk_prev.scale(self.coeffs[0]);
        if n >= 1 {
            let scale = 2.0 / (self.b - self.a);
            let shift = -(self.a + self.b) / (self.b - self.a);
            let u = Polynomial::new(vec![shift, scale]);
            let mut tk = u.clone();
            acc = acc.add(&tk.scale(self.coeffs[1]));
            for k in 2..=n {
                let next = u.mul(&tk).scale(2.0).add(&tk_prev.scale(-1.0));
                tk_prev = tk;
                tk = next;
                acc = acc.add(&tk.scale(self.coeffs[k]));
            }
        }
        acc
    }
}
