//! Spectral densities on E indexed by per-gap sign choices, their moments by
//! singularity-adapted quadrature, Jacobi recurrences and first/second-kind
//! polynomial pairs from the Hankel Cholesky factor, and the selection of the
//! sign configuration whose orthogonal polynomial keeps all zeros inside E.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::{
    build_quadrature, IntervalSystem, QuadratureGrid, SignConfiguration, WeightSpec,
};
use crate::l1::LinearFunctional;
use crate::laurent::dual_symbol_series;
use crate::poly::{poly_real_roots, Polynomial};

/// |R_delta(x)|/pi on E, where R_delta carries the outer band endpoints
/// upstairs and each gap's endpoint pair up or down according to delta:
///
///   rho_delta(x) = (1/pi) sqrt|(x-b0)(x-a0)| prod_j |(x-a_j)(x-b_j)|^{d_j/2}.
#[derive(Debug, Clone)]
pub struct SpectralDensity {
    system: IntervalSystem,
    delta: SignConfiguration,
}

impl SpectralDensity {
    pub fn new(system: &IntervalSystem, delta: &SignConfiguration) -> Result<Self> {
        if delta.len() != system.gap_count() {
            return Err(Error::InvalidArgument(format!(
                "sign configuration length {} != gap count {}",
                delta.len(),
                system.gap_count()
            )));
        }
        Ok(Self {
            system: system.clone(),
            delta: delta.clone(),
        })
    }

    pub fn system(&self) -> &IntervalSystem {
        &self.system
    }

    pub fn delta(&self) -> &SignConfiguration {
        &self.delta
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (b0, a0) = self.system.hull();
        let mut v = ((x - b0) * (a0 - x)).abs().sqrt();
        for (gap, &d) in self.system.gaps().iter().zip(self.delta.signs()) {
            let f = ((x - gap.lo) * (x - gap.hi)).abs();
            v *= f.powf(d as f64 / 2.0);
        }
        v / std::f64::consts::PI
    }

    /// Endpoint-substituted rule whose weights absorb the density.
    pub fn quadrature(&self, order: usize) -> Result<QuadratureGrid> {
        let me = self.clone();
        build_quadrature(
            &self.system,
            &WeightSpec::tabulated(move |x| me.eval(x)),
            order,
            true,
        )
    }

    /// Total mass, reported as the normalization record.
    pub fn mass(&self, order: usize) -> Result<f64> {
        Ok(self.quadrature(order)?.mass())
    }
}

/// Moments s_k = int x^k dmu, k = 0..count, from a grid whose weights carry
/// the measure.
pub fn measure_moments(grid: &QuadratureGrid, count: usize) -> Result<Vec<f64>> {
    if grid.mass() <= 0.0 {
        return Err(Error::InvalidArgument(
            "measure has nonpositive mass".into(),
        ));
    }
    let mut mom = vec![0.0; count + 1];
    for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
        let mut p = w;
        for m in mom.iter_mut() {
            *m += p;
            p *= x;
        }
    }
    Ok(mom)
}

/// Jacobi coefficients a_k (diagonal) and b_{k+1} (off-diagonal, positive),
/// with the total mass kept for reconstructing moments.
#[derive(Debug, Clone, Serialize)]
pub struct Recurrence {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub mass: f64,
}

impl Recurrence {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Recomputes s_0..s_count through the Jacobi matrix, s_k = mass (J^k)_00.
    pub fn moments(&self, count: usize) -> Vec<f64> {
        let n = self.a.len();
        let mut cur = vec![0.0; n];
        cur[0] = 1.0;
        let mut out = Vec::with_capacity(count + 1);
        out.push(self.mass);
        for _ in 1..=count {
            let mut next = vec![0.0; n];
            for i in 0..n {
                let mut acc = self.a[i] * cur[i];
                if i > 0 {
                    acc += self.b[i - 1] * cur[i - 1];
                }
                if i + 1 < n {
                    acc += self.b[i] * cur[i + 1];
                }
                next[i] = acc;
            }
            out.push(self.mass * next[0]);
            cur = next;
        }
        out
    }
}

/// First-kind orthonormal polynomial with its second-kind companion
/// A(z) = int (C(z) - C(x))/(z - x) dmu(x).
#[derive(Debug, Clone, Serialize)]
pub struct OrthoPair {
    pub degree: usize,
    pub first: Polynomial,
    pub second: Polynomial,
    /// L2 norm of the monic version, 1/|leading coefficient of `first`|.
    pub monic_norm: f64,
}

fn second_kind(first: &Polynomial, moments: &[f64]) -> Polynomial {
    // (z^j - x^j)/(z - x) = sum_{p+q=j-1} z^p x^q
    let gamma = first.coeffs();
    let deg = first.degree();
    if deg == 0 {
        return Polynomial::zero();
    }
    let mut coeffs = vec![0.0; deg];
    for (j, &gj) in gamma.iter().enumerate().skip(1) {
        for p in 0..j {
            coeffs[p] += gj * moments[j - 1 - p];
        }
    }
    Polynomial::new(coeffs)
}

/// Orthonormal polynomials and the Jacobi recurrence from raw moments, by
/// Cholesky of the Hankel moment matrix. The largest degree served is
/// (len-1)/2; a failed factorization names the offending degree.
pub fn orthopolys_from_moments(moments: &[f64]) -> Result<(Recurrence, Vec<OrthoPair>)> {
    if moments.is_empty() || moments[0] <= 0.0 {
        return Err(Error::InvalidArgument(
            "moment sequence empty or with nonpositive mass".into(),
        ));
    }
    let kmax = (moments.len() - 1) / 2;
    let h = DMatrix::<f64>::from_fn(kmax + 1, kmax + 1, |i, j| moments[i + j]);
    let chol = match h.clone().cholesky() {
        Some(c) => c,
        None => {
            // find the largest leading minor that still factors
            let mut deg = 0;
            for k in (0..kmax).rev() {
                let sub = h.view((0, 0), (k + 1, k + 1)).into_owned();
                if sub.cholesky().is_some() {
                    deg = k + 1;
                    break;
                }
            }
            return Err(Error::RankDeficient { degree: deg });
        }
    };
    let l = chol.l();
    // orthonormal coefficients are the rows of L^{-1}
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(Error::RankDeficient { degree: kmax })?;
    let polys: Vec<Polynomial> = (0..=kmax)
        .map(|k| Polynomial::new((0..=k).map(|j| linv[(k, j)]).collect()))
        .collect();
    // recurrence from the shifted Hankel: a_k = <x p_k, p_k>, b_{k+1} = <x p_k, p_{k+1}>
    let ip_shift = |p: &Polynomial, q: &Polynomial| -> f64 {
        let mut acc = 0.0;
        for (i, &pi) in p.coeffs().iter().enumerate() {
            for (j, &qj) in q.coeffs().iter().enumerate() {
                acc += pi * qj * moments[i + j + 1];
            }
        }
        acc
    };
    let mut a = Vec::with_capacity(kmax);
    let mut b = Vec::with_capacity(kmax);
    for k in 0..kmax {
        a.push(ip_shift(&polys[k], &polys[k]));
        let bk = ip_shift(&polys[k], &polys[k + 1]);
        if bk <= 0.0 {
            return Err(Error::RankDeficient { degree: k + 1 });
        }
        b.push(bk);
    }
    let rec = Recurrence {
        a,
        b,
        mass: moments[0],
    };
    let pairs = polys
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, p)| OrthoPair {
            degree: k,
            first: p.clone(),
            second: second_kind(p, moments),
            monic_norm: 1.0 / p.leading().abs(),
        })
        .collect();
    Ok((rec, pairs))
}

/// Defect of the diagonal Pade property: with R the Cauchy transform of the
/// measure, C_n R + A_n = O(z^{-(n+1)}), so sum_j gamma_j s_{j-1+q} vanishes
/// for q = 1..n. Returns those sums for q = 1..=q_max.
pub fn pade_defect(pair: &OrthoPair, moments: &[f64], q_max: usize) -> Vec<f64> {
    let gamma = pair.first.coeffs();
    (1..=q_max)
        .map(|q| {
            gamma
                .iter()
                .enumerate()
                .map(|(j, &gj)| moments.get(j + q - 1).map_or(f64::NAN, |&s| gj * s))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaReport {
    pub delta: SignConfiguration,
    pub monic_norm: f64,
    pub mass: f64,
    pub zeros: Vec<f64>,
    pub gap_zero_count: usize,
}

/// Which configuration wins under each criterion, and whether they agree.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub per_delta: Vec<DeltaReport>,
    pub min_norm_index: usize,
    pub all_zeros_in_bands: Vec<usize>,
    pub agreement: Option<bool>,
}

/// For each of the 2^m sign configurations, builds the spectral density,
/// takes 2n moments, forms the degree-n orthogonal polynomial, and selects
/// the configuration of minimal monic L2 norm. Which configurations place all
/// zeros inside E is reported alongside; disagreement between the two
/// criteria is flagged, not fatal.
pub fn peherstorfer_select(
    system: &IntervalSystem,
    n: usize,
    order: usize,
) -> Result<(SignConfiguration, OrthoPair, SelectionReport)> {
    if n == 0 {
        return Err(Error::InvalidArgument("degree must be >= 1".into()));
    }
    let m = system.gap_count();
    let configs = SignConfiguration::enumerate(m);
    let reports: Vec<(DeltaReport, OrthoPair)> = configs
        .par_iter()
        .map(|delta| -> Result<(DeltaReport, OrthoPair)> {
            let dens = SpectralDensity::new(system, delta)?;
            let grid = dens.quadrature(order)?;
            let mom = measure_moments(&grid, 2 * n)?;
            let (_, pairs) = orthopolys_from_moments(&mom)?;
            let pair = pairs
                .into_iter()
                .find(|p| p.degree == n)
                .ok_or(Error::RankDeficient { degree: n })?;
            let (b0, a0) = system.hull();
            let roots = poly_real_roots(&pair.first, b0 - 1e-9, a0 + 1e-9)?;
            let gap_zero_count = roots
                .roots
                .iter()
                .filter(|&&r| system.gaps().iter().any(|g| g.contains_open(r)))
                .count();
            Ok((
                DeltaReport {
                    delta: delta.clone(),
                    monic_norm: pair.monic_norm,
                    mass: grid.mass(),
                    zeros: roots.roots,
                    gap_zero_count,
                },
                pair,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let min_norm_index = reports
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.monic_norm.partial_cmp(&b.1 .0.monic_norm).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let all_in: Vec<usize> = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.0.gap_zero_count == 0)
        .map(|(i, _)| i)
        .collect();
    let agreement = if all_in.is_empty() {
        None
    } else {
        Some(all_in.contains(&min_norm_index))
    };
    let selected = reports[min_norm_index].1.clone();
    let delta = reports[min_norm_index].0.delta.clone();
    let report = SelectionReport {
        per_delta: reports.into_iter().map(|r| r.0).collect(),
        min_norm_index,
        all_zeros_in_bands: all_in,
        agreement,
    };
    Ok((delta, selected, report))
}

/// The resolvent measure of the 0-normalized problem on compact E away from
/// the origin: an atom at 0 plus the density |symbol_delta(x)|/(pi |x|),
/// where the symbol is the same square-root product that drives the moment
/// dual. The atom mass makes the total mass exactly one.
#[derive(Debug, Clone)]
pub struct ResolventMeasure {
    pub system: IntervalSystem,
    pub delta: SignConfiguration,
    pub atom_mass: f64,
    grid: QuadratureGrid,
}

impl ResolventMeasure {
    pub fn new(system: &IntervalSystem, delta: &SignConfiguration, order: usize) -> Result<Self> {
        let (b0, a0) = system.hull();
        if b0 <= 0.0 && a0 >= 0.0 {
            return Err(Error::InvalidArgument(
                "resolvent measure needs 0 outside the hull".into(),
            ));
        }
        let gaps = system.gaps();
        let signs: Vec<i8> = delta.signs().to_vec();
        let dens = move |x: f64| {
            let mut v = ((a0 - x) / (x - b0)).abs().sqrt();
            for (gap, &d) in gaps.iter().zip(&signs) {
                v *= ((x - gap.lo) / (x - gap.hi)).abs().powf(d as f64 / 2.0);
            }
            v / (std::f64::consts::PI * x.abs())
        };
        let grid = build_quadrature(system, &WeightSpec::tabulated(dens), order, true)?;
        let atom_mass = 1.0 - grid.mass();
        if atom_mass <= 0.0 {
            return Err(Error::DegenerateGeometry(format!(
                "band density mass {} >= 1 leaves no room for the origin atom",
                grid.mass()
            )));
        }
        Ok(Self {
            system: system.clone(),
            delta: delta.clone(),
            atom_mass,
            grid,
        })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    /// Moments of atom + band density; only s_0 sees the atom at the origin.
    pub fn moments(&self, count: usize) -> Result<Vec<f64>> {
        let mut mom = measure_moments(&self.grid, count)?;
        mom[0] += self.atom_mass;
        Ok(mom)
    }

    /// Band-density integral of `f` (the atom excluded).
    pub fn integrate_band<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.grid.integrate(f)
    }
}

/// Expansion coefficients of the bare square-root symbol (no exponential
/// factor), for cross-checking the resolvent measure against the Laurent
/// route.
pub fn resolvent_symbol_moments(
    system: &IntervalSystem,
    delta: &SignConfiguration,
    order: usize,
) -> Result<Vec<f64>> {
    let lam = LinearFunctional::new(vec![1.0]).unwrap();
    // a huge L makes the exponential factor 1; only the product remains
    let series = dual_symbol_series(system, delta, &lam, 1e30, order + 1)?;
    Ok(series.coeffs().to_vec())
}
