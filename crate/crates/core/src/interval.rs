//! The set E as ordered disjoint closed bands, its gaps, sign configurations
//! per gap, integration weights, and the quadrature rules every other module
//! builds on.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One closed band [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// An open gap (lo, hi) between two consecutive bands.
/// In the usual labeling E = [b0, a0] \ U_j (a_j, b_j), `lo` is a_j and `hi` is b_j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    pub lo: f64,
    pub hi: f64,
}

impl Gap {
    pub fn contains_open(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// A finite union of disjoint closed intervals, ordered left to right.
///
/// The optional truncation marker records that the leftmost band stands in for
/// an unbounded component cut off at level `T` (so reports can state "value at
/// truncation T").
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSystem {
    bands: Vec<Band>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation: Option<f64>,
}

/// Builds a validated system from raw endpoint pairs. Pairs may arrive in any
/// order; overlapping or touching bands are rejected so gap indexing stays
/// unambiguous.
pub fn make_interval_system(raw_bands: &[[f64; 2]]) -> Result<IntervalSystem> {
    if raw_bands.is_empty() {
        return Err(Error::InvalidIntervals("no bands given".into()));
    }
    let mut bands = Vec::with_capacity(raw_bands.len());
    for (i, p) in raw_bands.iter().enumerate() {
        let (lo, hi) = (p[0], p[1]);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidIntervals(format!(
                "band {i} has non-finite endpoint"
            )));
        }
        if lo >= hi {
            return Err(Error::InvalidIntervals(format!(
                "band {i} needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        bands.push(Band { lo, hi });
    }
    bands.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
    for w in bands.windows(2) {
        if w[0].hi >= w[1].lo {
            return Err(Error::InvalidIntervals(format!(
                "bands [{}, {}] and [{}, {}] overlap or touch",
                w[0].lo, w[0].hi, w[1].lo, w[1].hi
            )));
        }
    }
    Ok(IntervalSystem {
        bands,
        truncation: None,
    })
}

impl<'de> Deserialize<'de> for IntervalSystem {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            bands: Vec<Band>,
            #[serde(default)]
            truncation: Option<f64>,
        }
        let raw = Raw::deserialize(de)?;
        let pairs: Vec<[f64; 2]> = raw.bands.iter().map(|b| [b.lo, b.hi]).collect();
        let mut sys = make_interval_system(&pairs).map_err(D::Error::custom)?;
        sys.truncation = raw.truncation;
        Ok(sys)
    }
}

impl IntervalSystem {
    pub fn new(raw_bands: &[[f64; 2]]) -> Result<Self> {
        make_interval_system(raw_bands)
    }

    /// Marks the leftmost band as a truncation of an unbounded component at level T.
    pub fn with_truncation(mut self, t: f64) -> Self {
        self.truncation = Some(t);
        self
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// Gap count m = band count - 1.
    pub fn gap_count(&self) -> usize {
        self.bands.len() - 1
    }

    pub fn gaps(&self) -> Vec<Gap> {
        self.bands
            .windows(2)
            .map(|w| Gap {
                lo: w[0].hi,
                hi: w[1].lo,
            })
            .collect()
    }

    /// Hull endpoints (b0, a0): leftmost and rightmost points of E.
    pub fn hull(&self) -> (f64, f64) {
        (self.bands[0].lo, self.bands.last().unwrap().hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.bands.iter().any(|b| b.contains(x))
    }

    /// Distance from a complex point to the union of bands.
    pub fn distance(&self, re: f64, im: f64) -> f64 {
        let mut d = f64::INFINITY;
        for b in &self.bands {
            let dx = if re < b.lo {
                b.lo - re
            } else if re > b.hi {
                re - b.hi
            } else {
                0.0
            };
            d = d.min((dx * dx + im * im).sqrt());
        }
        d
    }
}

/// A choice of +-1 per gap, selecting square-root branches in the dual symbol
/// and the spectral-density family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignConfiguration {
    delta: Vec<i8>,
}

impl SignConfiguration {
    pub fn new(delta: Vec<i8>) -> Result<Self> {
        if delta.iter().any(|&d| d != 1 && d != -1) {
            return Err(Error::InvalidArgument(
                "sign configuration entries must be +1 or -1".into(),
            ));
        }
        Ok(Self { delta })
    }

    /// The configuration encoded by the m low bits of `index` (bit set => +1).
    pub fn from_index(index: usize, m: usize) -> Self {
        let delta = (0..m)
            .map(|j| if (index >> j) & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { delta }
    }

    pub fn index(&self) -> usize {
        self.delta
            .iter()
            .enumerate()
            .map(|(j, &d)| if d == 1 { 1 << j } else { 0 })
            .sum()
    }

    /// All 2^m configurations in index order.
    pub fn enumerate(m: usize) -> Vec<Self> {
        (0..1usize << m).map(|i| Self::from_index(i, m)).collect()
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.delta
    }

    pub fn negated(&self) -> Self {
        Self {
            delta: self.delta.iter().map(|d| -d).collect(),
        }
    }
}

/// Integration weight on E.
#[derive(Clone)]
pub enum WeightSpec {
    /// dx
    Unit,
    /// dx/|x|; requires 0 outside the closed hull of E.
    RecipAbs,
    /// A positive density evaluated at quadrature nodes.
    Tabulated(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl WeightSpec {
    pub fn tabulated<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        WeightSpec::Tabulated(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            WeightSpec::Unit => 1.0,
            WeightSpec::RecipAbs => 1.0 / x.abs(),
            WeightSpec::Tabulated(f) => f(x),
        }
    }

    pub fn validate(&self, system: &IntervalSystem) -> Result<()> {
        if let WeightSpec::RecipAbs = self {
            let (b0, a0) = system.hull();
            if b0 <= 0.0 && a0 >= 0.0 {
                return Err(Error::InvalidWeight(
                    "dx/|x| needs 0 outside the closed hull of E".into(),
                ));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Unit => write!(f, "Unit"),
            WeightSpec::RecipAbs => write!(f, "RecipAbs"),
            WeightSpec::Tabulated(_) => write!(f, "Tabulated(..)"),
        }
    }
}

impl Serialize for WeightSpec {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            WeightSpec::Unit => ser.serialize_str("unit"),
            WeightSpec::RecipAbs => ser.serialize_str("recip_abs"),
            WeightSpec::Tabulated(_) => Err(serde::ser::Error::custom(
                "tabulated weights are in-process only",
            )),
        }
    }
}

impl<'de> Deserialize<'de> for WeightSpec {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        match s.as_str() {
            "unit" => Ok(WeightSpec::Unit),
            "recip_abs" => Ok(WeightSpec::RecipAbs),
            other => Err(D::Error::custom(format!("unknown weight kind `{other}`"))),
        }
    }
}

/// Nodes and weights for integrating over E against a WeightSpec. The weights
/// already absorb the weight function, so `sum w_i f(x_i)` approximates
/// `int_E f w dx` and `mass()` the weighted measure of E.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub band_index: Vec<usize>,
    pub singular: bool,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Golub-Welsch.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    if order == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut jac = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w = 2.0 * eig.eigenvectors[(0, i)].powi(2);
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
    )
}

fn push_gauss_segment(
    grid: &mut QuadratureGrid,
    band: usize,
    lo: f64,
    hi: f64,
    nodes: &[f64],
    gw: &[f64],
    w: &WeightSpec,
) {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    for (&t, &wt) in nodes.iter().zip(gw) {
        let x = mid + half * t;
        grid.nodes.push(x);
        grid.weights.push(half * wt * w.eval(x));
        grid.band_index.push(band);
    }
}

/// One endpoint-substituted Gauss rule for [lo, hi] with the singular end at
/// `lo` when `from_left`, else at `hi`. The substitution x = lo + t^2 (or its
/// mirror) absorbs inverse-square-root endpoint densities.
fn push_substituted_segment(
    grid: &mut QuadratureGrid,
    band: usize,
    lo: f64,
    hi: f64,
    from_left: bool,
    nodes: &[f64],
    gw: &[f64],
    w: &WeightSpec,
) {
    let s = (hi - lo).sqrt();
    // integrate over t in [0, s]: dx = 2 t dt
    let mid = 0.5 * s;
    for (&u, &wt) in nodes.iter().zip(gw) {
        let t = mid + mid * u;
        let x = if from_left { lo + t * t } else { hi - t * t };
        grid.nodes.push(x);
        grid.weights.push(mid * wt * 2.0 * t * w.eval(x));
        grid.band_index.push(band);
    }
}

/// Composite Gauss rule with `order` nodes per band. With `singular` set, each
/// band is split at its midpoint and both halves get an endpoint substitution
/// of `order` nodes, which absorbs inverse-square-root densities at band ends.
pub fn build_quadrature(
    system: &IntervalSystem,
    weight: &WeightSpec,
    order: usize,
    singular: bool,
) -> Result<QuadratureGrid> {
    if order < 1 {
        return Err(Error::InvalidArgument("quadrature order must be >= 1".into()));
    }
    weight.validate(system)?;
    let (nodes, gw) = gauss_legendre(order);
    let mut grid = QuadratureGrid {
        nodes: Vec::new(),
        weights: Vec::new(),
        band_index: Vec::new(),
        singular,
    };
    for (bi, band) in system.bands().iter().enumerate() {
        if singular {
            let mid = 0.5 * (band.lo + band.hi);
            push_substituted_segment(&mut grid, bi, band.lo, mid, true, &nodes, &gw, weight);
            push_substituted_segment(&mut grid, bi, mid, band.hi, false, &nodes, &gw, weight);
        } else {
            push_gauss_segment(&mut grid, bi, band.lo, band.hi, &nodes, &gw, weight);
        }
    }
    Ok(grid)
}

/// Composite rule for the discretized primal: per band, `cells` uniform cells
/// plus `grade` geometrically shrinking cells stacked at each band endpoint,
/// two Gauss points per cell. Grading resolves integrands that peak near a
/// band end without inflating the global node count.
pub fn build_composite_quadrature(
    system: &IntervalSystem,
    weight: &WeightSpec,
    cells: usize,
    grade: usize,
) -> Result<QuadratureGrid> {
    if cells < 1 {
        return Err(Error::InvalidArgument("need at least one cell per band".into()));
    }
    weight.validate(system)?;
    let (nodes, gw) = gauss_legendre(2);
    let mut grid = QuadratureGrid {
        nodes: Vec::new(),
        weights: Vec::new(),
        band_index: Vec::new(),
        singular: false,
    };
    for (bi, band) in system.bands().iter().enumerate() {
        let w = band.width() / cells as f64;
        let mut edges = Vec::with_capacity(cells + 2 * grade + 1);
        for k in (1..=grade).rev() {
            edges.push(band.lo + w * 0.5f64.powi(k as i32));
        }
        for c in 1..cells {
            edges.push(band.lo + w * c as f64);
        }
        for k in 1..=grade {
            edges.push(band.hi - w * 0.5f64.powi((grade + 1 - k) as i32));
        }
        let mut prev = band.lo;
        for &e in edges.iter().chain(std::iter::once(&band.hi)) {
            if e > prev {
                push_gauss_segment(&mut grid, bi, prev, e, &nodes, &gw, weight);
                prev = e;
            }
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_band_has_no_gaps() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        assert_eq!(e.gap_count(), 0);
        assert!(e.gaps().is_empty());
        assert_eq!(e.hull(), (-1.0, 1.0));
    }

    #[test]
    fn two_bands_one_gap() {
        let e = make_interval_system(&[[-3.0, -2.0], [-1.5, -1.0]]).unwrap();
        assert_eq!(e.gap_count(), 1);
        let g = e.gaps()[0];
        assert_eq!((g.lo, g.hi), (-2.0, -1.5));
    }

    #[test]
    fn out_of_order_input_sorts() {
        let e = make_interval_system(&[[0.5, 1.0], [-1.0, -0.5]]).unwrap();
        assert_eq!(e.hull(), (-1.0, 1.0));
        // rebuilding from its own bands is the identity
        let raw: Vec<[f64; 2]> = e.bands().iter().map(|b| [b.lo, b.hi]).collect();
        assert_eq!(make_interval_system(&raw).unwrap(), e);
    }

    #[test]
    fn overlap_and_touching_rejected() {
        assert!(make_interval_system(&[[0.0, 2.0], [1.0, 3.0]]).is_err());
        assert!(make_interval_system(&[[0.0, 1.0], [1.0, 2.0]]).is_err());
        assert!(make_interval_system(&[]).is_err());
        assert!(make_interval_system(&[[1.0, 1.0]]).is_err());
    }

    #[test]
    fn sign_configurations_biject_with_bit_masks() {
        let all = SignConfiguration::enumerate(3);
        assert_eq!(all.len(), 8);
        for (i, c) in all.iter().enumerate() {
            assert_eq!(c.index(), i);
        }
        let mut uniq = all.clone();
        uniq.dedup();
        assert_eq!(uniq.len(), 8);
    }

    #[test]
    fn two_point_gauss_rule() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let g = build_quadrature(&e, &WeightSpec::Unit, 2, false).unwrap();
        let t = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(g.nodes[0], -t, epsilon = 1e-15);
        assert_abs_diff_eq!(g.nodes[1], t, epsilon = 1e-15);
        assert_abs_diff_eq!(g.weights[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.weights[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn recip_abs_mass_is_log_ratio() {
        let e = make_interval_system(&[[-2.0, -1.0]]).unwrap();
        let g = build_quadrature(&e, &WeightSpec::RecipAbs, 16, false).unwrap();
        assert_abs_diff_eq!(g.mass(), 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn arcsine_mass_with_substitution() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        let w = WeightSpec::tabulated(|x: f64| 1.0 / (1.0 - x * x).sqrt());
        let g = build_quadrature(&e, &w, 24, true).unwrap();
        assert_abs_diff_eq!(g.mass(), std::f64::consts::PI, epsilon = 1e-6);
    }

    #[test]
    fn recip_abs_rejects_zero_in_hull() {
        let e = make_interval_system(&[[-1.0, 1.0]]).unwrap();
        assert!(build_quadrature(&e, &WeightSpec::RecipAbs, 8, false).is_err());
    }

    #[test]
    fn quadrature_mass_converges_under_doubling() {
        let e = make_interval_system(&[[-2.0, -1.0]]).unwrap();
        let exact = 2f64.ln();
        let mut errs = Vec::new();
        for order in [2, 4, 8] {
            let g = build_quadrature(&e, &WeightSpec::RecipAbs, order, false).unwrap();
            errs.push((g.mass() - exact).abs());
        }
        assert!(errs[1] < errs[0] && errs[2] < errs[1]);
    }

    #[test]
    fn composite_rule_mass() {
        let e = make_interval_system(&[[-1.0, -0.25], [0.5, 1.0]]).unwrap();
        let g = build_composite_quadrature(&e, &WeightSpec::Unit, 32, 6).unwrap();
        assert_abs_diff_eq!(g.mass(), 1.25, epsilon = 1e-12);
    }

    #[test]
    fn truncation_marker_round_trip() {
        let e = make_interval_system(&[[-8.0, -1.0]])
            .unwrap()
            .with_truncation(8.0);
        assert_eq!(e.truncation(), Some(8.0));
    }
}
