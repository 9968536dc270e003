//! Gaussian mixture models of wind forecast errors.
//!
//! A multivariate [`Gmm`] describes the joint forecast error of all wind
//! farms in one interval. Any linear combination `sᵀe` of a mixture-distributed
//! vector is again a mixture, with component means `sᵀμᵢ` and variances
//! `sᵀΣᵢs`, so every chance constraint reduces to a quantile of a
//! one-dimensional [`UnivariateGmm`]. Those quantiles are found with a
//! bracketed Newton iteration on the mixture CDF.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    // erfc keeps full relative precision in the lower tail
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// Multivariate Gaussian mixture. Serialized as
/// `{"dimension": d, "components": [{"weight", "mean", "covariance"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub dimension: usize,
    pub components: Vec<GaussianComponent>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GmmViolation {
    NoComponents,
    ZeroDimension,
    WeightSum { sum: f64, residual: f64 },
    NonPositiveWeight { component: usize, weight: f64 },
    NonFinite { component: usize },
    DimensionMismatch { component: usize, expected: usize, found: usize },
    Asymmetric { component: usize, residual: f64 },
    NotPsd { component: usize, min_eigenvalue: f64 },
}

impl fmt::Display for GmmViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GmmViolation::NoComponents => write!(f, "mixture has no components"),
            GmmViolation::ZeroDimension => write!(f, "dimension must be positive"),
            GmmViolation::WeightSum { sum, residual } => {
                write!(f, "weights sum to {sum} (residual {residual:e})")
            }
            GmmViolation::NonPositiveWeight { component, weight } => {
                write!(f, "component {component}: weight {weight} is not positive")
            }
            GmmViolation::NonFinite { component } => {
                write!(f, "component {component}: non-finite parameter")
            }
            GmmViolation::DimensionMismatch {
                component,
                expected,
                found,
            } => write!(
                f,
                "component {component}: expected dimension {expected}, found {found}"
            ),
            GmmViolation::Asymmetric { component, residual } => {
                write!(f, "component {component}: covariance asymmetric (residual {residual:e})")
            }
            GmmViolation::NotPsd {
                component,
                min_eigenvalue,
            } => write!(
                f,
                "component {component}: covariance not PSD (min eigenvalue {min_eigenvalue:e})"
            ),
        }
    }
}

impl Gmm {
    /// Builds a mixture and rejects it if any invariant fails.
    pub fn new(dimension: usize, components: Vec<GaussianComponent>) -> Result<Self> {
        let g = Gmm {
            dimension,
            components,
        };
        g.check()?;
        Ok(g)
    }

    /// Single multivariate normal.
    pub fn gaussian(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        Gmm::new(
            d,
            vec![GaussianComponent {
                weight: 1.0,
                mean,
                covariance,
            }],
        )
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Every invariant violation with its numeric residual; empty iff valid.
    pub fn validate(&self) -> Vec<GmmViolation> {
        let mut out = Vec::new();
        if self.dimension == 0 {
            out.push(GmmViolation::ZeroDimension);
        }
        if self.components.is_empty() {
            out.push(GmmViolation::NoComponents);
            return out;
        }
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL || !sum.is_finite() {
            out.push(GmmViolation::WeightSum {
                sum,
                residual: (sum - 1.0).abs(),
            });
        }
        let d = self.dimension;
        for (k, c) in self.components.iter().enumerate() {
            if !(c.weight > 0.0) {
                out.push(GmmViolation::NonPositiveWeight {
                    component: k,
                    weight: c.weight,
                });
            }
            if c.mean.len() != d {
                out.push(GmmViolation::DimensionMismatch {
                    component: k,
                    expected: d,
                    found: c.mean.len(),
                });
                continue;
            }
            if c.covariance.len() != d || c.covariance.iter().any(|row| row.len() != d) {
                out.push(GmmViolation::DimensionMismatch {
                    component: k,
                    expected: d,
                    found: c.covariance.len(),
                });
                continue;
            }
            let finite = c.weight.is_finite()
                && c.mean.iter().all(|v| v.is_finite())
                && c.covariance.iter().flatten().all(|v| v.is_finite());
            if !finite {
                out.push(GmmViolation::NonFinite { component: k });
                continue;
            }
            let scale = c
                .covariance
                .iter()
                .flatten()
                .fold(0.0_f64, |m, v| m.max(v.abs()))
                .max(f64::MIN_POSITIVE);
            let mut asym = 0.0_f64;
            for i in 0..d {
                for j in 0..i {
                    asym = asym.max((c.covariance[i][j] - c.covariance[j][i]).abs());
                }
            }
            if asym > SYMMETRY_TOL * scale {
                out.push(GmmViolation::Asymmetric {
                    component: k,
                    residual: asym,
                });
            }
            let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (c.covariance[i][j] + c.covariance[j][i]));
            let eig = SymmetricEigen::new(m).eigenvalues;
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            let max = eig.iter().copied().fold(0.0_f64, f64::max);
            if min < -PSD_TOL * max.max(f64::MIN_POSITIVE) {
                out.push(GmmViolation::NotPsd {
                    component: k,
                    min_eigenvalue: min,
                });
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            Err(Error::input(format!("invalid GMM: {}", msgs.join("; "))))
        }
    }

    /// Mean of the whole mixture.
    pub fn mean(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.dimension];
        for c in &self.components {
            for (m, v) in mu.iter_mut().zip(&c.mean) {
                *m += c.weight * v;
            }
        }
        mu
    }

    /// Covariance of the whole mixture: Σ αᵢ(Σᵢ + μᵢμᵢᵀ) − μμᵀ.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dimension;
        let mu = self.mean();
        let mut cov = vec![vec![0.0; d]; d];
        for c in &self.components {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += c.weight * (c.covariance[i][j] + c.mean[i] * c.mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                cov[i][j] -= mu[i] * mu[j];
            }
        }
        cov
    }

    /// Distribution of `sᵀe`.
    pub fn project(&self, s: &[f64]) -> Result<UnivariateGmm> {
        affine_project(self, s)
    }
}

/// Projects a mixture onto direction `s`, keeping component order and weights.
pub fn affine_project(g: &Gmm, s: &[f64]) -> Result<UnivariateGmm> {
    if s.len() != g.dimension {
        return Err(Error::input(format!(
            "projection vector has length {}, mixture dimension is {}",
            s.len(),
            g.dimension
        )));
    }
    let parts = g
        .components
        .iter()
        .map(|c| {
            let mean: f64 = s.iter().zip(&c.mean).map(|(a, b)| a * b).sum();
            let mut var = 0.0;
            for (i, si) in s.iter().enumerate() {
                if *si == 0.0 {
                    continue;
                }
                let row: f64 = c.covariance[i].iter().zip(s).map(|(a, b)| a * b).sum();
                var += si * row;
            }
            (c.weight, mean, var.max(0.0))
        })
        .collect();
    UnivariateGmm::new(parts)
}

/// One-dimensional Gaussian mixture, stored as parallel arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateGmm {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    sigmas: Vec<f64>,
}

impl UnivariateGmm {
    /// Takes `(weight, mean, variance)` triples. Zero variances are lifted to
    /// `max(v, 1e-12·max_j v_j, 1e-12)` so the density stays finite.
    pub fn new(components: Vec<(f64, f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::input("univariate mixture has no components"));
        }
        let mut sum = 0.0;
        for (k, &(w, m, v)) in components.iter().enumerate() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::input(format!("component {k}: weight {w} not positive")));
            }
            if !m.is_finite() || !v.is_finite() || v < 0.0 {
                return Err(Error::input(format!(
                    "component {k}: mean {m} / variance {v} invalid"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::input(format!(
                "weights sum to {sum} (residual {:e})",
                (sum - 1.0).abs()
            )));
        }
        let vmax = components.iter().map(|c| c.2).fold(0.0_f64, f64::max);
        let floor = (1e-12 * vmax).max(1e-12);
        let n = components.len();
        let mut u = UnivariateGmm {
            weights: Vec::with_capacity(n),
            means: Vec::with_capacity(n),
            variances: Vec::with_capacity(n),
            sigmas: Vec::with_capacity(n),
        };
        for (w, m, v) in components {
            let v = v.max(floor);
            u.weights.push(w);
            u.means.push(m);
            u.variances.push(v);
            u.sigmas.push(v.sqrt());
        }
        Ok(u)
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![(1.0, mean, variance)])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Variances after regularization.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.len()).map(|i| (self.weights[i], self.means[i], self.variances[i]))
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigmas.iter().copied().fold(0.0, f64::max)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.weights.len() {
            acc += self.weights[i] * std_normal_cdf((x - self.means[i]) / self.sigmas[i]);
        }
        acc.clamp(0.0, 1.0)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.weights.len() {
            let z = (x - self.means[i]) / self.sigmas[i];
            acc += self.weights[i] / self.sigmas[i] * (-0.5 * z * z).exp();
        }
        acc / (2.0 * PI).sqrt()
    }

    fn cdf_pdf(&self, x: f64) -> (f64, f64) {
        let mut c = 0.0;
        let mut d = 0.0;
        for i in 0..self.weights.len() {
            let z = (x - self.means[i]) / self.sigmas[i];
            c += self.weights[i] * std_normal_cdf(z);
            d += self.weights[i] / self.sigmas[i] * (-0.5 * z * z).exp();
        }
        (c, d / (2.0 * PI).sqrt())
    }

    pub fn quantile(&self, q: f64, cfg: &QuantileConfig) -> Result<f64> {
        quantile(self, q, cfg)
    }
}

pub fn cdf(u: &UnivariateGmm, x: f64) -> f64 {
    u.cdf(x)
}

pub fn pdf(u: &UnivariateGmm, x: f64) -> f64 {
    u.pdf(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileConfig {
    /// Stopping threshold on |CDF(y) − q|.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QuantileConfig {
    fn default() -> Self {
        QuantileConfig {
            tolerance: 1e-9,
            max_iterations: 100,
        }
    }
}

impl QuantileConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::input("quantile tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::input("quantile max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Newton starting point: the largest component mean for upper-tail
/// quantiles, the smallest for lower-tail ones, the mixture mean otherwise.
fn initial_guess(u: &UnivariateGmm, q: f64) -> f64 {
    if q >= 0.9 {
        u.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else if q <= 0.1 {
        u.means.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        u.mean()
    }
}

/// Solves `CDF(y) = q` by Newton iteration inside a maintained bracket.
///
/// Steps that leave the bracket, fail to halve the step before last, or are
/// taken where the density has underflowed, are replaced by bisection. Once `|CDF(y) − q| ≤ tolerance`
/// one more Newton step is attempted and kept if it does not worsen the
/// residual.
pub fn quantile(u: &UnivariateGmm, q: f64, cfg: &QuantileConfig) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::input(format!("quantile level {q} outside (0, 1)")));
    }
    cfg.check()?;

    let spread = 10.0 * u.max_sigma();
    let mut lo = u.means.iter().copied().fold(f64::INFINITY, f64::min) - spread;
    let mut hi = u.means.iter().copied().fold(f64::NEG_INFINITY, f64::max) + spread;
    let mut width = (hi - lo).max(1.0);
    while u.cdf(lo) > q {
        lo -= width;
        width *= 2.0;
        if !lo.is_finite() {
            return Err(Error::internal("quantile bracket diverged below"));
        }
    }
    width = (hi - lo).max(1.0);
    while u.cdf(hi) < q {
        hi += width;
        width *= 2.0;
        if !hi.is_finite() {
            return Err(Error::internal("quantile bracket diverged above"));
        }
    }

    let mut y = initial_guess(u, q).clamp(lo, hi);
    // last two step lengths; Newton must at least halve the step before last
    let (mut dx, mut dx_old) = (hi - lo, hi - lo);
    for _ in 0..cfg.max_iterations {
        let (c, d) = u.cdf_pdf(y);
        let f = c - q;
        if f.abs() <= cfg.tolerance {
            return Ok(polish(u, q, y, f, d, lo, hi));
        }
        if f < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let newton = if d > 1e-300 { y - f / d } else { f64::NAN };
        let prev = y;
        y = if newton.is_finite() && newton > lo && newton < hi && (f / d).abs() < 0.5 * dx_old.abs() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        dx_old = dx;
        dx = y - prev;
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
            // bracket collapsed to adjacent floats; F jumps past the tolerance here
            return Ok(y);
        }
    }
    Err(Error::internal(format!(
        "quantile({q}) did not converge in {} iterations; bracket [{lo}, {hi}]",
        cfg.max_iterations
    )))
}

fn polish(u: &UnivariateGmm, q: f64, y: f64, f: f64, d: f64, lo: f64, hi: f64) -> f64 {
    if d <= 1e-300 || f == 0.0 {
        return y;
    }
    let next = y - f / d;
    if !(next >= lo && next <= hi) {
        return y;
    }
    let fn_ = u.cdf(next) - q;
    if fn_.abs() <= f.abs() {
        next
    } else {
        y
    }
}

/// Quantiles for a batch of `(mixture, level)` pairs, evaluated in parallel
/// once the batch is big enough to pay for it.
pub fn quantiles_par(items: &[(&UnivariateGmm, f64)], cfg: &QuantileConfig) -> Vec<Result<f64>> {
    use rayon::prelude::*;
    if items.len() < 512 {
        return items.iter().map(|(u, q)| quantile(u, *q, cfg)).collect();
    }
    items.par_iter().with_min_len(64).map(|(u, q)| quantile(u, *q, cfg)).collect()
}

/// Reads a per-interval GMM parameter file (a JSON array of mixtures).
pub fn read_gmm_file(path: impl AsRef<Path>) -> Result<Vec<Gmm>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let gmms: Vec<Gmm> = serde_json::from_str(&text).map_err(|e| {
        Error::schema(
            "",
            format!("{}: {e}", path.as_ref().display()),
        )
    })?;
    for (t, g) in gmms.iter().enumerate() {
        g.check().map_err(|e| match e {
            Error::Input(m) => Error::schema(format!("/{t}"), m),
            other => other,
        })?;
    }
    Ok(gmms)
}

pub fn write_gmm_file(path: impl AsRef<Path>, gmms: &[Gmm]) -> Result<()> {
    let text = serde_json::to_string_pretty(gmms)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_comp() -> Gmm {
        Gmm::new(
            2,
            vec![
                GaussianComponent {
                    weight: 0.3,
                    mean: vec![0.0, 0.0],
                    covariance: vec![vec![4.0, 0.0], vec![0.0, 1.0]],
                },
                GaussianComponent {
                    weight: 0.7,
                    mean: vec![1.0, -1.0],
                    covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn project_identity_covariance() {
        let g = Gmm::gaussian(vec![1.0, 2.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let u = affine_project(&g, &[1.0, 1.0]).unwrap();
        assert_eq!(u.len(), 1);
        assert_abs_diff_eq!(u.means()[0], 3.0);
        assert_abs_diff_eq!(u.variances()[0], 2.0);
    }

    #[test]
    fn project_two_components() {
        let u = affine_project(&two_comp(), &[2.0, 1.0]).unwrap();
        let c: Vec<_> = u.components().collect();
        assert_abs_diff_eq!(c[0].0, 0.3);
        assert_abs_diff_eq!(c[0].1, 0.0);
        assert_abs_diff_eq!(c[0].2, 17.0);
        assert_abs_diff_eq!(c[1].0, 0.7);
        assert_abs_diff_eq!(c[1].1, 1.0);
        assert_abs_diff_eq!(c[1].2, 5.0);
    }

    #[test]
    fn project_unit_vector_gives_marginal() {
        let g = two_comp();
        let u = affine_project(&g, &[0.0, 1.0]).unwrap();
        for (k, (w, m, v)) in u.components().enumerate() {
            assert_eq!(w, g.components[k].weight);
            assert_eq!(m, g.components[k].mean[1]);
            assert_eq!(v, g.components[k].covariance[1][1]);
        }
    }

    #[test]
    fn project_dimension_mismatch() {
        assert!(matches!(
            affine_project(&two_comp(), &[1.0]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn cdf_symmetric_cases() {
        let std = UnivariateGmm::gaussian(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(std.cdf(0.0), 0.5, epsilon = 1e-15);
        let bi = UnivariateGmm::new(vec![(0.5, -2.0, 1.0), (0.5, 2.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(bi.cdf(0.0), 0.5, epsilon = 1e-15);
        let g = UnivariateGmm::gaussian(0.0, 100.0).unwrap();
        assert_abs_diff_eq!(g.cdf(-20.5374891), 0.02, epsilon = 1e-9);
    }

    #[test]
    fn pdf_values() {
        let std = UnivariateGmm::gaussian(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(std.pdf(0.0), 0.3989422804, epsilon = 1e-10);
        let mix = UnivariateGmm::new(vec![(0.5, 0.0, 1.0), (0.5, 0.0, 4.0)]).unwrap();
        assert_abs_diff_eq!(mix.pdf(0.0), 0.29920671, epsilon = 1e-8);
        let far = mix.mean() + 40.0 * mix.max_sigma();
        assert!(mix.pdf(far) < 1e-300);
    }

    #[test]
    fn quantile_examples() {
        let cfg = QuantileConfig::default();
        let std = UnivariateGmm::gaussian(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(std.quantile(0.5, &cfg).unwrap(), 0.0, epsilon = 1e-9);
        let g = UnivariateGmm::gaussian(0.0, 100.0).unwrap();
        assert_abs_diff_eq!(g.quantile(0.02, &cfg).unwrap(), -20.5374891, epsilon = 1e-6);
        let bi = UnivariateGmm::new(vec![(0.5, -2.0, 1.0), (0.5, 2.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(bi.quantile(0.5, &cfg).unwrap(), 0.0, epsilon = 1e-8);
        let q = bi.cdf(2.0);
        assert_abs_diff_eq!(q, 0.7499842, epsilon = 1e-7);
        assert_abs_diff_eq!(bi.quantile(q, &cfg).unwrap(), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn quantile_rejects_bad_level() {
        let cfg = QuantileConfig::default();
        let g = UnivariateGmm::gaussian(0.0, 1.0).unwrap();
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(g.quantile(q, &cfg), Err(Error::Input(_))));
        }
    }

    #[test]
    fn quantile_zero_variance_projection() {
        let g = Gmm::gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let u = affine_project(&g, &[0.0, 0.0]).unwrap();
        let cfg = QuantileConfig::default();
        assert!(u.quantile(0.98, &cfg).unwrap().abs() < 1e-5);
        assert!(u.quantile(0.02, &cfg).unwrap().abs() < 1e-5);
    }

    #[test]
    fn quantile_far_separated_modes() {
        let u = UnivariateGmm::new(vec![(0.5, -1000.0, 1.0), (0.5, 1000.0, 1.0)]).unwrap();
        let cfg = QuantileConfig::default();
        for q in [0.01, 0.3, 0.5, 0.7, 0.99] {
            let y = u.quantile(q, &cfg).unwrap();
            assert!((u.cdf(y) - q).abs() <= 1e-9, "q={q} y={y}");
        }
    }

    #[test]
    fn validate_reports_violations() {
        assert!(two_comp().validate().is_empty());

        let mut g = two_comp();
        g.components[0].weight = 0.6;
        g.components[1].weight = 0.6;
        let v = g.validate();
        assert_eq!(v.len(), 1);
        match v[0] {
            GmmViolation::WeightSum { residual, .. } => assert_abs_diff_eq!(residual, 0.2, epsilon = 1e-12),
            ref other => panic!("unexpected {other:?}"),
        }

        // eigenvalues of [[0.5, 1], [1, 0.5]] are 1.5 and -0.5
        let mut g = two_comp();
        g.components[1].covariance = vec![vec![0.5, 1.0], vec![1.0, 0.5]];
        let v = g.validate();
        assert!(matches!(
            v.as_slice(),
            [GmmViolation::NotPsd { component: 1, min_eigenvalue }] if (min_eigenvalue + 0.5).abs() < 1e-12
        ));

        let mut g = two_comp();
        g.components[0].covariance[0][1] = 0.5;
        assert!(matches!(g.validate()[0], GmmViolation::Asymmetric { component: 0, .. }));

        let mut g = two_comp();
        g.components[0].mean.push(0.0);
        assert!(matches!(g.validate()[0], GmmViolation::DimensionMismatch { .. }));
    }

    #[test]
    fn mixture_moments() {
        let g = two_comp();
        let mu = g.mean();
        assert_abs_diff_eq!(mu[0], 0.7);
        assert_abs_diff_eq!(mu[1], -0.7);
        let cov = g.covariance();
        // Var(x0) = 0.3*4 + 0.7*1 + 0.3*0.7*1^2
        assert_abs_diff_eq!(cov[0][0], 1.2 + 0.7 + 0.21, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[0][1], -0.21, epsilon = 1e-12);
    }

    #[test]
    fn gmm_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        write_gmm_file(&p, &[two_comp(), two_comp()]).unwrap();
        let back = read_gmm_file(&p).unwrap();
        assert_eq!(back, vec![two_comp(), two_comp()]);
    }
}
