//! Building per-interval forecast-error mixtures.
//!
//! Two steps: correlated samples are drawn from histogram marginals through
//! a Gaussian copula whose correlation is adjusted so the *output* Pearson
//! correlation matches the requested one (Nataf), then a full-covariance
//! mixture is fitted to those samples by expectation–maximization.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{std_normal_cdf, GaussianComponent, Gmm};

/// Piecewise-uniform density over `bin_edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalHistogram {
    pub bin_edges: Vec<f64>,
    pub bin_probabilities: Vec<f64>,
}

impl MarginalHistogram {
    pub fn new(bin_edges: Vec<f64>, bin_probabilities: Vec<f64>) -> Result<Self> {
        let h = MarginalHistogram {
            bin_edges,
            bin_probabilities,
        };
        h.check()?;
        Ok(h)
    }

    pub fn check(&self) -> Result<()> {
        let b = self.bin_probabilities.len();
        if b == 0 || self.bin_edges.len() != b + 1 {
            return Err(Error::input(format!(
                "histogram needs B+1 edges for B bins (got {} edges, {b} bins)",
                self.bin_edges.len()
            )));
        }
        if self.bin_edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::input("histogram edges must be finite"));
        }
        if let Some(k) = self.bin_edges.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::input(format!("histogram edges not strictly increasing at {k}")));
        }
        if let Some(k) = self.bin_probabilities.iter().position(|p| !(*p >= 0.0)) {
            return Err(Error::input(format!("histogram bin {k} has negative probability")));
        }
        let s: f64 = self.bin_probabilities.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!(
                "histogram probabilities sum to {s} (residual {:e})",
                (s - 1.0).abs()
            )));
        }
        Ok(())
    }

    /// Discretizes a density on a uniform grid; used for Gaussian-shaped or
    /// synthetic marginals.
    pub fn from_density(lo: f64, hi: f64, bins: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        let w = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| lo + w * k as f64).collect();
        let mut probs: Vec<f64> = edges
            .windows(2)
            .map(|e| {
                // Simpson on each bin
                let m = 0.5 * (e[0] + e[1]);
                (density(e[0]) + 4.0 * density(m) + density(e[1])) * w / 6.0
            })
            .collect();
        let s: f64 = probs.iter().sum();
        if !(s > 0.0) {
            return Err(Error::input("density has no mass on the grid"));
        }
        probs.iter_mut().for_each(|p| *p /= s);
        MarginalHistogram::new(edges, probs)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let e = &self.bin_edges;
        if x <= e[0] {
            return 0.0;
        }
        let mut acc = 0.0;
        for (k, p) in self.bin_probabilities.iter().enumerate() {
            if x >= e[k + 1] {
                acc += p;
            } else {
                acc += p * (x - e[k]) / (e[k + 1] - e[k]);
                return acc.min(1.0);
            }
        }
        1.0
    }

    pub fn mean(&self) -> f64 {
        self.bin_probabilities
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(p, e)| p * 0.5 * (e[0] + e[1]))
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.bin_probabilities
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(p, e)| {
                let (a, b) = (e[0], e[1]);
                // E[x²] of U(a, b)
                p * (a * a + a * b + b * b) / 3.0
            })
            .sum::<f64>()
            - m * m
    }

    pub fn inverse_cdf(&self, q: f64) -> Result<f64> {
        histogram_inverse_cdf(self, q)
    }

    fn inverse_cdf_unchecked(&self, q: f64) -> f64 {
        let e = &self.bin_edges;
        if q <= 0.0 {
            return e[0];
        }
        if q >= 1.0 {
            return e[e.len() - 1];
        }
        let mut cum = 0.0;
        for (k, &p) in self.bin_probabilities.iter().enumerate() {
            if p > 0.0 && q <= cum + p {
                let frac = ((q - cum) / p).clamp(0.0, 1.0);
                return e[k] + frac * (e[k + 1] - e[k]);
            }
            cum += p;
        }
        e[e.len() - 1]
    }
}

/// Inverse of the histogram CDF, linear inside each bin.
pub fn histogram_inverse_cdf(h: &MarginalHistogram, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::input(format!("probability {q} outside [0, 1]")));
    }
    Ok(h.inverse_cdf_unchecked(q))
}

/// Symmetric, unit-diagonal, PSD correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub matrix: Vec<Vec<f64>>,
}

impl CorrelationSpec {
    pub fn identity(n: usize) -> Self {
        CorrelationSpec {
            matrix: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |i, j| self.matrix[i][j]);
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 || self.matrix.iter().any(|r| r.len() != n) {
            return Err(Error::input("correlation matrix must be square and nonempty"));
        }
        for i in 0..n {
            if (self.matrix[i][i] - 1.0).abs() > 1e-12 {
                return Err(Error::input(format!("correlation diagonal [{i}] is not 1")));
            }
            for j in 0..n {
                let v = self.matrix[i][j];
                if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                    return Err(Error::input(format!("correlation [{i}][{j}] = {v} out of range")));
                }
                if (v - self.matrix[j][i]).abs() > 1e-12 {
                    return Err(Error::input(format!("correlation not symmetric at [{i}][{j}]")));
                }
            }
        }
        let min = self.min_eigenvalue();
        if min < -1e-9 {
            return Err(Error::input(format!(
                "correlation matrix not PSD (smallest eigenvalue {min:e})"
            )));
        }
        Ok(())
    }
}

/// Row-major sample matrix: rows are draws, columns are wind farms.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::input("sample rows must be nonempty and of equal length"));
        }
        Self::from_flat(cols, rows.iter().flatten().copied().collect())
    }

    pub fn from_flat(cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 || data.is_empty() || data.len() % cols != 0 {
            return Err(Error::input("sample data length not a multiple of the column count"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("sample matrix has non-finite entries"));
        }
        Ok(SampleMatrix { cols, data })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.iter().skip(j).step_by(self.cols).copied().collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.rows() as f64;
        let mut m = vec![0.0; self.cols];
        for r in self.data.chunks(self.cols) {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Maximum-likelihood (divide by N) covariance.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.cols;
        let n = self.rows() as f64;
        let mu = self.mean();
        let mut c = vec![vec![0.0; d]; d];
        for r in self.data.chunks(d) {
            for i in 0..d {
                let di = r[i] - mu[i];
                for j in 0..=i {
                    c[i][j] += di * (r[j] - mu[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                c[i][j] /= n;
                c[j][i] = c[i][j];
            }
        }
        c
    }

    pub fn pearson(&self, a: usize, b: usize) -> f64 {
        let c = self.covariance();
        c[a][b] / (c[a][a] * c[b][b]).sqrt()
    }
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule (weight `exp(−x²)`),
/// from the eigen-decomposition of the Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let j = DMatrix::from_fn(n, n, |r, c| {
        if r + 1 == c || c + 1 == r {
            (r.max(c) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

const NATAF_GH_POINTS: usize = 32;

struct NatafQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NatafQuadrature {
    fn new() -> Self {
        let (x, w) = gauss_hermite(NATAF_GH_POINTS);
        let nodes = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|v| v / std::f64::consts::PI.sqrt()).collect();
        NatafQuadrature { nodes, weights }
    }

    /// Standardized marginal values `(F⁻¹(Φ(z)) − μ)/σ` at the nodes and at
    /// arbitrary points.
    fn standardized(&self, h: &MarginalHistogram) -> impl Fn(f64) -> f64 + '_ {
        let vals: Vec<f64> = self
            .nodes
            .iter()
            .map(|z| h.inverse_cdf_unchecked(std_normal_cdf(*z)))
            .collect();
        let mean: f64 = vals.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        let var: f64 = vals
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * (v - mean) * (v - mean))
            .sum();
        let sd = var.sqrt().max(f64::MIN_POSITIVE);
        let h = h.clone();
        move |z: f64| (h.inverse_cdf_unchecked(std_normal_cdf(z)) - mean) / sd
    }

    /// Output-space correlation produced by Gaussian-space correlation `rho`.
    fn output_correlation(
        &self,
        fa: &dyn Fn(f64) -> f64,
        fb: &dyn Fn(f64) -> f64,
        rho: f64,
    ) -> f64 {
        let c = (1.0 - rho * rho).max(0.0).sqrt();
        let mut acc = 0.0;
        for (u, wu) in self.nodes.iter().zip(&self.weights) {
            let a = fa(*u);
            for (v, wv) in self.nodes.iter().zip(&self.weights) {
                acc += wu * wv * a * fb(rho * u + c * v);
            }
        }
        acc
    }
}

/// Gaussian-space correlation matrix that reproduces `corr` after each
/// coordinate is mapped through its histogram marginal. Each off-diagonal
/// entry is found by bisection on the quadrature-evaluated Nataf integral;
/// the result is projected back into the PSD cone if necessary.
pub fn nataf_adjusted_correlation(
    marginals: &[MarginalHistogram],
    corr: &CorrelationSpec,
) -> Result<Vec<Vec<f64>>> {
    corr.check()?;
    let n = corr.dim();
    if marginals.len() != n {
        return Err(Error::input(format!(
            "{} marginals for a {n}x{n} correlation matrix",
            marginals.len()
        )));
    }
    for (k, h) in marginals.iter().enumerate() {
        h.check().map_err(|e| e.context(format!("marginal {k}")))?;
    }
    let quad = NatafQuadrature::new();
    let std_maps: Vec<Box<dyn Fn(f64) -> f64 + '_>> = marginals
        .iter()
        .map(|h| Box::new(quad.standardized(h)) as Box<dyn Fn(f64) -> f64>)
        .collect();

    let mut rz = corr.matrix.clone();
    for i in 0..n {
        for j in 0..i {
            let target = corr.matrix[i][j];
            let adj = if target == 0.0 {
                0.0
            } else {
                let f = |r: f64| quad.output_correlation(&*std_maps[i], &*std_maps[j], r);
                let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            rz[i][j] = adj;
            rz[j][i] = adj;
        }
    }
    let spec = CorrelationSpec { matrix: rz };
    if spec.min_eigenvalue() < -1e-12 {
        log::warn!("Nataf-adjusted correlation is not PSD; projecting by eigenvalue clipping");
        return Ok(nearest_correlation(&spec.matrix));
    }
    Ok(spec.matrix)
}

/// Clips negative eigenvalues to zero and rescales to unit diagonal.
pub fn nearest_correlation(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let a = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[i][j] + m[j][i]));
    let eig = SymmetricEigen::new(a);
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let b = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..n).map(|i| b[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { b[(i, j)] / (d[i] * d[j]) }).collect())
        .collect()
}

/// Lower-triangular factor `L` with `L·Lᵀ = m`, falling back to a symmetric
/// square root with negative eigenvalues clipped when `m` is only PSD.
pub(crate) fn psd_factor(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let a = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[i][j] + m[j][i]));
    if let Some(ch) = a.clone().cholesky() {
        let l = ch.l();
        return (0..n).map(|i| (0..n).map(|j| l[(i, j)]).collect()).collect();
    }
    let eig = SymmetricEigen::new(a);
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let b = &eig.eigenvectors * DMatrix::from_diagonal(&vals);
    (0..n).map(|i| (0..n).map(|j| b[(i, j)]).collect()).collect()
}

/// Correlated draws whose columns follow the given histograms.
pub fn nataf_sample(
    marginals: &[MarginalHistogram],
    corr: &CorrelationSpec,
    n_samples: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    if n_samples == 0 {
        return Err(Error::input("n_samples must be at least 1"));
    }
    let rz = nataf_adjusted_correlation(marginals, corr)?;
    let l = psd_factor(&rz);
    let d = marginals.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n_samples * d);
    let mut n = vec![0.0; d];
    for _ in 0..n_samples {
        for v in n.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let z: f64 = l[i].iter().zip(&n).map(|(a, b)| a * b).sum();
            data.push(marginals[i].inverse_cdf_unchecked(std_normal_cdf(z)));
        }
    }
    SampleMatrix::from_flat(d, data)
}

/// Pre-factored sampler for a mixture.
#[derive(Debug, Clone)]
pub struct GmmSampler {
    cumulative: Vec<f64>,
    means: Vec<Vec<f64>>,
    factors: Vec<Vec<Vec<f64>>>,
    dim: usize,
}

impl GmmSampler {
    pub fn new(g: &Gmm) -> Result<Self> {
        g.check()?;
        let mut acc = 0.0;
        let total: f64 = g.components.iter().map(|c| c.weight).sum();
        let cumulative = g
            .components
            .iter()
            .map(|c| {
                acc += c.weight / total;
                acc
            })
            .collect();
        Ok(GmmSampler {
            cumulative,
            means: g.components.iter().map(|c| c.mean.clone()).collect(),
            factors: g.components.iter().map(|c| psd_factor(&c.covariance)).collect(),
            dim: g.dimension,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draws one vector into `out`, returning the component index used.
    pub fn sample_into<R: Rng>(&self, rng: &mut R, scratch: &mut [f64], out: &mut [f64]) -> usize {
        let u: f64 = rng.gen();
        let k = self
            .cumulative
            .iter()
            .position(|c| u < *c)
            .unwrap_or(self.cumulative.len() - 1);
        for v in scratch.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let l = &self.factors[k];
        for i in 0..self.dim {
            let mut s = self.means[k][i];
            for (lij, z) in l[i].iter().zip(scratch.iter()) {
                s += lij * z;
            }
            out[i] = s;
        }
        k
    }
}

/// `n_samples` independent draws from `g`; reproducible given `seed`.
pub fn sample_gmm(g: &Gmm, n_samples: usize, seed: u64) -> Result<SampleMatrix> {
    Ok(sample_gmm_labeled(g, n_samples, seed)?.0)
}

/// Like [`sample_gmm`] but also returns the component index of each draw.
pub fn sample_gmm_labeled(g: &Gmm, n_samples: usize, seed: u64) -> Result<(SampleMatrix, Vec<usize>)> {
    if n_samples == 0 {
        return Err(Error::input("n_samples must be at least 1"));
    }
    let sampler = GmmSampler::new(g)?;
    let d = g.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; n_samples * d];
    let mut labels = Vec::with_capacity(n_samples);
    let mut scratch = vec![0.0; d];
    for row in data.chunks_mut(d) {
        labels.push(sampler.sample_into(&mut rng, &mut scratch, row));
    }
    Ok((SampleMatrix::from_flat(d, data)?, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub n_components: usize,
    pub max_iterations: usize,
    /// Relative change in total log-likelihood that ends the iteration.
    pub log_likelihood_tolerance: f64,
    pub seed: u64,
    /// Lower bound on covariance diagonals, as a fraction of each column's variance.
    pub covariance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            n_components: 10,
            max_iterations: 500,
            log_likelihood_tolerance: 1e-7,
            seed: 0,
            covariance_floor: 1e-6,
        }
    }
}

impl EmConfig {
    pub fn with_components(n_components: usize, seed: u64) -> Self {
        EmConfig {
            n_components,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmReport {
    pub gmm: Gmm,
    /// Total log-likelihood evaluated at the start of each iteration.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const EM_CHUNK: usize = 2048;

struct Component {
    weight: f64,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    chol: Vec<Vec<f64>>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: Vec<f64>, cov: Vec<Vec<f64>>, floor: &[f64]) -> Result<Self> {
        let mut cov = cov;
        let d = mean.len();
        for i in 0..d {
            cov[i][i] = cov[i][i].max(floor[i]);
        }
        let mut ridge = 0.0;
        let chol = loop {
            if let Some(l) = cholesky(&cov) {
                break l;
            }
            ridge = if ridge == 0.0 { 1.0 } else { ridge * 10.0 };
            if ridge > 1e12 {
                return Err(Error::internal("component covariance cannot be regularized"));
            }
            for i in 0..d {
                cov[i][i] += ridge * floor[i];
            }
        };
        let log_det: f64 = (0..d).map(|i| 2.0 * chol[i][i].ln()).sum();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Component {
            weight,
            mean,
            cov,
            chol,
            log_norm,
        })
    }

    fn log_density(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        let d = x.len();
        let mut q = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for k in 0..i {
                s -= self.chol[i][k] * buf[k];
            }
            buf[i] = s / self.chol[i][i];
            q += buf[i] * buf[i];
        }
        self.log_norm - 0.5 * q
    }
}

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Per-chunk sufficient statistics of one E-step.
struct Stats {
    nk: Vec<f64>,
    sx: Vec<Vec<f64>>,
    sxx: Vec<Vec<Vec<f64>>>,
    loglik: f64,
}

impl Stats {
    fn zero(k: usize, d: usize) -> Self {
        Stats {
            nk: vec![0.0; k],
            sx: vec![vec![0.0; d]; k],
            sxx: vec![vec![vec![0.0; d]; d]; k],
            loglik: 0.0,
        }
    }

    fn add(&mut self, o: &Stats) {
        for k in 0..self.nk.len() {
            self.nk[k] += o.nk[k];
            for i in 0..self.sx[k].len() {
                self.sx[k][i] += o.sx[k][i];
                for j in 0..=i {
                    self.sxx[k][i][j] += o.sxx[k][i][j];
                }
            }
        }
        self.loglik += o.loglik;
    }
}

fn e_step(data: &[f64], d: usize, comps: &[Component]) -> Stats {
    let k = comps.len();
    let partials: Vec<Stats> = data
        .par_chunks(EM_CHUNK * d)
        .map(|chunk| {
            let mut st = Stats::zero(k, d);
            let mut buf = vec![0.0; d];
            let mut lp = vec![0.0; k];
            for x in chunk.chunks(d) {
                let mut mx = f64::NEG_INFINITY;
                for (c, l) in comps.iter().zip(lp.iter_mut()) {
                    *l = c.weight.ln() + c.log_density(x, &mut buf);
                    mx = mx.max(*l);
                }
                let s: f64 = lp.iter().map(|l| (l - mx).exp()).sum();
                let lse = mx + s.ln();
                st.loglik += lse;
                for c in 0..k {
                    let r = (lp[c] - lse).exp();
                    if r == 0.0 {
                        continue;
                    }
                    st.nk[c] += r;
                    for i in 0..d {
                        let rxi = r * x[i];
                        st.sx[c][i] += rxi;
                        for j in 0..=i {
                            st.sxx[c][i][j] += rxi * x[j];
                        }
                    }
                }
            }
            st
        })
        .collect();
    // fixed-order reduction keeps the result independent of thread count
    let mut total = Stats::zero(k, d);
    for p in &partials {
        total.add(p);
    }
    total
}

/// k-means++ seeding: first center uniform, later ones drawn proportional
/// to squared distance from the nearest chosen center.
fn kmeanspp(data: &[f64], d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len() / d;
    let row = |i: usize| &data[i * d..(i + 1) * d];
    let mut centers = vec![row(rng.gen_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = (0..n).map(|i| sqdist(row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in dist.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        let c = row(next).to_vec();
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sqdist(row(i), &c));
        }
        centers.push(c);
    }
    centers
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fits a full-covariance mixture by EM.
pub fn em_fit(samples: &SampleMatrix, cfg: &EmConfig) -> Result<Gmm> {
    Ok(em_fit_report(samples, cfg)?.gmm)
}

pub fn em_fit_report(samples: &SampleMatrix, cfg: &EmConfig) -> Result<EmReport> {
    let n = samples.rows();
    let d = samples.cols();
    let k = cfg.n_components;
    if k == 0 || cfg.max_iterations == 0 || !(cfg.log_likelihood_tolerance > 0.0) || !(cfg.covariance_floor > 0.0) {
        return Err(Error::input("EM configuration values must be positive"));
    }
    if n < 2 || n < k {
        return Err(Error::input(format!("{n} samples cannot support {k} components")));
    }

    // work on centered data; the offset is restored on output
    let center = samples.mean();
    let data: Vec<f64> = samples
        .as_slice()
        .chunks(d)
        .flat_map(|r| r.iter().zip(&center).map(|(x, c)| x - c).collect::<Vec<_>>())
        .collect();
    let cov0 = samples.covariance();
    for (j, row) in cov0.iter().enumerate() {
        if !(row[j] > 0.0) {
            return Err(Error::input(format!("sample column {j} has zero variance")));
        }
    }
    let floor: Vec<f64> = (0..d).map(|j| cfg.covariance_floor * cov0[j][j]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers = if k == 1 {
        vec![vec![0.0; d]]
    } else {
        kmeanspp(&data, d, k, &mut rng)
    };
    let mut comps: Vec<Component> = centers
        .into_iter()
        .map(|m| Component::new(1.0 / k as f64, m, cov0.clone(), &floor))
        .collect::<Result<_>>()?;

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        let st = e_step(&data, d, &comps);
        if !st.loglik.is_finite() {
            return Err(Error::internal(format!("non-finite log-likelihood at EM iteration {it}")));
        }
        let prev = history.last().copied();
        history.push(st.loglik);
        if let Some(p) = prev {
            if (st.loglik - p).abs() < cfg.log_likelihood_tolerance * st.loglik.abs() {
                converged = true;
                break;
            }
        }
        comps = m_step(&st, n, d, &comps, &floor)?;
    }

    let components = comps
        .into_iter()
        .map(|c| GaussianComponent {
            weight: c.weight,
            mean: c.mean.iter().zip(&center).map(|(m, o)| m + o).collect(),
            covariance: c.cov,
        })
        .collect();
    let gmm = Gmm::new(d, components)?;
    Ok(EmReport {
        gmm,
        log_likelihoods: history,
        iterations,
        converged,
    })
}

fn m_step(st: &Stats, n: usize, d: usize, old: &[Component], floor: &[f64]) -> Result<Vec<Component>> {
    let mut out = Vec::with_capacity(old.len());
    let total: f64 = st.nk.iter().sum();
    for (c, prev) in old.iter().enumerate() {
        let nk = st.nk[c];
        if nk < 1e-8 * n as f64 {
            // starved component: keep previous shape with negligible weight
            out.push(Component::new(
                nk.max(1e-300) / total,
                prev.mean.clone(),
                prev.cov.clone(),
                floor,
            )?);
            continue;
        }
        let mean: Vec<f64> = st.sx[c].iter().map(|s| s / nk).collect();
        let mut cov = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..=i {
                let v = st.sxx[c][i][j] / nk - mean[i] * mean[j];
                cov[i][j] = v;
                cov[j][i] = v;
            }
        }
        out.push(Component::new(nk / total, mean, cov, floor)?);
    }
    // weights must sum to one exactly enough for validation
    let s: f64 = out.iter().map(|c| c.weight).sum();
    out.iter_mut().for_each(|c| c.weight /= s);
    Ok(out)
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `data` and `cdf`.
pub fn ks_distance(data: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = data.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut worst = 0.0_f64;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        worst = worst.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    worst
}
