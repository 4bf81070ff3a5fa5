//! Monte Carlo and random-matrix checks of the two limit theorems.
//!
//! Gaussian paths come from circulant embedding (dense Cholesky when the
//! embedding is not nonnegative). The free side is modelled by moving
//! averages of independent Hermitian Gaussian-ensemble matrices,
//! `X_i = Σ_m a_m G_{i+m}`, whose normalized-trace covariance is
//! `Σ_m a_m a_{m+t} ≈ ρ(t)`.
//!
//! Every replication or matrix draws from its own ChaCha8 stream keyed by
//! `(seed, index)`, so reports do not depend on scheduling.

use std::collections::VecDeque;
use std::sync::Arc;

use faer::linalg::matmul::matmul;
use faer::{c64, Accum, Mat, Par, Side};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::covariance::{sigma_squared, CovarianceModel};
use crate::error::{FcltError, Result};
use crate::numeric::tree_sum;
use crate::orthopoly::{Basis, FunctionalSeries};

/// Relative size of a negative circulant eigenvalue tolerated as round-off.
const EMBEDDING_TOLERANCE: f64 = 1e-10;

/// Tail tolerance for the σ² reference in reports.
const REPORT_SIGMA_TOL: f64 = 1e-10;

/// Target covariance residual of the moving-average factorization.
pub const MA_RESIDUAL_TARGET: f64 = 1e-4;

const MAX_MA_LAG: usize = 4096;

/// Smallest matrix dimension accepted by [`rmt_clt_check`].
pub const MIN_RMT_DIM: usize = 256;

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

enum Method {
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Cholesky { lower: DMatrix<f64> },
}

/// Reusable sampler of `(X_1..X_N)` with `E[X_i X_{i+t}] = r(t)`.
pub struct PathSampler {
    n: usize,
    method: Method,
}

impl std::fmt::Debug for PathSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let method = match self.method {
            Method::Circulant { .. } => "circulant",
            Method::Cholesky { .. } => "cholesky",
        };
        f.debug_struct("PathSampler").field("n", &self.n).field("method", &method).finish()
    }
}

impl PathSampler {
    pub fn new(m: &CovarianceModel, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(FcltError::Contract("path length must be ≥ 1".into()));
        }
        let len = (2 * n).next_power_of_two().max(2);
        let mut buf: Vec<Complex64> = (0..len)
            .map(|j| Complex64::new(m.r(j.min(len - j) as i64), 0.0))
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(len);
        fft.process(&mut buf);
        let eig: Vec<f64> = buf.iter().map(|c| c.re).collect();
        let max = eig.iter().copied().fold(0.0f64, f64::max);
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if min >= -EMBEDDING_TOLERANCE * max {
            let sqrt_eig = eig.iter().map(|&l| (l.max(0.0) / len as f64).sqrt()).collect();
            return Ok(PathSampler { n, method: Method::Circulant { sqrt_eig, fft } });
        }
        let toeplitz = DMatrix::from_fn(n, n, |i, j| m.r(i as i64 - j as i64));
        let chol = toeplitz.cholesky().ok_or_else(|| {
            FcltError::ModelInvalid(format!(
                "covariance is not positive definite on {n} lags (Cholesky failed)"
            ))
        })?;
        Ok(PathSampler { n, method: Method::Cholesky { lower: chol.l() } })
    }

    pub fn is_circulant(&self) -> bool {
        matches!(self.method, Method::Circulant { .. })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.method {
            Method::Circulant { sqrt_eig, fft } => {
                let mut w: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut w);
                w.iter().take(self.n).map(|c| c.re).collect()
            }
            Method::Cholesky { lower } => {
                let z = nalgebra::DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
                (lower * z).iter().copied().collect()
            }
        }
    }
}

/// One stationary Gaussian path of length `n`.
pub fn sample_gaussian_path(m: &CovarianceModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(PathSampler::new(m, n)?.sample(&mut stream(seed, 0)))
}

fn require_basis(s: &FunctionalSeries, basis: Basis) -> Result<()> {
    if s.basis() != basis {
        return Err(FcltError::Contract(format!("expected a {basis:?} series, got {:?}", s.basis())));
    }
    Ok(())
}

fn reference_sigma2(s: &FunctionalSeries, m: &CovarianceModel) -> Result<f64> {
    let sigma = sigma_squared(s, m, REPORT_SIGMA_TOL)?;
    if sigma.degenerate {
        return Err(FcltError::Hypothesis(format!(
            "σ² = {:e} vanishes; the limit theorem requires σ² ≠ 0",
            sigma.value
        )));
    }
    Ok(sigma.value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub schema: u32,
    pub reps: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub sample_mean: f64,
    pub sample_var: f64,
    pub sample_skew: f64,
    /// Non-excess kurtosis `m_4 / m_2²` (3 for a normal law).
    pub sample_kurtosis: f64,
    pub ks_distance: f64,
}

/// Standard normal CDF through `statrs`' erf (Boost-derived rational
/// approximations, accurate to a few ulps).
fn normal_cdf(x: f64, var: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / (2.0 * var).sqrt()))
}

/// Kolmogorov–Smirnov distance of a sample against `N(0, var)`.
pub fn ks_distance_normal(samples: &[f64], var: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x, var);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn central_moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = tree_sum(xs) / n;
    let pow = |k: i32| tree_sum(&xs.iter().map(|x| (x - mean).powi(k)).collect::<Vec<_>>()) / n;
    (mean, pow(2), pow(3), pow(4))
}

/// Draws of `N^{-1/2} Σ_{i=1}^N H(X_i)` and their distance from `N(0, σ²)`.
pub fn mc_distribution(
    s: &FunctionalSeries,
    m: &CovarianceModel,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<McReport> {
    require_basis(s, Basis::Hermite)?;
    if reps == 0 {
        return Err(FcltError::Contract("reps must be ≥ 1".into()));
    }
    let sigma2 = reference_sigma2(s, m)?;
    let sampler = PathSampler::new(m, n)?;
    let scale = 1.0 / (n as f64).sqrt();
    let draws: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let path = sampler.sample(&mut stream(seed, rep));
            let vals: Vec<f64> = path.iter().map(|&x| s.eval(x)).collect();
            scale * tree_sum(&vals)
        })
        .collect();
    let (mean, m2, m3, m4) = central_moments(&draws);
    let var = if reps > 1 { m2 * reps as f64 / (reps - 1) as f64 } else { 0.0 };
    let stats = [mean, var, m3 / m2.powf(1.5), m4 / (m2 * m2)];
    if stats[..2].iter().any(|v| !v.is_finite()) {
        return Err(FcltError::Numeric("non-finite Monte Carlo statistics".into()));
    }
    Ok(McReport {
        schema: 1,
        reps,
        n,
        seed,
        sigma2,
        sample_mean: mean,
        sample_var: var,
        sample_skew: stats[2],
        sample_kurtosis: stats[3],
        ks_distance: ks_distance_normal(&draws, sigma2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaFit {
    pub coeffs: Vec<f64>,
    /// `Σ_{t=0}^{max_lag/2} |Σ_m a_m a_{m+t} - ρ(t)|`.
    pub residual: f64,
}

/// Minimum-phase moving-average factor of the covariance by the cepstral
/// method: `log f = ĉ`, `A = exp(ĉ_0/2 + Σ_{k>0} ĉ_k e^{-iωk})`, `a = A^∨`.
pub fn ma_coefficients(m: &CovarianceModel, max_lag: usize) -> Result<MaFit> {
    let len = (16 * (max_lag + 1)).next_power_of_two().max(4096);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut buf: Vec<Complex64> =
        (0..len).map(|j| Complex64::new(m.r(j.min(len - j) as i64), 0.0)).collect();
    fwd.process(&mut buf);
    let max = buf.iter().map(|c| c.re).fold(0.0f64, f64::max);
    let min = buf.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    if min < -1e-8 {
        return Err(FcltError::ModelInvalid(format!(
            "spectral density reaches {min:e} < 0; no moving-average factor exists"
        )));
    }
    let floor = 1e-12 * max;
    for c in buf.iter_mut() {
        *c = Complex64::new(c.re.max(floor).ln(), 0.0);
    }
    inv.process(&mut buf);
    let norm = 1.0 / len as f64;
    // causal part of the cepstrum
    let mut cep = vec![Complex64::new(0.0, 0.0); len];
    cep[0] = buf[0] * norm * 0.5;
    for k in 1..len / 2 {
        cep[k] = buf[k] * norm;
    }
    fwd.process(&mut cep);
    for c in cep.iter_mut() {
        *c = c.exp();
    }
    inv.process(&mut cep);
    let coeffs: Vec<f64> = cep.iter().take(max_lag + 1).map(|c| c.re * norm).collect();
    let residual = (0..=max_lag / 2)
        .map(|t| {
            let acf = tree_sum(&(0..=max_lag - t).map(|i| coeffs[i] * coeffs[i + t]).collect::<Vec<_>>());
            (acf - m.r(t as i64)).abs()
        })
        .sum();
    Ok(MaFit { coeffs, residual })
}

/// Doubles the moving-average horizon from 8 until the residual target is met.
pub fn ma_fit_adaptive(m: &CovarianceModel) -> Result<MaFit> {
    let mut lag = 8;
    loop {
        let fit = ma_coefficients(m, lag)?;
        if fit.residual < MA_RESIDUAL_TARGET {
            return Ok(fit);
        }
        if lag >= MAX_MA_LAG {
            return Err(FcltError::Numeric(format!(
                "moving-average residual {:e} above {MA_RESIDUAL_TARGET:e} at horizon {lag}",
                fit.residual
            )));
        }
        lag *= 2;
    }
}

/// `∫ dμ(x)/(x - z)` for the semicircle law of variance `sigma²`.
pub fn stieltjes_semicircle(z: Complex64, sigma: f64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(FcltError::Contract(format!("Stieltjes transform needs Im z > 0, got {z}")));
    }
    if !(sigma > 0.0) {
        return Err(FcltError::Contract(format!("semicircle scale must be > 0, got {sigma}")));
    }
    let w = (z - 2.0 * sigma).sqrt() * (z + 2.0 * sigma).sqrt();
    Ok((-z + w) / (2.0 * sigma * sigma))
}

/// `(1/d) Σ 1/(λ_i - z)`.
pub fn stieltjes_empirical(eigenvalues: &[f64], z: Complex64) -> Result<Complex64> {
    if eigenvalues.is_empty() {
        return Err(FcltError::Contract("empirical Stieltjes transform needs eigenvalues".into()));
    }
    if !(z.im > 0.0) {
        return Err(FcltError::Contract(format!("Stieltjes transform needs Im z > 0, got {z}")));
    }
    let re: Vec<f64> = eigenvalues.iter().map(|&l| (1.0 / (l - z)).re).collect();
    let im: Vec<f64> = eigenvalues.iter().map(|&l| (1.0 / (l - z)).im).collect();
    let d = eigenvalues.len() as f64;
    Ok(Complex64::new(tree_sum(&re) / d, tree_sum(&im) / d))
}

/// `(bin_center, density)` pairs over `[min, max]`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = values.len() as f64 * width;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64 / total))
        .collect()
}

pub fn write_histogram_csv<W: std::io::Write>(values: &[f64], bins: usize, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| FcltError::Config(format!("CSV output: {e}"));
    wr.write_record(["bin_center", "density"]).map_err(io)?;
    for (c, d) in histogram(values, bins) {
        wr.write_record([c.to_string(), d.to_string()]).map_err(io)?;
    }
    wr.flush().map_err(|e| FcltError::Config(format!("CSV output: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StieltjesSample {
    pub z: [f64; 2],
    pub empirical: [f64; 2],
    pub reference: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub schema: u32,
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub ma_lag: usize,
    pub ma_residual: f64,
    /// `m_1..m_6` of the empirical spectral distribution.
    pub empirical_moments: Vec<f64>,
    /// Moments of the semicircle law of variance σ².
    pub reference_moments: Vec<f64>,
    pub stieltjes_samples: Vec<StieltjesSample>,
    #[serde(skip)]
    pub eigenvalues: Vec<f64>,
}

impl SpectralReport {
    pub fn stieltjes_at(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        Ok((
            stieltjes_empirical(&self.eigenvalues, z)?,
            stieltjes_semicircle(z, self.sigma2.sqrt())?,
        ))
    }
}

/// Points at which reports sample the Stieltjes transform.
pub const STIELTJES_POINTS: [(f64, f64); 5] = [(0.0, 1.0), (1.0, 1.0), (-1.0, 0.5), (2.0, 0.5), (0.0, 2.0)];

/// Hermitian Gaussian-ensemble matrix: off-diagonal entries complex with
/// `E|G_ab|² = 1/d`, diagonal entries real with variance `1/d`.
fn gaussian_ensemble(dim: usize, seed: u64, index: u64) -> Mat<c64> {
    let mut rng = stream(seed, index);
    let off = (0.5 / dim as f64).sqrt();
    let diag = (1.0 / dim as f64).sqrt();
    let mut g = Mat::<c64>::zeros(dim, dim);
    for j in 0..dim {
        let x: f64 = rng.sample(StandardNormal);
        g[(j, j)] = c64::new(diag * x, 0.0);
        for i in j + 1..dim {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let v = c64::new(off * re, off * im);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    g
}

/// `Σ_k c_k U_k(X)` by the three-term recursion on matrices.
fn chebyshev_matrix(coeffs: &[f64], x: &Mat<c64>) -> Mat<c64> {
    let dim = x.nrows();
    let mut out = Mat::<c64>::zeros(dim, dim);
    let mut prev = Mat::<c64>::identity(dim, dim);
    let mut cur = x.clone();
    let add = |out: &mut Mat<c64>, c: f64, p: &Mat<c64>| {
        if c != 0.0 {
            *out += faer::Scale(c64::new(c, 0.0)) * p;
        }
    };
    add(&mut out, coeffs[0], &prev);
    if coeffs.len() > 1 {
        add(&mut out, coeffs[1], &cur);
    }
    for &c in coeffs.iter().skip(2) {
        let mut next = Mat::<c64>::zeros(dim, dim);
        matmul(&mut next, Accum::Replace, x, &cur, c64::new(1.0, 0.0), Par::rayon(0));
        next -= &prev;
        add(&mut out, c, &next);
        prev = std::mem::replace(&mut cur, next);
    }
    out
}

/// Spectrum of `N^{-1/2} Σ_{i=1}^N U(X_i)` for the moving-average ensemble
/// family, compared with the semicircle law of variance σ².
pub fn rmt_clt_check(
    s: &FunctionalSeries,
    m: &CovarianceModel,
    n: usize,
    dim: usize,
    seed: u64,
) -> Result<SpectralReport> {
    require_basis(s, Basis::Chebyshev)?;
    if dim < MIN_RMT_DIM {
        return Err(FcltError::Contract(format!("matrix dimension must be ≥ {MIN_RMT_DIM}, got {dim}")));
    }
    if n == 0 {
        return Err(FcltError::Contract("N must be ≥ 1".into()));
    }
    let sigma2 = reference_sigma2(s, m)?;
    let fit = ma_fit_adaptive(m)?;
    let lag = fit.coeffs.len() - 1;

    let mut window: VecDeque<Mat<c64>> = (0..=lag as u64)
        .into_par_iter()
        .map(|j| gaussian_ensemble(dim, seed, j))
        .collect::<Vec<_>>()
        .into();
    let mut sum = Mat::<c64>::zeros(dim, dim);
    for i in 0..n {
        if i > 0 {
            window.pop_front();
            window.push_back(gaussian_ensemble(dim, seed, (i + lag) as u64));
        }
        let mut x = Mat::<c64>::zeros(dim, dim);
        for (a, g) in fit.coeffs.iter().zip(&window) {
            x += faer::Scale(c64::new(*a, 0.0)) * g;
        }
        sum += chebyshev_matrix(s.coeffs(), &x);
    }
    sum *= faer::Scale(c64::new(1.0 / (n as f64).sqrt(), 0.0));
    let eigenvalues = sum
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| FcltError::Numeric(format!("Hermitian eigensolver failed: {e:?}")))?;

    let d = dim as f64;
    let empirical_moments: Vec<f64> = (1..=6)
        .map(|k| tree_sum(&eigenvalues.iter().map(|l| l.powi(k)).collect::<Vec<_>>()) / d)
        .collect();
    let catalan = [1.0, 2.0, 5.0];
    let reference_moments: Vec<f64> = (1..=6)
        .map(|k| if k % 2 == 1 { 0.0 } else { catalan[k / 2 - 1] * sigma2.powi(k as i32 / 2) })
        .collect();
    let mut stieltjes_samples = Vec::new();
    for (re, im) in STIELTJES_POINTS {
        let z = Complex64::new(re, im);
        let e = stieltjes_empirical(&eigenvalues, z)?;
        let r = stieltjes_semicircle(z, sigma2.sqrt())?;
        stieltjes_samples.push(StieltjesSample { z: [re, im], empirical: [e.re, e.im], reference: [r.re, r.im] });
    }
    Ok(SpectralReport {
        schema: 1,
        dim,
        n,
        seed,
        sigma2,
        ma_lag: lag,
        ma_residual: fit.residual,
        empirical_moments,
        reference_moments,
        stieltjes_samples,
        eigenvalues,
    })
}
