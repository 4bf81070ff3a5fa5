//! Stationary covariance models and the covariances they induce on
//! orthogonal-polynomial functionals.

use serde::{Deserialize, Serialize};

use crate::error::{FcltError, Result};
use crate::orthopoly::FunctionalSeries;

/// Which limit theorem is in play: Gaussian/Hermite or semicircular/Chebyshev.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum World {
    Classical,
    Free,
}

impl std::str::FromStr for World {
    type Err = FcltError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classical" | "gaussian" => Ok(World::Classical),
            "free" | "semicircular" => Ok(World::Free),
            other => Err(FcltError::Config(format!("unknown world '{other}'"))),
        }
    }
}

/// Stationary covariance `r(t)` with `r(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovarianceModel {
    /// `r(t) = a^|t|`, `0 ≤ a < 1`.
    Geometric { a: f64 },
    /// `r(t) = (1 + |t|)^-beta`, `beta > 0`.
    Power { beta: f64 },
    /// `r(t) = values[|t|]` inside the table, 0 beyond. `values[0] = 1`.
    Tabulated { values: Vec<f64> },
}

impl CovarianceModel {
    pub fn geometric(a: f64) -> Result<Self> {
        CovarianceModel::Geometric { a }.validated()
    }

    pub fn power(beta: f64) -> Result<Self> {
        CovarianceModel::Power { beta }.validated()
    }

    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        CovarianceModel::Tabulated { values }.validated()
    }

    pub fn white_noise() -> Self {
        CovarianceModel::Tabulated { values: vec![1.0] }
    }

    /// Checks the parameter constraints; used after deserialization too.
    pub fn validated(self) -> Result<Self> {
        match &self {
            CovarianceModel::Geometric { a } => {
                if !(0.0..1.0).contains(a) {
                    return Err(FcltError::ModelInvalid(format!(
                        "geometric decay needs 0 ≤ a < 1, got {a}"
                    )));
                }
            }
            CovarianceModel::Power { beta } => {
                if !(beta.is_finite() && *beta > 0.0) {
                    return Err(FcltError::ModelInvalid(format!(
                        "power decay needs beta > 0, got {beta}"
                    )));
                }
            }
            CovarianceModel::Tabulated { values } => {
                if values.first() != Some(&1.0) {
                    return Err(FcltError::ModelInvalid(
                        "tabulated covariance must start with r(0) = 1".into(),
                    ));
                }
                if let Some(v) = values.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
                    return Err(FcltError::ModelInvalid(format!(
                        "tabulated covariance value {v} violates |r(t)| ≤ 1"
                    )));
                }
            }
        }
        Ok(self)
    }

    /// `r(t)` for integer lag `t` (even in `t`).
    pub fn r(&self, t: i64) -> f64 {
        let t = t.unsigned_abs();
        match self {
            CovarianceModel::Geometric { a } => {
                if t == 0 {
                    1.0
                } else {
                    a.powi(t.min(i32::MAX as u64) as i32)
                }
            }
            CovarianceModel::Power { beta } => (1.0 + t as f64).powf(-beta),
            CovarianceModel::Tabulated { values } => {
                values.get(t as usize).copied().unwrap_or(0.0)
            }
        }
    }

    /// Number of lags with possibly nonzero covariance, if finite.
    pub fn support(&self) -> Option<usize> {
        match self {
            CovarianceModel::Tabulated { values } => Some(values.len()),
            CovarianceModel::Geometric { a } if *a == 0.0 => Some(1),
            _ => None,
        }
    }

    /// Parses `geometric:0.5`, `power:0.6`, `tabulated:1,-0.5`, `white`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| FcltError::Config(format!("bad number '{s}' in model '{spec}'")))
        };
        match kind.trim().to_ascii_lowercase().as_str() {
            "geometric" | "geo" => CovarianceModel::geometric(num(arg)?),
            "power" => CovarianceModel::power(num(arg)?),
            "tabulated" | "tab" => {
                let values = arg.split(',').map(num).collect::<Result<Vec<_>>>()?;
                CovarianceModel::tabulated(values)
            }
            "white" => Ok(CovarianceModel::white_noise()),
            other => Err(FcltError::Config(format!("unknown covariance model '{other}'"))),
        }
    }
}

/// Weight of `r(t)^k` in the functional covariance: `k!` classically, 1 freely.
fn term_weights(s: &FunctionalSeries) -> Vec<f64> {
    s.coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| c * c * s.basis().norm_sq(k))
        .collect()
}

/// `Σ_k c_k² ‖P_k‖² r(t)^k`: `r_H(t)` for Hermite series, `ρ_U(t)` for Chebyshev.
pub fn functional_covariance(s: &FunctionalSeries, m: &CovarianceModel, t: i64) -> f64 {
    eval_weighted_powers(&term_weights(s), m.r(t))
}

fn eval_weighted_powers(weights: &[f64], r: f64) -> f64 {
    // Horner in r; weights[0] is zero because c_0 = 0
    weights.iter().rev().fold(0.0, |acc, w| acc * r + w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummabilityReport {
    pub summable: bool,
    pub rank: usize,
    pub criterion: String,
}

/// Decides `Σ_t |r(t)|^{k*} < ∞` for the model family.
pub fn summability_check(s: &FunctionalSeries, m: &CovarianceModel) -> SummabilityReport {
    let k = s.rank();
    let (summable, criterion) = match m {
        CovarianceModel::Geometric { a } => {
            (true, format!("geometric decay a = {a} < 1 is summable at every power"))
        }
        CovarianceModel::Power { beta } => {
            let exponent = beta * k as f64;
            (
                exponent > 1.0,
                format!("power decay: beta·k* = {beta}·{k} = {exponent} must exceed 1"),
            )
        }
        CovarianceModel::Tabulated { values } => {
            (true, format!("finite support of {} lags", values.len()))
        }
    };
    SummabilityReport { summable, rank: k, criterion }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaSquared {
    pub value: f64,
    /// Upper bound on the neglected tail `Σ_{|t|>T}`; 0 when summed in closed form.
    pub tail_bound: f64,
    /// Truncation horizon `T`, if the sum was truncated.
    pub horizon: Option<u64>,
    /// `σ² ≈ 0`: the CLT hypothesis `σ² ≠ 0` fails.
    pub degenerate: bool,
}

/// Horizon cap for the adaptive truncation of the σ² sum.
pub const MAX_SIGMA_HORIZON: u64 = 1_000_000;

/// `σ² = Σ_{t∈Z}` of the functional covariance.
///
/// Geometric models are summed per coefficient in closed form, tabulated
/// models exactly, and power models by doubling the horizon until the
/// integral tail bound drops below `tail_tol`.
pub fn sigma_squared(
    s: &FunctionalSeries,
    m: &CovarianceModel,
    tail_tol: f64,
) -> Result<SigmaSquared> {
    let report = summability_check(s, m);
    if !report.summable {
        return Err(FcltError::Hypothesis(format!(
            "Σ|r(t)|^k* diverges for Hermite/Chebyshev rank k* = {} ({})",
            report.rank, report.criterion
        )));
    }
    let weights = term_weights(s);
    let (value, tail_bound, horizon) = match m {
        CovarianceModel::Geometric { a } => {
            let v = weights
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, w)| {
                    let q = a.powi(k as i32);
                    w * (1.0 + q) / (1.0 - q)
                })
                .sum();
            (v, 0.0, None)
        }
        CovarianceModel::Tabulated { values } => {
            let mut acc = eval_weighted_powers(&weights, 1.0);
            for &r in &values[1..] {
                acc += 2.0 * eval_weighted_powers(&weights, r);
            }
            (acc, 0.0, None)
        }
        CovarianceModel::Power { beta } => {
            let tail = |t_max: u64| -> f64 {
                weights
                    .iter()
                    .enumerate()
                    .skip(1)
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(k, w)| {
                        let e = beta * k as f64;
                        2.0 * w.abs() * (1.0 + t_max as f64).powf(1.0 - e) / (e - 1.0)
                    })
                    .sum()
            };
            let mut t_max = 64u64;
            while tail(t_max) > tail_tol {
                if t_max >= MAX_SIGMA_HORIZON {
                    return Err(FcltError::Numeric(format!(
                        "σ² tail bound {} still above {tail_tol} at horizon {MAX_SIGMA_HORIZON}",
                        tail(t_max)
                    )));
                }
                t_max = (t_max * 2).min(MAX_SIGMA_HORIZON);
            }
            let mut terms = Vec::with_capacity(t_max as usize + 1);
            terms.push(eval_weighted_powers(&weights, 1.0));
            for t in 1..=t_max as i64 {
                terms.push(2.0 * eval_weighted_powers(&weights, m.r(t)));
            }
            // add small terms first
            terms[1..].reverse();
            (crate::numeric::tree_sum(&terms), tail(t_max), Some(t_max))
        }
    };
    let scale = eval_weighted_powers(&weights, 1.0).max(1.0);
    Ok(SigmaSquared {
        value,
        tail_bound,
        horizon,
        degenerate: value.abs() <= 1e-12 * scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdReport {
    pub min_spectral_value: f64,
    pub flagged: bool,
}

/// Tolerance below zero before the truncated spectral density flags a model.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Minimum over a uniform grid of `Σ_{|t|≤T} r(t) e^{2πixt}`.
pub fn psd_check(m: &CovarianceModel, horizon: usize, grid: usize) -> Result<PsdReport> {
    if let Some(support) = m.support() {
        if horizon + 1 < support {
            return Err(FcltError::Contract(format!(
                "horizon {horizon} shorter than the model support {support}"
            )));
        }
    }
    if grid == 0 {
        return Err(FcltError::Contract("spectral grid must be non-empty".into()));
    }
    let r: Vec<f64> = (0..=horizon as i64).map(|t| m.r(t)).collect();
    let min = (0..grid)
        .map(|j| {
            let x = j as f64 / grid as f64;
            let w = 2.0 * std::f64::consts::PI * x;
            r[0] + 2.0
                * r[1..]
                    .iter()
                    .enumerate()
                    .map(|(t, v)| v * (w * (t + 1) as f64).cos())
                    .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(PsdReport { min_spectral_value: min, flagged: min < -PSD_TOLERANCE })
}
