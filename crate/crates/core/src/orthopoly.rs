//! Probabilists' Hermite polynomials, monic second-kind Chebyshev polynomials
//! on [-2, 2], Gaussian quadrature for both weights, and series expansion.
//!
//! Both families are monic. Under their weights (standard normal, standard
//! semicircle) the squared norms are `k!` and `1` respectively.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{FcltError, Result};
use crate::numeric::factorial;

/// Largest degree accepted by the evaluators (guards against overflow).
pub const MAX_DEGREE: usize = 60;

/// Absolute tolerance used to decide whether a coefficient is zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Hermite,
    Chebyshev,
}

impl Basis {
    /// Squared norm of the degree-`k` basis polynomial under its weight.
    pub fn norm_sq(self, k: usize) -> f64 {
        match self {
            Basis::Hermite => factorial(k as u32),
            Basis::Chebyshev => 1.0,
        }
    }

    pub fn eval(self, n: usize, x: f64) -> Result<f64> {
        match self {
            Basis::Hermite => hermite_eval(n, x),
            Basis::Chebyshev => chebyshev_eval(n, x),
        }
    }
}

fn check_degree(n: usize) -> Result<()> {
    if n > MAX_DEGREE {
        return Err(FcltError::size_limit(format!("polynomial degree {n}"), MAX_DEGREE as u64));
    }
    Ok(())
}

/// `He_n(x)` via `He_{n+1} = x He_n - n He_{n-1}`.
pub fn hermite_eval(n: usize, x: f64) -> Result<f64> {
    check_degree(n)?;
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return Ok(prev);
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `U_n(x)` via `U_{n+1} = x U_n - U_{n-1}` (monic, orthonormal on [-2, 2]).
pub fn chebyshev_eval(n: usize, x: f64) -> Result<f64> {
    check_degree(n)?;
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return Ok(prev);
    }
    for _ in 1..n {
        let next = x * cur - prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// All values `P_0(x) ..= P_n(x)` in one pass.
pub fn eval_all(basis: Basis, n: usize, x: f64) -> Result<Vec<f64>> {
    check_degree(n)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 1..n {
        let damp = match basis {
            Basis::Hermite => k as f64,
            Basis::Chebyshev => 1.0,
        };
        out.push(x * out[k] - damp * out[k - 1]);
    }
    Ok(out)
}

/// Quadrature nodes and weights for a probability weight.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `q`-point rule exact for polynomials of degree ≤ 2q-1 under the basis weight.
    pub fn for_basis(basis: Basis, q: usize) -> Result<Self> {
        match basis {
            Basis::Hermite => gauss_hermite(q),
            Basis::Chebyshev => Ok(gauss_chebyshev_second_kind(q)),
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss rule for the standard semicircle weight `(1/2π)√(4-x²)` on [-2, 2].
pub fn gauss_chebyshev_second_kind(q: usize) -> QuadratureRule {
    let h = std::f64::consts::PI / (q + 1) as f64;
    let (nodes, weights) = (1..=q)
        .map(|j| {
            let th = j as f64 * h;
            (2.0 * th.cos(), 2.0 / (q + 1) as f64 * th.sin().powi(2))
        })
        .unzip();
    QuadratureRule { nodes, weights }
}

/// `H_k(x)/√k!` for `k = 0..=n`.
fn orthonormal_hermite(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 1..n {
        let next = (x * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

/// Gauss rule for the standard normal weight, via Golub–Welsch on the
/// Jacobi matrix of the monic Hermite recurrence.
pub fn gauss_hermite(q: usize) -> Result<QuadratureRule> {
    if q == 0 {
        return Err(FcltError::Contract("quadrature needs at least one node".into()));
    }
    let mut jacobi = DMatrix::<f64>::zeros(q, q);
    for k in 1..q {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    // Newton polish on h_q, then Christoffel weights 1 / Σ_{k<q} h_k(x)²
    let weights = nodes
        .iter_mut()
        .map(|x| {
            for _ in 0..3 {
                let h = orthonormal_hermite(q, *x);
                let step = h[q] / ((q as f64).sqrt() * h[q - 1]);
                if !step.is_finite() {
                    break;
                }
                *x -= step;
            }
            let h = orthonormal_hermite(q - 1, *x);
            1.0 / h.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    Ok(QuadratureRule { nodes, weights })
}

/// Orthogonal expansion `Σ c_k P_k` of a functional with `c_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSeries {
    basis: Basis,
    coeffs: Vec<f64>,
    rank: usize,
    /// Value of `c_0` removed when the series was built (0 for explicit coefficients).
    dropped_c0: f64,
    /// Discarded squared L² norm beyond the truncation degree.
    tail_mass: f64,
}

impl FunctionalSeries {
    /// Series from explicit coefficients `c_0..c_K`; `c_0` must be zero.
    pub fn new(basis: Basis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(FcltError::Contract("series needs at least c_0".into()));
        }
        if coeffs.len() > MAX_DEGREE + 1 {
            return Err(FcltError::size_limit(
                format!("series of degree {}", coeffs.len() - 1),
                MAX_DEGREE as u64,
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(FcltError::Numeric("series coefficients must be finite".into()));
        }
        if coeffs[0].abs() > RANK_TOLERANCE {
            return Err(FcltError::Contract(format!(
                "series must be centred (c_0 = 0), got c_0 = {}",
                coeffs[0]
            )));
        }
        let mut coeffs = coeffs;
        coeffs[0] = 0.0;
        let rank = rank_of(&coeffs, RANK_TOLERANCE)?;
        Ok(FunctionalSeries { basis, coeffs, rank, dropped_c0: 0.0, tail_mass: 0.0 })
    }

    /// The single basis polynomial `P_n`.
    pub fn pure(basis: Basis, n: usize) -> Result<Self> {
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        FunctionalSeries::new(basis, c)
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dropped_c0(&self) -> f64 {
        self.dropped_c0
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `Σ c_k² ‖P_k‖²`, the variance of the functional.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * c * self.basis.norm_sq(k))
            .sum()
    }

    /// Evaluates `Σ c_k P_k(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let p = eval_all(self.basis, self.degree(), x).expect("degree checked at construction");
        p.iter().zip(&self.coeffs).map(|(p, c)| p * c).sum()
    }
}

fn rank_of(coeffs: &[f64], tol: f64) -> Result<usize> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, c)| c.abs() > tol)
        .map(|(k, _)| k)
        .ok_or_else(|| {
            FcltError::Degenerate("every coefficient c_k, k ≥ 1, is below tolerance".into())
        })
}

/// Smallest `k ≥ 1` with `|c_k| > tol`.
pub fn rank(coeffs: &[f64], tol: f64) -> Result<usize> {
    rank_of(coeffs, tol)
}

/// Expands `f` in the basis up to `max_deg` by Gaussian quadrature with
/// `quad_order` nodes. `c_0` is removed and reported in `dropped_c0`.
pub fn expand(
    f: impl Fn(f64) -> f64,
    basis: Basis,
    max_deg: usize,
    quad_order: usize,
) -> Result<FunctionalSeries> {
    check_degree(max_deg)?;
    if quad_order < 2 * max_deg + 1 {
        return Err(FcltError::Contract(format!(
            "quad_order {quad_order} < 2·max_deg + 1 = {}",
            2 * max_deg + 1
        )));
    }
    let rule = QuadratureRule::for_basis(basis, quad_order)?;
    let mut acc = vec![0.0; max_deg + 1];
    let mut norm_sq = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let fx = f(x);
        if !fx.is_finite() {
            return Err(FcltError::Numeric(format!("f({x}) is not finite")));
        }
        norm_sq += w * fx * fx;
        let p = eval_all(basis, max_deg, x)?;
        for (a, pk) in acc.iter_mut().zip(&p) {
            *a += w * fx * pk;
        }
    }
    let coeffs: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, a)| a / basis.norm_sq(k))
        .collect();
    let kept: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c * c * basis.norm_sq(k))
        .sum();
    let dropped_c0 = coeffs[0];
    let mut centred = coeffs;
    centred[0] = 0.0;
    let rank = rank_of(&centred, RANK_TOLERANCE)?;
    Ok(FunctionalSeries {
        basis,
        coeffs: centred,
        rank,
        dropped_c0,
        tail_mass: (norm_sq - kept).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_values() {
        assert_eq!(hermite_eval(2, 3.0).unwrap(), 8.0);
        for x in [-2.0, 0.0, 0.7, 5.0] {
            assert_eq!(hermite_eval(0, x).unwrap(), 1.0);
            assert_abs_diff_eq!(hermite_eval(3, x).unwrap(), x * x * x - 3.0 * x, epsilon = 1e-12);
        }
        assert!(matches!(hermite_eval(61, 0.0), Err(FcltError::SizeLimit { .. })));
    }

    #[test]
    fn chebyshev_values() {
        assert_eq!(chebyshev_eval(2, 2.0).unwrap(), 3.0);
        assert_eq!(chebyshev_eval(3, 1.0).unwrap(), -1.0);
        assert!(chebyshev_eval(61, 0.0).is_err());
    }

    #[test]
    fn chebyshev_crude_bound_on_interval() {
        for n in 0..=30usize {
            let bound = (n + 1) as f64 * 2f64.powi(n as i32);
            for i in 0..=200 {
                let x = -2.0 + 4.0 * i as f64 / 200.0;
                assert!(chebyshev_eval(n, x).unwrap().abs() <= bound);
            }
        }
    }

    #[test]
    fn hermite_norm_two_by_quadrature() {
        let rule = gauss_hermite(20).unwrap();
        let v = rule.integrate(|x| hermite_eval(2, x).unwrap().powi(2));
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn gram_matrices_up_to_degree_eight() {
        for basis in [Basis::Hermite, Basis::Chebyshev] {
            let rule = QuadratureRule::for_basis(basis, 20).unwrap();
            for n in 0..=8 {
                for m in 0..=8 {
                    let g = rule.integrate(|x| {
                        basis.eval(n, x).unwrap() * basis.eval(m, x).unwrap()
                    });
                    let want = if n == m { basis.norm_sq(n) } else { 0.0 };
                    assert_abs_diff_eq!(g, want, epsilon = 1e-10 * want.max(1.0));
                }
            }
        }
    }

    #[test]
    fn expand_square_in_both_bases() {
        for basis in [Basis::Chebyshev, Basis::Hermite] {
            let s = expand(|x| x * x, basis, 6, 13).unwrap();
            assert_abs_diff_eq!(s.dropped_c0(), 1.0, epsilon = 1e-10);
            for (k, c) in s.coeffs().iter().enumerate() {
                let want = if k == 2 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(*c, want, epsilon = 1e-10);
            }
            assert_eq!(s.rank(), 2);
            assert_abs_diff_eq!(s.tail_mass(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn expand_recovers_chebyshev_combination() {
        let f = |x: f64| chebyshev_eval(3, x).unwrap() + 0.5 * chebyshev_eval(5, x).unwrap();
        let s = expand(f, Basis::Chebyshev, 5, 11).unwrap();
        let want = [0.0, 0.0, 0.0, 1.0, 0.0, 0.5];
        for (c, w) in s.coeffs().iter().zip(want) {
            assert_abs_diff_eq!(*c, w, epsilon = 1e-10);
        }
    }

    #[test]
    fn expand_reports_tail_mass_of_nonpolynomial() {
        let s = expand(|x| x.clamp(-1.0, 1.0), Basis::Chebyshev, 3, 64).unwrap();
        assert!(s.tail_mass() > 0.0);
        assert_eq!(s.rank(), 1);
    }

    #[test]
    fn expand_rejects_small_rule_and_nonfinite_values() {
        assert!(matches!(expand(|x| x, Basis::Hermite, 4, 8), Err(FcltError::Contract(_))));
        assert!(matches!(
            expand(|x| if x.abs() < 1e-9 { f64::NAN } else { x }, Basis::Chebyshev, 2, 5),
            Err(FcltError::Numeric(_))
        ));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&[0.0, 0.0, 1.0], RANK_TOLERANCE).unwrap(), 2);
        assert_eq!(rank(&[0.0, 1e-14, 1.0], 1e-12).unwrap(), 2);
        assert_eq!(rank(&[0.0, 0.3, 0.0, 0.7], RANK_TOLERANCE).unwrap(), 1);
        assert!(matches!(rank(&[0.0, 1e-13], 1e-12), Err(FcltError::Degenerate(_))));
    }

    #[test]
    fn series_requires_centred_coefficients() {
        assert!(FunctionalSeries::new(Basis::Hermite, vec![1.0, 1.0]).is_err());
        assert!(FunctionalSeries::new(Basis::Hermite, vec![0.0, 0.0]).is_err());
        let s = FunctionalSeries::new(Basis::Hermite, vec![0.0, 1.0, 0.5]).unwrap();
        assert_abs_diff_eq!(s.l2_norm_sq(), 1.0 + 0.25 * 2.0);
        assert_abs_diff_eq!(s.eval(2.0), 2.0 + 0.5 * 3.0);
    }
}
