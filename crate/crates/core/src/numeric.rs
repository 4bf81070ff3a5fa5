//! Small numeric helpers shared across modules.

/// Pairwise (tree) summation. Error grows like O(log n) instead of O(n).
pub fn tree_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    tree_sum(&xs[..mid]) + tree_sum(&xs[mid..])
}

/// `(2n-1)!!`, the number of perfect matchings of `2n` points.
pub fn double_factorial_odd(n: u32) -> u64 {
    (1..=n as u64).map(|i| 2 * i - 1).product()
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Evaluation budget for the k-fold time sums. `FREECLT_BUDGET` overrides the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_evaluations: u64,
}

impl Budget {
    pub const DEFAULT: u64 = 1_000_000_000;
    pub const ENV_VAR: &'static str = "FREECLT_BUDGET";

    pub fn new(max_evaluations: u64) -> Self {
        Budget { max_evaluations }
    }

    pub fn from_env() -> Self {
        let max = std::env::var(Self::ENV_VAR)
            .ok()
            .and_then(|v| v.trim().replace('_', "").parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v >= 1.0)
            .map(|v| v as u64)
            .unwrap_or(Self::DEFAULT);
        Budget::new(max)
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::new(Self::DEFAULT)
    }
}
