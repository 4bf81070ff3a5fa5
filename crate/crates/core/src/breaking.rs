//! Optimal breaking of the row/subset graph of a partition, the threshold
//! conditions on the costs `z_k = 1 - 1/p_k`, and spectral cumulant
//! functions of linear processes.
//!
//! `C(G ∖ A)` counts every vertex, isolated ones included, as a component.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::diagram::{j_n, JnStrategy};
use crate::error::{FcltError, Result};
use crate::numeric::{tree_sum, Budget};
use crate::partitions::{EdgeMatrix, Partition, RowTable, UnionFind};

/// Largest edge count searched exhaustively by [`alpha_g`].
pub const MAX_ALPHA_EDGES: usize = 24;

/// Slack allowed when comparing a cost with a threshold.
const THRESHOLD_SLACK: f64 = 1e-12;

/// Norm index `p_k ∈ [1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PValue {
    Finite(f64),
    Infinite,
}

impl PValue {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(FcltError::Config(format!("p must lie in [1, ∞], got {p}")));
        }
        Ok(if p.is_infinite() { PValue::Infinite } else { PValue::Finite(p) })
    }

    /// Edge cost `z = 1 - 1/p`; exactly 1 for `p = ∞`.
    pub fn cost(self) -> f64 {
        match self {
            PValue::Finite(p) => 1.0 - 1.0 / p,
            PValue::Infinite => 1.0,
        }
    }
}

impl FromStr for PValue {
    type Err = FcltError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(PValue::Infinite);
        }
        let p: f64 = s.parse().map_err(|_| FcltError::Config(format!("bad p value '{s}'")))?;
        PValue::finite(p)
    }
}

impl Serialize for PValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PValue::Finite(p) => s.serialize_f64(*p),
            PValue::Infinite => s.serialize_str("inf"),
        }
    }
}

/// Parses `"2:inf,3:4"` into a map from block size to `p_k`.
pub fn parse_p_values(spec: &str) -> Result<BTreeMap<usize, PValue>> {
    let mut out = BTreeMap::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, p) = item
            .split_once(':')
            .ok_or_else(|| FcltError::Config(format!("expected k:p, got '{item}'")))?;
        let k: usize = k.trim().parse().map_err(|_| FcltError::Config(format!("bad block size '{k}'")))?;
        out.insert(k, p.parse()?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakingEdge {
    pub row: usize,
    pub subset: usize,
    pub cost: f64,
}

/// Bipartite graph with one vertex per row, one per block, and one edge per
/// table element joining its row to its block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakingGraph {
    pub rows: usize,
    pub subsets: usize,
    pub edges: Vec<BreakingEdge>,
}

pub fn build_breaking_graph(
    t: &RowTable,
    p: &Partition,
    p_values: &BTreeMap<usize, PValue>,
) -> Result<BreakingGraph> {
    if p.size() != t.total() {
        return Err(FcltError::Contract(format!(
            "partition of {} elements does not match a table of {}",
            p.size(),
            t.total()
        )));
    }
    let mut edges = Vec::with_capacity(t.total());
    for (b, block) in p.blocks().iter().enumerate() {
        let pv = p_values.get(&block.len()).ok_or_else(|| {
            FcltError::Config(format!("no p value given for blocks of size {}", block.len()))
        })?;
        for &e in block {
            edges.push(BreakingEdge { row: t.row_of(e), subset: b, cost: pv.cost() });
        }
    }
    edges.sort_by_key(|e| (e.row, e.subset));
    Ok(BreakingGraph { rows: t.rows(), subsets: p.blocks().len(), edges })
}

impl BreakingGraph {
    /// Components after removing the edges whose bits are set in `removed`.
    pub fn components(&self, removed: u64) -> usize {
        let mut uf = UnionFind::new(self.rows + self.subsets);
        for (i, e) in self.edges.iter().enumerate() {
            if removed >> i & 1 == 0 {
                uf.union(e.row, self.rows + e.subset);
            }
        }
        uf.components()
    }

    /// Breaking profit `α(A) = C(G ∖ A) - Σ_{e∈A} z_e`.
    pub fn profit(&self, removed: u64) -> f64 {
        let cost: f64 = self
            .edges
            .iter()
            .enumerate()
            .filter(|(i, _)| removed >> i & 1 == 1)
            .map(|(_, e)| e.cost)
            .sum();
        self.components(removed) as f64 - cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaResult {
    pub value: f64,
    /// Indices into `edges` of one maximizing removal set.
    pub witness: Vec<usize>,
}

/// `α_G = max_A α(A)` by exhaustive search; ties go to the smallest bit mask.
pub fn alpha_g(g: &BreakingGraph) -> Result<AlphaResult> {
    let e = g.edges.len();
    if e > MAX_ALPHA_EDGES {
        return Err(FcltError::size_limit(
            format!("exhaustive α_G over {e} edges"),
            MAX_ALPHA_EDGES as u64,
        ));
    }
    let total = 1u64 << e;
    let chunk = 1u64 << e.min(12);
    let better = |a: (f64, u64), b: (f64, u64)| if b.0 > a.0 { b } else { a };
    let best = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            (c * chunk..((c + 1) * chunk).min(total))
                .map(|mask| (g.profit(mask), mask))
                .fold((f64::NEG_INFINITY, 0), better)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::NEG_INFINITY, 0), better);
    Ok(AlphaResult {
        value: best.0,
        witness: (0..e).filter(|i| best.1 >> i & 1 == 1).collect(),
    })
}

/// Branch of the threshold condition selected by `(m, k)`: 1, 2 or 3.
///
/// At `k = m + 1` the first two branches coincide in value; branch 2 is
/// reported there.
pub fn threshold_case(m: usize, k: usize) -> u8 {
    if m + 1 <= k && k < 2 * m {
        2
    } else if k * (k - 1) > 2 * m && k <= m + 1 {
        1
    } else {
        3
    }
}

/// Smallest cost `z_k` the threshold condition allows.
pub fn required_cost(m: usize, k: usize) -> f64 {
    let (m, kf) = (m as f64, k as f64);
    match threshold_case(m as usize, k) {
        1 => kf / (2.0 * m),
        2 => kf / (2.0 * m * (kf - m)),
        _ => 1.0 / kf + 1.0 / (2.0 * m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdEntry {
    pub k: usize,
    pub case: u8,
    pub required_z: f64,
    pub p: PValue,
    pub z: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub m: usize,
    pub entries: Vec<ThresholdEntry>,
    pub satisfied: bool,
}

/// Checks `1 - 1/p_k ≥` the required cost for every supplied `k ≥ 2`.
pub fn threshold_check(m: usize, p_values: &BTreeMap<usize, PValue>) -> Result<ThresholdReport> {
    if m == 0 {
        return Err(FcltError::Contract("m must be ≥ 1".into()));
    }
    let entries: Vec<ThresholdEntry> = p_values
        .iter()
        .filter(|(&k, _)| k >= 2)
        .map(|(&k, &p)| {
            let required_z = required_cost(m, k);
            let z = p.cost();
            ThresholdEntry {
                k,
                case: threshold_case(m, k),
                required_z,
                p,
                z,
                satisfied: z >= required_z - THRESHOLD_SLACK,
            }
        })
        .collect();
    if entries.is_empty() {
        return Err(FcltError::Config("no p_k with k ≥ 2 supplied".into()));
    }
    let satisfied = entries.iter().all(|e| e.satisfied);
    Ok(ThresholdReport { m, entries, satisfied })
}

/// `X_j = Σ_r c_{j-r} ξ_r` with i.i.d. `ξ` whose cumulants are `d_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProcessSpec {
    pub c: Vec<f64>,
    pub d: BTreeMap<usize, f64>,
}

impl LinearProcessSpec {
    pub fn new(c: Vec<f64>, d: BTreeMap<usize, f64>) -> Result<Self> {
        if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
            return Err(FcltError::Contract("filter coefficients must be finite and non-empty".into()));
        }
        Ok(LinearProcessSpec { c, d })
    }

    fn d(&self, k: usize) -> Result<f64> {
        self.d
            .get(&k)
            .copied()
            .ok_or_else(|| FcltError::Config(format!("base cumulant d_{k} not supplied")))
    }

    /// `c(x) = Σ_j c_j e^{2πijx}`.
    pub fn transfer(&self, x: f64) -> Complex64 {
        self.c
            .iter()
            .enumerate()
            .map(|(j, &c)| c * Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 * x))
            .sum()
    }

    fn coeff(&self, i: i64) -> f64 {
        usize::try_from(i).ok().and_then(|i| self.c.get(i)).copied().unwrap_or(0.0)
    }
}

/// `f^(k)(x) = d_k c(x_1)…c(x_{k-1}) c(-x_1-…-x_{k-1})`.
pub fn spectral_cumulant_linear(spec: &LinearProcessSpec, k: usize, x: &[f64]) -> Result<Complex64> {
    if k < 2 {
        return Err(FcltError::Contract("spectral cumulants need k ≥ 2".into()));
    }
    if x.len() != k - 1 {
        return Err(FcltError::Contract(format!("f^({k}) takes {} frequencies, got {}", k - 1, x.len())));
    }
    let mut v = Complex64::new(spec.d(k)?, 0.0);
    for &xi in x {
        v *= spec.transfer(xi);
    }
    Ok(v * spec.transfer(-x.iter().sum::<f64>()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    /// Imaginary part of the quadrature, 0 up to round-off.
    pub rhs_imag: f64,
}

/// Compares `cum(X_{j_1},…,X_{j_k}) = d_k Σ_i Π_l c_{j_l - i}` with the
/// uniform-grid quadrature of `∫ f^(k)(x) e^{2πi Σ_l x_l (j_k - j_l)} dx`.
pub fn verify_spectral_representation(
    spec: &LinearProcessSpec,
    k: usize,
    j: &[i64],
    quad_grid: usize,
) -> Result<SpectralCheck> {
    if !(2..=4).contains(&k) {
        return Err(FcltError::Contract(format!("spectral check supports k ∈ {{2,3,4}}, got {k}")));
    }
    if j.len() != k {
        return Err(FcltError::Contract(format!("need {k} time indices, got {}", j.len())));
    }
    if quad_grid == 0 {
        return Err(FcltError::Contract("quadrature grid must be ≥ 1".into()));
    }
    let dk = spec.d(k)?;
    let lo = j.iter().min().unwrap() - spec.c.len() as i64;
    let hi = *j.iter().max().unwrap();
    let lhs = dk * tree_sum(
        &(lo..=hi).map(|i| j.iter().map(|&jl| spec.coeff(jl - i)).product()).collect::<Vec<f64>>(),
    );

    let g = quad_grid;
    let table: Vec<Complex64> = (0..g).map(|a| spec.transfer(a as f64 / g as f64)).collect();
    let shifts: Vec<i64> = j[..k - 1].iter().map(|&jl| j[k - 1] - jl).collect();
    let phase = |a: usize, s: i64| {
        Complex64::from_polar(1.0, std::f64::consts::TAU * (a as i64 * s).rem_euclid(g as i64) as f64 / g as f64)
    };
    let inner_points = g.pow(k as u32 - 2);
    let partial: Vec<(f64, f64)> = (0..g)
        .into_par_iter()
        .map(|a0| {
            let mut re = Vec::with_capacity(inner_points);
            let mut im = Vec::with_capacity(inner_points);
            for idx in 0..inner_points {
                let mut a = vec![a0];
                let mut rest = idx;
                for _ in 1..k - 1 {
                    a.push(rest % g);
                    rest /= g;
                }
                let sum: usize = a.iter().sum();
                let mut v = table[(g - sum % g) % g];
                for (l, &al) in a.iter().enumerate() {
                    v *= table[al] * phase(al, shifts[l]);
                }
                re.push(v.re);
                im.push(v.im);
            }
            (tree_sum(&re), tree_sum(&im))
        })
        .collect();
    let scale = dk / (g as f64).powi(k as i32 - 1);
    let rhs = scale * tree_sum(&partial.iter().map(|p| p.0).collect::<Vec<_>>());
    let rhs_imag = scale * tree_sum(&partial.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(SpectralCheck { lhs, rhs, abs_err: (lhs - rhs).abs(), rhs_imag })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(N, J_N)` pairs behind the fit.
    pub points: Vec<(usize, f64)>,
}

/// Least-squares slope of `log|J_N(l)|` against `log N`.
pub fn jn_log_slope(l: &EdgeMatrix, m: &CovarianceModel, ns: &[usize], budget: Budget) -> Result<SlopeFit> {
    if ns.len() < 2 {
        return Err(FcltError::Contract("slope fit needs at least two N values".into()));
    }
    let points: Vec<(usize, f64)> = ns
        .iter()
        .map(|&n| Ok((n, j_n(l, n, m, JnStrategy::Auto, budget)?)))
        .collect::<Result<_>>()?;
    if points.iter().any(|p| p.1 == 0.0) {
        return Err(FcltError::Numeric("J_N vanished; log-slope undefined".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.abs().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit { slope, intercept: my - slope * mx, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cross_graph(p2: PValue) -> BreakingGraph {
        let t = RowTable::new(vec![2, 2]).unwrap();
        let p = Partition::from_blocks(vec![vec![1, 3], vec![2, 4]]).unwrap();
        build_breaking_graph(&t, &p, &BTreeMap::from([(2, p2)])).unwrap()
    }

    #[test]
    fn graph_shape_and_costs() {
        let g = cross_graph(PValue::Infinite);
        assert_eq!((g.rows, g.subsets, g.edges.len()), (2, 2, 4));
        assert!(g.edges.iter().all(|e| e.cost == 1.0));
        let g = cross_graph(PValue::Finite(2.0));
        assert!(g.edges.iter().all(|e| e.cost == 0.5));
    }

    #[test]
    fn missing_p_is_a_config_error() {
        let t = RowTable::new(vec![2, 2]).unwrap();
        let p = Partition::from_blocks(vec![vec![1, 3], vec![2, 4]]).unwrap();
        let err = build_breaking_graph(&t, &p, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, FcltError::Config(_)));
    }

    #[test]
    fn alpha_examples() {
        let a = alpha_g(&cross_graph(PValue::Infinite)).unwrap();
        assert_eq!(a.value, 1.0);
        assert!(a.witness.is_empty());
        let a = alpha_g(&cross_graph(PValue::Finite(4.0 / 3.0))).unwrap();
        assert!((a.value - 3.0).abs() < 1e-12);
        let single = BreakingGraph {
            rows: 1,
            subsets: 1,
            edges: vec![BreakingEdge { row: 0, subset: 0, cost: 1.0 }],
        };
        assert_eq!(alpha_g(&single).unwrap().value, 1.0);
    }

    #[test]
    fn alpha_cap() {
        let g = BreakingGraph {
            rows: 1,
            subsets: 25,
            edges: (0..25).map(|s| BreakingEdge { row: 0, subset: s, cost: 1.0 }).collect(),
        };
        assert!(matches!(alpha_g(&g), Err(FcltError::SizeLimit { limit: 24, .. })));
    }

    #[test]
    fn threshold_examples() {
        let r = threshold_check(1, &parse_p_values("2:inf").unwrap()).unwrap();
        assert!(r.satisfied);
        assert_eq!(r.entries[0].case, 3);
        assert_eq!(r.entries[0].required_z, 1.0);
        assert!(!threshold_check(1, &parse_p_values("2:1000").unwrap()).unwrap().satisfied);
        assert_eq!(required_cost(2, 2), 0.75);
        assert!(threshold_check(2, &parse_p_values("2:4").unwrap()).unwrap().satisfied);
        assert!(!threshold_check(2, &parse_p_values("2:3.9").unwrap()).unwrap().satisfied);
        assert_eq!(threshold_case(3, 4), 2);
        assert!((required_cost(3, 4) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn p_value_parsing() {
        let p = parse_p_values("2:inf, 3:4").unwrap();
        assert_eq!(p[&2], PValue::Infinite);
        assert_eq!(p[&3], PValue::Finite(4.0));
        assert!(parse_p_values("2:0.5").is_err());
        assert!(parse_p_values("2").is_err());
    }

    #[test]
    fn ma1_spectral_function() {
        let spec = LinearProcessSpec::new(vec![1.0, 1.0], BTreeMap::from([(2, 1.0)])).unwrap();
        for x in [0.0, 0.1, 0.37, 0.5] {
            let f = spectral_cumulant_linear(&spec, 2, &[x]).unwrap();
            assert!((f.re - (2.0 + 2.0 * (std::f64::consts::TAU * x).cos())).abs() < 1e-12);
            assert!(f.im.abs() < 1e-12);
        }
        let c = verify_spectral_representation(&spec, 2, &[0, 1], 256).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-15 && c.abs_err < 1e-8);
        let c = verify_spectral_representation(&spec, 2, &[0, 0], 256).unwrap();
        assert!((c.lhs - 2.0).abs() < 1e-15 && c.abs_err < 1e-8);
    }

    #[test]
    fn third_order_spectral_check() {
        let spec = LinearProcessSpec::new(vec![1.0, 0.5], BTreeMap::from([(3, 2.0)])).unwrap();
        let c = verify_spectral_representation(&spec, 3, &[0, 0, 0], 64).unwrap();
        assert!((c.lhs - 2.25).abs() < 1e-15);
        assert!(c.abs_err < 1e-6);
        let shifted = verify_spectral_representation(&spec, 3, &[5, 5, 5], 64).unwrap();
        assert_eq!(shifted.lhs, c.lhs);
    }
}
