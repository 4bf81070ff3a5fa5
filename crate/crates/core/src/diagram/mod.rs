//! Exact joint cumulants of Hermite/Chebyshev functionals through the
//! classical and free diagram formulas, and the cumulants `κ_R(S_N)` of the
//! partial sums `S_N = Σ_{t=1}^N F(X_t)`.
//!
//! A pair diagram contributes `Π_{blocks} r(t_i - t_j)` where the block's two
//! elements sit in rows `i` and `j`. Classical cumulants sum over the
//! inhomogeneous connected pairings of the row table, free cumulants over the
//! non-crossing, non-homogeneous, connected ones.

mod jn;
pub mod oracle;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::covariance::{functional_covariance, sigma_squared, CovarianceModel, World};
use crate::error::{FcltError, Result};
use crate::numeric::{tree_sum, Budget};
use crate::orthopoly::{Basis, FunctionalSeries};
use crate::partitions::{
    edge_matrix, enumerate_classical_diagrams_capped, enumerate_free_diagrams_capped, EdgeMatrix,
    Partition, RowTable, DEFAULT_PAIRING_CAP,
};

pub use jn::{j_n, strategy_cost, JnStrategy, MAX_JN_ROWS};
pub use oracle::{oracle_cumulant, ORACLE_MAX_DEGREE};

/// Tail tolerance used for the σ² reference column of a scan.
const SCAN_SIGMA_TOL: f64 = 1e-10;

/// Maximum cumulant order accepted by [`Engine::kappa_r_sn`].
pub const MAX_KAPPA_ORDER: usize = MAX_JN_ROWS;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantRequest {
    pub degrees: Vec<usize>,
    pub times: Vec<i64>,
    pub world: World,
    pub model: CovarianceModel,
}

impl CumulantRequest {
    pub fn new(degrees: Vec<usize>, times: Vec<i64>, world: World, model: CovarianceModel) -> Result<Self> {
        let req = CumulantRequest { degrees, times, world, model };
        req.validate()?;
        Ok(req)
    }

    fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() {
            return Err(FcltError::Contract("cumulant request needs at least one slot".into()));
        }
        if self.degrees.len() != self.times.len() {
            return Err(FcltError::Contract(format!(
                "{} degrees but {} times",
                self.degrees.len(),
                self.times.len()
            )));
        }
        if self.degrees.contains(&0) {
            return Err(FcltError::Contract("slot degrees must be ≥ 1".into()));
        }
        Ok(())
    }

    fn total(&self) -> usize {
        self.degrees.iter().sum()
    }
}

/// The basis each world's orthogonal functionals live in.
pub fn basis_for(world: World) -> Basis {
    match world {
        World::Classical => Basis::Hermite,
        World::Free => Basis::Chebyshev,
    }
}

pub fn world_for(basis: Basis) -> World {
    match basis {
        Basis::Hermite => World::Classical,
        Basis::Chebyshev => World::Free,
    }
}

fn check_pairing(s: &FunctionalSeries, world: World) -> Result<()> {
    if basis_for(world) != s.basis() {
        return Err(FcltError::Contract(format!(
            "{:?} series cannot be used in the {:?} world",
            s.basis(),
            world
        )));
    }
    Ok(())
}

type DiagramKey = (Vec<usize>, World, bool);

/// Diagram sets and their edge-matrix classes, cached by row sizes and world.
///
/// Partitions do not depend on times or the model, so one engine can serve
/// many requests.
#[derive(Debug)]
pub struct Engine {
    budget: Budget,
    cap: usize,
    strategy: JnStrategy,
    diagrams: Mutex<HashMap<DiagramKey, Arc<Vec<Partition>>>>,
    classes: Mutex<HashMap<(Vec<usize>, World), Arc<Vec<(EdgeMatrix, u64)>>>>,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(Budget::default())
    }
}

impl Engine {
    pub fn new(budget: Budget) -> Self {
        Engine {
            budget,
            cap: DEFAULT_PAIRING_CAP,
            strategy: JnStrategy::Auto,
            diagrams: Mutex::new(HashMap::new()),
            classes: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_strategy(mut self, strategy: JnStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    /// Connected diagrams (Γ for classical, Γ″ for free) or, with
    /// `connected_only = false` in the free world, Γ′.
    pub fn diagrams(&self, rows: &[usize], world: World, connected_only: bool) -> Result<Arc<Vec<Partition>>> {
        let key = (rows.to_vec(), world, connected_only);
        if let Some(d) = self.diagrams.lock().unwrap().get(&key) {
            return Ok(d.clone());
        }
        let table = RowTable::new(rows.to_vec())?;
        let list = match (world, connected_only) {
            (World::Classical, true) => enumerate_classical_diagrams_capped(&table, self.cap)?,
            (World::Free, c) => enumerate_free_diagrams_capped(&table, c, self.cap)?,
            (World::Classical, false) => {
                return Err(FcltError::Contract(
                    "non-connected classical diagrams are only available through the oracle".into(),
                ))
            }
        };
        let list = Arc::new(list);
        self.diagrams.lock().unwrap().insert(key, list.clone());
        Ok(list)
    }

    /// Connected diagrams grouped by the isomorphism class of their edge matrix.
    pub fn edge_classes(&self, rows: &[usize], world: World) -> Result<Arc<Vec<(EdgeMatrix, u64)>>> {
        let key = (rows.to_vec(), world);
        if let Some(c) = self.classes.lock().unwrap().get(&key) {
            return Ok(c.clone());
        }
        let table = RowTable::new(rows.to_vec())?;
        let mut counts: HashMap<EdgeMatrix, u64> = HashMap::new();
        for p in self.diagrams(rows, world, true)?.iter() {
            *counts.entry(edge_matrix(p, &table)?.canonical()).or_default() += 1;
        }
        let mut classes: Vec<(EdgeMatrix, u64)> = counts.into_iter().collect();
        classes.sort();
        let classes = Arc::new(classes);
        self.classes.lock().unwrap().insert(key, classes.clone());
        Ok(classes)
    }

    fn diagram_sum(&self, req: &CumulantRequest, connected_only: bool) -> Result<f64> {
        req.validate()?;
        if req.total() % 2 == 1 {
            return Ok(0.0);
        }
        let table = RowTable::new(req.degrees.clone())?;
        let diagrams = self.diagrams(&req.degrees, req.world, connected_only)?;
        let terms: Vec<f64> = diagrams
            .iter()
            .map(|p| {
                p.blocks()
                    .iter()
                    .map(|b| {
                        let (i, j) = (table.row_of(b[0]), table.row_of(b[1]));
                        req.model.r(req.times[i] - req.times[j])
                    })
                    .product()
            })
            .collect();
        Ok(tree_sum(&terms))
    }

    /// Joint cumulant of `P_{n_1}(X_{t_1}), …, P_{n_k}(X_{t_k})`, with `P = H`
    /// (classical) or `P = U` (free).
    pub fn joint_cumulant(&self, req: &CumulantRequest) -> Result<f64> {
        self.diagram_sum(req, true)
    }

    /// Free joint moment: the same sum over all non-crossing non-homogeneous pairings.
    pub fn joint_moment_free(&self, degrees: &[usize], times: &[i64], model: &CovarianceModel) -> Result<f64> {
        let req = CumulantRequest {
            degrees: degrees.to_vec(),
            times: times.to_vec(),
            world: World::Free,
            model: model.clone(),
        };
        self.diagram_sum(&req, false)
    }

    /// Raw cumulant `κ_R(S_N)` of `S_N = Σ_{t=1}^N F(X_t)`, by multilinearity
    /// over degree tuples and `J_N` over each diagram's edge matrix.
    pub fn kappa_r_sn(
        &self,
        s: &FunctionalSeries,
        m: &CovarianceModel,
        n: usize,
        r: usize,
        world: World,
    ) -> Result<f64> {
        check_pairing(s, world)?;
        if r < 2 {
            return Err(FcltError::Contract("cumulant order R must be ≥ 2".into()));
        }
        if r > MAX_KAPPA_ORDER {
            return Err(FcltError::size_limit(format!("cumulant order R = {r}"), MAX_KAPPA_ORDER as u64));
        }
        let support: Vec<(usize, f64)> = s
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(k, c)| *k >= 1 && **c != 0.0)
            .map(|(k, &c)| (k, c))
            .collect();

        let mut jn_cache: HashMap<EdgeMatrix, f64> = HashMap::new();
        let mut terms = Vec::new();
        let mut tuple = vec![0usize; r];
        let mut visit = |tuple: &[usize]| -> Result<()> {
            let degrees: Vec<usize> = tuple.iter().map(|&i| support[i].0).collect();
            if degrees.iter().sum::<usize>() % 2 == 1 {
                return Ok(());
            }
            let weight: f64 = tuple.iter().map(|&i| support[i].1).product();
            let classes = self.edge_classes(&degrees, world)?;
            let mut inner = Vec::with_capacity(classes.len());
            for (l, count) in classes.iter() {
                let v = match jn_cache.get(l) {
                    Some(&v) => v,
                    None => {
                        let v = j_n(l, n, m, self.strategy, self.budget)?;
                        jn_cache.insert(l.clone(), v);
                        v
                    }
                };
                inner.push(*count as f64 * v);
            }
            terms.push(weight * tree_sum(&inner));
            Ok(())
        };
        // odometer over ordered tuples of support indices
        if support.is_empty() {
            return Ok(0.0);
        }
        loop {
            visit(&tuple)?;
            let mut pos = 0;
            loop {
                if pos == r {
                    return Ok(tree_sum(&terms));
                }
                tuple[pos] += 1;
                if tuple[pos] < support.len() {
                    break;
                }
                tuple[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Scans `κ_R(N^{-1/2} S_N)` for `R = 2..=r_max` over the given `N`.
    pub fn scan(
        &self,
        s: &FunctionalSeries,
        m: &CovarianceModel,
        n_values: &[usize],
        r_max: usize,
        world: World,
    ) -> Result<CumulantScan> {
        check_pairing(s, world)?;
        if r_max < 2 {
            return Err(FcltError::Contract("R_max must be ≥ 2".into()));
        }
        let sigma = sigma_squared(s, m, SCAN_SIGMA_TOL)?;
        if sigma.degenerate {
            return Err(FcltError::Hypothesis(format!(
                "σ² = {:e} vanishes; the limit theorem requires σ² ≠ 0",
                sigma.value
            )));
        }
        let mut table = Vec::with_capacity(n_values.len());
        for &n in n_values {
            let mut row = Vec::with_capacity(r_max - 1);
            for r in 2..=r_max {
                row.push(self.kappa_r_sn(s, m, n, r, world)?);
            }
            table.push(row);
        }
        Ok(CumulantScan {
            schema: 1,
            n_values: n_values.to_vec(),
            r_max,
            world,
            sigma2_ref: sigma.value,
            table,
        })
    }
}

/// `κ_2(S_N) = N Σ_{|t|≤N} ρ(t) - 2 Σ_{t=1}^N t ρ(t)` with `ρ` the functional covariance.
pub fn kappa2_sn_closed(s: &FunctionalSeries, m: &CovarianceModel, n: usize, world: World) -> Result<f64> {
    check_pairing(s, world)?;
    let n_i = n as i64;
    let window: Vec<f64> = (-n_i..=n_i).map(|t| functional_covariance(s, m, t)).collect();
    let weighted: Vec<f64> = (1..=n_i).map(|t| t as f64 * functional_covariance(s, m, t)).collect();
    Ok(n as f64 * tree_sum(&window) - 2.0 * tree_sum(&weighted))
}

pub fn joint_cumulant(req: &CumulantRequest) -> Result<f64> {
    Engine::default().joint_cumulant(req)
}

pub fn joint_moment_free(degrees: &[usize], times: &[i64], model: &CovarianceModel) -> Result<f64> {
    Engine::default().joint_moment_free(degrees, times, model)
}

pub fn kappa_r_sn(s: &FunctionalSeries, m: &CovarianceModel, n: usize, r: usize, world: World) -> Result<f64> {
    Engine::new(Budget::from_env()).kappa_r_sn(s, m, n, r, world)
}

/// Raw cumulants `κ_R(S_N)` for `R = 2..=r_max`, row per `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantScan {
    pub schema: u32,
    pub n_values: Vec<usize>,
    pub r_max: usize,
    pub world: World,
    pub sigma2_ref: f64,
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub kappa_raw: f64,
    pub kappa_normalized: f64,
    pub sigma2_ref: f64,
}

impl CumulantScan {
    pub fn raw(&self, n: usize, r: usize) -> Option<f64> {
        let i = self.n_values.iter().position(|&x| x == n)?;
        self.table[i].get(r.checked_sub(2)?).copied()
    }

    /// `κ_R(N^{-1/2} S_N) = κ_R(S_N) / N^{R/2}`.
    pub fn normalized(&self, n: usize, r: usize) -> Option<f64> {
        self.raw(n, r).map(|k| k / (n as f64).powf(r as f64 / 2.0))
    }

    pub fn rows(&self) -> Vec<ScanRow> {
        let mut out = Vec::new();
        for (i, &n) in self.n_values.iter().enumerate() {
            for (j, &k) in self.table[i].iter().enumerate() {
                let r = j + 2;
                out.push(ScanRow {
                    n,
                    r,
                    kappa_raw: k,
                    kappa_normalized: k / (n as f64).powf(r as f64 / 2.0),
                    sigma2_ref: self.sigma2_ref,
                });
            }
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in self.rows() {
            wr.serialize(row).map_err(|e| FcltError::Config(format!("CSV output: {e}")))?;
        }
        wr.flush().map_err(|e| FcltError::Config(format!("CSV output: {e}")))?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": self.schema,
            "world": self.world,
            "N": self.n_values,
            "R_max": self.r_max,
            "sigma2_ref": self.sigma2_ref,
            "rows": self.rows(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geo() -> CovarianceModel {
        CovarianceModel::geometric(0.5).unwrap()
    }

    fn req(deg: &[usize], times: &[i64], world: World) -> CumulantRequest {
        CumulantRequest::new(deg.to_vec(), times.to_vec(), world, geo()).unwrap()
    }

    #[test]
    fn orthogonality_cumulants() {
        for t in 0..=5 {
            let r = 0.5f64.powi(t as i32);
            let c = joint_cumulant(&req(&[2, 2], &[0, t], World::Classical)).unwrap();
            let f = joint_cumulant(&req(&[2, 2], &[0, t], World::Free)).unwrap();
            assert!((c - 2.0 * r * r).abs() <= 1e-12);
            assert!((f - r * r).abs() <= 1e-12);
        }
    }

    #[test]
    fn free_triangle_cumulant() {
        let v = joint_cumulant(&req(&[2, 2, 2], &[0, 1, 3], World::Free)).unwrap();
        assert_relative_eq!(v, 0.5 * 0.25 * 0.125, max_relative = 1e-15);
    }

    #[test]
    fn free_moments() {
        let m = geo();
        for n in 1..=5 {
            let v = joint_moment_free(&[n, n], &[0, 2], &m).unwrap();
            assert_relative_eq!(v, 0.25f64.powi(n as i32), max_relative = 1e-14);
        }
        assert_eq!(joint_moment_free(&[2, 4], &[0, 1], &m).unwrap(), 0.0);
        assert_eq!(joint_moment_free(&[1, 1, 1, 1], &[0, 0, 0, 0], &m).unwrap(), 2.0);
    }

    #[test]
    fn odd_total_is_zero() {
        assert_eq!(joint_cumulant(&req(&[1, 2], &[0, 1], World::Classical)).unwrap(), 0.0);
        let s = FunctionalSeries::pure(Basis::Chebyshev, 1).unwrap();
        assert_eq!(kappa_r_sn(&s, &geo(), 20, 3, World::Free).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_world_is_rejected() {
        let s = FunctionalSeries::pure(Basis::Hermite, 2).unwrap();
        assert!(matches!(kappa_r_sn(&s, &geo(), 4, 2, World::Free), Err(FcltError::Contract(_))));
    }

    #[test]
    fn kappa2_closed_matches_double_sum() {
        let s = FunctionalSeries::pure(Basis::Chebyshev, 2).unwrap();
        let m = geo();
        let mut direct = 0.0;
        for i in 1..=10i64 {
            for j in 1..=10i64 {
                direct += functional_covariance(&s, &m, i - j);
            }
        }
        let closed = kappa2_sn_closed(&s, &m, 10, World::Free).unwrap();
        assert_relative_eq!(closed, direct, max_relative = 1e-13);
        let engine = kappa_r_sn(&s, &m, 10, 2, World::Free).unwrap();
        assert_relative_eq!(engine, direct, max_relative = 1e-13);
        assert_relative_eq!(kappa2_sn_closed(&s, &m, 1, World::Free).unwrap(), 1.0);
    }

    #[test]
    fn white_noise_variance_is_n() {
        let s = FunctionalSeries::pure(Basis::Hermite, 1).unwrap();
        let m = CovarianceModel::white_noise();
        for n in [1, 7, 40] {
            assert_relative_eq!(kappa2_sn_closed(&s, &m, n, World::Classical).unwrap(), n as f64);
        }
    }

    #[test]
    fn scan_shapes_and_csv() {
        let s = FunctionalSeries::pure(Basis::Chebyshev, 2).unwrap();
        let scan = Engine::default().scan(&s, &geo(), &[8, 16], 4, World::Free).unwrap();
        assert_eq!(scan.table.len(), 2);
        assert!(scan.table.iter().all(|r| r.len() == 3 && r.iter().all(|v| v.is_finite())));
        let mut buf = Vec::new();
        scan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("N,R,kappa_raw,kappa_normalized,sigma2_ref\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
