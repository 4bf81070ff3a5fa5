//! The k-fold time sum `J_N(l) = Σ_{t ∈ [1,N]^k} Π_{i<j} r(t_i - t_j)^{l_ij}`.
//!
//! Three exact evaluation routes:
//! * `Direct`: the N^k loop, depth-first with subtree skipping once the
//!   partial product underflows below 1e-300;
//! * `Translation`: sums over the differences `s_i = t_i - t_k` with
//!   multiplicity `N - range(s)`, (2N-1)^{k-1} terms;
//! * `Elimination`: variable elimination on the edge graph, where each
//!   eliminated row costs N^{1 + |neighbours|}. Cycles cost O(N³), trees O(N²).
//!
//! `Auto` picks the cheapest feasible route. All routes parallelise over the
//! outermost index with an ordered collect, so the result does not depend on
//! the number of worker threads.

use rayon::prelude::*;

use crate::covariance::CovarianceModel;
use crate::error::{FcltError, Result};
use crate::numeric::{tree_sum, Budget};
use crate::partitions::EdgeMatrix;

/// Largest number of rows accepted by `J_N`.
pub const MAX_JN_ROWS: usize = 6;

/// Entries a single intermediate elimination factor may hold.
const MAX_FACTOR_ENTRIES: u64 = 1 << 25;

const UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JnStrategy {
    #[default]
    Auto,
    Direct,
    Translation,
    Elimination,
}

fn validate(l: &EdgeMatrix, n: usize) -> Result<()> {
    let k = l.dim();
    if k > MAX_JN_ROWS {
        return Err(FcltError::size_limit(format!("J_N over {k} rows"), MAX_JN_ROWS as u64));
    }
    if n == 0 {
        return Err(FcltError::Contract("J_N needs N ≥ 1".into()));
    }
    if let Some(i) = (0..k).find(|&i| l.row_sum(i) == 0) {
        return Err(FcltError::Contract(format!(
            "row {} of the edge matrix has no edges; row sums must equal the row sizes n_i > 0",
            i + 1
        )));
    }
    Ok(())
}

/// `pow[e][d] = r(d)^{l_e}` for each edge `e` and lag `d ∈ 0..n`.
fn power_tables(edges: &[(usize, usize, u32)], n: usize, m: &CovarianceModel) -> Vec<Vec<f64>> {
    let base: Vec<f64> = (0..n as i64).map(|d| m.r(d)).collect();
    edges
        .iter()
        .map(|&(_, _, l)| base.iter().map(|r| r.powi(l as i32)).collect())
        .collect()
}

/// Cost (number of elementary evaluations) of each route; `None` if infeasible.
pub fn strategy_cost(l: &EdgeMatrix, n: usize, strategy: JnStrategy) -> Option<u64> {
    let k = l.dim() as u32;
    let n64 = n as u64;
    match strategy {
        JnStrategy::Direct => n64.checked_pow(k),
        JnStrategy::Translation => (2 * n64 - 1).checked_pow(k - 1),
        JnStrategy::Elimination => elimination_plan(l)
            .ok()
            .and_then(|plan| plan.cost(n64)),
        JnStrategy::Auto => [JnStrategy::Elimination, JnStrategy::Translation, JnStrategy::Direct]
            .into_iter()
            .filter_map(|s| strategy_cost(l, n, s))
            .min(),
    }
}

fn resolve(l: &EdgeMatrix, n: usize, strategy: JnStrategy) -> (JnStrategy, Option<u64>) {
    match strategy {
        JnStrategy::Auto => {
            let mut best = (JnStrategy::Direct, strategy_cost(l, n, JnStrategy::Direct));
            for s in [JnStrategy::Translation, JnStrategy::Elimination] {
                let c = strategy_cost(l, n, s);
                if let Some(c) = c {
                    if best.1.is_none_or(|b| c < b) {
                        best = (s, Some(c));
                    }
                }
            }
            best
        }
        s => (s, strategy_cost(l, n, s)),
    }
}

/// `J_N(l)` by the chosen route, refusing work beyond `budget`.
pub fn j_n(
    l: &EdgeMatrix,
    n: usize,
    m: &CovarianceModel,
    strategy: JnStrategy,
    budget: Budget,
) -> Result<f64> {
    validate(l, n)?;
    let (route, cost) = resolve(l, n, strategy);
    match cost {
        Some(c) if c <= budget.max_evaluations => {}
        _ => {
            return Err(FcltError::size_limit(
                format!(
                    "J_N with k = {} rows at N = {n} ({route:?} route needs {} evaluations); \
                     reduce N or the number of rows",
                    l.dim(),
                    cost.map_or("more than 2^64".to_string(), |c| c.to_string())
                ),
                budget.max_evaluations,
            ))
        }
    }
    Ok(match route {
        JnStrategy::Direct | JnStrategy::Auto => direct(l, n, m),
        JnStrategy::Translation => translation(l, n, m),
        JnStrategy::Elimination => elimination(l, n, m)?,
    })
}

fn direct(l: &EdgeMatrix, n: usize, m: &CovarianceModel) -> f64 {
    let k = l.dim();
    let edges = l.edges();
    let pow = power_tables(&edges, n, m);
    // edges grouped by their later endpoint, so a product can be extended row by row
    let mut closing: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
    for (e, &(i, j, _)) in edges.iter().enumerate() {
        closing[j].push((e, i));
    }

    fn rec(
        depth: usize,
        partial: f64,
        t: &mut [usize],
        closing: &[Vec<(usize, usize)>],
        pow: &[Vec<f64>],
        n: usize,
    ) -> f64 {
        if depth == t.len() {
            return partial;
        }
        let mut terms = Vec::with_capacity(n);
        for v in 0..n {
            t[depth] = v;
            let mut p = partial;
            for &(e, i) in &closing[depth] {
                p *= pow[e][t[i].abs_diff(v)];
            }
            if p.abs() < UNDERFLOW {
                continue;
            }
            terms.push(rec(depth + 1, p, t, closing, pow, n));
        }
        tree_sum(&terms)
    }

    let outer: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut t = vec![0usize; k];
            t[0] = v;
            rec(1, 1.0, &mut t, &closing, &pow, n)
        })
        .collect();
    tree_sum(&outer)
}

fn translation(l: &EdgeMatrix, n: usize, m: &CovarianceModel) -> f64 {
    let k = l.dim();
    if k == 1 {
        return n as f64;
    }
    let edges = l.edges();
    let pow = power_tables(&edges, n, m);
    let span = 2 * n - 1;
    let free = k - 1;
    // s[k-1] = 0 is the reference row; s[i] ∈ -(n-1)..=(n-1)
    let outer: Vec<f64> = (0..span)
        .into_par_iter()
        .map(|first| {
            let mut s = vec![0i64; k];
            s[0] = first as i64 - (n as i64 - 1);
            let mut terms = Vec::new();
            let inner = span.pow(free as u32 - 1);
            for idx in 0..inner {
                let mut rest = idx;
                for slot in s.iter_mut().take(free).skip(1) {
                    *slot = (rest % span) as i64 - (n as i64 - 1);
                    rest /= span;
                }
                let lo = s.iter().copied().min().unwrap();
                let hi = s.iter().copied().max().unwrap();
                let width = (hi - lo) as usize;
                if width >= n {
                    continue;
                }
                let mut p = (n - width) as f64;
                for (e, &(i, j, _)) in edges.iter().enumerate() {
                    p *= pow[e][s[i].abs_diff(s[j]) as usize];
                }
                terms.push(p);
            }
            tree_sum(&terms)
        })
        .collect();
    tree_sum(&outer)
}

/// A dense factor over a sorted set of row variables, row-major in `vars`.
#[derive(Debug, Clone)]
struct Factor {
    vars: Vec<usize>,
    data: Vec<f64>,
}

impl Factor {
    fn index(&self, assign: &[usize], n: usize) -> usize {
        self.vars.iter().fold(0, |acc, &v| acc * n + assign[v])
    }
}

#[derive(Debug, Clone)]
struct EliminationPlan {
    order: Vec<usize>,
    /// Scope (neighbour set) produced by eliminating each variable in order.
    scopes: Vec<Vec<usize>>,
}

impl EliminationPlan {
    fn cost(&self, n: u64) -> Option<u64> {
        let mut total = 0u64;
        for scope in &self.scopes {
            if n.checked_pow(scope.len() as u32)? > MAX_FACTOR_ENTRIES {
                return None;
            }
            total = total.checked_add(n.checked_pow(scope.len() as u32 + 1)?)?;
        }
        Some(total)
    }
}

/// Greedy min-degree elimination order (ties broken by row index).
fn elimination_plan(l: &EdgeMatrix) -> Result<EliminationPlan> {
    let k = l.dim();
    let mut adj: Vec<Vec<bool>> = (0..k).map(|i| (0..k).map(|j| l.get(i, j) > 0).collect()).collect();
    let mut alive = vec![true; k];
    let mut order = Vec::with_capacity(k);
    let mut scopes = Vec::with_capacity(k);
    for _ in 0..k {
        let v = (0..k)
            .filter(|&v| alive[v])
            .min_by_key(|&v| ((0..k).filter(|&u| alive[u] && adj[v][u]).count(), v))
            .expect("at least one live variable");
        let nb: Vec<usize> = (0..k).filter(|&u| alive[u] && adj[v][u]).collect();
        for &a in &nb {
            for &b in &nb {
                if a != b {
                    adj[a][b] = true;
                }
            }
        }
        alive[v] = false;
        order.push(v);
        scopes.push(nb);
    }
    Ok(EliminationPlan { order, scopes })
}

fn elimination(l: &EdgeMatrix, n: usize, m: &CovarianceModel) -> Result<f64> {
    let plan = elimination_plan(l)?;
    if plan.cost(n as u64).is_none() {
        return Err(FcltError::size_limit(
            "J_N elimination factor size".to_string(),
            MAX_FACTOR_ENTRIES,
        ));
    }
    let edges = l.edges();
    let pow = power_tables(&edges, n, m);
    let mut factors: Vec<Factor> = edges
        .iter()
        .zip(&pow)
        .map(|(&(i, j, _), table)| {
            let mut data = vec![0.0; n * n];
            for a in 0..n {
                for b in 0..n {
                    data[a * n + b] = table[a.abs_diff(b)];
                }
            }
            Factor { vars: vec![i, j], data }
        })
        .collect();
    let k = l.dim();

    for (&v, scope) in plan.order.iter().zip(&plan.scopes) {
        let (involved, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&v));
        factors = rest;
        let width = scope.len();
        let entries = n.pow(width as u32);
        let data: Vec<f64> = (0..entries)
            .into_par_iter()
            .map(|flat| {
                let mut assign = vec![0usize; k];
                let mut rest = flat;
                for &u in scope.iter().rev() {
                    assign[u] = rest % n;
                    rest /= n;
                }
                let mut terms = Vec::with_capacity(n);
                for tv in 0..n {
                    assign[v] = tv;
                    let mut p = 1.0;
                    for f in &involved {
                        p *= f.data[f.index(&assign, n)];
                    }
                    terms.push(p);
                }
                tree_sum(&terms)
            })
            .collect();
        factors.push(Factor { vars: scope.clone(), data });
    }
    // every remaining factor is a scalar (one per connected component)
    Ok(factors.iter().map(|f| f.data[0]).product())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_rows(l12: u32) -> EdgeMatrix {
        EdgeMatrix::from_rows(vec![vec![0, l12], vec![l12, 0]]).unwrap()
    }

    fn all_routes(l: &EdgeMatrix, n: usize, m: &CovarianceModel) -> Vec<f64> {
        [JnStrategy::Direct, JnStrategy::Translation, JnStrategy::Elimination, JnStrategy::Auto]
            .into_iter()
            .map(|s| j_n(l, n, m, s, Budget::default()).unwrap())
            .collect()
    }

    #[test]
    fn two_by_two_hand_value() {
        let m = CovarianceModel::geometric(0.5).unwrap();
        for v in all_routes(&two_rows(2), 2, &m) {
            assert_relative_eq!(v, 2.5, max_relative = 1e-15);
        }
        for v in all_routes(&two_rows(1), 1, &m) {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn zero_row_is_a_contract_violation() {
        let l = EdgeMatrix::from_rows(vec![vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 0]]).unwrap();
        let m = CovarianceModel::geometric(0.5).unwrap();
        let err = j_n(&l, 3, &m, JnStrategy::Auto, Budget::default()).unwrap_err();
        assert!(matches!(err, FcltError::Contract(_)));
    }

    #[test]
    fn budget_is_enforced() {
        let l = EdgeMatrix::from_rows(vec![
            vec![0, 1, 1, 1],
            vec![1, 0, 1, 1],
            vec![1, 1, 0, 1],
            vec![1, 1, 1, 0],
        ])
        .unwrap();
        let m = CovarianceModel::geometric(0.5).unwrap();
        let err = j_n(&l, 200, &m, JnStrategy::Direct, Budget::new(1000)).unwrap_err();
        assert!(matches!(err, FcltError::SizeLimit { limit: 1000, .. }));
    }

    #[test]
    fn routes_agree_on_small_graphs() {
        let m = CovarianceModel::geometric(0.6).unwrap();
        let graphs = [
            vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]],
            vec![vec![0, 2, 0, 1], vec![2, 0, 1, 0], vec![0, 1, 0, 2], vec![1, 0, 2, 0]],
            vec![vec![0, 1, 1, 1], vec![1, 0, 1, 1], vec![1, 1, 0, 1], vec![1, 1, 1, 0]],
            vec![vec![0, 3, 0], vec![3, 0, 1], vec![0, 1, 0]],
        ];
        for g in graphs {
            let l = EdgeMatrix::from_rows(g).unwrap();
            for n in [1, 5, 17, 30] {
                let vals = all_routes(&l, n, &m);
                for v in &vals[1..] {
                    assert_relative_eq!(*v, vals[0], max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn auto_prefers_elimination_for_cycles() {
        let cycle = EdgeMatrix::from_rows(vec![
            vec![0, 1, 0, 1],
            vec![1, 0, 1, 0],
            vec![0, 1, 0, 1],
            vec![1, 0, 1, 0],
        ])
        .unwrap();
        let (route, cost) = resolve(&cycle, 512, JnStrategy::Auto);
        assert_eq!(route, JnStrategy::Elimination);
        assert!(cost.unwrap() < Budget::DEFAULT);
    }
}
