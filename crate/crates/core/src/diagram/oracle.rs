//! Independent check of the diagram formulas.
//!
//! Each slot polynomial is expanded into monomials, joint moments of
//! monomials come from the Wick rule (all pairings for Gaussian variables,
//! non-crossing pairings for semicircular ones) and cumulants from Möbius
//! inversion over the full or non-crossing partition lattice of the slots.
//! Nothing here goes through the diagram enumerators.

use std::collections::HashMap;

use crate::covariance::{CovarianceModel, World};
use crate::error::{FcltError, Result};

use super::CumulantRequest;

/// Largest `Σ n_i` the oracle accepts.
pub const ORACLE_MAX_DEGREE: usize = 12;

/// Monomial coefficients of `H_n` (classical) or `U_n` (free), lowest degree first.
fn monomials(n: usize, world: World) -> Vec<f64> {
    let mut prev = vec![1.0];
    if n == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for k in 1..n {
        let a = match world {
            World::Classical => k as f64,
            World::Free => 1.0,
        };
        let mut next = vec![0.0; k + 2];
        for (i, c) in cur.iter().enumerate() {
            next[i + 1] += c;
        }
        for (i, c) in prev.iter().enumerate() {
            next[i] -= a * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Wick sum over pairings of a word of time labels.
fn wick(word: &[i64], world: World, m: &CovarianceModel) -> f64 {
    if word.is_empty() {
        return 1.0;
    }
    if word.len() % 2 == 1 {
        return 0.0;
    }
    let first = word[0];
    let mut total = 0.0;
    match world {
        World::Classical => {
            for p in 1..word.len() {
                let rest: Vec<i64> = word[1..p].iter().chain(&word[p + 1..]).copied().collect();
                total += m.r(first - word[p]) * wick(&rest, world, m);
            }
        }
        World::Free => {
            for p in (1..word.len()).step_by(2) {
                total += m.r(first - word[p]) * wick(&word[1..p], world, m) * wick(&word[p + 1..], world, m);
            }
        }
    }
    total
}

/// Set partitions of `0..k` as block lists, via restricted growth strings.
fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, k: usize, labels: &mut Vec<usize>, blocks: usize, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == k {
            let mut bl = vec![Vec::new(); blocks];
            for (e, &b) in labels.iter().enumerate() {
                bl[b].push(e);
            }
            out.push(bl);
            return;
        }
        for b in 0..=blocks {
            labels.push(b);
            rec(i + 1, k, labels, blocks.max(b + 1), out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, &mut Vec::with_capacity(k), 0, &mut out);
    out
}

fn crosses(a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|&x| {
        a.iter().any(|&y| x < y && b.iter().any(|&u| x < u && u < y) && b.iter().any(|&v| v < x || v > y))
    })
}

fn noncrossing(blocks: &[Vec<usize>]) -> bool {
    (0..blocks.len()).all(|i| (i + 1..blocks.len()).all(|j| !crosses(&blocks[i], &blocks[j])))
}

fn catalan(n: usize) -> f64 {
    let mut c = vec![1.0f64; n + 1];
    for i in 1..=n {
        c[i] = (0..i).map(|j| c[j] * c[i - 1 - j]).sum();
    }
    c[n]
}

/// `μ(π, 1̂)` for a partition with `b` blocks.
fn mobius(b: usize, world: World) -> f64 {
    let sign = if (b - 1) % 2 == 0 { 1.0 } else { -1.0 };
    match world {
        World::Classical => sign * (1..b).map(|i| i as f64).product::<f64>(),
        World::Free => sign * catalan(b - 1),
    }
}

/// Joint moment of the slots in `subset` (in slot order).
fn slot_moment(subset: &[usize], polys: &[Vec<f64>], times: &[i64], world: World, m: &CovarianceModel) -> f64 {
    let mut total = 0.0;
    let mut powers = vec![0usize; subset.len()];
    loop {
        let coeff: f64 = subset.iter().zip(&powers).map(|(&s, &p)| polys[s][p]).product();
        if coeff != 0.0 {
            let word: Vec<i64> = subset
                .iter()
                .zip(&powers)
                .flat_map(|(&s, &p)| std::iter::repeat_n(times[s], p))
                .collect();
            total += coeff * wick(&word, world, m);
        }
        let mut pos = 0;
        loop {
            if pos == subset.len() {
                return total;
            }
            powers[pos] += 1;
            if powers[pos] < polys[subset[pos]].len() {
                break;
            }
            powers[pos] = 0;
            pos += 1;
        }
    }
}

pub fn oracle_cumulant(req: &CumulantRequest) -> Result<f64> {
    req.validate()?;
    let total = req.total();
    if total > ORACLE_MAX_DEGREE {
        return Err(FcltError::size_limit(
            format!("oracle cumulant with Σ n_i = {total}"),
            ORACLE_MAX_DEGREE as u64,
        ));
    }
    let k = req.degrees.len();
    let polys: Vec<Vec<f64>> = req.degrees.iter().map(|&n| monomials(n, req.world)).collect();
    let mut moments: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut kappa = 0.0;
    for blocks in set_partitions(k) {
        if req.world == World::Free && !noncrossing(&blocks) {
            continue;
        }
        let mut prod = mobius(blocks.len(), req.world);
        for b in &blocks {
            let v = *moments
                .entry(b.clone())
                .or_insert_with(|| slot_moment(b, &polys, &req.times, req.world, &req.model));
            prod *= v;
            if prod == 0.0 {
                break;
            }
        }
        kappa += prod;
    }
    Ok(kappa)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_expansions() {
        assert_eq!(monomials(2, World::Classical), vec![-1.0, 0.0, 1.0]);
        assert_eq!(monomials(3, World::Classical), vec![0.0, -3.0, 0.0, 1.0]);
        assert_eq!(monomials(3, World::Free), vec![0.0, -2.0, 0.0, 1.0]);
    }

    #[test]
    fn partition_lattice_sizes() {
        let bell: Vec<usize> = (1..=6).map(|k| set_partitions(k).len()).collect();
        assert_eq!(bell, vec![1, 2, 5, 15, 52, 203]);
        let nc: Vec<usize> = (1..=6)
            .map(|k| set_partitions(k).iter().filter(|p| noncrossing(p)).count())
            .collect();
        assert_eq!(nc, vec![1, 2, 5, 14, 42, 132]);
    }

    #[test]
    fn semicircular_cumulants_vanish_beyond_two() {
        let m = CovarianceModel::geometric(0.5).unwrap();
        for times in [[0, 0, 0], [0, 1, 2], [2, 0, 1]] {
            let req = CumulantRequest::new(vec![1, 1, 1], times.to_vec(), World::Free, m.clone()).unwrap();
            assert_eq!(oracle_cumulant(&req).unwrap(), 0.0);
        }
        let req = CumulantRequest::new(vec![1; 4], vec![0, 1, 1, 2], World::Free, m.clone()).unwrap();
        assert!(oracle_cumulant(&req).unwrap().abs() < 1e-15);
    }

    #[test]
    fn linear_covariance() {
        let m = CovarianceModel::geometric(0.5).unwrap();
        for t in 0..4 {
            let req = CumulantRequest::new(vec![1, 1], vec![0, t], World::Classical, m.clone()).unwrap();
            assert!((oracle_cumulant(&req).unwrap() - m.r(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn degree_cap() {
        let m = CovarianceModel::white_noise();
        let req = CumulantRequest::new(vec![7, 7], vec![0, 0], World::Free, m).unwrap();
        assert!(matches!(oracle_cumulant(&req), Err(FcltError::SizeLimit { .. })));
    }
}
