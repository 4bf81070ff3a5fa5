//! Set partitions of a row table and the diagram classes built on them.
//!
//! Ground-set elements are 1-based, matching the serialized form
//! `[[1,4],[2,3]]`. A [`RowTable`] with row sizes `n_1..n_k` places row `i`
//! on the consecutive elements `n_1 + .. + n_{i-1} + 1 ..= n_1 + .. + n_i`.
//!
//! Only pair partitions are ever enumerated; general partitions can be
//! classified by the predicates but are not generated here.

use serde::{Deserialize, Serialize};

use crate::error::{FcltError, Result};

/// Default cap on the ground-set size for pairing enumeration (15!! ≈ 2·10⁶).
pub const DEFAULT_PAIRING_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowTable {
    row_sizes: Vec<usize>,
    #[serde(skip)]
    offsets: Vec<usize>,
}

impl RowTable {
    pub fn new(row_sizes: Vec<usize>) -> Result<Self> {
        if row_sizes.is_empty() {
            return Err(FcltError::Contract("row table needs at least one row".into()));
        }
        if row_sizes.iter().any(|&n| n == 0) {
            return Err(FcltError::Contract(format!(
                "row sizes must be positive, got {row_sizes:?}"
            )));
        }
        let mut offsets = Vec::with_capacity(row_sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &n in &row_sizes {
            acc += n;
            offsets.push(acc);
        }
        Ok(RowTable { row_sizes, offsets })
    }

    pub fn rows(&self) -> usize {
        self.row_sizes.len()
    }

    pub fn row_sizes(&self) -> &[usize] {
        &self.row_sizes
    }

    /// Total number of table elements `M = Σ n_i`.
    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// 1-based linear index of position `pos` (0-based) in row `row` (0-based).
    pub fn linear_index(&self, row: usize, pos: usize) -> usize {
        assert!(row < self.rows() && pos < self.row_sizes[row]);
        self.offsets[row] + pos + 1
    }

    /// Row (0-based) holding the 1-based element `e`.
    pub fn row_of(&self, e: usize) -> usize {
        assert!(e >= 1 && e <= self.total(), "element {e} outside 1..={}", self.total());
        // offsets is sorted; find the last offset < e
        self.offsets.partition_point(|&o| o < e) - 1
    }

    /// The row partition itself, as a [`Partition`].
    pub fn as_partition(&self) -> Partition {
        let blocks = (0..self.rows())
            .map(|i| (self.offsets[i] + 1..=self.offsets[i + 1]).collect())
            .collect();
        Partition { blocks, size: self.total() }
    }
}

/// A set partition of `{1..M}` in canonical form: each block sorted, blocks
/// ordered by their minimum element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    size: usize,
}

impl Partition {
    /// Builds a partition of `{1..size}`, canonicalizing block order.
    pub fn new(mut blocks: Vec<Vec<usize>>, size: usize) -> Result<Self> {
        let mut seen = vec![false; size + 1];
        for block in blocks.iter_mut() {
            if block.is_empty() {
                return Err(FcltError::Contract("partition has an empty block".into()));
            }
            block.sort_unstable();
            for &e in block.iter() {
                if e == 0 || e > size {
                    return Err(FcltError::Contract(format!("element {e} outside 1..={size}")));
                }
                if seen[e] {
                    return Err(FcltError::Contract(format!("element {e} appears twice")));
                }
                seen[e] = true;
            }
        }
        if let Some(missing) = (1..=size).find(|&e| !seen[e]) {
            return Err(FcltError::Contract(format!("element {missing} is not covered")));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Partition { blocks, size })
    }

    /// Infers the ground-set size from the blocks.
    pub fn from_blocks(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let size = blocks.iter().map(Vec::len).sum();
        Partition::new(blocks, size)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_pairing(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 2)
    }

    /// Block label (0-based block index) for every element, indexed by element.
    fn labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.size + 1];
        for (i, b) in self.blocks.iter().enumerate() {
            for &e in b {
                label[e] = i;
            }
        }
        label
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.blocks.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let blocks = Vec::<Vec<usize>>::deserialize(d)?;
        Partition::from_blocks(blocks).map_err(serde::de::Error::custom)
    }
}

/// Symmetric `k × k` matrix of cross-row edge counts of an inhomogeneous pairing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeMatrix {
    k: usize,
    l: Vec<u32>,
}

impl EdgeMatrix {
    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(FcltError::Contract("edge matrix must be square and non-empty".into()));
        }
        for i in 0..k {
            if rows[i][i] != 0 {
                return Err(FcltError::Contract("edge matrix diagonal must be zero".into()));
            }
            for j in 0..k {
                if rows[i][j] != rows[j][i] {
                    return Err(FcltError::Contract("edge matrix must be symmetric".into()));
                }
            }
        }
        Ok(EdgeMatrix { k, l: rows.into_iter().flatten().collect() })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.l[i * self.k + j]
    }

    pub fn row_sum(&self, i: usize) -> u32 {
        (0..self.k).map(|j| self.get(i, j)).sum()
    }

    /// Pairs `(i, j, l_ij)` with `i < j` and `l_ij > 0`.
    pub fn edges(&self) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        for i in 0..self.k {
            for j in i + 1..self.k {
                let l = self.get(i, j);
                if l > 0 {
                    out.push((i, j, l));
                }
            }
        }
        out
    }

    /// Representative of the isomorphism class under simultaneous row/column
    /// permutation: the lexicographically smallest relabeling.
    pub fn canonical(&self) -> EdgeMatrix {
        let mut perm: Vec<usize> = (0..self.k).collect();
        let mut best = self.l.clone();
        let mut buf = vec![0u32; self.l.len()];
        permute_all(&mut perm, 0, &mut |p| {
            for i in 0..self.k {
                for j in 0..self.k {
                    buf[i * self.k + j] = self.get(p[i], p[j]);
                }
            }
            if buf < best {
                best.copy_from_slice(&buf);
            }
        });
        EdgeMatrix { k: self.k, l: best }
    }
}

fn permute_all(perm: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == perm.len() {
        visit(perm);
        return;
    }
    for i in start..perm.len() {
        perm.swap(start, i);
        permute_all(perm, start + 1, visit);
        perm.swap(start, i);
    }
}

fn check_cap(m: usize, cap: usize) -> Result<()> {
    if m > cap {
        return Err(FcltError::size_limit(
            format!("pairing enumeration on {m} points"),
            cap as u64,
        ));
    }
    Ok(())
}

fn check_sizes(p: &Partition, t: &RowTable) -> Result<()> {
    if p.size() != t.total() {
        return Err(FcltError::Contract(format!(
            "partition of {} points used with a row table of {} elements",
            p.size(),
            t.total()
        )));
    }
    Ok(())
}

/// All perfect matchings of `{1..m}` in lexicographic order. Odd `m` yields none.
pub fn enumerate_pair_partitions(m: usize) -> Result<Vec<Partition>> {
    enumerate_pair_partitions_capped(m, DEFAULT_PAIRING_CAP)
}

pub fn enumerate_pair_partitions_capped(m: usize, cap: usize) -> Result<Vec<Partition>> {
    check_cap(m, cap)?;
    let mut out = Vec::new();
    if m % 2 == 1 {
        return Ok(out);
    }
    generate_pairings(m, &mut |_, _| true, &mut out);
    Ok(out)
}

/// Depth-first pairing generator: the smallest free element is matched with
/// each admissible larger free element. `admit(a, b)` may veto a pair given
/// the current partial assignment.
fn generate_pairings(
    m: usize,
    admit: &mut dyn FnMut(&[usize], (usize, usize)) -> bool,
    out: &mut Vec<Partition>,
) {
    // partner[e] == 0 means unmatched
    let mut partner = vec![0usize; m + 1];
    fn rec(
        m: usize,
        partner: &mut Vec<usize>,
        admit: &mut dyn FnMut(&[usize], (usize, usize)) -> bool,
        out: &mut Vec<Partition>,
    ) {
        let Some(a) = (1..=m).find(|&e| partner[e] == 0) else {
            let blocks = (1..=m)
                .filter(|&e| partner[e] > e)
                .map(|e| vec![e, partner[e]])
                .collect();
            out.push(Partition { blocks, size: m });
            return;
        };
        for b in a + 1..=m {
            if partner[b] != 0 || !admit(partner, (a, b)) {
                continue;
            }
            partner[a] = b;
            partner[b] = a;
            rec(m, partner, admit, out);
            partner[a] = 0;
            partner[b] = 0;
        }
    }
    rec(m, &mut partner, admit, out);
}

/// True iff no `a < b < c < d` has `a, c` in one block and `b, d` in another.
pub fn is_noncrossing(p: &Partition) -> bool {
    let label = p.labels();
    let nb = p.blocks().len();
    for x in 0..nb {
        for y in x + 1..nb {
            // restricted to two blocks, a crossing shows up as ≥ 4 runs (x y x y)
            let mut runs = 0;
            let mut last = usize::MAX;
            for e in 1..=p.size() {
                let l = label[e];
                if (l == x || l == y) && l != last {
                    runs += 1;
                    last = l;
                }
            }
            if runs >= 4 {
                return false;
            }
        }
    }
    true
}

/// True iff no block is contained in a single row.
pub fn is_nonhomogeneous(p: &Partition, t: &RowTable) -> Result<bool> {
    check_sizes(p, t)?;
    Ok(p.blocks().iter().all(|b| {
        let r = t.row_of(b[0]);
        b.iter().any(|&e| t.row_of(e) != r)
    }))
}

/// True iff every block meets every row in at most one element.
pub fn is_inhomogeneous(p: &Partition, t: &RowTable) -> Result<bool> {
    check_sizes(p, t)?;
    Ok(p.blocks().iter().all(|b| {
        let mut rows: Vec<usize> = b.iter().map(|&e| t.row_of(e)).collect();
        rows.sort_unstable();
        rows.windows(2).all(|w| w[0] != w[1])
    }))
}

/// True iff the row/block incidence graph is connected.
pub fn is_connected(p: &Partition, t: &RowTable) -> Result<bool> {
    check_sizes(p, t)?;
    let k = t.rows();
    let mut uf = UnionFind::new(k + p.blocks().len());
    for (bi, b) in p.blocks().iter().enumerate() {
        for &e in b {
            uf.union(t.row_of(e), k + bi);
        }
    }
    Ok(uf.components() == 1)
}

/// Inhomogeneous, connected pairings of `t` (the classical diagram set).
pub fn enumerate_classical_diagrams(t: &RowTable) -> Result<Vec<Partition>> {
    enumerate_classical_diagrams_capped(t, DEFAULT_PAIRING_CAP)
}

pub fn enumerate_classical_diagrams_capped(t: &RowTable, cap: usize) -> Result<Vec<Partition>> {
    let m = t.total();
    check_cap(m, cap)?;
    let mut out = Vec::new();
    if m % 2 == 1 {
        return Ok(out);
    }
    generate_pairings(m, &mut |_, (a, b)| t.row_of(a) != t.row_of(b), &mut out);
    retain_connected(&mut out, t);
    Ok(out)
}

/// Non-crossing, non-homogeneous pairings of `t`, optionally only the connected ones.
pub fn enumerate_free_diagrams(t: &RowTable, connected_only: bool) -> Result<Vec<Partition>> {
    enumerate_free_diagrams_capped(t, connected_only, DEFAULT_PAIRING_CAP)
}

pub fn enumerate_free_diagrams_capped(
    t: &RowTable,
    connected_only: bool,
    cap: usize,
) -> Result<Vec<Partition>> {
    let m = t.total();
    check_cap(m, cap)?;
    let mut out = Vec::new();
    if m % 2 == 1 {
        return Ok(out);
    }
    generate_pairings(
        m,
        &mut |partner, (a, b)| {
            if t.row_of(a) == t.row_of(b) {
                return false;
            }
            // a is the smallest free element, so everything in (a, b) is still
            // free exactly when no earlier arc ends inside it
            (a + 1..b).all(|e| partner[e] == 0) && (b - a - 1) % 2 == 0
        },
        &mut out,
    );
    if connected_only {
        retain_connected(&mut out, t);
    }
    Ok(out)
}

fn retain_connected(ps: &mut Vec<Partition>, t: &RowTable) {
    ps.retain(|p| is_connected(p, t).expect("sizes checked by caller"));
}

/// Cross-row edge counts of an inhomogeneous pairing.
pub fn edge_matrix(p: &Partition, t: &RowTable) -> Result<EdgeMatrix> {
    check_sizes(p, t)?;
    let k = t.rows();
    let mut l = vec![0u32; k * k];
    for b in p.blocks() {
        if b.len() != 2 {
            return Err(FcltError::Contract(format!("block {b:?} is not a pair")));
        }
        let (i, j) = (t.row_of(b[0]), t.row_of(b[1]));
        if i == j {
            return Err(FcltError::Contract(format!("block {b:?} lies inside row {}", i + 1)));
        }
        l[i * k + j] += 1;
        l[j * k + i] += 1;
    }
    Ok(EdgeMatrix { k, l })
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    count: usize,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), count: n }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
            self.count -= 1;
        }
    }

    pub(crate) fn components(&self) -> usize {
        self.count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(blocks: &[&[usize]]) -> Partition {
        Partition::from_blocks(blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
    }

    fn rows(sizes: &[usize]) -> RowTable {
        RowTable::new(sizes.to_vec()).unwrap()
    }

    #[test]
    fn row_table_indexing_is_a_bijection() {
        let t = rows(&[2, 3, 1]);
        assert_eq!(t.total(), 6);
        let mut seen = Vec::new();
        for i in 0..t.rows() {
            for a in 0..t.row_sizes()[i] {
                let e = t.linear_index(i, a);
                assert_eq!(t.row_of(e), i);
                seen.push(e);
            }
        }
        assert_eq!(seen, (1..=6).collect::<Vec<_>>());
    }

    #[test]
    fn row_table_rejects_bad_sizes() {
        assert!(RowTable::new(vec![]).is_err());
        assert!(RowTable::new(vec![2, 0]).is_err());
    }

    #[test]
    fn partition_validation_and_canonical_order() {
        let p = Partition::new(vec![vec![3, 2], vec![4, 1]], 4).unwrap();
        assert_eq!(p.blocks(), &[vec![1, 4], vec![2, 3]]);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[[1,4],[2,3]]");
        assert!(Partition::new(vec![vec![1, 2], vec![2, 3]], 3).is_err());
        assert!(Partition::new(vec![vec![1, 2]], 3).is_err());
        assert!(Partition::new(vec![vec![1, 5]], 2).is_err());
    }

    #[test]
    fn pairing_counts_small() {
        assert_eq!(enumerate_pair_partitions(4).unwrap().len(), 3);
        assert_eq!(enumerate_pair_partitions(6).unwrap().len(), 15);
        assert_eq!(enumerate_pair_partitions(2).unwrap(), vec![part(&[&[1, 2]])]);
        assert!(enumerate_pair_partitions(5).unwrap().is_empty());
    }

    #[test]
    fn pairing_cap_is_named_in_error() {
        let err = enumerate_pair_partitions(18).unwrap_err();
        assert_eq!(err, FcltError::size_limit("pairing enumeration on 18 points", 16));
        assert!(err.to_string().contains("16"));
        assert_eq!(enumerate_pair_partitions_capped(8, 6).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn noncrossing_examples() {
        assert!(is_noncrossing(&part(&[&[1, 4], &[2, 3]])));
        assert!(!is_noncrossing(&part(&[&[1, 3], &[2, 4]])));
        assert!(is_noncrossing(&part(&[&[1, 2, 3, 4, 5]])));
        assert!(!is_noncrossing(&part(&[&[1, 3, 5], &[2, 6], &[4]])));
    }

    #[test]
    fn homogeneity_examples() {
        let t = rows(&[2, 2]);
        assert!(!is_nonhomogeneous(&part(&[&[1, 2], &[3, 4]]), &t).unwrap());
        assert!(is_nonhomogeneous(&part(&[&[1, 4], &[2, 3]]), &t).unwrap());
        assert!(is_nonhomogeneous(&part(&[&[1, 2, 3]]), &rows(&[1, 1, 1])).unwrap());
        assert!(is_inhomogeneous(&part(&[&[1, 3], &[2, 4]]), &t).unwrap());
        assert!(!is_inhomogeneous(&part(&[&[1, 2], &[3, 4]]), &t).unwrap());
        // a block spanning both rows but hitting row 1 twice
        assert!(!is_inhomogeneous(&part(&[&[1, 2, 3], &[4]]), &t).unwrap());
        assert!(!is_nonhomogeneous(&part(&[&[1, 2], &[3, 4]]), &rows(&[3, 1])).unwrap());
    }

    #[test]
    fn size_mismatch_is_a_contract_violation() {
        let err = is_connected(&part(&[&[1, 2]]), &rows(&[2, 2])).unwrap_err();
        assert!(matches!(err, FcltError::Contract(_)));
    }

    #[test]
    fn connectivity_examples() {
        let t = rows(&[2, 2]);
        assert!(is_connected(&part(&[&[1, 4], &[2, 3]]), &t).unwrap());
        assert!(!is_connected(&part(&[&[1, 2], &[3, 4]]), &t).unwrap());
        let t3 = rows(&[2, 2, 2]);
        assert!(is_connected(&part(&[&[1, 6], &[2, 3], &[4, 5]]), &t3).unwrap());
        assert!(!is_connected(&part(&[&[1, 3], &[2, 4], &[5, 6]]), &t3).unwrap());
    }

    #[test]
    fn classical_diagram_counts() {
        assert_eq!(enumerate_classical_diagrams(&rows(&[2, 2, 2])).unwrap().len(), 8);
        assert_eq!(
            enumerate_classical_diagrams(&rows(&[1, 1])).unwrap(),
            vec![part(&[&[1, 2]])]
        );
        for k in 1..=4usize {
            let n = enumerate_classical_diagrams(&rows(&[k, k])).unwrap().len();
            assert_eq!(n, (1..=k).product::<usize>());
        }
    }

    #[test]
    fn free_diagram_examples() {
        for n in 1..=6 {
            assert_eq!(enumerate_free_diagrams(&rows(&[n, n]), false).unwrap().len(), 1);
        }
        assert_eq!(
            enumerate_free_diagrams(&rows(&[2, 2, 2]), true).unwrap(),
            vec![part(&[&[1, 6], &[2, 3], &[4, 5]])]
        );
        assert!(enumerate_free_diagrams(&rows(&[2, 3]), true).unwrap().is_empty());
        assert!(enumerate_free_diagrams(&rows(&[2, 3]), false).unwrap().is_empty());
    }

    #[test]
    fn edge_matrix_examples() {
        let l = edge_matrix(&part(&[&[1, 4], &[2, 3]]), &rows(&[2, 2])).unwrap();
        assert_eq!(l.get(0, 1), 2);
        let t3 = rows(&[2, 2, 2]);
        let l = edge_matrix(&part(&[&[1, 6], &[2, 3], &[4, 5]]), &t3).unwrap();
        assert_eq!((l.get(0, 1), l.get(0, 2), l.get(1, 2)), (1, 1, 1));
        for d in enumerate_classical_diagrams(&rows(&[3, 2, 1, 2])).unwrap() {
            let l = edge_matrix(&d, &rows(&[3, 2, 1, 2])).unwrap();
            for (i, &n) in [3u32, 2, 1, 2].iter().enumerate() {
                assert_eq!(l.row_sum(i), n);
            }
        }
    }

    #[test]
    fn edge_matrix_rejects_non_pairs_and_homogeneous_blocks() {
        let t = rows(&[2, 2]);
        assert!(edge_matrix(&part(&[&[1, 2], &[3, 4]]), &t).is_err());
        assert!(edge_matrix(&part(&[&[1, 3, 4], &[2]]), &t).is_err());
    }

    #[test]
    fn canonical_edge_matrix_identifies_relabelings() {
        let a = EdgeMatrix::from_rows(vec![vec![0, 2, 0], vec![2, 0, 1], vec![0, 1, 0]]).unwrap();
        let b = EdgeMatrix::from_rows(vec![vec![0, 1, 0], vec![1, 0, 2], vec![0, 2, 0]]).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert!(EdgeMatrix::from_rows(vec![vec![0, 1], vec![2, 0]]).is_err());
    }
}
