//! Kronecker supports and the coefficient groups penalized by the priors.
//!
//! Component `(h, k)` (module `h`, node `k`) of the process sits at index
//! `h·m2 + k`. All indices here are zero-based.

use serde::{Deserialize, Serialize};

use crate::error::{KgmError, Result};
use crate::spectral::{num_params, param_index};

/// Square 0/1 matrix, serialized as nested row arrays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<u8>>", try_from = "Vec<Vec<u8>>")]
pub struct BinaryMatrix {
    size: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn zeros(size: usize) -> Self {
        BinaryMatrix {
            size,
            data: vec![0; size * size],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut b = Self::zeros(size);
        for i in 0..size {
            b.set(i, i, true);
        }
        b
    }

    pub fn ones(size: usize) -> Self {
        BinaryMatrix {
            size,
            data: vec![1; size * size],
        }
    }

    /// Symmetric pattern with unit diagonal from an undirected edge list.
    pub fn from_edges(size: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut b = Self::identity(size);
        for &(a, c) in edges {
            if a >= size || c >= size {
                return Err(KgmError::InvalidArgument(format!(
                    "edge ({a}, {c}) out of range for size {size}"
                )));
            }
            b.set(a, c, true);
            b.set(c, a, true);
        }
        Ok(b)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.size + c] != 0
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.data[r * self.size + c] = value as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&x| x != 0).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|r| (0..r).all(|c| self.get(r, c) == self.get(c, r)))
    }

    pub fn has_unit_diagonal(&self) -> bool {
        (0..self.size).all(|i| self.get(i, i))
    }

    pub fn kron(&self, other: &BinaryMatrix) -> BinaryMatrix {
        let n2 = other.size;
        let size = self.size * n2;
        let mut out = BinaryMatrix::zeros(size);
        for a in 0..self.size {
            for b in 0..self.size {
                if !self.get(a, b) {
                    continue;
                }
                for c in 0..n2 {
                    for d in 0..n2 {
                        if other.get(c, d) {
                            out.set(a * n2 + c, b * n2 + d, true);
                        }
                    }
                }
            }
        }
        out
    }

    /// Number of entries where the two patterns differ.
    pub fn hamming(&self, other: &BinaryMatrix) -> Result<usize> {
        if self.size != other.size {
            return Err(KgmError::Dimension(format!(
                "patterns of size {} and {}",
                self.size, other.size
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| (**a != 0) != (**b != 0))
            .count())
    }
}

impl From<BinaryMatrix> for Vec<Vec<u8>> {
    fn from(b: BinaryMatrix) -> Self {
        b.data.chunks(b.size.max(1)).map(|r| r.to_vec()).take(b.size).collect()
    }
}

impl TryFrom<Vec<Vec<u8>>> for BinaryMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<u8>>) -> std::result::Result<Self, String> {
        let size = rows.len();
        let mut data = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(format!("binary matrix row of length {} in a {size}x{size} matrix", row.len()));
            }
            if row.iter().any(|&x| x > 1) {
                return Err("binary matrix entries must be 0 or 1".into());
            }
            data.extend(row);
        }
        Ok(BinaryMatrix { size, data })
    }
}

/// Module-level (`e1`, m1×m1) and node-level (`e2`, m2×m2) adjacency patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KroneckerSupport {
    pub e1: BinaryMatrix,
    pub e2: BinaryMatrix,
}

impl KroneckerSupport {
    pub fn new(e1: BinaryMatrix, e2: BinaryMatrix) -> Result<Self> {
        for (name, e) in [("E1", &e1), ("E2", &e2)] {
            if !e.is_symmetric() {
                return Err(KgmError::InvalidArgument(format!("{name} is not symmetric")));
            }
            if !e.has_unit_diagonal() {
                return Err(KgmError::InvalidArgument(format!("{name} must have a unit diagonal")));
            }
        }
        Ok(KroneckerSupport { e1, e2 })
    }

    pub fn full(m1: usize, m2: usize) -> Self {
        KroneckerSupport {
            e1: BinaryMatrix::ones(m1),
            e2: BinaryMatrix::ones(m2),
        }
    }

    pub fn identity(m1: usize, m2: usize) -> Self {
        KroneckerSupport {
            e1: BinaryMatrix::identity(m1),
            e2: BinaryMatrix::identity(m2),
        }
    }

    pub fn m1(&self) -> usize {
        self.e1.size()
    }

    pub fn m2(&self) -> usize {
        self.e2.size()
    }

    /// The m×m pattern E1 ⊗ E2.
    pub fn kron(&self) -> BinaryMatrix {
        self.e1.kron(&self.e2)
    }
}

/// Index of the unordered pair `a ≥ b` in packed lower-triangular order.
#[inline]
pub fn pair_index(a: usize, b: usize) -> usize {
    debug_assert!(a >= b);
    a * (a + 1) / 2 + b
}

/// Inverse of [`pair_index`].
pub fn pair_from_index(p: usize) -> (usize, usize) {
    let mut a = 0;
    while (a + 1) * (a + 2) / 2 <= p {
        a += 1;
    }
    (a, p - a * (a + 1) / 2)
}

/// A partition of the flat parameter vector into penalized groups.
pub trait ParamGroups {
    fn group_count(&self) -> usize;
    fn group(&self, i: usize) -> &[usize];
    fn num_params(&self) -> usize;
}

/// One element (h, k, j, l) of the index set, with h ≥ j and k ≥ l.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTuple {
    pub h: usize,
    pub k: usize,
    pub j: usize,
    pub l: usize,
    /// Number of free parameters in the group (n+1, 2n+1 or 4n+2).
    pub alpha: u32,
    /// Deduplicated flat parameter positions over t = 0..=n.
    pub positions: Vec<usize>,
}

impl GroupTuple {
    pub fn module_pair(&self) -> (usize, usize) {
        (self.h, self.j)
    }

    pub fn node_pair(&self) -> (usize, usize) {
        (self.k, self.l)
    }
}

/// Groups of the Kronecker-inducing penalties. Tuple `(h,k,j,l)` collects the
/// entries (hk,jl), (hl,jk), (jl,hk), (jk,hl) of every `S_t`.
#[derive(Debug, Clone)]
pub struct GroupIndex {
    m1: usize,
    m2: usize,
    n: usize,
    tuples: Vec<GroupTuple>,
}

impl GroupIndex {
    pub fn new(m1: usize, m2: usize, n: usize) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(KgmError::InvalidArgument("m1 and m2 must be positive".into()));
        }
        let m = m1 * m2;
        let row = |a: usize, b: usize| a * m2 + b;
        let mut tuples = Vec::with_capacity(m1 * (m1 + 1) / 2 * m2 * (m2 + 1) / 2);
        for h in 0..m1 {
            for j in 0..=h {
                for k in 0..m2 {
                    for l in 0..=k {
                        let cells = [
                            (row(h, k), row(j, l)),
                            (row(h, l), row(j, k)),
                            (row(j, l), row(h, k)),
                            (row(j, k), row(h, l)),
                        ];
                        let mut positions: Vec<usize> = (0..=n)
                            .flat_map(|t| cells.iter().map(move |&(r, c)| param_index(m, t, r, c)))
                            .collect();
                        positions.sort_unstable();
                        positions.dedup();
                        let alpha = match (h == j, k == l) {
                            (true, true) => n + 1,
                            (true, false) | (false, true) => 2 * n + 1,
                            (false, false) => 4 * n + 2,
                        } as u32;
                        debug_assert_eq!(positions.len(), alpha as usize);
                        tuples.push(GroupTuple {
                            h,
                            k,
                            j,
                            l,
                            alpha,
                            positions,
                        });
                    }
                }
            }
        }
        Ok(GroupIndex { m1, m2, n, tuples })
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn tuples(&self) -> &[GroupTuple] {
        &self.tuples
    }

    pub fn module_pair_count(&self) -> usize {
        self.m1 * (self.m1 + 1) / 2
    }

    pub fn node_pair_count(&self) -> usize {
        self.m2 * (self.m2 + 1) / 2
    }

    /// Tuple id for module pair index `p1` and node pair index `p2`.
    #[inline]
    pub fn tuple_id(&self, p1: usize, p2: usize) -> usize {
        p1 * self.node_pair_count() + p2
    }

    pub fn find(&self, h: usize, k: usize, j: usize, l: usize) -> Option<&GroupTuple> {
        if h < j || k < l || h >= self.m1 || k >= self.m2 {
            return None;
        }
        self.tuples.get(self.tuple_id(pair_index(h, j), pair_index(k, l)))
    }
}

impl ParamGroups for GroupIndex {
    fn group_count(&self) -> usize {
        self.tuples.len()
    }

    fn group(&self, i: usize) -> &[usize] {
        &self.tuples[i].positions
    }

    fn num_params(&self) -> usize {
        num_params(self.m1 * self.m2, self.n)
    }
}

/// Groups of the unstructured sparse penalty: for each `r ≥ c` the entries
/// (r,c) and (c,r) of every `S_t`.
#[derive(Debug, Clone)]
pub struct SparseGroupIndex {
    m: usize,
    n: usize,
    pairs: Vec<(usize, usize)>,
    alphas: Vec<u32>,
    positions: Vec<Vec<usize>>,
}

impl SparseGroupIndex {
    pub fn new(m: usize, n: usize) -> Self {
        let mut pairs = Vec::new();
        let mut alphas = Vec::new();
        let mut positions = Vec::new();
        for r in 0..m {
            for c in 0..=r {
                let mut pos: Vec<usize> = (0..=n)
                    .flat_map(|t| [param_index(m, t, r, c), param_index(m, t, c, r)])
                    .collect();
                pos.sort_unstable();
                pos.dedup();
                pairs.push((r, c));
                alphas.push(if r == c { n + 1 } else { 2 * n + 1 } as u32);
                positions.push(pos);
            }
        }
        SparseGroupIndex {
            m,
            n,
            pairs,
            alphas,
            positions,
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn alphas(&self) -> &[u32] {
        &self.alphas
    }
}

impl ParamGroups for SparseGroupIndex {
    fn group_count(&self) -> usize {
        self.pairs.len()
    }

    fn group(&self, i: usize) -> &[usize] {
        &self.positions[i]
    }

    fn num_params(&self) -> usize {
        num_params(self.m, self.n)
    }
}

/// Pattern E1 ⊗ E2.
pub fn kron_support(ks: &KroneckerSupport) -> BinaryMatrix {
    ks.kron()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_values_from_table() {
        let gi = GroupIndex::new(2, 3, 2).unwrap();
        assert_eq!(gi.find(0, 0, 0, 0).unwrap().alpha, 3);
        assert_eq!(gi.find(1, 1, 0, 0).unwrap().alpha, 10);
        assert_eq!(gi.find(0, 2, 0, 1).unwrap().alpha, 5);
        assert_eq!(gi.find(1, 2, 0, 2).unwrap().alpha, 5);
    }

    #[test]
    fn two_by_two_counts() {
        for n in 0..4 {
            let gi = GroupIndex::new(2, 2, n).unwrap();
            assert_eq!(gi.tuples().len(), 9);
            // every lag matrix S_t (t >= 1) has 16 free entries, all covered
            let m = 4;
            let mut covered = std::collections::HashSet::new();
            for t in gi.tuples() {
                covered.extend(t.positions.iter().copied());
            }
            for t in 1..=n {
                for r in 0..m {
                    for c in 0..m {
                        assert!(covered.contains(&param_index(m, t, r, c)));
                    }
                }
            }
            assert_eq!(covered.len(), 10 + 16 * n);
        }
    }

    #[test]
    fn partition_by_enumeration() {
        for m1 in 1..=4 {
            for m2 in 1..=4 {
                for n in 0..=3 {
                    let gi = GroupIndex::new(m1, m2, n).unwrap();
                    let total = gi.num_params();
                    let mut owner = vec![usize::MAX; total];
                    for (id, t) in gi.tuples().iter().enumerate() {
                        for &p in &t.positions {
                            assert_eq!(owner[p], usize::MAX, "position {p} claimed twice");
                            owner[p] = id;
                        }
                    }
                    assert!(owner.iter().all(|&o| o != usize::MAX));
                }
            }
        }
    }

    #[test]
    fn tuple_lookup_is_consistent() {
        let gi = GroupIndex::new(3, 4, 1).unwrap();
        for (id, t) in gi.tuples().iter().enumerate() {
            assert_eq!(gi.tuple_id(pair_index(t.h, t.j), pair_index(t.k, t.l)), id);
        }
        for p in 0..20 {
            let (a, b) = pair_from_index(p);
            assert!(a >= b);
            assert_eq!(pair_index(a, b), p);
        }
    }

    #[test]
    fn kron_examples() {
        let id = KroneckerSupport::identity(2, 3);
        assert_eq!(kron_support(&id), BinaryMatrix::identity(6));

        let ks = KroneckerSupport::new(BinaryMatrix::ones(2), BinaryMatrix::identity(2)).unwrap();
        let k = kron_support(&ks);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(k.get(r, c), r % 2 == c % 2);
            }
        }
    }

    #[test]
    fn four_module_example_count() {
        let e1 = BinaryMatrix::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let e2 = BinaryMatrix::from_edges(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
        assert_eq!(e1.count_ones(), 7);
        assert_eq!(e2.count_ones(), 10);
        let k = kron_support(&KroneckerSupport::new(e1, e2).unwrap());
        assert_eq!(k.size(), 12);
        assert_eq!(k.count_ones(), 70);
    }

    #[test]
    fn support_validation() {
        let mut asym = BinaryMatrix::identity(3);
        asym.set(0, 1, true);
        assert!(KroneckerSupport::new(asym, BinaryMatrix::identity(2)).is_err());
        assert!(KroneckerSupport::new(BinaryMatrix::zeros(2), BinaryMatrix::identity(2)).is_err());
    }

    #[test]
    fn binary_matrix_json_round_trip() {
        let b = BinaryMatrix::from_edges(3, &[(0, 2)]).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, "[[1,0,1],[0,1,0],[1,0,1]]");
        let back: BinaryMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn sparse_groups_partition() {
        let sg = SparseGroupIndex::new(4, 2);
        let mut seen = vec![false; sg.num_params()];
        for i in 0..sg.group_count() {
            for &p in sg.group(i) {
                assert!(!seen[p]);
                seen[p] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(sg.alphas()[0], 3);
        assert_eq!(sg.alphas()[1], 5);
    }
}
