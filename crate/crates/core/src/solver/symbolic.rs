//! Multifrontal symbolic analysis: front structures and factor-size prediction.

use super::ordering::EliminationTree;
use crate::sparse::CscMatrix;
use crate::{HorstError, Result};

/// Front of one tree node in the permuted numbering: the fully-summed
/// unknowns `start..end` followed by the ascending `border` unknowns, all
/// of which belong to ancestors.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontStructure {
    pub start: usize,
    pub end: usize,
    pub border: Vec<usize>,
}

impl FrontStructure {
    pub fn k(&self) -> usize {
        self.end - self.start
    }

    pub fn b(&self) -> usize {
        self.border.len()
    }

    pub fn m(&self) -> usize {
        self.k() + self.b()
    }

    /// Local position of a permuted unknown inside the front.
    pub fn local(&self, g: usize) -> Option<usize> {
        if g >= self.start && g < self.end {
            return Some(g - self.start);
        }
        self.border.binary_search(&g).ok().map(|p| self.k() + p)
    }
}

/// Result of the analysis phase; independent of matrix values.
#[derive(Clone, Debug)]
pub struct Symbolic {
    pub tree: EliminationTree,
    /// New-to-old permutation.
    pub perm: Vec<usize>,
    /// Old-to-new permutation.
    pub iperm: Vec<usize>,
    pub fronts: Vec<FrontStructure>,
    /// Node owning each permuted unknown.
    pub node_of: Vec<usize>,
    /// Structural entries of the lower factor counting the diagonal.
    pub nnz_l: u64,
    /// Entries stored by a full-rank factorization (dense fronts, L and U).
    pub fr_entries: u64,
    pub max_front: usize,
}

impl Symbolic {
    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Permutes a square matrix into the analysis numbering.
    pub fn permute(&self, a: &CscMatrix) -> CscMatrix {
        let n = self.n();
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowidx = Vec::with_capacity(a.nnz());
        let mut values = Vec::with_capacity(a.nnz());
        colptr.push(0);
        let mut scratch: Vec<(usize, crate::C64)> = Vec::new();
        for jn in 0..n {
            let (rows, vals) = a.col(self.perm[jn]);
            scratch.clear();
            scratch.extend(rows.iter().zip(vals).map(|(&r, &v)| (self.iperm[r], v)));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(r, v) in &scratch {
                rowidx.push(r);
                values.push(v);
            }
            colptr.push(rowidx.len());
        }
        CscMatrix {
            nrows: n,
            ncols: n,
            colptr,
            rowidx,
            values,
        }
    }
}

/// Computes front structures for `pattern` under `tree`. Every coupling of
/// a node's unknowns must lie in its subtree or among its ancestors.
pub fn symbolic_factorize(pattern: &CscMatrix, tree: EliminationTree) -> Result<Symbolic> {
    let n = pattern.nrows;
    if pattern.ncols != n || tree.n_vars() != n {
        return Err(HorstError::invalid(format!(
            "pattern is {}x{} but the tree covers {} unknowns",
            pattern.nrows,
            pattern.ncols,
            tree.n_vars()
        )));
    }
    if !pattern.is_structurally_symmetric() {
        return Err(HorstError::invalid("symbolic analysis requires a structurally symmetric pattern"));
    }
    let perm = tree.permutation();
    let mut iperm = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        iperm[old] = new;
    }
    let mut starts = Vec::with_capacity(tree.len() + 1);
    let mut node_of = vec![0; n];
    let mut pos = 0;
    for (id, node) in tree.nodes.iter().enumerate() {
        starts.push(pos);
        for _ in &node.vars {
            node_of[pos] = id;
            pos += 1;
        }
    }
    starts.push(pos);

    let mut fronts: Vec<FrontStructure> = Vec::with_capacity(tree.len());
    let mut mark = vec![usize::MAX; n];
    let mut nnz_l = 0u64;
    let mut fr_entries = 0u64;
    let mut max_front = 0;
    for id in 0..tree.len() {
        let (start, end) = (starts[id], starts[id + 1]);
        let sub_start = starts[tree.first_descendant(id)];
        let mut border = Vec::new();
        for g in start..end {
            mark[g] = id;
        }
        for g in start..end {
            for &r in pattern.col(perm[g]).0 {
                let w = iperm[r];
                if w >= start && w < end {
                    continue;
                }
                if w < start {
                    if w < sub_start {
                        return Err(HorstError::invalid(format!(
                            "unknown {} couples node {id} to a node outside its subtree and ancestors",
                            perm[g]
                        )));
                    }
                    continue;
                }
                if !tree.is_ancestor(node_of[w], id) {
                    return Err(HorstError::invalid(format!(
                        "unknown {} couples node {id} to a non-ancestor node {}",
                        perm[g], node_of[w]
                    )));
                }
                if mark[w] != id {
                    mark[w] = id;
                    border.push(w);
                }
            }
        }
        for &c in &tree.nodes[id].children {
            for &w in &fronts[c].border {
                if w >= end && mark[w] != id {
                    mark[w] = id;
                    border.push(w);
                }
            }
        }
        border.sort_unstable();
        let k = (end - start) as u64;
        let b = border.len() as u64;
        nnz_l += k * (k + 1) / 2 + k * b;
        fr_entries += k * k + 2 * k * b;
        max_front = max_front.max((k + b) as usize);
        fronts.push(FrontStructure { start, end, border });
    }
    Ok(Symbolic {
        tree,
        perm,
        iperm,
        fronts,
        node_of,
        nnz_l,
        fr_entries,
        max_front,
    })
}
