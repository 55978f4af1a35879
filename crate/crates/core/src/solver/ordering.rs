//! Elimination trees: geometric nested dissection for grid operators and
//! column elimination trees for general patterns.

use crate::sparse::CscMatrix;
use crate::{HorstError, Result};

/// Default upper bound on the number of unknowns in a leaf of the dissection.
pub const DEFAULT_LEAF_SIZE: usize = 128;
/// Largest cluster produced when tiling the variables of a node.
pub const MAX_CLUSTER: usize = 256;

/// One supernode of the tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    /// Original unknown indices, in elimination order.
    pub vars: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Offsets into `vars` delimiting geometrically compact clusters.
    pub clusters: Vec<usize>,
}

/// Supernodal elimination tree whose nodes are stored in postorder, so a
/// node id equals its postorder position and every subtree is a contiguous
/// id range ending at its root.
#[derive(Clone, Debug)]
pub struct EliminationTree {
    pub nodes: Vec<TreeNode>,
    /// Grid dimensions when unknowns are grid nodes (x slowest, z fastest).
    pub dims: Option<[usize; 3]>,
    n_vars: usize,
    first_desc: Vec<usize>,
    subtree_dofs: Vec<usize>,
    depth: Vec<usize>,
}

impl EliminationTree {
    /// Builds the derived tables and checks that `nodes` is a valid
    /// postordered tree whose variables partition `0..n_vars`.
    pub fn from_postordered(nodes: Vec<TreeNode>, n_vars: usize, dims: Option<[usize; 3]>) -> Result<Self> {
        let m = nodes.len();
        let mut seen = vec![false; n_vars];
        for (id, node) in nodes.iter().enumerate() {
            for &v in &node.vars {
                if v >= n_vars || seen[v] {
                    return Err(HorstError::invalid(format!("variable {v} missing or repeated in tree node {id}")));
                }
                seen[v] = true;
            }
            if let Some(p) = node.parent {
                if p <= id || p >= m || !nodes[p].children.contains(&id) {
                    return Err(HorstError::invalid(format!("node {id} has an invalid parent link")));
                }
            }
            for &c in &node.children {
                if c >= id || nodes[c].parent != Some(id) {
                    return Err(HorstError::invalid(format!("node {id} has an invalid child link")));
                }
            }
            let cl = &node.clusters;
            if cl.first() != Some(&0) || cl.last() != Some(&node.vars.len()) || cl.windows(2).any(|w| w[0] >= w[1] && !node.vars.is_empty()) {
                return Err(HorstError::invalid(format!("node {id} has malformed cluster offsets")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(HorstError::invalid("tree does not cover every variable"));
        }
        let mut first_desc: Vec<usize> = (0..m).collect();
        let mut subtree_dofs: Vec<usize> = nodes.iter().map(|n| n.vars.len()).collect();
        for id in 0..m {
            if let Some(p) = nodes[id].parent {
                first_desc[p] = first_desc[p].min(first_desc[id]);
                subtree_dofs[p] += subtree_dofs[id];
            }
        }
        for id in 0..m {
            // Postorder: a subtree occupies exactly first_desc..=id.
            let size: usize = (first_desc[id]..=id).map(|d| nodes[d].vars.len()).sum();
            if size != subtree_dofs[id] {
                return Err(HorstError::invalid(format!("node {id}: tree is not stored in postorder")));
            }
        }
        let mut depth = vec![0usize; m];
        for id in (0..m).rev() {
            if let Some(p) = nodes[id].parent {
                depth[id] = depth[p] + 1;
            }
        }
        Ok(EliminationTree {
            nodes,
            dims,
            n_vars,
            first_desc,
            subtree_dofs,
            depth,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.nodes[i].parent.is_none()).collect()
    }

    /// Smallest id in the subtree rooted at `id`.
    pub fn first_descendant(&self, id: usize) -> usize {
        self.first_desc[id]
    }

    pub fn subtree_dofs(&self, id: usize) -> usize {
        self.subtree_dofs[id]
    }

    /// True when `a` is `d` or one of its ancestors.
    pub fn is_ancestor(&self, a: usize, d: usize) -> bool {
        self.first_desc[a] <= d && d <= a
    }

    pub fn node_depth(&self, id: usize) -> usize {
        self.depth[id]
    }

    /// Number of levels (a single root counts as one).
    pub fn depth(&self) -> usize {
        self.depth.iter().max().map_or(0, |d| d + 1)
    }

    /// Lowest common ancestor, or `None` for nodes in different trees.
    pub fn lca(&self, a: usize, b: usize) -> Option<usize> {
        let mut x = a.max(b);
        let other = a.min(b);
        loop {
            if self.is_ancestor(x, other) {
                return Some(x);
            }
            x = self.nodes[x].parent?;
        }
    }

    /// New-to-old permutation: variables in node postorder.
    pub fn permutation(&self) -> Vec<usize> {
        self.nodes.iter().flat_map(|n| n.vars.iter().copied()).collect()
    }

    /// Node id owning each original variable.
    pub fn node_of_var(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_vars];
        for (id, n) in self.nodes.iter().enumerate() {
            for &v in &n.vars {
                out[v] = id;
            }
        }
        out
    }

    /// Grid coordinates of an original variable when the tree is geometric.
    pub fn coords(&self, v: usize) -> Option<[usize; 3]> {
        let d = self.dims?;
        Some([v / (d[1] * d[2]), (v / d[2]) % d[1], v % d[2]])
    }

    /// Elimination tree of a pattern in its given order, one node per
    /// variable. Independent components give a forest.
    pub fn from_pattern(pattern: &CscMatrix) -> Result<Self> {
        let n = pattern.nrows;
        if pattern.ncols != n {
            return Err(HorstError::invalid("elimination tree needs a square pattern"));
        }
        let parent = column_etree(pattern);
        let mut children = vec![Vec::new(); n];
        let mut roots = Vec::new();
        for v in 0..n {
            match parent[v] {
                Some(p) => children[p].push(v),
                None => roots.push(v),
            }
        }
        // Iterative postorder over the forest.
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for &r in &roots {
            stack.push((r, 0));
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if *next < children[v].len() {
                    let c = children[v][*next];
                    *next += 1;
                    stack.push((c, 0));
                } else {
                    order.push(v);
                    stack.pop();
                }
            }
        }
        let mut id_of = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            id_of[v] = i;
        }
        let nodes = order
            .iter()
            .map(|&v| TreeNode {
                vars: vec![v],
                parent: parent[v].map(|p| id_of[p]),
                children: children[v].iter().map(|&c| id_of[c]).collect(),
                clusters: vec![0, 1],
            })
            .collect();
        Self::from_postordered(nodes, n, None)
    }
}

/// Parent of each column in the elimination tree of `A + A^T` (Liu's
/// algorithm with path compression).
pub fn column_etree(pattern: &CscMatrix) -> Vec<Option<usize>> {
    let n = pattern.ncols;
    let t = pattern.transpose();
    let mut parent = vec![None; n];
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    for j in 0..n {
        let rows = pattern.col(j).0.iter().chain(t.col(j).0.iter());
        for &i in rows {
            if i >= j {
                continue;
            }
            let mut r = i;
            loop {
                match ancestor[r] {
                    Some(a) if a == j => break,
                    Some(a) => {
                        ancestor[r] = Some(j);
                        r = a;
                    }
                    None => {
                        ancestor[r] = Some(j);
                        parent[r] = Some(j);
                        break;
                    }
                }
            }
        }
    }
    parent
}

type GridBox = [[usize; 2]; 3];

fn box_count(b: &GridBox) -> usize {
    b.iter().map(|r| r[1] - r[0]).product()
}

fn longest_axis(b: &GridBox) -> usize {
    let mut best = 0;
    for a in 1..3 {
        if b[a][1] - b[a][0] > b[best][1] - b[best][0] {
            best = a;
        }
    }
    best
}

/// Emits the nodes of a box in recursive-bisection order, recording a
/// cluster boundary whenever a sub-box holds at most `MAX_CLUSTER` nodes.
fn bisection_order(b: GridBox, dims: [usize; 3], vars: &mut Vec<usize>, clusters: &mut Vec<usize>) {
    let count = box_count(&b);
    if count == 0 {
        return;
    }
    if count <= MAX_CLUSTER {
        for x in b[0][0]..b[0][1] {
            for y in b[1][0]..b[1][1] {
                for z in b[2][0]..b[2][1] {
                    vars.push((x * dims[1] + y) * dims[2] + z);
                }
            }
        }
        clusters.push(vars.len());
        return;
    }
    let a = longest_axis(&b);
    let mid = b[a][0] + (b[a][1] - b[a][0]) / 2;
    let mut lo = b;
    lo[a][1] = mid;
    let mut hi = b;
    hi[a][0] = mid;
    bisection_order(lo, dims, vars, clusters);
    bisection_order(hi, dims, vars, clusters);
}

fn node_from_box(b: GridBox, dims: [usize; 3]) -> TreeNode {
    let mut vars = Vec::with_capacity(box_count(&b));
    let mut clusters = vec![0];
    bisection_order(b, dims, &mut vars, &mut clusters);
    TreeNode {
        vars,
        parent: None,
        children: Vec::new(),
        clusters,
    }
}

fn dissect(b: GridBox, dims: [usize; 3], leaf: usize, nodes: &mut Vec<TreeNode>) -> usize {
    if box_count(&b) <= leaf {
        nodes.push(node_from_box(b, dims));
        return nodes.len() - 1;
    }
    let a = longest_axis(&b);
    let mid = b[a][0] + (b[a][1] - b[a][0]) / 2;
    let mut children = Vec::new();
    let mut lo = b;
    lo[a][1] = mid;
    if box_count(&lo) > 0 {
        children.push(dissect(lo, dims, leaf, nodes));
    }
    let mut hi = b;
    hi[a][0] = mid + 1;
    if box_count(&hi) > 0 {
        children.push(dissect(hi, dims, leaf, nodes));
    }
    let mut sep = b;
    sep[a] = [mid, mid + 1];
    let mut node = node_from_box(sep, dims);
    let id = nodes.len();
    for &c in &children {
        nodes[c].parent = Some(id);
    }
    node.children = children;
    nodes.push(node);
    id
}

/// Geometric nested dissection of a regular grid: recursive bisection of the
/// longest axis with single-plane separators, which decouple a 27-point
/// footprint, down to leaves of at most `leaf_size` unknowns. Returns the
/// new-to-old permutation and the postordered tree.
pub fn nested_dissection(dims: [usize; 3], leaf_size: usize) -> Result<(Vec<usize>, EliminationTree)> {
    if dims.contains(&0) {
        return Err(HorstError::invalid(format!("grid dimensions {dims:?} must be positive")));
    }
    let leaf = leaf_size.max(1);
    let mut nodes = Vec::new();
    dissect([[0, dims[0]], [0, dims[1]], [0, dims[2]]], dims, leaf, &mut nodes);
    let tree = EliminationTree::from_postordered(nodes, dims.iter().product(), Some(dims))?;
    Ok((tree.permutation(), tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CscMatrix;
    use crate::C64;

    #[test]
    fn cube_root_is_middle_plane() {
        let (_, t) = nested_dissection([3, 3, 3], 1).unwrap();
        let root = t.roots();
        assert_eq!(root.len(), 1);
        let r = &t.nodes[root[0]];
        assert_eq!(r.vars.len(), 9);
        assert!(r.vars.iter().all(|&v| t.coords(v).unwrap()[0] == 1));
    }

    #[test]
    fn chain_splits_at_middle() {
        let (perm, t) = nested_dissection([7, 1, 1], 1).unwrap();
        let root = t.roots()[0];
        assert_eq!(t.nodes[root].vars, vec![3]);
        let kids: Vec<usize> = t.nodes[root].children.iter().map(|&c| t.subtree_dofs(c)).collect();
        assert_eq!(kids, vec![3, 3]);
        assert_eq!(*perm.last().unwrap(), 3);
    }

    #[test]
    fn root_separator_of_cube_is_one_plane() {
        for n in [8, 16, 24] {
            let (_, t) = nested_dissection([n, n, n], DEFAULT_LEAF_SIZE).unwrap();
            let r = t.roots()[0];
            let s = t.nodes[r].vars.len();
            assert!(s >= n * n && s <= 2 * n * n);
        }
    }

    #[test]
    fn postorder_and_partition_hold() {
        let (perm, t) = nested_dissection([9, 6, 11], 20).unwrap();
        let mut sorted = perm.clone();
        sorted.sort();
        assert_eq!(sorted, (0..9 * 6 * 11).collect::<Vec<_>>());
        for id in 0..t.len() {
            for &c in &t.nodes[id].children {
                assert!(c < id);
            }
            assert!(t.nodes[id].vars.len() <= 20 || t.nodes[id].children.len() > 0);
        }
        assert!(t.depth() > 2);
    }

    #[test]
    fn separator_clusters_are_bounded() {
        let (_, t) = nested_dissection([48, 48, 48], DEFAULT_LEAF_SIZE).unwrap();
        let r = &t.nodes[t.roots()[0]];
        for w in r.clusters.windows(2) {
            let s = w[1] - w[0];
            assert!(s <= MAX_CLUSTER && s >= 64, "cluster of {s}");
        }
    }

    #[test]
    fn etree_of_chain_is_a_path() {
        let n = 6;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, C64::new(2.0, 0.0)));
            if i + 1 < n {
                trip.push((i, i + 1, C64::new(-1.0, 0.0)));
                trip.push((i + 1, i, C64::new(-1.0, 0.0)));
            }
        }
        let a = CscMatrix::from_triplets(n, n, &trip).unwrap();
        let p = column_etree(&a);
        assert_eq!(p, vec![Some(1), Some(2), Some(3), Some(4), Some(5), None]);
        let t = EliminationTree::from_pattern(&a).unwrap();
        assert_eq!(t.depth(), n);
        assert_eq!(t.lca(0, 3), Some(3));
    }

    #[test]
    fn diagonal_pattern_gives_a_forest() {
        let trip: Vec<_> = (0..4).map(|i| (i, i, C64::new(1.0, 0.0))).collect();
        let a = CscMatrix::from_triplets(4, 4, &trip).unwrap();
        let t = EliminationTree::from_pattern(&a).unwrap();
        assert_eq!(t.roots().len(), 4);
        assert_eq!(t.lca(0, 1), None);
    }
}
