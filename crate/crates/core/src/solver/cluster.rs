//! Geometric clustering of front variables and tile admissibility.

use super::ordering::MAX_CLUSTER;
use super::symbolic::Symbolic;

/// Axis-aligned bounding box of a cluster in grid index units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BBox {
    pub fn of_points(points: impl IntoIterator<Item = [usize; 3]>) -> Option<BBox> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for p in points {
            any = true;
            for a in 0..3 {
                lo[a] = lo[a].min(p[a] as f64);
                hi[a] = hi[a].max(p[a] as f64);
            }
        }
        any.then_some(BBox { lo, hi })
    }

    pub fn diameter(&self) -> f64 {
        (0..3).map(|a| (self.hi[a] - self.lo[a]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn distance(&self, o: &BBox) -> f64 {
        (0..3)
            .map(|a| {
                let gap = (self.lo[a] - o.hi[a]).max(o.lo[a] - self.hi[a]).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Strong admissibility: separated boxes whose distance is at least `eta`
/// times the smaller diameter.
pub fn admissible(a: &BBox, b: &BBox, eta: f64) -> bool {
    let d = a.distance(b);
    d > 0.0 && d >= eta * a.diameter().min(b.diameter())
}

/// Clusters of one front in local indices: fully-summed clusters cover
/// `0..k`, border clusters cover `k..m`.
#[derive(Clone, Debug)]
pub struct FrontClusters {
    pub fs: Vec<(usize, usize)>,
    pub border: Vec<(usize, usize)>,
    /// Bounding boxes, fully-summed clusters first; `None` without geometry.
    pub boxes: Option<Vec<BBox>>,
}

impl FrontClusters {
    /// Tiling used by block low-rank factorization.
    pub fn blr(sym: &Symbolic, cluster_of: &[u32], id: usize) -> Self {
        let node = &sym.tree.nodes[id];
        let front = &sym.fronts[id];
        let k = front.k();
        let fs: Vec<(usize, usize)> = node.clusters.windows(2).map(|w| (w[0], w[1])).collect();
        // Runs sharing an ancestor cluster, then neighbouring runs of the
        // same ancestor merged while they fit in one cluster.
        let mut pieces: Vec<(usize, usize, usize)> = Vec::new();
        for (i, &g) in front.border.iter().enumerate() {
            let pos = k + i;
            match pieces.last_mut() {
                Some(p) if cluster_of[front.border[p.1 - 1 - k]] == cluster_of[g] => p.1 = pos + 1,
                _ => pieces.push((pos, pos + 1, sym.node_of[g])),
            }
        }
        let mut border: Vec<(usize, usize)> = Vec::new();
        let mut owner = usize::MAX;
        for (a, b, o) in pieces {
            match border.last_mut() {
                Some(run) if o == owner && b - run.0 <= MAX_CLUSTER => run.1 = b,
                _ => border.push((a, b)),
            }
            owner = o;
        }
        let boxes = sym.tree.dims.map(|_| {
            let coords = |g: usize| sym.tree.coords(sym.perm[g]).unwrap();
            let local_to_global = |l: usize| if l < k { front.start + l } else { front.border[l - k] };
            fs.iter()
                .chain(border.iter())
                .map(|&(a, b)| BBox::of_points((a..b).map(|l| coords(local_to_global(l)))).unwrap())
                .collect()
        });
        FrontClusters { fs, border, boxes }
    }

    /// Panel tiling used by full-rank factorization: fixed-width panels
    /// and a single border block.
    pub fn full_rank(k: usize, b: usize, panel: usize) -> Self {
        let fs = (0..k).step_by(panel.max(1)).map(|s| (s, (s + panel).min(k))).collect();
        let border = if b > 0 { vec![(k, k + b)] } else { Vec::new() };
        FrontClusters { fs, border, boxes: None }
    }

    /// Whether the tile coupling cluster `i` and `j` (indices into fs then
    /// border) may be compressed.
    pub fn admissible(&self, i: usize, j: usize, eta: f64) -> bool {
        if i == j {
            return false;
        }
        match &self.boxes {
            Some(b) => admissible(&b[i], &b[j], eta),
            None => true,
        }
    }
}

/// Global cluster number of every permuted unknown.
pub fn cluster_numbers(sym: &Symbolic) -> Vec<u32> {
    let mut out = vec![0u32; sym.n()];
    let mut next = 0u32;
    for (id, node) in sym.tree.nodes.iter().enumerate() {
        let start = sym.fronts[id].start;
        for w in node.clusters.windows(2) {
            for l in w[0]..w[1] {
                out[start + l] = next;
            }
            next += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(lo: [f64; 3], hi: [f64; 3]) -> BBox {
        BBox { lo, hi }
    }

    #[test]
    fn distance_and_admissibility() {
        let a = bx([0.0, 0.0, 0.0], [3.0, 4.0, 0.0]);
        let b = bx([10.0, 0.0, 0.0], [13.0, 4.0, 0.0]);
        assert_eq!(a.diameter(), 5.0);
        assert_eq!(a.distance(&b), 7.0);
        assert!(admissible(&a, &b, 1.0));
        let c = bx([4.0, 0.0, 0.0], [7.0, 4.0, 0.0]);
        assert!(!admissible(&a, &c, 1.0));
        assert!(!admissible(&a, &a, 0.5));
        // Relaxed factor admits closer pairs.
        let d = bx([7.0, 0.0, 0.0], [10.0, 4.0, 0.0]);
        assert!(!admissible(&a, &d, 1.0) && admissible(&a, &d, 0.5));
    }
}
