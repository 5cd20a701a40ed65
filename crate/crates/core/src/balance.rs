//! Domain decomposition over the global cell grid.
//!
//! Two strategies produce a [`PartitionTree`] whose leaves are cuboid blocks
//! of cells, one per worker:
//!
//! * [`uniform_partition`]: a static near-equal-volume block grid;
//! * [`kd_partition`]: recursive bisection along x, y, z, x, ... where each
//!   plane minimises the larger per-worker load of its two sides.
//!
//! Loads come from [`estimate_loads`], a pair-count proxy evaluated from the
//! live cell occupancy.

use std::collections::HashMap;

use crate::cells::CellBox;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn next(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::Z,
            Axis::Z => Axis::X,
        }
    }

    pub fn from_index(i: usize) -> Axis {
        Axis::ALL[i % 3]
    }
}

/// Estimated interaction cost per global cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellLoadField {
    dims: [usize; 3],
    costs: Vec<f64>,
}

impl CellLoadField {
    pub fn new(dims: [usize; 3], costs: Vec<f64>) -> Result<Self> {
        if costs.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::PartitionInconsistency(format!(
                "load field has {} entries for a {:?} grid",
                costs.len(),
                dims
            )));
        }
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::PartitionInconsistency(format!("invalid cell cost {c}")));
        }
        Ok(CellLoadField { dims, costs })
    }

    pub fn uniform(dims: [usize; 3], cost: f64) -> Self {
        CellLoadField {
            dims,
            costs: vec![cost; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    fn linear(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    pub fn get(&self, c: [usize; 3]) -> f64 {
        self.costs[self.linear(c)]
    }

    pub fn set(&mut self, c: [usize; 3], v: f64) {
        let i = self.linear(c);
        self.costs[i] = v;
    }

    pub fn box_load(&self, b: &CellBox) -> f64 {
        b.cells().map(|c| self.get(c)).sum()
    }

    pub fn total(&self) -> f64 {
        self.costs.iter().sum()
    }
}

/// Pair-work proxy: `n_c (n_c - 1) / 2 + 1/2 sum_{c' in 26-neighbourhood} n_c n_c'`.
///
/// `occupancy` is indexed like [`crate::cells::GridGeometry::linear`].
pub fn estimate_loads(occupancy: &[usize], dims: [usize; 3], periodic: [bool; 3]) -> Result<CellLoadField> {
    let mut costs = vec![0.0; dims[0] * dims[1] * dims[2]];
    let lin = |c: [usize; 3]| (c[0] * dims[1] + c[1]) * dims[2] + c[2];
    if occupancy.len() != costs.len() {
        return Err(Error::PartitionInconsistency(format!(
            "occupancy has {} entries for a {:?} grid",
            occupancy.len(),
            dims
        )));
    }
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let c = [x, y, z];
                let n = occupancy[lin(c)] as f64;
                if n == 0.0 {
                    continue;
                }
                let mut neigh = 0.0;
                for ox in -1i64..=1 {
                    for oy in -1i64..=1 {
                        for oz in -1i64..=1 {
                            if ox == 0 && oy == 0 && oz == 0 {
                                continue;
                            }
                            let g = [x as i64 + ox, y as i64 + oy, z as i64 + oz];
                            let mut w = [0usize; 3];
                            let mut inside = true;
                            for a in 0..3 {
                                let d = dims[a] as i64;
                                if (0..d).contains(&g[a]) {
                                    w[a] = g[a] as usize;
                                } else if periodic[a] && d >= 3 {
                                    w[a] = g[a].rem_euclid(d) as usize;
                                } else {
                                    inside = false;
                                }
                            }
                            if inside {
                                neigh += occupancy[lin(w)] as f64;
                            }
                        }
                    }
                }
                costs[lin(c)] = n * (n - 1.0) / 2.0 + 0.5 * n * neigh;
            }
        }
    }
    CellLoadField::new(dims, costs)
}

#[derive(Clone, Debug, PartialEq)]
pub enum PartitionNode {
    Split {
        axis: Axis,
        /// Global cell index of the plane: left is `[lo, at)`, right `[at, hi)`.
        at: usize,
        region: CellBox,
        left_workers: usize,
        right_workers: usize,
        left: Box<PartitionNode>,
        right: Box<PartitionNode>,
    },
    Leaf {
        worker: usize,
        cells: CellBox,
    },
}

/// Binary space partition of the global cell grid into one cuboid per worker.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTree {
    dims: [usize; 3],
    workers: usize,
    root: PartitionNode,
}

/// A split node with its depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitInfo {
    pub depth: usize,
    pub axis: Axis,
    pub at: usize,
    pub region: CellBox,
    pub left_workers: usize,
    pub right_workers: usize,
}

impl PartitionTree {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn worker_count(&self) -> usize {
        self.workers
    }

    pub fn root(&self) -> &PartitionNode {
        &self.root
    }

    /// Leaf box of every worker, indexed by worker id.
    pub fn leaves(&self) -> Vec<CellBox> {
        let mut out = vec![CellBox::new([0; 3], [0; 3]); self.workers];
        fn walk(n: &PartitionNode, out: &mut Vec<CellBox>) {
            match n {
                PartitionNode::Leaf { worker, cells } => out[*worker] = *cells,
                PartitionNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(&self.root, &mut out);
        out
    }

    /// Owning worker of every global cell (x-major linear index).
    pub fn owner_map(&self) -> Vec<u32> {
        let d = self.dims;
        let mut owner = vec![u32::MAX; d[0] * d[1] * d[2]];
        for (w, b) in self.leaves().iter().enumerate() {
            for c in b.cells() {
                owner[(c[0] * d[1] + c[1]) * d[2] + c[2]] = w as u32;
            }
        }
        owner
    }

    pub fn splits(&self) -> Vec<SplitInfo> {
        let mut out = Vec::new();
        fn walk(n: &PartitionNode, depth: usize, out: &mut Vec<SplitInfo>) {
            if let PartitionNode::Split {
                axis,
                at,
                region,
                left_workers,
                right_workers,
                left,
                right,
            } = n
            {
                out.push(SplitInfo {
                    depth,
                    axis: *axis,
                    at: *at,
                    region: *region,
                    left_workers: *left_workers,
                    right_workers: *right_workers,
                });
                walk(left, depth + 1, out);
                walk(right, depth + 1, out);
            }
        }
        walk(&self.root, 0, &mut out);
        out
    }

    /// Same geometry with leaf `w` handed to worker `perm[w]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<PartitionTree> {
        let mut seen = vec![false; self.workers];
        if perm.len() != self.workers || perm.iter().any(|&p| p >= self.workers || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::PartitionInconsistency(format!("{perm:?} is not a permutation of 0..{}", self.workers)));
        }
        fn walk(n: &PartitionNode, perm: &[usize]) -> PartitionNode {
            match n {
                PartitionNode::Leaf { worker, cells } => PartitionNode::Leaf {
                    worker: perm[*worker],
                    cells: *cells,
                },
                PartitionNode::Split {
                    axis,
                    at,
                    region,
                    left_workers,
                    right_workers,
                    left,
                    right,
                } => PartitionNode::Split {
                    axis: *axis,
                    at: *at,
                    region: *region,
                    left_workers: *left_workers,
                    right_workers: *right_workers,
                    left: Box::new(walk(left, perm)),
                    right: Box::new(walk(right, perm)),
                },
            }
        }
        Ok(PartitionTree {
            dims: self.dims,
            workers: self.workers,
            root: walk(&self.root, perm),
        })
    }

    /// Split axes along every root-to-leaf path, indexed by the leaf's worker.
    pub fn axis_paths(&self) -> Vec<Vec<Axis>> {
        let mut out = vec![Vec::new(); self.workers];
        fn walk(n: &PartitionNode, path: &mut Vec<Axis>, out: &mut Vec<Vec<Axis>>) {
            match n {
                PartitionNode::Leaf { worker, .. } => out[*worker] = path.clone(),
                PartitionNode::Split { axis, left, right, .. } => {
                    path.push(*axis);
                    walk(left, path, out);
                    walk(right, path, out);
                    path.pop();
                }
            }
        }
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }
}

fn split_box(region: &CellBox, axis: usize, at: usize) -> (CellBox, CellBox) {
    let mut left = *region;
    let mut right = *region;
    left.hi[axis] = at;
    right.lo[axis] = at;
    (left, right)
}

fn check_workers(dims: [usize; 3], workers: usize) -> Result<()> {
    if workers == 0 {
        return Err(Error::PartitionInfeasible("worker count must be at least 1".into()));
    }
    let cells = dims[0] * dims[1] * dims[2];
    if workers > cells {
        return Err(Error::PartitionInfeasible(format!("{workers} workers for only {cells} cells")));
    }
    Ok(())
}

/// Static block decomposition ignoring loads.
///
/// Picks the factorisation `p_x p_y p_z = workers` (with `p_a <= cells_a`)
/// that cuts the fewest cell faces, preferring more cuts along x, then y.
pub fn uniform_partition(dims: [usize; 3], workers: usize) -> Result<PartitionTree> {
    check_workers(dims, workers)?;
    let mut best: Option<([usize; 3], usize)> = None;
    for px in (1..=workers).rev() {
        if workers % px != 0 || px > dims[0] {
            continue;
        }
        for py in (1..=workers / px).rev() {
            if (workers / px) % py != 0 || py > dims[1] {
                continue;
            }
            let pz = workers / px / py;
            if pz > dims[2] {
                continue;
            }
            let p = [px, py, pz];
            let cut = (p[0] - 1) * dims[1] * dims[2] + (p[1] - 1) * dims[0] * dims[2] + (p[2] - 1) * dims[0] * dims[1];
            if best.map_or(true, |(_, c)| cut < c) {
                best = Some((p, cut));
            }
        }
    }
    let (p, _) = best.ok_or_else(|| {
        Error::PartitionInfeasible(format!("{workers} workers cannot be arranged as a block grid over {dims:?} cells"))
    })?;
    let bounds: Vec<Vec<usize>> = (0..3).map(|a| (0..=p[a]).map(|k| k * dims[a] / p[a]).collect()).collect();

    fn build(lo: [usize; 3], hi: [usize; 3], bounds: &[Vec<usize>], next_worker: &mut usize) -> PartitionNode {
        let groups = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let region = CellBox::new(
            [bounds[0][lo[0]], bounds[1][lo[1]], bounds[2][lo[2]]],
            [bounds[0][hi[0]], bounds[1][hi[1]], bounds[2][hi[2]]],
        );
        let Some(axis) = (0..3).filter(|&a| groups[a] > 1).max_by(|&a, &b| groups[a].cmp(&groups[b]).then(b.cmp(&a))) else {
            let w = *next_worker;
            *next_worker += 1;
            return PartitionNode::Leaf { worker: w, cells: region };
        };
        let mid = lo[axis] + groups[axis] / 2;
        let mut lhi = hi;
        lhi[axis] = mid;
        let mut rlo = lo;
        rlo[axis] = mid;
        let per_group: usize = (0..3).filter(|&a| a != axis).map(|a| groups[a]).product();
        let left = build(lo, lhi, bounds, next_worker);
        let right = build(rlo, hi, bounds, next_worker);
        PartitionNode::Split {
            axis: Axis::from_index(axis),
            at: bounds[axis][mid],
            region,
            left_workers: (mid - lo[axis]) * per_group,
            right_workers: (hi[axis] - mid) * per_group,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    let mut next = 0;
    let root = build([0; 3], p, &bounds, &mut next);
    Ok(PartitionTree { dims, workers, root })
}

/// Whether a box of `dims` cells can host `workers` single-cuboid leaves under
/// strict axis alternation starting at `axis`.
pub fn is_feasible(dims: [usize; 3], workers: usize, axis: Axis) -> bool {
    Feasibility::default().check(dims, workers, axis)
}

#[derive(Default)]
struct Feasibility {
    memo: HashMap<([usize; 3], usize, Axis), bool>,
}

impl Feasibility {
    fn check(&mut self, dims: [usize; 3], workers: usize, axis: Axis) -> bool {
        if dims.iter().any(|&d| d == 0) {
            return false;
        }
        if workers == 1 {
            return true;
        }
        if dims[0] * dims[1] * dims[2] < workers {
            return false;
        }
        if let Some(&v) = self.memo.get(&(dims, workers, axis)) {
            return v;
        }
        let a = axis.index();
        let nl = workers / 2;
        let nr = workers - nl;
        let mut ok = false;
        for s in 1..dims[a] {
            let mut dl = dims;
            let mut dr = dims;
            dl[a] = s;
            dr[a] = dims[a] - s;
            if self.check(dl, nl, axis.next()) && self.check(dr, nr, axis.next()) {
                ok = true;
                break;
            }
        }
        self.memo.insert((dims, workers, axis), ok);
        ok
    }
}

/// Recursive bisection with cyclically alternating plane normals.
///
/// Each region's worker count is halved (`floor(n/2)` left, rest right) and
/// every cell-boundary plane on the current axis is scanned; the plane
/// minimising `max(load_L / n_L, load_R / n_R)` wins, ties going to the lowest
/// index. Planes that would leave a side unable to host its workers are skipped.
pub fn kd_partition(loads: &CellLoadField, workers: usize, axis0: Axis) -> Result<PartitionTree> {
    let dims = loads.dims();
    check_workers(dims, workers)?;
    let mut feas = Feasibility::default();
    if !feas.check(dims, workers, axis0) {
        return Err(Error::PartitionInfeasible(format!(
            "{workers} workers cannot be placed on {dims:?} cells with alternating bisection"
        )));
    }
    let mut next = 0;
    let root = kd_node(loads, CellBox::full(dims), workers, axis0, &mut feas, &mut next)?;
    Ok(PartitionTree { dims, workers, root })
}

fn kd_node(
    loads: &CellLoadField,
    region: CellBox,
    workers: usize,
    axis: Axis,
    feas: &mut Feasibility,
    next_worker: &mut usize,
) -> Result<PartitionNode> {
    if workers == 1 {
        let w = *next_worker;
        *next_worker += 1;
        return Ok(PartitionNode::Leaf { worker: w, cells: region });
    }
    let a = axis.index();
    let nl = workers / 2;
    let nr = workers - nl;

    // load of each unit-thick slab normal to the axis
    let mut slab = vec![0.0; region.hi[a] - region.lo[a]];
    for c in region.cells() {
        slab[c[a] - region.lo[a]] += loads.get(c);
    }
    let total: f64 = slab.iter().sum();

    let dims = region.dims();
    let mut best: Option<(usize, f64)> = None;
    let mut left_load = 0.0;
    for s in 1..dims[a] {
        left_load += slab[s - 1];
        let right_load = total - left_load;
        let mut dl = dims;
        let mut dr = dims;
        dl[a] = s;
        dr[a] = dims[a] - s;
        if !feas.check(dl, nl, axis.next()) || !feas.check(dr, nr, axis.next()) {
            continue;
        }
        let cost = (left_load / nl as f64).max(right_load / nr as f64);
        if best.map_or(true, |(_, b)| cost < b) {
            best = Some((region.lo[a] + s, cost));
        }
    }
    let (at, _) = best.ok_or_else(|| {
        Error::PartitionInfeasible(format!("region {region:?} cannot host {workers} workers along {axis:?}"))
    })?;
    let (lbox, rbox) = split_box(&region, a, at);
    let left = kd_node(loads, lbox, nl, axis.next(), feas, next_worker)?;
    let right = kd_node(loads, rbox, nr, axis.next(), feas, next_worker)?;
    Ok(PartitionNode::Split {
        axis,
        at,
        region,
        left_workers: nl,
        right_workers: nr,
        left: Box::new(left),
        right: Box::new(right),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImbalanceReport {
    pub loads: Vec<f64>,
    pub max_load: f64,
    pub mean_load: f64,
    /// `max / mean`, defined as 1 for an unloaded grid.
    pub imbalance: f64,
}

pub fn measure_imbalance(tree: &PartitionTree, loads: &CellLoadField) -> ImbalanceReport {
    let per: Vec<f64> = tree.leaves().iter().map(|b| loads.box_load(b)).collect();
    let max_load = per.iter().copied().fold(0.0, f64::max);
    let mean_load = per.iter().sum::<f64>() / per.len() as f64;
    let imbalance = if mean_load > 0.0 { (max_load / mean_load).max(1.0) } else { 1.0 };
    ImbalanceReport {
        loads: per,
        max_load,
        mean_load,
        imbalance,
    }
}

pub fn should_rebalance(step: u64, interval: u64, last_imbalance: f64, threshold: f64) -> bool {
    step % interval.max(1) == 0 || last_imbalance > threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_tiles(tree: &PartitionTree) {
        let d = tree.dims();
        let mut hits = vec![0u32; d[0] * d[1] * d[2]];
        for b in tree.leaves() {
            assert!(!b.is_empty());
            for c in b.cells() {
                hits[(c[0] * d[1] + c[1]) * d[2] + c[2]] += 1;
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn load_examples() {
        let dims = [4, 4, 4];
        let empty = estimate_loads(&vec![0; 64], dims, [true; 3]).unwrap();
        assert!(empty.costs().iter().all(|&c| c == 0.0));

        let mut occ = vec![0; 64];
        occ[0] = 10;
        let f = estimate_loads(&occ, dims, [true; 3]).unwrap();
        assert_eq!(f.get([0, 0, 0]), 45.0);

        let mut occ = vec![0; 64];
        occ[0] = 3;
        occ[16] = 3; // cell (1,0,0)
        let f = estimate_loads(&occ, dims, [true; 3]).unwrap();
        assert_eq!(f.get([0, 0, 0]), 7.5);
        assert_eq!(f.get([1, 0, 0]), 7.5);
        assert_eq!(f.total(), 15.0);
    }

    #[test]
    fn uniform_examples() {
        let t = uniform_partition([4, 4, 4], 8).unwrap();
        assert_tiles(&t);
        for b in t.leaves() {
            assert_eq!(b.dims(), [2, 2, 2]);
        }
        let t = uniform_partition([4, 4, 4], 1).unwrap();
        assert_eq!(t.leaves(), vec![CellBox::full([4, 4, 4])]);
        let t = uniform_partition([4, 4, 4], 2).unwrap();
        assert_eq!(t.leaves()[0], CellBox::new([0, 0, 0], [2, 4, 4]));
        assert_eq!(t.leaves()[1], CellBox::new([2, 0, 0], [4, 4, 4]));
        assert!(uniform_partition([4, 4, 4], 65).is_err());
        assert!(uniform_partition([4, 4, 4], 7).is_err());
    }

    #[test]
    fn kd_examples() {
        let f = CellLoadField::uniform([4, 4, 4], 1.0);
        let t = kd_partition(&f, 2, Axis::X).unwrap();
        assert_eq!(t.splits()[0].at, 2);
        assert_eq!(t.splits()[0].axis, Axis::X);

        let mut f = CellLoadField::uniform([4, 4, 4], 0.0);
        f.set([0, 0, 0], 10.0);
        let t = kd_partition(&f, 2, Axis::X).unwrap();
        assert_eq!(t.splits()[0].at, 1);

        let t = kd_partition(&f, 1, Axis::X).unwrap();
        assert!(t.splits().is_empty());
        assert_eq!(t.leaves(), vec![CellBox::full([4, 4, 4])]);
    }

    #[test]
    fn kd_respects_alternation_and_tiles() {
        let mut f = CellLoadField::uniform([8, 6, 5], 1.0);
        f.set([1, 2, 3], 50.0);
        for n in 1..=24 {
            let t = kd_partition(&f, n, Axis::Y).unwrap();
            assert_tiles(&t);
            for path in t.axis_paths() {
                let mut a = Axis::Y;
                for &x in &path {
                    assert_eq!(x, a);
                    a = a.next();
                }
            }
        }
    }

    #[test]
    fn kd_infeasible() {
        let f = CellLoadField::uniform([1, 1, 8], 1.0);
        // x and y cannot be split, so only one z split is ever reachable
        assert!(matches!(kd_partition(&f, 4, Axis::X), Err(Error::PartitionInfeasible(_))));
        assert!(kd_partition(&f, 100, Axis::X).is_err());
    }

    #[test]
    fn imbalance_examples() {
        let f = CellLoadField::uniform([4, 4, 4], 1.0);
        let t = uniform_partition([4, 4, 4], 8).unwrap();
        assert_eq!(measure_imbalance(&t, &f).imbalance, 1.0);

        let mut f = CellLoadField::uniform([4, 4, 4], 0.0);
        f.set([0, 0, 0], 5.0);
        let t = uniform_partition([4, 4, 4], 2).unwrap();
        assert_eq!(measure_imbalance(&t, &f).imbalance, 2.0);
    }

    #[test]
    fn rebalance_trigger() {
        assert!(should_rebalance(100, 100, 1.0, 1.5));
        assert!(!should_rebalance(50, 100, 1.05, 1.5));
        assert!(should_rebalance(51, 100, 2.0, 1.5));
    }

    #[test]
    fn deterministic() {
        let mut f = CellLoadField::uniform([9, 9, 9], 1.0);
        f.set([4, 4, 4], 100.0);
        assert_eq!(kd_partition(&f, 7, Axis::X).unwrap(), kd_partition(&f, 7, Axis::X).unwrap());
    }
}
