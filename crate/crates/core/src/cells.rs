//! Linked-cell neighbour search.
//!
//! The global box is cut into `floor(L / r_c)` cells per axis, so every cell
//! edge is at least the cutoff and all interacting pairs sit in the same or
//! in adjacent cells. A [`CellGrid`] covers one worker's cuboid block of
//! global cells plus a one-cell halo layer on every side. Halo cells hold
//! copies of remote molecules whose positions are already shifted by the
//! periodic image vector, so pair separations inside a grid never need the
//! minimum-image convention.

use crate::error::{Error, Result};
use crate::geom::{Domain, Vec3};

/// Half-open box of global cell indices `[lo, hi)` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CellBox {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> Self {
        CellBox { lo, hi }
    }

    pub fn full(counts: [usize; 3]) -> Self {
        CellBox {
            lo: [0; 3],
            hi: counts,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2]]
    }

    pub fn cell_count(&self) -> usize {
        let d = self.dims();
        d[0] * d[1] * d[2]
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.hi[a] <= self.lo[a])
    }

    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| c[a] >= self.lo[a] && c[a] < self.hi[a])
    }

    /// All cells of the box in x-major order.
    pub fn cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let lo = self.lo;
        let hi = self.hi;
        (lo[0]..hi[0]).flat_map(move |x| (lo[1]..hi[1]).flat_map(move |y| (lo[2]..hi[2]).map(move |z| [x, y, z])))
    }
}

/// Global cell layout shared by every worker.
#[derive(Clone, Debug, PartialEq)]
pub struct GridGeometry {
    counts: [usize; 3],
    cell_len: Vec3,
    domain: Domain,
    cutoff: f64,
}

impl GridGeometry {
    pub fn new(domain: &Domain, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::config("domain.cutoff", format!("must be positive, got {cutoff}")));
        }
        let mut counts = [0usize; 3];
        let mut cell_len = Vec3::ZERO;
        for axis in 0..3 {
            let l = domain.lengths[axis];
            let n = (l / cutoff).floor() as usize;
            if n < 3 {
                return Err(Error::DomainTooSmall { axis, cells: n });
            }
            counts[axis] = n;
            cell_len[axis] = l / n as f64;
        }
        Ok(GridGeometry {
            counts,
            cell_len,
            domain: domain.clone(),
            cutoff,
        })
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn cell_lengths(&self) -> Vec3 {
        self.cell_len
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn total_cells(&self) -> usize {
        self.counts[0] * self.counts[1] * self.counts[2]
    }

    pub fn linear(&self, c: [usize; 3]) -> usize {
        (c[0] * self.counts[1] + c[1]) * self.counts[2] + c[2]
    }

    pub fn unlinear(&self, idx: usize) -> [usize; 3] {
        let z = idx % self.counts[2];
        let y = (idx / self.counts[2]) % self.counts[1];
        let x = idx / (self.counts[1] * self.counts[2]);
        [x, y, z]
    }

    /// Cell holding `p`, using half-open intervals; positions on the upper
    /// boundary (or rounded onto it) go to the last cell.
    #[inline]
    pub fn cell_of(&self, p: Vec3) -> [usize; 3] {
        let mut c = [0usize; 3];
        for axis in 0..3 {
            let f = (p[axis] / self.cell_len[axis]).floor();
            c[axis] = if f <= 0.0 {
                0
            } else {
                (f as usize).min(self.counts[axis] - 1)
            };
        }
        c
    }

    /// True when `p` lies inside the domain (upper face included for the clamp rule).
    pub fn in_domain(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= 0.0 && p[a] <= self.domain.lengths[a])
    }

    /// Wraps a possibly out-of-range cell index; `None` beyond a non-periodic face.
    /// Also returns the image shift to add to positions in the source cell.
    pub fn wrap_cell(&self, g: [i64; 3]) -> Option<([usize; 3], Vec3)> {
        let mut out = [0usize; 3];
        let mut shift = Vec3::ZERO;
        for axis in 0..3 {
            let n = self.counts[axis] as i64;
            let v = g[axis];
            if (0..n).contains(&v) {
                out[axis] = v as usize;
            } else if self.domain.periodic[axis] {
                let w = v.rem_euclid(n);
                out[axis] = w as usize;
                shift[axis] = ((v - w) / n) as f64 * self.domain.lengths[axis];
            } else {
                return None;
            }
        }
        Some((out, shift))
    }
}

/// Where a halo cell gets its contents from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HaloLink {
    pub local_cell: usize,
    pub source: [usize; 3],
    pub shift: Vec3,
}

const FORWARD: [[i64; 3]; 13] = [
    [1, -1, -1],
    [1, -1, 0],
    [1, -1, 1],
    [1, 0, -1],
    [1, 0, 0],
    [1, 0, 1],
    [1, 1, -1],
    [1, 1, 0],
    [1, 1, 1],
    [0, 1, -1],
    [0, 1, 0],
    [0, 1, 1],
    [0, 0, 1],
];

#[derive(Clone, Debug)]
pub struct CellGrid {
    geom: GridGeometry,
    owned: CellBox,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
    owned_flag: Vec<bool>,
    n_owned: usize,
}

/// Grid over `owned` (global cell indices) plus a one-cell halo.
pub fn build_grid(domain: &Domain, cutoff: f64, owned: CellBox) -> Result<CellGrid> {
    let geom = GridGeometry::new(domain, cutoff)?;
    CellGrid::new(geom, owned)
}

impl CellGrid {
    pub fn new(geom: GridGeometry, owned: CellBox) -> Result<Self> {
        let counts = geom.counts();
        if owned.is_empty() || (0..3).any(|a| owned.hi[a] > counts[a]) {
            return Err(Error::PartitionInconsistency(format!(
                "owned box {owned:?} is empty or exceeds the global grid {counts:?}"
            )));
        }
        let od = owned.dims();
        let dims = [od[0] + 2, od[1] + 2, od[2] + 2];
        let total = dims[0] * dims[1] * dims[2];
        let mut owned_flag = vec![false; total];
        for x in 1..=od[0] {
            for y in 1..=od[1] {
                for z in 1..=od[2] {
                    owned_flag[(x * dims[1] + y) * dims[2] + z] = true;
                }
            }
        }
        Ok(CellGrid {
            geom,
            owned,
            dims,
            cells: vec![Vec::new(); total],
            owned_flag,
            n_owned: 0,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn owned_box(&self) -> CellBox {
        self.owned
    }

    pub fn cell_counts(&self) -> [usize; 3] {
        self.geom.counts()
    }

    pub fn cell_lengths(&self) -> Vec3 {
        self.geom.cell_lengths()
    }

    pub fn local_dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn local_cell_count(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    fn local_linear(&self, l: [usize; 3]) -> usize {
        (l[0] * self.dims[1] + l[1]) * self.dims[2] + l[2]
    }

    fn local_coords(&self, idx: usize) -> [usize; 3] {
        let z = idx % self.dims[2];
        let y = (idx / self.dims[2]) % self.dims[1];
        let x = idx / (self.dims[1] * self.dims[2]);
        [x, y, z]
    }

    /// Local index of an (unwrapped) global cell, if it lies in owned+halo.
    pub fn local_of_global(&self, g: [i64; 3]) -> Option<usize> {
        let mut l = [0usize; 3];
        for a in 0..3 {
            let v = g[a] - self.owned.lo[a] as i64 + 1;
            if v < 0 || v >= self.dims[a] as i64 {
                return None;
            }
            l[a] = v as usize;
        }
        Some(self.local_linear(l))
    }

    /// Global (unwrapped) index of a local cell.
    pub fn global_of_local(&self, idx: usize) -> [i64; 3] {
        let l = self.local_coords(idx);
        [0, 1, 2].map(|a| l[a] as i64 + self.owned.lo[a] as i64 - 1)
    }

    pub fn is_owned_cell(&self, local: usize) -> bool {
        self.owned_flag[local]
    }

    pub fn cell(&self, local: usize) -> &[u32] {
        &self.cells[local]
    }

    pub fn n_owned(&self) -> usize {
        self.n_owned
    }

    pub fn clear(&mut self) {
        for c in &mut self.cells {
            c.clear();
        }
        self.n_owned = 0;
    }

    /// Indexes `positions` as this worker's owned molecules (indices `0..len`).
    /// Clears any previous contents, halo included.
    pub fn assign(&mut self, positions: &[Vec3], ids: &[u64]) -> Result<()> {
        self.clear();
        for (i, &p) in positions.iter().enumerate() {
            let local = self.owned_local_of(p).ok_or_else(|| Error::OwnershipViolation {
                id: ids.get(i).copied().unwrap_or(i as u64),
                position: p.to_array(),
            })?;
            self.cells[local].push(i as u32);
        }
        self.n_owned = positions.len();
        Ok(())
    }

    /// Local owned cell for a global position, `None` if it lies elsewhere.
    pub fn owned_local_of(&self, p: Vec3) -> Option<usize> {
        if !self.geom.in_domain(p) || !p.is_finite() {
            return None;
        }
        let g = self.geom.cell_of(p);
        if !self.owned.contains(g) {
            return None;
        }
        self.local_of_global([g[0] as i64, g[1] as i64, g[2] as i64])
    }

    /// Registers a halo copy stored at `index` (which must be `>= n_owned`).
    pub fn insert_halo(&mut self, index: usize, local_cell: usize) {
        debug_assert!(!self.owned_flag[local_cell]);
        debug_assert!(index >= self.n_owned);
        self.cells[local_cell].push(index as u32);
    }

    /// Moves owned molecule `index` between two owned cells.
    pub fn relocate(&mut self, index: usize, from: usize, to: usize) {
        if from == to {
            return;
        }
        let list = &mut self.cells[from];
        let pos = list.iter().position(|&m| m as usize == index).expect("molecule not in source cell");
        list.swap_remove(pos);
        self.cells[to].push(index as u32);
    }

    /// Halo cells and the wrapped global source cell feeding each one.
    pub fn halo_links(&self) -> Vec<HaloLink> {
        let mut out = Vec::new();
        for local in 0..self.cells.len() {
            if self.owned_flag[local] {
                continue;
            }
            let g = self.global_of_local(local);
            if let Some((source, shift)) = self.geom.wrap_cell(g) {
                out.push(HaloLink { local_cell: local, source, shift });
            }
        }
        out
    }

    /// Owned cells as `(local index, global cell)`.
    pub fn owned_cells(&self) -> impl Iterator<Item = (usize, [usize; 3])> + '_ {
        self.owned.cells().map(move |g| {
            let l = self.local_of_global([g[0] as i64, g[1] as i64, g[2] as i64]).unwrap();
            (l, g)
        })
    }

    /// Visits every pair closer than the cutoff exactly once per grid.
    ///
    /// The first index is always an owned molecule; the second is owned
    /// (`< n_owned`) or a halo copy. `dr = positions[i] - positions[j]`.
    /// Owned cells pair with themselves and their 13 forward neighbours;
    /// halo cells pair with their forward owned neighbours, which covers
    /// every owned-halo adjacency once. Halo-halo pairs are skipped.
    pub fn for_each_pair<F: FnMut(usize, usize, Vec3, f64)>(&self, positions: &[Vec3], mut visit: F) {
        let rc2 = self.geom.cutoff * self.geom.cutoff;
        let [dx, dy, dz] = self.dims;
        for lx in 0..dx {
            for ly in 0..dy {
                for lz in 0..dz {
                    let b = self.local_linear([lx, ly, lz]);
                    let cb = &self.cells[b];
                    if cb.is_empty() {
                        continue;
                    }
                    let b_owned = self.owned_flag[b];
                    if b_owned {
                        for (k, &i) in cb.iter().enumerate() {
                            let pi = positions[i as usize];
                            for &j in &cb[k + 1..] {
                                let dr = pi - positions[j as usize];
                                let r2 = dr.norm2();
                                if r2 < rc2 {
                                    visit(i as usize, j as usize, dr, r2);
                                }
                            }
                        }
                    }
                    for off in &FORWARD {
                        let nx = lx as i64 + off[0];
                        let ny = ly as i64 + off[1];
                        let nz = lz as i64 + off[2];
                        if nx < 0 || ny < 0 || nz < 0 || nx >= dx as i64 || ny >= dy as i64 || nz >= dz as i64 {
                            continue;
                        }
                        let n = self.local_linear([nx as usize, ny as usize, nz as usize]);
                        let n_owned = self.owned_flag[n];
                        if !b_owned && !n_owned {
                            continue;
                        }
                        let cn = &self.cells[n];
                        for &i in cb {
                            let pi = positions[i as usize];
                            for &j in cn {
                                let dr = pi - positions[j as usize];
                                let r2 = dr.norm2();
                                if r2 < rc2 {
                                    if b_owned {
                                        visit(i as usize, j as usize, dr, r2);
                                    } else {
                                        visit(j as usize, i as usize, -dr, r2);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Owned local cells within one cell of `global` (with periodic wrap).
    ///
    /// Only meaningful for a grid owning the whole domain.
    pub fn neighbor_cells(&self, global: [usize; 3]) -> Vec<usize> {
        let mut out = Vec::with_capacity(27);
        for ox in -1i64..=1 {
            for oy in -1i64..=1 {
                for oz in -1i64..=1 {
                    let g = [global[0] as i64 + ox, global[1] as i64 + oy, global[2] as i64 + oz];
                    if let Some((w, _)) = self.geom.wrap_cell(g) {
                        if self.owned.contains(w) {
                            if let Some(l) = self.local_of_global([w[0] as i64, w[1] as i64, w[2] as i64]) {
                                out.push(l);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Number of owned molecules in each owned cell, keyed by global linear index.
    pub fn owned_occupancy(&self) -> Vec<(usize, usize)> {
        self.owned_cells()
            .map(|(l, g)| {
                let n = self.cells[l].iter().filter(|&&m| (m as usize) < self.n_owned).count();
                (self.geom.linear(g), n)
            })
            .collect()
    }
}
