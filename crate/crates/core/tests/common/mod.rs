//! Reference implementations used as test oracles. Deliberately naive and
//! written without the library's force or cell code.
#![allow(dead_code)]

use ljmd::geom::{Domain, Vec3};
use ljmd::Molecule;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// All-pairs minimum-image truncated-shifted LJ. Returns per-molecule forces,
/// total energy and virial Σ r·f.
pub fn brute_force(
    positions: &[Vec3],
    sigma: impl Fn(usize, usize) -> f64,
    epsilon: impl Fn(usize, usize) -> f64,
    domain: &Domain,
    cutoff: f64,
) -> (Vec<Vec3>, f64, f64) {
    let n = positions.len();
    let mut f = vec![[0.0f64; 3]; n];
    let mut u = 0.0;
    let mut w = 0.0;
    let l = domain.lengths.to_array();
    for i in 0..n {
        for j in i + 1..n {
            let mut d = [0.0; 3];
            for a in 0..3 {
                let mut x = positions[i].to_array()[a] - positions[j].to_array()[a];
                if domain.periodic[a] {
                    x -= l[a] * (x / l[a]).round();
                }
                d[a] = x;
            }
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if r2 >= cutoff * cutoff {
                continue;
            }
            let (s, e) = (sigma(i, j), epsilon(i, j));
            let lj = |r: f64| 4.0 * e * ((s / r).powi(12) - (s / r).powi(6));
            let r = r2.sqrt();
            u += lj(r) - lj(cutoff);
            // -du/dr / r
            let fr = 24.0 * e * (2.0 * (s / r).powi(12) - (s / r).powi(6)) / r2;
            w += fr * r2;
            for a in 0..3 {
                f[i][a] += fr * d[a];
                f[j][a] -= fr * d[a];
            }
        }
    }
    (f.into_iter().map(Vec3::from_array).collect(), u, w)
}

/// Uniform random positions with a minimum pair separation (minimum image).
pub fn random_config(n: usize, lengths: Vec3, min_dist: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let domain = Domain::periodic_box(lengths);
    let mut out: Vec<Vec3> = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        assert!(tries < 10_000_000, "could not place {n} molecules");
        let p = Vec3::new(
            rng.random::<f64>() * lengths.x,
            rng.random::<f64>() * lengths.y,
            rng.random::<f64>() * lengths.z,
        );
        if out
            .iter()
            .all(|q| ljmd::minimum_image(p - *q, &domain).norm2() >= min_dist * min_dist)
        {
            out.push(p);
        }
    }
    out
}

pub fn random_velocities(n: usize, scale: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale)
        .collect()
}

pub fn molecules(positions: &[Vec3], velocities: &[Vec3]) -> Vec<Molecule> {
    positions
        .iter()
        .zip(velocities)
        .enumerate()
        .map(|(i, (r, v))| Molecule::new(i as u64, 0, *r, *v))
        .collect()
}

/// Largest connected cluster under the bond criterion `r < bond` (minimum
/// image on periodic axes). Returns member indices.
pub fn largest_cluster(positions: &[Vec3], domain: &Domain, bond: f64) -> Vec<usize> {
    let n = positions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if ljmd::minimum_image(positions[i] - positions[j], domain).norm2() < bond * bond {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut size = vec![0usize; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        size[r] += 1;
    }
    let root = (0..n).max_by_key(|&i| (size[i], std::cmp::Reverse(i))).unwrap();
    (0..n).filter(|&i| find(&mut parent, i) == root).collect()
}

/// Mean and standard error from `blocks` equal block averages.
pub fn block_stats(series: &[f64], blocks: usize) -> (f64, f64) {
    let m = series.len() / blocks;
    assert!(m > 0, "series too short for {blocks} blocks");
    let means: Vec<f64> = (0..blocks).map(|b| series[b * m..(b + 1) * m].iter().sum::<f64>() / m as f64).collect();
    let mean = means.iter().sum::<f64>() / blocks as f64;
    let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (blocks - 1) as f64;
    (mean, (var / blocks as f64).sqrt())
}

/// Least-squares slope and its standard error.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let se = (resid / (n - 2.0) / sxx).sqrt();
    (slope, se)
}

/// Naive feasibility: can `n` workers be placed on a `d` box by halving
/// splits that cycle x → y → z starting at `axis`? No memoisation.
pub fn naive_feasible(d: [usize; 3], n: usize, axis: usize) -> bool {
    if d.contains(&0) {
        return false;
    }
    if n == 1 {
        return true;
    }
    if d[0] * d[1] * d[2] < n {
        return false;
    }
    let (nl, nr) = (n / 2, n - n / 2);
    (1..d[axis]).any(|s| {
        let (mut l, mut r) = (d, d);
        l[axis] = s;
        r[axis] = d[axis] - s;
        naive_feasible(l, nl, (axis + 1) % 3) && naive_feasible(r, nr, (axis + 1) % 3)
    })
}

/// Checks every split of a kd tree against an exhaustive plane scan on its
/// region, the x → y → z axis cycle, the worker halving, and exact tiling of
/// the grid by the leaves. `load(c)` is the cost of global cell `c`.
pub fn check_kd_tree(
    tree: &ljmd::balance::PartitionTree,
    load: impl Fn([usize; 3]) -> f64,
    axis0: usize,
) -> Result<(), String> {
    use ljmd::balance::PartitionNode;
    let dims = tree.dims();
    fn region_load(lo: [usize; 3], hi: [usize; 3], load: &dyn Fn([usize; 3]) -> f64) -> f64 {
        let mut s = 0.0;
        for x in lo[0]..hi[0] {
            for y in lo[1]..hi[1] {
                for z in lo[2]..hi[2] {
                    s += load([x, y, z]);
                }
            }
        }
        s
    }
    fn walk(
        n: &PartitionNode,
        depth: usize,
        axis0: usize,
        workers: usize,
        load: &dyn Fn([usize; 3]) -> f64,
    ) -> Result<(), String> {
        let PartitionNode::Split {
            axis,
            at,
            region,
            left_workers,
            right_workers,
            left,
            right,
        } = n
        else {
            return if workers == 1 { Ok(()) } else { Err(format!("leaf holds {workers} workers")) };
        };
        let a = (axis0 + depth) % 3;
        if axis.index() != a {
            return Err(format!("depth {depth}: axis {axis:?}, expected {a}"));
        }
        let (nl, nr) = (workers / 2, workers - workers / 2);
        if (*left_workers, *right_workers) != (nl, nr) {
            return Err(format!("depth {depth}: worker split {left_workers}/{right_workers}"));
        }
        let d = region.dims();
        let mut best: Option<(usize, f64)> = None;
        for p in region.lo[a] + 1..region.hi[a] {
            let (mut dl, mut dr) = (d, d);
            dl[a] = p - region.lo[a];
            dr[a] = region.hi[a] - p;
            if !naive_feasible(dl, nl, (a + 1) % 3) || !naive_feasible(dr, nr, (a + 1) % 3) {
                continue;
            }
            let (mut lhi, mut rlo) = (region.hi, region.lo);
            lhi[a] = p;
            rlo[a] = p;
            let cost = (region_load(region.lo, lhi, load) / nl as f64).max(region_load(rlo, region.hi, load) / nr as f64);
            if best.map_or(true, |(_, c)| cost < c) {
                best = Some((p, cost));
            }
        }
        match best {
            Some((p, _)) if p == *at => {}
            other => return Err(format!("depth {depth} region {region:?}: plane {at}, exhaustive scan gives {other:?}")),
        }
        walk(left, depth + 1, axis0, nl, load)?;
        walk(right, depth + 1, axis0, nr, load)
    }
    walk(tree.root(), 0, axis0, tree.worker_count(), &load)?;

    // exact tiling
    let mut cover = vec![0u32; dims[0] * dims[1] * dims[2]];
    for b in tree.leaves() {
        if b.dims().contains(&0) {
            return Err(format!("empty leaf {b:?}"));
        }
        for x in b.lo[0]..b.hi[0] {
            for y in b.lo[1]..b.hi[1] {
                for z in b.lo[2]..b.hi[2] {
                    cover[(x * dims[1] + y) * dims[2] + z] += 1;
                }
            }
        }
    }
    if cover.iter().any(|&c| c != 1) {
        return Err("leaves do not tile the grid exactly".into());
    }
    Ok(())
}

/// Spherical blob: `inside` per cell within radius `r` of the grid centre
/// (cell centres), `outside` elsewhere.
pub fn blob_loads(dims: [usize; 3], r: f64, inside: f64, outside: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let d2: f64 = [x, y, z]
                    .iter()
                    .zip(dims)
                    .map(|(&c, n)| (c as f64 + 0.5 - n as f64 / 2.0).powi(2))
                    .sum();
                out.push(if d2 <= r * r { inside } else { outside });
            }
        }
    }
    out
}
