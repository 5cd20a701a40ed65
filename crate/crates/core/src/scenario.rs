//! Initial configurations: bulk FCC fluid, free droplet, sessile droplet.

use rand_distr::{Distribution, StandardNormal};

use crate::config::{ScenarioKind, ScenarioSpec};
use crate::dynamics::{kinetic_energy, remove_net_momentum, temperature_from};
use crate::error::{Error, Result};
use crate::geom::{Domain, Vec3};
use crate::molecule::Molecule;
use crate::rng::{Purpose, Rng};

/// Closest approach of a vapour site to the liquid surface.
const VAPOR_GAP: f64 = 1.0;
/// Lowest admissible height above a wall.
pub const WALL_CLEARANCE: f64 = 0.8;

const FCC_BASIS: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];

/// A generated configuration. Liquid molecules come first, with ids `0..n_liquid`.
#[derive(Clone, Debug)]
pub struct Generated {
    pub molecules: Vec<Molecule>,
    pub n_liquid: usize,
}

/// FCC lattice constant for number density `rho`.
pub fn fcc_constant(rho: f64) -> f64 {
    (4.0 / rho).cbrt()
}

/// Unit cells per axis if an FCC lattice at `rho` tiles `lengths` exactly.
pub fn fcc_cells(rho: f64, lengths: Vec3) -> Result<[usize; 3]> {
    let a = fcc_constant(rho);
    let mut cells = [0usize; 3];
    let mut exact = true;
    for axis in 0..3 {
        let k = lengths[axis] / a;
        let n = k.round().max(1.0);
        cells[axis] = n as usize;
        if (k - n).abs() > 1e-6 * n {
            exact = false;
        }
    }
    if !exact {
        let nearest = 4.0 * (cells[0] * cells[1] * cells[2]) as f64 / lengths.product();
        return Err(Error::Generation {
            message: format!("density {rho} does not tile the box with FCC cells (a = {a})"),
            nearest_density: nearest,
        });
    }
    Ok(cells)
}

/// Box that holds `cells` FCC unit cells at density `rho`.
pub fn fcc_box(rho: f64, cells: [usize; 3]) -> Vec3 {
    let a = fcc_constant(rho);
    Vec3::new(cells[0] as f64, cells[1] as f64, cells[2] as f64) * a
}

/// FCC sites filling `lengths` with the given cell counts (spacing `L/n`).
fn fcc_sites(lengths: Vec3, cells: [usize; 3], origin_offset: f64) -> Vec<Vec3> {
    let a = Vec3::new(
        lengths.x / cells[0] as f64,
        lengths.y / cells[1] as f64,
        lengths.z / cells[2] as f64,
    );
    let mut out = Vec::with_capacity(4 * cells[0] * cells[1] * cells[2]);
    for i in 0..cells[0] {
        for j in 0..cells[1] {
            for k in 0..cells[2] {
                for b in FCC_BASIS {
                    out.push(Vec3::new(
                        (i as f64 + b[0] + origin_offset) * a.x,
                        (j as f64 + b[1] + origin_offset) * a.y,
                        (k as f64 + b[2] + origin_offset) * a.z,
                    ));
                }
            }
        }
    }
    out
}

/// FCC sites at density `rho` inside a ball, lattice anchored at `center`.
fn fcc_ball(rho: f64, center: Vec3, radius: f64) -> Vec<Vec3> {
    let a = fcc_constant(rho);
    let n = (radius / a).ceil() as i64 + 1;
    let mut out = Vec::new();
    // a quarter-cell offset keeps sites off the centre and off symmetry planes
    let off = 0.25;
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                for b in FCC_BASIS {
                    let p = Vec3::new(i as f64 + b[0] + off, j as f64 + b[1] + off, k as f64 + b[2] + off) * a;
                    if p.norm() < radius {
                        out.push(center + p);
                    }
                }
            }
        }
    }
    out
}

/// Vapour sites: an FCC lattice over the whole box whose site count is the
/// closest achievable to `rho · V` (floor/ceil cell count per axis).
fn vapor_sites(rho: f64, lengths: Vec3) -> Vec<Vec3> {
    let a = fcc_constant(rho);
    let target = rho * lengths.product();
    let k: [f64; 3] = std::array::from_fn(|i| lengths[i] / a);
    let mut best = [1usize; 3];
    let mut best_err = f64::INFINITY;
    for mask in 0..8 {
        let cells: [usize; 3] = std::array::from_fn(|i| {
            let v = if mask >> i & 1 == 1 { k[i].ceil() } else { k[i].floor() };
            v.max(1.0) as usize
        });
        let err = (4.0 * (cells[0] * cells[1] * cells[2]) as f64 - target).abs();
        if err < best_err {
            best_err = err;
            best = cells;
        }
    }
    fcc_sites(lengths, best, 0.25)
}

/// Maxwell-Boltzmann velocities at exactly `temperature`, zero net momentum.
pub fn assign_velocities(molecules: &mut [Molecule], masses: &[f64], temperature: f64, domain: &Domain, seed: u64) -> Result<()> {
    let mut rng = Rng::substream(seed, Purpose::Velocities, 0);
    for m in molecules.iter_mut() {
        let s = (temperature / masses[m.species]).sqrt();
        let g: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        m.v = Vec3::from_array(g) * s;
    }
    remove_net_momentum(molecules, masses);
    if molecules.len() >= 2 {
        let t = temperature_from(kinetic_energy(molecules, masses), molecules.len(), domain)?;
        if t > 0.0 {
            let f = (temperature / t).sqrt();
            for m in molecules.iter_mut() {
                m.v *= f;
            }
        }
    }
    Ok(())
}

/// Builds the initial molecule set for `spec` in `domain`.
pub fn generate_scenario(
    spec: &ScenarioSpec,
    domain: &Domain,
    cutoff: f64,
    species: usize,
    masses: &[f64],
    seed: u64,
) -> Result<Generated> {
    let l = domain.lengths;
    let (liquid, vapor): (Vec<Vec3>, Vec<Vec3>) = match spec.kind {
        ScenarioKind::Bulk => {
            let cells = fcc_cells(spec.density, l)?;
            (fcc_sites(l, cells, 0.25), Vec::new())
        }
        ScenarioKind::Droplet | ScenarioKind::Sessile => {
            let limit = l.min_component() / 2.0 - cutoff;
            if spec.radius > 0.0 && spec.radius >= limit {
                return Err(Error::config("scenario.radius", format!("must be below min(L)/2 - cutoff = {limit}")));
            }
            let sessile = spec.kind == ScenarioKind::Sessile;
            if sessile && domain.wall.is_none() {
                return Err(Error::config("scenario.kind", "sessile scenario needs a wall"));
            }
            let center = if sessile {
                Vec3::new(l.x / 2.0, l.y / 2.0, spec.center_height)
            } else {
                l * 0.5
            };
            let z_min = if sessile { WALL_CLEARANCE } else { f64::NEG_INFINITY };
            let liquid: Vec<Vec3> = if spec.radius > 0.0 {
                fcc_ball(spec.liquid_density, center, spec.radius)
                    .into_iter()
                    .filter(|p| p.z >= z_min)
                    .collect()
            } else {
                Vec::new()
            };
            let keep_out = if spec.radius > 0.0 { spec.radius + VAPOR_GAP } else { 0.0 };
            let vapor = vapor_sites(spec.vapor_density, l)
                .into_iter()
                .filter(|p| p.z >= z_min && (*p - center).norm() >= keep_out)
                .filter(|p| !sessile || p.z <= l.z - WALL_CLEARANCE)
                .collect();
            (liquid, vapor)
        }
    };
    let n_liquid = liquid.len();
    let mut molecules: Vec<Molecule> = liquid
        .into_iter()
        .chain(vapor)
        .enumerate()
        .map(|(i, r)| Molecule::new(i as u64, species, r, Vec3::ZERO))
        .collect();
    for m in &molecules {
        for a in 0..3 {
            if !(m.r[a] >= 0.0 && m.r[a] < l[a]) {
                return Err(Error::Generation {
                    message: format!("site {:?} falls outside the box", m.r),
                    nearest_density: spec.density,
                });
            }
        }
    }
    if molecules.is_empty() {
        return Err(Error::Generation {
            message: "scenario produced no molecules".into(),
            nearest_density: 0.0,
        });
    }
    assign_velocities(&mut molecules, masses, spec.temperature, domain, seed)?;
    Ok(Generated { molecules, n_liquid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sample_temperature, total_momentum};
    use crate::forcefield::WallSpec;

    fn bulk(rho: f64) -> ScenarioSpec {
        ScenarioSpec {
            kind: ScenarioKind::Bulk,
            density: rho,
            temperature: 0.8,
            ..Default::default()
        }
    }

    #[test]
    fn bulk_site_count_is_4n3() {
        let l = fcc_box(0.8, [6, 6, 6]);
        let g = generate_scenario(&bulk(0.8), &Domain::periodic_box(l), 2.5, 0, &[1.0], 1).unwrap();
        assert_eq!(g.molecules.len(), 4 * 216);
        let rho = g.molecules.len() as f64 / l.product();
        assert!((rho - 0.8).abs() < 1e-12);
        let d = Domain::periodic_box(l);
        assert!((sample_temperature(&g.molecules, &[1.0], &d).unwrap() - 0.8).abs() < 1e-12);
        assert!(total_momentum(&g.molecules, &[1.0]).norm() < 1e-12);
    }

    #[test]
    fn unachievable_density_reports_nearest() {
        let d = Domain::periodic_box(Vec3::splat(10.0));
        match generate_scenario(&bulk(0.8), &d, 2.5, 0, &[1.0], 1) {
            Err(Error::Generation { nearest_density, .. }) => {
                // 10 / 1.70998 = 5.85 -> 6 cells per axis
                assert!((nearest_density - 864.0 / 1000.0).abs() < 1e-12);
            }
            other => panic!("expected generation error, got {other:?}"),
        }
    }

    #[test]
    fn zero_radius_droplet_is_vapor() {
        let d = Domain::periodic_box(Vec3::splat(20.0));
        let spec = ScenarioSpec {
            kind: ScenarioKind::Droplet,
            radius: 0.0,
            vapor_density: 0.02,
            ..Default::default()
        };
        let g = generate_scenario(&spec, &d, 2.5, 0, &[1.0], 3).unwrap();
        assert_eq!(g.n_liquid, 0);
        let rho = g.molecules.len() as f64 / d.volume();
        assert!((rho - 0.02).abs() < 0.005, "{rho}");
    }

    #[test]
    fn droplet_liquid_core() {
        let d = Domain::periodic_box(Vec3::splat(24.0));
        let spec = ScenarioSpec {
            kind: ScenarioKind::Droplet,
            radius: 5.0,
            liquid_density: 0.8,
            vapor_density: 0.02,
            ..Default::default()
        };
        let g = generate_scenario(&spec, &d, 2.5, 0, &[1.0], 3).unwrap();
        let expect = 0.8 * 4.0 / 3.0 * std::f64::consts::PI * 125.0;
        assert!((g.n_liquid as f64 - expect).abs() / expect < 0.1, "{} vs {expect}", g.n_liquid);
        // no pair closer than 0.8 sigma
        let min = g
            .molecules
            .iter()
            .flat_map(|a| g.molecules.iter().filter(move |b| b.id > a.id).map(move |b| (a.r - b.r).norm()))
            .fold(f64::INFINITY, f64::min);
        assert!(min > 0.8, "{min}");
    }

    #[test]
    fn sessile_sits_on_wall() {
        let d = Domain {
            lengths: Vec3::new(24.0, 24.0, 16.0),
            periodic: [true, true, false],
            reflecting: [false, false, true],
            wall: Some(WallSpec::new(1.0, 1.0, 2.5).unwrap()),
        };
        let spec = ScenarioSpec {
            kind: ScenarioKind::Sessile,
            radius: 5.0,
            ..Default::default()
        };
        let g = generate_scenario(&spec, &d, 2.5, 0, &[1.0], 5).unwrap();
        assert!(g.molecules.iter().all(|m| m.r.z > 0.0));
        assert!(g.molecules[..g.n_liquid].iter().any(|m| m.r.z < 1.5));
    }
}
