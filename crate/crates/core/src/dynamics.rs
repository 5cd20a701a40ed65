//! Velocity Verlet integration, velocity-rescaling thermostat and sampled
//! observables.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::forcefield::EnergyVirial;
use crate::geom::{minimum_image, wrap_position, Domain, Vec3};
use crate::molecule::Molecule;

/// One row of the observables table.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Observables {
    pub step: u64,
    pub time: f64,
    pub t_inst: f64,
    /// Potential energy inside the cutoff (pairs + wall), without the tail correction.
    pub u_pot: f64,
    pub e_kin: f64,
    /// `u_pot + e_kin + u_lrc`.
    pub e_total: f64,
    pub pressure: f64,
    pub n: usize,
    pub density: f64,
    pub imbalance: f64,
}

/// Degrees of freedom: `3N - 3` when total momentum is conserved (and zeroed),
/// `3N` otherwise.
pub fn degrees_of_freedom(n: usize, domain: &Domain) -> usize {
    if domain.conserves_momentum() {
        (3 * n).saturating_sub(3)
    } else {
        3 * n
    }
}

pub fn kinetic_energy(molecules: &[Molecule], masses: &[f64]) -> f64 {
    molecules
        .iter()
        .map(|m| 0.5 * masses[m.species] * m.v.norm2())
        .sum()
}

pub fn temperature_from(e_kin: f64, n: usize, domain: &Domain) -> Result<f64> {
    if n < 2 {
        return Err(Error::UndefinedTemperature { n });
    }
    Ok(2.0 * e_kin / degrees_of_freedom(n, domain) as f64)
}

/// Instantaneous kinetic temperature.
pub fn sample_temperature(molecules: &[Molecule], masses: &[f64], domain: &Domain) -> Result<f64> {
    temperature_from(kinetic_energy(molecules, masses), molecules.len(), domain)
}

/// Velocity scale factor that brings `t_inst` to `target`.
pub fn rescale_factor(t_inst: f64, target: f64) -> Result<f64> {
    if !(t_inst > 0.0) {
        return Err(Error::CannotRescale);
    }
    Ok((target / t_inst).sqrt())
}

pub fn rescale_thermostat(molecules: &mut [Molecule], masses: &[f64], domain: &Domain, target: f64) -> Result<()> {
    let t = sample_temperature(molecules, masses, domain)?;
    let s = rescale_factor(t, target)?;
    for m in molecules {
        m.v *= s;
    }
    Ok(())
}

pub fn total_momentum(molecules: &[Molecule], masses: &[f64]) -> Vec3 {
    let mut p = Vec3::ZERO;
    for m in molecules {
        p += m.v * masses[m.species];
    }
    p
}

/// Subtracts the centre-of-mass velocity from every molecule.
pub fn remove_net_momentum(molecules: &mut [Molecule], masses: &[f64]) {
    if molecules.is_empty() {
        return;
    }
    let p = total_momentum(molecules, masses);
    let mtot: f64 = molecules.iter().map(|m| masses[m.species]).sum();
    let vcm = p / mtot;
    for m in molecules.iter_mut() {
        m.v -= vcm;
    }
}

/// `v += dt/2 f/m`.
#[inline]
pub fn half_kick(molecules: &mut [Molecule], masses: &[f64], dt: f64) {
    for m in molecules {
        let s = 0.5 * dt / masses[m.species];
        m.v += m.f * s;
    }
}

/// `r += dt v`, then periodic wrap or specular reflection per axis.
pub fn drift(molecules: &mut [Molecule], dt: f64, domain: &Domain, step: u64) -> Result<()> {
    for m in molecules {
        m.r += m.v * dt;
        apply_boundaries(m, domain);
        if !m.r.is_finite() || !m.v.is_finite() {
            return Err(Error::NumericalBlowUp {
                step,
                what: format!("molecule {} has non-finite state r={:?} v={:?}", m.id, m.r, m.v),
            });
        }
    }
    Ok(())
}

/// Wraps periodic axes and mirrors reflecting ones. With a wall the lower z
/// face is left to the wall potential.
#[inline]
pub fn apply_boundaries(m: &mut Molecule, domain: &Domain) {
    m.r = wrap_position(m.r, domain);
    for axis in 0..3 {
        if !domain.reflecting[axis] {
            continue;
        }
        let l = domain.lengths[axis];
        let lower_open = axis == 2 && domain.wall.is_some();
        if m.r[axis] < 0.0 && !lower_open {
            m.r[axis] = -m.r[axis];
            m.v[axis] = -m.v[axis];
        } else if m.r[axis] > l {
            m.r[axis] = 2.0 * l - m.r[axis];
            m.v[axis] = -m.v[axis];
        }
    }
}

/// One serial velocity Verlet step. `forces` must overwrite every `f` from the
/// current positions and return the interaction energy.
pub fn velocity_verlet_step<F>(
    molecules: &mut [Molecule],
    masses: &[f64],
    domain: &Domain,
    dt: f64,
    step: u64,
    mut forces: F,
) -> Result<EnergyVirial>
where
    F: FnMut(&mut [Molecule]) -> Result<EnergyVirial>,
{
    half_kick(molecules, masses, dt);
    drift(molecules, dt, domain, step)?;
    let ev = forces(molecules)?;
    half_kick(molecules, masses, dt);
    if let Some(m) = molecules.iter().find(|m| !m.v.is_finite()) {
        return Err(Error::NumericalBlowUp {
            step,
            what: format!("molecule {} has non-finite velocity", m.id),
        });
    }
    Ok(ev)
}

/// Binning geometry for averaged number densities.
#[derive(Clone, Debug, PartialEq)]
pub enum DensityLayout {
    /// Planar slabs stacked along z over the full x-y cross-section.
    Slab { bins: usize, z_lo: f64, z_hi: f64 },
    /// Annular rings around a vertical axis through `(x, y)`, times z slabs.
    Cylindrical {
        axis_x: f64,
        axis_y: f64,
        r_max: f64,
        r_bins: usize,
        z_lo: f64,
        z_hi: f64,
        z_bins: usize,
    },
}

/// Accumulated molecule counts on a fixed binning.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    layout: DensityLayout,
    domain: Domain,
    volumes: Vec<f64>,
    counts: Vec<u64>,
    samples: u64,
}

impl DensityGrid {
    pub fn new(layout: DensityLayout, domain: &Domain) -> Result<Self> {
        let volumes = match &layout {
            DensityLayout::Slab { bins, z_lo, z_hi } => {
                let area = domain.lengths.x * domain.lengths.y;
                let dz = (z_hi - z_lo) / *bins as f64;
                vec![area * dz; *bins]
            }
            DensityLayout::Cylindrical {
                r_max,
                r_bins,
                z_lo,
                z_hi,
                z_bins,
                ..
            } => {
                let dr = r_max / *r_bins as f64;
                let dz = (z_hi - z_lo) / *z_bins as f64;
                let mut v = Vec::with_capacity(r_bins * z_bins);
                for ir in 0..*r_bins {
                    let r0 = ir as f64 * dr;
                    let r1 = r0 + dr;
                    let ring = PI * (r1 * r1 - r0 * r0) * dz;
                    v.extend(std::iter::repeat(ring).take(*z_bins));
                }
                v
            }
        };
        if volumes.is_empty() || volumes.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config("output.density", "density bins must have positive volume"));
        }
        let n = volumes.len();
        Ok(DensityGrid {
            layout,
            domain: domain.clone(),
            volumes,
            counts: vec![0; n],
            samples: 0,
        })
    }

    pub fn layout(&self) -> &DensityLayout {
        &self.layout
    }

    /// Bin counts per dimension: `[bins]` or `[r_bins, z_bins]`.
    pub fn bin_counts(&self) -> Vec<usize> {
        match &self.layout {
            DensityLayout::Slab { bins, .. } => vec![*bins],
            DensityLayout::Cylindrical { r_bins, z_bins, .. } => vec![*r_bins, *z_bins],
        }
    }

    /// Bin edge lengths per dimension.
    pub fn bin_sizes(&self) -> Vec<f64> {
        match &self.layout {
            DensityLayout::Slab { bins, z_lo, z_hi } => vec![(z_hi - z_lo) / *bins as f64],
            DensityLayout::Cylindrical {
                r_max,
                r_bins,
                z_lo,
                z_hi,
                z_bins,
                ..
            } => vec![r_max / *r_bins as f64, (z_hi - z_lo) / *z_bins as f64],
        }
    }

    pub fn bin_volume(&self, bin: usize) -> f64 {
        self.volumes[bin]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn bin_of(&self, r: Vec3) -> Option<usize> {
        match &self.layout {
            DensityLayout::Slab { bins, z_lo, z_hi } => {
                if r.z < *z_lo || r.z >= *z_hi {
                    return None;
                }
                let b = ((r.z - z_lo) / (z_hi - z_lo) * *bins as f64) as usize;
                Some(b.min(bins - 1))
            }
            DensityLayout::Cylindrical {
                axis_x,
                axis_y,
                r_max,
                r_bins,
                z_lo,
                z_hi,
                z_bins,
            } => {
                if r.z < *z_lo || r.z >= *z_hi {
                    return None;
                }
                let d = minimum_image(Vec3::new(r.x - axis_x, r.y - axis_y, 0.0), &self.domain);
                let rho = (d.x * d.x + d.y * d.y).sqrt();
                if rho >= *r_max {
                    return None;
                }
                let ir = ((rho / r_max) * *r_bins as f64) as usize;
                let iz = ((r.z - z_lo) / (z_hi - z_lo) * *z_bins as f64) as usize;
                Some(ir.min(r_bins - 1) * z_bins + iz.min(z_bins - 1))
            }
        }
    }

    /// Adds one sample; returns the number of molecules inside the gridded region.
    pub fn accumulate<'a>(&mut self, molecules: impl IntoIterator<Item = &'a Molecule>) -> usize {
        let mut inside = 0;
        for m in molecules {
            if let Some(b) = self.bin_of(m.r) {
                self.counts[b] += 1;
                inside += 1;
            }
        }
        self.samples += 1;
        inside
    }

    /// Average number density of one bin.
    pub fn density(&self, bin: usize) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        self.counts[bin] as f64 / (self.samples as f64 * self.volumes[bin])
    }

    pub fn densities(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|b| self.density(b)).collect()
    }

    pub fn max_density(&self) -> f64 {
        self.densities().into_iter().fold(0.0, f64::max)
    }
}

/// Samples `molecules` into `grid` (one sample).
pub fn accumulate_density(grid: &mut DensityGrid, molecules: &[Molecule]) -> usize {
    grid.accumulate(molecules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, Rng};

    fn bulk_box() -> Domain {
        Domain::periodic_box(Vec3::splat(10.0))
    }

    fn mol(id: u64, r: Vec3, v: Vec3) -> Molecule {
        Molecule::new(id, 0, r, v)
    }

    #[test]
    fn free_flight() {
        let d = bulk_box();
        let mut ms = vec![mol(0, Vec3::new(1.0, 1.0, 1.0), Vec3::new(1.0, 0.0, 0.0))];
        velocity_verlet_step(&mut ms, &[1.0], &d, 0.01, 1, |m| {
            for x in m.iter_mut() {
                x.f = Vec3::ZERO;
            }
            Ok(EnergyVirial::default())
        })
        .unwrap();
        assert!((ms[0].r.x - 1.01).abs() < 1e-15);
        assert_eq!(ms[0].v, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let d = bulk_box();
        let mut ms = vec![mol(0, Vec3::new(1.0, 1.0, 1.0), Vec3::new(f64::NAN, 0.0, 0.0))];
        let err = drift(&mut ms, 0.01, &d, 17).unwrap_err();
        assert!(matches!(err, Error::NumericalBlowUp { step: 17, .. }));
    }

    #[test]
    fn temperature_examples() {
        let d = bulk_box();
        let ms = vec![mol(0, Vec3::ZERO, Vec3::ZERO), mol(1, Vec3::ZERO, Vec3::ZERO)];
        assert_eq!(sample_temperature(&ms, &[1.0], &d).unwrap(), 0.0);
        let ms = vec![
            mol(0, Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)),
            mol(1, Vec3::ZERO, Vec3::new(-1.0, 0.0, 0.0)),
        ];
        assert!((sample_temperature(&ms, &[1.0], &d).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(sample_temperature(&ms[..1], &[1.0], &d).is_err());
    }

    fn random_state(n: usize, seed: u64) -> Vec<Molecule> {
        let mut rng = Rng::substream(seed, Purpose::Testing, 0);
        (0..n)
            .map(|i| {
                mol(
                    i as u64,
                    Vec3::new(rng.uniform(), rng.uniform(), rng.uniform()) * 10.0,
                    Vec3::new(rng.uniform() - 0.5, rng.uniform() - 0.3, rng.uniform() - 0.5),
                )
            })
            .collect()
    }

    #[test]
    fn rescale_examples() {
        let d = bulk_box();
        let mut ms = random_state(50, 2);
        let t0 = sample_temperature(&ms, &[1.0], &d).unwrap();
        let before = ms.clone();
        rescale_thermostat(&mut ms, &[1.0], &d, t0).unwrap();
        for (a, b) in ms.iter().zip(&before) {
            assert!((a.v - b.v).norm() < 1e-15);
        }
        rescale_thermostat(&mut ms, &[1.0], &d, t0 / 4.0).unwrap();
        for (a, b) in ms.iter().zip(&before) {
            assert!((a.v.norm() - 0.5 * b.v.norm()).abs() < 1e-14);
        }
        rescale_thermostat(&mut ms, &[1.0], &d, 0.8).unwrap();
        assert!((sample_temperature(&ms, &[1.0], &d).unwrap() - 0.8).abs() < 1e-12);

        let mut still = vec![mol(0, Vec3::ZERO, Vec3::ZERO), mol(1, Vec3::ZERO, Vec3::ZERO)];
        assert!(matches!(
            rescale_thermostat(&mut still, &[1.0], &d, 1.0),
            Err(Error::CannotRescale)
        ));
    }

    #[test]
    fn momentum_removal() {
        let mut ms: Vec<Molecule> = (0..5)
            .map(|i| mol(i, Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)))
            .collect();
        remove_net_momentum(&mut ms, &[1.0]);
        assert!(ms.iter().all(|m| m.v == Vec3::ZERO));

        let mut ms = random_state(100, 4);
        let rel = ms[3].v - ms[7].v;
        remove_net_momentum(&mut ms, &[1.0]);
        assert!(total_momentum(&ms, &[1.0]).norm() < 1e-12);
        assert!((ms[3].v - ms[7].v - rel).norm() < 1e-15);
    }

    #[test]
    fn reflecting_boundary_mirrors() {
        let mut d = bulk_box();
        d.periodic[2] = false;
        d.reflecting[2] = true;
        let mut m = mol(0, Vec3::new(1.0, 1.0, 10.2), Vec3::new(0.0, 0.0, 1.0));
        apply_boundaries(&mut m, &d);
        assert!((m.r.z - 9.8).abs() < 1e-12);
        assert_eq!(m.v.z, -1.0);
    }

    #[test]
    fn density_single_count() {
        let d = bulk_box();
        let mut g = DensityGrid::new(
            DensityLayout::Slab {
                bins: 10,
                z_lo: 0.0,
                z_hi: 10.0,
            },
            &d,
        )
        .unwrap();
        assert!(g.densities().iter().all(|&x| x == 0.0));
        g.accumulate(&[mol(0, Vec3::new(1.0, 1.0, 3.5), Vec3::ZERO)]);
        let nonzero: Vec<f64> = g.densities().into_iter().filter(|&x| x != 0.0).collect();
        assert_eq!(nonzero, vec![1.0 / g.bin_volume(3)]);
        assert!(DensityGrid::new(
            DensityLayout::Slab {
                bins: 4,
                z_lo: 1.0,
                z_hi: 1.0
            },
            &d
        )
        .is_err());
    }

    #[test]
    fn uniform_bulk_density_within_poisson_bounds() {
        let d = bulk_box();
        let rho = 0.6;
        let n = (rho * d.volume()) as usize;
        let mut g = DensityGrid::new(
            DensityLayout::Cylindrical {
                axis_x: 5.0,
                axis_y: 5.0,
                r_max: 5.0,
                r_bins: 5,
                z_lo: 0.0,
                z_hi: 10.0,
                z_bins: 5,
            },
            &d,
        )
        .unwrap();
        let mut rng = Rng::substream(10, Purpose::Testing, 0);
        let samples = 1000;
        for _ in 0..samples {
            let ms: Vec<Molecule> = (0..n)
                .map(|i| mol(i as u64, Vec3::new(rng.uniform(), rng.uniform(), rng.uniform()) * 10.0, Vec3::ZERO))
                .collect();
            let inside = g.accumulate(&ms);
            assert!(inside <= n);
        }
        for b in 0..25 {
            let expected = rho * g.bin_volume(b) * samples as f64;
            let sigma = expected.sqrt();
            let got = g.counts()[b] as f64;
            assert!((got - expected).abs() < 5.0 * sigma, "bin {b}: {got} vs {expected}");
        }
    }
}
