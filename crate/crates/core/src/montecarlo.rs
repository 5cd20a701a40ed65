//! Serial Metropolis NVT Monte Carlo over the same force field as MD.
//!
//! Only single-molecule displacement moves are made. The tail correction is
//! constant at fixed N and V, so it stays out of ΔU and enters only reported
//! energies and pressures.

use crate::cells::{CellBox, CellGrid, GridGeometry};
use crate::dynamics::{degrees_of_freedom, Observables};
use crate::error::{Error, Result};
use crate::forcefield::{lj_pair, virial_pressure, wall_93, EnergyVirial, LongRange, WallSpec};
use crate::geom::{minimum_image, wrap_position, Domain, Vec3};
use crate::molecule::Molecule;
use crate::rng::Rng;
use crate::species::{PairTable, SpeciesTable};

/// Sweeps between full energy recomputations.
pub const REVALIDATE_EVERY: u64 = 100;
/// Allowed relative drift of the incremental energy.
pub const DRIFT_TOLERANCE: f64 = 1e-8;
pub const TARGET_ACCEPTANCE: f64 = 0.4;

#[derive(Clone, Debug)]
pub struct McSettings {
    pub domain: Domain,
    pub species: SpeciesTable,
    pub cutoff: f64,
    pub temperature: f64,
    pub max_displacement: f64,
    pub homogeneous: bool,
}

#[derive(Clone, Debug)]
pub struct McState {
    domain: Domain,
    pairs: PairTable,
    wall: Option<WallSpec>,
    grid: CellGrid,
    ids: Vec<u64>,
    species: Vec<usize>,
    positions: Vec<Vec3>,
    cell: Vec<usize>,
    temperature: f64,
    max_displacement: f64,
    attempts: u64,
    accepts: u64,
    window_attempts: u64,
    window_accepts: u64,
    frozen: bool,
    energy: f64,
    sweeps: u64,
    lrc: LongRange,
}

/// `min(1, exp(-ΔU/T))`; an infinite ΔU gives 0.
pub fn acceptance_probability(delta_u: f64, temperature: f64) -> f64 {
    if delta_u <= 0.0 {
        1.0
    } else if delta_u.is_infinite() {
        0.0
    } else {
        (-delta_u / temperature).exp()
    }
}

impl McState {
    pub fn new(settings: McSettings, molecules: &[Molecule]) -> Result<Self> {
        settings.domain.validate()?;
        if !(settings.temperature > 0.0 && settings.temperature.is_finite()) {
            return Err(Error::config("scenario.temperature", "must be positive"));
        }
        if !(settings.max_displacement >= 0.0) {
            return Err(Error::config("schedule.max_displacement", "must be non-negative"));
        }
        if molecules.is_empty() {
            return Err(Error::config("scenario", "Monte Carlo needs at least one molecule"));
        }
        let geom = GridGeometry::new(&settings.domain, settings.cutoff)?;
        let mut grid = CellGrid::new(geom.clone(), CellBox::full(geom.counts()))?;
        let pairs = settings.species.pair_table(settings.cutoff)?;
        let mut sorted: Vec<&Molecule> = molecules.iter().collect();
        sorted.sort_by_key(|m| m.id);
        let ids: Vec<u64> = sorted.iter().map(|m| m.id).collect();
        let species: Vec<usize> = sorted.iter().map(|m| m.species).collect();
        let positions: Vec<Vec3> = sorted.iter().map(|m| wrap_position(m.r, &settings.domain)).collect();
        grid.assign(&positions, &ids)?;
        let cell = positions.iter().map(|&p| grid.owned_local_of(p).unwrap()).collect();
        let lrc = if settings.homogeneous {
            let mut counts = vec![0usize; settings.species.len()];
            for &s in &species {
                counts[s] += 1;
            }
            LongRange::for_system(&pairs, &counts, settings.domain.volume(), true)?
        } else {
            LongRange::default()
        };
        let mut state = McState {
            domain: settings.domain.clone(),
            wall: settings.domain.wall,
            pairs,
            grid,
            ids,
            species,
            positions,
            cell,
            temperature: settings.temperature,
            max_displacement: settings.max_displacement,
            attempts: 0,
            accepts: 0,
            window_attempts: 0,
            window_accepts: 0,
            frozen: false,
            energy: 0.0,
            sweeps: 0,
            lrc,
        };
        state.energy = state.recompute()?.u_pot;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn max_displacement(&self) -> f64 {
        self.max_displacement
    }

    pub fn set_max_displacement(&mut self, d: f64) {
        self.max_displacement = d.max(0.0);
    }

    /// Incrementally tracked potential energy (pairs + wall, no tail).
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn accepts(&self) -> u64 {
        self.accepts
    }

    pub fn acceptance_ratio(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepts as f64 / self.attempts as f64
        }
    }

    pub fn long_range(&self) -> LongRange {
        self.lrc
    }

    /// Stops displacement tuning; called when production starts.
    pub fn freeze_tuning(&mut self) {
        self.frozen = true;
    }

    /// Energy of molecule `i` at position `r` with everything else, or
    /// `None` on overlap or when `r` is not admissible.
    fn site_energy(&self, i: usize, r: Vec3) -> Option<f64> {
        let mut u = 0.0;
        if let Some(w) = &self.wall {
            u += wall_93(r.z, w).ok()?.0;
        }
        let si = self.species[i];
        let g = self.grid.geometry().cell_of(r);
        for c in self.grid.neighbor_cells(g) {
            for &j in self.grid.cell(c) {
                let j = j as usize;
                if j == i {
                    continue;
                }
                let d = minimum_image(r - self.positions[j], &self.domain);
                let p = self.pairs.get(si, self.species[j]);
                u += lj_pair(d.norm2(), p).ok()?.0;
            }
        }
        Some(u)
    }

    /// Full energy and virial from scratch.
    pub fn recompute(&self) -> Result<EnergyVirial> {
        let mut ev = EnergyVirial::default();
        for i in 0..self.positions.len() {
            let r = self.positions[i];
            if let Some(w) = &self.wall {
                ev.u_pot += wall_93(r.z, w)
                    .map_err(|e| Error::EscapedThroughWall { id: self.ids[i], z: e.z })?
                    .0;
            }
            let g = self.grid.geometry().cell_of(r);
            for c in self.grid.neighbor_cells(g) {
                for &j in self.grid.cell(c) {
                    let j = j as usize;
                    if j <= i {
                        continue;
                    }
                    let d = minimum_image(r - self.positions[j], &self.domain);
                    let r2 = d.norm2();
                    let p = self.pairs.get(self.species[i], self.species[j]);
                    let (u, fscal) = lj_pair(r2, p).map_err(|o| Error::Overlap {
                        a: self.ids[i],
                        b: self.ids[j],
                        r2: o.r2,
                    })?;
                    ev.u_pot += u;
                    ev.virial += fscal * r2;
                }
            }
        }
        Ok(ev)
    }

    fn admissible(&self, r: Vec3) -> Option<Vec3> {
        let r = wrap_position(r, &self.domain);
        for a in 0..3 {
            if !self.domain.periodic[a] && !(r[a] >= 0.0 && r[a] <= self.domain.lengths[a]) {
                return None;
            }
        }
        Some(r)
    }

    /// Observables row with the ideal kinetic contribution at the bath temperature.
    pub fn observables(&self, step: u64) -> Result<Observables> {
        let ev = self.recompute()?;
        let n = self.positions.len();
        let volume = self.domain.volume();
        let t = self.temperature;
        let e_kin = 0.5 * degrees_of_freedom(n, &self.domain) as f64 * t;
        let full = EnergyVirial {
            u_lrc: self.lrc.u_lrc,
            p_lrc: self.lrc.p_lrc,
            ..ev
        };
        Ok(Observables {
            step,
            time: step as f64,
            t_inst: t,
            u_pot: ev.u_pot,
            e_kin,
            e_total: ev.u_pot + e_kin + self.lrc.u_lrc,
            pressure: virial_pressure(&full, n, volume, t),
            n,
            density: n as f64 / volume,
            imbalance: 1.0,
        })
    }

    pub fn to_molecules(&self) -> Vec<Molecule> {
        (0..self.positions.len())
            .map(|i| Molecule::new(self.ids[i], self.species[i], self.positions[i], Vec3::ZERO))
            .collect()
    }
}

/// One trial displacement of molecule `i`.
pub fn metropolis_move(state: &mut McState, i: usize, rng: &mut Rng) -> bool {
    let d = state.max_displacement;
    let step = Vec3::new(
        rng.uniform_range(-d, d),
        rng.uniform_range(-d, d),
        rng.uniform_range(-d, d),
    );
    let u_acc = rng.uniform();
    state.attempts += 1;
    state.window_attempts += 1;
    let old = state.positions[i];
    let Some(trial) = state.admissible(old + step) else {
        return false;
    };
    let Some(u_new) = state.site_energy(i, trial) else {
        return false;
    };
    // the current configuration is overlap-free by construction
    let u_old = state.site_energy(i, old).unwrap_or(f64::INFINITY);
    let delta = u_new - u_old;
    if u_acc >= acceptance_probability(delta, state.temperature) {
        return false;
    }
    let to = state.grid.owned_local_of(trial).expect("admissible position lies in the grid");
    state.grid.relocate(i, state.cell[i], to);
    state.cell[i] = to;
    state.positions[i] = trial;
    state.energy += delta;
    state.accepts += 1;
    state.window_accepts += 1;
    true
}

/// N move attempts on uniformly chosen molecules.
pub fn mc_sweep(state: &mut McState, rng: &mut Rng) -> Result<()> {
    let n = state.len();
    for _ in 0..n {
        let i = rng.index(n);
        metropolis_move(state, i, rng);
    }
    state.sweeps += 1;
    if state.sweeps % REVALIDATE_EVERY == 0 {
        let fresh = state.recompute()?.u_pot;
        let scale = fresh.abs().max(1.0);
        if (fresh - state.energy).abs() > DRIFT_TOLERANCE * scale {
            return Err(Error::BookkeepingDrift {
                incremental: state.energy,
                recomputed: fresh,
            });
        }
        state.energy = fresh;
    }
    Ok(())
}

/// Nudges the displacement toward `target` acceptance using the moves since
/// the last call. Has no effect once tuning is frozen.
pub fn tune_displacement(state: &mut McState, target: f64) -> f64 {
    if state.frozen || state.window_attempts == 0 {
        return state.max_displacement;
    }
    let ratio = state.window_accepts as f64 / state.window_attempts as f64;
    let cap = 0.5 * state.domain.lengths.min_component();
    if ratio > target {
        state.max_displacement = (state.max_displacement * 1.1).min(cap);
    } else if ratio < target {
        state.max_displacement *= 0.9;
    }
    state.window_attempts = 0;
    state.window_accepts = 0;
    state.max_displacement
}
