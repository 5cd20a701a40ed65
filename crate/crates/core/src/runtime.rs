//! Bulk-synchronous worker orchestration.
//!
//! Each worker exclusively owns the molecules inside one cuboid leaf of the
//! [`PartitionTree`]. Workers never share mutable state: molecules cross
//! subdomain boundaries only as [`MoleculeMessage`]s sent over a
//! [`Transport`]. A time step is a sequence of supersteps (integrate,
//! migrate, halo exchange, forces, integrate, reduce); every worker finishes
//! a superstep before any worker starts the next, and every message sent in
//! a superstep is consumed in the one that follows.
//!
//! Pairs spanning two workers are evaluated by both: each applies the force
//! to its own member only. Energy and virial of such a pair are booked by the
//! worker owning the lower molecule id, so global sums count every pair once.
//! With one worker the same code path runs against its own periodic images
//! and serves as the serial reference.

use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};

use rayon::prelude::*;

use crate::balance::{
    estimate_loads, kd_partition, measure_imbalance, should_rebalance, uniform_partition, Axis, CellLoadField,
    ImbalanceReport, PartitionTree,
};
use crate::cells::{CellBox, CellGrid, GridGeometry};
use crate::dynamics::{drift, half_kick, rescale_factor, temperature_from, Observables};
use crate::error::{Error, Result};
use crate::forcefield::{lj_pair, virial_pressure, wall_93, EnergyVirial, LongRange, WallSpec};
use crate::geom::{Domain, Vec3};
use crate::molecule::Molecule;
use crate::species::{PairTable, SpeciesTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    HaloCopy,
    Migration,
}

/// Molecule state on the wire. Forces are never transmitted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Payload {
    pub id: u64,
    pub species: u32,
    pub r: Vec3,
    pub v: Vec3,
    /// Destination local cell for halo copies; unused for migrations.
    pub cell: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoleculeMessage {
    pub kind: MessageKind,
    pub from: usize,
    pub to: usize,
    pub step: u64,
    pub payload: Vec<Payload>,
}

/// Point-to-point delivery between workers.
pub trait Transport: Sync {
    fn send(&self, msg: MoleculeMessage) -> Result<()>;
}

/// In-process fabric: one unbounded channel per worker.
pub struct ChannelFabric {
    senders: Vec<Sender<MoleculeMessage>>,
}

impl ChannelFabric {
    pub fn new(workers: usize) -> (Self, Vec<Receiver<MoleculeMessage>>) {
        let (senders, receivers) = (0..workers).map(|_| channel()).unzip();
        (ChannelFabric { senders }, receivers)
    }
}

impl Transport for ChannelFabric {
    fn send(&self, msg: MoleculeMessage) -> Result<()> {
        let to = msg.to;
        self.senders
            .get(to)
            .ok_or_else(|| Error::TopologyViolation(format!("no worker {to}")))?
            .send(msg)
            .map_err(|_| Error::WorkerFailure(format!("worker {to} is gone")))
    }
}

/// Molecules of one of this worker's owned cells that feed a halo cell elsewhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SendLink {
    pub source: [usize; 3],
    pub dest_local_cell: u32,
    pub shift: Vec3,
}

/// A worker's place in the decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerTopology {
    pub id: usize,
    pub leaf: CellBox,
    /// Other workers sharing a face, edge or corner (periodic wrap included).
    pub neighbors: Vec<usize>,
    /// Workers (possibly this one) that fill this worker's halo.
    pub halo_sources: Vec<usize>,
    /// Halo feeds grouped by destination worker, ascending.
    pub sends: Vec<(usize, Vec<SendLink>)>,
}

/// Derives every worker's topology from a partition.
pub fn build_topologies(tree: &PartitionTree, geom: &GridGeometry) -> Result<Vec<WorkerTopology>> {
    let leaves = tree.leaves();
    let owner = tree.owner_map();
    let n = leaves.len();
    let mut sends: Vec<Vec<Vec<SendLink>>> = vec![vec![Vec::new(); n]; n];
    let mut sources: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (w, leaf) in leaves.iter().enumerate() {
        let grid = CellGrid::new(geom.clone(), *leaf)?;
        for link in grid.halo_links() {
            let o = owner[geom.linear(link.source)];
            if o == u32::MAX {
                return Err(Error::PartitionInconsistency(format!("cell {:?} has no owner", link.source)));
            }
            let o = o as usize;
            sends[o][w].push(SendLink {
                source: link.source,
                dest_local_cell: link.local_cell as u32,
                shift: link.shift,
            });
            if !sources[w].contains(&o) {
                sources[w].push(o);
            }
        }
    }
    let mut topos = Vec::with_capacity(n);
    for w in 0..n {
        let mut neighbors: Vec<usize> = sources[w].iter().copied().filter(|&o| o != w).collect();
        for (d, links) in sends[w].iter().enumerate() {
            if !links.is_empty() && d != w && !neighbors.contains(&d) {
                neighbors.push(d);
            }
        }
        neighbors.sort_unstable();
        let mut halo_sources = sources[w].clone();
        halo_sources.sort_unstable();
        let my_sends = sends[w]
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(d, l)| (d, l.clone()))
            .collect();
        topos.push(WorkerTopology {
            id: w,
            leaf: leaves[w],
            neighbors,
            halo_sources,
            sends: my_sends,
        });
    }
    Ok(topos)
}

/// Per-worker contribution to the global reduction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WorkerPartial {
    pub worker: usize,
    pub ev: EnergyVirial,
    pub e_kin: f64,
    pub momentum: Vec3,
    pub n: usize,
    /// Pair distance evaluations performed.
    pub pair_checks: u64,
}

/// Global sums of a step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Totals {
    pub ev: EnergyVirial,
    pub e_kin: f64,
    pub momentum: Vec3,
    pub n: usize,
    pub pair_checks: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionFrame {
    pub step: u64,
    pub partials: Vec<WorkerPartial>,
}

/// Merges worker partials in ascending worker order.
pub fn reduce_observables(frame: &ReductionFrame, workers: usize) -> Result<Totals> {
    let mut ordered: Vec<&WorkerPartial> = frame.partials.iter().collect();
    ordered.sort_by_key(|p| p.worker);
    for w in 0..workers {
        if ordered.get(w).map(|p| p.worker) != Some(w) {
            return Err(Error::WorkerFailure(format!(
                "missing reduction contribution from worker {w} at step {}",
                frame.step
            )));
        }
    }
    if ordered.len() != workers {
        return Err(Error::TopologyViolation(format!("{} contributions for {workers} workers", ordered.len())));
    }
    let mut t = Totals::default();
    for p in ordered {
        t.ev += p.ev;
        t.e_kin += p.e_kin;
        t.momentum += p.momentum;
        t.n += p.n;
        t.pair_checks += p.pair_checks;
    }
    Ok(t)
}

/// Interaction parameters shared read-only by all workers.
#[derive(Clone, Debug)]
pub struct Interactions {
    pub pairs: PairTable,
    pub masses: Vec<f64>,
    pub wall: Option<WallSpec>,
}

pub struct Worker {
    topo: WorkerTopology,
    grid: CellGrid,
    owned: Vec<Molecule>,
    halo: Vec<Payload>,
    inbox: Receiver<MoleculeMessage>,
    positions: Vec<Vec3>,
    species: Vec<u32>,
    ids: Vec<u64>,
    pair_checks: u64,
}

impl Worker {
    fn new(topo: WorkerTopology, geom: &GridGeometry, owned: Vec<Molecule>, inbox: Receiver<MoleculeMessage>) -> Result<Self> {
        let grid = CellGrid::new(geom.clone(), topo.leaf)?;
        Ok(Worker {
            topo,
            grid,
            owned,
            halo: Vec::new(),
            inbox,
            positions: Vec::new(),
            species: Vec::new(),
            ids: Vec::new(),
            pair_checks: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.topo.id
    }

    pub fn topology(&self) -> &WorkerTopology {
        &self.topo
    }

    pub fn owned(&self) -> &[Molecule] {
        &self.owned
    }

    pub fn halo(&self) -> &[Payload] {
        &self.halo
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    fn retopologize(&mut self, topo: WorkerTopology, geom: &GridGeometry) -> Result<()> {
        self.grid = CellGrid::new(geom.clone(), topo.leaf)?;
        self.topo = topo;
        self.halo.clear();
        Ok(())
    }

    fn first_half(&mut self, ff: &Interactions, dt: f64, domain: &Domain, step: u64) -> Result<()> {
        half_kick(&mut self.owned, &ff.masses, dt);
        drift(&mut self.owned, dt, domain, step)
    }

    fn second_half(&mut self, ff: &Interactions, dt: f64, step: u64) -> Result<()> {
        half_kick(&mut self.owned, &ff.masses, dt);
        if let Some(m) = self.owned.iter().find(|m| !m.v.is_finite()) {
            return Err(Error::NumericalBlowUp {
                step,
                what: format!("molecule {} has non-finite velocity", m.id),
            });
        }
        Ok(())
    }

    /// Sends molecules that left this worker's box to their new owner.
    /// With `all_to_all`, every other worker gets a (possibly empty) message;
    /// otherwise only neighbours do and a non-neighbour destination is an error.
    fn send_migrants(
        &mut self,
        fabric: &dyn Transport,
        geom: &GridGeometry,
        owner: &[u32],
        workers: usize,
        step: u64,
        all_to_all: bool,
    ) -> Result<()> {
        let me = self.topo.id;
        let mut outgoing: Vec<Vec<Payload>> = vec![Vec::new(); workers];
        let mut keep = Vec::with_capacity(self.owned.len());
        for m in self.owned.drain(..) {
            let o = Self::owner_of_static(&m, geom, owner, step)?;
            if o == me {
                keep.push(m);
                continue;
            }
            if !all_to_all && self.topo.neighbors.binary_search(&o).is_err() {
                return Err(Error::TopologyViolation(format!(
                    "molecule {} moved from worker {me} to non-neighbour {o} at step {step}",
                    m.id
                )));
            }
            outgoing[o].push(Payload {
                id: m.id,
                species: m.species as u32,
                r: m.r,
                v: m.v,
                cell: 0,
            });
        }
        self.owned = keep;
        let targets: Vec<usize> = if all_to_all {
            (0..workers).filter(|&w| w != me).collect()
        } else {
            self.topo.neighbors.clone()
        };
        for to in targets {
            fabric.send(MoleculeMessage {
                kind: MessageKind::Migration,
                from: me,
                to,
                step,
                payload: std::mem::take(&mut outgoing[to]),
            })?;
        }
        Ok(())
    }

    fn owner_of_static(m: &Molecule, geom: &GridGeometry, owner: &[u32], step: u64) -> Result<usize> {
        if !geom.in_domain(m.r) {
            if geom.domain().wall.is_some() && m.r.z <= 0.0 {
                return Err(Error::EscapedThroughWall { id: m.id, z: m.r.z });
            }
            return Err(Error::NumericalBlowUp {
                step,
                what: format!("molecule {} left the domain at {:?}", m.id, m.r),
            });
        }
        let o = owner[geom.linear(geom.cell_of(m.r))];
        if o == u32::MAX {
            return Err(Error::PartitionInconsistency(format!("molecule {} lands outside all leaf boxes", m.id)));
        }
        Ok(o as usize)
    }

    /// Drains the inbox and checks it holds exactly one `kind` message from each expected sender.
    fn collect(&mut self, kind: MessageKind, step: u64, expected: &[usize]) -> Result<Vec<MoleculeMessage>> {
        let me = self.topo.id;
        let mut got: Vec<MoleculeMessage> = Vec::with_capacity(expected.len());
        loop {
            match self.inbox.try_recv() {
                Ok(msg) => {
                    if msg.kind != kind || msg.step != step || msg.to != me {
                        return Err(Error::TopologyViolation(format!(
                            "worker {me} got unexpected {:?} message for step {} from {} while expecting {kind:?} for step {step}",
                            msg.kind, msg.step, msg.from
                        )));
                    }
                    if expected.binary_search(&msg.from).is_err() {
                        return Err(Error::TopologyViolation(format!(
                            "worker {me} got a {kind:?} message from non-neighbour {}",
                            msg.from
                        )));
                    }
                    if got.iter().any(|g| g.from == msg.from) {
                        return Err(Error::TopologyViolation(format!(
                            "worker {me} got two {kind:?} messages from {}",
                            msg.from
                        )));
                    }
                    got.push(msg);
                }
                Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => break,
            }
        }
        if got.len() != expected.len() {
            let missing: Vec<usize> = expected.iter().copied().filter(|e| !got.iter().any(|g| g.from == *e)).collect();
            return Err(Error::WorkerFailure(format!(
                "worker {me} is missing {kind:?} messages from {missing:?} at step {step}"
            )));
        }
        got.sort_by_key(|m| m.from);
        Ok(got)
    }

    fn receive_migrants(&mut self, step: u64, from: &[usize], sort: bool) -> Result<()> {
        let msgs = self.collect(MessageKind::Migration, step, from)?;
        for msg in msgs {
            for p in msg.payload {
                self.owned.push(Molecule::new(p.id, p.species as usize, p.r, p.v));
            }
        }
        if sort {
            self.owned.sort_by_key(|m| m.id);
        }
        Ok(())
    }

    fn index_owned(&mut self) -> Result<()> {
        self.positions.clear();
        self.species.clear();
        self.ids.clear();
        for m in &self.owned {
            self.positions.push(m.r);
            self.species.push(m.species as u32);
            self.ids.push(m.id);
        }
        self.grid.assign(&self.positions, &self.ids)
    }

    fn send_halos(&mut self, fabric: &dyn Transport, step: u64) -> Result<()> {
        self.index_owned()?;
        let me = self.topo.id;
        for (dest, links) in &self.topo.sends {
            let mut payload = Vec::new();
            for link in links {
                let g = link.source;
                let local = self
                    .grid
                    .local_of_global([g[0] as i64, g[1] as i64, g[2] as i64])
                    .ok_or_else(|| Error::PartitionInconsistency(format!("worker {me} asked to send foreign cell {g:?}")))?;
                for &i in self.grid.cell(local) {
                    let m = &self.owned[i as usize];
                    payload.push(Payload {
                        id: m.id,
                        species: m.species as u32,
                        r: m.r + link.shift,
                        v: m.v,
                        cell: link.dest_local_cell,
                    });
                }
            }
            fabric.send(MoleculeMessage {
                kind: MessageKind::HaloCopy,
                from: me,
                to: *dest,
                step,
                payload,
            })?;
        }
        Ok(())
    }

    fn receive_halos(&mut self, step: u64) -> Result<()> {
        let sources = self.topo.halo_sources.clone();
        let msgs = self.collect(MessageKind::HaloCopy, step, &sources)?;
        self.halo.clear();
        for msg in msgs {
            for p in msg.payload {
                let idx = self.positions.len();
                self.positions.push(p.r);
                self.species.push(p.species);
                self.ids.push(p.id);
                self.grid.insert_halo(idx, p.cell as usize);
                self.halo.push(p);
            }
        }
        Ok(())
    }

    fn compute_forces(&mut self, ff: &Interactions) -> Result<EnergyVirial> {
        let n_owned = self.owned.len();
        let mut forces = vec![Vec3::ZERO; n_owned];
        let mut u_pot = 0.0;
        let mut virial = 0.0;
        let mut checks = 0u64;
        let mut overlap: Option<(u64, u64, f64)> = None;
        let species = &self.species;
        let ids = &self.ids;
        let pairs = &ff.pairs;
        self.grid.for_each_pair(&self.positions, |i, j, dr, r2| {
            checks += 1;
            let p = pairs.get(species[i] as usize, species[j] as usize);
            let (u, fscal) = match lj_pair(r2, p) {
                Ok(x) => x,
                Err(o) => {
                    overlap.get_or_insert((ids[i], ids[j], o.r2));
                    return;
                }
            };
            let f = dr * fscal;
            forces[i] += f;
            if j < n_owned {
                forces[j] -= f;
                u_pot += u;
                virial += fscal * r2;
            } else if ids[i] < ids[j] {
                u_pot += u;
                virial += fscal * r2;
            }
        });
        if let Some((a, b, r2)) = overlap {
            return Err(Error::Overlap { a, b, r2 });
        }
        if let Some(w) = &ff.wall {
            for (k, m) in self.owned.iter().enumerate() {
                let (u, fz) = wall_93(m.r.z, w).map_err(|e| Error::EscapedThroughWall { id: m.id, z: e.z })?;
                u_pot += u;
                forces[k].z += fz;
            }
        }
        for (m, f) in self.owned.iter_mut().zip(forces) {
            m.f = f;
        }
        self.pair_checks = checks;
        Ok(EnergyVirial {
            u_pot,
            virial,
            u_lrc: 0.0,
            p_lrc: 0.0,
        })
    }

    fn partial(&self, ev: EnergyVirial, ff: &Interactions) -> WorkerPartial {
        let mut e_kin = 0.0;
        let mut momentum = Vec3::ZERO;
        for m in &self.owned {
            let mass = ff.masses[m.species];
            e_kin += 0.5 * mass * m.v.norm2();
            momentum += m.v * mass;
        }
        WorkerPartial {
            worker: self.topo.id,
            ev,
            e_kin,
            momentum,
            n: self.owned.len(),
            pair_checks: self.pair_checks,
        }
    }

    /// Per-cell molecule counts of the owned molecules at their current positions.
    fn occupancy_into(&self, geom: &GridGeometry, counts: &mut [usize]) {
        for m in &self.owned {
            counts[geom.linear(geom.cell_of(m.r))] += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decomposition {
    UniformGrid,
    KdTree,
}

/// Everything the engine needs besides the molecules.
#[derive(Clone, Debug)]
pub struct EngineSettings {
    pub domain: Domain,
    pub species: SpeciesTable,
    pub cutoff: f64,
    pub timestep: f64,
    pub workers: usize,
    pub decomposition: Decomposition,
    pub rebalance_interval: u64,
    pub imbalance_threshold: f64,
    pub first_axis: Axis,
    /// Enables the mean-field tail correction.
    pub homogeneous: bool,
}

impl EngineSettings {
    pub fn new(domain: Domain, species: SpeciesTable, cutoff: f64) -> Self {
        EngineSettings {
            domain,
            species,
            cutoff,
            timestep: 0.002,
            workers: 1,
            decomposition: Decomposition::KdTree,
            rebalance_interval: 1000,
            imbalance_threshold: 1.5,
            first_axis: Axis::X,
            homogeneous: false,
        }
    }
}

fn run_phase<F>(pool: Option<&rayon::ThreadPool>, workers: &mut [Worker], f: F) -> Result<()>
where
    F: Fn(&mut Worker) -> Result<()> + Sync + Send,
{
    match pool {
        Some(pool) => pool.install(|| workers.par_iter_mut().try_for_each(&f)),
        None => workers.iter_mut().try_for_each(f),
    }
}

fn run_phase_collect<T, F>(pool: Option<&rayon::ThreadPool>, workers: &mut [Worker], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Worker) -> Result<T> + Sync + Send,
{
    match pool {
        Some(pool) => pool.install(|| workers.par_iter_mut().map(&f).collect()),
        None => workers.iter_mut().map(f).collect(),
    }
}

/// Distributed molecular dynamics driver.
pub struct Engine {
    settings: EngineSettings,
    geom: GridGeometry,
    ff: Interactions,
    tree: PartitionTree,
    owner: Vec<u32>,
    workers: Vec<Worker>,
    fabric: ChannelFabric,
    pool: Option<rayon::ThreadPool>,
    step: u64,
    totals: Totals,
    lrc: LongRange,
    last_imbalance: f64,
    rebalances: u64,
}

impl Engine {
    pub fn new(settings: EngineSettings, mut molecules: Vec<Molecule>) -> Result<Self> {
        settings.domain.validate()?;
        if !(settings.timestep > 0.0 && settings.timestep.is_finite()) {
            return Err(Error::config("schedule.timestep", "must be positive"));
        }
        if settings.workers == 0 {
            return Err(Error::config("decomposition.workers", "must be at least 1"));
        }
        if settings.cutoff > settings.domain.lengths.min_component() / 3.0 {
            return Err(Error::config(
                "domain.cutoff",
                format!("cutoff {} exceeds a third of the smallest box length", settings.cutoff),
            ));
        }
        let geom = GridGeometry::new(&settings.domain, settings.cutoff)?;
        let pairs = settings.species.pair_table(settings.cutoff)?;
        let masses: Vec<f64> = settings.species.species().iter().map(|s| s.mass).collect();
        let ff = Interactions {
            pairs,
            masses,
            wall: settings.domain.wall,
        };

        molecules.sort_by_key(|m| m.id);
        if molecules.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::config("scenario", "duplicate molecule ids"));
        }
        for m in &molecules {
            if m.species >= settings.species.len() {
                return Err(Error::config("scenario", format!("molecule {} has unknown species {}", m.id, m.species)));
            }
            if !geom.in_domain(m.r) {
                return Err(Error::OwnershipViolation {
                    id: m.id,
                    position: m.r.to_array(),
                });
            }
        }

        let lrc = if settings.homogeneous {
            let mut counts = vec![0usize; settings.species.len()];
            for m in &molecules {
                counts[m.species] += 1;
            }
            LongRange::for_system(&ff.pairs, &counts, settings.domain.volume(), true)?
        } else {
            LongRange::default()
        };

        let mut occ = vec![0usize; geom.total_cells()];
        for m in &molecules {
            occ[geom.linear(geom.cell_of(m.r))] += 1;
        }
        let tree = match settings.decomposition {
            Decomposition::UniformGrid => uniform_partition(geom.counts(), settings.workers)?,
            Decomposition::KdTree => {
                let loads = estimate_loads(&occ, geom.counts(), settings.domain.periodic)?;
                kd_partition(&loads, settings.workers, settings.first_axis)?
            }
        };
        let owner = tree.owner_map();
        let topos = build_topologies(&tree, &geom)?;
        let mut buckets: Vec<Vec<Molecule>> = vec![Vec::new(); settings.workers];
        for mut m in molecules {
            m.f = Vec3::ZERO;
            buckets[owner[geom.linear(geom.cell_of(m.r))] as usize].push(m);
        }
        let (fabric, inboxes) = ChannelFabric::new(settings.workers);
        let workers = topos
            .into_iter()
            .zip(buckets)
            .zip(inboxes)
            .map(|((t, b), rx)| Worker::new(t, &geom, b, rx))
            .collect::<Result<Vec<_>>>()?;
        let pool = if settings.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(settings.workers)
                    .build()
                    .map_err(|e| Error::WorkerFailure(e.to_string()))?,
            )
        } else {
            None
        };
        let mut engine = Engine {
            settings,
            geom,
            ff,
            tree,
            owner,
            workers,
            fabric,
            pool,
            step: 0,
            totals: Totals::default(),
            lrc,
            last_imbalance: 1.0,
            rebalances: 0,
        };
        engine.refresh_forces()?;
        Ok(engine)
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn tree(&self) -> &PartitionTree {
        &self.tree
    }

    pub fn workers(&self) -> &[Worker] {
        &self.workers
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn totals(&self) -> &Totals {
        &self.totals
    }

    pub fn rebalance_count(&self) -> u64 {
        self.rebalances
    }

    pub fn molecule_count(&self) -> usize {
        self.totals.n
    }

    pub fn masses(&self) -> &[f64] {
        &self.ff.masses
    }

    /// Halo exchange, force evaluation and reduction at the current positions.
    fn refresh_forces(&mut self) -> Result<()> {
        let step = self.step;
        let fabric = &self.fabric;
        let pool = self.pool.as_ref();
        run_phase(pool, &mut self.workers, |w| w.send_halos(fabric, step))?;
        let ff = &self.ff;
        let partials = run_phase_collect(pool, &mut self.workers, |w| {
            w.receive_halos(step)?;
            let ev = w.compute_forces(ff)?;
            Ok(w.partial(ev, ff))
        })?;
        self.totals = reduce_observables(&ReductionFrame { step, partials }, self.workers.len())?;
        self.last_imbalance = self.imbalance_report()?.imbalance;
        Ok(())
    }

    /// One velocity Verlet step across all workers.
    pub fn step(&mut self) -> Result<()> {
        self.step += 1;
        let step = self.step;
        let dt = self.settings.timestep;
        let domain = self.settings.domain.clone();
        {
            let ff = &self.ff;
            run_phase(self.pool.as_ref(), &mut self.workers, |w| w.first_half(ff, dt, &domain, step))?;
        }

        let rebalance = self.settings.decomposition == Decomposition::KdTree
            && self.settings.workers > 1
            && should_rebalance(step, self.settings.rebalance_interval, self.last_imbalance, self.settings.imbalance_threshold);
        let mut moved = false;
        if rebalance {
            let loads = self.load_field()?;
            let new_tree = kd_partition(&loads, self.settings.workers, self.settings.first_axis)?;
            if new_tree != self.tree {
                self.redistribute(new_tree, step)?;
                self.rebalances += 1;
                moved = true;
            }
        }
        if !moved {
            self.migrate(step)?;
        }
        self.refresh_forces()?;
        let ff = &self.ff;
        run_phase(self.pool.as_ref(), &mut self.workers, |w| w.second_half(ff, dt, step))?;
        self.recount_kinetic();
        Ok(())
    }

    fn recount_kinetic(&mut self) {
        let ff = &self.ff;
        let mut e_kin = 0.0;
        let mut momentum = Vec3::ZERO;
        for w in &self.workers {
            let p = w.partial(EnergyVirial::default(), ff);
            e_kin += p.e_kin;
            momentum += p.momentum;
        }
        self.totals.e_kin = e_kin;
        self.totals.momentum = momentum;
    }

    /// Moves molecules that crossed a subdomain face to their new owner.
    pub fn migrate(&mut self, step: u64) -> Result<()> {
        let fabric = &self.fabric;
        let geom = &self.geom;
        let owner = &self.owner;
        let n = self.workers.len();
        let pool = self.pool.as_ref();
        run_phase(pool, &mut self.workers, |w| w.send_migrants(fabric, geom, owner, n, step, false))?;
        run_phase(pool, &mut self.workers, |w| {
            let from = w.topo.neighbors.clone();
            w.receive_migrants(step, &from, false)
        })?;
        Ok(())
    }

    fn redistribute(&mut self, new_tree: PartitionTree, step: u64) -> Result<()> {
        if new_tree.dims() != self.geom.counts() || new_tree.worker_count() != self.workers.len() {
            return Err(Error::PartitionInconsistency("new partition does not match the grid".into()));
        }
        let owner = new_tree.owner_map();
        let topos = build_topologies(&new_tree, &self.geom)?;
        let fabric = &self.fabric;
        let geom = &self.geom;
        let n = self.workers.len();
        let pool = self.pool.as_ref();
        {
            let owner = &owner;
            run_phase(pool, &mut self.workers, |w| w.send_migrants(fabric, geom, owner, n, step, true))?;
        }
        for (w, t) in self.workers.iter_mut().zip(topos) {
            w.retopologize(t, geom)?;
        }
        run_phase(pool, &mut self.workers, |w| {
            let me = w.topo.id;
            let from: Vec<usize> = (0..n).filter(|&o| o != me).collect();
            w.receive_migrants(step, &from, true)
        })?;
        self.tree = new_tree;
        self.owner = owner;
        Ok(())
    }

    /// Redistributes molecules onto `tree` and recomputes forces.
    pub fn apply_partition(&mut self, tree: PartitionTree) -> Result<()> {
        let step = self.step;
        self.redistribute(tree, step)?;
        self.refresh_forces()?;
        self.recount_kinetic();
        Ok(())
    }

    /// Repartitions with the kd strategy using the current occupancy.
    pub fn rebalance(&mut self) -> Result<ImbalanceReport> {
        let loads = self.load_field()?;
        let tree = kd_partition(&loads, self.settings.workers, self.settings.first_axis)?;
        if tree != self.tree {
            self.apply_partition(tree)?;
            self.rebalances += 1;
        }
        Ok(measure_imbalance(&self.tree, &loads))
    }

    /// Molecules per global cell at the current positions.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut occ = vec![0usize; self.geom.total_cells()];
        for w in &self.workers {
            w.occupancy_into(&self.geom, &mut occ);
        }
        occ
    }

    pub fn load_field(&self) -> Result<CellLoadField> {
        estimate_loads(&self.occupancy(), self.geom.counts(), self.settings.domain.periodic)
    }

    pub fn imbalance_report(&self) -> Result<ImbalanceReport> {
        Ok(measure_imbalance(&self.tree, &self.load_field()?))
    }

    pub fn last_imbalance(&self) -> f64 {
        self.last_imbalance
    }

    pub fn temperature(&self) -> f64 {
        temperature_from(self.totals.e_kin, self.totals.n, &self.settings.domain).unwrap_or(0.0)
    }

    /// Multiplies every velocity so the kinetic temperature becomes `target`.
    pub fn rescale_to(&mut self, target: f64) -> Result<()> {
        let t = temperature_from(self.totals.e_kin, self.totals.n, &self.settings.domain)?;
        let s = rescale_factor(t, target)?;
        for w in &mut self.workers {
            for m in &mut w.owned {
                m.v *= s;
            }
        }
        self.recount_kinetic();
        Ok(())
    }

    pub fn observables(&self) -> Observables {
        let t = &self.totals;
        let volume = self.settings.domain.volume();
        let t_inst = self.temperature();
        let ev = EnergyVirial {
            u_pot: t.ev.u_pot,
            virial: t.ev.virial,
            u_lrc: self.lrc.u_lrc,
            p_lrc: self.lrc.p_lrc,
        };
        Observables {
            step: self.step,
            time: self.step as f64 * self.settings.timestep,
            t_inst,
            u_pot: t.ev.u_pot,
            e_kin: t.e_kin,
            e_total: t.ev.u_pot + t.e_kin + self.lrc.u_lrc,
            pressure: virial_pressure(&ev, t.n, volume, t_inst),
            n: t.n,
            density: t.n as f64 / volume,
            imbalance: self.last_imbalance,
        }
    }

    /// All molecules, sorted by id.
    pub fn gather(&self) -> Vec<Molecule> {
        let mut all: Vec<Molecule> = self.workers.iter().flat_map(|w| w.owned.iter().cloned()).collect();
        all.sort_by_key(|m| m.id);
        all
    }

    /// Molecules per worker, in worker order.
    pub fn owned_counts(&self) -> Vec<usize> {
        self.workers.iter().map(|w| w.owned.len()).collect()
    }
}
