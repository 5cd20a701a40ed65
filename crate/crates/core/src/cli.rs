//! Run orchestration behind the `ljmd` binary: schedules, sampling, output
//! files, the scaling benchmark and the ℓ-exponent criterion.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::balance::ImbalanceReport;
use crate::cells::GridGeometry;
use crate::config::{DensityKind, Ensemble, RunConfig};
use crate::dynamics::{DensityGrid, DensityLayout, Observables};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::molecule::Molecule;
use crate::montecarlo::{mc_sweep, tune_displacement, McSettings, McState, TARGET_ACCEPTANCE};
use crate::output::{
    observables_row, write_density, write_text, xyz_frame, CsvWriter, BENCH_HEADER, IMBALANCE_HEADER, OBSERVABLES_HEADER,
};
use crate::rng::{Purpose, Rng};
use crate::runtime::{Decomposition, Engine};
use crate::scenario::{generate_scenario, Generated};

/// Reduced density separating a condensed phase from vapour.
pub const CONDENSED_DENSITY: f64 = 0.5;

pub fn condensed_check(density: f64) -> bool {
    density >= CONDENSED_DENSITY
}

/// `min(log10(N)/3, log10(steps per day) - 4)`, or `None` when not condensed.
pub fn ell_exponent(n: usize, steps_completed: u64, wall_seconds: f64, condensed: bool) -> Result<Option<f64>> {
    if steps_completed == 0 {
        return Err(Error::EllUndefined("no steps completed".into()));
    }
    if n == 0 {
        return Err(Error::EllUndefined("no molecules".into()));
    }
    if !(wall_seconds > 0.0 && wall_seconds.is_finite()) {
        return Err(Error::EllUndefined(format!("wall time {wall_seconds} is not positive")));
    }
    if !condensed {
        return Ok(None);
    }
    let per_day = steps_completed as f64 * 86400.0 / wall_seconds;
    Ok(Some(ell_from_rate(n, per_day)))
}

/// The ℓ formula for a known steps-per-day rate.
pub fn ell_from_rate(n: usize, steps_per_day: f64) -> f64 {
    ((n as f64).log10() / 3.0).min(steps_per_day.log10() - 4.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub n: usize,
    pub steps_completed: u64,
    pub wall_seconds: f64,
    pub workers: usize,
    pub decomposition: Decomposition,
    pub steps_per_second: f64,
    pub ell: Option<f64>,
    pub condensed: bool,
    pub imbalance: f64,
    /// Highest time-averaged linked-cell density seen during production.
    pub max_density: f64,
}

/// Command-line overrides of config values.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub decomposition: Option<Decomposition>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(Error::config("--workers", "must be at least 1"));
            }
            cfg.decomposition.workers = w;
        }
        if let Some(d) = self.decomposition {
            cfg.decomposition.method = d;
        }
        if let Some(s) = self.seed {
            cfg.schedule.seed = s;
        }
        Ok(())
    }
}

/// Time-averaged molecules per linked cell.
#[derive(Clone, Debug)]
pub struct CellDensityProbe {
    geom: GridGeometry,
    sums: Vec<u64>,
    samples: u64,
}

impl CellDensityProbe {
    pub fn new(geom: GridGeometry) -> Self {
        let n = geom.total_cells();
        CellDensityProbe {
            geom,
            sums: vec![0; n],
            samples: 0,
        }
    }

    pub fn accumulate(&mut self, positions: impl IntoIterator<Item = Vec3>) {
        for r in positions {
            let c = self.geom.cell_of(r);
            self.sums[self.geom.linear(c)] += 1;
        }
        self.samples += 1;
    }

    pub fn add_counts(&mut self, occupancy: &[usize]) {
        for (s, &n) in self.sums.iter_mut().zip(occupancy) {
            *s += n as u64;
        }
        self.samples += 1;
    }

    pub fn max_density(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        let v = self.geom.cell_lengths().product();
        self.sums.iter().map(|&s| s as f64 / (self.samples as f64 * v)).fold(0.0, f64::max)
    }
}

/// Everything a run produced, in memory.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub rows: Vec<Observables>,
    pub imbalance: Vec<(u64, ImbalanceReport, u64)>,
    pub density: Option<DensityGrid>,
    pub bench: BenchRecord,
    pub initial: Generated,
    pub final_state: Vec<Molecule>,
}

fn density_grid(cfg: &RunConfig) -> Result<Option<DensityGrid>> {
    let Some(d) = &cfg.output.density else { return Ok(None) };
    let l = cfg.domain.lengths;
    let layout = match d.kind {
        DensityKind::Slab => DensityLayout::Slab {
            bins: d.z_bins,
            z_lo: 0.0,
            z_hi: l.z,
        },
        DensityKind::Cylindrical => DensityLayout::Cylindrical {
            axis_x: l.x / 2.0,
            axis_y: l.y / 2.0,
            r_max: l.x.min(l.y) / 2.0,
            r_bins: d.r_bins,
            z_lo: 0.0,
            z_hi: l.z,
            z_bins: d.z_bins,
        },
    };
    Ok(Some(DensityGrid::new(layout, &cfg.domain)?))
}

struct Sinks {
    dir: PathBuf,
    observables: CsvWriter,
    imbalance: Option<CsvWriter>,
    xyz: Option<String>,
}

impl Sinks {
    fn open(cfg: &RunConfig, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let observables = CsvWriter::create(&dir.join(&cfg.output.observables), OBSERVABLES_HEADER)?;
        let imbalance = match &cfg.output.imbalance {
            Some(f) => Some(CsvWriter::create(&dir.join(f), IMBALANCE_HEADER)?),
            None => None,
        };
        Ok(Sinks {
            dir: dir.to_path_buf(),
            observables,
            imbalance,
            xyz: cfg.output.xyz.as_ref().map(|_| String::new()),
        })
    }
}

/// Executes the schedule of `cfg`. With `dir`, output files are written there.
pub fn simulate(cfg: &RunConfig, dir: Option<&Path>) -> Result<RunResult> {
    let species = cfg.species_table()?;
    let masses: Vec<f64> = species.species().iter().map(|s| s.mass).collect();
    let initial = generate_scenario(
        &cfg.scenario,
        &cfg.domain,
        cfg.cutoff,
        cfg.scenario_species(),
        &masses,
        cfg.schedule.seed,
    )?;
    let mut sinks = match dir {
        Some(d) => Some(Sinks::open(cfg, d)?),
        None => None,
    };
    let mut density = density_grid(cfg)?;
    let geom = GridGeometry::new(&cfg.domain, cfg.cutoff)?;
    let mut probe = CellDensityProbe::new(geom);
    let mut rows = Vec::new();
    let mut imbalance_rows = Vec::new();
    let sched = &cfg.schedule;
    let interval = cfg.output.sample_interval;
    let density_interval = cfg.output.density.as_ref().map(|d| d.interval).unwrap_or(interval);

    let (wall, final_state, imbalance, n) = match sched.ensemble {
        Ensemble::Md => {
            let mut engine = Engine::new(cfg.engine_settings()?, initial.molecules.clone())?;
            let thermostat = |engine: &mut Engine, k: u64| -> Result<()> {
                if let Some(t) = &sched.thermostat {
                    if k % t.interval == 0 {
                        engine.rescale_to(t.target)?;
                    }
                }
                Ok(())
            };
            for k in 1..=sched.equilibration {
                engine.step()?;
                thermostat(&mut engine, k)?;
            }
            let mut record = |engine: &Engine, sinks: &mut Option<Sinks>, rows: &mut Vec<Observables>| -> Result<()> {
                let o = engine.observables();
                let rep = engine.imbalance_report()?;
                imbalance_rows.push((o.step, rep.clone(), engine.rebalance_count()));
                if let Some(s) = sinks {
                    s.observables.line(&observables_row(&o))?;
                    if let Some(w) = &mut s.imbalance {
                        w.line(&format!(
                            "{},{},{},{},{}",
                            o.step,
                            rep.imbalance,
                            rep.max_load,
                            rep.mean_load,
                            engine.rebalance_count()
                        ))?;
                    }
                    if let (Some(x), true) = (&mut s.xyz, cfg.output.xyz_interval > 0) {
                        x.push_str(&xyz_frame(&engine.gather(), &species, &format!("step {}", o.step)));
                    }
                }
                rows.push(o);
                Ok(())
            };
            record(&engine, &mut sinks, &mut rows)?;
            let start = Instant::now();
            for k in 1..=sched.steps {
                engine.step()?;
                if sched.thermostat_production {
                    thermostat(&mut engine, sched.equilibration + k)?;
                }
                let xyz_due = cfg.output.xyz_interval > 0 && k % cfg.output.xyz_interval == 0;
                if k % interval == 0 {
                    record(&engine, &mut sinks, &mut rows)?;
                    probe.add_counts(&engine.occupancy());
                } else if xyz_due {
                    if let Some(Sinks { xyz: Some(x), .. }) = &mut sinks {
                        x.push_str(&xyz_frame(&engine.gather(), &species, &format!("step {}", engine.current_step())));
                    }
                }
                if k % density_interval == 0 {
                    if let Some(g) = &mut density {
                        g.accumulate(&engine.gather());
                    }
                }
            }
            let wall = start.elapsed().as_secs_f64();
            if probe.samples == 0 {
                probe.add_counts(&engine.occupancy());
            }
            (wall, engine.gather(), engine.last_imbalance(), engine.molecule_count())
        }
        Ensemble::Mc => {
            let settings = McSettings {
                domain: cfg.domain.clone(),
                species: species.clone(),
                cutoff: cfg.cutoff,
                temperature: cfg.scenario.temperature,
                max_displacement: sched.max_displacement,
                homogeneous: cfg.homogeneous,
            };
            let mut state = McState::new(settings, &initial.molecules)?;
            let mut rng = Rng::substream(sched.seed, Purpose::MonteCarlo, 0);
            for k in 1..=sched.equilibration {
                mc_sweep(&mut state, &mut rng)?;
                if k % sched.tune_interval == 0 {
                    tune_displacement(&mut state, TARGET_ACCEPTANCE);
                }
            }
            state.freeze_tuning();
            let base = sched.equilibration;
            let emit = |o: Observables, sinks: &mut Option<Sinks>, rows: &mut Vec<Observables>| -> Result<()> {
                if let Some(s) = sinks {
                    s.observables.line(&observables_row(&o))?;
                }
                rows.push(o);
                Ok(())
            };
            emit(state.observables(base)?, &mut sinks, &mut rows)?;
            let start = Instant::now();
            for k in 1..=sched.steps {
                mc_sweep(&mut state, &mut rng)?;
                if k % interval == 0 {
                    emit(state.observables(base + k)?, &mut sinks, &mut rows)?;
                    probe.accumulate(state.positions().iter().copied());
                }
                if k % density_interval == 0 {
                    if let Some(g) = &mut density {
                        g.accumulate(&state.to_molecules());
                    }
                }
            }
            let wall = start.elapsed().as_secs_f64();
            if probe.samples == 0 {
                probe.accumulate(state.positions().iter().copied());
            }
            (wall, state.to_molecules(), 1.0, state.len())
        }
    };

    let max_density = probe.max_density();
    let condensed = condensed_check(max_density);
    let ell = if sched.steps > 0 && wall > 0.0 {
        ell_exponent(n, sched.steps, wall, condensed)?
    } else {
        None
    };
    let bench = BenchRecord {
        n,
        steps_completed: sched.steps,
        wall_seconds: wall,
        workers: cfg.decomposition.workers,
        decomposition: cfg.decomposition.method,
        steps_per_second: if wall > 0.0 { sched.steps as f64 / wall } else { 0.0 },
        ell,
        condensed,
        imbalance,
        max_density,
    };

    if let Some(s) = sinks {
        s.observables.finish()?;
        if let Some(w) = s.imbalance {
            w.finish()?;
        }
        if let (Some(g), Some(d)) = (&density, &cfg.output.density) {
            write_density(&s.dir.join(&d.file), g)?;
        }
        if let (Some(mut x), Some(f)) = (s.xyz, &cfg.output.xyz) {
            if cfg.output.xyz_interval == 0 {
                x = xyz_frame(&final_state, &species, "final");
            }
            write_text(&s.dir.join(f), &x)?;
        }
        if let Some(f) = &cfg.output.final_state {
            write_text(&s.dir.join(f), &xyz_frame(&final_state, &species, "final state"))?;
        }
        if let Some(f) = &cfg.output.bench {
            write_bench(&s.dir.join(f), &[(bench.clone(), 1.0)])?;
        }
    }

    Ok(RunResult {
        rows,
        imbalance: imbalance_rows,
        density,
        bench,
        initial,
        final_state,
    })
}

pub fn bench_row(b: &BenchRecord, speedup: f64) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        b.n,
        b.workers,
        match b.decomposition {
            Decomposition::KdTree => "kd",
            Decomposition::UniformGrid => "uniform",
        },
        b.steps_completed,
        b.wall_seconds,
        b.steps_per_second,
        speedup,
        b.imbalance,
        b.ell.map(|e| e.to_string()).unwrap_or_else(|| "NA".into()),
        b.condensed
    )
}

pub fn write_bench(path: &Path, rows: &[(BenchRecord, f64)]) -> Result<()> {
    let mut w = CsvWriter::create(path, BENCH_HEADER)?;
    for (b, s) in rows {
        w.line(&bench_row(b, *s))?;
    }
    w.finish()
}

/// Runs the same scenario at each worker count; speedup is relative to a
/// one-worker run (performed even if 1 is not listed).
pub fn bench(cfg: &RunConfig, workers: &[usize]) -> Result<Vec<(BenchRecord, f64)>> {
    if workers.is_empty() {
        return Err(Error::config("--workers", "worker list is empty"));
    }
    if cfg.schedule.steps == 0 {
        return Err(Error::config("schedule.steps", "benchmark needs at least one step"));
    }
    let run_with = |w: usize| -> Result<BenchRecord> {
        let mut c = cfg.clone();
        c.decomposition.workers = w;
        c.output.density = None;
        Ok(simulate(&c, None)?.bench)
    };
    let baseline = if workers.contains(&1) { None } else { Some(run_with(1)?) };
    let mut records = Vec::with_capacity(workers.len());
    for &w in workers {
        records.push(run_with(w)?);
    }
    let base_sps = baseline
        .as_ref()
        .or_else(|| records.iter().find(|r| r.workers == 1))
        .map(|r| r.steps_per_second)
        .unwrap();
    Ok(records
        .into_iter()
        .map(|r| {
            let s = if r.workers == 1 { 1.0 } else { r.steps_per_second / base_sps };
            (r, s)
        })
        .collect())
}
