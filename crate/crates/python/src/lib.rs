//! Python bindings: configuration loading, full runs, a steppable MD engine,
//! a Metropolis sampler and the partitioning helpers.

use std::path::PathBuf;
use std::sync::Mutex;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ljmd::balance::{kd_partition as kd, measure_imbalance, uniform_partition as uniform, Axis, CellLoadField, PartitionTree};
use ljmd::config::RunConfig;
use ljmd::dynamics::Observables;
use ljmd::montecarlo::{mc_sweep, tune_displacement, McSettings, McState, TARGET_ACCEPTANCE};
use ljmd::rng::Rng;
use ljmd::runtime::{Decomposition, Engine as CoreEngine, EngineSettings};
use ljmd::{Domain, Molecule, Species, SpeciesTable, Vec3};

create_exception!(pyljmd, LjmdError, PyException);

fn err(e: ljmd::Error) -> PyErr {
    LjmdError::new_err(e.to_string())
}

fn decomposition(name: &str) -> PyResult<Decomposition> {
    match name {
        "kd" => Ok(Decomposition::KdTree),
        "uniform" => Ok(Decomposition::UniformGrid),
        o => Err(LjmdError::new_err(format!("unknown decomposition {o:?} (kd or uniform)"))),
    }
}

fn axis(name: &str) -> PyResult<Axis> {
    match name {
        "x" => Ok(Axis::X),
        "y" => Ok(Axis::Y),
        "z" => Ok(Axis::Z),
        o => Err(LjmdError::new_err(format!("unknown axis {o:?}"))),
    }
}

fn observables_dict<'py>(py: Python<'py>, o: &Observables) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", o.step)?;
    d.set_item("time", o.time)?;
    d.set_item("T", o.t_inst)?;
    d.set_item("u_pot", o.u_pot)?;
    d.set_item("e_kin", o.e_kin)?;
    d.set_item("e_total", o.e_total)?;
    d.set_item("P", o.pressure)?;
    d.set_item("n", o.n)?;
    d.set_item("imbalance", o.imbalance)?;
    Ok(d)
}

fn leaves(tree: &PartitionTree) -> Vec<([usize; 3], [usize; 3])> {
    tree.leaves().iter().map(|b| (b.lo, b.hi)).collect()
}

fn triples(v: impl Iterator<Item = Vec3>) -> Vec<[f64; 3]> {
    v.map(Vec3::to_array).collect()
}

/// A parsed run configuration.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::from_path(&path).map(|inner| Config { inner }).map_err(err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        RunConfig::parse(text).map(|inner| Config { inner }).map_err(err)
    }

    fn to_ini(&self) -> String {
        self.inner.to_ini()
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.inner.schedule.steps
    }

    #[setter]
    fn set_steps(&mut self, v: u64) {
        self.inner.schedule.steps = v;
    }

    #[getter]
    fn equilibration(&self) -> u64 {
        self.inner.schedule.equilibration
    }

    #[setter]
    fn set_equilibration(&mut self, v: u64) {
        self.inner.schedule.equilibration = v;
    }

    #[getter]
    fn workers(&self) -> usize {
        self.inner.decomposition.workers
    }

    #[setter]
    fn set_workers(&mut self, v: usize) {
        self.inner.decomposition.workers = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.schedule.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.schedule.seed = v;
    }

    #[setter]
    fn set_decomposition(&mut self, name: &str) -> PyResult<()> {
        self.inner.decomposition.method = decomposition(name)?;
        Ok(())
    }
}

/// Runs the configured schedule; returns the sampled rows and the bench record.
#[pyfunction]
#[pyo3(signature = (config, output_dir=None))]
fn simulate<'py>(py: Python<'py>, config: &Config, output_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let r = ljmd::cli::simulate(&config.inner, output_dir.as_deref()).map_err(err)?;
    let out = PyDict::new(py);
    let rows = r.rows.iter().map(|o| observables_dict(py, o)).collect::<PyResult<Vec<_>>>()?;
    out.set_item("rows", rows)?;
    let b = PyDict::new(py);
    b.set_item("n", r.bench.n)?;
    b.set_item("steps_per_second", r.bench.steps_per_second)?;
    b.set_item("wall_seconds", r.bench.wall_seconds)?;
    b.set_item("ell", r.bench.ell)?;
    b.set_item("condensed", r.bench.condensed)?;
    b.set_item("imbalance", r.bench.imbalance)?;
    out.set_item("bench", b)?;
    out.set_item("n_liquid", r.initial.n_liquid)?;
    out.set_item("final_positions", triples(r.final_state.iter().map(|m| m.r)))?;
    Ok(out)
}

/// Initial positions and velocities of the configured scenario.
#[pyfunction]
fn generate_scenario(config: &Config) -> PyResult<(Vec<[f64; 3]>, Vec<[f64; 3]>, usize)> {
    let c = &config.inner;
    let species = c.species_table().map_err(err)?;
    let masses: Vec<f64> = species.species().iter().map(|s| s.mass).collect();
    let g = ljmd::scenario::generate_scenario(&c.scenario, &c.domain, c.cutoff, c.scenario_species(), &masses, c.schedule.seed)
        .map_err(err)?;
    Ok((triples(g.molecules.iter().map(|m| m.r)), triples(g.molecules.iter().map(|m| m.v)), g.n_liquid))
}

fn build_molecules(positions: Vec<[f64; 3]>, velocities: Option<Vec<[f64; 3]>>) -> PyResult<Vec<Molecule>> {
    let v = velocities.unwrap_or_else(|| vec![[0.0; 3]; positions.len()]);
    if v.len() != positions.len() {
        return Err(LjmdError::new_err("positions and velocities differ in length"));
    }
    Ok(positions
        .into_iter()
        .zip(v)
        .enumerate()
        .map(|(i, (r, v))| Molecule::new(i as u64, 0, Vec3::from_array(r), Vec3::from_array(v)))
        .collect())
}

/// Parallel MD engine on a periodic box of reference LJ molecules, or built from a config.
#[pyclass(name = "Engine")]
struct Engine {
    inner: Mutex<CoreEngine>,
}

impl Engine {
    fn with<T>(&self, f: impl FnOnce(&mut CoreEngine) -> T) -> T {
        f(&mut self.inner.lock().expect("engine lock poisoned"))
    }
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (lengths, positions, velocities=None, workers=1, decomposition="kd", cutoff=2.5, timestep=0.002))]
    fn new(
        lengths: [f64; 3],
        positions: Vec<[f64; 3]>,
        velocities: Option<Vec<[f64; 3]>>,
        workers: usize,
        decomposition: &str,
        cutoff: f64,
        timestep: f64,
    ) -> PyResult<Self> {
        let species = SpeciesTable::single(Species::reference("LJ")).map_err(err)?;
        let mut s = EngineSettings::new(Domain::periodic_box(Vec3::from_array(lengths)), species, cutoff);
        s.workers = workers;
        s.decomposition = self::decomposition(decomposition)?;
        s.timestep = timestep;
        let e = CoreEngine::new(s, build_molecules(positions, velocities)?).map_err(err)?;
        Ok(Engine { inner: Mutex::new(e) })
    }

    #[staticmethod]
    fn from_config(config: &Config) -> PyResult<Self> {
        let (pos, vel, _) = generate_scenario(config)?;
        let c = &config.inner;
        let ms = build_molecules(pos, Some(vel))?;
        let e = CoreEngine::new(c.engine_settings().map_err(err)?, ms).map_err(err)?;
        Ok(Engine { inner: Mutex::new(e) })
    }

    #[pyo3(signature = (n=1))]
    fn step(&self, py: Python<'_>, n: u64) -> PyResult<()> {
        py.detach(|| {
            self.with(|e| {
                for _ in 0..n {
                    e.step()?;
                }
                Ok(())
            })
        })
        .map_err(err)
    }

    fn observables<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let o = self.with(|e| e.observables());
        observables_dict(py, &o)
    }

    fn positions(&self) -> Vec<[f64; 3]> {
        self.with(|e| triples(e.gather().iter().map(|m| m.r)))
    }

    fn velocities(&self) -> Vec<[f64; 3]> {
        self.with(|e| triples(e.gather().iter().map(|m| m.v)))
    }

    fn forces(&self) -> Vec<[f64; 3]> {
        self.with(|e| triples(e.gather().iter().map(|m| m.f)))
    }

    fn temperature(&self) -> f64 {
        self.with(|e| e.temperature())
    }

    fn rescale_to(&self, target: f64) -> PyResult<()> {
        self.with(|e| e.rescale_to(target)).map_err(err)
    }

    /// Recomputes the kd partition from current loads; returns the imbalance.
    fn rebalance(&self) -> PyResult<f64> {
        self.with(|e| e.rebalance()).map(|r| r.imbalance).map_err(err)
    }

    fn imbalance(&self) -> PyResult<f64> {
        self.with(|e| e.imbalance_report()).map(|r| r.imbalance).map_err(err)
    }

    fn owned_counts(&self) -> Vec<usize> {
        self.with(|e| e.owned_counts())
    }

    /// Cell boxes `(lo, hi)` of every worker.
    fn leaves(&self) -> Vec<([usize; 3], [usize; 3])> {
        self.with(|e| leaves(e.tree()))
    }

    #[getter]
    fn current_step(&self) -> u64 {
        self.with(|e| e.current_step())
    }

    fn __len__(&self) -> usize {
        self.with(|e| e.molecule_count())
    }
}

/// Metropolis NVT sampler on a periodic box of reference LJ molecules.
#[pyclass(name = "MonteCarlo")]
struct MonteCarlo {
    state: Mutex<(McState, Rng)>,
}

#[pymethods]
impl MonteCarlo {
    #[new]
    #[pyo3(signature = (lengths, positions, temperature, seed=1, max_displacement=0.2, cutoff=2.5))]
    fn new(lengths: [f64; 3], positions: Vec<[f64; 3]>, temperature: f64, seed: u64, max_displacement: f64, cutoff: f64) -> PyResult<Self> {
        let settings = McSettings {
            domain: Domain::periodic_box(Vec3::from_array(lengths)),
            species: SpeciesTable::single(Species::reference("LJ")).map_err(err)?,
            cutoff,
            temperature,
            max_displacement,
            homogeneous: true,
        };
        let st = McState::new(settings, &build_molecules(positions, None)?).map_err(err)?;
        Ok(MonteCarlo {
            state: Mutex::new((st, Rng::new(seed))),
        })
    }

    /// Runs `n` sweeps, optionally tuning the displacement every 10 sweeps.
    #[pyo3(signature = (n=1, tune=false))]
    fn sweep(&self, py: Python<'_>, n: u64, tune: bool) -> PyResult<()> {
        py.detach(|| {
            let mut g = self.state.lock().expect("sampler lock poisoned");
            let (st, rng) = &mut *g;
            for k in 1..=n {
                mc_sweep(st, rng)?;
                if tune && k % 10 == 0 {
                    tune_displacement(st, TARGET_ACCEPTANCE);
                }
            }
            Ok(())
        })
        .map_err(err)
    }

    fn energy(&self) -> f64 {
        self.state.lock().expect("sampler lock poisoned").0.energy()
    }

    fn acceptance_ratio(&self) -> f64 {
        self.state.lock().expect("sampler lock poisoned").0.acceptance_ratio()
    }

    fn observables<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let g = self.state.lock().expect("sampler lock poisoned");
        let o = g.0.observables(g.0.sweeps()).map_err(err)?;
        observables_dict(py, &o)
    }

    fn positions(&self) -> Vec<[f64; 3]> {
        self.state.lock().expect("sampler lock poisoned").0.positions().to_vec().into_iter().map(Vec3::to_array).collect()
    }
}

/// kd bisection of a cost grid (x-major flat `costs`); returns `(leaves, imbalance)`.
#[pyfunction]
#[pyo3(signature = (dims, costs, workers, first_axis="x"))]
fn kd_partition(dims: [usize; 3], costs: Vec<f64>, workers: usize, first_axis: &str) -> PyResult<(Vec<([usize; 3], [usize; 3])>, f64)> {
    let field = CellLoadField::new(dims, costs).map_err(err)?;
    let t = kd(&field, workers, axis(first_axis)?).map_err(err)?;
    Ok((leaves(&t), measure_imbalance(&t, &field).imbalance))
}

#[pyfunction]
fn uniform_partition(dims: [usize; 3], workers: usize) -> PyResult<Vec<([usize; 3], [usize; 3])>> {
    uniform(dims, workers).map(|t| leaves(&t)).map_err(err)
}

#[pyfunction]
fn ell_exponent(n: usize, steps_completed: u64, wall_seconds: f64, condensed: bool) -> PyResult<Option<f64>> {
    ljmd::cli::ell_exponent(n, steps_completed, wall_seconds, condensed).map_err(err)
}

#[pymodule]
fn pyljmd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LjmdError", m.py().get_type::<LjmdError>())?;
    m.add_class::<Config>()?;
    m.add_class::<Engine>()?;
    m.add_class::<MonteCarlo>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(kd_partition, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_partition, m)?)?;
    m.add_function(wrap_pyfunction!(ell_exponent, m)?)?;
    Ok(())
}
