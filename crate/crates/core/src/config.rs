//! Flat INI-style run configuration.
//!
//! ```text
//! # comment
//! [domain]
//! lengths = 10 10 20
//! periodic = true true false
//! ```
//!
//! Sections: `domain`, `species.<name>`, `mix.<a>.<b>`, `scenario`,
//! `schedule`, `decomposition`, `output`. Keys are case-sensitive; an unknown
//! section or key is an error naming the line. [`RunConfig::to_ini`] writes
//! every field, so parse → serialize → parse is the identity.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::balance::Axis;
use crate::error::{Error, Result};
use crate::forcefield::WallSpec;
use crate::geom::{Domain, Vec3};
use crate::runtime::{Decomposition, EngineSettings};
use crate::species::{Species, SpeciesTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Bulk,
    Droplet,
    Sessile,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Bulk => "bulk",
            ScenarioKind::Droplet => "droplet",
            ScenarioKind::Sessile => "sessile",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Species generated; defaults to the first declared.
    pub species: Option<String>,
    pub temperature: f64,
    /// Bulk number density.
    pub density: f64,
    pub liquid_density: f64,
    pub vapor_density: f64,
    pub radius: f64,
    /// Height of the sessile cap's sphere centre above the wall.
    pub center_height: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            kind: ScenarioKind::Bulk,
            species: None,
            temperature: 1.0,
            density: 0.8,
            liquid_density: 0.8,
            vapor_density: 0.02,
            radius: 0.0,
            center_height: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ensemble {
    Md,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thermostat {
    pub target: f64,
    pub interval: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub ensemble: Ensemble,
    pub timestep: f64,
    /// Production steps (MC: sweeps).
    pub steps: u64,
    /// Steps before production; the thermostat and MC tuning act only here
    /// unless `thermostat_production` is set.
    pub equilibration: u64,
    pub thermostat: Option<Thermostat>,
    pub thermostat_production: bool,
    pub seed: u64,
    pub max_displacement: f64,
    pub tune_interval: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            ensemble: Ensemble::Md,
            timestep: 0.002,
            steps: 0,
            equilibration: 0,
            thermostat: None,
            thermostat_production: false,
            seed: 1,
            max_displacement: 0.2,
            tune_interval: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionConfig {
    pub method: Decomposition,
    pub workers: usize,
    pub rebalance_interval: u64,
    pub imbalance_threshold: f64,
    pub first_axis: Axis,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        DecompositionConfig {
            method: Decomposition::KdTree,
            workers: 1,
            rebalance_interval: 1000,
            imbalance_threshold: 1.5,
            first_axis: Axis::X,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensityKind {
    Slab,
    Cylindrical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityOutput {
    pub file: String,
    pub kind: DensityKind,
    pub r_bins: usize,
    pub z_bins: usize,
    pub interval: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub sample_interval: u64,
    pub observables: String,
    pub imbalance: Option<String>,
    pub bench: Option<String>,
    pub density: Option<DensityOutput>,
    pub xyz: Option<String>,
    pub xyz_interval: u64,
    pub final_state: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            sample_interval: 10,
            observables: "observables.csv".into(),
            imbalance: None,
            bench: None,
            density: None,
            xyz: None,
            xyz_interval: 0,
            final_state: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixEntry {
    pub a: String,
    pub b: String,
    pub xi: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub domain: Domain,
    pub cutoff: f64,
    /// Apply the homogeneous tail correction.
    pub homogeneous: bool,
    pub species: Vec<Species>,
    pub mixing: Vec<MixEntry>,
    pub scenario: ScenarioSpec,
    pub schedule: Schedule,
    pub decomposition: DecompositionConfig,
    pub output: OutputConfig,
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

impl Section {
    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for e in &self.entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(Error::Config {
                    key: format!("{}.{}", self.name, e.key),
                    line: Some(e.line),
                    message: "unknown key".into(),
                });
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn err(&self, e: &Entry, message: impl Into<String>) -> Error {
        Error::Config {
            key: format!("{}.{}", self.name, e.key),
            line: Some(e.line),
            message: message.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|_| self.err(e, format!("cannot parse {:?}", e.value))),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.parse::<f64>(key)?.unwrap_or(default);
        if !v.is_finite() {
            return Err(self.err(self.get(key).unwrap(), "must be finite"));
        }
        Ok(v)
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parse::<u64>(key)?.unwrap_or(default))
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.parse::<bool>(key)?.unwrap_or(default))
    }

    fn string(&self, key: &str) -> Option<String> {
        self.get(key).map(|e| e.value.clone())
    }

    fn list<T: std::str::FromStr + Copy>(&self, key: &str) -> Result<Option<[T; 3]>> {
        let Some(e) = self.get(key) else { return Ok(None) };
        let parts: Vec<&str> = e.value.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if parts.len() != 3 {
            return Err(self.err(e, "expected three values"));
        }
        let mut out = Vec::with_capacity(3);
        for p in parts {
            out.push(p.parse::<T>().map_err(|_| self.err(e, format!("cannot parse {p:?}")))?);
        }
        Ok(Some([out[0], out[1], out[2]]))
    }

    /// Error against `key` if present, else against the section header.
    fn invalid(&self, key: &str, message: impl Into<String>) -> Error {
        Error::Config {
            key: format!("{}.{key}", self.name),
            line: Some(self.get(key).map(|e| e.line).unwrap_or(self.line)),
            message: message.into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                key: s.into(),
                line: Some(line),
                message: "unterminated section header".into(),
            })?;
            let name = name.trim().to_string();
            if sections.iter().any(|x| x.name == name) {
                return Err(Error::Config {
                    key: name,
                    line: Some(line),
                    message: "duplicate section".into(),
                });
            }
            sections.push(Section {
                name,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| Error::Config {
            key: s.into(),
            line: Some(line),
            message: "expected `key = value`".into(),
        })?;
        let key = k.trim().to_string();
        let sec = sections.last_mut().ok_or_else(|| Error::Config {
            key: key.clone(),
            line: Some(line),
            message: "key outside any section".into(),
        })?;
        if sec.entries.iter().any(|e| e.key == key) {
            return Err(Error::Config {
                key: format!("{}.{key}", sec.name),
                line: Some(line),
                message: "duplicate key".into(),
            });
        }
        sec.entries.push(Entry {
            key,
            value: v.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

const DOMAIN_KEYS: &[&str] = &[
    "lengths",
    "periodic",
    "reflecting",
    "cutoff",
    "homogeneous",
    "wall_epsilon",
    "wall_sigma",
    "wall_cutoff",
];
const SPECIES_KEYS: &[&str] = &["sigma", "epsilon", "mass"];
const MIX_KEYS: &[&str] = &["xi", "eta"];
const SCENARIO_KEYS: &[&str] = &[
    "kind",
    "species",
    "temperature",
    "density",
    "liquid_density",
    "vapor_density",
    "radius",
    "center_height",
];
const SCHEDULE_KEYS: &[&str] = &[
    "ensemble",
    "timestep",
    "steps",
    "equilibration",
    "thermostat_temperature",
    "thermostat_interval",
    "thermostat_production",
    "seed",
    "max_displacement",
    "tune_interval",
];
const DECOMPOSITION_KEYS: &[&str] = &["method", "workers", "rebalance_interval", "imbalance_threshold", "first_axis"];
const OUTPUT_KEYS: &[&str] = &[
    "sample_interval",
    "observables",
    "imbalance",
    "bench",
    "density",
    "density_layout",
    "density_r_bins",
    "density_z_bins",
    "density_interval",
    "xyz",
    "xyz_interval",
    "final_state",
];

fn parse_axis(sec: &Section, key: &str) -> Result<Option<Axis>> {
    match sec.string(key).as_deref() {
        None => Ok(None),
        Some("x") => Ok(Some(Axis::X)),
        Some("y") => Ok(Some(Axis::Y)),
        Some("z") => Ok(Some(Axis::Z)),
        Some(other) => Err(sec.invalid(key, format!("expected x, y or z, got {other:?}"))),
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            key: path.display().to_string(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let sections = lex(text)?;
        let mut domain_sec = None;
        let mut scenario_sec = None;
        let mut schedule_sec = None;
        let mut decomposition_sec = None;
        let mut output_sec = None;
        let mut species = Vec::new();
        let mut mix_secs = Vec::new();
        for sec in &sections {
            match sec.name.as_str() {
                "domain" => domain_sec = Some(sec),
                "scenario" => scenario_sec = Some(sec),
                "schedule" => schedule_sec = Some(sec),
                "decomposition" => decomposition_sec = Some(sec),
                "output" => output_sec = Some(sec),
                n if n.starts_with("species.") && n.len() > 8 => {
                    sec.check_keys(SPECIES_KEYS)?;
                    let name = &n[8..];
                    let sp = Species {
                        name: name.to_string(),
                        sigma: sec.f64("sigma", 1.0)?,
                        epsilon: sec.f64("epsilon", 1.0)?,
                        mass: sec.f64("mass", 1.0)?,
                    };
                    sp.validate().map_err(|e| match e {
                        Error::Config { key, message, .. } => {
                            let k = key.rsplit('.').next().unwrap_or("").to_string();
                            Error::Config {
                                key,
                                line: Some(sec.get(&k).map(|x| x.line).unwrap_or(sec.line)),
                                message,
                            }
                        }
                        other => other,
                    })?;
                    species.push(sp);
                }
                n if n.starts_with("mix.") => {
                    sec.check_keys(MIX_KEYS)?;
                    let parts: Vec<&str> = n[4..].split('.').collect();
                    if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
                        return Err(Error::Config {
                            key: n.into(),
                            line: Some(sec.line),
                            message: "expected [mix.<a>.<b>]".into(),
                        });
                    }
                    mix_secs.push((sec, parts[0].to_string(), parts[1].to_string()));
                }
                other => {
                    return Err(Error::Config {
                        key: other.into(),
                        line: Some(sec.line),
                        message: "unknown section".into(),
                    })
                }
            }
        }

        let d = domain_sec.ok_or_else(|| Error::config("domain", "missing [domain] section"))?;
        d.check_keys(DOMAIN_KEYS)?;
        let lengths = d.list::<f64>("lengths")?.ok_or_else(|| d.invalid("lengths", "required"))?;
        let periodic = d.list::<bool>("periodic")?.unwrap_or([true; 3]);
        let reflecting = d.list::<bool>("reflecting")?.unwrap_or([false; 3]);
        let cutoff = d.f64("cutoff", 2.5)?;
        let homogeneous = d.bool("homogeneous", false)?;
        let wall = match d.parse::<f64>("wall_epsilon")? {
            None => {
                if d.get("wall_sigma").is_some() || d.get("wall_cutoff").is_some() {
                    return Err(d.invalid("wall_epsilon", "wall_sigma/wall_cutoff given without wall_epsilon"));
                }
                None
            }
            Some(eps) => Some(
                WallSpec::new(eps, d.f64("wall_sigma", 1.0)?, d.f64("wall_cutoff", 2.5)?)
                    .map_err(|e| d.invalid("wall_epsilon", e.to_string()))?,
            ),
        };
        let domain = Domain {
            lengths: Vec3::from_array(lengths),
            periodic,
            reflecting,
            wall,
        };
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(d.invalid("lengths", "must be positive"));
        }
        domain.validate().map_err(|e| d.invalid("periodic", e.to_string()))?;
        if !(cutoff > 0.0) {
            return Err(d.invalid("cutoff", "must be positive"));
        }
        if cutoff > domain.lengths.min_component() / 3.0 {
            return Err(d.invalid(
                "cutoff",
                format!("cutoff {cutoff} exceeds a third of the smallest box length {}", domain.lengths.min_component()),
            ));
        }

        if species.is_empty() {
            species.push(Species::reference("LJ"));
        }
        let mut mixing = Vec::new();
        for (sec, a, b) in mix_secs {
            for n in [&a, &b] {
                if !species.iter().any(|s| &s.name == n) {
                    return Err(Error::Config {
                        key: sec.name.clone(),
                        line: Some(sec.line),
                        message: format!("unknown species {n:?}"),
                    });
                }
            }
            let xi = sec.f64("xi", 1.0)?;
            let eta = sec.f64("eta", 1.0)?;
            if !(xi > 0.0) {
                return Err(sec.invalid("xi", "must be positive"));
            }
            if !(eta > 0.0) {
                return Err(sec.invalid("eta", "must be positive"));
            }
            mixing.push(MixEntry { a, b, xi, eta });
        }

        let mut scenario = ScenarioSpec::default();
        if let Some(s) = scenario_sec {
            s.check_keys(SCENARIO_KEYS)?;
            scenario.kind = match s.string("kind").as_deref() {
                None | Some("bulk") => ScenarioKind::Bulk,
                Some("droplet") => ScenarioKind::Droplet,
                Some("sessile") => ScenarioKind::Sessile,
                Some(o) => return Err(s.invalid("kind", format!("expected bulk, droplet or sessile, got {o:?}"))),
            };
            scenario.species = s.string("species");
            if let Some(n) = &scenario.species {
                if !species.iter().any(|sp| &sp.name == n) {
                    return Err(s.invalid("species", format!("unknown species {n:?}")));
                }
            }
            scenario.temperature = s.f64("temperature", scenario.temperature)?;
            scenario.density = s.f64("density", scenario.density)?;
            scenario.liquid_density = s.f64("liquid_density", scenario.liquid_density)?;
            scenario.vapor_density = s.f64("vapor_density", scenario.vapor_density)?;
            scenario.radius = s.f64("radius", scenario.radius)?;
            scenario.center_height = s.f64("center_height", scenario.center_height)?;
            for (k, v) in [
                ("temperature", scenario.temperature),
                ("density", scenario.density),
                ("liquid_density", scenario.liquid_density),
                ("vapor_density", scenario.vapor_density),
            ] {
                if !(v > 0.0) {
                    return Err(s.invalid(k, "must be positive"));
                }
            }
            if scenario.radius < 0.0 {
                return Err(s.invalid("radius", "must be non-negative"));
            }
            if scenario.kind != ScenarioKind::Bulk {
                let limit = domain.lengths.min_component() / 2.0 - cutoff;
                if scenario.radius >= limit && scenario.radius > 0.0 {
                    return Err(s.invalid("radius", format!("must be below min(L)/2 - cutoff = {limit}")));
                }
            }
            if scenario.kind == ScenarioKind::Sessile && domain.wall.is_none() {
                return Err(s.invalid("kind", "sessile scenario needs a wall (domain.wall_epsilon)"));
            }
        }

        let mut schedule = Schedule::default();
        if let Some(s) = schedule_sec {
            s.check_keys(SCHEDULE_KEYS)?;
            schedule.ensemble = match s.string("ensemble").as_deref() {
                None | Some("md") => Ensemble::Md,
                Some("mc") => Ensemble::Mc,
                Some(o) => return Err(s.invalid("ensemble", format!("expected md or mc, got {o:?}"))),
            };
            schedule.timestep = s.f64("timestep", schedule.timestep)?;
            if !(schedule.timestep > 0.0) {
                return Err(s.invalid("timestep", "must be positive"));
            }
            schedule.steps = s.u64("steps", 0)?;
            schedule.equilibration = s.u64("equilibration", 0)?;
            schedule.seed = s.u64("seed", schedule.seed)?;
            schedule.max_displacement = s.f64("max_displacement", schedule.max_displacement)?;
            if !(schedule.max_displacement >= 0.0) {
                return Err(s.invalid("max_displacement", "must be non-negative"));
            }
            schedule.tune_interval = s.u64("tune_interval", schedule.tune_interval)?;
            if schedule.tune_interval == 0 {
                return Err(s.invalid("tune_interval", "must be at least 1"));
            }
            schedule.thermostat_production = s.bool("thermostat_production", false)?;
            schedule.thermostat = match s.parse::<f64>("thermostat_temperature")? {
                None => {
                    if s.get("thermostat_interval").is_some() {
                        return Err(s.invalid("thermostat_interval", "given without thermostat_temperature"));
                    }
                    None
                }
                Some(t) => {
                    if !(t > 0.0 && t.is_finite()) {
                        return Err(s.invalid("thermostat_temperature", "must be positive"));
                    }
                    let interval = s.u64("thermostat_interval", 1)?;
                    if interval == 0 {
                        return Err(s.invalid("thermostat_interval", "must be at least 1"));
                    }
                    Some(Thermostat { target: t, interval })
                }
            };
        }

        let mut decomposition = DecompositionConfig::default();
        if let Some(s) = decomposition_sec {
            s.check_keys(DECOMPOSITION_KEYS)?;
            decomposition.method = match s.string("method").as_deref() {
                None | Some("kd") => Decomposition::KdTree,
                Some("uniform") => Decomposition::UniformGrid,
                Some(o) => return Err(s.invalid("method", format!("expected uniform or kd, got {o:?}"))),
            };
            decomposition.workers = s.u64("workers", 1)? as usize;
            if decomposition.workers == 0 {
                return Err(s.invalid("workers", "must be at least 1"));
            }
            decomposition.rebalance_interval = s.u64("rebalance_interval", decomposition.rebalance_interval)?;
            if decomposition.rebalance_interval == 0 {
                return Err(s.invalid("rebalance_interval", "must be at least 1"));
            }
            decomposition.imbalance_threshold = s.f64("imbalance_threshold", decomposition.imbalance_threshold)?;
            if !(decomposition.imbalance_threshold >= 1.0) {
                return Err(s.invalid("imbalance_threshold", "must be at least 1"));
            }
            decomposition.first_axis = parse_axis(s, "first_axis")?.unwrap_or(Axis::X);
        }

        let mut output = OutputConfig::default();
        if let Some(s) = output_sec {
            s.check_keys(OUTPUT_KEYS)?;
            output.sample_interval = s.u64("sample_interval", output.sample_interval)?;
            if output.sample_interval == 0 {
                return Err(s.invalid("sample_interval", "must be at least 1"));
            }
            output.observables = s.string("observables").unwrap_or(output.observables);
            output.imbalance = s.string("imbalance");
            output.bench = s.string("bench");
            output.xyz = s.string("xyz");
            output.xyz_interval = s.u64("xyz_interval", 0)?;
            output.final_state = s.string("final_state");
            output.density = match s.string("density") {
                None => None,
                Some(file) => {
                    let kind = match s.string("density_layout").as_deref() {
                        None | Some("slab") => DensityKind::Slab,
                        Some("cylindrical") => DensityKind::Cylindrical,
                        Some(o) => return Err(s.invalid("density_layout", format!("expected slab or cylindrical, got {o:?}"))),
                    };
                    let r_bins = s.u64("density_r_bins", 20)? as usize;
                    let z_bins = s.u64("density_z_bins", 20)? as usize;
                    if r_bins == 0 {
                        return Err(s.invalid("density_r_bins", "must be at least 1"));
                    }
                    if z_bins == 0 {
                        return Err(s.invalid("density_z_bins", "must be at least 1"));
                    }
                    let interval = s.u64("density_interval", output.sample_interval)?;
                    if interval == 0 {
                        return Err(s.invalid("density_interval", "must be at least 1"));
                    }
                    Some(DensityOutput {
                        file,
                        kind,
                        r_bins,
                        z_bins,
                        interval,
                    })
                }
            };
        }

        let cfg = RunConfig {
            domain,
            cutoff,
            homogeneous,
            species,
            mixing,
            scenario,
            schedule,
            decomposition,
            output,
        };
        cfg.species_table()?;
        Ok(cfg)
    }

    pub fn species_table(&self) -> Result<SpeciesTable> {
        let mut t = SpeciesTable::new(self.species.clone())?;
        for m in &self.mixing {
            let a = t.index_of(&m.a).ok_or_else(|| Error::config("mix", format!("unknown species {}", m.a)))?;
            let b = t.index_of(&m.b).ok_or_else(|| Error::config("mix", format!("unknown species {}", m.b)))?;
            t.set_binary(a, b, m.xi, m.eta)?;
        }
        Ok(t)
    }

    /// Index of the species the scenario generates.
    pub fn scenario_species(&self) -> usize {
        self.scenario
            .species
            .as_ref()
            .and_then(|n| self.species.iter().position(|s| &s.name == n))
            .unwrap_or(0)
    }

    pub fn engine_settings(&self) -> Result<EngineSettings> {
        let mut s = EngineSettings::new(self.domain.clone(), self.species_table()?, self.cutoff);
        s.timestep = self.schedule.timestep;
        s.workers = self.decomposition.workers;
        s.decomposition = self.decomposition.method;
        s.rebalance_interval = self.decomposition.rebalance_interval;
        s.imbalance_threshold = self.decomposition.imbalance_threshold;
        s.first_axis = self.decomposition.first_axis;
        s.homogeneous = self.homogeneous;
        Ok(s)
    }

    /// Canonical text form; every field is written.
    pub fn to_ini(&self) -> String {
        fn b3(v: [bool; 3]) -> String {
            format!("{} {} {}", v[0], v[1], v[2])
        }
        let mut o = String::new();
        let d = &self.domain;
        let _ = writeln!(o, "[domain]");
        let _ = writeln!(o, "lengths = {} {} {}", d.lengths.x, d.lengths.y, d.lengths.z);
        let _ = writeln!(o, "periodic = {}", b3(d.periodic));
        let _ = writeln!(o, "reflecting = {}", b3(d.reflecting));
        let _ = writeln!(o, "cutoff = {}", self.cutoff);
        let _ = writeln!(o, "homogeneous = {}", self.homogeneous);
        if let Some(w) = &d.wall {
            let _ = writeln!(o, "wall_epsilon = {}", w.epsilon);
            let _ = writeln!(o, "wall_sigma = {}", w.sigma);
            let _ = writeln!(o, "wall_cutoff = {}", w.cutoff);
        }
        for s in &self.species {
            let _ = writeln!(o, "\n[species.{}]", s.name);
            let _ = writeln!(o, "sigma = {}", s.sigma);
            let _ = writeln!(o, "epsilon = {}", s.epsilon);
            let _ = writeln!(o, "mass = {}", s.mass);
        }
        for m in &self.mixing {
            let _ = writeln!(o, "\n[mix.{}.{}]", m.a, m.b);
            let _ = writeln!(o, "xi = {}", m.xi);
            let _ = writeln!(o, "eta = {}", m.eta);
        }
        let s = &self.scenario;
        let _ = writeln!(o, "\n[scenario]");
        let _ = writeln!(o, "kind = {}", s.kind.as_str());
        if let Some(n) = &s.species {
            let _ = writeln!(o, "species = {n}");
        }
        let _ = writeln!(o, "temperature = {}", s.temperature);
        let _ = writeln!(o, "density = {}", s.density);
        let _ = writeln!(o, "liquid_density = {}", s.liquid_density);
        let _ = writeln!(o, "vapor_density = {}", s.vapor_density);
        let _ = writeln!(o, "radius = {}", s.radius);
        let _ = writeln!(o, "center_height = {}", s.center_height);
        let s = &self.schedule;
        let _ = writeln!(o, "\n[schedule]");
        let _ = writeln!(o, "ensemble = {}", if s.ensemble == Ensemble::Md { "md" } else { "mc" });
        let _ = writeln!(o, "timestep = {}", s.timestep);
        let _ = writeln!(o, "steps = {}", s.steps);
        let _ = writeln!(o, "equilibration = {}", s.equilibration);
        if let Some(t) = &s.thermostat {
            let _ = writeln!(o, "thermostat_temperature = {}", t.target);
            let _ = writeln!(o, "thermostat_interval = {}", t.interval);
        }
        let _ = writeln!(o, "thermostat_production = {}", s.thermostat_production);
        let _ = writeln!(o, "seed = {}", s.seed);
        let _ = writeln!(o, "max_displacement = {}", s.max_displacement);
        let _ = writeln!(o, "tune_interval = {}", s.tune_interval);
        let c = &self.decomposition;
        let _ = writeln!(o, "\n[decomposition]");
        let _ = writeln!(o, "method = {}", if c.method == Decomposition::KdTree { "kd" } else { "uniform" });
        let _ = writeln!(o, "workers = {}", c.workers);
        let _ = writeln!(o, "rebalance_interval = {}", c.rebalance_interval);
        let _ = writeln!(o, "imbalance_threshold = {}", c.imbalance_threshold);
        let _ = writeln!(o, "first_axis = {}", ["x", "y", "z"][c.first_axis.index()]);
        let p = &self.output;
        let _ = writeln!(o, "\n[output]");
        let _ = writeln!(o, "sample_interval = {}", p.sample_interval);
        let _ = writeln!(o, "observables = {}", p.observables);
        let opt = [("imbalance", &p.imbalance), ("bench", &p.bench), ("xyz", &p.xyz), ("final_state", &p.final_state)];
        for (k, v) in opt {
            if let Some(v) = v {
                let _ = writeln!(o, "{k} = {v}");
            }
        }
        let _ = writeln!(o, "xyz_interval = {}", p.xyz_interval);
        if let Some(dn) = &p.density {
            let _ = writeln!(o, "density = {}", dn.file);
            let _ = writeln!(
                o,
                "density_layout = {}",
                if dn.kind == DensityKind::Slab { "slab" } else { "cylindrical" }
            );
            let _ = writeln!(o, "density_r_bins = {}", dn.r_bins);
            let _ = writeln!(o, "density_z_bins = {}", dn.z_bins);
            let _ = writeln!(o, "density_interval = {}", dn.interval);
        }
        o
    }

    /// Flat `section.key -> value` view, handy for diffing configs.
    pub fn flatten(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let mut section = String::new();
        for line in self.to_ini().lines() {
            let line = line.trim();
            if let Some(n) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = n.to_string();
            } else if let Some((k, v)) = line.split_once('=') {
                out.insert(format!("{section}.{}", k.trim()), v.trim().to_string());
            }
        }
        out
    }
}
