//! Pure-species Lennard-Jones parameters and the mixed pair table.

use crate::error::{Error, Result};
use crate::forcefield::{mix, PairParams};

#[derive(Clone, Debug, PartialEq)]
pub struct Species {
    pub name: String,
    pub sigma: f64,
    pub epsilon: f64,
    pub mass: f64,
}

impl Species {
    pub fn new(name: impl Into<String>, sigma: f64, epsilon: f64, mass: f64) -> Result<Self> {
        let s = Species {
            name: name.into(),
            sigma,
            epsilon,
            mass,
        };
        s.validate()?;
        Ok(s)
    }

    /// The reference species: sigma = epsilon = mass = 1.
    pub fn reference(name: impl Into<String>) -> Self {
        Species {
            name: name.into(),
            sigma: 1.0,
            epsilon: 1.0,
            mass: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let key = format!("species.{}", self.name);
        for (what, v) in [("sigma", self.sigma), ("mass", self.mass)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{key}.{what}"), format!("must be positive, got {v}")));
            }
        }
        // epsilon = 0 is a non-interacting (ideal) species
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::config(format!("{key}.epsilon"), format!("must be non-negative, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Species list with symmetric binary parameters `xi` (energy) and `eta`
/// (size), and the mixed parameters derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesTable {
    species: Vec<Species>,
    xi: Vec<f64>,
    eta: Vec<f64>,
    mixed_sigma: Vec<f64>,
    mixed_epsilon: Vec<f64>,
}

impl SpeciesTable {
    pub fn new(species: Vec<Species>) -> Result<Self> {
        if species.is_empty() {
            return Err(Error::config("species", "at least one species is required"));
        }
        for s in &species {
            s.validate()?;
        }
        let n = species.len();
        let mut table = SpeciesTable {
            species,
            xi: vec![1.0; n * n],
            eta: vec![1.0; n * n],
            mixed_sigma: vec![0.0; n * n],
            mixed_epsilon: vec![0.0; n * n],
        };
        table.remix()?;
        Ok(table)
    }

    pub fn single(species: Species) -> Result<Self> {
        Self::new(vec![species])
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn get(&self, i: usize) -> &Species {
        &self.species[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn xi(&self, i: usize, j: usize) -> f64 {
        self.xi[i * self.len() + j]
    }

    pub fn eta(&self, i: usize, j: usize) -> f64 {
        self.eta[i * self.len() + j]
    }

    pub fn mixed_sigma(&self, i: usize, j: usize) -> f64 {
        self.mixed_sigma[i * self.len() + j]
    }

    pub fn mixed_epsilon(&self, i: usize, j: usize) -> f64 {
        self.mixed_epsilon[i * self.len() + j]
    }

    /// Sets the binary parameters for the unordered pair `(i, j)`.
    pub fn set_binary(&mut self, i: usize, j: usize, xi: f64, eta: f64) -> Result<()> {
        let n = self.len();
        if i >= n || j >= n {
            return Err(Error::config("mix", format!("species index out of range ({i}, {j})")));
        }
        for (what, v) in [("xi", xi), ("eta", eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("mix.{what}"), format!("must be positive, got {v}")));
            }
        }
        self.xi[i * n + j] = xi;
        self.xi[j * n + i] = xi;
        self.eta[i * n + j] = eta;
        self.eta[j * n + i] = eta;
        self.remix()
    }

    fn remix(&mut self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                let p = mix(&self.species[i], &self.species[j], self.xi[i * n + j], self.eta[i * n + j], f64::INFINITY)?;
                self.mixed_sigma[i * n + j] = p.sigma;
                self.mixed_epsilon[i * n + j] = p.epsilon;
            }
        }
        Ok(())
    }

    /// Truncated-shifted parameters for every ordered species pair.
    pub fn pair_table(&self, cutoff: f64) -> Result<PairTable> {
        let n = self.len();
        let mut params = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                params.push(PairParams::new(self.mixed_sigma(i, j), self.mixed_epsilon(i, j), cutoff)?);
            }
        }
        Ok(PairTable {
            n,
            params,
            masses: self.species.iter().map(|s| s.mass).collect(),
        })
    }
}

/// Dense lookup of pair parameters by species indices.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTable {
    n: usize,
    params: Vec<PairParams>,
    masses: Vec<f64>,
}

impl PairTable {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &PairParams {
        &self.params[i * self.n + j]
    }

    #[inline]
    pub fn mass(&self, species: usize) -> f64 {
        self.masses[species]
    }

    pub fn species_count(&self) -> usize {
        self.n
    }

    pub fn cutoff(&self) -> f64 {
        self.params[0].cutoff
    }
}
