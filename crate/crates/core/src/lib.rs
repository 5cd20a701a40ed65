//! Short-range Lennard-Jones molecular dynamics on a linked-cell grid,
//! distributed over cuboid subdomains chosen by recursive kd bisection.

pub mod balance;
pub mod cells;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod forcefield;
pub mod geom;
pub mod molecule;
pub mod output;
pub mod montecarlo;
pub mod rng;
pub mod runtime;
pub mod scenario;
pub mod species;

pub use error::{Error, Result};
pub use geom::{minimum_image, wrap_position, Domain, Vec3};
pub use molecule::Molecule;
pub use species::{PairTable, Species, SpeciesTable};
