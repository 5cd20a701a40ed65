use crate::geom::Vec3;

/// A single united-atom interaction site.
#[derive(Clone, Debug, PartialEq)]
pub struct Molecule {
    pub id: u64,
    pub species: usize,
    pub r: Vec3,
    pub v: Vec3,
    pub f: Vec3,
}

impl Molecule {
    pub fn new(id: u64, species: usize, r: Vec3, v: Vec3) -> Self {
        Molecule {
            id,
            species,
            r,
            v,
            f: Vec3::ZERO,
        }
    }
}
