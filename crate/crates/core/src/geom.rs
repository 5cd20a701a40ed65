//! Vectors and the simulation box.
//!
//! All lengths are in reduced units of the reference species' sigma.

use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::forcefield::WallSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Vec3 { x: v, y: v, z: v }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min_component(self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn product(self) -> f64 {
        self.x * self.y * self.z
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;

    fn index(&self, axis: usize) -> &f64 {
        match axis {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, axis: usize) -> &mut f64 {
        match axis {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        self.x -= o.x;
        self.y -= o.y;
        self.z -= o.z;
    }
}

impl MulAssign<f64> for Vec3 {
    #[inline]
    fn mul_assign(&mut self, s: f64) {
        self.x *= s;
        self.y *= s;
        self.z *= s;
    }
}

/// The global simulation box `[0, L_x) x [0, L_y) x [0, L_z)`.
///
/// Every non-periodic axis must be closed by a reflecting boundary, and the
/// lower z face may additionally carry a 9-3 wall.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub lengths: Vec3,
    pub periodic: [bool; 3],
    pub reflecting: [bool; 3],
    pub wall: Option<WallSpec>,
}

impl Domain {
    pub fn periodic_box(lengths: Vec3) -> Self {
        Domain {
            lengths,
            periodic: [true; 3],
            reflecting: [false; 3],
            wall: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for axis in 0..3 {
            let l = self.lengths[axis];
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::config("domain.lengths", format!("axis {axis} length {l} must be positive")));
            }
            let closed = self.reflecting[axis] || (axis == 2 && self.wall.is_some());
            if !self.periodic[axis] && !closed {
                return Err(Error::config(
                    "domain.periodic",
                    format!("axis {axis} is not periodic and has neither a wall nor a reflecting boundary"),
                ));
            }
        }
        if self.wall.is_some() && self.periodic[2] {
            return Err(Error::config("domain.wall", "a wall on the z=0 face requires a non-periodic z axis"));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.lengths.product()
    }

    /// True when total momentum is a constant of motion.
    pub fn conserves_momentum(&self) -> bool {
        self.periodic.iter().all(|&p| p) && self.wall.is_none()
    }
}

/// Folds periodic components into `[0, L)`; non-periodic components pass through.
pub fn wrap_position(r: Vec3, domain: &Domain) -> Vec3 {
    let mut out = r;
    for axis in 0..3 {
        if domain.periodic[axis] {
            let l = domain.lengths[axis];
            let mut x = r[axis] - l * (r[axis] / l).floor();
            // -tiny + L rounds to L
            if x >= l {
                x -= l;
            }
            if x < 0.0 {
                x = 0.0;
            }
            out[axis] = x;
        }
    }
    out
}

/// Nearest periodic image of a separation vector.
///
/// Uses round-half-away-from-zero, so `minimum_image(-dr) == -minimum_image(dr)`
/// exactly; a component of exactly `L/2` maps to `-L/2` and `-L/2` to `L/2`.
#[inline]
pub fn minimum_image(dr: Vec3, domain: &Domain) -> Vec3 {
    let mut out = dr;
    for axis in 0..3 {
        if domain.periodic[axis] {
            let l = domain.lengths[axis];
            out[axis] = dr[axis] - l * (dr[axis] / l).round();
        }
    }
    out
}
