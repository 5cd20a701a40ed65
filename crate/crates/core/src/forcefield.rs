//! Truncated-shifted Lennard-Jones pairs, the 9-3 fluid-wall potential,
//! mixing rules and the homogeneous-fluid tail correction.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::species::{PairTable, Species};

/// Squared distances below this abort the force evaluation.
pub const OVERLAP_R2: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairParams {
    pub sigma: f64,
    pub epsilon: f64,
    pub cutoff: f64,
    sigma2: f64,
    cutoff2: f64,
    /// Untruncated potential at the cutoff.
    pub u_shift: f64,
}

impl PairParams {
    pub fn new(sigma: f64, epsilon: f64, cutoff: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::config(
                "species",
                format!("need sigma > 0 and epsilon >= 0 (sigma {sigma}, epsilon {epsilon})"),
            ));
        }
        if !(cutoff > 0.0) {
            return Err(Error::config("domain.cutoff", format!("must be positive, got {cutoff}")));
        }
        let u_shift = if cutoff.is_finite() {
            let sr6 = (sigma / cutoff).powi(6);
            4.0 * epsilon * (sr6 * sr6 - sr6)
        } else {
            0.0
        };
        Ok(PairParams {
            sigma,
            epsilon,
            cutoff,
            sigma2: sigma * sigma,
            cutoff2: cutoff * cutoff,
            u_shift,
        })
    }

    #[inline]
    pub fn cutoff2(&self) -> f64 {
        self.cutoff2
    }
}

/// Lorentz-Berthelot mixing scaled by the binary parameters:
/// `sigma_ij = eta (sigma_i + sigma_j) / 2`, `epsilon_ij = xi sqrt(epsilon_i epsilon_j)`.
pub fn mix(a: &Species, b: &Species, xi: f64, eta: f64, cutoff: f64) -> Result<PairParams> {
    a.validate()?;
    b.validate()?;
    if !(xi > 0.0) || !(eta > 0.0) {
        return Err(Error::config("mix", format!("binary parameters must be positive (xi {xi}, eta {eta})")));
    }
    let sigma = eta * ((a.sigma + b.sigma) / 2.0);
    let epsilon = xi * (a.epsilon * b.epsilon).sqrt();
    PairParams::new(sigma, epsilon, cutoff)
}

/// Two sites closer than [`OVERLAP_R2`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Overlap {
    pub r2: f64,
}

/// Energy and `f/r` for a pair at squared distance `r2`.
///
/// The force on the first site is `fscal * (r_1 - r_2)`.
#[inline]
pub fn lj_pair(r2: f64, p: &PairParams) -> Result<(f64, f64), Overlap> {
    if r2 < OVERLAP_R2 {
        return Err(Overlap { r2 });
    }
    if r2 >= p.cutoff2 {
        return Ok((0.0, 0.0));
    }
    let sr2 = p.sigma2 / r2;
    let sr6 = sr2 * sr2 * sr2;
    let sr12 = sr6 * sr6;
    let u = 4.0 * p.epsilon * (sr12 - sr6) - p.u_shift;
    let fscal = 24.0 * p.epsilon * (2.0 * sr12 - sr6) / r2;
    Ok((u, fscal))
}

/// Structureless planar wall on the `z = 0` face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallSpec {
    pub epsilon: f64,
    pub sigma: f64,
    /// Molecules with `z >= cutoff` do not feel the wall.
    pub cutoff: f64,
}

impl WallSpec {
    pub fn new(epsilon: f64, sigma: f64, cutoff: f64) -> Result<Self> {
        for (what, v) in [("wall_epsilon", epsilon), ("wall_sigma", sigma), ("wall_cutoff", cutoff)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("domain.{what}"), format!("must be positive, got {v}")));
            }
        }
        Ok(WallSpec { epsilon, sigma, cutoff })
    }

    fn bare(&self, z: f64) -> f64 {
        let s3 = (self.sigma / z).powi(3);
        let s9 = s3 * s3 * s3;
        self.epsilon * (2.0 / 15.0 * s9 - s3)
    }

    pub fn u_shift(&self) -> f64 {
        self.bare(self.cutoff)
    }
}

/// The molecule has reached or crossed the wall plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BehindWall {
    pub z: f64,
}

/// 9-3 wall energy and normal force `f_z = -du/dz`.
pub fn wall_93(z: f64, w: &WallSpec) -> Result<(f64, f64), BehindWall> {
    if !(z > 0.0) {
        return Err(BehindWall { z });
    }
    if z >= w.cutoff {
        return Ok((0.0, 0.0));
    }
    let s3 = (w.sigma / z).powi(3);
    let s9 = s3 * s3 * s3;
    let u = w.epsilon * (2.0 / 15.0 * s9 - s3) - w.u_shift();
    let f_z = w.epsilon * (1.2 * s9 - 3.0 * s3) / z;
    Ok((u, f_z))
}

/// Potential energy and virial accumulated over a set of interactions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyVirial {
    pub u_pot: f64,
    /// Sum of `r_ij . f_ij` over pairs.
    pub virial: f64,
    pub u_lrc: f64,
    pub p_lrc: f64,
}

impl Add for EnergyVirial {
    type Output = EnergyVirial;
    fn add(self, o: EnergyVirial) -> EnergyVirial {
        EnergyVirial {
            u_pot: self.u_pot + o.u_pot,
            virial: self.virial + o.virial,
            u_lrc: self.u_lrc + o.u_lrc,
            p_lrc: self.p_lrc + o.p_lrc,
        }
    }
}

impl AddAssign for EnergyVirial {
    fn add_assign(&mut self, o: EnergyVirial) {
        *self = *self + o;
    }
}

/// Mean-field tail beyond the cutoff for a uniform fluid.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LongRange {
    /// Total energy correction (not per molecule).
    pub u_lrc: f64,
    pub p_lrc: f64,
}

/// Tail correction for `n` molecules of one pair type at number density `density`.
pub fn long_range_correction(density: f64, pair: &PairParams, n: usize) -> LongRange {
    if !pair.cutoff.is_finite() || density == 0.0 {
        return LongRange::default();
    }
    let sr3 = (pair.sigma / pair.cutoff).powi(3);
    let sr9 = sr3 * sr3 * sr3;
    let s3 = pair.sigma.powi(3);
    let u_per = 8.0 / 3.0 * PI * density * pair.epsilon * s3 * (sr9 / 3.0 - sr3);
    let p = 16.0 / 3.0 * PI * density * density * pair.epsilon * s3 * (2.0 / 3.0 * sr9 - sr3);
    LongRange {
        u_lrc: u_per * n as f64,
        p_lrc: p,
    }
}

impl LongRange {
    /// Composition-weighted tail correction; only defined for homogeneous systems.
    pub fn for_system(pairs: &PairTable, counts: &[usize], volume: f64, homogeneous: bool) -> Result<Self> {
        if !homogeneous {
            return Err(Error::config(
                "domain.homogeneous",
                "long-range correction requested for an inhomogeneous scenario",
            ));
        }
        let n: usize = counts.iter().sum();
        if n == 0 {
            return Ok(LongRange::default());
        }
        let rho = n as f64 / volume;
        let mut total = LongRange::default();
        for (i, &ni) in counts.iter().enumerate() {
            for (j, &nj) in counts.iter().enumerate() {
                let w = (ni as f64 / n as f64) * (nj as f64 / n as f64);
                let lr = long_range_correction(rho, pairs.get(i, j), n);
                total.u_lrc += w * lr.u_lrc;
                total.p_lrc += w * lr.p_lrc;
            }
        }
        Ok(total)
    }
}

/// Mechanical pressure `rho T + W / (3V) + p_lrc`.
pub fn virial_pressure(ev: &EnergyVirial, n: usize, volume: f64, t_inst: f64) -> f64 {
    n as f64 / volume * t_inst + ev.virial / (3.0 * volume) + ev.p_lrc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, Rng};

    fn unit(cutoff: f64) -> PairParams {
        PairParams::new(1.0, 1.0, cutoff).unwrap()
    }

    #[test]
    fn mix_examples() {
        let a = Species::reference("a");
        let p = mix(&a, &a, 1.0, 1.0, 2.5).unwrap();
        assert_eq!((p.sigma, p.epsilon), (1.0, 1.0));
        let b = Species::new("b", 3.0, 4.0, 1.0).unwrap();
        let p = mix(&a, &b, 1.0, 1.0, 2.5).unwrap();
        assert_eq!(p.epsilon, 2.0);
        assert_eq!(p.sigma, 2.0);
        let q = mix(&b, &a, 1.0, 1.0, 2.5).unwrap();
        assert_eq!(p, q);
        assert!(mix(&a, &b, 0.0, 1.0, 2.5).is_err());
    }

    #[test]
    fn beyond_cutoff_is_zero() {
        assert_eq!(lj_pair(6.25, &unit(2.5)).unwrap(), (0.0, 0.0));
        assert_eq!(lj_pair(9.0, &unit(2.5)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn minimum_has_zero_force() {
        let rmin = 2f64.powf(1.0 / 6.0);
        let (_, f) = lj_pair(rmin * rmin, &unit(2.5)).unwrap();
        assert!(f.abs() < 1e-12, "{f}");
    }

    #[test]
    fn energy_at_sigma_equals_minus_bare_energy_at_cutoff() {
        // hand evaluation: 4 (2.5^-12 - 2.5^-6)
        let bare_rc = 4.0 * (1.0 / 2.5f64.powi(12) - 1.0 / 2.5f64.powi(6));
        let (u, _) = lj_pair(1.0, &unit(2.5)).unwrap();
        assert!((u - (-bare_rc)).abs() < 1e-15);
        assert!((u - 0.016316891136).abs() < 1e-11, "{u}");
    }

    #[test]
    fn overlap_is_an_error() {
        assert!(lj_pair(0.0, &unit(2.5)).is_err());
        assert!(lj_pair(1e-13, &unit(2.5)).is_err());
    }

    #[test]
    fn force_is_negative_derivative() {
        let p = unit(2.5);
        let mut rng = Rng::substream(3, Purpose::Testing, 0);
        let h = 1e-6;
        for _ in 0..10 {
            let r = rng.uniform_range(1.0, 2.5 - 2.0 * h);
            let up = lj_pair((r + h) * (r + h), &p).unwrap().0;
            let um = lj_pair((r - h) * (r - h), &p).unwrap().0;
            let fd = -(up - um) / (2.0 * h);
            let (_, fscal) = lj_pair(r * r, &p).unwrap();
            let f = fscal * r;
            assert!((fd - f).abs() <= 1e-6 * f.abs().max(1e-3), "r={r} fd={fd} f={f}");
        }
    }

    #[test]
    fn continuous_at_cutoff() {
        // |u(rc - d)| ~ |F(rc)| d with |F(rc)| ~ 0.04, so the 1e-9 bound needs d ~ 1e-8
        let p = unit(2.5);
        let f_rc = 24.0 * (2.0 * 2.5f64.powi(-13) - 2.5f64.powi(-7));
        for d in [1e-3, 1e-5, 1e-8] {
            let r: f64 = 2.5 - d;
            let (u, _) = lj_pair(r * r, &p).unwrap();
            assert!(u.abs() <= 1.01 * f_rc.abs() * d, "d={d} u={u}");
        }
        let r: f64 = 2.5 - 1e-8;
        assert!(lj_pair(r * r, &p).unwrap().0.abs() < 1e-9);
    }

    #[test]
    fn wall_examples() {
        let w = WallSpec::new(1.0, 1.0, 2.5).unwrap();
        assert_eq!(wall_93(2.5, &w).unwrap(), (0.0, 0.0));
        assert_eq!(wall_93(3.0, &w).unwrap(), (0.0, 0.0));
        let zmin = 0.4f64.powf(1.0 / 6.0);
        let (_, f) = wall_93(zmin, &w).unwrap();
        assert!(f.abs() < 1e-12, "{f}");
        assert!(wall_93(0.0, &w).is_err());
        assert!(wall_93(-0.1, &w).is_err());
        let weak = WallSpec::new(1e-12, 1.0, 2.5).unwrap();
        let (u, _) = wall_93(1.0, &weak).unwrap();
        assert!(u.abs() < 1e-11);
    }

    #[test]
    fn wall_force_matches_finite_difference() {
        let w = WallSpec::new(1.3, 1.1, 3.0).unwrap();
        let h = 1e-6;
        for z in [0.8, 1.0, 1.5, 2.2, 2.9] {
            let fd = -(wall_93(z + h, &w).unwrap().0 - wall_93(z - h, &w).unwrap().0) / (2.0 * h);
            let f = wall_93(z, &w).unwrap().1;
            assert!((fd - f).abs() < 1e-6 * f.abs().max(1e-3), "z={z}");
        }
    }

    /// Composite Simpson over `[a, b]`.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let x = a + k as f64 * h;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn tail_correction_matches_quadrature() {
        let rho = 0.8;
        let rc = 2.5;
        let p = unit(rc);
        let bare = |r: f64| 4.0 * (r.powi(-12) - r.powi(-6));
        // substitute r = rc / t, dr = rc / t^2 dt, t in (0, 1]
        let integrand = |t: f64| {
            if t == 0.0 {
                0.0
            } else {
                let r = rc / t;
                r * r * bare(r) * rc / (t * t)
            }
        };
        let tail = simpson(integrand, 0.0, 1.0, 20_000);
        let oracle_per_molecule = 2.0 * PI * rho * tail;
        let lr = long_range_correction(rho, &p, 100);
        assert!((lr.u_lrc / 100.0 - oracle_per_molecule).abs() < 1e-10 * oracle_per_molecule.abs());

        // pressure tail: -(2/3) pi rho^2 int r^3 u'(r) dr
        let dbare = |r: f64| 4.0 * (-12.0 * r.powi(-13) + 6.0 * r.powi(-7));
        let pint = |t: f64| {
            if t == 0.0 {
                0.0
            } else {
                let r = rc / t;
                r.powi(3) * dbare(r) * rc / (t * t)
            }
        };
        let p_oracle = -2.0 / 3.0 * PI * rho * rho * simpson(pint, 0.0, 1.0, 20_000);
        assert!((lr.p_lrc - p_oracle).abs() < 1e-10 * p_oracle.abs());
    }

    #[test]
    fn tail_limits() {
        assert_eq!(long_range_correction(0.8, &unit(f64::INFINITY), 10), LongRange::default());
        assert_eq!(long_range_correction(0.0, &unit(2.5), 10), LongRange::default());
        let big = long_range_correction(0.8, &unit(1e4), 10);
        assert!(big.u_lrc.abs() < 1e-9);
    }

    #[test]
    fn tail_rejects_interfacial_systems() {
        let t = crate::species::SpeciesTable::single(Species::reference("a")).unwrap();
        let pairs = t.pair_table(2.5).unwrap();
        assert!(LongRange::for_system(&pairs, &[10], 1000.0, false).is_err());
        let lr = LongRange::for_system(&pairs, &[800], 1000.0, true).unwrap();
        let direct = long_range_correction(0.8, pairs.get(0, 0), 800);
        assert!((lr.u_lrc - direct.u_lrc).abs() < 1e-12 * direct.u_lrc.abs());
    }

    #[test]
    fn ideal_gas_pressure() {
        let ev = EnergyVirial::default();
        assert!((virial_pressure(&ev, 100, 1000.0, 1.5) - 0.15).abs() < 1e-15);
    }
}
