//! File formats: observables and auxiliary CSVs, density matrices, XYZ frames.
//!
//! Floats use Rust's shortest round-trip formatting so identical runs give
//! byte-identical files. Lines end in LF.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::dynamics::{DensityGrid, Observables};
use crate::error::{Error, Result};
use crate::molecule::Molecule;
use crate::species::SpeciesTable;

pub const OBSERVABLES_HEADER: &str = "step,time,T_inst,u_pot,e_kin,e_total,P,imbalance";
pub const IMBALANCE_HEADER: &str = "step,imbalance,max_load,mean_load,rebalances";
pub const BENCH_HEADER: &str =
    "N,workers,decomposition,steps_completed,wall_seconds,steps_per_second,speedup,imbalance,ell,condensed";

pub fn observables_row(o: &Observables) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        o.step, o.time, o.t_inst, o.u_pot, o.e_kin, o.e_total, o.pressure, o.imbalance
    )
}

/// Parses one observables row back (inverse of [`observables_row`] for the written fields).
pub fn parse_observables_row(line: &str) -> Option<Observables> {
    let f: Vec<&str> = line.trim().split(',').collect();
    if f.len() != 8 {
        return None;
    }
    Some(Observables {
        step: f[0].parse().ok()?,
        time: f[1].parse().ok()?,
        t_inst: f[2].parse().ok()?,
        u_pot: f[3].parse().ok()?,
        e_kin: f[4].parse().ok()?,
        e_total: f[5].parse().ok()?,
        pressure: f[6].parse().ok()?,
        imbalance: f[7].parse().ok()?,
        ..Default::default()
    })
}

/// Line-oriented CSV sink with a fixed header.
pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = CsvWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.line(header)?;
        Ok(w)
    }

    pub fn line(&mut self, s: &str) -> Result<()> {
        self.out
            .write_all(s.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Density matrix: `# dims ...`, `# bin_sizes ...`, then one row per first
/// dimension (slab: one value per line; cylindrical: r rows × z columns).
pub fn density_text(grid: &DensityGrid) -> String {
    let dims = grid.bin_counts();
    let sizes = grid.bin_sizes();
    let mut s = String::new();
    s.push_str("# dims");
    for d in &dims {
        s.push_str(&format!(" {d}"));
    }
    s.push_str(&format!(" samples {}\n# bin_sizes", grid.samples()));
    for b in &sizes {
        s.push_str(&format!(" {b}"));
    }
    s.push('\n');
    let rho = grid.densities();
    let cols = if dims.len() == 2 { dims[1] } else { 1 };
    for row in rho.chunks(cols) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_density(path: &Path, grid: &DensityGrid) -> Result<()> {
    write_text(path, &density_text(grid))
}

/// One XYZ frame; each line carries species name, position and velocity.
pub fn xyz_frame(molecules: &[Molecule], species: &SpeciesTable, comment: &str) -> String {
    let mut s = format!("{}\n{}\n", molecules.len(), comment.replace('\n', " "));
    for m in molecules {
        s.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            species.get(m.species).name,
            m.r.x,
            m.r.y,
            m.r.z,
            m.v.x,
            m.v.y,
            m.v.z
        ));
    }
    s
}

/// Reads frames written by [`xyz_frame`]; ids are assigned in file order.
pub fn parse_xyz(text: &str, species: &SpeciesTable) -> Result<Vec<Molecule>> {
    let mut lines = text.lines();
    let n: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| Error::config("xyz", "missing molecule count"))?;
    lines.next();
    let mut out = Vec::with_capacity(n);
    for (i, line) in lines.take(n).enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 4 {
            return Err(Error::config("xyz", format!("short line {}", i + 3)));
        }
        let sp = species
            .index_of(f[0])
            .ok_or_else(|| Error::config("xyz", format!("unknown species {}", f[0])))?;
        let num = |k: usize| -> Result<f64> {
            f.get(k)
                .map(|s| s.parse::<f64>())
                .unwrap_or(Ok(0.0))
                .map_err(|_| Error::config("xyz", format!("bad number on line {}", i + 3)))
        };
        let r = crate::geom::Vec3::new(num(1)?, num(2)?, num(3)?);
        let v = crate::geom::Vec3::new(num(4)?, num(5)?, num(6)?);
        out.push(Molecule::new(i as u64, sp, r, v));
    }
    if out.len() != n {
        return Err(Error::config("xyz", format!("expected {n} molecules, found {}", out.len())));
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DensityLayout;
    use crate::geom::{Domain, Vec3};
    use crate::species::Species;

    #[test]
    fn observables_round_trip() {
        let o = Observables {
            step: 7,
            time: 0.014,
            t_inst: 0.8123456789012345,
            u_pot: -5123.25,
            e_kin: 1.0 / 3.0,
            e_total: -0.1,
            pressure: 1e-17,
            imbalance: 1.0,
            ..Default::default()
        };
        let row = observables_row(&o);
        let back = parse_observables_row(&row).unwrap();
        assert_eq!(back, o);
        assert_eq!(OBSERVABLES_HEADER.split(',').count(), 8);
    }

    #[test]
    fn density_header_and_shape() {
        let d = Domain::periodic_box(Vec3::new(4.0, 4.0, 10.0));
        let mut g = DensityGrid::new(DensityLayout::Slab { bins: 5, z_lo: 0.0, z_hi: 10.0 }, &d).unwrap();
        g.accumulate(&[Molecule::new(0, 0, Vec3::new(1.0, 1.0, 1.0), Vec3::ZERO)]);
        let t = density_text(&g);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "# dims 5 samples 1");
        assert_eq!(lines[1], "# bin_sizes 2");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[2], (1.0 / 32.0).to_string());
    }

    #[test]
    fn xyz_round_trip() {
        let sp = SpeciesTable::single(Species::reference("Ar")).unwrap();
        let ms = vec![
            Molecule::new(0, 0, Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.0, 0.5, 2.0)),
            Molecule::new(1, 0, Vec3::new(1.0 / 3.0, 2.0, 3.0), Vec3::ZERO),
        ];
        let back = parse_xyz(&xyz_frame(&ms, &sp, "t=0"), &sp).unwrap();
        assert_eq!(back, ms);
    }
}
