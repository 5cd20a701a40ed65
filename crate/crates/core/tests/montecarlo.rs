mod common;

use common::{brute_force, molecules, random_config, random_velocities};
use ljmd::forcefield::WallSpec;
use ljmd::montecarlo::{mc_sweep, tune_displacement, McSettings, McState, TARGET_ACCEPTANCE};
use ljmd::rng::Rng;
use ljmd::{Domain, Species, SpeciesTable, Vec3};

fn settings(domain: Domain, t: f64) -> McSettings {
    McSettings {
        domain,
        species: SpeciesTable::single(Species::reference("LJ")).unwrap(),
        cutoff: 2.5,
        temperature: t,
        max_displacement: 0.15,
        homogeneous: false,
    }
}

#[test]
fn bookkept_energy_and_pressure_match_all_pairs_oracle() {
    let l = Vec3::splat(9.0);
    let domain = Domain::periodic_box(l);
    let pos = random_config(350, l, 0.95, 77);
    let ms = molecules(&pos, &random_velocities(350, 0.0, 0));
    let mut st = McState::new(settings(domain.clone(), 1.2), &ms).unwrap();
    let mut rng = Rng::new(5);
    for k in 0..250 {
        mc_sweep(&mut st, &mut rng).unwrap();
        if k < 50 && k % 5 == 4 {
            tune_displacement(&mut st, TARGET_ACCEPTANCE);
        }
    }
    let (_, u, w) = brute_force(st.positions(), |_, _| 1.0, |_, _| 1.0, &domain, 2.5);
    assert!((st.energy() - u).abs() < 1e-8 * u.abs(), "{} vs {u}", st.energy());
    let obs = st.observables(250).unwrap();
    let p = 350.0 / l.product() * 1.2 + w / (3.0 * l.product());
    assert!((obs.pressure - p).abs() < 1e-10 * p.abs().max(1.0), "{} vs {p}", obs.pressure);
    assert!(st.acceptance_ratio() > 0.0 && st.acceptance_ratio() < 1.0);
}

#[test]
fn positions_stay_inside_the_box() {
    let l = Vec3::new(8.0, 8.0, 10.0);
    let domain = Domain {
        lengths: l,
        periodic: [true, true, false],
        reflecting: [false, false, true],
        wall: Some(WallSpec::new(1.0, 1.0, 2.5).unwrap()),
    };
    let mut pos = random_config(150, Vec3::new(8.0, 8.0, 8.0), 1.0, 3);
    for p in pos.iter_mut() {
        p.z += 1.0;
    }
    let ms = molecules(&pos, &random_velocities(150, 0.0, 0));
    let mut st = McState::new(settings(domain, 1.0), &ms).unwrap();
    st.set_max_displacement(0.6);
    let mut rng = Rng::new(9);
    for _ in 0..200 {
        mc_sweep(&mut st, &mut rng).unwrap();
        for p in st.positions() {
            assert!(p.x >= 0.0 && p.x < l.x && p.y >= 0.0 && p.y < l.y);
            assert!(p.z > 0.0 && p.z <= l.z, "{p:?}");
        }
    }
}

#[test]
fn same_seed_same_chain() {
    let l = Vec3::splat(8.0);
    let pos = random_config(200, l, 1.0, 4);
    let ms = molecules(&pos, &random_velocities(200, 0.0, 0));
    let run = || {
        let mut st = McState::new(settings(Domain::periodic_box(l), 1.5), &ms).unwrap();
        let mut rng = Rng::new(123);
        for _ in 0..50 {
            mc_sweep(&mut st, &mut rng).unwrap();
        }
        (st.energy().to_bits(), st.accepts())
    };
    assert_eq!(run(), run());
}
