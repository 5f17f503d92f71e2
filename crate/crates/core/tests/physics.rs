use gog_core::cloth::{
    build_cloth, ClothSpec, ClothState, Material, Placement, PENETRATION_TOLERANCE,
};
use gog_core::geom::{Vec3, GRAVITY};
use gog_core::gripper::GraspConstraintSet;
use gog_core::harness::catalog::ITEMS;
use proptest::prelude::*;

const DT: f64 = 1e-3;

fn flat() -> ClothState {
    build_cloth(&ClothSpec::default(), Placement::new(0.0, 0.0, 0.0)).unwrap()
}

fn raised(c: &ClothState, dz: f64) -> ClothState {
    c.with_positions(
        c.positions
            .iter()
            .map(|p| p + Vec3::new(0.0, 0.0, dz))
            .collect(),
    )
    .unwrap()
}

fn run(c: &ClothState, steps: usize) -> Vec<ClothState> {
    let none = GraspConstraintSet::default();
    let mut out = vec![c.clone()];
    for _ in 0..steps {
        let next = out.last().unwrap().step(DT, &none).unwrap().0;
        out.push(next);
    }
    out
}

fn max_displacement(a: &ClothState, b: &ClothState) -> f64 {
    a.positions
        .iter()
        .zip(&b.positions)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

#[test]
fn resting_cloth_stays_put() {
    let c = flat();
    let on_table = raised(&c, -c.min_z());
    let end = run(&on_table, 1000).pop().unwrap();
    assert!(max_displacement(&on_table, &end) < 1e-3);

    let (settled, _) = c.settle(2.0, 1e-7).unwrap();
    let end = run(&settled, 1000).pop().unwrap();
    assert!(max_displacement(&settled, &end) < 1e-3);
}

#[test]
fn free_particle_matches_ballistic_drop() {
    let material = Material {
        particle_mass: 0.01,
        damping: 0.01,
        table_mu: 0.4,
        patch_radius: 0.01,
        rest_thickness: 0.001,
    };
    let z0 = 1.0;
    let p = ClothState::from_parts(
        vec![Vec3::new(0.0, 0.0, z0)],
        vec![Vec3::zeros()],
        vec![],
        material,
    )
    .unwrap();
    let end = run(&p, 100).pop().unwrap();
    let t = 0.1;
    let expected = 0.5 * GRAVITY * t * t;
    let drop = z0 - end.positions[0].z;
    assert!(
        (drop - expected).abs() <= 0.02 * expected,
        "{drop} vs {expected}"
    );
}

#[test]
fn falling_particle_stops_on_the_table() {
    let material = Material {
        particle_mass: 0.01,
        damping: 0.0,
        table_mu: 0.4,
        patch_radius: 0.01,
        rest_thickness: 0.001,
    };
    let p = ClothState::from_parts(
        vec![Vec3::new(0.0, 0.0, 0.05)],
        vec![Vec3::new(0.3, 0.0, 0.0)],
        vec![],
        material,
    )
    .unwrap();
    for s in run(&p, 400) {
        assert!(s.min_z() >= -PENETRATION_TOLERANCE);
    }
}

#[test]
fn stepping_is_reproducible() {
    let c = raised(&flat(), 0.03);
    let (a, fa) = c.step(DT, &GraspConstraintSet::default()).unwrap();
    let (b, fb) = c.step(DT, &GraspConstraintSet::default()).unwrap();
    assert_eq!(fa, fb);
    for (p, q) in a.positions.iter().zip(&b.positions) {
        for k in 0..3 {
            assert_eq!(p[k].to_bits(), q[k].to_bits());
        }
    }
}

#[test]
fn fresh_cloth_settles_quickly() {
    let (_, out) = flat().settle(0.5, 1e-7).unwrap();
    assert!(out.converged, "{out:?}");
    assert!((out.steps as f64) * DT < 0.5);
}

#[test]
fn dropped_cloth_lands_flat() {
    let spec = ClothSpec::default();
    let (c, _) = raised(&flat(), 0.05).settle(3.0, 1e-7).unwrap();
    assert!(c.min_z() >= -PENETRATION_TOLERANCE);
    assert!(c.max_z() <= 3.0 * spec.rest_thickness, "{}", c.max_z());
}

fn assert_energy_non_increasing(trace: &[ClothState]) {
    let e: Vec<f64> = trace.iter().map(|s| s.mechanical_energy()).collect();
    for (k, w) in e.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-6, "step {k}: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn energy_never_rises_while_settling() {
    assert_energy_non_increasing(&run(&raised(&flat(), 0.05), 1500));
}

#[test]
fn settled_energy_trace_is_flat_or_falling() {
    let (settled, _) = flat().settle(2.0, 1e-7).unwrap();
    assert_energy_non_increasing(&run(&settled, 1000));
}

#[test]
fn springs_survive_stepping() {
    let c = raised(&flat(), 0.02);
    let end = run(&c, 200).pop().unwrap();
    assert_eq!(c.springs(), end.springs());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn crumpled_cloth_respects_table_and_energy(
        seed_z in prop::collection::vec(0.0f64..0.03, 256),
    ) {
        let c = flat();
        let pos: Vec<Vec3> = c.positions.iter().zip(&seed_z).map(|(p, z)| p + Vec3::new(0.0, 0.0, *z)).collect();
        let trace = run(&c.with_positions(pos).unwrap(), 300);
        for s in &trace {
            prop_assert!(s.min_z() >= -PENETRATION_TOLERANCE);
        }
        let e: Vec<f64> = trace.iter().map(|s| s.mechanical_energy()).collect();
        for w in e.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-6);
        }
    }
}

#[test]
fn catalog_cloths_are_stable_at_the_default_step() {
    for it in &ITEMS {
        let spec = it.cloth();
        let c = build_cloth(&spec, Placement::new(0.0, 0.0, 0.0)).unwrap();
        let (c, _) = raised(&c, 0.05)
            .settle(3.0, 1e-7)
            .unwrap_or_else(|e| panic!("{}: {e}", it.name));
        assert!(
            c.max_z() <= 3.0 * spec.rest_thickness,
            "{}: {}",
            it.name,
            c.max_z()
        );
    }
}
