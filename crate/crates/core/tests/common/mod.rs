//! Shared test fixtures.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use epitruss::truss::{build_model, generate_ground_structure, Material, ModelParams, Support, TrussModel};

/// Random stable truss on a 2x2, 3x2 or 2x3 grid with at most 8 free DOFs.
pub fn random_model(rng: &mut ChaCha8Rng, frequency: bool) -> TrussModel {
    let (nx, ny) = [(2usize, 2usize), (3, 2), (2, 3)][rng.random_range(0..3)];
    let nn = nx * ny;
    loop {
        let mut support = vec![Support::FREE; nn];
        let pinned_count = if nn == 4 { rng.random_range(1..=2) } else { 2 };
        let mut order: Vec<usize> = (0..nn).collect();
        for i in 0..nn {
            order.swap(i, rng.random_range(i..nn));
        }
        for &k in &order[..pinned_count] {
            support[k] = Support::PINNED;
        }
        // an extra roller now and then
        if rng.random_bool(0.3) {
            let k = order[pinned_count];
            support[k] = Support { x: rng.random_bool(0.5), y: true };
        }
        let gs = generate_ground_structure(nx, ny, 1.0, |i, j| support[j * nx + i]).expect("grid");
        if gs.free_dof_count() > 8 || gs.free_dof_count() == 0 {
            continue;
        }
        let free: Vec<usize> = (0..nn).filter(|&k| gs.dof(k, 0).is_some() || gs.dof(k, 1).is_some()).collect();
        let load = free[rng.random_range(0..free.len())];
        let material = Material::new(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)).expect("material");
        let mut p = ModelParams::new(material, load);
        p.load_dims = rng.random_range(1..=2);
        p.load_scale = rng.random_range(0.5..2.0);
        if frequency {
            p.nonstructural_mass = if rng.random_bool(0.5) { rng.random_range(0.1..1.0) } else { 0.0 };
        }
        let model = build_model(gs, &p).expect("model");
        // K(x) must be definite for x > 0
        if model.is_stable().expect("stability") {
            return model;
        }
    }
}
