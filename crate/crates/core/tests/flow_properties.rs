//! Cross-module properties of verified flows: enclosure soundness against
//! an independent float integrator, Hamiltonian conservation at the
//! coefficient level, and symplecticity of the flow polynomials.

use gendom::flows::{
    self, cell_map, fpu_system, integrate_flow, rk4, IntegrationOptions, OdeSystem,
};
use gendom::interval::BoxDomain;
use gendom::polyalg::PolyMap;
use gendom::symplectic::symplecticity_residual;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

fn eval_expr(e: &flows::E, x: &[f64]) -> f64 {
    let ctx = flows::F64Ctx { state: x, t: 0.0 };
    let mut memo = HashMap::new();
    flows::eval(e, &ctx, &mut memo).unwrap()
}

#[test]
fn fpu_flow_encloses_float_trajectories() {
    let k = 5000.0;
    let sys = fpu_system(2, k);
    let half_period = flows::systems::fpu_half_period(k);
    let b = BoxDomain::cube(6, 0.05).unwrap();
    let flow = integrate_flow(
        &sys,
        &b,
        0.0,
        half_period,
        &IntegrationOptions::order(6).budget(1e-10),
    )
    .unwrap();
    let widths = flow.remainder_widths();
    assert!(
        widths.iter().all(|w| *w < 1e-6),
        "remainder widths {widths:?}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1);
    for _ in 0..100 {
        let x0: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.05..0.05)).collect();
        let truth = rk4(&sys, &x0, 0.0, half_period, 2000).unwrap();
        for i in 0..6 {
            let enc = flow.state.component(i).eval_point(&x0).unwrap();
            assert!(
                enc.lo() - 1e-7 <= truth[i] && truth[i] <= enc.hi() + 1e-7,
                "component {i}: {} not in {enc}",
                truth[i]
            );
        }
    }
}

#[test]
fn fpu_flow_polynomial_is_symplectic() {
    let k = 5000.0;
    let sys = fpu_system(2, k);
    let b = BoxDomain::cube(6, 0.05).unwrap();
    let flow = integrate_flow(
        &sys,
        &b,
        0.0,
        flows::systems::fpu_half_period(k),
        &IntegrationOptions::order(6).budget(1e-10),
    )
    .unwrap();
    let p = flow.physical_polynomial_part().unwrap();
    let res = symplecticity_residual(&p, p.order() - 1).unwrap();
    assert!(res <= 1e-7, "residual {res}");
}

#[test]
fn fpu_energy_conserved_coefficientwise() {
    // H(flow poly) - H(identity) must vanish through order n-1 in scaled
    // coordinates, relative to the stiff energy scale k.
    let k = 5000.0;
    let sys = fpu_system(2, k);
    let b = BoxDomain::cube(6, 0.05).unwrap();
    let order = 6;
    let flow = integrate_flow(
        &sys,
        &b,
        0.0,
        flows::systems::fpu_half_period(k),
        &IntegrationOptions::order(order),
    )
    .unwrap();
    let h_expr = flows::systems::fpu_hamiltonian(2, k);
    let p = flow.polynomial_part().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xE);
    for _ in 0..200 {
        let u: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x0: Vec<f64> = u.iter().map(|ui| 0.05 * ui).collect();
        let xf = p.eval(&u);
        let e0 = eval_expr(&h_expr, &x0);
        let ef = eval_expr(&h_expr, &xf);
        // The truncated polynomial conserves energy to the truncation
        // order; at this box the defect stays far below the energy scale.
        assert!(
            (e0 - ef).abs() <= 1e-7 * (1.0 + e0.abs()),
            "energy drift {} at {u:?}",
            (e0 - ef).abs()
        );
    }
}

#[test]
fn fpu_variational_run_completes_on_half_box() {
    // Timing-sensitive: joint flow + variational integration over the
    // certification box at order 6.
    let k = 5000.0;
    let sys = fpu_system(2, k);
    let b = BoxDomain::cube(6, 0.5).unwrap();
    let t = std::time::Instant::now();
    let flow = integrate_flow(
        &sys,
        &b,
        0.0,
        flows::systems::fpu_half_period(k),
        &IntegrationOptions::order(6).with_variational().budget(1e-5),
    )
    .unwrap();
    eprintln!(
        "fpu variational half-box: {} steps in {:?}; widths {:?}",
        flow.steps.len(),
        t.elapsed(),
        flow.remainder_widths()
    );
    assert!(flow.variational.is_some());
}

#[test]
fn cell_map_low_order_smoke() {
    let b = BoxDomain::centered(&[0.1, 0.1, 0.1, 0.1]).unwrap();
    let t = std::time::Instant::now();
    let flow = cell_map(5, &b, false).unwrap();
    eprintln!(
        "cell order 5: {} steps in {:?}; widths {:?}",
        flow.steps.len(),
        t.elapsed(),
        flow.remainder_widths()
    );
    // The cell flow is symplectic: check the order-1 part determinant in
    // physical variables.
    let lp = flow.physical_polynomial_part().unwrap().linear_part();
    let det = lp.determinant();
    assert!((det - 1.0).abs() <= 1e-9, "det {det}");
}

#[test]
fn harmonic_oscillator_symplectic_flow() {
    let sys = OdeSystem::new(
        "harmonic",
        vec![flows::state(1), flows::neg(flows::state(0))],
    );
    let b = BoxDomain::cube(2, 0.3).unwrap();
    let flow = integrate_flow(&sys, &b, 0.0, 1.3, &IntegrationOptions::order(7)).unwrap();
    let p = flow.physical_polynomial_part().unwrap();
    let res = symplecticity_residual(&p, p.order() - 1).unwrap();
    assert!(res <= 1e-7, "residual {res}");
}
