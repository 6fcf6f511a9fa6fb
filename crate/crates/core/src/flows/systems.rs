//! Hamiltonian vector fields for the spring-chain system and accelerator
//! beamline elements, plus the standard test cell.

use super::expr::{add, cst, mul, neg, powi, sqrt, state, sub, OdeSystem, E};
use super::{integrate_flow_from, FlowEnclosure, FlowError, IntegrationOptions};
use crate::interval::{BoxDomain, Interval};
use crate::taylormodel::{TaylorModel, TmDomain, TmVector};

/// Spring-chain Hamiltonian with alternating stiff quadratic and quartic
/// couplings:
///   H = 1/2 sum p_i^2 + k/2 sum_{i=1..n} (q_{2i} - q_{2i-1})^2
///       + sum_{i=0..n} (q_{2i+1} - q_{2i})^4,
/// with a fixed wall q_0 = 0 on the left and the pinning
/// q_{2n} = q_{2n+1} = p_{2n} = 0 on the right, leaving 2n-1 active
/// coordinate pairs.
pub fn fpu_system(n: usize, k: f64) -> OdeSystem {
    assert!(n >= 1);
    let d = 2 * n - 1;
    // q_j for j in 1..=2n+1, zero outside the active range.
    let q = |j: i64| -> E {
        if j >= 1 && (j as usize) <= d {
            state(j as usize - 1)
        } else {
            cst(0.0)
        }
    };
    let mut h = cst(0.0);
    for i in 0..d {
        h = add(h, mul(cst(0.5), powi(state(d + i), 2)));
    }
    for i in 1..=(n as i64) {
        let diff = sub(q(2 * i), q(2 * i - 1));
        h = add(h, mul(cst(k / 2.0), powi(diff, 2)));
    }
    for i in 0..=(n as i64) {
        let diff = sub(q(2 * i + 1), q(2 * i));
        h = add(h, powi(diff, 4));
    }
    OdeSystem::hamiltonian(format!("fpu(n={n},k={k})"), &h, d)
}

/// The spring-chain Hamiltonian as an expression, for conservation checks.
pub fn fpu_hamiltonian(n: usize, k: f64) -> E {
    let d = 2 * n - 1;
    let q = |j: i64| -> E {
        if j >= 1 && (j as usize) <= d {
            state(j as usize - 1)
        } else {
            cst(0.0)
        }
    };
    let mut h = cst(0.0);
    for i in 0..d {
        h = add(h, mul(cst(0.5), powi(state(d + i), 2)));
    }
    for i in 1..=(n as i64) {
        h = add(h, mul(cst(k / 2.0), powi(sub(q(2 * i), q(2 * i - 1)), 2)));
    }
    for i in 0..=(n as i64) {
        h = add(h, powi(sub(q(2 * i + 1), q(2 * i)), 4));
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementKind {
    Drift,
    Dipole { rho: f64 },
    Quad { k: f64 },
    /// Defocusing/focusing quadrupole superimposed with a sextupole.
    QuadSext { k: f64, h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beamline {
    pub elements: Vec<Element>,
}

impl Beamline {
    pub fn new(elements: Vec<Element>) -> Self {
        assert!(elements.iter().all(|e| e.length > 0.0));
        if let Some(bad) = elements.iter().find(|e| match e.kind {
            ElementKind::Dipole { rho } => rho == 0.0,
            _ => false,
        }) {
            panic!("dipole with zero curvature radius: {bad:?}");
        }
        Beamline { elements }
    }

    pub fn total_length(&self) -> f64 {
        self.elements.iter().map(|e| e.length).sum()
    }

    /// Plain-text description, one element per line:
    ///   drift LENGTH
    ///   dipole LENGTH RHO
    ///   quad LENGTH K
    ///   quadsext LENGTH K H
    pub fn parse(text: &str) -> Option<Beamline> {
        let mut elements = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let kind = parts.next()?;
            let length: f64 = parts.next()?.parse().ok()?;
            let kind = match kind {
                "drift" => ElementKind::Drift,
                "dipole" => ElementKind::Dipole {
                    rho: parts.next()?.parse().ok()?,
                },
                "quad" => ElementKind::Quad {
                    k: parts.next()?.parse().ok()?,
                },
                "quadsext" => ElementKind::QuadSext {
                    k: parts.next()?.parse().ok()?,
                    h: parts.next()?.parse().ok()?,
                },
                _ => return None,
            };
            elements.push(Element { kind, length });
        }
        if elements.is_empty() {
            None
        } else {
            Some(Beamline::new(elements))
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.elements {
            match e.kind {
                ElementKind::Drift => s.push_str(&format!("drift {}\n", e.length)),
                ElementKind::Dipole { rho } => {
                    s.push_str(&format!("dipole {} {}\n", e.length, rho))
                }
                ElementKind::Quad { k } => s.push_str(&format!("quad {} {}\n", e.length, k)),
                ElementKind::QuadSext { k, h } => {
                    s.push_str(&format!("quadsext {} {} {}\n", e.length, k, h))
                }
            }
        }
        s
    }
}

/// Per-element magnet Hamiltonian in the transverse variables, arclength
/// as independent variable, on-energy particles, stacked state (x, y, a,
/// b):
///   H = -(1 + x/rho) sqrt(1 - a^2 - b^2) - (1 + x/rho) A_s(x, y)
/// with the sharp-cutoff vector potentials
///   dipole: -(1 + x/rho) A_s = (x + rho)^2 / (2 rho^2),
///   quad:   A_s = -k/2 (x^2 - y^2),
///   sext:   A_s = -h/3 (x^3 - x y^2);
/// quadrupole and sextupole strengths carry the momentum normalization
/// already (units 1/m^2 and 1/m^3).
fn element_hamiltonian(kind: &ElementKind) -> E {
    let x = state(0);
    let y = state(1);
    let a = state(2);
    let b = state(3);
    let root = sqrt(sub(sub(cst(1.0), powi(a, 2)), powi(b, 2)));
    match kind {
        ElementKind::Drift => neg(root),
        ElementKind::Dipole { rho } => {
            let geom = mul(add(cst(1.0), mul(cst(1.0 / rho), x.clone())), root);
            let pot = mul(cst(0.5 / (rho * rho)), powi(add(x, cst(*rho)), 2));
            add(neg(geom), pot)
        }
        ElementKind::Quad { k } => {
            let quad = mul(cst(k / 2.0), sub(powi(x, 2), powi(y, 2)));
            add(neg(root), quad)
        }
        ElementKind::QuadSext { k, h } => {
            let quad = mul(cst(k / 2.0), sub(powi(x.clone(), 2), powi(y.clone(), 2)));
            let sext = mul(
                cst(h / 3.0),
                sub(powi(x.clone(), 3), mul(x, powi(y, 2))),
            );
            add(add(neg(root), quad), sext)
        }
    }
}

/// One autonomous ODE system per beamline element, in arclength.
pub fn beamline_system(b: &Beamline) -> Vec<OdeSystem> {
    b.elements
        .iter()
        .map(|e| {
            let h = element_hamiltonian(&e.kind);
            OdeSystem::hamiltonian(format!("{:?}", e.kind), &h, 2)
        })
        .collect()
}

/// The standard test cell: drift, defocusing quad + sextupole, drift,
/// dipole, drift, defocusing quad + sextupole, drift.
pub fn cell_beamline() -> Beamline {
    let quadsext = Element {
        kind: ElementKind::QuadSext { k: -0.0085, h: 0.06 },
        length: 0.5,
    };
    let drift = Element {
        kind: ElementKind::Drift,
        length: 1.0,
    };
    let dipole = Element {
        kind: ElementKind::Dipole { rho: 2.5 },
        length: 0.5,
    };
    Beamline::new(vec![drift, quadsext, drift, dipole, drift, quadsext, drift])
}

/// Integrate the test cell over a transverse box, composing per-element
/// flow enclosures; variational data is carried through the whole cell.
pub fn cell_map(
    order: usize,
    box_: &BoxDomain,
    with_variational: bool,
) -> Result<FlowEnclosure, FlowError> {
    // The momentum box must stay clear of the sqrt branch.
    let a = box_.component(2);
    let b = box_.component(3);
    let reach = a.magnitude() * a.magnitude() + b.magnitude() * b.magnitude();
    if reach >= 1.0 {
        return Err(FlowError::SqrtDomain);
    }
    let beamline = cell_beamline();
    let systems = beamline_system(&beamline);
    let dom = TmDomain::centered(box_.clone())?;
    let mut opts = IntegrationOptions::order(order);
    if with_variational {
        opts = opts.with_variational();
    }
    let mut state = TmVector::identity(dom.clone(), order)?;
    if with_variational {
        let mut comps = state.into_components();
        for k in 0..4 {
            for j in 0..4 {
                comps.push(TaylorModel::constant(
                    dom.clone(),
                    order,
                    if k == j { 1.0 } else { 0.0 },
                ));
            }
        }
        state = TmVector::new(comps)?;
    }
    let mut all_steps = Vec::new();
    let mut last = None;
    for (elem, sys) in beamline.elements.iter().zip(&systems) {
        let flow = integrate_flow_from(sys, state, 0.0, elem.length, &opts)?;
        all_steps.extend(flow.steps.iter().cloned());
        state = if let Some(rows) = &flow.variational {
            let mut comps = flow.state.components().to_vec();
            for row in rows {
                comps.extend(row.components().iter().cloned());
            }
            TmVector::new(comps)?
        } else {
            flow.state.clone()
        };
        last = Some(flow);
    }
    let mut out = last.expect("cell has elements");
    out.t0 = 0.0;
    out.tf = beamline.total_length();
    out.steps = all_steps;
    Ok(out)
}

/// Reference half period of the stiff symmetric spring mode: pi/sqrt(2k).
pub fn fpu_half_period(k: f64) -> f64 {
    std::f64::consts::PI / (2.0 * k).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{integrate_flow, rk4};
    use crate::interval::BoxDomain;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    #[test]
    fn fpu_gradient_matches_finite_differences() {
        let n = 2;
        let k = 5000.0;
        let sys = fpu_system(n, k);
        let h = fpu_hamiltonian(n, k);
        assert_eq!(sys.dim(), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eval_h = |x: &[f64]| {
            let ctx = crate::flows::F64Ctx { state: x, t: 0.0 };
            let mut memo = HashMap::new();
            crate::flows::eval(&h, &ctx, &mut memo).unwrap()
        };
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let f = sys.eval_f64(&x, 0.0).unwrap();
            let eps = 1e-6;
            for i in 0..6 {
                let mut xp = x.clone();
                xp[i] += eps;
                let mut xm = x.clone();
                xm[i] -= eps;
                let fd = (eval_h(&xp) - eval_h(&xm)) / (2.0 * eps);
                // dq_i/dt = dH/dp_i, dp_i/dt = -dH/dq_i.
                let got = if i < 3 { -f[3 + i] } else { f[i - 3] };
                let scale = 1.0 + fd.abs();
                assert!(
                    (fd - got).abs() / scale <= 1e-6,
                    "var {i}: fd {fd} vs hamilton {got}"
                );
            }
        }
    }

    #[test]
    fn fpu_energy_conserved_along_rk4() {
        let sys = fpu_system(2, 5000.0);
        let h = fpu_hamiltonian(2, 5000.0);
        let eval_h = |x: &[f64]| {
            let ctx = crate::flows::F64Ctx { state: x, t: 0.0 };
            let mut memo = HashMap::new();
            crate::flows::eval(&h, &ctx, &mut memo).unwrap()
        };
        let x0 = [0.3, -0.2, 0.1, 0.0, 0.25, -0.15];
        let e0 = eval_h(&x0);
        let xf = rk4(&sys, &x0, 0.0, fpu_half_period(5000.0), 4000).unwrap();
        let ef = eval_h(&xf);
        assert_relative_eq!(e0, ef, max_relative = 1e-8);
    }

    #[test]
    fn drift_keeps_on_axis_particle() {
        let b = Beamline::new(vec![Element {
            kind: ElementKind::Drift,
            length: 1.5,
        }]);
        let sys = &beamline_system(&b)[0];
        let f = sys.eval_f64(&[0.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        assert!(f.iter().all(|&v| v.abs() < 1e-15), "{f:?}");
    }

    #[test]
    fn drift_linear_part() {
        // Expansion of a / sqrt(1 - a^2 - b^2): dx/ds = a + O(3), so after
        // length l the linear map has (x|a) = l and (a|a) = 1.
        let b = Beamline::new(vec![Element {
            kind: ElementKind::Drift,
            length: 2.0,
        }]);
        let sys = &beamline_system(&b)[0];
        let box_ = BoxDomain::cube(4, 0.05).unwrap();
        let flow = integrate_flow(sys, &box_, 0.0, 2.0, &IntegrationOptions::order(5)).unwrap();
        let lp = flow.polynomial_part().unwrap().linear_part();
        // Scaled chart multiplies columns by hw = 0.05 and leaves rows in
        // physical units; (x|a) = 2.0 shows up as 2.0 * 0.05 = 0.1.
        assert_relative_eq!(lp[(0, 2)], 2.0 * 0.05, epsilon = 1e-12);
        assert_relative_eq!(lp[(2, 2)], 0.05, epsilon = 1e-12);
        assert_relative_eq!(lp[(0, 0)], 0.05, epsilon = 1e-12);
        assert_relative_eq!(lp[(1, 3)], 2.0 * 0.05, epsilon = 1e-12);
        // No x-b coupling in a drift.
        assert_relative_eq!(lp[(0, 3)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dipole_preserves_closed_orbit() {
        let b = Beamline::new(vec![Element {
            kind: ElementKind::Dipole { rho: 2.5 },
            length: 0.5,
        }]);
        let sys = &beamline_system(&b)[0];
        let f = sys.eval_f64(&[0.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        assert!(
            f.iter().all(|&v| v.abs() < 1e-14),
            "closed orbit drifted: {f:?}"
        );
        // Off axis the dipole bends: da/ds < 0 for x > 0.
        let f2 = sys.eval_f64(&[0.01, 0.0, 0.0, 0.0], 0.0).unwrap();
        assert!(f2[2] < 0.0);
    }

    #[test]
    fn quadsext_kick_signs() {
        // k < 0 defocuses in x: da/ds = -k x > 0 for x > 0.
        let b = Beamline::new(vec![Element {
            kind: ElementKind::QuadSext { k: -0.0085, h: 0.0 },
            length: 0.5,
        }]);
        let sys = &beamline_system(&b)[0];
        let f = sys.eval_f64(&[0.01, 0.0, 0.0, 0.0], 0.0).unwrap();
        assert!(f[2] > 0.0, "{f:?}");
        // And focuses in y.
        let fy = sys.eval_f64(&[0.0, 0.01, 0.0, 0.0], 0.0).unwrap();
        assert!(fy[3] < 0.0, "{fy:?}");
    }

    #[test]
    fn beamline_round_trips_text() {
        let b = cell_beamline();
        let text = b.to_text();
        let parsed = Beamline::parse(&text).unwrap();
        assert_eq!(parsed, b);
        assert_relative_eq!(b.total_length(), 5.5);
    }

    #[test]
    fn cell_map_rejects_momentum_overflow() {
        let bad = BoxDomain::centered(&[0.1, 0.1, 0.8, 0.7]).unwrap();
        assert!(matches!(
            cell_map(4, &bad, false),
            Err(FlowError::SqrtDomain)
        ));
    }
}
