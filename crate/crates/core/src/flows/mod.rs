//! Verified ODE integration: flow enclosures via the Picard operator on
//! Taylor models, with optional first-derivative (variational) enclosures
//! integrated jointly so the adjoint sees the enclosed trajectory.

mod expr;
pub mod systems;

pub use expr::{
    add, cos, cst, div, eval, exp, mul, neg, powi, rk4, sin, sqrt, state, sub, time, EvalCtx,
    Expr, F64Ctx, IntervalCtx, OdeSystem, TmCtx, E,
};
pub use systems::{beamline_system, cell_beamline, cell_map, fpu_system, Beamline, Element, ElementKind};

use crate::interval::{BoxDomain, Interval, IntervalError};
use crate::polyalg::{PolyError, PolyMap};
use crate::taylormodel::{TaylorModel, TmDomain, TmError, TmVector};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("picard inclusion failed at h = {h:.3e} (component {component})")]
    InclusionFailed { h: f64, component: usize },
    #[error("step size underflow at h = {h:.3e}; enclosure blow-up")]
    StepUnderflow { h: f64 },
    #[error("right-hand side hit a singularity: {0}")]
    SingularityInDomain(&'static str),
    #[error("momentum box reaches the sqrt domain boundary")]
    SqrtDomain,
    #[error("dimension mismatch: state {state}, system {system}")]
    DimensionMismatch { state: usize, system: usize },
    #[error(transparent)]
    Tm(#[from] TmError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

impl FlowError {
    fn from_tm(e: TmError) -> FlowError {
        match e {
            TmError::RangeTouchesSingularity(what) => FlowError::SingularityInDomain(what),
            other => FlowError::Tm(other),
        }
    }
}

/// One accepted integration step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: f64,
    pub h: f64,
}

/// A verified enclosure of a flow map over an initial-condition box,
/// optionally with the matrix of derivative enclosures.
#[derive(Debug, Clone)]
pub struct FlowEnclosure {
    /// Flow components M(t_f, t_0, .) as Taylor models in the initial
    /// conditions.
    pub state: TmVector,
    /// Row k holds the enclosures of dM_k/dx0_j for all j.
    pub variational: Option<Vec<TmVector>>,
    pub t0: f64,
    pub tf: f64,
    pub steps: Vec<StepRecord>,
}

impl FlowEnclosure {
    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn domain(&self) -> &Arc<TmDomain> {
        self.state.domain()
    }

    /// The polynomial part as a map of the scaled initial conditions.
    pub fn polynomial_part(&self) -> Result<PolyMap, FlowError> {
        Ok(PolyMap::new(
            self.state
                .components()
                .iter()
                .map(|c| c.poly().clone())
                .collect(),
        )?)
    }

    /// The flow polynomial re-expressed in physical initial conditions.
    /// Float convenience for diagnostics (symplecticity residuals, linear
    /// part extraction); the substitution round-off is not tracked.
    pub fn physical_polynomial_part(&self) -> Result<PolyMap, FlowError> {
        let dom = self.domain();
        let v = dom.dim();
        let mut mids = Vec::with_capacity(v);
        let mut hws = Vec::with_capacity(v);
        for i in 0..v {
            let hw = dom.half_width(i);
            if hw == 0.0 {
                return Err(FlowError::DimensionMismatch { state: i, system: v });
            }
            mids.push(-dom.mid(i) / hw);
            hws.push(1.0 / hw);
        }
        let comps = self
            .state
            .components()
            .iter()
            .map(|c| c.poly().affine_substitute(&mids, &hws).map(|(p, _)| p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PolyMap::new(comps)?)
    }

    pub fn remainder_widths(&self) -> Vec<f64> {
        self.state
            .components()
            .iter()
            .map(|c| c.remainder().width())
            .collect()
    }

    pub fn variational_rows(&self) -> Result<&[TmVector], FlowError> {
        self.variational
            .as_deref()
            .ok_or(FlowError::Tm(TmError::DomainMismatch))
    }
}

#[derive(Debug, Clone)]
pub struct IntegrationOptions {
    pub order: usize,
    pub with_variational: bool,
    /// Initial step as a fraction of the span.
    pub initial_step_fraction: f64,
    /// Relative step underflow threshold.
    pub min_step_fraction: f64,
    /// Per-step absolute remainder growth budget: a step whose worst
    /// component remainder grows beyond this is retried at half the step,
    /// a few times at most — soundness is never at stake, only tightness.
    /// Off by default (infinite budget).
    pub step_remainder_budget: f64,
}

impl IntegrationOptions {
    pub fn order(order: usize) -> Self {
        IntegrationOptions {
            order,
            with_variational: false,
            initial_step_fraction: 1.0 / 100.0,
            min_step_fraction: 2.0f64.powi(-20),
            step_remainder_budget: f64::INFINITY,
        }
    }

    pub fn with_variational(mut self) -> Self {
        self.with_variational = true;
        self
    }

    pub fn budget(mut self, budget: f64) -> Self {
        self.step_remainder_budget = budget;
        self
    }
}

/// One verified Picard step from `t0` over `h`: iterate the operator
/// `O(x) = x0 + int f(tau, x)` on the polynomial predictor, inflate the
/// remainder, and accept only when one more application maps the candidate
/// into itself.
pub fn picard_step(
    sys: &OdeSystem,
    state: &TmVector,
    t0: f64,
    h: f64,
) -> Result<TmVector, FlowError> {
    assert!(h > 0.0);
    let dim = state.dim();
    if sys.dim() != dim {
        return Err(FlowError::DimensionMismatch {
            state: dim,
            system: sys.dim(),
        });
    }
    let order = state.component(0).order();
    let dom = state.domain().clone();
    let t1 = t0 + h;
    let ext = dom.extended(Interval::new(t0.min(t1), t1.max(t0))?, t0)?;
    let time_var = ext.dim() - 1;
    let time_tm = TaylorModel::var(ext.clone(), order, time_var)?;
    let x0: Vec<TaylorModel> = state
        .components()
        .iter()
        .map(|c| c.lifted(&ext))
        .collect::<Result<_, _>>()?;

    let apply = |x: &[TaylorModel]| -> Result<Vec<TaylorModel>, FlowError> {
        let f = sys.eval_tm(x, &time_tm).map_err(|e| match e {
            FlowError::Tm(t) => FlowError::from_tm(t),
            other => other,
        })?;
        let mut out = Vec::with_capacity(dim);
        for (x0i, fi) in x0.iter().zip(&f) {
            out.push(x0i.add(&fi.antiderive(time_var)?)?);
        }
        Ok(out)
    };

    // Polynomial predictor: the time degree saturates after `order`
    // applications in exact arithmetic; a couple extra keep the float
    // coefficients within ulps of their fixed point.
    let mut x = x0.clone();
    for _ in 0..(order + 2) {
        x = apply(&x)?;
    }

    // Candidate inflation and inclusion verification. The float predictor
    // never reaches a bitwise fixed point, so the image's coefficient
    // drift against the candidate is swept into the inclusion test.
    let mut inflation = 1.0;
    let mut failed_component = 0;
    for _ in 0..3 {
        let candidate: Vec<TaylorModel> = x
            .iter()
            .map(|c| {
                let r = c.remainder();
                let pad = 2.0 * inflation * (r.width() + 1e-17 * (1.0 + r.magnitude()));
                TaylorModel::from_parts(
                    c.poly().clone(),
                    ext.clone(),
                    r.add(&Interval::symmetric(pad)).expect("finite widths"),
                )
                .expect("same domain")
            })
            .collect();
        let image = apply(&candidate)?;
        let mut included = true;
        for (i, (im, ca)) in image.iter().zip(&candidate).enumerate() {
            let mut drift = 0.0f64;
            for (a, b) in im.poly().coeffs().iter().zip(ca.poly().coeffs()) {
                drift = crate::interval::add_up(drift, (a - b).abs());
            }
            let shifted = im.remainder().add(&Interval::symmetric(drift))?;
            if !shifted.is_subset_of(&ca.remainder()) {
                included = false;
                failed_component = i;
            }
        }
        if included {
            // The solution lies in O(candidate) = image; collapse time to
            // the step end and drop the time variable.
            let small = state.domain().clone();
            let end: Vec<TaylorModel> = image
                .iter()
                .map(|c| c.collapsed_last(&small, 1.0))
                .collect::<Result<_, _>>()?;
            return Ok(TmVector::new(end)?);
        }
        inflation *= 8.0;
    }
    Err(FlowError::InclusionFailed {
        h,
        component: failed_component,
    })
}

/// Verified integration from `t0` to `tf` over an initial box, composing
/// adaptive Picard steps; with variational enclosures when requested.
pub fn integrate_flow(
    sys: &OdeSystem,
    box_: &BoxDomain,
    t0: f64,
    tf: f64,
    opts: &IntegrationOptions,
) -> Result<FlowEnclosure, FlowError> {
    assert!(tf > t0, "integration span must be positive");
    let dom = TmDomain::centered(box_.clone())?;
    let state = TmVector::identity(dom, opts.order)?;
    integrate_flow_from(sys, state, t0, tf, opts)
}

/// Continue a verified integration from an existing Taylor-model state
/// (used to chain beamline elements); augments with the variational block
/// if requested and not present.
pub fn integrate_flow_from(
    sys: &OdeSystem,
    state: TmVector,
    t0: f64,
    tf: f64,
    opts: &IntegrationOptions,
) -> Result<FlowEnclosure, FlowError> {
    let v = sys.dim();
    let (work_sys, mut work_state);
    if opts.with_variational {
        work_sys = sys.with_variational();
        if state.dim() == v {
            // Fresh start: append Y = I as exact constants.
            let dom = state.domain().clone();
            let order = state.component(0).order();
            let mut comps = state.components().to_vec();
            for k in 0..v {
                for j in 0..v {
                    comps.push(TaylorModel::constant(
                        dom.clone(),
                        order,
                        if k == j { 1.0 } else { 0.0 },
                    ));
                }
            }
            work_state = TmVector::new(comps)?;
        } else if state.dim() == v + v * v {
            work_state = state;
        } else {
            return Err(FlowError::DimensionMismatch {
                state: state.dim(),
                system: v + v * v,
            });
        }
    } else {
        work_sys = sys.clone();
        work_state = state;
        if work_state.dim() != v {
            return Err(FlowError::DimensionMismatch {
                state: work_state.dim(),
                system: v,
            });
        }
    }

    let span = tf - t0;
    let mut h = span * opts.initial_step_fraction;
    let h_min = span * opts.min_step_fraction;
    let mut t = t0;
    let mut steps = Vec::new();
    let mut streak = 0usize;
    let mut budget_retries = 0usize;
    while t < tf {
        let h_eff = h.min(tf - t);
        match picard_step(&work_sys, &work_state, t, h_eff) {
            Ok(next) => {
                // Tightness control: retry shorter when the worst
                // remainder growth exceeds the per-step budget. Bounded
                // retries avoid spirals where the growth is not
                // step-driven.
                let growth = work_state
                    .components()
                    .iter()
                    .zip(next.components())
                    .map(|(a, b)| b.remainder().width() - a.remainder().width())
                    .fold(0.0f64, f64::max);
                if growth > opts.step_remainder_budget
                    && budget_retries < 4
                    && h_eff > 16.0 * h_min
                {
                    h = 0.5 * h_eff;
                    streak = 0;
                    budget_retries += 1;
                    continue;
                }
                budget_retries = 0;
                work_state = next;
                steps.push(StepRecord { t, h: h_eff });
                t += h_eff;
                streak += 1;
                if streak >= 3 {
                    h *= 1.2;
                    streak = 0;
                }
            }
            Err(FlowError::InclusionFailed { .. }) => {
                h *= 0.5;
                streak = 0;
                if h < h_min {
                    return Err(FlowError::StepUnderflow { h });
                }
            }
            Err(e) => return Err(e),
        }
    }

    let comps = work_state.into_components();
    if opts.with_variational {
        let state = TmVector::new(comps[..v].to_vec())?;
        let mut rows = Vec::with_capacity(v);
        for k in 0..v {
            rows.push(TmVector::new(comps[v + k * v..v + (k + 1) * v].to_vec())?);
        }
        Ok(FlowEnclosure {
            state,
            variational: Some(rows),
            t0,
            tf,
            steps,
        })
    } else {
        Ok(FlowEnclosure {
            state: TmVector::new(comps)?,
            variational: None,
            t0,
            tf,
            steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn exp_system() -> OdeSystem {
        OdeSystem::new("exp", vec![state(0)])
    }

    fn harmonic() -> OdeSystem {
        // q' = p, p' = -q.
        OdeSystem::new("harmonic", vec![state(1), neg(state(0))])
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let sys = OdeSystem::new("still", vec![cst(0.0)]);
        let dom = TmDomain::centered(BoxDomain::cube(1, 0.3).unwrap()).unwrap();
        let st = TmVector::identity(dom, 5).unwrap();
        let out = picard_step(&sys, &st, 0.0, 0.25).unwrap();
        let c = out.component(0);
        let mut m = [0u8; crate::polyalg::MAX_VARS];
        m[0] = 1;
        assert_eq!(c.poly().coeff(&m), 0.3);
        assert!(c.remainder().width() <= 1e-15);
    }

    #[test]
    fn exp_step_encloses_e_tenth() {
        // x' = x from x0 = 1 over one step h = 0.1 at order 7.
        let sys = exp_system();
        let dom = TmDomain::centered(
            BoxDomain::new(vec![Interval::point(1.0)]).unwrap(),
        )
        .unwrap();
        let st = TmVector::identity(dom, 7).unwrap();
        let out = picard_step(&sys, &st, 0.0, 0.1).unwrap();
        let enc = out.component(0).bound().unwrap();
        let truth = 0.1f64.exp();
        assert!(enc.contains(truth), "{enc} vs {truth}");
        assert!(enc.width() <= 1e-9, "width {}", enc.width());
    }

    #[test]
    fn exp_flow_over_unit_interval() {
        let sys = exp_system();
        let b = BoxDomain::new(vec![Interval::point(1.0)]).unwrap();
        let flow = integrate_flow(&sys, &b, 0.0, 1.0, &IntegrationOptions::order(9)).unwrap();
        let enc = flow.state.component(0).bound().unwrap();
        assert!(enc.contains(std::f64::consts::E), "{enc}");
        assert!(enc.width() <= 1e-8, "width {}", enc.width());
    }

    #[test]
    fn harmonic_full_period_contains_start() {
        let sys = harmonic();
        let b = BoxDomain::cube(2, 0.1).unwrap();
        let flow = integrate_flow(
            &sys,
            &b,
            0.0,
            2.0 * std::f64::consts::PI,
            &IntegrationOptions::order(7),
        )
        .unwrap();
        // Sampled initial points must be contained in the enclosure
        // evaluated at themselves after a full period.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x0 = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
            for i in 0..2 {
                let enc = flow.state.component(i).eval_point(&x0).unwrap();
                assert!(
                    enc.lo() - 1e-9 <= x0[i] && x0[i] <= enc.hi() + 1e-9,
                    "component {i}: {} not in {enc}",
                    x0[i]
                );
            }
        }
        // Energy of the polynomial part stays near the initial value.
        let p = flow.polynomial_part().unwrap();
        let x = [0.05, -0.03];
        let y = p.eval(&[x[0] / 0.1, x[1] / 0.1]);
        let e0 = x[0] * x[0] + x[1] * x[1];
        let e1 = y[0] * y[0] + y[1] * y[1];
        assert_relative_eq!(e0, e1, max_relative = 1e-7);
    }

    #[test]
    fn linear_system_matches_matrix_exponential() {
        // Rotation generator: flow linear part is the rotation matrix;
        // the variational enclosure equals it too.
        let sys = harmonic();
        let b = BoxDomain::cube(2, 0.2).unwrap();
        let tf = 0.7;
        let flow = integrate_flow(
            &sys,
            &b,
            0.0,
            tf,
            &IntegrationOptions::order(8).with_variational(),
        )
        .unwrap();
        let lp = flow.polynomial_part().unwrap().linear_part();
        // Scaled chart: x = 0.2 u, so the scaled linear part equals the
        // rotation matrix times 0.2 against unit outputs.
        let c = tf.cos();
        let s = tf.sin();
        let expect = [[c * 0.2, s * 0.2], [-s * 0.2, c * 0.2]];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(lp[(i, j)], expect[i][j], epsilon = 1e-9);
            }
        }
        let rows = flow.variational_rows().unwrap();
        let expect_y = [[c, s], [-s, c]];
        for k in 0..2 {
            for j in 0..2 {
                let enc = rows[k].component(j).bound().unwrap();
                assert!(
                    enc.contains(expect_y[k][j]),
                    "Y[{k}][{j}] {enc} vs {}",
                    expect_y[k][j]
                );
                assert!(enc.width() <= 1e-9, "Y width {}", enc.width());
            }
        }
    }

    #[test]
    fn variational_of_constant_rhs_is_identity() {
        let sys = OdeSystem::new("still2", vec![cst(0.0), cst(0.0)]);
        let b = BoxDomain::cube(2, 0.5).unwrap();
        let flow = integrate_flow(
            &sys,
            &b,
            0.0,
            1.0,
            &IntegrationOptions::order(4).with_variational(),
        )
        .unwrap();
        let rows = flow.variational_rows().unwrap();
        for k in 0..2 {
            for j in 0..2 {
                let tm = rows[k].component(j);
                assert_eq!(tm.poly().constant_part(), if k == j { 1.0 } else { 0.0 });
                assert!(tm.remainder().width() <= 1e-15);
            }
        }
    }

    #[test]
    fn flow_soundness_against_rk4() {
        // Nonlinear 2-d system with mixed intrinsics.
        let sys = OdeSystem::new(
            "mix",
            vec![
                sub(state(1), mul(cst(0.3), powi(state(0), 3))),
                neg(add(state(0), mul(cst(0.1), sin(state(1))))),
            ],
        );
        let b = BoxDomain::cube(2, 0.2).unwrap();
        let flow = integrate_flow(&sys, &b, 0.0, 1.5, &IntegrationOptions::order(7)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let x0 = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
            let truth = rk4(&sys, &x0, 0.0, 1.5, 4000).unwrap();
            for i in 0..2 {
                let enc = flow.state.component(i).eval_point(&x0).unwrap();
                assert!(
                    enc.lo() - 1e-9 <= truth[i] && truth[i] <= enc.hi() + 1e-9,
                    "{:?} -> {} not in {enc}",
                    x0,
                    truth[i]
                );
            }
        }
    }

    #[test]
    fn variational_consistent_with_finite_differences() {
        let sys = OdeSystem::new(
            "vdp-ish",
            vec![state(1), sub(neg(state(0)), mul(cst(0.2), powi(state(0), 2)))],
        );
        let b = BoxDomain::cube(2, 0.15).unwrap();
        let tf = 0.8;
        let flow = integrate_flow(
            &sys,
            &b,
            0.0,
            tf,
            &IntegrationOptions::order(7).with_variational(),
        )
        .unwrap();
        let rows = flow.variational_rows().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eps = 1e-6;
        for _ in 0..20 {
            let x0 = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
            for k in 0..2 {
                for j in 0..2 {
                    let mut xp = x0;
                    xp[j] += eps;
                    let mut xm = x0;
                    xm[j] -= eps;
                    let fp = rk4(&sys, &xp, 0.0, tf, 2000).unwrap();
                    let fm = rk4(&sys, &xm, 0.0, tf, 2000).unwrap();
                    let fd = (fp[k] - fm[k]) / (2.0 * eps);
                    let enc = rows[k].component(j).eval_point(&x0).unwrap();
                    assert!(
                        enc.lo() - 1e-5 <= fd && fd <= enc.hi() + 1e-5,
                        "dM{k}/dx{j} at {x0:?}: {fd} not in {enc}"
                    );
                }
            }
        }
    }

    #[test]
    fn time_reversal_returns_to_identity() {
        let sys = harmonic();
        let b = BoxDomain::cube(2, 0.1).unwrap();
        let fwd = integrate_flow(&sys, &b, 0.0, 1.0, &IntegrationOptions::order(7)).unwrap();
        // Reverse field integrated from the forward state.
        let back_sys = OdeSystem::new("rev", vec![neg(state(1)), state(0)]);
        let back = integrate_flow_from(
            &back_sys,
            fwd.state.clone(),
            0.0,
            1.0,
            &IntegrationOptions::order(7),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x0 = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
            for i in 0..2 {
                let enc = back.state.component(i).eval_point(&x0).unwrap();
                assert!(
                    enc.lo() - 1e-8 <= x0[i] && x0[i] <= enc.hi() + 1e-8,
                    "{} not in {enc}",
                    x0[i]
                );
            }
        }
    }

    #[test]
    fn stiff_blowup_reports_step_underflow() {
        // x' = x^2 from x0 = 1 blows up at t = 1.
        let sys = OdeSystem::new("blowup", vec![powi(state(0), 2)]);
        let b = BoxDomain::new(vec![Interval::point(1.0)]).unwrap();
        let r = integrate_flow(&sys, &b, 0.0, 1.05, &IntegrationOptions::order(6));
        assert!(matches!(
            r,
            Err(FlowError::StepUnderflow { .. }) | Err(FlowError::Interval(_))
        ));
    }
}
