//! Taylor models: a truncated polynomial reference part together with a
//! rigorous remainder interval over a box.
//!
//! A scalar model represents the set of functions `f` with
//! `f(x) - P(u(x))` in the remainder for all `x` in the domain box, where
//! `u` is the affine chart mapping the box onto the unit cube `[-1,1]^v`.
//! (The defect sign is fixed by this convention; with interval remainders
//! the mirrored convention differs only by reflection.)
//! All polynomial work happens in the scaled variables, so the coefficient
//! round-off tallies of [`crate::polyalg`] are valid sup-norm error bounds
//! and are swept into the remainder after every operation.
//!
//! Models are closed under arithmetic, the intrinsics needed by the flow
//! integrator (exp, sin, cos, sqrt, recip) and antiderivation. They are
//! built only from exact atoms — coordinate variables and constants — and
//! closed operations; there is deliberately no constructor from function
//! samples.

use crate::interval::{BoxDomain, Interval, IntervalError};
use crate::polyalg::{algebra, MultivarPoly, PolyError};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TmError {
    #[error("taylor models live on different domains")]
    DomainMismatch,
    #[error("range enclosure touches a singularity of {0}")]
    RangeTouchesSingularity(&'static str),
    #[error("variable index {0} out of range")]
    IndexOutOfRange(usize),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// Shared domain data: the physical box, the expansion reference point and
/// the affine chart onto the unit cube.
///
/// The chart uses exact float midpoints and half-widths, with half-widths
/// rounded up so the physical box is covered by `mid + hw * [-1,1]`.
#[derive(Debug, PartialEq)]
pub struct TmDomain {
    box_: BoxDomain,
    ref_point: Vec<f64>,
    mids: Vec<f64>,
    hws: Vec<f64>,
    scaled_ref: Vec<f64>,
}

impl TmDomain {
    pub fn new(box_: BoxDomain, ref_point: Vec<f64>) -> Result<Arc<Self>, TmError> {
        if !box_.contains_point(&ref_point) {
            return Err(TmError::DomainMismatch);
        }
        let mids = box_.midpoint();
        let hws: Vec<f64> = box_
            .components()
            .iter()
            .zip(&mids)
            .map(|(c, &m)| {
                let up = crate::interval::sub_up(c.hi(), m);
                let down = crate::interval::sub_up(m, c.lo());
                up.max(down).max(0.0)
            })
            .collect();
        let scaled_ref = ref_point
            .iter()
            .zip(mids.iter().zip(&hws))
            .map(|(&r, (&m, &h))| {
                if h == 0.0 {
                    0.0
                } else {
                    ((r - m) / h).clamp(-1.0, 1.0)
                }
            })
            .collect();
        Ok(Arc::new(TmDomain {
            box_,
            ref_point,
            mids,
            hws,
            scaled_ref,
        }))
    }

    /// Centered domain with the reference point at the box midpoint.
    pub fn centered(box_: BoxDomain) -> Result<Arc<Self>, TmError> {
        let mid = box_.midpoint();
        TmDomain::new(box_, mid)
    }

    pub fn dim(&self) -> usize {
        self.box_.dim()
    }

    pub fn box_(&self) -> &BoxDomain {
        &self.box_
    }

    pub fn ref_point(&self) -> &[f64] {
        &self.ref_point
    }

    pub fn half_width(&self, i: usize) -> f64 {
        self.hws[i]
    }

    pub fn mid(&self, i: usize) -> f64 {
        self.mids[i]
    }

    /// Append one variable (used for the time variable of a flow step).
    pub fn extended(&self, iv: Interval, ref_val: f64) -> Result<Arc<Self>, TmError> {
        let mut comps = self.box_.components().to_vec();
        comps.push(iv);
        let mut refp = self.ref_point.clone();
        refp.push(ref_val);
        TmDomain::new(BoxDomain::new(comps)?, refp)
    }

    /// Remove the last variable.
    pub fn shrunk(&self) -> Result<Arc<Self>, TmError> {
        let comps = self.box_.components()[..self.dim() - 1].to_vec();
        let refp = self.ref_point[..self.dim() - 1].to_vec();
        TmDomain::new(BoxDomain::new(comps)?, refp)
    }

    /// Scaled coordinates of a physical point, as intervals.
    pub fn scale_point(&self, x: &[f64]) -> Result<Vec<Interval>, TmError> {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                if self.hws[i] == 0.0 {
                    return Ok(Interval::ZERO);
                }
                let num = Interval::point(xi).sub(&Interval::point(self.mids[i]))?;
                Ok(num.div(&Interval::point(self.hws[i]))?)
            })
            .collect()
    }
}

/// A scalar Taylor model.
#[derive(Debug, Clone)]
pub struct TaylorModel {
    poly: MultivarPoly,
    dom: Arc<TmDomain>,
    remainder: Interval,
}

impl TaylorModel {
    fn check_dom(&self, other: &TaylorModel) -> Result<(), TmError> {
        if Arc::ptr_eq(&self.dom, &other.dom) || self.dom == other.dom {
            Ok(())
        } else {
            Err(TmError::DomainMismatch)
        }
    }

    pub fn zero(dom: Arc<TmDomain>, order: usize) -> Self {
        let alg = algebra(dom.dim(), order);
        TaylorModel {
            poly: MultivarPoly::zero(alg),
            dom,
            remainder: Interval::ZERO,
        }
    }

    pub fn constant(dom: Arc<TmDomain>, order: usize, c: f64) -> Self {
        let alg = algebra(dom.dim(), order);
        TaylorModel {
            poly: MultivarPoly::constant(alg, c),
            dom,
            remainder: Interval::ZERO,
        }
    }

    /// The coordinate function `x_i`, exactly: `mid_i + hw_i u_i` with
    /// remainder [0,0].
    pub fn var(dom: Arc<TmDomain>, order: usize, i: usize) -> Result<Self, TmError> {
        if i >= dom.dim() {
            return Err(TmError::IndexOutOfRange(i));
        }
        let alg = algebra(dom.dim(), order);
        let mut poly = MultivarPoly::constant(alg.clone(), dom.mids[i]);
        let mut m = [0u8; crate::polyalg::MAX_VARS];
        m[i] = 1;
        poly.set_coeff(&m, dom.hws[i])?;
        Ok(TaylorModel {
            poly,
            dom,
            remainder: Interval::ZERO,
        })
    }

    /// Wrap an existing scaled-coordinates polynomial with a remainder.
    pub fn from_parts(
        poly: MultivarPoly,
        dom: Arc<TmDomain>,
        remainder: Interval,
    ) -> Result<Self, TmError> {
        if poly.num_vars() != dom.dim() {
            return Err(TmError::DomainMismatch);
        }
        Ok(TaylorModel {
            poly,
            dom,
            remainder,
        })
    }

    /// Enclose a physical-coordinates polynomial over the domain: the
    /// affine chart is substituted and its round-off swept to the
    /// remainder.
    pub fn from_physical_poly(p: &MultivarPoly, dom: Arc<TmDomain>) -> Result<Self, TmError> {
        if p.num_vars() != dom.dim() {
            return Err(TmError::DomainMismatch);
        }
        let (scaled, tally) = p.affine_substitute(&dom.mids, &dom.hws)?;
        Ok(TaylorModel {
            poly: scaled,
            dom,
            remainder: Interval::symmetric(tally),
        })
    }

    pub fn poly(&self) -> &MultivarPoly {
        &self.poly
    }

    pub fn domain(&self) -> &Arc<TmDomain> {
        &self.dom
    }

    pub fn remainder(&self) -> Interval {
        self.remainder
    }

    pub fn order(&self) -> usize {
        self.poly.order()
    }

    /// Enclosure of the range over the whole domain.
    pub fn bound(&self) -> Result<Interval, TmError> {
        Ok(self.poly.bound_unit().add(&self.remainder)?)
    }

    /// Enclosure of values at one physical point.
    pub fn eval_point(&self, x: &[f64]) -> Result<Interval, TmError> {
        let u = self.dom.scale_point(x)?;
        let ubox = BoxDomain::new(u)?;
        Ok(self.poly.bound_box(&ubox)?.add(&self.remainder)?)
    }

    pub fn add(&self, rhs: &TaylorModel) -> Result<TaylorModel, TmError> {
        self.check_dom(rhs)?;
        let (poly, tally) = self.poly.add_traced(&rhs.poly)?;
        let remainder = self
            .remainder
            .add(&rhs.remainder)?
            .add(&Interval::symmetric(tally))?;
        Ok(TaylorModel {
            poly,
            dom: self.dom.clone(),
            remainder,
        })
    }

    pub fn sub(&self, rhs: &TaylorModel) -> Result<TaylorModel, TmError> {
        self.check_dom(rhs)?;
        let (poly, tally) = self.poly.sub_traced(&rhs.poly)?;
        let remainder = self
            .remainder
            .sub(&rhs.remainder)?
            .add(&Interval::symmetric(tally))?;
        Ok(TaylorModel {
            poly,
            dom: self.dom.clone(),
            remainder,
        })
    }

    pub fn neg(&self) -> TaylorModel {
        TaylorModel {
            poly: self.poly.neg(),
            dom: self.dom.clone(),
            remainder: self.remainder.neg(),
        }
    }

    pub fn scale(&self, s: f64) -> Result<TaylorModel, TmError> {
        let (poly, tally) = self.poly.scale_traced(s);
        let remainder = self
            .remainder
            .mul_scalar(s)?
            .add(&Interval::symmetric(tally))?;
        Ok(TaylorModel {
            poly,
            dom: self.dom.clone(),
            remainder,
        })
    }

    pub fn add_scalar(&self, c: f64) -> Result<TaylorModel, TmError> {
        let mut poly = self.poly.clone();
        let (sum, err) = crate::interval::two_sum(poly.constant_part(), c);
        let mut m = [0u8; crate::polyalg::MAX_VARS];
        m.iter_mut().for_each(|e| *e = 0);
        poly.set_coeff(&m, sum)?;
        Ok(TaylorModel {
            poly,
            dom: self.dom.clone(),
            remainder: self.remainder.add(&Interval::symmetric(err.abs()))?,
        })
    }

    pub fn add_interval(&self, iv: &Interval) -> Result<TaylorModel, TmError> {
        let mid = iv.midpoint();
        let defect = iv.sub(&Interval::point(mid))?;
        let out = self.add_scalar(mid)?;
        Ok(TaylorModel {
            remainder: out.remainder.add(&defect)?,
            ..out
        })
    }

    /// Multiply by an interval constant.
    pub fn mul_interval(&self, iv: &Interval) -> Result<TaylorModel, TmError> {
        let mid = iv.midpoint();
        let defect = iv.sub(&Interval::point(mid))?;
        let total = self.bound()?;
        let scaled = self.scale(mid)?;
        Ok(TaylorModel {
            remainder: scaled.remainder.add(&defect.mul(&total)?)?,
            ..scaled
        })
    }

    pub fn mul(&self, rhs: &TaylorModel) -> Result<TaylorModel, TmError> {
        self.check_dom(rhs)?;
        // Constant factors multiply exactly through the interval path; no
        // truncation, no pair loop.
        if self.poly.actual_degree() == 0 {
            let c = Interval::point(self.poly.constant_part()).add(&self.remainder)?;
            return rhs.mul_interval(&c);
        }
        if rhs.poly.actual_degree() == 0 {
            let c = Interval::point(rhs.poly.constant_part()).add(&rhs.remainder)?;
            return self.mul_interval(&c);
        }
        let out = self.poly.mul_trunc(&rhs.poly)?;
        let pa = self.poly.bound_unit();
        let pb = rhs.poly.bound_unit();
        // (Pa + Ra)(Pb + Rb): polynomial truncation and round-off, then the
        // three remainder cross terms.
        let mut rem =
            Interval::symmetric(out.discarded_l1).add(&Interval::symmetric(out.roundoff))?;
        rem = rem.add(&pa.mul(&rhs.remainder)?)?;
        rem = rem.add(&pb.mul(&self.remainder)?)?;
        rem = rem.add(&self.remainder.mul(&rhs.remainder)?)?;
        Ok(TaylorModel {
            poly: out.poly,
            dom: self.dom.clone(),
            remainder: rem,
        })
    }

    /// Antiderivation with respect to `var`, from the reference hyperplane:
    /// the result contains `x -> int_{ref_var}^{x_var} f` for every
    /// contained `f`; the remainder picks up the integration length.
    pub fn antiderive(&self, var: usize) -> Result<TaylorModel, TmError> {
        if var >= self.dom.dim() {
            return Err(TmError::IndexOutOfRange(var));
        }
        let hw = self.dom.hws[var];
        let u0 = self.dom.scaled_ref[var];
        // Primitive of the scaled polynomial, truncated at the order.
        let (prim, discarded_l1, tally1) = self.poly.antiderive_trunc(var)?;
        // Subtract its value on the reference hyperplane.
        let (at_ref, tally2) = prim.eval_partial(var, u0)?;
        let (centered, tally3) = prim.sub_traced(&at_ref)?;
        let (poly, tally4) = centered.scale_traced(hw);
        // The discarded primitive part is evaluated at two points; its l1
        // norm bounds each. Everything scales by the physical half-width.
        let poly_err =
            crate::interval::mul_up(hw, 2.0 * discarded_l1 + tally1 + tally2 + tally3) + tally4;
        // Remainder integrates over x_var - ref_var.
        let span = Interval::new(-1.0 - u0, 1.0 - u0)
            .expect("u0 within [-1,1]")
            .mul_scalar(hw)?;
        let remainder = self
            .remainder
            .mul(&span)?
            .add(&Interval::symmetric(poly_err))?;
        Ok(TaylorModel {
            poly,
            dom: self.dom.clone(),
            remainder,
        })
    }

    /// exp, preserving containment.
    pub fn exp(&self) -> Result<TaylorModel, TmError> {
        let n = self.order();
        let c = self.poly.constant_part();
        let centered = self.add_scalar(-c)?;
        let bbar = centered.bound()?;
        let ec = Interval::point(c).exp()?;
        let mut coeffs = Vec::with_capacity(n + 1);
        let mut g = ec;
        coeffs.push(g);
        for k in 1..=n {
            g = g.div(&Interval::point(k as f64))?;
            coeffs.push(g);
        }
        // Lagrange coefficient: exp over c + hull(0, bbar) / (n+1)!.
        let xi = Interval::point(c).add(&bbar.hull(&Interval::ZERO))?;
        let mut lagrange = xi.exp()?;
        for k in 1..=(n + 1) {
            lagrange = lagrange.div(&Interval::point(k as f64))?;
        }
        self.intrinsic_horner(&centered, &coeffs, lagrange, &bbar)
    }

    pub fn sin(&self) -> Result<TaylorModel, TmError> {
        self.trig(true)
    }

    pub fn cos(&self) -> Result<TaylorModel, TmError> {
        self.trig(false)
    }

    fn trig(&self, is_sin: bool) -> Result<TaylorModel, TmError> {
        let n = self.order();
        let c = self.poly.constant_part();
        let centered = self.add_scalar(-c)?;
        let bbar = centered.bound()?;
        let sc = Interval::point(c).sin()?;
        let cc = Interval::point(c).cos()?;
        let deriv = |k: usize, at_sin: Interval, at_cos: Interval| -> Interval {
            // k-th derivative cycle of sin: sin, cos, -sin, -cos;
            // of cos: cos, -sin, -cos, sin.
            match (is_sin, k % 4) {
                (true, 0) => at_sin,
                (true, 1) => at_cos,
                (true, 2) => at_sin.neg(),
                (true, _) => at_cos.neg(),
                (false, 0) => at_cos,
                (false, 1) => at_sin.neg(),
                (false, 2) => at_cos.neg(),
                (false, _) => at_sin,
            }
        };
        let mut coeffs = Vec::with_capacity(n + 1);
        let mut fact = Interval::ONE;
        for k in 0..=n {
            if k > 0 {
                fact = fact.mul(&Interval::point(k as f64))?;
            }
            coeffs.push(deriv(k, sc, cc).div(&fact)?);
        }
        let xi = Interval::point(c).add(&bbar.hull(&Interval::ZERO))?;
        let dnext = deriv(n + 1, xi.sin()?, xi.cos()?);
        let factn = fact.mul(&Interval::point((n + 1) as f64))?;
        let lagrange = dnext.div(&factn)?;
        self.intrinsic_horner(&centered, &coeffs, lagrange, &bbar)
    }

    /// sqrt; the range enclosure must stay strictly positive.
    pub fn sqrt(&self) -> Result<TaylorModel, TmError> {
        let n = self.order();
        let c = self.poly.constant_part();
        let centered = self.add_scalar(-c)?;
        let bbar = centered.bound()?;
        if bbar.add_scalar(c)?.lo() <= 0.0 {
            return Err(TmError::RangeTouchesSingularity("sqrt"));
        }
        let ci = Interval::point(c);
        // g_0 = sqrt(c); g_k = g_{k-1} (3/2 - k) / (k c).
        let mut coeffs = Vec::with_capacity(n + 1);
        let mut g = ci.sqrt()?;
        coeffs.push(g);
        for k in 1..=n {
            let factor =
                Interval::point(1.5 - k as f64).div(&Interval::point(k as f64).mul(&ci)?)?;
            g = g.mul(&factor)?;
            coeffs.push(g);
        }
        let xi = ci.add(&bbar.hull(&Interval::ZERO))?;
        if xi.lo() <= 0.0 {
            return Err(TmError::RangeTouchesSingularity("sqrt"));
        }
        let mut lagrange = xi.sqrt()?;
        for k in 1..=(n + 1) {
            let factor =
                Interval::point(1.5 - k as f64).div(&Interval::point(k as f64).mul(&xi)?)?;
            lagrange = lagrange.mul(&factor)?;
        }
        self.intrinsic_horner(&centered, &coeffs, lagrange, &bbar)
    }

    /// 1/x; the range enclosure must exclude zero.
    pub fn recip(&self) -> Result<TaylorModel, TmError> {
        let n = self.order();
        let c = self.poly.constant_part();
        let centered = self.add_scalar(-c)?;
        let bbar = centered.bound()?;
        if bbar.add_scalar(c)?.contains(0.0) {
            return Err(TmError::RangeTouchesSingularity("recip"));
        }
        let ci = Interval::point(c);
        // g_k = (-1)^k / c^{k+1}.
        let mut coeffs = Vec::with_capacity(n + 1);
        let mut g = ci.recip()?;
        coeffs.push(g);
        for _ in 1..=n {
            g = g.div(&ci)?.neg();
            coeffs.push(g);
        }
        let xi = ci.add(&bbar.hull(&Interval::ZERO))?;
        if xi.contains(0.0) {
            return Err(TmError::RangeTouchesSingularity("recip"));
        }
        // (n+1)-st Taylor coefficient over xi: (-1)^{n+1} / xi^{n+2}.
        let mut lagrange = xi.recip()?.powi((n + 2) as i32)?;
        if (n + 1) % 2 == 1 {
            lagrange = lagrange.neg();
        }
        self.intrinsic_horner(&centered, &coeffs, lagrange, &bbar)
    }

    /// Shared tail of the intrinsics: Horner evaluation of the truncated
    /// series in the centered model plus the Lagrange term over the range.
    fn intrinsic_horner(
        &self,
        centered: &TaylorModel,
        coeffs: &[Interval],
        lagrange_coeff: Interval,
        bbar: &Interval,
    ) -> Result<TaylorModel, TmError> {
        let n = self.order();
        let mut acc = TaylorModel::zero(self.dom.clone(), n).add_interval(&coeffs[n])?;
        for k in (0..n).rev() {
            acc = acc.mul(centered)?;
            acc = acc.add_interval(&coeffs[k])?;
        }
        let lag = lagrange_coeff.mul(&bbar.powi((n + 1) as i32)?)?;
        Ok(TaylorModel {
            remainder: acc.remainder.add(&lag)?,
            ..acc
        })
    }

    /// Restrict to a sub-box: the affine chart of the new domain is
    /// substituted into the old chart; the remainder is unchanged.
    pub fn restricted(&self, dom: &Arc<TmDomain>) -> Result<TaylorModel, TmError> {
        if dom.dim() != self.dom.dim() {
            return Err(TmError::DomainMismatch);
        }
        let mut mids = Vec::with_capacity(dom.dim());
        let mut scales = Vec::with_capacity(dom.dim());
        for i in 0..dom.dim() {
            let hw_old = self.dom.hws[i];
            if hw_old == 0.0 {
                if dom.hws[i] != 0.0 || dom.mids[i] != self.dom.mids[i] {
                    return Err(TmError::DomainMismatch);
                }
                mids.push(0.0);
                scales.push(0.0);
                continue;
            }
            // u_old = (mid_new - mid_old)/hw_old + (hw_new/hw_old) u_new
            let shift = (dom.mids[i] - self.dom.mids[i]) / hw_old;
            let scale = dom.hws[i] / hw_old;
            if shift.abs() + scale.abs() > 1.0 + 1e-12 {
                return Err(TmError::DomainMismatch);
            }
            mids.push(shift);
            scales.push(scale);
        }
        let (poly, tally) = self.poly.affine_substitute(&mids, &scales)?;
        Ok(TaylorModel {
            poly,
            dom: dom.clone(),
            remainder: self.remainder.add(&Interval::symmetric(tally))?,
        })
    }

    /// Lift into a domain with one extra trailing variable.
    pub fn lifted(&self, dom: &Arc<TmDomain>) -> Result<TaylorModel, TmError> {
        if dom.dim() != self.dom.dim() + 1 {
            return Err(TmError::DomainMismatch);
        }
        let alg = algebra(dom.dim(), self.order());
        Ok(TaylorModel {
            poly: self.poly.embed(alg)?,
            dom: dom.clone(),
            remainder: self.remainder,
        })
    }

    /// Substitute the scaled value `u` for the last variable and drop it.
    pub fn collapsed_last(&self, dom: &Arc<TmDomain>, u: f64) -> Result<TaylorModel, TmError> {
        let last = self.dom.dim() - 1;
        let (folded, tally) = self.poly.eval_partial(last, u)?;
        let small = folded.drop_var(last)?;
        Ok(TaylorModel {
            poly: small,
            dom: dom.clone(),
            remainder: self.remainder.add(&Interval::symmetric(tally))?,
        })
    }

    /// Table-style text dump: term list, reference point, domain, per-order
    /// bound intervals and the remainder row.
    pub fn dump(&self, label: &str) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let alg = self.poly.algebra().clone();
        let _ = writeln!(
            s,
            "  RDA VARIABLE {label}:   NO= {:3}, NV= {:5}",
            self.order(),
            self.poly.num_vars()
        );
        let _ = writeln!(s, "     I  COEFFICIENT            ORDER EXPONENTS");
        let mut terms = String::new();
        self.poly.write_terms(&mut terms);
        s.push_str(&terms);
        let _ = writeln!(s, "  ----------------------------------------------");
        let _ = writeln!(s, "  VAR    REFERENCE POINT                  DOMAIN INTERVAL");
        for i in 0..self.dom.dim() {
            let c = self.dom.box_.component(i);
            let _ = writeln!(
                s,
                "  {:3}  {:<20}  [{} , {}]",
                i + 1,
                self.dom.ref_point[i],
                c.lo(),
                c.hi()
            );
        }
        let _ = writeln!(s, "  ORDER                    BOUND INTERVAL");
        for d in 0..=self.poly.actual_degree() {
            let mut slice = MultivarPoly::zero(alg.clone());
            let mut any = false;
            for (idx, c) in self.poly.nonzero() {
                if alg.degree_of(idx) == d {
                    let m = *alg.mono(idx);
                    let _ = slice.set_coeff(&m, c);
                    any = true;
                }
            }
            if !any {
                continue;
            }
            let b = slice.bound_unit();
            let _ = writeln!(s, "  {:3}     [{:e},{:e}]", d, b.lo(), b.hi());
        }
        let _ = writeln!(
            s,
            "    R     [{:e},{:e}]",
            self.remainder.lo(),
            self.remainder.hi()
        );
        let _ = writeln!(
            s,
            "  *********************************************************"
        );
        s
    }
}

/// A vector of Taylor models over one shared domain.
#[derive(Debug, Clone)]
pub struct TmVector {
    components: Vec<TaylorModel>,
}

impl TmVector {
    pub fn new(components: Vec<TaylorModel>) -> Result<Self, TmError> {
        if components.is_empty() {
            return Err(TmError::DomainMismatch);
        }
        for c in &components[1..] {
            components[0].check_dom(c)?;
        }
        Ok(TmVector { components })
    }

    /// The identity chart over a domain: one coordinate model per variable.
    pub fn identity(dom: Arc<TmDomain>, order: usize) -> Result<Self, TmError> {
        let comps = (0..dom.dim())
            .map(|i| TaylorModel::var(dom.clone(), order, i))
            .collect::<Result<Vec<_>, _>>()?;
        TmVector::new(comps)
    }

    /// Enclose a polynomial map over a box.
    pub fn from_poly_map(
        map: &crate::polyalg::PolyMap,
        dom: Arc<TmDomain>,
    ) -> Result<Self, TmError> {
        let comps = map
            .components()
            .iter()
            .map(|p| TaylorModel::from_physical_poly(p, dom.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        TmVector::new(comps)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &TaylorModel {
        &self.components[i]
    }

    pub fn components(&self) -> &[TaylorModel] {
        &self.components
    }

    pub fn into_components(self) -> Vec<TaylorModel> {
        self.components
    }

    pub fn domain(&self) -> &Arc<TmDomain> {
        self.components[0].domain()
    }

    pub fn bounds(&self) -> Result<Vec<Interval>, TmError> {
        self.components.iter().map(|c| c.bound()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dom2(h: f64) -> Arc<TmDomain> {
        TmDomain::centered(BoxDomain::cube(2, h).unwrap()).unwrap()
    }

    fn dom1(h: f64) -> Arc<TmDomain> {
        TmDomain::centered(BoxDomain::cube(1, h).unwrap()).unwrap()
    }

    #[test]
    fn a_minus_a_has_reflected_remainder() {
        let d = dom1(1.0);
        let x = TaylorModel::var(d.clone(), 3, 0).unwrap();
        let withrem =
            TaylorModel::from_parts(x.poly().clone(), d, Interval::new(-0.25, 0.5).unwrap())
                .unwrap();
        let z = withrem.sub(&withrem).unwrap();
        assert!(z.poly().is_zero());
        assert!(z
            .remainder()
            .contains_interval(&Interval::new(-0.75, 0.75).unwrap()));
    }

    #[test]
    fn exact_square_has_tiny_remainder() {
        let d = dom1(1.0);
        let x = TaylorModel::var(d, 4, 0).unwrap();
        assert_eq!(x.remainder(), Interval::ZERO);
        let sq = x.mul(&x).unwrap();
        assert!(sq.remainder().width() <= 1e-13);
        let b = sq.bound().unwrap();
        assert!(b.contains_interval(&Interval::new(0.0, 1.0).unwrap()));
        assert!(b.lo() >= -1e-14 && b.hi() <= 1.0 + 1e-14);
    }

    #[test]
    fn exp_of_zero_model() {
        let d = dom1(1.0);
        let z = TaylorModel::zero(d, 5);
        let e = z.exp().unwrap();
        let b = e.bound().unwrap();
        assert!(b.contains(1.0));
        assert!(b.width() <= 8.0 * f64::EPSILON, "width {}", b.width());
    }

    /// Pointwise containment oracle: evaluate the expression in plain f64
    /// at sample points and require membership in the model's enclosure.
    fn assert_contains<F: Fn(&[f64]) -> f64>(
        tm: &TaylorModel,
        f: F,
        rng: &mut ChaCha8Rng,
        samples: usize,
    ) {
        let dom = tm.domain().clone();
        let v = dom.dim();
        for _ in 0..samples {
            let x: Vec<f64> = (0..v)
                .map(|i| {
                    let c = dom.box_().component(i);
                    rng.gen_range(c.lo()..=c.hi())
                })
                .collect();
            let enc = tm.eval_point(&x).unwrap();
            let truth = f(&x);
            // The oracle's own f64 evaluation carries rounding; a few ulps
            // of slack avoids false alarms without hiding real defects.
            let slack = 1e-12 * (1.0 + truth.abs());
            assert!(
                enc.lo() - slack <= truth && truth <= enc.hi() + slack,
                "point {x:?}: {truth} not in {enc}"
            );
        }
    }

    #[test]
    fn containment_square_of_composite() {
        // f = x^3 + 0.1 sin x enclosed at n=4, then squared.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = dom1(0.8);
        let x = TaylorModel::var(d, 4, 0).unwrap();
        let x3 = x.mul(&x).unwrap().mul(&x).unwrap();
        let f = x3.add(&x.sin().unwrap().scale(0.1).unwrap()).unwrap();
        let fsq = f.mul(&f).unwrap();
        assert_contains(
            &fsq,
            |p| {
                let t = p[0].powi(3) + 0.1 * p[0].sin();
                t * t
            },
            &mut rng,
            1000,
        );
    }

    #[test]
    fn sqrt_accelerator_style_expression() {
        // sqrt(1 - a^2 - b^2) over a, b in [-0.05, 0.05].
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = dom2(0.05);
        let a = TaylorModel::var(d.clone(), 5, 0).unwrap();
        let b = TaylorModel::var(d.clone(), 5, 1).unwrap();
        let one = TaylorModel::constant(d, 5, 1.0);
        let arg = one
            .sub(&a.mul(&a).unwrap())
            .unwrap()
            .sub(&b.mul(&b).unwrap())
            .unwrap();
        let s = arg.sqrt().unwrap();
        let range = s.bound().unwrap();
        // The genuine degree-6 truncation term allows ~8e-9 of excess
        // beyond the true range [sqrt(0.995), 1].
        assert!(range.lo() >= 0.99 && range.hi() <= 1.0 + 1e-8, "{range}");
        assert_contains(
            &s,
            |p| (1.0 - p[0] * p[0] - p[1] * p[1]).sqrt(),
            &mut rng,
            500,
        );
    }

    #[test]
    fn recip_residual_closed_form() {
        // recip(1 + x) on [-0.5, 0.5] at n=3: P = 1 - x + x^2 - x^3 in the
        // physical variable; the defect f(0.5) - P(0.5) = 2/3 - 0.625
        // = 0.041666... must lie in the remainder.
        let d = dom1(0.5);
        let x = TaylorModel::var(d, 3, 0).unwrap();
        let r = x.add_scalar(1.0).unwrap().recip().unwrap();
        for (k, e) in [1.0f64, -1.0, 1.0, -1.0].iter().enumerate() {
            let mut m = [0u8; crate::polyalg::MAX_VARS];
            m[0] = k as u8;
            // Scaled variable u = x / 0.5: coefficient is e 0.5^k.
            let got = r.poly().coeff(&m);
            let want = e * 0.5f64.powi(k as i32);
            assert!((got - want).abs() <= 1e-12, "k={k}: {got} vs {want}");
        }
        let residual = 1.0 / 1.5 - 0.625;
        assert!(
            r.remainder().contains(residual),
            "{} not in {}",
            residual,
            r.remainder()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_contains(&r, |p| 1.0 / (1.0 + p[0]), &mut rng, 500);
    }

    #[test]
    fn recip_rejects_pole_in_range() {
        let d = dom1(2.0);
        let x = TaylorModel::var(d, 3, 0).unwrap();
        assert!(matches!(
            x.add_scalar(1.0).unwrap().recip(),
            Err(TmError::RangeTouchesSingularity("recip"))
        ));
    }

    #[test]
    fn antiderive_constant_gives_coordinate() {
        let d = dom1(0.25);
        let one = TaylorModel::constant(d, 3, 1.0);
        let x = one.antiderive(0).unwrap();
        let mut m = [0u8; crate::polyalg::MAX_VARS];
        m[0] = 1;
        assert_eq!(x.poly().coeff(&m), 0.25);
        assert!(x.remainder().width() <= 1e-16);
    }

    #[test]
    fn antiderive_contains_primitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let d = dom1(0.7);
        let x = TaylorModel::var(d, 6, 0).unwrap();
        let c = x.cos().unwrap();
        let s = c.antiderive(0).unwrap();
        // Contains sin x - sin 0.
        assert_contains(&s, |p| p[0].sin(), &mut rng, 500);
    }

    #[test]
    fn antiderive_remainder_scales_with_width() {
        let h = 0.125f64;
        let d = dom1(h);
        let z = TaylorModel::from_parts(
            MultivarPoly::zero(algebra(1, 3)),
            d,
            Interval::symmetric(0.5),
        )
        .unwrap();
        let a = z.antiderive(0).unwrap();
        // |int_0^x r| <= r h, within the spec's factor-2 allowance.
        assert!(a.remainder().magnitude() <= 2.0 * 0.5 * h);
        assert!(a.remainder().magnitude() >= 0.5 * h * 0.99);
    }

    #[test]
    fn bound_is_poly_plus_remainder() {
        let d = dom1(1.0);
        let z = TaylorModel::from_parts(
            MultivarPoly::zero(algebra(1, 2)),
            d.clone(),
            Interval::symmetric(1.0),
        )
        .unwrap();
        assert_eq!(z.bound().unwrap(), Interval::symmetric(1.0));
        let x = TaylorModel::var(d, 2, 0).unwrap();
        let b = x.bound().unwrap();
        assert!(b.contains_interval(&Interval::symmetric(1.0)));
        assert!(b.width() <= 2.0 + 1e-14);
    }

    #[test]
    fn remainder_scaling_order() {
        // For exp((q+p)^2) the remainder shrinks at least like h^(n+1) as
        // the domain [-h,h]^2 shrinks.
        for n in [3usize, 5, 7] {
            let hs = [0.4, 0.2, 0.1, 0.05];
            let mut widths = Vec::new();
            for &h in &hs {
                let d = dom2(h);
                let q = TaylorModel::var(d.clone(), n, 0).unwrap();
                let p = TaylorModel::var(d.clone(), n, 1).unwrap();
                let s = q.add(&p).unwrap();
                let e = s.mul(&s).unwrap().exp().unwrap();
                widths.push(e.remainder().width().max(1e-300));
            }
            let logs: Vec<(f64, f64)> = hs
                .iter()
                .zip(&widths)
                .map(|(&h, &w)| (h.ln(), w.ln()))
                .collect();
            let mx = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
            let my = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
            let num: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let den: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
            let slope = num / den;
            assert!(
                slope >= n as f64 + 0.5,
                "order {n}: slope {slope} too shallow ({widths:?})"
            );
        }
    }

    #[test]
    fn restriction_is_sound() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = dom2(1.0);
        let q = TaylorModel::var(d.clone(), 5, 0).unwrap();
        let p = TaylorModel::var(d.clone(), 5, 1).unwrap();
        let f = q.mul(&p).unwrap().exp().unwrap();
        let small = TmDomain::centered(BoxDomain::cube(2, 0.3).unwrap()).unwrap();
        let g = f.restricted(&small).unwrap();
        assert_contains(&g, |x| (x[0] * x[1]).exp(), &mut rng, 500);
        // Off-center restriction.
        let shifted = TmDomain::centered(
            BoxDomain::new(vec![
                Interval::new(0.2, 0.8).unwrap(),
                Interval::new(-0.9, -0.1).unwrap(),
            ])
            .unwrap(),
        )
        .unwrap();
        let gs = f.restricted(&shifted).unwrap();
        assert_contains(&gs, |x| (x[0] * x[1]).exp(), &mut rng, 500);
    }

    #[test]
    fn containment_random_expressions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
        for _ in 0..20 {
            let d = dom2(rng.gen_range(0.1..0.6));
            let q = TaylorModel::var(d.clone(), 5, 0).unwrap();
            let p = TaylorModel::var(d.clone(), 5, 1).unwrap();
            let a = rng.gen_range(-1.0..1.0);
            let b = rng.gen_range(-1.0..1.0);
            let tm = q
                .scale(a)
                .unwrap()
                .add(&p.scale(b).unwrap())
                .unwrap()
                .sin()
                .unwrap()
                .add(&q.mul(&p).unwrap())
                .unwrap()
                .exp()
                .unwrap();
            assert_contains(
                &tm,
                |x| ((a * x[0] + b * x[1]).sin() + x[0] * x[1]).exp(),
                &mut rng.clone(),
                200,
            );
        }
    }

    #[test]
    fn lift_and_collapse_round_trip() {
        let d = dom2(0.5);
        let q = TaylorModel::var(d.clone(), 4, 0).unwrap();
        let f = q.exp().unwrap();
        let ext = d.extended(Interval::new(0.0, 1.0).unwrap(), 0.0).unwrap();
        let lifted = f.lifted(&ext).unwrap();
        assert_eq!(lifted.poly().num_vars(), 3);
        let back = lifted.collapsed_last(&d, 0.3).unwrap();
        for (a, b) in back.poly().coeffs().iter().zip(f.poly().coeffs()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn dump_has_table_sections() {
        let d = dom2(1.0);
        let q = TaylorModel::var(d.clone(), 3, 0).unwrap();
        let p = TaylorModel::var(d, 3, 1).unwrap();
        let f = q.mul(&p).unwrap();
        let s = f.dump("X");
        assert!(s.contains("RDA VARIABLE"));
        assert!(s.contains("REFERENCE POINT"));
        assert!(s.contains("BOUND INTERVAL"));
        assert!(s.contains("    R "));
    }
}
