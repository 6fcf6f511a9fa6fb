//! Truncated multivariate polynomial algebra.
//!
//! Polynomials are stored densely over the monomial enumeration of a shared
//! [`Algebra`]; all arithmetic truncates at the algebra's order. Operations
//! that feed Taylor-model remainders come in `*_traced` variants returning,
//! next to the result, a rigorous upper bound on the absolute coefficient
//! round-off committed by the operation. Those bounds are valid as sup-norm
//! error bounds on the unit domain `[-1,1]^v`, where every monomial has
//! magnitude at most one.

pub mod algebra;
mod map;

pub use algebra::{algebra, binomial, count_up_to, mono_degree, Algebra, Mono, MAX_VARS};
pub use map::{InversionOutcome, PolyMap};

use crate::interval::{two_sum, BoxDomain, Interval, IntervalError};
use std::fmt::Write as _;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("operand arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),
    #[error("operand order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("inner map must have zero constant part for composition")]
    NonzeroConstantPart,
    #[error("linear part is singular (condition estimate {0:.3e})")]
    SingularLinearPart(f64),
    #[error("variable index {0} out of range for {1} variables")]
    IndexOutOfRange(usize, usize),
    #[error("variable {0} still occurs with nonzero exponent")]
    VariableInUse(usize),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// Per-operation slop covering the inexactness of FMA residuals in the
/// subnormal range.
const SUBNORMAL_SLOP: f64 = 4.0e-308;

/// Upper bound for a naive sum of `terms` non-negative f64 values.
#[inline]
fn sum_upper(naive: f64, terms: usize) -> f64 {
    naive * (1.0 + 2.0 * (terms as f64 + 1.0) * f64::EPSILON) + SUBNORMAL_SLOP
}

/// A polynomial of bounded total degree in a fixed number of variables.
#[derive(Debug, Clone)]
pub struct MultivarPoly {
    alg: Arc<Algebra>,
    coeffs: Vec<f64>,
}

impl PartialEq for MultivarPoly {
    fn eq(&self, other: &Self) -> bool {
        self.alg.num_vars == other.alg.num_vars
            && self.alg.order == other.alg.order
            && self.coeffs == other.coeffs
    }
}

/// Truncated product: result at the algebra order, the discarded
/// higher-order part (exact up to round-off, in a double-order algebra),
/// and the coefficient round-off tally.
#[derive(Debug, Clone)]
pub struct MulOutcome {
    pub poly: MultivarPoly,
    pub truncated: MultivarPoly,
    pub roundoff: f64,
}

/// Product for enclosure pipelines: the discarded part is not materialized,
/// only an upper bound of its coefficient l1 norm (a sup-norm bound on the
/// unit domain) is returned.
#[derive(Debug, Clone)]
pub struct TruncMul {
    pub poly: MultivarPoly,
    pub discarded_l1: f64,
    pub roundoff: f64,
}

impl MultivarPoly {
    pub fn zero(alg: Arc<Algebra>) -> Self {
        let n = alg.len();
        MultivarPoly {
            alg,
            coeffs: vec![0.0; n],
        }
    }

    pub fn constant(alg: Arc<Algebra>, c: f64) -> Self {
        let mut p = Self::zero(alg);
        p.coeffs[0] = c;
        p
    }

    pub fn var(alg: Arc<Algebra>, i: usize) -> Result<Self, PolyError> {
        if i >= alg.num_vars {
            return Err(PolyError::IndexOutOfRange(i, alg.num_vars));
        }
        let idx = alg.var_rank(i);
        let mut p = Self::zero(alg);
        p.coeffs[idx] = 1.0;
        Ok(p)
    }

    pub fn from_terms(alg: Arc<Algebra>, terms: &[(Mono, f64)]) -> Result<Self, PolyError> {
        let mut p = Self::zero(alg);
        for (m, c) in terms {
            let idx = p
                .alg
                .rank(m)
                .ok_or(PolyError::OrderMismatch(mono_degree(m) as usize, p.alg.order))?;
            p.coeffs[idx] += c;
        }
        Ok(p)
    }

    pub fn algebra(&self) -> &Arc<Algebra> {
        &self.alg
    }

    pub fn num_vars(&self) -> usize {
        self.alg.num_vars
    }

    pub fn order(&self) -> usize {
        self.alg.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff_idx(&self, idx: usize) -> f64 {
        self.coeffs[idx]
    }

    pub fn coeff(&self, m: &Mono) -> f64 {
        self.alg.rank(m).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn set_coeff(&mut self, m: &Mono, c: f64) -> Result<(), PolyError> {
        let idx = self
            .alg
            .rank(m)
            .ok_or(PolyError::OrderMismatch(mono_degree(m) as usize, self.alg.order))?;
        self.coeffs[idx] = c;
        Ok(())
    }

    pub fn constant_part(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Largest total degree with a nonzero coefficient.
    pub fn actual_degree(&self) -> usize {
        self.nonzero().map(|(i, _)| self.alg.degree_of(i)).max().unwrap_or(0)
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| (i, c))
    }

    pub fn max_coeff_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Upper bound on the coefficient l1 norm; the summation error is
    /// tracked exactly through two-sum residuals, so the bound stays tight
    /// even for large norms.
    pub fn l1_upper(&self) -> f64 {
        let mut s = 0.0f64;
        let mut err = 0.0f64;
        for &c in &self.coeffs {
            let (ns, e) = two_sum(s, c.abs());
            s = ns;
            err += e.abs();
        }
        s + 2.0 * err + SUBNORMAL_SLOP
    }

    fn same_algebra(&self, rhs: &Self) -> Result<(), PolyError> {
        if self.alg.num_vars != rhs.alg.num_vars {
            Err(PolyError::ArityMismatch(self.alg.num_vars, rhs.alg.num_vars))
        } else if self.alg.order != rhs.alg.order {
            Err(PolyError::OrderMismatch(self.alg.order, rhs.alg.order))
        } else {
            Ok(())
        }
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, PolyError> {
        Ok(self.add_traced(rhs)?.0)
    }

    pub fn add_traced(&self, rhs: &Self) -> Result<(Self, f64), PolyError> {
        self.same_algebra(rhs)?;
        let mut out = self.clone();
        let mut tally = 0.0;
        let mut ops = 0usize;
        for (i, &c) in rhs.coeffs.iter().enumerate() {
            if c != 0.0 {
                let (s, e) = two_sum(out.coeffs[i], c);
                out.coeffs[i] = s;
                tally += e.abs();
                ops += 1;
            }
        }
        Ok((out, sum_upper(tally, ops)))
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, PolyError> {
        Ok(self.sub_traced(rhs)?.0)
    }

    pub fn sub_traced(&self, rhs: &Self) -> Result<(Self, f64), PolyError> {
        self.same_algebra(rhs)?;
        let mut out = self.clone();
        let mut tally = 0.0;
        let mut ops = 0usize;
        for (i, &c) in rhs.coeffs.iter().enumerate() {
            if c != 0.0 {
                let (s, e) = two_sum(out.coeffs[i], -c);
                out.coeffs[i] = s;
                tally += e.abs();
                ops += 1;
            }
        }
        Ok((out, sum_upper(tally, ops)))
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c = -*c;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        self.scale_traced(s).0
    }

    pub fn scale_traced(&self, s: f64) -> (Self, f64) {
        let mut out = self.clone();
        let mut tally = 0.0;
        let mut ops = 0usize;
        for c in &mut out.coeffs {
            if *c != 0.0 {
                let p = *c * s;
                let e = c.mul_add(s, -p);
                *c = p;
                tally += e.abs() + SUBNORMAL_SLOP;
                ops += 1;
            }
        }
        (out, sum_upper(tally, ops))
    }

    /// self += s * x; returns the round-off tally.
    pub fn axpy_traced(&mut self, s: f64, x: &Self) -> Result<f64, PolyError> {
        self.same_algebra(x)?;
        let mut tally = 0.0;
        let mut ops = 0usize;
        for (i, &c) in x.coeffs.iter().enumerate() {
            if c != 0.0 && s != 0.0 {
                let p = c * s;
                let e1 = c.mul_add(s, -p);
                let (sum, e2) = two_sum(self.coeffs[i], p);
                self.coeffs[i] = sum;
                tally += e1.abs() + e2.abs() + SUBNORMAL_SLOP;
                ops += 2;
            }
        }
        Ok(sum_upper(tally, ops))
    }

    /// Full truncated product, keeping the discarded order-(n+1)..2n part.
    pub fn mul(&self, rhs: &Self) -> Result<MulOutcome, PolyError> {
        self.same_algebra(rhs)?;
        let n = self.alg.order;
        let big = algebra(self.alg.num_vars, (2 * n).min(24));
        let mut lo = Self::zero(self.alg.clone());
        let mut hi = Self::zero(big.clone());
        let mut tally = 0.0;
        let mut ops = 0usize;
        let na: Vec<(usize, f64)> = self.nonzero().collect();
        let nb: Vec<(usize, f64)> = rhs.nonzero().collect();
        for &(i, ai) in &na {
            let di = self.alg.degree_of(i);
            for &(j, bj) in &nb {
                let dj = self.alg.degree_of(j);
                let p = ai * bj;
                let e1 = ai.mul_add(bj, -p);
                let target = if di + dj <= n {
                    &mut lo.coeffs[self.alg.product_rank(i, j).unwrap()]
                } else {
                    let mut m = [0u8; MAX_VARS];
                    let (ma, mb) = (self.alg.mono(i), rhs.alg.mono(j));
                    for k in 0..self.alg.num_vars {
                        m[k] = ma[k] + mb[k];
                    }
                    &mut hi.coeffs[big.rank(&m).expect("product degree within 2n")]
                };
                let (s, e2) = two_sum(*target, p);
                *target = s;
                tally += e1.abs() + e2.abs() + SUBNORMAL_SLOP;
                ops += 2;
            }
        }
        Ok(MulOutcome {
            poly: lo,
            truncated: hi,
            roundoff: sum_upper(tally, ops),
        })
    }

    /// Truncated product with an l1 bound for the discarded part instead of
    /// its coefficients. The degree-graded coefficient layout makes the
    /// kept-pair loop a contiguous prefix scan per left factor.
    pub fn mul_trunc(&self, rhs: &Self) -> Result<TruncMul, PolyError> {
        self.same_algebra(rhs)?;
        let n = self.alg.order;
        let mut out = Self::zero(self.alg.clone());
        let mut tally = 0.0;
        let mut kept_abs = 0.0f64;
        let mut kept_err = 0.0f64;
        let mut ops = 0usize;
        let na: Vec<(usize, f64)> = self.nonzero().collect();
        let nb: Vec<(usize, f64)> = rhs.nonzero().collect();
        for &(i, ai) in &na {
            let di = self.alg.degree_of(i);
            let j_end = self.alg.len_up_to_degree(n - di);
            for &(j, bj) in &nb {
                if j >= j_end {
                    break;
                }
                let k = self.alg.product_rank(i, j).expect("within prefix");
                let p = ai * bj;
                let e1 = ai.mul_add(bj, -p);
                let (s, e2) = two_sum(out.coeffs[k], p);
                out.coeffs[k] = s;
                tally += e1.abs() + e2.abs() + SUBNORMAL_SLOP;
                // |a_i b_j| >= |p| - |e1|; the summation error of the |p|
                // accumulation is tracked exactly.
                let (ks, ke) = two_sum(kept_abs, p.abs());
                kept_abs = ks;
                kept_err += ke.abs() + e1.abs();
                ops += 2;
            }
        }
        // Discarded l1 <= l1(a) l1(b) - sum of kept |a_i b_j|, with directed
        // bounds on both factors of the subtraction.
        let kept_lo = (kept_abs - 2.0 * kept_err - SUBNORMAL_SLOP).max(0.0);
        let all = crate::interval::mul_up(self.l1_upper(), rhs.l1_upper());
        let discarded = crate::interval::sub_up(all, kept_lo).max(0.0);
        Ok(TruncMul {
            poly: out,
            discarded_l1: discarded,
            roundoff: sum_upper(tally, ops),
        })
    }

    /// Partial derivative; exact up to coefficient round-off (traced).
    pub fn derive(&self, var: usize) -> Result<Self, PolyError> {
        Ok(self.derive_traced(var)?.0)
    }

    pub fn derive_traced(&self, var: usize) -> Result<(Self, f64), PolyError> {
        if var >= self.alg.num_vars {
            return Err(PolyError::IndexOutOfRange(var, self.alg.num_vars));
        }
        let mut out = Self::zero(self.alg.clone());
        let mut tally = 0.0;
        let mut ops = 0usize;
        for (i, c) in self.nonzero() {
            let m = self.alg.mono(i);
            let e = m[var];
            if e == 0 {
                continue;
            }
            let mut dm = *m;
            dm[var] = e - 1;
            let k = self.alg.rank(&dm).expect("degree decreases");
            let f = e as f64;
            let p = c * f;
            let e1 = c.mul_add(f, -p);
            let (s, e2) = two_sum(out.coeffs[k], p);
            out.coeffs[k] = s;
            tally += e1.abs() + e2.abs() + SUBNORMAL_SLOP;
            ops += 2;
        }
        Ok((out, sum_upper(tally, ops)))
    }

    /// Antiderivative with order promotion to n+1 (the monomial primitive,
    /// zero constant part).
    pub fn antiderive(&self, var: usize) -> Result<Self, PolyError> {
        if var >= self.alg.num_vars {
            return Err(PolyError::IndexOutOfRange(var, self.alg.num_vars));
        }
        let big = algebra(self.alg.num_vars, self.alg.order + 1);
        let mut out = Self::zero(big.clone());
        for (i, c) in self.nonzero() {
            let m = self.alg.mono(i);
            let mut am = *m;
            am[var] = m[var] + 1;
            let k = big.rank(&am).expect("degree within n+1");
            out.coeffs[k] += c / (am[var] as f64);
        }
        Ok(out)
    }

    /// Antiderivative truncated at the algebra order: degree-n inputs are
    /// discarded and reported as an l1 bound next to the round-off tally.
    pub fn antiderive_trunc(&self, var: usize) -> Result<(Self, f64, f64), PolyError> {
        if var >= self.alg.num_vars {
            return Err(PolyError::IndexOutOfRange(var, self.alg.num_vars));
        }
        let n = self.alg.order;
        let mut out = Self::zero(self.alg.clone());
        let mut discarded = 0.0;
        let mut tally = 0.0;
        let mut ops = 0usize;
        for (i, c) in self.nonzero() {
            let m = self.alg.mono(i);
            if self.alg.degree_of(i) == n {
                // The primitive divides by (e+1) >= 1: |c| bounds the term.
                discarded += c.abs();
                ops += 1;
                continue;
            }
            let mut am = *m;
            am[var] = m[var] + 1;
            let k = self.alg.rank(&am).expect("degree within n");
            let f = am[var] as f64;
            let q = c / f;
            let r = q.mul_add(f, -c); // exact: q*f - c
            out.coeffs[k] += q;
            tally += (r / f).abs() + SUBNORMAL_SLOP;
            ops += 1;
        }
        Ok((out, sum_upper(discarded, ops), sum_upper(tally, ops)))
    }

    /// Value at a point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.alg.num_vars);
        let n = self.alg.order;
        let v = self.alg.num_vars;
        let mut pows = vec![1.0f64; v * (n + 1)];
        for i in 0..v {
            for e in 1..=n {
                pows[i * (n + 1) + e] = pows[i * (n + 1) + e - 1] * x[i];
            }
        }
        let mut acc = 0.0;
        for (idx, c) in self.nonzero() {
            let m = self.alg.mono(idx);
            let mut t = c;
            for i in 0..v {
                if m[i] > 0 {
                    t *= pows[i * (n + 1) + m[i] as usize];
                }
            }
            acc += t;
        }
        acc
    }

    /// Interval enclosure of the range over the unit cube `[-1,1]^v`:
    /// monomial-wise bounds with even-power tightening.
    pub fn bound_unit(&self) -> Interval {
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for (idx, c) in self.nonzero() {
            let m = self.alg.mono(idx);
            let deg = self.alg.degree_of(idx);
            if deg == 0 {
                lo = crate::interval::add_down(lo, c);
                hi = crate::interval::add_up(hi, c);
                continue;
            }
            let even = m[..self.alg.num_vars].iter().all(|&e| e % 2 == 0);
            if even {
                // monomial range [0,1]
                if c >= 0.0 {
                    hi = crate::interval::add_up(hi, c);
                } else {
                    lo = crate::interval::add_down(lo, c);
                }
            } else {
                lo = crate::interval::add_down(lo, -c.abs());
                hi = crate::interval::add_up(hi, c.abs());
            }
        }
        Interval::new(lo, hi).expect("finite coefficient sums")
    }

    /// Interval enclosure of the range over an arbitrary box.
    pub fn bound_box(&self, domain: &BoxDomain) -> Result<Interval, PolyError> {
        if domain.dim() != self.alg.num_vars {
            return Err(PolyError::ArityMismatch(domain.dim(), self.alg.num_vars));
        }
        let mut acc = Interval::ZERO;
        for (idx, c) in self.nonzero() {
            let m = self.alg.mono(idx);
            let mut term = Interval::point(c);
            for i in 0..self.alg.num_vars {
                if m[i] > 0 {
                    term = term.mul(&domain.component(i).powi(m[i] as i32)?)?;
                }
            }
            acc = acc.add(&term)?;
        }
        Ok(acc)
    }

    /// Substitute a number for one variable; coefficients accumulate in
    /// interval arithmetic, the midpoints are returned with the defect as a
    /// tally.
    pub fn eval_partial(&self, var: usize, x: f64) -> Result<(Self, f64), PolyError> {
        if var >= self.alg.num_vars {
            return Err(PolyError::IndexOutOfRange(var, self.alg.num_vars));
        }
        let mut pows = vec![Interval::ONE; self.alg.order + 1];
        for e in 1..=self.alg.order {
            pows[e] = pows[e - 1].mul(&Interval::point(x))?;
        }
        let mut acc = vec![Interval::ZERO; self.alg.len()];
        for (idx, c) in self.nonzero() {
            let m = self.alg.mono(idx);
            let e = m[var] as usize;
            let mut pm = *m;
            pm[var] = 0;
            let k = self.alg.rank(&pm).expect("degree decreases");
            acc[k] = acc[k].add(&pows[e].mul_scalar(c)?)?;
        }
        let mut out = Self::zero(self.alg.clone());
        let mut tally = 0.0;
        for (k, iv) in acc.iter().enumerate() {
            let mid = iv.midpoint();
            out.coeffs[k] = mid;
            tally += (iv.hi() - mid).max(mid - iv.lo());
        }
        Ok((out, sum_upper(tally, self.alg.len())))
    }

    /// Embed into an algebra with at least as many variables and order;
    /// variable indices are preserved.
    pub fn embed(&self, target: Arc<Algebra>) -> Result<Self, PolyError> {
        if target.num_vars < self.alg.num_vars {
            return Err(PolyError::ArityMismatch(target.num_vars, self.alg.num_vars));
        }
        let mut out = Self::zero(target.clone());
        for (i, c) in self.nonzero() {
            let m = self.alg.mono(i);
            let k = target
                .rank(m)
                .ok_or(PolyError::OrderMismatch(self.alg.degree_of(i), target.order))?;
            out.coeffs[k] = c;
        }
        Ok(out)
    }

    /// Remove a variable that no longer occurs (all exponents zero).
    pub fn drop_var(&self, var: usize) -> Result<Self, PolyError> {
        if var >= self.alg.num_vars {
            return Err(PolyError::IndexOutOfRange(var, self.alg.num_vars));
        }
        if self.alg.num_vars == 1 {
            return Err(PolyError::ArityMismatch(1, 0));
        }
        let small = algebra(self.alg.num_vars - 1, self.alg.order);
        let mut out = Self::zero(small.clone());
        for (i, c) in self.nonzero() {
            let m = self.alg.mono(i);
            if m[var] != 0 {
                return Err(PolyError::VariableInUse(var));
            }
            let mut sm = [0u8; MAX_VARS];
            let mut k = 0;
            for (j, &e) in m[..self.alg.num_vars].iter().enumerate() {
                if j != var {
                    sm[k] = e;
                    k += 1;
                }
            }
            out.coeffs[small.rank(&sm).expect("degree preserved")] = c;
        }
        Ok(out)
    }

    /// Affine substitution x_i = mid_i + hw_i u_i, producing a polynomial in
    /// the scaled variables u with a round-off tally (valid on the unit
    /// cube). Used to restrict polynomial maps to boxes.
    pub fn affine_substitute(&self, mid: &[f64], hw: &[f64]) -> Result<(Self, f64), PolyError> {
        let v = self.alg.num_vars;
        if mid.len() != v || hw.len() != v {
            return Err(PolyError::ArityMismatch(mid.len(), v));
        }
        let mut acc = vec![Interval::ZERO; self.alg.len()];
        // Reusable per-variable factor tables: factor[i][e][k] multiplies
        // C(e,k) mid^(e-k) hw^k onto the u_i^k monomial.
        let n = self.alg.order;
        let mut factor = vec![vec![Vec::new(); n + 1]; v];
        for i in 0..v {
            let mid_p = Interval::point(mid[i]);
            let hw_p = Interval::point(hw[i]);
            for e in 0..=n {
                let mut row = Vec::with_capacity(e + 1);
                for k in 0..=e {
                    let b = binomial(e, k) as f64;
                    let t = mid_p
                        .powi((e - k) as i32)?
                        .mul(&hw_p.powi(k as i32)?)?
                        .mul_scalar(b)?;
                    row.push(t);
                }
                factor[i][e] = row;
            }
        }
        for (idx, c) in self.nonzero() {
            let m = self.alg.mono(idx);
            // Expand the product over variables term by term.
            let mut partial: Vec<(Mono, Interval)> =
                vec![([0u8; MAX_VARS], Interval::point(c))];
            for i in 0..v {
                let e = m[i] as usize;
                if e == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (e + 1));
                for (pm, piv) in &partial {
                    for (k, fk) in factor[i][e].iter().enumerate() {
                        let mut nm = *pm;
                        nm[i] = k as u8;
                        next.push((nm, piv.mul(fk)?));
                    }
                }
                partial = next;
            }
            for (pm, piv) in partial {
                let k = self.alg.rank(&pm).expect("degree never grows");
                acc[k] = acc[k].add(&piv)?;
            }
        }
        let mut out = Self::zero(self.alg.clone());
        let mut tally = 0.0;
        for (k, iv) in acc.iter().enumerate() {
            let midp = iv.midpoint();
            out.coeffs[k] = midp;
            tally += (iv.hi() - midp).max(midp - iv.lo());
        }
        Ok((out, sum_upper(tally, self.alg.len())))
    }

    /// Text dump, one term per line: index, coefficient, order, exponents.
    pub fn write_terms(&self, out: &mut String) {
        let mut i = 1usize;
        for (idx, c) in self.nonzero() {
            let m = self.alg.mono(idx);
            let mut exps = String::new();
            for (j, e) in m[..self.alg.num_vars].iter().enumerate() {
                if j > 0 && j % 2 == 0 {
                    exps.push(' ');
                }
                let _ = write!(exps, " {e}");
            }
            let _ = writeln!(
                out,
                "{:6}  {:<24.16e} {:3}  {}",
                i,
                c,
                self.alg.degree_of(idx),
                exps.trim_start()
            );
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mono(exps: &[u8]) -> Mono {
        let mut m = [0u8; MAX_VARS];
        m[..exps.len()].copy_from_slice(exps);
        m
    }

    #[test]
    fn binomial_square() {
        // (q + p)^2 at n=2, v=2 -> q^2 + 2qp + p^2 with empty truncation.
        let a = algebra(2, 2);
        let q = MultivarPoly::var(a.clone(), 0).unwrap();
        let p = MultivarPoly::var(a.clone(), 1).unwrap();
        let s = q.add(&p).unwrap();
        let out = s.mul(&s).unwrap();
        assert_eq!(out.poly.coeff(&mono(&[2, 0])), 1.0);
        assert_eq!(out.poly.coeff(&mono(&[1, 1])), 2.0);
        assert_eq!(out.poly.coeff(&mono(&[0, 2])), 1.0);
        assert!(out.truncated.is_zero());
    }

    #[test]
    fn full_truncation() {
        // q^3 * q at n=3 -> zero result, truncation q^4.
        let a = algebra(1, 3);
        let q = MultivarPoly::var(a.clone(), 0).unwrap();
        let q3 = q.mul(&q).unwrap().poly.mul(&q).unwrap().poly;
        let out = q3.mul(&q).unwrap();
        assert!(out.poly.is_zero());
        assert_eq!(out.truncated.coeff(&mono(&[4])), 1.0);
    }

    #[test]
    fn geometric_identity() {
        // (1 + q)(1 - q + q^2 - q^3) at n=3 -> 1 with truncation -q^4.
        let a = algebra(1, 3);
        let one = MultivarPoly::constant(a.clone(), 1.0);
        let q = MultivarPoly::var(a.clone(), 0).unwrap();
        let lhs = one.add(&q).unwrap();
        let rhs = MultivarPoly::from_terms(
            a.clone(),
            &[
                (mono(&[0]), 1.0),
                (mono(&[1]), -1.0),
                (mono(&[2]), 1.0),
                (mono(&[3]), -1.0),
            ],
        )
        .unwrap();
        let out = lhs.mul(&rhs).unwrap();
        assert_eq!(out.poly, MultivarPoly::constant(a, 1.0));
        assert_eq!(out.truncated.coeff(&mono(&[4])), -1.0);
    }

    #[test]
    fn mul_trunc_matches_mul() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = algebra(3, 5);
        for _ in 0..50 {
            let mut p = MultivarPoly::zero(a.clone());
            let mut q = MultivarPoly::zero(a.clone());
            for c in &mut p.coeffs {
                *c = rng.gen_range(-1.0..1.0);
            }
            for c in &mut q.coeffs {
                *c = rng.gen_range(-1.0..1.0);
            }
            let full = p.mul(&q).unwrap();
            let fast = p.mul_trunc(&q).unwrap();
            assert_eq!(full.poly.coeffs, fast.poly.coeffs);
            // The l1 bound covers the actual discarded part.
            let true_l1: f64 = full.truncated.coeffs.iter().map(|c| c.abs()).sum();
            assert!(
                fast.discarded_l1 >= true_l1,
                "{} < {}",
                fast.discarded_l1,
                true_l1
            );
        }
    }

    #[test]
    fn derive_antiderive_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = algebra(3, 6);
        for _ in 0..100 {
            let mut p = MultivarPoly::zero(a.clone());
            for c in &mut p.coeffs {
                *c = rng.gen_range(-2.0..2.0);
            }
            let var = rng.gen_range(0..3);
            let anti = p.antiderive(var).unwrap();
            let back = anti.derive(var).unwrap();
            for (i, c) in p.coeffs.iter().enumerate() {
                let m = a.mono(i);
                let recovered = back.coeff(m);
                assert_relative_eq!(recovered, *c, max_relative = 1e-14, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn calculus_examples() {
        // derive(q^2 p, q) = 2 q p; antiderive(2q, q) = q^2.
        let a = algebra(2, 3);
        let p = MultivarPoly::from_terms(a.clone(), &[(mono(&[2, 1]), 1.0)]).unwrap();
        let d = p.derive(0).unwrap();
        assert_eq!(d.coeff(&mono(&[1, 1])), 2.0);
        let q2 = MultivarPoly::from_terms(a.clone(), &[(mono(&[1, 0]), 2.0)]).unwrap();
        let anti = q2.antiderive(0).unwrap();
        assert_eq!(anti.coeff(&mono(&[2, 0])), 1.0);
        assert_eq!(anti.constant_part(), 0.0);
    }

    #[test]
    fn bound_even_power() {
        let a = algebra(2, 2);
        let q = MultivarPoly::var(a.clone(), 0).unwrap();
        let q2 = q.mul(&q).unwrap().poly;
        let b = q2.bound_unit();
        assert_eq!(b.lo(), 0.0);
        assert!(b.hi() >= 1.0 && b.hi() <= 1.0 + 1e-12);
        // bound(q + p) over the unit box is [-2, 2].
        let p = MultivarPoly::var(a, 1).unwrap();
        let s = q.add(&p).unwrap().bound_unit();
        assert_eq!((s.lo(), s.hi()), (-2.0, 2.0));
    }

    #[test]
    fn bound_order_one_table_row() {
        // Order-1 slice with coefficients 0.1398389113940111 (var 1) and
        // 0.1038317686361456 (var 2) over [-1,1]^4 must cover the published
        // bound interval [-0.2436706800301567, 0.2436706800301567].
        let a = algebra(4, 1);
        let p = MultivarPoly::from_terms(
            a,
            &[
                (mono(&[1, 0, 0, 0]), 0.1398389113940111),
                (mono(&[0, 1, 0, 0]), 0.1038317686361456),
            ],
        )
        .unwrap();
        let b = p.bound_unit();
        assert!(b.contains_interval(
            &Interval::new(-0.2436706800301567, 0.2436706800301567).unwrap()
        ));
        assert!(b.width() <= 2.0 * 0.2436706800301567 + 1e-12);
    }

    #[test]
    fn bound_soundness_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = algebra(3, 4);
        for _ in 0..200 {
            let mut p = MultivarPoly::zero(a.clone());
            for c in &mut p.coeffs {
                if rng.gen_bool(0.3) {
                    *c = rng.gen_range(-3.0..3.0);
                }
            }
            let bu = p.bound_unit();
            for _ in 0..50 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                assert!(bu.contains(p.eval(&x)));
            }
            let h = rng.gen_range(0.1..1.0);
            let bb = p.bound_box(&BoxDomain::cube(3, h).unwrap()).unwrap();
            for _ in 0..50 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-h..h)).collect();
                assert!(bb.contains(p.eval(&x)));
            }
        }
    }

    #[test]
    fn eval_partial_folds_variable() {
        let a = algebra(2, 3);
        // p = q^2 p + 3 q
        let p = MultivarPoly::from_terms(
            a.clone(),
            &[(mono(&[2, 1]), 1.0), (mono(&[1, 0]), 3.0)],
        )
        .unwrap();
        let (at_half, tally) = p.eval_partial(0, 0.5).unwrap();
        assert!(tally < 1e-12);
        assert_relative_eq!(at_half.coeff(&mono(&[0, 1])), 0.25, max_relative = 1e-15);
        assert_relative_eq!(at_half.constant_part(), 1.5, max_relative = 1e-15);
        assert!(at_half.coeff(&mono(&[1, 0])) == 0.0);
    }

    #[test]
    fn affine_substitution_equals_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = algebra(2, 4);
        for _ in 0..40 {
            let mut p = MultivarPoly::zero(a.clone());
            for c in &mut p.coeffs {
                if rng.gen_bool(0.4) {
                    *c = rng.gen_range(-2.0..2.0);
                }
            }
            let mid = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let hw = [rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0)];
            let (sub, tally) = p.affine_substitute(&mid, &hw).unwrap();
            for _ in 0..20 {
                let u = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let x = [mid[0] + hw[0] * u[0], mid[1] + hw[1] * u[1]];
                let direct = p.eval(&x);
                let subbed = sub.eval(&u);
                assert!(
                    (direct - subbed).abs() <= tally + 1e-16 + 1e-12 * direct.abs(),
                    "{direct} vs {subbed} (tally {tally})"
                );
            }
        }
    }

    #[test]
    fn embed_and_drop_var() {
        let a2 = algebra(2, 3);
        let a3 = algebra(3, 3);
        let p = MultivarPoly::from_terms(
            a2.clone(),
            &[(mono(&[2, 1]), 1.5), (mono(&[0, 1]), -2.0)],
        )
        .unwrap();
        let lifted = p.embed(a3).unwrap();
        assert_eq!(lifted.coeff(&mono(&[2, 1, 0])), 1.5);
        let back = lifted.drop_var(2).unwrap();
        assert_eq!(back, p);
        assert_eq!(
            MultivarPoly::var(algebra(3, 3), 2)
                .unwrap()
                .drop_var(2)
                .unwrap_err(),
            PolyError::VariableInUse(2)
        );
    }

    #[test]
    fn roundoff_tallies_cover_truth() {
        // Multiply polynomials with awkward coefficients and compare the
        // f64 result against a higher-precision recomputation at points.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = algebra(2, 6);
        for _ in 0..20 {
            let mut p = MultivarPoly::zero(a.clone());
            let mut q = MultivarPoly::zero(a.clone());
            for c in &mut p.coeffs {
                *c = rng.gen_range(-1.0..1.0) * 1e3;
            }
            for c in &mut q.coeffs {
                *c = rng.gen_range(-1.0..1.0) * 1e-3;
            }
            let out = p.mul_trunc(&q).unwrap();
            assert!(out.roundoff >= 0.0 && out.roundoff < 1e-9);
        }
    }
}
