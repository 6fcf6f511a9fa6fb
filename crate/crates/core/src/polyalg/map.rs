//! Vector-valued truncated polynomial maps: composition, Jacobians and
//! order-by-order functional inversion.

use super::{Algebra, MultivarPoly, PolyError};
use nalgebra::DMatrix;
use std::sync::Arc;

/// A map `R^v -> R^w`: one polynomial per output component, all sharing the
/// same algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMap {
    components: Vec<MultivarPoly>,
}

/// Result of truncated inversion; the condition estimate is the 1-norm
/// condition number of the linear part.
#[derive(Debug, Clone)]
pub struct InversionOutcome {
    pub map: PolyMap,
    pub linear_condition: f64,
}

impl PolyMap {
    pub fn new(components: Vec<MultivarPoly>) -> Result<Self, PolyError> {
        if components.is_empty() {
            return Err(PolyError::ArityMismatch(0, 1));
        }
        let v = components[0].num_vars();
        let n = components[0].order();
        for c in &components[1..] {
            if c.num_vars() != v {
                return Err(PolyError::ArityMismatch(c.num_vars(), v));
            }
            if c.order() != n {
                return Err(PolyError::OrderMismatch(c.order(), n));
            }
        }
        Ok(PolyMap { components })
    }

    /// The identity on `R^v` in the given algebra.
    pub fn identity(alg: Arc<Algebra>) -> Result<Self, PolyError> {
        let comps = (0..alg.num_vars)
            .map(|i| MultivarPoly::var(alg.clone(), i))
            .collect::<Result<Vec<_>, _>>()?;
        PolyMap::new(comps)
    }

    /// Linear map from a matrix (rows are output components).
    pub fn from_linear(alg: Arc<Algebra>, m: &DMatrix<f64>) -> Result<Self, PolyError> {
        if m.ncols() != alg.num_vars {
            return Err(PolyError::ArityMismatch(m.ncols(), alg.num_vars));
        }
        let mut comps = Vec::with_capacity(m.nrows());
        for r in 0..m.nrows() {
            let mut p = MultivarPoly::zero(alg.clone());
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    let var = MultivarPoly::var(alg.clone(), c)?;
                    p.axpy_traced(m[(r, c)], &var)?;
                }
            }
            comps.push(p);
        }
        PolyMap::new(comps)
    }

    pub fn components(&self) -> &[MultivarPoly] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &MultivarPoly {
        &self.components[i]
    }

    pub fn codomain_dim(&self) -> usize {
        self.components.len()
    }

    pub fn domain_dim(&self) -> usize {
        self.components[0].num_vars()
    }

    pub fn order(&self) -> usize {
        self.components[0].order()
    }

    pub fn algebra(&self) -> &Arc<Algebra> {
        self.components[0].algebra()
    }

    pub fn constant_part(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.constant_part()).collect()
    }

    /// Order-1 coefficients as a matrix.
    pub fn linear_part(&self) -> DMatrix<f64> {
        let v = self.domain_dim();
        let w = self.codomain_dim();
        let alg = self.algebra();
        DMatrix::from_fn(w, v, |r, c| self.components[r].coeff_idx(alg.var_rank(c)))
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    /// Truncated composition `outer(inner)`, exact through the algebra
    /// order; requires the inner map to vanish at the origin.
    pub fn compose(outer: &PolyMap, inner: &PolyMap) -> Result<PolyMap, PolyError> {
        if outer.domain_dim() != inner.codomain_dim() {
            return Err(PolyError::ArityMismatch(
                outer.domain_dim(),
                inner.codomain_dim(),
            ));
        }
        if inner.constant_part().iter().any(|&c| c != 0.0) {
            return Err(PolyError::NonzeroConstantPart);
        }
        let alg = inner.algebra().clone();
        let n = alg.order;
        let k = outer.domain_dim();
        let oalg = outer.algebra();

        // Cache powers of each inner component up to the exponent actually
        // used by the outer map.
        let mut max_exp = vec![0usize; k];
        for comp in &outer.components {
            for (idx, _) in comp.nonzero() {
                let m = oalg.mono(idx);
                for (i, me) in max_exp.iter_mut().enumerate() {
                    *me = (*me).max(m[i] as usize);
                }
            }
        }
        let mut powers: Vec<Vec<MultivarPoly>> = Vec::with_capacity(k);
        for (i, &me) in max_exp.iter().enumerate() {
            let mut ps = vec![MultivarPoly::constant(alg.clone(), 1.0)];
            for e in 1..=me.min(n) {
                let next = ps[e - 1].mul_trunc(&inner.components[i])?.poly;
                ps.push(next);
            }
            powers.push(ps);
        }

        let mut out = Vec::with_capacity(outer.codomain_dim());
        for comp in &outer.components {
            let mut acc = MultivarPoly::zero(alg.clone());
            for (idx, c) in comp.nonzero() {
                let m = oalg.mono(idx);
                // A term of outer degree d contributes inner-degree >= d;
                // beyond n it truncates to nothing because inner has no
                // constant part.
                let d: usize = m[..k].iter().map(|&e| e as usize).sum();
                if d > n {
                    continue;
                }
                let mut term = MultivarPoly::constant(alg.clone(), c);
                for i in 0..k {
                    let e = m[i] as usize;
                    if e > 0 {
                        term = term.mul_trunc(&powers[i][e])?.poly;
                    }
                }
                acc = acc.add(&term)?;
            }
            out.push(acc);
        }
        PolyMap::new(out)
    }

    /// Linear combination: `m * self` for a matrix `m` acting on the output
    /// components.
    pub fn matrix_apply(&self, m: &DMatrix<f64>) -> Result<PolyMap, PolyError> {
        if m.ncols() != self.codomain_dim() {
            return Err(PolyError::ArityMismatch(m.ncols(), self.codomain_dim()));
        }
        let alg = self.algebra().clone();
        let mut out = Vec::with_capacity(m.nrows());
        for r in 0..m.nrows() {
            let mut acc = MultivarPoly::zero(alg.clone());
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    acc.axpy_traced(m[(r, c)], &self.components[c])?;
                }
            }
            out.push(acc);
        }
        PolyMap::new(out)
    }

    /// Stack two maps over the same domain into one with concatenated
    /// outputs.
    pub fn stack(top: &PolyMap, bottom: &PolyMap) -> Result<PolyMap, PolyError> {
        if top.domain_dim() != bottom.domain_dim() {
            return Err(PolyError::ArityMismatch(top.domain_dim(), bottom.domain_dim()));
        }
        let mut comps = top.components.clone();
        comps.extend(bottom.components.iter().cloned());
        PolyMap::new(comps)
    }

    /// Jacobian as a matrix of polynomials (w rows, v columns).
    pub fn jacobian(&self) -> Result<Vec<Vec<MultivarPoly>>, PolyError> {
        let v = self.domain_dim();
        self.components
            .iter()
            .map(|c| (0..v).map(|j| c.derive(j)).collect())
            .collect()
    }

    /// Jacobian at the origin equals the linear part; at a general point it
    /// is evaluated from the polynomial Jacobian.
    pub fn jacobian_at(&self, x: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        let jac = self.jacobian()?;
        let w = self.codomain_dim();
        let v = self.domain_dim();
        Ok(DMatrix::from_fn(w, v, |r, c| jac[r][c].eval(x)))
    }

    /// Truncated functional inverse by order-by-order fixed-point
    /// iteration: with `M = L + N` (N the nonlinear part), the inverse
    /// satisfies `X = L^{-1} (I - N o X)` and gains one correct order per
    /// iteration.
    pub fn invert(&self) -> Result<InversionOutcome, PolyError> {
        let v = self.domain_dim();
        if self.codomain_dim() != v {
            return Err(PolyError::ArityMismatch(self.codomain_dim(), v));
        }
        if self.constant_part().iter().any(|&c| c != 0.0) {
            return Err(PolyError::NonzeroConstantPart);
        }
        let alg = self.algebra().clone();
        let n = alg.order;
        let l = self.linear_part();
        let l_norm = l.abs().column_sum().max();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or(PolyError::SingularLinearPart(f64::INFINITY))?;
        let linv_norm = linv.abs().column_sum().max();
        let cond = l_norm * linv_norm;
        if !cond.is_finite() {
            return Err(PolyError::SingularLinearPart(cond));
        }

        // Nonlinear part N = M - L.
        let lin_map = PolyMap::from_linear(alg.clone(), &l)?;
        let mut nonlin = Vec::with_capacity(v);
        for (c, lc) in self.components.iter().zip(lin_map.components.iter()) {
            nonlin.push(c.sub(lc)?);
        }
        let nonlin = PolyMap::new(nonlin)?;
        let identity = PolyMap::identity(alg.clone())?;

        let mut x = PolyMap::from_linear(alg.clone(), &linv)?;
        if !nonlin.components.iter().all(|c| c.is_zero()) {
            for _ in 0..n {
                let nx = PolyMap::compose(&nonlin, &x)?;
                let mut inner = Vec::with_capacity(v);
                for (idc, nxc) in identity.components.iter().zip(nx.components.iter()) {
                    inner.push(idc.sub(nxc)?);
                }
                x = PolyMap::new(inner)?.matrix_apply(&linv)?;
            }
        }
        Ok(InversionOutcome {
            map: x,
            linear_condition: cond,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{algebra, Mono, MAX_VARS};
    use approx::assert_relative_eq;

    fn mono(exps: &[u8]) -> Mono {
        let mut m = [0u8; MAX_VARS];
        m[..exps.len()].copy_from_slice(exps);
        m
    }

    fn rotation(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()])
    }

    /// The 2D cubic test map N o L built directly for oracle comparisons.
    fn cubic_map(order: usize) -> PolyMap {
        let alg = algebra(2, order);
        let l = PolyMap::from_linear(alg.clone(), &rotation(std::f64::consts::PI / 3.0)).unwrap();
        let q = MultivarPoly::var(alg.clone(), 0).unwrap();
        let p = MultivarPoly::var(alg.clone(), 1).unwrap();
        let s = q.add(&p).unwrap();
        let s3 = s.mul_trunc(&s).unwrap().poly.mul_trunc(&s).unwrap().poly;
        let mut n1 = q.clone();
        n1.axpy_traced(-3.0, &s3).unwrap();
        let mut n2 = p.clone();
        n2.axpy_traced(3.0, &s3).unwrap();
        let n = PolyMap::new(vec![n1, n2]).unwrap();
        PolyMap::compose(&n, &l).unwrap()
    }

    #[test]
    fn identity_composition() {
        let m = cubic_map(3);
        let id = PolyMap::identity(m.algebra().clone()).unwrap();
        assert_eq!(PolyMap::compose(&id, &m).unwrap(), m);
    }

    #[test]
    fn rotation_times_inverse_is_identity() {
        let alg = algebra(2, 3);
        let theta = std::f64::consts::PI / 3.0;
        let l = PolyMap::from_linear(alg.clone(), &rotation(theta)).unwrap();
        let linv = PolyMap::from_linear(alg.clone(), &rotation(-theta)).unwrap();
        let comp = PolyMap::compose(&l, &linv).unwrap();
        let id = PolyMap::identity(alg).unwrap();
        for (a, b) in comp.components().iter().zip(id.components()) {
            for (ca, cb) in a.coeffs().iter().zip(b.coeffs()) {
                assert_relative_eq!(ca, cb, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn cubic_composition_against_symbolic_expansion() {
        // Component 1 of N o L is (Lz)_1 - 3 ((c-s) q + (c+s) p)^3 with
        // c = cos(pi/3), s = sin(pi/3); expand the trinomial by hand.
        let m = cubic_map(3);
        let c = (std::f64::consts::PI / 3.0).cos();
        let s = (std::f64::consts::PI / 3.0).sin();
        let (a, b) = (c - s, c + s);
        let comp = m.component(0);
        assert_relative_eq!(comp.coeff(&mono(&[1, 0])), c, epsilon = 1e-15);
        assert_relative_eq!(comp.coeff(&mono(&[0, 1])), s, epsilon = 1e-15);
        assert_relative_eq!(comp.coeff(&mono(&[3, 0])), -3.0 * a * a * a, epsilon = 1e-13);
        assert_relative_eq!(
            comp.coeff(&mono(&[2, 1])),
            -9.0 * a * a * b,
            epsilon = 1e-13
        );
        assert_relative_eq!(
            comp.coeff(&mono(&[1, 2])),
            -9.0 * a * b * b,
            epsilon = 1e-13
        );
        assert_relative_eq!(comp.coeff(&mono(&[0, 3])), -3.0 * b * b * b, epsilon = 1e-13);
        // Component 2 carries the opposite cubic.
        assert_relative_eq!(
            m.component(1).coeff(&mono(&[3, 0])),
            3.0 * a * a * a,
            epsilon = 1e-13
        );
    }

    #[test]
    fn invert_identity_and_linear() {
        let alg = algebra(2, 4);
        let id = PolyMap::identity(alg.clone()).unwrap();
        let inv = id.invert().unwrap();
        assert_eq!(inv.map, id);
        assert!(inv.linear_condition >= 1.0);

        let theta = 0.7;
        let l = PolyMap::from_linear(alg.clone(), &rotation(theta)).unwrap();
        let li = l.invert().unwrap().map;
        let expect = rotation(-theta);
        let got = li.linear_part();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(got[(i, j)], expect[(i, j)], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn invert_shear() {
        // (q + p^3, p) inverts to (q - p^3, p).
        let alg = algebra(2, 5);
        let q = MultivarPoly::var(alg.clone(), 0).unwrap();
        let p = MultivarPoly::var(alg.clone(), 1).unwrap();
        let p3 = p.mul_trunc(&p).unwrap().poly.mul_trunc(&p).unwrap().poly;
        let m = PolyMap::new(vec![q.add(&p3).unwrap(), p.clone()]).unwrap();
        let inv = m.invert().unwrap().map;
        assert_relative_eq!(inv.component(0).coeff(&mono(&[0, 3])), -1.0, epsilon = 1e-14);
        // Composition check: m o inv = identity through the order.
        let comp = PolyMap::compose(&m, &inv).unwrap();
        let id = PolyMap::identity(alg).unwrap();
        for (a, b) in comp.components().iter().zip(id.components()) {
            for (ca, cb) in a.coeffs().iter().zip(b.coeffs()) {
                assert!((ca - cb).abs() <= 1e-12, "{ca} vs {cb}");
            }
        }
    }

    #[test]
    fn invert_cubic_composes_to_identity() {
        let m = cubic_map(7);
        let inv = m.invert().unwrap().map;
        let comp = PolyMap::compose(&m, &inv).unwrap();
        let id = PolyMap::identity(m.algebra().clone()).unwrap();
        for (a, b) in comp.components().iter().zip(id.components()) {
            for (ca, cb) in a.coeffs().iter().zip(b.coeffs()) {
                assert!((ca - cb).abs() <= 1e-12, "{ca} vs {cb}");
            }
        }
    }

    #[test]
    fn invert_is_involution() {
        let m = cubic_map(6);
        let twice = m.invert().unwrap().map.invert().unwrap().map;
        for (a, b) in twice.components().iter().zip(m.components()) {
            for (ca, cb) in a.coeffs().iter().zip(b.coeffs()) {
                assert!((ca - cb).abs() <= 1e-10, "{ca} vs {cb}");
            }
        }
    }

    #[test]
    fn singular_linear_part_is_rejected() {
        let alg = algebra(2, 3);
        let q = MultivarPoly::var(alg.clone(), 0).unwrap();
        let m = PolyMap::new(vec![q.clone(), q]).unwrap();
        assert!(matches!(
            m.invert(),
            Err(PolyError::SingularLinearPart(_))
        ));
    }

    #[test]
    fn composition_rejects_nonzero_constant() {
        let alg = algebra(2, 3);
        let id = PolyMap::identity(alg.clone()).unwrap();
        let mut shifted = id.clone();
        shifted = PolyMap::new(
            shifted
                .components()
                .iter()
                .map(|c| c.add(&MultivarPoly::constant(alg.clone(), 1.0)).unwrap())
                .collect(),
        )
        .unwrap();
        assert_eq!(
            PolyMap::compose(&id, &shifted).unwrap_err(),
            PolyError::NonzeroConstantPart
        );
    }

    #[test]
    fn stack_and_linear_part() {
        let alg = algebra(2, 3);
        let m = cubic_map(3);
        let id = PolyMap::identity(alg).unwrap();
        let stacked = PolyMap::stack(&m, &id).unwrap();
        assert_eq!(stacked.codomain_dim(), 4);
        let lp = stacked.linear_part();
        assert_eq!(lp.nrows(), 4);
        assert_relative_eq!(lp[(2, 0)], 1.0);
        assert_relative_eq!(lp[(3, 1)], 1.0);
    }
}
