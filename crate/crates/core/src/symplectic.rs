//! Symplectic map representations and generator types.
//!
//! Phase space uses the stacked ordering (q_1..q_n, p_1..p_n), so the
//! symplectic form is J = [[0, I], [-I, 0]]. A generator type alpha is the
//! linear conformal symplectic map built from a symmetric matrix S and the
//! linear part L of the target map; its domain of definition equals the
//! invertibility domain of C.M + D.I, which downstream certification
//! establishes over boxes.

use crate::interval::{BoxDomain, Interval, IntervalError};
use crate::polyalg::{algebra, InversionOutcome, MultivarPoly, PolyError, PolyMap};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SymplecticError {
    #[error("linear part L is singular")]
    SingularL,
    #[error("fitted conformal constant is numerically zero (residual {residual:.3e})")]
    MuNearZero { residual: f64 },
    #[error("map is not symplectic: coefficient residual {0:.3e}")]
    NotSymplectic(f64),
    #[error("gradient Jacobian symmetry defect {0:.3e} exceeds tolerance")]
    SymmetryDefect(f64),
    #[error("NC - A is singular")]
    SingularNCminusA,
    #[error("operation requires dimension {expected}, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// The symplectic form J_{2n} in stacked coordinates.
pub fn j_matrix(two_n: usize) -> DMatrix<f64> {
    assert!(two_n % 2 == 0);
    let n = two_n / 2;
    DMatrix::from_fn(two_n, two_n, |r, c| {
        if r < n && c == r + n {
            1.0
        } else if r >= n && c + n == r {
            -1.0
        } else {
            0.0
        }
    })
}

/// The split form diag(J_{2n}, -J_{2n}) on doubled phase space.
pub fn j_tilde(four_n: usize) -> DMatrix<f64> {
    assert!(four_n % 4 == 0);
    let two_n = four_n / 2;
    let j = j_matrix(two_n);
    let mut out = DMatrix::zeros(four_n, four_n);
    out.view_mut((0, 0), (two_n, two_n)).copy_from(&j);
    out.view_mut((two_n, two_n), (two_n, two_n)).copy_from(&(-j));
    out
}

/// Max-norm residual of the float symplectic condition M^T J M = J.
pub fn matrix_symplectic_residual(m: &DMatrix<f64>) -> f64 {
    let j = j_matrix(m.nrows());
    (m.transpose() * &j * m - j).abs().max()
}

/// Coefficient residual of Jac(map)^T J Jac(map) - J through the given
/// total degree. Exact flows and exactly constructed polynomial maps give
/// round-off-level residuals.
pub fn symplecticity_residual(
    map: &PolyMap,
    through_degree: usize,
) -> Result<f64, SymplecticError> {
    let v = map.domain_dim();
    if map.codomain_dim() != v || v % 2 != 0 {
        return Err(SymplecticError::WrongDimension {
            expected: map.domain_dim(),
            got: map.codomain_dim(),
        });
    }
    let n = v / 2;
    let jac = map.jacobian()?;
    let alg = map.algebra().clone();
    let mut residual = 0.0f64;
    for i in 0..v {
        for j in 0..v {
            // (Jac^T J Jac)_{ij} = sum_k Jac_{ki} (J Jac)_{kj}, and row k of
            // J Jac is +Jac_{k+n} for k < n, -Jac_{k-n} otherwise.
            let mut acc = MultivarPoly::zero(alg.clone());
            for k in 0..v {
                let (src, sign) = if k < n { (k + n, 1.0) } else { (k - n, -1.0) };
                let prod = jac[k][i].mul_trunc(&jac[src][j])?.poly;
                acc.axpy_traced(sign, &prod)?;
            }
            let jij = if i < n && j == i + n {
                1.0
            } else if i >= n && j + n == i {
                -1.0
            } else {
                0.0
            };
            if jij != 0.0 {
                let one = MultivarPoly::constant(alg.clone(), 1.0);
                acc.axpy_traced(-jij, &one)?;
            }
            for (idx, c) in acc.nonzero() {
                if alg.degree_of(idx) <= through_degree {
                    residual = residual.max(c.abs());
                }
            }
        }
    }
    Ok(residual)
}

/// A polynomial map validated to be symplectic around its fixed point.
#[derive(Debug, Clone)]
pub struct SymplecticMapRep {
    map: PolyMap,
    phase_pairs: usize,
    residual: f64,
}

impl SymplecticMapRep {
    pub const RESIDUAL_TOL: f64 = 1e-10;

    pub fn new(map: PolyMap) -> Result<Self, SymplecticError> {
        let v = map.domain_dim();
        if map.codomain_dim() != v || v % 2 != 0 {
            return Err(SymplecticError::WrongDimension {
                expected: v,
                got: map.codomain_dim(),
            });
        }
        if map.constant_part().iter().any(|&c| c != 0.0) {
            return Err(SymplecticError::NotSymplectic(f64::INFINITY));
        }
        let through = map.order().saturating_sub(1);
        let residual = symplecticity_residual(&map, through)?;
        if residual > Self::RESIDUAL_TOL {
            return Err(SymplecticError::NotSymplectic(residual));
        }
        Ok(SymplecticMapRep {
            phase_pairs: v / 2,
            map,
            residual,
        })
    }

    pub fn map(&self) -> &PolyMap {
        &self.map
    }

    pub fn phase_pairs(&self) -> usize {
        self.phase_pairs
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn linear_part(&self) -> DMatrix<f64> {
        self.map.linear_part()
    }

    /// The stacked map (M; I): phase space to doubled phase space.
    pub fn stacked(&self) -> Result<PolyMap, SymplecticError> {
        let id = PolyMap::identity(self.map.algebra().clone())?;
        Ok(PolyMap::stack(&self.map, &id)?)
    }
}

/// A symmetric matrix labeling a generator class; only the upper triangle
/// is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrixS {
    dim: usize,
    upper: Vec<f64>,
}

impl SymmetricMatrixS {
    pub fn zero(dim: usize) -> Self {
        SymmetricMatrixS {
            dim,
            upper: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut s = Self::zero(dim);
        for i in 0..dim {
            *s.entry_mut(i, i) = 1.0;
        }
        s
    }

    /// Row-major upper triangle.
    pub fn from_upper(dim: usize, upper: Vec<f64>) -> Result<Self, SymplecticError> {
        if upper.len() != dim * (dim + 1) / 2 {
            return Err(SymplecticError::WrongDimension {
                expected: dim * (dim + 1) / 2,
                got: upper.len(),
            });
        }
        Ok(SymmetricMatrixS { dim, upper })
    }

    /// Whitespace-separated upper triangle values.
    pub fn parse(dim: usize, text: &str) -> Result<Self, SymplecticError> {
        let vals: Vec<f64> = text
            .split_whitespace()
            .filter_map(|t| t.parse().ok())
            .collect();
        Self::from_upper(dim, vals)
    }

    fn tri_index(&self, r: usize, c: usize) -> usize {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        let offset: usize = (0..r).map(|k| self.dim - k).sum();
        offset + (c - r)
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.upper[self.tri_index(r, c)]
    }

    pub fn entry_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        let i = self.tri_index(r, c);
        &mut self.upper[i]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| self.entry(r, c))
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymmetricMatrixS {
            dim: self.dim,
            upper: self.upper.iter().map(|&x| c * x).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Provenance {
    FromS { s: SymmetricMatrixS },
    Custom,
}

/// Blocks of a linear conformal symplectic generator map.
#[derive(Debug, Clone)]
pub struct GeneratorType {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub provenance: Provenance,
}

impl GeneratorType {
    pub fn phase_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn jacobian(&self) -> DMatrix<f64> {
        let m = self.phase_dim();
        let mut out = DMatrix::zeros(2 * m, 2 * m);
        out.view_mut((0, 0), (m, m)).copy_from(&self.a);
        out.view_mut((0, m), (m, m)).copy_from(&self.b);
        out.view_mut((m, 0), (m, m)).copy_from(&self.c);
        out.view_mut((m, m), (m, m)).copy_from(&self.d);
        out
    }

    pub fn scaled(&self, s: f64) -> GeneratorType {
        GeneratorType {
            a: s * &self.a,
            b: s * &self.b,
            c: s * &self.c,
            d: s * &self.d,
            provenance: Provenance::Custom,
        }
    }

    /// Blocks as CSV, one labeled section per block.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (name, m) in [
            ("A", &self.a),
            ("B", &self.b),
            ("C", &self.c),
            ("D", &self.d),
        ] {
            s.push_str(name);
            s.push('\n');
            for r in 0..m.nrows() {
                let row: Vec<String> =
                    (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
                s.push_str(&row.join(","));
                s.push('\n');
            }
        }
        s
    }
}

/// Generator blocks from a symmetric matrix and the map's linear part:
/// A = -J L^{-1}, B = J, C = (I + JS) L^{-1} / 2, D = (I - JS) / 2.
pub fn build_alpha(
    s: &SymmetricMatrixS,
    l: &DMatrix<f64>,
) -> Result<GeneratorType, SymplecticError> {
    let dim = l.nrows();
    if s.dim() != dim || l.ncols() != dim || dim % 2 != 0 {
        return Err(SymplecticError::WrongDimension {
            expected: dim,
            got: s.dim(),
        });
    }
    let linv = l.clone().try_inverse().ok_or(SymplecticError::SingularL)?;
    let j = j_matrix(dim);
    let smat = s.to_matrix();
    let eye = DMatrix::identity(dim, dim);
    let a = -(&j) * &linv;
    let b = j.clone();
    let c = 0.5 * (&eye + &j * &smat) * &linv;
    let d = 0.5 * (&eye - &j * &smat);
    Ok(GeneratorType {
        a,
        b,
        c,
        d,
        provenance: Provenance::FromS { s: s.clone() },
    })
}

/// Fit the conformal constant mu over the nonzero pattern of J-tilde and
/// report the worst entry residual of Jac^T J Jac - mu J-tilde.
pub fn conformal_check(g: &GeneratorType) -> Result<(f64, f64), SymplecticError> {
    let jac = g.jacobian();
    let four_n = jac.nrows();
    let j4 = j_matrix(four_n);
    let jt = j_tilde(four_n);
    let lhs = jac.transpose() * &j4 * &jac;
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..four_n {
        for c in 0..four_n {
            if jt[(r, c)] != 0.0 {
                num += lhs[(r, c)] * jt[(r, c)];
                den += jt[(r, c)] * jt[(r, c)];
            }
        }
    }
    let mu = num / den;
    let residual = (&lhs - mu * &jt).abs().max();
    if mu.abs() < 1e-12 {
        return Err(SymplecticError::MuNearZero { residual });
    }
    Ok((mu, residual))
}

/// The invertibility target C.M + D.I whose domain of invertibility is the
/// generator's domain of definition.
pub fn gradient_target(map: &PolyMap, g: &GeneratorType) -> Result<PolyMap, SymplecticError> {
    let cm = map.matrix_apply(&g.c)?;
    let id = PolyMap::identity(map.algebra().clone())?;
    let di = id.matrix_apply(&g.d)?;
    let mut comps = Vec::with_capacity(cm.codomain_dim());
    for (a, b) in cm.components().iter().zip(di.components()) {
        comps.push(a.add(b)?);
    }
    Ok(PolyMap::new(comps)?)
}

/// The numerator map A.M + B.I of the gradient relation.
pub fn gradient_numerator(map: &PolyMap, g: &GeneratorType) -> Result<PolyMap, SymplecticError> {
    let am = map.matrix_apply(&g.a)?;
    let id = PolyMap::identity(map.algebra().clone())?;
    let bi = id.matrix_apply(&g.b)?;
    let mut comps = Vec::with_capacity(am.codomain_dim());
    for (a, b) in am.components().iter().zip(bi.components()) {
        comps.push(a.add(b)?);
    }
    Ok(PolyMap::new(comps)?)
}

/// A gradient map: symmetric-Jacobian polynomial map with its measured
/// asymmetry.
#[derive(Debug, Clone)]
pub struct GradientMapRep {
    map: PolyMap,
    symmetry_defect: f64,
}

impl GradientMapRep {
    pub fn from_parts(map: PolyMap, symmetry_defect: f64) -> Self {
        GradientMapRep {
            map,
            symmetry_defect,
        }
    }

    pub fn map(&self) -> &PolyMap {
        &self.map
    }

    pub fn symmetry_defect(&self) -> f64 {
        self.symmetry_defect
    }

    pub fn jacobian_at_origin(&self) -> DMatrix<f64> {
        self.map.linear_part()
    }
}

/// Maximum coefficient asymmetry of the Jacobian through a total degree.
pub fn jacobian_symmetry_defect(
    map: &PolyMap,
    through_degree: usize,
) -> Result<f64, SymplecticError> {
    let jac = map.jacobian()?;
    let v = map.domain_dim();
    let alg = map.algebra().clone();
    let mut defect = 0.0f64;
    for i in 0..v {
        for j in (i + 1)..v {
            let diff = jac[i][j].sub(&jac[j][i])?;
            for (idx, c) in diff.nonzero() {
                if alg.degree_of(idx) <= through_degree {
                    defect = defect.max(c.abs());
                }
            }
        }
    }
    Ok(defect)
}

pub const SYMMETRY_TOL: f64 = 1e-8;

/// The gradient map G = (A.M + B.I) o (C.M + D.I)^{-1}. A symmetry defect
/// beyond tolerance signals a non-symplectic input map.
pub fn gradient_map(map: &PolyMap, g: &GeneratorType) -> Result<GradientMapRep, SymplecticError> {
    let target = gradient_target(map, g)?;
    let InversionOutcome { map: inv, .. } = target.invert()?;
    let num = gradient_numerator(map, g)?;
    let grad = PolyMap::compose(&num, &inv)?;
    let defect = jacobian_symmetry_defect(&grad, grad.order().saturating_sub(1))?;
    if defect > SYMMETRY_TOL {
        return Err(SymplecticError::SymmetryDefect(defect));
    }
    Ok(GradientMapRep {
        map: grad,
        symmetry_defect: defect,
    })
}

/// Potential with gradient G and F(0) = 0, by coordinate-path
/// antiderivation: F = sum_i int_0^{x_i} G_i(x_1..x_{i-1}, t, 0, ...) dt.
pub fn potential_from_gradient(grad: &GradientMapRep) -> Result<MultivarPoly, SymplecticError> {
    if grad.symmetry_defect > SYMMETRY_TOL {
        return Err(SymplecticError::SymmetryDefect(grad.symmetry_defect));
    }
    let map = &grad.map;
    let v = map.domain_dim();
    let alg = map.algebra().clone();
    let big = algebra(v, alg.order + 1);
    let mut f = MultivarPoly::zero(big.clone());
    for i in 0..v {
        // Keep only terms free of the variables after i.
        let gi = map.component(i);
        let mut projected = MultivarPoly::zero(alg.clone());
        for (idx, c) in gi.nonzero() {
            let m = alg.mono(idx);
            if m[(i + 1)..v].iter().all(|&e| e == 0) {
                let mm = *m;
                let prev = projected.coeff(&mm);
                projected.set_coeff(&mm, prev + c)?;
            }
        }
        let prim = projected.antiderive(i)?;
        f = f.add(&prim)?;
    }
    Ok(f)
}

/// Converse construction: the Jacobian M = (NC - A)^{-1} (B - ND) of the
/// map generated by a potential with Hessian N.
pub fn map_from_generator(
    n: &DMatrix<f64>,
    g: &GeneratorType,
) -> Result<DMatrix<f64>, SymplecticError> {
    let nc_a = n * &g.c - &g.a;
    let inv = nc_a.try_inverse().ok_or(SymplecticError::SingularNCminusA)?;
    Ok(inv * (&g.b - n * &g.d))
}

/// Named example maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleMap {
    Cubic2d,
    Poly4d,
}

/// Rotation by theta in every (q_i, p_i) plane, in stacked coordinates.
pub fn plane_rotation(pairs: usize, theta: f64) -> DMatrix<f64> {
    let n = pairs;
    let (c, s) = (theta.cos(), theta.sin());
    DMatrix::from_fn(2 * n, 2 * n, |r, col| {
        if r == col {
            c
        } else if r < n && col == r + n {
            s
        } else if r >= n && col + n == r {
            -s
        } else {
            0.0
        }
    })
}

pub fn example_map(which: ExampleMap, order: usize) -> Result<SymplecticMapRep, SymplecticError> {
    match which {
        ExampleMap::Cubic2d => {
            assert!(order >= 3);
            let alg = algebra(2, order);
            let l = PolyMap::from_linear(
                alg.clone(),
                &plane_rotation(1, std::f64::consts::PI / 3.0),
            )?;
            let q = MultivarPoly::var(alg.clone(), 0)?;
            let p = MultivarPoly::var(alg.clone(), 1)?;
            let s = q.add(&p)?;
            let s3 = s.mul_trunc(&s)?.poly.mul_trunc(&s)?.poly;
            let mut n1 = q;
            n1.axpy_traced(-3.0, &s3)?;
            let mut n2 = p;
            n2.axpy_traced(3.0, &s3)?;
            let nmap = PolyMap::new(vec![n1, n2])?;
            let m = PolyMap::compose(&nmap, &l)?;
            SymplecticMapRep::new(m)
        }
        ExampleMap::Poly4d => {
            assert!(order >= 4);
            let alg = algebra(4, order);
            // Kick potential f(q1, q2) = 1.5 q1 q2 + q1^2 + 2 (q1+q2)^3
            //                            + 1.45 (1.1 q1 - 0.5 q2)^4.
            let q1 = MultivarPoly::var(alg.clone(), 0)?;
            let q2 = MultivarPoly::var(alg.clone(), 1)?;
            let p1 = MultivarPoly::var(alg.clone(), 2)?;
            let p2 = MultivarPoly::var(alg.clone(), 3)?;
            let mut f = MultivarPoly::zero(alg.clone());
            f.axpy_traced(1.5, &q1.mul_trunc(&q2)?.poly)?;
            f.axpy_traced(1.0, &q1.mul_trunc(&q1)?.poly)?;
            let s = q1.add(&q2)?;
            let s3 = s.mul_trunc(&s)?.poly.mul_trunc(&s)?.poly;
            f.axpy_traced(2.0, &s3)?;
            let mut t = q1.scale(1.1);
            t.axpy_traced(-0.5, &q2)?;
            let t2 = t.mul_trunc(&t)?.poly;
            let t4 = t2.mul_trunc(&t2)?.poly;
            f.axpy_traced(1.45, &t4)?;
            // Kick: positions fixed, momenta shifted by the gradient.
            let k = PolyMap::new(vec![
                q1.clone(),
                q2.clone(),
                p1.add(&f.derive(0)?)?,
                p2.add(&f.derive(1)?)?,
            ])?;
            let r = PolyMap::from_linear(alg, &plane_rotation(2, std::f64::consts::PI / 3.0))?;
            let m = PolyMap::compose(&k, &r)?;
            SymplecticMapRep::new(m)
        }
    }
}

/// Which reading of the closed-form 2D determinant to evaluate: the
/// symbolically derived one has the second squared bracket at the second
/// row point (q2, p2); the alternative repeats (q1, p1) in both terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetReading {
    RowCorrected,
    RepeatedFirstRow,
}

/// Closed-form first-derivative determinant of the 2D cubic example over a
/// 4-dimensional row-point box (q1, p1, q2, p2), evaluated in interval
/// arithmetic. Cross-checks the Taylor-model certificate.
///
/// Derived independently:
///   det = 1 + K B(q1,p1) T1 + K B(q2,p2) T2,
///   B(q,p) = [(1-sqrt3) q + (1+sqrt3) p]^2,  K = 9 / (8 (1+sqrt3)^2),
///   T1 = (2+sqrt3)(s12+1) + s22,  T2 = (2+sqrt3)(s12-1) + (7+4 sqrt3) s11.
pub fn analytic_det_2d(
    s: &SymmetricMatrixS,
    domain: &BoxDomain,
    reading: DetReading,
) -> Result<Interval, SymplecticError> {
    if s.dim() != 2 || domain.dim() != 4 {
        return Err(SymplecticError::WrongDimension {
            expected: 4,
            got: domain.dim(),
        });
    }
    let r3 = Interval::point(3.0).sqrt()?;
    let one = Interval::ONE;
    let (s11, s12, s22) = (
        Interval::point(s.entry(0, 0)),
        Interval::point(s.entry(0, 1)),
        Interval::point(s.entry(1, 1)),
    );
    let two_plus = r3.add_scalar(2.0)?;
    let t1 = two_plus.mul(&s12.add(&one)?)?.add(&s22)?;
    let t2 = two_plus
        .mul(&s12.sub(&one)?)?
        .add(&r3.mul_scalar(4.0)?.add_scalar(7.0)?.mul(&s11)?)?;
    let k = Interval::point(9.0).div(&one.add(&r3)?.powi(2)?.mul_scalar(8.0)?)?;

    let bracket = |q: &Interval, p: &Interval| -> Result<Interval, SymplecticError> {
        let lin = one.sub(&r3)?.mul(q)?.add(&one.add(&r3)?.mul(p)?)?;
        Ok(lin.powi(2)?)
    };
    let b1 = bracket(domain.component(0), domain.component(1))?;
    let b2 = match reading {
        DetReading::RowCorrected => bracket(domain.component(2), domain.component(3))?,
        DetReading::RepeatedFirstRow => b1,
    };
    let det = one
        .add(&k.mul(&b1)?.mul(&t1)?)?
        .add(&k.mul(&b2)?.mul(&t2)?)?;
    Ok(det)
}

/// Sufficient conditions on S for the 2D determinant to be positive on all
/// of phase space: both bracket coefficients non-negative.
pub fn global_domain_conditions(s: &SymmetricMatrixS) -> Result<bool, SymplecticError> {
    if s.dim() != 2 {
        return Err(SymplecticError::WrongDimension {
            expected: 2,
            got: s.dim(),
        });
    }
    let r3 = 3.0f64.sqrt();
    let t1 = (2.0 + r3) * (s.entry(0, 1) + 1.0) + s.entry(1, 1);
    let t2 = (2.0 + r3) * (s.entry(0, 1) - 1.0) + (7.0 + 4.0 * r3) * s.entry(0, 0);
    Ok(t1 >= 0.0 && t2 >= 0.0)
}
