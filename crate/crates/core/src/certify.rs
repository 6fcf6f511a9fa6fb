//! Rigorous invertibility certification over boxes.
//!
//! A map is certified injective on a box when its first-derivative row
//! matrix, with each row evaluated at its own independent point of the
//! box, has a determinant enclosure excluding zero. The method is
//! one-sided: a zero-straddling enclosure yields `Unknown`, never a
//! disproof.
//!
//! The determinant is expanded by cofactors over "block polynomials":
//! sparse polynomials whose variables are partitioned per row, so each
//! row's point stays symbolic as long as the term count allows; oversized
//! minors collapse to interval bounds. Range bounding combines naive
//! monomial enclosures with a per-row quadratic-form bound obtained from a
//! float eigendecomposition whose defects are re-verified in interval
//! arithmetic, which keeps perfect-square structure (ubiquitous in these
//! determinants) exact.

use crate::interval::{BoxDomain, Interval, IntervalError};
use crate::polyalg::{Algebra, PolyError, PolyMap};
use crate::taylormodel::{TaylorModel, TmDomain, TmError, TmVector};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::rc::Rc;
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("jacobian rows must form a square system ({rows} rows, {cols} cols)")]
    NotSquare { rows: usize, cols: usize },
    #[error("flow-derived target carries no variational enclosures")]
    MissingVariationalData,
    #[error("certification box has a zero-width direction")]
    DegenerateBox,
    #[error(transparent)]
    Tm(#[from] TmError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

pub const MAX_COFACTOR_ROWS: usize = 6;

/// Per-row gradient enclosures: row `i` holds Taylor models of
/// `df_i/dx_1 .. df_i/dx_v` over the box, understood as functions of that
/// row's own evaluation point.
#[derive(Debug, Clone)]
pub struct JacobianRows {
    rows: Vec<TmVector>,
}

impl JacobianRows {
    pub fn new(rows: Vec<TmVector>) -> Result<Self, CertifyError> {
        let v = rows.len();
        if v == 0 || rows.iter().any(|r| r.dim() != v) {
            return Err(CertifyError::NotSquare {
                rows: v,
                cols: rows.first().map_or(0, |r| r.dim()),
            });
        }
        Ok(JacobianRows { rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &TmVector {
        &self.rows[i]
    }

    pub fn domain(&self) -> &Arc<TmDomain> {
        self.rows[0].domain()
    }

    /// Exact differentiation of a polynomial map, enclosed over the box.
    /// Derivatives are taken in scaled coordinates and divided by the
    /// half-widths, with all round-off swept into the entry remainders.
    pub fn from_poly_map(map: &PolyMap, box_: &BoxDomain) -> Result<Self, CertifyError> {
        let v = map.domain_dim();
        if map.codomain_dim() != v {
            return Err(CertifyError::NotSquare {
                rows: map.codomain_dim(),
                cols: v,
            });
        }
        let dom = TmDomain::centered(box_.clone())?;
        if (0..v).any(|i| dom.half_width(i) == 0.0) {
            return Err(CertifyError::DegenerateBox);
        }
        let n = map.order() as f64;
        let mids: Vec<f64> = (0..v).map(|k| dom.mid(k)).collect();
        let hws: Vec<f64> = (0..v).map(|k| dom.half_width(k)).collect();
        let mut rows = Vec::with_capacity(v);
        for i in 0..v {
            let phys = map.component(i);
            let (scaled, sub_tally) = phys.affine_substitute(&mids, &hws)?;
            let mut entries = Vec::with_capacity(v);
            for (j, &hw) in hws.iter().enumerate() {
                let (dpoly, dtally) = scaled.derive_traced(j)?;
                let (entry_poly, stally) = dpoly.scale_traced(1.0 / hw);
                // A coefficient perturbation of the scaled polynomial
                // differentiates to at most order * perturbation.
                let rem = crate::interval::mul_up(n * sub_tally + dtally, 1.0 / hw) + stally;
                entries.push(TaylorModel::from_parts(
                    entry_poly,
                    dom.clone(),
                    Interval::symmetric(rem),
                )?);
            }
            rows.push(TmVector::new(entries)?);
        }
        Ok(JacobianRows { rows })
    }

    /// Rows of C Y + D for variational enclosures Y (one TmVector per
    /// state component, holding its derivatives with respect to every
    /// initial condition).
    pub fn from_variational(
        c: &DMatrix<f64>,
        d: &DMatrix<f64>,
        variational: &[TmVector],
    ) -> Result<Self, CertifyError> {
        let v = variational.len();
        if v == 0 {
            return Err(CertifyError::MissingVariationalData);
        }
        let dom = variational[0].domain().clone();
        let order = variational[0].component(0).order();
        let mut rows = Vec::with_capacity(v);
        for i in 0..v {
            let mut entries = Vec::with_capacity(v);
            for j in 0..v {
                let mut acc = TaylorModel::constant(dom.clone(), order, 0.0);
                for (k, vk) in variational.iter().enumerate() {
                    if c[(i, k)] != 0.0 {
                        acc = acc.add(&vk.component(j).scale(c[(i, k)])?)?;
                    }
                }
                acc = acc.add_scalar(d[(i, j)])?;
                entries.push(acc);
            }
            rows.push(TmVector::new(entries)?);
        }
        Ok(JacobianRows { rows })
    }

    /// Right-multiply every row by a fixed float matrix; the row's point
    /// structure is preserved since only columns mix.
    fn postmultiplied(&self, p: &DMatrix<f64>) -> Result<JacobianRows, CertifyError> {
        let v = self.dim();
        let mut rows = Vec::with_capacity(v);
        for row in &self.rows {
            let dom = row.domain().clone();
            let order = row.component(0).order();
            let mut entries = Vec::with_capacity(v);
            for j in 0..v {
                let mut acc = TaylorModel::constant(dom.clone(), order, 0.0);
                for k in 0..v {
                    if p[(k, j)] != 0.0 {
                        acc = acc.add(&row.component(k).scale(p[(k, j)])?)?;
                    }
                }
                entries.push(acc);
            }
            rows.push(TmVector::new(entries)?);
        }
        Ok(JacobianRows { rows })
    }

    /// Midpoint Jacobian: entry values at the center of the box.
    fn midpoint_matrix(&self) -> DMatrix<f64> {
        let v = self.dim();
        DMatrix::from_fn(v, v, |i, j| {
            let tm = self.rows[i].component(j);
            tm.poly().constant_part() + tm.remainder().midpoint()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertStatus {
    Certified,
    Unknown,
}

/// A box together with the machine-checked invertibility verdict and the
/// determinant-enclosure diagnostics behind it.
#[derive(Debug, Clone)]
pub struct DomainCertificate {
    pub target: String,
    pub box_: BoxDomain,
    pub status: CertStatus,
    pub det_enclosure: Option<Interval>,
    pub order: usize,
    pub wall_time: Duration,
    pub note: Option<String>,
}

impl DomainCertificate {
    pub fn is_certified(&self) -> bool {
        self.status == CertStatus::Certified
    }

    /// Structured text, full precision endpoints.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "target: {}", self.target);
        let _ = writeln!(
            s,
            "status: {}",
            match self.status {
                CertStatus::Certified => "Certified",
                CertStatus::Unknown => "Unknown",
            }
        );
        for (i, c) in self.box_.components().iter().enumerate() {
            let _ = writeln!(s, "box[{}]: {} {}", i, c.lo(), c.hi());
        }
        match &self.det_enclosure {
            Some(d) => {
                let _ = writeln!(s, "det: {} {}", d.lo(), d.hi());
            }
            None => {
                let _ = writeln!(s, "det: none");
            }
        }
        let _ = writeln!(s, "order: {}", self.order);
        let _ = writeln!(s, "wall_ms: {}", self.wall_time.as_millis());
        if let Some(n) = &self.note {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }

    /// Parse the text emitted by [`Self::to_text`]; used to re-validate
    /// emitted certificates.
    pub fn parse(text: &str) -> Option<DomainCertificate> {
        let mut target = String::new();
        let mut status = CertStatus::Unknown;
        let mut comps = Vec::new();
        let mut det = None;
        let mut order = 0usize;
        let mut note = None;
        for line in text.lines() {
            let (key, val) = line.split_once(':')?;
            let val = val.trim();
            if key == "target" {
                target = val.to_string();
            } else if key == "status" {
                status = if val == "Certified" {
                    CertStatus::Certified
                } else {
                    CertStatus::Unknown
                };
            } else if key.starts_with("box[") {
                let (lo, hi) = val.split_once(' ')?;
                comps.push(Interval::parse_outward(lo, hi).ok()?);
            } else if key == "det" && val != "none" {
                let (lo, hi) = val.split_once(' ')?;
                det = Some(Interval::new(lo.parse().ok()?, hi.parse().ok()?).ok()?);
            } else if key == "order" {
                order = val.parse().ok()?;
            } else if key == "note" {
                note = Some(val.to_string());
            }
        }
        Some(DomainCertificate {
            target,
            box_: BoxDomain::new(comps).ok()?,
            status,
            det_enclosure: det,
            order,
            wall_time: Duration::ZERO,
            note,
        })
    }
}

// ---------------------------------------------------------------------
// Block polynomials: variables partitioned into per-row copies.
// ---------------------------------------------------------------------

type BlockKey = [u32; MAX_COFACTOR_ROWS];

/// Sparse interval-coefficient polynomial over per-row monomial blocks;
/// slot `r` of a key is the graded-lex rank of the monomial in row r's
/// variables.
#[derive(Debug, Clone)]
struct BlockPoly {
    alg: Arc<Algebra>,
    terms: BTreeMap<BlockKey, Interval>,
}

impl BlockPoly {
    fn zero(alg: Arc<Algebra>) -> Self {
        BlockPoly {
            alg,
            terms: BTreeMap::new(),
        }
    }

    fn add_term(&mut self, key: BlockKey, c: Interval) {
        if c == Interval::ZERO {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let merged = e.get().add(&c).expect("finite coefficients");
                if merged == Interval::ZERO {
                    e.remove();
                } else {
                    *e.get_mut() = merged;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    /// A Taylor-model entry as a block polynomial in the given row slot;
    /// the remainder joins the constant coefficient.
    fn from_entry(tm: &TaylorModel, row: usize) -> Self {
        let alg = tm.poly().algebra().clone();
        let mut bp = Self::zero(alg);
        for (idx, c) in tm.poly().nonzero() {
            let mut key = [0u32; MAX_COFACTOR_ROWS];
            key[row] = idx as u32;
            bp.add_term(key, Interval::point(c));
        }
        bp.add_term([0; MAX_COFACTOR_ROWS], tm.remainder());
        bp
    }

    fn add_assign(&mut self, rhs: &BlockPoly) {
        for (k, c) in &rhs.terms {
            self.add_term(*k, *c);
        }
    }

    fn scale(&self, c: &Interval) -> Result<BlockPoly, CertifyError> {
        let mut out = Self::zero(self.alg.clone());
        for (k, v) in &self.terms {
            out.add_term(*k, v.mul(c)?);
        }
        Ok(out)
    }

    /// Product of block polynomials over disjoint row slots.
    fn mul(&self, rhs: &BlockPoly) -> Result<BlockPoly, CertifyError> {
        let mut out = Self::zero(self.alg.clone());
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                let mut k = [0u32; MAX_COFACTOR_ROWS];
                for s in 0..MAX_COFACTOR_ROWS {
                    debug_assert!(ka[s] == 0 || kb[s] == 0, "row slots must be disjoint");
                    k[s] = ka[s] + kb[s];
                }
                out.add_term(k, ca.mul(cb)?);
            }
        }
        Ok(out)
    }

    fn len(&self) -> usize {
        self.terms.len()
    }

    /// Hybrid range enclosure over the unit cubes of every row block.
    fn bound(&self) -> Result<Interval, CertifyError> {
        let v = self.alg.num_vars;
        let mut acc = Interval::ZERO;
        let mut quads: BTreeMap<usize, QuadForm> = BTreeMap::new();
        for (key, coeff) in &self.terms {
            let active: Vec<usize> = (0..MAX_COFACTOR_ROWS).filter(|&s| key[s] != 0).collect();
            if active.is_empty() {
                acc = acc.add(coeff)?;
                continue;
            }
            if active.len() == 1 {
                let row = active[0];
                let idx = key[row] as usize;
                let deg = self.alg.degree_of(idx);
                if deg <= 2 {
                    let q = quads.entry(row).or_insert_with(|| QuadForm::new(v));
                    let m = self.alg.mono(idx);
                    if deg == 1 {
                        let var = (0..v).find(|&i| m[i] == 1).expect("degree-1 monomial");
                        q.lin[var] = q.lin[var].add(coeff)?;
                    } else if let Some(i) = (0..v).find(|&i| m[i] == 2) {
                        q.quad[i][i] = q.quad[i][i].add(coeff)?;
                    } else {
                        let mut it = (0..v).filter(|&i| m[i] == 1);
                        let (i, j) = (it.next().unwrap(), it.next().unwrap());
                        let half = coeff.mul_scalar(0.5)?;
                        q.quad[i][j] = q.quad[i][j].add(&half)?;
                        q.quad[j][i] = q.quad[j][i].add(&half)?;
                    }
                    continue;
                }
            }
            // Generic term: product of per-row monomial ranges.
            let mut all_even = true;
            for &row in &active {
                let m = self.alg.mono(key[row] as usize);
                if m[..v].iter().any(|&e| e % 2 == 1) {
                    all_even = false;
                    break;
                }
            }
            let range = if all_even {
                Interval::new(0.0, 1.0).unwrap()
            } else {
                Interval::new(-1.0, 1.0).unwrap()
            };
            acc = acc.add(&coeff.mul(&range)?)?;
        }
        for (_, q) in quads {
            acc = acc.add(&q.bound()?)?;
        }
        Ok(acc)
    }
}

/// Interval-coefficient quadratic form over the unit cube.
struct QuadForm {
    lin: Vec<Interval>,
    quad: Vec<Vec<Interval>>,
}

impl QuadForm {
    fn new(v: usize) -> Self {
        QuadForm {
            lin: vec![Interval::ZERO; v],
            quad: vec![vec![Interval::ZERO; v]; v],
        }
    }

    /// Plain monomial bound of the accumulated terms.
    fn naive_bound(&self) -> Result<Interval, CertifyError> {
        let v = self.lin.len();
        let mut acc = Interval::ZERO;
        let pm = Interval::new(-1.0, 1.0).unwrap();
        let unit = Interval::new(0.0, 1.0).unwrap();
        for i in 0..v {
            acc = acc.add(&self.lin[i].mul(&pm)?)?;
            acc = acc.add(&self.quad[i][i].mul(&unit)?)?;
            for j in (i + 1)..v {
                acc = acc.add(&self.quad[i][j].mul_scalar(2.0)?.mul(&pm)?)?;
            }
        }
        Ok(acc)
    }

    /// Eigen-based bound: a float eigendecomposition of the midpoint
    /// matrix, with the decomposition defect re-verified in interval
    /// arithmetic, turns the form into uncoupled 1-d quadratics whose
    /// ranges are exact. Perfect squares bound exactly this way.
    fn eigen_bound(&self) -> Result<Interval, CertifyError> {
        let v = self.lin.len();
        let qm = DMatrix::from_fn(v, v, |i, j| self.quad[i][j].midpoint());
        let lm = nalgebra::DVector::from_fn(v, |i, _| self.lin[i].midpoint());
        let eig = qm.symmetric_eigen();
        let vm = &eig.eigenvectors;
        let lam = &eig.eigenvalues;
        let mut acc = Interval::ZERO;
        let pm = Interval::new(-1.0, 1.0).unwrap();
        let unit = Interval::new(0.0, 1.0).unwrap();
        // Defect Q - V diag(lam) V^T, interval-verified.
        for i in 0..v {
            for j in 0..v {
                let mut recon = Interval::ZERO;
                for k in 0..v {
                    let t = Interval::point(vm[(i, k)])
                        .mul(&Interval::point(lam[k]))?
                        .mul(&Interval::point(vm[(j, k)]))?;
                    recon = recon.add(&t)?;
                }
                let d = self.quad[i][j].sub(&recon)?;
                let range = if i == j { &unit } else { &pm };
                acc = acc.add(&d.mul(range)?)?;
            }
        }
        // Linear defect l - V (V^T l).
        let g = vm.transpose() * &lm;
        for i in 0..v {
            let mut recon = Interval::ZERO;
            for k in 0..v {
                recon = recon.add(&Interval::point(vm[(i, k)]).mul(&Interval::point(g[k]))?)?;
            }
            let d = self.lin[i].sub(&recon)?;
            acc = acc.add(&d.mul(&pm)?)?;
        }
        // Uncoupled directions: lam_k y^2 + g_k y over |y| <= r_k with
        // r_k an upper bound of sum_j |V_jk|.
        for k in 0..v {
            let mut r = 0.0f64;
            for j in 0..v {
                r = crate::interval::add_up(r, vm[(j, k)].abs());
            }
            let rng = quad_1d_range(&Interval::point(lam[k]), &Interval::point(g[k]), r)?;
            acc = acc.add(&rng)?;
        }
        Ok(acc)
    }

    fn bound(&self) -> Result<Interval, CertifyError> {
        let naive = self.naive_bound()?;
        let eigen = self.eigen_bound()?;
        // Both enclose the true range, so the intersection does too.
        Ok(naive.intersect(&eigen).unwrap_or(naive))
    }
}

/// Range of `lam y^2 + g y` over `[-r, r]`: the extrema sit at the
/// endpoints or the vertex, so the hull of their interval evaluations
/// encloses the range.
fn quad_1d_range(lam: &Interval, g: &Interval, r: f64) -> Result<Interval, CertifyError> {
    let rp = Interval::point(r);
    let eval =
        |y: &Interval| -> Result<Interval, CertifyError> { Ok(lam.mul(&y.mul(y)?)?.add(&g.mul(y)?)?) };
    let mut range = eval(&rp)?.hull(&eval(&rp.neg())?);
    let two_lam = lam.mul_scalar(2.0)?;
    if two_lam.contains(0.0) {
        // Vertex position unbounded: the coarse full-interval evaluation
        // is sound for any lam.
        let y = Interval::new(-r, r).unwrap();
        let coarse = lam.mul(&y.powi(2)?)?.add(&g.mul(&y)?)?;
        range = range.hull(&coarse);
    } else {
        let vertex = g.neg().div(&two_lam)?;
        if let Some(v_in) = vertex.intersect(&Interval::new(-r, r).unwrap()) {
            range = range.hull(&eval(&v_in)?);
        }
    }
    Ok(range)
}

// ---------------------------------------------------------------------
// Determinant enclosure by cofactor recursion.
// ---------------------------------------------------------------------

/// Beyond this many product terms a minor is bounded to an interval
/// instead of kept symbolic.
const PRODUCT_TERM_CAP: usize = 400_000;

enum Minor {
    Poly(BlockPoly),
    Bounded(Interval),
}

struct DetContext {
    entries: Vec<Vec<BlockPoly>>, // [row][col]
    memo: std::collections::HashMap<(u16, u16), Rc<Minor>>,
    alg: Arc<Algebra>,
}

impl DetContext {
    fn minor(&mut self, rows: u16, cols: u16) -> Result<Rc<Minor>, CertifyError> {
        if let Some(m) = self.memo.get(&(rows, cols)) {
            return Ok(m.clone());
        }
        let row = rows.trailing_zeros() as usize;
        let rest_rows = rows & !(1 << row);
        let mut acc = BlockPoly::zero(self.alg.clone());
        let mut acc_iv = Interval::ZERO;
        let mut symbolic = true;
        let mut sign = 1.0;
        for col in 0..MAX_COFACTOR_ROWS as u16 {
            if cols & (1 << col) == 0 {
                continue;
            }
            let term: BlockPoly = if rest_rows == 0 {
                self.entries[row][col as usize].clone()
            } else {
                let sub = self.minor(rest_rows, cols & !(1 << col))?;
                let entry = &self.entries[row][col as usize];
                match &*sub {
                    Minor::Poly(p) => {
                        if entry.len() * p.len() <= PRODUCT_TERM_CAP {
                            entry.mul(p)?
                        } else {
                            entry.scale(&p.bound()?)?
                        }
                    }
                    Minor::Bounded(iv) => entry.scale(iv)?,
                }
            };
            let signed = if sign < 0.0 {
                term.scale(&Interval::point(-1.0))?
            } else {
                term
            };
            if symbolic {
                acc.add_assign(&signed);
                if acc.len() > PRODUCT_TERM_CAP {
                    acc_iv = acc.bound()?;
                    symbolic = false;
                }
            } else {
                acc_iv = acc_iv.add(&signed.bound()?)?;
            }
            sign = -sign;
        }
        let out = if symbolic {
            Minor::Poly(acc)
        } else {
            Minor::Bounded(acc_iv)
        };
        let rc = Rc::new(out);
        self.memo.insert((rows, cols), rc.clone());
        Ok(rc)
    }
}

/// Enclose the determinant of the row system, keeping each row's point
/// variables symbolically separate as long as term counts permit.
pub fn det_enclosure(rows: &JacobianRows) -> Result<Interval, CertifyError> {
    let v = rows.dim();
    if v > MAX_COFACTOR_ROWS {
        return interval_ge_det(rows);
    }
    let alg = rows.row(0).component(0).poly().algebra().clone();
    let mut entries = Vec::with_capacity(v);
    for i in 0..v {
        let mut row = Vec::with_capacity(v);
        for j in 0..v {
            row.push(BlockPoly::from_entry(rows.row(i).component(j), i));
        }
        entries.push(row);
    }
    let mut ctx = DetContext {
        entries,
        memo: std::collections::HashMap::new(),
        alg,
    };
    let full = (1u16 << v) - 1;
    let m = ctx.minor(full, full)?;
    match &*m {
        Minor::Poly(p) => Ok(p.bound()?),
        Minor::Bounded(iv) => Ok(*iv),
    }
}

/// Fallback for systems wider than the cofactor limit: interval Gaussian
/// elimination on the entry bounds. A zero-straddling pivot yields a
/// zero-containing enclosure (Unknown downstream).
fn interval_ge_det(rows: &JacobianRows) -> Result<Interval, CertifyError> {
    let v = rows.dim();
    let mut m: Vec<Vec<Interval>> = (0..v)
        .map(|i| (0..v).map(|j| rows.row(i).component(j).bound()).collect())
        .collect::<Result<_, _>>()?;
    let mut det = Interval::ONE;
    for k in 0..v {
        let pivot = (k..v)
            .max_by(|&a, &b| m[a][k].mignitude().partial_cmp(&m[b][k].mignitude()).unwrap())
            .unwrap();
        if m[pivot][k].contains(0.0) {
            return Ok(Interval::symmetric(1.0 + det.magnitude()));
        }
        if pivot != k {
            m.swap(pivot, k);
            det = det.neg();
        }
        det = det.mul(&m[k][k])?;
        for i in (k + 1)..v {
            let f = m[i][k].div(&m[k][k])?;
            for j in k..v {
                let t = f.mul(&m[k][j])?;
                m[i][j] = m[i][j].sub(&t)?;
            }
        }
    }
    Ok(det)
}

/// Certify invertibility of the row system over its box: precondition by
/// the inverse midpoint Jacobian (a float matrix; rigor comes from the
/// subsequent enclosure) and enclose the determinant.
pub fn certify_invertible(
    rows: &JacobianRows,
    target: &str,
) -> Result<DomainCertificate, CertifyError> {
    let start = Instant::now();
    let order = rows.row(0).component(0).order();
    let box_ = rows.domain().box_().clone();
    let j0 = rows.midpoint_matrix();
    let Some(p) = j0.try_inverse() else {
        return Ok(DomainCertificate {
            target: target.to_string(),
            box_,
            status: CertStatus::Unknown,
            det_enclosure: None,
            order,
            wall_time: start.elapsed(),
            note: Some("midpoint jacobian singular; preconditioning impossible".into()),
        });
    };
    let pre = rows.postmultiplied(&p)?;
    let det = det_enclosure(&pre)?;
    // det(A P) = det(A) det(P) pointwise with det(P) a fixed nonzero
    // constant, so excluding zero here excludes it for A itself.
    let status = if det.contains(0.0) {
        CertStatus::Unknown
    } else {
        CertStatus::Certified
    };
    Ok(DomainCertificate {
        target: target.to_string(),
        box_,
        status,
        det_enclosure: Some(det),
        order,
        wall_time: start.elapsed(),
        note: None,
    })
}

/// A certification target that can produce Jacobian rows over any box.
pub trait CertifyTarget {
    fn dim(&self) -> usize;
    fn describe(&self) -> String;
    fn rows_over(&self, box_: &BoxDomain) -> Result<JacobianRows, CertifyError>;
}

/// Polynomial-map target (the invertibility map itself).
pub struct PolyTarget {
    pub map: PolyMap,
    pub name: String,
}

impl CertifyTarget for PolyTarget {
    fn dim(&self) -> usize {
        self.map.domain_dim()
    }

    fn describe(&self) -> String {
        self.name.clone()
    }

    fn rows_over(&self, box_: &BoxDomain) -> Result<JacobianRows, CertifyError> {
        JacobianRows::from_poly_map(&self.map, box_)
    }
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub aspect: Vec<f64>,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub iters: usize,
    /// Optional greedy one-sided expansion after bisection, producing
    /// asymmetric boxes.
    pub expand_asymmetric: bool,
}

impl SearchOptions {
    pub fn symmetric(dim: usize, scale_hi: f64) -> Self {
        SearchOptions {
            aspect: vec![1.0; dim],
            scale_lo: scale_hi * 2.0f64.powi(-10),
            scale_hi,
            iters: 12,
            expand_asymmetric: false,
        }
    }
}

/// One attempted scale and its verdict.
#[derive(Debug, Clone)]
pub struct SearchStep {
    pub scale: f64,
    pub certified: bool,
}

#[derive(Debug)]
pub struct BoxSearch {
    pub certificate: DomainCertificate,
    pub steps: Vec<SearchStep>,
    /// Smallest scale that failed above the certified one, if any.
    pub bracketing_failure: Option<f64>,
}

fn scaled_box(aspect: &[f64], scale: f64) -> Result<BoxDomain, CertifyError> {
    Ok(BoxDomain::centered(
        &aspect.iter().map(|a| a * scale).collect::<Vec<_>>(),
    )?)
}

/// Bisect on the box scale for the largest certified box. Certification is
/// not monotone in scale (overestimation grows with the box), so a failed
/// midpoint only moves the bracket, never aborts the search.
pub fn max_certified_box(
    target: &dyn CertifyTarget,
    opts: &SearchOptions,
) -> Result<BoxSearch, CertifyError> {
    assert!(opts.aspect.len() == target.dim());
    assert!(opts.aspect.iter().all(|&a| a > 0.0));
    let mut steps = Vec::new();
    let mut try_scale = |steps: &mut Vec<SearchStep>,
                         scale: f64|
     -> Result<(bool, DomainCertificate), CertifyError> {
        let b = scaled_box(&opts.aspect, scale)?;
        let rows = target.rows_over(&b)?;
        let cert = certify_invertible(&rows, &target.describe())?;
        let ok = cert.is_certified();
        steps.push(SearchStep {
            scale,
            certified: ok,
        });
        Ok((ok, cert))
    };

    // The top of the bracket first: a certified scale_hi ends the search.
    let (hi_ok, hi_cert) = try_scale(&mut steps, opts.scale_hi)?;
    if hi_ok {
        let mut cert = hi_cert;
        if opts.expand_asymmetric {
            cert = expand_one_sided(target, &opts.aspect, opts.scale_hi, &mut steps)?;
        }
        return Ok(BoxSearch {
            certificate: cert,
            steps,
            bracketing_failure: None,
        });
    }
    let (lo_ok, lo_cert) = try_scale(&mut steps, opts.scale_lo)?;
    if !lo_ok {
        return Ok(BoxSearch {
            certificate: lo_cert,
            steps,
            bracketing_failure: Some(opts.scale_lo),
        });
    }
    let mut lo = opts.scale_lo;
    let mut hi = opts.scale_hi;
    let mut best = (lo, lo_cert);
    for _ in 0..opts.iters {
        let mid = 0.5 * (lo + hi);
        let (ok, cert) = try_scale(&mut steps, mid)?;
        if ok {
            best = (mid, cert);
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut certificate = best.1;
    if opts.expand_asymmetric {
        certificate = expand_one_sided(target, &opts.aspect, best.0, &mut steps)?;
    }
    Ok(BoxSearch {
        certificate,
        steps,
        bracketing_failure: Some(hi),
    })
}

/// Greedy per-direction expansion of a certified centered box: each face
/// is pushed outward while certification holds.
fn expand_one_sided(
    target: &dyn CertifyTarget,
    aspect: &[f64],
    scale: f64,
    steps: &mut Vec<SearchStep>,
) -> Result<DomainCertificate, CertifyError> {
    let v = aspect.len();
    let mut lo: Vec<f64> = aspect.iter().map(|a| -a * scale).collect();
    let mut hi: Vec<f64> = aspect.iter().map(|a| a * scale).collect();
    let mut current: Option<DomainCertificate> = None;
    for pass in 0..2 {
        let grow = 1.0 + 0.25 / (1.0 + pass as f64);
        for dir in 0..(2 * v) {
            let (axis, upper) = (dir / 2, dir % 2 == 1);
            let backup = (lo.clone(), hi.clone());
            if upper {
                hi[axis] *= grow;
            } else {
                lo[axis] *= grow;
            }
            let b = BoxDomain::new(
                lo.iter()
                    .zip(&hi)
                    .map(|(&l, &h)| Interval::new(l, h))
                    .collect::<Result<Vec<_>, _>>()?,
            )?;
            let rows = target.rows_over(&b)?;
            let cert = certify_invertible(&rows, &target.describe())?;
            steps.push(SearchStep {
                scale,
                certified: cert.is_certified(),
            });
            if cert.is_certified() {
                current = Some(cert);
            } else {
                (lo, hi) = backup;
            }
        }
    }
    match current {
        Some(c) => Ok(c),
        None => {
            let b = scaled_box(aspect, scale)?;
            let rows = target.rows_over(&b)?;
            certify_invertible(&rows, &target.describe())
        }
    }
}
