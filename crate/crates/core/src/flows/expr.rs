//! Right-hand-side expression trees with one definition and three
//! interpretations: plain floats, intervals, and Taylor models.
//!
//! Subtrees are shared through `Rc` and evaluation memoizes on node
//! identity, so common subexpressions (the square root of a beamline
//! Hamiltonian, a stiffness polynomial reused across variational columns)
//! are computed once per evaluation.

use super::FlowError;
use crate::interval::Interval;
use crate::taylormodel::TaylorModel;
use std::collections::HashMap;
use std::rc::Rc;

#[derive(Debug)]
pub enum Expr {
    Const(f64),
    State(usize),
    Time,
    Add(Rc<Expr>, Rc<Expr>),
    Sub(Rc<Expr>, Rc<Expr>),
    Mul(Rc<Expr>, Rc<Expr>),
    Div(Rc<Expr>, Rc<Expr>),
    Neg(Rc<Expr>),
    Sqrt(Rc<Expr>),
    Sin(Rc<Expr>),
    Cos(Rc<Expr>),
    Exp(Rc<Expr>),
    Powi(Rc<Expr>, u32),
}

pub type E = Rc<Expr>;

pub fn cst(c: f64) -> E {
    Rc::new(Expr::Const(c))
}

pub fn state(i: usize) -> E {
    Rc::new(Expr::State(i))
}

pub fn time() -> E {
    Rc::new(Expr::Time)
}

fn const_of(e: &E) -> Option<f64> {
    match **e {
        Expr::Const(c) => Some(c),
        _ => None,
    }
}

pub fn add(a: E, b: E) -> E {
    match (const_of(&a), const_of(&b)) {
        (Some(x), Some(y)) => cst(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Rc::new(Expr::Add(a, b)),
    }
}

pub fn sub(a: E, b: E) -> E {
    match (const_of(&a), const_of(&b)) {
        (Some(x), Some(y)) => cst(x - y),
        (_, Some(0.0)) => a,
        (Some(0.0), _) => neg(b),
        _ => Rc::new(Expr::Sub(a, b)),
    }
}

pub fn mul(a: E, b: E) -> E {
    match (const_of(&a), const_of(&b)) {
        (Some(x), Some(y)) => cst(x * y),
        (Some(0.0), _) | (_, Some(0.0)) => cst(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        _ => Rc::new(Expr::Mul(a, b)),
    }
}

pub fn div(a: E, b: E) -> E {
    if let Some(0.0) = const_of(&a) {
        return cst(0.0);
    }
    if let Some(1.0) = const_of(&b) {
        return a;
    }
    Rc::new(Expr::Div(a, b))
}

pub fn neg(a: E) -> E {
    match const_of(&a) {
        Some(x) => cst(-x),
        None => Rc::new(Expr::Neg(a)),
    }
}

pub fn sqrt(a: E) -> E {
    Rc::new(Expr::Sqrt(a))
}

pub fn sin(a: E) -> E {
    Rc::new(Expr::Sin(a))
}

pub fn cos(a: E) -> E {
    Rc::new(Expr::Cos(a))
}

pub fn exp(a: E) -> E {
    Rc::new(Expr::Exp(a))
}

pub fn powi(a: E, n: u32) -> E {
    match n {
        0 => cst(1.0),
        1 => a,
        _ => Rc::new(Expr::Powi(a, n)),
    }
}

impl Expr {
    /// Symbolic derivative with respect to state variable `var`.
    pub fn diff(self: &Rc<Expr>, var: usize) -> E {
        match &**self {
            Expr::Const(_) | Expr::Time => cst(0.0),
            Expr::State(i) => cst(if *i == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => add(
                mul(a.diff(var), b.clone()),
                mul(a.clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => {
                // (a/b)' = a'/b - a b'/b^2
                let da = div(a.diff(var), b.clone());
                let db = div(
                    mul(a.clone(), b.diff(var)),
                    mul(b.clone(), b.clone()),
                );
                sub(da, db)
            }
            Expr::Neg(a) => neg(a.diff(var)),
            Expr::Sqrt(a) => div(a.diff(var), mul(cst(2.0), sqrt(a.clone()))),
            Expr::Sin(a) => mul(cos(a.clone()), a.diff(var)),
            Expr::Cos(a) => neg(mul(sin(a.clone()), a.diff(var))),
            Expr::Exp(a) => mul(exp(a.clone()), a.diff(var)),
            Expr::Powi(a, n) => mul(
                mul(cst(*n as f64), powi(a.clone(), n - 1)),
                a.diff(var),
            ),
        }
    }
}

/// One evaluation backend: constants, state lookup, time, and the closed
/// operations. Taylor-model and interval backends are fallible.
pub trait EvalCtx {
    type V: Clone;
    fn constant(&self, c: f64) -> Result<Self::V, FlowError>;
    fn state(&self, i: usize) -> Result<Self::V, FlowError>;
    fn time(&self) -> Result<Self::V, FlowError>;
    fn add(&self, a: &Self::V, b: &Self::V) -> Result<Self::V, FlowError>;
    fn sub(&self, a: &Self::V, b: &Self::V) -> Result<Self::V, FlowError>;
    fn mul(&self, a: &Self::V, b: &Self::V) -> Result<Self::V, FlowError>;
    fn div(&self, a: &Self::V, b: &Self::V) -> Result<Self::V, FlowError>;
    fn neg(&self, a: &Self::V) -> Result<Self::V, FlowError>;
    fn sqrt(&self, a: &Self::V) -> Result<Self::V, FlowError>;
    fn sin(&self, a: &Self::V) -> Result<Self::V, FlowError>;
    fn cos(&self, a: &Self::V) -> Result<Self::V, FlowError>;
    fn exp(&self, a: &Self::V) -> Result<Self::V, FlowError>;
    fn powi(&self, a: &Self::V, n: u32) -> Result<Self::V, FlowError>;
}

pub fn eval<C: EvalCtx>(
    e: &E,
    ctx: &C,
    memo: &mut HashMap<*const Expr, C::V>,
) -> Result<C::V, FlowError> {
    let key = Rc::as_ptr(e);
    if let Some(v) = memo.get(&key) {
        return Ok(v.clone());
    }
    let v = match &**e {
        Expr::Const(c) => ctx.constant(*c)?,
        Expr::State(i) => ctx.state(*i)?,
        Expr::Time => ctx.time()?,
        Expr::Add(a, b) => {
            let (x, y) = (eval(a, ctx, memo)?, eval(b, ctx, memo)?);
            ctx.add(&x, &y)?
        }
        Expr::Sub(a, b) => {
            let (x, y) = (eval(a, ctx, memo)?, eval(b, ctx, memo)?);
            ctx.sub(&x, &y)?
        }
        Expr::Mul(a, b) => {
            let (x, y) = (eval(a, ctx, memo)?, eval(b, ctx, memo)?);
            ctx.mul(&x, &y)?
        }
        Expr::Div(a, b) => {
            let (x, y) = (eval(a, ctx, memo)?, eval(b, ctx, memo)?);
            ctx.div(&x, &y)?
        }
        Expr::Neg(a) => {
            let x = eval(a, ctx, memo)?;
            ctx.neg(&x)?
        }
        Expr::Sqrt(a) => {
            let x = eval(a, ctx, memo)?;
            ctx.sqrt(&x)?
        }
        Expr::Sin(a) => {
            let x = eval(a, ctx, memo)?;
            ctx.sin(&x)?
        }
        Expr::Cos(a) => {
            let x = eval(a, ctx, memo)?;
            ctx.cos(&x)?
        }
        Expr::Exp(a) => {
            let x = eval(a, ctx, memo)?;
            ctx.exp(&x)?
        }
        Expr::Powi(a, n) => {
            let x = eval(a, ctx, memo)?;
            ctx.powi(&x, *n)?
        }
    };
    memo.insert(key, v.clone());
    Ok(v)
}

pub struct F64Ctx<'a> {
    pub state: &'a [f64],
    pub t: f64,
}

impl EvalCtx for F64Ctx<'_> {
    type V = f64;
    fn constant(&self, c: f64) -> Result<f64, FlowError> {
        Ok(c)
    }
    fn state(&self, i: usize) -> Result<f64, FlowError> {
        Ok(self.state[i])
    }
    fn time(&self) -> Result<f64, FlowError> {
        Ok(self.t)
    }
    fn add(&self, a: &f64, b: &f64) -> Result<f64, FlowError> {
        Ok(a + b)
    }
    fn sub(&self, a: &f64, b: &f64) -> Result<f64, FlowError> {
        Ok(a - b)
    }
    fn mul(&self, a: &f64, b: &f64) -> Result<f64, FlowError> {
        Ok(a * b)
    }
    fn div(&self, a: &f64, b: &f64) -> Result<f64, FlowError> {
        Ok(a / b)
    }
    fn neg(&self, a: &f64) -> Result<f64, FlowError> {
        Ok(-a)
    }
    fn sqrt(&self, a: &f64) -> Result<f64, FlowError> {
        Ok(a.sqrt())
    }
    fn sin(&self, a: &f64) -> Result<f64, FlowError> {
        Ok(a.sin())
    }
    fn cos(&self, a: &f64) -> Result<f64, FlowError> {
        Ok(a.cos())
    }
    fn exp(&self, a: &f64) -> Result<f64, FlowError> {
        Ok(a.exp())
    }
    fn powi(&self, a: &f64, n: u32) -> Result<f64, FlowError> {
        Ok(a.powi(n as i32))
    }
}

pub struct IntervalCtx<'a> {
    pub state: &'a [Interval],
    pub t: Interval,
}

impl EvalCtx for IntervalCtx<'_> {
    type V = Interval;
    fn constant(&self, c: f64) -> Result<Interval, FlowError> {
        Ok(Interval::point(c))
    }
    fn state(&self, i: usize) -> Result<Interval, FlowError> {
        Ok(self.state[i])
    }
    fn time(&self) -> Result<Interval, FlowError> {
        Ok(self.t)
    }
    fn add(&self, a: &Interval, b: &Interval) -> Result<Interval, FlowError> {
        Ok(a.add(b)?)
    }
    fn sub(&self, a: &Interval, b: &Interval) -> Result<Interval, FlowError> {
        Ok(a.sub(b)?)
    }
    fn mul(&self, a: &Interval, b: &Interval) -> Result<Interval, FlowError> {
        Ok(a.mul(b)?)
    }
    fn div(&self, a: &Interval, b: &Interval) -> Result<Interval, FlowError> {
        Ok(a.div(b)?)
    }
    fn neg(&self, a: &Interval) -> Result<Interval, FlowError> {
        Ok(a.neg())
    }
    fn sqrt(&self, a: &Interval) -> Result<Interval, FlowError> {
        Ok(a.sqrt()?)
    }
    fn sin(&self, a: &Interval) -> Result<Interval, FlowError> {
        Ok(a.sin()?)
    }
    fn cos(&self, a: &Interval) -> Result<Interval, FlowError> {
        Ok(a.cos()?)
    }
    fn exp(&self, a: &Interval) -> Result<Interval, FlowError> {
        Ok(a.exp()?)
    }
    fn powi(&self, a: &Interval, n: u32) -> Result<Interval, FlowError> {
        Ok(a.powi(n as i32)?)
    }
}

pub struct TmCtx<'a> {
    pub state: &'a [TaylorModel],
    pub time: &'a TaylorModel,
}

impl EvalCtx for TmCtx<'_> {
    type V = TaylorModel;
    fn constant(&self, c: f64) -> Result<TaylorModel, FlowError> {
        Ok(TaylorModel::constant(
            self.time.domain().clone(),
            self.time.order(),
            c,
        ))
    }
    fn state(&self, i: usize) -> Result<TaylorModel, FlowError> {
        Ok(self.state[i].clone())
    }
    fn time(&self) -> Result<TaylorModel, FlowError> {
        Ok(self.time.clone())
    }
    fn add(&self, a: &TaylorModel, b: &TaylorModel) -> Result<TaylorModel, FlowError> {
        Ok(a.add(b)?)
    }
    fn sub(&self, a: &TaylorModel, b: &TaylorModel) -> Result<TaylorModel, FlowError> {
        Ok(a.sub(b)?)
    }
    fn mul(&self, a: &TaylorModel, b: &TaylorModel) -> Result<TaylorModel, FlowError> {
        Ok(a.mul(b)?)
    }
    fn div(&self, a: &TaylorModel, b: &TaylorModel) -> Result<TaylorModel, FlowError> {
        Ok(a.mul(&b.recip()?)?)
    }
    fn neg(&self, a: &TaylorModel) -> Result<TaylorModel, FlowError> {
        Ok(a.neg())
    }
    fn sqrt(&self, a: &TaylorModel) -> Result<TaylorModel, FlowError> {
        Ok(a.sqrt()?)
    }
    fn sin(&self, a: &TaylorModel) -> Result<TaylorModel, FlowError> {
        Ok(a.sin()?)
    }
    fn cos(&self, a: &TaylorModel) -> Result<TaylorModel, FlowError> {
        Ok(a.cos()?)
    }
    fn exp(&self, a: &TaylorModel) -> Result<TaylorModel, FlowError> {
        Ok(a.exp()?)
    }
    fn powi(&self, a: &TaylorModel, n: u32) -> Result<TaylorModel, FlowError> {
        // Binary powering through Taylor-model multiplication.
        let mut acc = self.constant(1.0)?;
        let mut base = a.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(acc)
    }
}

/// An ODE system x' = f(t, x) with expression-tree right-hand side.
#[derive(Debug, Clone)]
pub struct OdeSystem {
    pub name: String,
    pub rhs: Vec<E>,
}

impl OdeSystem {
    pub fn new(name: impl Into<String>, rhs: Vec<E>) -> Self {
        OdeSystem {
            name: name.into(),
            rhs,
        }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn eval_f64(&self, x: &[f64], t: f64) -> Result<Vec<f64>, FlowError> {
        self.rhs.iter().map(|e| eval_f64_direct(e, x, t)).collect()
    }

    pub fn eval_tm(
        &self,
        x: &[TaylorModel],
        time: &TaylorModel,
    ) -> Result<Vec<TaylorModel>, FlowError> {
        let ctx = TmCtx { state: x, time };
        let mut memo = HashMap::new();
        self.rhs.iter().map(|e| eval(e, &ctx, &mut memo)).collect()
    }

    pub fn eval_interval(&self, x: &[Interval], t: Interval) -> Result<Vec<Interval>, FlowError> {
        let ctx = IntervalCtx { state: x, t };
        let mut memo = HashMap::new();
        self.rhs.iter().map(|e| eval(e, &ctx, &mut memo)).collect()
    }

    /// Hamilton's equations for H(q_1..q_n, p_1..p_n) in stacked ordering:
    /// dq_i/dt = dH/dp_i, dp_i/dt = -dH/dq_i.
    pub fn hamiltonian(name: impl Into<String>, h: &E, pairs: usize) -> Self {
        let mut rhs = Vec::with_capacity(2 * pairs);
        for i in 0..pairs {
            rhs.push(h.diff(pairs + i));
        }
        for i in 0..pairs {
            rhs.push(neg(h.diff(i)));
        }
        OdeSystem::new(name, rhs)
    }

    /// Augment with the matrix variational system Y' = (df/dx) Y,
    /// Y(t0) = I; entry Y_{kj} is state v + k v + j.
    pub fn with_variational(&self) -> Self {
        let v = self.dim();
        let dfdx: Vec<Vec<E>> = self
            .rhs
            .iter()
            .map(|f| (0..v).map(|k| f.diff(k)).collect())
            .collect();
        let mut rhs = self.rhs.clone();
        for k in 0..v {
            for j in 0..v {
                let mut acc = cst(0.0);
                for (m, dk) in dfdx[k].iter().enumerate() {
                    acc = add(acc, mul(dk.clone(), state(v + m * v + j)));
                }
                rhs.push(acc);
            }
        }
        OdeSystem::new(format!("{}+variational", self.name), rhs)
    }
}

/// Direct float evaluation without memoization; float recomputation of
/// shared subtrees is cheaper than hashing in the tracking inner loop.
pub fn eval_f64_direct(e: &E, x: &[f64], t: f64) -> Result<f64, FlowError> {
    Ok(match &**e {
        Expr::Const(c) => *c,
        Expr::State(i) => x[*i],
        Expr::Time => t,
        Expr::Add(a, b) => eval_f64_direct(a, x, t)? + eval_f64_direct(b, x, t)?,
        Expr::Sub(a, b) => eval_f64_direct(a, x, t)? - eval_f64_direct(b, x, t)?,
        Expr::Mul(a, b) => eval_f64_direct(a, x, t)? * eval_f64_direct(b, x, t)?,
        Expr::Div(a, b) => eval_f64_direct(a, x, t)? / eval_f64_direct(b, x, t)?,
        Expr::Neg(a) => -eval_f64_direct(a, x, t)?,
        Expr::Sqrt(a) => eval_f64_direct(a, x, t)?.sqrt(),
        Expr::Sin(a) => eval_f64_direct(a, x, t)?.sin(),
        Expr::Cos(a) => eval_f64_direct(a, x, t)?.cos(),
        Expr::Exp(a) => eval_f64_direct(a, x, t)?.exp(),
        Expr::Powi(a, n) => eval_f64_direct(a, x, t)?.powi(*n as i32),
    })
}

/// Plain non-verified RK4, used as an independent cross-check.
pub fn rk4(sys: &OdeSystem, x0: &[f64], t0: f64, tf: f64, steps: usize) -> Result<Vec<f64>, FlowError> {
    let mut x = x0.to_vec();
    let h = (tf - t0) / steps as f64;
    let mut t = t0;
    for _ in 0..steps {
        let k1 = sys.eval_f64(&x, t)?;
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
        let k2 = sys.eval_f64(&x2, t + 0.5 * h)?;
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
        let k3 = sys.eval_f64(&x3, t + 0.5 * h)?;
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
        let k4 = sys.eval_f64(&x4, t + h)?;
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
    }
    Ok(x)
}
