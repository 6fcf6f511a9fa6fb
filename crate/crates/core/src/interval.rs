//! Outward-rounded interval arithmetic over `f64`.
//!
//! Every enclosure guarantee in the crate reduces to this module: an
//! operation on intervals returns an interval containing `x op y` for all
//! points `x`, `y` of the operands. Directed rounding is obtained without
//! touching the hardware rounding mode: the naively rounded endpoint is
//! adjusted by one ulp whenever an error-free transformation (two-sum /
//! fused multiply-add residual) shows the rounding went the wrong way.
//! Library intrinsics (exp, sin, cos) are not correctly rounded, so their
//! endpoint images are inflated by a fixed ulp margin instead.

use std::fmt;
use thiserror::Error;

/// Ulp margin applied around libm results (exp, sin, cos). glibc keeps
/// these under 1 ulp of error; 2 ulps leaves headroom for other libms.
const LIBM_ULPS: u32 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum IntervalError {
    #[error("invalid endpoints: lo {lo} > hi {hi} or non-finite")]
    InvalidEndpoints { lo: f64, hi: f64 },
    #[error("operation overflowed to an unbounded endpoint")]
    Unbounded,
    #[error("division by an interval containing zero")]
    DivisionByZeroInterval,
    #[error("domain error: {0}")]
    Domain(&'static str),
}

/// A closed interval `[lo, hi]` with finite machine endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

#[inline]
fn step_down(x: f64) -> f64 {
    x.next_down()
}

#[inline]
fn step_up(x: f64) -> f64 {
    x.next_up()
}

/// Two-sum residual: returns (fl(a+b), t) with a + b = fl(a+b) + t exactly.
#[inline]
pub(crate) fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let t = (a - (s - bb)) + (b - bb);
    (s, t)
}

/// Sum rounded toward -inf.
#[inline]
pub(crate) fn add_down(a: f64, b: f64) -> f64 {
    let (s, t) = two_sum(a, b);
    if t < 0.0 {
        step_down(s)
    } else {
        s
    }
}

/// Sum rounded toward +inf.
#[inline]
pub(crate) fn add_up(a: f64, b: f64) -> f64 {
    let (s, t) = two_sum(a, b);
    if t > 0.0 {
        step_up(s)
    } else {
        s
    }
}

#[inline]
pub(crate) fn sub_down(a: f64, b: f64) -> f64 {
    add_down(a, -b)
}

#[inline]
pub(crate) fn sub_up(a: f64, b: f64) -> f64 {
    add_up(a, -b)
}

/// Product rounded toward -inf. The FMA residual is exact unless the
/// product is subnormal; step an extra ulp there.
#[inline]
pub(crate) fn mul_down(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let p = a * b;
    if p.abs() < f64::MIN_POSITIVE {
        // Subnormal products: the FMA residual is unreliable here.
        return step_down(p);
    }
    let t = a.mul_add(b, -p);
    if t < 0.0 {
        step_down(p)
    } else {
        p
    }
}

/// Product rounded toward +inf.
#[inline]
pub(crate) fn mul_up(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let p = a * b;
    if p.abs() < f64::MIN_POSITIVE {
        return step_up(p);
    }
    let t = a.mul_add(b, -p);
    if t > 0.0 {
        step_up(p)
    } else {
        p
    }
}

/// Quotient rounded toward -inf: a = q*b + r, so a/b = q + r/b.
#[inline]
fn div_down(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let q = a / b;
    if q.abs() < f64::MIN_POSITIVE || !q.is_finite() {
        return step_down(q.max(-f64::MAX).min(f64::MAX));
    }
    let r = q.mul_add(b, -a); // exact: q*b - a
    // a/b - q = -r/b
    if (r > 0.0) == (b > 0.0) && r != 0.0 {
        step_down(q)
    } else {
        q
    }
}

#[inline]
fn div_up(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let q = a / b;
    if q.abs() < f64::MIN_POSITIVE || !q.is_finite() {
        return step_up(q.max(-f64::MAX).min(f64::MAX));
    }
    let r = q.mul_add(b, -a);
    if (r < 0.0) == (b > 0.0) && r != 0.0 {
        step_up(q)
    } else {
        q
    }
}

/// sqrt rounded toward -inf; IEEE sqrt is correctly rounded, the FMA
/// residual of s*s - x decides the direction.
#[inline]
fn sqrt_down(x: f64) -> f64 {
    let s = x.sqrt();
    if s.mul_add(s, -x) > 0.0 {
        step_down(s).max(0.0)
    } else {
        s
    }
}

#[inline]
fn sqrt_up(x: f64) -> f64 {
    let s = x.sqrt();
    if s.mul_add(s, -x) < 0.0 {
        step_up(s)
    } else {
        s
    }
}

fn steps_down(x: f64, n: u32) -> f64 {
    let mut y = x;
    for _ in 0..n {
        y = step_down(y);
    }
    y
}

fn steps_up(x: f64, n: u32) -> f64 {
    let mut y = x;
    for _ in 0..n {
        y = step_up(y);
    }
    y
}

impl Interval {
    /// `[lo, hi]`; endpoints must be finite with `lo <= hi`.
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if lo.is_finite() && hi.is_finite() && lo <= hi {
            Ok(Interval { lo, hi })
        } else {
            Err(IntervalError::InvalidEndpoints { lo, hi })
        }
    }

    /// Degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Self {
        debug_assert!(x.is_finite());
        Interval { lo: x, hi: x }
    }

    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };

    /// Symmetric interval `[-r, r]`.
    pub fn symmetric(r: f64) -> Self {
        debug_assert!(r.is_finite() && r >= 0.0);
        Interval { lo: -r, hi: r }
    }

    /// Enclosure of pi, a couple of ulps wide.
    pub fn pi() -> Self {
        Interval {
            lo: step_down(std::f64::consts::PI),
            hi: step_up(std::f64::consts::PI),
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        sub_up(self.hi, self.lo)
    }

    pub fn midpoint(&self) -> f64 {
        let m = 0.5 * (self.lo + self.hi);
        if m.is_finite() {
            m.clamp(self.lo, self.hi)
        } else {
            0.5 * self.lo + 0.5 * self.hi
        }
    }

    /// Largest absolute value over the interval.
    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest absolute value over the interval (0 if it contains 0).
    pub fn mignitude(&self) -> f64 {
        if self.lo <= 0.0 && 0.0 <= self.hi {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.contains_interval(self)
    }

    /// Strict containment in the interior, used by the flow inclusion test.
    pub fn is_interior_subset_of(&self, other: &Interval) -> bool {
        other.lo < self.lo && self.hi < other.hi
    }

    /// Smallest interval containing both arguments.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// `None` when the intervals are disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    fn check(lo: f64, hi: f64) -> Result<Interval, IntervalError> {
        if lo.is_finite() && hi.is_finite() {
            debug_assert!(lo <= hi);
            Ok(Interval { lo, hi })
        } else {
            Err(IntervalError::Unbounded)
        }
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn add(&self, rhs: &Interval) -> Result<Interval, IntervalError> {
        Self::check(add_down(self.lo, rhs.lo), add_up(self.hi, rhs.hi))
    }

    pub fn sub(&self, rhs: &Interval) -> Result<Interval, IntervalError> {
        Self::check(sub_down(self.lo, rhs.hi), sub_up(self.hi, rhs.lo))
    }

    pub fn mul(&self, rhs: &Interval) -> Result<Interval, IntervalError> {
        let (a, b) = (self.lo, self.hi);
        let (c, d) = (rhs.lo, rhs.hi);
        let lo = mul_down(a, c)
            .min(mul_down(a, d))
            .min(mul_down(b, c))
            .min(mul_down(b, d));
        let hi = mul_up(a, c)
            .max(mul_up(a, d))
            .max(mul_up(b, c))
            .max(mul_up(b, d));
        Self::check(lo, hi)
    }

    pub fn mul_scalar(&self, s: f64) -> Result<Interval, IntervalError> {
        if s >= 0.0 {
            Self::check(mul_down(self.lo, s), mul_up(self.hi, s))
        } else {
            Self::check(mul_down(self.hi, s), mul_up(self.lo, s))
        }
    }

    pub fn add_scalar(&self, s: f64) -> Result<Interval, IntervalError> {
        Self::check(add_down(self.lo, s), add_up(self.hi, s))
    }

    pub fn div(&self, rhs: &Interval) -> Result<Interval, IntervalError> {
        if rhs.contains(0.0) {
            return Err(IntervalError::DivisionByZeroInterval);
        }
        let (a, b) = (self.lo, self.hi);
        let (c, d) = (rhs.lo, rhs.hi);
        let lo = div_down(a, c)
            .min(div_down(a, d))
            .min(div_down(b, c))
            .min(div_down(b, d));
        let hi = div_up(a, c)
            .max(div_up(a, d))
            .max(div_up(b, c))
            .max(div_up(b, d));
        Self::check(lo, hi)
    }

    pub fn recip(&self) -> Result<Interval, IntervalError> {
        if self.contains(0.0) {
            return Err(IntervalError::Domain("recip of interval through zero"));
        }
        Interval::ONE.div(self)
    }

    pub fn sqrt(&self) -> Result<Interval, IntervalError> {
        if self.lo < 0.0 {
            return Err(IntervalError::Domain("sqrt of negative-reaching interval"));
        }
        Self::check(sqrt_down(self.lo), sqrt_up(self.hi))
    }

    pub fn exp(&self) -> Result<Interval, IntervalError> {
        let lo = steps_down(self.lo.exp(), LIBM_ULPS).max(0.0);
        let hi = steps_up(self.hi.exp(), LIBM_ULPS);
        Self::check(lo, hi)
    }

    /// Integer power by sign analysis; even powers of sign-mixed intervals
    /// start at zero rather than a spurious negative endpoint.
    pub fn powi(&self, n: i32) -> Result<Interval, IntervalError> {
        if n == 0 {
            return Ok(Interval::ONE);
        }
        if n < 0 {
            return self.powi(-n)?.recip();
        }
        let n = n as u32;
        if n % 2 == 1 {
            Self::check(powi_down(self.lo, n), powi_up(self.hi, n))
        } else {
            let mag = self.magnitude();
            let mig = self.mignitude();
            Self::check(powi_down(mig, n), powi_up(mag, n))
        }
    }

    pub fn sin(&self) -> Result<Interval, IntervalError> {
        trig_enclosure(self, TrigKind::Sin)
    }

    pub fn cos(&self) -> Result<Interval, IntervalError> {
        trig_enclosure(self, TrigKind::Cos)
    }

    /// Full-precision display; parsing the printed endpoints returns the
    /// same machine numbers, so printing never tightens an interval.
    pub fn to_text(&self) -> String {
        format!("[{},{}]", self.lo, self.hi)
    }

    /// Parse a decimal endpoint pair with outward rounding: an endpoint is
    /// widened by one ulp unless the shortest round-trip representation
    /// proves the decimal was exactly representable.
    pub fn parse_outward(lo: &str, hi: &str) -> Result<Interval, IntervalError> {
        let lo = parse_directed(lo, false)?;
        let hi = parse_directed(hi, true)?;
        Interval::new(lo, hi)
    }
}

fn parse_directed(s: &str, upward: bool) -> Result<f64, IntervalError> {
    let t = s.trim();
    let v: f64 = t.parse().map_err(|_| IntervalError::InvalidEndpoints {
        lo: f64::NAN,
        hi: f64::NAN,
    })?;
    if !v.is_finite() {
        return Err(IntervalError::Unbounded);
    }
    // Shortest round-trip display equal to the input means the conversion
    // was exact; otherwise widen one ulp in the requested direction.
    if format!("{v}") == t {
        Ok(v)
    } else if upward {
        Ok(step_up(v))
    } else {
        Ok(step_down(v))
    }
}

fn powi_down(x: f64, n: u32) -> f64 {
    // Downward-rounded power via downward binary powering of the matching
    // directed square chain; conservative, not tight.
    if n == 0 {
        return 1.0;
    }
    let mut acc_lo = 1.0f64;
    let mut acc_hi = 1.0f64;
    for _ in 0..n {
        let nl = mul_down(acc_lo, x).min(mul_down(acc_hi, x));
        let nh = mul_up(acc_lo, x).max(mul_up(acc_hi, x));
        acc_lo = nl;
        acc_hi = nh;
    }
    acc_lo
}

fn powi_up(x: f64, n: u32) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut acc_lo = 1.0f64;
    let mut acc_hi = 1.0f64;
    for _ in 0..n {
        let nl = mul_down(acc_lo, x).min(mul_down(acc_hi, x));
        let nh = mul_up(acc_lo, x).max(mul_up(acc_hi, x));
        acc_lo = nl;
        acc_hi = nh;
    }
    acc_hi
}

enum TrigKind {
    Sin,
    Cos,
}

/// sin/cos enclosure: endpoint images with a libm margin, clamped to +/-1
/// whenever a critical point may lie inside. Critical-point membership is
/// decided conservatively through an interval enclosure of pi.
fn trig_enclosure(x: &Interval, kind: TrigKind) -> Result<Interval, IntervalError> {
    // Large arguments: argument reduction quality degrades; fall back.
    if x.magnitude() > 1.0e15 || x.width() >= 7.0 {
        return Ok(Interval { lo: -1.0, hi: 1.0 });
    }
    let (flo, fhi) = match kind {
        TrigKind::Sin => (x.lo.sin(), x.hi.sin()),
        TrigKind::Cos => (x.lo.cos(), x.hi.cos()),
    };
    let mut lo = steps_down(flo.min(fhi), LIBM_ULPS).max(-1.0);
    let mut hi = steps_up(flo.max(fhi), LIBM_ULPS).min(1.0);

    // Critical points: sin peaks at (k + 1/2) pi, cos at k pi.
    // k range such that the critical point may fall in [x.lo, x.hi]:
    //   k in x/pi (- 1/2 for sin), evaluated in interval arithmetic.
    let pi = Interval::pi();
    let t = x.div(&pi)?;
    let (k_lo, k_hi) = match kind {
        TrigKind::Sin => ((t.lo - 0.5).floor() as i64, (t.hi - 0.5).ceil() as i64),
        TrigKind::Cos => (t.lo.floor() as i64, t.hi.ceil() as i64),
    };
    for k in k_lo..=k_hi {
        // Conservative membership: enclosure of the critical point meets x.
        let kf = k as f64;
        let crit = match kind {
            TrigKind::Sin => pi.mul_scalar(kf + 0.5)?,
            TrigKind::Cos => pi.mul_scalar(kf)?,
        };
        if crit.intersect(x).is_some() {
            // Even k is a maximum for sin at (k+1/2)pi when k even; for cos
            // at k pi when k even.
            let is_max = k % 2 == 0;
            if is_max {
                hi = 1.0;
            } else {
                lo = -1.0;
            }
        }
    }
    Interval::check(lo, hi)
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// An axis-aligned box: one interval per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    components: Vec<Interval>,
}

impl BoxDomain {
    pub fn new(components: Vec<Interval>) -> Result<Self, IntervalError> {
        if components.is_empty() {
            return Err(IntervalError::Domain("box dimension must be >= 1"));
        }
        Ok(BoxDomain { components })
    }

    /// Centered box `[-h_i, h_i]` per axis.
    pub fn centered(half_widths: &[f64]) -> Result<Self, IntervalError> {
        let comps = half_widths
            .iter()
            .map(|&h| Interval::new(-h, h))
            .collect::<Result<Vec<_>, _>>()?;
        BoxDomain::new(comps)
    }

    /// Cube `[-h, h]^dim`.
    pub fn cube(dim: usize, h: f64) -> Result<Self, IntervalError> {
        BoxDomain::centered(&vec![h; dim])
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &Interval {
        &self.components[i]
    }

    pub fn components(&self) -> &[Interval] {
        &self.components
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.components).all(|(xi, c)| c.contains(*xi))
    }

    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        self.dim() == other.dim()
            && self
                .components
                .iter()
                .zip(&other.components)
                .all(|(a, b)| a.contains_interval(b))
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.midpoint()).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.components.iter().map(|c| 0.5 * c.width()).collect()
    }

    /// Linear-parameter point: `t_i` in [0,1] maps to lo + t (hi - lo).
    pub fn lerp(&self, t: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .zip(t)
            .map(|(c, ti)| c.lo() + ti * (c.hi() - c.lo()))
            .collect()
    }
}

impl fmt::Display for BoxDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, " x ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}
