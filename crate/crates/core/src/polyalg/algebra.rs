//! Shared descriptors for truncated polynomial algebras.
//!
//! An [`Algebra`] fixes the number of variables and the truncation order
//! and enumerates every monomial of total degree up to the order in graded
//! lexicographic order (sorted by total degree, then lexicographically with
//! the larger leading exponent first). Coefficient vectors of
//! `MultivarPoly` are indexed by the position of their monomial in this
//! enumeration, so ranking a monomial must be fast: it is computed from a
//! binomial table in O(num_vars).

use once_cell::sync::Lazy;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Hard cap on the number of variables; exponent vectors are fixed-size.
pub const MAX_VARS: usize = 8;

/// Exponent vector, padded with zeros beyond `num_vars`.
pub type Mono = [u8; MAX_VARS];

pub fn mono_degree(m: &Mono) -> u32 {
    m.iter().map(|&e| e as u32).sum()
}

// Largest argument needed is order 24 plus MAX_VARS; C(49,24) fits in u64.
static BINOM: Lazy<Vec<Vec<u64>>> = Lazy::new(|| {
    let n = 50;
    let mut t = vec![vec![0u64; n]; n];
    for i in 0..n {
        t[i][0] = 1;
        for k in 1..=i {
            t[i][k] = t[i - 1][k - 1] + t[i - 1].get(k).copied().unwrap_or(0);
        }
    }
    t
});

#[inline]
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        0
    } else {
        BINOM[n][k]
    }
}

/// Number of monomials in `v` variables of total degree exactly `d`.
#[inline]
fn count_exact(d: usize, v: usize) -> u64 {
    if v == 0 {
        return if d == 0 { 1 } else { 0 };
    }
    binomial(d + v - 1, v - 1)
}

/// Number of monomials in `v` variables of total degree at most `n`.
#[inline]
pub fn count_up_to(n: usize, v: usize) -> u64 {
    binomial(n + v, v)
}

#[derive(Debug)]
pub struct Algebra {
    pub num_vars: usize,
    pub order: usize,
    monos: Vec<Mono>,
    degrees: Vec<u8>,
    /// `degree_start[d]` is the index of the first monomial of degree `d`;
    /// has `order + 2` entries so `degree_start[order + 1]` is the length.
    degree_start: Vec<usize>,
}

impl Algebra {
    fn build(num_vars: usize, order: usize) -> Algebra {
        assert!(num_vars >= 1 && num_vars <= MAX_VARS);
        assert!(order <= 24, "truncation order capped at 24");
        let total = count_up_to(order, num_vars) as usize;
        let mut monos = Vec::with_capacity(total);
        let mut degrees = Vec::with_capacity(total);
        let mut degree_start = Vec::with_capacity(order + 2);
        let mut cur = [0u8; MAX_VARS];
        for d in 0..=order {
            degree_start.push(monos.len());
            enumerate_degree(d, num_vars, 0, &mut cur, &mut |m| {
                monos.push(*m);
                degrees.push(d as u8);
            });
        }
        degree_start.push(monos.len());
        let alg = Algebra {
            num_vars,
            order,
            monos,
            degrees,
            degree_start,
        };
        debug_assert!(alg.monos.iter().enumerate().all(|(i, m)| alg.rank(m) == Some(i)));
        alg
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn mono(&self, idx: usize) -> &Mono {
        &self.monos[idx]
    }

    pub fn degree_of(&self, idx: usize) -> usize {
        self.degrees[idx] as usize
    }

    /// Index of the first monomial of the given degree.
    pub fn degree_start(&self, d: usize) -> usize {
        self.degree_start[d.min(self.order + 1)]
    }

    /// One past the last index of degree `d`.
    pub fn degree_end(&self, d: usize) -> usize {
        self.degree_start[(d + 1).min(self.order + 1)]
    }

    /// Number of monomials of total degree at most `d`.
    pub fn len_up_to_degree(&self, d: usize) -> usize {
        self.degree_end(d)
    }

    /// Graded-lex rank of an exponent vector; `None` beyond the order.
    pub fn rank(&self, m: &Mono) -> Option<usize> {
        let d = mono_degree(m) as usize;
        if d > self.order {
            return None;
        }
        Some(rank_unchecked(m, d, self.num_vars))
    }

    /// Rank of the product monomial of two indices; `None` if truncated.
    #[inline]
    pub fn product_rank(&self, i: usize, j: usize) -> Option<usize> {
        let d = self.degrees[i] as usize + self.degrees[j] as usize;
        if d > self.order {
            return None;
        }
        let (a, b) = (&self.monos[i], &self.monos[j]);
        let mut m = [0u8; MAX_VARS];
        for k in 0..self.num_vars {
            m[k] = a[k] + b[k];
        }
        Some(rank_unchecked(&m, d, self.num_vars))
    }

    /// Rank of the monomial with exponent 1 in `var`.
    pub fn var_rank(&self, var: usize) -> usize {
        assert!(var < self.num_vars);
        let mut m = [0u8; MAX_VARS];
        m[var] = 1;
        self.rank(&m).expect("order >= 1 required for variables")
    }
}

/// Rank assuming the degree is within the order.
#[inline]
fn rank_unchecked(m: &Mono, degree: usize, v: usize) -> usize {
    if degree == 0 {
        return 0;
    }
    // Offset of the degree block plus the lex-descending position inside.
    let mut acc = count_up_to(degree - 1, v);
    let mut rem = degree;
    for i in 0..v {
        let e = m[i] as usize;
        // Monomials whose exponent at position i exceeds e come first.
        for t in (e + 1)..=rem {
            acc += count_exact(rem - t, v - i - 1);
        }
        rem -= e;
        if rem == 0 {
            break;
        }
    }
    acc as usize
}

fn enumerate_degree(d: usize, v: usize, pos: usize, cur: &mut Mono, f: &mut impl FnMut(&Mono)) {
    if pos == v - 1 {
        cur[pos] = d as u8;
        f(cur);
        cur[pos] = 0;
        return;
    }
    for e in (0..=d).rev() {
        cur[pos] = e as u8;
        enumerate_degree(d - e, v, pos + 1, cur, f);
    }
    cur[pos] = 0;
}

static CACHE: Lazy<Mutex<HashMap<(usize, usize), Arc<Algebra>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Shared algebra descriptor for `(num_vars, order)`, built once.
pub fn algebra(num_vars: usize, order: usize) -> Arc<Algebra> {
    let mut cache = CACHE.lock().unwrap();
    cache
        .entry((num_vars, order))
        .or_insert_with(|| Arc::new(Algebra::build(num_vars, order)))
        .clone()
}
