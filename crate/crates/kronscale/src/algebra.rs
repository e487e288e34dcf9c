//! Finite field arithmetic, seeded randomness and small dense matrices.
//!
//! Elements are plain `u64` words in canonical form; a [`FieldSpec`] is the
//! (copyable) context that knows how to combine them. Hot loops call the
//! methods on `FieldSpec` directly. [`FieldElement`] pairs a value with its
//! spec for the checked, user-facing API.

use std::fmt;
use std::str::FromStr;

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest prime below 2^61 (the Mersenne prime 2^61 - 1).
pub const DEFAULT_PRIME: u64 = (1 << 61) - 1;

/// Low-order terms of the reduction polynomial x^w + r(x) for each width.
/// These never change: serialized GF(2^w) values depend on them.
pub const fn gf2_reduction(w: u32) -> u64 {
    match w {
        8 => 0x1b,  // x^8 + x^4 + x^3 + x + 1
        16 => 0x2b, // x^16 + x^5 + x^3 + x + 1
        32 => 0x8d, // x^32 + x^7 + x^3 + x^2 + 1
        64 => 0x1b, // x^64 + x^4 + x^3 + x + 1
        _ => 0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldSpec {
    /// Integers modulo a prime p < 2^62.
    Prime(u64),
    /// GF(2^w) for w in {8, 16, 32, 64}, polynomial basis.
    Gf2(u32),
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Prime(DEFAULT_PRIME)
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Prime(p) => write!(f, "p={p}"),
            FieldSpec::Gf2(w) => write!(f, "gf2 w={w}"),
        }
    }
}

impl FromStr for FieldSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidSpec(s.to_string());
        if let Some(rest) = s.strip_prefix("p=") {
            let p: u64 = rest.trim().parse().map_err(|_| bad())?;
            return FieldSpec::prime(p);
        }
        let mut it = s.split_whitespace();
        if it.next() == Some("gf2") {
            let w = it.next().and_then(|t| t.strip_prefix("w=")).ok_or_else(bad)?;
            if it.next().is_some() {
                return Err(bad());
            }
            return FieldSpec::gf2(w.parse().map_err(|_| bad())?);
        }
        Err(bad())
    }
}

impl FieldSpec {
    pub fn prime(p: u64) -> Result<Self> {
        if p >= 1 << 62 || !is_prime(p) {
            return Err(Error::InvalidSpec(format!("p={p}")));
        }
        Ok(FieldSpec::Prime(p))
    }

    pub fn gf2(w: u32) -> Result<Self> {
        match w {
            8 | 16 | 32 | 64 => Ok(FieldSpec::Gf2(w)),
            _ => Err(Error::InvalidSpec(format!("gf2 w={w}"))),
        }
    }

    pub fn characteristic(&self) -> u64 {
        match *self {
            FieldSpec::Prime(p) => p,
            FieldSpec::Gf2(_) => 2,
        }
    }

    /// Number of elements, saturating at `u128::MAX` never needed since w <= 64.
    pub fn order(&self) -> u128 {
        match *self {
            FieldSpec::Prime(p) => p as u128,
            FieldSpec::Gf2(w) => 1u128 << w,
        }
    }

    pub fn is_canonical(&self, a: u64) -> bool {
        match *self {
            FieldSpec::Prime(p) => a < p,
            FieldSpec::Gf2(64) => true,
            FieldSpec::Gf2(w) => a >> w == 0,
        }
    }

    #[inline]
    pub fn zero(&self) -> u64 {
        0
    }

    #[inline]
    pub fn one(&self) -> u64 {
        1
    }

    /// Image of an integer under the canonical ring map Z -> F.
    pub fn from_int(&self, v: i64) -> u64 {
        match *self {
            FieldSpec::Prime(p) => (v as i128).rem_euclid(p as i128) as u64,
            FieldSpec::Gf2(_) => (v & 1) as u64,
        }
    }

    pub fn from_u64(&self, v: u64) -> u64 {
        match *self {
            FieldSpec::Prime(p) => v % p,
            FieldSpec::Gf2(_) => v & 1,
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        match *self {
            FieldSpec::Prime(p) => {
                // a + b may exceed 2^64 when p is close to it
                let (s, carry) = a.overflowing_add(b);
                if carry || s >= p {
                    s.wrapping_sub(p)
                } else {
                    s
                }
            }
            FieldSpec::Gf2(_) => a ^ b,
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        match *self {
            FieldSpec::Prime(p) => {
                if a >= b {
                    a - b
                } else {
                    a.wrapping_add(p.wrapping_sub(b))
                }
            }
            FieldSpec::Gf2(_) => a ^ b,
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        self.sub(0, a)
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        match *self {
            FieldSpec::Prime(p) => ((a as u128 * b as u128) % p as u128) as u64,
            FieldSpec::Gf2(w) => gf2_mul(w, a, b),
        }
    }

    pub fn pow(&self, mut a: u64, mut e: u128) -> u64 {
        let mut acc = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, a);
            }
            a = self.mul(a, a);
            e >>= 1;
        }
        acc
    }

    pub fn inv(&self, a: u64) -> Result<u64> {
        if a == 0 {
            return Err(Error::DivisionByZero);
        }
        Ok(match *self {
            FieldSpec::Prime(p) => {
                // extended Euclid on signed 128-bit values
                let (mut r0, mut r1) = (p as i128, a as i128);
                let (mut t0, mut t1) = (0i128, 1i128);
                while r1 != 0 {
                    let q = r0 / r1;
                    (r0, r1) = (r1, r0 - q * r1);
                    (t0, t1) = (t1, t0 - q * t1);
                }
                t0.rem_euclid(p as i128) as u64
            }
            FieldSpec::Gf2(_) => self.pow(a, self.order() - 2),
        })
    }

    pub fn sum<I: IntoIterator<Item = u64>>(&self, it: I) -> u64 {
        it.into_iter().fold(0, |s, v| self.add(s, v))
    }

    pub fn random(&self, rng: &mut Rng, nonzero: bool) -> u64 {
        loop {
            let v = match *self {
                FieldSpec::Prime(p) => rng.inner.gen_range(0..p),
                FieldSpec::Gf2(64) => rng.inner.next_u64(),
                FieldSpec::Gf2(w) => rng.inner.next_u64() & ((1u64 << w) - 1),
            };
            if !nonzero || v != 0 {
                return v;
            }
        }
    }

    pub fn element(&self, value: u64) -> Result<FieldElement> {
        if !self.is_canonical(value) {
            return Err(Error::InvalidSpec(format!("{value} is not a canonical element of {self}")));
        }
        Ok(FieldElement { spec: *self, value })
    }

    /// Canonical textual form: decimal for prime fields, 0x-hex for GF(2^w).
    pub fn format(&self, a: u64) -> String {
        match self {
            FieldSpec::Prime(_) => a.to_string(),
            FieldSpec::Gf2(_) => format!("{a:#x}"),
        }
    }

    /// Accepts decimal or `0x` hex; prime-field values may carry a leading `-`.
    pub fn parse_value(&self, s: &str) -> Result<u64> {
        let s = s.trim();
        let bad = || Error::InvalidSpec(format!("bad value {s:?} for {self}"));
        let (neg, body) = match s.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, s),
        };
        let raw = if let Some(h) = body.strip_prefix("0x") {
            u64::from_str_radix(h, 16).map_err(|_| bad())?
        } else {
            body.parse::<u64>().map_err(|_| bad())?
        };
        match *self {
            FieldSpec::Prime(p) => {
                let v = raw % p;
                Ok(if neg { self.neg(v) } else { v })
            }
            FieldSpec::Gf2(_) => {
                if neg || !self.is_canonical(raw) {
                    return Err(bad());
                }
                Ok(raw)
            }
        }
    }
}

/// Carry-less product reduced modulo the fixed polynomial of width `w`.
#[inline]
pub fn gf2_mul(w: u32, a: u64, b: u64) -> u64 {
    let prod = clmul(a, b);
    gf2_reduce(w, prod)
}

#[inline]
fn gf2_reduce(w: u32, mut prod: u128) -> u64 {
    let r = gf2_reduction(w) as u128;
    let mask: u128 = if w == 64 { u64::MAX as u128 } else { (1u128 << w) - 1 };
    loop {
        let hi = prod >> w;
        if hi == 0 {
            return prod as u64;
        }
        prod = (prod & mask) ^ clmul_small(hi, r);
    }
}

// hi < 2^64, r has degree < 8, so the product fits in 72 bits
#[inline]
fn clmul_small(hi: u128, r: u128) -> u128 {
    let mut acc = 0u128;
    let mut r = r;
    let mut shift = 0;
    while r != 0 {
        if r & 1 == 1 {
            acc ^= hi << shift;
        }
        r >>= 1;
        shift += 1;
    }
    acc
}

#[inline]
fn clmul(a: u64, b: u64) -> u128 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("pclmulqdq") {
            // SAFETY: feature presence checked just above
            return unsafe { clmul_pclmul(a, b) };
        }
    }
    clmul_soft(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "pclmulqdq", enable = "sse2")]
unsafe fn clmul_pclmul(a: u64, b: u64) -> u128 {
    use std::arch::x86_64::*;
    let va = _mm_set_epi64x(0, a as i64);
    let vb = _mm_set_epi64x(0, b as i64);
    let r = _mm_clmulepi64_si128(va, vb, 0);
    let lo = _mm_cvtsi128_si64(r) as u64;
    let hi = _mm_cvtsi128_si64(_mm_unpackhi_epi64(r, r)) as u64;
    (hi as u128) << 64 | lo as u128
}

pub(crate) fn clmul_soft(a: u64, b: u64) -> u128 {
    let mut acc = 0u128;
    let a = a as u128;
    let mut b = b;
    let mut i = 0;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a << i;
        }
        b >>= 1;
        i += 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mulm = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powm = |mut a: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mulm(r, a);
            }
            a = mulm(a, a);
            e >>= 1;
        }
        r
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powm(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulm(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A field value tagged with the field it lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldElement {
    pub spec: FieldSpec,
    pub value: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldOp {
    Add,
    Sub,
    Mul,
    Inv,
    Pow,
}

/// Checked arithmetic on tagged elements. `Inv` ignores `b`; `Pow` reads the
/// exponent from `b.value` as an integer.
pub fn field_arith(spec: FieldSpec, op: FieldOp, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
    for e in [a, b] {
        if e.spec != spec {
            return Err(Error::FieldMismatch(spec.to_string(), e.spec.to_string()));
        }
        if !spec.is_canonical(e.value) {
            return Err(Error::InvalidSpec(format!("non-canonical value {}", e.value)));
        }
    }
    let value = match op {
        FieldOp::Add => spec.add(a.value, b.value),
        FieldOp::Sub => spec.sub(a.value, b.value),
        FieldOp::Mul => spec.mul(a.value, b.value),
        FieldOp::Inv => spec.inv(a.value)?,
        FieldOp::Pow => spec.pow(a.value, b.value as u128),
    };
    Ok(FieldElement { spec, value })
}

pub fn random_element(spec: FieldSpec, rng: &mut Rng, nonzero: bool) -> FieldElement {
    FieldElement { spec, value: spec.random(rng, nonzero) }
}

/// Seeded generator. The stream for a given seed is fixed by [`Rng::ALGORITHM`].
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub const ALGORITHM: &'static str = "chacha8-v1";

    pub fn new(seed: u64) -> Self {
        Rng { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream `index` of `seed`; does not touch any parent state.
    pub fn derive(seed: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(index.wrapping_add(1));
        Rng { seed, inner }
    }

    /// Fresh generator seeded from this stream.
    pub fn split(&mut self) -> Self {
        Rng::new(self.inner.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn range(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        self.inner.gen_range(lo..=hi_inclusive)
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.inner.gen_bool(p)
    }

    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        use rand::seq::SliceRandom;
        v.shuffle(&mut self.inner);
    }
}

/// Row-major dense matrix over a field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged matrix");
        Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn random(f: FieldSpec, rows: usize, cols: usize, rng: &mut Rng) -> Self {
        Matrix { rows, cols, data: (0..rows * cols).map(|_| f.random(rng, false)).collect() }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, f: FieldSpec, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let v = f.add(out.get(i, j), f.mul(a, other.get(k, j)));
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (jj, &j) in cols.iter().enumerate() {
                m.set(i, jj, self.get(i, j));
            }
        }
        m
    }

    /// Row echelon form in place; returns (rank, determinant factor) where the
    /// factor is meaningful only for square input.
    fn eliminate(&mut self, f: FieldSpec) -> (usize, u64) {
        let mut rank = 0;
        let mut det = 1u64;
        for col in 0..self.cols {
            if rank == self.rows {
                break;
            }
            let Some(piv) = (rank..self.rows).find(|&r| self.get(r, col) != 0) else {
                det = 0;
                continue;
            };
            if piv != rank {
                for j in 0..self.cols {
                    self.data.swap(piv * self.cols + j, rank * self.cols + j);
                }
                det = f.neg(det);
            }
            let p = self.get(rank, col);
            det = f.mul(det, p);
            let pinv = f.inv(p).expect("pivot is nonzero");
            for r in rank + 1..self.rows {
                let factor = f.mul(self.get(r, col), pinv);
                if factor == 0 {
                    continue;
                }
                for j in col..self.cols {
                    let v = f.sub(self.get(r, j), f.mul(factor, self.get(rank, j)));
                    self.set(r, j, v);
                }
            }
            rank += 1;
        }
        (rank, det)
    }

    pub fn rank(&self, f: FieldSpec) -> usize {
        self.clone().eliminate(f).0
    }

    pub fn det(&self, f: FieldSpec) -> u64 {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let (rank, det) = self.clone().eliminate(f);
        if rank < self.rows {
            0
        } else {
            det
        }
    }
}
