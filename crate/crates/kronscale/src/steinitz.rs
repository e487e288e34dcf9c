//! Steinitz rearrangement in the maximum norm, by exact dynamic programming
//! over multisets of vector classes, and the concentration partition built on
//! top of it.

use num_rational::Ratio;

use crate::error::{Error, Result};

pub type Q = Ratio<i64>;

/// Default cap on the number of distinct vectors.
pub const MAX_CLASSES: usize = 64;
/// Cap on the number of multiset states the DP may allocate.
pub const MAX_STATES: usize = 1 << 24;

/// `r` vectors in `dim` dimensions with max-norm at most 1, stored as
/// integers over a common denominator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VectorFamily {
    pub dim: usize,
    pub denom: i64,
    pub vectors: Vec<Vec<i64>>,
}

impl VectorFamily {
    pub fn from_integers(dim: usize, denom: i64, vectors: Vec<Vec<i64>>) -> Result<Self> {
        if denom <= 0 {
            return Err(Error::Shape("denominator must be positive".into()));
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::Shape(format!("vector of length {} in dimension {dim}", v.len())));
            }
            if v.iter().any(|x| x.abs() > denom) {
                return Err(Error::Shape("vector norm exceeds 1".into()));
            }
        }
        Ok(VectorFamily { dim, denom, vectors })
    }

    pub fn from_rationals(dim: usize, vectors: &[Vec<Q>]) -> Result<Self> {
        let mut l = 1i64;
        for x in vectors.iter().flatten() {
            l = num_integer_lcm(l, *x.denom());
        }
        let ints = vectors.iter().map(|v| v.iter().map(|x| x.numer() * (l / x.denom())).collect()).collect();
        VectorFamily::from_integers(dim, l, ints)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, i: usize) -> Vec<Q> {
        self.vectors[i].iter().map(|&x| Q::new(x, self.denom)).collect()
    }

    /// Distinct vectors in first-occurrence order and, per class, the
    /// original indices in increasing order.
    pub fn classes(&self) -> (Vec<Vec<i64>>, Vec<Vec<usize>>) {
        let mut reps: Vec<Vec<i64>> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (i, v) in self.vectors.iter().enumerate() {
            match reps.iter().position(|r| r == v) {
                Some(c) => members[c].push(i),
                None => {
                    reps.push(v.clone());
                    members.push(vec![i]);
                }
            }
        }
        (reps, members)
    }

    /// Vector file: `d r` then r lines of d rationals `p/q` (or integers).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let (ln, head) = lines.next().ok_or_else(|| perr(0, "empty vector file".into()))?;
        let hv: Vec<usize> = head.split_whitespace().map(|t| t.parse().map_err(|_| perr(ln, format!("bad header {head:?}")))).collect::<Result<_>>()?;
        let [d, r] = hv[..] else {
            return Err(perr(ln, "header must be `d r`".into()));
        };
        let mut vecs = Vec::with_capacity(r);
        for _ in 0..r {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, format!("expected {r} vectors")))?;
            let v: Vec<Q> = l.split_whitespace().map(|t| parse_q(t).ok_or_else(|| perr(ln, format!("bad rational {t:?}")))).collect::<Result<_>>()?;
            if v.len() != d {
                return Err(perr(ln, format!("expected {d} coordinates")));
            }
            vecs.push(v);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing content".into()));
        }
        VectorFamily::from_rationals(d, &vecs)
    }
}

fn parse_q(t: &str) -> Option<Q> {
    match t.split_once('/') {
        Some((p, q)) => {
            let (p, q): (i64, i64) = (p.parse().ok()?, q.parse().ok()?);
            (q != 0).then(|| Q::new(p, q))
        }
        None => Some(Q::from_integer(t.parse().ok()?)),
    }
}

fn num_integer_lcm(a: i64, b: i64) -> i64 {
    let (mut x, mut y) = (a.abs(), b.abs());
    while y != 0 {
        (x, y) = (y, x % y);
    }
    a.abs() / x * b.abs()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SteinitzPerm {
    /// `perm[k]` is the index placed at position k.
    pub perm: Vec<usize>,
    /// max_k || sum_{i<=k} u_perm(i) - ((k-d)/r) sum_i u_i ||, exactly.
    pub bound: Q,
}

/// Scaled prefix deviation r*P - (k-d)*S, in units of 1/(r*denom).
fn scaled_dev(prefix: &[i64], total: &[i64], k: i64, d: i64, r: i64) -> i64 {
    prefix.iter().zip(total).map(|(&p, &s)| (r * p - (k - d) * s).abs()).max().unwrap_or(0)
}

/// Exact evaluation of the prefix objective for a given order.
pub fn prefix_deviation(f: &VectorFamily, perm: &[usize]) -> Q {
    let r = f.len() as i64;
    if r == 0 {
        return Q::from_integer(0);
    }
    let d = f.dim as i64;
    let total: Vec<i64> = (0..f.dim).map(|j| f.vectors.iter().map(|v| v[j]).sum()).collect();
    let mut prefix = vec![0i64; f.dim];
    let mut best = 0;
    for (k, &i) in perm.iter().enumerate() {
        for j in 0..f.dim {
            prefix[j] += f.vectors[i][j];
        }
        best = best.max(scaled_dev(&prefix, &total, k as i64 + 1, d, r));
    }
    Q::new(best, r * f.denom)
}

/// Order minimizing the Steinitz prefix objective. The DP runs over
/// multisets of vector classes; among optimal orders, the one whose class
/// sequence is lexicographically least (classes numbered by first
/// occurrence) is returned, and equal vectors keep their original order.
pub fn steinitz_permutation(f: &VectorFamily) -> Result<SteinitzPerm> {
    let r = f.len();
    if r == 0 {
        return Ok(SteinitzPerm { perm: vec![], bound: Q::from_integer(0) });
    }
    let (reps, members) = f.classes();
    let nc = reps.len();
    if nc > MAX_CLASSES {
        return Err(Error::TooManyClasses { found: nc, cap: MAX_CLASSES });
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let mut stride = vec![0usize; nc];
    let mut states = 1usize;
    for c in 0..nc {
        stride[c] = states;
        states = states
            .checked_mul(counts[c] + 1)
            .filter(|&s| s <= MAX_STATES)
            .ok_or_else(|| Error::TooLarge(format!("Steinitz DP over {nc} classes exceeds {MAX_STATES} states")))?;
    }
    let dim = f.dim;
    let (d, ri) = (dim as i64, r as i64);
    let total: Vec<i64> = (0..dim).map(|j| f.vectors.iter().map(|v| v[j]).sum()).collect();

    // g[M] = max(dev(M), best completion from M); walk states from full to empty
    let mut g = vec![0u32; states];
    let mut digits = counts.clone();
    let mut sum = total.clone();
    let mut k = r;
    for idx in (0..states).rev() {
        let mut h = u32::MAX;
        for c in 0..nc {
            if digits[c] < counts[c] {
                h = h.min(g[idx + stride[c]]);
            }
        }
        if h == u32::MAX {
            h = 0;
        }
        let dev = if k == 0 { 0 } else { scaled_dev(&sum, &total, k as i64, d, ri) };
        g[idx] = u32::try_from(dev).map_err(|_| Error::TooLarge("deviation overflows the DP table".into()))?.max(h);
        // odometer decrement
        for c in 0..nc {
            if digits[c] > 0 {
                digits[c] -= 1;
                k -= 1;
                for j in 0..dim {
                    sum[j] -= reps[c][j];
                }
                break;
            }
            digits[c] = counts[c];
            k += counts[c];
            for j in 0..dim {
                sum[j] += reps[c][j] * counts[c] as i64;
            }
        }
    }
    let best = g[0];

    let mut used = vec![0usize; nc];
    let mut idx = 0usize;
    let mut perm = Vec::with_capacity(r);
    for _ in 0..r {
        let c = (0..nc)
            .find(|&c| used[c] < counts[c] && g[idx + stride[c]] <= best)
            .ok_or_else(|| Error::Internal("Steinitz reconstruction lost the optimum".into()))?;
        perm.push(members[c][used[c]]);
        used[c] += 1;
        idx += stride[c];
    }
    let bound = prefix_deviation(f, &perm);
    debug_assert_eq!(bound, Q::new(best as i64, ri * f.denom));
    Ok(SteinitzPerm { perm, bound })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcentrationPartition {
    pub groups: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
    /// || (1/g_j) sum_{G_j} v_i - (1/r) sum v_i ||, per group.
    pub deviation: Vec<Q>,
    /// Prefix objective achieved by the underlying Steinitz order.
    pub steinitz_bound: Q,
}

impl ConcentrationPartition {
    /// Whether every group meets deviation <= 4d/g_j.
    pub fn within_guarantee(&self, dim: usize) -> bool {
        self.deviation.iter().zip(&self.sizes).all(|(dv, &g)| *dv <= Q::new(4 * dim as i64, g as i64))
    }
}

/// Splits [r] into groups of the given sizes whose averages concentrate
/// around the global average: the groups are consecutive blocks of a Steinitz
/// order of u_i = v_i/2 - (1/2r) sum v.
pub fn concentration_partition(f: &VectorFamily, sizes: &[usize]) -> Result<ConcentrationPartition> {
    let r = f.len();
    let got: usize = sizes.iter().sum();
    if got != r {
        return Err(Error::PartitionSize { found: got, expected: r });
    }
    if sizes.contains(&0) {
        return Err(Error::PartitionSize { found: 0, expected: r });
    }
    let ri = r as i64;
    let total: Vec<i64> = (0..f.dim).map(|j| f.vectors.iter().map(|v| v[j]).sum()).collect();
    // u_i = (r v_i - sum v) / (2 r denom)
    let u: Vec<Vec<i64>> = f.vectors.iter().map(|v| v.iter().zip(&total).map(|(&x, &s)| ri * x - s).collect()).collect();
    let uf = VectorFamily::from_integers(f.dim, 2 * ri * f.denom, u)?;
    let sp = steinitz_permutation(&uf)?;
    let mut groups = Vec::with_capacity(sizes.len());
    let mut deviation = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &g in sizes {
        let mut grp: Vec<usize> = sp.perm[at..at + g].to_vec();
        at += g;
        grp.sort_unstable();
        let gi = g as i64;
        let dev = (0..f.dim)
            .map(|j| {
                let s: i64 = grp.iter().map(|&i| f.vectors[i][j]).sum();
                (ri * s - gi * total[j]).abs()
            })
            .max()
            .unwrap_or(0);
        deviation.push(Q::new(dev, gi * ri * f.denom));
        groups.push(grp);
    }
    Ok(ConcentrationPartition { groups, sizes: sizes.to_vec(), deviation, steinitz_bound: sp.bound })
}
