//! Permanent, hafnian and set-partition counting: circuit builders on top of
//! the scaling and extraction compilers, and brute-force oracles.

use serde::Serialize;

use crate::algebra::{FieldSpec, Matrix};
use crate::circuit::{Builder, Circuit, GateId, Name};
use crate::coeffx::{extract_coeff_direct, extract_coeff_tripartition, ExtractStats, Method, TriOptions};
use crate::error::{Error, Result};
use crate::scaling::{DecProvider, PBuilder, PCircuitReport};
use crate::tensor::subsets_of;

/// Reads `n` followed by n rows of n field values.
pub fn parse_matrix(field: FieldSpec, text: &str) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (ln, head) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty matrix file".into() })?;
    let n: usize = head.trim().parse().map_err(|_| Error::Parse { line: ln + 1, msg: format!("bad order {head:?}") })?;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = lines.next().ok_or(Error::Parse { line: ln + 1, msg: "missing matrix row".into() })?;
        let row = l
            .split_whitespace()
            .map(|t| field.parse_value(t).map_err(|e| Error::Parse { line: ln + 1, msg: e.to_string() }))
            .collect::<Result<Vec<u64>>>()?;
        if row.len() != n {
            return Err(Error::Parse { line: ln + 1, msg: format!("expected {n} entries, found {}", row.len()) });
        }
        rows.push(row);
    }
    Ok(if n == 0 { Matrix::zeros(0, 0) } else { Matrix::from_rows(rows) })
}

pub fn format_matrix(field: FieldSpec, a: &Matrix) -> String {
    let mut s = format!("{}\n", a.rows);
    for i in 0..a.rows {
        let row: Vec<String> = (0..a.cols).map(|j| field.format(a.get(i, j))).collect();
        s += &row.join(" ");
        s.push('\n');
    }
    s
}

fn check_square(a: &Matrix) -> Result<usize> {
    if a.rows != a.cols {
        return Err(Error::Shape(format!("{}x{} matrix is not square", a.rows, a.cols)));
    }
    Ok(a.rows)
}

/// Ryser's inclusion-exclusion formula, Gray-code order: O(2^n n).
pub fn permanent_ryser(f: FieldSpec, a: &Matrix) -> Result<u64> {
    let n = check_square(a)?;
    if n > 24 {
        return Err(Error::TooLarge(format!("Ryser supports n <= 24, got {n}")));
    }
    if n == 0 {
        return Ok(f.one());
    }
    // sum over column subsets S of (-1)^{n-|S|} prod_i sum_{j in S} a_ij
    let mut rowsum = vec![0u64; n];
    let mut total = 0u64;
    let mut set = 0u64;
    for k in 1u64..1 << n {
        let j = k.trailing_zeros() as usize;
        set ^= 1 << j;
        let adding = set >> j & 1 == 1;
        for (i, r) in rowsum.iter_mut().enumerate() {
            *r = if adding { f.add(*r, a.get(i, j)) } else { f.sub(*r, a.get(i, j)) };
        }
        let p = rowsum.iter().fold(f.one(), |acc, &r| f.mul(acc, r));
        total = if (n - set.count_ones() as usize).is_multiple_of(2) { f.add(total, p) } else { f.sub(total, p) };
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize)]
pub struct PermReport {
    pub n: usize,
    /// Arcs of the three block DPs below the P_{n/3} combination.
    pub bottom_arcs: usize,
    pub p: PCircuitReport,
    pub arcs: usize,
}

fn entry_inputs(b: &mut Builder, n: usize) -> Vec<Vec<GateId>> {
    (0..n).map(|i| (0..n).map(|j| b.input(Name::entry(i, j))).collect()).collect()
}

fn arcs_since(b: &Builder, start: usize) -> usize {
    (start..b.len())
        .map(|g| match b.gate(g) {
            crate::circuit::Gate::Add(a) | crate::circuit::Gate::Prod(a) => a.len(),
            crate::circuit::Gate::Mul(..) => 2,
            _ => 0,
        })
        .sum()
}

/// Permanent circuit over inputs a:{i,j}: rows are cut into three blocks of
/// n/3; block l has gates g^l_U (U a column set of size at most n/3) summing
/// partial matchings of its first |U| rows onto U. The three size-n/3 layers
/// are combined through P_{n/3} over the column ground [n].
pub fn build_permanent_circuit(f: FieldSpec, n: usize, opts: TriOptions, provider: &dyn DecProvider) -> Result<(Circuit, PermReport)> {
    if n == 0 || !n.is_multiple_of(3) {
        return Err(Error::Divisibility(n));
    }
    if n > 21 {
        return Err(Error::TooLarge(format!("permanent circuit supports n <= 21, got {n}")));
    }
    let m = n / 3;
    let bb = opts.b.unwrap_or(1);
    let pb = PBuilder::new(f, m, bb, opts.g.unwrap_or(m / bb.max(1)), provider)?;
    let mut b = Builder::new(f);
    let a = entry_inputs(&mut b, n);
    let one = b.one();
    let start = b.len();
    let ground = (1u64 << n) - 1;
    let mut tops: Vec<std::collections::HashMap<u64, GateId>> = Vec::with_capacity(3);
    for l in 0..3 {
        let mut prev: std::collections::HashMap<u64, GateId> = [(0u64, one)].into();
        for size in 1..=m {
            let row = l * m + size - 1;
            let mut cur = std::collections::HashMap::new();
            for u in subsets_of(ground, size) {
                let terms: Vec<GateId> = crate::circuit::mask_elems(u)
                    .into_iter()
                    .map(|j| {
                        let g = prev[&(u & !(1 << j))];
                        if g == one {
                            a[row][j as usize]
                        } else {
                            b.mul(a[row][j as usize], g)
                        }
                    })
                    .collect();
                let g = b.add(terms);
                cur.insert(u, g);
            }
            prev = cur;
        }
        tops.push(prev);
    }
    let bottom_arcs = arcs_since(&b, start);
    let mut var = |_: &mut Builder, slot: usize, mask: u64| tops[slot].get(&mask).copied();
    let (out, st) = pb.build(&mut b, &mut var);
    let c = b.finish(vec![out]);
    let mut p = pb.report(st);
    p.arcs = c.size() - bottom_arcs;
    p.gates = c.gates.len();
    let rep = PermReport { n, bottom_arcs, p, arcs: c.size() };
    Ok((c, rep))
}

/// P(x) = prod_j sum_i x_i a_ij, whose x_1...x_n coefficient is perm A.
pub fn permanent_polynomial(f: FieldSpec, n: usize) -> (Circuit, Vec<Name>) {
    let mut b = Builder::new(f);
    let a = entry_inputs(&mut b, n);
    let xs: Vec<GateId> = (0..n).map(|i| b.input(Name::xi(i))).collect();
    let mut acc = b.one();
    for j in 0..n {
        let terms: Vec<GateId> = (0..n).map(|i| b.mul(xs[i], a[i][j])).collect();
        let s = b.add(terms);
        acc = b.mul(s, acc);
    }
    (b.finish(vec![acc]), (0..n).map(Name::xi).collect())
}

/// Permanent through coefficient extraction on [`permanent_polynomial`].
pub fn permanent_via_extraction(f: FieldSpec, n: usize, method: Method, opts: TriOptions, provider: &dyn DecProvider) -> Result<(Circuit, ExtractStats)> {
    let (c, vars) = permanent_polynomial(f, n);
    let e = match method {
        Method::Direct => extract_coeff_direct(&c, &vars)?,
        Method::Tripartition => extract_coeff_tripartition(&c, &vars, opts, provider)?,
    };
    Ok((e.circuit, e.stats))
}

/// Evaluates a circuit over a:{i,j} inputs at matrix `a`.
pub fn eval_on_matrix(c: &Circuit, a: &Matrix) -> Result<u64> {
    let out = c.eval_with(|nm| match nm.index() {
        Some([i, j]) if nm.slot() == Some('a') => Some(a.get(*i as usize, *j as usize)),
        _ => None,
    })?;
    Ok(out[0])
}

fn check_symmetric(a: &Matrix) -> Result<usize> {
    let n = check_square(a)?;
    if n % 2 != 0 {
        return Err(Error::Parity(n));
    }
    for i in 0..n {
        for j in 0..i {
            if a.get(i, j) != a.get(j, i) {
                return Err(Error::Shape(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(n)
}

/// Sum over perfect matchings: pair the lowest free vertex with each other
/// free vertex.
pub fn hafnian_bruteforce(f: FieldSpec, a: &Matrix) -> Result<u64> {
    let n = check_symmetric(a)?;
    if n > 16 {
        return Err(Error::TooLarge(format!("brute-force hafnian supports 2n <= 16, got {n}")));
    }
    fn rec(f: FieldSpec, a: &Matrix, free: u32) -> u64 {
        if free == 0 {
            return f.one();
        }
        let i = free.trailing_zeros() as usize;
        let rest = free & !(1 << i);
        let mut acc = 0;
        let mut m = rest;
        while m != 0 {
            let j = m.trailing_zeros() as usize;
            m &= m - 1;
            acc = f.add(acc, f.mul(a.get(i, j), rec(f, a, rest & !(1 << j))));
        }
        acc
    }
    Ok(rec(f, a, ((1u64 << n) - 1) as u32))
}

/// The alternating-clow polynomial on vertices 0..2n-1: red edges {2t, 2t+1}
/// carry x_t, black edges {i, j} carry a:{min, max}. States v[l][i][h] sum
/// partial clow sequences of length l whose current walk is anchored at h
/// and sits at i. Walks leave their anchor along a red edge, alternate, and
/// close along a black edge; anchors strictly increase. The coefficient of
/// x_0...x_{n-1} is the hafnian. Every product has an input or x on one side,
/// so the circuit is 1-skew.
pub fn hafnian_clow_circuit(f: FieldSpec, two_n: usize) -> Result<(Circuit, Vec<Name>)> {
    if !two_n.is_multiple_of(2) || two_n == 0 {
        return Err(Error::Parity(two_n));
    }
    let n = two_n / 2;
    let mut b = Builder::new(f);
    let mut a = vec![vec![usize::MAX; two_n]; two_n];
    for i in 0..two_n {
        for j in i + 1..two_n {
            let g = b.input(Name::entry(i, j));
            a[i][j] = g;
            a[j][i] = g;
        }
    }
    let xs: Vec<GateId> = (0..n).map(|t| b.input(Name::xi(t))).collect();
    type Layer = Vec<Vec<Option<GateId>>>;
    let mut cur: Layer = vec![vec![None; two_n]; two_n];
    cur[0][0] = Some(b.one());
    for l in 1..two_n {
        let mut acc: Vec<Vec<Vec<GateId>>> = vec![vec![Vec::new(); two_n]; two_n];
        for i in 0..two_n {
            for h in 0..=i {
                let Some(v) = cur[i][h] else { continue };
                if l % 2 == 1 {
                    let j = i ^ 1;
                    if j > h {
                        let g = b.mul(xs[i / 2], v);
                        acc[j][h].push(g);
                    }
                } else {
                    for j in h + 1..two_n {
                        if j != i {
                            let g = b.mul(a[i][j], v);
                            acc[j][h].push(g);
                        }
                    }
                    // close the walk at its anchor h, start a new one at h2 > h
                    if i != h {
                        let g = b.mul(a[i][h], v);
                        for h2 in h + 1..two_n {
                            acc[h2][h2].push(g);
                        }
                    }
                }
            }
        }
        cur = acc.into_iter().map(|row| row.into_iter().map(|t| (!t.is_empty()).then(|| b.add(t))).collect()).collect();
    }
    let mut fin = Vec::new();
    for i in 0..two_n {
        for h in 0..i {
            if let Some(v) = cur[i][h] {
                fin.push(b.mul(a[i][h], v));
            }
        }
    }
    let out = b.add(fin);
    Ok((b.finish(vec![out]), (0..n).map(Name::xi).collect()))
}

/// Hafnian circuit over a:{i,j} (i < j) by extraction from the clow circuit.
pub fn build_hafnian_circuit(f: FieldSpec, two_n: usize, method: Method, opts: TriOptions, provider: &dyn DecProvider) -> Result<(Circuit, ExtractStats)> {
    let (c, vars) = hafnian_clow_circuit(f, two_n)?;
    let e = match method {
        Method::Direct => extract_coeff_direct(&c, &vars)?,
        Method::Tripartition => extract_coeff_tripartition(&c, &vars, opts, provider)?,
    };
    Ok((e.circuit, e.stats))
}

/// Evaluates a hafnian circuit (inputs a:{i,j}, i < j) at symmetric `a`.
pub fn hafnian_eval(c: &Circuit, a: &Matrix) -> Result<u64> {
    check_symmetric(a)?;
    eval_on_matrix(c, a)
}

/// The block matrix (0 A; A^T 0).
pub fn bipartite_embedding(a: &Matrix) -> Result<Matrix> {
    let n = check_square(a)?;
    let mut m = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, n + j, a.get(i, j));
            m.set(n + j, i, a.get(i, j));
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SetFamily {
    pub n: usize,
    /// Largest member size.
    pub q: usize,
    /// Members as sorted 0-based element lists; repeats allowed.
    pub members: Vec<Vec<u32>>,
}

impl SetFamily {
    pub fn new(n: usize, members: Vec<Vec<u32>>) -> Result<Self> {
        if n > 63 {
            return Err(Error::TooLarge(format!("ground of size {n}")));
        }
        let mut ms = Vec::with_capacity(members.len());
        for mut s in members {
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) || s.iter().any(|&e| e as usize >= n) {
                return Err(Error::Shape(format!("invalid member {s:?} over [{n}]")));
            }
            ms.push(s);
        }
        let q = ms.iter().map(Vec::len).max().unwrap_or(0);
        Ok(SetFamily { n, q, members: ms })
    }

    pub fn mask(&self, k: usize) -> u64 {
        self.members[k].iter().fold(0, |m, &e| m | 1 << e)
    }

    /// `n q m` then m lines of (at most q) 1-based elements.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let bad = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.into() };
        let (ln, head) = lines.next().ok_or(bad(0, "empty family file"))?;
        let h: Vec<usize> = head.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(ln, "header must be `n q m`"))?;
        let [n, q, m] = h[..] else { return Err(bad(ln, "header must be `n q m`")) };
        let mut members = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = lines.next().ok_or(bad(ln, "missing member line"))?;
            let s: Vec<u32> = l.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(ln, "bad element"))?;
            if s.len() > q || s.iter().any(|&e| e == 0 || e as usize > n) {
                return Err(bad(ln, "member must list at most q elements from 1..n"));
            }
            members.push(s.into_iter().map(|e| e - 1).collect());
        }
        let f = SetFamily::new(n, members).map_err(|e| bad(ln, &e.to_string()))?;
        Ok(SetFamily { q: q.max(f.q), ..f })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n, self.q, self.members.len());
        for m in &self.members {
            let v: Vec<String> = m.iter().map(|e| (e + 1).to_string()).collect();
            s += &v.join(" ");
            s.push('\n');
        }
        s
    }
}

/// Exhaustive count of subfamilies partitioning [n].
pub fn setpart_bruteforce(fam: &SetFamily) -> Result<u64> {
    let m = fam.members.len();
    if m > 24 {
        return Err(Error::TooLarge(format!("brute force supports |F| <= 24, got {m}")));
    }
    let masks: Vec<u64> = (0..m).map(|k| fam.mask(k)).collect();
    let full = (1u64 << fam.n) - 1;
    let mut count = 0;
    'sub: for sel in 0u32..1 << m {
        let mut cover = 0u64;
        for (k, &mk) in masks.iter().enumerate() {
            if sel >> k & 1 == 1 {
                if cover & mk != 0 {
                    continue 'sub;
                }
                cover |= mk;
            }
        }
        count += (cover == full) as u64;
    }
    Ok(count)
}

/// prod_{S in F} (1 + prod_{i in S} x_i), one q-skew product per member.
pub fn setpart_circuit(f: FieldSpec, fam: &SetFamily) -> (Circuit, Vec<Name>) {
    let mut b = Builder::new(f);
    let xs: Vec<GateId> = (0..fam.n).map(|i| b.input(Name::xi(i))).collect();
    let one = b.one();
    let mut acc = one;
    for s in &fam.members {
        let vs: Vec<GateId> = s.iter().map(|&e| xs[e as usize]).collect();
        let mono = b.prod(&vs);
        let factor = b.add(vec![one, mono]);
        acc = b.mul(factor, acc);
    }
    (b.finish(vec![acc]), (0..fam.n).map(Name::xi).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct SetPartCount {
    pub value: u64,
    /// The true count may exceed the field: only its residue is reported.
    pub residue_only: bool,
    pub stats: ExtractStats,
}

pub fn count_set_partitions(f: FieldSpec, fam: &SetFamily, method: Method, opts: TriOptions, provider: &dyn DecProvider) -> Result<SetPartCount> {
    let (c, vars) = setpart_circuit(f, fam);
    let e = match method {
        Method::Direct => extract_coeff_direct(&c, &vars)?,
        Method::Tripartition => extract_coeff_tripartition(&c, &vars, opts, provider)?,
    };
    let value = e.circuit.eval_with(|_| None)?[0];
    let m = fam.members.len();
    let residue_only = m >= 64 || (1u128 << m) >= f.characteristic() as u128;
    Ok(SetPartCount { value, residue_only, stats: e.stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Rng;
    use crate::scaling::TrivialProvider;

    fn ones(n: usize) -> Matrix {
        Matrix::from_rows(vec![vec![1; n]; n])
    }

    #[test]
    fn ryser_small() {
        let f = FieldSpec::default();
        assert_eq!(permanent_ryser(f, &Matrix::identity(4)).unwrap(), 1);
        assert_eq!(permanent_ryser(f, &ones(5)).unwrap(), 120);
        assert_eq!(permanent_ryser(f, &Matrix::from_rows(vec![vec![1, 2], vec![3, 4]])).unwrap(), 10);
    }

    #[test]
    fn permanent_circuits() {
        let f = FieldSpec::default();
        let (c, rep) = build_permanent_circuit(f, 3, TriOptions::default(), &TrivialProvider).unwrap();
        assert_eq!(eval_on_matrix(&c, &Matrix::identity(3)).unwrap(), 1);
        assert_eq!(eval_on_matrix(&c, &ones(3)).unwrap(), 6);
        assert!(rep.bottom_arcs <= 4 * 3 * 3);
        let (c6, _) = build_permanent_circuit(f, 6, TriOptions::default(), &TrivialProvider).unwrap();
        let mut rng = Rng::new(5);
        let a = Matrix::random(f, 6, 6, &mut rng);
        assert_eq!(eval_on_matrix(&c6, &a).unwrap(), permanent_ryser(f, &a).unwrap());
        assert!(matches!(build_permanent_circuit(f, 4, TriOptions::default(), &TrivialProvider), Err(Error::Divisibility(4))));
    }

    #[test]
    fn hafnian_small() {
        let f = FieldSpec::default();
        let a2 = Matrix::from_rows(vec![vec![0, 7], vec![7, 0]]);
        assert_eq!(hafnian_bruteforce(f, &a2).unwrap(), 7);
        assert_eq!(hafnian_bruteforce(f, &ones(6)).unwrap(), 15);
        let (c, _) = build_hafnian_circuit(f, 2, Method::Direct, TriOptions::default(), &TrivialProvider).unwrap();
        assert_eq!(hafnian_eval(&c, &a2).unwrap(), 7);
        let (c4, _) = build_hafnian_circuit(f, 4, Method::Direct, TriOptions::default(), &TrivialProvider).unwrap();
        let a4 = Matrix::from_rows(vec![vec![0, 2, 3, 5], vec![2, 0, 7, 11], vec![3, 7, 0, 13], vec![5, 11, 13, 0]]);
        assert_eq!(hafnian_eval(&c4, &a4).unwrap(), 2 * 13 + 3 * 11 + 5 * 7);
        assert!(matches!(hafnian_clow_circuit(f, 3), Err(Error::Parity(3))));
    }

    #[test]
    fn set_partitions() {
        let f = FieldSpec::default();
        let fam = SetFamily::new(3, vec![vec![0, 1], vec![2], vec![0, 2], vec![1]]).unwrap();
        assert_eq!(setpart_bruteforce(&fam).unwrap(), 2);
        for method in [Method::Direct, Method::Tripartition] {
            let r = count_set_partitions(f, &fam, method, TriOptions::default(), &TrivialProvider).unwrap();
            assert_eq!(r.value, 2, "{method}");
        }
        assert_eq!(setpart_bruteforce(&SetFamily::new(0, vec![]).unwrap()).unwrap(), 1);
        assert_eq!(setpart_bruteforce(&SetFamily::new(1, vec![vec![0], vec![0]]).unwrap()).unwrap(), 2);
        let singles = SetFamily::new(4, (0..4).map(|i| vec![i]).collect()).unwrap();
        assert_eq!(count_set_partitions(f, &singles, Method::Direct, TriOptions::default(), &TrivialProvider).unwrap().value, 1);
        let gap = SetFamily::new(3, vec![vec![0, 1]]).unwrap();
        assert_eq!(count_set_partitions(f, &gap, Method::Tripartition, TriOptions::default(), &TrivialProvider).unwrap().value, 0);
    }

    #[test]
    fn family_file() {
        let fam = SetFamily::from_text("3 2 4\n1 2\n3\n1 3\n2\n").unwrap();
        assert_eq!(fam.members[0], vec![0, 1]);
        assert_eq!(SetFamily::from_text(&fam.to_text()).unwrap(), fam);
        assert!(matches!(SetFamily::from_text("3 2 1\n1 4\n"), Err(Error::Parse { line: 2, .. })));
    }
}
