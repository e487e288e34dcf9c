//! Matchings connectivity: basis matchings, the GF(2) basis identity,
//! fingerprints and the tensor H_q, a checker for the blockwise Kronecker
//! factorization of H_q, and brute-force dynamic-programming tables on nice
//! tree decompositions for validating the join formula.
//!
//! Vertices are small integers. A matching is a sorted list of pairs
//! `(u, v)` with `u < v`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::Serialize;

use crate::algebra::{FieldSpec, Matrix, Rng};
use crate::error::{Error, Result};
use crate::sieving::Graph;

pub type Matching = Vec<(u8, u8)>;

fn norm(mut m: Matching) -> Matching {
    for e in &mut m {
        if e.0 > e.1 {
            *e = (e.1, e.0);
        }
    }
    m.sort_unstable();
    m
}

/// Edges of Z_X: `x_i x_j` (1-based) with `floor(j/2) = floor(i/2) + 1`.
pub fn z_edges(x: &[u8]) -> Vec<(u8, u8)> {
    let mut e = Vec::new();
    for i in 1..=x.len() {
        for j in i + 1..=x.len() {
            if j / 2 == i / 2 + 1 {
                e.push((x[i - 1], x[j - 1]));
            }
        }
    }
    norm(e)
}

/// The basis matching B(X, a). Bit `i` of `a` is the (i+1)-th character of
/// the index string, so the top bit decides the pair containing the last
/// element of X.
pub fn basis_matching(x: &[u8], a: u32) -> Matching {
    let mut x = x.to_vec();
    let mut m = Vec::with_capacity(x.len() / 2);
    let mut bit = x.len() / 2;
    while x.len() > 2 {
        bit -= 1;
        let q = x.len();
        if a >> (bit - 1) & 1 == 0 {
            m.push((x[q - 2], x[q - 1]));
            x.truncate(q - 2);
        } else {
            m.push((x[q - 3], x[q - 1]));
            let keep = x[q - 2];
            x.truncate(q - 3);
            x.push(keep);
        }
    }
    if x.len() == 2 {
        m.push((x[0], x[1]));
    }
    norm(m)
}

/// Number of index bits for |X| = `k`.
fn index_bits(k: usize) -> usize {
    (k / 2).saturating_sub(1)
}

/// All 2^{|X|/2-1} basis matchings, listed by index. The empty set has the
/// single empty matching.
pub fn basis_matchings(x: &[u8]) -> Result<Vec<Matching>> {
    if x.len() % 2 == 1 {
        return Err(Error::Parity(x.len()));
    }
    Ok((0..1u32 << index_bits(x.len())).map(|a| basis_matching(x, a)).collect())
}

/// Index `a` of a basis matching of `x`, if it is one.
pub fn basis_index(x: &[u8], m: &Matching) -> Option<u32> {
    if x.len() % 2 == 1 || m.len() * 2 != x.len() {
        return None;
    }
    (0..1u32 << index_bits(x.len())).find(|&a| basis_matching(x, a) == *m)
}

/// B(V(m), complement of a) for a basis matching m = B(V(m), a).
pub fn complement(m: &Matching) -> Option<Matching> {
    let mut x: Vec<u8> = m.iter().flat_map(|&(u, v)| [u, v]).collect();
    x.sort_unstable();
    let a = basis_index(&x, m)?;
    let mask = (1u32 << index_bits(x.len())) - 1;
    Some(basis_matching(&x, !a & mask))
}

/// All perfect matchings of the complete graph on `x`.
pub fn perfect_matchings(x: &[u8]) -> Vec<Matching> {
    fn go(rest: &[u8], cur: &mut Matching, out: &mut Vec<Matching>) {
        if rest.is_empty() {
            out.push(norm(cur.clone()));
            return;
        }
        let u = rest[0];
        for i in 1..rest.len() {
            cur.push((u, rest[i]));
            let next: Vec<u8> = rest[1..].iter().copied().filter(|&w| w != rest[i]).collect();
            go(&next, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if x.len().is_multiple_of(2) {
        go(x, &mut Vec::new(), &mut out);
    }
    out
}

/// Is the multigraph union of the edge lists a single cycle through every
/// touched vertex? A doubled edge is a 2-cycle; the empty union counts as
/// the empty cycle.
pub fn is_single_cycle(parts: &[&[(u8, u8)]]) -> bool {
    let mut adj: HashMap<u8, Vec<u8>> = HashMap::new();
    let mut edges = 0usize;
    for p in parts {
        for &(u, v) in p.iter() {
            if u == v {
                return false;
            }
            adj.entry(u).or_default().push(v);
            adj.entry(v).or_default().push(u);
            edges += 1;
        }
    }
    if edges == 0 {
        return true;
    }
    if adj.values().any(|n| n.len() != 2) {
        return false;
    }
    // 2-regular: single cycle iff connected
    let start = *adj.keys().next().unwrap();
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for &w in &adj[&u] {
            if seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen.len() == adj.len()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BasisReport {
    pub k: usize,
    pub pairs: usize,
    pub counterexample: Option<(Matching, Matching)>,
}

impl BasisReport {
    pub fn ok(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Checks, for every pair of perfect matchings M1, M2 of K_X with |X| = k,
/// that [M1 ∪ M2 is a Hamiltonian cycle] equals mod 2 the sum over a of
/// [M1 ∪ B(X,a) HC]·[M2 ∪ B(X,ā) HC].
pub fn verify_basis_identity(k: usize) -> Result<BasisReport> {
    if k % 2 == 1 {
        return Err(Error::Parity(k));
    }
    if k > 10 {
        return Err(Error::TooLarge(format!("basis identity is exhaustive; |X| <= 10, got {k}")));
    }
    let x: Vec<u8> = (0..k as u8).collect();
    let pms = perfect_matchings(&x);
    let basis = basis_matchings(&x)?;
    let mask = (1u32 << index_bits(k)) - 1;
    // hc[m][a] = [pms[m] ∪ B(a) is a HC]
    let hc: Vec<Vec<bool>> = pms.iter().map(|m| basis.iter().map(|b| is_single_cycle(&[m, b])).collect()).collect();
    let mut pairs = 0;
    for (i, m1) in pms.iter().enumerate() {
        for (j, m2) in pms.iter().enumerate() {
            pairs += 1;
            let lhs = is_single_cycle(&[m1, m2]);
            let rhs = (0..basis.len()).filter(|&a| hc[i][a] && hc[j][!(a as u32) as usize & mask as usize]).count() % 2 == 1;
            if lhs != rhs {
                return Ok(BasisReport { k, pairs, counterexample: Some((m1.clone(), m2.clone())) });
            }
        }
    }
    Ok(BasisReport { k, pairs, counterexample: None })
}

/// Every basis matching of X = {0..k-1} has at most 2 edges across every
/// prefix cut.
pub fn cut_observation(k: usize) -> bool {
    let x: Vec<u8> = (0..k as u8).collect();
    basis_matchings(&x).unwrap_or_default().iter().all(|m| (1..k as u8).all(|i| m.iter().filter(|&&(u, v)| u < i && v >= i).count() <= 2))
}

/// GF(2) rank of the matrix [B(X,a) ∪ M is a HC] over basis matchings
/// against all perfect matchings, with the number of basis matchings.
pub fn basis_rank(k: usize) -> (usize, usize) {
    let x: Vec<u8> = (0..k as u8).collect();
    let basis = basis_matchings(&x).unwrap_or_default();
    let pms = perfect_matchings(&x);
    let rows: Vec<Vec<u64>> = basis.iter().map(|b| pms.iter().map(|m| is_single_cycle(&[b, m]) as u64).collect()).collect();
    // rank is unchanged by the field extension GF(2) ⊂ GF(2^8)
    (Matrix::from_rows(rows).rank(FieldSpec::Gf2(8)), basis.len())
}

/// A U-fingerprint: degrees in {0,1,2} and a basis matching of the
/// degree-1 vertices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Fingerprint {
    pub d: Vec<u8>,
    pub m: Matching,
}

impl Fingerprint {
    pub fn ones(&self) -> Vec<u8> {
        (0..self.d.len() as u8).filter(|&v| self.d[v as usize] == 1).collect()
    }

    pub fn is_valid(&self) -> bool {
        self.d.iter().all(|&x| x <= 2) && basis_index(&self.ones(), &self.m).is_some()
    }
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d: String = self.d.iter().map(|x| char::from(b'0' + x)).collect();
        let m: Vec<String> = self.m.iter().map(|(u, v)| format!("{u}{v}")).collect();
        write!(f, "({d},{{{}}})", m.join(","))
    }
}

fn all_d(q: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    for _ in 0..q {
        out = out.into_iter().flat_map(|d| (0..3u8).map(move |x| [d.clone(), vec![x]].concat())).collect();
    }
    out
}

/// All U-fingerprints for U = {0..q-1}: degree vectors in lexicographic
/// order, then basis matchings by index.
pub fn fingerprints(q: usize) -> Vec<Fingerprint> {
    let mut out = Vec::new();
    for d in all_d(q) {
        let ones: Vec<u8> = (0..q as u8).filter(|&v| d[v as usize] == 1).collect();
        if let Ok(bs) = basis_matchings(&ones) {
            out.extend(bs.into_iter().map(|m| Fingerprint { d: d.clone(), m }));
        }
    }
    out
}

/// Explicit 0/1 tensor H_q over fingerprint indices.
#[derive(Clone, Debug)]
pub struct HTensor {
    pub q: usize,
    pub fps: Vec<Fingerprint>,
    pub entries: BTreeSet<(u32, u32, u32)>,
    index: HashMap<Fingerprint, u32>,
}

impl HTensor {
    pub fn index_of(&self, f: &Fingerprint) -> Option<u32> {
        self.index.get(f).copied()
    }

    pub fn get(&self, a: &Fingerprint, b: &Fingerprint, c: &Fingerprint) -> bool {
        match (self.index_of(a), self.index_of(b), self.index_of(c)) {
            (Some(i), Some(j), Some(k)) => self.entries.contains(&(i, j, k)),
            _ => false,
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

/// H_q: the entry at ((d1,M1),(d2,M2),(d3,M3)) is 1 iff d1 + d2 = d3
/// pointwise and M1 ∪ M2 ∪ M3 is a single cycle.
pub fn build_h(q: usize) -> Result<HTensor> {
    if q > 8 {
        return Err(Error::TooLarge(format!("H_q is built for q <= 8, got {q}")));
    }
    let fps = fingerprints(q);
    let index: HashMap<Fingerprint, u32> = fps.iter().enumerate().map(|(i, f)| (f.clone(), i as u32)).collect();
    let mut by_d: HashMap<&[u8], Vec<u32>> = HashMap::new();
    for (i, f) in fps.iter().enumerate() {
        by_d.entry(&f.d).or_default().push(i as u32);
    }
    let mut entries = BTreeSet::new();
    for (i, f1) in fps.iter().enumerate() {
        for (j, f2) in fps.iter().enumerate() {
            let d3: Vec<u8> = f1.d.iter().zip(&f2.d).map(|(a, b)| a + b).collect();
            if d3.iter().any(|&x| x > 2) {
                continue;
            }
            for &k in &by_d[d3.as_slice()] {
                if is_single_cycle(&[&f1.m, &f2.m, &fps[k as usize].m]) {
                    entries.insert((i as u32, j as u32, k));
                }
            }
        }
    }
    Ok(HTensor { q, fps, entries, index })
}

/// Checks that fixing the trailing `q - q'` elements to d1 = 2, d2 = 0,
/// d3 = 2 cuts H_{q'} out of H_q exactly.
pub fn verify_subtensor(big: &HTensor, small: &HTensor) -> bool {
    let (q, qs) = (big.q, small.q);
    let extend = |f: &Fingerprint, x: u8| Fingerprint { d: [f.d.clone(), vec![x; q - qs]].concat(), m: f.m.clone() };
    let mut want = BTreeSet::new();
    for &(i, j, k) in &small.entries {
        let (a, b, c) = (&small.fps[i as usize], &small.fps[j as usize], &small.fps[k as usize]);
        want.insert((big.index_of(&extend(a, 2)).unwrap(), big.index_of(&extend(b, 0)).unwrap(), big.index_of(&extend(c, 2)).unwrap()));
    }
    let tail = |f: &Fingerprint, x: u8| f.d[qs..].iter().all(|&y| y == x);
    let got: BTreeSet<_> = big
        .entries
        .iter()
        .copied()
        .filter(|&(i, j, k)| tail(&big.fps[i as usize], 2) && tail(&big.fps[j as usize], 0) && tail(&big.fps[k as usize], 2))
        .collect();
    got == want
}

/// H in the symmetric convention d1 + d2 + d3 = 2, used by the
/// factorization. It is H with the third degree vector replaced by 2 - d3.
fn h_sym(f: [&Fingerprint; 3]) -> bool {
    let q = f[0].d.len();
    (0..q).all(|v| f[0].d[v] + f[1].d[v] + f[2].d[v] == 2) && is_single_cycle(&[&f[0].m, &f[1].m, &f[2].m])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FactFailure {
    pub stage: u8,
    pub triple: [Fingerprint; 3],
    pub tau: [Matching; 3],
    pub a: Option<Matching>,
    pub expected: bool,
    pub got: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FactReport {
    pub q: usize,
    pub b: usize,
    pub r: usize,
    pub triples: usize,
    pub types: usize,
    /// log10 of (20b)^{12r}.
    pub log10_type_bound: f64,
    /// Triples whose crossing edges close up entirely, with no boundary
    /// vertex left after contraction.
    pub degenerate: usize,
    /// Failure counts of stages (i), (ii), (iii).
    pub failures: [usize; 3],
    pub first: [Option<FactFailure>; 3],
}

impl FactReport {
    pub fn ok(&self) -> bool {
        self.failures == [0, 0, 0] && (self.types as f64).log10() <= self.log10_type_bound
    }
}

/// Crossing structure of a type: the crossing edges E(τ), the boundary set
/// W (vertices with exactly one crossing edge, in sorted order) and the
/// matching on W pairing the ends of maximal crossing runs. `None` when the
/// crossing edges do not form disjoint paths.
struct Crossing {
    w: Vec<u8>,
    runs: Option<Matching>,
}

/// Pairs the ends of maximal runs in a multigraph of paths and cycles given
/// by its edges, starting from `ends`. `None` if some vertex has degree > 2
/// or some component is a cycle.
fn contract_runs(edges: &[(u8, u8)], ends: &[u8]) -> Option<Matching> {
    let mut adj: HashMap<u8, Vec<(u8, usize)>> = HashMap::new();
    for (i, &(u, v)) in edges.iter().enumerate() {
        adj.entry(u).or_default().push((v, i));
        adj.entry(v).or_default().push((u, i));
    }
    if adj.values().any(|n| n.len() > 2) {
        return None;
    }
    let mut used = vec![false; edges.len()];
    let mut out = Vec::new();
    for &s in ends {
        let Some(first) = adj.get(&s).and_then(|n| n.iter().find(|e| !used[e.1])) else { continue };
        let (mut cur, mut e) = (first.0, first.1);
        used[e] = true;
        while !ends.contains(&cur) {
            let &(nx, ne) = adj[&cur].iter().find(|x| x.1 != e && !used[x.1])?;
            used[ne] = true;
            cur = nx;
            e = ne;
        }
        out.push((s, cur));
    }
    if used.iter().any(|u| !u) {
        return None;
    }
    Some(norm(out))
}

fn crossing(tau: &[Matching; 3]) -> Crossing {
    let edges: Vec<(u8, u8)> = tau.iter().flatten().copied().collect();
    let mut deg: BTreeMap<u8, usize> = BTreeMap::new();
    for &(u, v) in &edges {
        *deg.entry(u).or_default() += 1;
        *deg.entry(v).or_default() += 1;
    }
    let w: Vec<u8> = deg.iter().filter(|e| *e.1 == 1).map(|e| *e.0).collect();
    let runs = contract_runs(&edges, &w);
    Crossing { w, runs }
}

/// The family B(τ) = {B(W,a) : runs(E(τ)) ∪ B(W,ā) is a HC}. For W empty
/// and no crossing edges this is the single empty matching.
fn b_tau(cr: &Crossing, tau: &[Matching; 3]) -> Vec<Matching> {
    let Some(runs) = &cr.runs else { return Vec::new() };
    if cr.w.is_empty() {
        return if tau.iter().all(|x| x.is_empty()) { vec![Vec::new()] } else { Vec::new() };
    }
    let bits = index_bits(cr.w.len());
    let mask = (1u32 << bits) - 1;
    (0..1u32 << bits).filter(|&a| is_single_cycle(&[runs, &basis_matching(&cr.w, !a & mask)])).map(|a| basis_matching(&cr.w, a)).collect()
}

/// Rerouted U_j-fingerprints of the three slots, in local labels.
/// Crossing edges are removed from every slot. A's edges inside the block
/// and the exit pairings go to the slot whose crossing edge they replace
/// when both endpoints agree on it, and to slot 0 otherwise. Vertices
/// interior to a crossing run get degree 2 in slot 0, so degree sums are
/// unchanged at every vertex. `None` when a slot is not a fingerprint.
fn reroute(block: &[u8], t: [&Fingerprint; 3], a: &Matching, cross: &[(u8, u8)], block_of: &dyn Fn(u8) -> usize) -> Option<[Fingerprint; 3]> {
    let j = block_of(block[0]);
    let inside = |e: &(u8, u8)| block_of(e.0) == j && block_of(e.1) == j;
    let local = |v: u8| block.iter().position(|&x| x == v).unwrap();
    let mut out: Vec<(Vec<u8>, Matching)> = Vec::with_capacity(3);
    for f in t {
        let mut d: Vec<u8> = block.iter().map(|&v| f.d[v as usize]).collect();
        for &(u, v) in f.m.iter().filter(|e| !inside(e)) {
            for x in [u, v] {
                if block_of(x) == j {
                    d[local(x)] = d[local(x)].checked_sub(1)?;
                }
            }
        }
        out.push((d, f.m.iter().filter(|e| inside(e)).copied().collect()));
    }
    for (u, v) in reroute_edges(j, a, block_of)? {
        let (cu, cv) = (cross[u as usize], cross[v as usize]);
        let s = if cu.0 == 1 && cv.0 == 1 && cu.1 == cv.1 { cu.1 as usize } else { 0 };
        out[s].0[local(u)] += 1;
        out[s].0[local(v)] += 1;
        out[s].1.push((u, v));
    }
    for &v in block {
        if cross[v as usize].0 == 2 {
            out[0].0[local(v)] += 2;
        }
    }
    let mut fps = out.into_iter().map(|(d, m)| Fingerprint { d, m: norm(m.iter().map(|&(u, v)| (local(u) as u8, local(v) as u8)).collect()) });
    let r = [fps.next()?, fps.next()?, fps.next()?];
    r.iter().all(Fingerprint::is_valid).then_some(r)
}

/// Checks the blockwise factorization of H_q over blocks of size `b` in
/// three stages, each exact mod 2 over all fingerprint triples (for q > 4
/// over the triples with d1 + d2 + d3 = 2, where H is supported):
///
/// 1. basis expansion of the cycle indicator after contracting the
///    intra-block runs to M*;
/// 2. M* ∪ A is one cycle iff every block's rerouted triple is, for every
///    A in B(τ);
/// 3. the sum over A in B(τ) of the product of blockwise H entries of the
///    rerouted fingerprints equals the entry of H.
///
/// The rerouting puts A and the exit pairings into slot 1 and removes
/// the contribution of crossing edges from the degrees of slots 2 and 3.
pub fn verify_factorization(q: usize, b: usize) -> Result<FactReport> {
    if q > 6 || b == 0 || b > 3 {
        return Err(Error::TooLarge(format!("factorization check supports q <= 6 and 1 <= b <= 3, got q={q}, b={b}")));
    }
    let r = q.div_ceil(b);
    let block_of = move |v: u8| v as usize / b;
    let blocks: Vec<Vec<u8>> = (0..r).map(|j| ((j * b) as u8..((j + 1) * b).min(q) as u8).collect()).collect();
    let fps = fingerprints(q);
    let mut rep = FactReport {
        q,
        b,
        r,
        triples: 0,
        types: 0,
        log10_type_bound: 12.0 * r as f64 * (20.0 * b as f64).log10(),
        degenerate: 0,
        failures: [0; 3],
        first: [None, None, None],
    };
    let mut types = HashSet::new();
    let mut btau_cache: HashMap<[Matching; 3], (Vec<u8>, Vec<Matching>)> = HashMap::new();
    let exhaustive = q <= 4;
    let mut by_d: HashMap<&[u8], Vec<&Fingerprint>> = HashMap::new();
    for f in &fps {
        by_d.entry(&f.d).or_default().push(f);
    }
    let fail = |rep: &mut FactReport, stage: u8, t: [&Fingerprint; 3], tau: &[Matching; 3], a: Option<&Matching>, expected: bool, got: bool| {
        rep.failures[stage as usize - 1] += 1;
        let slot = &mut rep.first[stage as usize - 1];
        if slot.is_none() {
            *slot = Some(FactFailure { stage, triple: [t[0].clone(), t[1].clone(), t[2].clone()], tau: tau.clone(), a: a.cloned(), expected, got });
        }
    };
    for f1 in &fps {
        for f2 in &fps {
            let thirds: Vec<&Fingerprint> = if exhaustive {
                fps.iter().collect()
            } else {
                let d3: Vec<u8> = (0..q).map(|v| 2u8.wrapping_sub(f1.d[v] + f2.d[v])).collect();
                if d3.iter().any(|&x| x > 2) {
                    continue;
                }
                by_d.get(d3.as_slice()).cloned().unwrap_or_default()
            };
            for f3 in thirds {
                let t = [f1, f2, f3];
                rep.triples += 1;
                let cross = |m: &Matching| -> Matching { m.iter().filter(|e| block_of(e.0) != block_of(e.1)).copied().collect() };
                let tau = [cross(&f1.m), cross(&f2.m), cross(&f3.m)];
                types.insert(tau.clone());
                let (w, family) = btau_cache
                    .entry(tau.clone())
                    .or_insert_with(|| {
                        let cr = crossing(&tau);
                        let fam = b_tau(&cr, &tau);
                        (cr.w, fam)
                    })
                    .clone();
                let lhs = h_sym(t);
                if w.is_empty() {
                    // no boundary after contraction: every cycle either stays
                    // inside one block or is made of crossing edges only, so
                    // the entry is read off directly
                    rep.degenerate += 1;
                    continue;
                }
                let sum2 = (0..q).all(|v| f1.d[v] + f2.d[v] + f3.d[v] == 2);

                // stages (i) and (ii) concern the cycle structure, so only
                // triples where H can be nonzero
                if sum2 {
                    let intra: Vec<(u8, u8)> = t.iter().flat_map(|f| f.m.iter().filter(|e| block_of(e.0) == block_of(e.1)).copied()).collect();
                    let mstar = contract_runs(&intra, &w);
                    let hc = |a: &Matching| mstar.as_ref().is_some_and(|ms| is_single_cycle(&[ms, a]));
                    let rhs = family.iter().filter(|a| hc(a)).count() % 2 == 1;
                    if rhs != lhs {
                        fail(&mut rep, 1, t, &tau, None, lhs, rhs);
                    }
                    for a in &family {
                        let global = hc(a);
                        let blockwise = blocks.iter().all(|blk| {
                            let j = block_of(blk[0]);
                            let inside = |e: &&(u8, u8)| block_of(e.0) == j && block_of(e.1) == j;
                            let mut parts: Vec<(u8, u8)> = intra.iter().filter(inside).copied().collect();
                            match reroute_edges(j, a, &block_of) {
                                Some(e) => parts.extend(e),
                                None => return false,
                            }
                            is_single_cycle(&[&parts])
                        });
                        if global != blockwise {
                            fail(&mut rep, 2, t, &tau, Some(a), global, blockwise);
                        }
                    }
                }

                // crossing degree and the slot of a crossing edge, per vertex
                let mut cross = vec![(0u8, 0u8); q];
                for (slot, m) in tau.iter().enumerate() {
                    for &(u, v) in m {
                        for x in [u, v] {
                            cross[x as usize].0 += 1;
                            cross[x as usize].1 = slot as u8;
                        }
                    }
                }
                let mut rhs3 = false;
                for a in &family {
                    let prod = blocks.iter().all(|blk| reroute(blk, t, a, &cross, &block_of).is_some_and(|g| h_sym([&g[0], &g[1], &g[2]])));
                    rhs3 ^= prod;
                }
                if rhs3 != lhs {
                    fail(&mut rep, 3, t, &tau, None, lhs, rhs3);
                }
            }
        }
    }
    rep.types = types.len();
    Ok(rep)
}

/// Slot-1 edges that A and its exits contribute to block j: A's edges
/// inside the block plus the exit pairings. `None` when an exit endpoint is
/// left unpaired.
fn reroute_edges(j: usize, a: &Matching, block_of: &dyn Fn(u8) -> usize) -> Option<Vec<(u8, u8)>> {
    let mut out = Vec::new();
    let (mut left, mut right, mut pass) = (Vec::new(), Vec::new(), false);
    for &(u, v) in a {
        let (bu, bv) = (block_of(u), block_of(v));
        if bu == j && bv == j {
            out.push((u, v));
        } else if bu.min(bv) < j && bu.max(bv) > j {
            pass = true;
        } else if bu == j || bv == j {
            let (x, other) = if bu == j { (u, bv) } else { (v, bu) };
            if other < j { left.push(x) } else { right.push(x) }
        }
    }
    let groups = if pass { vec![[left, right].concat()] } else { vec![left, right] };
    for g in groups {
        match g.len() {
            0 => {}
            2 => out.push((g[0], g[1])),
            _ => return None,
        }
    }
    Some(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BagKind {
    Leaf,
    IntroduceVertex(usize),
    IntroduceEdge(usize, usize),
    Forget(usize),
    Join,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bag {
    pub id: usize,
    pub parent: Option<usize>,
    pub kind: BagKind,
    pub members: Vec<usize>,
}

/// Rooted nice tree decomposition. Bags are kept in file order; `id`s are
/// arbitrary distinct integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NiceTreeDecomposition {
    pub bags: Vec<Bag>,
}

impl NiceTreeDecomposition {
    /// One bag per line: `bag <id> <parent|-> <kind> [arg] {members}` with
    /// kind one of leaf, introduce-vertex, introduce-edge, forget, join; arg
    /// is a vertex, or `u-v` for introduce-edge.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut bags = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: ln + 1, msg };
            let open = line.find('{').ok_or_else(|| bad("missing {members}".into()))?;
            let close = line.rfind('}').filter(|&c| c > open).ok_or_else(|| bad("missing }".into()))?;
            let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(format!("bad number {s:?}")));
            let members: Vec<usize> = line[open + 1..close].split(',').filter(|s| !s.trim().is_empty()).map(num).collect::<Result<_>>()?;
            let tok: Vec<&str> = line[..open].split_whitespace().collect();
            if tok.len() < 4 || tok[0] != "bag" {
                return Err(bad(format!("expected `bag <id> <parent> <kind> ...`, got {line:?}")));
            }
            let id = num(tok[1])?;
            let parent = if tok[2] == "-" { None } else { Some(num(tok[2])?) };
            let arg = tok.get(4).copied().ok_or_else(|| format!("{} needs an argument", tok[3]));
            let kind = match tok[3] {
                "leaf" => BagKind::Leaf,
                "join" => BagKind::Join,
                "introduce-vertex" => BagKind::IntroduceVertex(num(arg.map_err(bad)?)?),
                "forget" => BagKind::Forget(num(arg.map_err(bad)?)?),
                "introduce-edge" => {
                    let a = arg.map_err(bad)?;
                    let (u, v) = a.split_once('-').ok_or_else(|| bad(format!("edge must be u-v, got {a:?}")))?;
                    BagKind::IntroduceEdge(num(u)?, num(v)?)
                }
                k => return Err(bad(format!("unknown bag kind {k:?}"))),
            };
            let mut members = members;
            members.sort_unstable();
            bags.push(Bag { id, parent, kind, members });
        }
        Ok(NiceTreeDecomposition { bags })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for b in &self.bags {
            let parent = b.parent.map_or("-".to_string(), |p| p.to_string());
            let (kind, arg) = match &b.kind {
                BagKind::Leaf => ("leaf", String::new()),
                BagKind::Join => ("join", String::new()),
                BagKind::IntroduceVertex(v) => ("introduce-vertex", format!(" {v}")),
                BagKind::Forget(v) => ("forget", format!(" {v}")),
                BagKind::IntroduceEdge(u, v) => ("introduce-edge", format!(" {u}-{v}")),
            };
            let m: Vec<String> = b.members.iter().map(|x| x.to_string()).collect();
            s += &format!("bag {} {parent} {kind}{arg} {{{}}}\n", b.id, m.join(","));
        }
        s
    }

    fn position(&self) -> HashMap<usize, usize> {
        self.bags.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    /// Children positions of every bag.
    pub fn children(&self) -> Result<Vec<Vec<usize>>> {
        let pos = self.position();
        let mut ch = vec![Vec::new(); self.bags.len()];
        for (i, b) in self.bags.iter().enumerate() {
            if let Some(p) = b.parent {
                let &pi = pos.get(&p).ok_or_else(|| Error::InvalidSpec(format!("bag {} has unknown parent {p}", b.id)))?;
                ch[pi].push(i);
            }
        }
        Ok(ch)
    }

    /// Checks the nice-decomposition conditions against `g`.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.position().len() != self.bags.len() {
            return bad("duplicate bag ids".into());
        }
        let roots: Vec<&Bag> = self.bags.iter().filter(|b| b.parent.is_none()).collect();
        if roots.len() != 1 || !roots[0].members.is_empty() {
            return bad("need exactly one root, with an empty bag".into());
        }
        let ch = self.children()?;
        let mut introduced: HashMap<(usize, usize), usize> = HashMap::new();
        for (i, b) in self.bags.iter().enumerate() {
            let kids: Vec<&Bag> = ch[i].iter().map(|&c| &self.bags[c]).collect();
            let with = |v: usize| {
                let mut m = kids[0].members.clone();
                m.push(v);
                m.sort_unstable();
                m
            };
            let ok = match &b.kind {
                BagKind::Leaf => kids.is_empty() && b.members.is_empty(),
                BagKind::Join => kids.len() == 2 && kids.iter().all(|k| k.members == b.members),
                BagKind::IntroduceVertex(v) => kids.len() == 1 && !kids[0].members.contains(v) && b.members == with(*v),
                BagKind::Forget(v) => kids.len() == 1 && kids[0].members.contains(v) && kids[0].members.iter().filter(|&&x| x != *v).copied().collect::<Vec<_>>() == b.members,
                BagKind::IntroduceEdge(u, v) => {
                    *introduced.entry(((*u).min(*v), (*u).max(*v))).or_default() += 1;
                    kids.len() == 1 && kids[0].members == b.members && b.members.contains(u) && b.members.contains(v)
                }
            };
            if !ok {
                return bad(format!("bag {} violates the {:?} conditions", b.id, b.kind));
            }
            if b.members.iter().any(|&v| v >= g.n) {
                return bad(format!("bag {} has a vertex outside the graph", b.id));
            }
        }
        let edges: HashSet<(usize, usize)> = g.edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        if introduced.len() != edges.len() || introduced.iter().any(|(e, &c)| c != 1 || !edges.contains(e)) {
            return bad("every edge must be introduced exactly once".into());
        }
        Ok(())
    }
}

/// Table key: degrees on the bag (in bag order), weight, matching.
pub type TableKey = (Vec<u8>, u64, Matching);

/// Odd entries of t_i for every bag i, by brute force over X ⊆ E_i:
/// degrees d on the bag, degree 2 on forgotten vertices, weight w, and
/// X ∪ M a single cycle for the basis matching M of d⁻¹(1).
///
/// A closed cycle in X is allowed only when no bag vertex has degree 1; it
/// then must be the whole of X.
pub fn bruteforce_tables(g: &Graph, td: &NiceTreeDecomposition, weights: &[u64]) -> Result<Vec<BTreeSet<TableKey>>> {
    td.validate(g)?;
    if weights.len() != g.edges.len() {
        return Err(Error::Shape(format!("{} weights for {} edges", weights.len(), g.edges.len())));
    }
    let ch = td.children()?;
    let eid: HashMap<(usize, usize), usize> = g.edges.iter().enumerate().map(|(i, &(u, v))| ((u.min(v), u.max(v)), i)).collect();
    // E_i and V_i, children before parents
    let n = td.bags.len();
    let mut order = Vec::with_capacity(n);
    let root = td.bags.iter().position(|b| b.parent.is_none()).unwrap();
    let mut stack = vec![root];
    while let Some(i) = stack.pop() {
        order.push(i);
        stack.extend(&ch[i]);
    }
    order.reverse();
    let mut e_i: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut v_i: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &i in &order {
        let mut es: Vec<usize> = ch[i].iter().flat_map(|&c| e_i[c].clone()).collect();
        let mut vs: BTreeSet<usize> = ch[i].iter().flat_map(|&c| v_i[c].clone()).collect();
        if let BagKind::IntroduceEdge(u, v) = td.bags[i].kind {
            es.push(eid[&(u.min(v), u.max(v))]);
        }
        vs.extend(&td.bags[i].members);
        es.sort_unstable();
        e_i[i] = es;
        v_i[i] = vs;
    }
    let mut tables = vec![BTreeSet::new(); n];
    for i in 0..n {
        let es = &e_i[i];
        if es.len() > 20 {
            return Err(Error::TooLarge(format!("bag {} has {} edges below it; brute force supports 20", td.bags[i].id, es.len())));
        }
        let bag = &td.bags[i].members;
        let mut t: BTreeSet<TableKey> = BTreeSet::new();
        for x in 0u32..1 << es.len() {
            let mut deg: HashMap<usize, u8> = HashMap::new();
            let mut edges = Vec::new();
            let mut w = 0;
            for (k, &e) in es.iter().enumerate() {
                if x >> k & 1 == 1 {
                    let (u, v) = g.edges[e];
                    *deg.entry(u).or_default() += 1;
                    *deg.entry(v).or_default() += 1;
                    edges.push((u as u8, v as u8));
                    w += weights[e];
                }
            }
            let deg_of = |v: usize| deg.get(&v).copied().unwrap_or(0);
            if v_i[i].iter().any(|&v| if bag.contains(&v) { deg_of(v) > 2 } else { deg_of(v) != 2 }) {
                continue;
            }
            let d: Vec<u8> = bag.iter().map(|&v| deg_of(v)).collect();
            let ones: Vec<u8> = bag.iter().filter(|&&v| deg_of(v) == 1).map(|&v| v as u8).collect();
            for m in basis_matchings(&ones)? {
                if is_single_cycle(&[&edges, &m]) {
                    let key = (d.clone(), w, m);
                    if !t.remove(&key) {
                        t.insert(key);
                    }
                }
            }
        }
        tables[i] = t;
    }
    Ok(tables)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JoinFailure {
    pub bag: usize,
    pub d: Vec<u8>,
    pub w: u64,
    pub m: Matching,
    pub lhs: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JoinReport {
    pub joins: usize,
    pub entries: usize,
    pub counterexample: Option<JoinFailure>,
}

impl JoinReport {
    pub fn ok(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// At every join bag, recomputes the table from its children's tables by
/// the join formula (children's matchings complemented, union with M a
/// cycle) and compares with the brute-force table.
pub fn verify_join(g: &Graph, td: &NiceTreeDecomposition, weights: &[u64]) -> Result<JoinReport> {
    let tables = bruteforce_tables(g, td, weights)?;
    let ch = td.children()?;
    let mut rep = JoinReport { joins: 0, entries: 0, counterexample: None };
    for (i, b) in td.bags.iter().enumerate() {
        if b.kind != BagKind::Join {
            continue;
        }
        rep.joins += 1;
        let (tj, tk) = (&tables[ch[i][0]], &tables[ch[i][1]]);
        let mut rhs: BTreeSet<TableKey> = BTreeSet::new();
        for (dj, wj, mj) in tj {
            let cj = complement(mj).ok_or_else(|| Error::Internal("table matching is not a basis matching".into()))?;
            for (dk, wk, mk) in tk {
                let d: Vec<u8> = dj.iter().zip(dk).map(|(a, c)| a + c).collect();
                if d.iter().any(|&x| x > 2) {
                    continue;
                }
                let ck = complement(mk).ok_or_else(|| Error::Internal("table matching is not a basis matching".into()))?;
                let ones: Vec<u8> = b.members.iter().zip(&d).filter(|e| *e.1 == 1).map(|e| *e.0 as u8).collect();
                for m in basis_matchings(&ones)? {
                    if is_single_cycle(&[&cj, &ck, &m]) {
                        let key = (d.clone(), wj + wk, m);
                        if !rhs.remove(&key) {
                            rhs.insert(key);
                        }
                    }
                }
            }
        }
        rep.entries += rhs.len().max(tables[i].len());
        if let Some(k) = rhs.symmetric_difference(&tables[i]).next() {
            rep.counterexample = Some(JoinFailure { bag: b.id, d: k.0.clone(), w: k.1, m: k.2.clone(), lhs: tables[i].contains(k) });
            return Ok(rep);
        }
    }
    Ok(rep)
}

/// Edge weights drawn uniformly from 1..=n².
pub fn random_weights(g: &Graph, rng: &mut Rng) -> Vec<u64> {
    let top = (g.n * g.n).max(1);
    g.edges.iter().map(|_| rng.range(1, top) as u64).collect()
}
