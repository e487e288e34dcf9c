//! Extraction of the coefficient of the full multilinear monomial x_1...x_n
//! from a skew circuit.
//!
//! Two compilers produce a circuit over the remaining (non-x) inputs:
//!
//! * `direct`: every gate g becomes a table of gates g_S, the coefficient of
//!   x^S in the multilinear part of g, for S a subset of [n].
//! * `tripartition`: the homogenized circuit is cut at degrees n/3 and 2n/3.
//!   Below the first cut, gates get ordinary tables. Between the cuts (and
//!   above the second) every gate is a linear form in the cut gates, so it
//!   gets one table per cut gate it depends on. The degree-n/3 tables f_i,
//!   g_ij, h_j are then combined through the P_{n/3} circuit over [n].
//!
//! Cut gates are not copied: the constant-degree gates (degree 0 and 1) that
//! feed products above a cut keep their ordinary tables, which are shared by
//! all three bands.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::algebra::{FieldSpec, Rng};
use crate::circuit::{analyze_skew_in, homogenize_truncated, Builder, Circuit, Gate, GateId, Name};
use crate::error::{Error, Result};
use crate::scaling::{DecProvider, PBuilder, PCircuitReport};

/// Largest skew accepted by the direct compiler.
pub const MAX_SKEW: usize = 4;
/// Largest n for the direct compiler.
pub const MAX_DIRECT_VARS: usize = 24;
/// Largest padded n for the tripartition compiler.
pub const MAX_TRI_VARS: usize = 21;

/// Multilinear table: subset mask to the gate holding its coefficient.
/// Absent subsets are zero.
pub type Table = BTreeMap<u64, GateId>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    Direct,
    Tripartition,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Method::Direct),
            "tri" | "tripartition" => Ok(Method::Tripartition),
            _ => Err(Error::InvalidSpec(format!("unknown extraction method {s:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Direct => "direct",
            Method::Tripartition => "tri",
        })
    }
}

/// Block structure for the P_{n/3} combination: blocks of 3b elements,
/// grouped g at a time (default: a single group).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TriOptions {
    pub b: Option<usize>,
    pub g: Option<usize>,
}

pub struct ExtractionRequest<'a> {
    pub circuit: &'a Circuit,
    /// x_1..x_n in order; bit i of a table mask is `vars[i]`.
    pub vars: Vec<Name>,
    pub method: Method,
    pub tri: TriOptions,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ExtractStats {
    pub n: usize,
    pub n_padded: usize,
    pub skew: usize,
    /// Cut widths s and t.
    pub cut_y: usize,
    pub cut_z: usize,
    /// (i, j) pairs combined through P_{n/3}.
    pub pairs: usize,
    pub table_entries: usize,
    pub p: Option<PCircuitReport>,
    pub arcs: usize,
}

pub struct Extraction {
    pub circuit: Circuit,
    pub stats: ExtractStats,
}

pub fn extract_coeff(req: &ExtractionRequest, provider: &dyn DecProvider) -> Result<Extraction> {
    match req.method {
        Method::Direct => extract_coeff_direct(req.circuit, &req.vars),
        Method::Tripartition => extract_coeff_tripartition(req.circuit, &req.vars, req.tri, provider),
    }
}

fn var_index(vars: &[Name]) -> Result<HashMap<Name, usize>> {
    let mut idx = HashMap::new();
    for (i, v) in vars.iter().enumerate() {
        if idx.insert(v.clone(), i).is_some() {
            return Err(Error::Shape(format!("variable {v} listed twice")));
        }
    }
    Ok(idx)
}

fn full(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

// product that skips multiplications by the constant 1
fn times(b: &mut Builder, x: GateId, y: GateId) -> GateId {
    if b.is_const(x, 1) {
        y
    } else if b.is_const(y, 1) {
        x
    } else {
        b.mul(x, y)
    }
}

fn sum_tables<'a>(b: &mut Builder, tabs: impl Iterator<Item = &'a Table>) -> Table {
    let mut acc: BTreeMap<u64, Vec<GateId>> = BTreeMap::new();
    for t in tabs {
        for (&s, &g) in t {
            acc.entry(s).or_default().push(g);
        }
    }
    acc.into_iter().map(|(s, v)| (s, b.add(v))).collect()
}

/// Multilinear product of two tables; `keep` filters result subsets.
fn mul_tables(b: &mut Builder, lo: &Table, hi: &Table, keep: impl Fn(u64) -> bool) -> Table {
    let mut acc: BTreeMap<u64, Vec<GateId>> = BTreeMap::new();
    for (&t, &gt) in lo {
        for (&r, &gr) in hi {
            if t & r == 0 && keep(t | r) {
                let p = times(b, gt, gr);
                acc.entry(t | r).or_default().push(p);
            }
        }
    }
    acc.into_iter().map(|(s, v)| (s, b.add(v))).collect()
}

fn cone(c: &Circuit, outs: &[GateId]) -> Vec<bool> {
    let mut need = vec![false; c.gates.len()];
    for &o in outs {
        need[o] = true;
    }
    for g in (0..c.gates.len()).rev() {
        if need[g] {
            c.for_args(g, |a| need[a] = true);
        }
    }
    need
}

fn check_single(c: &Circuit) -> Result<GateId> {
    match c.outputs.as_slice() {
        [o] => Ok(*o),
        _ => Err(Error::SingleOutputRequired(c.outputs.len())),
    }
}

/// New builder with the non-x inputs of `c` declared in their original order.
fn builder_with_params(c: &Circuit, idx: &HashMap<Name, usize>) -> Builder {
    let mut b = Builder::new(c.field);
    for (_, n) in c.inputs() {
        if !idx.contains_key(n) {
            b.input(n.clone());
        }
    }
    b
}

fn leaf_table(b: &mut Builder, g: &Gate, idx: &HashMap<Name, usize>) -> Option<Table> {
    match g {
        Gate::Input(n) => Some(match idx.get(n) {
            Some(&i) => Table::from([(1u64 << i, b.one())]),
            None => Table::from([(0, b.input(n.clone()))]),
        }),
        Gate::Const(0) => Some(Table::new()),
        Gate::Const(v) => Some(Table::from([(0, b.constant(*v))])),
        _ => None,
    }
}

/// Subset-DP compiler. Works for any skew; the low side of each product has
/// a table over subsets of size at most q.
pub fn extract_coeff_direct(c: &Circuit, vars: &[Name]) -> Result<Extraction> {
    let n = vars.len();
    if n > MAX_DIRECT_VARS {
        return Err(Error::TooLarge(format!("direct extraction supports n <= {MAX_DIRECT_VARS}, got {n}")));
    }
    check_single(c)?;
    let c = c.normalized();
    let out = c.outputs[0];
    let idx = var_index(vars)?;
    let is_x = |nm: &Name| idx.contains_key(nm);
    let q = analyze_skew_in(&c, &is_x).unwrap_or(usize::MAX);
    if q > MAX_SKEW {
        return Err(Error::NotSkew(q));
    }
    let deg = c.degrees_in(&is_x);
    let need = cone(&c, &[out]);
    let mut last = vec![0usize; c.gates.len()];
    for g in 0..c.gates.len() {
        if need[g] {
            c.for_args(g, |a| last[a] = g);
        }
    }
    last[out] = usize::MAX;
    let mut b = builder_with_params(&c, &idx);
    let mut tabs: Vec<Option<Table>> = vec![None; c.gates.len()];
    let mut entries = 0usize;
    for (g, gate) in c.gates.iter().enumerate() {
        if !need[g] {
            continue;
        }
        let t = match gate {
            Gate::Add(a) => sum_tables(&mut b, a.iter().map(|&x| tabs[x].as_ref().unwrap())),
            Gate::Mul(x, y) => {
                let (lo, hi) = if deg[*x] <= deg[*y] { (*x, *y) } else { (*y, *x) };
                mul_tables(&mut b, tabs[lo].as_ref().unwrap(), tabs[hi].as_ref().unwrap(), |_| true)
            }
            Gate::Prod(_) => unreachable!("normalized"),
            leaf => leaf_table(&mut b, leaf, &idx).unwrap(),
        };
        entries += t.len();
        tabs[g] = Some(t);
        c.for_args(g, |a| {
            if last[a] == g {
                tabs[a] = None;
            }
        });
    }
    let top = tabs[out].as_ref().unwrap().get(&full(n)).copied();
    let o = top.unwrap_or_else(|| b.zero());
    let circuit = b.finish(vec![o]).prune();
    let stats = ExtractStats { n, n_padded: n, skew: q, table_entries: entries, arcs: circuit.size(), ..Default::default() };
    Ok(Extraction { circuit, stats })
}

/// Input callback of [`multilinear_eval`]: (subset mask, value) entries, or
/// `None` when the input is unassigned.
pub type LeafFn<'a> = dyn FnMut(&Name) -> Option<Vec<(u64, u64)>> + 'a;

/// Numeric counterpart of [`extract_coeff_direct`]: instead of building gates,
/// every gate carries the dense vector of its multilinear coefficients over
/// subsets of [k]. `leaf` gives each input's (subset mask, value) entries.
/// Returns the coefficient of the full subset.
pub fn multilinear_eval(c: &Circuit, k: usize, leaf: &mut LeafFn) -> Result<u64> {
    if k > 20 {
        return Err(Error::TooLarge(format!("dense multilinear evaluation supports k <= 20, got {k}")));
    }
    let out = check_single(c)?;
    let f = c.field;
    let size = 1usize << k;
    let need = cone(c, &[out]);
    let mut last = vec![0usize; c.gates.len()];
    for g in 0..c.gates.len() {
        if need[g] {
            c.for_args(g, |a| last[a] = g);
        }
    }
    last[out] = usize::MAX;
    let mut vecs: Vec<Option<Vec<u64>>> = vec![None; c.gates.len()];
    let nonzero = |v: &[u64]| v.iter().enumerate().filter(|e| *e.1 != 0).map(|(s, &x)| (s, x)).collect::<Vec<_>>();
    for (g, gate) in c.gates.iter().enumerate() {
        if !need[g] {
            continue;
        }
        let v = match gate {
            Gate::Input(nm) => {
                let mut v = vec![0u64; size];
                for (s, x) in leaf(nm).ok_or_else(|| Error::UnassignedInput(nm.to_string()))? {
                    if s as usize >= size {
                        return Err(Error::Shape(format!("leaf subset {s:#x} outside [{k}]")));
                    }
                    v[s as usize] = f.add(v[s as usize], x);
                }
                v
            }
            Gate::Const(x) => {
                let mut v = vec![0u64; size];
                v[0] = *x;
                v
            }
            Gate::Add(a) => {
                let mut v = vec![0u64; size];
                for &x in a {
                    for (d, &s) in v.iter_mut().zip(vecs[x].as_ref().unwrap()) {
                        *d = f.add(*d, s);
                    }
                }
                v
            }
            Gate::Mul(..) | Gate::Prod(_) => {
                let mut args = Vec::new();
                c.for_args(g, |a| args.push(a));
                let mut acc = vecs[args[0]].clone().unwrap();
                for &x in &args[1..] {
                    let (p, q) = (nonzero(&acc), nonzero(vecs[x].as_ref().unwrap()));
                    let mut v = vec![0u64; size];
                    for &(s, a) in &p {
                        for &(t, b) in &q {
                            if s & t == 0 {
                                v[s | t] = f.add(v[s | t], f.mul(a, b));
                            }
                        }
                    }
                    acc = v;
                }
                acc
            }
        };
        vecs[g] = Some(v);
        c.for_args(g, |a| {
            if last[a] == g {
                vecs[a] = None;
            }
        });
    }
    Ok(vecs[out].as_ref().unwrap()[size - 1])
}

/// Multiplies the output by fresh variables until n is a multiple of 3 and
/// at least 9. The fresh names are `x:{k}` for unused k. The coefficient of
/// the enlarged full monomial equals the original one.
pub fn pad_degree(c: &Circuit, vars: &[Name]) -> Result<(Circuit, Vec<Name>)> {
    let out = check_single(c)?;
    let n = vars.len();
    let target = (n.div_ceil(3) * 3).max(9);
    if target == n {
        return Ok((c.clone(), vars.to_vec()));
    }
    let taken: HashSet<Name> = c.input_names().into_iter().chain(vars.iter().cloned()).collect();
    let mut b = Builder::new(c.field);
    let map = b.import(c, |nm, b| b.input(nm.clone()));
    let mut acc = map[out];
    let mut vars = vars.to_vec();
    let mut k = 0usize;
    while vars.len() < target {
        let name = Name::xi(k);
        k += 1;
        if taken.contains(&name) {
            continue;
        }
        let v = b.input(name.clone());
        acc = b.mul(v, acc);
        vars.push(name);
    }
    Ok((b.finish(vec![acc]), vars))
}

/// Rewrites a q-skew circuit into a 1-skew one with the same multilinear
/// part. A product lo*hi whose low side has degree two or more becomes
/// sum_T c_T * x_t1 * (x_t2 * (... * hi)) over the multilinear table of lo;
/// the dropped non-multilinear terms of lo cannot contribute to any
/// multilinear monomial of the product.
pub fn deskew(c: &Circuit, vars: &[Name]) -> Result<Circuit> {
    check_single(c)?;
    let c = c.normalized();
    let idx = var_index(vars)?;
    let is_x = |nm: &Name| idx.contains_key(nm);
    let q = analyze_skew_in(&c, &is_x).unwrap_or(usize::MAX);
    if q <= 1 {
        return Ok(c);
    }
    if q > MAX_SKEW {
        return Err(Error::NotSkew(q));
    }
    let deg = c.degrees_in(&is_x);
    let mut b = Builder::new(c.field);
    let xg: Vec<GateId> = vars.iter().map(|v| b.input(v.clone())).collect();
    let mut tabs: Vec<Option<Table>> = vec![None; c.gates.len()];
    let mut new = Vec::with_capacity(c.gates.len());
    for (v, gate) in c.gates.iter().enumerate() {
        let (g, t) = match gate {
            Gate::Input(nm) => (b.input(nm.clone()), leaf_table(&mut b, gate, &idx)),
            Gate::Const(x) => (b.constant(*x), leaf_table(&mut b, gate, &idx)),
            Gate::Add(a) => {
                let g = b.add(a.iter().map(|&x| new[x]).collect());
                let t = (deg[v] <= q).then(|| sum_tables(&mut b, a.iter().map(|&x| tabs[x].as_ref().unwrap())));
                (g, t)
            }
            Gate::Mul(x, y) => {
                let (lo, hi) = if deg[*x] <= deg[*y] { (*x, *y) } else { (*y, *x) };
                let g = if deg[lo] <= 1 {
                    b.mul(new[lo], new[hi])
                } else {
                    let mut terms = Vec::new();
                    for (&set, &coef) in tabs[lo].as_ref().unwrap() {
                        let mut acc = new[hi];
                        for i in crate::circuit::mask_elems(set).into_iter().rev() {
                            acc = b.mul(xg[i as usize], acc);
                        }
                        terms.push(times(&mut b, coef, acc));
                    }
                    b.add(terms)
                };
                let t = (deg[v] <= q).then(|| mul_tables(&mut b, tabs[lo].as_ref().unwrap(), tabs[hi].as_ref().unwrap(), |_| true));
                (g, t)
            }
            Gate::Prod(_) => unreachable!("normalized"),
        };
        new.push(g);
        tabs[v] = t;
    }
    Ok(b.finish(vec![new[c.outputs[0]]]).prune())
}

/// Per-cut-gate tables of a gate that is linear in the cut gates.
type LinTable = BTreeMap<GateId, Table>;

/// Tripartition compiler. The circuit is padded so that n is a multiple of 3
/// and at least 9 (the cuts then sit strictly above degree 1), and q-skew
/// circuits are first rewritten by [`deskew`].
pub fn extract_coeff_tripartition(c: &Circuit, vars: &[Name], opts: TriOptions, provider: &dyn DecProvider) -> Result<Extraction> {
    let n0 = vars.len();
    check_single(c)?;
    let (c, vars) = pad_degree(c, vars)?;
    let n = vars.len();
    if n % 3 != 0 || n < 9 {
        return Err(Error::Internal(format!("padding produced n = {n}")));
    }
    if n > MAX_TRI_VARS {
        return Err(Error::TooLarge(format!("tripartition extraction supports n <= {MAX_TRI_VARS}, got {n}")));
    }
    let m = n / 3;
    let idx = var_index(&vars)?;
    let is_x = |nm: &Name| idx.contains_key(nm);
    let q = analyze_skew_in(&c.normalized(), &is_x).unwrap_or(usize::MAX);
    if q > MAX_SKEW {
        return Err(Error::NotSkew(q));
    }
    let c = deskew(&c, &vars)?;
    let (bb, g) = (opts.b.unwrap_or(1), opts.g);
    let g = g.unwrap_or(m / bb.max(1));
    let pb = PBuilder::new(c.field, m, bb, g, provider)?;

    let h = homogenize_truncated(&c, n, &is_x)?;
    let hc = &h.circuit;
    let out = hc.outputs[n];
    let deg = hc.degrees_in(&is_x);
    let need = cone(hc, &[out]);
    let mut b = builder_with_params(&c, &idx);
    let mut stats = ExtractStats { n: n0, n_padded: n, skew: q, ..Default::default() };

    let mut ml: Vec<Option<Table>> = vec![None; hc.gates.len()];
    let mut lin: Vec<Option<LinTable>> = vec![None; hc.gates.len()];
    let (mut ycut, mut zcut) = (BTreeSet::new(), BTreeSet::new());
    for (v, gate) in hc.gates.iter().enumerate() {
        if !need[v] {
            continue;
        }
        let k = deg[v];
        if k <= m {
            let t = match gate {
                Gate::Add(a) => sum_tables(&mut b, a.iter().map(|&x| ml[x].as_ref().unwrap())),
                Gate::Mul(x, y) => {
                    let (lo, hi) = if deg[*x] <= deg[*y] { (*x, *y) } else { (*y, *x) };
                    mul_tables(&mut b, ml[lo].as_ref().unwrap(), ml[hi].as_ref().unwrap(), |s| s.count_ones() as usize == k)
                }
                Gate::Prod(_) => unreachable!("normalized"),
                leaf => leaf_table(&mut b, leaf, &idx).unwrap(),
            };
            stats.table_entries += t.len();
            ml[v] = Some(t);
            continue;
        }
        // above the first cut: base is the degree of this band's cut layer
        let base = if k <= 2 * m { m } else { 2 * m };
        let t: LinTable = match gate {
            Gate::Add(a) => {
                let mut acc: BTreeMap<GateId, Vec<&Table>> = BTreeMap::new();
                for &x in a {
                    for (&cut, t) in lin[x].as_ref().unwrap() {
                        acc.entry(cut).or_default().push(t);
                    }
                }
                acc.into_iter().map(|(cut, ts)| (cut, sum_tables(&mut b, ts.into_iter()))).collect()
            }
            Gate::Mul(x, y) => {
                let (lo, hi) = if deg[*x] <= deg[*y] { (*x, *y) } else { (*y, *x) };
                if deg[lo] >= m {
                    return Err(Error::Internal("product of two cut-dependent gates".into()));
                }
                let one = b.one();
                let cut_tab;
                let hi_tab: &LinTable = if deg[hi] == base {
                    if base == m {
                        ycut.insert(hi);
                    } else {
                        zcut.insert(hi);
                    }
                    cut_tab = LinTable::from([(hi, Table::from([(0, one)]))]);
                    &cut_tab
                } else {
                    lin[hi].as_ref().unwrap()
                };
                let lo_tab = ml[lo].as_ref().unwrap();
                let want = k - base;
                let mut r = LinTable::new();
                for (&cut, t) in hi_tab {
                    let p = mul_tables(&mut b, lo_tab, t, |s| s.count_ones() as usize == want);
                    if !p.is_empty() {
                        r.insert(cut, p);
                    }
                }
                r
            }
            _ => return Err(Error::Internal(format!("leaf gate of degree {k}"))),
        };
        stats.table_entries += t.values().map(|x| x.len()).sum::<usize>();
        lin[v] = Some(t);
    }
    stats.cut_y = ycut.len();
    stats.cut_z = zcut.len();

    let mut terms = Vec::new();
    let mut ystats = Default::default();
    if deg[out] == n {
        let empty = LinTable::new();
        let top = lin[out].as_ref().unwrap_or(&empty);
        for (&j, hj) in top {
            let mid = lin[j].as_ref().unwrap_or(&empty);
            for (&i, gij) in mid {
                let fi = ml[i].as_ref().unwrap();
                let tabs = [fi, gij, hj];
                let mut var = |_: &mut Builder, slot: usize, mask: u64| tabs[slot].get(&mask).copied();
                let (o, st) = pb.build(&mut b, &mut var);
                add_stats(&mut ystats, st);
                terms.push(o);
                stats.pairs += 1;
            }
        }
    }
    let o = b.add(terms);
    let circuit = b.finish(vec![o]).prune();
    stats.p = Some(pb.report(ystats));
    stats.arcs = circuit.size();
    Ok(Extraction { circuit, stats })
}

fn add_stats(a: &mut crate::scaling::YatesStats, b: crate::scaling::YatesStats) {
    a.layer_nodes += b.layer_nodes;
    a.products += b.products;
}

/// Random 1-skew circuit in x:{0}..x:{n-1} and parameters v:p0..v:p{k-1}.
/// Gates of degree t+1 are sums of products (linear form) * (degree-t gate);
/// the output mixes `width` top-degree gates with some lower-degree noise,
/// and with `overshoot` also a few gates above degree n.
pub fn random_skew_circuit(field: FieldSpec, n: usize, params: usize, width: usize, overshoot: bool, rng: &mut Rng) -> Circuit {
    let mut b = Builder::new(field);
    let xs: Vec<GateId> = (0..n).map(|i| b.input(Name::xi(i))).collect();
    let ps: Vec<GateId> = (0..params).map(|i| b.input(Name::var(format!("p{i}")))).collect();
    let linear = |b: &mut Builder, rng: &mut Rng| {
        let mut terms = Vec::new();
        for &x in &xs {
            if rng.coin(0.4) {
                let c = field.random(rng, true);
                terms.push(b.scale(c, x));
            }
        }
        if !ps.is_empty() && rng.coin(0.5) {
            terms.push(ps[rng.below(ps.len())]);
        }
        if terms.is_empty() || rng.coin(0.3) {
            let c = field.random(rng, false);
            terms.push(b.constant(c));
        }
        b.add(terms)
    };
    let top = if overshoot { n + 2 } else { n };
    let mut layers: Vec<Vec<GateId>> = vec![vec![b.one()]];
    for t in 0..top {
        let mut next = Vec::with_capacity(width);
        for _ in 0..width {
            let mut terms = Vec::new();
            for _ in 0..1 + rng.below(2) {
                let l = linear(&mut b, rng);
                let prev = layers[t][rng.below(layers[t].len())];
                terms.push(if rng.coin(0.5) { b.mul(l, prev) } else { b.mul(prev, l) });
            }
            if !next.is_empty() && rng.coin(0.3) {
                terms.push(next[rng.below(next.len())]);
            }
            next.push(b.add(terms));
        }
        layers.push(next);
    }
    let mut outs: Vec<GateId> = layers[n].clone();
    outs.push(layers[rng.below(n)][0]);
    if overshoot {
        outs.push(layers[top][0]);
    }
    let o = b.add(outs);
    b.finish(vec![o])
}
