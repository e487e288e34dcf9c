//! Determinantal and odd sieving over characteristic-2 fields, and the
//! detection algorithms built on them: k-path, 3-matroid intersection
//! (with 3-dimensional matching as a special case) and long cycles in
//! bipartite graphs.
//!
//! Determinantal sieving decides whether a polynomial has a term `m` with
//! `A[.,supp(m)]` nonsingular; odd sieving asks the same for the odd support
//! `osupp(m)` (variables with odd exponent) and full row rank.

use std::collections::HashMap;

use serde::Serialize;

use crate::algebra::{FieldSpec, Matrix, Rng};
use crate::circuit::{analyze_skew_in, Builder, Circuit, GateId, Name};
use crate::coeffx::{extract_coeff_tripartition, multilinear_eval, Method, TriOptions};
use crate::error::{Error, Result};
use crate::scaling::{DecProvider, TrivialProvider};

pub const DEFAULT_FIELD: FieldSpec = FieldSpec::Gf2(32);

/// Largest k for which sieving extracts coefficients with the direct method
/// when no method is requested.
pub const DIRECT_MAX_K: usize = 12;

#[derive(Clone, Copy)]
pub struct SieveOptions<'a> {
    pub trials: usize,
    pub method: Option<Method>,
    pub tri: TriOptions,
    pub provider: &'a dyn DecProvider,
    /// Field for the circuits built by the detectors.
    pub field: FieldSpec,
}

impl Default for SieveOptions<'static> {
    fn default() -> Self {
        SieveOptions { trials: 7, method: None, tri: TriOptions::default(), provider: &TrivialProvider, field: DEFAULT_FIELD }
    }
}

impl SieveOptions<'_> {
    fn method_for(&self, k: usize) -> Method {
        self.method.unwrap_or(if k <= DIRECT_MAX_K { Method::Direct } else { Method::Tripartition })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SieveOutcome {
    pub found: bool,
    /// Trials actually run; detection stops at the first hit.
    pub trials: usize,
    pub hit: Option<usize>,
}

impl SieveOutcome {
    fn absorb(&mut self, other: SieveOutcome) {
        if !self.found && other.found {
            self.found = true;
            self.hit = other.hit.map(|h| h + self.trials);
        }
        self.trials += other.trials;
    }
}

fn require_char2(f: FieldSpec) -> Result<()> {
    if f.characteristic() != 2 {
        return Err(Error::Characteristic(format!("sieving needs characteristic 2, got {f}")));
    }
    Ok(())
}

fn require_order(f: FieldSpec, need: usize, what: &str) -> Result<()> {
    if f.order() < need as u128 {
        return Err(Error::FieldTooSmall(format!("{what} needs |F| >= {need}, {f} is smaller")));
    }
    Ok(())
}

/// `k x n` Vandermonde matrix `A[i,j] = p_j^i` over `n` distinct random points.
pub fn vandermonde(k: usize, n: usize, f: FieldSpec, rng: &mut Rng) -> Result<Matrix> {
    require_order(f, n + 1, "a Vandermonde matrix")?;
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let p = f.random(rng, false);
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    let mut m = Matrix::zeros(k, n);
    for (j, &p) in pts.iter().enumerate() {
        let mut v = f.one();
        for i in 0..k {
            m.set(i, j, v);
            v = f.mul(v, p);
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Transform {
    Det,
    Odd,
}

/// One randomized evaluation of the sieving polynomial: random values for
/// the x variables, y symbolic, coefficient of the product of all y.
///
/// For the odd transform the extra variable z is set to 1: every y enters
/// paired with exactly one z, so the coefficient of the full y product
/// already sits at z-degree k.
fn sieve_trial(c: &Circuit, vars: &[Name], a: &Matrix, t: Transform, method: Method, opts: &SieveOptions, rng: &mut Rng) -> Result<bool> {
    let f = c.field;
    let k = a.rows;
    let idx: HashMap<&Name, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let xh: Vec<u64> = vars.iter().map(|_| f.random(rng, true)).collect();
    let xp: Vec<u64> = match t {
        Transform::Det => Vec::new(),
        Transform::Odd => vars.iter().map(|_| f.random(rng, true)).collect(),
    };
    let entries = |i: usize| -> Vec<(u64, u64)> {
        let mut e = Vec::with_capacity(k + 1);
        let scale = match t {
            Transform::Det => xh[i],
            Transform::Odd => {
                e.push((0, xh[i]));
                f.mul(xh[i], xp[i])
            }
        };
        for j in 0..k {
            let v = f.mul(scale, a.get(j, i));
            if v != 0 {
                e.push((1u64 << j, v));
            }
        }
        e
    };
    let value = match method {
        Method::Direct => multilinear_eval(c, k, &mut |nm| idx.get(nm).map(|&i| entries(i)))?,
        Method::Tripartition => {
            let mut b = Builder::new(f);
            let ys: Vec<GateId> = (0..k).map(|j| b.input(Name::y(&[j as u32]))).collect();
            let one = b.one();
            let map = b.import(c, |nm, b| match idx.get(nm) {
                Some(&i) => {
                    let terms: Vec<(u64, GateId)> = entries(i).into_iter().map(|(s, v)| (v, if s == 0 { one } else { ys[s.trailing_zeros() as usize] })).collect();
                    b.lin(&terms)
                }
                None => b.input(nm.clone()),
            });
            let outs = c.outputs.iter().map(|&o| map[o]).collect();
            let sub = b.finish(outs);
            let is_x = |n: &Name| idx.contains_key(n);
            let is_y = |n: &Name| n.slot() == Some('y');
            if analyze_skew_in(c, &is_x).is_some_and(|q| q <= 1) && !analyze_skew_in(&sub, &is_y).is_some_and(|q| q <= 1) {
                return Err(Error::Internal("substitution broke 1-skewness".into()));
            }
            let yvars: Vec<Name> = (0..k).map(|j| Name::y(&[j as u32])).collect();
            let ex = extract_coeff_tripartition(&sub, &yvars, opts.tri, opts.provider)?;
            ex.circuit.eval_with(|_| None)?[0]
        }
    };
    Ok(value != 0)
}

fn sieve(c: &Circuit, vars: &[Name], a: &Matrix, t: Transform, opts: &SieveOptions, rng: &mut Rng) -> Result<SieveOutcome> {
    let f = c.field;
    require_char2(f)?;
    if a.cols != vars.len() {
        return Err(Error::Shape(format!("sieve matrix has {} columns for {} variables", a.cols, vars.len())));
    }
    let k = a.rows;
    match t {
        Transform::Det => require_order(f, 2 * k, "determinantal sieving")?,
        Transform::Odd => {
            let idx: HashMap<&Name, ()> = vars.iter().map(|v| (v, ())).collect();
            let d = c.degrees_in(&|n| idx.contains_key(n)).into_iter().max().unwrap_or(0);
            require_order(f, d + k, "odd sieving")?
        }
    }
    let method = opts.method_for(k);
    let mut out = SieveOutcome::default();
    for trial in 0..opts.trials {
        out.trials += 1;
        if sieve_trial(c, vars, a, t, method, opts, rng)? {
            out.found = true;
            out.hit = Some(trial);
            break;
        }
    }
    Ok(out)
}

/// Determinantal sieving: is there a term `m` of `c` with `A[.,supp(m)]`
/// nonsingular? One-sided: `found` is always correct.
pub fn det_sieve(c: &Circuit, vars: &[Name], a: &Matrix, rng: &mut Rng, opts: &SieveOptions) -> Result<SieveOutcome> {
    sieve(c, vars, a, Transform::Det, opts, rng)
}

/// Odd sieving: is there a term `m` of `c` with `A[.,osupp(m)]` of full row
/// rank? One-sided like [`det_sieve`].
pub fn odd_sieve(c: &Circuit, vars: &[Name], a: &Matrix, rng: &mut Rng, opts: &SieveOptions) -> Result<SieveOutcome> {
    sieve(c, vars, a, Transform::Odd, opts, rng)
}

/// Directed or undirected simple graph on vertices `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub n: usize,
    pub directed: bool,
    pub edges: Vec<(usize, usize)>,
    /// Declared sides: the first `.0` vertices form U, the rest W.
    pub bipartition: Option<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, directed: bool, edges: Vec<(usize, usize)>) -> Self {
        Graph { n, directed, edges, bipartition: None }
    }

    /// `directed|undirected n m [n1 n2]` followed by `m` lines `u v`
    /// (0-based vertices).
    pub fn from_text(text: &str) -> Result<Graph> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let bad = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
        let (hl, head) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty graph file".into() })?;
        let tok: Vec<&str> = head.split_whitespace().collect();
        let directed = match tok.first() {
            Some(&"directed") => true,
            Some(&"undirected") => false,
            _ => return Err(bad(hl, format!("expected directed|undirected, got {head:?}"))),
        };
        if tok.len() != 3 && tok.len() != 5 {
            return Err(bad(hl, format!("bad header {head:?}")));
        }
        let num = |s: &str, line: usize| s.parse::<usize>().map_err(|_| bad(line, format!("bad number {s:?}")));
        let n = num(tok[1], hl)?;
        let m = num(tok[2], hl)?;
        let bipartition = if tok.len() == 5 {
            let (a, b) = (num(tok[3], hl)?, num(tok[4], hl)?);
            if a + b != n {
                return Err(bad(hl, format!("bipartition {a}+{b} does not cover {n} vertices")));
            }
            Some((a, b))
        } else {
            None
        };
        let mut edges = Vec::with_capacity(m);
        for (ln, l) in lines {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 2 {
                return Err(bad(ln, format!("expected an edge `u v`, got {l:?}")));
            }
            let (u, v) = (num(t[0], ln)?, num(t[1], ln)?);
            if u >= n || v >= n {
                return Err(bad(ln, format!("vertex out of range 0..{n}")));
            }
            if u == v {
                return Err(bad(ln, format!("self-loop at {u}")));
            }
            edges.push((u, v));
        }
        if edges.len() != m {
            return Err(Error::Parse { line: 1, msg: format!("header announces {m} edges, found {}", edges.len()) });
        }
        Ok(Graph { n, directed, edges, bipartition })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}", if self.directed { "directed" } else { "undirected" }, self.n, self.edges.len());
        if let Some((a, b)) = self.bipartition {
            s += &format!(" {a} {b}");
        }
        s.push('\n');
        for (u, v) in &self.edges {
            s += &format!("{u} {v}\n");
        }
        s
    }

    /// Successor lists; undirected edges go both ways.
    pub fn out_adj(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            if !self.directed {
                adj[v].push(u);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// `true` for vertices on side U. Uses the declared bipartition when
    /// present, a 2-colouring otherwise.
    pub fn sides(&self) -> Result<Vec<bool>> {
        if let Some((a, _)) = self.bipartition {
            let side: Vec<bool> = (0..self.n).map(|v| v < a).collect();
            if self.edges.iter().any(|&(u, v)| side[u] == side[v]) {
                return Err(Error::Bipartiteness);
            }
            return Ok(side);
        }
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut col: Vec<Option<bool>> = vec![None; self.n];
        for s in 0..self.n {
            if col[s].is_some() {
                continue;
            }
            col[s] = Some(true);
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                let cu = col[u].unwrap();
                for &w in &adj[u] {
                    match col[w] {
                        None => {
                            col[w] = Some(!cu);
                            stack.push(w);
                        }
                        Some(cw) if cw == cu => return Err(Error::Bipartiteness),
                        _ => {}
                    }
                }
            }
        }
        Ok(col.into_iter().map(|c| c.unwrap()).collect())
    }
}

/// Transfer-matrix walk polynomial `1^T A_1 ... A_k alpha` with
/// `A_i[u,w] = y_{i,(u,w)} x_u` for random labels y and `alpha[w] = x_w`.
/// Homogeneous of degree k+1 and 1-skew; its multilinear terms are the
/// labelled paths on k+1 vertices.
pub fn kpath_circuit(g: &Graph, k: usize, f: FieldSpec, rng: &mut Rng) -> (Circuit, Vec<Name>) {
    let mut b = Builder::new(f);
    let vars: Vec<Name> = (0..g.n).map(Name::xi).collect();
    let xs: Vec<GateId> = vars.iter().map(|v| b.input(v.clone())).collect();
    let adj = g.out_adj();
    let mut cur: Vec<Option<GateId>> = xs.iter().map(|&x| Some(x)).collect();
    for _ in 0..k {
        let mut next = vec![None; g.n];
        for u in 0..g.n {
            let terms: Vec<(u64, GateId)> = adj[u].iter().filter_map(|&w| cur[w].map(|gw| (f.random(rng, true), gw))).collect();
            if !terms.is_empty() {
                let s = b.lin(&terms);
                next[u] = Some(b.mul(xs[u], s));
            }
        }
        cur = next;
    }
    let live: Vec<GateId> = cur.into_iter().flatten().collect();
    let out = b.add(live);
    (b.finish(vec![out]), vars)
}

/// Does `g` contain a simple path with `k` edges?
pub fn kpath_detect(g: &Graph, k: usize, rng: &mut Rng, opts: &SieveOptions) -> Result<SieveOutcome> {
    require_char2(opts.field)?;
    let mut out = SieveOutcome::default();
    if k + 1 > g.n {
        return Ok(out);
    }
    let a = vandermonde(k + 1, g.n, opts.field, rng)?;
    let one = SieveOptions { trials: 1, ..*opts };
    for _ in 0..opts.trials {
        let (c, vars) = kpath_circuit(g, k, opts.field, rng);
        out.absorb(det_sieve(&c, &vars, &a, rng, &one)?);
        if out.found {
            break;
        }
    }
    Ok(out)
}

/// Exhaustive DFS for a simple path with `k` edges.
pub fn kpath_bruteforce(g: &Graph, k: usize) -> bool {
    fn go(adj: &[Vec<usize>], u: usize, left: usize, seen: &mut [bool]) -> bool {
        if left == 0 {
            return true;
        }
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                let ok = go(adj, w, left - 1, seen);
                seen[w] = false;
                if ok {
                    return true;
                }
            }
        }
        false
    }
    let adj = g.out_adj();
    let mut seen = vec![false; g.n];
    (0..g.n).any(|s| {
        seen[s] = true;
        let ok = go(&adj, s, k, &mut seen);
        seen[s] = false;
        ok
    })
}

/// Determinant of a square matrix of gates (`None` for zero entries) by
/// the clow-sequence dynamic program. In characteristic 2 all signs are
/// +1, so the sum over clow sequences with increasing heads is the
/// determinant. Every product multiplies an entry by a partial sum, so the
/// result is skew in the entries.
pub fn mv_det_into(b: &mut Builder, m: &[Vec<Option<GateId>>]) -> Result<GateId> {
    require_char2(b.field())?;
    let k = m.len();
    if m.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("determinant of a non-square matrix".into()));
    }
    if k == 0 {
        return Ok(b.one());
    }
    // cur[h][i]: clow sequences of the current length whose open clow has
    // head h and is at vertex i (i == h for a clow with no edges yet).
    let mut cur: Vec<Vec<Option<GateId>>> = vec![vec![None; k]; k];
    let one = b.one();
    for (h, row) in cur.iter_mut().enumerate() {
        row[h] = Some(one);
    }
    let mut finals = Vec::new();
    for l in 0..k {
        let last = l + 1 == k;
        let mut next: Vec<Vec<Vec<GateId>>> = vec![vec![Vec::new(); k]; k];
        let mut closed: Vec<Vec<GateId>> = vec![Vec::new(); k];
        for h in 0..k {
            for i in h..k {
                let Some(v) = cur[h][i] else { continue };
                if let Some(e) = m[i][h] {
                    let p = b.mul(e, v);
                    if last {
                        finals.push(p);
                    } else {
                        closed[h].push(p);
                    }
                }
                if !last {
                    for j in h + 1..k {
                        if let Some(e) = m[i][j] {
                            let p = b.mul(e, v);
                            next[h][j].push(p);
                        }
                    }
                }
            }
        }
        if last {
            break;
        }
        // A closed clow with head h may be followed by any head h' > h.
        let mut prefix: Option<GateId> = None;
        for h2 in 0..k {
            if let Some(p) = prefix {
                next[h2][h2].push(p);
            }
            if !closed[h2].is_empty() {
                let c = b.add(std::mem::take(&mut closed[h2]));
                prefix = Some(match prefix {
                    Some(p) => b.add(vec![p, c]),
                    None => c,
                });
            }
        }
        cur = next.into_iter().map(|r| r.into_iter().map(|v| if v.is_empty() { None } else { Some(b.add(v)) }).collect()).collect();
    }
    Ok(b.add(finals))
}

/// Determinant circuit of the symbolic `k x k` matrix with inputs `a:{i,j}`.
pub fn mv_det_circuit(f: FieldSpec, k: usize) -> Result<Circuit> {
    let mut b = Builder::new(f);
    let m: Vec<Vec<Option<GateId>>> = (0..k).map(|i| (0..k).map(|j| Some(b.input(Name::entry(i, j)))).collect()).collect();
    let out = mv_det_into(&mut b, &m)?;
    Ok(b.finish(vec![out]))
}

/// `det(A diag(x) B^T)` over variables `x:{l}`, one per column.
pub fn matroid3_circuit(f: FieldSpec, a: &Matrix, bm: &Matrix) -> Result<(Circuit, Vec<Name>)> {
    if a.rows != bm.rows || a.cols != bm.cols {
        return Err(Error::Shape(format!("A is {}x{}, B is {}x{}", a.rows, a.cols, bm.rows, bm.cols)));
    }
    let (k, m) = (a.rows, a.cols);
    let mut b = Builder::new(f);
    let vars: Vec<Name> = (0..m).map(Name::xi).collect();
    let xs: Vec<GateId> = vars.iter().map(|v| b.input(v.clone())).collect();
    let mut ent = vec![vec![None; k]; k];
    for (i, row) in ent.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            let terms: Vec<(u64, GateId)> = (0..m).map(|l| (f.mul(a.get(i, l), bm.get(j, l)), xs[l])).filter(|t| t.0 != 0).collect();
            if !terms.is_empty() {
                *e = Some(b.lin(&terms));
            }
        }
    }
    let out = mv_det_into(&mut b, &ent)?;
    Ok((b.finish(vec![out]), vars))
}

/// Is there a set S of k columns with `A[.,S]`, `B[.,S]` and `C[.,S]` all
/// nonsingular?
pub fn matroid3_detect(a: &Matrix, bm: &Matrix, c: &Matrix, rng: &mut Rng, opts: &SieveOptions) -> Result<SieveOutcome> {
    if c.rows != a.rows || c.cols != a.cols {
        return Err(Error::Shape(format!("A is {}x{}, C is {}x{}", a.rows, a.cols, c.rows, c.cols)));
    }
    let (circ, vars) = matroid3_circuit(opts.field, a, bm)?;
    if a.rows > a.cols {
        return Ok(SieveOutcome::default());
    }
    det_sieve(&circ, &vars, c, rng, opts)
}

pub fn matroid3_bruteforce(f: FieldSpec, a: &Matrix, bm: &Matrix, c: &Matrix) -> bool {
    let k = a.rows;
    if k > a.cols {
        return false;
    }
    let mut s: Vec<usize> = (0..k).collect();
    loop {
        if [a, bm, c].iter().all(|m| m.select_cols(&s).det(f) != 0) {
            return true;
        }
        // next k-subset in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return false;
            }
            i -= 1;
            if s[i] < a.cols - k + i {
                break;
            }
        }
        s[i] += 1;
        for j in i + 1..k {
            s[j] = s[j - 1] + 1;
        }
    }
}

/// 3-dimensional matching instance: triples over three ground sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triples {
    pub sizes: [usize; 3],
    pub triples: Vec<[usize; 3]>,
}

impl Triples {
    /// `n1 n2 n3 m` followed by `m` lines `a b c` (0-based).
    pub fn from_text(text: &str) -> Result<Triples> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let nums = |ln: usize, l: &str| -> Result<Vec<usize>> {
            l.split_whitespace().map(|t| t.parse().map_err(|_| Error::Parse { line: ln + 1, msg: format!("bad number {t:?}") })).collect()
        };
        let (hl, head) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty triples file".into() })?;
        let h = nums(hl, head)?;
        if h.len() != 4 {
            return Err(Error::Parse { line: hl + 1, msg: "expected `n1 n2 n3 m`".into() });
        }
        let sizes = [h[0], h[1], h[2]];
        let mut triples = Vec::new();
        for (ln, l) in lines {
            let t = nums(ln, l)?;
            if t.len() != 3 || (0..3).any(|i| t[i] >= sizes[i]) {
                return Err(Error::Parse { line: ln + 1, msg: format!("bad triple {l:?}") });
            }
            triples.push([t[0], t[1], t[2]]);
        }
        if triples.len() != h[3] {
            return Err(Error::Parse { line: hl + 1, msg: format!("header announces {} triples, found {}", h[3], triples.len()) });
        }
        Ok(Triples { sizes, triples })
    }

    pub fn to_text(&self) -> String {
        let [a, b, c] = self.sizes;
        let mut s = format!("{a} {b} {c} {}\n", self.triples.len());
        for t in &self.triples {
            s += &format!("{} {} {}\n", t[0], t[1], t[2]);
        }
        s
    }
}

/// The three matrices whose column j is the Vandermonde column of the
/// j-th triple's element in each coordinate. Common bases are exactly the
/// k pairwise disjoint triples.
pub fn threedm_matrices(t: &Triples, k: usize, f: FieldSpec, rng: &mut Rng) -> Result<[Matrix; 3]> {
    let n = t.sizes.iter().copied().max().unwrap_or(0);
    let v = vandermonde(k, n, f, rng)?;
    let side = |c: usize| {
        let mut m = Matrix::zeros(k, t.triples.len());
        for (j, tr) in t.triples.iter().enumerate() {
            for i in 0..k {
                m.set(i, j, v.get(i, tr[c]));
            }
        }
        m
    };
    Ok([side(0), side(1), side(2)])
}

pub fn threedm_detect(t: &Triples, k: usize, rng: &mut Rng, opts: &SieveOptions) -> Result<SieveOutcome> {
    let [a, b, c] = threedm_matrices(t, k, opts.field, rng)?;
    matroid3_detect(&a, &b, &c, rng, opts)
}

/// Are there k pairwise disjoint triples?
pub fn threedm_bruteforce(t: &Triples, k: usize) -> bool {
    fn go(t: &[[usize; 3]], from: usize, left: usize, used: &mut [Vec<bool>; 3]) -> bool {
        if left == 0 {
            return true;
        }
        for i in from..t.len() {
            let tr = t[i];
            if (0..3).all(|c| !used[c][tr[c]]) {
                (0..3).for_each(|c| used[c][tr[c]] = true);
                let ok = go(t, i + 1, left - 1, used);
                (0..3).for_each(|c| used[c][tr[c]] = false);
                if ok {
                    return true;
                }
            }
        }
        false
    }
    let mut used = [vec![false; t.sizes[0]], vec![false; t.sizes[1]], vec![false; t.sizes[2]]];
    go(&t.triples, 0, k, &mut used)
}

/// `det A` for the edge-variable matrix of `g` minus the edge `{s,t}`,
/// with `A[t,s] = 1` and a unit diagonal. Variables are `x:{e}` for the
/// remaining edge indices, returned alongside their edge indices.
///
/// Surviving terms are an (s,t)-path times squares of disjoint edges;
/// longer cycles cancel against their reversals. The unit diagonal lets
/// vertices off the path stay uncovered, without it the remaining vertices
/// would need a cycle cover of their own.
pub fn longcycle_circuit(g: &Graph, st: usize, f: FieldSpec) -> Result<(Circuit, Vec<Name>, Vec<usize>)> {
    let (s, t) = g.edges[st];
    let mut b = Builder::new(f);
    let mut ent: Vec<Vec<Option<GateId>>> = vec![vec![None; g.n]; g.n];
    let one = b.one();
    for (v, row) in ent.iter_mut().enumerate() {
        row[v] = Some(one);
    }
    let mut vars = Vec::new();
    let mut ids = Vec::new();
    for (e, &(u, w)) in g.edges.iter().enumerate() {
        if e == st || (u, w) == (s, t) || (u, w) == (t, s) {
            continue;
        }
        let x = b.input(Name::xi(e));
        vars.push(Name::xi(e));
        ids.push(e);
        ent[u][w] = Some(x);
        ent[w][u] = Some(x);
    }
    ent[t][s] = Some(one);
    let out = mv_det_into(&mut b, &ent)?;
    Ok((b.finish(vec![out]), vars, ids))
}

/// Does the bipartite graph `g` contain a cycle of length at least `k`?
pub fn longcycle_detect(g: &Graph, k: usize, rng: &mut Rng, opts: &SieveOptions) -> Result<SieveOutcome> {
    require_char2(opts.field)?;
    let side = g.sides()?;
    let us: Vec<usize> = (0..g.n).filter(|&v| side[v]).collect();
    let upos: HashMap<usize, usize> = us.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let rows = k.div_ceil(2).max(1);
    let mut out = SieveOutcome::default();
    if rows > us.len() {
        return Ok(out);
    }
    let vm = vandermonde(rows, us.len(), opts.field, rng)?;
    for st in 0..g.edges.len() {
        let (c, vars, ids) = longcycle_circuit(g, st, opts.field)?;
        let mut a = Matrix::zeros(rows, ids.len());
        for (j, &e) in ids.iter().enumerate() {
            let (u, w) = g.edges[e];
            let col = upos[if side[u] { &u } else { &w }];
            for i in 0..rows {
                a.set(i, j, vm.get(i, col));
            }
        }
        out.absorb(odd_sieve(&c, &vars, &a, rng, opts)?);
        if out.found {
            break;
        }
    }
    Ok(out)
}

/// Exhaustive search for a simple cycle of length at least `max(k, 3)`.
pub fn longcycle_bruteforce(g: &Graph, k: usize) -> bool {
    fn go(adj: &[Vec<usize>], s: usize, u: usize, len: usize, need: usize, seen: &mut [bool]) -> bool {
        for &w in &adj[u] {
            if w == s && len + 1 >= need {
                return true;
            }
            if w > s && !seen[w] {
                seen[w] = true;
                let ok = go(adj, s, w, len + 1, need, seen);
                seen[w] = false;
                if ok {
                    return true;
                }
            }
        }
        false
    }
    let g2 = Graph { directed: false, ..g.clone() };
    let adj = g2.out_adj();
    let need = k.max(3);
    let mut seen = vec![false; g.n];
    (0..g.n).any(|s| {
        seen[s] = true;
        let ok = go(&adj, s, s, 0, need, &mut seen);
        seen[s] = false;
        ok
    })
}
