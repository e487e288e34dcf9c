//! Shared oracles and instance generators for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use kronscale::algebra::{FieldSpec, Rng};
use kronscale::circuit::{Circuit, Gate, Name};
use kronscale::sieving::{Graph, Triples};

/// Monomial as sorted (name, exponent) pairs.
pub type Mono = Vec<(Name, u32)>;
/// Sparse polynomial; zero coefficients are never stored.
pub type Poly = BTreeMap<Mono, u64>;

fn mono_mul(a: &Mono, b: &Mono) -> Mono {
    let mut m: BTreeMap<Name, u32> = a.iter().cloned().collect();
    for (n, e) in b {
        *m.entry(n.clone()).or_insert(0) += e;
    }
    m.into_iter().collect()
}

fn add_into(f: FieldSpec, acc: &mut Poly, m: Mono, v: u64) {
    let e = acc.entry(m.clone()).or_insert(0);
    *e = f.add(*e, v);
    if *e == 0 {
        acc.remove(&m);
    }
}

pub fn poly_add(f: FieldSpec, a: &Poly, b: &Poly) -> Poly {
    let mut out = a.clone();
    for (m, &v) in b {
        add_into(f, &mut out, m.clone(), v);
    }
    out
}

pub fn poly_mul(f: FieldSpec, a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ma, &va) in a {
        for (mb, &vb) in b {
            add_into(f, &mut out, mono_mul(ma, mb), f.mul(va, vb));
        }
    }
    out
}

/// Expands every output of `c` into a sparse polynomial, gate by gate.
/// Panics if some intermediate polynomial exceeds `cap` terms.
pub fn expand(c: &Circuit, cap: usize) -> Vec<Poly> {
    let f = c.field;
    let mut val: Vec<Poly> = Vec::with_capacity(c.gates.len());
    for g in &c.gates {
        let p = match g {
            Gate::Input(n) => [(vec![(n.clone(), 1)], 1)].into_iter().collect(),
            Gate::Const(v) => [(vec![], *v)].into_iter().filter(|t| t.1 != 0).collect(),
            Gate::Add(a) => a.iter().fold(Poly::new(), |acc, &i| poly_add(f, &acc, &val[i])),
            Gate::Mul(a, b) => poly_mul(f, &val[*a], &val[*b]),
            Gate::Prod(a) => a.iter().fold([(vec![], 1)].into_iter().collect(), |acc, &i| poly_mul(f, &acc, &val[i])),
        };
        assert!(p.len() <= cap, "symbolic expansion exceeds {cap} terms");
        val.push(p);
    }
    c.outputs.iter().map(|&o| val[o].clone()).collect()
}

/// Coefficient of the product of `vars` (each to the first power), as a
/// polynomial in the remaining names.
pub fn coeff_of(p: &Poly, vars: &[Name]) -> Poly {
    let mut out = Poly::new();
    for (m, &v) in p {
        let hit = vars.iter().all(|x| m.iter().any(|(n, e)| n == x && *e == 1));
        let extra = m.iter().any(|(n, e)| vars.contains(n) && *e != 1);
        if hit && !extra {
            let rest: Mono = m.iter().filter(|(n, _)| !vars.contains(n)).cloned().collect();
            out.insert(rest, v);
        }
    }
    out
}

pub fn partial(f: FieldSpec, p: &Poly, x: &Name) -> Poly {
    let mut out = Poly::new();
    for (m, &v) in p {
        if let Some(pos) = m.iter().position(|(n, _)| n == x) {
            let e = m[pos].1;
            let mut rest = m.clone();
            if e == 1 {
                rest.remove(pos);
            } else {
                rest[pos].1 -= 1;
            }
            add_into(f, &mut out, rest, f.mul(v, f.from_u64(e as u64)));
        }
    }
    out
}

pub fn random_assignment(c: &Circuit, rng: &mut Rng) -> HashMap<Name, u64> {
    let mut names = c.input_names();
    names.sort();
    names.dedup();
    names.into_iter().map(|n| (n, c.field.random(rng, false))).collect()
}

/// Random simple graph on `n` vertices, each pair an edge with probability `p`.
pub fn random_graph(n: usize, directed: bool, p: f64, rng: &mut Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && (directed || u < v) && rng.coin(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, directed, edges)
}

fn add_edge(g: &mut Graph, u: usize, v: usize) {
    let has = g.edges.iter().any(|&(a, b)| (a, b) == (u, v) || (!g.directed && (a, b) == (v, u)));
    if !has {
        g.edges.push((u, v));
    }
}

/// k-path instance: a sparse random graph with a path on random vertices
/// added, of k edges when `plant` is set and k-1 edges otherwise (a near
/// miss that the oracle still classifies).
pub fn kpath_instance(rng: &mut Rng, plant: bool) -> (Graph, usize) {
    let n = rng.range(4, 12);
    let k = rng.range(2, 6.min(n - 1));
    let directed = rng.coin(0.5);
    let mut g = random_graph(n, directed, if plant { 0.15 } else { 0.12 }, rng);
    let len = if plant { k } else { k - 1 };
    {
        let mut vs: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut vs);
        for w in vs[..=len].windows(2) {
            add_edge(&mut g, w[0], w[1]);
        }
    }
    rng.shuffle(&mut g.edges);
    (g, k)
}

/// 3DM instance with up to 8 triples, containing k disjoint triples when
/// planted and k-1 otherwise.
pub fn threedm_instance(rng: &mut Rng, plant: bool) -> (Triples, usize) {
    let k = rng.range(1, 3);
    let sizes = [rng.range(k, 4), rng.range(k, 4), rng.range(k, 4)];
    let m = rng.range(1, 8);
    let mut triples: Vec<[usize; 3]> = Vec::new();
    {
        let mut perms: Vec<Vec<usize>> = sizes.iter().map(|&s| (0..s).collect()).collect();
        for p in &mut perms {
            rng.shuffle(p);
        }
        for i in 0..if plant { k } else { k - 1 } {
            triples.push([perms[0][i], perms[1][i], perms[2][i]]);
        }
    }
    while triples.len() < m.max(k) {
        triples.push([rng.below(sizes[0]), rng.below(sizes[1]), rng.below(sizes[2])]);
    }
    rng.shuffle(&mut triples);
    let text = format!(
        "{} {} {} {}\n{}",
        sizes[0],
        sizes[1],
        sizes[2],
        triples.len(),
        triples.iter().map(|t| format!("{} {} {}\n", t[0], t[1], t[2])).collect::<String>()
    );
    (Triples::from_text(&text).unwrap(), k)
}

/// Bipartite long-cycle instance: sides of total size at most 12, a sparse
/// random edge set, and when planting an even cycle of length at least k.
pub fn longcycle_instance(rng: &mut Rng, plant: bool) -> (Graph, usize) {
    let n1 = rng.range(2, 6);
    let n2 = rng.range(2, 6);
    let n = n1 + n2;
    let k = rng.range(3, 6);
    let mut edges = Vec::new();
    for u in 0..n1 {
        for v in n1..n {
            if rng.coin(if plant { 0.12 } else { 0.2 }) {
                edges.push((u, v));
            }
        }
    }
    let mut g = Graph::new(n, false, edges);
    g.bipartition = Some((n1, n2));
    if plant {
        let half = k.div_ceil(2).max(2);
        if half <= n1.min(n2) {
            let half = rng.range(half, n1.min(n2));
            let mut us: Vec<usize> = (0..n1).collect();
            let mut ws: Vec<usize> = (n1..n).collect();
            rng.shuffle(&mut us);
            rng.shuffle(&mut ws);
            for i in 0..half {
                add_edge(&mut g, us[i], ws[i]);
                add_edge(&mut g, us[(i + 1) % half], ws[i]);
            }
        }
    }
    g.edges.iter_mut().for_each(|e| {
        if e.0 > e.1 {
            *e = (e.1, e.0);
        }
    });
    rng.shuffle(&mut g.edges);
    (g, k)
}
