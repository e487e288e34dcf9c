//! Arithmetic circuit IR.
//!
//! A circuit is a list of gates in topological order over one field. Addition
//! has arbitrary fan-in, multiplication is binary. `Prod` exists only so that
//! un-normalized input can be represented and rejected by analyses that need
//! binary products; [`Circuit::normalized`] rewrites it.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::algebra::FieldSpec;
use crate::error::{Error, Result};

pub type GateId = usize;

/// Structured input name: `x:{0,4,5}`, `a:{2,3}` or free-form `v:ident`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Name {
    Sub(char, Vec<u32>),
    Var(String),
}

impl Name {
    pub fn x(set: &[u32]) -> Name {
        Name::Sub('x', set.to_vec())
    }
    pub fn y(set: &[u32]) -> Name {
        Name::Sub('y', set.to_vec())
    }
    pub fn z(set: &[u32]) -> Name {
        Name::Sub('z', set.to_vec())
    }
    pub fn mask(slot: char, mask: u64) -> Name {
        Name::Sub(slot, mask_elems(mask))
    }
    pub fn entry(i: usize, j: usize) -> Name {
        Name::Sub('a', vec![i as u32, j as u32])
    }
    pub fn var(s: impl Into<String>) -> Name {
        Name::Var(s.into())
    }
    /// Single-index helper: `x:{i}`.
    pub fn xi(i: usize) -> Name {
        Name::Sub('x', vec![i as u32])
    }

    pub fn slot(&self) -> Option<char> {
        match self {
            Name::Sub(c, _) => Some(*c),
            Name::Var(_) => None,
        }
    }

    pub fn index(&self) -> Option<&[u32]> {
        match self {
            Name::Sub(_, v) => Some(v),
            Name::Var(_) => None,
        }
    }

    pub fn to_mask(&self) -> Option<u64> {
        self.index().map(|v| v.iter().fold(0u64, |m, &e| m | 1 << e))
    }
}

pub fn mask_elems(mut m: u64) -> Vec<u32> {
    let mut v = Vec::with_capacity(m.count_ones() as usize);
    while m != 0 {
        v.push(m.trailing_zeros());
        m &= m - 1;
    }
    v
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Name::Sub(c, v) => {
                write!(f, "{c}:{{")?;
                for (k, e) in v.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str("}")
            }
            Name::Var(s) => write!(f, "v:{s}"),
        }
    }
}

impl FromStr for Name {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (head, rest) = s.split_once(':').ok_or_else(|| format!("bad name {s:?}"))?;
        let mut hc = head.chars();
        let (Some(c), None) = (hc.next(), hc.next()) else {
            return Err(format!("bad name {s:?}"));
        };
        if !c.is_ascii_lowercase() {
            return Err(format!("bad name {s:?}"));
        }
        if let Some(inner) = rest.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
            let idx: Vec<u32> = if inner.trim().is_empty() {
                vec![]
            } else {
                inner
                    .split(',')
                    .map(|t| t.trim().parse::<u32>().map_err(|_| format!("bad index in {s:?}")))
                    .collect::<std::result::Result<_, _>>()?
            };
            if matches!(c, 'x' | 'y' | 'z') && idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("subset indices must increase strictly in {s:?}"));
            }
            return Ok(Name::Sub(c, idx));
        }
        let ident_ok = !rest.is_empty() && rest.chars().all(|ch| ch.is_ascii_alphanumeric() || "_.[]-".contains(ch));
        if c == 'v' && ident_ok {
            return Ok(Name::Var(rest.to_string()));
        }
        Err(format!("bad name {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Gate {
    Input(Name),
    Const(u64),
    Add(Vec<GateId>),
    Mul(GateId, GateId),
    /// Product of more than two factors, before normalization.
    Prod(Vec<GateId>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    pub field: FieldSpec,
    pub gates: Vec<Gate>,
    pub outputs: Vec<GateId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Stats {
    pub gates: usize,
    pub inputs: usize,
    pub consts: usize,
    pub adds: usize,
    pub muls: usize,
    pub arcs: usize,
    pub depth: usize,
    pub max_degree: usize,
    pub outputs: usize,
}

impl Circuit {
    pub fn new(field: FieldSpec) -> Self {
        Circuit { field, gates: Vec::new(), outputs: Vec::new() }
    }

    /// Visits the argument ids of gate `g`.
    #[inline]
    pub fn for_args(&self, g: GateId, mut f: impl FnMut(GateId)) {
        match &self.gates[g] {
            Gate::Input(_) | Gate::Const(_) => {}
            Gate::Add(a) | Gate::Prod(a) => a.iter().for_each(|&x| f(x)),
            Gate::Mul(a, b) => {
                f(*a);
                f(*b);
            }
        }
    }

    /// Total number of arcs (argument references).
    pub fn size(&self) -> usize {
        self.gates
            .iter()
            .map(|g| match g {
                Gate::Input(_) | Gate::Const(_) => 0,
                Gate::Add(a) | Gate::Prod(a) => a.len(),
                Gate::Mul(..) => 2,
            })
            .sum()
    }

    pub fn inputs(&self) -> Vec<(GateId, &Name)> {
        self.gates
            .iter()
            .enumerate()
            .filter_map(|(i, g)| match g {
                Gate::Input(n) => Some((i, n)),
                _ => None,
            })
            .collect()
    }

    pub fn input_names(&self) -> Vec<Name> {
        self.inputs().into_iter().map(|(_, n)| n.clone()).collect()
    }

    /// Checks topological order and argument ranges.
    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gates.iter().enumerate() {
            let mut bad = false;
            self.for_args(i, |a| bad |= a >= i);
            if bad {
                return Err(Error::Shape(format!("gate {i} references a later gate")));
            }
            match g {
                Gate::Add(a) if a.is_empty() => return Err(Error::Shape(format!("empty add at gate {i}"))),
                Gate::Prod(a) if a.len() < 2 => return Err(Error::Shape(format!("short product at gate {i}"))),
                Gate::Const(v) if !self.field.is_canonical(*v) => {
                    return Err(Error::Shape(format!("non-canonical constant at gate {i}")))
                }
                _ => {}
            }
        }
        if let Some(&o) = self.outputs.iter().find(|&&o| o >= self.gates.len()) {
            return Err(Error::Shape(format!("output {o} out of range")));
        }
        Ok(())
    }

    /// Values of every gate, inputs supplied by `assign`.
    pub fn eval_gates(&self, mut assign: impl FnMut(&Name) -> Option<u64>) -> Result<Vec<u64>> {
        let f = self.field;
        let mut val = vec![0u64; self.gates.len()];
        for (i, g) in self.gates.iter().enumerate() {
            val[i] = match g {
                Gate::Input(n) => assign(n).ok_or_else(|| Error::UnassignedInput(n.to_string()))?,
                Gate::Const(c) => *c,
                Gate::Add(a) => a.iter().fold(0, |s, &x| f.add(s, val[x])),
                Gate::Mul(a, b) => f.mul(val[*a], val[*b]),
                Gate::Prod(a) => a.iter().fold(1, |s, &x| f.mul(s, val[x])),
            };
        }
        Ok(val)
    }

    pub fn eval_with(&self, assign: impl FnMut(&Name) -> Option<u64>) -> Result<Vec<u64>> {
        let val = self.eval_gates(assign)?;
        Ok(self.outputs.iter().map(|&o| val[o]).collect())
    }

    pub fn evaluate(&self, assignment: &HashMap<Name, u64>) -> Result<Vec<u64>> {
        self.eval_with(|n| assignment.get(n).copied())
    }

    /// Formal degree of every gate, counting only inputs accepted by `is_var`.
    pub fn degrees_in(&self, is_var: &dyn Fn(&Name) -> bool) -> Vec<usize> {
        let mut deg = vec![0usize; self.gates.len()];
        for (i, g) in self.gates.iter().enumerate() {
            deg[i] = match g {
                Gate::Input(n) => is_var(n) as usize,
                Gate::Const(_) => 0,
                Gate::Add(a) => a.iter().map(|&x| deg[x]).max().unwrap_or(0),
                Gate::Mul(a, b) => deg[*a] + deg[*b],
                Gate::Prod(a) => a.iter().map(|&x| deg[x]).sum(),
            };
        }
        deg
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.degrees_in(&|_| true)
    }

    pub fn stats(&self) -> Stats {
        let mut s = Stats { gates: self.gates.len(), outputs: self.outputs.len(), arcs: self.size(), ..Stats::default() };
        let mut depth = vec![0usize; self.gates.len()];
        for (i, g) in self.gates.iter().enumerate() {
            match g {
                Gate::Input(_) => s.inputs += 1,
                Gate::Const(_) => s.consts += 1,
                Gate::Add(_) => s.adds += 1,
                Gate::Mul(..) | Gate::Prod(_) => s.muls += 1,
            }
            let mut d = 0;
            self.for_args(i, |a| d = d.max(depth[a] + 1));
            depth[i] = d;
        }
        s.depth = self.outputs.iter().map(|&o| depth[o]).max().unwrap_or(0);
        let deg = self.degrees();
        s.max_degree = self.outputs.iter().map(|&o| deg[o]).max().unwrap_or(0);
        s
    }

    /// Rewrites every `Prod` into a left-leaning chain of binary `Mul`s.
    pub fn normalized(&self) -> Circuit {
        if !self.gates.iter().any(|g| matches!(g, Gate::Prod(_))) {
            return self.clone();
        }
        let mut b = Builder::new(self.field);
        let map = b.import(self, |n, b| b.input(n.clone()));
        b.finish(self.outputs.iter().map(|&o| map[o]).collect())
    }

    /// Drops gates that no output depends on. Input gates are kept so the
    /// variable set is unchanged.
    pub fn prune(&self) -> Circuit {
        let mut live = vec![false; self.gates.len()];
        for &o in &self.outputs {
            live[o] = true;
        }
        for i in (0..self.gates.len()).rev() {
            if live[i] {
                let mut stack = Vec::new();
                self.for_args(i, |a| stack.push(a));
                for a in stack {
                    live[a] = true;
                }
            } else if matches!(self.gates[i], Gate::Input(_)) {
                live[i] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.gates.len()];
        let mut gates = Vec::new();
        for (i, g) in self.gates.iter().enumerate() {
            if !live[i] {
                continue;
            }
            remap[i] = gates.len();
            gates.push(match g {
                Gate::Add(a) => Gate::Add(a.iter().map(|&x| remap[x]).collect()),
                Gate::Prod(a) => Gate::Prod(a.iter().map(|&x| remap[x]).collect()),
                Gate::Mul(a, b) => Gate::Mul(remap[*a], remap[*b]),
                other => other.clone(),
            });
        }
        Circuit { field: self.field, gates, outputs: self.outputs.iter().map(|&o| remap[o]).collect() }
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        writeln!(s, "circuit v1").unwrap();
        writeln!(s, "field {}", self.field).unwrap();
        for (i, g) in self.gates.iter().enumerate() {
            match g {
                Gate::Input(n) => writeln!(s, "in {i} {n}"),
                Gate::Const(c) => writeln!(s, "const {i} {}", self.field.format(*c)),
                Gate::Add(a) => {
                    write!(s, "add {i}").unwrap();
                    a.iter().for_each(|x| write!(s, " {x}").unwrap());
                    writeln!(s)
                }
                Gate::Mul(a, b) => writeln!(s, "mul {i} {a} {b}"),
                Gate::Prod(a) => {
                    write!(s, "mul {i}").unwrap();
                    a.iter().for_each(|x| write!(s, " {x}").unwrap());
                    writeln!(s)
                }
            }
            .unwrap();
        }
        write!(s, "out").unwrap();
        self.outputs.iter().for_each(|o| write!(s, " {o}").unwrap());
        writeln!(s).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Circuit> {
        let mut field: Option<FieldSpec> = None;
        let mut gates = Vec::new();
        let mut outputs: Option<Vec<GateId>> = None;
        let mut seen_header = false;
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if !seen_header {
                if line != "circuit v1" {
                    return Err(err("expected header `circuit v1`".into()));
                }
                seen_header = true;
                continue;
            }
            let (kw, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            if kw == "field" {
                if field.is_some() {
                    return Err(err("duplicate field line".into()));
                }
                field = Some(rest.parse().map_err(|e: Error| err(e.to_string()))?);
                continue;
            }
            let f = field.ok_or_else(|| err("field line must precede gates".into()))?;
            if outputs.is_some() {
                return Err(err("content after out line".into()));
            }
            let ids = |toks: &[&str]| -> Result<Vec<usize>> {
                toks.iter().map(|t| t.parse::<usize>().map_err(|_| err(format!("bad id {t:?}")))).collect()
            };
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if kw == "out" {
                let o = ids(&toks)?;
                if let Some(bad) = o.iter().find(|&&x| x >= gates.len()) {
                    return Err(err(format!("output id {bad} not defined")));
                }
                outputs = Some(o);
                continue;
            }
            let Some((&id_tok, args)) = toks.split_first() else {
                return Err(err(format!("missing id after {kw}")));
            };
            let id: usize = id_tok.parse().map_err(|_| err(format!("bad id {id_tok:?}")))?;
            if id != gates.len() {
                return Err(err(format!("expected id {}, found {id}", gates.len())));
            }
            let gate = match kw {
                "in" => {
                    if args.len() != 1 {
                        return Err(err("in takes one name".into()));
                    }
                    Gate::Input(args[0].parse().map_err(err)?)
                }
                "const" => {
                    if args.len() != 1 {
                        return Err(err("const takes one value".into()));
                    }
                    let v = f.parse_value(args[0]).map_err(|e| err(e.to_string()))?;
                    Gate::Const(v)
                }
                "add" | "mul" => {
                    let a = ids(args)?;
                    if let Some(bad) = a.iter().find(|&&x| x >= id) {
                        return Err(err(format!("argument {bad} does not precede gate {id}")));
                    }
                    match (kw, a.len()) {
                        ("add", 0) => return Err(err("add needs arguments".into())),
                        ("add", _) => Gate::Add(a),
                        (_, 2) => Gate::Mul(a[0], a[1]),
                        (_, n) if n > 2 => Gate::Prod(a),
                        _ => return Err(err("mul needs two arguments".into())),
                    }
                }
                other => return Err(err(format!("unknown keyword {other:?}"))),
            };
            gates.push(gate);
        }
        let field = field.ok_or(Error::Parse { line: 0, msg: "missing field line".into() })?;
        let outputs = outputs.ok_or(Error::Parse { line: 0, msg: "missing out line".into() })?;
        Ok(Circuit { field, gates, outputs })
    }
}

/// Incremental circuit construction with input and constant deduplication.
pub struct Builder {
    field: FieldSpec,
    gates: Vec<Gate>,
    inputs: HashMap<Name, GateId>,
    consts: HashMap<u64, GateId>,
}

impl Builder {
    pub fn new(field: FieldSpec) -> Self {
        Builder { field, gates: Vec::new(), inputs: HashMap::new(), consts: HashMap::new() }
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gate(&self, id: GateId) -> &Gate {
        &self.gates[id]
    }

    pub fn input(&mut self, name: Name) -> GateId {
        if let Some(&id) = self.inputs.get(&name) {
            return id;
        }
        let id = self.push(Gate::Input(name.clone()));
        self.inputs.insert(name, id);
        id
    }

    pub fn constant(&mut self, v: u64) -> GateId {
        if let Some(&id) = self.consts.get(&v) {
            return id;
        }
        let id = self.push(Gate::Const(v));
        self.consts.insert(v, id);
        id
    }

    pub fn zero(&mut self) -> GateId {
        self.constant(0)
    }

    pub fn one(&mut self) -> GateId {
        self.constant(1)
    }

    pub fn is_const(&self, id: GateId, v: u64) -> bool {
        matches!(self.gates[id], Gate::Const(c) if c == v)
    }

    /// Sum of `args`; a single argument is returned as is, none gives 0.
    pub fn add(&mut self, args: Vec<GateId>) -> GateId {
        match args.len() {
            0 => self.zero(),
            1 => args[0],
            _ => self.push(Gate::Add(args)),
        }
    }

    pub fn mul(&mut self, a: GateId, b: GateId) -> GateId {
        self.push(Gate::Mul(a, b))
    }

    /// Binary product chain; empty gives 1.
    pub fn prod(&mut self, args: &[GateId]) -> GateId {
        match args.split_first() {
            None => self.one(),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &x| self.mul(acc, x)),
        }
    }

    /// Un-normalized n-ary product gate.
    pub fn raw_prod(&mut self, args: Vec<GateId>) -> GateId {
        self.push(Gate::Prod(args))
    }

    /// `c * g`, without a gate when `c == 1`.
    pub fn scale(&mut self, c: u64, g: GateId) -> GateId {
        if c == 1 {
            return g;
        }
        let k = self.constant(c);
        self.mul(k, g)
    }

    /// Linear combination, skipping zero coefficients.
    pub fn lin(&mut self, terms: &[(u64, GateId)]) -> GateId {
        let args: Vec<GateId> = terms.iter().filter(|t| t.0 != 0).map(|&(c, g)| self.scale(c, g)).collect();
        self.add(args)
    }

    fn push(&mut self, g: Gate) -> GateId {
        self.gates.push(g);
        self.gates.len() - 1
    }

    /// Copies `c` into this builder. Inputs are resolved through `on_input`
    /// (which may build arbitrary subcircuits); returns the new id of every
    /// old gate. Products are normalized on the way in.
    pub fn import(&mut self, c: &Circuit, mut on_input: impl FnMut(&Name, &mut Builder) -> GateId) -> Vec<GateId> {
        assert_eq!(c.field, self.field, "importing a circuit over another field");
        let mut map = Vec::with_capacity(c.gates.len());
        for g in &c.gates {
            let id = match g {
                Gate::Input(n) => on_input(n, self),
                Gate::Const(v) => self.constant(*v),
                Gate::Add(a) => {
                    let args = a.iter().map(|&x| map[x]).collect();
                    self.push(Gate::Add(args))
                }
                Gate::Mul(a, b) => self.mul(map[*a], map[*b]),
                Gate::Prod(a) => {
                    let args: Vec<GateId> = a.iter().map(|&x| map[x]).collect();
                    self.prod(&args)
                }
            };
            map.push(id);
        }
        map
    }

    pub fn finish(self, outputs: Vec<GateId>) -> Circuit {
        Circuit { field: self.field, gates: self.gates, outputs }
    }
}

/// Output of [`homogenize`]: `comp[g][k]` is the gate computing the degree-k
/// part of original gate `g` (`None` when that part is identically zero).
pub struct Homogenized {
    pub circuit: Circuit,
    pub comp: Vec<Vec<Option<GateId>>>,
    pub degree: usize,
}

/// Size constant for [`homogenize`] on q-skew circuits: the result has at
/// most `homogenize_bound(q) * d * size` arcs, plus one for each output.
///
/// Each binary product with a side of formal degree at most q expands into at
/// most (q+1)(d+1) products of two arcs each, feeding at most d+1 sums.
pub fn homogenize_k(q: usize) -> usize {
    3 * (q + 1)
}

/// Splits each gate into homogeneous components of degree 0..=d in the
/// variables accepted by `is_var` (other inputs count as degree 0). Outputs of
/// the new circuit are, for each original output, its d+1 components in order.
pub fn homogenize(c: &Circuit, d: usize, is_var: &dyn Fn(&Name) -> bool) -> Result<Homogenized> {
    let deg = c.degrees_in(is_var);
    if let Some(&o) = c.outputs.iter().find(|&&o| deg[o] > d) {
        return Err(Error::DegreeBound { found: deg[o], bound: d });
    }
    homogenize_truncated(c, d, is_var)
}

/// Like [`homogenize`], but components above degree d are dropped instead of
/// rejected.
pub fn homogenize_truncated(c: &Circuit, d: usize, is_var: &dyn Fn(&Name) -> bool) -> Result<Homogenized> {
    let c = c.normalized();
    let deg = c.degrees_in(is_var);
    let mut b = Builder::new(c.field);
    let mut comp: Vec<Vec<Option<GateId>>> = Vec::with_capacity(c.gates.len());
    for g in &c.gates {
        let mut parts = vec![None; d + 1];
        match g {
            Gate::Input(n) => {
                let id = b.input(n.clone());
                parts[is_var(n) as usize] = Some(id);
            }
            Gate::Const(v) => parts[0] = Some(b.constant(*v)),
            Gate::Add(a) => {
                for (k, slot) in parts.iter_mut().enumerate() {
                    let args: Vec<GateId> = a.iter().filter_map(|&x| comp[x][k]).collect();
                    if !args.is_empty() {
                        *slot = Some(b.add(args));
                    }
                }
            }
            Gate::Mul(x, y) => {
                let (lo, hi) = if deg[*x] <= deg[*y] { (*x, *y) } else { (*y, *x) };
                for k in 0..=d {
                    let mut terms = Vec::new();
                    for i in 0..=deg[lo].min(k) {
                        if let (Some(p), Some(q)) = (comp[lo][i], comp[hi][k - i]) {
                            terms.push(b.mul(p, q));
                        }
                    }
                    if !terms.is_empty() {
                        parts[k] = Some(b.add(terms));
                    }
                }
            }
            Gate::Prod(_) => unreachable!("normalized above"),
        }
        comp.push(parts);
    }
    let mut outputs = Vec::new();
    for &o in &c.outputs {
        for k in 0..=d {
            let id = match comp[o][k] {
                Some(id) => id,
                None => b.zero(),
            };
            outputs.push(id);
        }
    }
    Ok(Homogenized { circuit: b.finish(outputs), comp, degree: d })
}

/// Least q such that every product is binary with one side of formal degree
/// at most q (degrees in the variables accepted by `is_var`). `None` when no
/// such q exists, i.e. an un-normalized product is present.
pub fn analyze_skew_in(c: &Circuit, is_var: &dyn Fn(&Name) -> bool) -> Option<usize> {
    let deg = c.degrees_in(is_var);
    let mut q = 0;
    for g in &c.gates {
        match g {
            Gate::Prod(_) => return None,
            Gate::Mul(a, b) => q = q.max(deg[*a].min(deg[*b])),
            _ => {}
        }
    }
    Some(q)
}

pub fn analyze_skew(c: &Circuit) -> Option<usize> {
    analyze_skew_in(c, &|_| true)
}

/// Size constant of [`baur_strassen`]: output arcs <= 4 * input arcs.
///
/// The forward copy costs s arcs. Every arc contributes one term to an
/// adjoint sum (s arcs), and every binary product adds two products for the
/// partials (4 arcs per 2 original arcs, at most 2s).
pub const BAUR_STRASSEN_K: usize = 4;

/// Reverse-mode differentiation: one output per name in `wrt`, the partial
/// derivative of the single output with respect to that input.
pub fn baur_strassen(c: &Circuit, wrt: &[Name]) -> Result<Circuit> {
    if c.outputs.len() != 1 {
        return Err(Error::SingleOutputRequired(c.outputs.len()));
    }
    let c = c.normalized();
    let mut b = Builder::new(c.field);
    let fwd = b.import(&c, |n, b| b.input(n.clone()));
    let n = c.gates.len();
    // adjoint contributions, collected from parents in reverse order
    let mut contrib: Vec<Vec<GateId>> = vec![Vec::new(); n];
    let mut adj: Vec<Option<GateId>> = vec![None; n];
    let one = b.one();
    contrib[c.outputs[0]].push(one);
    for i in (0..n).rev() {
        if contrib[i].is_empty() {
            continue;
        }
        let a = b.add(std::mem::take(&mut contrib[i]));
        adj[i] = Some(a);
        match &c.gates[i] {
            Gate::Add(args) => {
                for &x in args {
                    contrib[x].push(a);
                }
            }
            Gate::Mul(x, y) => {
                let dx = b.mul(a, fwd[*y]);
                contrib[*x].push(dx);
                let dy = b.mul(a, fwd[*x]);
                contrib[*y].push(dy);
            }
            _ => {}
        }
    }
    let by_name: HashMap<&Name, GateId> = c.inputs().into_iter().map(|(i, nm)| (nm, i)).collect();
    let mut outs = Vec::with_capacity(wrt.len());
    for nm in wrt {
        let id = match by_name.get(nm).and_then(|&i| adj[i]) {
            Some(a) => a,
            None => b.zero(),
        };
        outs.push(id);
    }
    Ok(b.finish(outs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Rng;

    fn z7() -> FieldSpec {
        FieldSpec::Prime(7)
    }

    #[test]
    fn names_roundtrip() {
        for s in ["x:{0,3,5}", "y:{}", "a:{2,2}", "v:foo_1", "z:{7}"] {
            let n: Name = s.parse().unwrap();
            assert_eq!(n.to_string(), s);
        }
        assert!("x:{3,1}".parse::<Name>().is_err());
        assert!("v:".parse::<Name>().is_err());
        assert!("xy:{1}".parse::<Name>().is_err());
    }

    #[test]
    fn mul_eval() {
        let mut b = Builder::new(z7());
        let x = b.input(Name::var("x"));
        let y = b.input(Name::var("y"));
        let m = b.mul(x, y);
        let c = b.finish(vec![m]);
        let out = c.eval_with(|n| Some(if *n == Name::var("x") { 2 } else { 3 })).unwrap();
        assert_eq!(out, vec![6]);
        assert!(matches!(c.eval_with(|_| None), Err(Error::UnassignedInput(_))));
    }

    #[test]
    fn char2_double_vanishes() {
        let mut b = Builder::new(FieldSpec::Gf2(8));
        let x = b.input(Name::xi(0));
        let s = b.add(vec![x, x]);
        let c = b.finish(vec![s]);
        assert_eq!(c.eval_with(|_| Some(0x53)).unwrap(), vec![0]);
    }

    #[test]
    fn homogenize_small() {
        // x1 + x1 x2 with d = 2
        let f = FieldSpec::Prime(101);
        let mut b = Builder::new(f);
        let x1 = b.input(Name::xi(1));
        let x2 = b.input(Name::xi(2));
        let m = b.mul(x1, x2);
        let s = b.add(vec![x1, m]);
        let c = b.finish(vec![s]);
        let h = homogenize(&c, 2, &|_| true).unwrap();
        let vals = h.circuit.eval_with(|n| Some(if *n == Name::xi(1) { 5 } else { 7 })).unwrap();
        assert_eq!(vals, vec![0, 5, 35]);
        assert!(matches!(homogenize(&c, 1, &|_| true), Err(Error::DegreeBound { found: 2, bound: 1 })));
    }

    #[test]
    fn skew_examples() {
        let f = z7();
        let mut b = Builder::new(f);
        let xs: Vec<_> = (0..4).map(|i| b.input(Name::xi(i))).collect();
        let s1 = b.add(vec![xs[0], xs[1]]);
        let s2 = b.add(vec![xs[2], xs[3]]);
        let p = b.mul(s1, s2);
        let c = b.finish(vec![p]);
        assert_eq!(analyze_skew(&c), Some(1));

        let mut b = Builder::new(f);
        let xs: Vec<_> = (0..4).map(|i| b.input(Name::xi(i))).collect();
        let p1 = b.mul(xs[0], xs[1]);
        let p2 = b.mul(xs[2], xs[3]);
        let p = b.mul(p1, p2);
        assert_eq!(analyze_skew(&b.finish(vec![p])), Some(2));

        let mut b = Builder::new(f);
        let xs: Vec<_> = (0..3).map(|i| b.input(Name::xi(i))).collect();
        let p = b.raw_prod(xs);
        let c = b.finish(vec![p]);
        assert_eq!(analyze_skew(&c), None);
        assert_eq!(analyze_skew(&c.normalized()), Some(1));
    }

    #[test]
    fn gradient_small() {
        let f = FieldSpec::Prime(101);
        let mut b = Builder::new(f);
        let x1 = b.input(Name::xi(1));
        let x2 = b.input(Name::xi(2));
        let m = b.mul(x1, x2);
        let c = b.finish(vec![m]);
        let g = baur_strassen(&c, &[Name::xi(1), Name::xi(2), Name::xi(3)]).unwrap();
        let v = g.eval_with(|n| Some(if *n == Name::xi(1) { 4 } else { 9 })).unwrap();
        assert_eq!(v, vec![9, 4, 0]);

        let g2 = FieldSpec::Gf2(16);
        let mut b = Builder::new(g2);
        let x = b.input(Name::xi(0));
        let sq = b.mul(x, x);
        let c = b.finish(vec![sq]);
        let g = baur_strassen(&c, &[Name::xi(0)]).unwrap();
        assert_eq!(g.eval_with(|_| Some(0x1234)).unwrap(), vec![0]);

        let two = Circuit { field: f, gates: vec![Gate::Const(1)], outputs: vec![0, 0] };
        assert_eq!(baur_strassen(&two, &[]), Err(Error::SingleOutputRequired(2)));
    }

    #[test]
    fn text_roundtrip_and_errors() {
        let f = FieldSpec::Gf2(64);
        let mut b = Builder::new(f);
        let x = b.input(Name::x(&[0, 2]));
        let k = b.constant(0xdead_beef_0123_4567);
        let m = b.mul(x, k);
        let s = b.add(vec![m, x, k]);
        let c = b.finish(vec![s, m]);
        let t = c.to_text();
        assert_eq!(Circuit::from_text(&t).unwrap(), c);

        let empty = Circuit::new(FieldSpec::default());
        assert_eq!(Circuit::from_text(&empty.to_text()).unwrap(), empty);

        let bad = "circuit v1\nfield p=7\nin 0 v:a\nmul 1 0 5\nout 1\n";
        assert!(matches!(Circuit::from_text(bad), Err(Error::Parse { line: 4, .. })));
        let bad = "circuit v1\nfield p=7\nin 1 v:a\nout 0\n";
        assert!(matches!(Circuit::from_text(bad), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn prune_keeps_semantics() {
        let f = FieldSpec::Prime(101);
        let mut b = Builder::new(f);
        let x = b.input(Name::xi(0));
        let y = b.input(Name::xi(1));
        let _dead = b.mul(x, y);
        let s = b.add(vec![x, y]);
        let c = b.finish(vec![s]);
        let p = c.prune();
        assert_eq!(p.gates.len(), 3);
        let mut rng = Rng::new(1);
        let vals: Vec<u64> = (0..2).map(|_| f.random(&mut rng, false)).collect();
        let a = |n: &Name| Some(vals[n.index().unwrap()[0] as usize]);
        assert_eq!(c.eval_with(a).unwrap(), p.eval_with(a).unwrap());
    }
}
