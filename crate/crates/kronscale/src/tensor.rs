//! Explicit set-multilinear three-tensors and rank decompositions.
//!
//! Ground elements are bit positions 0..63; a subset is a `u64` mask. Within a
//! side, subsets are ordered colexicographically, which for masks is plain
//! numeric order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::algebra::{FieldSpec, Matrix};
use crate::circuit::mask_elems;
use crate::error::{Error, Result};

/// Upper bound on `|ground|` for explicit P_q enumeration.
pub const MAX_EXPLICIT_GROUND: usize = 21;

pub type Triple = (u64, u64, u64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tensor {
    pub field: FieldSpec,
    pub ground: u64,
    pub entries: BTreeMap<Triple, u64>,
}

impl Tensor {
    pub fn zero(field: FieldSpec, ground: u64) -> Self {
        Tensor { field, ground, entries: BTreeMap::new() }
    }

    /// Adds `v` to the coefficient of (a,b,c), dropping it if it cancels.
    pub fn accumulate(&mut self, t: Triple, v: u64) -> Result<()> {
        for m in [t.0, t.1, t.2] {
            if m & !self.ground != 0 {
                return Err(Error::Shape(format!("subset {m:#x} outside the ground set")));
            }
        }
        let f = self.field;
        let e = self.entries.entry(t).or_insert(0);
        *e = f.add(*e, v);
        if *e == 0 {
            self.entries.remove(&t);
        }
        Ok(())
    }

    pub fn coeff(&self, t: Triple) -> u64 {
        self.entries.get(&t).copied().unwrap_or(0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Relabels ground element e to e + offset.
    pub fn shifted(&self, offset: u32) -> Result<Tensor> {
        if offset > 0 && self.ground.leading_zeros() < offset {
            return Err(Error::TooLarge("shifted ground exceeds 64 elements".into()));
        }
        Ok(Tensor {
            field: self.field,
            ground: self.ground << offset,
            entries: self.entries.iter().map(|(&(a, b, c), &v)| ((a << offset, b << offset, c << offset), v)).collect(),
        })
    }

    /// Distinct subsets used in each slot, colex ordered.
    pub fn sides(&self) -> [Vec<u64>; 3] {
        let mut s: [BTreeSet<u64>; 3] = Default::default();
        for &(a, b, c) in self.entries.keys() {
            s[0].insert(a);
            s[1].insert(b);
            s[2].insert(c);
        }
        s.map(|x| x.into_iter().collect())
    }
}

/// Masks of all k-subsets of `ground` in colex (numeric) order.
pub fn subsets_of(ground: u64, k: usize) -> Vec<u64> {
    let elems = mask_elems(ground);
    let n = elems.len();
    if k > n {
        return vec![];
    }
    let mut out = Vec::new();
    // colex order over positions, then mapped to the actual elements
    if k == 0 {
        return vec![0];
    }
    let mut pos: u128 = (1u128 << k) - 1;
    let limit = 1u128 << n;
    while pos < limit {
        let mut m = 0u64;
        let mut p = pos;
        while p != 0 {
            m |= 1u64 << elems[p.trailing_zeros() as usize];
            p &= p - 1;
        }
        out.push(m);
        // Gosper's hack
        let c = pos & pos.wrapping_neg();
        let r = pos + c;
        pos = (((r ^ pos) >> 2) / c) | r;
    }
    out
}

pub fn ground_mask(elems: &[u32]) -> Result<u64> {
    let mut m = 0u64;
    for &e in elems {
        if e >= 64 {
            return Err(Error::TooLarge(format!("ground element {e} does not fit a 64-bit mask")));
        }
        if m >> e & 1 == 1 {
            return Err(Error::Shape(format!("duplicate ground element {e}")));
        }
        m |= 1 << e;
    }
    Ok(m)
}

/// The balanced tripartitioning tensor P_q over `ground` (|ground| = 3q).
pub fn generate_p(field: FieldSpec, q: usize, ground: &[u32]) -> Result<Tensor> {
    if ground.len() != 3 * q {
        return Err(Error::Shape(format!("ground of size {} for q={q}", ground.len())));
    }
    if ground.len() > MAX_EXPLICIT_GROUND {
        return Err(Error::TooLarge(format!("P_{q} has ground of size {}", ground.len())));
    }
    let g = ground_mask(ground)?;
    let mut t = Tensor::zero(field, g);
    for a in subsets_of(g, q) {
        for b in subsets_of(g & !a, q) {
            t.entries.insert((a, b, g & !a & !b), 1);
        }
    }
    Ok(t)
}

pub fn generate_p_std(field: FieldSpec, q: usize) -> Result<Tensor> {
    let ground: Vec<u32> = (0..3 * q as u32).collect();
    generate_p(field, q, &ground)
}

pub fn kronecker(s: &Tensor, t: &Tensor) -> Result<Tensor> {
    if s.field != t.field {
        return Err(Error::FieldMismatch(s.field.to_string(), t.field.to_string()));
    }
    if s.ground & t.ground != 0 {
        return Err(Error::GroundOverlap);
    }
    let f = s.field;
    let mut out = Tensor::zero(f, s.ground | t.ground);
    for (&(a, b, c), &v) in &s.entries {
        for (&(d, e, g), &w) in &t.entries {
            out.entries.insert((a | d, b | e, c | g), f.mul(v, w));
        }
    }
    Ok(out)
}

/// s-th Kronecker power, copy k living on the ground shifted by k * width.
pub fn kronecker_power(t: &Tensor, s: usize, width: u32) -> Result<Tensor> {
    if t.ground >> width != 0 && width < 64 {
        return Err(Error::Shape("tensor ground exceeds the stated width".into()));
    }
    if s == 0 {
        let mut one = Tensor::zero(t.field, 0);
        one.entries.insert((0, 0, 0), 1);
        return Ok(one);
    }
    if (s as u32) * width > 64 {
        return Err(Error::TooLarge("Kronecker power ground exceeds 64 elements".into()));
    }
    let mut acc = t.clone();
    for k in 1..s {
        acc = kronecker(&acc, &t.shifted(k as u32 * width)?)?;
    }
    Ok(acc)
}

/// Rank-r expression T = sum_l u_l(x) v_l(y) w_l(z): row `i` of `u` holds the
/// coefficients of the variable indexed by `sides[0][i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankDecomposition {
    pub field: FieldSpec,
    pub sides: [Vec<u64>; 3],
    pub rank: usize,
    pub mats: [Matrix; 3],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Counterexample(Triple),
}

impl RankDecomposition {
    pub fn check_shape(&self) -> Result<()> {
        for k in 0..3 {
            let m = &self.mats[k];
            if m.rows != self.sides[k].len() || m.cols != self.rank {
                return Err(Error::Shape(format!(
                    "matrix {} is {}x{}, expected {}x{}",
                    ["U", "V", "W"][k],
                    m.rows,
                    m.cols,
                    self.sides[k].len(),
                    self.rank
                )));
            }
            if self.sides[k].windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Shape("side index lists must be strictly colex increasing".into()));
            }
        }
        Ok(())
    }

    pub fn ground(&self) -> u64 {
        self.sides.iter().flatten().fold(0, |m, &s| m | s)
    }

    /// Nonzero entries of column `l` of matrix `k`, as (row, value).
    pub fn column(&self, k: usize, l: usize) -> Vec<(usize, u64)> {
        let m = &self.mats[k];
        (0..m.rows).filter_map(|i| Some((i, m.get(i, l))).filter(|t| t.1 != 0)).collect()
    }

    /// Nonzero entries of row `i` of matrix `k`, as (column, value).
    pub fn row(&self, k: usize, i: usize) -> Vec<(usize, u64)> {
        let m = &self.mats[k];
        (0..m.cols).filter_map(|l| Some((l, m.get(i, l))).filter(|t| t.1 != 0)).collect()
    }

    pub fn to_text(&self) -> String {
        let f = self.field;
        let mut s = String::new();
        writeln!(s, "rankdec v1").unwrap();
        writeln!(s, "field {f}").unwrap();
        writeln!(s, "r={}", self.rank).unwrap();
        for (k, tag) in ["xside:", "yside:", "zside:"].iter().enumerate() {
            write!(s, "{tag}").unwrap();
            for &m in &self.sides[k] {
                let e: Vec<String> = mask_elems(m).iter().map(|x| x.to_string()).collect();
                write!(s, " {{{}}}", e.join(",")).unwrap();
            }
            writeln!(s).unwrap();
        }
        for (k, tag) in ["U:", "V:", "W:"].iter().enumerate() {
            writeln!(s, "{tag}").unwrap();
            let m = &self.mats[k];
            for i in 0..m.rows {
                let row: Vec<String> = (0..m.cols).map(|l| f.format(m.get(i, l))).collect();
                writeln!(s, "{}", row.join(" ")).unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<RankDecomposition> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let perr = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let mut it = lines.into_iter().peekable();
        let (ln, head) = it.next().ok_or_else(|| perr(0, "empty file"))?;
        if head != "rankdec v1" {
            return Err(perr(ln, "expected header `rankdec v1`"));
        }
        let (ln, fl) = it.next().ok_or_else(|| perr(ln, "missing field line"))?;
        let field: FieldSpec = fl
            .strip_prefix("field")
            .ok_or_else(|| perr(ln, "expected field line"))?
            .parse()
            .map_err(|e: Error| perr(ln, &e.to_string()))?;
        let (ln, rl) = it.next().ok_or_else(|| perr(ln, "missing r= line"))?;
        let rank: usize = rl
            .strip_prefix("r=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| perr(ln, "expected r=<int>"))?;
        let mut sides: [Vec<u64>; 3] = Default::default();
        for (k, tag) in ["xside:", "yside:", "zside:"].iter().enumerate() {
            let (ln, l) = it.next().ok_or_else(|| perr(0, &format!("missing {tag}")))?;
            let mut body = l.strip_prefix(tag).ok_or_else(|| perr(ln, &format!("expected {tag}")))?.to_string();
            while let Some(&(_, nxt)) = it.peek() {
                if nxt.starts_with('{') {
                    body.push(' ');
                    body.push_str(nxt);
                    it.next();
                } else {
                    break;
                }
            }
            sides[k] = parse_subsets(&body).map_err(|m| perr(ln, &m))?;
        }
        let mut mats: Vec<Matrix> = Vec::new();
        for (k, tag) in ["U:", "V:", "W:"].iter().enumerate() {
            let (ln, l) = it.next().ok_or_else(|| perr(0, &format!("missing {tag}")))?;
            if l != *tag {
                return Err(perr(ln, &format!("expected {tag}")));
            }
            let mut m = Matrix::zeros(sides[k].len(), rank);
            for i in 0..sides[k].len() {
                let (ln, row) = it.next().ok_or_else(|| perr(ln, "matrix truncated"))?;
                let vals: Vec<&str> = row.split_whitespace().collect();
                if vals.len() != rank {
                    return Err(perr(ln, &format!("expected {rank} values, found {}", vals.len())));
                }
                for (l, v) in vals.iter().enumerate() {
                    m.set(i, l, field.parse_value(v).map_err(|e| perr(ln, &e.to_string()))?);
                }
            }
            mats.push(m);
        }
        if let Some((ln, _)) = it.next() {
            return Err(perr(ln, "trailing content"));
        }
        let [u, v, w]: [Matrix; 3] = mats.try_into().expect("three matrices");
        let d = RankDecomposition { field, sides, rank, mats: [u, v, w] };
        d.check_shape()?;
        Ok(d)
    }
}

fn parse_subsets(body: &str) -> std::result::Result<Vec<u64>, String> {
    let mut out = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        let open = rest.strip_prefix('{').ok_or_else(|| format!("expected '{{' in {rest:?}"))?;
        let close = open.find('}').ok_or("unterminated subset")?;
        let inner = &open[..close];
        let mut m = 0u64;
        for t in inner.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let e: u32 = t.parse().map_err(|_| format!("bad element {t:?}"))?;
            if e >= 64 {
                return Err(format!("element {e} exceeds 63"));
            }
            m |= 1 << e;
        }
        out.push(m);
        rest = open[close + 1..].trim_start();
    }
    Ok(out)
}

/// Checks the decomposition coefficient by coefficient over all indexed
/// triples. Returns the colex-least failing triple, if any.
pub fn verify_decomposition(t: &Tensor, d: &RankDecomposition) -> Result<Verdict> {
    d.check_shape()?;
    if t.field != d.field {
        return Err(Error::FieldMismatch(t.field.to_string(), d.field.to_string()));
    }
    let f = t.field;
    let index: [HashMap<u64, usize>; 3] =
        std::array::from_fn(|k| d.sides[k].iter().enumerate().map(|(i, &m)| (m, i)).collect());
    for &(a, b, c) in t.entries.keys() {
        if !index[0].contains_key(&a) || !index[1].contains_key(&b) || !index[2].contains_key(&c) {
            return Err(Error::Shape("tensor support not covered by the decomposition's index lists".into()));
        }
    }
    // sparse accumulation of sum_l U[.,l] (x) V[.,l] (x) W[.,l]
    let mut acc: HashMap<(usize, usize, usize), u64> = HashMap::new();
    for l in 0..d.rank {
        let (cu, cv, cw) = (d.column(0, l), d.column(1, l), d.column(2, l));
        for &(i, u) in &cu {
            for &(j, v) in &cv {
                let uv = f.mul(u, v);
                for &(k, w) in &cw {
                    let e = acc.entry((i, j, k)).or_insert(0);
                    *e = f.add(*e, f.mul(uv, w));
                }
            }
        }
    }
    let mut bad: Vec<Triple> = Vec::new();
    for (&(i, j, k), &v) in &acc {
        let tr = (d.sides[0][i], d.sides[1][j], d.sides[2][k]);
        if v != t.coeff(tr) {
            bad.push(tr);
        }
    }
    for (&(a, b, c), &v) in &t.entries {
        let key = (index[0][&a], index[1][&b], index[2][&c]);
        if acc.get(&key).copied().unwrap_or(0) != v {
            bad.push((a, b, c));
        }
    }
    Ok(match bad.into_iter().min_by_key(|&(a, b, c)| (a, b, c)) {
        None => Verdict::Ok,
        Some(tr) => Verdict::Counterexample(tr),
    })
}

/// One rank-one term per nonzero entry.
pub fn trivial_decomposition(t: &Tensor) -> RankDecomposition {
    let sides = t.sides();
    let index: [HashMap<u64, usize>; 3] =
        std::array::from_fn(|k| sides[k].iter().enumerate().map(|(i, &m)| (m, i)).collect());
    let r = t.nnz();
    let mut mats = [
        Matrix::zeros(sides[0].len(), r),
        Matrix::zeros(sides[1].len(), r),
        Matrix::zeros(sides[2].len(), r),
    ];
    for (l, (&(a, b, c), &v)) in t.entries.iter().enumerate() {
        mats[0].set(index[0][&a], l, v);
        mats[1].set(index[1][&b], l, 1);
        mats[2].set(index[2][&c], l, 1);
    }
    RankDecomposition { field: t.field, sides, rank: r, mats }
}

/// Direct evaluation of sum s_ABC x_A y_B z_C.
pub fn tensor_eval(
    t: &Tensor,
    x: &dyn Fn(u64) -> Option<u64>,
    y: &dyn Fn(u64) -> Option<u64>,
    z: &dyn Fn(u64) -> Option<u64>,
) -> Result<u64> {
    let f = t.field;
    let miss = |slot: char, m: u64| Error::UnassignedInput(crate::circuit::Name::mask(slot, m).to_string());
    let mut acc = 0;
    for (&(a, b, c), &v) in &t.entries {
        let xa = x(a).ok_or_else(|| miss('x', a))?;
        let yb = y(b).ok_or_else(|| miss('y', b))?;
        let zc = z(c).ok_or_else(|| miss('z', c))?;
        acc = f.add(acc, f.mul(v, f.mul(xa, f.mul(yb, zc))));
    }
    Ok(acc)
}

pub fn tensor_eval_maps(t: &Tensor, x: &HashMap<u64, u64>, y: &HashMap<u64, u64>, z: &HashMap<u64, u64>) -> Result<u64> {
    tensor_eval(t, &|m| x.get(&m).copied(), &|m| y.get(&m).copied(), &|m| z.get(&m).copied())
}

/// The 2x2 matrix multiplication tensor sum x_ij y_jk z_ik, with x_ij on
/// element 2i+j, y_jk on 4+2j+k and z_ik on 8+2i+k.
pub fn mm2_tensor(field: FieldSpec) -> Tensor {
    let mut t = Tensor::zero(field, 0xfff);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                t.entries.insert((1 << (2 * i + j), 1 << (4 + 2 * j + k), 1 << (8 + 2 * i + k)), 1);
            }
        }
    }
    t
}

/// Strassen's rank-7 decomposition of [`mm2_tensor`].
pub fn strassen_decomposition(field: FieldSpec) -> RankDecomposition {
    let m1 = field.neg(1);
    // columns M1..M7; rows are the four entries 11,12,21,22
    let u: [[i64; 7]; 4] = [[1, 0, 1, 0, 1, -1, 0], [0, 0, 0, 0, 1, 0, 1], [0, 1, 0, 0, 0, 1, 0], [1, 1, 0, 1, 0, 0, -1]];
    let v: [[i64; 7]; 4] = [[1, 1, 0, -1, 0, 1, 0], [0, 0, 1, 0, 0, 1, 0], [0, 0, 0, 1, 0, 0, 1], [1, 0, -1, 0, 1, 0, 1]];
    let w: [[i64; 7]; 4] = [[1, 0, 0, 1, -1, 0, 1], [0, 0, 1, 0, 1, 0, 0], [0, 1, 0, 1, 0, 0, 0], [1, -1, 1, 0, 0, 1, 0]];
    let conv = |a: [[i64; 7]; 4]| {
        Matrix::from_rows(a.iter().map(|r| r.iter().map(|&c| if c < 0 { m1 } else { c as u64 }).collect()).collect())
    };
    RankDecomposition {
        field,
        sides: [(0..4).map(|i| 1u64 << i).collect(), (4..8).map(|i| 1u64 << i).collect(), (8..12).map(|i| 1u64 << i).collect()],
        rank: 7,
        mats: [conv(u), conv(v), conv(w)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Rng;

    fn f() -> FieldSpec {
        FieldSpec::default()
    }

    fn multinomial(q: u64) -> u64 {
        let fact = |n: u64| (1..=n).product::<u64>();
        fact(3 * q) / fact(q).pow(3)
    }

    #[test]
    fn p_counts() {
        for (q, want) in [(0usize, 1usize), (1, 6), (2, 90), (3, 1680)] {
            let t = generate_p_std(f(), q).unwrap();
            assert_eq!(t.nnz(), want);
            assert_eq!(want as u64, multinomial(q as u64));
            for (&(a, b, c), &v) in &t.entries {
                assert_eq!(v, 1);
                assert_eq!(a & b | a & c | b & c, 0);
                assert_eq!(a | b | c, t.ground);
                assert!([a, b, c].iter().all(|m| m.count_ones() as usize == q));
            }
        }
        assert!(matches!(generate_p_std(f(), 8), Err(Error::TooLarge(_))));
    }

    #[test]
    fn subsets_colex() {
        let s = subsets_of(0b1111, 2);
        assert_eq!(s, vec![0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]);
        assert_eq!(subsets_of(0b1010_0100, 2), vec![0b0010_0100, 0b1000_0100, 0b1010_0000]);
        assert_eq!(subsets_of(u64::MAX, 1).len(), 64);
    }

    #[test]
    fn kronecker_counts_and_overlap() {
        let p1 = generate_p_std(f(), 1).unwrap();
        let k = kronecker(&p1, &p1.shifted(3).unwrap()).unwrap();
        assert_eq!(k.nnz(), 36);
        assert_eq!(kronecker(&p1, &p1), Err(Error::GroundOverlap));
        let mut unit = Tensor::zero(f(), 1 << 10);
        unit.entries.insert((1 << 10, 0, 0), 1);
        let k = kronecker(&p1, &unit).unwrap();
        assert_eq!(k.nnz(), p1.nnz());
    }

    #[test]
    fn decompositions() {
        let p1 = generate_p_std(f(), 1).unwrap();
        let d = trivial_decomposition(&p1);
        assert_eq!(d.rank, 6);
        assert_eq!(verify_decomposition(&p1, &d).unwrap(), Verdict::Ok);
        let p2 = generate_p_std(f(), 2).unwrap();
        let d2 = trivial_decomposition(&p2);
        assert_eq!(d2.rank, 90);
        assert_eq!(verify_decomposition(&p2, &d2).unwrap(), Verdict::Ok);
        let zero = Tensor::zero(f(), 0b111);
        assert_eq!(trivial_decomposition(&zero).rank, 0);

        let mut diag = Tensor::zero(f(), 0b11);
        diag.entries.insert((1, 1, 1), 1);
        diag.entries.insert((2, 2, 2), 1);
        let id = RankDecomposition {
            field: f(),
            sides: [vec![1, 2], vec![1, 2], vec![1, 2]],
            rank: 2,
            mats: [Matrix::identity(2), Matrix::identity(2), Matrix::identity(2)],
        };
        assert_eq!(verify_decomposition(&diag, &id).unwrap(), Verdict::Ok);
        let mut broken = id.clone();
        broken.mats[2].set(1, 1, 5);
        assert_eq!(verify_decomposition(&diag, &broken).unwrap(), Verdict::Counterexample((2, 2, 2)));
    }

    #[test]
    fn strassen_fixture() {
        for field in [f(), FieldSpec::Gf2(8), FieldSpec::Prime(7)] {
            let t = mm2_tensor(field);
            assert_eq!(verify_decomposition(&t, &strassen_decomposition(field)).unwrap(), Verdict::Ok);
        }
    }

    #[test]
    fn rankdec_text_roundtrip() {
        let d = strassen_decomposition(FieldSpec::Gf2(16));
        assert_eq!(RankDecomposition::from_text(&d.to_text()).unwrap(), d);
        let p2 = generate_p_std(f(), 2).unwrap();
        let d = trivial_decomposition(&p2);
        assert_eq!(RankDecomposition::from_text(&d.to_text()).unwrap(), d);
        let bad = "rankdec v1\nfield p=7\nr=1\nxside: {0}\nyside: {1}\nzside: {2}\nU:\n1 1\nV:\n1\nW:\n1\n";
        assert!(matches!(RankDecomposition::from_text(bad), Err(Error::Parse { line: 8, .. })));
    }

    #[test]
    fn eval_indicator_and_ones() {
        let p1 = generate_p_std(f(), 1).unwrap();
        let one = |_m: u64| Some(1);
        assert_eq!(tensor_eval(&p1, &one, &one, &one).unwrap(), 6);
        let ind = |want: u64| move |m: u64| Some((m == want) as u64);
        assert_eq!(tensor_eval(&p1, &ind(1), &ind(2), &ind(4)).unwrap(), 1);
        assert!(tensor_eval(&p1, &one, &|_| None, &one).is_err());
    }

    #[test]
    fn p_is_permutation_symmetric() {
        let mut rng = Rng::new(7);
        for q in 1..=3usize {
            let t = generate_p_std(f(), q).unwrap();
            let mut perm: Vec<u32> = (0..3 * q as u32).collect();
            rng.shuffle(&mut perm);
            let map = |m: u64| mask_elems(m).iter().fold(0u64, |acc, &e| acc | 1 << perm[e as usize]);
            for &(a, b, c) in t.entries.keys() {
                assert_eq!(t.coeff((map(a), map(b), map(c))), 1);
            }
        }
    }
}
