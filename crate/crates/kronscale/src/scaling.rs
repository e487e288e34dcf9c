//! Kronecker scaling of the balanced tripartitioning tensor P_n.
//!
//! The ground set [3n] is cut into r = g*s blocks of 3b consecutive elements.
//! Every tripartition has an intersection type (per-block counts). For each
//! type, a Steinitz concentration partition groups the blocks into s groups
//! of g blocks whose counts are close to bg; padding each group up to d_eff
//! turns the type's slice of P_n into a restriction of the s-th Kronecker
//! power of P_{d_eff}. Summing the restrictions over all types gives P_n.
//!
//! Padding is adaptive: d_eff = bg + delta where delta is the largest group
//! deviation actually realized, instead of the worst-case 36b.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::algebra::FieldSpec;
use crate::circuit::{Builder, Circuit, GateId, Name};
use crate::error::{Error, Result};
use crate::steinitz::{concentration_partition, VectorFamily};
use crate::tensor::{generate_p_std, subsets_of, trivial_decomposition, verify_decomposition, RankDecomposition, Triple, Verdict};

/// Cap on the number of enumerated intersection types.
pub const MAX_TYPES: usize = 1 << 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BlockStructure {
    pub b: usize,
    pub g: usize,
    pub s: usize,
}

impl BlockStructure {
    pub fn new(b: usize, g: usize, s: usize) -> Result<Self> {
        if b == 0 || g == 0 || s == 0 {
            return Err(Error::Shape("b, g, s must be positive".into()));
        }
        if 9 * b * g * s > 64 * 3 {
            return Err(Error::TooLarge(format!("3n = {} exceeds the 64-element ground cap", 3 * b * g * s)));
        }
        Ok(BlockStructure { b, g, s })
    }

    pub fn n(&self) -> usize {
        self.b * self.g * self.s
    }

    pub fn r(&self) -> usize {
        self.g * self.s
    }

    pub fn block_mask(&self, i: usize) -> u64 {
        let w = 3 * self.b;
        ((1u64 << w) - 1) << (w * i)
    }

    pub fn ground(&self) -> u64 {
        let m = 3 * self.n();
        if m == 64 {
            u64::MAX
        } else {
            (1u64 << m) - 1
        }
    }

    pub fn type_of(&self, a: u64, b: u64, c: u64) -> IntersectionType {
        let cnt = |m: u64| (0..self.r()).map(|i| (m & self.block_mask(i)).count_ones() as usize).collect();
        IntersectionType { alpha: cnt(a), beta: cnt(b), gamma: cnt(c) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct IntersectionType {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub gamma: Vec<usize>,
}

impl IntersectionType {
    pub fn slot(&self, k: usize) -> &[usize] {
        match k {
            0 => &self.alpha,
            1 => &self.beta,
            _ => &self.gamma,
        }
    }

    pub fn is_valid(&self, bs: &BlockStructure) -> bool {
        let r = bs.r();
        let n = bs.n();
        [&self.alpha, &self.beta, &self.gamma].iter().all(|v| v.len() == r && v.iter().sum::<usize>() == n)
            && (0..r).all(|i| self.alpha[i] + self.beta[i] + self.gamma[i] == 3 * bs.b)
    }
}

/// All intersection types, lexicographic in (alpha, beta).
pub fn enumerate_types(bs: &BlockStructure) -> Result<Vec<IntersectionType>> {
    let (r, n, w) = (bs.r(), bs.n(), 3 * bs.b);
    let mut alphas = Vec::new();
    compositions(r, n, &vec![w; r], &mut vec![], &mut alphas, MAX_TYPES)?;
    let mut out = Vec::new();
    for alpha in alphas {
        let caps: Vec<usize> = alpha.iter().map(|&a| w - a).collect();
        let mut betas = Vec::new();
        compositions(r, n, &caps, &mut vec![], &mut betas, MAX_TYPES)?;
        for beta in betas {
            let gamma = (0..r).map(|i| w - alpha[i] - beta[i]).collect();
            out.push(IntersectionType { alpha: alpha.clone(), beta, gamma });
            if out.len() > MAX_TYPES {
                return Err(Error::TooLarge(format!("more than {MAX_TYPES} intersection types")));
            }
        }
    }
    Ok(out)
}

// vectors v with 0 <= v_i <= caps_i and sum v = total, lexicographic
fn compositions(r: usize, total: usize, caps: &[usize], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, cap: usize) -> Result<()> {
    let i = cur.len();
    if i == r {
        if total == 0 {
            out.push(cur.clone());
            if out.len() > cap {
                return Err(Error::TooLarge(format!("more than {cap} intersection types")));
            }
        }
        return Ok(());
    }
    let rest: usize = caps[i + 1..].iter().sum();
    let lo = total.saturating_sub(rest);
    for v in lo..=caps[i].min(total) {
        cur.push(v);
        compositions(r, total - v, caps, cur, out, cap)?;
        cur.pop();
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Padding {
    /// d_eff = bg + (largest realized group deviation).
    Adaptive,
    /// d_eff = bg + 36b, the worst-case Steinitz constant.
    Paper,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScalingComponent {
    pub tau: IntersectionType,
    /// Block indices of each group, increasing.
    pub groups: Vec<Vec<usize>>,
    /// (|V_j^alpha|, |V_j^beta|, |V_j^gamma|) per group.
    pub pad: Vec<[usize; 3]>,
    /// Signed deviation of each group's (alpha, beta, gamma) sums from bg.
    pub deviation: Vec<[i64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScalingDecomposition {
    pub bs: BlockStructure,
    pub padding: Padding,
    pub delta: usize,
    pub d_eff: usize,
    pub components: Vec<ScalingComponent>,
}

impl ScalingDecomposition {
    /// Positions 0..3bg of a group's local ground hold its blocks' elements
    /// (blocks in increasing order), the rest hold V_j^alpha, V_j^beta,
    /// V_j^gamma in that order. Returns the local masks of the three padding
    /// parts.
    pub fn pad_masks(&self, comp: &ScalingComponent, j: usize) -> [u64; 3] {
        let base = 3 * self.bs.b * self.bs.g;
        let [pa, pb, pc] = comp.pad[j];
        let run = |start: usize, len: usize| if len == 0 { 0 } else { ((1u64 << len) - 1) << start };
        [run(base, pa), run(base + pa, pb), run(base + pa + pb, pc)]
    }

    /// The restriction x-bar (slot 0), y-bar (1), z-bar (2) on one group:
    /// a local subset of the group's ground maps to its part in U (as a
    /// global mask) or is killed.
    pub fn restrict(&self, comp: &ScalingComponent, j: usize, slot: usize, local: u64) -> Option<u64> {
        let w = 3 * self.bs.b;
        let base = w * self.bs.g;
        let pads = self.pad_masks(comp, j);
        if local >> base << base != pads[slot] {
            return None;
        }
        let counts = comp.tau.slot(slot);
        let blockmask = (1u64 << w) - 1;
        let mut global = 0u64;
        for (t, &i) in comp.groups[j].iter().enumerate() {
            let part = (local >> (w * t)) & blockmask;
            if part.count_ones() as usize != counts[i] {
                return None;
            }
            global |= part << (w * i);
        }
        Some(global)
    }

    pub fn local_ground_size(&self) -> usize {
        3 * self.d_eff
    }
}

/// Builds the per-type components and the shared block side d_eff.
pub fn decompose_p(bs: &BlockStructure, padding: Padding) -> Result<ScalingDecomposition> {
    let types = enumerate_types(bs)?;
    let (b, g, s) = (bs.b, bs.g, bs.s);
    let bg = (b * g) as i64;
    let mut comps = Vec::with_capacity(types.len());
    let mut delta = 0usize;
    for tau in types {
        let vs: Vec<Vec<i64>> = (0..bs.r()).map(|i| vec![tau.alpha[i] as i64, tau.beta[i] as i64, tau.gamma[i] as i64]).collect();
        let fam = VectorFamily::from_integers(3, 3 * b as i64, vs)?;
        let cp = concentration_partition(&fam, &vec![g; s])?;
        let mut deviation = Vec::with_capacity(s);
        for grp in &cp.groups {
            let mut dv = [0i64; 3];
            for (k, d) in dv.iter_mut().enumerate() {
                *d = grp.iter().map(|&i| tau.slot(k)[i] as i64).sum::<i64>() - bg;
                delta = delta.max(d.unsigned_abs() as usize);
            }
            deviation.push(dv);
        }
        if deviation.iter().flatten().any(|d| d.unsigned_abs() as usize > 36 * b) {
            return Err(Error::Internal("Steinitz group deviation exceeds 36b".into()));
        }
        comps.push(ScalingComponent { tau, groups: cp.groups, pad: vec![], deviation });
    }
    let d_eff = match padding {
        Padding::Adaptive => b * g + delta,
        Padding::Paper => b * g + 36 * b,
    };
    for c in &mut comps {
        c.pad = c
            .deviation
            .iter()
            .map(|dv| {
                let p = dv.map(|d| d_eff as i64 - bg - d);
                if p.iter().any(|&x| x < 0) {
                    return Err(Error::Internal("negative padding size".into()));
                }
                // |A-bar cap U-bar_j| = group sum + padding = d_eff for each slot
                debug_assert!(p.iter().zip(dv).all(|(&x, &d)| x + bg + d == d_eff as i64));
                Ok(p.map(|x| x as usize))
            })
            .collect::<Result<_>>()?;
    }
    Ok(ScalingDecomposition { bs: *bs, padding, delta, d_eff, components: comps })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScalingReport {
    pub bs: BlockStructure,
    pub d_eff: usize,
    pub delta: usize,
    pub components: usize,
    /// Distinct monomials recovered from the components.
    pub monomials: usize,
    /// Tripartitions of [3n] into n-sets.
    pub expected: usize,
    /// A monomial with multiplicity other than one, and that multiplicity.
    pub counterexample: Option<(Triple, usize)>,
}

impl ScalingReport {
    pub fn ok(&self) -> bool {
        self.counterexample.is_none() && self.monomials == self.expected
    }
}

/// Exhaustive check of the scaling identity: expands every component's
/// Kronecker product of P_{d_eff} factors, applies the restrictions, and
/// checks that the surviving monomials are exactly the tripartitions of [3n],
/// each once.
pub fn verify_scaling(bs: &BlockStructure) -> Result<ScalingReport> {
    if bs.n() > 5 {
        return Err(Error::TooLarge(format!("exhaustive verification needs n <= 5, got {}", bs.n())));
    }
    let dec = decompose_p(bs, Padding::Adaptive)?;
    let field = FieldSpec::default();
    let factor: Vec<Triple> = generate_p_std(field, dec.d_eff)?.entries.into_keys().collect();
    let mut mult: HashMap<Triple, usize> = HashMap::new();
    for comp in &dec.components {
        let mut partial: Vec<Triple> = vec![(0, 0, 0)];
        for j in 0..bs.s {
            let survivors: Vec<Triple> = factor
                .iter()
                .filter_map(|&(a, b, c)| Some((dec.restrict(comp, j, 0, a)?, dec.restrict(comp, j, 1, b)?, dec.restrict(comp, j, 2, c)?)))
                .collect();
            partial = partial
                .iter()
                .flat_map(|&(a, b, c)| survivors.iter().map(move |&(x, y, z)| (a | x, b | y, c | z)))
                .collect();
        }
        for t in partial {
            *mult.entry(t).or_insert(0) += 1;
        }
    }
    let oracle = generate_p_std(field, bs.n())?;
    let mut bad: Vec<(Triple, usize)> = Vec::new();
    for &t in oracle.entries.keys() {
        let m = mult.get(&t).copied().unwrap_or(0);
        if m != 1 {
            bad.push((t, m));
        }
    }
    for (&t, &m) in &mult {
        if !oracle.entries.contains_key(&t) {
            bad.push((t, m));
        }
    }
    bad.sort();
    Ok(ScalingReport {
        bs: *bs,
        d_eff: dec.d_eff,
        delta: dec.delta,
        components: dec.components.len(),
        monomials: mult.len(),
        expected: oracle.nnz(),
        counterexample: bad.into_iter().next(),
    })
}

/// Gate accounting for the Yates construction: one node per layer gate
/// g^[u] and one per triple product in the final sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct YatesStats {
    pub layer_nodes: usize,
    pub products: usize,
}

impl YatesStats {
    pub fn essential(&self) -> usize {
        self.layer_nodes + self.products
    }

    fn absorb(&mut self, o: YatesStats) {
        self.layer_nodes += o.layer_nodes;
        self.products += o.products;
    }
}

/// A decomposition prepared for repeated Yates instantiation.
pub struct YatesPlan {
    pub dec: RankDecomposition,
    rows: [Vec<Vec<(usize, u64)>>; 3],
}

impl YatesPlan {
    pub fn new(dec: RankDecomposition) -> Self {
        let rows = std::array::from_fn(|k| (0..dec.sides[k].len()).map(|i| dec.row(k, i)).collect());
        YatesPlan { dec, rows }
    }

    /// Adds the circuit for T^{(x)s}(x,y,z) to `b`. `inputs[k]` lists the
    /// nonzero variables of slot k as (tuple of side-row indices, gate);
    /// absent tuples are zero. Layer u replaces tuple position u by a rank
    /// index. Rank indices that cannot be nonzero in all three slots at some
    /// position are skipped, since every product through them vanishes.
    pub fn build(&self, b: &mut Builder, s: usize, inputs: [Vec<(Vec<u32>, GateId)>; 3]) -> (GateId, YatesStats) {
        let r = self.dec.rank;
        let mut allowed = vec![vec![true; r]; s];
        for (k, inp) in inputs.iter().enumerate() {
            for (t, al) in allowed.iter_mut().enumerate() {
                let mut hit = vec![false; r];
                for (key, _) in inp {
                    for &(l, _) in &self.rows[k][key[t] as usize] {
                        hit[l] = true;
                    }
                }
                for l in 0..r {
                    al[l] &= hit[l];
                }
            }
        }
        let mut stats = YatesStats::default();
        let mut hats: Vec<BTreeMap<Vec<u32>, GateId>> = Vec::with_capacity(3);
        for (k, inp) in inputs.into_iter().enumerate() {
            let mut layer: BTreeMap<Vec<u32>, GateId> = inp.into_iter().collect();
            for (u, al) in allowed.iter().enumerate() {
                let mut acc: BTreeMap<Vec<u32>, Vec<(u64, GateId)>> = BTreeMap::new();
                for (key, &gid) in &layer {
                    for &(l, c) in &self.rows[k][key[u] as usize] {
                        if !al[l] {
                            continue;
                        }
                        let mut nk = key.clone();
                        nk[u] = l as u32;
                        acc.entry(nk).or_default().push((c, gid));
                    }
                }
                stats.layer_nodes += acc.len();
                layer = acc.into_iter().map(|(key, terms)| (key, b.lin(&terms))).collect();
            }
            hats.push(layer);
        }
        let mut terms = Vec::new();
        for (key, &xh) in &hats[0] {
            if let (Some(&yh), Some(&zh)) = (hats[1].get(key), hats[2].get(key)) {
                let xy = b.mul(xh, yh);
                terms.push(b.mul(xy, zh));
            }
        }
        stats.products = terms.len();
        (b.add(terms), stats)
    }
}

/// Width of a decomposition's ground: one past its largest element.
pub fn ground_width(dec: &RankDecomposition) -> u32 {
    64 - dec.ground().leading_zeros()
}

/// Standalone circuit for the s-th Kronecker power of a decomposed tensor.
/// The variable for a tuple (i_1..i_s) is named by the union of the side
/// subsets, copy t shifted by t times the ground width.
pub fn yates_circuit(dec: &RankDecomposition, s: usize) -> Result<(Circuit, YatesStats)> {
    dec.check_shape()?;
    let w = ground_width(dec) as usize;
    if s == 0 || s * w > 64 {
        return Err(Error::TooLarge(format!("power {s} of a width-{w} ground does not fit 64 elements")));
    }
    let budget = (dec.rank.max(1) as f64).powi(s as i32) + dec.sides.iter().map(|x| (x.len().max(1) as f64).powi(s as i32)).sum::<f64>();
    if budget > 5e6 {
        return Err(Error::TooLarge("Yates circuit exceeds the gate budget".into()));
    }
    let plan = YatesPlan::new(dec.clone());
    let mut b = Builder::new(dec.field);
    let mut inputs: [Vec<(Vec<u32>, GateId)>; 3] = Default::default();
    for (k, slot) in ['x', 'y', 'z'].into_iter().enumerate() {
        let side = &dec.sides[k];
        for key in tuples(side.len(), s) {
            let mask = key.iter().enumerate().fold(0u64, |m, (t, &i)| m | side[i as usize] << (t * w));
            let gid = b.input(Name::mask(slot, mask));
            inputs[k].push((key, gid));
        }
    }
    let (out, stats) = plan.build(&mut b, s, inputs);
    Ok((b.finish(vec![out]), stats))
}

/// All tuples in [m]^s, lexicographic.
pub fn tuples(m: usize, s: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..s {
        out = out.into_iter().flat_map(|t| (0..m as u32).map(move |i| [t.clone(), vec![i]].concat())).collect();
    }
    out
}

/// Source of verified rank decompositions of P_d.
pub trait DecProvider {
    fn decomposition(&self, field: FieldSpec, d: usize) -> Result<RankDecomposition>;
}

/// Always answers with the one-term-per-entry decomposition.
pub struct TrivialProvider;

impl DecProvider for TrivialProvider {
    fn decomposition(&self, field: FieldSpec, d: usize) -> Result<RankDecomposition> {
        Ok(trivial_decomposition(&generate_p_std(field, d)?))
    }
}

/// A fixed decomposition, typically loaded from a file; it is checked
/// against P_d whenever it is handed out.
pub struct FixedProvider(pub RankDecomposition);

impl DecProvider for FixedProvider {
    fn decomposition(&self, field: FieldSpec, d: usize) -> Result<RankDecomposition> {
        if self.0.field != field {
            return Err(Error::Provider(format!("decomposition is over {}, needed {field}", self.0.field)));
        }
        let p = generate_p_std(field, d).map_err(|e| Error::Provider(e.to_string()))?;
        match verify_decomposition(&p, &self.0) {
            Ok(Verdict::Ok) => Ok(self.0.clone()),
            Ok(Verdict::Counterexample(t)) => Err(Error::Provider(format!("decomposition is not one of P_{d}: fails at {t:?}"))),
            Err(e) => Err(Error::Provider(format!("decomposition does not fit P_{d}: {e}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PCircuitReport {
    pub n: usize,
    pub bs: BlockStructure,
    pub d_eff: usize,
    pub delta: usize,
    pub types: usize,
    pub rank: usize,
    pub yates: YatesStats,
    pub arcs: usize,
    pub gates: usize,
}

/// A resolved plan for instantiating P_n circuits: the scaling decomposition
/// plus a verified decomposition of P_{d_eff}.
pub struct PBuilder {
    pub sdec: ScalingDecomposition,
    pub plan: YatesPlan,
}

impl PBuilder {
    /// P_n with blocks of 3b elements grouped g at a time; n must be a
    /// multiple of bg.
    pub fn new(field: FieldSpec, n: usize, b: usize, g: usize, provider: &dyn DecProvider) -> Result<Self> {
        if b == 0 || g == 0 || !n.is_multiple_of(b * g) {
            return Err(Error::Shape(format!("n = {n} is not a multiple of b*g = {}", b * g)));
        }
        let bs = BlockStructure::new(b, g, n / (b * g))?;
        Self::from_decomposition(field, decompose_p(&bs, Padding::Adaptive)?, provider)
    }

    pub fn from_decomposition(field: FieldSpec, sdec: ScalingDecomposition, provider: &dyn DecProvider) -> Result<Self> {
        if sdec.local_ground_size() > 64 {
            return Err(Error::TooLarge(format!("P_{} factors do not fit 64-element masks", sdec.d_eff)));
        }
        let rd = provider.decomposition(field, sdec.d_eff)?;
        if rd.ground() >> sdec.local_ground_size() != 0 {
            return Err(Error::Provider(format!("decomposition ground exceeds [3*{}]", sdec.d_eff)));
        }
        Ok(PBuilder { sdec, plan: YatesPlan::new(rd) })
    }

    /// Adds P_n(x,y,z) to `b`. `var(b, slot, mask)` gives the gate for x_A
    /// (slot 0), y_B (1) or z_C (2) over the ground [3n], or `None` when the
    /// variable is zero.
    pub fn build(&self, b: &mut Builder, var: &mut dyn FnMut(&mut Builder, usize, u64) -> Option<GateId>) -> (GateId, YatesStats) {
        let (dec, rd) = (&self.sdec, &self.plan.dec);
        let s = dec.bs.s;
        let mut outs = Vec::with_capacity(dec.components.len());
        let mut stats = YatesStats::default();
        for comp in &dec.components {
            let mut inputs: [Vec<(Vec<u32>, GateId)>; 3] = Default::default();
            for (k, inp) in inputs.iter_mut().enumerate() {
                let mut partial: Vec<(Vec<u32>, u64)> = vec![(vec![], 0)];
                for j in 0..s {
                    let list: Vec<(u32, u64)> = rd.sides[k]
                        .iter()
                        .enumerate()
                        .filter_map(|(i, &m)| dec.restrict(comp, j, k, m).map(|gm| (i as u32, gm)))
                        .collect();
                    partial = partial
                        .iter()
                        .flat_map(|(key, m)| list.iter().map(move |&(i, gm)| ([key.as_slice(), &[i]].concat(), m | gm)))
                        .collect();
                }
                for (key, m) in partial {
                    if let Some(gid) = var(b, k, m) {
                        inp.push((key, gid));
                    }
                }
            }
            if inputs.iter().any(|v| v.is_empty()) {
                continue;
            }
            let (o, st) = self.plan.build(b, s, inputs);
            stats.absorb(st);
            outs.push(o);
        }
        (b.add(outs), stats)
    }

    pub fn report(&self, yates: YatesStats) -> PCircuitReport {
        PCircuitReport {
            n: self.sdec.bs.n(),
            bs: self.sdec.bs,
            d_eff: self.sdec.d_eff,
            delta: self.sdec.delta,
            types: self.sdec.components.len(),
            rank: self.plan.dec.rank,
            yates,
            arcs: 0,
            gates: 0,
        }
    }
}

/// Circuit for P_n(x,y,z) over the ground [3n] with inputs x:{A}, y:{B},
/// z:{C} for all n-subsets, built from a decomposition of P_{d_eff}.
pub fn build_p_circuit(field: FieldSpec, n: usize, b: usize, g: usize, provider: &dyn DecProvider) -> Result<(Circuit, PCircuitReport)> {
    PBuilder::new(field, n, b, g, provider)?.circuit()
}

impl PBuilder {
    /// Standalone P_n circuit over inputs x:, y:, z: subsets of [3n].
    pub fn circuit(&self) -> Result<(Circuit, PCircuitReport)> {
        let n = self.sdec.bs.n();
        let mut bld = Builder::new(self.plan.dec.field);
        let ground = if 3 * n >= 64 { u64::MAX } else { (1u64 << (3 * n)) - 1 };
        for slot in ['x', 'y', 'z'] {
            for m in subsets_of(ground, n) {
                bld.input(Name::mask(slot, m));
            }
        }
        let mut var = |bl: &mut Builder, k: usize, m: u64| Some(bl.input(Name::mask(['x', 'y', 'z'][k], m)));
        let (out, st) = self.build(&mut bld, &mut var);
        let c = bld.finish(vec![out]);
        let mut rep = self.report(st);
        rep.arcs = c.size();
        rep.gates = c.gates.len();
        Ok((c, rep))
    }
}
