//! Double charts, the edge relation, coarse-grained chain graphs and chains.
//!
//! Radii are lattice indices throughout: a larger index is a smaller radius,
//! so min{I(q), Q} becomes max(q − 4, Q) and p^s ∧ p^u becomes max(p^s, p^u).

use crate::chart::{overlaps, temper_sequence, ChartContext, ChartView, PesinChart, Tempered};
use crate::ladder::{Lattice, LADDER_STEP};
use crate::orbit::{BranchRule, OrbitWindow};
use crate::torus::{MapModel, TorusPoint};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleChart {
    pub chart: PesinChart,
    /// p^s as a lattice index.
    pub ps: usize,
    /// p^u as a lattice index.
    pub pu: usize,
    /// Chart data at f̂(x̃).
    pub next: ChartView,
    /// Chart data at f̂⁻¹(x̃).
    pub prev: ChartView,
}

impl DoubleChart {
    pub fn new(chart: PesinChart, prev: &PesinChart, next: &PesinChart, ps: usize, pu: usize) -> Result<Self> {
        if ps < chart.q_index || pu < chart.q_index {
            return Err(Error::InfeasibleInput(format!(
                "radii ({ps}, {pu}) exceed Q at lattice index {}",
                chart.q_index
            )));
        }
        Ok(Self { chart, ps, pu, next: next.view(), prev: prev.view() })
    }

    /// Builds the double chart at x̃ from three frames computed along the window.
    pub fn at(ctx: &ChartContext, o: &OrbitWindow, ps: Option<usize>, pu: Option<usize>) -> Result<Self> {
        let chart = ctx.chart(o)?;
        let prev = ctx.chart(&o.shift(-1)?)?;
        let next = ctx.chart(&o.shift(1)?)?;
        let q = chart.q_index;
        Self::new(chart, &prev, &next, ps.unwrap_or(q), pu.unwrap_or(q))
    }

    /// p^s ∧ p^u as a lattice index.
    pub fn eta(&self) -> usize {
        self.ps.max(self.pu)
    }

    pub fn q_index(&self) -> usize {
        self.chart.q_index
    }

    pub fn base(&self) -> TorusPoint {
        self.chart.base()
    }
}

/// v → w: both overlap conditions and both radius equations.
pub fn edge(v: &DoubleChart, w: &DoubleChart, lattice: &Lattice) -> Result<bool> {
    let step = LADDER_STEP as i64;
    let ps_ok = v.ps as i64 == (w.ps as i64 - step).max(v.q_index() as i64);
    let pu_ok = w.pu as i64 == (v.pu as i64 - step).max(w.q_index() as i64);
    if !(ps_ok && pu_ok) {
        return Ok(false);
    }
    let (ep, eq) = (v.eta(), w.eta());
    Ok(overlaps(&v.next, eq, &w.chart.view(), eq, lattice)? && overlaps(&w.prev, ep, &v.chart.view(), ep, lattice)?)
}

/// Lattice-index form of the subordination recursions:
/// p^u_{k+1} = max(p^u_k − 4, Q_{k+1}) from p^u_0 = Q_0 and
/// p^s_{k−1} = max(p^s_k − 4, Q_{k−1}) from the last index.
pub fn subordinate(q_seq: &[usize], tempered: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if q_seq.is_empty() || q_seq.len() != tempered.len() {
        return Err(Error::InfeasibleInput("Q and q sequences must be non-empty and of equal length".into()));
    }
    if tempered.iter().zip(q_seq).any(|(q, big)| q < big) {
        return Err(Error::InfeasibleInput("q exceeds Q".into()));
    }
    if tempered.windows(2).any(|w| w[0].abs_diff(w[1]) % LADDER_STEP != 0 || w[0].abs_diff(w[1]) > LADDER_STEP) {
        return Err(Error::InfeasibleInput("consecutive q are not related by I^{±1}".into()));
    }
    let n = q_seq.len();
    let mut pu = vec![0; n];
    pu[0] = q_seq[0];
    for k in 1..n {
        pu[k] = pu[k - 1].saturating_sub(LADDER_STEP).max(q_seq[k]);
    }
    let mut ps = vec![0; n];
    ps[n - 1] = q_seq[n - 1];
    for k in (0..n - 1).rev() {
        ps[k] = ps[k + 1].saturating_sub(LADDER_STEP).max(q_seq[k]);
    }
    debug_assert!((0..n).all(|k| ps[k].max(pu[k]) <= tempered[k]));
    Ok((ps, pu))
}

/// Resolution of the coarse graining nets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrainSpec {
    /// Base points are quantized to a 2^{−base_bits} grid.
    pub base_bits: u32,
    /// C₀ entries are quantized to 2^{−c0_bits}.
    pub c0_bits: u32,
}

impl Default for GrainSpec {
    fn default() -> Self {
        Self { base_bits: 10, c0_bits: 12 }
    }
}

type GrainKey = (Vec<i64>, [usize; 5]);

fn grain_key(v: &DoubleChart, g: &GrainSpec) -> GrainKey {
    let qb = |x: f64| (x * 2f64.powi(g.base_bits as i32)).floor() as i64;
    let qc = |x: f64| (x * 2f64.powi(g.c0_bits as i32)).floor() as i64;
    let mut cells = Vec::with_capacity(10);
    for p in [v.prev.base, v.base(), v.next.base] {
        cells.push(qb(p.x));
        cells.push(qb(p.y));
    }
    cells.extend(v.chart.frame.c0.iter().map(|&c| qc(c)));
    (cells, [v.prev.q_index, v.q_index(), v.next.q_index, v.ps, v.pu])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphProvenance {
    pub grain: GrainSpec,
    pub eps: f64,
    pub input_orbits: usize,
    /// Orbits whose charts failed certification.
    pub rejected: usize,
    /// Distinct grain classes before pruning.
    pub classes: usize,
    pub pruned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainGraph {
    pub vertices: Vec<DoubleChart>,
    pub edges: Vec<(usize, usize)>,
    pub successors: Vec<Vec<usize>>,
    pub predecessors: Vec<Vec<usize>>,
    pub provenance: GraphProvenance,
}

impl ChainGraph {
    /// Builds the graph on the given vertices, then prunes vertices without
    /// an in-edge or an out-edge until none remain.
    pub fn from_vertices(vertices: Vec<DoubleChart>, lattice: &Lattice, provenance: GraphProvenance) -> Result<Self> {
        Self::build(vertices, lattice, provenance, true)
    }

    /// Builds the graph on the given vertices without pruning.
    pub fn from_vertices_unpruned(
        vertices: Vec<DoubleChart>,
        lattice: &Lattice,
        provenance: GraphProvenance,
    ) -> Result<Self> {
        Self::build(vertices, lattice, provenance, false)
    }

    fn build(vertices: Vec<DoubleChart>, lattice: &Lattice, provenance: GraphProvenance, prune: bool) -> Result<Self> {
        let n = vertices.len();
        let rows: Vec<Result<Vec<usize>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                for j in 0..n {
                    if edge(&vertices[i], &vertices[j], lattice)? {
                        out.push(j);
                    }
                }
                Ok(out)
            })
            .collect();
        let mut succ: Vec<Vec<usize>> = rows.into_iter().collect::<Result<_>>()?;
        let mut alive = vec![true; n];
        let mut changed = prune;
        while changed {
            let mut indeg = vec![0usize; n];
            for (i, s) in succ.iter().enumerate() {
                if alive[i] {
                    for &j in s {
                        if alive[j] {
                            indeg[j] += 1;
                        }
                    }
                }
            }
            changed = false;
            for i in 0..n {
                if alive[i] && (indeg[i] == 0 || !succ[i].iter().any(|&j| alive[j])) {
                    alive[i] = false;
                    changed = true;
                }
            }
        }
        let mut remap = vec![usize::MAX; n];
        let mut kept = Vec::new();
        for (i, v) in vertices.into_iter().enumerate() {
            if alive[i] {
                remap[i] = kept.len();
                kept.push(v);
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let mut successors = vec![Vec::new(); kept.len()];
        let mut predecessors = vec![Vec::new(); kept.len()];
        let mut edges = Vec::new();
        for (i, s) in succ.iter_mut().enumerate() {
            if !alive[i] {
                continue;
            }
            for &j in s.iter() {
                if alive[j] {
                    edges.push((remap[i], remap[j]));
                    successors[remap[i]].push(remap[j]);
                    predecessors[remap[j]].push(remap[i]);
                }
            }
        }
        let provenance = GraphProvenance { pruned: n - kept.len(), ..provenance };
        Ok(Self { vertices: kept, edges, successors, predecessors, provenance })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Number of vertices whose radius p^s ∧ p^u exceeds e^{ln_t}.
    pub fn count_radius_above(&self, ln_t: f64, lattice: &Lattice) -> Result<usize> {
        let mut n = 0;
        for v in &self.vertices {
            if lattice.ln_value(v.eta())? > ln_t {
                n += 1;
            }
        }
        Ok(n)
    }

    /// Number of vertices whose radius lies within one ladder step of v's.
    pub fn band_count(&self, v: usize) -> usize {
        let e = self.vertices[v].eta();
        self.vertices.iter().filter(|w| w.eta().abs_diff(e) <= LADDER_STEP).count()
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph chains {\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let b = v.base();
            let _ = writeln!(
                s,
                "  v{i} [label=\"{i}\\n({:.4}, {:.4})\\nQ={} ps={} pu={}\"];",
                b.x,
                b.y,
                v.q_index(),
                v.ps,
                v.pu
            );
        }
        for (a, b) in &self.edges {
            let _ = writeln!(s, "  v{a} -> v{b};");
        }
        s.push_str("}\n");
        s
    }
}

/// Quantizes and deduplicates the double charts at the given windows, then
/// builds and prunes the graph. Windows whose charts fail certification are
/// counted and skipped.
pub fn coarse_grain(ctx: &ChartContext, orbits: &[OrbitWindow], grain: GrainSpec) -> Result<ChainGraph> {
    let charts: Vec<Option<DoubleChart>> =
        orbits.par_iter().map(|o| DoubleChart::at(ctx, o, None, None).ok()).collect();
    let rejected = charts.iter().filter(|c| c.is_none()).count();
    let vertices = dedupe(charts.into_iter().flatten().collect(), &grain);
    let provenance = GraphProvenance {
        grain,
        eps: ctx.params.eps,
        input_orbits: orbits.len(),
        rejected,
        classes: vertices.len(),
        pruned: 0,
    };
    ChainGraph::from_vertices(vertices, &ctx.lattice, provenance)
}

/// Keeps the first double chart of each grain class, in input order.
pub fn dedupe(charts: Vec<DoubleChart>, grain: &GrainSpec) -> Vec<DoubleChart> {
    let mut seen: HashSet<GrainKey> = HashSet::new();
    charts.into_iter().filter(|c| seen.insert(grain_key(c, grain))).collect()
}

fn mat_mul(a: [[i128; 2]; 2], b: [[i128; 2]; 2]) -> [[i128; 2]; 2] {
    let mut c = [[0i128; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Periodic cycles of a linear endomorphism with minimal period ≤ max_period,
/// as exact rationals (numerators over a common denominator per cycle).
pub fn periodic_cycles(
    map: &MapModel,
    max_period: usize,
    max_denominator: i128,
) -> Result<Vec<(i128, Vec<[i128; 2]>)>> {
    if !map.is_linear() {
        return Err(Error::InfeasibleInput("exact periodic cycles need a linear map".into()));
    }
    let m = map.matrix();
    let a = [[m[0][0] as i128, m[0][1] as i128], [m[1][0] as i128, m[1][1] as i128]];
    let mut cycles = Vec::new();
    let mut power = [[1i128, 0], [0, 1]];
    for k in 1..=max_period {
        power = mat_mul(a, power);
        let mk = [[power[0][0] - 1, power[0][1]], [power[1][0], power[1][1] - 1]];
        let det = (mk[0][0] * mk[1][1] - mk[0][1] * mk[1][0]).abs();
        if det == 0 {
            continue;
        }
        if det > max_denominator {
            return Err(Error::InfeasibleInput(format!("period {k} needs denominator {det} > {max_denominator}")));
        }
        let step = |p: [i128; 2]| -> [i128; 2] {
            [(a[0][0] * p[0] + a[0][1] * p[1]).rem_euclid(det), (a[1][0] * p[0] + a[1][1] * p[1]).rem_euclid(det)]
        };
        let mut seen: HashSet<[i128; 2]> = HashSet::new();
        for i in 0..det {
            for j in 0..det {
                let p = [i, j];
                if seen.contains(&p)
                    || (mk[0][0] * i + mk[0][1] * j).rem_euclid(det) != 0
                    || (mk[1][0] * i + mk[1][1] * j).rem_euclid(det) != 0
                {
                    continue;
                }
                let mut cyc = vec![p];
                let mut q = step(p);
                while q != p {
                    cyc.push(q);
                    q = step(q);
                }
                seen.extend(cyc.iter().copied());
                if cyc.len() == k {
                    cycles.push((det, cyc));
                }
            }
        }
    }
    Ok(cycles)
}

/// One window per point of each cycle. Points are converted to floats
/// independently, so the stored successor of each point is bit-identical to
/// the present point of the next window.
pub fn cycle_windows(
    map: &MapModel,
    cycles: &[(i128, Vec<[i128; 2]>)],
    past: usize,
    forward: usize,
) -> Vec<OrbitWindow> {
    let mut out = Vec::new();
    for (den, cyc) in cycles {
        let pts: Vec<TorusPoint> =
            cyc.iter().map(|p| TorusPoint::new(p[0] as f64 / *den as f64, p[1] as f64 / *den as f64)).collect();
        let k = pts.len();
        for i in 0..k {
            let at = |j: i64| pts[(i as i64 + j).rem_euclid(k as i64) as usize];
            out.push(OrbitWindow {
                map: map.clone(),
                branch_rule: BranchRule::Cycle,
                past: (-(past as i64)..0).map(at).collect(),
                present: pts[i],
                forward: (1..=forward as i64).map(at).collect(),
                degenerate: false,
            });
        }
    }
    out
}

/// Window lengths that keep every frame of a double chart on stored points.
pub fn chart_window(trunc_n: usize) -> (usize, usize) {
    (2 * trunc_n + 2, 2 * trunc_n + 4)
}

/// Double charts along one orbit at indices −half..=half, with radii from
/// tempering and subordination of the Q sequence.
pub fn orbit_chain(ctx: &ChartContext, o: &OrbitWindow, half: usize) -> Result<Vec<DoubleChart>> {
    let h = half as i64;
    let need = 2 * ctx.params.trunc_n + half + 1;
    if o.backward_len() < need {
        return Err(Error::WindowExhausted { index: -(need as i64) });
    }
    let o = o.extended(2 * ctx.params.trunc_n + half + 4);
    let charts: Vec<PesinChart> =
        (-h - 1..=h + 1).into_par_iter().map(|i| ctx.chart(&o.shift(i)?)).collect::<Result<_>>()?;
    let q: Vec<usize> = charts[1..charts.len() - 1].iter().map(|c| c.q_index).collect();
    let Tempered::Feasible(t) = temper_sequence(&q, usize::MAX) else {
        return Err(Error::InfeasibleInput("Q sequence cannot be tempered".into()));
    };
    let (ps, pu) = subordinate(&q, &t)?;
    (0..q.len()).map(|k| DoubleChart::new(charts[k + 1].clone(), &charts[k], &charts[k + 2], ps[k], pu[k])).collect()
}

/// Recomputes the radii of a valid chain after deepening p^u at its first
/// index and p^s at its last index by `extra` lattice indices. Indices within
/// `keep` of the center are required to be unchanged.
pub fn tail_variant(charts: &[DoubleChart], keep: usize, extra: usize) -> Result<Vec<DoubleChart>> {
    let n = charts.len();
    if n == 0 {
        return Err(Error::InfeasibleInput("empty chain".into()));
    }
    let center = (n - 1) / 2;
    let q: Vec<usize> = charts.iter().map(|c| c.q_index()).collect();
    let mut pu = vec![0; n];
    pu[0] = charts[0].pu + extra;
    for k in 1..n {
        pu[k] = pu[k - 1].saturating_sub(LADDER_STEP).max(q[k]);
    }
    let mut ps = vec![0; n];
    ps[n - 1] = charts[n - 1].ps + extra;
    for k in (0..n - 1).rev() {
        ps[k] = ps[k + 1].saturating_sub(LADDER_STEP).max(q[k]);
    }
    let lo = center.saturating_sub(keep);
    let hi = (center + keep).min(n - 1);
    for k in lo..=hi {
        if ps[k] != charts[k].ps || pu[k] != charts[k].pu {
            return Err(Error::InfeasibleInput(format!(
                "deepening by {extra} reaches index {k} inside the kept window"
            )));
        }
    }
    Ok(charts.iter().enumerate().map(|(k, c)| DoubleChart { ps: ps[k], pu: pu[k], ..c.clone() }).collect())
}

/// A finite window v_{−L}, …, v_L into Σ(𝒢), as vertex indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chain {
    pub vertices: Vec<usize>,
    pub periodic: bool,
}

impl Chain {
    /// Position of index 0.
    pub fn center(&self) -> usize {
        (self.vertices.len() - 1) / 2
    }

    /// Finite-window proxy for Σ^#: periodic, or some vertex recurs in both the
    /// first and the last quarter.
    pub fn in_sigma_sharp(&self) -> bool {
        if self.periodic {
            return true;
        }
        let n = self.vertices.len();
        let quarter = (n / 4).max(1);
        let head: HashSet<usize> = self.vertices[..quarter].iter().copied().collect();
        self.vertices[n - quarter..].iter().any(|v| head.contains(v))
    }

    /// σ(chain): the window re-centered one step later, shortened to stay symmetric.
    pub fn shifted(&self) -> Chain {
        Chain { vertices: self.vertices[2.min(self.vertices.len())..].to_vec(), periodic: self.periodic }
    }

    pub fn is_path_of(&self, g: &ChainGraph) -> bool {
        self.vertices.windows(2).all(|w| g.successors[w[0]].contains(&w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnumerationMode {
    All,
    Periodic,
    Sampled { seed: u64, count: usize },
}

pub fn enumerate_chains(g: &ChainGraph, length: usize, mode: EnumerationMode) -> Result<Vec<Chain>> {
    if length == 0 {
        return Err(Error::DomainError("chain length must be at least 1".into()));
    }
    match mode {
        EnumerationMode::All => {
            let mut out = Vec::new();
            let mut path = Vec::with_capacity(length);
            for v in 0..g.len() {
                path.push(v);
                all_paths(g, length, &mut path, &mut out);
                path.pop();
            }
            Ok(out)
        }
        EnumerationMode::Periodic => {
            let mut out = Vec::new();
            let mut path = Vec::with_capacity(length);
            for v in 0..g.len() {
                path.push(v);
                closed_walks(g, length, &mut path, &mut out);
                path.pop();
            }
            Ok(out)
        }
        EnumerationMode::Sampled { seed, count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let mut v = rng.gen_range(0..g.len());
                let mut path = vec![v];
                while path.len() < length {
                    let s = &g.successors[v];
                    v = s[rng.gen_range(0..s.len())];
                    path.push(v);
                }
                out.push(Chain { vertices: path, periodic: false });
            }
            Ok(out)
        }
    }
}

fn all_paths(g: &ChainGraph, length: usize, path: &mut Vec<usize>, out: &mut Vec<Chain>) {
    if path.len() == length {
        out.push(Chain { vertices: path.clone(), periodic: false });
        return;
    }
    let last = *path.last().expect("non-empty path");
    for &w in &g.successors[last] {
        path.push(w);
        all_paths(g, length, path, out);
        path.pop();
    }
}

/// Closed walks of the given length, one per rotation class (the
/// lexicographically smallest rotation is kept).
fn closed_walks(g: &ChainGraph, length: usize, path: &mut Vec<usize>, out: &mut Vec<Chain>) {
    let first = path[0];
    if path.len() == length {
        let last = *path.last().expect("non-empty path");
        if g.successors[last].contains(&first) {
            let minimal = (1..length).all(|r| {
                let rotated: Vec<usize> = path[r..].iter().chain(path[..r].iter()).copied().collect();
                rotated >= *path
            });
            if minimal {
                out.push(Chain { vertices: path.clone(), periodic: true });
            }
        }
        return;
    }
    let last = *path.last().expect("non-empty path");
    for &w in &g.successors[last] {
        if w < first {
            continue;
        }
        path.push(w);
        closed_walks(g, length, path, out);
        path.pop();
    }
}

/// A window of half-width `half` centered at `v`, following the first listed
/// predecessor and successor at each step.
pub fn chain_through(g: &ChainGraph, v: usize, half: usize) -> Option<Chain> {
    let mut back = Vec::with_capacity(half);
    let mut cur = v;
    for _ in 0..half {
        cur = *g.predecessors[cur].first()?;
        back.push(cur);
    }
    back.reverse();
    back.push(v);
    cur = v;
    for _ in 0..half {
        cur = *g.successors[cur].first()?;
        back.push(cur);
    }
    Some(Chain { vertices: back, periodic: false })
}

/// Sum of the entries of the (length−1)-th power of the adjacency matrix.
pub fn path_count(g: &ChainGraph, length: usize) -> u128 {
    let mut counts = vec![1u128; g.len()];
    for _ in 1..length {
        let mut next = vec![0u128; g.len()];
        for (i, s) in g.successors.iter().enumerate() {
            for &j in s {
                next[i] += counts[j];
            }
        }
        counts = next;
    }
    counts.iter().sum()
}

/// Vertex indices grouped by base point, for locating a window's chart.
pub fn index_by_base(g: &ChainGraph) -> HashMap<(u64, u64), Vec<usize>> {
    let mut m: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
    for (i, v) in g.vertices.iter().enumerate() {
        let b = v.base();
        m.entry((b.x.to_bits(), b.y.to_bits())).or_default().push(i);
    }
    m
}

/// Exact periodic windows plus randomly seeded windows (which the pruning
/// step is expected to discard). For a perturbed model, the cycles are those
/// of its integer matrix that never enter the region where the model differs
/// from it.
pub fn desk_orbits(
    map: &MapModel,
    max_period: usize,
    random: usize,
    seed: u64,
    trunc_n: usize,
) -> Result<Vec<OrbitWindow>> {
    let (past, fwd) = chart_window(trunc_n);
    let cycles = if map.is_linear() {
        periodic_cycles(map, max_period, 4096)?
    } else {
        let linear = MapModel::linear(map.matrix())?;
        let a = linear.differential(TorusPoint::new(0.0, 0.0));
        let unperturbed = |p: &[i128; 2], den: i128| {
            let x = TorusPoint::new(p[0] as f64 / den as f64, p[1] as f64 / den as f64);
            map.differential(x) == a && map.dist_to_singularity(x) > 0.1
        };
        periodic_cycles(&linear, max_period, 4096)?
            .into_iter()
            .filter(|(den, cyc)| cyc.iter().all(|p| unperturbed(p, *den)))
            .collect()
    };
    let mut out = cycle_windows(map, &cycles, past, fwd);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let x = TorusPoint::new(rng.gen(), rng.gen());
        out.push(crate::orbit::extend_backward(map, x, &BranchRule::Nearest, past)?.extended(fwd));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::ChartParams;

    fn ctx() -> ChartContext {
        ChartContext::new(ChartParams::default()).unwrap()
    }

    #[test]
    fn cycle_counts_match_determinants() {
        // |det(A^k − I)| counts points of period dividing k: 1, 7, 31, 119.
        let cycles = periodic_cycles(&MapModel::cat(), 4, 4096).unwrap();
        let mut per = [0usize; 5];
        for (_, c) in &cycles {
            per[c.len()] += c.len();
        }
        assert_eq!(per[1], 1);
        assert_eq!(per[1] + per[2], 7);
        assert_eq!(per[1] + per[3], 31);
        assert_eq!(per[1] + per[2] + per[4], 119);
    }

    #[test]
    fn cycle_windows_are_orbits() {
        let m = MapModel::cat();
        let cycles = periodic_cycles(&m, 3, 4096).unwrap();
        for w in cycle_windows(&m, &cycles, 6, 6) {
            let pts: Vec<TorusPoint> = (-6..=6).map(|i| w.at(i).unwrap()).collect();
            for p in pts.windows(2) {
                assert!(m.eval(p[0]).dist(p[1]) < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_point_graph_has_self_loop() {
        let c = ctx();
        let orbits = desk_orbits(&MapModel::cat(), 1, 0, 0, c.params.trunc_n).unwrap();
        let g = coarse_grain(&c, &orbits, GrainSpec::default()).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edges, vec![(0, 0)]);
        let v = &g.vertices[0];
        assert_eq!((v.ps, v.pu), (v.q_index(), v.q_index()));
        let chains = enumerate_chains(&g, 1, EnumerationMode::Periodic).unwrap();
        assert_eq!(chains, vec![Chain { vertices: vec![0], periodic: true }]);
    }

    #[test]
    fn desk_graph_prunes_random_windows() {
        let c = ctx();
        let orbits = desk_orbits(&MapModel::cat(), 3, 5, 7, c.params.trunc_n).unwrap();
        let g = coarse_grain(&c, &orbits, GrainSpec::default()).unwrap();
        assert_eq!(g.len(), 37);
        assert_eq!(g.provenance.pruned, 5);
        for v in 0..g.len() {
            assert!(!g.successors[v].is_empty() && !g.predecessors[v].is_empty());
            assert!(g.successors[v].len() <= g.band_count(v));
        }
        for &(a, b) in &g.edges {
            let (va, vb) = (&g.vertices[a], &g.vertices[b]);
            assert!(vb.eta().abs_diff(va.eta()) <= LADDER_STEP);
        }
        for len in 1..6 {
            let all = enumerate_chains(&g, len, EnumerationMode::All).unwrap();
            assert_eq!(all.len() as u128, path_count(&g, len));
            assert!(all.iter().all(|c| c.is_path_of(&g)));
        }
        let a = enumerate_chains(&g, 9, EnumerationMode::Sampled { seed: 3, count: 20 }).unwrap();
        let b = enumerate_chains(&g, 9, EnumerationMode::Sampled { seed: 3, count: 20 }).unwrap();
        assert_eq!(a, b);
        let per = enumerate_chains(&g, 3, EnumerationMode::Periodic).unwrap();
        // Ten period-3 cycles, each listed once, plus the fixed point.
        assert_eq!(per.len(), 11);
        assert!(per.iter().all(|c| c.in_sigma_sharp()));
    }

    #[test]
    fn finer_grain_never_merges_more() {
        let c = ctx();
        let orbits = desk_orbits(&MapModel::cat(), 4, 0, 0, c.params.trunc_n).unwrap();
        let charts: Vec<DoubleChart> = orbits.iter().map(|o| DoubleChart::at(&c, o, None, None).unwrap()).collect();
        let mut prev = 0;
        for bits in [2, 4, 6, 8, 10] {
            let n = dedupe(charts.clone(), &GrainSpec { base_bits: bits, c0_bits: 12 }).len();
            assert!(n >= prev);
            prev = n;
        }
        assert_eq!(prev, charts.len());
    }

    #[test]
    fn non_overlapping_bases_have_no_edge() {
        let c = ctx();
        let orbits = desk_orbits(&MapModel::cat(), 2, 0, 0, c.params.trunc_n).unwrap();
        let v = DoubleChart::at(&c, &orbits[0], None, None).unwrap();
        let w = DoubleChart::at(&c, &orbits[1], None, None).unwrap();
        assert_ne!(v.next.base, w.base());
        assert!(!edge(&v, &w, &c.lattice).unwrap());
    }

    /// Brute force: among sequences satisfying p^u_{k+1} = max(p^u_k − 4, Q_{k+1})
    /// with p^u_k ≥ Q_k, the one with the largest radii (smallest indices).
    fn brute_pu(q: &[usize]) -> Vec<usize> {
        let hi = q.iter().max().unwrap() + 20;
        let mut best: Option<Vec<usize>> = None;
        for start in q[0]..=hi {
            let mut seq = vec![start];
            for k in 1..q.len() {
                let v = seq[k - 1].saturating_sub(4).max(q[k]);
                seq.push(v);
            }
            if best.as_ref().is_none_or(|b| seq.iter().sum::<usize>() < b.iter().sum()) {
                best = Some(seq);
            }
        }
        best.unwrap()
    }

    #[test]
    fn subordinate_matches_brute_force() {
        for q in [vec![10, 10, 10, 10, 10, 10], vec![10, 10, 30, 10, 10, 10], vec![5, 9, 2, 14, 3, 3]] {
            let Tempered::Feasible(t) = temper_sequence(&q, usize::MAX) else { panic!() };
            let (ps, pu) = subordinate(&q, &t).unwrap();
            assert_eq!(pu, brute_pu(&q));
            let rev: Vec<usize> = q.iter().rev().copied().collect();
            let mut ps_rev = brute_pu(&rev);
            ps_rev.reverse();
            assert_eq!(ps, ps_rev);
            for k in 0..q.len() {
                assert!(ps[k].max(pu[k]) <= t[k]);
                assert!(ps[k] >= q[k] && pu[k] >= q[k]);
            }
        }
        let (ps, pu) = subordinate(&[10, 10, 30, 10, 10, 10], &[22, 26, 30, 26, 22, 18]).unwrap();
        assert_eq!(pu, vec![10, 10, 30, 26, 22, 18]);
        assert_eq!(ps, vec![22, 26, 30, 10, 10, 10]);
        assert!(subordinate(&[10], &[9]).is_err());
    }

    #[test]
    fn slowed_orbit_chain_is_a_chain() {
        let c = ctx();
        let m = MapModel::slowed_default();
        let o = crate::orbit::extend_backward(&m, TorusPoint::new(0.21, 0.43), &BranchRule::Nearest, 160).unwrap();
        let charts = orbit_chain(&c, &o, 8).unwrap();
        assert_eq!(charts.len(), 17);
        for w in charts.windows(2) {
            assert!(edge(&w[0], &w[1], &c.lattice).unwrap());
            let (a, b) = (w[0].eta() as i64, w[1].eta() as i64);
            assert!((b - a).abs() <= 4);
        }
        let variant = tail_variant(&charts, 5, 4).unwrap();
        for w in variant.windows(2) {
            assert!(edge(&w[0], &w[1], &c.lattice).unwrap());
        }
        assert_ne!(variant[0].pu, charts[0].pu);
        assert_eq!(variant[8], charts[8]);
        assert!(tail_variant(&charts, 8, 40).is_err());
    }
}
