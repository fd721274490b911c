//! Sampled Markov refinement of the cover {Z(v)}.
//!
//! Each Z(v) is approximated by the bounding box of the shadowed points whose
//! chain is centered at v. Boxes of vertices sharing a base point are
//! compared in the chart coordinates of the first such vertex; boxes over
//! different base points are disjoint at chart scale. Points are grouped by
//! the three-clause equivalence (membership, stable-leaf crossings,
//! unstable-leaf crossings) into atoms.

use crate::chart::LocalMap;
use crate::graph::{Chain, ChainGraph};
use crate::manifold::AdmissibleManifold;
use crate::orbit::invert;
use crate::shadow::ShadowResult;
use crate::{Error, Mat2, Result, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionOptions {
    /// Two sample points coincide when closer than this multiple of Q.
    pub match_tol: f64,
    /// Boxes are padded by this multiple of η².
    pub pad: f64,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        Self { match_tol: 1e-6, pad: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZBox {
    pub vertex: usize,
    pub group: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub samples: usize,
}

impl ZBox {
    fn contains(&self, p: Vec2) -> bool {
        (0..2).all(|k| self.lo[k] <= p[k] && p[k] <= self.hi[k])
    }

    fn meets(&self, o: &ZBox) -> bool {
        self.group == o.group && (0..2).all(|k| self.lo[k] <= o.hi[k] && o.lo[k] <= self.hi[k])
    }

    /// Liang–Barsky clip of the segment a → b.
    fn clip(&self, a: Vec2, b: Vec2) -> Option<(Vec2, Vec2)> {
        let d = b - a;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for k in 0..2 {
            for (p, q) in [(-d[k], a[k] - self.lo[k]), (d[k], self.hi[k] - a[k])] {
                if p == 0.0 {
                    if q < 0.0 {
                        return None;
                    }
                } else {
                    let r = q / p;
                    if p < 0.0 {
                        t0 = t0.max(r);
                    } else {
                        t1 = t1.min(r);
                    }
                }
            }
        }
        (t0 <= t1).then(|| (a + d * t0, a + d * t1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub membership: Vec<usize>,
    pub stable_crossings: Vec<(usize, usize)>,
    pub unstable_crossings: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub id: usize,
    pub signature: Signature,
    pub samples: Vec<usize>,
    /// N(R) = #{(R′, v′) : R′ ∼ R, R′ ⊂ Z(v′)}.
    pub n_r: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    pub samples: Vec<usize>,
    pub chains: usize,
    pub atoms: usize,
    /// min over the atoms R met by the fiber of N(R)².
    pub bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub boxes: Vec<ZBox>,
    pub atoms: Vec<Atom>,
    pub successors: Vec<Vec<usize>>,
    pub fibers: Vec<Fiber>,
    /// Largest leaf mismatch of the Markov property over matched samples,
    /// relative to the leaf domain.
    pub markov_defect: f64,
    pub matched: usize,
    pub unmatched: usize,
}

impl Partition {
    /// Atoms contained in each Z(v).
    pub fn atoms_per_box(&self) -> Vec<usize> {
        let mut n = vec![0; self.boxes.len()];
        for a in &self.atoms {
            for &v in &a.signature.membership {
                n[v] += 1;
            }
        }
        n
    }

    pub fn successor_matrix(&self) -> Vec<Vec<u8>> {
        let n = self.atoms.len();
        let mut m = vec![vec![0u8; n]; n];
        for (i, s) in self.successors.iter().enumerate() {
            for &j in s {
                m[i][j] = 1;
            }
        }
        m
    }

    pub fn fibers_within_bound(&self) -> bool {
        self.fibers.iter().all(|f| f.atoms <= f.bound)
    }
}

/// Per-group frame: the first vertex at a base point supplies C₀⁻¹.
struct Groups {
    of_vertex: Vec<usize>,
    c0_inv: Vec<Mat2>,
    by_base: HashMap<(u64, u64), usize>,
}

impl Groups {
    fn new(g: &ChainGraph) -> Result<Self> {
        let mut by_base = HashMap::new();
        let mut c0_inv = Vec::new();
        let mut of_vertex = Vec::with_capacity(g.len());
        for v in &g.vertices {
            let b = v.base();
            let key = (b.x.to_bits(), b.y.to_bits());
            let id = match by_base.get(&key) {
                Some(&id) => id,
                None => {
                    let inv = invert(&v.chart.c0()).ok_or(Error::DegenerateAt(b.to_array()))?;
                    c0_inv.push(inv);
                    by_base.insert(key, c0_inv.len() - 1);
                    c0_inv.len() - 1
                }
            };
            of_vertex.push(id);
        }
        Ok(Self { of_vertex, c0_inv, by_base })
    }

    fn coords(&self, group: usize, displacement: Vec2) -> Vec2 {
        self.c0_inv[group] * displacement
    }
}

struct Sample<'a> {
    result: &'a ShadowResult,
    vertex: usize,
    group: usize,
    point: Vec2,
    stable: Vec<Vec2>,
    unstable: Vec<Vec2>,
}

fn leaf(groups: &Groups, group: usize, c0: &Mat2, m: &AdmissibleManifold) -> Result<Vec<Vec2>> {
    (0..m.grid()).map(|i| Ok(groups.coords(group, c0 * m.point(m.node(i))?))).collect()
}

fn crosses(polyline: &[Vec2], z: &ZBox, zp: &ZBox) -> bool {
    polyline.windows(2).any(|w| z.clip(w[0], w[1]).and_then(|(a, b)| zp.clip(a, b)).is_some())
}

fn center_vertex(r: &ShadowResult) -> Result<usize> {
    let chain: &Chain = r.chain.as_ref().ok_or_else(|| Error::InsufficientSamples("sample without a chain".into()))?;
    Ok(chain.vertices[r.center])
}

pub fn markov_refine(g: &ChainGraph, samples: &[ShadowResult], opts: &PartitionOptions) -> Result<Partition> {
    let groups = Groups::new(g)?;
    let lattice_q: Vec<f64> = g.vertices.iter().map(|v| v.chart.q()).collect();

    let mut prepared = Vec::with_capacity(samples.len());
    for r in samples {
        let vertex = center_vertex(r)?;
        if vertex >= g.len() {
            return Err(Error::InsufficientSamples(format!("sample centered at unknown vertex {vertex}")));
        }
        let group = groups.of_vertex[vertex];
        let c0 = g.vertices[vertex].chart.c0();
        let d = r.displacements[r.center];
        prepared.push(Sample {
            result: r,
            vertex,
            group,
            point: groups.coords(group, Vec2::new(d[0], d[1])),
            stable: leaf(&groups, group, &c0, &r.stable)?,
            unstable: leaf(&groups, group, &c0, &r.unstable)?,
        });
    }

    let mut boxes: Vec<Option<ZBox>> = vec![None; g.len()];
    for s in &prepared {
        let b = boxes[s.vertex].get_or_insert(ZBox {
            vertex: s.vertex,
            group: s.group,
            lo: [s.point[0], s.point[1]],
            hi: [s.point[0], s.point[1]],
            samples: 0,
        });
        for k in 0..2 {
            b.lo[k] = b.lo[k].min(s.point[k]);
            b.hi[k] = b.hi[k].max(s.point[k]);
        }
        b.samples += 1;
    }
    let mut padded = Vec::with_capacity(g.len());
    for (v, b) in boxes.into_iter().enumerate() {
        let mut b = b.ok_or_else(|| Error::InsufficientSamples(format!("no sample in Z({v})")))?;
        let eta = g.vertices[v].chart.q().min(1.0);
        let pad = opts.pad * eta * eta;
        for k in 0..2 {
            b.lo[k] -= pad;
            b.hi[k] += pad;
        }
        padded.push(b);
    }
    let boxes = padded;
    let mut in_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for b in &boxes {
        in_group.entry(b.group).or_default().push(b.vertex);
    }

    let signatures: Vec<Signature> = prepared
        .iter()
        .map(|s| {
            let local = &in_group[&s.group];
            let membership: Vec<usize> = local.iter().copied().filter(|&v| boxes[v].contains(s.point)).collect();
            let mut st = Vec::new();
            let mut un = Vec::new();
            for &z in &membership {
                for &zp in local {
                    if crosses(&s.stable, &boxes[z], &boxes[zp]) {
                        st.push((z, zp));
                    }
                    if crosses(&s.unstable, &boxes[z], &boxes[zp]) {
                        un.push((z, zp));
                    }
                }
            }
            Signature { membership, stable_crossings: st, unstable_crossings: un }
        })
        .collect();

    let mut atom_of_sig: BTreeMap<Signature, usize> = BTreeMap::new();
    let mut atoms: Vec<Atom> = Vec::new();
    let mut atom_of_sample = Vec::with_capacity(prepared.len());
    for (i, sig) in signatures.into_iter().enumerate() {
        let id = *atom_of_sig.entry(sig.clone()).or_insert_with(|| {
            atoms.push(Atom { id: atoms.len(), signature: sig, samples: Vec::new(), n_r: 0 });
            atoms.len() - 1
        });
        atoms[id].samples.push(i);
        atom_of_sample.push(id);
    }
    let related = |a: &Atom, b: &Atom| {
        a.signature.membership.iter().any(|&v| b.signature.membership.iter().any(|&w| boxes[v].meets(&boxes[w])))
    };
    let n_r: Vec<usize> = atoms
        .iter()
        .map(|a| atoms.iter().filter(|b| related(a, b)).map(|b| b.signature.membership.len()).sum())
        .collect();
    for (a, n) in atoms.iter_mut().zip(n_r) {
        a.n_r = n;
    }

    // f̂-images of samples, matched against other samples.
    let mut successors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); atoms.len()];
    let mut markov_defect: f64 = 0.0;
    let (mut matched, mut unmatched) = (0, 0);
    let mut by_group: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, s) in prepared.iter().enumerate() {
        by_group.entry(s.group).or_default().push(i);
    }
    for (i, s) in prepared.iter().enumerate() {
        let r = s.result;
        if r.center + 1 >= r.bases.len() {
            unmatched += 1;
            continue;
        }
        let b = r.bases[r.center + 1];
        let Some(&group) = groups.by_base.get(&(b.x.to_bits(), b.y.to_bits())) else {
            unmatched += 1;
            continue;
        };
        let d = r.displacements[r.center + 1];
        let image = groups.coords(group, Vec2::new(d[0], d[1]));
        let hit = by_group.get(&group).and_then(|cands| {
            cands
                .iter()
                .copied()
                .find(|&j| (prepared[j].point - image).norm() <= opts.match_tol * lattice_q[prepared[j].vertex])
        });
        let Some(j) = hit else {
            unmatched += 1;
            continue;
        };
        matched += 1;
        successors[atom_of_sample[i]].insert(atom_of_sample[j]);
        if g.successors[s.vertex].contains(&prepared[j].vertex) {
            let lm = LocalMap::new(&g.vertices[s.vertex].chart, &g.vertices[prepared[j].vertex].chart)?;
            markov_defect = markov_defect.max(leaf_defect(
                &lm,
                &r.stable,
                &prepared[j].result.stable,
                &r.unstable,
                &prepared[j].result.unstable,
            )?);
        }
    }

    // Fibers: samples whose points coincide.
    let mut fibers = Vec::new();
    let mut seen = vec![false; prepared.len()];
    for i in 0..prepared.len() {
        if seen[i] {
            continue;
        }
        let tol = opts.match_tol * lattice_q[prepared[i].vertex];
        let members: Vec<usize> = by_group[&prepared[i].group]
            .iter()
            .copied()
            .filter(|&j| !seen[j] && (prepared[j].point - prepared[i].point).norm() <= tol)
            .collect();
        for &j in &members {
            seen[j] = true;
        }
        let chains: BTreeSet<&Vec<usize>> =
            members.iter().filter_map(|&j| prepared[j].result.chain.as_ref().map(|c| &c.vertices)).collect();
        let fiber_atoms: BTreeSet<usize> = members.iter().map(|&j| atom_of_sample[j]).collect();
        let bound = fiber_atoms.iter().map(|&a| atoms[a].n_r * atoms[a].n_r).min().unwrap_or(0);
        fibers.push(Fiber { chains: chains.len(), atoms: fiber_atoms.len(), bound, samples: members });
    }

    Ok(Partition {
        boxes,
        atoms,
        successors: successors.into_iter().map(|s| s.into_iter().collect()).collect(),
        fibers,
        markov_defect,
        matched,
        unmatched,
    })
}

/// Markov property on leaves: F maps the stable leaf at x̃ into the stable
/// leaf at f̂(x̃), and F⁻¹ maps the unstable leaf at f̂(x̃) into the one at x̃.
fn leaf_defect(
    lm: &LocalMap,
    s0: &AdmissibleManifold,
    s1: &AdmissibleManifold,
    u0: &AdmissibleManifold,
    u1: &AdmissibleManifold,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..s0.grid() {
        let t = 0.5 * s0.node(i);
        let z = lm.forward_block(s0.point(t)?);
        if let Ok(g) = s1.eval(z[0]) {
            worst = worst.max((g - z[1]).abs() / s1.radius);
        }
    }
    for i in 0..u1.grid() {
        let t = 0.5 * u1.node(i);
        let z = lm.inverse_block(u1.point(t)?)?;
        if let Ok(g) = u0.eval(z[1]) {
            worst = worst.max((g - z[0]).abs() / u0.radius);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{ChartContext, ChartParams};
    use crate::graph::{coarse_grain, desk_orbits, DoubleChart, GrainSpec, GraphProvenance};
    use crate::shadow::{shadow_charts, shadow_pi, ShadowOptions};
    use crate::torus::MapModel;

    fn ctx() -> ChartContext {
        ChartContext::new(ChartParams::default()).unwrap()
    }

    #[test]
    fn clip_segments() {
        let b = ZBox { vertex: 0, group: 0, lo: [0.0, 0.0], hi: [1.0, 1.0], samples: 1 };
        let (a, c) = b.clip(Vec2::new(-1.0, 0.5), Vec2::new(2.0, 0.5)).unwrap();
        assert_eq!((a, c), (Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.5)));
        assert!(b.clip(Vec2::new(-1.0, 2.0), Vec2::new(2.0, 2.0)).is_none());
        let point = ZBox { lo: [0.5, 0.5], hi: [0.5, 0.5], ..b };
        assert!(point.clip(Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.5)).is_some());
    }

    #[test]
    fn self_loop_gives_one_atom() {
        let c = ctx();
        let orbits = desk_orbits(&MapModel::cat(), 1, 0, 0, c.params.trunc_n).unwrap();
        let g = coarse_grain(&c, &orbits, GrainSpec::default()).unwrap();
        let chain = Chain { vertices: vec![0; 7], periodic: true };
        let s = shadow_pi(&g, &chain, &c.lattice, &ShadowOptions::default()).unwrap();
        let p = markov_refine(&g, &[s], &PartitionOptions::default()).unwrap();
        assert_eq!(p.atoms.len(), 1);
        assert_eq!(p.successors, vec![vec![0]]);
        assert_eq!(p.markov_defect, 0.0);
        assert!(p.fibers_within_bound());
        assert!(markov_refine(&g, &[], &PartitionOptions::default()).is_err());
    }

    #[test]
    fn overlapping_boxes_share_atoms() {
        // Two double charts at the fixed point with different radii: their
        // Z-boxes coincide, so the single atom has N(R) = 2.
        let c = ctx();
        let o = desk_orbits(&MapModel::cat(), 1, 0, 0, c.params.trunc_n).unwrap().remove(0);
        let v1 = DoubleChart::at(&c, &o, None, None).unwrap();
        let q = v1.q_index();
        let v2 = DoubleChart { ps: q + 4, ..v1.clone() };
        let prov = GraphProvenance {
            grain: GrainSpec::default(),
            eps: 0.05,
            input_orbits: 1,
            rejected: 0,
            classes: 2,
            pruned: 0,
        };
        let g = ChainGraph::from_vertices_unpruned(vec![v1.clone(), v2.clone()], &c.lattice, prov).unwrap();
        assert!(g.successors[0].contains(&1));
        let mut samples = Vec::new();
        for (center, chart) in [(0usize, &v1), (1, &v2)] {
            let charts = vec![v1.clone(), v1.clone(), chart.clone(), v1.clone(), v1.clone()];
            let mut r = shadow_charts(&charts, &c.lattice, &ShadowOptions::default()).unwrap();
            r.chain = Some(Chain { vertices: vec![0, 0, center, 0, 0], periodic: false });
            samples.push(r);
        }
        let p = markov_refine(&g, &samples, &PartitionOptions::default()).unwrap();
        assert_eq!(p.atoms.len(), 1);
        assert_eq!(p.atoms[0].n_r, 2);
        assert_eq!(p.fibers.len(), 1);
        assert_eq!(p.fibers[0].chains, 2);
        assert!(p.fibers_within_bound());
        assert_eq!(p.atoms_per_box(), vec![1, 1]);
    }
}
