//! The shadowing map π, its semiconjugacy and hyperbolicity checks, summable
//! variations and diagnostics for two chains shadowing one point.
//!
//! Points are carried as chart offsets along the chain. Distances between
//! points in charts with a common base are computed from ambient
//! displacements C₀v, which stay representable at chart scale; base points
//! are only differenced when they differ.

use crate::graph::{Chain, ChainGraph, DoubleChart};
use crate::ladder::{variation_constant, Lattice, LADDER_STEP};
use crate::manifold::{
    intersect, limit_manifold_s, limit_manifold_u, AdmissibleManifold, EdgeTransform, LimitOptions, Seed, DEFAULT_GRID,
};
use crate::orbit::OrbitWindow;
use crate::torus::{op_norm, TorusPoint};
use crate::{Error, Result, Vec2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowOptions {
    pub tol: f64,
    pub grid: usize,
    pub seed: Seed,
    /// Also shadow σ(chain) and record the semiconjugacy defect.
    pub semiconjugacy: bool,
}

impl Default for ShadowOptions {
    fn default() -> Self {
        Self { tol: 1e-8, grid: DEFAULT_GRID, seed: Seed::Flat, semiconjugacy: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowResult {
    pub chain: Option<Chain>,
    /// Position of index 0 in the per-index vectors.
    pub center: usize,
    pub bases: Vec<TorusPoint>,
    /// Chart coordinates v_i of the shadowing point.
    pub offsets: Vec<[f64; 2]>,
    /// Ambient displacements C₀(x̃_i)v_i from each base.
    pub displacements: Vec<[f64; 2]>,
    /// |v_i| / 10Q(x̃_i); the point shadows the chain when all are ≤ 1.
    pub residuals: Vec<f64>,
    pub point: OrbitWindow,
    pub semiconjugacy_defect: Option<f64>,
    pub stable: AdmissibleManifold,
    pub unstable: AdmissibleManifold,
    /// Transform depths at which the stable and unstable limits settled.
    pub depth: (usize, usize),
}

impl ShadowResult {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0f64, |m, r| m.max(*r))
    }

    /// Displacement of the i-th point (relative to index 0) from `base`.
    fn displacement_from(&self, i: usize, base: TorusPoint) -> Vec2 {
        let d = self.displacements[i];
        base.displacement_to(self.bases[i]) + Vec2::new(d[0], d[1])
    }
}

pub fn chain_charts(g: &ChainGraph, chain: &Chain) -> Vec<DoubleChart> {
    chain.vertices.iter().map(|&v| g.vertices[v].clone()).collect()
}

pub fn edge_transforms(charts: &[DoubleChart], lattice: &Lattice) -> Result<Vec<EdgeTransform>> {
    charts.windows(2).map(|w| EdgeTransform::new(&w[0], &w[1], lattice)).collect()
}

/// d(x̃, ỹ) = sup_{i≤0} 2^i d(x_i, y_i) over the common past, with index 0
/// of `a` aligned to index `shift` of `b` (shift may be negative).
pub fn window_distance(a: &ShadowResult, b: &ShadowResult, shift: i64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..=a.center as i64 {
        let ia = a.center as i64 - i;
        let ib = b.center as i64 + shift - i;
        if ib < 0 || ib >= b.bases.len() as i64 {
            break;
        }
        let (ia, ib) = (ia as usize, ib as usize);
        let d = (b.displacement_from(ib, a.bases[ia]) - a.displacement_from(ia, a.bases[ia])).norm();
        best = best.max(d * 2f64.powi(-(i as i32)));
    }
    best
}

fn residual(v: Vec2, chart: &DoubleChart) -> f64 {
    let n = v.norm();
    if n == 0.0 {
        return 0.0;
    }
    (n.ln() - 10f64.ln() - chart.chart.ln_q).exp()
}

/// π on a window of double charts: intersect the stable limit of the forward
/// tail with the unstable limit of the backward tail at the center, then
/// carry the point along the chain.
pub fn shadow_charts(charts: &[DoubleChart], lattice: &Lattice, opts: &ShadowOptions) -> Result<ShadowResult> {
    if charts.len() < 5 {
        return Err(Error::DomainError(format!("chains need at least 5 charts, got {}", charts.len())));
    }
    let edges = edge_transforms(charts, lattice)?;
    let c = (charts.len() - 1) / 2;
    let lopts = LimitOptions { seed: opts.seed, tol: opts.tol, grid: opts.grid, out_radius: None };
    let vs = limit_manifold_s(&edges[c..], &lopts)?;
    let vu = limit_manifold_u(&edges[..c], &lopts)?;
    let v0 = intersect(&vs.manifold, &vu.manifold)?;

    let n = charts.len();
    let mut offsets = vec![Vec2::zeros(); n];
    offsets[c] = v0;
    for k in c..n - 1 {
        offsets[k + 1] = edges[k].local.forward_block(offsets[k]);
    }
    for k in (0..c).rev() {
        offsets[k] = edges[k].local.inverse_block(offsets[k + 1])?;
    }
    let mut residuals = Vec::with_capacity(n);
    for (k, v) in offsets.iter().enumerate() {
        let r = residual(*v, &charts[k]);
        if !(r <= 1.0) {
            return Err(Error::ShadowEscaped { index: k as i64 - c as i64, residual: r });
        }
        residuals.push(r);
    }
    let displacements: Vec<Vec2> = offsets.iter().zip(charts).map(|(v, ch)| ch.chart.c0() * v).collect();
    let bases: Vec<TorusPoint> = charts.iter().map(|ch| ch.base()).collect();
    let points: Vec<TorusPoint> = bases.iter().zip(&displacements).map(|(b, d)| b.translate(*d)).collect();
    let center_orbit = &charts[c].chart.orbit;
    let point = OrbitWindow {
        map: center_orbit.map.clone(),
        branch_rule: center_orbit.branch_rule.clone(),
        past: points[..c].to_vec(),
        present: points[c],
        forward: points[c + 1..].to_vec(),
        degenerate: false,
    };
    let mut result = ShadowResult {
        chain: None,
        center: c,
        bases,
        offsets: offsets.iter().map(|v| [v[0], v[1]]).collect(),
        displacements: displacements.iter().map(|v| [v[0], v[1]]).collect(),
        residuals,
        point,
        semiconjugacy_defect: None,
        stable: vs.manifold,
        unstable: vu.manifold,
        depth: (vs.depth, vu.depth),
    };
    if opts.semiconjugacy && n >= 7 {
        let shifted = shadow_charts(&charts[2..], lattice, &ShadowOptions { semiconjugacy: false, ..*opts })?;
        result.semiconjugacy_defect = Some(semiconjugacy_defect(&result, &shifted));
    }
    Ok(result)
}

/// d(π(σ·chain), f̂(π(chain))), with `shifted` the shadow of the chain window
/// starting two charts later.
pub fn semiconjugacy_defect(original: &ShadowResult, shifted: &ShadowResult) -> f64 {
    window_distance(shifted, original, 1)
}

pub fn shadow_pi(g: &ChainGraph, chain: &Chain, lattice: &Lattice, opts: &ShadowOptions) -> Result<ShadowResult> {
    let mut r = shadow_charts(&chain_charts(g, chain), lattice, opts)?;
    r.chain = Some(chain.clone());
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub steps: usize,
    pub pairs: usize,
    /// max over pairs and n of d(f^n y, f^n z) / 8I^{−n}(p₀^s).
    pub max_ratio: f64,
}

impl SeparationReport {
    pub fn holds(&self) -> bool {
        self.max_ratio <= 1.0
    }
}

/// Pushes pairs of points of the stable limit at index 0 forward along the
/// chain and compares their separation with 8I^{−n}(p₀^s).
pub fn hyperbolic_separation(
    charts: &[DoubleChart],
    result: &ShadowResult,
    lattice: &Lattice,
    max_steps: usize,
) -> Result<SeparationReport> {
    let edges = edge_transforms(charts, lattice)?;
    let c = result.center;
    let steps = max_steps.min(charts.len() - 1 - c);
    let vs = &result.stable;
    let ts: Vec<f64> = [-1.0, -0.5, -0.1, 0.0, 0.3, 0.7, 1.0].iter().map(|f| f * vs.radius).collect();
    let ps0 = charts[c].ps;
    let mut max_ratio: f64 = 0.0;
    let mut pairs = 0;
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            let mut y = vs.point(ts[i])?;
            let mut z = vs.point(ts[j])?;
            pairs += 1;
            for n in 0..=steps {
                if n > 0 {
                    y = edges[c + n - 1].local.forward_block(y);
                    z = edges[c + n - 1].local.forward_block(z);
                }
                let d = (charts[c + n].chart.c0() * (y - z)).norm();
                if d == 0.0 {
                    continue;
                }
                let ln_bound = 8f64.ln() + lattice.ln_value(ps0 + LADDER_STEP * n)?;
                max_ratio = max_ratio.max((d.ln() - ln_bound).exp());
            }
        }
    }
    Ok(SeparationReport { steps, pairs, max_ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub n_agree: usize,
    /// d_{C¹} between the two unstable leaf cores at index 0.
    pub distance: f64,
    pub constant: f64,
    pub constant_settled: bool,
    pub bound: f64,
    pub ratio: f64,
}

/// Depth at which the variation constant is evaluated.
pub const VARIATION_DEPTH: usize = 10_000;

/// Compares the unstable leaf cores of two chains agreeing on |i| ≤ n_agree,
/// both seeded at their first chart with the same seed.
pub fn summable_variation_check(
    charts1: &[DoubleChart],
    charts2: &[DoubleChart],
    n_agree: usize,
    lattice: &Lattice,
    seed: Seed,
) -> Result<VariationReport> {
    let (c1, c2) = ((charts1.len() - 1) / 2, (charts2.len() - 1) / 2);
    if c1 < n_agree || c2 < n_agree {
        return Err(Error::DomainError("chains are shorter than the agreement window".into()));
    }
    for i in 0..=2 * n_agree {
        let (a, b) = (&charts1[c1 - n_agree + i], &charts2[c2 - n_agree + i]);
        if a.base() != b.base() || a.ps != b.ps || a.pu != b.pu {
            return Err(Error::InfeasibleInput(format!("chains differ at index {}", i as i64 - n_agree as i64)));
        }
    }
    let center = &charts1[c1];
    let eta_index = center.eta();
    let eta = lattice.value(eta_index)?;
    let core = |charts: &[DoubleChart], c: usize| -> Result<AdmissibleManifold> {
        let edges = edge_transforms(&charts[..=c], lattice)?;
        crate::manifold::push_unstable(&edges, seed, DEFAULT_GRID, Some(eta * eta))
    };
    let d = core(charts1, c1)?.distance_c1(&core(charts2, c2)?)?;
    let p = lattice.params();
    let (constant, settled) = variation_constant(p, VARIATION_DEPTH)?;
    let ln_base = lattice.ln_value(eta_index + LADDER_STEP * n_agree)?;
    let bound = constant * (p.beta / 2.0 * ln_base).exp();
    let ratio = if d == 0.0 { 0.0 } else { (d.ln() - constant.ln() - p.beta / 2.0 * ln_base).exp() };
    Ok(VariationReport { n_agree, distance: d, constant, constant_settled: settled, bound, ratio })
}

/// Uniform continuity of π: chains agreeing on |i| ≤ n give points within
/// 16I^{−n}(1). Returns (distance, bound).
pub fn continuity_check(a: &ShadowResult, b: &ShadowResult, n: usize, lattice: &Lattice) -> Result<(f64, f64)> {
    let d = window_distance(a, b, 0);
    let bound = 16.0 * lattice.value(LADDER_STEP * n)?;
    Ok((d, bound))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexDiagnostics {
    pub index: i64,
    pub base_distance: f64,
    pub base_bound: f64,
    pub c0_inv_ratio: f64,
    pub c0_ratio_low: f64,
    pub c0_ratio_high: f64,
    pub ps_gap: usize,
    pub pu_gap: usize,
}

impl IndexDiagnostics {
    pub fn holds(&self) -> bool {
        self.base_distance <= self.base_bound
            && self.c0_inv_ratio >= self.c0_ratio_low
            && self.c0_inv_ratio <= self.c0_ratio_high
            && self.ps_gap <= LADDER_STEP
            && self.pu_gap <= LADDER_STEP
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub point_distance: f64,
    pub indices: Vec<IndexDiagnostics>,
}

impl DiagnosticsReport {
    pub fn holds(&self) -> bool {
        self.indices.iter().all(IndexDiagnostics::holds)
    }
}

/// Compares two chains whose shadows agree: base points within
/// max(η₁², η₂²)/25, ‖C₀⁻¹‖ ratios within e^{±(2Γ+1)Q^{β/8−1/(4γ)}} and
/// radii within one ladder step, at every index of the common window.
pub fn inverse_diagnostics(
    charts1: &[DoubleChart],
    charts2: &[DoubleChart],
    s1: &ShadowResult,
    s2: &ShadowResult,
    lattice: &Lattice,
    same_point_tol: f64,
) -> Result<DiagnosticsReport> {
    let point_distance = window_distance(s1, s2, 0);
    if !(point_distance <= same_point_tol) {
        return Err(Error::NotSamePoint { distance: point_distance });
    }
    let p = lattice.params();
    let exponent = p.beta / 8.0 - 1.0 / (4.0 * p.gamma);
    let half = s1.center.min(s2.center);
    let mut indices = Vec::with_capacity(2 * half + 1);
    for i in -(half as i64)..=half as i64 {
        let a = &charts1[(s1.center as i64 + i) as usize];
        let b = &charts2[(s2.center as i64 + i) as usize];
        let (e1, e2) = (lattice.ln_value(a.eta())?, lattice.ln_value(b.eta())?);
        let base_bound = (2.0 * e1.max(e2)).exp() / 25.0;
        let slack = (2.0 * p.big_gamma + 1.0) * (exponent * a.chart.ln_q).exp();
        let ratio = a.chart.frame.c0_inv_norm / b.chart.frame.c0_inv_norm;
        indices.push(IndexDiagnostics {
            index: i,
            base_distance: a.base().dist(b.base()),
            base_bound,
            c0_inv_ratio: ratio,
            c0_ratio_low: (-slack).exp(),
            c0_ratio_high: slack.exp(),
            ps_gap: a.ps.abs_diff(b.ps),
            pu_gap: a.pu.abs_diff(b.pu),
        });
    }
    Ok(DiagnosticsReport { point_distance, indices })
}

/// ‖C₀(x̃)‖ at the center of a result, for reporting.
pub fn center_c0_norm(charts: &[DoubleChart]) -> f64 {
    op_norm(&charts[(charts.len() - 1) / 2].chart.c0())
}
