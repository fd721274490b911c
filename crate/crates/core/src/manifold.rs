//! Admissible manifolds and the stable/unstable graph transforms.
//!
//! A stable manifold is the graph {(t, G(t))} over the stable coordinate and
//! an unstable manifold the graph {(G(t), t)} over the unstable coordinate,
//! both in chart coordinates. Representing functions are grid samples with
//! linear interpolation.

use crate::chart::LocalMap;
use crate::graph::DoubleChart;
use crate::ladder::Lattice;
use crate::{Error, Result, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_GRID: usize = 65;
/// Iteration cap of the inner fixed-point solves.
pub const FIXED_POINT_CAP: usize = 200;
/// Relative slack allowed on the admissibility budgets.
pub const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleManifold {
    pub kind: Kind,
    /// Half-width of the domain [−radius, radius].
    pub radius: f64,
    /// p^s ∧ p^u of the chart carrying the manifold.
    pub eta: f64,
    pub beta: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub g0_abs: f64,
    pub am1_bound: f64,
    pub d0g_norm: f64,
    pub am2_bound: f64,
    pub dg_c0: f64,
    pub holder_half_beta: f64,
    pub am1: bool,
    pub am2: bool,
    pub am3: bool,
}

impl AdmissibilityReport {
    pub fn admissible(&self) -> bool {
        self.am1 && self.am2 && self.am3
    }
}

impl AdmissibleManifold {
    pub fn from_fn(kind: Kind, radius: f64, eta: f64, beta: f64, grid: usize, f: impl Fn(f64) -> f64) -> Self {
        let grid = grid.max(2);
        let step = 2.0 * radius / (grid - 1) as f64;
        let values = (0..grid).map(|i| f(-radius + step * i as f64)).collect();
        Self { kind, radius, eta, beta, values }
    }

    pub fn flat(kind: Kind, radius: f64, eta: f64, beta: f64, grid: usize) -> Self {
        Self::from_fn(kind, radius, eta, beta, grid, |_| 0.0)
    }

    /// A random admissible quadratic a + bt + ct² with |a| ≤ 10⁻³η²,
    /// |b| ≤ ¼η^{β/2} and |c| ≤ 0.05/√radius.
    pub fn random(kind: Kind, radius: f64, eta: f64, beta: f64, grid: usize, rng: &mut impl Rng) -> Self {
        let a = rng.gen_range(-1.0..=1.0) * 1e-3 * eta * eta;
        let b = rng.gen_range(-1.0..=1.0) * 0.25 * eta.powf(beta / 2.0);
        let c = rng.gen_range(-1.0..=1.0) * 0.05 / radius.sqrt();
        Self::from_fn(kind, radius, eta, beta, grid, |t| a + b * t + c * t * t)
    }

    pub fn grid(&self) -> usize {
        self.values.len()
    }

    pub fn step(&self) -> f64 {
        2.0 * self.radius / (self.grid() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.radius + self.step() * i as f64
    }

    /// Linear interpolation; errors outside the domain.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t.abs() <= self.radius * (1.0 + BUDGET_SLACK)) {
            return Err(Error::AdmissibilityLost(format!(
                "evaluation at {t:e} outside the domain of half-width {:e}",
                self.radius
            )));
        }
        let x = ((t + self.radius) / self.step()).clamp(0.0, (self.grid() - 1) as f64);
        let i = (x.floor() as usize).min(self.grid() - 2);
        let f = x - i as f64;
        Ok(self.values[i] * (1.0 - f) + self.values[i + 1] * f)
    }

    /// Cell slopes, one per grid interval.
    pub fn slopes(&self) -> Vec<f64> {
        let h = self.step();
        self.values.windows(2).map(|w| (w[1] - w[0]) / h).collect()
    }

    pub fn check(&self) -> AdmissibilityReport {
        let slopes = self.slopes();
        let n = self.grid();
        let d0g_norm = if n % 2 == 1 {
            ((self.values[n / 2 + 1] - self.values[n / 2 - 1]) / (2.0 * self.step())).abs()
        } else {
            slopes[n / 2 - 1].abs()
        };
        let dg_c0 = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let h = self.step();
        let mut holder: f64 = 0.0;
        for i in 0..slopes.len() {
            for j in i + 2..slopes.len() {
                let sep = ((j - i) as f64 * h).powf(self.beta / 2.0);
                holder = holder.max((slopes[i] - slopes[j]).abs() / sep);
            }
        }
        let g0_abs = self.eval(0.0).map(f64::abs).unwrap_or(f64::INFINITY);
        let am1_bound = 1e-3 * self.eta * self.eta;
        let am2_bound = 0.5 * self.eta.powf(self.beta / 2.0);
        AdmissibilityReport {
            g0_abs,
            am1_bound,
            d0g_norm,
            am2_bound,
            dg_c0,
            holder_half_beta: holder,
            am1: g0_abs <= am1_bound * (1.0 + BUDGET_SLACK),
            am2: d0g_norm <= am2_bound * (1.0 + BUDGET_SLACK),
            am3: dg_c0 + holder < 0.5 * (1.0 + BUDGET_SLACK),
        }
    }

    /// sup |G₁ − G₂| over the nodes of self lying in both domains.
    pub fn distance_c0(&self, other: &AdmissibleManifold) -> Result<f64> {
        let r = self.radius.min(other.radius);
        let mut d: f64 = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let t = self.node(i);
            if t.abs() <= r {
                d = d.max((v - other.eval(t)?).abs());
            }
        }
        Ok(d)
    }

    /// sup |G₁ − G₂| + sup |G₁′ − G₂′| on a common grid.
    pub fn distance_c1(&self, other: &AdmissibleManifold) -> Result<f64> {
        if self.grid() != other.grid() || self.radius != other.radius {
            return Err(Error::DomainError("C¹ distance needs matching grids".into()));
        }
        let c0 = self.values.iter().zip(&other.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let c1 = self.slopes().iter().zip(other.slopes()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Ok(c0 + c1)
    }

    /// Resamples onto a grid over [−radius, radius].
    pub fn restrict(&self, radius: f64, grid: usize) -> Result<Self> {
        let step = 2.0 * radius / (grid.max(2) - 1) as f64;
        let values = (0..grid.max(2)).map(|i| self.eval(-radius + step * i as f64)).collect::<Result<_>>()?;
        Ok(Self { radius, values, ..self.clone() })
    }

    pub fn point(&self, t: f64) -> Result<Vec2> {
        let g = self.eval(t)?;
        Ok(match self.kind {
            Kind::Stable => Vec2::new(t, g),
            Kind::Unstable => Vec2::new(g, t),
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "value", "slope"])?;
        let slopes = self.slopes();
        for (i, v) in self.values.iter().enumerate() {
            let s = slopes[i.min(slopes.len() - 1)];
            wr.write_record([format!("{:.16e}", self.node(i)), format!("{v:.16e}"), format!("{s:.16e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// The chart-coordinate map along one edge v → w, with the radii of both ends.
#[derive(Debug, Clone)]
pub struct EdgeTransform {
    pub local: LocalMap,
    pub src_ps: f64,
    pub src_pu: f64,
    pub dst_ps: f64,
    pub dst_pu: f64,
    /// s(x̃) at the source and u(ỹ) at the target.
    pub src_s: f64,
    pub dst_u: f64,
    pub beta: f64,
}

impl EdgeTransform {
    pub fn new(v: &DoubleChart, w: &DoubleChart, lattice: &Lattice) -> Result<Self> {
        Ok(Self {
            local: LocalMap::new(&v.chart, &w.chart)?,
            src_ps: lattice.value(v.ps)?,
            src_pu: lattice.value(v.pu)?,
            dst_ps: lattice.value(w.ps)?,
            dst_pu: lattice.value(w.pu)?,
            src_s: v.chart.frame.s,
            dst_u: w.chart.frame.u,
            beta: lattice.params().beta,
        })
    }

    pub fn src_eta(&self) -> f64 {
        self.src_ps.min(self.src_pu)
    }

    pub fn dst_eta(&self) -> f64 {
        self.dst_ps.min(self.dst_pu)
    }

    /// e^{−(1−ε)/u²(ỹ)}, the stable contraction rate.
    pub fn stable_rate(&self, eps: f64) -> f64 {
        (-(1.0 - eps) / (self.dst_u * self.dst_u)).exp()
    }

    /// e^{−(1−ε)/s²(x̃)}, the unstable contraction rate.
    pub fn unstable_rate(&self, eps: f64) -> f64 {
        (-(1.0 - eps) / (self.src_s * self.src_s)).exp()
    }
}

/// Scalar fixed-point iteration x ↦ g(x), damped by ½ once successive
/// differences alternate in sign.
fn fixed_point(mut x: f64, scale: f64, mut g: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut damped = false;
    let mut last_diff = 0.0;
    for _ in 0..FIXED_POINT_CAP {
        let mut next = g(x)?;
        let diff = next - x;
        if diff * last_diff < 0.0 {
            damped = true;
        }
        if damped {
            next = x + 0.5 * diff;
        }
        if diff.abs() <= 1e-12 * scale || diff == 0.0 {
            return Ok(next);
        }
        last_diff = diff;
        x = next;
    }
    Err(Error::FixedPointDiverged { iterations: FIXED_POINT_CAP })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformOptions {
    pub grid: usize,
    /// Output half-width; defaults to the full radius (p^s or p^u of the target).
    pub out_radius: Option<f64>,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self { grid: DEFAULT_GRID, out_radius: None }
    }
}

fn finish(m: AdmissibleManifold, check: bool) -> Result<AdmissibleManifold> {
    if check {
        let r = m.check();
        if !r.admissible() {
            return Err(Error::AdmissibilityLost(format!(
                "AM1 {:e}/{:e} AM2 {:e}/{:e} AM3 {:e}",
                r.g0_abs,
                r.am1_bound,
                r.d0g_norm,
                r.am2_bound,
                r.dg_c0 + r.holder_half_beta
            )));
        }
    }
    Ok(m)
}

/// Pulls an s-admissible manifold at w back to v through F⁻¹.
///
/// For each target node t, the fixed point t′ = D_s(t − h⁻_s(t′, G(t′)))
/// locates the source point whose preimage has stable coordinate t; the new
/// value is G(t′)/D_u + h⁻_u(t′, G(t′)).
pub fn graph_transform_s(
    e: &EdgeTransform,
    vs_w: &AdmissibleManifold,
    opts: &TransformOptions,
) -> Result<AdmissibleManifold> {
    let lm = &e.local;
    let radius = opts.out_radius.unwrap_or(e.src_ps);
    let (ds, du) = (lm.d_s(), lm.d_u());
    let step = 2.0 * radius / (opts.grid - 1) as f64;
    let mut values = Vec::with_capacity(opts.grid);
    for i in 0..opts.grid {
        let t = -radius + step * i as f64;
        let tp = fixed_point(ds * t, radius, |tp| {
            let z = Vec2::new(tp, vs_w.eval(tp)?);
            Ok(ds * (t - lm.h_inv(z)?[0]))
        })?;
        let g = vs_w.eval(tp)?;
        let hu = lm.h_inv(Vec2::new(tp, g))?[1];
        values.push(g / du + hu);
    }
    let m = AdmissibleManifold { kind: Kind::Stable, radius, eta: e.src_eta(), beta: e.beta, values };
    finish(m, opts.out_radius.is_none())
}

/// Pushes a u-admissible manifold at v forward to w through F.
///
/// For each target node t″, the fixed point t = (t″ − h_u(G(t), t))/D_u
/// locates the source point; the new value is D_s G(t) + h_s(G(t), t).
pub fn graph_transform_u(
    e: &EdgeTransform,
    vu_v: &AdmissibleManifold,
    opts: &TransformOptions,
) -> Result<AdmissibleManifold> {
    let lm = &e.local;
    let radius = opts.out_radius.unwrap_or(e.dst_pu);
    let (ds, du) = (lm.d_s(), lm.d_u());
    let step = 2.0 * radius / (opts.grid - 1) as f64;
    let mut values = Vec::with_capacity(opts.grid);
    for i in 0..opts.grid {
        let tpp = -radius + step * i as f64;
        let t = fixed_point(tpp / du, radius, |t| {
            let z = Vec2::new(vu_v.eval(t)?, t);
            Ok((tpp - lm.h(z)[1]) / du)
        })?;
        let g = vu_v.eval(t)?;
        values.push(ds * g + lm.h(Vec2::new(g, t))[0]);
    }
    let m = AdmissibleManifold { kind: Kind::Unstable, radius, eta: e.dst_eta(), beta: e.beta, values };
    finish(m, opts.out_radius.is_none())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Seed {
    Flat,
    Random(u64),
}

fn seed_manifold(
    kind: Kind,
    radius: f64,
    eta: f64,
    beta: f64,
    grid: usize,
    seed: Seed,
    index: usize,
) -> AdmissibleManifold {
    match seed {
        Seed::Flat => AdmissibleManifold::flat(kind, radius, eta, beta, grid),
        Seed::Random(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64));
            AdmissibleManifold::random(kind, radius, eta, beta, grid, &mut rng)
        }
    }
}

/// Seeds the last chart of `edges` and pulls the seed back to the first.
pub fn push_stable(
    edges: &[EdgeTransform],
    seed: Seed,
    grid: usize,
    out_radius: Option<f64>,
) -> Result<AdmissibleManifold> {
    let n = edges.len();
    let top = &edges[n - 1];
    let mut m = seed_manifold(Kind::Stable, top.dst_ps, top.dst_eta(), top.beta, grid, seed, n);
    for k in (0..n).rev() {
        let o = TransformOptions { grid, out_radius: if k == 0 { out_radius } else { None } };
        m = graph_transform_s(&edges[k], &m, &o)?;
    }
    Ok(m)
}

/// Seeds the first chart of `edges` and pushes the seed forward to the last.
pub fn push_unstable(
    edges: &[EdgeTransform],
    seed: Seed,
    grid: usize,
    out_radius: Option<f64>,
) -> Result<AdmissibleManifold> {
    let n = edges.len();
    let bottom = &edges[0];
    let mut m = seed_manifold(Kind::Unstable, bottom.src_pu, bottom.src_eta(), bottom.beta, grid, seed, n);
    for (k, e) in edges.iter().enumerate() {
        let o = TransformOptions { grid, out_radius: if k == n - 1 { out_radius } else { None } };
        m = graph_transform_u(e, &m, &o)?;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitResult {
    pub manifold: AdmissibleManifold,
    /// Number of transforms applied to the seed of the accepted iterate.
    pub depth: usize,
    /// sup-distance between the last two iterates, relative to the domain radius.
    pub last_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    pub seed: Seed,
    /// Tolerance on the step, relative to the domain half-width.
    pub tol: f64,
    pub grid: usize,
    /// Half-width of the returned manifold (the leaf core uses η²).
    pub out_radius: Option<f64>,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self { seed: Seed::Flat, tol: 1e-8, grid: DEFAULT_GRID, out_radius: None }
    }
}

/// V^s at the first chart of a forward tail: `edges[k]` maps chart k to k+1.
/// The n-th iterate pulls a seed at chart n back to chart 0.
pub fn limit_manifold_s(edges: &[EdgeTransform], opts: &LimitOptions) -> Result<LimitResult> {
    if edges.is_empty() {
        return Err(Error::DomainError("a forward tail needs at least one edge".into()));
    }
    let mut prev: Option<AdmissibleManifold> = None;
    let mut last_step = f64::INFINITY;
    for n in 1..=edges.len() {
        let m = push_stable(&edges[..n], opts.seed, opts.grid, opts.out_radius)?;
        if let Some(p) = &prev {
            last_step = m.distance_c0(p)? / m.radius;
            if last_step < opts.tol {
                return Ok(LimitResult { manifold: m, depth: n, last_step });
            }
        }
        prev = Some(m);
    }
    Err(Error::NotConverged { step: last_step })
}

/// V^u at the last chart of a backward tail: `edges[k]` maps chart k to k+1.
/// The n-th iterate pushes a seed at chart len−n forward to the last chart.
pub fn limit_manifold_u(edges: &[EdgeTransform], opts: &LimitOptions) -> Result<LimitResult> {
    if edges.is_empty() {
        return Err(Error::DomainError("a backward tail needs at least one edge".into()));
    }
    let len = edges.len();
    let mut prev: Option<AdmissibleManifold> = None;
    let mut last_step = f64::INFINITY;
    for n in 1..=len {
        let m = push_unstable(&edges[len - n..], opts.seed, opts.grid, opts.out_radius)?;
        if let Some(p) = &prev {
            last_step = m.distance_c0(p)? / m.radius;
            if last_step < opts.tol {
                return Ok(LimitResult { manifold: m, depth: n, last_step });
            }
        }
        prev = Some(m);
    }
    Err(Error::NotConverged { step: last_step })
}

/// The intersection point of an s- and a u-admissible manifold on one chart.
pub fn intersect(vs: &AdmissibleManifold, vu: &AdmissibleManifold) -> Result<Vec2> {
    if vs.kind != Kind::Stable || vu.kind != Kind::Unstable {
        return Err(Error::NoIntersection("expected a stable and an unstable manifold".into()));
    }
    let mut z = Vec2::zeros();
    for _ in 0..FIXED_POINT_CAP {
        let s = vu.eval(z[1]).map_err(|e| Error::NoIntersection(e.to_string()))?;
        let u = vs.eval(s).map_err(|e| Error::NoIntersection(e.to_string()))?;
        let next = Vec2::new(s, u);
        let step = (next - z).norm();
        z = next;
        if step == 0.0 || step <= 1e-15 * z.norm() {
            return Ok(z);
        }
    }
    Err(Error::NoIntersection("alternating projections did not settle".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{ChartContext, ChartParams};
    use crate::graph::{desk_orbits, orbit_chain, DoubleChart};
    use crate::orbit::{extend_backward, BranchRule};
    use crate::torus::{MapModel, TorusPoint};

    #[test]
    fn admissibility_budgets() {
        let eta = 1e-20;
        let flat = AdmissibleManifold::flat(Kind::Stable, eta, eta, 1.0, 65);
        let r = flat.check();
        assert!(r.admissible());
        assert_eq!((r.g0_abs, r.d0g_norm, r.dg_c0, r.holder_half_beta), (0.0, 0.0, 0.0, 0.0));
        let edge = AdmissibleManifold::from_fn(Kind::Stable, eta, eta, 1.0, 65, |_| 1e-3 * eta * eta);
        assert!(edge.check().am1);
        let over = AdmissibleManifold::from_fn(Kind::Stable, eta, eta, 1.0, 65, |_| 1.01e-3 * eta * eta);
        assert!(!over.check().am1);
        let steep = AdmissibleManifold::from_fn(Kind::Stable, eta, eta, 1.0, 65, |t| t);
        assert!(!steep.check().am3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(AdmissibleManifold::random(Kind::Unstable, 3e-30, 2e-30, 1.0, 65, &mut rng).check().admissible());
        }
    }

    #[test]
    fn interpolation_and_domain() {
        let m = AdmissibleManifold::from_fn(Kind::Stable, 2.0, 1.0, 1.0, 5, |t| 3.0 * t);
        assert!((m.eval(0.3).unwrap() - 0.9).abs() < 1e-12);
        assert!(m.eval(2.5).is_err());
        let r = m.restrict(1.0, 9).unwrap();
        assert!((r.eval(-0.75).unwrap() + 2.25).abs() < 1e-12);
    }

    fn cat_fixed_edge() -> (ChartContext, DoubleChart) {
        let ctx = ChartContext::new(ChartParams::default()).unwrap();
        let o = desk_orbits(&MapModel::cat(), 1, 0, 0, 64).unwrap().remove(0);
        let v = DoubleChart::at(&ctx, &o, None, None).unwrap();
        (ctx, v)
    }

    #[test]
    fn linear_flat_graphs_are_invariant() {
        let (ctx, v) = cat_fixed_edge();
        let e = EdgeTransform::new(&v, &v, &ctx.lattice).unwrap();
        let flat_s = AdmissibleManifold::flat(Kind::Stable, e.dst_ps, e.dst_eta(), 1.0, 65);
        let out = graph_transform_s(&e, &flat_s, &TransformOptions::default()).unwrap();
        assert!(out.values.iter().all(|&g| g == 0.0));
        let flat_u = AdmissibleManifold::flat(Kind::Unstable, e.src_pu, e.src_eta(), 1.0, 65);
        let out = graph_transform_u(&e, &flat_u, &TransformOptions::default()).unwrap();
        assert!(out.values.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_contraction_rates() {
        // Oracle: for the linear model the transforms scale graphs by exactly
        // 1/λ_u (stable) and λ_s (unstable) after re-parametrization.
        let (ctx, v) = cat_fixed_edge();
        let e = EdgeTransform::new(&v, &v, &ctx.lattice).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lu = 2.0 + 2f64.sqrt();
        for _ in 0..20 {
            let a = AdmissibleManifold::random(Kind::Stable, e.dst_ps, e.dst_eta(), 1.0, 65, &mut rng);
            let b = AdmissibleManifold::random(Kind::Stable, e.dst_ps, e.dst_eta(), 1.0, 65, &mut rng);
            let fa = graph_transform_s(&e, &a, &TransformOptions::default()).unwrap();
            let fb = graph_transform_s(&e, &b, &TransformOptions::default()).unwrap();
            let ratio = fa.distance_c0(&fb).unwrap() / a.distance_c0(&b).unwrap();
            assert!(ratio <= 1.0 / lu * (1.0 + 1e-9));
            assert!(ratio <= e.stable_rate(0.05));
        }
    }

    #[test]
    fn limits_are_seed_independent_and_invariant() {
        let ctx = ChartContext::new(ChartParams::default()).unwrap();
        let m = MapModel::slowed_default();
        let o = extend_backward(&m, TorusPoint::new(0.04, 0.07), &BranchRule::Nearest, 170).unwrap();
        let charts = orbit_chain(&ctx, &o, 10).unwrap();
        let edges: Vec<EdgeTransform> =
            charts.windows(2).map(|w| EdgeTransform::new(&w[0], &w[1], &ctx.lattice).unwrap()).collect();
        let fwd = &edges[10..];
        let tol = 1e-8;
        let a = limit_manifold_s(fwd, &LimitOptions { tol, ..LimitOptions::default() }).unwrap();
        let b = limit_manifold_s(fwd, &LimitOptions { tol, seed: Seed::Random(9), ..LimitOptions::default() }).unwrap();
        assert!(a.manifold.distance_c0(&b.manifold).unwrap() <= 2.0 * tol * a.manifold.radius);
        assert!(a.manifold.check().admissible());
        // f maps V^s at chart 10 into V^s at chart 11.
        let next = limit_manifold_s(&edges[11..], &LimitOptions { tol, ..LimitOptions::default() }).unwrap();
        let lm = &edges[10].local;
        for i in (0..65).step_by(8) {
            let z = a.manifold.point(a.manifold.node(i) * 0.1).unwrap();
            let fz = lm.forward_block(z);
            let gap = (next.manifold.eval(fz[0]).unwrap() - fz[1]).abs();
            assert!(gap <= tol * next.manifold.radius);
        }
        let u = limit_manifold_u(&edges[..10], &LimitOptions { tol, ..LimitOptions::default() }).unwrap();
        let p = intersect(&a.manifold, &u.manifold).unwrap();
        let eta = a.manifold.eta.min(u.manifold.eta);
        assert!(p.norm() <= 1e-2 * eta * eta);
    }

    #[test]
    fn intersection_is_lipschitz() {
        let eta = 1e-10;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let vs = AdmissibleManifold::random(Kind::Stable, eta, eta, 1.0, 65, &mut rng);
            let vu = AdmissibleManifold::random(Kind::Unstable, eta, eta, 1.0, 65, &mut rng);
            let p = intersect(&vs, &vu).unwrap();
            assert!(p.norm() <= 1e-2 * eta * eta);
            assert!((vs.eval(p[0]).unwrap() - p[1]).abs() <= 1e-15 * eta);
            let delta = 1e-4 * eta * eta;
            let moved = AdmissibleManifold { values: vs.values.iter().map(|g| g + delta).collect(), ..vs.clone() };
            let q = intersect(&moved, &vu).unwrap();
            assert!((q - p).norm() <= 3.0 * delta);
        }
        let flat_s = AdmissibleManifold::flat(Kind::Stable, eta, eta, 1.0, 65);
        let flat_u = AdmissibleManifold::flat(Kind::Unstable, eta, eta, 1.0, 65);
        assert_eq!(intersect(&flat_s, &flat_u).unwrap(), Vec2::zeros());
    }
}
