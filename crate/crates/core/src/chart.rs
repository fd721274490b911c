//! Pesin charts, chart sizes Q_ε, the chart-coordinate maps F_{x,y} and overlaps.
//!
//! On the flat torus the exponential map is translation, so a chart is
//! ψ(v) = x₀ + C₀v mod 1. Chart radii live far below f64 resolution of the
//! ambient coordinates; chart-coordinate maps are therefore assembled from the
//! linear part and the map's nonlinear remainder, never by differencing
//! ambient points.

use crate::ladder::{LadderParams, Lattice, LADDER_STEP};
use crate::lyapunov::{build_frame, reduced_derivative_from, LyapFrame, ReducedDerivative};
use crate::orbit::{invert, OrbitWindow};
use crate::torus::{op_norm, MapModel, TorusPoint};
use crate::{Error, Mat2, Result, Vec2};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Chart radius r on the torus (below the injectivity radius 1/2).
pub const CHART_RADIUS: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartParams {
    pub eps: f64,
    pub ladder: LadderParams,
    /// Singularity exponent a.
    pub a: f64,
    /// Truncation N of the scaling series.
    pub trunc_n: usize,
}

impl Default for ChartParams {
    fn default() -> Self {
        Self { eps: 0.05, ladder: LadderParams::default(), a: 2.0, trunc_n: 64 }
    }
}

impl ChartParams {
    pub fn validate(&self) -> Result<()> {
        self.ladder.validate()?;
        if !(self.eps > 0.0 && self.eps <= 0.1) {
            return Err(Error::Config(format!("eps must lie in (0, 0.1], got {}", self.eps)));
        }
        if !(self.a > 1.0) {
            return Err(Error::Config(format!("a must exceed 1, got {}", self.a)));
        }
        if self.trunc_n < 2 {
            return Err(Error::Config("truncation N must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesinChart {
    pub orbit: OrbitWindow,
    pub frame: LyapFrame,
    /// Q as a lattice index.
    pub q_index: usize,
    pub ln_q: f64,
    pub ln_q_tilde: f64,
    /// d({x₋₁, x₀, x₁}, Γ∞).
    pub rho: f64,
}

/// The data of a chart needed by the overlap predicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartView {
    pub base: TorusPoint,
    pub c0: Mat2,
    pub q_index: usize,
}

impl PesinChart {
    pub fn base(&self) -> TorusPoint {
        self.orbit.present
    }

    pub fn c0(&self) -> Mat2 {
        self.frame.c0
    }

    pub fn q(&self) -> f64 {
        self.ln_q.exp()
    }

    pub fn view(&self) -> ChartView {
        ChartView { base: self.base(), c0: self.frame.c0, q_index: self.q_index }
    }

    /// ψ(v) = x₀ + C₀v mod 1.
    pub fn apply(&self, v: Vec2) -> Result<TorusPoint> {
        if !(v.norm() < CHART_RADIUS) {
            return Err(Error::OutOfChart { norm: v.norm() });
        }
        Ok(self.base().translate(self.frame.c0 * v))
    }

    /// ψ⁻¹(p), erroring outside the chart ball.
    pub fn invert(&self, p: TorusPoint) -> Result<Vec2> {
        let v = self.frame.c0_inverse() * self.base().displacement_to(p);
        if !(v.norm() < CHART_RADIUS) {
            return Err(Error::OutOfChart { norm: v.norm() });
        }
        Ok(v)
    }
}

pub fn rho(o: &OrbitWindow) -> Result<f64> {
    let mut r = o.map.dist_to_singularity(o.present);
    for i in [-1, 1] {
        r = r.min(o.map.dist_to_singularity(o.at(i)?));
    }
    Ok(r)
}

/// ln Q̃_ε = (20/β) ln ε + (8a/β) ln ρ − 2γ ln ‖C₀⁻¹‖.
pub fn ln_q_tilde(eps: f64, rho: f64, c0_inv_norm: f64, lp: &LadderParams, a: f64) -> f64 {
    20.0 / lp.beta * eps.ln() + 8.0 * a / lp.beta * rho.ln() - 2.0 * lp.gamma * c0_inv_norm.ln()
}

/// Snaps Q̃_ε to the largest lattice element below it.
pub fn chart_size_q(o: &OrbitWindow, frame: &LyapFrame, params: &ChartParams, lattice: &Lattice) -> Result<PesinChart> {
    let rho = rho(o)?;
    if !(rho > 0.0) {
        return Err(Error::DegenerateAt(o.present.to_array()));
    }
    let ln_qt = ln_q_tilde(params.eps, rho, frame.c0_inv_norm, &params.ladder, params.a);
    let q_index = lattice.snap_ln(ln_qt)?;
    Ok(PesinChart {
        orbit: o.clone(),
        frame: *frame,
        q_index,
        ln_q: lattice.ln_value(q_index)?,
        ln_q_tilde: ln_qt,
        rho,
    })
}

/// Chart parameters together with a shared lattice.
#[derive(Debug, Clone)]
pub struct ChartContext {
    pub params: ChartParams,
    pub lattice: Arc<Lattice>,
}

impl ChartContext {
    pub fn new(params: ChartParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, lattice: Arc::new(Lattice::new(params.ladder)) })
    }

    pub fn chart(&self, o: &OrbitWindow) -> Result<PesinChart> {
        let frame = build_frame(o, self.params.trunc_n)?;
        chart_size_q(o, &frame, &self.params, &self.lattice)
    }

    pub fn ln_value(&self, index: usize) -> Result<f64> {
        self.lattice.ln_value(index)
    }
}

/// The chart-coordinate map F_{x,y} = ψ_y⁻¹ ∘ f ∘ ψ_x and its inverse.
///
/// F(z) = D₀z + h(z) with h(z) = C₀(y)⁻¹[d + R(C₀(x)z)], where d runs from y₀
/// to the stored successor x₁ and R is the nonlinear remainder of f at x₀.
#[derive(Debug, Clone)]
pub struct LocalMap {
    map: MapModel,
    x0: TorusPoint,
    c0x: Mat2,
    c0x_inv: Mat2,
    c0y: Mat2,
    c0y_inv: Mat2,
    jac: Mat2,
    jac_inv: Mat2,
    /// y₀ → x₁ in ambient coordinates.
    pub offset: Vec2,
    /// C₀(y)⁻¹ d_{x₀}f C₀(x).
    pub d0: Mat2,
    pub d0_inv: Mat2,
    pub reduced: ReducedDerivative,
}

impl LocalMap {
    pub fn new(x: &PesinChart, y: &PesinChart) -> Result<Self> {
        let x1 = x.orbit.at(1)?;
        Self::from_parts(&x.orbit.map, x.base(), x1, &x.frame, y.base(), &y.frame)
    }

    pub fn from_parts(
        map: &MapModel,
        x0: TorusPoint,
        x1: TorusPoint,
        frame_x: &LyapFrame,
        y0: TorusPoint,
        frame_y: &LyapFrame,
    ) -> Result<Self> {
        let jac = map.differential(x0);
        let jac_inv = invert(&jac).ok_or(Error::DegenerateAt(x0.to_array()))?;
        let offset = y0.displacement_to(x1);
        let c0y_inv = frame_y.c0_inverse();
        let shift = c0y_inv * offset;
        if !(shift.norm() < CHART_RADIUS) {
            return Err(Error::OutOfChart { norm: shift.norm() });
        }
        let reduced = reduced_derivative_from(&jac, frame_x, frame_y);
        let c0x_inv = frame_x.c0_inverse();
        let d0_inv = c0x_inv * jac_inv * frame_y.c0;
        Ok(Self {
            map: map.clone(),
            x0,
            c0x: frame_x.c0,
            c0x_inv,
            c0y: frame_y.c0,
            c0y_inv,
            jac,
            jac_inv,
            offset,
            d0: reduced.d0,
            d0_inv,
            reduced,
        })
    }

    /// h(z) = F(z) − D₀z.
    pub fn h(&self, z: Vec2) -> Vec2 {
        self.c0y_inv * (self.offset + self.map.increment_remainder(self.x0, self.c0x * z))
    }

    /// d_z h.
    pub fn dh(&self, z: Vec2) -> Mat2 {
        self.c0y_inv * self.map.differential_offset(self.x0, self.c0x * z) * self.c0x
    }

    pub fn forward(&self, z: Vec2) -> Vec2 {
        self.d0 * z + self.h(z)
    }

    /// Solves for the ambient displacement w at x₀ whose image lands at chart point z′.
    fn solve_preimage(&self, zp: Vec2) -> Result<Vec2> {
        let delta = self.c0y * zp - self.offset;
        let mut w = self.jac_inv * delta;
        if self.map.is_linear() {
            return Ok(w);
        }
        for _ in 0..100 {
            let next = self.jac_inv * (delta - self.map.increment_remainder(self.x0, w));
            let step = (next - w).norm();
            w = next;
            if step <= 1e-16 * w.norm() {
                return Ok(w);
            }
        }
        Err(Error::NoConvergence("chart-map inverse".into()))
    }

    /// h⁻(z′) = F⁻¹(z′) − D₀⁻¹z′.
    pub fn h_inv(&self, zp: Vec2) -> Result<Vec2> {
        let w = self.solve_preimage(zp)?;
        Ok(-(self.c0x_inv * self.jac_inv * (self.offset + self.map.increment_remainder(self.x0, w))))
    }

    /// d_{z′} h⁻.
    pub fn dh_inv(&self, zp: Vec2) -> Result<Mat2> {
        let w = self.solve_preimage(zp)?;
        let dj = self.map.differential_offset(self.x0, w);
        let full_inv = invert(&(self.jac + dj)).ok_or(Error::DegenerateAt(self.x0.to_array()))?;
        Ok(-(self.c0x_inv * self.jac_inv * dj * full_inv * self.c0y))
    }

    pub fn inverse(&self, zp: Vec2) -> Result<Vec2> {
        Ok(self.d0_inv * zp + self.h_inv(zp)?)
    }

    pub fn d_s(&self) -> f64 {
        self.reduced.d_s
    }

    pub fn d_u(&self) -> f64 {
        self.reduced.d_u
    }

    /// Forward map with the linear part reduced to its diagonal blocks.
    ///
    /// The off-diagonal entries of the computed D₀ are rounding residue of the
    /// frames; at chart scale they would dominate the quadratic budgets of
    /// admissible manifolds, so the block model drops them.
    pub fn forward_block(&self, z: Vec2) -> Vec2 {
        Vec2::new(self.d_s() * z[0], self.d_u() * z[1]) + self.h(z)
    }

    pub fn inverse_block(&self, zp: Vec2) -> Result<Vec2> {
        Ok(Vec2::new(zp[0] / self.d_s(), zp[1] / self.d_u()) + self.h_inv(zp)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartMapDecomposition {
    pub d0: ReducedDerivative,
    /// Half-width of the sampled square, equal to Q(x̃).
    pub radius: f64,
    pub grid_n: usize,
    pub f0_norm: f64,
    /// ‖(finite-difference d₀F) − D₀‖ / ‖D₀‖.
    pub d0f_residual: f64,
    /// Sup over the grid of |H^{±1}|.
    pub h_c0: f64,
    /// Sup over the grid of ‖dH^{±1}‖.
    pub h_lip: f64,
    /// Empirical β/2-Hölder quotient of dH^{±1}.
    pub h_holder_half_beta: f64,
    /// Sup over the grid of ‖dF^{±1}‖.
    pub df_c0: f64,
}

impl ChartMapDecomposition {
    /// ‖H‖_{C^{1+β/2}} = ‖H‖_{C⁰} + ‖dH‖_{C⁰} + Höl_{β/2}(dH).
    pub fn budget(&self) -> f64 {
        self.h_c0 + self.h_lip + self.h_holder_half_beta
    }
}

/// Samples F^{±1} on a grid_n × grid_n grid over B_Q(0) and reports H = F − D₀.
pub fn chart_map_decompose(x: &PesinChart, y: &PesinChart, grid_n: usize, beta: f64) -> Result<ChartMapDecomposition> {
    if grid_n < 8 {
        return Err(Error::DomainError("grid_n must be at least 8".into()));
    }
    let lm = LocalMap::new(x, y)?;
    let radius = x.q();
    let step = 2.0 * radius / (grid_n - 1) as f64;
    let mut nodes = Vec::new();
    for i in 0..grid_n {
        for j in 0..grid_n {
            let v = Vec2::new(-radius + step * i as f64, -radius + step * j as f64);
            if v.norm() <= radius {
                nodes.push((i as i64, j as i64, v));
            }
        }
    }
    let mut h_c0: f64 = 0.0;
    let mut h_lip: f64 = 0.0;
    let mut df_c0: f64 = 0.0;
    let mut d_fwd = Vec::with_capacity(nodes.len());
    let mut d_inv = Vec::with_capacity(nodes.len());
    for &(_, _, v) in &nodes {
        let fv = lm.forward(v);
        if !(fv.norm() < CHART_RADIUS) {
            return Err(Error::OutOfChart { norm: fv.norm() });
        }
        let dh = lm.dh(v);
        let dhi = lm.dh_inv(v)?;
        h_c0 = h_c0.max(lm.h(v).norm()).max(lm.h_inv(v)?.norm());
        h_lip = h_lip.max(op_norm(&dh)).max(op_norm(&dhi));
        df_c0 = df_c0.max(op_norm(&(lm.d0 + dh))).max(op_norm(&(lm.d0_inv + dhi)));
        d_fwd.push(dh);
        d_inv.push(dhi);
    }
    let mut holder: f64 = 0.0;
    let half = beta / 2.0;
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            let (ia, ja, va) = nodes[a];
            let (ib, jb, vb) = nodes[b];
            if (ia - ib).abs() < 2 && (ja - jb).abs() < 2 {
                continue;
            }
            let sep = (va - vb).norm().powf(half);
            let q = op_norm(&(d_fwd[a] - d_fwd[b])).max(op_norm(&(d_inv[a] - d_inv[b])));
            holder = holder.max(q / sep);
        }
    }
    let hstep = step;
    let mut fd = Mat2::zeros();
    for k in 0..2 {
        let mut e = Vec2::zeros();
        e[k] = hstep;
        fd.set_column(k, &((lm.forward(e) - lm.forward(-e)) / (2.0 * hstep)));
    }
    Ok(ChartMapDecomposition {
        d0: lm.reduced,
        radius,
        grid_n,
        f0_norm: lm.forward(Vec2::zeros()).norm(),
        d0f_residual: op_norm(&(fd - lm.d0)) / op_norm(&lm.d0),
        h_c0,
        h_lip,
        h_holder_half_beta: holder,
        df_c0,
    })
}

/// I-overlap of ψ₁^{η₁} and ψ₂^{η₂}, radii given as lattice indices.
///
/// The ratio condition η₁ = I^{±1}(η₂) is read as lattice-index distance at
/// most one ladder step. The closeness condition d(p₁,p₂) + ‖C₁ − C₂‖ < η₁⁴η₂⁴
/// is compared in logarithms since η⁸ underflows.
pub fn overlaps(c1: &ChartView, eta1: usize, c2: &ChartView, eta2: usize, lattice: &Lattice) -> Result<bool> {
    if eta1 < c1.q_index || eta2 < c2.q_index || eta1.abs_diff(eta2) > LADDER_STEP {
        return Ok(false);
    }
    let gap = c1.base.dist(c2.base) + op_norm(&(c1.c0 - c2.c0));
    if gap == 0.0 {
        return Ok(true);
    }
    Ok(gap.ln() < 4.0 * (lattice.ln_value(eta1)? + lattice.ln_value(eta2)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tempered {
    Feasible(Vec<usize>),
    Infeasible,
}

/// Largest radii q_n ≤ Q_n (as lattice indices) with consecutive differences
/// in {−4, 0, 4}.
///
/// A forward-backward sweep yields the 4-Lipschitz envelope m_n = max_k(Q_k − 4|n−k|);
/// lifting it to a residue class mod 4 gives the pointwise smallest admissible
/// index sequence in that class, and the class with the smallest total wins.
pub fn temper_sequence(q_seq: &[usize], cap: usize) -> Tempered {
    if q_seq.is_empty() {
        return Tempered::Infeasible;
    }
    let step = LADDER_STEP as i64;
    let mut m: Vec<i64> = q_seq.iter().map(|&q| q as i64).collect();
    for n in 1..m.len() {
        m[n] = m[n].max(m[n - 1] - step);
    }
    for n in (0..m.len() - 1).rev() {
        m[n] = m[n].max(m[n + 1] - step);
    }
    let mut best: Option<(i64, Vec<usize>)> = None;
    for r in 0..step {
        let lifted: Vec<usize> = m.iter().map(|&v| (v + (r - v).rem_euclid(step)) as usize).collect();
        if lifted.iter().any(|&v| v >= cap) {
            continue;
        }
        let total: i64 = lifted.iter().map(|&v| v as i64).sum();
        if best.as_ref().is_none_or(|(t, _)| total < *t) {
            best = Some((total, lifted));
        }
    }
    match best {
        Some((_, q)) => Tempered::Feasible(q),
        None => Tempered::Infeasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::{extend_backward, BranchRule};

    fn cat_chart(eps: f64) -> (ChartContext, PesinChart) {
        let ctx = ChartContext::new(ChartParams { eps, ..ChartParams::default() }).unwrap();
        let o = extend_backward(&MapModel::cat(), TorusPoint::new(0.0, 0.0), &BranchRule::Nearest, 140).unwrap();
        let c = ctx.chart(&o).unwrap();
        (ctx, c)
    }

    #[test]
    fn linear_chart_size_matches_formula() {
        // Oracle: Q̃ = 0.01^20 · s^{−42} with s² = 2/(1 − λ_s²) evaluated in logs.
        let (ctx, c) = cat_chart(0.01);
        let ls: f64 = 2.0 - 2f64.sqrt();
        let s = (2.0 / (1.0 - ls * ls)).sqrt();
        let expected = 20.0 * 0.01f64.ln() - 42.0 * s.ln();
        assert!((c.ln_q_tilde - expected).abs() < 1e-9);
        assert!(c.ln_q <= c.ln_q_tilde);
        assert!(ctx.ln_value(c.q_index - 1).unwrap() > c.ln_q_tilde);
        assert_eq!(c.rho, 1.0);
    }

    #[test]
    fn q_tilde_monotone_in_eps() {
        let lp = LadderParams::default();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=10 {
            let v = ln_q_tilde(0.01 * k as f64, 0.5, 1.7, &lp, 2.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn apply_invert_roundtrip() {
        let (_, c) = cat_chart(0.05);
        assert_eq!(c.apply(Vec2::zeros()).unwrap(), c.base());
        for v in [Vec2::new(0.1, -0.05), Vec2::new(-0.2, 0.1), Vec2::new(1e-3, 2e-3)] {
            let p = c.apply(v).unwrap();
            assert!((c.invert(p).unwrap() - v).norm() < 1e-12);
            assert!(c.base().dist(p) <= v.norm() + 1e-15);
        }
        assert!(matches!(c.apply(Vec2::new(0.3, 0.0)), Err(Error::OutOfChart { .. })));
    }

    #[test]
    fn linear_decomposition_is_exact() {
        let (_, c) = cat_chart(0.05);
        let next = PesinChart { orbit: c.orbit.shift(1).unwrap(), ..c.clone() };
        let d = chart_map_decompose(&c, &next, 12, 1.0).unwrap();
        assert_eq!(d.f0_norm, 0.0);
        assert!(d.budget() < 1e-12);
        assert!(d.d0f_residual < 1e-10);
        assert!((d.d0.d_s - (2.0 - 2f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn slowed_remainder_is_second_order() {
        let ctx = ChartContext::new(ChartParams::default()).unwrap();
        let m = MapModel::slowed_default();
        let o = extend_backward(&m, TorusPoint::new(0.05, 0.03), &BranchRule::Nearest, 140).unwrap();
        let c = ctx.chart(&o).unwrap();
        let n = ctx.chart(&o.shift(1).unwrap()).unwrap();
        let lm = LocalMap::new(&c, &n).unwrap();
        let v = Vec2::new(0.3, 0.4) * c.q();
        let ratio = lm.h(v * 2.0).norm() / lm.h(v).norm();
        assert!((ratio - 4.0).abs() < 1e-6, "{ratio}");
        // F⁻¹ ∘ F = id at chart scale.
        let back = lm.inverse(lm.forward(v)).unwrap();
        assert!((back - v).norm() < 1e-12 * v.norm());
    }

    #[test]
    fn overlap_predicate() {
        let (ctx, c) = cat_chart(0.05);
        let v = c.view();
        let q = c.q_index;
        assert!(overlaps(&v, q, &v, q, &ctx.lattice).unwrap());
        assert!(overlaps(&v, q, &v, q + 4, &ctx.lattice).unwrap());
        assert!(!overlaps(&v, q, &v, q + 5, &ctx.lattice).unwrap());
        assert!(!overlaps(&v, q - 1, &v, q, &ctx.lattice).unwrap());
        let mut far = v;
        far.base = TorusPoint::new(1e-30, 0.0);
        assert!(!overlaps(&v, q, &far, q, &ctx.lattice).unwrap());
        assert_eq!(
            overlaps(&far, q, &v, q + 2, &ctx.lattice).unwrap(),
            overlaps(&v, q + 2, &far, q, &ctx.lattice).unwrap()
        );
    }

    /// Brute-force oracle: the admissible sequence with the smallest index sum.
    fn brute_temper(q: &[usize]) -> Option<i64> {
        let hi = *q.iter().max().unwrap() + 4 * q.len() + 4;
        let mut best: Option<i64> = None;
        fn rec(q: &[usize], k: usize, prev: usize, sum: i64, hi: usize, best: &mut Option<i64>) {
            if k == q.len() {
                if best.is_none_or(|b| sum < b) {
                    *best = Some(sum);
                }
                return;
            }
            for d in [-4i64, 0, 4] {
                let v = prev as i64 + d;
                if v >= q[k] as i64 && v as usize <= hi {
                    rec(q, k + 1, v as usize, sum + v, hi, best);
                }
            }
        }
        for start in q[0]..=hi {
            rec(q, 1, start, start as i64, hi, &mut best);
        }
        best
    }

    #[test]
    fn temper_matches_brute_force() {
        let cases: Vec<Vec<usize>> = vec![
            vec![10, 10, 10, 10],
            vec![10, 10, 30, 10, 10, 10],
            vec![3, 9, 4, 17, 2, 8, 5, 6],
            vec![0, 1, 2, 3, 4, 5, 6],
            vec![7],
        ];
        for q in cases {
            let Tempered::Feasible(t) = temper_sequence(&q, usize::MAX) else { panic!("infeasible") };
            assert!(t.iter().zip(&q).all(|(a, b)| a >= b));
            assert!(t.windows(2).all(|w| [-4i64, 0, 4].contains(&(w[1] as i64 - w[0] as i64))));
            let sum: i64 = t.iter().map(|&v| v as i64).sum();
            assert_eq!(Some(sum), brute_temper(&q), "{q:?} -> {t:?}");
        }
        assert_eq!(temper_sequence(&[12, 12, 12], usize::MAX), Tempered::Feasible(vec![12, 12, 12]));
        assert_eq!(temper_sequence(&[], 10), Tempered::Infeasible);
        assert_eq!(temper_sequence(&[30], 10), Tempered::Infeasible);
    }

    #[test]
    fn dip_ramps_at_ladder_rate() {
        let Tempered::Feasible(t) = temper_sequence(&[10, 10, 10, 30, 10, 10, 10], usize::MAX) else { panic!() };
        assert_eq!(t, vec![18, 22, 26, 30, 26, 22, 18]);
    }
}
