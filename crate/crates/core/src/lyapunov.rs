//! Hyperbolic splittings, scaling sums and the Lyapunov change of coordinates.
//!
//! Every quantity at x̃ is computed from the points x_{−2N}, …, x_{2N} only,
//! so two windows that agree on that range produce bit-identical frames. The
//! outer N points serve to converge the directions used by the series.

use crate::orbit::{invert, OrbitWindow};
use crate::torus::op_norm;
use crate::{Error, Mat2, Result, Vec2};
use serde::{Deserialize, Serialize};

/// Series are rejected when the last-term ratio reaches this value.
pub const TAIL_RATIO_LIMIT: f64 = 0.999;
/// Minimum log singular-value gap of the N-step product.
pub const DOMINANCE_GAP: f64 = 1e-6;
/// Minimum angle between e_s and e_u, in radians.
pub const MIN_ANGLE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Splitting {
    pub e_s: Vec2,
    pub e_u: Vec2,
    pub d_s: usize,
    pub d_u: usize,
    /// log(σ₁/σ₂) of the forward N-step product.
    pub log_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSum {
    /// Truncated S² (or U²) through the N-th term.
    pub value_sq: f64,
    /// Geometric bound on the omitted terms.
    pub tail: f64,
    /// Ratio of the last two terms.
    pub ratio: f64,
    pub terms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapFrame {
    pub splitting: Splitting,
    pub s: f64,
    pub u: f64,
    /// Columns e_s/s and e_u/u.
    pub c0: Mat2,
    /// ‖C₀⁻¹‖ as an operator norm.
    pub c0_inv_norm: f64,
    /// ‖C₀⁻¹‖ from the supremum of (S²+U²)/|ξ^s+ξ^u|² over the splitting.
    pub c0_inv_norm_sup: f64,
    pub trunc_n: usize,
    pub tail_s: f64,
    pub tail_u: f64,
    /// Largest relative tail of the two series.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedDerivative {
    pub d_s: f64,
    pub d_u: f64,
    pub offdiag_residual: f64,
    pub d0: Mat2,
}

fn sign_normalize(v: Vec2) -> Vec2 {
    let first = if v[0] != 0.0 { v[0] } else { v[1] };
    if first < 0.0 {
        -v
    } else {
        v
    }
}

fn jacobian_inverse(o: &OrbitWindow, i: i64) -> Result<Mat2> {
    invert(&o.jacobian(i)?).ok_or(Error::DegenerateJacobian { index: i })
}

/// Log growth of v under the forward product from x₀, renormalizing each step.
fn forward_log_growth(o: &OrbitWindow, v: Vec2, n: usize) -> Result<f64> {
    let mut v = v.normalize();
    let mut acc = 0.0;
    for i in 0..n as i64 {
        v = o.jacobian(i)? * v;
        let nv = v.norm();
        if nv == 0.0 {
            return Err(Error::DegenerateJacobian { index: i });
        }
        acc += nv.ln();
        v /= nv;
    }
    Ok(acc)
}

/// Directions along the orbit with the one-step factors of the cocycle on them.
///
/// Pushing a stable vector forward (or an unstable one backward) amplifies
/// rounding along the other direction, so both series are evaluated on
/// directions obtained by the stable sweep: a generic vector is pulled back
/// from x_{2N} (pushed forward from x_{−2N}) and the norms of the one-step
/// maps between consecutive directions are recorded.
struct Sweep {
    /// Direction at x_k (stable) or x_{−k} (unstable), k = 0..=N.
    dirs: Vec<Vec2>,
    /// |d_{x_k} f e_s(x_k)| (stable) or |d f̂^{−1} e_u(x_{−k+1})| (unstable), k = 0..N.
    factors: Vec<f64>,
}

const SWEEP_START: [f64; 2] = [0.6, 0.8];

fn stable_sweep(o: &OrbitWindow, n: usize) -> Result<Sweep> {
    let mut v = Vec2::new(SWEEP_START[0], SWEEP_START[1]);
    let mut dirs = vec![Vec2::zeros(); n + 1];
    let mut factors = vec![0.0; n];
    for i in (0..2 * n as i64).rev() {
        let w = jacobian_inverse(o, i)? * v;
        let nw = w.norm();
        v = w / nw;
        let k = i as usize;
        if k <= n {
            dirs[k] = v;
        }
        if k < n {
            factors[k] = 1.0 / nw;
        }
    }
    if n == 0 {
        dirs[0] = v;
    }
    Ok(Sweep { dirs, factors })
}

fn unstable_sweep(o: &OrbitWindow, n: usize) -> Result<Sweep> {
    if o.backward_len() < 2 * n {
        return Err(Error::WindowExhausted { index: -2 * n as i64 });
    }
    let mut v = Vec2::new(SWEEP_START[0], SWEEP_START[1]);
    let mut dirs = vec![Vec2::zeros(); n + 1];
    let mut factors = vec![0.0; n];
    if n == 0 {
        dirs[0] = v;
    }
    for i in (1..=2 * n as i64).rev() {
        let w = o.jacobian(-i)? * v;
        let nw = w.norm();
        if nw == 0.0 {
            return Err(Error::DegenerateJacobian { index: -i });
        }
        v = w / nw;
        // v now sits at x_{−i+1}.
        let k = (i - 1) as usize;
        if k <= n {
            dirs[k] = v;
        }
        if (1..=n).contains(&(i as usize)) {
            factors[i as usize - 1] = 1.0 / nw;
        }
    }
    Ok(Sweep { dirs, factors })
}

/// Window requirements for truncation N: 2N backward and 2N + 1 forward points.
pub fn required_window(n: usize) -> (usize, usize) {
    (2 * n, 2 * n + 1)
}

pub fn compute_splitting(o: &OrbitWindow, n: usize) -> Result<Splitting> {
    let (past, fwd) = required_window(n);
    if o.backward_len() < past {
        return Err(Error::WindowExhausted { index: -(past as i64) });
    }
    let o = if o.forward_len() < fwd { o.extended(fwd) } else { o.clone() };
    let e_s = sign_normalize(stable_sweep(&o, n)?.dirs[0]);
    let e_u = sign_normalize(unstable_sweep(&o, n)?.dirs[0]);
    let mut log_det = 0.0;
    for i in 0..n as i64 {
        let d = o.jacobian(i)?.determinant().abs();
        if d == 0.0 {
            return Err(Error::DegenerateJacobian { index: i });
        }
        log_det += d.ln();
    }
    let g1 = forward_log_growth(&o, Vec2::new(1.0, 0.0), n)?;
    let g2 = forward_log_growth(&o, Vec2::new(0.0, 1.0), n)?;
    let log_sigma1 = g1.max(g2);
    let log_gap = 2.0 * log_sigma1 - log_det;
    if !(log_gap >= DOMINANCE_GAP) {
        return Err(Error::NoDominance { gap: log_gap });
    }
    let sin = (e_s[0] * e_u[1] - e_s[1] * e_u[0]).abs();
    if sin < MIN_ANGLE.sin() {
        return Err(Error::NoDominance { gap: sin });
    }
    Ok(Splitting { e_s, e_u, d_s: 1, d_u: 1, log_gap })
}

fn certify(terms: &[f64]) -> Result<ScalingSum> {
    let value_sq: f64 = 2.0 * terms.iter().sum::<f64>();
    let k = terms.len();
    let ratio = if k >= 2 && terms[k - 2] > 0.0 { terms[k - 1] / terms[k - 2] } else { 0.0 };
    if !(ratio < TAIL_RATIO_LIMIT) {
        return Err(Error::TailNotCertified { ratio });
    }
    let tail = 2.0 * terms[k - 1] * ratio / (1.0 - ratio);
    Ok(ScalingSum { value_sq, tail, ratio, terms: k })
}

fn parallel(a: Vec2, b: Vec2) -> bool {
    (a[0] * b[1] - a[1] * b[0]).abs() <= 1e-9 * a.norm() * b.norm()
}

/// S²(x̃, ξ) = 2 Σ_{m=0}^{N} |d f̂^m ξ|², truncated and tail-certified.
/// Vectors in E^s are propagated along the stable sweep.
pub fn scaling_s(o: &OrbitWindow, xi: Vec2, n: usize) -> Result<ScalingSum> {
    if xi.norm() == 0.0 {
        return Err(Error::DomainError("ξ must be non-zero".into()));
    }
    let (_, fwd) = required_window(n);
    let o = if o.forward_len() < fwd { o.extended(fwd) } else { o.clone() };
    let mut terms = Vec::with_capacity(n + 1);
    terms.push(xi.norm_squared());
    let sweep = stable_sweep(&o, n)?;
    if parallel(sweep.dirs[0], xi) {
        for f in &sweep.factors {
            let last = *terms.last().expect("non-empty");
            terms.push(last * f * f);
        }
    } else {
        let mut v = xi;
        for i in 0..n as i64 {
            v = o.jacobian(i)? * v;
            terms.push(v.norm_squared());
        }
    }
    certify(&terms)
}

/// U²(x̃, ξ) = 2 Σ_{m=0}^{N} |d f̂^{−m} ξ|², truncated and tail-certified.
/// Vectors in E^u are propagated along the unstable sweep.
pub fn scaling_u(o: &OrbitWindow, xi: Vec2, n: usize) -> Result<ScalingSum> {
    if xi.norm() == 0.0 {
        return Err(Error::DomainError("ξ must be non-zero".into()));
    }
    let mut terms = Vec::with_capacity(n + 1);
    terms.push(xi.norm_squared());
    let sweep = unstable_sweep(o, n)?;
    if parallel(sweep.dirs[0], xi) {
        for f in &sweep.factors {
            let last = *terms.last().expect("non-empty");
            terms.push(last * f * f);
        }
    } else {
        let mut v = xi;
        for i in 1..=n as i64 {
            v = jacobian_inverse(o, -i)? * v;
            terms.push(v.norm_squared());
        }
    }
    certify(&terms)
}

/// sup over ξ = a e_s + b e_u of (s²a² + u²b²)/|ξ|², square-rooted.
pub fn sup_ratio_norm(split: &Splitting, s: f64, u: f64) -> f64 {
    let c = split.e_s.dot(&split.e_u);
    let (s2, u2) = (s * s, u * u);
    let one_c2 = 1.0 - c * c;
    let b = s2 + u2;
    let disc = (b * b - 4.0 * one_c2 * s2 * u2).max(0.0).sqrt();
    // Larger root of (1−c²)λ² − (s²+u²)λ + s²u² = 0, in the stable form.
    let lambda = if one_c2 > 0.0 { (b + disc) / (2.0 * one_c2) } else { f64::INFINITY };
    lambda.sqrt()
}

pub fn build_frame(o: &OrbitWindow, n: usize) -> Result<LyapFrame> {
    let (_, fwd) = required_window(n);
    let o = if o.forward_len() < fwd + 1 { o.extended(fwd + 1) } else { o.clone() };
    let splitting = compute_splitting(&o, n)?;
    let ss = scaling_s(&o, splitting.e_s, n)?;
    let su = scaling_u(&o, splitting.e_u, n)?;
    let s = ss.value_sq.sqrt();
    let u = su.value_sq.sqrt();
    let c0 = Mat2::from_columns(&[splitting.e_s / s, splitting.e_u / u]);
    let inv = invert(&c0).ok_or(Error::NoDominance { gap: 0.0 })?;
    Ok(LyapFrame {
        splitting,
        s,
        u,
        c0,
        c0_inv_norm: op_norm(&inv),
        c0_inv_norm_sup: sup_ratio_norm(&splitting, s, u),
        trunc_n: n,
        tail_s: ss.tail,
        tail_u: su.tail,
        tail_bound: (ss.tail / ss.value_sq).max(su.tail / su.value_sq),
    })
}

impl LyapFrame {
    pub fn c0_inverse(&self) -> Mat2 {
        invert(&self.c0).expect("frame columns are independent")
    }
}

/// D₀ = C₀(f̂x̃)⁻¹ · d_{x₀}f · C₀(x̃) from precomputed frames.
pub fn reduced_derivative_from(df: &Mat2, frame_x: &LyapFrame, frame_fx: &LyapFrame) -> ReducedDerivative {
    let d0 = frame_fx.c0_inverse() * df * frame_x.c0;
    let d_s = d0[(0, 0)];
    let d_u = d0[(1, 1)];
    ReducedDerivative { d_s, d_u, offdiag_residual: d0[(0, 1)].abs().max(d0[(1, 0)].abs()), d0 }
}

pub fn reduced_derivative(o: &OrbitWindow, n: usize) -> Result<ReducedDerivative> {
    let o = o.extended(required_window(n).1 + 2);
    let fx = build_frame(&o, n)?;
    let ffx = build_frame(&o.shift(1)?, n)?;
    Ok(reduced_derivative_from(&o.jacobian(0)?, &fx, &ffx))
}

/// Local multiplicative constant c(x₀) = max(1, ‖d f‖d^a, ‖(d f)⁻¹‖d^a).
pub fn local_constant(df: &Mat2, d: f64, a: f64) -> f64 {
    let da = d.powf(a);
    let inv = invert(df).map(|m| op_norm(&m)).unwrap_or(f64::INFINITY);
    1f64.max(op_norm(df) * da).max(inv * da)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D1Check {
    pub ds_abs: f64,
    pub du_inv_abs: f64,
    pub ds_upper_bound: f64,
    pub du_inv_upper_bound: f64,
    /// √2/2 · d^a / c with the local constant c.
    pub lower_bound: f64,
    pub upper_pass: bool,
    pub lower_pass: bool,
}

/// Checks √2/2·d^a/c ≤ |D_s| ≤ e^{−1/s²(x̃)} and the same for |D_u⁻¹| with u(f̂x̃).
pub fn check_d1(
    rd: &ReducedDerivative,
    frame_x: &LyapFrame,
    frame_fx: &LyapFrame,
    d: f64,
    a: f64,
    constant: f64,
) -> D1Check {
    let slack = 1.0 + 10.0 * (frame_x.tail_bound + frame_fx.tail_bound) + 1e-12;
    let ds_abs = rd.d_s.abs();
    let du_inv_abs = 1.0 / rd.d_u.abs();
    let ds_upper_bound = (-1.0 / (frame_x.s * frame_x.s)).exp();
    let du_inv_upper_bound = (-1.0 / (frame_fx.u * frame_fx.u)).exp();
    let lower_bound = std::f64::consts::FRAC_1_SQRT_2 * d.powf(a) / constant;
    D1Check {
        ds_abs,
        du_inv_abs,
        ds_upper_bound,
        du_inv_upper_bound,
        lower_bound,
        upper_pass: ds_abs <= ds_upper_bound * slack && du_inv_abs <= du_inv_upper_bound * slack,
        lower_pass: ds_abs * slack >= lower_bound && du_inv_abs * slack >= lower_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::{extend_backward, BranchRule};
    use crate::torus::{MapModel, TorusPoint};
    use std::f64::consts::SQRT_2;

    fn cat_orbit() -> OrbitWindow {
        extend_backward(&MapModel::cat(), TorusPoint::new(0.3, 0.6), &BranchRule::Nearest, 128).unwrap()
    }

    #[test]
    fn linear_splitting_is_eigenbasis() {
        let sp = compute_splitting(&cat_orbit(), 64).unwrap();
        let a = Mat2::new(3.0, 1.0, 1.0, 1.0);
        assert!((a * sp.e_s - sp.e_s * (2.0 - SQRT_2)).norm() < 1e-12);
        assert!((a * sp.e_u - sp.e_u * (2.0 + SQRT_2)).norm() < 1e-12);
        assert!(sp.e_s.dot(&sp.e_u).abs() < 1e-10);
    }

    #[test]
    fn linear_scaling_closed_forms() {
        // Oracle: direct summation of the geometric series to 200 terms.
        let ls: f64 = 2.0 - SQRT_2;
        let lu: f64 = 2.0 + SQRT_2;
        let s_direct: f64 = 2.0 * (0..=200).map(|m| ls.powi(2 * m)).sum::<f64>();
        let u_direct: f64 = 2.0 * (0..=200).map(|m| lu.powi(-2 * m)).sum::<f64>();
        let f = build_frame(&cat_orbit(), 64).unwrap();
        assert!((f.s * f.s - s_direct).abs() / s_direct < 1e-12);
        assert!((f.u * f.u - u_direct).abs() / u_direct < 1e-12);
        assert!((s_direct - 3.044_815_5).abs() < 1e-7);
        assert!((u_direct - 2.187_672_6).abs() < 1e-7);
        assert!((f.c0_inv_norm - f.s.max(f.u)).abs() < 1e-12);
        assert!((f.c0_inv_norm_sup - f.c0_inv_norm).abs() < 1e-12);
        assert!((f.c0_inv_norm - 1.744_940).abs() < 1e-6);
        assert!(op_norm(&f.c0) <= 1.0);
    }

    #[test]
    fn sup_formula_matches_dense_sampling() {
        let sp = Splitting { e_s: Vec2::new(1.0, 0.0), e_u: Vec2::new(0.6, 0.8), d_s: 1, d_u: 1, log_gap: 1.0 };
        let (s, u) = (2.3, 1.7);
        let mut best: f64 = 0.0;
        for k in 0..200_000 {
            let th = std::f64::consts::PI * k as f64 / 200_000.0;
            let (a, b) = (th.cos(), th.sin());
            let xi = sp.e_s * a + sp.e_u * b;
            best = best.max((s * s * a * a + u * u * b * b) / xi.norm_squared());
        }
        assert!((sup_ratio_norm(&sp, s, u) - best.sqrt()).abs() < 1e-6);
        let c0 = Mat2::from_columns(&[sp.e_s / s, sp.e_u / u]);
        assert!((op_norm(&c0.try_inverse().unwrap()) - best.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn linear_reduced_derivative() {
        let rd = reduced_derivative(&cat_orbit(), 64).unwrap();
        assert!((rd.d_s - (2.0 - SQRT_2)).abs() < 1e-9);
        assert!((rd.d_u - (2.0 + SQRT_2)).abs() < 1e-9);
        assert!(rd.offdiag_residual < 1e-12);
        let s2 = 2.0 / (1.0 - (2.0 - SQRT_2).powi(2));
        assert!((rd.d_s * rd.d_s - (1.0 - 2.0 / s2)).abs() < 1e-12);
        assert!(rd.d_s <= (-1.0 / s2).exp());
    }

    #[test]
    fn homogeneity_and_truncation() {
        let o = cat_orbit();
        let e = compute_splitting(&o, 64).unwrap().e_s;
        let a = scaling_s(&o, e, 64).unwrap().value_sq;
        let b = scaling_s(&o, e * 3.0, 64).unwrap().value_sq;
        assert!((b - 9.0 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn neutral_point_fails_certification() {
        let m = MapModel::slowed_default();
        let o = extend_backward(&m, TorusPoint::new(0.0, 0.0), &BranchRule::Nearest, 128).unwrap();
        assert!(matches!(build_frame(&o, 64), Err(Error::TailNotCertified { .. })));
    }
}
