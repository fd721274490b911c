//! Map models on the flat 2-torus.
//!
//! Every model is a degree-|det A| endomorphism of T² = ℝ²/ℤ² whose lift
//! agrees with an integer matrix A away from a few small disks:
//!
//! * `LinearEndo`: the linear endomorphism x ↦ Ax.
//! * `SlowedEndo`: A = (3 1; 1 1) with the unstable multiplier at the fixed
//!   point (0,0) slowed down to exactly 1 inside a disk of radius r₀.
//! * `CollapsedEndo`: the slowed map precomposed with a radial blend that
//!   collapses a disk of radius r₁ about a period-2 point onto that point,
//!   so the differential vanishes there.
//!
//! Charts on the torus are translations, so tangent vectors are plain
//! 2-vectors in the standard trivialization.

use crate::{Error, Mat2, Result, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

/// Matrix shared by the slowed and collapsed models.
pub const BASE_MATRIX: [[i64; 2]; 2] = [[3, 1], [1, 1]];

/// Factor K_τ in the branch radius τ(x) = K_τ·min{d(x,Γ∞), d(f(x),Γ∞)}.
pub const TAU_FACTOR: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
}

fn wrap(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

fn centered(v: f64) -> f64 {
    let r = v - v.round();
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x: wrap(x), y: wrap(y) }
    }

    pub fn from_vec(v: Vec2) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn to_vec(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Shortest lifted displacement from `self` to `other`.
    pub fn displacement_to(self, other: TorusPoint) -> Vec2 {
        Vec2::new(centered(other.x - self.x), centered(other.y - self.y))
    }

    /// Flat metric; the diameter is √2/2 < 1.
    pub fn dist(self, other: TorusPoint) -> f64 {
        self.displacement_to(other).norm()
    }

    pub fn translate(self, v: Vec2) -> TorusPoint {
        TorusPoint::new(self.x + v[0], self.y + v[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlendProfile {
    /// s(t) = 6t⁵ − 15t⁴ + 10t³, C² at both ends.
    Quintic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum MapVariant {
    LinearEndo {
        matrix: [[i64; 2]; 2],
    },
    SlowedEndo {
        slowdown_radius: f64,
        profile_exponent: u32,
    },
    CollapsedEndo {
        slowdown_radius: f64,
        profile_exponent: u32,
        center: TorusPoint,
        collapse_radius: f64,
        blend: BlendProfile,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapModel {
    pub variant: MapVariant,
    /// Hölder exponent β of the differential.
    pub beta: f64,
    /// Singularity exponent a > 1.
    pub singularity_exponent: f64,
    /// Hölder constant K > 1.
    pub holder_constant: f64,
    pub singular_set: Vec<TorusPoint>,
}

/// Eigen-data of the base matrix (3 1; 1 1).
struct BaseEigen {
    lambda_u: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    lambda_s: f64,
    e_u: Vec2,
    e_s: Vec2,
}

fn base_eigen() -> BaseEigen {
    let lambda_u = 2.0 + SQRT_2;
    let lambda_s = 2.0 - SQRT_2;
    let e_u = Vec2::new(1.0, SQRT_2 - 1.0).normalize();
    let e_s = Vec2::new(SQRT_2 - 1.0, -1.0).normalize();
    BaseEigen { lambda_u, lambda_s, e_u, e_s }
}

fn imat(m: [[i64; 2]; 2]) -> Mat2 {
    Mat2::new(m[0][0] as f64, m[0][1] as f64, m[1][0] as f64, m[1][1] as f64)
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

fn smoothstep_deriv(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (t - 1.0) * (t - 1.0)
}

const GAUSS_NODES: [f64; 4] =
    [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GAUSS_WEIGHTS: [f64; 4] =
    [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Below this displacement, increments are evaluated by quadrature of the
/// Jacobian instead of differencing the lift.
const QUADRATURE_SCALE: f64 = 1e-3;
/// Below this displacement, Jacobian offsets come from a first-order model.
const TAYLOR_SCALE: f64 = 1e-4;
const TAYLOR_STEP: f64 = 1e-5;

impl MapModel {
    fn with_variant(variant: MapVariant, holder_constant: f64) -> Self {
        let singular_set = match &variant {
            MapVariant::CollapsedEndo { center, .. } => vec![*center],
            _ => Vec::new(),
        };
        Self { variant, beta: 1.0, singularity_exponent: 2.0, holder_constant, singular_set }
    }

    pub fn linear(matrix: [[i64; 2]; 2]) -> Result<Self> {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        if det.abs() < 2 {
            return Err(Error::DomainError(format!("|det A| = {} < 2: not a non-invertible endomorphism", det.abs())));
        }
        Ok(Self::with_variant(MapVariant::LinearEndo { matrix }, 2.0))
    }

    /// The linear model A = (3 1; 1 1).
    pub fn cat() -> Self {
        Self::linear(BASE_MATRIX).expect("base matrix has det 2")
    }

    pub fn slowed(slowdown_radius: f64, profile_exponent: u32) -> Result<Self> {
        check_slowdown(slowdown_radius, profile_exponent)?;
        Ok(Self::with_variant(MapVariant::SlowedEndo { slowdown_radius, profile_exponent }, 2000.0))
    }

    pub fn slowed_default() -> Self {
        Self::slowed(0.1, 3).expect("default slowdown parameters are valid")
    }

    pub fn collapsed(center: TorusPoint, collapse_radius: f64) -> Result<Self> {
        let (r0, k) = (0.1, 3);
        check_slowdown(r0, k)?;
        if !(collapse_radius > 0.0 && collapse_radius < 0.1) {
            return Err(Error::DomainError(format!("collapse radius {collapse_radius} outside (0, 0.1)")));
        }
        if center.dist(TorusPoint::new(0.0, 0.0)) < r0 + 2.0 * collapse_radius {
            return Err(Error::DomainError("collapse disk overlaps the slowdown disk".into()));
        }
        Ok(Self::with_variant(
            MapVariant::CollapsedEndo {
                slowdown_radius: r0,
                profile_exponent: k,
                center,
                collapse_radius,
                blend: BlendProfile::Quintic,
            },
            5000.0,
        ))
    }

    /// Collapsed model about the period-2 point (6/7, 4/7) with r₁ = 0.05.
    pub fn collapsed_default() -> Self {
        Self::collapsed(TorusPoint::new(6.0 / 7.0, 4.0 / 7.0), 0.05).expect("default collapse parameters are valid")
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            MapVariant::LinearEndo { .. } => "LinearEndo",
            MapVariant::SlowedEndo { .. } => "SlowedEndo",
            MapVariant::CollapsedEndo { .. } => "CollapsedEndo",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.variant, MapVariant::LinearEndo { .. })
    }

    pub fn matrix(&self) -> [[i64; 2]; 2] {
        match self.variant {
            MapVariant::LinearEndo { matrix } => matrix,
            _ => BASE_MATRIX,
        }
    }

    pub fn branch_count(&self) -> usize {
        let m = self.matrix();
        (m[0][0] * m[1][1] - m[0][1] * m[1][0]).unsigned_abs() as usize
    }

    fn slowdown(&self) -> Option<(f64, u32)> {
        match self.variant {
            MapVariant::SlowedEndo { slowdown_radius, profile_exponent } => Some((slowdown_radius, profile_exponent)),
            MapVariant::CollapsedEndo { slowdown_radius, profile_exponent, .. } => {
                Some((slowdown_radius, profile_exponent))
            }
            MapVariant::LinearEndo { .. } => None,
        }
    }

    fn collapse(&self) -> Option<(Vec2, f64)> {
        match self.variant {
            MapVariant::CollapsedEndo { center, collapse_radius, .. } => Some((center.to_vec(), collapse_radius)),
            _ => None,
        }
    }

    /// Lift of the map to ℝ², satisfying F(p + j) = F(p) + Aj for integer j.
    pub fn eval_lift(&self, p: Vec2) -> Vec2 {
        let p = match self.collapse() {
            Some((c, r1)) => collapse_lift(p, c, r1),
            None => p,
        };
        let ap = imat(self.matrix()) * p;
        match self.slowdown() {
            Some((r0, k)) => {
                let e = base_eigen();
                let w = Vec2::new(p[0] - p[0].round(), p[1] - p[1].round());
                let r = w.norm();
                if r >= r0 {
                    ap
                } else {
                    let t2 = (r / r0).powi(2);
                    let c = -(e.lambda_u - 1.0) * (1.0 - t2).powi(k as i32);
                    ap + e.e_u * (c * e.e_u.dot(&w))
                }
            }
            None => ap,
        }
    }

    pub fn eval(&self, x: TorusPoint) -> TorusPoint {
        if let MapVariant::LinearEndo { matrix } = self.variant {
            // Integer matrix on reduced coordinates: every product of a
            // dyadic coordinate with a small integer is exact.
            let m = matrix;
            let nx = wrap(m[0][0] as f64 * x.x) + wrap(m[0][1] as f64 * x.y);
            let ny = wrap(m[1][0] as f64 * x.x) + wrap(m[1][1] as f64 * x.y);
            return TorusPoint::new(nx, ny);
        }
        TorusPoint::from_vec(self.eval_lift(x.to_vec()))
    }

    pub fn differential(&self, x: TorusPoint) -> Mat2 {
        self.differential_lift(x.to_vec())
    }

    fn differential_lift(&self, p: Vec2) -> Mat2 {
        let (q, db) = match self.collapse() {
            Some((c, r1)) => (collapse_lift(p, c, r1), collapse_jacobian(p, c, r1)),
            None => (p, Mat2::identity()),
        };
        let a = imat(self.matrix());
        let dt1 = match self.slowdown() {
            Some((r0, k)) => {
                let e = base_eigen();
                let w = Vec2::new(q[0] - q[0].round(), q[1] - q[1].round());
                let r = w.norm();
                if r >= r0 {
                    a
                } else {
                    let t2 = (r / r0).powi(2);
                    let lu1 = e.lambda_u - 1.0;
                    let c = -lu1 * (1.0 - t2).powi(k as i32);
                    let grad = w * (lu1 * 2.0 * k as f64 * (1.0 - t2).powi(k as i32 - 1) / (r0 * r0));
                    let row = e.e_u.transpose() * c + grad.transpose() * e.e_u.dot(&w);
                    a + e.e_u * row
                }
            }
            None => a,
        };
        dt1 * db
    }

    /// J(x₀ + w) − J(x₀) for the lifted Jacobian J.
    ///
    /// Below `TAYLOR_SCALE` the point x₀ + w is not representable apart from x₀,
    /// so the offset is the directional derivative of J (central difference at
    /// step `TAYLOR_STEP`) times |w|.
    pub fn differential_offset(&self, x0: TorusPoint, w: Vec2) -> Mat2 {
        let n = w.norm();
        if self.is_linear() || n == 0.0 {
            return Mat2::zeros();
        }
        let p = x0.to_vec();
        if n > TAYLOR_SCALE {
            return self.differential_lift(p + w) - self.differential_lift(p);
        }
        let u = w / n;
        let d = (self.differential_lift(p + u * TAYLOR_STEP) - self.differential_lift(p - u * TAYLOR_STEP))
            / (2.0 * TAYLOR_STEP);
        d * n
    }

    /// Nonlinear remainder f(x₀ + w) − f(x₀) − J(x₀)w of the lift.
    pub fn increment_remainder(&self, x0: TorusPoint, w: Vec2) -> Vec2 {
        let n = w.norm();
        if self.is_linear() || n == 0.0 {
            return Vec2::zeros();
        }
        let p = x0.to_vec();
        if n > QUADRATURE_SCALE {
            return self.eval_lift(p + w) - self.eval_lift(p) - self.differential_lift(p) * w;
        }
        if n <= TAYLOR_SCALE {
            // The offset model is linear in w, so the integral is exactly half.
            return self.differential_offset(x0, w) * w * 0.5;
        }
        let mut acc = Mat2::zeros();
        let j0 = self.differential_lift(p);
        for (node, weight) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS.iter()) {
            for sign in [-1.0, 1.0] {
                let t = 0.5 * (1.0 + sign * node);
                acc += (self.differential_lift(p + w * t) - j0) * (0.5 * weight);
            }
        }
        acc * w
    }

    /// Lifted increment f(x₀ + w) − f(x₀), accurate at every scale of w.
    pub fn increment(&self, x0: TorusPoint, w: Vec2) -> Vec2 {
        if self.is_linear() {
            return imat(self.matrix()) * w;
        }
        self.differential(x0) * w + self.increment_remainder(x0, w)
    }

    /// Solves f(x₀ + w) − f(x₀) = δ for the branch through x₀.
    pub fn inverse_increment(&self, x0: TorusPoint, delta: Vec2) -> Result<Vec2> {
        let j0 = self.differential(x0);
        let inv0 = crate::orbit::invert(&j0).ok_or(Error::DegenerateAt(x0.to_array()))?;
        let mut w = inv0 * delta;
        if self.is_linear() || delta.norm() == 0.0 {
            return Ok(w);
        }
        // Newton on w ↦ J₀w + R(w) − δ, with the remainder's Jacobian J(x₀+w) − J₀.
        for _ in 0..60 {
            let r = j0 * w + self.increment_remainder(x0, w) - delta;
            if r.norm() <= 1e-16 * delta.norm() {
                return Ok(w);
            }
            let j = j0 + self.differential_offset(x0, w);
            let dw = crate::orbit::invert(&j).map(|ji| ji * r).unwrap_or(inv0 * r);
            w -= dw;
            if dw.norm() <= 1e-16 * w.norm() {
                return Ok(w);
            }
        }
        let r = (self.increment(x0, w) - delta).norm();
        if r <= 1e-12 * delta.norm() {
            Ok(w)
        } else {
            Err(Error::NoConvergence(format!("inverse increment residual {r:e}")))
        }
    }

    pub fn dist_to_singularity(&self, x: TorusPoint) -> f64 {
        self.singular_set.iter().map(|s| x.dist(*s)).fold(1.0, f64::min)
    }

    /// Radius τ(x) of the inverse-branch domain about f(x).
    pub fn tau(&self, x: TorusPoint) -> f64 {
        TAU_FACTOR * self.dist_to_singularity(x).min(self.dist_to_singularity(self.eval(x)))
    }

    /// True where the differential is singular (the closed collapse disk).
    pub fn is_degenerate(&self, x: TorusPoint) -> bool {
        match self.collapse() {
            Some((c, r1)) => x.dist(TorusPoint::from_vec(c)) <= r1,
            None => false,
        }
    }

    /// Integer translates k whose images A⁻¹k represent the cosets ℤ²/Aℤ²,
    /// in a fixed enumeration order.
    fn coset_representatives(&self) -> Vec<Vec2> {
        let m = self.matrix();
        let a = imat(m);
        let ainv = a.try_inverse().expect("non-singular integer matrix");
        let n = self.branch_count() as i64;
        let mut reps: Vec<Vec2> = Vec::new();
        let mut seen: Vec<Vec2> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let k = Vec2::new(i as f64, j as f64);
                let q = ainv * k;
                let q = Vec2::new(wrap(q[0] + 1e-9) - 1e-9, wrap(q[1] + 1e-9) - 1e-9);
                if seen.iter().all(|s| (s - q).norm() > 1e-6) {
                    seen.push(q);
                    reps.push(k);
                }
            }
        }
        reps
    }

    /// All preimages of y, one per coset in enumeration order.
    pub fn preimages(&self, y: TorusPoint) -> Result<Vec<TorusPoint>> {
        let ainv = imat(self.matrix()).try_inverse().expect("non-singular integer matrix");
        let mut out = Vec::with_capacity(self.branch_count());
        for k in self.coset_representatives() {
            let target = y.to_vec() + k;
            let mut p = ainv * target;
            if let Some((r0, kexp)) = self.slowdown() {
                p = slowed_preimage(p, r0, kexp);
            }
            if let Some((c, r1)) = self.collapse() {
                p = collapse_preimage(p, c, r1).ok_or(Error::DegenerateAt(y.to_array()))?;
            }
            out.push(TorusPoint::from_vec(p));
        }
        Ok(out)
    }

    /// The preimage of y under the branch of f⁻¹ that sends f(x) to x.
    pub fn inverse_branch(&self, x: TorusPoint, y: TorusPoint) -> Result<TorusPoint> {
        if self.is_degenerate(x) || self.singular_set.contains(&x) {
            return Err(Error::DegenerateAt(x.to_array()));
        }
        let fx = self.eval(x);
        if fx.dist(y) > 2.0 * self.tau(x) {
            return Err(Error::OutOfBranchDomain { x: x.to_array(), y: y.to_array() });
        }
        let pre = self.preimages(y)?;
        let best = pre.into_iter().min_by(|a, b| a.dist(x).total_cmp(&b.dist(x))).expect("at least one branch");
        if self.is_degenerate(best) {
            return Err(Error::DegenerateAt(best.to_array()));
        }
        Ok(best)
    }

    pub fn verify_assumptions(&self, sample_count: usize, seed: u64) -> Result<AssumptionReport> {
        if sample_count == 0 {
            return Err(Error::DomainError("sample_count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = self.singularity_exponent;
        let mut samples = Vec::with_capacity(sample_count);
        for id in 0..sample_count {
            // Every fourth sample is drawn close to the singular set when
            // there is one, so the lower bounds are exercised.
            let x = match self.singular_set.first() {
                Some(s) if id % 4 == 0 => {
                    let r = 0.2 * rng.gen::<f64>();
                    let th = std::f64::consts::TAU * rng.gen::<f64>();
                    s.translate(Vec2::new(r * th.cos(), r * th.sin()))
                }
                _ => TorusPoint::new(rng.gen(), rng.gen()),
            };
            let d = self.dist_to_singularity(x);
            let tau = self.tau(x);
            let da = d.powf(a);
            let mut s = AssumptionSample {
                id,
                x: x.x,
                y: x.y,
                dist: d,
                lower_quotient: f64::INFINITY,
                upper_quotient: 0.0,
                inv_lower_quotient: f64::INFINITY,
                inv_upper_quotient: 0.0,
                holder_quotient: 0.0,
                a2_pass: true,
                a3_pass: true,
            };
            let fx = self.eval(x);
            for _ in 0..4 {
                let y = x.translate(random_in_disk(&mut rng, tau));
                let z = x.translate(random_in_disk(&mut rng, tau));
                let dy = self.differential(y);
                let dz = self.differential(z);
                let ny = op_norm(&dy);
                s.lower_quotient = s.lower_quotient.min(ny / da);
                s.upper_quotient = s.upper_quotient.max(ny * da);
                let dyz = y.dist(z);
                if dyz > 0.0 {
                    s.holder_quotient = s.holder_quotient.max(op_norm(&(dy - dz)) / dyz.powf(self.beta));
                }
                let target = fx.translate(random_in_disk(&mut rng, tau));
                let inv_norm = match self.inverse_branch(x, target) {
                    Ok(w) => self.differential(w).try_inverse().map(|m| op_norm(&m)).unwrap_or(f64::INFINITY),
                    Err(_) => f64::INFINITY,
                };
                s.inv_lower_quotient = s.inv_lower_quotient.min(inv_norm / da);
                s.inv_upper_quotient = s.inv_upper_quotient.max(inv_norm * da);
            }
            s.a2_pass = s.lower_quotient >= 1.0
                && s.upper_quotient <= 1.0
                && s.inv_lower_quotient >= 1.0
                && s.inv_upper_quotient <= 1.0;
            s.a3_pass = s.holder_quotient <= self.holder_constant;
            samples.push(s);
        }
        let fold_min = |f: fn(&AssumptionSample) -> f64| samples.iter().map(f).fold(f64::INFINITY, f64::min);
        let fold_max = |f: fn(&AssumptionSample) -> f64| samples.iter().map(f).fold(0.0, f64::max);
        let min_lower = fold_min(|s| s.lower_quotient);
        let max_upper = fold_max(|s| s.upper_quotient);
        let min_inv_lower = fold_min(|s| s.inv_lower_quotient);
        let max_inv_upper = fold_max(|s| s.inv_upper_quotient);
        let max_holder = fold_max(|s| s.holder_quotient);
        // Smallest K' ≤ 1 with K'd^a ≤ ‖df‖ ≤ d^{-a}/K' on every sample.
        let constant = [min_lower, 1.0 / max_upper, min_inv_lower, 1.0 / max_inv_upper].into_iter().fold(1.0, f64::min);
        Ok(AssumptionReport {
            model: self.name().to_string(),
            sample_count,
            seed,
            min_lower_quotient: min_lower,
            max_upper_quotient: max_upper,
            min_inverse_lower_quotient: min_inv_lower,
            max_inverse_upper_quotient: max_inv_upper,
            max_holder_quotient: max_holder,
            holder_constant: self.holder_constant,
            a2_constant_free_pass: samples.iter().all(|s| s.a2_pass),
            a2_samples_passing: samples.iter().filter(|s| s.a2_pass).count(),
            a2_empirical_constant: constant,
            a3_pass: samples.iter().all(|s| s.a3_pass),
            samples,
        })
    }
}

fn check_slowdown(r0: f64, k: u32) -> Result<()> {
    if !(r0 > 0.0 && r0 <= 0.2) {
        return Err(Error::DomainError(format!("slowdown radius {r0} outside (0, 0.2]")));
    }
    if k < 3 {
        return Err(Error::DomainError(format!("profile exponent {k} < 3 is not C²")));
    }
    Ok(())
}

fn collapse_factor(r: f64, r1: f64) -> f64 {
    smoothstep((r - r1) / r1)
}

fn collapse_lift(p: Vec2, c: Vec2, r1: f64) -> Vec2 {
    let j = Vec2::new((p[0] - c[0]).round(), (p[1] - c[1]).round());
    let cc = c + j;
    let d = p - cc;
    let r = d.norm();
    if r >= 2.0 * r1 {
        p
    } else {
        cc + d * collapse_factor(r, r1)
    }
}

fn collapse_jacobian(p: Vec2, c: Vec2, r1: f64) -> Mat2 {
    let j = Vec2::new((p[0] - c[0]).round(), (p[1] - c[1]).round());
    let d = p - (c + j);
    let r = d.norm();
    if r >= 2.0 * r1 {
        return Mat2::identity();
    }
    if r <= r1 {
        return Mat2::zeros();
    }
    let phi = collapse_factor(r, r1);
    let dphi = smoothstep_deriv((r - r1) / r1) / r1;
    Mat2::identity() * phi + d * d.transpose() * (dphi / r)
}

/// Inverts the collapse blend on a lifted point; `None` on the collapsed point.
fn collapse_preimage(z: Vec2, c: Vec2, r1: f64) -> Option<Vec2> {
    let j = Vec2::new((z[0] - c[0]).round(), (z[1] - c[1]).round());
    let cc = c + j;
    let d = z - cc;
    let rho = d.norm();
    if rho >= 2.0 * r1 {
        return Some(z);
    }
    if rho == 0.0 {
        return None;
    }
    // g(r) = r·s((r − r₁)/r₁) increases from 0 to 2r₁ on [r₁, 2r₁].
    let (mut lo, mut hi) = (r1, 2.0 * r1);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * collapse_factor(mid, r1) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    Some(cc + d * (r / rho))
}

/// Given the linear preimage of a lifted target, returns the slowed preimage.
/// In eigen-coordinates (a, b) about the nearest lattice point the slowed map
/// is (a, b) ↦ (λ_s a, m(r) b) with m increasing in |b|, so the preimage lies
/// in the disk exactly when the linear one does.
fn slowed_preimage(p_lin: Vec2, r0: f64, k: u32) -> Vec2 {
    let j = Vec2::new(p_lin[0].round(), p_lin[1].round());
    let w = p_lin - j;
    if w.norm() >= r0 {
        return p_lin;
    }
    let e = base_eigen();
    let a = e.e_s.dot(&w);
    let target = e.lambda_u * e.e_u.dot(&w);
    if target == 0.0 {
        return p_lin;
    }
    let h = |b: f64| {
        let t2 = (a * a + b * b) / (r0 * r0);
        let m = if t2 >= 1.0 { e.lambda_u } else { e.lambda_u - (e.lambda_u - 1.0) * (1.0 - t2).powi(k as i32) };
        m * b
    };
    let sign = target.signum();
    let (mut lo, mut hi) = (target.abs() / e.lambda_u, target.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(sign * mid).abs() < target.abs() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let b = sign * 0.5 * (lo + hi);
    j + e.e_s * a + e.e_u * b
}

fn random_in_disk(rng: &mut ChaCha8Rng, radius: f64) -> Vec2 {
    let r = radius * rng.gen::<f64>().sqrt();
    let th = std::f64::consts::TAU * rng.gen::<f64>();
    Vec2::new(r * th.cos(), r * th.sin())
}

/// Spectral norm of a 2×2 matrix.
pub fn op_norm(m: &Mat2) -> f64 {
    let a = m[(0, 0)];
    let b = m[(0, 1)];
    let c = m[(1, 0)];
    let d = m[(1, 1)];
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s + disc)).sqrt()
}

/// Smallest singular value of a 2×2 matrix.
pub fn min_singular(m: &Mat2) -> f64 {
    let n = op_norm(m);
    if n == 0.0 {
        0.0
    } else {
        m.determinant().abs() / n
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionSample {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub dist: f64,
    /// min ‖d_y f‖ / d(x,Γ∞)^a over paired points y ∈ D_x.
    pub lower_quotient: f64,
    /// max ‖d_y f‖ · d(x,Γ∞)^a.
    pub upper_quotient: f64,
    /// Same pair for the inverse branch derivative.
    pub inv_lower_quotient: f64,
    pub inv_upper_quotient: f64,
    /// max ‖d_y f − d_z f‖ / d(y,z)^β.
    pub holder_quotient: f64,
    pub a2_pass: bool,
    pub a3_pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub model: String,
    pub sample_count: usize,
    pub seed: u64,
    pub min_lower_quotient: f64,
    pub max_upper_quotient: f64,
    pub min_inverse_lower_quotient: f64,
    pub max_inverse_upper_quotient: f64,
    pub max_holder_quotient: f64,
    pub holder_constant: f64,
    /// (A2) with multiplicative constant 1 on every sample.
    pub a2_constant_free_pass: bool,
    pub a2_samples_passing: usize,
    /// Largest K' ≤ 1 for which the constant-K' form of (A2) holds on the sample.
    pub a2_empirical_constant: f64,
    pub a3_pass: bool,
    #[serde(skip)]
    pub samples: Vec<AssumptionSample>,
}

impl AssumptionReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        for s in &self.samples {
            wr.serialize(s)?;
        }
        wr.flush()?;
        Ok(())
    }
}
