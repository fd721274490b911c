//! The ladder function I^c(t) = t·e^{cΓt^{1/γ}} and its lattice.
//!
//! c = 1 is the ladder function itself and c = 1/4 the quarter ladder whose
//! inverse generates the lattice ℐ = {I^{−ℓ/4}(1)}. Chart sizes reach far
//! below the f64 range of comfortable arithmetic (10⁻⁵⁰ and smaller), so the
//! lattice stores natural logarithms and every radius is carried as a lattice
//! index. One full ladder step I^{±1} is four lattice indices.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::RwLock;

/// Lattice indices per full ladder step.
pub const LADDER_STEP: usize = 4;
/// Default maximum lattice length (reaches roughly 10⁻⁹⁷).
pub const DEFAULT_LATTICE_CAP: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderParams {
    /// Γ > 0.
    pub big_gamma: f64,
    /// γ > 20/β.
    pub gamma: f64,
    /// Hölder exponent β.
    pub beta: f64,
}

impl Default for LadderParams {
    fn default() -> Self {
        Self { big_gamma: 1.0, gamma: 21.0, beta: 1.0 }
    }
}

impl LadderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.big_gamma > 0.0) {
            return Err(Error::Config(format!("Gamma must be positive, got {}", self.big_gamma)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.gamma > 20.0 / self.beta) {
            return Err(Error::Config(format!(
                "gamma must exceed 20/beta = {}, got gamma = {}",
                20.0 / self.beta,
                self.gamma
            )));
        }
        Ok(())
    }
}

/// I^c(t) = t·e^{cΓt^{1/γ}} for t ∈ (0, 1).
pub fn ladder(p: &LadderParams, t: f64, c: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::DomainError(format!("ladder argument {t} outside (0, 1)")));
    }
    Ok(t * (c * p.big_gamma * t.powf(1.0 / p.gamma)).exp())
}

/// ln I^{−c}(e^{ln_t}): the root y of y + cΓe^{y/γ} = ln_t.
pub fn ln_ladder_inv(p: &LadderParams, ln_t: f64, c: f64) -> Result<f64> {
    let cg = c * p.big_gamma;
    if !(ln_t < cg) || !ln_t.is_finite() {
        return Err(Error::DomainError(format!("inverse ladder argument e^{ln_t} outside (0, e^{{cΓ}})")));
    }
    let g = |y: f64| y + cg * (y / p.gamma).exp() - ln_t;
    let (mut lo, mut hi) = (ln_t - cg, ln_t.min(0.0));
    // Bracketed Newton: g is increasing and convex, so Newton from the right
    // end never overshoots; bisection guards the rare leftward excursion.
    let mut y = hi;
    for _ in 0..200 {
        let gy = g(y);
        if gy > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let dg = 1.0 + cg / p.gamma * (y / p.gamma).exp();
        let mut next = y - gy / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-16 * y.abs().max(1.0) || hi - lo <= 1e-16 * y.abs().max(1.0) {
            return Ok(next);
        }
        y = next;
    }
    Err(Error::NoConvergence(format!("inverse ladder at ln t = {ln_t}")))
}

/// I^{−c}(t), relative accuracy 1e-14.
pub fn ladder_inv(p: &LadderParams, t: f64, c: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::DomainError(format!("inverse ladder argument {t} is not positive")));
    }
    Ok(ln_ladder_inv(p, t.ln(), c)?.exp())
}

/// The first `depth + 1` lattice elements I^{−ℓ/4}(1), ℓ = 0..=depth.
pub fn lattice_i(p: &LadderParams, depth: usize) -> Vec<f64> {
    let lat = Lattice::new(*p);
    (0..=depth).map(|k| lat.value(k).expect("depth within cap")).collect()
}

/// Lazily grown lattice ℐ, stored as logarithms. Safe to share across threads.
#[derive(Debug)]
pub struct Lattice {
    params: LadderParams,
    cap: usize,
    logs: RwLock<Vec<f64>>,
}

impl Clone for Lattice {
    fn clone(&self) -> Self {
        Self { params: self.params, cap: self.cap, logs: RwLock::new(self.logs.read().expect("lattice lock").clone()) }
    }
}

impl Lattice {
    pub fn new(params: LadderParams) -> Self {
        Self::with_cap(params, DEFAULT_LATTICE_CAP)
    }

    pub fn with_cap(params: LadderParams, cap: usize) -> Self {
        Self { params, cap, logs: RwLock::new(vec![0.0]) }
    }

    pub fn params(&self) -> &LadderParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.logs.read().expect("lattice lock").len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn grow_to(&self, len: usize) -> Result<()> {
        if len > self.cap {
            return Err(Error::LatticeUnderflow { value: f64::NAN });
        }
        if self.logs.read().expect("lattice lock").len() >= len {
            return Ok(());
        }
        let mut logs = self.logs.write().expect("lattice lock");
        while logs.len() < len {
            let last = *logs.last().expect("non-empty");
            let next = ln_ladder_inv(&self.params, last, 0.25)?;
            logs.push(next);
        }
        Ok(())
    }

    /// ln of the element with the given index.
    pub fn ln_value(&self, index: usize) -> Result<f64> {
        self.grow_to(index + 1)?;
        Ok(self.logs.read().expect("lattice lock")[index])
    }

    pub fn value(&self, index: usize) -> Result<f64> {
        Ok(self.ln_value(index)?.exp())
    }

    /// Index of the largest element ≤ e^{ln_target}.
    pub fn snap_ln(&self, ln_target: f64) -> Result<usize> {
        if ln_target >= 0.0 {
            return Ok(0);
        }
        loop {
            {
                let logs = self.logs.read().expect("lattice lock");
                if *logs.last().expect("non-empty") <= ln_target {
                    return Ok(logs.partition_point(|&l| l > ln_target));
                }
                if logs.len() >= self.cap {
                    return Err(Error::LatticeUnderflow { value: ln_target.exp() });
                }
            }
            let len = self.len();
            self.grow_to((len * 2).min(self.cap))?;
        }
    }

    /// I^{−n}(element), as a lattice index.
    pub fn ladder_down(&self, index: usize, n: usize) -> usize {
        index + LADDER_STEP * n
    }

    /// I^{n}(element) capped at the top of the lattice.
    pub fn ladder_up(&self, index: usize, n: usize) -> usize {
        index.saturating_sub(LADDER_STEP * n)
    }
}

/// Certified tail of Σ_{n>m} (I^{−n}(t))^{(1+τ)/γ}.
///
/// With a_n = (I^{−n}(t))^{1/γ} one has 1/a_{n+1} − 1/a_n ≥ κ = (Γ/γ)e^{−(Γ/γ)a_0},
/// hence a_n ≤ 1/(1/a_m + κ(n−m)) and the tail is at most a_m^τ/(κτ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesCertificate {
    pub terms: usize,
    pub partial_sum: f64,
    pub tail_bound: f64,
    /// Number of terms after which the certified tail drops below `target`.
    pub terms_for_target: f64,
    pub target: f64,
}

pub fn certify_ladder_series(
    p: &LadderParams,
    t: f64,
    tau: f64,
    terms: usize,
    target: f64,
) -> Result<SeriesCertificate> {
    if !(tau > 0.0) {
        return Err(Error::DomainError("τ must be positive".into()));
    }
    let seq = ladder_orbit(p, t, terms)?;
    let a: Vec<f64> = seq.iter().map(|x| x.powf(1.0 / p.gamma)).collect();
    let partial_sum = a.iter().map(|x| x.powf(1.0 + tau)).sum();
    let kappa = p.big_gamma / p.gamma * (-(p.big_gamma / p.gamma) * a[0]).exp();
    let am = *a.last().expect("non-empty");
    let tail_bound = am.powf(tau) / (kappa * tau);
    let inv_needed = (target * kappa * tau).powf(-1.0 / tau);
    let terms_for_target = ((inv_needed - 1.0 / a[0]) / kappa).max(0.0);
    Ok(SeriesCertificate { terms, partial_sum, tail_bound, terms_for_target, target })
}

/// I^{−n}(t) for n = 0..terms−1 using the full ladder.
pub fn ladder_orbit(p: &LadderParams, t: f64, terms: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(terms);
    let mut l = t.ln();
    for _ in 0..terms {
        out.push(l.exp());
        l = ln_ladder_inv(p, l, 1.0)?;
    }
    Ok(out)
}

/// C = sup_{N≥1} 2(N+1)(I^{−N}(1))^{1/γ+α}, α = β/2 − 1/γ, evaluated to `depth`.
/// Returns the supremum and whether the sequence was non-increasing after its
/// maximum (otherwise deeper evaluation may be needed).
pub fn variation_constant(p: &LadderParams, depth: usize) -> Result<(f64, bool)> {
    let exponent = p.beta / 2.0;
    let mut l = 0.0;
    let mut best = 0.0f64;
    let mut argmax = 0;
    let mut values = Vec::with_capacity(depth);
    for n in 1..=depth {
        l = ln_ladder_inv(p, l, 1.0)?;
        let v = 2.0 * (n as f64 + 1.0) * (exponent * l).exp();
        if v > best {
            best = v;
            argmax = n;
        }
        values.push(v);
    }
    let monotone = values[argmax.saturating_sub(1)..].windows(2).all(|w| w[1] <= w[0]);
    Ok((best, monotone))
}
