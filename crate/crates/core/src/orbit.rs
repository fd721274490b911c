//! Finite windows into the natural extension M^f = {(x_i)_{i∈ℤ} : f(x_i) = x_{i+1}}.
//!
//! A window stores N backward points chosen by a [`BranchRule`], the present
//! point, and a forward cache. Windows are immutable: shifting or extending
//! returns a new window, so concurrent readers never observe growth.

use crate::torus::{MapModel, TorusPoint};
use crate::{Error, Mat2, Result};
use serde::{Deserialize, Serialize};

/// Default backward window length.
pub const DEFAULT_WINDOW: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchRule {
    /// The preimage nearest the current point.
    Nearest,
    /// The preimage with this index in the coset enumeration, at every step.
    FixedIndex(usize),
    /// One preimage index per backward step.
    Explicit(Vec<usize>),
    /// The past repeats a known periodic cycle; such windows are built
    /// directly from the cycle, not by `extend_backward`.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitWindow {
    pub map: MapModel,
    pub branch_rule: BranchRule,
    /// x_{-N}, …, x_{-1}.
    pub past: Vec<TorusPoint>,
    pub present: TorusPoint,
    /// x_1, …, x_M.
    pub forward: Vec<TorusPoint>,
    /// Set when a stored point lies where the differential is singular.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CocycleProduct {
    pub matrix: Mat2,
    /// (from index, to index) along the orbit.
    pub span: (i64, i64),
}

pub fn extend_backward(map: &MapModel, x0: TorusPoint, rule: &BranchRule, n: usize) -> Result<OrbitWindow> {
    let mut pts = Vec::with_capacity(n);
    let mut cur = x0;
    for step in 0..n {
        if map.singular_set.contains(&cur) {
            return Err(Error::NoBranch { step });
        }
        let pre = map.preimages(cur).map_err(|_| Error::NoBranch { step })?;
        let chosen = match rule {
            BranchRule::Nearest => pre.iter().copied().min_by(|a, b| a.dist(cur).total_cmp(&b.dist(cur))),
            BranchRule::FixedIndex(i) => pre.get(*i).copied(),
            BranchRule::Explicit(list) => list.get(step).and_then(|i| pre.get(*i)).copied(),
            BranchRule::Cycle => None,
        }
        .ok_or(Error::NoBranch { step })?;
        if map.is_degenerate(chosen) {
            return Err(Error::NoBranch { step });
        }
        pts.push(chosen);
        cur = chosen;
    }
    pts.reverse();
    let degenerate = map.is_degenerate(x0);
    Ok(OrbitWindow {
        map: map.clone(),
        branch_rule: rule.clone(),
        past: pts,
        present: x0,
        forward: Vec::new(),
        degenerate,
    })
}

impl OrbitWindow {
    pub fn backward_len(&self) -> usize {
        self.past.len()
    }

    pub fn forward_len(&self) -> usize {
        self.forward.len()
    }

    /// x_i for i ∈ [−N, M]; forward points beyond the cache are iterated on the fly.
    pub fn at(&self, i: i64) -> Result<TorusPoint> {
        if i < 0 {
            let k = self.past.len() as i64 + i;
            if k < 0 {
                return Err(Error::WindowExhausted { index: i });
            }
            Ok(self.past[k as usize])
        } else if i == 0 {
            Ok(self.present)
        } else if (i as usize) <= self.forward.len() {
            Ok(self.forward[i as usize - 1])
        } else {
            let mut p = self.forward.last().copied().unwrap_or(self.present);
            for _ in self.forward.len()..i as usize {
                p = self.map.eval(p);
            }
            Ok(p)
        }
    }

    /// Copy with at least `m` cached forward points.
    pub fn extended(&self, m: usize) -> OrbitWindow {
        let mut o = self.clone();
        while o.forward.len() < m {
            let last = o.forward.last().copied().unwrap_or(o.present);
            let next = o.map.eval(last);
            o.degenerate |= o.map.is_degenerate(next);
            o.forward.push(next);
        }
        o
    }

    /// The shift f̂^steps, re-indexing the window.
    pub fn shift(&self, steps: i64) -> Result<OrbitWindow> {
        if steps == 0 {
            return Ok(self.clone());
        }
        if steps < -(self.past.len() as i64) {
            return Err(Error::WindowExhausted { index: steps });
        }
        let mut all: Vec<TorusPoint> = Vec::with_capacity(self.past.len() + 1 + self.forward.len());
        let src = if steps > 0 { self.extended(steps as usize) } else { self.clone() };
        all.extend_from_slice(&src.past);
        all.push(src.present);
        all.extend_from_slice(&src.forward);
        let centre = (src.past.len() as i64 + steps) as usize;
        Ok(OrbitWindow {
            map: src.map.clone(),
            branch_rule: src.branch_rule.clone(),
            past: all[..centre].to_vec(),
            present: all[centre],
            forward: all[centre + 1..].to_vec(),
            degenerate: src.degenerate,
        })
    }

    /// Keeps only the last `n` backward points.
    pub fn truncate_past(&self, n: usize) -> OrbitWindow {
        let mut o = self.clone();
        if o.past.len() > n {
            o.past.drain(..o.past.len() - n);
        }
        o
    }

    /// d_{x_i} f along the window.
    pub fn jacobian(&self, i: i64) -> Result<Mat2> {
        Ok(self.map.differential(self.at(i)?))
    }

    /// d f̂^n at the present point: a forward product for n > 0 and a product
    /// of inverse Jacobians along the stored past for n < 0.
    pub fn cocycle(&self, n: i64) -> Result<CocycleProduct> {
        let mut m = Mat2::identity();
        if n > 0 {
            for i in 0..n {
                m = self.jacobian(i)? * m;
            }
        } else if n < 0 {
            for i in 1..=(-n) {
                let j = self.jacobian(-i)?;
                let inv = invert(&j).ok_or(Error::DegenerateJacobian { index: -i })?;
                m = inv * m;
            }
        }
        Ok(CocycleProduct { matrix: m, span: (0, n) })
    }

    /// Truncated metric sup_{i ∈ [−N, 0]} 2^i d(x_i, y_i).
    pub fn orbit_distance(&self, other: &OrbitWindow) -> Result<f64> {
        if self.past.len() != other.past.len() {
            return Err(Error::WindowMismatch(self.past.len(), other.past.len()));
        }
        let n = self.past.len() as i64;
        let mut best: f64 = 0.0;
        for i in -n..=0 {
            let d = self.at(i)?.dist(other.at(i)?);
            best = best.max(d * 2f64.powi(i as i32));
        }
        Ok(best)
    }
}

/// Inverse of a 2×2 matrix, `None` when singular.
pub fn invert(m: &Mat2) -> Option<Mat2> {
    let det = m.determinant();
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some(Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_window_is_constant() {
        let m = MapModel::cat();
        let o = extend_backward(&m, TorusPoint::new(0.0, 0.0), &BranchRule::Nearest, 10).unwrap();
        assert!(o.past.iter().all(|p| *p == TorusPoint::new(0.0, 0.0)));
        let s = o.shift(3).unwrap();
        assert_eq!(s.present, TorusPoint::new(0.0, 0.0));
    }

    #[test]
    fn one_step_back_is_a_lattice_preimage() {
        let m = MapModel::cat();
        let y = TorusPoint::new(0.5, 0.5);
        let o = extend_backward(&m, y, &BranchRule::Nearest, 1).unwrap();
        let cands = [TorusPoint::new(0.0, 0.5), TorusPoint::new(0.5, 0.0)];
        assert!(cands.iter().any(|c| c.dist(o.past[0]) < 1e-15));
    }

    #[test]
    fn collapsed_point_has_no_branch() {
        let m = MapModel::collapsed_default();
        let p2 = TorusPoint::new(6.0 / 7.0, 4.0 / 7.0);
        assert!(matches!(extend_backward(&m, p2, &BranchRule::Nearest, 3), Err(Error::NoBranch { step: 0 })));
    }

    #[test]
    fn shift_roundtrip_and_projection() {
        let m = MapModel::slowed_default();
        let o = extend_backward(&m, TorusPoint::new(0.31, 0.77), &BranchRule::Nearest, 8).unwrap();
        let s = o.shift(1).unwrap();
        assert_eq!(s.present, m.eval(o.present));
        let back = s.shift(-1).unwrap();
        assert_eq!(back.present, o.present);
        assert_eq!(back.past, o.past);
        assert!(o.shift(-9).is_err());
    }

    #[test]
    fn linear_cocycle_powers() {
        let m = MapModel::cat();
        let o = extend_backward(&m, TorusPoint::new(0.2, 0.3), &BranchRule::Nearest, 4).unwrap();
        let a = Mat2::new(3.0, 1.0, 1.0, 1.0);
        assert!((o.cocycle(3).unwrap().matrix - a * a * a).norm() < 1e-12);
        let ai = a.try_inverse().unwrap();
        assert!((o.cocycle(-2).unwrap().matrix - ai * ai).norm() < 1e-12);
        assert_eq!(o.cocycle(0).unwrap().matrix, Mat2::identity());
    }

    #[test]
    fn distance_weights_past() {
        let m = MapModel::cat();
        let o = extend_backward(&m, TorusPoint::new(0.2, 0.3), &BranchRule::Nearest, 6).unwrap();
        let mut p = o.clone();
        let delta = 0.01;
        let k = p.past.len() - 3;
        p.past[k] = p.past[k].translate(crate::Vec2::new(delta, 0.0));
        let d = o.orbit_distance(&p).unwrap();
        assert!((d - delta / 8.0).abs() < 1e-15);
        assert_eq!(o.orbit_distance(&o).unwrap(), 0.0);
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let m = MapModel::slowed_default();
        let o = extend_backward(&m, TorusPoint::new(0.123456789, 0.987654321), &BranchRule::FixedIndex(1), 12)
            .unwrap()
            .extended(5);
        let s = serde_json::to_string(&o).unwrap();
        let back: OrbitWindow = serde_json::from_str(&s).unwrap();
        assert_eq!(back, o);
    }
}
