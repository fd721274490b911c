//! Run configuration: a flat key-value file in TOML, with a JSON mirror.

use crate::chart::{ChartContext, ChartParams};
use crate::graph::GrainSpec;
use crate::ladder::LadderParams;
use crate::torus::{MapModel, TorusPoint};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// "linear", "slowed" or "collapsed".
    pub map: String,
    pub matrix: [[i64; 2]; 2],
    pub slowdown_radius: f64,
    pub profile_exponent: u32,
    pub collapse_center: [f64; 2],
    pub collapse_radius: f64,
    /// Overrides the model's Hölder constant K when set.
    pub holder_constant: Option<f64>,

    pub eps: f64,
    pub big_gamma: f64,
    pub gamma: f64,
    pub beta: f64,
    pub a: f64,
    /// Truncation N of the scaling series.
    pub window_n: usize,

    pub manifold_grid: usize,
    pub decomposition_grid: usize,
    pub grain_base_bits: u32,
    pub grain_c0_bits: u32,

    /// Largest period of the exact cycles seeding the desk-scale graph.
    pub max_period: usize,
    /// Random windows added to the desk-scale graph input.
    pub random_windows: usize,
    /// Odd chain window length.
    pub chain_length: usize,
    pub chain_samples: usize,
    pub orbit_samples: usize,
    pub d1_samples: usize,
    pub contraction_pairs: usize,
    pub tol: f64,

    pub seed: u64,
    pub out_dir: String,
    /// Suites run by `verify`; empty means all.
    pub suites: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            map: "linear".into(),
            matrix: [[3, 1], [1, 1]],
            slowdown_radius: 0.1,
            profile_exponent: 3,
            collapse_center: [6.0 / 7.0, 4.0 / 7.0],
            collapse_radius: 0.05,
            holder_constant: None,
            eps: 0.05,
            big_gamma: 1.0,
            gamma: 21.0,
            beta: 1.0,
            a: 2.0,
            window_n: 64,
            manifold_grid: 65,
            decomposition_grid: 16,
            grain_base_bits: 10,
            grain_c0_bits: 12,
            max_period: 5,
            random_windows: 8,
            chain_length: 41,
            chain_samples: 200,
            orbit_samples: 100,
            d1_samples: 1000,
            contraction_pairs: 100,
            tol: 1e-8,
            seed: 1,
            out_dir: "out".into(),
            suites: Vec::new(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    /// Reads TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| config_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| config_err(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("flat config serializes")
    }

    pub fn ladder(&self) -> LadderParams {
        LadderParams { big_gamma: self.big_gamma, gamma: self.gamma, beta: self.beta }
    }

    pub fn chart_params(&self) -> ChartParams {
        ChartParams { eps: self.eps, ladder: self.ladder(), a: self.a, trunc_n: self.window_n }
    }

    pub fn context(&self) -> Result<ChartContext> {
        ChartContext::new(self.chart_params())
    }

    pub fn grain(&self) -> GrainSpec {
        GrainSpec { base_bits: self.grain_base_bits, c0_bits: self.grain_c0_bits }
    }

    pub fn model(&self) -> Result<MapModel> {
        let mut m = match self.map.as_str() {
            "linear" => MapModel::linear(self.matrix)?,
            "slowed" => MapModel::slowed(self.slowdown_radius, self.profile_exponent)?,
            "collapsed" => {
                let c = self.collapse_center;
                MapModel::collapsed(TorusPoint::new(c[0], c[1]), self.collapse_radius)?
            }
            other => return Err(config_err(format!("unknown map '{other}' (expected linear, slowed or collapsed)"))),
        };
        if let Some(k) = self.holder_constant {
            m.holder_constant = k;
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.ladder().validate()?;
        if !(self.eps > 0.0 && self.eps <= 0.1) {
            return Err(config_err(format!("eps must lie in (0, 0.1], got {}", self.eps)));
        }
        if !(self.a > 1.0) {
            return Err(config_err(format!("a must exceed 1, got {}", self.a)));
        }
        if let Some(k) = self.holder_constant {
            if !(k > 1.0) {
                return Err(config_err(format!("holder_constant must exceed 1, got {k}")));
            }
        }
        let mins = [
            ("window_n", self.window_n, 2),
            ("manifold_grid", self.manifold_grid, 9),
            ("decomposition_grid", self.decomposition_grid, 8),
            ("max_period", self.max_period, 1),
            ("chain_length", self.chain_length, 5),
            ("orbit_samples", self.orbit_samples, 1),
            ("d1_samples", self.d1_samples, 1),
            ("contraction_pairs", self.contraction_pairs, 1),
        ];
        for (name, value, min) in mins {
            if value < min {
                return Err(config_err(format!("{name} must be at least {min}, got {value}")));
            }
        }
        if self.max_period > 6 {
            return Err(config_err(format!("max_period must be at most 6, got {}", self.max_period)));
        }
        if self.chain_length.is_multiple_of(2) {
            return Err(config_err(format!("chain_length must be odd, got {}", self.chain_length)));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(config_err(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.grain_base_bits > 52 || self.grain_c0_bits > 52 {
            return Err(config_err("grain bits must be at most 52"));
        }
        for s in &self.suites {
            if !crate::suite::SUITES.contains(&s.as_str()) {
                return Err(config_err(format!("unknown suite '{s}'")));
            }
        }
        self.model()?;
        Ok(())
    }
}
