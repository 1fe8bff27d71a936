use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How stored pixels are ranked before the lowest fraction is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Predictor output times density raised to `beta`.
    #[default]
    PredictorDensity,
    PredictorOnly,
    DensityOnly,
    /// Seeded uniform random scores.
    Random,
}

/// Deterministic ordering among equal scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Equal scores are dropped in lexicographic coordinate order.
    #[default]
    Lexicographic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub drop_rate: f64,
    /// Overrides `drop_rate` at 2D filter points.
    pub drop_rate_2d: Option<f64>,
    pub beta: f64,
    /// Side of the square density pooling window, odd.
    pub pool: usize,
    /// 1-based indices of 3D layers whose input is filtered.
    pub apply_layers_3d: Vec<usize>,
    /// 1-based indices of 2D layers whose input is filtered.
    pub apply_layers_2d: Vec<usize>,
    pub tie_break: TieBreak,
    pub score: ScoreMode,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            drop_rate: 0.25,
            drop_rate_2d: None,
            beta: 0.5,
            pool: 5,
            apply_layers_3d: vec![2, 4],
            apply_layers_2d: vec![2, 4],
            tie_break: TieBreak::Lexicographic,
            score: ScoreMode::PredictorDensity,
        }
    }
}

impl FilterConfig {
    pub fn rate_3d(&self) -> f64 {
        self.drop_rate
    }

    pub fn rate_2d(&self) -> f64 {
        self.drop_rate_2d.unwrap_or(self.drop_rate)
    }

    /// A configuration that drops nothing anywhere.
    pub fn disabled(&self) -> FilterConfig {
        FilterConfig {
            drop_rate: 0.0,
            drop_rate_2d: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [Some(self.drop_rate), self.drop_rate_2d].into_iter().flatten() {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("drop rate must be in [0, 1), got {r}")));
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.pool.is_multiple_of(2) {
            return Err(Error::Config(format!("density pool must be odd, got {}", self.pool)));
        }
        for (name, layers) in [("3d", &self.apply_layers_3d), ("2d", &self.apply_layers_2d)] {
            if layers.contains(&0) {
                return Err(Error::Config(format!("{name} filter layer indices are 1-based")));
            }
        }
        Ok(())
    }
}

/// Number of pixels dropped out of `m` at rate `r`.
pub fn drop_count(r: f64, m: usize) -> usize {
    ((r * m as f64).floor() as usize).min(m)
}
