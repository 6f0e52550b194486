use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PhysicsError;

/// Additive white noise on every capacitance reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation (pF).
    pub sigma_pf: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::silent()
    }
}

impl NoiseModel {
    pub const fn silent() -> Self {
        Self { sigma_pf: 0.0, seed: 0 }
    }

    pub const fn new(sigma_pf: f64, seed: u64) -> Self {
        Self { sigma_pf, seed }
    }

    pub fn stream(&self) -> Result<NoiseStream, PhysicsError> {
        NoiseStream::new(self)
    }
}

/// Seeded noise source owned by the caller. Two streams built from the same
/// model produce identical sequences.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl NoiseStream {
    pub fn new(model: &NoiseModel) -> Result<Self, PhysicsError> {
        if !(model.sigma_pf.is_finite() && model.sigma_pf >= 0.0) {
            return Err(PhysicsError::InvalidParameter(format!(
                "noise sigma must be >= 0, got {}",
                model.sigma_pf
            )));
        }
        let normal = if model.sigma_pf > 0.0 {
            Some(
                Normal::new(0.0, model.sigma_pf)
                    .map_err(|e| PhysicsError::InvalidParameter(format!("noise distribution: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            normal,
        })
    }

    /// A stream that always returns 0.
    pub fn silent() -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
            normal: None,
        }
    }

    pub fn sample(&mut self) -> f64 {
        match &self.normal {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        }
    }
}
