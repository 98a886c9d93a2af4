//! Variance-preserving noise schedules.
//!
//! Closed forms, with `u = (t-1)/(T-1)` for `t` in `1..=T`:
//!
//! * cosine: `alpha_t = cos(phi(u))`, `sigma_t = sin(phi(u))` where `phi`
//!   interpolates linearly from `acos(0.995)` to `acos(0.03)`;
//! * linear: `alpha_t^2` interpolates linearly from `0.995^2` to `0.03^2`,
//!   `sigma_t = sqrt(1 - alpha_t^2)`.
//!
//! Both pin the endpoints `alpha_1 = 0.995`, `alpha_T = 0.03`, so any length
//! `T >= 4` starts nearly clean and ends nearly pure noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{VideoTensor, Volume};

const ALPHA_FIRST: f64 = 0.995;
const ALPHA_LAST: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Cosine,
    Linear,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(ScheduleKind::Cosine),
            "linear" => Ok(ScheduleKind::Linear),
            other => Err(Error::Config(format!(
                "unknown schedule kind {other:?} (expected \"cosine\" or \"linear\")"
            ))),
        }
    }
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::Linear => "linear",
        })
    }
}

/// Per-timestep signal/noise coefficients, indexed by `t` in `1..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    alpha: Vec<f64>,
    sigma: Vec<f64>,
}

impl NoiseSchedule {
    pub fn build(t_count: usize, kind: ScheduleKind) -> Result<Self> {
        if t_count < 4 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs at least 4 timesteps, got {t_count}"
            )));
        }
        let mut alpha = Vec::with_capacity(t_count);
        let mut sigma = Vec::with_capacity(t_count);
        for t in 0..t_count {
            let u = t as f64 / (t_count - 1) as f64;
            match kind {
                ScheduleKind::Cosine => {
                    let phi0 = ALPHA_FIRST.acos();
                    let phi1 = ALPHA_LAST.acos();
                    let phi = phi0 + (phi1 - phi0) * u;
                    alpha.push(phi.cos());
                    sigma.push(phi.sin());
                }
                ScheduleKind::Linear => {
                    let a0 = ALPHA_FIRST * ALPHA_FIRST;
                    let a1 = ALPHA_LAST * ALPHA_LAST;
                    let a = a0 + (a1 - a0) * u;
                    alpha.push(a.sqrt());
                    sigma.push((1.0 - a).sqrt());
                }
            }
        }
        let schedule = NoiseSchedule { kind, alpha, sigma };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of timesteps T.
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signal coefficient at `t` in `1..=T`.
    pub fn alpha(&self, t: usize) -> f64 {
        assert!((1..=self.len()).contains(&t), "timestep {t} out of range");
        self.alpha[t - 1]
    }

    /// Noise coefficient at `t` in `1..=T`.
    pub fn sigma(&self, t: usize) -> f64 {
        assert!((1..=self.len()).contains(&t), "timestep {t} out of range");
        self.sigma[t - 1]
    }

    /// Signal-to-noise ratio `alpha_t^2 / sigma_t^2`.
    pub fn snr(&self, t: usize) -> f64 {
        let a = self.alpha(t);
        let s = self.sigma(t);
        (a * a) / (s * s)
    }

    /// Check the variance-preserving invariants; `build` already enforces
    /// them, this re-checks an arbitrary instance.
    pub fn validate(&self) -> Result<()> {
        let t_count = self.len();
        for t in 1..=t_count {
            let (a, s) = (self.alpha(t), self.sigma(t));
            if ((a * a + s * s) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "alpha^2 + sigma^2 = {} at t={t}, expected 1",
                    a * a + s * s
                )));
            }
            if t > 1 && (a >= self.alpha(t - 1) || s <= self.sigma(t - 1)) {
                return Err(Error::InvalidArgument(format!(
                    "schedule not strictly monotonic at t={t}"
                )));
            }
        }
        if self.alpha(1) <= 0.99 {
            return Err(Error::InvalidArgument(format!(
                "alpha_1 = {} must exceed 0.99",
                self.alpha(1)
            )));
        }
        if self.alpha(t_count) >= 0.05 {
            return Err(Error::InvalidArgument(format!(
                "alpha_T = {} must be below 0.05",
                self.alpha(t_count)
            )));
        }
        Ok(())
    }
}

/// `x_t = alpha_t * x0 + sigma_t * eps`.
pub fn forward_diffuse(
    x0: &VideoTensor,
    t: usize,
    eps: &Volume,
    schedule: &NoiseSchedule,
) -> Result<Volume> {
    if !(1..=schedule.len()).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "timestep {t} outside 1..={}",
            schedule.len()
        )));
    }
    if eps.shape() != x0.shape() {
        return Err(Error::Shape(format!(
            "noise {} vs clip {}",
            eps.shape(),
            x0.shape()
        )));
    }
    let a = schedule.alpha(t);
    let s = schedule.sigma(t);
    let data: Vec<f64> = x0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(x, e)| a * x + s * e)
        .collect();
    Volume::from_vec(x0.shape(), data)
}
