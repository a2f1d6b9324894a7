use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

pub const MAX_SPEED: f64 = 35.0;
pub const MAX_ACCEL: f64 = 2.0;
pub const MAX_DECEL: f64 = 3.0;
pub const MAX_GRADE: f64 = 0.06;

/// Per-second speed and road-grade profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCycle {
    /// Sample period, seconds. Always 1.0.
    pub dt: f64,
    /// m/s
    pub speed: Vec<f64>,
    /// radians
    pub grade: Vec<f64>,
}

impl DriveCycle {
    pub fn duration(&self) -> usize {
        self.speed.len()
    }

    /// Constant-grade cycle from a speed trace.
    pub fn from_speed(speed: Vec<f64>) -> Self {
        let grade = vec![0.0; speed.len()];
        Self {
            dt: 1.0,
            speed,
            grade,
        }
    }

    pub fn mean_speed(&self) -> f64 {
        self.speed.iter().sum::<f64>() / self.speed.len().max(1) as f64
    }
}

/// Driving-style knobs of the synthetic cycle generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleProfile {
    /// Range of cruise target speeds, m/s.
    pub cruise_speed: (f64, f64),
    /// Range of acceleration magnitudes, m/s².
    pub accel: (f64, f64),
    /// Range of braking magnitudes, m/s².
    pub decel: (f64, f64),
    /// Range of standstill durations, s.
    pub idle: (f64, f64),
    /// Range of cruise durations, s.
    pub cruise: (f64, f64),
    /// Probability of braking to a stop after a cruise segment.
    pub stop_probability: f64,
    /// Stationary standard deviation of the grade signal, radians.
    pub grade_std: f64,
}

impl Default for CycleProfile {
    fn default() -> Self {
        Self {
            cruise_speed: (4.0, 26.0),
            accel: (0.6, 1.8),
            decel: (0.8, 2.6),
            idle: (3.0, 40.0),
            cruise: (20.0, 160.0),
            stop_probability: 0.35,
            grade_std: 0.012,
        }
    }
}

impl CycleProfile {
    /// A vehicle-specific variation of the default profile.
    pub fn sample(seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let top = rng.gen_range(12.0..22.0);
        let aggressiveness = rng.gen_range(0.7..1.15);
        Self {
            cruise_speed: (4.0, top),
            accel: (0.5 * aggressiveness, (1.3 * aggressiveness).min(MAX_ACCEL)),
            decel: (0.8 * aggressiveness, (2.4 * aggressiveness).min(MAX_DECEL)),
            idle: (3.0, rng.gen_range(15.0..45.0)),
            cruise: (20.0, rng.gen_range(90.0..200.0)),
            stop_probability: rng.gen_range(0.2..0.5),
            grade_std: rng.gen_range(0.004..0.012),
        }
    }
}

fn uniform(rng: &mut seed::Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.gen_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Deterministic synthetic cycle with the default profile.
pub fn generate_drive_cycle(seed: u64, duration: usize) -> Result<DriveCycle> {
    generate_drive_cycle_with(seed, duration, &CycleProfile::default())
}

enum Phase {
    Idle(usize),
    Ramp { target: f64, rate: f64 },
    Cruise { target: f64, left: usize },
}

/// Idle / accelerate / cruise / brake segments with a smoothed grade signal.
pub fn generate_drive_cycle_with(
    seed: u64,
    duration: usize,
    profile: &CycleProfile,
) -> Result<DriveCycle> {
    if duration < 60 {
        return Err(Error::param("duration", "must be >= 60 s"));
    }
    let mut rng = seed::rng(seed::derive(seed, "drive-cycle", &[]));
    let jitter = Normal::new(0.0, 0.12).expect("valid normal");
    // AR(1) grade with coefficient rho has stationary std sigma / sqrt(1 - rho^2).
    let rho: f64 = 0.98;
    let grade_noise = Normal::new(0.0, profile.grade_std * (1.0 - rho * rho).sqrt())
        .map_err(|e| Error::param("grade_std", e.to_string()))?;

    let mut speed = Vec::with_capacity(duration);
    let mut grade = Vec::with_capacity(duration);
    let mut g = (grade_noise.sample(&mut rng) * 10.0).clamp(-MAX_GRADE, MAX_GRADE);
    let mut v = 0.0f64;
    let mut wobble = 0.0f64;
    let mut phase = Phase::Idle(uniform(&mut rng, profile.idle) as usize);

    while speed.len() < duration {
        let desired = match &mut phase {
            Phase::Idle(left) => {
                if *left == 0 {
                    let target = uniform(&mut rng, profile.cruise_speed);
                    phase = Phase::Ramp {
                        target,
                        rate: uniform(&mut rng, profile.accel),
                    };
                    continue;
                }
                *left -= 1;
                0.0
            }
            Phase::Ramp { target, rate } => {
                let (target, rate) = (*target, *rate);
                let next = if target > v {
                    (v + rate).min(target)
                } else {
                    (v - rate).max(target)
                };
                if next == target {
                    phase = if target == 0.0 {
                        Phase::Idle(uniform(&mut rng, profile.idle) as usize)
                    } else {
                        wobble = 0.0;
                        Phase::Cruise {
                            target,
                            left: uniform(&mut rng, profile.cruise) as usize,
                        }
                    };
                }
                next
            }
            Phase::Cruise { target, left } => {
                if *left == 0 {
                    let target_now = *target;
                    phase = if rng.gen_bool(profile.stop_probability) {
                        Phase::Ramp {
                            target: 0.0,
                            rate: uniform(&mut rng, profile.decel),
                        }
                    } else {
                        let next = uniform(&mut rng, profile.cruise_speed);
                        let range = if next > target_now {
                            profile.accel
                        } else {
                            profile.decel
                        };
                        Phase::Ramp {
                            target: next,
                            rate: uniform(&mut rng, range),
                        }
                    };
                    continue;
                }
                *left -= 1;
                wobble = (0.9 * wobble + jitter.sample(&mut rng)).clamp(-1.5, 1.5);
                *target + wobble
            }
        };
        v = desired
            .clamp(v - MAX_DECEL, v + MAX_ACCEL)
            .clamp(0.0, MAX_SPEED);
        g = (rho * g + grade_noise.sample(&mut rng)).clamp(-MAX_GRADE, MAX_GRADE);
        speed.push(v);
        grade.push(g);
    }
    Ok(DriveCycle {
        dt: 1.0,
        speed,
        grade,
    })
}
