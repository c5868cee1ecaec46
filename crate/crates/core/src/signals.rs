//! Seeded piecewise-constant input schedules.
//!
//! A segment with `noise_std > 0` adds `noise_std * N(0, 1)` to its base
//! level. The draw is held constant over each window
//! `[k * sample_dt, (k + 1) * sample_dt)` and is derived from `(seed, k)`
//! alone: a ChaCha8 generator keyed by `seed` is switched to stream `k` and
//! the first standard-normal variate is taken. Sampling therefore consumes
//! no shared RNG state, and zero-noise segments never touch the generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SAMPLE_DT: f64 = 0.5;
pub const PAPER_HORIZON: f64 = 400.0;

/// Salt mixed into the disturbance seed so the r and d noise differ.
const D_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("time {t} outside schedule domain [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },
    #[error("invalid segment [{t_start}, {t_end}]: {reason}")]
    BadSegment { t_start: f64, t_end: f64, reason: &'static str },
    #[error("segments are not contiguous at t = {0}")]
    Gap(f64),
    #[error("schedule has no segments")]
    Empty,
    #[error("sample_dt must be positive, got {0}")]
    BadSampleDt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub base: f64,
    #[serde(default)]
    pub noise_std: f64,
}

impl Segment {
    pub fn constant(t_start: f64, t_end: f64, base: f64) -> Self {
        Segment { t_start, t_end, base, noise_std: 0.0 }
    }

    pub fn noisy(t_start: f64, t_end: f64, base: f64, noise_std: f64) -> Self {
        Segment { t_start, t_end, base, noise_std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    segments: Vec<Segment>,
    seed: u64,
    sample_dt: f64,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>, seed: u64, sample_dt: f64) -> Result<Self, SignalError> {
        if segments.is_empty() {
            return Err(SignalError::Empty);
        }
        if !(sample_dt > 0.0 && sample_dt.is_finite()) {
            return Err(SignalError::BadSampleDt(sample_dt));
        }
        for seg in &segments {
            let bad = |reason| SignalError::BadSegment { t_start: seg.t_start, t_end: seg.t_end, reason };
            if !(seg.t_start.is_finite() && seg.t_end.is_finite()) || seg.t_start >= seg.t_end {
                return Err(bad("requires finite t_start < t_end"));
            }
            if !seg.base.is_finite() {
                return Err(bad("base must be finite"));
            }
            if !(seg.noise_std >= 0.0 && seg.noise_std.is_finite()) {
                return Err(bad("noise_std must be finite and non-negative"));
            }
        }
        for pair in segments.windows(2) {
            if pair[0].t_end != pair[1].t_start {
                return Err(SignalError::Gap(pair[0].t_end));
            }
        }
        Ok(Schedule { segments, seed, sample_dt })
    }

    /// A single noise-free level on `[0, t_end]`.
    pub fn constant(value: f64, t_end: f64) -> Result<Self, SignalError> {
        Schedule::new(vec![Segment::constant(0.0, t_end, value)], 0, DEFAULT_SAMPLE_DT)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_dt(&self) -> f64 {
        self.sample_dt
    }

    pub fn start(&self) -> f64 {
        self.segments[0].t_start
    }

    pub fn end(&self) -> f64 {
        self.segments[self.segments.len() - 1].t_end
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Segments are half-open `[t_start, t_end)` except the last, which
    /// includes its end point.
    pub fn sample(&self, t: f64) -> Result<f64, SignalError> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(SignalError::OutOfDomain { t, start, end });
        }
        let idx = self.segments.partition_point(|s| s.t_end <= t).min(self.segments.len() - 1);
        let seg = &self.segments[idx];
        if seg.noise_std == 0.0 {
            return Ok(seg.base);
        }
        let window = (t / self.sample_dt).floor() as u64;
        Ok(seg.base + seg.noise_std * standard_normal(self.seed, window))
    }
}

/// Noise seed for the named input: `d` is salted, every other input uses
/// `seed` as is.
pub fn input_seed(name: &str, seed: u64) -> u64 {
    if name == "d" {
        seed ^ D_SEED_SALT
    } else {
        seed
    }
}

/// Standard-normal draw for hold window `window` of stream family `seed`.
pub fn standard_normal(seed: u64, window: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(window);
    rng.sample(StandardNormal)
}

/// Reference input for the step-like experiment: 11 until t=50, an
/// amplitude-5 noisy pulse on [50,150], back to 11 until t=300, a noisy
/// approach to 13.75 on [300,350], then 13.75.
pub fn paper_schedule_r(seed: u64) -> Schedule {
    Schedule::new(
        vec![
            Segment::constant(0.0, 50.0, 11.0),
            Segment::noisy(50.0, 150.0, 16.0, 1.0),
            Segment::constant(150.0, 300.0, 11.0),
            Segment::noisy(300.0, 350.0, 13.75, 1.0),
            Segment::constant(350.0, PAPER_HORIZON, 13.75),
        ],
        seed,
        DEFAULT_SAMPLE_DT,
    )
    .expect("built-in schedule is valid")
}

/// Disturbance for the step-like experiment: 0.01 until t=200, noisy levels
/// 2.5 on [200,300] and 5 on [300,350], then 5.
pub fn paper_schedule_d(seed: u64) -> Schedule {
    Schedule::new(
        vec![
            Segment::constant(0.0, 200.0, 0.01),
            Segment::noisy(200.0, 300.0, 2.5, 1.0),
            Segment::noisy(300.0, 350.0, 5.0, 1.0),
            Segment::constant(350.0, PAPER_HORIZON, 5.0),
        ],
        input_seed("d", seed),
        DEFAULT_SAMPLE_DT,
    )
    .expect("built-in schedule is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_levels() {
        let r = paper_schedule_r(7);
        let d = paper_schedule_d(7);
        assert_eq!(r.sample(0.0).unwrap(), 11.0);
        assert_eq!(r.sample(25.0).unwrap(), 11.0);
        assert_eq!(r.sample(375.0).unwrap(), 13.75);
        assert_eq!(r.sample(400.0).unwrap(), 13.75);
        assert_eq!(d.sample(25.0).unwrap(), 0.01);
        assert_eq!(d.sample(399.0).unwrap(), 5.0);
        assert_eq!(r.segments()[1].base, 16.0);
        assert_ne!(r.sample(100.0).unwrap(), 16.0);
    }

    #[test]
    fn domain_is_enforced() {
        let r = paper_schedule_r(1);
        assert!(matches!(r.sample(-0.1), Err(SignalError::OutOfDomain { .. })));
        assert!(matches!(r.sample(400.5), Err(SignalError::OutOfDomain { .. })));
        assert!(r.sample(f64::NAN).is_err());
    }

    #[test]
    fn construction_errors() {
        assert_eq!(Schedule::new(vec![], 0, 0.5), Err(SignalError::Empty));
        assert!(matches!(
            Schedule::new(vec![Segment::constant(0.0, 1.0, 1.0), Segment::constant(1.5, 2.0, 1.0)], 0, 0.5),
            Err(SignalError::Gap(_))
        ));
        assert!(Schedule::new(vec![Segment::constant(1.0, 1.0, 1.0)], 0, 0.5).is_err());
        assert!(Schedule::new(vec![Segment::noisy(0.0, 1.0, 1.0, -1.0)], 0, 0.5).is_err());
        assert!(Schedule::new(vec![Segment::constant(0.0, 1.0, 1.0)], 0, 0.0).is_err());
    }

    #[test]
    fn noise_free_is_seed_independent() {
        let segs = vec![Segment::constant(0.0, 10.0, 2.0), Segment::constant(10.0, 20.0, -1.0)];
        let a = Schedule::new(segs.clone(), 1, 0.5).unwrap();
        let b = Schedule::new(segs, 99, 0.5).unwrap();
        for i in 0..=200 {
            let t = i as f64 * 0.1;
            assert_eq!(a.sample(t).unwrap(), b.sample(t).unwrap());
        }
        assert_eq!(a.sample(9.999).unwrap(), 2.0);
        assert_eq!(a.sample(10.0).unwrap(), -1.0);
    }

    #[test]
    fn noise_is_held_and_reproducible() {
        let sch = Schedule::new(vec![Segment::noisy(0.0, 10.0, 3.0, 1.0)], 42, 0.5).unwrap();
        assert_eq!(sch.sample(1.1).unwrap(), sch.sample(1.1).unwrap());
        assert_eq!(sch.sample(1.0).unwrap(), sch.sample(1.49).unwrap());
        assert_ne!(sch.sample(1.0).unwrap(), sch.sample(1.5).unwrap());
        let other = sch.clone().with_seed(43);
        assert_ne!(sch.sample(1.0).unwrap(), other.sample(1.0).unwrap());
    }

    #[test]
    fn held_noise_has_unit_normal_moments() {
        let n = 100_000u64;
        let base = 3.0;
        let sum: f64 = (0..n).map(|k| base + standard_normal(5, k)).sum();
        let mean = sum / n as f64;
        assert!((mean - base).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        let var: f64 = (0..n).map(|k| standard_normal(5, k).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
