//! Generated walkers for smoke tests and demos.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::trajdata::SequenceWindow;
use crate::SEQ_LEN;

/// Std of the positional jitter, in meters.
pub const JITTER_STD: f64 = 0.02;
/// Last frame before turners rotate their velocity by 90 degrees.
pub const TURN_FRAME: usize = 10;
/// Frame from which stoppers stand still.
pub const STOP_FRAME: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    ConstVelocity,
    Turn,
    Stop,
}

impl Pattern {
    pub fn name(self) -> &'static str {
        match self {
            Pattern::ConstVelocity => "const-velocity",
            Pattern::Turn => "turn",
            Pattern::Stop => "stop",
        }
    }
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "const-velocity" => Ok(Pattern::ConstVelocity),
            "turn" => Ok(Pattern::Turn),
            "stop" => Ok(Pattern::Stop),
            _ => Err(Error::Config(format!("unknown pattern {s:?}"))),
        }
    }
}

/// Noise-free path of one walker starting at `start` with per-frame velocity `v`.
pub fn clean_path(pattern: Pattern, start: [f64; 2], v: [f64; 2]) -> Vec<[f64; 2]> {
    let mut p = start;
    let mut out = vec![p];
    for t in 1..SEQ_LEN {
        let step = match pattern {
            Pattern::ConstVelocity => v,
            Pattern::Turn if t > TURN_FRAME => [-v[1], v[0]],
            Pattern::Turn => v,
            Pattern::Stop if t > STOP_FRAME => [0.0, 0.0],
            Pattern::Stop => v,
        };
        p = [p[0] + step[0], p[1] + step[1]];
        out.push(p);
    }
    out
}

/// `windows` windows of `agents` walkers each, scene named after the pattern.
///
/// Walkers start inside a 10 m square with speeds of 0.3 to 0.5 m per frame
/// in random directions; every position gets `N(0, 0.02^2)` jitter.
pub fn generate<R: Rng + ?Sized>(
    pattern: Pattern,
    agents: usize,
    windows: usize,
    rng: &mut R,
) -> Result<Vec<SequenceWindow>> {
    if agents == 0 {
        return Err(Error::Parameter("need at least one agent".into()));
    }
    let jitter = Normal::new(0.0, JITTER_STD).expect("valid std");
    let mut out = Vec::with_capacity(windows);
    for _ in 0..windows {
        let paths: Vec<Vec<[f64; 2]>> = (0..agents)
            .map(|_| {
                let start = [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)];
                let speed = rng.random_range(0.3..0.5);
                let heading = rng.random_range(0.0..std::f64::consts::TAU);
                clean_path(pattern, start, [speed * heading.cos(), speed * heading.sin()])
            })
            .collect();
        let mut positions = Vec::with_capacity(SEQ_LEN * agents);
        for t in 0..SEQ_LEN {
            for path in &paths {
                let p = path[t];
                positions.push([p[0] + jitter.sample(rng), p[1] + jitter.sample(rng)]);
            }
        }
        out.push(SequenceWindow::new(pattern.name(), (0..agents as i64).collect(), positions, None)?);
    }
    Ok(out)
}
