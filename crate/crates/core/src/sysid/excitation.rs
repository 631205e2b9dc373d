use rand::Rng;

use crate::dynamics::Input;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Random-step excitation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excitation {
    pub ts: f64,
    /// Seconds; the schedule has `duration / ts + 1` entries.
    pub duration: f64,
    /// Inclusive range of hold lengths, in samples.
    pub hold: (usize, usize),
    /// Range of pump flows, cm³/s.
    pub level: (f64, f64),
}

impl Default for Excitation {
    fn default() -> Self {
        Self {
            ts: 5.0,
            duration: 9995.0,
            hold: (20, 60),
            level: (160.0, 350.0),
        }
    }
}

impl Excitation {
    pub fn samples(&self) -> usize {
        (self.duration / self.ts).round() as usize + 1
    }
}

/// Independent piecewise-constant random steps on each pump.
pub fn generate_excitation(seed: u64, cfg: &Excitation) -> Result<Vec<Input>> {
    let (hmin, hmax) = cfg.hold;
    if hmin == 0 || hmin > hmax {
        return Err(Error::InvalidArgument(format!(
            "hold range {:?} is invalid",
            cfg.hold
        )));
    }
    let (lo, hi) = cfg.level;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "level range {:?} is invalid",
            cfg.level
        )));
    }
    if !(cfg.ts > 0.0 && cfg.duration > 0.0) {
        return Err(Error::InvalidArgument(
            "ts and duration must be positive".into(),
        ));
    }
    let n = cfg.samples();
    let mut rng = stream(seed, Stream::Excitation);
    let mut out = vec![Input::zeros(); n];
    for pump in 0..2 {
        let mut k = 0;
        while k < n {
            let hold = rng.random_range(hmin..=hmax);
            let level = if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            };
            for row in out.iter_mut().skip(k).take(hold) {
                row[pump] = level;
            }
            k += hold;
        }
    }
    Ok(out)
}

/// Lengths of the constant runs of `signal`.
pub fn run_lengths(signal: &[f64]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut start = 0;
    for k in 1..=signal.len() {
        if k == signal.len() || signal[k] != signal[start] {
            runs.push(k - start);
            start = k;
        }
    }
    runs
}
