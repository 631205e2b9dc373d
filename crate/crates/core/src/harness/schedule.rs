use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One setpoint change: from `t` on, the CV targets are `zbar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub t: f64,
    pub zbar: [f64; 2],
}

/// Piecewise-constant CV setpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Breakpoint>", into = "Vec<Breakpoint>")]
pub struct SetpointSchedule {
    breakpoints: Vec<Breakpoint>,
}

impl SetpointSchedule {
    pub fn new(breakpoints: Vec<Breakpoint>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::Config("setpoint schedule is empty".into()));
        }
        for b in &breakpoints {
            if !b.t.is_finite() || !b.zbar.iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!(
                    "non-finite setpoint breakpoint {b:?}"
                )));
            }
        }
        if breakpoints.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Config(
                "setpoint times must be strictly increasing".into(),
            ));
        }
        Ok(Self { breakpoints })
    }

    pub fn constant(zbar: Vector2<f64>) -> Self {
        Self {
            breakpoints: vec![Breakpoint {
                t: 0.0,
                zbar: [zbar[0], zbar[1]],
            }],
        }
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    /// Setpoint in force at `t`; the first value also covers earlier times.
    pub fn at(&self, t: f64) -> Vector2<f64> {
        let idx = self.breakpoints.partition_point(|b| b.t <= t + 1e-9);
        let b = &self.breakpoints[idx.saturating_sub(1)];
        Vector2::new(b.zbar[0], b.zbar[1])
    }

    /// Setpoints at `t + k·ts` for `k = 1..=n`.
    pub fn preview(&self, t: f64, ts: f64, n: usize) -> Vec<Vector2<f64>> {
        (1..=n).map(|k| self.at(t + k as f64 * ts)).collect()
    }

    /// True when no breakpoint moves both channels at once.
    pub fn is_staggered(&self) -> bool {
        self.breakpoints.windows(2).all(|w| {
            let changed = (0..2).filter(|&i| w[0].zbar[i] != w[1].zbar[i]).count();
            changed <= 1
        })
    }
}

impl TryFrom<Vec<Breakpoint>> for SetpointSchedule {
    type Error = Error;

    fn try_from(v: Vec<Breakpoint>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SetpointSchedule> for Vec<Breakpoint> {
    fn from(s: SetpointSchedule) -> Self {
        s.breakpoints
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(t: f64, a: f64, b: f64) -> Breakpoint {
        Breakpoint { t, zbar: [a, b] }
    }

    #[test]
    fn lookup_and_preview() {
        let s = SetpointSchedule::new(vec![bp(0.0, 1.0, 2.0), bp(10.0, 3.0, 2.0)]).unwrap();
        assert_eq!(s.at(-5.0), Vector2::new(1.0, 2.0));
        assert_eq!(s.at(9.99), Vector2::new(1.0, 2.0));
        assert_eq!(s.at(10.0), Vector2::new(3.0, 2.0));
        let p = s.preview(0.0, 5.0, 3);
        assert_eq!(
            p,
            vec![
                Vector2::new(1.0, 2.0),
                Vector2::new(3.0, 2.0),
                Vector2::new(3.0, 2.0)
            ]
        );
    }

    #[test]
    fn validation() {
        assert!(SetpointSchedule::new(vec![]).is_err());
        assert!(SetpointSchedule::new(vec![bp(5.0, 1.0, 1.0), bp(5.0, 2.0, 1.0)]).is_err());
        let both = SetpointSchedule::new(vec![bp(0.0, 1.0, 1.0), bp(5.0, 2.0, 2.0)]).unwrap();
        assert!(!both.is_staggered());
    }
}
