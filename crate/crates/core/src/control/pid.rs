use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tf::SecondOrderTF;

/// Derivative filter coefficient: the filter time constant is `τd / N_f`.
pub const DERIVATIVE_FILTER: f64 = 10.0;

/// Parallel-form PID gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    /// (cm³/s)/cm.
    pub kp: f64,
    pub tau_i: f64,
    pub tau_d: f64,
    /// Closed-loop time constant used for tuning.
    pub tc: f64,
    pub u_bias: f64,
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_i > 0.0)
            || !(self.tau_d >= 0.0)
            || !self.kp.is_finite()
            || !self.u_bias.is_finite()
        {
            return Err(Error::InvalidArgument(format!(
                "invalid PID gains {self:?}"
            )));
        }
        Ok(())
    }

    /// Back-calculation tracking time `√(τi τd)`, or `τi` without derivative
    /// action.
    pub fn tracking_time(&self) -> f64 {
        if self.tau_d > 0.0 {
            (self.tau_i * self.tau_d).sqrt()
        } else {
            self.tau_i
        }
    }

    pub fn with_bias(self, u_bias: f64) -> Self {
        Self { u_bias, ..self }
    }
}

/// IMC rules for `k / ((τ₁s + 1)(τ₂s + 1))`, converted from series to parallel
/// form. The bias is left at zero.
pub fn imc_tune(tf: &SecondOrderTF, tc: f64) -> Result<PidGains> {
    if !(tc > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "closed-loop time constant must be positive, got {tc}"
        )));
    }
    if tf.k == 0.0 || !tf.k.is_finite() {
        return Err(Error::Untunable(format!("zero static gain in {tf:?}")));
    }
    let kp_series = tf.tau1 / (tf.k * tc);
    let tau_i_series = tf.tau1.min(4.0 * tc);
    let tau_d_series = tf.tau2;
    let alpha = 1.0 + tau_d_series / tau_i_series;
    Ok(PidGains {
        kp: kp_series * alpha,
        tau_i: tau_i_series * alpha,
        tau_d: tau_d_series / alpha,
        tc,
        u_bias: 0.0,
    })
}

/// Internal state of one PID loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidLoopState {
    pub integral: f64,
    /// Filtered derivative term.
    pub derivative: f64,
    pub prev_y: Option<f64>,
    pub prev_error: f64,
    /// `u_sat − u_raw` of the previous step.
    pub windup: f64,
}

/// One sample of the discrete PID: proportional on error, trapezoidal
/// integral with back-calculation, filtered derivative on the measurement.
pub fn pid_step(
    state: &PidLoopState,
    y: f64,
    zbar: f64,
    gains: &PidGains,
    ts: f64,
    bounds: (f64, f64),
) -> (f64, PidLoopState) {
    let e = zbar - y;
    let prev_error = if state.prev_y.is_some() {
        state.prev_error
    } else {
        e
    };
    let integral = state.integral
        + gains.kp * ts / gains.tau_i * 0.5 * (e + prev_error)
        + ts / gains.tracking_time() * state.windup;

    let derivative = match state.prev_y {
        Some(prev) if gains.tau_d > 0.0 => {
            let tf = gains.tau_d / DERIVATIVE_FILTER;
            (tf * state.derivative - gains.kp * gains.tau_d * (y - prev)) / (tf + ts)
        }
        _ => 0.0,
    };

    let u_raw = gains.u_bias + gains.kp * e + integral + derivative;
    let u = u_raw.clamp(bounds.0, bounds.1);
    let next = PidLoopState {
        integral,
        derivative,
        prev_y: Some(y),
        prev_error: e,
        windup: u - u_raw,
    };
    (u, next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_gains() -> PidGains {
        imc_tune(&SecondOrderTF::new(1.0, 100.0, 10.0).unwrap(), 50.0).unwrap()
    }

    #[test]
    fn hand_case() {
        let g = hand_gains();
        assert!((g.kp - 2.2).abs() < 1e-12);
        assert!((g.tau_i - 110.0).abs() < 1e-12);
        assert!((g.tau_d - 10.0 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn first_order_limit_needs_no_conversion() {
        let tf = SecondOrderTF {
            k: 2.0,
            tau1: 80.0,
            tau2: 0.0,
        };
        let g = imc_tune(&tf, 50.0).unwrap();
        assert_eq!((g.kp, g.tau_i, g.tau_d), (80.0 / 100.0, 80.0, 0.0));
        assert_eq!(g.tracking_time(), g.tau_i);
    }

    #[test]
    fn integral_time_is_capped() {
        let tf = SecondOrderTF {
            k: 1.0,
            tau1: 1000.0,
            tau2: 0.0,
        };
        assert_eq!(imc_tune(&tf, 50.0).unwrap().tau_i, 200.0);
    }

    #[test]
    fn zero_gain_is_untunable() {
        let tf = SecondOrderTF {
            k: 0.0,
            tau1: 10.0,
            tau2: 1.0,
        };
        assert!(matches!(imc_tune(&tf, 50.0), Err(Error::Untunable(_))));
        assert!(imc_tune(&SecondOrderTF::new(1.0, 10.0, 1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn zero_error_gives_bias() {
        let g = hand_gains().with_bias(300.0);
        let (u, _) = pid_step(
            &PidLoopState::default(),
            20.0,
            20.0,
            &g,
            5.0,
            (160.0, 350.0),
        );
        assert_eq!(u, 300.0);
    }

    #[test]
    fn windup_is_bounded() {
        let g = hand_gains().with_bias(300.0);
        let mut s = PidLoopState::default();
        let mut max_integral: f64 = 0.0;
        for _ in 0..10_000 {
            let (u, next) = pid_step(&s, 0.0, 50.0, &g, 5.0, (160.0, 350.0));
            assert_eq!(u, 350.0);
            s = next;
            max_integral = max_integral.max(s.integral.abs());
        }
        assert!(
            s.integral.is_finite() && max_integral < 1e3,
            "{max_integral}"
        );
    }

    #[test]
    fn setpoint_step_has_no_derivative_kick() {
        let g = hand_gains().with_bias(300.0);
        let ts = 5.0;
        let mut s = PidLoopState::default();
        for _ in 0..5 {
            s = pid_step(&s, 20.0, 20.0, &g, ts, (0.0, 1000.0)).1;
        }
        let (u_before, _) = pid_step(&s, 20.0, 20.0, &g, ts, (0.0, 1000.0));
        let (u_after, next) = pid_step(&s, 20.0, 21.0, &g, ts, (0.0, 1000.0));
        assert_eq!(next.derivative, 0.0);
        let p_plus_i = g.kp * 1.0 + g.kp * ts / g.tau_i * 0.5;
        assert!(((u_after - u_before) - p_plus_i).abs() < 1e-12);
    }

    #[test]
    fn derivative_opposes_rising_measurement() {
        let g = hand_gains();
        let s = pid_step(&PidLoopState::default(), 10.0, 10.0, &g, 5.0, (-1e9, 1e9)).1;
        let (_, next) = pid_step(&s, 10.5, 10.0, &g, 5.0, (-1e9, 1e9));
        assert!(next.derivative < 0.0);
    }
}
