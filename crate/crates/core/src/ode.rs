//! Fixed-step explicit integration.

use nalgebra::SMatrix;

use crate::error::{Error, Result};

/// A state that a fixed-step integrator can advance.
pub trait OdeState: Clone {
    /// Returns `self + h * k`.
    fn add_scaled(&self, h: f64, k: &Self) -> Self;
    fn is_finite(&self) -> bool;
}

impl OdeState for f64 {
    fn add_scaled(&self, h: f64, k: &Self) -> Self {
        self + h * k
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl<const R: usize, const C: usize> OdeState for SMatrix<f64, R, C> {
    fn add_scaled(&self, h: f64, k: &Self) -> Self {
        self + k * h
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// One classical Runge–Kutta step of size `h` from `(t, x)`.
pub fn rk4_step<S, F>(field: &mut F, t: f64, x: &S, h: f64) -> S
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
{
    let k1 = field(t, x);
    let k2 = field(t + 0.5 * h, &x.add_scaled(0.5 * h, &k1));
    let k3 = field(t + 0.5 * h, &x.add_scaled(0.5 * h, &k2));
    let k4 = field(t + h, &x.add_scaled(h, &k3));
    x.add_scaled(h / 6.0, &k1)
        .add_scaled(h / 3.0, &k2)
        .add_scaled(h / 3.0, &k3)
        .add_scaled(h / 6.0, &k4)
}

/// Integrates `dx/dt = field(t, x)` from `t0` to `t1` with `steps` equal RK4 steps.
pub fn integrate_rk4<S, F>(mut field: F, x0: S, t0: f64, t1: f64, steps: usize) -> Result<S>
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
{
    if steps == 0 {
        return Err(Error::InvalidArgument("RK4 needs at least one step".into()));
    }
    if !(t1 > t0) {
        return Err(Error::InvalidArgument(format!(
            "RK4 interval [{t0}, {t1}] is empty"
        )));
    }
    let h = (t1 - t0) / steps as f64;
    let mut x = x0;
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        x = rk4_step(&mut field, t, &x, h);
        if !x.is_finite() {
            return Err(Error::Integration { step });
        }
    }
    Ok(x)
}
