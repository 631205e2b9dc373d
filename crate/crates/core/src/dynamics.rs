//! Nonlinear mass balances of the four-tank process, their steady states and
//! their linearization.
//!
//! Tanks 1 and 2 are the bottom tanks. Pump 1 feeds tank 1 (fraction γ₁) and
//! tank 4 (fraction 1−γ₁); pump 2 feeds tank 2 (γ₂) and tank 3 (1−γ₂). Tank 3
//! drains into tank 1 and tank 4 drains into tank 2.

use nalgebra::{Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Pump flows, cm³/s.
pub type Input = Vector2<f64>;
/// Unknown inflow per tank, cm³/s.
pub type Disturbance = Vector4<f64>;
/// Water mass per tank, g.
pub type Mass = Vector4<f64>;
/// Water level per tank, cm.
pub type Levels = Vector4<f64>;

/// Tank masses at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub m: Mass,
    pub t: f64,
}

impl PlantState {
    pub fn new(m: Mass, t: f64) -> Self {
        Self { m, t }
    }
}

/// Outflow through the bottom orifice of a tank holding `m` grams.
pub fn outflow(m: f64, a: f64, area: f64, params: &ModelParams) -> Result<f64> {
    if !m.is_finite() || m < 0.0 {
        return Err(Error::Domain(format!(
            "tank mass {m} g must be finite and non-negative"
        )));
    }
    Ok(orifice_flow(m, a, area, params))
}

#[inline]
fn orifice_flow(m: f64, a: f64, area: f64, params: &ModelParams) -> f64 {
    let h = m.max(0.0) / (params.rho * area);
    a * (2.0 * params.g_a * h).sqrt()
}

/// `d q_out / d m` for a tank holding `m` grams; zero on the clamped side.
#[inline]
fn orifice_slope(m: f64, a: f64, area: f64, params: &ModelParams) -> f64 {
    if m <= 0.0 {
        0.0
    } else {
        a * (params.g_a / (2.0 * params.rho * area * m)).sqrt()
    }
}

/// Mass rate of change without input validation. Negative masses are clamped to zero.
#[inline]
pub(crate) fn mass_rate(m: &Mass, u: &Input, d: &Disturbance, p: &ModelParams) -> Mass {
    let q: [f64; 4] =
        std::array::from_fn(|i| orifice_flow(m[i], p.outlet_area[i], p.tank_area[i], p));
    let [g1, g2] = p.gamma;
    let q_in = Vector4::new(
        g1 * u[0] + d[0] + q[2],
        g2 * u[1] + d[1] + q[3],
        (1.0 - g2) * u[1] + d[2],
        (1.0 - g1) * u[0] + d[3],
    );
    (q_in - Vector4::from(q)) * p.rho
}

/// Right-hand side of the mass balances, g/s.
pub fn drift(m: &Mass, u: &Input, d: &Disturbance, params: &ModelParams) -> Result<Mass> {
    if !(m.iter().all(|v| v.is_finite())
        && u.iter().all(|v| v.is_finite())
        && d.iter().all(|v| v.is_finite()))
    {
        return Err(Error::Domain(
            "non-finite state, input or disturbance".into(),
        ));
    }
    Ok(mass_rate(m, u, d, params))
}

/// `∂f/∂m`, consistent with the clamp in [`drift`].
pub(crate) fn state_jacobian(m: &Mass, p: &ModelParams) -> Matrix4<f64> {
    let s: [f64; 4] =
        std::array::from_fn(|i| p.rho * orifice_slope(m[i], p.outlet_area[i], p.tank_area[i], p));
    let mut a = Matrix4::from_diagonal(&(-Vector4::from(s)));
    a[(0, 2)] = s[2];
    a[(1, 3)] = s[3];
    a
}

pub(crate) fn input_jacobian(p: &ModelParams) -> Matrix4x2<f64> {
    let [g1, g2] = p.gamma;
    Matrix4x2::new(g1, 0.0, 0.0, g2, 0.0, 1.0 - g2, 1.0 - g1, 0.0) * p.rho
}

pub(crate) fn disturbance_jacobian(p: &ModelParams) -> Matrix4<f64> {
    Matrix4::identity() * p.rho
}

/// `C(θ)`: masses to levels.
pub fn output_matrix(p: &ModelParams) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::from(p.tank_area.map(|area| 1.0 / (p.rho * area))))
}

/// `C_z(θ)`: masses to bottom-tank levels.
pub fn cv_matrix(p: &ModelParams) -> Matrix2x4<f64> {
    output_matrix(p).fixed_rows::<2>(0).into_owned()
}

/// Noise-free levels of all four tanks, cm.
pub fn measure(m: &Mass, params: &ModelParams) -> Levels {
    output_matrix(params) * m
}

/// Levels of the two bottom tanks, cm.
pub fn cv_output(m: &Mass, params: &ModelParams) -> Vector2<f64> {
    cv_matrix(params) * m
}

/// Masses corresponding to given levels.
pub fn levels_to_mass(h: &Levels, params: &ModelParams) -> Mass {
    Vector4::from(std::array::from_fn(|i| {
        h[i] * params.rho * params.tank_area[i]
    }))
}

/// Equilibrium masses for constant `(u, d)`, solved in closed form from the
/// top tanks down.
pub fn steady_state(u: &Input, d: &Disturbance, params: &ModelParams) -> Result<PlantState> {
    params.validate()?;
    let p = params;
    let [g1, g2] = p.gamma;
    let level_for = |tank: usize, inflow: f64| -> Result<f64> {
        if !(inflow > 0.0) {
            return Err(Error::NoSteadyState {
                tank: tank + 1,
                inflow,
            });
        }
        let v = inflow / p.outlet_area[tank];
        Ok(v * v / (2.0 * p.g_a))
    };
    let q3 = (1.0 - g2) * u[1] + d[2];
    let q4 = (1.0 - g1) * u[0] + d[3];
    let h3 = level_for(2, q3)?;
    let h4 = level_for(3, q4)?;
    // at equilibrium the top tanks pass their whole inflow downwards
    let h1 = level_for(0, g1 * u[0] + d[0] + q3)?;
    let h2 = level_for(1, g2 * u[1] + d[1] + q4)?;
    Ok(PlantState::new(
        levels_to_mass(&Vector4::new(h1, h2, h3, h4), p),
        0.0,
    ))
}

/// Jacobians of the four-tank model at an operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub x_s: Mass,
    pub u_s: Input,
    pub d_s: Disturbance,
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
    pub e: Matrix4<f64>,
    pub c: Matrix4<f64>,
    pub cz: Matrix2x4<f64>,
}

impl LinearModel {
    /// Levels at the operating point.
    pub fn y_s(&self) -> Levels {
        self.c * self.x_s
    }

    pub fn z_s(&self) -> Vector2<f64> {
        self.cz * self.x_s
    }

    /// Linearization at the steady state of `(u_s, d_s)`.
    pub fn at_steady_state(u_s: &Input, d_s: &Disturbance, params: &ModelParams) -> Result<Self> {
        let x_s = steady_state(u_s, d_s, params)?.m;
        linearize(&x_s, u_s, d_s, params)
    }
}

/// Analytic Taylor linearization of the model at `(x_s, u_s, d_s)`.
pub fn linearize(
    x_s: &Mass,
    u_s: &Input,
    d_s: &Disturbance,
    params: &ModelParams,
) -> Result<LinearModel> {
    params.validate()?;
    if let Some(i) = x_s.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::SingularLinearization { tank: i + 1 });
    }
    Ok(LinearModel {
        x_s: *x_s,
        u_s: *u_s,
        d_s: *d_s,
        a: state_jacobian(x_s, params),
        b: input_jacobian(params),
        e: disturbance_jacobian(params),
        c: output_matrix(params),
        cz: cv_matrix(params),
    })
}

/// One shooting interval: RK4 over `dt` in `substeps` steps together with the
/// exact derivatives of the discrete map with respect to the initial masses and
/// the (held) input.
pub fn propagate_with_sensitivities(
    m0: &Mass,
    u: &Input,
    d: &Disturbance,
    params: &ModelParams,
    dt: f64,
    substeps: usize,
) -> (Mass, Matrix4<f64>, Matrix4x2<f64>) {
    let h = dt / substeps as f64;
    let b = input_jacobian(params);
    let mut m = *m0;
    let mut sx = Matrix4::identity();
    let mut su = Matrix4x2::zeros();
    for _ in 0..substeps {
        let stage = |m: &Mass, sx: &Matrix4<f64>, su: &Matrix4x2<f64>| {
            let a = state_jacobian(m, params);
            (mass_rate(m, u, d, params), a * sx, a * su + b)
        };
        let (k1, k1x, k1u) = stage(&m, &sx, &su);
        let (k2, k2x, k2u) = stage(
            &(m + k1 * (0.5 * h)),
            &(sx + k1x * (0.5 * h)),
            &(su + k1u * (0.5 * h)),
        );
        let (k3, k3x, k3u) = stage(
            &(m + k2 * (0.5 * h)),
            &(sx + k2x * (0.5 * h)),
            &(su + k2u * (0.5 * h)),
        );
        let (k4, k4x, k4u) = stage(&(m + k3 * h), &(sx + k3x * h), &(su + k3u * h));
        m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        sx += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        su += (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);
    }
    (m, sx, su)
}

/// Deterministic RK4 propagation of the masses over `dt`.
pub fn propagate(
    m0: &Mass,
    u: &Input,
    d: &Disturbance,
    params: &ModelParams,
    dt: f64,
    substeps: usize,
) -> Result<Mass> {
    crate::ode::integrate_rk4(
        |_, m: &Mass| mass_rate(m, u, d, params),
        *m0,
        0.0,
        dt,
        substeps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const H10: f64 = 3801.33;

    #[test]
    fn empty_tank_has_no_outflow() {
        let p = ModelParams::nominal();
        assert_eq!(outflow(0.0, 1.131, 380.133, &p).unwrap(), 0.0);
        assert_eq!(outflow(0.0, 7.0, 12.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn outflow_at_ten_centimetres() {
        let p = ModelParams::nominal();
        let q = outflow(H10, 1.131, 380.133, &p).unwrap();
        assert!((q - 1.131 * (2.0f64 * 981.0 * 10.0).sqrt()).abs() < 1e-9);
        assert!((q - 158.42).abs() < 5e-3);
    }

    #[test]
    fn outflow_at_nominal_top_tank_level() {
        let p = ModelParams::nominal();
        let h3 = (0.65f64 * 300.0 / 1.131).powi(2) / (2.0 * 981.0);
        let q = outflow(h3 * 380.133, 1.131, 380.133, &p).unwrap();
        assert!((q - 195.0).abs() < 1e-9);
        assert!((h3 - 15.15).abs() < 5e-3);
    }

    #[test]
    fn negative_mass_is_a_domain_error() {
        let p = ModelParams::nominal();
        assert!(matches!(outflow(-1.0, 1.0, 1.0, &p), Err(Error::Domain(_))));
        assert!(outflow(f64::NAN, 1.0, 1.0, &p).is_err());
    }

    #[test]
    fn drift_of_empty_tanks() {
        let p = ModelParams::nominal();
        let f = drift(
            &Mass::zeros(),
            &Input::new(300.0, 300.0),
            &Disturbance::zeros(),
            &p,
        )
        .unwrap();
        let expected = Vector4::new(105.0, 105.0, 195.0, 195.0);
        assert!((f - expected).amax() < 1e-12);
    }

    #[test]
    fn drift_is_linear_in_disturbance() {
        let p = ModelParams::estimated();
        let m = Vector4::new(5000.0, 4000.0, 3000.0, 2000.0);
        let u = Input::new(250.0, 280.0);
        let f0 = drift(&m, &u, &Disturbance::zeros(), &p).unwrap();
        let f1 = drift(&m, &u, &Disturbance::new(10.0, 0.0, 0.0, 0.0), &p).unwrap();
        assert!(((f1 - f0) - Vector4::new(10.0, 0.0, 0.0, 0.0)).amax() < 1e-10);
    }

    #[test]
    fn drift_rejects_non_finite() {
        let p = ModelParams::nominal();
        let m = Vector4::new(1.0, f64::NAN, 1.0, 1.0);
        assert!(drift(&m, &Input::zeros(), &Disturbance::zeros(), &p).is_err());
    }

    #[test]
    fn measure_and_cv_output() {
        let p = ModelParams::nominal();
        assert_eq!(measure(&Mass::zeros(), &p), Levels::zeros());
        let m = Vector4::new(H10, 1000.0, 2000.0, 3000.0);
        let y = measure(&m, &p);
        assert!((y[0] - 10.0).abs() < 1e-12);
        let z = cv_output(&m, &p);
        assert_eq!(z, Vector2::new(y[0], y[1]));
        assert_eq!(z, cv_matrix(&p) * m);
    }

    #[test]
    fn nominal_steady_state_levels() {
        let p = ModelParams::nominal();
        let u = Input::new(300.0, 300.0);
        let x = steady_state(&u, &Disturbance::zeros(), &p).unwrap();
        let h = measure(&x.m, &p);
        // independent cascade: top tanks pass 0.65 u, bottom tanks receive u in total
        let top = (0.65f64 * 300.0 / 1.131).powi(2) / 1962.0;
        let bottom = (300.0f64 / 1.131).powi(2) / 1962.0;
        for (i, want) in [bottom, bottom, top, top].into_iter().enumerate() {
            assert!((h[i] - want).abs() < 1e-9);
        }
        assert!((h[0] - 35.86).abs() < 0.01 && (h[2] - 15.15).abs() < 0.01);
        let f = drift(&x.m, &u, &Disturbance::zeros(), &p).unwrap();
        assert!(f.amax() < 1e-10);
    }

    #[test]
    fn zero_inflow_has_no_steady_state() {
        let p = ModelParams::nominal();
        let err = steady_state(&Input::zeros(), &Disturbance::zeros(), &p).unwrap_err();
        assert!(matches!(err, Error::NoSteadyState { tank: 3, .. }));
    }

    #[test]
    fn doubling_outlets_quarters_levels() {
        let p = ModelParams::estimated();
        let mut p2 = p;
        p2.outlet_area = p.outlet_area.map(|a| 2.0 * a);
        let u = Input::new(270.0, 310.0);
        let h = measure(&steady_state(&u, &Disturbance::zeros(), &p).unwrap().m, &p);
        let h2 = measure(
            &steady_state(&u, &Disturbance::zeros(), &p2).unwrap().m,
            &p2,
        );
        for i in 0..4 {
            assert!((h2[i] - h[i] / 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn input_jacobian_structure() {
        let p = ModelParams::estimated();
        let lin =
            LinearModel::at_steady_state(&Input::new(300.0, 300.0), &Disturbance::zeros(), &p)
                .unwrap();
        let [g1, g2] = p.gamma;
        let expected = Matrix4x2::new(g1, 0.0, 0.0, g2, 0.0, 1.0 - g2, 1.0 - g1, 0.0);
        assert_eq!(lin.b, expected);
        assert_eq!(lin.e, Matrix4::identity());
        assert_eq!(lin.cz, lin.c.fixed_rows::<2>(0));
    }

    #[test]
    fn sparsity_and_stability_of_a() {
        let p = ModelParams::estimated();
        let lin =
            LinearModel::at_steady_state(&Input::new(300.0, 300.0), &Disturbance::zeros(), &p)
                .unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let allowed = r == c || (r, c) == (0, 2) || (r, c) == (1, 3);
                if !allowed {
                    assert_eq!(lin.a[(r, c)], 0.0);
                }
            }
        }
        let eig = lin.a.complex_eigenvalues();
        for l in eig.iter() {
            assert!(l.im.abs() < 1e-14 && l.re < 0.0);
        }
    }

    #[test]
    fn empty_tank_cannot_be_linearized() {
        let p = ModelParams::nominal();
        let m = Vector4::new(1.0, 0.0, 1.0, 1.0);
        let err = linearize(&m, &Input::zeros(), &Disturbance::zeros(), &p).unwrap_err();
        assert!(matches!(err, Error::SingularLinearization { tank: 2 }));
    }

    #[test]
    fn steady_state_is_invariant_under_rk4() {
        let p = ModelParams::estimated();
        let u = Input::new(300.0, 300.0);
        let x = steady_state(&u, &Disturbance::zeros(), &p).unwrap();
        let m = propagate(&x.m, &u, &Disturbance::zeros(), &p, 500.0, 100).unwrap();
        assert!((m - x.m).amax() < 1e-8);
    }

    #[test]
    fn shooting_sensitivities_match_finite_differences() {
        let p = ModelParams::estimated();
        let m0 = Vector4::new(12000.0, 11000.0, 5000.0, 4500.0);
        let u = Input::new(260.0, 310.0);
        let d = Disturbance::new(3.0, -2.0, 0.0, 1.0);
        let (m1, sx, su) = propagate_with_sensitivities(&m0, &u, &d, &p, 5.0, 10);
        let plain = propagate(&m0, &u, &d, &p, 5.0, 10).unwrap();
        assert!((m1 - plain).amax() < 1e-9);
        for j in 0..4 {
            let h = 1e-3 * m0[j];
            let mut mp = m0;
            mp[j] += h;
            let mut mm = m0;
            mm[j] -= h;
            let fd = (propagate(&mp, &u, &d, &p, 5.0, 10).unwrap()
                - propagate(&mm, &u, &d, &p, 5.0, 10).unwrap())
                / (2.0 * h);
            assert!((fd - sx.column(j)).amax() < 1e-6, "state column {j}");
        }
        for j in 0..2 {
            let h = 1e-2;
            let mut up = u;
            up[j] += h;
            let mut um = u;
            um[j] -= h;
            let fd = (propagate(&m0, &up, &d, &p, 5.0, 10).unwrap()
                - propagate(&m0, &um, &d, &p, 5.0, 10).unwrap())
                / (2.0 * h);
            assert!((fd - su.column(j)).amax() < 1e-6, "input column {j}");
        }
    }

    fn central_difference_check(m: Mass, u: Input, d: Disturbance, p: &ModelParams) {
        let lin = linearize(&m, &u, &d, p).unwrap();
        let f = |m: &Mass, u: &Input, d: &Disturbance| drift(m, u, d, p).unwrap();
        let close = |fd: f64, an: f64| (fd - an).abs() <= 1e-6 * an.abs().max(1e-3);
        for j in 0..4 {
            let h = 1e-4 * (1.0 + m[j].abs());
            let (mut mp, mut mm) = (m, m);
            mp[j] += h;
            mm[j] -= h;
            let col = (f(&mp, &u, &d) - f(&mm, &u, &d)) / (2.0 * h);
            for i in 0..4 {
                assert!(
                    close(col[i], lin.a[(i, j)]),
                    "A[{i},{j}]: {} vs {}",
                    col[i],
                    lin.a[(i, j)]
                );
            }
            let (mut dp, mut dm) = (d, d);
            dp[j] += 1e-4;
            dm[j] -= 1e-4;
            let col = (f(&m, &u, &dp) - f(&m, &u, &dm)) / 2e-4;
            for i in 0..4 {
                assert!(close(col[i], lin.e[(i, j)]));
            }
        }
        for j in 0..2 {
            let h = 1e-4 * (1.0 + u[j].abs());
            let (mut up, mut um) = (u, u);
            up[j] += h;
            um[j] -= h;
            let col = (f(&m, &up, &d) - f(&m, &um, &d)) / (2.0 * h);
            for i in 0..4 {
                assert!(close(col[i], lin.b[(i, j)]));
            }
        }
    }

    proptest! {
        #[test]
        fn jacobians_match_central_differences(
            levels in proptest::array::uniform4(1.0f64..60.0),
            u in proptest::array::uniform2(160.0f64..350.0),
            d in proptest::array::uniform4(-20.0f64..20.0),
        ) {
            let p = ModelParams::estimated();
            let m = levels_to_mass(&Vector4::from(levels), &p);
            central_difference_check(m, Input::from(u), Disturbance::from(d), &p);
        }

        #[test]
        fn drift_vanishes_at_steady_state(
            u in proptest::array::uniform2(20.0f64..400.0),
            a in proptest::array::uniform4(0.5f64..2.0),
            area in proptest::array::uniform4(200.0f64..600.0),
            gamma in proptest::array::uniform2(0.1f64..0.9),
        ) {
            let p = ModelParams { outlet_area: a, tank_area: area, gamma, ..ModelParams::nominal() };
            let u = Input::from(u);
            let x = steady_state(&u, &Disturbance::zeros(), &p).unwrap();
            let f = drift(&x.m, &u, &Disturbance::zeros(), &p).unwrap();
            prop_assert!(f.amax() < 1e-10);
        }
    }
}
