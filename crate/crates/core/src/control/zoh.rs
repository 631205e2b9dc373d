use nalgebra::{DMatrix, Matrix4, Matrix4x2};

use crate::dynamics::LinearModel;
use crate::error::{Error, Result};

/// Exact zero-order-hold discretization of `ẋ = A x + B w`: the exponential of
/// `[[A, B], [0, 0]] T_s` holds `A_d` and `B_d` in its top block row.
pub fn zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, ts: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::InvalidArgument("ZOH dimensions do not match".into()));
    }
    if !(ts > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample time must be positive, got {ts}"
        )));
    }
    let mut big = DMatrix::zeros(n + m, n + m);
    big.view_mut((0, 0), (n, n)).copy_from(&(a * ts));
    big.view_mut((0, n), (n, m)).copy_from(&(b * ts));
    let e = big.exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix exponential overflowed".into()));
    }
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// Discrete-time deviation model `x⁺ = A_d x + B_d u + E_d d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub ad: Matrix4<f64>,
    pub bd: Matrix4x2<f64>,
    pub ed: Matrix4<f64>,
    pub ts: f64,
}

pub fn zoh_discretize(model: &LinearModel, ts: f64) -> Result<DiscreteModel> {
    let a = DMatrix::from_column_slice(4, 4, model.a.as_slice());
    let mut inputs = DMatrix::zeros(4, 6);
    inputs.view_mut((0, 0), (4, 2)).copy_from(&model.b);
    inputs.view_mut((0, 2), (4, 4)).copy_from(&model.e);
    let (ad, bed) = zoh(&a, &inputs, ts)?;
    Ok(DiscreteModel {
        ad: Matrix4::from_column_slice(ad.as_slice()),
        bd: Matrix4x2::from_fn(|i, j| bed[(i, j)]),
        ed: Matrix4::from_fn(|i, j| bed[(i, j + 2)]),
        ts,
    })
}
