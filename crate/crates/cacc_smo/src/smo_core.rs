//! Sliding-mode observer, switching injection and the filtered equivalent output injection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended_system::PartitionedSystem;

/// Boundary-layer half-width. Inside the layer the injection acts as a
/// proportional gain rho/eps; with forward Euler at dt = 1e-3 that gain has to
/// stay below 2/dt, which rules out much thinner layers.
pub const DEFAULT_EPSILON: f64 = 0.015;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverParams {
    pub rho: Vec<f64>,
    /// diagonal of A22^s
    pub a22_s: Vec<f64>,
    /// diagonal of the EOI filter gain
    pub a_nu: Vec<f64>,
    /// boundary-layer half-width
    pub sign_smoothing: f64,
}

impl ObserverParams {
    pub fn validate(&self, p: usize) -> Result<()> {
        for (name, v) in [("rho", &self.rho), ("a22_s", &self.a22_s), ("a_nu", &self.a_nu)] {
            if v.len() != p {
                return Err(Error::InvalidParameter(format!("{name} needs {p} entries")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("observer parameters"));
            }
        }
        if self.rho.iter().any(|&r| r <= 0.0) {
            return Err(Error::InvalidParameter("rho must be > 0".into()));
        }
        if self.a22_s.iter().any(|&a| a >= 0.0) {
            return Err(Error::InvalidParameter("A22^s must be negative definite".into()));
        }
        if self.a_nu.iter().any(|&a| a >= 0.0) {
            return Err(Error::InvalidParameter("A_nu must be negative definite".into()));
        }
        if !(self.sign_smoothing >= 0.0 && self.sign_smoothing.is_finite()) {
            return Err(Error::InvalidParameter("boundary layer must be >= 0".into()));
        }
        Ok(())
    }

    pub fn a22_s_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.a22_s))
    }

    pub fn a_nu_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.a_nu))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverState {
    pub xhat1: DVector<f64>,
    pub xhat2: DVector<f64>,
    pub nu_fil: DVector<f64>,
    /// output filter state
    pub z: DVector<f64>,
}

impl ObserverState {
    pub fn is_finite(&self) -> bool {
        [&self.xhat1, &self.xhat2, &self.nu_fil, &self.z]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

pub fn output_filter_derivative(z: &DVector<f64>, y2: &DVector<f64>, a_f: &DMatrix<f64>) -> DVector<f64> {
    a_f * (z - y2)
}

/// e_y = x̂2 + c − y
pub fn innovation(xhat2: &DVector<f64>, y: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
    xhat2 + c - y
}

pub fn switching_injection(e_y: &DVector<f64>, rho: &[f64], eps: f64) -> DVector<f64> {
    DVector::from_fn(e_y.len(), |k, _| {
        let e = e_y[k];
        if eps > 0.0 && e.abs() <= eps {
            -rho[k] * e / eps
        } else if e == 0.0 {
            0.0
        } else {
            -rho[k] * e.signum()
        }
    })
}

/// Observer right-hand side for a given injection ν.
///
/// `u` is (u_a, u_fol, c2), `y` the extended output (unfiltered channels then filter states).
pub struct ObserverDerivative {
    pub dxhat1: DVector<f64>,
    pub dxhat2: DVector<f64>,
    pub e_y: DVector<f64>,
}

pub fn observer_derivative_with(
    xhat1: &DVector<f64>,
    xhat2: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
    nu: &DVector<f64>,
    sys: &PartitionedSystem,
    a22_s: &DMatrix<f64>,
) -> ObserverDerivative {
    let e_y = innovation(xhat2, y, &sys.c_off);
    let dxhat1 = &sys.a11 * xhat1 + &sys.a12 * xhat2 + &sys.b1 * u - &sys.a12 * &e_y;
    let a22_ms = &sys.a22 - a22_s;
    let dxhat2 = &sys.a21 * xhat1 + &sys.a22 * xhat2 + &sys.b2 * u - a22_ms * &e_y + nu;
    ObserverDerivative { dxhat1, dxhat2, e_y }
}

/// Observer right-hand side with the switching injection evaluated from the current innovation.
pub fn observer_derivative(
    obs: &ObserverState,
    u: &DVector<f64>,
    y: &DVector<f64>,
    sys: &PartitionedSystem,
    params: &ObserverParams,
) -> (ObserverDerivative, DVector<f64>) {
    let e_y = innovation(&obs.xhat2, y, &sys.c_off);
    let nu = switching_injection(&e_y, &params.rho, params.sign_smoothing);
    let d = observer_derivative_with(&obs.xhat1, &obs.xhat2, u, y, &nu, sys, &params.a22_s_matrix());
    (d, nu)
}

pub fn eoi_derivative(nu_fil: &DVector<f64>, nu: &DVector<f64>, a_nu: &[f64]) -> DVector<f64> {
    DVector::from_fn(nu_fil.len(), |k, _| a_nu[k] * (nu_fil[k] - nu[k]))
}
