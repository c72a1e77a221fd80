//! Two-car CACC plant: vehicle dynamics, spacing controller, measurements and noise.
//!
//! Measurement channels, in their original order:
//! 1. gap `p_lead - p_fol - L` (positive while the cars are apart),
//! 2. relative velocity `v_lead - v_fol`,
//! 3. follower velocity,
//! 4. follower acceleration.

use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CH_GAP: usize = 0;
pub const CH_RELVEL: usize = 1;
pub const CH_VFOL: usize = 2;
pub const CH_AFOL: usize = 3;

pub const CHANNEL_NAMES: [&str; 4] = ["gap", "relvel", "v_fol", "a_fol"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarParams {
    /// engine time constant [s]
    pub tau: f64,
    /// car length [m]
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonParams {
    pub leader: CarParams,
    pub follower: CarParams,
    /// ratio between the follower's model of the leader lag and the true lag
    pub r_tau: f64,
    pub r_tau_bounds: [f64; 2],
    pub h_ref: f64,
    pub r: f64,
    pub k_p: f64,
    pub k_d: f64,
}

impl PlatoonParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.leader.tau,
            self.leader.length,
            self.follower.tau,
            self.follower.length,
            self.r_tau,
            self.r_tau_bounds[0],
            self.r_tau_bounds[1],
            self.h_ref,
            self.r,
            self.k_p,
            self.k_d,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("platoon parameters"));
        }
        for (name, car) in [("leader", self.leader), ("follower", self.follower)] {
            if car.tau <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name}.tau must be > 0")));
            }
            if car.length <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name}.length must be > 0")));
            }
        }
        if self.h_ref <= 0.0 {
            return Err(Error::InvalidParameter("h_ref must be > 0".into()));
        }
        let [lo, hi] = self.r_tau_bounds;
        if lo <= 0.0 || lo > self.r_tau || self.r_tau > hi {
            return Err(Error::InvalidParameter(format!(
                "r_tau = {} must satisfy 0 < {lo} <= r_tau <= {hi}",
                self.r_tau
            )));
        }
        Ok(())
    }

    /// The follower's model of the leader lag.
    pub fn tau_hat(&self) -> f64 {
        self.r_tau * self.leader.tau
    }

    /// Gap that makes the spacing error zero at speed `v`.
    pub fn equilibrium_gap(&self, v: f64) -> f64 {
        self.r + self.h_ref * v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonState {
    pub p_lead: f64,
    pub v_lead: f64,
    pub a_lead: f64,
    pub p_fol: f64,
    pub v_fol: f64,
    pub a_fol: f64,
    pub u_fol: f64,
}

impl PlatoonState {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.p_lead,
            self.v_lead,
            self.a_lead,
            self.p_fol,
            self.v_fol,
            self.a_fol,
            self.u_fol,
        ]
    }

    pub fn from_array(x: &[f64]) -> Self {
        Self {
            p_lead: x[0],
            v_lead: x[1],
            a_lead: x[2],
            p_fol: x[3],
            v_fol: x[4],
            a_fol: x[5],
            u_fol: x[6],
        }
    }

    /// The six physical coordinates (p, v, a) of leader then follower.
    pub fn physical(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.to_array()[..6])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Both cars cruising at `v` with the follower at the controller equilibrium gap.
    pub fn cruise(params: &PlatoonParams, v: f64) -> Self {
        let gap = params.equilibrium_gap(v);
        Self {
            p_lead: 0.0,
            v_lead: v,
            a_lead: 0.0,
            p_fol: -(gap + params.leader.length),
            v_fol: v,
            a_fol: 0.0,
            u_fol: 0.0,
        }
    }

    /// Physical gap between the cars.
    pub fn true_gap(&self, leader_length: f64) -> f64 {
        self.p_lead - self.p_fol - leader_length
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Uniform,
    /// Gaussian with sigma = bound/3, redrawn until inside the bound.
    TruncatedGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// per measurement channel, original order
    pub bound_per_channel: [f64; 4],
    pub seed: u64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bound_per_channel.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::InvalidParameter("noise bounds must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn silent(seed: u64) -> Self {
        Self {
            bound_per_channel: [0.0; 4],
            seed,
            distribution: NoiseDistribution::Uniform,
        }
    }
}

/// Per-run noise stream.
pub struct NoiseSource {
    spec: NoiseSpec,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(spec: NoiseSpec) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            spec,
        }
    }

    pub fn sample(&mut self) -> Vector4<f64> {
        sample_noise(&self.spec, &mut self.rng)
    }
}

pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> Vector4<f64> {
    let mut out = Vector4::zeros();
    for k in 0..4 {
        let b = spec.bound_per_channel[k];
        // draw even for zero bounds so every channel consumes the stream identically
        let x = match spec.distribution {
            NoiseDistribution::Uniform => rng.gen_range(-1.0..=1.0),
            NoiseDistribution::TruncatedGaussian => {
                let n = Normal::new(0.0, 1.0 / 3.0).unwrap();
                loop {
                    let x: f64 = n.sample(rng);
                    if x.abs() <= 1.0 {
                        break x;
                    }
                }
            }
        };
        out[k] = b * x;
    }
    out
}

/// (p, v, a) -> (v, a, (u - a)/tau)
pub fn car_derivative(state3: Vector3<f64>, u: f64, tau: f64) -> Result<Vector3<f64>> {
    if !state3.iter().all(|x| x.is_finite()) || !u.is_finite() || !tau.is_finite() {
        return Err(Error::NonFinite("car_derivative input"));
    }
    if tau <= 0.0 {
        return Err(Error::InvalidParameter("tau must be > 0".into()));
    }
    Ok(Vector3::new(state3[1], state3[2], (u - state3[2]) / tau))
}

/// Spacing error and its rate from a (possibly attacked) measurement.
pub fn spacing_error(meas: &Vector4<f64>, r: f64, h_ref: f64) -> (f64, f64) {
    let e = meas[CH_GAP] - r - h_ref * meas[CH_VFOL];
    let edot = meas[CH_RELVEL] - h_ref * meas[CH_AFOL];
    (e, edot)
}

pub fn controller_derivative(u_fol: f64, e: f64, edot: f64, u_lead_received: f64, params: &PlatoonParams) -> f64 {
    -u_fol / params.h_ref + params.k_p * e + params.k_d * edot + u_lead_received / params.h_ref
}

pub fn measure(state: &PlatoonState, leader_length: f64, noise: &Vector4<f64>) -> Vector4<f64> {
    Vector4::new(
        state.p_lead - state.p_fol - leader_length,
        state.v_lead - state.v_fol,
        state.v_fol,
        state.a_fol,
    ) + noise
}

/// Output matrix C and offset c of the measurement in the six physical coordinates.
pub fn measurement_matrices(leader_length: f64) -> (DMatrix<f64>, DVector<f64>) {
    #[rustfmt::skip]
    let c = DMatrix::from_row_slice(4, 6, &[
        1.0, 0.0, 0.0, -1.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0, -1.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    ]);
    let off = DVector::from_column_slice(&[-leader_length, 0.0, 0.0, 0.0]);
    (c, off)
}

/// Full plant derivative: both cars plus the follower controller.
///
/// `u_lead` is the true leader input, `u_lead_received` what reaches the follower,
/// `meas` the measurement the follower's controller consumes.
pub fn plant_derivative(
    state: &PlatoonState,
    u_lead: f64,
    u_lead_received: f64,
    meas: &Vector4<f64>,
    params: &PlatoonParams,
) -> Result<[f64; 7]> {
    let lead = car_derivative(
        Vector3::new(state.p_lead, state.v_lead, state.a_lead),
        u_lead,
        params.leader.tau,
    )?;
    let fol = car_derivative(
        Vector3::new(state.p_fol, state.v_fol, state.a_fol),
        state.u_fol,
        params.follower.tau,
    )?;
    let (e, edot) = spacing_error(meas, params.r, params.h_ref);
    let du = controller_derivative(state.u_fol, e, edot, u_lead_received, params);
    Ok([lead[0], lead[1], lead[2], fol[0], fol[1], fol[2], du])
}
