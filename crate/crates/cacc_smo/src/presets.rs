//! The "table1" parameter set.

use crate::extended_system::{CompletionGain, OutputPartition};
use crate::platoon_model::{CarParams, NoiseDistribution, NoiseSpec, PlatoonParams, PlatoonState};
use crate::smo_core::ObserverParams;

pub fn table1_platoon() -> PlatoonParams {
    PlatoonParams {
        leader: CarParams { tau: 0.1, length: 4.0 },
        follower: CarParams { tau: 0.1, length: 4.0 },
        r_tau: 1.1,
        r_tau_bounds: [1.0, 1.2],
        h_ref: 0.7,
        r: 1.5,
        k_p: 0.2,
        k_d: 0.7,
    }
}

pub fn table1_initial_state() -> PlatoonState {
    PlatoonState {
        p_lead: 0.0,
        v_lead: 8.0,
        a_lead: 0.0,
        p_fol: -11.45,
        v_fol: 8.0,
        a_fol: 0.0,
        u_fol: 0.0,
    }
}

/// Relative velocity to y1, gap, follower velocity and acceleration filtered.
pub fn table1_partition() -> OutputPartition {
    OutputPartition {
        permutation: [1, 0, 2, 3],
        h: 3,
    }
}

pub const TABLE1_A_FIL: f64 = -5.0;
pub const TABLE1_DELTA_BAR: [f64; 4] = [10.0, 10.0, 10.0, 10.0];
/// Bound on the model-uncertainty signal; the remaining entries of the
/// uncertainty vector are the noise bounds of the filtered channels.
pub const TABLE1_ETA_MODEL: f64 = 1.0;
/// Relative-velocity attack bound (same magnitude as the other channels).
pub const TABLE1_DY1_BAR: f64 = 10.0;
/// Noise bounds per measurement channel in original order (gap, relvel, v_fol, a_fol).
pub const TABLE1_NOISE: [f64; 4] = [0.15, 0.3, 0.03, 0.15];

pub fn table1_noise(seed: u64) -> NoiseSpec {
    NoiseSpec {
        bound_per_channel: TABLE1_NOISE,
        seed,
        distribution: NoiseDistribution::Uniform,
    }
}

pub fn table1_observer() -> ObserverParams {
    ObserverParams {
        rho: vec![11.5, 11.0, 11.0, 11.0],
        a22_s: vec![-1.0; 4],
        a_nu: vec![-1.0; 4],
        sign_smoothing: crate::smo_core::DEFAULT_EPSILON,
    }
}

pub fn table1_completion() -> CompletionGain {
    CompletionGain::LeaderVelocityPole(-1.0)
}
