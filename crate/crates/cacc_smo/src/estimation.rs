//! Attack reconstruction from the filtered equivalent output injection.
//!
//! While sliding with constant attack Δ and uncertainty η, the error dynamics give
//! ν → −A21·e1 + E2·η + F2·Δ and e1 → A11⁻¹(E1·η + F1·Δ) on the part of e1 the
//! output can see. With S_F = A21·A11⁻¹·F1 restricted to the minimal part of
//! (A11, F1, A21), and S_E likewise for E1:
//!
//!   lim ν_fil = −(S_F − F2)·Δ − (S_E − E2)·η
//!
//! so Δ̂ = −(S_F − F2)†·ν_fil and |Δ̂ − Δ| ≤ |G|·(|S_E| + |E2|)·η̄.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended_system::PartitionedSystem;
use crate::linalg::{self, abs, RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GainMethod {
    /// steady-state gain of the minimal part, sign from the error dynamics
    #[default]
    Minimal,
    /// A21·A11†·F1 − F2 with the pseudo-inverse and Δ̂ = +G·ν_fil
    Literal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorGain {
    /// (1+h) x p
    pub g: DMatrix<f64>,
    /// attack map M with G = M†
    pub attack_map: DMatrix<f64>,
    /// uncertainty map N: lim ν_fil carries N·η
    pub uncertainty_map: DMatrix<f64>,
    /// componentwise half-width; infinite where the component is not identifiable
    pub delta: DVector<f64>,
    /// components whose constant value leaves a trace in lim ν_fil
    pub identifiable: Vec<bool>,
    /// Δ̂ = sign · G · ν_fil
    pub sign: f64,
    pub method: GainMethod,
}

/// S = A21·A11⁻¹·G on the minimal part of (A11, G, A21).
pub fn steady_map(sys: &PartitionedSystem, g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    linalg::steady_state_gain(&sys.a11, g, &sys.a21, RANK_TOL)
}

pub fn build_estimator(sys: &PartitionedSystem, eta_bar: &DVector<f64>) -> Result<EstimatorGain> {
    build_estimator_with(sys, eta_bar, GainMethod::Minimal)
}

pub fn build_estimator_with(
    sys: &PartitionedSystem,
    eta_bar: &DVector<f64>,
    method: GainMethod,
) -> Result<EstimatorGain> {
    let q = 1 + sys.h;
    if sys.p < q {
        return Err(Error::EstimatorUndefined(format!(
            "{} outputs cannot resolve {q} attack components",
            sys.p
        )));
    }
    if eta_bar.len() != q {
        return Err(Error::InvalidParameter(format!("eta_bar needs {q} entries")));
    }
    let (m, n, envelope) = match method {
        GainMethod::Minimal => {
            let s_f = steady_map(sys, &sys.f1).ok_or_else(|| {
                Error::EstimatorUndefined(
                    "a marginal mode of (A11, F1) is visible in the output; the EOI has no limit".into(),
                )
            })?;
            let s_e = steady_map(sys, &sys.e1).ok_or_else(|| {
                Error::EstimatorUndefined("a marginal mode of (A11, E1) is visible in the output".into())
            })?;
            let env = abs(&s_e) + abs(&sys.e2);
            (s_f - &sys.f2, -(s_e - &sys.e2), env)
        }
        GainMethod::Literal => {
            let pinv = linalg::pseudo_inverse(&sys.a11, RANK_TOL);
            let a21p = &sys.a21 * &pinv;
            let env = abs(&a21p) * abs(&sys.e1) + abs(&sys.e2);
            (&a21p * &sys.f1 - &sys.f2, &a21p * &sys.e1 + abs(&sys.e2), env)
        }
    };
    if linalg::rank(&m, RANK_TOL) == 0 {
        return Err(Error::EstimatorUndefined("attack map is zero".into()));
    }
    let g = linalg::pseudo_inverse(&m, RANK_TOL);
    let identifiable = identifiable_components(&m);
    let mut delta = abs(&g) * envelope * eta_bar;
    for (k, ok) in identifiable.iter().enumerate() {
        if !ok {
            delta[k] = f64::INFINITY;
        }
    }
    Ok(EstimatorGain {
        g,
        attack_map: m,
        uncertainty_map: n,
        delta,
        identifiable,
        sign: match method {
            GainMethod::Minimal => -1.0,
            GainMethod::Literal => 1.0,
        },
        method,
    })
}

/// Component k is identifiable when e_k lies in the row space of M, i.e. when
/// M†M e_k = e_k.
pub fn identifiable_components(m: &DMatrix<f64>) -> Vec<bool> {
    let proj = linalg::pseudo_inverse(m, RANK_TOL) * m;
    (0..m.ncols())
        .map(|k| {
            let mut col = proj.column(k).clone_owned();
            col[k] -= 1.0;
            col.amax() < 1e-8
        })
        .collect()
}

impl EstimatorGain {
    pub fn is_full_rank(&self) -> bool {
        self.identifiable.iter().all(|x| *x)
    }

    /// Predicted limit of ν_fil for constant Δ and η.
    pub fn predicted_eoi(&self, delta: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        match self.method {
            GainMethod::Minimal => -(&self.attack_map * delta) + &self.uncertainty_map * eta,
            GainMethod::Literal => &self.attack_map * delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateInterval {
    pub center: DVector<f64>,
    pub halfwidth: DVector<f64>,
}

pub fn estimate(nu_fil: &DVector<f64>, gain: &EstimatorGain) -> EstimateInterval {
    EstimateInterval {
        center: gain.sign * (&gain.g * nu_fil),
        halfwidth: gain.delta.clone(),
    }
}

pub fn containment_check(est: &EstimateInterval, true_delta: &DVector<f64>, slack: f64) -> Vec<bool> {
    (0..est.center.len())
        .map(|k| (est.center[k] - true_delta[k]).abs() <= est.halfwidth[k] + slack)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extended_system::{build_extended, build_partitioned_with, CompletionGain};
    use crate::presets;
    use approx::assert_relative_eq;

    fn sys(completion: CompletionGain) -> PartitionedSystem {
        let ext = build_extended(&presets::table1_platoon(), &presets::table1_partition(), &[-5.0; 3]).unwrap();
        build_partitioned_with(&ext, &completion).unwrap()
    }

    #[test]
    fn zero_uncertainty_gives_zero_width() {
        let g = build_estimator(&sys(presets::table1_completion()), &DVector::zeros(4)).unwrap();
        for k in 0..4 {
            if g.identifiable[k] {
                assert_eq!(g.delta[k], 0.0);
            }
        }
        let lit = build_estimator_with(
            &sys(presets::table1_completion()),
            &DVector::zeros(4),
            GainMethod::Literal,
        )
        .unwrap();
        assert!(lit.delta.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn literal_square_case_inverts() {
        let g = build_estimator_with(
            &sys(presets::table1_completion()),
            &DVector::from_element(4, 1.0),
            GainMethod::Literal,
        )
        .unwrap();
        assert!(g.is_full_rank());
        let prod = &g.g * &g.attack_map;
        assert!(linalg::max_abs(&(prod - DMatrix::identity(4, 4))) < 1e-9);
    }

    #[test]
    fn constant_follower_speed_bias_is_not_identifiable() {
        // a constant bias on the follower speed reading looks like both cars
        // moving faster by the same amount
        let g = build_estimator(&sys(presets::table1_completion()), &DVector::from_element(4, 1.0)).unwrap();
        assert_eq!(g.identifiable, vec![true, true, false, true]);
        assert!(g.delta[2].is_infinite());
        let col = g.attack_map.column(2);
        assert!(col.amax() < 1e-9);
    }

    #[test]
    fn identifiable_examples() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(identifiable_components(&m), vec![true, false, false]);
        assert_eq!(identifiable_components(&DMatrix::identity(3, 3)), vec![true; 3]);
    }

    #[test]
    fn natural_completion_has_no_limit() {
        // without the completion gain the leader velocity error integrates the input attack
        let r = build_estimator(&sys(CompletionGain::Natural), &DVector::from_element(4, 1.0));
        assert!(matches!(r, Err(Error::EstimatorUndefined(_))));
        // the literal construction still produces a (meaningless) gain
        assert!(build_estimator_with(
            &sys(CompletionGain::Natural),
            &DVector::from_element(4, 1.0),
            GainMethod::Literal
        )
        .is_ok());
    }

    #[test]
    fn estimate_is_linear() {
        let g = build_estimator(&sys(presets::table1_completion()), &DVector::from_element(4, 0.1)).unwrap();
        let z = estimate(&DVector::zeros(4), &g);
        assert!(z.center.iter().all(|x| *x == 0.0));
        let a = DVector::from_column_slice(&[0.3, -1.0, 0.2, 0.7]);
        let b = DVector::from_column_slice(&[-0.1, 0.4, 2.0, 0.0]);
        let lhs = estimate(&(&a * 2.0 + &b), &g).center;
        let rhs = estimate(&a, &g).center * 2.0 + estimate(&b, &g).center;
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn containment_examples() {
        let truth = DVector::from_column_slice(&[1.0, 2.0]);
        let exact = EstimateInterval {
            center: truth.clone(),
            halfwidth: DVector::zeros(2),
        };
        assert_eq!(containment_check(&exact, &truth, 0.0), vec![true, true]);
        let edge = EstimateInterval {
            center: DVector::from_column_slice(&[1.5, 2.0]),
            halfwidth: DVector::from_element(2, 0.5),
        };
        assert_eq!(containment_check(&edge, &truth, 0.0), vec![true, true]);
        let off = EstimateInterval {
            center: DVector::from_column_slice(&[2.0, 2.0]),
            halfwidth: DVector::from_element(2, 0.5),
        };
        assert_eq!(containment_check(&off, &truth, 0.0), vec![false, true]);
    }

    #[test]
    fn physical_estimate_does_not_depend_on_completion() {
        let eta = DVector::from_element(4, 0.0);
        let d = DVector::from_column_slice(&[0.5, 1.0, -1.0, 0.3]);
        for pole in [-1.0, -2.0, -4.0] {
            let g = build_estimator(&sys(CompletionGain::LeaderVelocityPole(pole)), &eta).unwrap();
            let nu = g.predicted_eoi(&d, &eta);
            let est = estimate(&nu, &g);
            for k in [0, 1, 3] {
                assert_relative_eq!(est.center[k], d[k], epsilon = 1e-9);
            }
        }
    }
}
