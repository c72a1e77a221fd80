//! Healthy error envelopes, the admissible-gain bound, the event-driven EOI
//! threshold and the detector built on it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended_system::PartitionedSystem;
use crate::linalg::{self, abs, RANK_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorBounds {
    /// envelopes at the requested time
    pub e1_upper: DVector<f64>,
    pub e1_lower: DVector<f64>,
    /// time-invariant bound on |e1|: pointwise max of both envelopes over the horizon
    pub e1_abs: DVector<f64>,
    pub e2_abs0: DVector<f64>,
    /// present once rho is known
    pub e2dot_upper0: Option<DVector<f64>>,
    pub e2dot_lower0: Option<DVector<f64>>,
}

/// Uncertainty and noise magnitudes entering the bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs {
    /// (model uncertainty, noise of each filtered channel), length 1 + h
    pub eta_bar: DVector<f64>,
    /// noise bound of each unfiltered channel, length p − h
    pub zeta1_bar: DVector<f64>,
    /// horizon over which e1_abs is maximised
    pub horizon: f64,
}

fn forcing(sys: &PartitionedSystem, inp: &BoundInputs) -> DVector<f64> {
    abs(&sys.a12) * (&sys.d * &inp.zeta1_bar) + abs(&sys.e1) * &inp.eta_bar
}

fn envelopes(
    sys: &PartitionedSystem,
    pinv: &DMatrix<f64>,
    e1_init: &DVector<f64>,
    b: &DVector<f64>,
    t: f64,
) -> (DVector<f64>, DVector<f64>) {
    let m = sys.nx1();
    let ex = linalg::matrix_exponential(&sys.a11, t);
    let free = &ex * e1_init;
    let forced = pinv * ((DMatrix::identity(m, m) - ex) * b);
    (&free - &forced, &free + &forced)
}

pub fn healthy_error_bounds(
    t: f64,
    e1_init: &DVector<f64>,
    sys: &PartitionedSystem,
    inp: &BoundInputs,
    rho: Option<&[f64]>,
) -> Result<ErrorBounds> {
    let m = sys.nx1();
    if e1_init.len() != m || inp.eta_bar.len() != 1 + sys.h || inp.zeta1_bar.len() != sys.p - sys.h {
        return Err(Error::InvalidParameter(
            "bound input dimensions do not match the design".into(),
        ));
    }
    let pinv = linalg::pseudo_inverse(&sys.a11, RANK_TOL);
    let b = forcing(sys, inp);
    let (e1_upper, e1_lower) = envelopes(sys, &pinv, e1_init, &b, t);

    let samples = 600;
    let mut e1_abs = e1_init.map(f64::abs);
    for k in 0..=samples {
        let tk = inp.horizon * k as f64 / samples as f64;
        let (up, lo) = envelopes(sys, &pinv, e1_init, &b, tk);
        for i in 0..m {
            e1_abs[i] = e1_abs[i].max(up[i].abs()).max(lo[i].abs());
        }
    }
    let e2_abs0 = &sys.d * &inp.zeta1_bar;
    let (up, lo) = match rho {
        Some(rho) => {
            if rho.len() != sys.p {
                return Err(Error::InvalidParameter(format!("rho needs {} entries", sys.p)));
            }
            let (u, l) = e2dot_bounds(sys, &e1_abs, inp, rho, None);
            (Some(u), Some(l))
        }
        None => (None, None),
    };
    Ok(ErrorBounds {
        e1_upper,
        e1_lower,
        e1_abs,
        e2_abs0,
        e2dot_upper0: up,
        e2dot_lower0: lo,
    })
}

/// Bounds on |ė2| while sliding in healthy operation.
///
/// `a22_s` defaults to −I when not given.
pub fn e2dot_bounds(
    sys: &PartitionedSystem,
    e1_abs: &DVector<f64>,
    inp: &BoundInputs,
    rho: &[f64],
    a22_s: Option<&DMatrix<f64>>,
) -> (DVector<f64>, DVector<f64>) {
    let p = sys.p;
    let a22s = a22_s.cloned().unwrap_or_else(|| -DMatrix::identity(p, p));
    let a22ms = &sys.a22 - &a22s;
    let noise = (abs(&a22ms) + abs(&a22s)) * (&sys.d * &inp.zeta1_bar);
    let spread = abs(&sys.a21) * e1_abs + noise + abs(&sys.e2) * &inp.eta_bar;
    let rho = DVector::from_column_slice(rho);
    (&rho + &spread, &rho - &spread)
}

/// Optional attack-aware terms for the gain bound.
#[derive(Clone, Debug, PartialEq)]
pub struct RelvelAttackBounds {
    pub dy1_bar: DVector<f64>,
    pub dy1dot_bar: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoCheck {
    pub lower_bound: Vec<f64>,
    pub rho: Vec<f64>,
    pub margin: Vec<f64>,
    pub admissible: bool,
}

pub fn rho_lower_bound(
    sys: &PartitionedSystem,
    bounds: &ErrorBounds,
    delta_bar: &DVector<f64>,
    inp: &BoundInputs,
    attack_aware: Option<&RelvelAttackBounds>,
) -> DVector<f64> {
    let mut out = abs(&sys.a21) * &bounds.e1_abs
        + abs(&sys.a22) * (&sys.d * &inp.zeta1_bar)
        + abs(&sys.e2) * &inp.eta_bar
        + abs(&sys.f2) * delta_bar;
    if let Some(a) = attack_aware {
        out += abs(&sys.h_mat) * &a.dy1dot_bar + abs(&(&sys.a22 * &sys.h_mat)) * &a.dy1_bar;
    }
    out
}

pub fn check_rho(lower: &DVector<f64>, rho: &[f64]) -> RhoCheck {
    let margin: Vec<f64> = rho.iter().zip(lower.iter()).map(|(r, l)| r - l).collect();
    RhoCheck {
        lower_bound: lower.iter().copied().collect(),
        rho: rho.to_vec(),
        admissible: margin.iter().all(|m| *m > 0.0),
        margin,
    }
}

/// Per-channel constants of the threshold recursion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelThreshold {
    pub rho: f64,
    pub a_nu: f64,
    /// 2·ē2⁰ / ē̇2⁰
    pub t_bar: f64,
    /// ē̇2⁰ / ė̲2⁰
    pub ratio: f64,
}

impl ChannelThreshold {
    pub fn new(rho: f64, a_nu: f64, e2_abs0: f64, e2dot_upper: f64, e2dot_lower: f64) -> Result<Self> {
        if e2dot_lower.is_nan() || e2dot_lower <= 0.0 {
            return Err(Error::Threshold(format!(
                "lower bound on the sliding rate is {e2dot_lower:.4} <= 0; rho too small"
            )));
        }
        if a_nu.is_nan() || a_nu >= 0.0 {
            return Err(Error::Threshold("EOI filter gain must be negative".into()));
        }
        Ok(Self {
            rho,
            a_nu,
            t_bar: 2.0 * e2_abs0 / e2dot_upper,
            ratio: e2dot_upper / e2dot_lower,
        })
    }

    /// One step of the recursion at a rising sign change.
    ///
    /// `prev` is the threshold from the previous rising change, `t_minus` the
    /// length of the negative interval that just ended.
    pub fn update(&self, prev: f64, t_minus: f64) -> f64 {
        let a = self.a_nu;
        let t_plus = self.ratio * t_minus;
        let t_tilde = t_minus + t_plus;
        let nu0 = (a * t_tilde).exp() * prev + (1.0 - 2.0 * (a * t_plus).exp() + (a * t_tilde).exp()) * self.rho;
        let nu = (a * self.t_bar).exp() * nu0 + (1.0 - (a * self.t_bar).exp()) * self.rho;
        nu.max(0.0)
    }
}

pub fn channel_thresholds(bounds: &ErrorBounds, rho: &[f64], a_nu: &[f64]) -> Result<Vec<ChannelThreshold>> {
    let up = bounds
        .e2dot_upper0
        .as_ref()
        .ok_or_else(|| Error::Threshold("rho not configured".into()))?;
    let lo = bounds.e2dot_lower0.as_ref().unwrap();
    (0..rho.len())
        .map(|k| ChannelThreshold::new(rho[k], a_nu[k], bounds.e2_abs0[k], up[k], lo[k]))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignEvent {
    pub t: f64,
    /// true for a change to positive (even index), false for a change to negative
    pub rising: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ChannelTracker {
    committed: i8,
    candidate: i8,
    candidate_since: f64,
    pub events: Vec<SignEvent>,
    last_fall: Option<f64>,
}

impl ChannelTracker {
    /// Feeds one sample; returns the event committed by it, if any.
    fn feed(&mut self, nu: f64, t: f64, dwell_min: f64) -> Option<SignEvent> {
        let s: i8 = if nu > 0.0 {
            1
        } else if nu < 0.0 {
            -1
        } else {
            0
        };
        if s == 0 {
            return None;
        }
        if self.committed == 0 {
            // the first sign seen is not a change
            self.committed = s;
            self.candidate = s;
            return None;
        }
        if s == self.committed {
            self.candidate = s;
            return None;
        }
        if self.candidate != s {
            self.candidate = s;
            self.candidate_since = t;
        }
        if t - self.candidate_since + 1e-12 >= dwell_min {
            self.committed = s;
            let ev = SignEvent {
                t: self.candidate_since,
                rising: s > 0,
            };
            self.events.push(ev);
            return Some(ev);
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdState {
    pub channels: Vec<ChannelTracker>,
    pub threshold: Vec<f64>,
    pub dwell_min: f64,
}

impl ThresholdState {
    /// Threshold starts at rho (the recursion's fixed point for an empty history).
    pub fn new(params: &[ChannelThreshold], dwell_min: f64) -> Self {
        Self {
            channels: vec![ChannelTracker::default(); params.len()],
            threshold: params.iter().map(|c| c.rho).collect(),
            dwell_min,
        }
    }
}

/// Records sign changes of ν and updates the threshold at each rising change
/// that closes a negative interval.
pub fn track_sign_changes(nu: &DVector<f64>, t: f64, state: &mut ThresholdState, params: &[ChannelThreshold]) {
    for k in 0..state.channels.len() {
        let dwell = state.dwell_min;
        let ch = &mut state.channels[k];
        if let Some(ev) = ch.feed(nu[k], t, dwell) {
            if ev.rising {
                if let Some(fall) = ch.last_fall {
                    let t_minus = (ev.t - fall).max(0.0);
                    state.threshold[k] = update_threshold(&params[k], state.threshold[k], t_minus);
                }
            } else {
                ch.last_fall = Some(ev.t);
            }
        }
    }
}

pub fn update_threshold(params: &ChannelThreshold, prev: f64, t_minus: f64) -> f64 {
    params.update(prev, t_minus)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub t: f64,
    pub channel: usize,
    pub nu_fil: f64,
    pub threshold: f64,
}

/// Two-sided test; reports each channel's first crossing only.
pub fn detect(nu_fil: &DVector<f64>, state: &ThresholdState, t: f64, already: &mut [bool]) -> Vec<DetectionEvent> {
    let mut out = Vec::new();
    for k in 0..nu_fil.len() {
        if !already[k] && nu_fil[k].abs() > state.threshold[k] {
            already[k] = true;
            out.push(DetectionEvent {
                t,
                channel: k,
                nu_fil: nu_fil[k],
                threshold: state.threshold[k],
            });
        }
    }
    out
}

/// Sign tracking, threshold and detection bundled for one run.
#[derive(Clone, Debug)]
pub struct Detector {
    pub params: Vec<ChannelThreshold>,
    pub state: ThresholdState,
    pub fired: Vec<bool>,
    pub events: Vec<DetectionEvent>,
}

impl Detector {
    pub fn new(params: Vec<ChannelThreshold>, dwell_min: f64) -> Self {
        let n = params.len();
        Self {
            state: ThresholdState::new(&params, dwell_min),
            params,
            fired: vec![false; n],
            events: Vec::new(),
        }
    }

    pub fn step(&mut self, t: f64, nu: &DVector<f64>, nu_fil: &DVector<f64>) -> Vec<DetectionEvent> {
        track_sign_changes(nu, t, &mut self.state, &self.params);
        let ev = detect(nu_fil, &self.state, t, &mut self.fired);
        self.events.extend(ev.iter().copied());
        ev
    }

    pub fn threshold(&self) -> &[f64] {
        &self.state.threshold
    }
}
