//! Attack signals, injection, stealthy-attack synthesis and classification.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::extended_system::OutputPartition;
use crate::platoon_model::{PlatoonParams, CHANNEL_NAMES, CH_GAP, CH_RELVEL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    #[default]
    Zero,
    Step {
        amplitude: f64,
        #[serde(default)]
        onset: f64,
    },
    Ramp {
        slope: f64,
        #[serde(default)]
        onset: f64,
    },
    Sinusoid {
        amplitude: f64,
        /// [Hz]
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        onset: f64,
    },
    /// A ramp passed through a first-order low-pass with the given (negative) pole.
    FilteredRamp {
        slope: f64,
        pole: f64,
        #[serde(default)]
        onset: f64,
    },
    /// Piecewise-linear table; no analytic derivatives.
    Sampled { times: Vec<f64>, values: Vec<f64> },
    /// Pointwise sum of several signals.
    Sum { terms: Vec<SignalSpec> },
    /// value·f + first·f' + second·f'' + integral·∫f of a base signal.
    Combination {
        base: Box<SignalSpec>,
        #[serde(default)]
        value: f64,
        #[serde(default)]
        first: f64,
        #[serde(default)]
        second: f64,
        #[serde(default)]
        integral: f64,
    },
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            SignalSpec::Zero => Ok(()),
            SignalSpec::Step { amplitude, onset } => check_common(*amplitude, *onset),
            SignalSpec::Ramp { slope, onset } => check_common(*slope, *onset),
            SignalSpec::Sinusoid {
                amplitude,
                frequency,
                phase,
                onset,
            } => {
                check_common(*amplitude, *onset)?;
                if !frequency.is_finite() || !phase.is_finite() {
                    return bad("sinusoid frequency and phase must be finite");
                }
                Ok(())
            }
            SignalSpec::FilteredRamp { slope, pole, onset } => {
                check_common(*slope, *onset)?;
                if !(pole.is_finite() && *pole < 0.0) {
                    return bad("filtered ramp pole must be < 0");
                }
                Ok(())
            }
            SignalSpec::Sampled { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    return bad("sampled signal needs matching times/values with >= 2 points");
                }
                if times
                    .windows(2)
                    .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
                {
                    return bad("sampled times must be strictly increasing");
                }
                if times.iter().chain(values).any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("sampled signal"));
                }
                Ok(())
            }
            SignalSpec::Sum { terms } => terms.iter().try_for_each(SignalSpec::validate),
            SignalSpec::Combination {
                base,
                value,
                first,
                second,
                integral,
            } => {
                if ![value, first, second, integral].iter().all(|x| x.is_finite()) {
                    return Err(Error::NonFinite("combination coefficients"));
                }
                base.validate()
            }
        }
    }

    /// Structurally zero for all time.
    pub fn is_zero(&self) -> bool {
        match self {
            SignalSpec::Zero => true,
            SignalSpec::Step { amplitude, .. } => *amplitude == 0.0,
            SignalSpec::Ramp { slope, .. } => *slope == 0.0,
            SignalSpec::Sinusoid { amplitude, .. } => *amplitude == 0.0,
            SignalSpec::FilteredRamp { slope, .. } => *slope == 0.0,
            SignalSpec::Sampled { values, .. } => values.iter().all(|v| *v == 0.0),
            SignalSpec::Sum { terms } => terms.iter().all(SignalSpec::is_zero),
            SignalSpec::Combination {
                base,
                value,
                first,
                second,
                integral,
            } => base.is_zero() || [value, first, second, integral].iter().all(|c| **c == 0.0),
        }
    }

    pub fn has_derivatives(&self) -> bool {
        match self {
            SignalSpec::Sampled { .. } | SignalSpec::Combination { .. } => false,
            SignalSpec::Sum { terms } => terms.iter().all(SignalSpec::has_derivatives),
            _ => true,
        }
    }

    pub fn onset(&self) -> f64 {
        match self {
            SignalSpec::Step { onset, .. }
            | SignalSpec::Ramp { onset, .. }
            | SignalSpec::Sinusoid { onset, .. }
            | SignalSpec::FilteredRamp { onset, .. } => *onset,
            SignalSpec::Combination { base, .. } => base.onset(),
            SignalSpec::Sum { terms } => terms.iter().map(SignalSpec::onset).fold(f64::INFINITY, f64::min),
            SignalSpec::Sampled { times, .. } => times[0],
            SignalSpec::Zero => 0.0,
        }
    }

    /// Returns (f, f', f'', ∫f) at time t. Tables and combinations have no analytic jet.
    fn jet(&self, t: f64) -> Result<[f64; 4]> {
        match self {
            SignalSpec::Zero => Ok([0.0; 4]),
            SignalSpec::Step { amplitude, onset } => {
                let tau = t - onset;
                if tau < 0.0 {
                    return Ok([0.0; 4]);
                }
                Ok([*amplitude, 0.0, 0.0, amplitude * tau])
            }
            SignalSpec::Ramp { slope, onset } => {
                let tau = t - onset;
                if tau < 0.0 {
                    return Ok([0.0; 4]);
                }
                Ok([slope * tau, *slope, 0.0, 0.5 * slope * tau * tau])
            }
            SignalSpec::Sinusoid {
                amplitude,
                frequency,
                phase,
                onset,
            } => {
                let tau = t - onset;
                if tau < 0.0 {
                    return Ok([0.0; 4]);
                }
                let w = 2.0 * PI * frequency;
                let arg = w * tau + phase;
                let integral = if w == 0.0 {
                    amplitude * phase.sin() * tau
                } else {
                    amplitude * (phase.cos() - arg.cos()) / w
                };
                Ok([
                    amplitude * arg.sin(),
                    amplitude * w * arg.cos(),
                    -amplitude * w * w * arg.sin(),
                    integral,
                ])
            }
            SignalSpec::FilteredRamp { slope, pole, onset } => {
                let tau = t - onset;
                if tau < 0.0 {
                    return Ok([0.0; 4]);
                }
                let a = -pole;
                let ex = (-a * tau).exp();
                let decay = -(-a * tau).exp_m1();
                Ok([
                    slope * (tau - decay / a),
                    slope * decay,
                    slope * a * ex,
                    slope * (0.5 * tau * tau - tau / a + decay / (a * a)),
                ])
            }
            SignalSpec::Sampled { .. } => Err(Error::NoDerivatives("sampled signal".into())),
            SignalSpec::Combination { .. } => Err(Error::NoDerivatives("combination".into())),
            SignalSpec::Sum { terms } => {
                let mut acc = [0.0; 4];
                for term in terms {
                    let j = term.jet(t)?;
                    for k in 0..4 {
                        acc[k] += j[k];
                    }
                }
                Ok(acc)
            }
        }
    }

    /// The same signal multiplied by `s`, keeping its analytic form.
    pub fn scaled(&self, s: f64) -> SignalSpec {
        match self {
            SignalSpec::Zero => SignalSpec::Zero,
            SignalSpec::Step { amplitude, onset } => SignalSpec::Step {
                amplitude: amplitude * s,
                onset: *onset,
            },
            SignalSpec::Ramp { slope, onset } => SignalSpec::Ramp {
                slope: slope * s,
                onset: *onset,
            },
            SignalSpec::Sinusoid {
                amplitude,
                frequency,
                phase,
                onset,
            } => SignalSpec::Sinusoid {
                amplitude: amplitude * s,
                frequency: *frequency,
                phase: *phase,
                onset: *onset,
            },
            SignalSpec::FilteredRamp { slope, pole, onset } => SignalSpec::FilteredRamp {
                slope: slope * s,
                pole: *pole,
                onset: *onset,
            },
            SignalSpec::Sampled { times, values } => SignalSpec::Sampled {
                times: times.clone(),
                values: values.iter().map(|v| v * s).collect(),
            },
            SignalSpec::Sum { terms } => SignalSpec::Sum {
                terms: terms.iter().map(|t| t.scaled(s)).collect(),
            },
            SignalSpec::Combination {
                base,
                value,
                first,
                second,
                integral,
            } => SignalSpec::Combination {
                base: base.clone(),
                value: value * s,
                first: first * s,
                second: second * s,
                integral: integral * s,
            },
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            SignalSpec::Sampled { times, values } => interp(times, values, t),
            SignalSpec::Sum { terms } => terms.iter().map(|s| s.eval(t)).sum(),
            SignalSpec::Combination {
                base,
                value,
                first,
                second,
                integral,
            } => {
                let [f, d1, d2, int] = base.jet(t)?;
                Ok(value * f + first * d1 + second * d2 + integral * int)
            }
            _ => Ok(self.jet(t)?[0]),
        }
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        self.checked_jet(t, 1)
    }

    pub fn second_derivative(&self, t: f64) -> Result<f64> {
        self.checked_jet(t, 2)
    }

    pub fn integral(&self, t: f64) -> Result<f64> {
        match self {
            SignalSpec::Sampled { times, values } => sampled_integral(times, values, t),
            SignalSpec::Sum { terms } => terms.iter().map(|s| s.integral(t)).sum(),
            _ => self.checked_jet(t, 3),
        }
    }

    fn checked_jet(&self, t: f64, k: usize) -> Result<f64> {
        Ok(self.jet(t)?[k])
    }
}

fn check_common(amplitude: f64, onset: f64) -> Result<()> {
    if !amplitude.is_finite() || !onset.is_finite() {
        return Err(Error::NonFinite("signal parameters"));
    }
    if onset < 0.0 {
        return Err(Error::InvalidParameter("onset must be >= 0".into()));
    }
    Ok(())
}

fn interp(times: &[f64], values: &[f64], t: f64) -> Result<f64> {
    let last = *times.last().unwrap();
    if t < times[0] || t > last {
        return Err(Error::OutsideTable(t));
    }
    let k = times.partition_point(|&x| x <= t).clamp(1, times.len() - 1);
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    Ok(values[k - 1] + w * (values[k] - values[k - 1]))
}

fn sampled_integral(times: &[f64], values: &[f64], t: f64) -> Result<f64> {
    let v_t = interp(times, values, t)?;
    let mut acc = 0.0;
    for k in 1..times.len() {
        if times[k] <= t {
            acc += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
        } else {
            acc += 0.5 * (v_t + values[k - 1]) * (t - times[k - 1]);
            break;
        }
    }
    Ok(acc)
}

/// Attack on the communicated input and the four measurement channels, plus
/// the true leader input (the physical manoeuvre the attack accompanies).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AttackScenario {
    #[serde(default)]
    pub du: SignalSpec,
    #[serde(default)]
    pub dy: [SignalSpec; 4],
    #[serde(default)]
    pub leader_input: SignalSpec,
}

impl AttackScenario {
    pub fn healthy() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        self.du.validate()?;
        for s in &self.dy {
            s.validate()?;
        }
        self.leader_input.validate()
    }

    pub fn is_zero(&self) -> bool {
        self.du.is_zero() && self.dy.iter().all(SignalSpec::is_zero)
    }

    /// Attack vector in the design's state-equation order: (Δu, Δy2...).
    pub fn delta_vector(&self, t: f64, part: &OutputPartition) -> Result<Vec<f64>> {
        let (du, dy) = eval_attack(self, t)?;
        let mut out = vec![du];
        out.extend(part.y2_channels().iter().map(|&c| dy[c]));
        Ok(out)
    }

    /// Every signal, including the leader manoeuvre, multiplied by `s`.
    pub fn scaled(&self, s: f64) -> AttackScenario {
        AttackScenario {
            du: self.du.scaled(s),
            dy: std::array::from_fn(|k| self.dy[k].scaled(s)),
            leader_input: self.leader_input.scaled(s),
        }
    }

    /// Sum of two scenarios (leader inputs add as well).
    pub fn plus(&self, other: &AttackScenario) -> AttackScenario {
        fn add(a: &SignalSpec, b: &SignalSpec) -> SignalSpec {
            if a.is_zero() {
                return b.clone();
            }
            if b.is_zero() {
                return a.clone();
            }
            SignalSpec::Sum {
                terms: vec![a.clone(), b.clone()],
            }
        }
        AttackScenario {
            du: add(&self.du, &other.du),
            dy: std::array::from_fn(|k| add(&self.dy[k], &other.dy[k])),
            leader_input: add(&self.leader_input, &other.leader_input),
        }
    }
}

pub fn eval_attack(sc: &AttackScenario, t: f64) -> Result<(f64, Vector4<f64>)> {
    let du = sc.du.eval(t)?;
    let mut dy = Vector4::zeros();
    for k in 0..4 {
        dy[k] = sc.dy[k].eval(t)?;
    }
    Ok((du, dy))
}

pub fn inject(u_lead: f64, y: &Vector4<f64>, sc: &AttackScenario, t: f64) -> Result<(f64, Vector4<f64>)> {
    let (du, dy) = eval_attack(sc, t)?;
    Ok((u_lead + du, y + dy))
}

/// Componentwise attack bounds: communicated input and each measurement channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackBounds {
    pub du: f64,
    pub dy: [f64; 4],
}

impl AttackBounds {
    /// `delta_bar` covers (Δu, filtered channels), `dy1_bar` the unfiltered ones.
    pub fn from_design(delta_bar: &[f64], dy1_bar: f64, part: &OutputPartition) -> Result<Self> {
        if delta_bar.len() != 1 + part.h {
            return Err(Error::InvalidParameter(format!(
                "attack bound needs {} entries",
                1 + part.h
            )));
        }
        let mut dy = [dy1_bar; 4];
        for (k, &c) in part.y2_channels().iter().enumerate() {
            dy[c] = delta_bar[1 + k];
        }
        Ok(Self { du: delta_bar[0], dy })
    }

    pub fn check(&self, t: f64, du: f64, dy: &Vector4<f64>) -> Result<()> {
        if du.abs() > self.du {
            return Err(Error::AttackBound {
                t,
                signal: "du".into(),
                value: du,
                bound: self.du,
            });
        }
        for k in 0..4 {
            if dy[k].abs() > self.dy[k] {
                return Err(Error::AttackBound {
                    t,
                    signal: format!("dy.{}", CHANNEL_NAMES[k]),
                    value: dy[k],
                    bound: self.dy[k],
                });
            }
        }
        Ok(())
    }
}

/// Which lag the attacker uses when shaping the input attack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StealthLag {
    /// the leader's true lag
    #[default]
    True,
    /// the follower's model of it
    Nominal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StealthOptions {
    /// sign of the gap attack relative to the integral of the relative-velocity attack
    pub integral_sign: f64,
    pub lag: StealthLag,
}

impl Default for StealthOptions {
    fn default() -> Self {
        Self {
            integral_sign: 1.0,
            lag: StealthLag::True,
        }
    }
}

/// Builds an attack that hides a leader manoeuvre.
///
/// The leader applies −Δu while the attacker adds Δu = τ·Δÿ1 + Δẏ1 to the
/// broadcast, so the follower receives the unmanoeuvred input. The relative
/// velocity reading is shifted by Δy1 and the gap reading by ±∫Δy1, which
/// cancel the leader's true deviation.
pub fn make_stealthy(dy1_profile: &SignalSpec, params: &PlatoonParams, opts: StealthOptions) -> Result<AttackScenario> {
    dy1_profile.validate()?;
    if !dy1_profile.has_derivatives() {
        return Err(Error::NoDerivatives(format!("{dy1_profile:?}")));
    }
    if dy1_profile.is_zero() {
        return Ok(AttackScenario::healthy());
    }
    let tau = match opts.lag {
        StealthLag::True => params.leader.tau,
        StealthLag::Nominal => params.tau_hat(),
    };
    let base = Box::new(dy1_profile.clone());
    let du = SignalSpec::Combination {
        base: base.clone(),
        value: 0.0,
        first: 1.0,
        second: tau,
        integral: 0.0,
    };
    let leader_input = SignalSpec::Combination {
        base: base.clone(),
        value: 0.0,
        first: -1.0,
        second: -tau,
        integral: 0.0,
    };
    let mut dy: [SignalSpec; 4] = Default::default();
    dy[CH_RELVEL] = dy1_profile.clone();
    dy[CH_GAP] = SignalSpec::Combination {
        base,
        value: 0.0,
        first: 0.0,
        second: 0.0,
        integral: opts.integral_sign,
    };
    Ok(AttackScenario { du, dy, leader_input })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Healthy,
    Stealthy,
    Quantifiable,
    NonStealthy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackClass {
    pub kind: AttackKind,
    pub reason: String,
}

/// Settings for the numeric relation checks in [`classify`].
#[derive(Clone, Copy, Debug)]
pub struct ClassifyOptions {
    pub horizon: f64,
    pub sample_dt: f64,
    pub tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            horizon: 60.0,
            sample_dt: 0.01,
            tol: 1e-9,
        }
    }
}

pub fn classify(sc: &AttackScenario, design: &OutputPartition, params: &PlatoonParams) -> AttackClass {
    classify_with(sc, design, params, ClassifyOptions::default())
}

pub fn classify_with(
    sc: &AttackScenario,
    design: &OutputPartition,
    params: &PlatoonParams,
    opts: ClassifyOptions,
) -> AttackClass {
    if sc.is_zero() {
        return AttackClass {
            kind: AttackKind::Healthy,
            reason: "all attack signals are identically zero".into(),
        };
    }
    let y1 = design.y1_channels();
    let y1_zero = y1.iter().all(|&c| sc.dy[c].is_zero());
    if y1_zero {
        let names: Vec<&str> = y1.iter().map(|&c| CHANNEL_NAMES[c]).collect();
        return AttackClass {
            kind: AttackKind::Quantifiable,
            reason: format!(
                "no attack on the unfiltered channel(s) [{}]; every remaining attack enters the state equation",
                names.join(", ")
            ),
        };
    }
    if y1 != [CH_RELVEL] {
        return AttackClass {
            kind: AttackKind::NonStealthy,
            reason: "unfiltered-channel attack present; stealth relations are defined for a relative-velocity-only y1"
                .into(),
        };
    }
    match stealth_residual(sc, params, opts) {
        Ok((res, sign)) if res <= opts.tol => AttackClass {
            kind: AttackKind::Stealthy,
            reason: format!(
                "input attack equals lag·d²/dt² + d/dt of the relative-velocity attack, gap attack equals {}∫ of it, velocity/acceleration attacks zero (max residual {res:.2e})",
                if sign > 0.0 { "+" } else { "-" }
            ),
        },
        Ok((res, _)) => AttackClass {
            kind: AttackKind::NonStealthy,
            reason: format!(
                "relative-velocity attack present and the stealth relations do not hold (max residual {res:.3e})"
            ),
        },
        Err(e) => AttackClass {
            kind: AttackKind::NonStealthy,
            reason: format!("relative-velocity attack present; stealth relations not checkable: {e}"),
        },
    }
}

/// Largest residual of the stealth relations over the horizon, minimised over
/// the choice of lag (true or modelled) and gap-attack sign.
fn stealth_residual(sc: &AttackScenario, params: &PlatoonParams, opts: ClassifyOptions) -> Result<(f64, f64)> {
    if !sc.dy[2].is_zero() || !sc.dy[3].is_zero() {
        return Ok((f64::INFINITY, 1.0));
    }
    let dy1 = &sc.dy[CH_RELVEL];
    let steps = (opts.horizon / opts.sample_dt).ceil() as usize;
    let h = 1e-4;
    let mut best = (f64::INFINITY, 1.0);
    for tau in [params.leader.tau, params.tau_hat()] {
        for sign in [1.0, -1.0] {
            let mut worst: f64 = 0.0;
            for k in 0..=steps {
                let t = (k as f64 * opts.sample_dt).min(opts.horizon);
                let (d1, d2, int) = if dy1.has_derivatives() {
                    (dy1.derivative(t)?, dy1.second_derivative(t)?, dy1.integral(t)?)
                } else {
                    let f = |s: f64| dy1.eval(s);
                    let lo = (t - h).max(0.0);
                    let hi = t + h;
                    let d1 = (f(hi)? - f(lo)?) / (hi - lo);
                    let d2 = (f(hi)? - 2.0 * f(0.5 * (hi + lo))? + f(lo)?) / (0.25 * (hi - lo) * (hi - lo));
                    (d1, d2, dy1.integral(t)?)
                };
                let r_u = sc.du.eval(t)? - (tau * d2 + d1);
                let r_gap = sc.dy[CH_GAP].eval(t)? - sign * int;
                let scale = 1.0 + d1.abs() + d2.abs() + int.abs();
                worst = worst.max(r_u.abs() / scale).max(r_gap.abs() / scale);
            }
            if worst < best.0 {
                best = (worst, sign);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    #[test]
    fn eval_examples() {
        let sc = AttackScenario::healthy();
        for t in [0.0, 1.0, 50.0] {
            let (du, dy) = eval_attack(&sc, t).unwrap();
            assert_eq!(du, 0.0);
            assert_eq!(dy, Vector4::zeros());
        }
        let s = SignalSpec::Step {
            amplitude: 2.0,
            onset: 10.0,
        };
        assert_eq!(s.eval(9.99).unwrap(), 0.0);
        assert_eq!(s.eval(10.0).unwrap(), 2.0);
        let sin = SignalSpec::Sinusoid {
            amplitude: 1.0,
            frequency: 0.5,
            phase: 0.0,
            onset: 0.0,
        };
        assert_relative_eq!(sin.eval(0.5).unwrap(), (2.0 * PI * 0.5 * 0.5).sin(), epsilon = 1e-15);
        assert_relative_eq!(
            sin.eval(0.5).unwrap(),
            1.0_f64.sqrt() * (PI / 2.0).sin(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn filtered_ramp_jet_is_consistent() {
        let s = SignalSpec::FilteredRamp {
            slope: 1.5,
            pole: -2.0,
            onset: 1.0,
        };
        let h = 1e-5;
        for t in [1.3, 2.0, 5.0] {
            let fd1 = (s.eval(t + h).unwrap() - s.eval(t - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(s.derivative(t).unwrap(), fd1, epsilon = 1e-8);
            let fd2 = (s.derivative(t + h).unwrap() - s.derivative(t - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(s.second_derivative(t).unwrap(), fd2, epsilon = 1e-7);
            let fdi = (s.integral(t + h).unwrap() - s.integral(t - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(s.eval(t).unwrap(), fdi, epsilon = 1e-8);
        }
        assert_eq!(s.eval(0.5).unwrap(), 0.0);
    }

    #[test]
    fn sampled_table() {
        let s = SignalSpec::Sampled {
            times: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 2.0, 2.0],
        };
        assert_relative_eq!(s.eval(0.5).unwrap(), 1.0);
        assert_relative_eq!(s.integral(2.0).unwrap(), 3.0);
        assert!(matches!(s.eval(2.5), Err(Error::OutsideTable(_))));
        assert!(s.derivative(0.5).is_err());
    }

    #[test]
    fn inject_examples() {
        let y = Vector4::new(7.45, 0.0, 8.0, 0.0);
        let (u, ya) = inject(0.3, &y, &AttackScenario::healthy(), 3.0).unwrap();
        assert_eq!(u, 0.3);
        assert_eq!(ya, y);
        let mut sc = AttackScenario::healthy();
        sc.dy[0] = SignalSpec::Step {
            amplitude: 5.0,
            onset: 0.0,
        };
        let (_, ya) = inject(0.0, &y, &sc, 1.0).unwrap();
        assert_relative_eq!(ya[0] - y[0], 5.0);
    }

    #[test]
    fn stealthy_generator() {
        let params = presets::table1_platoon();
        let sc = make_stealthy(&SignalSpec::Zero, &params, StealthOptions::default()).unwrap();
        assert!(sc.is_zero());
        let prof = SignalSpec::FilteredRamp {
            slope: 1.0,
            pole: -2.0,
            onset: 0.0,
        };
        let sc = make_stealthy(&prof, &params, StealthOptions::default()).unwrap();
        let t = 1.7;
        let want_du = 0.1 * prof.second_derivative(t).unwrap() + prof.derivative(t).unwrap();
        assert_relative_eq!(sc.du.eval(t).unwrap(), want_du, epsilon = 1e-14);
        assert_relative_eq!(sc.dy[0].eval(t).unwrap(), prof.integral(t).unwrap(), epsilon = 1e-14);
        assert_relative_eq!(sc.leader_input.eval(t).unwrap(), -want_du, epsilon = 1e-14);
        // constant profile from t = 0: input attack vanishes, gap attack grows linearly
        let c = SignalSpec::Step {
            amplitude: 0.5,
            onset: 0.0,
        };
        let sc = make_stealthy(&c, &params, StealthOptions::default()).unwrap();
        assert_eq!(sc.du.eval(3.0).unwrap(), 0.0);
        assert_relative_eq!(sc.dy[0].eval(3.0).unwrap(), 1.5);
        let table = SignalSpec::Sampled {
            times: vec![0.0, 1.0],
            values: vec![0.0, 1.0],
        };
        assert!(make_stealthy(&table, &params, StealthOptions::default()).is_err());
    }

    #[test]
    fn classify_examples() {
        let params = presets::table1_platoon();
        let design = presets::table1_partition();
        let step = |a: f64| SignalSpec::Step {
            amplitude: a,
            onset: 5.0,
        };
        let mut q = AttackScenario::healthy();
        q.du = step(0.5);
        q.dy[0] = step(1.0);
        q.dy[2] = step(-1.0);
        q.dy[3] = step(-0.5);
        assert_eq!(classify(&q, &design, &params).kind, AttackKind::Quantifiable);

        let prof = SignalSpec::FilteredRamp {
            slope: 1.0,
            pole: -2.0,
            onset: 5.0,
        };
        let s = make_stealthy(&prof, &params, StealthOptions::default()).unwrap();
        assert_eq!(classify(&s, &design, &params).kind, AttackKind::Stealthy);

        let mut ns = AttackScenario::healthy();
        ns.dy[1] = SignalSpec::Sinusoid {
            amplitude: 1.0,
            frequency: 0.1,
            phase: 0.0,
            onset: 0.0,
        };
        assert_eq!(classify(&ns, &design, &params).kind, AttackKind::NonStealthy);
        assert_eq!(
            classify(&AttackScenario::healthy(), &design, &params).kind,
            AttackKind::Healthy
        );
    }

    #[test]
    fn bounds_follow_the_design() {
        let part = presets::table1_partition();
        let b = AttackBounds::from_design(&[10.0, 1.0, 2.0, 3.0], 0.5, &part).unwrap();
        assert_eq!(b.dy, [1.0, 0.5, 2.0, 3.0]);
        assert!(b.check(0.0, 9.0, &Vector4::new(0.9, 0.1, 1.0, 1.0)).is_ok());
        assert!(b.check(0.0, 11.0, &Vector4::zeros()).is_err());
        assert!(b.check(0.0, 0.0, &Vector4::new(0.0, 0.6, 0.0, 0.0)).is_err());
    }

    #[test]
    fn scaling_is_pointwise() {
        let params = presets::table1_platoon();
        let prof = SignalSpec::FilteredRamp {
            slope: 1.0,
            pole: -1.0,
            onset: 1.0,
        };
        let sc = make_stealthy(&prof, &params, StealthOptions::default()).unwrap();
        let mut mixed = sc.clone();
        mixed.dy[3] = SignalSpec::Sampled {
            times: vec![0.0, 10.0],
            values: vec![0.0, 1.0],
        };
        for t in [0.0, 1.5, 3.0, 7.0] {
            let (du, dy) = eval_attack(&mixed, t).unwrap();
            let (du2, dy2) = eval_attack(&mixed.scaled(-2.5), t).unwrap();
            assert_relative_eq!(du2, -2.5 * du, epsilon = 1e-12);
            assert_relative_eq!(dy2, dy * -2.5, epsilon = 1e-12);
        }
        let scaled = sc.scaled(3.0);
        assert_eq!(
            classify(&scaled, &presets::table1_partition(), &params).kind,
            AttackKind::Stealthy
        );
    }
}
