//! Fixed-step closed-loop simulation of plant, controller, attack, observer,
//! detector and estimator.

use nalgebra::{DMatrix, DVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::attack_lab::{eval_attack, AttackBounds, AttackScenario};
use crate::detection::{
    channel_thresholds, e2dot_bounds, healthy_error_bounds, BoundInputs, ChannelThreshold, DetectionEvent, Detector,
};
use crate::error::{Error, Result};
use crate::estimation::{build_estimator, estimate, EstimatorGain};
use crate::extended_system::{
    build_extended, build_partitioned_with, CompletionGain, OutputPartition, PartitionedSystem,
};
use crate::platoon_model::{
    measure, plant_derivative, NoiseDistribution, NoiseSource, NoiseSpec, PlatoonParams, PlatoonState,
};
use crate::presets;
use crate::smo_core::{eoi_derivative, observer_derivative_with, switching_injection, ObserverParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

/// Everything that defines the platoon, the observer design and the uncertainty model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSetup {
    pub platoon: PlatoonParams,
    pub initial: PlatoonState,
    pub partition: OutputPartition,
    pub a_fil: Vec<f64>,
    #[serde(default)]
    pub completion: CompletionGain,
    pub observer: ObserverParams,
    /// measurement noise bounds, original channel order
    pub noise_bounds: [f64; 4],
    #[serde(default)]
    pub noise_distribution: NoiseDistribution,
    /// bound on the model-uncertainty signal
    pub eta_model: f64,
    /// attack bounds on (Δu, filtered channels)
    pub delta_bar: Vec<f64>,
    /// attack bound on each unfiltered channel
    pub dy1_bar: f64,
    /// horizon over which the error envelope is maximised
    #[serde(default = "default_bound_horizon")]
    pub bound_horizon: f64,
}

fn default_bound_horizon() -> f64 {
    60.0
}

impl SimSetup {
    pub fn table1() -> Self {
        Self {
            platoon: presets::table1_platoon(),
            initial: presets::table1_initial_state(),
            partition: presets::table1_partition(),
            a_fil: vec![presets::TABLE1_A_FIL; 3],
            completion: presets::table1_completion(),
            observer: presets::table1_observer(),
            noise_bounds: presets::TABLE1_NOISE,
            noise_distribution: NoiseDistribution::Uniform,
            eta_model: presets::TABLE1_ETA_MODEL,
            delta_bar: presets::TABLE1_DELTA_BAR.to_vec(),
            dy1_bar: presets::TABLE1_DY1_BAR,
            bound_horizon: 60.0,
        }
    }

    /// (model uncertainty, noise bound of each filtered channel)
    pub fn eta_bar(&self) -> DVector<f64> {
        let mut v = vec![self.eta_model];
        v.extend(self.partition.y2_channels().iter().map(|&c| self.noise_bounds[c]));
        DVector::from_vec(v)
    }

    /// noise bound of each unfiltered channel
    pub fn zeta1_bar(&self) -> DVector<f64> {
        DVector::from_vec(
            self.partition
                .y1_channels()
                .iter()
                .map(|&c| self.noise_bounds[c])
                .collect(),
        )
    }
}

/// Run controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub integrator: Integrator,
    pub noiseless: bool,
    /// keep every n-th step in the trajectory
    pub record_every: usize,
    pub stop_on_crash: bool,
    pub enforce_attack_bounds: bool,
    /// initial offset of x̂2 from the true value (empty for none)
    pub observer_offset: Vec<f64>,
    /// minimum dwell before a sign change of ν counts; 2·dt when absent
    pub dwell_min: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 60.0,
            seed: 0,
            integrator: Integrator::Euler,
            noiseless: false,
            record_every: 1,
            stop_on_crash: true,
            enforce_attack_bounds: true,
            observer_offset: Vec::new(),
            dwell_min: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be > 0".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter("horizon must be > 0".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Design quantities shared by every run of one setup.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub setup: SimSetup,
    pub sys: PartitionedSystem,
    pub thresholds: Vec<ChannelThreshold>,
    pub estimator: EstimatorGain,
    pub attack_bounds: AttackBounds,
    a22_s: DMatrix<f64>,
    y1_channels: Vec<usize>,
    y2_channels: Vec<usize>,
}

pub fn prepare(setup: &SimSetup) -> Result<Prepared> {
    setup.platoon.validate()?;
    let ext = build_extended(&setup.platoon, &setup.partition, &setup.a_fil)?;
    let sys = build_partitioned_with(&ext, &setup.completion)?;
    setup.observer.validate(sys.p)?;
    let inp = BoundInputs {
        eta_bar: setup.eta_bar(),
        zeta1_bar: setup.zeta1_bar(),
        horizon: setup.bound_horizon,
    };
    let e1_init = DVector::zeros(sys.nx1());
    let mut bounds = healthy_error_bounds(0.0, &e1_init, &sys, &inp, None)?;
    let a22_s = setup.observer.a22_s_matrix();
    let (up, lo) = e2dot_bounds(&sys, &bounds.e1_abs, &inp, &setup.observer.rho, Some(&a22_s));
    bounds.e2dot_upper0 = Some(up);
    bounds.e2dot_lower0 = Some(lo);
    let thresholds = channel_thresholds(&bounds, &setup.observer.rho, &setup.observer.a_nu)?;
    let estimator = build_estimator(&sys, &inp.eta_bar)?;
    let attack_bounds = AttackBounds::from_design(&setup.delta_bar, setup.dy1_bar, &setup.partition)?;
    Ok(Prepared {
        y1_channels: setup.partition.y1_channels().to_vec(),
        y2_channels: setup.partition.y2_channels().to_vec(),
        setup: setup.clone(),
        sys,
        thresholds,
        estimator,
        attack_bounds,
        a22_s,
    })
}

/// Uniformly sampled record of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub state: Vec<[f64; 7]>,
    /// attacked, noisy measurement in original channel order
    pub y: Vec<[f64; 4]>,
    pub z: Vec<Vec<f64>>,
    pub xhat: Vec<Vec<f64>>,
    pub e_y: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
    pub nu_fil: Vec<Vec<f64>>,
    pub threshold: Vec<Vec<f64>>,
    pub delta_hat: Vec<Vec<f64>>,
    pub delta_true: Vec<Vec<f64>>,
    pub du: Vec<f64>,
    pub dy: Vec<[f64; 4]>,
    /// constant estimation half-width
    pub delta_halfwidth: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub crashed: bool,
    pub crash_time: Option<f64>,
    pub relative_velocity_at_crash: Option<f64>,
    pub min_distance: f64,
    pub first_detection_time: Vec<Option<f64>>,
    pub detections: Vec<DetectionEvent>,
    /// mean of Δ̂ − Δ over the last 20% of the run
    pub steady_state_estimation_error: Vec<f64>,
    /// mean of Δ̂ over the last 20% of the run
    pub steady_state_estimate: Vec<f64>,
    /// max over time and channels of |ν_fil| − ν̄
    pub max_threshold_margin: f64,
    /// max over time and channels of ν̄ − ρ
    pub max_threshold_over_rho: f64,
    /// time after which ‖e_y‖∞ stays within the boundary layer
    pub sliding_time: Option<f64>,
    pub steps: usize,
    pub final_time: f64,
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub trajectory: Trajectory,
    pub metrics: RunMetrics,
}

/// Per-evaluation signals that are recorded but not integrated.
struct Aux {
    y: Vector4<f64>,
    e_y: DVector<f64>,
    nu: DVector<f64>,
    du: f64,
    dy: Vector4<f64>,
}

/// Composite state: plant (7), output filter (h), x̂1, x̂2, ν_fil.
struct Layout {
    h: usize,
    m: usize,
    p: usize,
}

impl Layout {
    fn z(&self) -> usize {
        7
    }
    fn x1(&self) -> usize {
        7 + self.h
    }
    fn x2(&self) -> usize {
        7 + self.h + self.m
    }
    fn nf(&self) -> usize {
        7 + self.h + self.m + self.p
    }
    fn len(&self) -> usize {
        7 + self.h + self.m + 2 * self.p
    }
}

fn rhs(
    prep: &Prepared,
    lay: &Layout,
    sc: &AttackScenario,
    t: f64,
    x: &DVector<f64>,
    noise: &Vector4<f64>,
) -> Result<(DVector<f64>, Aux)> {
    let sys = &prep.sys;
    let setup = &prep.setup;
    let state = PlatoonState::from_array(&x.as_slice()[..7]);
    let clean = measure(&state, setup.platoon.leader.length, noise);
    let (du, dy) = eval_attack(sc, t)?;
    let y = clean + dy;
    let u_lead = sc.leader_input.eval(t)?;
    // the broadcast carries the leader's applied input plus the attack
    let u_recv = u_lead + du;
    let dplant = plant_derivative(&state, u_lead, u_recv, &y, &setup.platoon)?;

    let z = x.rows(lay.z(), lay.h);
    let xhat1 = x.rows(lay.x1(), lay.m).into_owned();
    let xhat2 = x.rows(lay.x2(), lay.p).into_owned();
    let nu_fil = x.rows(lay.nf(), lay.p).into_owned();

    let y2 = DVector::from_iterator(lay.h, prep.y2_channels.iter().map(|&c| y[c]));
    let dz = &sys.ext.a_f * (z - &y2);
    let mut y_obs = DVector::zeros(lay.p);
    for (k, &c) in prep.y1_channels.iter().enumerate() {
        y_obs[k] = y[c];
    }
    y_obs.rows_mut(lay.p - lay.h, lay.h).copy_from(&z);

    let mut u = DVector::zeros(2 + lay.h);
    u[0] = u_recv;
    u[1] = state.u_fol;
    u.rows_mut(2, lay.h).copy_from(&sys.ext.c2);

    let e_y0 = &xhat2 + &sys.c_off - &y_obs;
    let nu = switching_injection(&e_y0, &setup.observer.rho, setup.observer.sign_smoothing);
    let od = observer_derivative_with(&xhat1, &xhat2, &u, &y_obs, &nu, sys, &prep.a22_s);
    let dnf = eoi_derivative(&nu_fil, &nu, &setup.observer.a_nu);

    let mut dx = DVector::zeros(lay.len());
    dx.rows_mut(0, 7).copy_from_slice(&dplant);
    dx.rows_mut(lay.z(), lay.h).copy_from(&dz);
    dx.rows_mut(lay.x1(), lay.m).copy_from(&od.dxhat1);
    dx.rows_mut(lay.x2(), lay.p).copy_from(&od.dxhat2);
    dx.rows_mut(lay.nf(), lay.p).copy_from(&dnf);
    Ok((
        dx,
        Aux {
            y,
            e_y: od.e_y,
            nu,
            du,
            dy,
        },
    ))
}

fn initial_state(prep: &Prepared, lay: &Layout, cfg: &SimConfig) -> Result<DVector<f64>> {
    let sys = &prep.sys;
    let init = prep.setup.initial;
    let clean = measure(&init, prep.setup.platoon.leader.length, &Vector4::zeros());
    let mut x_e = DVector::zeros(sys.n);
    x_e.rows_mut(0, 6).copy_from(&init.physical());
    for (k, &c) in prep.y2_channels.iter().enumerate() {
        x_e[6 + k] = clean[c];
    }
    let (x1, mut x2) = sys.to_partitioned(&x_e);
    if !cfg.observer_offset.is_empty() {
        if cfg.observer_offset.len() != lay.p {
            return Err(Error::InvalidParameter(format!(
                "observer_offset needs {} entries",
                lay.p
            )));
        }
        x2 += DVector::from_column_slice(&cfg.observer_offset);
    }
    let mut x = DVector::zeros(lay.len());
    x.rows_mut(0, 7).copy_from_slice(&init.to_array());
    x.rows_mut(lay.z(), lay.h).copy_from(&x_e.rows(6, lay.h));
    x.rows_mut(lay.x1(), lay.m).copy_from(&x1);
    x.rows_mut(lay.x2(), lay.p).copy_from(&x2);
    Ok(x)
}

/// One integration step; returns the new state and the signals at the step start.
fn step(
    prep: &Prepared,
    lay: &Layout,
    sc: &AttackScenario,
    cfg: &SimConfig,
    t: f64,
    x: &DVector<f64>,
    noise: &Vector4<f64>,
) -> Result<(DVector<f64>, Aux)> {
    let dt = cfg.dt;
    let (k1, aux) = rhs(prep, lay, sc, t, x, noise)?;
    let next = match cfg.integrator {
        Integrator::Euler => x + &k1 * dt,
        Integrator::Rk4 => {
            let (k2, _) = rhs(prep, lay, sc, t + 0.5 * dt, &(x + &k1 * (0.5 * dt)), noise)?;
            let (k3, _) = rhs(prep, lay, sc, t + 0.5 * dt, &(x + &k2 * (0.5 * dt)), noise)?;
            let (k4, _) = rhs(prep, lay, sc, t + dt, &(x + &k3 * dt), noise)?;
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    };
    Ok((next, aux))
}

pub fn run(prep: &Prepared, sc: &AttackScenario, cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    sc.validate()?;
    let sys = &prep.sys;
    let lay = Layout {
        h: sys.h,
        m: sys.nx1(),
        p: sys.p,
    };
    let q = 1 + sys.h;
    let noise_spec = NoiseSpec {
        bound_per_channel: if cfg.noiseless {
            [0.0; 4]
        } else {
            prep.setup.noise_bounds
        },
        seed: cfg.seed,
        distribution: prep.setup.noise_distribution,
    };
    noise_spec.validate()?;
    let mut noise = NoiseSource::new(noise_spec);
    let dwell = cfg.dwell_min.unwrap_or(2.0 * cfg.dt);
    let mut detector = Detector::new(prep.thresholds.clone(), dwell);
    let rho = &prep.setup.observer.rho;
    let eps = prep.setup.observer.sign_smoothing;
    let length = prep.setup.platoon.leader.length;

    let mut x = initial_state(prep, &lay, cfg)?;
    let n_steps = cfg.steps();
    let steady_from = 0.8 * cfg.horizon;

    let mut traj = Trajectory {
        delta_halfwidth: prep.estimator.delta.iter().copied().collect(),
        ..Default::default()
    };
    let mut crash_time = None;
    let mut crash_relvel = None;
    let mut min_distance = f64::INFINITY;
    let mut max_margin = f64::NEG_INFINITY;
    let mut max_over_rho = f64::NEG_INFINITY;
    let mut last_outside: Option<f64> = None;
    let mut ss_err = vec![0.0; q];
    let mut ss_est = vec![0.0; q];
    let mut ss_count = 0usize;
    let mut t = 0.0;
    let mut k = 0usize;

    loop {
        let state = PlatoonState::from_array(&x.as_slice()[..7]);
        let gap = state.true_gap(length);
        min_distance = min_distance.min(gap);
        if gap <= 0.0 && crash_time.is_none() {
            crash_time = Some(t);
            crash_relvel = Some(state.v_lead - state.v_fol);
            if cfg.stop_on_crash {
                break;
            }
        }
        if k >= n_steps {
            break;
        }
        let w = noise.sample();
        let (next, aux) = step(prep, &lay, sc, cfg, t, &x, &w)?;
        if cfg.enforce_attack_bounds {
            prep.attack_bounds.check(t, aux.du, &aux.dy)?;
        }
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("simulation state"));
        }
        let t_next = (k + 1) as f64 * cfg.dt;
        let nu_fil = next.rows(lay.nf(), lay.p).into_owned();
        detector.step(t_next, &aux.nu, &nu_fil);
        let est = estimate(&nu_fil, &prep.estimator);
        let delta_true = sc.delta_vector(t, &prep.setup.partition)?;

        if aux.e_y.amax() > eps {
            last_outside = Some(t);
        }
        for c in 0..lay.p {
            let thr = detector.threshold()[c];
            max_margin = max_margin.max(nu_fil[c].abs() - thr);
            max_over_rho = max_over_rho.max(thr - rho[c]);
        }
        if t_next >= steady_from - 1e-12 {
            for c in 0..q {
                ss_err[c] += est.center[c] - delta_true[c];
                ss_est[c] += est.center[c];
            }
            ss_count += 1;
        }
        if k.is_multiple_of(cfg.record_every) {
            traj.t.push(t);
            traj.state.push(state.to_array());
            traj.y.push([aux.y[0], aux.y[1], aux.y[2], aux.y[3]]);
            traj.z.push(x.rows(lay.z(), lay.h).iter().copied().collect());
            traj.xhat
                .push(x.rows(lay.x1(), lay.m + lay.p).iter().copied().collect());
            traj.e_y.push(aux.e_y.iter().copied().collect());
            traj.nu.push(aux.nu.iter().copied().collect());
            traj.nu_fil.push(x.rows(lay.nf(), lay.p).iter().copied().collect());
            traj.threshold.push(detector.threshold().to_vec());
            traj.delta_hat.push(est.center.iter().copied().collect());
            traj.delta_true.push(delta_true);
            traj.du.push(aux.du);
            traj.dy.push([aux.dy[0], aux.dy[1], aux.dy[2], aux.dy[3]]);
        }
        x = next;
        t = t_next;
        k += 1;
    }

    let mut first = vec![None; lay.p];
    for ev in &detector.events {
        if first[ev.channel].is_none() {
            first[ev.channel] = Some(ev.t);
        }
    }
    let (ss_err, ss_est) = if ss_count > 0 {
        (
            ss_err.iter().map(|v| v / ss_count as f64).collect(),
            ss_est.iter().map(|v| v / ss_count as f64).collect(),
        )
    } else {
        (vec![f64::NAN; q], vec![f64::NAN; q])
    };
    let sliding_time = match last_outside {
        None => Some(0.0),
        Some(tl) if tl + cfg.dt < t => Some(tl + cfg.dt),
        Some(_) => None,
    };
    Ok(SimOutput {
        trajectory: traj,
        metrics: RunMetrics {
            crashed: crash_time.is_some(),
            crash_time,
            relative_velocity_at_crash: crash_relvel,
            min_distance,
            first_detection_time: first,
            detections: detector.events.clone(),
            steady_state_estimation_error: ss_err,
            steady_state_estimate: ss_est,
            max_threshold_margin: max_margin,
            max_threshold_over_rho: max_over_rho,
            sliding_time,
            steps: k,
            final_time: t,
        },
    })
}

/// Sup-norm differences between two runs sampled on the same grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDiff {
    pub output: f64,
    pub nu_fil: f64,
    pub samples: usize,
}

pub fn compare_runs(a: &Trajectory, b: &Trajectory) -> RunDiff {
    let n = a.len().min(b.len());
    let mut output: f64 = 0.0;
    let mut nu_fil: f64 = 0.0;
    for k in 0..n {
        for c in 0..4 {
            output = output.max((a.y[k][c] - b.y[k][c]).abs());
        }
        for (x, y) in a.nu_fil[k].iter().zip(&b.nu_fil[k]) {
            nu_fil = nu_fil.max((x - y).abs());
        }
    }
    RunDiff {
        output,
        nu_fil,
        samples: n,
    }
}

/// Crash test on a recorded trajectory: first sample whose true gap is <= 0.
pub fn crash_check(traj: &Trajectory, leader_length: f64) -> Option<(f64, f64)> {
    traj.state.iter().zip(&traj.t).find_map(|(s, &t)| {
        let st = PlatoonState::from_array(s);
        (st.true_gap(leader_length) <= 0.0).then_some((t, st.v_lead - st.v_fol))
    })
}

/// Tolerance for calling two runs indistinguishable.
///
/// A masked manoeuvre cancels exactly in continuous time; on the grid the
/// leader's deviation is integrated by the scheme while the attack signals are
/// evaluated exactly, which leaves a residue proportional to the step.
pub fn tol_stealth(cfg: &SimConfig) -> f64 {
    match cfg.integrator {
        Integrator::Euler => 10.0 * cfg.dt,
        Integrator::Rk4 => 10.0 * cfg.dt.powi(2).max(1e-9),
    }
}
