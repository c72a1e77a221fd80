//! Run configuration files, CSV and JSON output, and the plot script.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::attack_lab::{classify, make_stealthy, AttackClass, AttackScenario, SignalSpec, StealthLag, StealthOptions};
use crate::error::{Error, Result};
use crate::estimation::{estimate, EstimatorGain};
use crate::extended_system::{enumerate_valid_designs, DesignReport, DEFAULT_TOL_MARGINAL};
use crate::platoon_model::CHANNEL_NAMES;
use crate::sim_engine::{prepare, run, Prepared, RunMetrics, SimConfig, SimOutput, SimSetup, Trajectory};

/// A masked leader manoeuvre generated from a relative-velocity attack profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StealthySpec {
    pub profile: SignalSpec,
    #[serde(default = "plus_one")]
    pub integral_sign: f64,
    #[serde(default)]
    pub lag: StealthLag,
}

fn plus_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<AttackScenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stealthy: Option<StealthySpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// multipliers applied to every attack signal
    #[serde(default = "unit_scale")]
    pub scales: Vec<f64>,
    /// seeds run for each scale
    #[serde(default = "first_seed")]
    pub seeds: Vec<u64>,
}

fn unit_scale() -> Vec<f64> {
    vec![1.0]
}

fn first_seed() -> Vec<u64> {
    vec![0]
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            scales: unit_scale(),
            seeds: first_seed(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    /// named base setup; currently only "table1"
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// full setup, used when no preset is given
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup: Option<SimSetup>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            preset: Some("table1".into()),
            setup: None,
            sim: SimConfig::default(),
            attack: AttackSection::default(),
            sweep: None,
        }
    }
}

/// A configuration with the setup and the attack made concrete.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub name: String,
    pub setup: SimSetup,
    pub sim: SimConfig,
    pub scenario: AttackScenario,
    pub sweep: SweepSpec,
}

pub fn preset_setup(name: &str) -> Result<SimSetup> {
    match name {
        "table1" => Ok(SimSetup::table1()),
        other => Err(Error::Config(format!("unknown preset '{other}' (known: table1)"))),
    }
}

fn parse_message(text: &str) -> std::result::Result<RunConfig, String> {
    toml::from_str(text).map_err(|e: toml::de::Error| e.message().to_string())
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_message(text).map_err(Error::Config)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_message(&text).map_err(|m| Error::Config(format!("{}: {m}", path.display())))
}

pub fn config_to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))
}

impl RunConfig {
    /// `preset` overrides whatever the file names.
    pub fn resolve(&self, preset: Option<&str>) -> Result<Resolved> {
        let setup = match (preset.or(self.preset.as_deref()), &self.setup) {
            (Some(_), Some(_)) if preset.is_none() => {
                return Err(Error::Config("give either preset or [setup], not both".into()))
            }
            (Some(p), _) => preset_setup(p)?,
            (None, Some(s)) => s.clone(),
            (None, None) => {
                return Err(Error::Config(
                    "no setup: give preset = \"table1\" or a [setup] table".into(),
                ))
            }
        };
        setup.platoon.validate()?;
        self.sim.validate()?;
        let scenario = match (&self.attack.scenario, &self.attack.stealthy) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either attack.scenario or attack.stealthy, not both".into(),
                ))
            }
            (Some(sc), None) => sc.clone(),
            (None, Some(st)) => make_stealthy(
                &st.profile,
                &setup.platoon,
                StealthOptions {
                    integral_sign: st.integral_sign,
                    lag: st.lag,
                },
            )?,
            (None, None) => AttackScenario::healthy(),
        };
        scenario.validate()?;
        let sweep = self.sweep.clone().unwrap_or_default();
        if sweep.scales.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("sweep scales must be finite".into()));
        }
        Ok(Resolved {
            name: if self.name.is_empty() {
                "run".into()
            } else {
                self.name.clone()
            },
            setup,
            sim: self.sim.clone(),
            scenario,
            sweep,
        })
    }
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}_{k}")).collect()
}

pub fn trajectory_header(traj: &Trajectory) -> Vec<String> {
    let first = |v: &Vec<Vec<f64>>| v.first().map_or(0, Vec::len);
    let mut h: Vec<String> = ["t", "p_lead", "v_lead", "a_lead", "p_fol", "v_fol", "a_fol", "u_fol"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(CHANNEL_NAMES.iter().map(|c| format!("y_{c}")));
    h.extend(indexed("z", first(&traj.z)));
    h.extend(indexed("xhat", first(&traj.xhat)));
    h.extend(indexed("e_y", first(&traj.e_y)));
    h.extend(indexed("nu", first(&traj.nu)));
    h.extend(indexed("nu_fil", first(&traj.nu_fil)));
    h.extend(indexed("threshold", first(&traj.threshold)));
    h.extend(indexed("delta_hat", first(&traj.delta_hat)));
    h.extend(indexed("delta", traj.delta_halfwidth.len()));
    h.extend(indexed("delta_true", first(&traj.delta_true)));
    h.push("du".into());
    h.extend(CHANNEL_NAMES.iter().map(|c| format!("dy_{c}")));
    h
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trajectory_header(traj))?;
    for k in 0..traj.len() {
        let mut row: Vec<f64> = vec![traj.t[k]];
        row.extend_from_slice(&traj.state[k]);
        row.extend_from_slice(&traj.y[k]);
        for part in [
            &traj.z[k],
            &traj.xhat[k],
            &traj.e_y[k],
            &traj.nu[k],
            &traj.nu_fil[k],
            &traj.threshold[k],
            &traj.delta_hat[k],
            &traj.delta_halfwidth,
            &traj.delta_true[k],
        ] {
            row.extend_from_slice(part);
        }
        row.push(traj.du[k]);
        row.extend_from_slice(&traj.dy[k]);
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads time and the filtered EOI columns back from a trajectory CSV.
pub fn read_nu_fil_csv(path: &Path) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let t_col = header
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| Error::CsvContent(format!("{}: no 't' column", path.display())))?;
    let nu_cols: Vec<usize> = (1..)
        .map_while(|k| header.iter().position(|h| h == format!("nu_fil_{k}")))
        .collect();
    if nu_cols.is_empty() {
        return Err(Error::CsvContent(format!("{}: no nu_fil_* columns", path.display())));
    }
    let mut t = Vec::new();
    let mut nu = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64> {
            rec[c]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::CsvContent(format!("{}: bad number '{}': {e}", path.display(), &rec[c])))
        };
        t.push(parse(t_col)?);
        let row: Result<Vec<f64>> = nu_cols.iter().map(|&c| parse(c)).collect();
        nu.push(DVector::from_vec(row?));
    }
    Ok((t, nu))
}

pub fn write_estimates_csv(path: &Path, t: &[f64], nu_fil: &[DVector<f64>], gain: &EstimatorGain) -> Result<()> {
    if nu_fil.first().is_some_and(|v| v.len() != gain.g.ncols()) {
        return Err(Error::CsvContent(format!(
            "EOI has {} channels, the estimator expects {}",
            nu_fil[0].len(),
            gain.g.ncols()
        )));
    }
    let q = gain.g.nrows();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(indexed("delta_hat", q));
    header.extend(indexed("delta", q));
    w.write_record(&header)?;
    for (tk, nu) in t.iter().zip(nu_fil) {
        let est = estimate(nu, gain);
        let mut row = vec![tk.to_string()];
        row.extend(est.center.iter().map(|v| v.to_string()));
        row.extend(est.halfwidth.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything written next to a run's CSV.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub classification: AttackClass,
    pub estimator_halfwidth: Vec<f64>,
    pub identifiable: Vec<bool>,
    pub metrics: RunMetrics,
}

pub fn summarize(res: &Resolved, prep: &Prepared, out: &SimOutput) -> RunSummary {
    RunSummary {
        name: res.name.clone(),
        seed: res.sim.seed,
        classification: classify(&res.scenario, &res.setup.partition, &res.setup.platoon),
        estimator_halfwidth: prep.estimator.delta.iter().copied().collect(),
        identifiable: prep.estimator.identifiable.clone(),
        metrics: out.metrics.clone(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot a trajectory CSV: attacks vs estimates, EOI vs threshold, vehicle response."""
import csv
import sys

import matplotlib.pyplot as plt


def load(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def count(data, prefix):
    k = 0
    while f"{prefix}_{k + 1}" in data:
        k += 1
    return k


def main():
    path = sys.argv[1] if len(sys.argv) > 1 else "trajectory.csv"
    out = sys.argv[2] if len(sys.argv) > 2 else path.rsplit(".", 1)[0] + ".png"
    d = load(path)
    t = d["t"]
    q = count(d, "delta_hat")
    p = count(d, "nu_fil")
    fig, axes = plt.subplots(3, 1, figsize=(8, 10), sharex=True)

    ax = axes[0]
    for k in range(1, q + 1):
        (line,) = ax.plot(t, d[f"delta_true_{k}"], label=f"attack {k}")
        ax.plot(t, d[f"delta_hat_{k}"], "--", color=line.get_color(), label=f"estimate {k}")
    ax.set_ylabel("attack")
    ax.legend(ncol=2, fontsize="small")

    ax = axes[1]
    for k in range(1, p + 1):
        (line,) = ax.plot(t, d[f"nu_fil_{k}"], label=f"EOI {k}")
        thr = d[f"threshold_{k}"]
        ax.plot(t, thr, ":", color=line.get_color())
        ax.plot(t, [-x for x in thr], ":", color=line.get_color())
    ax.set_ylabel("filtered EOI")
    ax.legend(ncol=2, fontsize="small")

    ax = axes[2]
    gap = [a - b for a, b in zip(d["p_lead"], d["p_fol"])]
    ax.plot(t, gap, label="position difference")
    ax.plot(t, [a - b for a, b in zip(d["v_lead"], d["v_fol"])], label="relative velocity")
    ax.set_ylabel("vehicle response")
    ax.set_xlabel("t [s]")
    ax.legend(fontsize="small")

    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
"#;

pub fn write_plot_script(dir: &Path) -> Result<PathBuf> {
    let path = dir.join("plot.py");
    fs::write(&path, PLOT_SCRIPT)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755))?;
    }
    Ok(path)
}

/// Paths written by one simulate call.
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub trajectory: PathBuf,
    pub metrics: PathBuf,
    pub plot: PathBuf,
}

pub fn simulate_to_dir(res: &Resolved, out_dir: &Path) -> Result<(RunSummary, RunFiles)> {
    fs::create_dir_all(out_dir)?;
    let prep = prepare(&res.setup)?;
    let out = run(&prep, &res.scenario, &res.sim)?;
    let summary = summarize(res, &prep, &out);
    let files = RunFiles {
        trajectory: out_dir.join(format!("{}_trajectory.csv", res.name)),
        metrics: out_dir.join(format!("{}_metrics.json", res.name)),
        plot: write_plot_script(out_dir)?,
    };
    write_trajectory_csv(&files.trajectory, &out.trajectory)?;
    write_json(&files.metrics, &summary)?;
    Ok((summary, files))
}

/// One row of a sweep table.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub scale: f64,
    pub seed: u64,
    pub crashed: bool,
    pub crash_time: Option<f64>,
    pub relative_velocity_at_crash: Option<f64>,
    pub min_distance: f64,
    pub detected: bool,
    pub first_detection: Option<f64>,
    pub max_threshold_margin: f64,
    pub error: Option<String>,
}

pub fn sweep(res: &Resolved) -> Result<Vec<SweepRow>> {
    use crate::batch::{run_many, Job};
    let prep = prepare(&res.setup)?;
    let mut jobs = Vec::new();
    let mut keys = Vec::new();
    for &scale in &res.sweep.scales {
        for &seed in &res.sweep.seeds {
            jobs.push(Job::new(
                res.scenario.scaled(scale),
                SimConfig {
                    seed,
                    ..res.sim.clone()
                },
            ));
            keys.push((scale, seed));
        }
    }
    let results = run_many(&prep, &jobs);
    Ok(keys
        .into_iter()
        .zip(results)
        .map(|((scale, seed), r)| match r {
            Ok(out) => {
                let m = out.metrics;
                let first_detection = m.first_detection_time.iter().flatten().copied().reduce(f64::min);
                SweepRow {
                    scale,
                    seed,
                    crashed: m.crashed,
                    crash_time: m.crash_time,
                    relative_velocity_at_crash: m.relative_velocity_at_crash,
                    min_distance: m.min_distance,
                    detected: first_detection.is_some(),
                    first_detection,
                    max_threshold_margin: m.max_threshold_margin,
                    error: None,
                }
            }
            Err(e) => SweepRow {
                scale,
                seed,
                crashed: false,
                crash_time: None,
                relative_velocity_at_crash: None,
                min_distance: f64::NAN,
                detected: false,
                first_detection: None,
                max_threshold_margin: f64::NAN,
                error: Some(format!("{}: {e}", e.code())),
            },
        })
        .collect())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Design enumeration plus the verdict under the chosen pole policy.
#[derive(Clone, Debug, Serialize)]
pub struct DesignRow {
    pub label: String,
    pub h: usize,
    pub relvel_in_y1: bool,
    pub dim_check: bool,
    pub poles_e: String,
    pub poles_f: String,
    pub rank: Option<usize>,
    pub pass: bool,
    pub diagnosis: String,
}

pub fn design_rows(setup: &SimSetup, strict: bool) -> Vec<DesignRow> {
    let a_fil = setup.a_fil.first().copied().unwrap_or(-5.0);
    enumerate_valid_designs(&setup.platoon, a_fil, DEFAULT_TOL_MARGINAL)
        .iter()
        .map(|d| design_row(d, strict))
        .collect()
}

fn verdict(r: &Option<crate::extended_system::PoleReport>) -> String {
    match r {
        None => "-".into(),
        Some(r) if r.pass_strict => "stable".into(),
        Some(r) if r.pass_lenient => "marginal".into(),
        Some(_) => "unstable".into(),
    }
}

pub fn design_row(d: &DesignReport, strict: bool) -> DesignRow {
    DesignRow {
        label: d.label.clone(),
        h: d.partition.h,
        relvel_in_y1: d.relvel_in_y1,
        dim_check: d.dim_check,
        poles_e: verdict(&d.poles_e),
        poles_f: verdict(&d.poles_f),
        rank: d.rank.as_ref().map(|r| r.rank_attack_map),
        pass: d.pass(strict),
        diagnosis: d.diagnosis.clone().unwrap_or_default(),
    }
}

pub fn write_design_csv(path: &Path, rows: &[DesignRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
