use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cacc_smo::attack_lab::classify;
use cacc_smo::cli_io::{
    design_rows, load_config, read_nu_fil_csv, simulate_to_dir, sweep, write_design_csv, write_estimates_csv,
    write_json, write_sweep_csv, Resolved, RunConfig,
};
use cacc_smo::sim_engine::prepare;
use cacc_smo::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Prints a line, ignoring a closed stdout (e.g. when piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "cacc-smo",
    version,
    about = "Attack detection, estimation and classification for a two-car CACC platoon"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// overrides the seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// named parameter set; overrides the configuration's setup
    #[arg(long, global = true, value_parser = ["table1"])]
    preset: Option<String>,
    /// treat marginal poles as failures in the design gate
    #[arg(long, global = true)]
    strict_poles: bool,
    /// disable measurement noise
    #[arg(long, global = true)]
    noiseless: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write CSV, metrics and a plot script
    Simulate,
    /// Classify the configured attack
    Classify,
    /// Enumerate all output partitions and report which designs pass
    DesignCheck,
    /// Recompute attack estimates from the EOI columns of a trajectory CSV
    Estimate {
        /// trajectory CSV written by `simulate`
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the configured attack at several scales and seeds
    Sweep,
}

fn resolve(common: &Common) -> Result<Resolved> {
    let cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    let mut res = cfg.resolve(common.preset.as_deref())?;
    if let Some(seed) = common.seed {
        res.sim.seed = seed;
    }
    if common.noiseless {
        res.sim.noiseless = true;
    }
    Ok(res)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn simulate(common: &Common) -> Result<()> {
    let res = resolve(common)?;
    let (summary, files) = simulate_to_dir(&res, &common.out_dir)?;
    let m = &summary.metrics;
    let detections: Vec<String> = m.first_detection_time.iter().map(|t| fmt_opt(*t)).collect();
    say!(
        "{}: class={:?} crashed={} crash_time={} relvel_at_crash={} min_gap={:.3} first_detection=[{}]",
        summary.name,
        summary.classification.kind,
        m.crashed,
        fmt_opt(m.crash_time),
        fmt_opt(m.relative_velocity_at_crash),
        m.min_distance,
        detections.join(",")
    );
    say!("wrote {}", files.trajectory.display());
    say!("wrote {}", files.metrics.display());
    say!("wrote {}", files.plot.display());
    Ok(())
}

fn classify_cmd(common: &Common) -> Result<()> {
    let res = resolve(common)?;
    let c = classify(&res.scenario, &res.setup.partition, &res.setup.platoon);
    say!("{:?}: {}", c.kind, c.reason);
    Ok(())
}

fn design_check(common: &Common) -> Result<()> {
    let res = resolve(common)?;
    let rows = design_rows(&res.setup, common.strict_poles);
    std::fs::create_dir_all(&common.out_dir)?;
    let path = common.out_dir.join("design_check.csv");
    write_design_csv(&path, &rows)?;
    let policy = if common.strict_poles { "strict" } else { "lenient" };
    say!(
        "{:<24} {:>2} {:>7} {:>4} {:>9} {:>9} {:>4}  pass",
        "design",
        "h",
        "relvel1",
        "dim",
        "poles_E",
        "poles_F",
        "rank"
    );
    for r in rows.iter().filter(|r| r.dim_check) {
        say!(
            "{:<24} {:>2} {:>7} {:>4} {:>9} {:>9} {:>4}  {}",
            r.label,
            r.h,
            r.relvel_in_y1,
            r.dim_check,
            r.poles_e,
            r.poles_f,
            r.rank.map_or("-".into(), |k| k.to_string()),
            r.pass
        );
    }
    let passing = rows.iter().filter(|r| r.pass).count();
    let chosen = res.setup.partition.label();
    let chosen_pass = rows.iter().any(|r| r.label == chosen && r.pass);
    say!(
        "{passing} of {} designs pass under the {policy} pole policy; configured design {chosen}: {}",
        rows.len(),
        if chosen_pass { "pass" } else { "fail" }
    );
    say!("wrote {}", path.display());
    Ok(())
}

fn estimate_cmd(common: &Common, input: &Path) -> Result<()> {
    let res = resolve(common)?;
    let prep = prepare(&res.setup)?;
    let (t, nu) = read_nu_fil_csv(input)?;
    std::fs::create_dir_all(&common.out_dir)?;
    let path = common.out_dir.join(format!("{}_estimates.csv", res.name));
    write_estimates_csv(&path, &t, &nu, &prep.estimator)?;
    say!("{} samples; wrote {}", t.len(), path.display());
    Ok(())
}

fn sweep_cmd(common: &Common) -> Result<()> {
    let res = resolve(common)?;
    let rows = sweep(&res)?;
    std::fs::create_dir_all(&common.out_dir)?;
    let path = common.out_dir.join(format!("{}_sweep.csv", res.name));
    write_sweep_csv(&path, &rows)?;
    let crashed = rows.iter().filter(|r| r.crashed).count();
    let detected = rows.iter().filter(|r| r.detected).count();
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    write_json(
        &common.out_dir.join(format!("{}_sweep_summary.json", res.name)),
        &serde_summary(rows.len(), crashed, detected, failed),
    )?;
    say!(
        "{} runs: {crashed} crashed, {detected} detected, {failed} failed; wrote {}",
        rows.len(),
        path.display()
    );
    Ok(())
}

fn serde_summary(
    runs: usize,
    crashed: usize,
    detected: usize,
    failed: usize,
) -> std::collections::BTreeMap<&'static str, usize> {
    [
        ("runs", runs),
        ("crashed", crashed),
        ("detected", detected),
        ("failed", failed),
    ]
    .into_iter()
    .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate => simulate(&cli.common),
        Command::Classify => classify_cmd(&cli.common),
        Command::DesignCheck => design_check(&cli.common),
        Command::Estimate { input } => estimate_cmd(&cli.common, input),
        Command::Sweep => sweep_cmd(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), single_line(&e));
            ExitCode::from(2)
        }
    }
}

fn single_line(e: &Error) -> String {
    e.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
}
