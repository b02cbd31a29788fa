//! Command-line front end: simulate ensembles, integrate the master
//! equation, evaluate event-history densities, cross-validate the two, and
//! summarize event logs.
//!
//! Exit codes: 0 success, 1 validation failure, 2 config/input error,
//! 3 runtime or numerical error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sectorjump::config::{parse_config, LoadedModel};
use sectorjump::error::Error;
use sectorjump::eventlog::{write_event_log, LogHeader};
use sectorjump::likelihood::{first_event_distribution, joint_density, EventHistory};
use sectorjump::lindblad::{integrate_master_probed, DirectSumDensity};
use sectorjump::stats::write_stats_report;
use sectorjump::trajectory::{run_ensemble, SimParams};

#[derive(Parser)]
#[command(name = "sectorjump", version, about = "Piecewise-deterministic quantum jump simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a trajectory ensemble and write a JSON-Lines event log.
    Simulate(SimulateArgs),
    /// Integrate the master equation and export probe-time densities as CSV.
    Lindblad(LindbladArgs),
    /// Evaluate the exact joint density of an event history.
    Likelihood(LikelihoodArgs),
    /// Cross-check trajectory statistics against the master equation and
    /// the exact first-event distribution.
    Validate(ValidateArgs),
    /// Summarize an event log into JSON and CSV tables.
    Stats(StatsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Record post-jump state snapshots in the log.
    #[arg(long)]
    snapshots: bool,
}

#[derive(Args)]
struct LindbladArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Probe times (comma separated). Defaults to the config probe times,
    /// or the horizon.
    #[arg(long, value_delimiter = ',')]
    probe: Vec<f64>,
}

#[derive(Args)]
struct LikelihoodArgs {
    #[arg(long)]
    config: PathBuf,
    /// Event-history JSON file.
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trajectories: Option<usize>,
    /// Frobenius tolerance for the ensemble-vs-master check; defaults to
    /// 5/sqrt(N).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    events: PathBuf,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Lindblad(a) => lindblad(a),
        Command::Likelihood(a) => likelihood(a),
        Command::Validate(a) => validate(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidModel(_)
        | Error::InvalidHistory(_)
        | Error::MalformedLog(_)
        | Error::UnknownSector(_)
        | Error::NoChannel { .. }
        | Error::AmbiguousChannel { .. } => 2,
        _ => 3,
    }
}

fn effective_params(loaded: &LoadedModel, t_max: Option<f64>, step: Option<f64>) -> SimParams {
    let mut params = loaded.config.run.sim_params();
    if let Some(t) = t_max {
        params.t_max = t;
    }
    if let Some(h) = step {
        params.step = h;
    }
    params
}

fn simulate(a: SimulateArgs) -> Result<u8, Error> {
    let loaded = parse_config(&a.config)?;
    let mut params = effective_params(&loaded, a.t_max, a.step);
    if a.snapshots {
        params.snapshot_states = true;
    }
    let n = a.trajectories.unwrap_or(loaded.config.run.trajectories);
    let seed = a.seed.unwrap_or(loaded.config.run.seed);
    let summary = run_ensemble(
        &loaded.model,
        loaded.init_sector,
        &loaded.init_state,
        n,
        &[],
        &params,
        seed,
    )?;
    let header = LogHeader::new(&loaded.config_sha256, seed, n, &params);
    let count = write_event_log(&summary.trajectories, &header, &a.out)?;
    println!(
        "wrote {count} events from {n} trajectories to {}",
        a.out.display()
    );
    Ok(0)
}

fn lindblad(a: LindbladArgs) -> Result<u8, Error> {
    let loaded = parse_config(&a.config)?;
    let params = effective_params(&loaded, a.t_max, a.step);
    let mut probes = if !a.probe.is_empty() {
        a.probe.clone()
    } else if !loaded.config.run.probe_times.is_empty() {
        loaded.config.run.probe_times.clone()
    } else {
        vec![params.t_max]
    };
    probes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let rho0 = DirectSumDensity::pure(
        &loaded.model.dims(),
        loaded.init_sector,
        &loaded.init_state,
    )?;
    let densities =
        integrate_master_probed(&loaded.model, &rho0, params.t0, &probes, params.step, &[])?;
    let file = std::fs::File::create(&a.out)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "t,sector,row,col,re,im")?;
    for (t, rho) in &densities {
        for (alpha, block) in rho.blocks().iter().enumerate() {
            for i in 0..block.rows() {
                for j in 0..block.cols() {
                    let z = block.get(i, j);
                    writeln!(w, "{t},{alpha},{i},{j},{},{}", z.re, z.im)?;
                }
            }
        }
    }
    w.flush()?;
    let last = &densities.last().expect("at least one probe").1;
    println!(
        "wrote {} probe densities to {} (final trace {:.9})",
        densities.len(),
        a.out.display(),
        last.total_trace()
    );
    Ok(0)
}

fn likelihood(a: LikelihoodArgs) -> Result<u8, Error> {
    let loaded = parse_config(&a.config)?;
    let raw = std::fs::read_to_string(&a.history)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", a.history.display())))?;
    let history: EventHistory = serde_json::from_str(&raw)
        .map_err(|e| Error::Config(format!("invalid history file: {e}")))?;
    let step = loaded.config.run.step;
    let density = joint_density(&loaded.model, &history, &loaded.init_state, step)?;
    // Density of each prefix of the history (without the trailing
    // no-event factor).
    let mut prefix_densities = Vec::with_capacity(history.steps.len());
    for k in 1..=history.steps.len() {
        let mut prefix = history.clone();
        prefix.steps.truncate(k);
        prefix.end_time = None;
        prefix_densities.push(joint_density(&loaded.model, &prefix, &loaded.init_state, step)?);
    }
    let report = serde_json::json!({
        "config_sha256": loaded.config_sha256,
        "history": history,
        "num_events": history.steps.len(),
        "joint_density": density,
        "prefix_densities": prefix_densities,
    });
    std::fs::write(
        &a.out,
        serde_json::to_string_pretty(&report).expect("json"),
    )?;
    println!("joint density {density:.9e} -> {}", a.out.display());
    Ok(0)
}

fn validate(a: ValidateArgs) -> Result<u8, Error> {
    let loaded = parse_config(&a.config)?;
    let params = loaded.config.run.sim_params();
    let n = a.trajectories.unwrap_or(loaded.config.run.trajectories);
    let tol = a.tol.unwrap_or(5.0 / (n as f64).sqrt());
    let mut probes = if loaded.config.run.probe_times.is_empty() {
        vec![params.t_max / 4.0, params.t_max / 2.0, params.t_max]
    } else {
        loaded.config.run.probe_times.clone()
    };
    probes.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let summary = run_ensemble(
        &loaded.model,
        loaded.init_sector,
        &loaded.init_state,
        n,
        &probes,
        &params,
        loaded.config.run.seed,
    )?;
    let rho0 = DirectSumDensity::pure(
        &loaded.model.dims(),
        loaded.init_sector,
        &loaded.init_state,
    )?;
    let master =
        integrate_master_probed(&loaded.model, &rho0, params.t0, &probes, params.step, &[])?;

    let mut all_pass = true;
    for (probe, (_, oracle)) in summary.probe_densities.iter().zip(&master) {
        let dist = probe.density.frobenius_distance(oracle);
        let pass = dist <= tol;
        all_pass &= pass;
        println!(
            "{} ensemble-vs-master t={}: Frobenius distance {:.5} (tol {:.5})",
            if pass { "PASS" } else { "FAIL" },
            probe.t,
            dist,
            tol
        );
    }

    // First-event histogram against the exact marginal distribution.
    let n_bins = 20;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| params.t0 + (params.t_max - params.t0) * i as f64 / n_bins as f64)
        .collect();
    let exact = first_event_distribution(
        &loaded.model,
        loaded.init_sector,
        &loaded.init_state,
        params.t0,
        &edges,
        params.step,
    )?;
    let mut empirical = vec![vec![0.0f64; n_bins]; exact.channels.len()];
    let mut quiet = 0.0f64;
    let weight = 1.0 / n as f64;
    for traj in &summary.trajectories {
        match traj.events.first() {
            None => quiet += weight,
            Some(e) => {
                let bin = ((e.time - params.t0) / (params.t_max - params.t0) * n_bins as f64)
                    .floor()
                    .min(n_bins as f64 - 1.0) as usize;
                let ci = exact
                    .channels
                    .iter()
                    .position(|(to, label)| *to == e.to && *label == e.label)
                    .expect("event through a registered channel");
                empirical[ci][bin] += weight;
            }
        }
    }
    let mut tv = (quiet - exact.quiet).abs();
    for (ci, bins) in empirical.iter().enumerate() {
        for (bi, p) in bins.iter().enumerate() {
            tv += (p - exact.masses[ci][bi]).abs();
        }
    }
    tv *= 0.5;
    let tv_tol = 0.05;
    let pass = tv <= tv_tol;
    all_pass &= pass;
    println!(
        "{} first-event-histogram-vs-density: total variation {:.5} (tol {:.5})",
        if pass { "PASS" } else { "FAIL" },
        tv,
        tv_tol
    );

    Ok(if all_pass { 0 } else { 1 })
}

fn stats(a: StatsArgs) -> Result<u8, Error> {
    let report = write_stats_report(&a.events, &a.out)?;
    println!(
        "{} trajectories, {} events; report written to {}",
        report.trajectories,
        report.total_events,
        a.out.display()
    );
    Ok(0)
}
