//! `ccbe`: scenario runner for the truncated coagulation and collisional
//! breakage solver.
//!
//! Exit codes: 0 clean, 1 invariant violation, 2 configuration or
//! admissibility error, 3 integration failure. `CCBE_OUTPUT_ROOT` prefixes
//! every relative output directory, so batch drivers can redirect a whole
//! suite without touching scenario files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccbe_core::runner::{self, ConvergenceStudy, RunReport};
use ccbe_core::scenario::Scenario;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ccbe",
    version,
    about = "Sectional solver for the coagulation and collisional breakage equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and emit CSV and JSON reports.
    Run {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Override a scenario value, e.g. --set kernel.alpha=0.3
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory; defaults to the scenario's `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate parameters and print the admissibility report; no run.
    Check {
        scenario: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run a truncation-refinement study over a list of sizes, both
    /// truncation regimes each.
    Converge {
        scenario: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Comma-separated truncation sizes, smallest first.
        #[arg(long, default_value = "5,10,20")]
        n: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { scenario, set, out } => cmd_run(&scenario, &set, out),
        Command::Check { scenario, set } => cmd_check(&scenario, &set),
        Command::Converge { scenario, set, n, out } => cmd_converge(&scenario, &set, &n, out),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("[ccbe] error: {e:#}");
            let code = e
                .downcast_ref::<ccbe_core::Error>()
                .map(ccbe_core::Error::exit_code)
                .unwrap_or(2);
            ExitCode::from(code)
        }
    }
}

fn load_scenario(path: &Path, overrides: &[String]) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    Ok(Scenario::parse_with_overrides(&text, overrides)?)
}

/// `--out` wins over the scenario's directory; `CCBE_OUTPUT_ROOT` prefixes
/// whichever of the two is relative.
fn output_dir(cli_out: Option<PathBuf>, scenario: &Scenario) -> PathBuf {
    let base = cli_out.unwrap_or_else(|| PathBuf::from(&scenario.output.directory));
    match std::env::var_os("CCBE_OUTPUT_ROOT") {
        Some(root) if base.is_relative() => PathBuf::from(root).join(base),
        _ => base,
    }
}

/// 17 significant digits: doubles survive the round-trip bit for bit.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn cmd_run(path: &Path, overrides: &[String], out: Option<PathBuf>) -> anyhow::Result<u8> {
    let scenario = load_scenario(path, overrides)?;
    let dir = output_dir(out, &scenario);
    let report = runner::run(&scenario)?;
    emit_run(&dir, &report)?;
    for v in &report.violations {
        eprintln!("[ccbe] invariant violation: {v}");
    }
    if let Some(f) = &report.integration_failure {
        eprintln!("[ccbe] integration failure: {f}");
    }
    let code = report.exit_code();
    println!(
        "[ccbe] run finished: {} save points, exit {code}, outputs in {}",
        report.trajectory.times.len(),
        dir.display()
    );
    Ok(code)
}

fn cmd_check(path: &Path, overrides: &[String]) -> anyhow::Result<u8> {
    let scenario = load_scenario(path, overrides)?;
    // Resolve without the hard gate so a rejection still yields the report.
    let resolved = scenario.resolve()?;
    println!("{}", serde_json::to_string_pretty(&resolved.admissibility)?);
    if resolved.admissibility.passes() {
        println!("[ccbe] admissible");
        Ok(0)
    } else {
        for reason in &resolved.admissibility.reasons {
            eprintln!("[ccbe] rejected: {reason}");
        }
        Ok(2)
    }
}

fn cmd_converge(
    path: &Path,
    overrides: &[String],
    n_list: &str,
    out: Option<PathBuf>,
) -> anyhow::Result<u8> {
    let scenario = load_scenario(path, overrides)?;
    let ns: Vec<f64> = n_list
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| anyhow::anyhow!("bad truncation size {s:?}: {e}"))
        })
        .collect::<anyhow::Result<_>>()?;
    let dir = output_dir(out, &scenario);
    let study = runner::convergence_study(&scenario, &ns)?;
    fs::create_dir_all(&dir)?;
    write_convergence_csv(&dir.join("convergence.csv"), &study)?;
    println!(
        "[ccbe] convergence study finished: {} runs on shared v_min = {}, outputs in {}",
        study.rows.len(),
        study.v_min,
        dir.display()
    );
    Ok(0)
}

fn emit_run(dir: &Path, report: &RunReport) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("scenario_resolved.toml"), report.scenario.to_toml()?)?;
    fs::write(
        dir.join("admissibility.json"),
        serde_json::to_string_pretty(&report.admissibility)?,
    )?;
    write_grid_csv(&dir.join("grid.csv"), report)?;
    write_moments_csv(&dir.join("moments.csv"), report)?;
    for idx in snapshot_indices(report.trajectory.times.len(), report.scenario.output.density_snapshots)
    {
        let t = report.trajectory.times[idx];
        write_density_csv(&dir.join(format!("density_{t:.6}.csv")), report, idx)?;
    }
    let output = &report.scenario.output;
    if output.emit_bounds {
        if let Some(bounds) = &report.bounds {
            fs::write(dir.join("bounds.json"), serde_json::to_string_pretty(bounds)?)?;
        }
    }
    if output.emit_weak_residuals && !report.weak.is_empty() {
        write_weak_csv(&dir.join("weak_residuals.csv"), report)?;
    }
    if output.emit_equicontinuity {
        if let Some(eq) = &report.equicontinuity {
            fs::write(dir.join("equicontinuity.json"), serde_json::to_string_pretty(eq)?)?;
        }
    }
    fs::write(dir.join("summary.json"), summary_json(report)?)?;
    Ok(())
}

fn write_grid_csv(path: &Path, report: &RunReport) -> anyhow::Result<()> {
    let grid = &report.grid;
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "cell,edge_lo,edge_hi,rep,width")?;
    for c in 0..grid.cells() {
        writeln!(
            w,
            "{c},{},{},{},{}",
            fmt(grid.edges()[c]),
            fmt(grid.edges()[c + 1]),
            fmt(grid.reps()[c]),
            fmt(grid.widths()[c]),
        )?;
    }
    Ok(w.flush()?)
}

fn write_moments_csv(path: &Path, report: &RunReport) -> anyhow::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "t,m_neg2alpha,m_negalpha,m0,m1,m2,mass_pivot,lost_mass,subgrid_mass,balance_residual"
    )?;
    for r in &report.moments.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt(r.t),
            fmt(r.m_neg2alpha),
            fmt(r.m_negalpha),
            fmt(r.m0),
            fmt(r.m1),
            fmt(r.m2),
            fmt(r.mass_pivot),
            fmt(r.lost_mass),
            fmt(r.subgrid_mass),
            fmt(r.balance_residual),
        )?;
    }
    Ok(w.flush()?)
}

fn write_density_csv(path: &Path, report: &RunReport, idx: usize) -> anyhow::Result<()> {
    let grid = &report.grid;
    let state = &report.trajectory.states[idx];
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "cell,v_lo,v_hi,rep,g")?;
    for c in 0..grid.cells() {
        writeln!(
            w,
            "{c},{},{},{},{}",
            fmt(grid.edges()[c]),
            fmt(grid.edges()[c + 1]),
            fmt(grid.reps()[c]),
            fmt(state.g[c]),
        )?;
    }
    Ok(w.flush()?)
}

fn write_weak_csv(path: &Path, report: &RunReport) -> anyhow::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "h,lhs,rhs,residual")?;
    for row in &report.weak {
        writeln!(w, "{},{},{},{}", row.h, fmt(row.lhs), fmt(row.rhs), fmt(row.residual))?;
    }
    Ok(w.flush()?)
}

fn write_convergence_csv(path: &Path, study: &ConvergenceStudy) -> anyhow::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "n,tau,metric_to_next,cross_final")?;
    for row in &study.rows {
        let metric = row.metric_to_next.map(fmt).unwrap_or_default();
        writeln!(w, "{},{},{metric},{}", fmt(row.n), row.tau, fmt(row.cross_final))?;
    }
    Ok(w.flush()?)
}

/// Evenly spaced save indices, first and last always included.
fn snapshot_indices(saves: usize, requested: usize) -> Vec<usize> {
    if saves == 0 || requested == 0 {
        return Vec::new();
    }
    if requested == 1 || saves == 1 {
        return vec![saves - 1];
    }
    let count = requested.min(saves);
    let mut idx: Vec<usize> = (0..count)
        .map(|i| (i as f64 * (saves - 1) as f64 / (count - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

fn summary_json(report: &RunReport) -> anyhow::Result<String> {
    let last = report.moments.rows.last();
    let value = serde_json::json!({
        "exit_code": report.exit_code(),
        "violations": report.violations,
        "integration_failure": report.integration_failure,
        "truncation_note": report.truncation_note,
        "loss_audit": report.loss_audit,
        "saves": report.trajectory.times.len(),
        "steps_accepted": report.trajectory.stats.accepted,
        "max_balance_residual": report.moments.max_balance_residual(),
        "final": last.map(|r| serde_json::json!({
            "t": r.t,
            "m0": r.m0,
            "mass_pivot": r.mass_pivot,
            "lost_mass": r.lost_mass,
            "subgrid_mass": r.subgrid_mass,
        })),
    });
    Ok(serde_json::to_string_pretty(&value)?)
}

#[cfg(test)]
mod tests {
    use super::snapshot_indices;

    #[test]
    fn snapshot_indices_cover_endpoints() {
        assert_eq!(snapshot_indices(21, 5), vec![0, 5, 10, 15, 20]);
        assert_eq!(snapshot_indices(21, 1), vec![20]);
        assert_eq!(snapshot_indices(21, 0), Vec::<usize>::new());
        assert_eq!(snapshot_indices(2, 5), vec![0, 1]);
        assert_eq!(snapshot_indices(1, 3), vec![0]);
    }
}
