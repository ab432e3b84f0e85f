use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ergcbf::sim::{
    batch_run, invariant_audit, parse_override, run_scenario, sample_initial_configurations, Override, Scenario,
};
use ergcbf::verify::{verify_properties, Fault, VerifyOptions};
use ergcbf::Error;

const EXIT_AUDIT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BREACH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ergcbf",
    version,
    about = "Reference governor for a planar arm near a circular obstacle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario, write its trajectory CSV and audit report.
    Run {
        /// Scenario file; `.toml` is appended if the path does not exist.
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override a scenario key, e.g. `--set dt=5e-4`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Simulate from seeded random safe initial configurations.
    Batch {
        scenario: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the randomized property suite.
    Verify {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Corrupt one checked quantity so the suite must fail.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

/// Failure that ends a command early.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::Parse(_) | Error::Io(_) => EXIT_CONFIG,
        Error::SafetyBreach { .. } => EXIT_BREACH,
        _ => EXIT_AUDIT,
    }
}

fn resolve_scenario(path: &Path) -> PathBuf {
    if !path.exists() && path.extension().is_none() {
        let with_ext = path.with_extension("toml");
        if with_ext.exists() {
            return with_ext;
        }
    }
    path.to_path_buf()
}

fn load(path: &Path, raw_overrides: &[String]) -> Result<(PathBuf, Scenario, Vec<Override>), Failure> {
    let overrides = raw_overrides
        .iter()
        .map(|o| parse_override(o))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::config(e.to_string()))?;
    let path = resolve_scenario(path);
    if !path.is_file() {
        return Err(Failure::config(format!("scenario file not found: {}", path.display())));
    }
    let scenario = Scenario::load(&path, &overrides).map_err(|e| Failure::config(e.to_string()))?;
    Ok((path, scenario, overrides))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

fn create_out_dir(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::config(format!("cannot create {}: {e}", out.display())))
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = v.into_iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(", "))
}

fn scenario_header(path: &Path, scenario: &Scenario, overrides: &[Override]) -> Vec<(String, String)> {
    let mut h = vec![
        ("scenario".to_string(), path.display().to_string()),
        ("name".to_string(), scenario.name.clone()),
        ("target".to_string(), fmt_vec(scenario.target().iter().copied())),
        ("dt".to_string(), format!("{:e}", scenario.dt)),
        ("duration".to_string(), format!("{}", scenario.duration)),
        ("governor_enabled".to_string(), scenario.governor_enabled.to_string()),
        (
            "rho_evaluation".to_string(),
            format!("{:?}", scenario.rho_evaluation).to_lowercase(),
        ),
    ];
    for o in overrides {
        h.push((format!("override.{}", o.key), o.raw.clone()));
    }
    h
}

fn cmd_run(path: &Path, out: &Path, raw_overrides: &[String]) -> Result<u8, Failure> {
    let (path, scenario, overrides) = load(path, raw_overrides)?;
    let outcome = run_scenario(&scenario);
    let report = invariant_audit(&outcome.log, &scenario.audit_context());

    let mut header = scenario_header(&path, &scenario, &overrides);
    header.push((
        "initial_q".to_string(),
        fmt_vec(scenario.initial_state.q.iter().copied()),
    ));
    header.push(("steps".to_string(), scenario.step_count().to_string()));
    header.push(("samples_logged".to_string(), outcome.log.len().to_string()));
    let status = match &outcome.error {
        None => "completed".to_string(),
        Some(e) => format!("stopped: {e}"),
    };
    header.push(("outcome".to_string(), status));

    create_out_dir(out)?;
    let name = stem(&path);
    let csv_path = out.join(format!("{name}_trajectory.csv"));
    let audit_path = out.join(format!("{name}_audit.txt"));
    let mut csv = Vec::new();
    outcome
        .log
        .write_csv(&mut csv)
        .map_err(|e| Failure::config(e.to_string()))?;
    write_file(&csv_path, &csv)?;
    write_file(&audit_path, report.render(&header, &scenario.audit).as_bytes())?;

    println!(
        "run {}: {} samples, audit {}",
        scenario.name,
        outcome.log.len(),
        if report.passed() { "PASS" } else { "FAIL" }
    );
    for c in report.failed_checks() {
        println!("failed check: {} (value {:e}, bound {})", c.name, c.value, c.bound);
    }
    println!("wrote {}", csv_path.display());
    println!("wrote {}", audit_path.display());

    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
        return Ok(exit_code_for(e).max(EXIT_AUDIT));
    }
    Ok(if report.passed() { 0 } else { EXIT_AUDIT })
}

fn cmd_batch(path: &Path, count: usize, seed: u64, out: &Path, raw_overrides: &[String]) -> Result<u8, Failure> {
    if count == 0 {
        return Err(Failure::config("--count must be at least 1"));
    }
    let (path, scenario, overrides) = load(path, raw_overrides)?;
    let configs = sample_initial_configurations(&scenario, count, seed).map_err(|e| Failure::config(e.to_string()))?;
    let summary = batch_run(&scenario, &configs);

    let mut header = scenario_header(&path, &scenario, &overrides);
    header.push(("count".to_string(), count.to_string()));
    header.push(("seed".to_string(), seed.to_string()));
    if let Some(b) = &scenario.batch_box {
        header.push(("batch_q_min".to_string(), fmt_vec(b.min.iter().copied())));
        header.push(("batch_q_max".to_string(), fmt_vec(b.max.iter().copied())));
    }
    header.push((
        "convergence_tolerance".to_string(),
        format!("{:e}", scenario.audit.convergence_tolerance),
    ));

    create_out_dir(out)?;
    let name = stem(&path);
    let csv_path = out.join(format!("{name}_batch_summary.csv"));
    let audit_path = out.join(format!("{name}_batch_audit.txt"));
    let mut csv = Vec::new();
    summary
        .write_csv(&mut csv)
        .map_err(|e| Failure::config(e.to_string()))?;
    write_file(&csv_path, &csv)?;
    write_file(&audit_path, summary.render(&header).as_bytes())?;

    let n = summary.rows.len();
    println!(
        "batch {}: {}/{n} converged, {}/{n} collisions, {}/{n} breaches",
        scenario.name,
        summary.converged_count(),
        summary.collision_count(),
        summary.breach_count()
    );
    println!("wrote {}", csv_path.display());
    println!("wrote {}", audit_path.display());

    if summary.breach_count() > 0 {
        return Ok(EXIT_BREACH);
    }
    Ok(if summary.all_ok() { 0 } else { EXIT_AUDIT })
}

fn cmd_verify(samples: usize, seed: u64, fault: Option<&str>) -> Result<u8, Failure> {
    let fault = fault
        .map(str::parse::<Fault>)
        .transpose()
        .map_err(|e| Failure::config(e.to_string()))?;
    let options = VerifyOptions { samples, seed, fault };
    let report = verify_properties(&Scenario::paper_2dof(), &options);
    print!("{}", report.render());
    for p in report.failed() {
        println!("failed property: {}", p.name);
    }
    Ok(if report.passed() { 0 } else { EXIT_AUDIT })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            out,
            overrides,
        } => cmd_run(scenario, out, overrides),
        Command::Batch {
            scenario,
            count,
            seed,
            out,
            overrides,
        } => cmd_batch(scenario, *count, *seed, out, overrides),
        Command::Verify {
            samples,
            seed,
            inject_fault,
        } => cmd_verify(*samples, *seed, inject_fault.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
