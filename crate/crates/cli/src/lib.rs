//! The `jshap` command line: exact and sampled joint Shapley values for
//! games and models, as text, CSV or JSON.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use args::{Cli, Command};
use error::{usage, CliError};
use output::{Format, Report};

/// Parse `args` (program name first), run the command and write its output.
/// Returns the process exit code: 0 on success, 1 when a computation or
/// check fails, 2 on a usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    let start = Instant::now();
    let report = match execute(&cli) {
        Ok(report) => report,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = emit(&cli, &argv, &report, start, out) {
        let _ = writeln!(err, "error: {e:#}");
        return 1;
    }
    if report.ok {
        0
    } else {
        let _ = writeln!(err, "error: check failed");
        1
    }
}

fn execute(cli: &Cli) -> Result<Report, CliError> {
    match cli.output.threads {
        None => dispatch(cli),
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Compute(e.into()))?;
            pool.install(|| dispatch(cli))
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Report, CliError> {
    let digits = cli.output.digits;
    if digits == 0 || digits > 17 {
        return Err(usage("--digits must be between 1 and 17"));
    }
    match &cli.command {
        Command::Coeffs(a) => commands::coeffs(a, digits),
        Command::ExplainGame(a) => commands::explain_game(a, digits),
        Command::ExplainModel(a) => commands::explain_model(a, digits),
        Command::Sample(a) => commands::sample(a, digits),
        Command::Compare(a) => commands::compare(a),
        Command::VerifyAxioms(a) => commands::verify_axioms(a),
        Command::Trace(a) => commands::trace(a, digits),
    }
}

/// Path of the manifest written next to an `--out` file.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn emit(
    cli: &Cli,
    argv: &[OsString],
    report: &Report,
    start: Instant,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let rendered = report.render(Format::from_args(&cli.output), cli.output.digits)?;
    let Some(path) = &cli.output.out else {
        out.write_all(rendered.as_bytes())?;
        return Ok(());
    };
    std::fs::write(path, &rendered)?;
    let manifest = json!({
        "schema": output::SCHEMA_VERSION,
        "command": report.command,
        "argv": argv.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "config": format!("{cli:?}"),
        "seed": report.json.get("seed"),
        "threads": cli.output.threads.unwrap_or_else(rayon::current_num_threads),
        "versions": {
            "jshap": env!("CARGO_PKG_VERSION"),
            "joint-shapley": joint_shapley::VERSION,
        },
        "output": path.display().to_string(),
        "elapsed_seconds": start.elapsed().as_secs_f64(),
        "ok": report.ok,
    });
    std::fs::write(
        manifest_path(path),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}
