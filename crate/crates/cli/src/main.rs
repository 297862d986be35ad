use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use gradcomp::config::RunConfig;
use gradcomp::experiment::{
    compute_fstar, execute, format_fstar, format_table, parse_run_csv, plot_series, rows_to_csv, SummaryRow,
};
use gradcomp::theory::{
    certificate_curve, estimate_smoothness_convexity, fit_dissimilarity, gradient_norms, probes_to_csv,
    CertificateParams, RunConstants,
};
use gradcomp::Error;

/// Exit codes.
const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "gradcomp", version, about = "Gradient compression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config; writes <stem>.run.csv, <stem>.summary.csv and, when
    /// available, <stem>.probe.csv and <stem>.certificate.csv.
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Output file stem (defaults to the config file stem).
        #[arg(long)]
        stem: Option<String>,
    },
    /// Collect the summaries written by `run` into one table.
    Table {
        configs: Vec<PathBuf>,
        /// Directory holding the <stem>.summary.csv files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compute f* by exact gradient descent and write it to <stem>.fstar.
    Fstar {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Turn run CSVs into `cumulative_bits loss_gap` series files.
    Plotdata {
        runs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string())
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn cmd_run(config: &Path, out: &Path, stem: Option<String>) -> Result<(), Error> {
    let cfg = RunConfig::from_file(config)?;
    let stem = stem.unwrap_or_else(|| stem_of(config));
    let outcome = execute(&cfg)?;
    let history = &outcome.history;

    write(&out.join(format!("{stem}.run.csv")), &history.to_csv())?;
    let row = SummaryRow::from_history(&cfg, history);
    write(&out.join(format!("{stem}.summary.csv")), &rows_to_csv(std::slice::from_ref(&row)))?;

    let fit = fit_dissimilarity(&gradient_norms(history))?;
    if !history.probes.is_empty() {
        write(&out.join(format!("{stem}.probe.csv")), &probes_to_csv(&history.probes, Some(&fit)))?;
    }
    let shards = cfg.load_shards()?;
    let smooth = estimate_smoothness_convexity(&shards, &cfg.loss()?);
    match CertificateParams::new(smooth, cfg.gamma, RunConstants::from_history(history), cfg.agents, &fit)
        .and_then(|p| certificate_curve(&p, history.initial_gap, history.iterations() + 1).map(|c| (p, c)))
    {
        Ok((params, cert)) => {
            if !cert.applicable {
                warn!(
                    "step size {} exceeds the certified limit {:e}; certificate is not guaranteed",
                    cfg.gamma,
                    params.step_size_limit()
                );
            }
            write(&out.join(format!("{stem}.certificate.csv")), &cert.to_csv())?;
        }
        Err(e) => warn!("no certificate: {e}"),
    }

    println!("{}", format_table(&[row]).trim_end());
    Ok(())
}

fn cmd_table(configs: &[PathBuf], out: &Path, csv: Option<&Path>) -> Result<(), Error> {
    let mut rows = Vec::new();
    for config in configs {
        let path = out.join(format!("{}.summary.csv", stem_of(config)));
        let text = fs::read_to_string(&path).map_err(|_| {
            Error::InvalidArgument(format!(
                "no completed run for {} (expected {})",
                config.display(),
                path.display()
            ))
        })?;
        rows.extend(SummaryRow::parse_csv(&text)?);
    }
    print!("{}", format_table(&rows));
    if let Some(csv) = csv {
        write(csv, &rows_to_csv(&rows))?;
    }
    Ok(())
}

fn cmd_fstar(config: &Path, out: &Path) -> Result<(), Error> {
    let cfg = RunConfig::from_file(config)?;
    let shards = cfg.load_shards()?;
    let r = compute_fstar(&cfg, &shards)?;
    let mut text = format!(
        "{}\n# iterations {}\n# grad_norm {:e}\n",
        format_fstar(r.fstar),
        r.iterations,
        r.grad_norm
    );
    if !r.converged {
        text.push_str("# warning: iteration cap reached before the gradient tolerance\n");
    }
    let path = out.join(format!("{}.fstar", stem_of(config)));
    write(&path, &text)?;
    println!("{}", format_fstar(r.fstar));
    info!("wrote {}", path.display());
    Ok(())
}

fn cmd_plotdata(runs: &[PathBuf], out: &Path) -> Result<(), Error> {
    for run in runs {
        let text = fs::read_to_string(run).map_err(|e| Error::Io { path: run.clone(), source: e })?;
        let rows = parse_run_csv(&text)?;
        let name = stem_of(run);
        let name = name.strip_suffix(".run").unwrap_or(&name);
        write(&out.join(format!("{name}.dat")), &plot_series(&rows))?;
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, stem } => cmd_run(config, out, stem.clone()),
        Command::Table { configs, out, csv } => cmd_table(configs, out, csv.as_deref()),
        Command::Fstar { config, out } => cmd_fstar(config, out),
        Command::Plotdata { runs, out } => cmd_plotdata(runs, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gradcomp: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
