//! Running configs end to end and tabulating the results.

use std::fmt::Write as _;

use log::info;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::protocol::{reference_optimum, run_training, ExactReference, Method, RunHistory, RunSetup};
use crate::workload::Shard;

/// Gradient-norm tolerance and iteration cap of the `f*` reference run.
pub const FSTAR_TOL: f64 = 1e-10;
pub const FSTAR_MAX_ITERS: usize = 1_000_000;

pub fn compute_fstar(cfg: &RunConfig, shards: &[Shard]) -> Result<ExactReference> {
    reference_optimum(shards, &cfg.loss()?, cfg.fstar_gamma, FSTAR_TOL, FSTAR_MAX_ITERS)
}

/// `f*` with 17 significant digits.
pub fn format_fstar(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn build_setup(cfg: &RunConfig, shards: Vec<Shard>, fstar: f64) -> Result<RunSetup> {
    let mut setup = RunSetup::new(shards, cfg.loss()?, cfg.scheme()?, cfg.gamma, fstar);
    setup.max_iters = cfg.max_iters;
    setup.target_gap = cfg.target_gap;
    setup.seed = cfg.seed;
    setup.probe_every = cfg.probe_every;
    setup.probe_samples = cfg.probe_samples;
    Ok(setup)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: RunHistory,
    pub fstar: f64,
    /// Set when `f*` came from a reference run in this call.
    pub reference: Option<ExactReference>,
}

/// Loads data, obtains `f*` if the config lacks it, and runs.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    let shards = cfg.load_shards()?;
    let (fstar, reference) = match cfg.fstar {
        Some(f) => (f, None),
        None => {
            let r = compute_fstar(cfg, &shards)?;
            info!("f* = {} after {} reference iterations", format_fstar(r.fstar), r.iterations);
            (r.fstar, Some(r))
        }
    };
    let history = run_training(&build_setup(cfg, shards, fstar)?)?;
    Ok(RunOutcome {
        history,
        fstar,
        reference,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub method: Method,
    /// `R` for quantized methods, `L` for sparsified ones.
    pub budget: f64,
    pub agents: usize,
    pub iterations: usize,
    pub reached_target: bool,
    pub transmissions: u64,
    /// Percent of `K * iterations`.
    pub frequency: f64,
    pub total_bits: u64,
    pub channel_uses: u64,
}

pub fn method_label(cfg: &RunConfig) -> String {
    match cfg.method {
        Method::Proposed if cfg.memory == 0 => "Proposed, no prediction".to_string(),
        Method::Proposed => format!("Proposed s={}", cfg.memory),
        Method::ProposedTopL => format!("Proposed s={}", cfg.memory),
        Method::GradDiff => "Gradient Difference".to_string(),
        Method::Laq => "LAQ".to_string(),
        Method::Ef21 => "EF21".to_string(),
    }
}

impl SummaryRow {
    pub const CSV_HEADER: &'static str =
        "label,method,budget,agents,iterations,reached_target,transmissions,frequency_pct,total_bits,channel_uses";

    pub fn from_history(cfg: &RunConfig, history: &RunHistory) -> Self {
        Self {
            label: method_label(cfg),
            method: cfg.method,
            budget: if cfg.method.uses_sparsifier() {
                cfg.keep.unwrap_or(0) as f64
            } else {
                cfg.rate
            },
            agents: history.agents,
            iterations: history.iterations(),
            reached_target: history.converged_at.is_some(),
            transmissions: history.transmissions(),
            frequency: history.transmission_frequency(),
            total_bits: history.total_bits(),
            channel_uses: history.channel_uses(),
        }
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.4},{},{}",
            self.label,
            self.method,
            self.budget,
            self.agents,
            self.iterations,
            self.reached_target,
            self.transmissions,
            self.frequency,
            self.total_bits,
            self.channel_uses
        )
    }

    pub fn parse_csv(text: &str) -> Result<Vec<Self>> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == Self::CSV_HEADER => {}
            _ => return Err(Error::Parse { line: 1, msg: "missing summary header".into() }),
        }
        lines
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let bad = |what: &str| Error::Parse { line: i + 1, msg: format!("bad {what}") };
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 10 {
                    return Err(bad("field count"));
                }
                Ok(Self {
                    label: f[0].to_string(),
                    method: f[1].parse()?,
                    budget: f[2].parse().map_err(|_| bad("budget"))?,
                    agents: f[3].parse().map_err(|_| bad("agents"))?,
                    iterations: f[4].parse().map_err(|_| bad("iterations"))?,
                    reached_target: f[5].parse().map_err(|_| bad("reached_target"))?,
                    transmissions: f[6].parse().map_err(|_| bad("transmissions"))?,
                    frequency: f[7].parse().map_err(|_| bad("frequency"))?,
                    total_bits: f[8].parse().map_err(|_| bad("total_bits"))?,
                    channel_uses: f[9].parse().map_err(|_| bad("channel_uses"))?,
                })
            })
            .collect()
    }
}

pub fn rows_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{}\n", SummaryRow::CSV_HEADER);
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// Aligned text table; the cost column is channel uses when every row is a
/// sparsifier run, bits otherwise.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let sparse = !rows.is_empty() && rows.iter().all(|r| r.method.uses_sparsifier());
    let budget_head = if sparse { "L" } else { "R" };
    let cost_head = if sparse { "# channel uses" } else { "# bits" };
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                format!("{}", r.budget),
                format!("{:.2}", r.frequency),
                if r.reached_target {
                    r.iterations.to_string()
                } else {
                    format!(">{}", r.iterations)
                },
                format!("{:.3e}", if sparse { r.channel_uses } else { r.total_bits } as f64),
            ]
        })
        .collect();
    let head = [
        "Method".to_string(),
        budget_head.to_string(),
        "Residual trans. freq. (%)".to_string(),
        "# iterations".to_string(),
        cost_head.to_string(),
    ];
    let widths: Vec<usize> = (0..5)
        .map(|c| body.iter().map(|r| r[c].len()).chain([head[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in std::iter::once(&head).chain(body.iter()) {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

/// One row of a run CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunCsvRow {
    pub t: usize,
    pub loss_gap: f64,
    pub cumulative_bits: u64,
    pub cumulative_channel_uses: u64,
    pub transmissions: usize,
    pub b_t: f64,
    pub max_alpha: f64,
}

pub fn parse_run_csv(text: &str) -> Result<Vec<RunCsvRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RunHistory::CSV_HEADER => {}
        _ => return Err(Error::Parse { line: 1, msg: "missing run header".into() }),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = || Error::Parse { line: i + 1, msg: format!("bad run row {l:?}") };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            Ok(RunCsvRow {
                t: f[0].parse().map_err(|_| bad())?,
                loss_gap: f[1].parse().map_err(|_| bad())?,
                cumulative_bits: f[2].parse().map_err(|_| bad())?,
                cumulative_channel_uses: f[3].parse().map_err(|_| bad())?,
                transmissions: f[4].parse().map_err(|_| bad())?,
                b_t: f[5].parse().map_err(|_| bad())?,
                max_alpha: f[6].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Whitespace-separated `cumulative_bits loss_gap` columns.
pub fn plot_series(rows: &[RunCsvRow]) -> String {
    let mut out = String::from("# cumulative_bits loss_gap\n");
    for r in rows {
        let _ = writeln!(out, "{} {:e}", r.cumulative_bits, r.loss_gap);
    }
    out
}

/// Cumulative bits when the gap first reaches `target`.
pub fn bits_to_target(rows: &[RunCsvRow], target: f64) -> Option<u64> {
    rows.iter().find(|r| r.loss_gap <= target).map(|r| r.cumulative_bits)
}
