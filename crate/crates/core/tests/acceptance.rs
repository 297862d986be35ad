//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.
//!
//! Criteria that need the w8a dataset look for `$GRADCOMP_DATA_DIR/w8a`.
//! Where a criterion is a structural property (sync, ledger identity, probe
//! bounds, certificate dominance) and w8a is missing, it runs on a synthetic
//! stand-in of the same dimension and says so. Criteria that compare against
//! published numbers fail when w8a is missing.

#![allow(clippy::needless_range_loop)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;

use gradcomp::baselines::LaqParams;
use gradcomp::codec::{entropy_decode, entropy_encode, payload_bits, quantize_levels, select_interval, QuantizerConfig};
use gradcomp::config::DATA_DIR_ENV;
use gradcomp::experiment::{bits_to_target, parse_run_csv};
use gradcomp::predictor::{ls_coefficients, predict, residual, solve_least_squares, MemoryMatrix, PredictorCoefficients};
use gradcomp::protocol::{
    agent_step, reference_optimum, run_training, server_step, AgentState, CompressedResidual, ModelState, RunHistory,
    RunSetup, Scheme, ServerState, StepContext,
};
use gradcomp::rng::{Purpose, StreamKey};
use gradcomp::theory::{
    certificate_curve, check_variance, estimate_smoothness_convexity, first_moment_check, fit_dissimilarity,
    gradient_norms, CertificateParams, CheckStatus, RunConstants, SE_SLACK,
};
use gradcomp::trigger::TriggerSchedule;
use gradcomp::wire::Precision;
use gradcomp::workload::{global_loss, load_libsvm, local_gradient, partition_uniform, synthetic_sparse_binary, LossConfig, Shard};

const K: usize = 10;
const GAMMA: f64 = 0.05;
const LAMBDA: f64 = 0.01;
const TARGET: f64 = 1e-5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn fail(detail: impl Into<String>) -> Verdict {
    Verdict { pass: false, detail: detail.into() }
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass: ok, detail: detail.into() }
}

fn within_rel(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol * target.abs()
}

// ---------------------------------------------------------------- data

struct Problem {
    shards: Vec<Shard>,
    loss: LossConfig,
    fstar: f64,
    /// "w8a" or a description of the stand-in.
    label: String,
    real: bool,
}

fn w8a_path() -> Option<PathBuf> {
    let path = PathBuf::from(std::env::var_os(DATA_DIR_ENV)?).join("w8a");
    path.is_file().then_some(path)
}

/// w8a when available, otherwise sparse binary features with a 3% positive
/// rate, close to w8a in dimension, density and label balance but ten times
/// smaller.
fn load_problem() -> Problem {
    let (data, label, real) = match w8a_path() {
        Some(p) => (load_libsvm(&p, Some(300)).expect("w8a parses"), "w8a".to_string(), true),
        None => (
            synthetic_sparse_binary(5000, 300, 0.04, 0.03, 1).unwrap(),
            "synthetic stand-in (w8a not found)".to_string(),
            false,
        ),
    };
    let shards = partition_uniform(Arc::new(data), K).unwrap();
    let loss = LossConfig::new(LAMBDA, K).unwrap();
    let reference = reference_optimum(&shards, &loss, GAMMA, 1e-10, 1_000_000).unwrap();
    Problem { shards, loss, fstar: reference.fstar, label, real }
}

fn quantizer(rate: f64) -> QuantizerConfig {
    // Low-rate runs send 16-bit side information, high-rate runs 32-bit.
    let precision = if rate >= 6.0 { Precision::Bits32 } else { Precision::Bits16 };
    QuantizerConfig::new(rate, precision).unwrap()
}

fn linear() -> TriggerSchedule {
    TriggerSchedule::linear_decay(1000.0, K).unwrap()
}

fn setup(p: &Problem, scheme: Scheme) -> RunSetup {
    let mut s = RunSetup::new(p.shards.clone(), p.loss, scheme, GAMMA, p.fstar);
    s.max_iters = 5000;
    s.target_gap = TARGET;
    s
}

// ---------------------------------------------------------------- 1

fn exact_gd_reduction() -> Verdict {
    let start = Instant::now();
    let data = synthetic_sparse_binary(2000, 50, 0.1, 0.5, 3).unwrap();
    let shards = partition_uniform(Arc::new(data), K).unwrap();
    let loss = LossConfig::new(LAMBDA, K).unwrap();
    let mut s = RunSetup::new(shards.clone(), loss, Scheme::exact(), GAMMA, 0.0);
    s.max_iters = 100;
    s.target_gap = f64::INFINITY;
    s.record_iterates = true;
    let h = match run_training(&s) {
        Ok(h) => h,
        Err(e) => return fail(format!("run failed: {e}")),
    };
    let mut x = vec![0.0; 50];
    let mut worst = 0.0f64;
    for got in h.iterates.iter().chain(std::iter::once(&h.final_x)) {
        for (a, b) in got.iter().zip(&x) {
            let rel = if a == b { 0.0 } else { (a - b).abs() / b.abs() };
            worst = worst.max(rel);
        }
        let mut sum = vec![0.0; 50];
        for sh in &shards {
            for (s, g) in sum.iter_mut().zip(local_gradient(&x, sh, &loss).unwrap()) {
                *s += g;
            }
        }
        x = x.iter().zip(&sum).map(|(xi, gi)| xi - GAMMA * gi).collect();
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-12 && secs < 10.0 && h.iterations() == 100,
        format!("100 iterations, worst relative deviation {worst:.1e} (tol 1e-12), {secs:.2} s (limit 10 s)"),
    )
}

// ---------------------------------------------------------------- 2

fn gaussian(r: &mut impl Rng) -> f64 {
    let u1: f64 = r.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normal_equations(cols: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let m = cols.len();
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row: Vec<f64> = (0..m).map(|j| dot(&cols[i], &cols[j])).collect();
            row.push(dot(&cols[i], g));
            row
        })
        .collect();
    for k in 0..m {
        let p = (k..m).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        for i in (k + 1)..m {
            let f = a[i][k] / a[k][k];
            for j in k..=m {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    let mut x = vec![0.0; m];
    for k in (0..m).rev() {
        let s: f64 = ((k + 1)..m).map(|j| a[k][j] * x[j]).sum();
        x[k] = (a[k][m] - s) / a[k][k];
    }
    x
}

fn predictor_optimality() -> Verdict {
    let mut r = StreamKey::new(2, Purpose::Test, 0, 0).stream();
    let (mut orth, mut contraction, mut beaten, mut oracle_miss, mut oracle_checked, mut deficient) =
        (0, 0, 0, 0, 0, 0);
    for i in 0..1000 {
        let d = r.gen_range(1..=50);
        let s = r.gen_range(1..=5);
        let g: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
        let mut cols: Vec<Vec<f64>> = (0..s).map(|_| (0..d).map(|_| gaussian(&mut r)).collect()).collect();
        let rank_deficient = i % 4 == 0 || s > d;
        if i % 4 == 0 {
            // Last column duplicates a combination of the others, or vanishes.
            cols[s - 1] = if s == 1 {
                vec![0.0; d]
            } else {
                cols[0].iter().zip(&cols[s - 2]).map(|(a, b)| 3.0 * a - b).collect()
            };
        }
        deficient += rank_deficient as usize;
        let m = MemoryMatrix::from_columns(d, cols.clone()).unwrap();
        let a = ls_coefficients(&g, &m, s).unwrap();
        let ghat = predict(&m, &a).unwrap();
        let e = residual(&g, &ghat).unwrap();
        if dot(&e, &ghat).abs() > 1e-8 * norm(&g) * norm(&ghat) {
            orth += 1;
        }
        if norm(&e) > norm(&g) {
            contraction += 1;
        }
        for _ in 0..10 {
            let alt = PredictorCoefficients { values: (0..s).map(|_| gaussian(&mut r)).collect(), precision: None };
            let other = norm(&residual(&g, &predict(&m, &alt).unwrap()).unwrap());
            if norm(&e) > other * (1.0 + 1e-12) {
                beaten += 1;
            }
        }
        if !rank_deficient && d >= s + 2 {
            oracle_checked += 1;
            let want = normal_equations(&cols, &g);
            let got = solve_least_squares(&g, &m).unwrap().coefficients;
            if got.iter().zip(&want).any(|(x, y)| (x - y).abs() > 1e-9 * y.abs().max(1.0)) {
                oracle_miss += 1;
            }
        }
    }
    verdict(
        orth + contraction + beaten + oracle_miss == 0,
        format!(
            "1000 instances ({deficient} rank-deficient): orthogonality violations {orth}, ||e|| > ||g|| {contraction}, \
             beaten by random coefficients {beaten}, normal-equation mismatches {oracle_miss}/{oracle_checked}"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn quantizer_unbiasedness() -> Verdict {
    let start = Instant::now();
    let mut r = StreamKey::new(3, Purpose::Test, 0, 0).stream();
    let draws = 100_000;
    let d = 8;
    let mut outside = 0;
    for _ in 0..100 {
        let e: Vec<f64> = (0..d).map(|_| 3.0 * gaussian(&mut r)).collect();
        let delta = 10f64.powf(r.gen_range(-2.0..0.5));
        let mut sums = vec![0i64; d];
        for _ in 0..draws {
            for (s, l) in sums.iter_mut().zip(quantize_levels(&e, delta, &mut r).unwrap()) {
                *s += l as i64;
            }
        }
        for (s, &v) in sums.iter().zip(&e) {
            let p = v / delta - (v / delta).floor();
            let se = delta * (p * (1.0 - p) / draws as f64).sqrt();
            let mean = delta * *s as f64 / draws as f64;
            if (mean - v).abs() > 4.0 * se + 1e-12 * v.abs() {
                outside += 1;
            }
        }
    }
    let mut round_trip_bad = 0;
    let cfg = QuantizerConfig::new(3.0, Precision::Bits16).unwrap();
    for _ in 0..1000 {
        let e: Vec<f64> = (0..300).map(|_| gaussian(&mut r)).collect();
        let delta = select_interval(&e, &cfg).unwrap().delta;
        let levels = quantize_levels(&e, delta, &mut r).unwrap();
        let payload = entropy_encode(&levels).unwrap();
        let ok = payload.bits == payload_bits(&levels).unwrap()
            && entropy_decode(&payload, levels.len()).is_ok_and(|back| back == levels);
        round_trip_bad += !ok as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        outside == 0 && round_trip_bad == 0 && secs < 60.0,
        format!(
            "coordinates outside 4 SE: {outside}/{} (100 pairs x 1e5 draws); round-trip failures {round_trip_bad}/1000; {secs:.1} s (limit 60 s)",
            100 * d
        ),
    )
}

// ---------------------------------------------------------------- 4 and 7

struct Replay {
    iterations: usize,
    mismatches: usize,
    checks: usize,
    transmissions: u64,
    residual_bits: u64,
}

/// Drives agents and server by hand, checking that both sides hold the same
/// reconstruction and memory after every packet, and sums the residual bits
/// straight from the encoded packets.
fn replay(p: &Problem, scheme: &Scheme, gamma: f64) -> Replay {
    let mut agents: Vec<AgentState> = p.shards.iter().map(|s| AgentState::new(s.clone(), scheme, 0)).collect();
    let dim = p.shards[0].dim();
    let mut server = ServerState::new(K, scheme, ModelState::zeros(dim));
    let mut out = Replay { iterations: 0, mismatches: 0, checks: 0, transmissions: 0, residual_bits: 0 };
    for t in 1..=5000 {
        let x = server.model.x.clone();
        let mut recons = Vec::with_capacity(K);
        for (k, a) in agents.iter_mut().enumerate() {
            let step = agent_step(a, &x, scheme, &p.loss, &StepContext { t, laq_model_term: 0.0 }).unwrap();
            let recon = server_step(&mut server, k, &step.packet, scheme).unwrap();
            let same_recon = recon.iter().zip(&step.reconstruction).all(|(u, v)| u.to_bits() == v.to_bits());
            let same_memory = server.mirrors[k].len() == a.memory.len()
                && server.mirrors[k]
                    .iter()
                    .zip(a.memory.iter())
                    .all(|(u, v)| u.iter().zip(v).all(|(x, y)| x.to_bits() == y.to_bits()));
            out.checks += 1;
            out.mismatches += !(same_recon && same_memory) as usize;
            if let Some(CompressedResidual::Quantized { precision, payload, .. }) = &step.packet.residual {
                out.transmissions += 1;
                out.residual_bits += payload.bits + precision.bits();
            }
            recons.push(recon);
        }
        server.apply(&recons, gamma).unwrap();
        out.iterations = t;
        if global_loss(&server.model.x, &p.shards, &p.loss).unwrap() - p.fstar <= TARGET {
            break;
        }
    }
    out
}

fn memory_sync(p: &Problem) -> Verdict {
    let scheme = Scheme::proposed(2, linear(), quantizer(3.0));
    let r = replay(p, &scheme, GAMMA);
    verdict(
        r.mismatches == 0,
        format!(
            "[{}] proposed s=2 R=3: {} agent/server comparisons over {} iterations, {} mismatches",
            p.label, r.checks, r.iterations, r.mismatches
        ),
    )
}

fn ledger_reconciliation(p: &Problem) -> Verdict {
    let mut lines = Vec::new();
    let mut exact = true;
    let mut table_ok = p.real;
    for (s, rate, table) in [(1, 3.0, None), (2, 3.0, Some(3.37e5)), (2, 6.0, Some(6.54e5)), (3, 3.0, None)] {
        let q = quantizer(rate);
        let scheme = Scheme::proposed(s, linear(), q);
        let h = run_training(&setup(p, scheme.clone())).unwrap();
        let r = replay(p, &scheme, GAMMA);
        let closed = (r.iterations * K * s) as u64 * q.precision.bits() + r.residual_bits;
        let same = h.total_bits() == closed && h.iterations() == r.iterations && h.transmissions() == r.transmissions;
        exact &= same;
        lines.push(format!("s={s} R={rate}: run {} bits, closed form {closed}", h.total_bits()));
        if let (Some(want), true) = (table, p.real) {
            let ok = within_rel(closed as f64, want, 0.25);
            table_ok &= ok;
            lines.push(format!("vs table {want:.3e} {}", if ok { "ok" } else { "off" }));
        }
    }
    let table_note = if p.real { "" } else { "; table reconciliation BLOCKED: w8a not found" };
    verdict(
        exact && table_ok,
        format!("[{}] identity {}: {}{table_note}", p.label, if exact { "exact" } else { "BROKEN" }, lines.join(", ")),
    )
}

// ---------------------------------------------------------------- 5, 6, 10

fn blocked() -> Verdict {
    fail(format!("BLOCKED: w8a not found (set {DATA_DIR_ENV} to a directory holding the LIBSVM file `w8a`)"))
}

fn table_one(p: &Problem) -> Verdict {
    if !p.real {
        return blocked();
    }
    let run = |scheme| run_training(&setup(p, scheme)).unwrap();
    let prop = run(Scheme::proposed(2, linear(), quantizer(3.0)));
    let gd = run(Scheme::grad_diff(quantizer(3.0)));
    let s1r6 = run(Scheme::proposed(1, linear(), quantizer(6.0)));
    let laq = run(Scheme::laq(LaqParams::default(), quantizer(3.0)));
    let checks = [
        ("proposed s=2 iters", within_rel(prop.iterations() as f64, 732.0, 0.05)),
        ("proposed s=2 freq", (prop.transmission_frequency() - 1.52).abs() <= 1.0),
        ("proposed s=2 bits", within_rel(prop.total_bits() as f64, 3.37e5, 0.25)),
        ("grad diff iters", within_rel(gd.iterations() as f64, 731.0, 0.05)),
        ("grad diff freq", gd.transmission_frequency() == 100.0),
        ("grad diff bits", within_rel(gd.total_bits() as f64, 66.63e5, 0.25)),
        ("proposed s=1 R=6 freq", (s1r6.transmission_frequency() - 4.75).abs() <= 2.0),
        ("LAQ bits < grad diff", laq.total_bits() < gd.total_bits()),
        ("LAQ freq > proposed", laq.transmission_frequency() > prop.transmission_frequency()),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let summary = |name: &str, h: &RunHistory| {
        format!("{name} {} it/{:.2}%/{:.3e} b", h.iterations(), h.transmission_frequency(), h.total_bits() as f64)
    };
    verdict(
        failed.is_empty(),
        format!(
            "{}; {}; {}; {}; failed: {:?}",
            summary("proposed s=2", &prop),
            summary("grad diff", &gd),
            summary("proposed s=1 R=6", &s1r6),
            summary("LAQ", &laq),
            failed
        ),
    )
}

fn table_two(p: &Problem) -> Verdict {
    if !p.real {
        return blocked();
    }
    let run = |scheme| run_training(&setup(p, scheme)).unwrap();
    let ef = run(Scheme::ef21(1));
    let s1 = run(Scheme::proposed_topl(1, 5, linear(), Precision::Bits32));
    let s5 = run(Scheme::proposed_topl(5, 15, linear(), Precision::Bits32));
    let ok = within_rel(ef.iterations() as f64, 1255.0, 0.05)
        && within_rel(ef.channel_uses() as f64, 12.6e3, 0.10)
        && (s1.transmission_frequency() - 65.0).abs() <= 5.0
        && (s5.transmission_frequency() - 20.6).abs() <= 5.0;
    verdict(
        ok,
        format!(
            "EF21 L=1 {} it / {} uses; proposed s=1 L=5 {:.1}%; proposed s=5 L=15 {:.1}%",
            ef.iterations(),
            ef.channel_uses(),
            s1.transmission_frequency(),
            s5.transmission_frequency()
        ),
    )
}

fn figure_ordering(p: &Problem) -> Verdict {
    if !p.real {
        return blocked();
    }
    let bits = |scheme| {
        let h = run_training(&setup(p, scheme)).unwrap();
        let rows = parse_run_csv(&h.to_csv()).unwrap();
        bits_to_target(&rows, TARGET)
    };
    let prop = bits(Scheme::proposed(2, linear(), quantizer(6.0)));
    let gd = bits(Scheme::grad_diff(quantizer(6.0)));
    let laq = bits(Scheme::laq(LaqParams::default(), quantizer(6.0)));
    let ok = match (prop, gd, laq) {
        (Some(a), Some(b), Some(c)) => a < b && a < c,
        (Some(_), _, _) => true,
        _ => false,
    };
    verdict(ok, format!("bits to 1e-5 at R=6: proposed s=2 {prop:?}, grad diff {gd:?}, LAQ {laq:?}"))
}

// ---------------------------------------------------------------- 8

fn probe_bounds(p: &Problem) -> Verdict {
    let mut probes = 0;
    let mut failures = 0;
    let mut skipped_first = 0;
    let mut outside_when_skipped = 0;
    let mut min_var_margin = f64::INFINITY;
    for seed in 0..3 {
        let mut s = setup(p, Scheme::proposed(2, linear(), quantizer(3.0)));
        s.seed = seed;
        s.probe_every = Some(50);
        s.probe_samples = 10_000;
        let h = run_training(&s).unwrap();
        let fit = fit_dissimilarity(&gradient_norms(&h)).unwrap();
        for probe in &h.probes {
            probes += 1;
            let first = first_moment_check(probe);
            let var = check_variance(probe, &fit);
            failures += first.failed() as usize + var.failed() as usize;
            if matches!(first.status, CheckStatus::Skipped(_)) {
                skipped_first += 1;
                // The interval itself does not need b < 1, only its lower end
                // is vacuous then, so evaluate it anyway.
                if let Some(b) = probe.b_t {
                    let slack = SE_SLACK * probe.inner_se;
                    let inside = probe.inner_product >= (1.0 - b) * probe.g_norm_sq - slack
                        && probe.inner_product <= (1.0 + b) * probe.g_norm_sq + slack;
                    outside_when_skipped += !inside as usize;
                }
            }
            if var.status == CheckStatus::Pass {
                min_var_margin = min_var_margin.min(var.margin());
            }
        }
    }
    verdict(
        failures + outside_when_skipped == 0 && probes > 0,
        format!(
            "[{}] {probes} probes over 3 seeds, {failures} failures; first-moment check formally skipped at \
             {skipped_first} probes where b >= 1, interval evaluated there anyway: {outside_when_skipped} outside; \
             smallest variance margin {min_var_margin:.3e}",
            p.label
        ),
    )
}

// ---------------------------------------------------------------- 9

fn certificate_dominance(p: &Problem) -> Verdict {
    let smooth = estimate_smoothness_convexity(&p.shards, &p.loss);
    let scheme = Scheme::proposed(2, TriggerSchedule::constant(1e-3).unwrap(), quantizer(3.0));
    let mut gamma = GAMMA;
    for _ in 0..12 {
        let mut s = setup(p, scheme.clone());
        s.gamma = gamma;
        s.max_iters = 200;
        s.target_gap = f64::INFINITY;
        let h = run_training(&s).unwrap();
        let fit = fit_dissimilarity(&gradient_norms(&h)).unwrap();
        let constants = RunConstants::from_history(&h);
        let params = CertificateParams::new(smooth, gamma, constants, K, &fit).unwrap();
        if params.step_condition_holds() {
            let cert = certificate_curve(&params, h.initial_gap, h.iterations() + 1).unwrap();
            let violations = h.records.iter().filter(|r| r.loss_gap > cert.bounds[r.t]).count();
            let min_slack = h
                .records
                .iter()
                .map(|r| cert.bounds[r.t] - r.loss_gap)
                .fold(f64::INFINITY, f64::min);
            return verdict(
                violations == 0,
                format!(
                    "[{}] gamma {gamma:.3e} (limit {:.3e}), b {:.3}, alpha_bar {:.3}, G^2 {:.3e}, L {:.3e}, mu {:.3e}: \
                     {violations} violations over {} iterations, smallest slack {min_slack:.3e}",
                    p.label,
                    params.step_size_limit(),
                    constants.b,
                    constants.alpha_bar,
                    fit.g_sq,
                    smooth.l_hat,
                    smooth.mu_hat,
                    h.iterations()
                ),
            );
        }
        let limit = params.step_size_limit();
        gamma = if limit > 0.0 { 0.9 * limit.min(gamma) } else { gamma / 4.0 };
    }
    fail(format!("[{}] step-size condition never held", p.label))
}

// ----------------------------------------------------------------

fn main() {
    let mut all_pass = true;
    let mut report = |id: &str, name: &str, v: Verdict| {
        all_pass &= v.pass;
        println!("criterion {id:>2} {:<4} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };
    report("1", "exact-GD reduction", exact_gd_reduction());
    report("2", "predictor optimality", predictor_optimality());
    report("3", "quantizer unbiasedness", quantizer_unbiasedness());

    let problem = load_problem();
    report("4", "memory synchronization", memory_sync(&problem));
    report("5", "quantized-scheme table", table_one(&problem));
    report("6", "sparsified-scheme table", table_two(&problem));
    report("7", "bit-ledger reconciliation", ledger_reconciliation(&problem));
    report("8", "moment probes", probe_bounds(&problem));
    report("9", "certificate dominance", certificate_dominance(&problem));
    report("10", "bits-to-target ordering", figure_ordering(&problem));

    if !all_pass {
        std::process::exit(1);
    }
}
