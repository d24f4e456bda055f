//! Command dispatch. Each command returns its rendered report together with
//! the process exit code.

use std::path::{Path, PathBuf};
use std::time::Instant;

use avrc_core::bounds::{
    cutset_bound, degraded_closed_form, direct_transmission_bound, full_df_bound, orthogonal_components_capacity,
    partial_df_bound, BoundKind, BoundReport, OptimizerOptions,
};
use avrc_core::information::{Axis, JointDist};
use avrc_core::probability::{Compositions, TypicalityFlavor};
use avrc_core::simulation::{build_code, estimate_error, CodeParams, CodeUse, JammerStrategy};
use avrc_core::symmetrizability::{
    check_kernel_symmetrizable, check_symmetrizable_x1y1, check_symmetrizable_x_given_x1, classify_capacity,
};
use avrc_core::{Pmf, RelayChannel, StateUncertainty};
use clap::Parser;
use serde::Serialize;

use crate::args::{
    BoundName, BoundsArgs, ClassifyArgs, Cli, Command, CommonArgs, FlavorName, Format, ReplayArgs, SimulateArgs,
    SymName, SymcheckArgs,
};
use crate::error::CliError;
use crate::report::{
    bounds_csv, classify_csv, simulate_csv, symcheck_csv, to_json, BoundsReport, ClassifyReport, ManifestOnly,
    NamedVerdict, OrderingCheck, OrderingRow, RunManifest, SimRow, SimulateReport, SymcheckReport,
};
use crate::spec_file::{parse_q_flag, ChannelSpec, ChannelSpecFile, Prob};

/// Slack allowed in the bound ordering check.
pub const ORDERING_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Output {
    pub text: String,
    pub exit: i32,
    pub out: Option<PathBuf>,
}

impl Output {
    /// Writes the report to its destination.
    pub fn emit(&self) -> Result<(), CliError> {
        match &self.out {
            Some(path) => std::fs::write(path, &self.text)?,
            None => print!("{}", self.text),
        }
        Ok(())
    }
}

/// Parses `argv` (program name first), runs the command and writes the
/// report. Returns the exit code.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = run(&cli, &argv[1.min(argv.len())..]).and_then(|out| {
        out.emit()?;
        Ok(out.exit)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("avrc: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command. `argv` excludes the program name and is recorded
/// in the manifest.
pub fn run(cli: &Cli, argv: &[String]) -> Result<Output, CliError> {
    let recorded = strip_out(argv);
    match &cli.command {
        Command::Bounds(a) => {
            set_threads(&a.common);
            cmd_bounds(a, recorded)
        }
        Command::Symcheck(a) => {
            set_threads(&a.common);
            cmd_symcheck(a, recorded)
        }
        Command::Classify(a) => {
            set_threads(&a.common);
            cmd_classify(a, recorded)
        }
        Command::Simulate(a) => {
            set_threads(&a.common);
            cmd_simulate(a, recorded)
        }
        Command::Replay(a) => cmd_replay(a),
    }
}

fn strip_out(argv: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

fn set_threads(common: &CommonArgs) {
    if let Some(t) = common.threads {
        // Fails only if a pool already exists, as in repeated in-process runs.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

fn manifest<T: Serialize>(command: &str, argv: Vec<String>, options: &T, seeds: Vec<u64>, start: Instant) -> RunManifest {
    RunManifest {
        command: command.into(),
        argv,
        options: serde_json::to_value(options).unwrap_or(serde_json::Value::Null),
        seeds,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    }
}

fn load(common: &CommonArgs) -> Result<(ChannelSpec, StateUncertainty), CliError> {
    let spec = ChannelSpecFile::load(&common.spec)?.resolve()?;
    let states = spec.channel.sizes().s;
    let q = match &common.q {
        Some(flag) => parse_q_flag(flag, states)?,
        None => spec.q.clone().unwrap_or_else(|| StateUncertainty::full_simplex(states)),
    };
    Ok((spec, q))
}

fn render<T: Serialize>(report: &T, format: Format, csv: impl Fn(&T) -> String) -> String {
    match format {
        Format::Json => to_json(report),
        Format::Csv => csv(report),
    }
}

pub fn cmd_bounds(a: &BoundsArgs, argv: Vec<String>) -> Result<Output, CliError> {
    let start = Instant::now();
    let (spec, q) = load(&a.common)?;
    let opts = OptimizerOptions {
        grid_resolution: a.grid,
        multistart_count: a.multistart,
        max_iterations: a.max_iter,
        tolerance: a.tolerance,
        u_cardinality: a.u_card,
        seed: a.common.seed,
    };
    opts.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ch = &spec.channel;
    let mut reports = Vec::new();
    for name in &a.bounds {
        let r = match name {
            BoundName::Cutset => cutset_bound(ch, &q, &opts)?,
            BoundName::Pdf => partial_df_bound(ch, &q, &opts)?,
            BoundName::Fdf => full_df_bound(ch, &q, &opts)?,
            BoundName::Direct => direct_transmission_bound(ch, &q, &opts)?,
            BoundName::Degraded => degraded_closed_form(ch, &q, &opts)?,
            BoundName::Orthogonal => {
                let split = spec
                    .orthogonal_split
                    .ok_or_else(|| CliError::Spec("orthogonal bound needs an orthogonal_split in the spec".into()))?;
                orthogonal_components_capacity(ch, &q, split, &opts)?
            }
        };
        reports.push(r);
    }
    let ordering = ordering_check(&reports);
    let converged = reports.iter().all(|r| r.diagnostics.converged);
    let report = BoundsReport { manifest: manifest("bounds", argv, a, vec![a.common.seed], start), reports, ordering };
    if !converged {
        eprintln!("avrc: at least one bound did not converge");
    }
    Ok(Output {
        text: render(&report, a.common.format, bounds_csv),
        exit: if converged { 0 } else { 3 },
        out: a.common.out.clone(),
    })
}

/// Checks `direct <= pdf`, `fdf <= pdf` and `pdf <= cutset` for the kinds present.
pub fn ordering_check(reports: &[BoundReport]) -> OrderingCheck {
    let value = |k: BoundKind| reports.iter().find(|r| r.kind == k).map(|r| r.value);
    let pairs = [
        (BoundKind::Direct, BoundKind::PartialDf),
        (BoundKind::FullDf, BoundKind::PartialDf),
        (BoundKind::PartialDf, BoundKind::Cutset),
    ];
    let checks: Vec<OrderingRow> = pairs
        .iter()
        .filter_map(|&(lo, hi)| {
            let (l, h) = (value(lo)?, value(hi)?);
            Some(OrderingRow { lower: lo, upper: hi, lower_value: l, upper_value: h, holds: l <= h + ORDERING_TOL })
        })
        .collect();
    OrderingCheck { tolerance: ORDERING_TOL, holds: checks.iter().all(|c| c.holds), checks }
}

pub fn cmd_symcheck(a: &SymcheckArgs, argv: Vec<String>) -> Result<Output, CliError> {
    let start = Instant::now();
    let (spec, _) = load(&a.common)?;
    let ch = &spec.channel;
    let explicit = a.which.is_some();
    let which = a.which.clone().unwrap_or_else(|| vec![SymName::XGivenX1, SymName::X1y1, SymName::Marginals]);
    let mut verdicts = Vec::new();
    for w in which {
        match w {
            SymName::XGivenX1 => verdicts.push(NamedVerdict {
                condition: "x_given_x1".into(),
                witness_given: "x".into(),
                verdict: Some(check_symmetrizable_x_given_x1(ch, a.tol)?),
                note: None,
            }),
            SymName::X1y1 => {
                let degraded = ch.check_degraded(1e-9).holds;
                if !degraded && explicit {
                    return Err(CliError::Spec("x1y1 symmetrizability needs a degraded channel".into()));
                }
                verdicts.push(if degraded {
                    NamedVerdict {
                        condition: "x1y1".into(),
                        witness_given: "x1,y1".into(),
                        verdict: Some(check_symmetrizable_x1y1(ch, a.tol)?),
                        note: None,
                    }
                } else {
                    NamedVerdict {
                        condition: "x1y1".into(),
                        witness_given: "x1,y1".into(),
                        verdict: None,
                        note: Some("skipped: channel is not degraded".into()),
                    }
                });
            }
            SymName::Marginals => {
                let (relay, dest) = ch.marginals();
                for (name, k) in [("relay_marginal", relay), ("destination_marginal", dest)] {
                    verdicts.push(NamedVerdict {
                        condition: name.into(),
                        witness_given: "x".into(),
                        verdict: Some(check_kernel_symmetrizable(&k, a.tol)?),
                        note: None,
                    });
                }
            }
        }
    }
    let report = SymcheckReport { manifest: manifest("symcheck", argv, a, vec![a.common.seed], start), verdicts };
    Ok(Output { text: render(&report, a.common.format, symcheck_csv), exit: 0, out: a.common.out.clone() })
}

pub fn cmd_classify(a: &ClassifyArgs, argv: Vec<String>) -> Result<Output, CliError> {
    let start = Instant::now();
    let (spec, _) = load(&a.common)?;
    let classification = classify_capacity(&spec.channel, a.tol)?;
    let report =
        ClassifyReport { manifest: manifest("classify", argv, a, vec![a.common.seed], start), classification };
    Ok(Output { text: render(&report, a.common.format, classify_csv), exit: 0, out: a.common.out.clone() })
}

fn parse_pmf(text: &str, states: usize) -> Result<Pmf, CliError> {
    let v = text.split(',').map(|t| Prob::Text(t.to_string()).value()).collect::<Result<Vec<_>, _>>()?;
    if v.len() != states {
        return Err(CliError::Usage(format!("jammer pmf '{text}' needs {states} entries")));
    }
    Pmf::new(v).map_err(|e| CliError::Usage(e.to_string()))
}

/// Every pmf on `states` letters whose entries are multiples of `step`.
fn simplex_grid(step: f64, states: usize) -> Result<Vec<Pmf>, CliError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(CliError::Usage(format!("grid step {step} outside (0, 1]")));
    }
    let k = (1.0 / step).round() as usize;
    if ((k as f64) * step - 1.0).abs() > 1e-9 {
        return Err(CliError::Usage(format!("grid step {step} does not divide 1")));
    }
    Compositions::new(k, states)
        .map(|c| Pmf::new(c.iter().map(|&v| v as f64 / k as f64).collect()).map_err(CliError::from))
        .collect()
}

fn parse_jammers(text: &str, ch: &RelayChannel, blocks: usize, tol: f64) -> Result<Vec<JammerStrategy>, CliError> {
    let states = ch.sizes().s;
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    match kind {
        "iid" => Ok(vec![JammerStrategy::Iid { q: parse_pmf(rest, states)? }]),
        "iid-grid" => {
            let step: f64 = rest.parse().map_err(|_| CliError::Usage(format!("bad grid step '{rest}'")))?;
            Ok(simplex_grid(step, states)?.into_iter().map(|q| JammerStrategy::Iid { q }).collect())
        }
        "per-block" => {
            let qs = rest.split(';').map(|p| parse_pmf(p, states)).collect::<Result<Vec<_>, _>>()?;
            if qs.len() != blocks {
                return Err(CliError::Usage(format!("per-block jammer needs {blocks} pmfs, got {}", qs.len())));
            }
            Ok(vec![JammerStrategy::PerBlock { qs }])
        }
        "fixed" => {
            let text = std::fs::read_to_string(rest).map_err(|e| CliError::Usage(format!("cannot read {rest}: {e}")))?;
            let states: Vec<u8> =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("malformed state sequence: {e}")))?;
            Ok(vec![JammerStrategy::FixedSequence { states }])
        }
        "attack-x" => {
            let v = check_symmetrizable_x_given_x1(ch, tol)?;
            if !v.symmetrizable {
                eprintln!("avrc: warning: channel is not symmetrizable in X given X1 (violation {})", v.max_violation);
            }
            let j = v.witness.ok_or_else(|| CliError::NonConvergence("no witness returned".into()))?;
            Ok(vec![JammerStrategy::AttackX { j }])
        }
        "attack-x1y1" => {
            let v = check_symmetrizable_x1y1(ch, tol)?;
            if !v.symmetrizable {
                eprintln!("avrc: warning: channel is not symmetrizable in X1 x Y1 (violation {})", v.max_violation);
            }
            let j = v.witness.ok_or_else(|| CliError::NonConvergence("no witness returned".into()))?;
            Ok(vec![JammerStrategy::AttackX1Y1 { j }])
        }
        _ => Err(CliError::Usage(format!("unknown jammer '{text}'"))),
    }
}

/// `U = X` uniform with `X1` uniform and independent.
fn uniform_df_law(ch: &RelayChannel) -> Result<JointDist, CliError> {
    let a = ch.sizes();
    let mut p = vec![0.0; a.x * a.x * a.x1];
    for x in 0..a.x {
        for x1 in 0..a.x1 {
            p[(x * a.x + x) * a.x1 + x1] = 1.0 / (a.x * a.x1) as f64;
        }
    }
    Ok(JointDist::new(vec![Axis::U, Axis::X, Axis::X1], vec![a.x, a.x, a.x1], p)?)
}

fn resolve_law(a: &SimulateArgs, ch: &RelayChannel, q: &StateUncertainty) -> Result<JointDist, CliError> {
    let axes = [Axis::U, Axis::X, Axis::X1];
    match a.law.as_str() {
        "uniform-df" => uniform_df_law(ch),
        "pdf-argmax" => {
            let opts = OptimizerOptions { seed: a.common.seed, ..Default::default() };
            Ok(partial_df_bound(ch, q, &opts)?.argmax_p.marginal_dist(&axes)?)
        }
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read law {path}: {e}")))?;
            let law: JointDist =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("malformed law: {e}")))?;
            let law = JointDist::new(law.axes().to_vec(), law.sizes().to_vec(), law.probs().to_vec())?;
            Ok(law.marginal_dist(&axes)?)
        }
    }
}

pub fn cmd_simulate(a: &SimulateArgs, argv: Vec<String>) -> Result<Output, CliError> {
    let start = Instant::now();
    let (spec, q) = load(&a.common)?;
    let ch = &spec.channel;
    let law = resolve_law(a, ch, &q)?;
    let jammers = parse_jammers(&a.jammer, ch, a.blocks, avrc_core::symmetrizability::DEFAULT_TOL)?;
    let code_seed = a.code_seed.unwrap_or(a.common.seed);
    let flavor = match a.flavor {
        FlavorName::Robust => TypicalityFlavor::Robust,
        FlavorName::Strong => TypicalityFlavor::Strong,
    };
    let mut rows = Vec::new();
    for &n in &a.n {
        for &rp in &a.rp {
            let params = CodeParams {
                n,
                blocks: a.blocks,
                rate_prime: rp,
                rate_double_prime: a.rpp,
                delta: a.delta,
                flavor,
                seed: code_seed,
                memory_cap: None,
            };
            let code = build_code(ch, &law, &q, &params)?;
            for jam in &jammers {
                let using = if a.randomized { CodeUse::FreshPermutations(&code) } else { CodeUse::Plain(&code) };
                let e = estimate_error(ch, using, jam, a.trials, a.common.seed)?;
                rows.push(SimRow {
                    n,
                    blocks: a.blocks,
                    rate_prime: rp,
                    rate_double_prime: a.rpp,
                    jammer: jam.label(),
                    trials: e.trials,
                    errors: e.errors,
                    p_hat: e.p_hat,
                    ci_lo: e.wilson_interval.0,
                    ci_hi: e.wilson_interval.1,
                    seed: a.common.seed,
                    block_errors: e.block_errors,
                });
            }
        }
    }
    let report = SimulateReport { manifest: manifest("simulate", argv, a, vec![a.common.seed, code_seed], start), rows };
    Ok(Output { text: render(&report, a.common.format, simulate_csv), exit: 0, out: a.common.out.clone() })
}

/// Reads the manifest of a report and runs its command again.
pub fn cmd_replay(a: &ReplayArgs) -> Result<Output, CliError> {
    let m = read_manifest(&a.report)?;
    let mut argv = vec!["avrc".to_string()];
    argv.extend(m.argv.iter().cloned());
    if let Some(out) = &a.out {
        argv.push("--out".into());
        argv.push(out.display().to_string());
    }
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Usage(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a manifest cannot replay another replay".into()));
    }
    run(&cli, &argv[1..])
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = std::fs::read_to_string(path)?;
    let r: ManifestOnly =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("not a report with a manifest: {e}")))?;
    Ok(r.manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_flags_are_not_recorded() {
        let argv: Vec<String> = ["bounds", "--spec", "a.json", "--out", "r.json", "--out=s.json", "--seed", "3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(strip_out(&argv), ["bounds", "--spec", "a.json", "--seed", "3"]);
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(0.05, 2).unwrap().len(), 21);
        assert_eq!(simplex_grid(0.25, 3).unwrap().len(), 15);
        assert!(simplex_grid(0.3, 2).is_err());
        assert!(simplex_grid(0.0, 2).is_err());
    }

    #[test]
    fn jammer_parsing() {
        let ch = avrc_core::catalog::bsc_relay_with_additive_state(0.1);
        assert_eq!(parse_jammers("iid:0.25,0.75", &ch, 4, 1e-8).unwrap().len(), 1);
        assert!(parse_jammers("iid:0.25", &ch, 4, 1e-8).is_err());
        assert!(parse_jammers("per-block:1,0;0,1", &ch, 4, 1e-8).is_err());
        assert!(parse_jammers("per-block:1,0;0,1", &ch, 2, 1e-8).is_ok());
        assert!(matches!(
            parse_jammers("attack-x1y1", &ch, 2, 1e-8).unwrap()[0],
            JammerStrategy::AttackX1Y1 { .. }
        ));
        assert!(parse_jammers("bogus", &ch, 2, 1e-8).is_err());
    }

    #[test]
    fn ordering_flags_violations() {
        let ch = avrc_core::catalog::noiseless_bit_pipe();
        let q = StateUncertainty::full_simplex(ch.sizes().s);
        let opts = OptimizerOptions::default();
        let mut cut = cutset_bound(&ch, &q, &opts).unwrap();
        let pdf = partial_df_bound(&ch, &q, &opts).unwrap();
        assert!(ordering_check(&[cut.clone(), pdf.clone()]).holds);
        cut.value = pdf.value - 0.01;
        let check = ordering_check(&[cut, pdf]);
        assert!(!check.holds);
        assert_eq!(check.checks.len(), 1);
    }
}
