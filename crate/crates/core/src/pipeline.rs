//! End-to-end runs on a [`ChainSpec`]: `analyze` derives the constants,
//! `certify` adds exact or simulated tail rows with verdicts, `diagnose`
//! runs the exhaustive proof-internal checks.
//!
//! Failed hypotheses are reported inside the returned report; `Err` is
//! reserved for unusable input and exceeded budgets.

use crate::bound::{markov_tail_bound, iid_tail_bound, BetaResult};
use crate::diagnostics::{
    chernoff_check, fact1_check, fact2_check, fact3_check, lemma1_batch, martingale_profile, truncation_check,
    wbar_check, CheckOutcome, LEMMA1_SLACK,
};
use crate::ergodicity::{default_horizon, fit_ergodicity, slem, ErgodicityCertificate};
use crate::error::{Error, Result};
use crate::exact::{enumeration_budget, lemma1_gap, lemma2_check, value_distribution, Lemma2Check, PathLaw};
use crate::functionals::{tuple_count, ENUMERATION_LIMIT};
use crate::hitting::{optimize_drift, DriftCertificate};
use crate::kernel::{check_h1, stationary_distribution, Distribution};
use crate::montecarlo::{mc_tail, mc_tail_centered, SampleSpec, RNG_DESCRIPTION};
use crate::report::{
    Assumption, CertificationReport, CheckEntry, DiagnosticsSection, FunctionalSummary, Issue, McSummary, Outcome,
    Provenance, TailMethod, TailRow, Verdict, EXIT_ASSUMPTION, EXIT_INPUT, REPORT_SCHEMA_VERSION,
};
use crate::spec::{ChainSpec, ResolvedSpec};

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_STREAMS: u64 = 8;
/// Default size of the random coupling-inequality batch in `diagnose`.
pub const DEFAULT_LEMMA1_BATCH: usize = 0;

/// Command-line overrides.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub lemma1_batch: Option<usize>,
}

impl RunOptions {
    fn sampling(&self, spec: &ResolvedSpec) -> Result<SampleSpec> {
        let base = spec.mc;
        SampleSpec::new(
            self.seed.or(base.map(|s| s.seed)).unwrap_or(DEFAULT_SEED),
            self.samples.or(base.map(|s| s.samples)).unwrap_or(DEFAULT_SAMPLES),
            base.map_or(DEFAULT_STREAMS, |s| s.streams),
        )
    }
}

/// Exit code for an error returned by the pipeline.
pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::NotIrreducible
        | Error::NoGeometricDecay { .. }
        | Error::EmptyRange(_)
        | Error::UOutOfRange { .. }
        | Error::StartNotInC(_) => EXIT_ASSUMPTION,
        _ => EXIT_INPUT,
    }
}

struct Analysis {
    spec: ResolvedSpec,
    report: CertificationReport,
    pi: Option<Distribution>,
    constants: Option<(ErgodicityCertificate, DriftCertificate, BetaResult)>,
}

fn issue(assumption: Assumption, message: impl Into<String>) -> Issue {
    Issue { assumption, message: message.into() }
}

fn run_analysis(chain: &ChainSpec, command: &str, seed: u64) -> Result<Analysis> {
    let spec = chain.resolve()?;
    let kernel = &spec.kernel;
    let space = kernel.space();
    let f = &spec.functional;
    let h1 = check_h1(kernel);
    let mut report = CertificationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: command.to_string(),
        name: chain.name.clone(),
        provenance: Provenance {
            tool: "ergocert".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            spec_hash: chain.hash(),
            seed,
            rng: RNG_DESCRIPTION.into(),
            generated_at_unix: None,
        },
        states: space.labels().to_vec(),
        small_set: spec.small_set.indices().iter().map(|&x| space.label(x).to_string()).collect(),
        start: space.label(spec.start).to_string(),
        horizon: spec.horizon,
        functional: FunctionalSummary {
            kind: f.kind_name().into(),
            c: f.c().to_vec(),
            c_sum: f.c_sum(),
            c_norm_sq: f.c_norm_sq(),
        },
        h1,
        stationary: None,
        ergodicity: None,
        drift: None,
        beta: None,
        issues: Vec::new(),
        warnings: Vec::new(),
        tail_rows: Vec::new(),
        monte_carlo: None,
        diagnostics: None,
        outcome: Outcome::Ok,
    };
    if !spec.start_in_small_set() {
        report.warnings.push(format!(
            "start state {:?} is outside the small set; the bound is only certified for starts in the small set",
            report.start
        ));
    }

    let mut analysis = Analysis { spec, report, pi: None, constants: None };
    if !h1.irreducible {
        analysis.report.issues.push(issue(Assumption::IrreducibleAperiodic, "kernel is not irreducible"));
    } else if !h1.aperiodic {
        analysis
            .report
            .issues
            .push(issue(Assumption::IrreducibleAperiodic, format!("kernel is periodic with period {}", h1.period)));
    }
    if !analysis.report.issues.is_empty() {
        analysis.report.outcome = Outcome::AssumptionFailure;
        return Ok(analysis);
    }

    let spec = &analysis.spec;
    let kernel = &spec.kernel;
    let pi = stationary_distribution(kernel)?;
    analysis.report.stationary = Some(pi.weights().to_vec());
    let horizon = match spec.ergodicity_horizon {
        Some(n) => n,
        None => default_horizon(slem(kernel)?),
    };
    let erg = match fit_ergodicity(kernel, &spec.small_set, &pi, horizon, spec.r_override) {
        Ok(erg) => erg,
        Err(e @ (Error::NoGeometricDecay { .. } | Error::NotIrreducible)) => {
            analysis.report.issues.push(issue(Assumption::GeometricErgodicity, e.to_string()));
            analysis.report.outcome = Outcome::AssumptionFailure;
            analysis.pi = Some(pi);
            return Ok(analysis);
        }
        Err(e) => return Err(e),
    };
    analysis.report.ergodicity = Some(erg.clone());
    match optimize_drift(kernel, &spec.small_set, &erg, spec.grid_size) {
        Ok((drift, beta)) => {
            analysis.report.drift = Some(drift.clone());
            analysis.report.beta = Some(beta);
            analysis.constants = Some((erg, drift, beta));
        }
        Err(e @ (Error::EmptyRange(_) | Error::SolverSingular | Error::UOutOfRange { .. })) => {
            analysis.report.issues.push(issue(Assumption::ReturnTimeMoment, e.to_string()));
            analysis.report.outcome = Outcome::AssumptionFailure;
        }
        Err(e) => return Err(e),
    }
    analysis.pi = Some(pi);
    Ok(analysis)
}

/// Constants only: irreducibility and aperiodicity, `(L, r)`, `(u, M)`, beta.
pub fn analyze(chain: &ChainSpec, options: &RunOptions) -> Result<CertificationReport> {
    let seed = options.seed.or(chain.mc.map(|s| s.seed)).unwrap_or(DEFAULT_SEED);
    Ok(run_analysis(chain, "analyze", seed)?.report)
}

/// Refuses starts outside the small set, where the bound is not claimed.
fn require_start_in_c(analysis: &mut Analysis) -> bool {
    if analysis.spec.start_in_small_set() {
        return true;
    }
    analysis.report.issues.push(issue(
        Assumption::StartInSmallSet,
        format!(
            "start state {:?} is not in the small set; move the start into the small set to certify",
            analysis.report.start
        ),
    ));
    analysis.report.outcome = Outcome::AssumptionFailure;
    false
}

/// Tail rows for every `t`: exact when the path count fits the enumeration
/// budget, Monte Carlo otherwise.
pub fn certify(chain: &ChainSpec, options: &RunOptions) -> Result<CertificationReport> {
    let resolved = chain.resolve()?;
    let sampling = options.sampling(&resolved)?;
    let mut analysis = run_analysis(chain, "certify", sampling.seed)?;
    if analysis.report.outcome != Outcome::Ok || !require_start_in_c(&mut analysis) {
        return Ok(analysis.report);
    }
    let (_, _, beta) = analysis.constants.expect("constants present when analysis succeeded");
    let spec = &analysis.spec;
    let (kernel, f, x) = (&spec.kernel, &spec.functional, spec.start);

    let mut rows = Vec::with_capacity(spec.t_grid.len());
    if tuple_count(kernel.size(), spec.horizon) <= enumeration_budget() {
        let start = Distribution::dirac(kernel.space().clone(), x)?;
        let dist = value_distribution(&PathLaw::new(kernel, &start, spec.horizon)?, f)?;
        for &t in &spec.t_grid {
            let markov = markov_tail_bound(&beta, t, f.c())?.value;
            let iid = iid_tail_bound(t, f.c())?.value;
            let tail = dist.tail(t);
            rows.push(TailRow {
                t,
                markov_bound: markov,
                iid_bound: iid,
                method: TailMethod::Exact,
                tail,
                ci_low: None,
                ci_high: None,
                verdict: Verdict::exact(tail, markov),
                iid_verdict: Verdict::exact(tail, iid),
            });
        }
    } else {
        let first = mc_tail(kernel, x, spec.horizon, f, spec.t_grid[0], &sampling)?;
        analysis.report.monte_carlo = Some(McSummary {
            sampling,
            centering: first.centering,
            centering_exact: first.centering_exact,
        });
        for (k, &t) in spec.t_grid.iter().enumerate() {
            let est = if k == 0 { first } else { mc_tail_centered(kernel, x, f, t, first.centering, &sampling)? };
            let markov = markov_tail_bound(&beta, t, f.c())?.value;
            let iid = iid_tail_bound(t, f.c())?.value;
            rows.push(TailRow {
                t,
                markov_bound: markov,
                iid_bound: iid,
                method: TailMethod::MonteCarlo,
                tail: est.point,
                ci_low: Some(est.ci_low),
                ci_high: Some(est.ci_high),
                verdict: Verdict::interval(est.ci_low, est.ci_high, markov),
                iid_verdict: Verdict::interval(est.ci_low, est.ci_high, iid),
            });
        }
    }
    if rows.iter().any(|r| r.verdict == Verdict::Violated) {
        analysis.report.outcome = Outcome::Violated;
    }
    analysis.report.tail_rows = rows;
    Ok(analysis.report)
}

fn entry(name: &str, outcome: &CheckOutcome) -> CheckEntry {
    CheckEntry {
        name: name.into(),
        passed: outcome.passed,
        checked: outcome.checked,
        skipped: outcome.skipped,
        worst_margin: outcome.worst_margin,
        detail: outcome.violation.as_ref().map(|v| {
            format!("path {:?}, index {}: {} exceeds {}", v.path, v.i, v.lhs, v.rhs)
        }),
    }
}

/// Collects `(passed, margin)` pairs into one entry.
fn tally(name: &str, cells: impl IntoIterator<Item = (bool, f64)>) -> CheckEntry {
    let mut out = CheckEntry { name: name.into(), passed: true, checked: 0, skipped: 0, worst_margin: None, detail: None };
    for (passed, margin) in cells {
        out.checked += 1;
        out.worst_margin = Some(out.worst_margin.map_or(margin, |w: f64| w.min(margin)));
        if !passed && out.passed {
            out.passed = false;
            out.detail = Some(format!("failure at cell {} (margin {margin})", out.checked - 1));
        }
    }
    out
}

/// Exhaustive checks of the decomposition behind the bound. Needs
/// `m^n <= 10^6`.
pub fn diagnose(chain: &ChainSpec, options: &RunOptions) -> Result<CertificationReport> {
    let resolved = chain.resolve()?;
    let paths = tuple_count(resolved.kernel.size(), resolved.horizon);
    if paths > ENUMERATION_LIMIT {
        return Err(Error::BudgetExceeded { paths, budget: ENUMERATION_LIMIT });
    }
    let sampling = options.sampling(&resolved)?;
    let mut analysis = run_analysis(chain, "diagnose", sampling.seed)?;
    if analysis.report.outcome != Outcome::Ok || !require_start_in_c(&mut analysis) {
        return Ok(analysis.report);
    }
    let (erg, _, beta) = analysis.constants.clone().expect("constants present when analysis succeeded");
    let pi = analysis.pi.clone().expect("stationary law present when analysis succeeded");
    let spec = &analysis.spec;
    let (kernel, c_set, f, x, n) = (&spec.kernel, &spec.small_set, &spec.functional, spec.start, spec.horizon);
    let mut checks = Vec::new();

    let start = Distribution::dirac(kernel.space().clone(), x)?;
    let gap = lemma1_gap(kernel, &start, &pi, f)?;
    checks.push(tally("coupling_start_vs_stationary", [(gap.holds(LEMMA1_SLACK), gap.rhs - gap.lhs)]));

    let mut conditional = CheckEntry {
        name: "conditional_gap".into(),
        passed: true,
        checked: 0,
        skipped: 0,
        worst_margin: None,
        detail: None,
    };
    match lemma2_check(kernel, &pi, c_set, f, &erg)? {
        Lemma2Check::Pass { checked, min_margin } => {
            conditional.checked = checked;
            conditional.worst_margin = (checked > 0).then_some(min_margin);
        }
        Lemma2Check::Violation { i, prefix, lhs, rhs } => {
            conditional.passed = false;
            conditional.worst_margin = Some(rhs - lhs);
            conditional.detail = Some(format!("prefix {prefix:?}, index {i}: {lhs} exceeds {rhs}"));
        }
    }
    checks.push(conditional);

    let profile = martingale_profile(kernel, x, c_set, n, f)?;
    checks.push(entry("martingale_telescoping", &profile.telescoping));
    checks.push(entry("martingale_zero_mean_increments", &profile.martingale));
    checks.push(entry("increments_vanish_off_small_set", &fact1_check(&profile)));
    checks.push(entry("increment_bounds", &fact2_check(&profile, erg.l, erg.r, beta.rho)?));
    drop(profile);

    let laplace = fact3_check(kernel, x, c_set, f, &beta)?;
    checks.push(tally("laplace_transform_bound", [(laplace.holds(), laplace.rhs - laplace.lhs)]));
    let chernoff = chernoff_check(kernel, x, c_set, f, &beta, &spec.t_grid)?;
    checks.push(tally(
        "chernoff_recomposition",
        chernoff.iter().map(|row| (row.holds(), row.tail_bound - row.exact_tail)),
    ));
    let truncation = truncation_check(f, beta.truncation_level())?;
    checks.push(tally(
        "truncation",
        [(truncation.holds(), truncation.gap_bound - truncation.max_gap)],
    ));
    let mut wbar = Vec::with_capacity(n);
    for i in 0..n {
        let w = wbar_check(kernel, f, i)?;
        wbar.push((w.holds(), w.c_i - w.sup_abs));
    }
    checks.push(tally("coordinate_increment_sup_norm", wbar));

    let batch_size = options.lemma1_batch.unwrap_or(DEFAULT_LEMMA1_BATCH);
    let batch = if batch_size > 0 { Some(lemma1_batch(batch_size, sampling.seed)?) } else { None };
    let all_passed = checks.iter().all(|c| c.passed) && batch.as_ref().is_none_or(|b| b.passed == b.instances);
    if !all_passed {
        analysis.report.outcome = Outcome::Violated;
    }
    analysis.report.diagnostics = Some(DiagnosticsSection { all_passed, checks, lemma1_batch: batch });
    Ok(analysis.report)
}
