//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the report stays readable.

use std::f64::consts::LN_2;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use lipsolve::builders::*;
use lipsolve::functionals::ExtendedReal;
use lipsolve::oracle::{
    concavity_violation, convexity_violation, finite_diff_gradient, grid_search_lip, random_model,
    random_predictive, random_prior, seeded_rng, Functional,
};
use lipsolve::predictive::{AnnealingSchedule, RowKind};
use lipsolve::solver::SolverResult;
use lipsolve::{
    bayes_predictive, bayes_risk, conditional_mutual_information, dominating_predictive,
    dq_gradient, kl_risk, lip_gradient, risk_profile, solve_lip, verify_limit_by_annealing,
    ModelTable, Prior, SolverConfig,
};

/// `ln(9/8)`.
const LN_9_8: f64 = 0.117_783_035_656_383_44;

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let elapsed = start.elapsed();
    ensure(elapsed < limit, || {
        format!("took {elapsed:.2?}, limit {limit:?}")
    })?;
    Ok(elapsed)
}

fn tight() -> SolverConfig {
    SolverConfig {
        certificate_tolerance: 1e-12,
        ..SolverConfig::default()
    }
}

fn close(a: ExtendedReal, want: f64, tol: f64) -> bool {
    a.is_finite() && (a.value() - want).abs() <= tol
}

fn example2_reproduction() -> Outcome {
    let start = Instant::now();
    let m = build_example2_model(0.5).map_err(|e| e.to_string())?;
    let q = example2_stated_predictive();
    let stated = risk_profile(&m, &q);
    ensure(
        close(stated.risks[0], 0.0, 1e-9) && close(stated.risks[1], 0.5 * LN_9_8, 1e-9),
        || format!("stated risks {:?}", stated.risks),
    )?;
    let report =
        dominating_predictive(&m, &q, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let dom = risk_profile(&m, &report.predictive);
    ensure(
        close(dom.risks[0], 0.0, 1e-9) && close(dom.risks[1], 0.25 * LN_9_8, 1e-9),
        || format!("dominating risks {:?}", dom.risks),
    )?;
    let t = within_time(start, Duration::from_secs(1))?;
    Ok(format!(
        "risks (0, {:.12}) -> (0, {:.12}) in {t:.2?}",
        stated.risks[1].value(),
        dom.risks[1].value()
    ))
}

fn example1_reproduction() -> Outcome {
    let start = Instant::now();
    let grid = default_grid();
    let m = build_example1_model(&grid).map_err(|e| e.to_string())?;
    let q = example1_mle_predictive(&m, &grid).map_err(|e| e.to_string())?;
    let plug = risk_profile(&m, &q);
    let last = plug.len() - 1;
    for (t, r) in plug.risks.iter().enumerate() {
        let ok = if t == 0 || t == last {
            *r == ExtendedReal::ZERO
        } else {
            r.is_infinite()
        };
        ensure(ok, || format!("plug-in risk at {} is {r}", grid[t]))?;
    }
    let report =
        dominating_predictive(&m, &q, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let dom = risk_profile(&m, &report.predictive);
    for (t, (a, b)) in dom.risks.iter().zip(&plug.risks).enumerate() {
        let same = (a.is_infinite() && b.is_infinite())
            || (a.is_finite() && b.is_finite() && (a.value() - b.value()).abs() <= 1e-12);
        ensure(same, || {
            format!("profiles differ at {}: {a} vs {b}", grid[t])
        })?;
    }
    ensure(report.limit.row_kinds[1] == RowKind::LimitFilled, || {
        "x = 1 row not limit-filled".into()
    })?;
    let row = report.predictive.row(1);
    ensure(
        (row[0] - 0.5).abs() <= 1e-12 && (row[1] - 0.5).abs() <= 1e-12,
        || format!("q(.; x = 1) = {row:?}"),
    )?;
    let t = within_time(start, Duration::from_secs(1))?;
    Ok(format!(
        "profile (0, inf x 9, 0) reproduced, q(.; 1) = ({}, {}) in {t:.2?}",
        row[0], row[1]
    ))
}

fn endpoint_capacity() -> Outcome {
    let start = Instant::now();
    let m = build_binomial_model(0, 1, &default_grid()).map_err(|e| e.to_string())?;
    let r = solve_lip(&m, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let w = r.prior.weights();
    ensure((r.objective - LN_2).abs() <= 1e-6, || {
        format!("objective {}", r.objective)
    })?;
    ensure(r.certificate_gap <= 1e-6, || {
        format!("gap {}", r.certificate_gap)
    })?;
    ensure(w[0] >= 0.499 && w[10] >= 0.499, || {
        format!("endpoint weights {} {}", w[0], w[10])
    })?;
    let t = within_time(start, Duration::from_secs(1))?;
    Ok(format!(
        "objective {:.12}, gap {:.1e}, endpoints ({:.6}, {:.6}) in {t:.2?}",
        r.objective, r.certificate_gap, w[0], w[10]
    ))
}

fn oracle_models() -> Vec<(String, ModelTable)> {
    let mut models: Vec<(String, ModelTable)> = [0.1, 0.5, 0.9]
        .iter()
        .map(|&eps| {
            (
                format!("example2 eps={eps}"),
                build_example2_model(eps).unwrap(),
            )
        })
        .collect();
    let mut rng = seeded_rng(2024);
    for idx in 0..5 {
        let k = 2 + idx % 3;
        let l = 2 + idx % 2;
        models.push((
            format!("random#{idx} (3x{k}x{l})"),
            random_model(&mut rng, 3, k, l),
        ));
    }
    models
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (name, m) in oracle_models() {
        let solved = solve_lip(&m, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let grid = grid_search_lip(&m, 0.005).map_err(|e| e.to_string())?;
        let diff = (solved.objective - grid.value).abs();
        ensure(diff <= 2e-3, || {
            format!(
                "{name}: solver {} vs lattice {}",
                solved.objective, grid.value
            )
        })?;
        ensure(solved.objective >= grid.value - 1e-12, || {
            format!(
                "{name}: lattice point beats the solver ({} > {})",
                grid.value, solved.objective
            )
        })?;
        worst = worst.max(diff);
    }
    let t = within_time(start, Duration::from_secs(30))?;
    Ok(format!(
        "8 models, max |solver - lattice| = {worst:.2e} in {t:.2?}"
    ))
}

/// Interior prior: uniform draw conditioned on every weight being at least 1%.
fn interior_prior<R: Rng>(rng: &mut R, t: usize) -> Prior {
    loop {
        let p = random_prior(rng, t);
        if p.weights().iter().all(|&w| w >= 0.01) {
            return p;
        }
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(99);
    let mut worst = 0.0f64;
    let models = [
        build_example2_model(0.5).unwrap(),
        random_model(&mut rng, 3, 3, 2),
        random_model(&mut rng, 4, 2, 3),
        build_binomial_model(3, 2, &[0.1, 0.4, 0.7, 0.9]).unwrap(),
    ];
    for draw in 0..20 {
        let m = &models[draw % models.len()];
        let prior = interior_prior(&mut rng, m.t());
        let q = random_predictive(&mut rng, m.k(), m.l());

        let fd =
            finite_diff_gradient(Functional::Lip, m, &prior, 1e-6).map_err(|e| e.to_string())?;
        let err = fd.relative_error(&lip_gradient(m, &prior).map_err(|e| e.to_string())?);
        ensure(err <= 1e-5, || {
            format!("lip gradient draw {draw}: relative error {err:.2e}")
        })?;
        worst = worst.max(err);

        let fd =
            finite_diff_gradient(Functional::Dq(&q), m, &prior, 1e-6).map_err(|e| e.to_string())?;
        let err = fd.relative_error(&dq_gradient(m, &prior, &q).map_err(|e| e.to_string())?);
        ensure(err <= 1e-5, || {
            format!("dq gradient draw {draw}: relative error {err:.2e}")
        })?;
        worst = worst.max(err);
    }
    let t = within_time(start, Duration::from_secs(5))?;
    Ok(format!(
        "40 comparisons, max relative error {worst:.2e} in {t:.2?}"
    ))
}

fn equalizer_violation(m: &ModelTable, r: &SolverResult) -> Result<(f64, f64), String> {
    let q = bayes_predictive(m, &r.prior).map_err(|e| e.to_string())?;
    let mut above = f64::NEG_INFINITY;
    let mut off_support = 0.0f64;
    for (t, &w) in r.prior.weights().iter().enumerate() {
        let risk = kl_risk(m, t, &q).value();
        above = above.max(risk - (r.objective + r.certificate_gap));
        if w > 1e-6 {
            off_support = off_support.max((risk - r.objective).abs());
        }
    }
    Ok((above, off_support))
}

fn equalizer(corpus: &[(String, ModelTable, SolverResult)]) -> Outcome {
    let mut solved = 0;
    let mut worst_above = f64::NEG_INFINITY;
    let mut worst_spread = 0.0f64;
    for (name, m, r) in corpus {
        if !r.converged {
            continue;
        }
        solved += 1;
        let (above, spread) = equalizer_violation(m, r).map_err(|e| format!("{name}: {e}"))?;
        ensure(above <= 1e-9, || {
            format!("{name}: max risk exceeds objective + gap by {above:.2e}")
        })?;
        ensure(spread <= 1e-4, || {
            format!("{name}: supported risk off the objective by {spread:.2e}")
        })?;
        worst_above = worst_above.max(above);
        worst_spread = worst_spread.max(spread);
    }
    ensure(solved == corpus.len(), || {
        format!("only {solved} of {} solves converged", corpus.len())
    })?;
    Ok(format!(
        "{solved} solves, max(risk - objective - gap) = {worst_above:.2e}, max supported spread = {worst_spread:.2e}"
    ))
}

fn bayes_optimality() -> Outcome {
    let mut rng = seeded_rng(7);
    let mut worst = f64::INFINITY;
    for idx in 0..50 {
        let (t, k, l) = (2 + idx % 4, 1 + idx % 3, 2 + idx % 3);
        let m = random_model(&mut rng, t, k, l);
        let prior = random_prior(&mut rng, t);
        let q = random_predictive(&mut rng, k, l);
        let bayes = bayes_predictive(&m, &prior).map_err(|e| e.to_string())?;
        let own = bayes_risk(&m, &prior, &bayes).value();
        let other = bayes_risk(&m, &prior, &q).value();
        ensure(other >= own - 1e-12, || {
            format!("triple {idx}: {other} < {own}")
        })?;
        worst = worst.min(other - own);
    }
    Ok(format!("50 triples, min excess {worst:.3e}"))
}

/// `sum_t w_t KL(a_t || sum_s w_s a_s)` over rows of length `n`: mutual
/// information between the parameter and the variable the rows describe.
fn mixture_divergence(rows: impl Fn(usize) -> Vec<f64>, weights: &[f64], n: usize) -> f64 {
    let mut mix = vec![0.0; n];
    for (t, &w) in weights.iter().enumerate() {
        for (a, p) in mix.iter_mut().zip(rows(t)) {
            *a += w * p;
        }
    }
    let mut total = 0.0;
    for (t, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let kl: f64 = rows(t)
            .iter()
            .zip(&mix)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| p * (p / q).ln())
            .sum();
        total += w * kl;
    }
    total
}

fn chain_rule_and_bounds(models: &[(String, ModelTable)]) -> Outcome {
    let mut worst_chain = 0.0f64;
    let mut checks = 0usize;
    let mut rng = seeded_rng(31);
    for (name, m) in models {
        let mut priors = vec![Prior::uniform(m.t())];
        for _ in 0..100 {
            priors.push(random_prior(&mut rng, m.t()));
        }
        for prior in &priors {
            let w = prior.weights();
            let i = conditional_mutual_information(m, prior);
            let i_xy = mixture_divergence(|t| m.joint_row(t).to_vec(), w, m.cells());
            let i_x = mixture_divergence(|t| m.x_marginal_row(t).to_vec(), w, m.k());
            let err = (i - (i_xy - i_x)).abs();
            ensure(err <= 1e-12, || {
                format!("{name}: chain rule off by {err:.2e}")
            })?;
            ensure((0.0..=(m.t() as f64).ln() + 1e-12).contains(&i), || {
                format!("{name}: I = {i} out of bounds")
            })?;
            worst_chain = worst_chain.max(err);
            checks += 1;
        }
    }
    Ok(format!(
        "{checks} (model, prior) pairs over {} models, max chain-rule error {worst_chain:.2e}",
        models.len()
    ))
}

fn convexity_probes() -> Outcome {
    let mut rng = seeded_rng(5);
    let mut worst_i = f64::NEG_INFINITY;
    let mut worst_d = f64::NEG_INFINITY;
    for idx in 0..200 {
        let (t, k, l) = (2 + idx % 3, 1 + idx % 4, 2 + idx % 2);
        let m = random_model(&mut rng, t, k, l);
        let q = random_predictive(&mut rng, k, l);
        let a = random_prior(&mut rng, t);
        let b = if idx % 5 == 0 {
            Prior::point_mass(t, idx % t)
        } else {
            random_prior(&mut rng, t)
        };
        let lambda: f64 = rng.gen();
        let vi = concavity_violation(&m, &a, &b, lambda).map_err(|e| e.to_string())?;
        let vd = convexity_violation(&m, &q, &a, &b, lambda).map_err(|e| e.to_string())?;
        ensure(vi <= 1e-10, || {
            format!("triple {idx}: concavity of I violated by {vi:.2e}")
        })?;
        ensure(vd <= 1e-10, || {
            format!("triple {idx}: convexity of D_q violated by {vd:.2e}")
        })?;
        worst_i = worst_i.max(vi);
        worst_d = worst_d.max(vd);
    }
    Ok(format!(
        "200 triples, worst I {worst_i:.2e}, worst D_q {worst_d:.2e}"
    ))
}

const SWEEP_NS: [u64; 4] = [0, 5, 20, 100];
const SWEEP_MS: [u64; 4] = [1, 5, 100, 1000];

fn run_sweep() -> (Vec<(u64, u64, ModelTable, SolverResult)>, Duration) {
    let start = Instant::now();
    let cfg = SolverConfig {
        certificate_tolerance: 1e-8,
        ..SolverConfig::default()
    };
    let pairs: Vec<(u64, u64)> = SWEEP_NS
        .iter()
        .flat_map(|&n| SWEEP_MS.iter().map(move |&m| (n, m)))
        .collect();
    let results = pairs
        .par_iter()
        .map(|&(n, mm)| {
            let m = build_binomial_model(n, mm, &default_grid()).unwrap();
            let r = solve_lip(&m, &cfg).unwrap();
            (n, mm, m, r)
        })
        .collect();
    (results, start.elapsed())
}

fn sweep_phenomena(sweep: &[(u64, u64, ModelTable, SolverResult)], elapsed: Duration) -> Outcome {
    let get = |n: u64, mm: u64| {
        sweep
            .iter()
            .find(|(a, b, _, _)| *a == n && *b == mm)
            .map(|(_, _, _, r)| r)
            .expect("pair in sweep")
    };
    for (n, mm, _, r) in sweep {
        ensure(r.converged, || {
            format!(
                "({n},{mm}) did not reach gap 1e-8 ({:.2e})",
                r.certificate_gap
            )
        })?;
    }
    let s01 = get(0, 1).support_size();
    ensure(s01 == 2, || format!("(0,1) support {s01}"))?;
    let s0100 = get(0, 100).support_size();
    ensure(s0100 > s01, || {
        format!("(0,100) support {s0100} not above {s01}")
    })?;
    let big = get(0, 1000);
    let min_w = big
        .prior
        .weights()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    ensure(min_w > 1e-3, || format!("(0,1000) smallest weight {min_w}"))?;
    let sym = big
        .symmetrized
        .as_ref()
        .ok_or("(0,1000) has no symmetrized prior")?;
    ensure((sym.objective - big.objective).abs() <= 1e-6, || {
        format!(
            "(0,1000) symmetrized I {} vs {}",
            sym.objective, big.objective
        )
    })?;
    let central = |r: &SolverResult| r.prior.weights()[4..=6].iter().sum::<f64>();
    let (c100, c0) = (central(get(100, 5)), central(get(0, 5)));
    ensure(c100 > c0, || {
        format!("central mass {c100} at (100,5) not above {c0} at (0,5)")
    })?;
    ensure(elapsed < Duration::from_secs(300), || {
        format!("sweep took {elapsed:.2?}")
    })?;
    Ok(format!(
        "supports (0,1)={s01} (0,100)={s0100} (0,1000)=11 (min weight {min_w:.4}); central mass {c100:.4} vs {c0:.4}; 16 pairs in {elapsed:.2?}"
    ))
}

fn annealed_limit() -> Outcome {
    let schedule = AnnealingSchedule::default();
    let uniform = |t| Prior::uniform(t);
    let grid = default_grid();
    let m1 = build_example1_model(&grid).map_err(|e| e.to_string())?;
    let ends = Prior::mix(&Prior::point_mass(11, 0), &Prior::point_mass(11, 10), 0.5)
        .map_err(|e| e.to_string())?;
    let m2 = build_example2_model(0.5).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (name, m, prior) in [
        ("example1", &m1, ends),
        ("example2", &m2, Prior::point_mass(2, 0)),
    ] {
        let report = verify_limit_by_annealing(m, &prior, &uniform(m.t()), &schedule)
            .map_err(|e| e.to_string())?;
        let last = report.trace.last().ok_or("empty trace")?;
        ensure(last.floor == 2f64.powi(-20), || {
            format!("{name}: last floor {}", last.floor)
        })?;
        ensure(last.max_deviation <= 1e-5, || {
            format!("{name}: deviation {:.2e}", last.max_deviation)
        })?;
        worst = worst.max(last.max_deviation);
    }
    Ok(format!("max deviation at floor 2^-20: {worst:.2e}"))
}

fn main() -> ExitCode {
    let (sweep, sweep_time) = run_sweep();

    let mut corpus: Vec<(String, ModelTable, SolverResult)> = Vec::new();
    let mut models: Vec<(String, ModelTable)> = oracle_models();
    let grid = default_grid();
    models.push(("example1".into(), build_example1_model(&grid).unwrap()));
    for (n, mm, m, _) in &sweep {
        models.push((format!("binomial ({n},{mm})"), m.clone()));
    }
    for (name, m) in &models {
        let r = solve_lip(m, &tight()).unwrap();
        corpus.push((name.clone(), m.clone(), r));
    }

    let criteria: Vec<(&str, Check)> = vec![
        (
            "example 2 risk reproduction",
            Box::new(example2_reproduction),
        ),
        (
            "example 1 risk reproduction",
            Box::new(example1_reproduction),
        ),
        ("endpoint capacity", Box::new(endpoint_capacity)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("gradient fidelity", Box::new(gradient_fidelity)),
        ("equalizer certificate", Box::new(|| equalizer(&corpus))),
        ("bayes optimality", Box::new(bayes_optimality)),
        (
            "chain rule and bounds",
            Box::new(|| chain_rule_and_bounds(&models)),
        ),
        ("concavity and convexity probes", Box::new(convexity_probes)),
        (
            "support phenomena across (N, M)",
            Box::new(|| sweep_phenomena(&sweep, sweep_time)),
        ),
        ("annealed limit consistency", Box::new(annealed_limit)),
    ];

    let mut failures = 0;
    for (idx, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS criterion {:>2} ({name}): {detail}", idx + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL criterion {:>2} ({name}): {why}", idx + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
