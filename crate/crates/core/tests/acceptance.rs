//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (visible with `--nocapture`). Tolerances are pinned here.
//!
//! Run with: cargo test --test acceptance -- --nocapture

use std::time::Instant;

use num_complex::Complex64;
use qlam::analysis::{
    check_asymptotic_completeness, oracle_tree, snf_mass, suite_completeness, suite_diamond,
    suite_factorization, suite_invariants, suite_random_descent, CheckOutcome, OracleGuard,
    SuiteParams,
};
use qlam::program::{MultiDistribution, Program};
use qlam::quantum::QuantumState;
use qlam::rewrite::{Engine, Mode, RunConfig, SchedulerKind};
use qlam::syntax::{parse_term, GateTable};
use qlam::EPS;

const DELTA: &str = "\\!x. meas(U[H] new, \\y. y, x !x)";

fn engine() -> Engine {
    Engine::default()
}

fn term(s: &str) -> qlam::Term {
    parse_term(s, &GateTable::default()).unwrap()
}

fn closed(s: &str) -> Program {
    Program::closed(term(s)).unwrap()
}

fn coin() -> Program {
    closed(&format!("({DELTA}) !({DELTA})"))
}

fn report(criterion: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "acceptance {criterion} failed: {detail}");
}

/// Criterion 1: the coin gains snf mass 1 - 2^-n after each round of 4
/// strict steps; a 200-step run estimates a limit of at least 1 - 2^-15,
/// in under a second.
#[test]
fn criterion_1_quantum_coin() {
    let e = engine();
    let started = Instant::now();
    let cfg = RunConfig {
        mode: Mode::StrictSurface,
        scheduler: SchedulerKind::Leftmost,
        seed: 0,
        max_steps: 200,
        delta: 1e-9,
        window: 201,
    };
    let trace = e.run(MultiDistribution::singleton(coin()), &cfg).unwrap();
    let elapsed = started.elapsed();

    let curve = trace.pr_curve();
    let mut round_errors = Vec::new();
    for n in 1..=50usize {
        let expected = 1.0 - 2f64.powi(-(n as i32));
        let got = curve[4 * n].1;
        if (got - expected).abs() > 1e-9 {
            round_errors.push(format!("round {n}: pr {got} vs {expected}"));
        }
    }
    let limit_ok = trace.final_pr() >= 1.0 - 2f64.powi(-15);
    let fast = elapsed.as_secs_f64() < 1.0;
    report(
        "1 quantum coin rounds",
        round_errors.is_empty() && limit_ok && fast,
        &format!(
            "rounds: {:?}; limit {}; elapsed {:?}",
            round_errors,
            trace.final_pr(),
            elapsed
        ),
    );
}

/// Criterion 2: the entangled pair terminates in [1/2 (|0>, I r0),
/// 1/2 (|1>, I r0)], then [1/2 (|0>, r0), 1/2 (|1>, r0)], states within
/// 1e-9.
#[test]
fn criterion_2_entangled_pair() {
    let e = engine();
    let p = qlam::program::parse_program_file(
        "let <x, y> = U[CNOT] <U[H] new, new> in meas(y, \\z. z, \\z. z) x",
        e.gates(),
    )
    .unwrap();
    let cfg = RunConfig {
        mode: Mode::StrictSurface,
        scheduler: SchedulerKind::Leftmost,
        seed: 0,
        max_steps: 32,
        delta: 1e-9,
        window: 33,
    };
    let trace = e.run(MultiDistribution::singleton(p), &cfg).unwrap();

    let one =
        QuantumState::from_amplitudes(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
            .unwrap();
    let split = MultiDistribution::from_entries(vec![
        (
            0.5,
            Program::new(QuantumState::zeros(1), term("(\\z. z) r0")).unwrap(),
        ),
        (0.5, Program::new(one.clone(), term("(\\z. z) r0")).unwrap()),
    ])
    .unwrap();
    let done = MultiDistribution::from_entries(vec![
        (
            0.5,
            Program::new(QuantumState::zeros(1), term("r0")).unwrap(),
        ),
        (0.5, Program::new(one, term("r0")).unwrap()),
    ])
    .unwrap();
    let hit_split = trace.steps.iter().any(|s| s.result.mdist_eq(&split));
    let terminal = trace.final_mdist().mdist_eq(&done);
    report(
        "2 entangled pair",
        hit_split && terminal,
        &format!("split seen: {hit_split}; final {}", trace.final_mdist()),
    );
}

/// Criterion 3: both re-indexing equalities of the two-register example.
#[test]
fn criterion_3_reindexing() {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let kron = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
        a.iter()
            .flat_map(|x| b.iter().map(move |y| x * y))
            .collect()
    };
    let psi = vec![c(0.6, 0.0), c(0.0, 0.8)];
    let phi = vec![c(0.0, 1.0), c(0.0, 0.0)];
    let a = Program::new(
        QuantumState::from_amplitudes(kron(&psi, &phi)).unwrap(),
        term("<r0, r1>"),
    )
    .unwrap();
    let b = Program::new(
        QuantumState::from_amplitudes(kron(&phi, &psi)).unwrap(),
        term("<r1, r0>"),
    )
    .unwrap();
    let product_ok = a.program_eq(&b);

    let (al, be, ga, de) = (c(0.5, 0.1), c(0.3, -0.2), c(-0.4, 0.3), c(0.2, 0.4));
    let norm: f64 = [al, be, ga, de]
        .iter()
        .map(|x| x.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let q1 =
        QuantumState::from_amplitudes(vec![al / norm, be / norm, ga / norm, de / norm]).unwrap();
    let q2 =
        QuantumState::from_amplitudes(vec![al / norm, ga / norm, be / norm, de / norm]).unwrap();
    let p1 = Program::new(q1, term("<r0, r1>")).unwrap();
    let p2 = Program::new(q2, term("<r1, r0>")).unwrap();
    let entangled_ok = p1.program_eq(&p2);

    report(
        "3 re-indexing equalities",
        product_ok && entangled_ok,
        &format!("product {product_ok}, entangled {entangled_ok}"),
    );
}

/// Criterion 4: pointed diamond on 1000 generated programs with at least
/// two surface redexes, in under a minute.
#[test]
fn criterion_4_pointed_diamond() {
    let e = engine();
    let started = Instant::now();
    let params = SuiteParams {
        count: 1000,
        size: 12,
        seed: 41,
    };
    let v = suite_diamond(&e, &params, &OracleGuard::default());
    let elapsed = started.elapsed();
    report(
        "4 pointed diamond suite",
        v.failed == 0
            && v.inconclusive == 0
            && v.skipped == 0
            && v.tried == 1000
            && elapsed.as_secs() < 60,
        &format!(
            "failed {} skipped {} inconclusive {} in {:?}: {:?}",
            v.failed, v.skipped, v.inconclusive, elapsed, v.counterexamples
        ),
    );
}

/// Criterion 5: exhaustive strict enumeration to depth 6 on 300 programs:
/// equal snf mass at every depth, a single multidistribution at depth 6.
#[test]
fn criterion_5_random_descent() {
    let e = engine();
    let params = SuiteParams {
        count: 300,
        size: 10,
        seed: 52,
    };
    let v = suite_random_descent(&e, &params, 6, &OracleGuard::default());
    report(
        "5 random descent suite",
        v.failed == 0 && v.inconclusive == 0 && v.tried == 300,
        &format!(
            "failed {} inconclusive {}: {:?}",
            v.failed, v.inconclusive, v.counterexamples
        ),
    );
}

/// Criterion 6: 200 random general walks (k <= 4, size <= 12) each admit
/// a surface-then-nonsurface factorization; no hard failures and no
/// inconclusive-at-bound at these sizes.
#[test]
fn criterion_6_standardization() {
    let e = engine();
    let params = SuiteParams {
        count: 200,
        size: 12,
        seed: 63,
    };
    let v = suite_factorization(&e, &params, 4, &OracleGuard::default());
    report(
        "6 standardization suite",
        v.failed == 0 && v.inconclusive == 0,
        &format!(
            "failed {} inconclusive {}: {:?}",
            v.failed, v.inconclusive, v.counterexamples
        ),
    );
}

/// Criterion 7: the coin gives strict Pr 3/4 at depth 8 against a best
/// general Pr of 1/2 at depth 4; 200 generated programs pass (d=3, D=9).
#[test]
fn criterion_7_asymptotic_completeness() {
    let e = engine();
    let guard = OracleGuard::generous();

    let tree = oracle_tree(
        &e,
        MultiDistribution::singleton(coin()),
        4,
        Mode::General,
        &guard,
    )
    .unwrap();
    let max_general = tree
        .levels
        .iter()
        .flatten()
        .map(|m| snf_mass(&e, m))
        .fold(0.0f64, f64::max);
    let cfg = RunConfig {
        mode: Mode::StrictSurface,
        scheduler: SchedulerKind::Leftmost,
        seed: 0,
        max_steps: 8,
        delta: 1e-9,
        window: 9,
    };
    let strict_pr = e
        .run(MultiDistribution::singleton(coin()), &cfg)
        .unwrap()
        .final_pr();
    let coin_ok = (max_general - 0.5).abs() <= EPS
        && (strict_pr - 0.75).abs() <= EPS
        && matches!(
            check_asymptotic_completeness(&e, &coin(), 4, 8, &guard),
            CheckOutcome::Pass
        );

    let params = SuiteParams {
        count: 200,
        size: 12,
        seed: 74,
    };
    let v = suite_completeness(&e, &params, 3, 9, &OracleGuard::default());
    report(
        "7 asymptotic completeness",
        coin_ok && v.failed == 0 && v.inconclusive == 0,
        &format!(
            "coin general {max_general} strict {strict_pr}; suite failed {} inconclusive {}: {:?}",
            v.failed, v.inconclusive, v.counterexamples
        ),
    );
}

/// Criterion 8: the invariant suites at 1000 instances each — norm and
/// mass conservation, validity preservation, bitwise-fixed states under
/// non-surface steps, the thirteen commutation identities, and the
/// supporting equalities (shape, substitutivity, oracle consistency,
/// round-trip, program equality).
#[test]
fn criterion_8_invariant_suites() {
    let e = engine();
    let params = SuiteParams {
        count: 1000,
        size: 12,
        seed: 85,
    };
    let verdicts = suite_invariants(&e, &params);
    let mut bad = Vec::new();
    for v in &verdicts {
        if v.failed > 0 || v.inconclusive > 0 {
            bad.push(format!(
                "{}: {} failures, {} inconclusive ({:?})",
                v.property,
                v.failed,
                v.inconclusive,
                v.counterexamples.first().map(|c| &c.detail)
            ));
        }
    }
    report("8 invariant suites", bad.is_empty(), &format!("{bad:?}"));
}
