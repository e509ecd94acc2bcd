//! Probabilistic-termination quantities, the brute-force oracle, and
//! executable checks of the calculus' metatheorems over generated
//! instances. A failed verdict here is an engine bug: the properties are
//! theorems.

mod checks;
mod gen;
mod oracle;

pub use checks::{
    check_asymptotic_completeness, check_factorization, check_pointed_diamond,
    check_random_descent, random_general_walk, CheckOutcome, GeneralWalk,
};
pub use gen::{gen_program, gen_program_where, gen_term, GenConfig, Profile};
pub use oracle::{enumerate_schedules, oracle_tree, OracleError, OracleGuard, ReachTree};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::program::{state_amplitudes_json, MultiDistribution, Program};
use crate::quantum::QuantumState;
use crate::rewrite::{
    Choice, Engine, Mode, RedexOccurrence, RunConfig, Schedule, SchedulerKind, StepError,
    StopReason,
};
use crate::syntax::{
    self, parse_term, print_term, register_occurrences, replace_at, subst, validate, GateDef, Term,
};
use crate::EPS;

/// Total weight of surface-normal entries: Pr(m).
pub fn snf_mass(engine: &Engine, m: &MultiDistribution) -> f64 {
    engine.snf_mass(m)
}

/// Numeric witness of a convergence limit.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub pr_curve: Vec<(usize, f64)>,
    pub limit_estimate: f64,
    /// Whether the run plateaued (or fully normalized) before `max_steps`.
    pub stable: bool,
}

/// Runs the leftmost scheduler under `mode` and reports the Pr curve and
/// its plateau estimate. Under the strict lifting the curve is
/// non-decreasing, so the final value estimates the limit.
pub fn estimate_limit(
    engine: &Engine,
    p: &Program,
    mode: Mode,
    max_steps: usize,
    delta: f64,
    window: usize,
) -> Result<ConvergenceReport, StepError> {
    let cfg = RunConfig {
        mode,
        scheduler: SchedulerKind::Leftmost,
        seed: 0,
        max_steps,
        delta,
        window,
    };
    let trace = engine.run(MultiDistribution::singleton(p.clone()), &cfg)?;
    Ok(ConvergenceReport {
        pr_curve: trace.pr_curve(),
        limit_estimate: trace.final_pr(),
        stable: matches!(trace.stop, StopReason::Stable | StopReason::NormalForm),
    })
}

/// A failing instance, shrunk as far as the failure survives.
#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub term: String,
    pub state: Vec<[f64; 2]>,
    pub detail: String,
}

/// Aggregate result of one property suite.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyVerdict {
    pub property: String,
    pub tried: usize,
    pub passed: usize,
    pub failed: usize,
    pub inconclusive: usize,
    pub skipped: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl PropertyVerdict {
    fn new(property: &str) -> PropertyVerdict {
        PropertyVerdict {
            property: property.to_string(),
            tried: 0,
            passed: 0,
            failed: 0,
            inconclusive: 0,
            skipped: 0,
            counterexamples: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.failed == 0
    }

    fn record(&mut self, p: &Program, outcome: CheckOutcome) {
        self.tried += 1;
        match outcome {
            CheckOutcome::Pass => self.passed += 1,
            CheckOutcome::Skipped(_) => self.skipped += 1,
            CheckOutcome::Inconclusive(_) => self.inconclusive += 1,
            CheckOutcome::Fail(detail) => {
                self.failed += 1;
                if self.counterexamples.len() < 8 {
                    self.counterexamples.push(Counterexample {
                        term: print_term(p.term()),
                        state: state_amplitudes_json(p.state()),
                        detail,
                    });
                }
            }
        }
    }
}

/// Shared knobs of the generated-instance suites.
#[derive(Debug, Clone)]
pub struct SuiteParams {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            count: 1000,
            size: 12,
            seed: 0,
        }
    }
}

/// Tries to shrink a failing program while `still_fails` holds. Candidate
/// moves replace measurement branches and thunk bodies with the identity
/// and strip gate applications; all preserve the register set, so the
/// memory still fits.
pub fn shrink_program(p: &Program, still_fails: impl Fn(&Program) -> bool) -> Program {
    let identity = Term::lin_lam(Term::Var(0));
    let mut current = p.clone();
    for _ in 0..40 {
        let mut candidates: Vec<Program> = Vec::new();
        for occ in syntax::enumerate_occurrences(current.term()) {
            let replacement = match occ.term {
                Term::Meas(s, b0, b1) => {
                    let mut outs = Vec::new();
                    if **b0 != identity {
                        outs.push(Term::meas((**s).clone(), identity.clone(), (**b1).clone()));
                    }
                    if **b1 != identity {
                        outs.push(Term::meas((**s).clone(), (**b0).clone(), identity.clone()));
                    }
                    outs
                }
                Term::Bang(b) if **b != identity => {
                    vec![Term::bang(identity.clone())]
                }
                Term::App(f, a) if matches!(&**f, Term::Gate(_)) => {
                    vec![(**a).clone()]
                }
                _ => continue,
            };
            for sub in replacement {
                if let Some(term) = replace_at(current.term(), &occ.pos, sub) {
                    if let Ok(candidate) = Program::new(current.state().clone(), term) {
                        candidates.push(candidate);
                    }
                }
            }
        }
        candidates.sort_by_key(|c| c.term().size());
        match candidates.into_iter().find(|c| still_fails(c)) {
            Some(smaller) => current = smaller,
            None => break,
        }
    }
    current
}

fn record_with_shrink(
    verdict: &mut PropertyVerdict,
    p: &Program,
    outcome: CheckOutcome,
    recheck: impl Fn(&Program) -> CheckOutcome,
) {
    match outcome {
        CheckOutcome::Fail(detail) => {
            let shrunk = shrink_program(p, |q| recheck(q).is_fail());
            let detail = match recheck(&shrunk) {
                CheckOutcome::Fail(d) => d,
                _ => detail,
            };
            verdict.record(&shrunk, CheckOutcome::Fail(detail));
        }
        other => verdict.record(p, other),
    }
}

/// Pointed-diamond suite over programs with at least two surface redexes.
pub fn suite_diamond(
    engine: &Engine,
    params: &SuiteParams,
    guard: &OracleGuard,
) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("diamond");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let cfg = GenConfig {
        size: params.size,
        profile: Profile::Mixed,
        max_registers: 3,
    };
    for _ in 0..params.count {
        let p = gen_program_where(&cfg, &mut rng, 100_000, |p| {
            p.term().size() <= params.size
                && engine
                    .find_redexes(p)
                    .iter()
                    .filter(|r| r.is_surface)
                    .count()
                    >= 2
        });
        let out = check_pointed_diamond(engine, &p, guard);
        record_with_shrink(&mut verdict, &p, out, |q| {
            check_pointed_diamond(engine, q, guard)
        });
    }
    verdict
}

/// Random-descent suite: exhaustive strict enumeration to `depth` on
/// programs that strictly normalize within the horizon, so Newman's
/// random descent (equal lengths, equal results) is what the leaf
/// comparison witnesses.
pub fn suite_random_descent(
    engine: &Engine,
    params: &SuiteParams,
    depth: usize,
    guard: &OracleGuard,
) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("random-descent");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let cfg = GenConfig {
        size: params.size.min(10),
        profile: Profile::Mixed,
        max_registers: 2,
    };
    // Instances must strictly normalize within the horizon (so leaf
    // equality is exactly Newman's random descent) and stay inside the
    // enumeration guards (the check's stated precondition).
    let accept = |p: &Program| {
        let run_cfg = RunConfig {
            max_steps: depth,
            window: depth + 1,
            ..RunConfig::default()
        };
        let normalizes = match engine.run(MultiDistribution::singleton(p.clone()), &run_cfg) {
            Ok(trace) => trace.stop == StopReason::NormalForm,
            Err(_) => false,
        };
        normalizes
            && oracle_tree(
                engine,
                MultiDistribution::singleton(p.clone()),
                depth,
                Mode::StrictSurface,
                guard,
            )
            .is_ok()
    };
    for _ in 0..params.count {
        let p = gen_program_where(&cfg, &mut rng, 100_000, accept);
        let out = check_random_descent(engine, &p, depth, guard);
        record_with_shrink(&mut verdict, &p, out, |q| {
            check_random_descent(engine, q, depth, guard)
        });
    }
    verdict
}

/// Factorization suite: random ⇒-walks of up to `k` steps, each
/// reorganized into surface-then-nonsurface order by bounded search.
pub fn suite_factorization(
    engine: &Engine,
    params: &SuiteParams,
    k: usize,
    guard: &OracleGuard,
) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("factorization");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let cfg = GenConfig {
        size: params.size.min(12),
        profile: Profile::ClassicalHeavy,
        max_registers: 2,
    };
    let max_size = params.size.min(12);
    for i in 0..params.count {
        let p = gen_program_where(&cfg, &mut rng, 100_000, |p| {
            p.term().size() <= max_size && !engine.find_redexes(p).is_empty()
        });
        let steps = 1 + (i % k);
        let seed = params.seed.wrapping_add(i as u64);
        let out = check_factorization(engine, &p, steps, seed, guard);
        record_with_shrink(&mut verdict, &p, out, |q| {
            check_factorization(engine, q, steps, seed, guard)
        });
    }
    verdict
}

/// Asymptotic-completeness suite: strict depth-`big_d` Pr must dominate
/// the best general depth-`d` Pr.
pub fn suite_completeness(
    engine: &Engine,
    params: &SuiteParams,
    d: usize,
    big_d: usize,
    guard: &OracleGuard,
) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("completeness");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let cfg = GenConfig {
        size: params.size.min(12),
        profile: Profile::QuantumHeavy,
        max_registers: 2,
    };
    // The general-mode tree must fit the guards (the check's stated
    // precondition); instances that blow up are regenerated.
    let accept = |p: &Program| {
        oracle_tree(
            engine,
            MultiDistribution::singleton(p.clone()),
            d,
            Mode::General,
            guard,
        )
        .is_ok()
    };
    for _ in 0..params.count {
        let p = gen_program_where(&cfg, &mut rng, 100_000, accept);
        let out = check_asymptotic_completeness(engine, &p, d, big_d, guard);
        record_with_shrink(&mut verdict, &p, out, |q| {
            check_asymptotic_completeness(engine, q, d, big_d, guard)
        });
    }
    verdict
}

/// The invariant suites: norm and mass conservation, validity
/// preservation, inertness of non-surface steps, shape preservation,
/// substitutivity, the commutation identities, oracle consistency, the
/// parse∘print round-trip, and program equality as an equivalence.
pub fn suite_invariants(engine: &Engine, params: &SuiteParams) -> Vec<PropertyVerdict> {
    vec![
        suite_state_norm(engine, params),
        suite_mass_preservation(engine, params),
        suite_validity_preservation(engine, params),
        suite_nonsurface_inert(engine, params),
        suite_shape_preservation(engine, params),
        suite_substitutivity(engine, params),
        suite_commutation(params),
        suite_oracle_consistency(engine, params),
        suite_roundtrip(engine, params),
        suite_program_eq(engine, params),
    ]
}

fn gen_cfg(params: &SuiteParams, profile: Profile) -> GenConfig {
    GenConfig {
        size: params.size,
        profile,
        max_registers: 3,
    }
}

/// Norm preservation along strict runs, plus Pr monotonicity.
fn suite_state_norm(engine: &Engine, params: &SuiteParams) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("state-norm");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let cfg = gen_cfg(params, Profile::QuantumHeavy);
    for i in 0..params.count {
        let p = gen_program(&cfg, &mut rng);
        let run_cfg = RunConfig {
            scheduler: if i % 2 == 0 {
                SchedulerKind::Leftmost
            } else {
                SchedulerKind::Random
            },
            seed: i as u64,
            max_steps: 8,
            window: 9,
            ..RunConfig::default()
        };
        let out = match engine.run(MultiDistribution::singleton(p.clone()), &run_cfg) {
            Err(e) => CheckOutcome::Fail(format!("run failed: {e}")),
            Ok(trace) => {
                let mut out = CheckOutcome::Pass;
                let mut last_pr = trace.initial_pr;
                'outer: for step in &trace.steps {
                    for (_, q) in step.result.entries() {
                        let norm = q.state().norm();
                        if (norm - 1.0).abs() > EPS {
                            out = CheckOutcome::Fail(format!(
                                "norm {norm} after a step on {}",
                                print_term(q.term())
                            ));
                            break 'outer;
                        }
                    }
                    if step.pr < last_pr - EPS {
                        out = CheckOutcome::Fail(format!(
                            "snf mass dropped from {last_pr} to {}",
                            step.pr
                        ));
                        break;
                    }
                    last_pr = step.pr;
                }
                out
            }
        };
        verdict.record(&p, out);
    }
    verdict
}

fn suite_mass_preservation(engine: &Engine, params: &SuiteParams) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("mass-preservation");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(1));
    let cfg = gen_cfg(params, Profile::QuantumHeavy);
    let guard = OracleGuard::default();
    for i in 0..params.count {
        let p = gen_program(&cfg, &mut rng);
        let mode = match i % 3 {
            0 => Mode::General,
            1 => Mode::Surface,
            _ => Mode::StrictSurface,
        };
        let mut m = MultiDistribution::singleton(p.clone());
        let mut out = CheckOutcome::Pass;
        for _ in 0..4 {
            let schedules = match enumerate_schedules(engine, &m, mode, &guard) {
                Ok(s) => s,
                Err(e) => {
                    out = CheckOutcome::Inconclusive(e.to_string());
                    break;
                }
            };
            if schedules.is_empty() {
                break;
            }
            let s = &schedules[rng.gen_range(0..schedules.len())];
            let before = m.total_mass();
            m = match engine.lift_step(&m, s, mode) {
                Ok(next) => next,
                Err(e) => {
                    out = CheckOutcome::Fail(format!("lift failed: {e}"));
                    break;
                }
            };
            if (m.total_mass() - before).abs() > EPS {
                out = CheckOutcome::Fail(format!(
                    "mass drifted from {before} to {} under {}",
                    m.total_mass(),
                    schedule_label(s)
                ));
                break;
            }
        }
        verdict.record(&p, out);
    }
    verdict
}

fn schedule_label(s: &Schedule) -> String {
    let fired: Vec<String> =
        s.0.iter()
            .filter_map(|c| match c {
                Choice::Fire(r) => Some(format!("{}@{}", r.kind.name(), r.pos)),
                Choice::Skip => None,
            })
            .collect();
    if fired.is_empty() {
        "all-skip".to_string()
    } else {
        fired.join(" ")
    }
}

/// Every step from a valid program yields valid terms with all register
/// occurrences surface.
fn suite_validity_preservation(engine: &Engine, params: &SuiteParams) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("validity-preservation");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(2));
    let cfg = gen_cfg(params, Profile::Mixed);
    for _ in 0..params.count {
        let p = gen_program(&cfg, &mut rng);
        let mut out = CheckOutcome::Pass;
        'outer: for r in engine.find_redexes(&p) {
            let m = match engine.step_at(&p, &r) {
                Ok(m) => m,
                Err(e) => {
                    out = CheckOutcome::Fail(format!("{}@{}: {e}", r.kind.name(), r.pos));
                    break;
                }
            };
            for (_, q) in m.entries() {
                let report = validate(q.term());
                if !report.is_valid() {
                    out =
                        CheckOutcome::Fail(format!("after {}@{}: {report}", r.kind.name(), r.pos));
                    break 'outer;
                }
                if register_occurrences(q.term()).iter().any(|(_, _, s)| !s) {
                    out = CheckOutcome::Fail(format!(
                        "non-surface register after {}@{}",
                        r.kind.name(),
                        r.pos
                    ));
                    break 'outer;
                }
            }
        }
        verdict.record(&p, out);
    }
    verdict
}

/// Non-surface steps are β steps under a `!` or in a branch: the memory
/// must come out bitwise identical.
fn suite_nonsurface_inert(engine: &Engine, params: &SuiteParams) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("nonsurface-state-fixed");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(3));
    let cfg = gen_cfg(params, Profile::ClassicalHeavy);
    for _ in 0..params.count {
        let p = gen_program_where(&cfg, &mut rng, 200_000, |p| {
            engine.find_redexes(p).iter().any(|r| !r.is_surface)
        });
        let mut out = CheckOutcome::Pass;
        for r in engine.find_redexes(&p).iter().filter(|r| !r.is_surface) {
            match engine.step_at(&p, r) {
                Err(e) => {
                    out = CheckOutcome::Fail(format!("{e}"));
                    break;
                }
                Ok(m) => {
                    let same = m.entries().len() == 1
                        && m.entries()[0].1.state().amplitudes() == p.state().amplitudes();
                    if !same {
                        out = CheckOutcome::Fail(format!(
                            "state changed by non-surface {}@{}",
                            r.kind.name(),
                            r.pos
                        ));
                        break;
                    }
                }
            }
        }
        verdict.record(&p, out);
    }
    verdict
}

/// A non-surface step neither changes the top production of the whole
/// term nor creates or destroys a root redex.
fn suite_shape_preservation(engine: &Engine, params: &SuiteParams) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("shape-preservation");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(4));
    let cfg = gen_cfg(params, Profile::ClassicalHeavy);
    for _ in 0..params.count {
        let p = gen_program_where(&cfg, &mut rng, 200_000, |p| {
            engine.find_redexes(p).iter().any(|r| !r.is_surface)
        });
        let root_kind_before = engine
            .find_redexes(&p)
            .into_iter()
            .find(|r| r.pos.is_root())
            .map(|r| r.kind);
        let mut out = CheckOutcome::Pass;
        for r in engine.find_redexes(&p).iter().filter(|r| !r.is_surface) {
            match engine.step_at(&p, r) {
                Err(e) => {
                    out = CheckOutcome::Fail(format!("{e}"));
                    break;
                }
                Ok(m) => {
                    for (_, q) in m.entries() {
                        let same_top =
                            std::mem::discriminant(p.term()) == std::mem::discriminant(q.term());
                        let root_kind_after = engine
                            .find_redexes(q)
                            .into_iter()
                            .find(|r| r.pos.is_root())
                            .map(|r| r.kind);
                        if !same_top || root_kind_before != root_kind_after {
                            out = CheckOutcome::Fail(format!(
                                "shape broken by {}@{}: {} vs {}",
                                r.kind.name(),
                                r.pos,
                                print_term(p.term()),
                                print_term(q.term())
                            ));
                            break;
                        }
                    }
                }
            }
        }
        verdict.record(&p, out);
    }
    verdict
}

/// Substitutivity: reducing P and then substituting a closed N for a free
/// variable commutes with substituting first and firing the same redex.
fn suite_substitutivity(engine: &Engine, params: &SuiteParams) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("substitutivity");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(5));
    let cfg = gen_cfg(params, Profile::Mixed);
    let closed_cfg = GenConfig {
        size: 6,
        profile: Profile::ClassicalHeavy,
        max_registers: 0,
    };
    for _ in 0..params.count {
        let base = gen_program_where(&cfg, &mut rng, 200_000, |p| {
            !engine.find_redexes(p).is_empty()
        });
        // P = base x, with x free; N closed and register-free.
        let term_with_free = Term::app(base.term().clone(), Term::Free("x".into()));
        let p = match Program::new(base.state().clone(), term_with_free) {
            Ok(p) => p,
            Err(e) => {
                verdict.record(&base, CheckOutcome::Fail(format!("free-var wrap: {e}")));
                continue;
            }
        };
        let n = gen_term(&closed_cfg, &mut rng);
        let redexes = engine.find_redexes(&p);
        let r = &redexes[rng.gen_range(0..redexes.len())];
        let out = (|| {
            let stepped = engine.step_at(&p, r).map_err(|e| e.to_string())?;
            let substituted = Program::new(p.state().clone(), subst(p.term(), "x", &n))
                .map_err(|e| e.to_string())?;
            let stepped_after = engine.step_at(&substituted, r).map_err(|e| e.to_string())?;
            let mut expected = MultiDistribution::default();
            for (w, q) in stepped.entries() {
                let t = subst(q.term(), "x", &n);
                let prog = Program::new(q.state().clone(), t).map_err(|e| e.to_string())?;
                expected.push(*w, prog);
            }
            if stepped_after.mdist_eq(&expected) {
                Ok(())
            } else {
                Err(format!(
                    "firing {}@{} then substituting differs from substituting first",
                    r.kind.name(),
                    r.pos
                ))
            }
        })();
        verdict.record(
            &p,
            match out {
                Ok(()) => CheckOutcome::Pass,
                Err(detail) => CheckOutcome::Fail(detail),
            },
        );
    }
    verdict
}

/// The thirteen commutation identities of the register-operator algebra,
/// on random states with disjoint random indices. Measurement deletes its
/// qubit, so indices on the later operator slide down when the earlier
/// one removed a lower qubit.
fn suite_commutation(params: &SuiteParams) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("commutation");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(6));
    let gates = crate::syntax::GateTable::default();
    let h = gates.get("H").unwrap().clone();
    let not = gates.get("NOT").unwrap().clone();
    let cnot = gates.get("CNOT").unwrap().clone();
    let placeholder = Program::closed(Term::lin_lam(Term::Var(0))).unwrap();
    for trial in 0..params.count {
        let n = 3 + (trial % 3) as u32; // 3..=5 qubits
        let q = QuantumState::random(n, &mut rng);
        let out = commutation_identities(&q, &h, &not, &cnot, &mut rng);
        verdict.record(
            &placeholder,
            match out {
                Ok(()) => CheckOutcome::Pass,
                Err(detail) => CheckOutcome::Fail(detail),
            },
        );
    }
    verdict
}

/// Index adjustment after the deletion of qubit `deleted`.
fn adj(i: u32, deleted: u32) -> u32 {
    if i > deleted {
        i - 1
    } else {
        i
    }
}

fn states_close(a: &QuantumState, b: &QuantumState, what: &str) -> Result<(), String> {
    if a.approx_eq(b, EPS) {
        Ok(())
    } else {
        Err(format!("{what}: operator orders disagree"))
    }
}

fn commutation_identities(
    q: &QuantumState,
    h: &GateDef,
    not: &GateDef,
    cnot: &GateDef,
    rng: &mut ChaCha8Rng,
) -> Result<(), String> {
    let n = q.qubit_count();
    let mut idx: Vec<u32> = (0..n).collect();
    for k in (1..idx.len()).rev() {
        idx.swap(k, rng.gen_range(0..=k));
    }
    let (i, j, k) = (idx[0], idx[1], idx[2]);
    let b = rng.gen_range(0..2u8);
    let c = rng.gen_range(0..2u8);
    let max = n + 2;
    let err = |e: crate::quantum::QuantumError| e.to_string();

    // ν commutes with gates and projections on untouched qubits.
    let lhs = q
        .apply_unary(h, i)
        .map_err(err)?
        .new_qubit(max)
        .map_err(err)?;
    let rhs = q
        .new_qubit(max)
        .map_err(err)?
        .apply_unary(h, i)
        .map_err(err)?;
    states_close(&lhs, &rhs, "nu vs unary")?;

    let lhs = q
        .apply_binary(cnot, i, j)
        .map_err(err)?
        .new_qubit(max)
        .map_err(err)?;
    let rhs = q
        .new_qubit(max)
        .map_err(err)?
        .apply_binary(cnot, i, j)
        .map_err(err)?;
    states_close(&lhs, &rhs, "nu vs binary")?;

    if let Some((_, proj)) = q.project(i, b).map_err(err)? {
        let lhs = proj.new_qubit(max).map_err(err)?;
        let rhs_grown = q.new_qubit(max).map_err(err)?;
        let (_, rhs) = rhs_grown.project(i, b).map_err(err)?.ok_or("vanished")?;
        states_close(&lhs, &rhs, "nu vs projection")?;
    }

    // Disjoint gates commute.
    let lhs = q
        .apply_unary(h, i)
        .map_err(err)?
        .apply_unary(not, j)
        .map_err(err)?;
    let rhs = q
        .apply_unary(not, j)
        .map_err(err)?
        .apply_unary(h, i)
        .map_err(err)?;
    states_close(&lhs, &rhs, "unary vs unary")?;

    let lhs = q
        .apply_binary(cnot, i, j)
        .map_err(err)?
        .apply_unary(h, k)
        .map_err(err)?;
    let rhs = q
        .apply_unary(h, k)
        .map_err(err)?
        .apply_binary(cnot, i, j)
        .map_err(err)?;
    states_close(&lhs, &rhs, "unary vs binary")?;

    if n >= 4 {
        let l2 = idx[3];
        let lhs = q
            .apply_binary(cnot, i, j)
            .map_err(err)?
            .apply_binary(cnot, k, l2)
            .map_err(err)?;
        let rhs = q
            .apply_binary(cnot, k, l2)
            .map_err(err)?
            .apply_binary(cnot, i, j)
            .map_err(err)?;
        states_close(&lhs, &rhs, "binary vs binary")?;
    }

    // Gates commute with projections of other qubits (indices slide after
    // the deletion).
    if let Some((_, proj)) = q.project(j, b).map_err(err)? {
        let lhs = proj.apply_unary(h, adj(i, j)).map_err(err)?;
        let gated = q.apply_unary(h, i).map_err(err)?;
        let (_, rhs) = gated.project(j, b).map_err(err)?.ok_or("vanished")?;
        states_close(&lhs, &rhs, "unary vs projection")?;

        if n >= 4 {
            let l2 = idx[3];
            let lhs = proj
                .apply_binary(cnot, adj(k, j), adj(l2, j))
                .map_err(err)?;
            let gated = q.apply_binary(cnot, k, l2).map_err(err)?;
            let (_, rhs) = gated.project(j, b).map_err(err)?.ok_or("vanished")?;
            states_close(&lhs, &rhs, "binary vs projection")?;
        }
    }

    // Projections of distinct qubits commute, and the joint probabilities
    // satisfy the exchange identity.
    if let Some((pj, proj_j)) = q.project(j, c).map_err(err)? {
        if let Some((pi_after, proj_ij)) = proj_j.project(adj(i, j), b).map_err(err)? {
            let (pi, proj_i) = q.project(i, b).map_err(err)?.ok_or("vanished")?;
            let (pj_after, proj_ji) = proj_i
                .project(adj(j, i), c)
                .map_err(err)?
                .ok_or("vanished")?;
            states_close(&proj_ij, &proj_ji, "projection vs projection")?;
            let lhs = pj * pi_after;
            let rhs = pi * pj_after;
            if (lhs - rhs).abs() > EPS {
                return Err(format!("probability exchange: {lhs} vs {rhs}"));
            }
        }
    }

    // Outcome probabilities are invariant under ν and disjoint gates.
    let p0 = q.outcome_probability(i, b).map_err(err)?;
    let grown = q.new_qubit(max).map_err(err)?;
    if (grown.outcome_probability(i, b).map_err(err)? - p0).abs() > EPS {
        return Err("probability changed by nu".to_string());
    }
    let gated = q.apply_unary(not, j).map_err(err)?;
    if (gated.outcome_probability(i, b).map_err(err)? - p0).abs() > EPS {
        return Err("probability changed by disjoint unary".to_string());
    }
    let gated = q.apply_binary(cnot, j, k).map_err(err)?;
    if (gated.outcome_probability(i, b).map_err(err)? - p0).abs() > EPS {
        return Err("probability changed by disjoint binary".to_string());
    }
    Ok(())
}

/// The leftmost strict trace must appear among the oracle's reachable
/// multidistributions at every depth.
fn suite_oracle_consistency(engine: &Engine, params: &SuiteParams) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("oracle-consistency");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(7));
    let cfg = GenConfig {
        size: params.size.min(10),
        profile: Profile::Mixed,
        max_registers: 2,
    };
    let guard = OracleGuard::default();
    let depth = 4;
    for _ in 0..params.count {
        let p = gen_program_where(&cfg, &mut rng, 100_000, |p| {
            oracle_tree(
                engine,
                MultiDistribution::singleton(p.clone()),
                depth,
                Mode::StrictSurface,
                &guard,
            )
            .is_ok()
        });
        let out = (|| {
            let run_cfg = RunConfig {
                max_steps: depth,
                window: depth + 1,
                ..RunConfig::default()
            };
            let trace = engine
                .run(MultiDistribution::singleton(p.clone()), &run_cfg)
                .map_err(|e| CheckOutcome::Fail(e.to_string()))?;
            let tree = oracle_tree(
                engine,
                MultiDistribution::singleton(p.clone()),
                depth,
                Mode::StrictSurface,
                &guard,
            )
            .map_err(|e| CheckOutcome::Inconclusive(e.to_string()))?;
            let mut mdists = vec![trace.initial.clone()];
            mdists.extend(trace.steps.iter().map(|s| s.result.clone()));
            for (d, m) in mdists.iter().enumerate() {
                let level = &tree.levels[d.min(tree.levels.len() - 1)];
                if !level.iter().any(|x| x.mdist_eq(m)) {
                    return Err(CheckOutcome::Fail(format!(
                        "leftmost trace at depth {d} missing from the oracle frontier"
                    )));
                }
            }
            Ok(())
        })();
        verdict.record(
            &p,
            match out {
                Ok(()) => CheckOutcome::Pass,
                Err(o) => o,
            },
        );
    }
    verdict
}

/// parse ∘ print is the identity on generated valid terms.
fn suite_roundtrip(engine: &Engine, params: &SuiteParams) -> PropertyVerdict {
    let mut verdict = PropertyVerdict::new("parse-print-roundtrip");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(8));
    let cfg = gen_cfg(params, Profile::Mixed);
    for _ in 0..params.count {
        let p = gen_program(&cfg, &mut rng);
        let printed = print_term(p.term());
        let out = match parse_term(&printed, engine.gates()) {
            Ok(back) if &back == p.term() => CheckOutcome::Pass,
            Ok(back) => CheckOutcome::Fail(format!(
                "round-trip changed the term: {printed} reparsed as {}",
                print_term(&back)
            )),
            Err(e) => CheckOutcome::Fail(format!("printed form does not parse: {printed}: {e}")),
        };
        verdict.record(&p, out);
    }
    verdict
}

/// program_eq is reflexive and symmetric, closes under re-indexing, and
/// tolerates small perturbations transitively; canonicalization is
/// idempotent.
fn suite_program_eq(engine: &Engine, params: &SuiteParams) -> PropertyVerdict {
    let _ = engine;
    let mut verdict = PropertyVerdict::new("program-eq-equivalence");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(9));
    let cfg = gen_cfg(params, Profile::Mixed);
    let mut previous: Option<Program> = None;
    for _ in 0..params.count {
        let p = gen_program(&cfg, &mut rng);
        let out = (|rng: &mut ChaCha8Rng| {
            if !p.program_eq(&p) {
                return Err("not reflexive".to_string());
            }
            let again =
                Program::new(p.state().clone(), p.term().clone()).map_err(|e| e.to_string())?;
            if again.term() != p.term() || !again.state().approx_eq(p.state(), 0.0) {
                return Err("canonicalization is not idempotent".to_string());
            }
            // Random re-indexing stays in the class.
            let n = p.state().qubit_count();
            if n > 0 {
                let mut map: Vec<u32> = (0..n).collect();
                for k in (1..map.len()).rev() {
                    map.swap(k, rng.gen_range(0..=k));
                }
                let sigma = crate::quantum::Permutation::new(map).unwrap();
                let term = syntax::map_registers(p.term(), &|i| sigma.apply(i));
                let state = p
                    .state()
                    .permute(&sigma.inverse())
                    .map_err(|e| e.to_string())?;
                let reindexed = Program::new(state, term).map_err(|e| e.to_string())?;
                if !p.program_eq(&reindexed) || !reindexed.program_eq(&p) {
                    return Err("re-indexed copy not equal (or not symmetric)".to_string());
                }
            }
            // Transitivity with an ε/2 construction margin: two
            // perturbations of the same state stay mutually equal.
            let perturb = |rng: &mut ChaCha8Rng| {
                let amp: Vec<_> = p
                    .state()
                    .amplitudes()
                    .iter()
                    .map(|a| {
                        a + num_complex::Complex64::new(
                            (rng.gen::<f64>() - 0.5) * 4e-10,
                            (rng.gen::<f64>() - 0.5) * 4e-10,
                        )
                    })
                    .collect();
                QuantumState::from_amplitudes(amp)
            };
            if let (Ok(s1), Ok(s2)) = (perturb(rng), perturb(rng)) {
                let p1 = Program::new(s1, p.term().clone()).map_err(|e| e.to_string())?;
                let p2 = Program::new(s2, p.term().clone()).map_err(|e| e.to_string())?;
                if !(p.program_eq(&p1) && p.program_eq(&p2) && p1.program_eq(&p2)) {
                    return Err("perturbed copies fall outside the tolerance".to_string());
                }
            }
            if let Some(prev) = &previous {
                if p.program_eq(prev) != prev.program_eq(&p) {
                    return Err("symmetry broken across distinct programs".to_string());
                }
            }
            Ok(())
        })(&mut rng);
        verdict.record(
            &p,
            match out {
                Ok(()) => CheckOutcome::Pass,
                Err(detail) => CheckOutcome::Fail(detail),
            },
        );
        previous = Some(p);
    }
    verdict
}

/// The redex positions of `p`, rendered for reports.
pub fn describe_redexes(engine: &Engine, p: &Program) -> Vec<String> {
    engine
        .find_redexes(p)
        .iter()
        .map(|r: &RedexOccurrence| {
            format!(
                "{}@{}{}",
                r.kind.name(),
                r.pos,
                if r.is_surface { "" } else { " (deep)" }
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::GateTable;

    fn engine() -> Engine {
        Engine::default()
    }

    fn closed(s: &str) -> Program {
        Program::closed(parse_term(s, &GateTable::default()).unwrap()).unwrap()
    }

    const DELTA: &str = "\\!x. meas(U[H] new, \\y. y, x !x)";

    #[test]
    fn coin_limit_estimate_approaches_one() {
        let e = engine();
        let p = closed(&format!("({DELTA}) !({DELTA})"));
        let report = estimate_limit(&e, &p, Mode::StrictSurface, 200, 1e-12, 201).unwrap();
        assert!(report.limit_estimate >= 1.0 - 2f64.powi(-15));
        for w in report.pr_curve.windows(2) {
            assert!(w[1].1 >= w[0].1 - EPS);
        }
    }

    #[test]
    fn snf_program_curve_is_constant_one() {
        let e = engine();
        let report =
            estimate_limit(&e, &closed("\\x. x"), Mode::StrictSurface, 50, 1e-9, 8).unwrap();
        assert!(report.stable);
        assert!(report
            .pr_curve
            .iter()
            .all(|(_, pr)| (pr - 1.0).abs() <= EPS));
    }

    #[test]
    fn omega_curve_is_constant_zero() {
        let e = engine();
        let omega = closed("(\\!x. x !x) !(\\!x. x !x)");
        // Exhaustive oracle to depth 20: no snf is ever reachable.
        let tree = oracle_tree(
            &e,
            MultiDistribution::singleton(omega.clone()),
            20,
            Mode::StrictSurface,
            &OracleGuard {
                max_depth: 20,
                ..OracleGuard::default()
            },
        )
        .unwrap();
        for level in &tree.levels {
            for m in level {
                assert!(e.snf_mass(m) == 0.0);
            }
        }
        let report = estimate_limit(&e, &omega, Mode::StrictSurface, 20, 1e-9, 8).unwrap();
        assert!(report.limit_estimate == 0.0);
        assert!(report.stable);
    }

    #[test]
    fn small_suites_are_clean() {
        let e = engine();
        let params = SuiteParams {
            count: 30,
            size: 10,
            seed: 11,
        };
        let guard = OracleGuard::default();
        let d = suite_diamond(&e, &params, &guard);
        assert!(d.is_clean(), "{:?}", d.counterexamples);
        let rd = suite_random_descent(&e, &params, 6, &guard);
        assert!(rd.is_clean(), "{:?}", rd.counterexamples);
        let f = suite_factorization(&e, &params, 3, &guard);
        assert!(f.is_clean(), "{:?}", f.counterexamples);
        let c = suite_completeness(&e, &params, 3, 6, &guard);
        assert!(c.is_clean(), "{:?}", c.counterexamples);
    }

    #[test]
    fn small_invariant_suites_are_clean() {
        let e = engine();
        let params = SuiteParams {
            count: 25,
            size: 10,
            seed: 13,
        };
        for v in suite_invariants(&e, &params) {
            assert!(
                v.is_clean(),
                "{}: {:?}",
                v.property,
                v.counterexamples.first().map(|c| &c.detail)
            );
        }
    }

    #[test]
    fn shrinking_keeps_the_failure() {
        // Predicate: contains a measurement.
        let p = closed("meas(U[H] new, (\\x. x) (\\y. y), !new)");
        let has_meas = |q: &Program| {
            fn walk(t: &Term) -> bool {
                match t {
                    Term::Meas(_, _, _) => true,
                    Term::Var(_) | Term::Free(_) | Term::Reg(_) | Term::Gate(_) | Term::New => {
                        false
                    }
                    Term::Bang(b) | Term::LinLam(b) | Term::BangLam(b) => walk(b),
                    Term::App(f, a) => walk(f) || walk(a),
                }
            }
            walk(q.term())
        };
        let shrunk = shrink_program(&p, has_meas);
        assert!(has_meas(&shrunk));
        assert!(shrunk.term().size() < p.term().size());
    }
}
