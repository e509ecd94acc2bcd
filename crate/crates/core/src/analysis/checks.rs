//! Executable checks of the metatheorems: pointed diamond, random descent,
//! surface factorization, asymptotic completeness.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::oracle::{enumerate_schedules, oracle_tree, OracleError, OracleGuard};
use crate::program::{MultiDistribution, Program};
use crate::rewrite::{Choice, Engine, Mode, RunConfig, Schedule, SchedulerKind};
use crate::syntax::print_term;
use crate::EPS;

/// Outcome of one property check on one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    Pass,
    /// Precondition unmet; the instance does not exercise the property.
    Skipped(String),
    /// A search bound or explosion guard was hit before a verdict.
    Inconclusive(String),
    Fail(String),
}

impl CheckOutcome {
    pub fn is_fail(&self) -> bool {
        matches!(self, CheckOutcome::Fail(_))
    }
}

fn schedule_string(s: &Schedule) -> String {
    let parts: Vec<String> =
        s.0.iter()
            .enumerate()
            .map(|(i, c)| match c {
                Choice::Skip => format!("{i}:skip"),
                Choice::Fire(r) => format!("{i}:{}@{}", r.kind.name(), r.pos),
            })
            .collect();
    parts.join(" ")
}

/// Pointed diamond: for every unordered pair of distinct surface redexes
/// of `p`, the two one-step results join in one strict step each, and
/// neither result contains an snf entry.
pub fn check_pointed_diamond(engine: &Engine, p: &Program, guard: &OracleGuard) -> CheckOutcome {
    let surface: Vec<_> = engine
        .find_redexes(p)
        .into_iter()
        .filter(|r| r.is_surface)
        .collect();
    if surface.len() < 2 {
        return CheckOutcome::Skipped("fewer than two surface redexes".to_string());
    }
    for a in 0..surface.len() {
        for b in a + 1..surface.len() {
            let (ra, rb) = (&surface[a], &surface[b]);
            let m1 = match engine.step_at(p, ra) {
                Ok(m) => m,
                Err(e) => return CheckOutcome::Fail(format!("step {}: {e}", ra.pos)),
            };
            let m2 = match engine.step_at(p, rb) {
                Ok(m) => m,
                Err(e) => return CheckOutcome::Fail(format!("step {}: {e}", rb.pos)),
            };
            for (label, m) in [("left", &m1), ("right", &m2)] {
                if let Some((_, q)) = m.entries().iter().find(|(_, q)| engine.is_snf(q)) {
                    return CheckOutcome::Fail(format!(
                        "{label} result of pair ({}, {}) contains the snf entry {}",
                        ra.pos,
                        rb.pos,
                        print_term(q.term())
                    ));
                }
            }
            let succ1 = match strict_successors(engine, &m1, guard) {
                Ok(s) => s,
                Err(e) => return CheckOutcome::Inconclusive(e.to_string()),
            };
            let succ2 = match strict_successors(engine, &m2, guard) {
                Ok(s) => s,
                Err(e) => return CheckOutcome::Inconclusive(e.to_string()),
            };
            let joined = succ1
                .iter()
                .any(|n1| succ2.iter().any(|n2| n1.mdist_eq(n2)));
            if !joined {
                return CheckOutcome::Fail(format!(
                    "no one-step strict join for redexes {}@{} and {}@{}",
                    ra.kind.name(),
                    ra.pos,
                    rb.kind.name(),
                    rb.pos
                ));
            }
        }
    }
    CheckOutcome::Pass
}

fn strict_successors(
    engine: &Engine,
    m: &MultiDistribution,
    guard: &OracleGuard,
) -> Result<Vec<MultiDistribution>, OracleError> {
    let mut out = Vec::new();
    for s in enumerate_schedules(engine, m, Mode::StrictSurface, guard)? {
        out.push(engine.lift_step(m, &s, Mode::StrictSurface)?);
    }
    Ok(out)
}

/// Random descent: exhaustively enumerates strict-surface choice
/// sequences to `depth`; the snf mass must agree at every depth, and the
/// depth-`depth` frontiers must have collapsed to a single
/// multidistribution.
pub fn check_random_descent(
    engine: &Engine,
    p: &Program,
    depth: usize,
    guard: &OracleGuard,
) -> CheckOutcome {
    let tree = match oracle_tree(
        engine,
        MultiDistribution::singleton(p.clone()),
        depth,
        Mode::StrictSurface,
        guard,
    ) {
        Ok(t) => t,
        Err(e) => return CheckOutcome::Inconclusive(e.to_string()),
    };
    for (d, level) in tree.levels.iter().enumerate() {
        let prs: Vec<f64> = level.iter().map(|m| engine.snf_mass(m)).collect();
        if let Some(&first) = prs.first() {
            if let Some(bad) = prs.iter().find(|pr| (*pr - first).abs() > EPS) {
                return CheckOutcome::Fail(format!(
                    "snf mass diverges at depth {d}: {first} vs {bad}"
                ));
            }
        }
    }
    let leaves = tree.levels.last().unwrap();
    if leaves.len() != 1 {
        return CheckOutcome::Fail(format!(
            "{} distinct multidistributions at depth {depth}",
            leaves.len()
        ));
    }
    CheckOutcome::Pass
}

/// The random ⇒-sequence a factorization instance must reorganize, plus
/// its endpoint.
pub struct GeneralWalk {
    pub steps: Vec<Schedule>,
    pub endpoint: MultiDistribution,
    pub surface_steps: usize,
    pub nonsurface_steps: usize,
}

/// Walks `k` random general steps from `p` (fewer if a normal form is
/// reached first).
pub fn random_general_walk(
    engine: &Engine,
    p: &Program,
    k: usize,
    rng: &mut ChaCha8Rng,
    guard: &OracleGuard,
) -> Result<GeneralWalk, OracleError> {
    let mut current = MultiDistribution::singleton(p.clone());
    let mut walk = GeneralWalk {
        steps: Vec::new(),
        endpoint: current.clone(),
        surface_steps: 0,
        nonsurface_steps: 0,
    };
    for _ in 0..k {
        let schedules = enumerate_schedules(engine, &current, Mode::General, guard)?;
        if schedules.is_empty() {
            break;
        }
        let s = schedules[rng.gen_range(0..schedules.len())].clone();
        for c in &s.0 {
            match c {
                Choice::Fire(r) if r.is_surface => walk.surface_steps += 1,
                Choice::Fire(_) => walk.nonsurface_steps += 1,
                Choice::Skip => {}
            }
        }
        current = engine.lift_step(&current, &s, Mode::General)?;
        walk.steps.push(s);
    }
    walk.endpoint = current;
    Ok(walk)
}

fn bucket_key(m: &MultiDistribution) -> String {
    let c = m.coalesced();
    let mut parts: Vec<String> = c
        .entries()
        .iter()
        .map(|(w, p)| format!("{}*{:.6}", print_term(p.term()), w))
        .collect();
    parts.sort();
    parts.join("|")
}

struct Visited {
    buckets: HashMap<String, Vec<MultiDistribution>>,
    count: usize,
}

impl Visited {
    fn new() -> Visited {
        Visited {
            buckets: HashMap::new(),
            count: 0,
        }
    }

    /// Returns false if an equal multidistribution was already present.
    fn insert(&mut self, m: &MultiDistribution) -> bool {
        let bucket = self.buckets.entry(bucket_key(m)).or_default();
        if bucket.iter().any(|x| x.mdist_eq(m)) {
            return false;
        }
        bucket.push(m.clone());
        self.count += 1;
        true
    }
}

/// Non-surface successors: per entry, skip or fire a non-surface redex;
/// the all-skip combination is excluded.
fn nonsurface_schedules(
    engine: &Engine,
    m: &MultiDistribution,
    guard: &OracleGuard,
) -> Result<Vec<Schedule>, OracleError> {
    let mut per_entry: Vec<Vec<Choice>> = Vec::with_capacity(m.len());
    for (_, p) in m.entries() {
        let mut choices = vec![Choice::Skip];
        choices.extend(
            engine
                .find_redexes(p)
                .into_iter()
                .filter(|r| !r.is_surface)
                .map(Choice::Fire),
        );
        per_entry.push(choices);
    }
    let combos: usize = per_entry.iter().map(Vec::len).product();
    if combos > guard.max_schedules {
        return Err(OracleError::Guard(format!(
            "{combos} non-surface schedules exceed the cap"
        )));
    }
    let mut out = Vec::new();
    let mut cursor = vec![0usize; per_entry.len()];
    'outer: loop {
        let schedule = Schedule(
            cursor
                .iter()
                .zip(&per_entry)
                .map(|(&k, cs)| cs[k].clone())
                .collect(),
        );
        if !schedule.all_skip() {
            out.push(schedule);
        }
        for k in (0..cursor.len()).rev() {
            cursor[k] += 1;
            if cursor[k] < per_entry[k].len() {
                continue 'outer;
            }
            cursor[k] = 0;
        }
        break;
    }
    Ok(out)
}

/// Surface standardization on one instance: after a random ⇒-walk from
/// `p` to `n`, a bounded BFS must find surface-only steps followed by
/// non-surface-only steps from `p` reaching `n`.
pub fn check_factorization(
    engine: &Engine,
    p: &Program,
    k: usize,
    seed: u64,
    guard: &OracleGuard,
) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let walk = match random_general_walk(engine, p, k, &mut rng, guard) {
        Ok(w) => w,
        Err(e) => return CheckOutcome::Inconclusive(e.to_string()),
    };
    if walk.steps.is_empty() {
        return CheckOutcome::Skipped("the program is a ⇒-normal form".to_string());
    }
    let bound = 2 * walk.steps.len() + 4;
    let target = &walk.endpoint;
    let m0 = MultiDistribution::singleton(p.clone());

    let mut pruned = false;
    let node_cap = 20_000usize;

    // Phase 1: everything surface-reachable within the bound, by level.
    let mut surface_nodes: Vec<(MultiDistribution, usize)> = vec![(m0.clone(), 0)];
    let mut visited = Visited::new();
    visited.insert(&m0);
    let mut frontier = vec![m0];
    for d in 1..=bound {
        let mut next = Vec::new();
        for m in &frontier {
            let schedules = match enumerate_schedules(engine, m, Mode::Surface, guard) {
                Ok(s) => s,
                Err(_) => {
                    pruned = true;
                    continue;
                }
            };
            for s in schedules {
                let stepped = match engine.lift_step(m, &s, Mode::Surface) {
                    Ok(x) => x,
                    Err(e) => return CheckOutcome::Fail(format!("surface step failed: {e}")),
                };
                if visited.insert(&stepped) {
                    surface_nodes.push((stepped.clone(), d));
                    next.push(stepped);
                }
                if visited.count > node_cap {
                    pruned = true;
                    break;
                }
            }
            if visited.count > node_cap {
                break;
            }
        }
        if next.is_empty() || visited.count > node_cap {
            break;
        }
        frontier = next;
    }

    // Phase 2: from every surface-reachable point, close under
    // non-surface steps within the remaining budget.
    for (start, used) in &surface_nodes {
        if start.mdist_eq(target) {
            return CheckOutcome::Pass;
        }
        let budget = bound - used;
        let mut visited2 = Visited::new();
        visited2.insert(start);
        let mut frontier2 = vec![start.clone()];
        for _ in 0..budget {
            let mut next = Vec::new();
            for m in &frontier2 {
                let schedules = match nonsurface_schedules(engine, m, guard) {
                    Ok(s) => s,
                    Err(_) => {
                        pruned = true;
                        continue;
                    }
                };
                for s in schedules {
                    let stepped = match engine.lift_step(m, &s, Mode::General) {
                        Ok(x) => x,
                        Err(e) => {
                            return CheckOutcome::Fail(format!("non-surface step failed: {e}"))
                        }
                    };
                    if stepped.mdist_eq(target) {
                        return CheckOutcome::Pass;
                    }
                    if visited2.insert(&stepped) {
                        next.push(stepped);
                    }
                    if visited2.count > node_cap {
                        pruned = true;
                        break;
                    }
                }
                if visited2.count > node_cap {
                    break;
                }
            }
            if next.is_empty() || visited2.count > node_cap {
                break;
            }
            frontier2 = next;
        }
    }

    let walk_str: Vec<String> = walk.steps.iter().map(schedule_string).collect();
    if pruned {
        CheckOutcome::Inconclusive(format!(
            "no factorization found within bound {bound} (search pruned); walk: {}",
            walk_str.join(" ; ")
        ))
    } else {
        CheckOutcome::Fail(format!(
            "no surface-then-nonsurface factorization within bound {bound}; walk: {}",
            walk_str.join(" ; ")
        ))
    }
}

/// Asymptotic completeness at desk scale: the strict-surface run of depth
/// `big_d` must reach at least the best snf mass any general sequence of
/// depth `d` can reach.
pub fn check_asymptotic_completeness(
    engine: &Engine,
    p: &Program,
    d: usize,
    big_d: usize,
    guard: &OracleGuard,
) -> CheckOutcome {
    assert!(big_d >= d);
    let tree = match oracle_tree(
        engine,
        MultiDistribution::singleton(p.clone()),
        d,
        Mode::General,
        guard,
    ) {
        Ok(t) => t,
        Err(e) => return CheckOutcome::Inconclusive(e.to_string()),
    };
    let max_general = tree
        .levels
        .iter()
        .flatten()
        .map(|m| engine.snf_mass(m))
        .fold(0.0f64, f64::max);

    let cfg = RunConfig {
        mode: Mode::StrictSurface,
        scheduler: SchedulerKind::Leftmost,
        seed: 0,
        max_steps: big_d,
        delta: EPS,
        window: big_d + 1,
    };
    let trace = match engine.run(MultiDistribution::singleton(p.clone()), &cfg) {
        Ok(t) => t,
        Err(e) => return CheckOutcome::Fail(format!("strict run failed: {e}")),
    };
    let strict_pr = trace.final_pr();
    if strict_pr >= max_general - EPS {
        CheckOutcome::Pass
    } else {
        CheckOutcome::Fail(format!(
            "strict Pr {strict_pr} at depth {big_d} below general max {max_general} at depth {d}"
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_term, GateTable};
    use rand::SeedableRng;

    fn engine() -> Engine {
        Engine::default()
    }

    fn closed(s: &str) -> Program {
        Program::closed(parse_term(s, &GateTable::default()).unwrap()).unwrap()
    }

    const DELTA: &str = "\\!x. meas(U[H] new, \\y. y, x !x)";

    #[test]
    fn diamond_on_independent_allocations() {
        let out = check_pointed_diamond(
            &engine(),
            &closed("<new, U[H] new>"),
            &OracleGuard::default(),
        );
        assert_eq!(out, CheckOutcome::Pass);
    }

    #[test]
    fn diamond_on_the_coin() {
        let p = closed(&format!("({DELTA}) !({DELTA})"));
        let out = check_pointed_diamond(&engine(), &p, &OracleGuard::default());
        assert_eq!(out, CheckOutcome::Pass);
    }

    #[test]
    fn diamond_on_the_entangled_intermediate() {
        // One allocation in, both U[H] r0 and the second `new` can fire.
        let state = crate::quantum::QuantumState::zeros(1);
        let term = parse_term(
            "U[CNOT] <U[H] r0, new> (\\x. \\y. meas(y, \\z. z, \\z. z) x)",
            &GateTable::default(),
        )
        .unwrap();
        let p = Program::new(state, term).unwrap();
        let out = check_pointed_diamond(&engine(), &p, &OracleGuard::generous());
        assert_eq!(out, CheckOutcome::Pass);
    }

    #[test]
    fn diamond_skips_single_redex_programs() {
        let out = check_pointed_diamond(
            &engine(),
            &closed("(\\x. x) (\\y. y)"),
            &OracleGuard::default(),
        );
        assert!(matches!(out, CheckOutcome::Skipped(_)));
    }

    #[test]
    fn random_descent_on_the_coin_round() {
        // Strict sequences resynchronize exactly at measurement rounds.
        let p = closed(&format!("({DELTA}) !({DELTA})"));
        let out = check_random_descent(&engine(), &p, 4, &OracleGuard::generous());
        assert_eq!(out, CheckOutcome::Pass);
    }

    #[test]
    fn random_descent_on_allocations_to_termination() {
        let p = closed("<new, U[H] new>");
        // Every strict sequence normalizes in exactly 3 steps; depth 5
        // leaves are the stutter-propagated unique normal form.
        let out = check_random_descent(&engine(), &p, 5, &OracleGuard::default());
        assert_eq!(out, CheckOutcome::Pass);
    }

    #[test]
    fn single_redex_chains_descend_trivially() {
        let p = closed("(\\x. x) ((\\y. y) (\\z. z))");
        let out = check_random_descent(&engine(), &p, 4, &OracleGuard::default());
        assert_eq!(out, CheckOutcome::Pass);
    }

    #[test]
    fn factorization_of_mixed_walks() {
        let e = engine();
        // A thunked β redex next to a surface one mixes step kinds.
        let p = closed("(\\!x. x !x) !((\\y. y) (\\z. z))");
        for seed in 0..10 {
            let out = check_factorization(&e, &p, 3, seed, &OracleGuard::default());
            assert!(
                matches!(out, CheckOutcome::Pass | CheckOutcome::Skipped(_)),
                "seed {seed}: {out:?}"
            );
        }
    }

    #[test]
    fn completeness_on_the_coin() {
        let p = closed(&format!("({DELTA}) !({DELTA})"));
        let out = check_asymptotic_completeness(&engine(), &p, 4, 8, &OracleGuard::generous());
        assert_eq!(out, CheckOutcome::Pass);
    }

    #[test]
    fn completeness_on_snf() {
        let out = check_asymptotic_completeness(
            &engine(),
            &closed("\\x. x"),
            2,
            4,
            &OracleGuard::default(),
        );
        assert_eq!(out, CheckOutcome::Pass);
    }

    #[test]
    fn completeness_on_the_looping_mix() {
        // [½ I new, ½ Ω]: strict reaches ½ while general stays ≤ ½.
        let e = engine();
        let m = MultiDistribution::from_entries(vec![
            (0.5, closed("(\\x. x) new")),
            (0.5, closed("(\\!x. x !x) !(\\!x. x !x)")),
        ])
        .unwrap();
        let tree = oracle_tree(&e, m.clone(), 2, Mode::General, &OracleGuard::default()).unwrap();
        let max_general = tree
            .levels
            .iter()
            .flatten()
            .map(|x| e.snf_mass(x))
            .fold(0.0f64, f64::max);
        let cfg = RunConfig {
            max_steps: 4,
            window: 5,
            ..RunConfig::default()
        };
        let trace = e.run(m, &cfg).unwrap();
        assert!(trace.final_pr() >= max_general - EPS);
        assert!((trace.final_pr() - 0.5).abs() <= EPS);
    }

    #[test]
    fn general_walks_are_reproducible() {
        let e = engine();
        let p = closed(&format!("({DELTA}) !({DELTA})"));
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let w1 = random_general_walk(&e, &p, 3, &mut r1, &OracleGuard::generous()).unwrap();
        let w2 = random_general_walk(&e, &p, 3, &mut r2, &OracleGuard::generous()).unwrap();
        assert_eq!(w1.steps, w2.steps);
        assert!(w1.endpoint.mdist_eq(&w2.endpoint));
    }
}
