//! Brute-force reachability oracle: enumerates every schedule choice at
//! every step, independent of the schedulers in `rewrite`.

use crate::program::MultiDistribution;
use crate::rewrite::{Choice, Engine, Mode, Schedule, StepError};

/// Explosion guards for exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct OracleGuard {
    pub max_depth: usize,
    pub max_term_size: usize,
    /// Distinct multidistributions kept per depth.
    pub max_frontier: usize,
    /// Schedules expanded per node per step.
    pub max_schedules: usize,
    pub max_entries: usize,
}

impl Default for OracleGuard {
    fn default() -> Self {
        OracleGuard {
            max_depth: 8,
            max_term_size: 14,
            max_frontier: 4096,
            max_schedules: 4096,
            max_entries: 24,
        }
    }
}

impl OracleGuard {
    /// Wider limits for hand-picked examples (the defaults protect the
    /// generated-instance suites; known-small reduction graphs like the
    /// recursive coin carry bigger terms).
    pub fn generous() -> OracleGuard {
        OracleGuard {
            max_depth: 24,
            max_term_size: 64,
            max_frontier: 8192,
            max_schedules: 8192,
            max_entries: 64,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("explosion guard tripped: {0}")]
    Guard(String),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// All schedules of one lifted step from `m` under `mode`:
/// - `General`: skip or any redex, per entry;
/// - `Surface`: skip or any surface redex, per entry;
/// - `StrictSurface`: any surface redex per non-snf entry, skip on snf.
///
/// The all-skip stutter is excluded, so a fully normal multidistribution
/// has no successors and enumeration trees stay finite.
pub fn enumerate_schedules(
    engine: &Engine,
    m: &MultiDistribution,
    mode: Mode,
    guard: &OracleGuard,
) -> Result<Vec<Schedule>, OracleError> {
    let mut per_entry: Vec<Vec<Choice>> = Vec::with_capacity(m.len());
    for (_, p) in m.entries() {
        let applicable = engine.applicable_redexes(p, mode);
        let mut choices = Vec::with_capacity(applicable.len() + 1);
        match mode {
            Mode::StrictSurface => {
                if applicable.is_empty() {
                    choices.push(Choice::Skip);
                } else {
                    choices.extend(applicable.into_iter().map(Choice::Fire));
                }
            }
            Mode::General | Mode::Surface => {
                choices.push(Choice::Skip);
                choices.extend(applicable.into_iter().map(Choice::Fire));
            }
        }
        per_entry.push(choices);
    }

    let combos: usize = per_entry.iter().map(Vec::len).product();
    if combos > guard.max_schedules {
        return Err(OracleError::Guard(format!(
            "{combos} schedules exceed the cap of {}",
            guard.max_schedules
        )));
    }

    let mut out = Vec::with_capacity(combos);
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

/// Frontier of distinct multidistributions per depth. Terminal nodes
/// (no successor) propagate unchanged so depth-d frontiers describe all
/// length-d sequences with trailing stutters.
#[derive(Debug)]
pub struct ReachTree {
    pub levels: Vec<Vec<MultiDistribution>>,
}

impl ReachTree {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }
}

fn push_dedup(level: &mut Vec<MultiDistribution>, m: MultiDistribution) {
    if !level.iter().any(|x| x.mdist_eq(&m)) {
        level.push(m);
    }
}

/// Exhaustively enumerates every schedule at every step to `depth`.
pub fn oracle_tree(
    engine: &Engine,
    m0: MultiDistribution,
    depth: usize,
    mode: Mode,
    guard: &OracleGuard,
) -> Result<ReachTree, OracleError> {
    if depth > guard.max_depth {
        return Err(OracleError::Guard(format!(
            "depth {depth} exceeds the cap of {}",
            guard.max_depth
        )));
    }
    for (_, p) in m0.entries() {
        let size = p.term().size();
        if size > guard.max_term_size {
            return Err(OracleError::Guard(format!(
                "term size {size} exceeds the cap of {}",
                guard.max_term_size
            )));
        }
    }

    let mut levels = vec![vec![m0]];
    for _ in 0..depth {
        let mut next: Vec<MultiDistribution> = Vec::new();
        for m in levels.last().unwrap() {
            if m.len() > guard.max_entries {
                return Err(OracleError::Guard(format!(
                    "{} entries exceed the cap of {}",
                    m.len(),
                    guard.max_entries
                )));
            }
            let schedules = enumerate_schedules(engine, m, mode, guard)?;
            if schedules.is_empty() {
                push_dedup(&mut next, m.clone());
                continue;
            }
            for s in schedules {
                push_dedup(&mut next, engine.lift_step(m, &s, mode)?);
            }
            if next.len() > guard.max_frontier {
                return Err(OracleError::Guard(format!(
                    "frontier {} exceeds the cap of {}",
                    next.len(),
                    guard.max_frontier
                )));
            }
        }
        levels.push(next);
    }
    Ok(ReachTree { levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::Program;
    use crate::syntax::{parse_term, GateTable};
    use crate::EPS;

    fn engine() -> Engine {
        Engine::default()
    }

    fn closed(s: &str) -> Program {
        Program::closed(parse_term(s, &GateTable::default()).unwrap()).unwrap()
    }

    #[test]
    fn snf_program_is_a_fixed_point() {
        let e = engine();
        let m = MultiDistribution::singleton(closed("\\x. x"));
        let tree = oracle_tree(
            &e,
            m.clone(),
            3,
            Mode::StrictSurface,
            &OracleGuard::default(),
        )
        .unwrap();
        for level in &tree.levels {
            assert_eq!(level.len(), 1);
            assert!(level[0].mdist_eq(&m));
        }
    }

    #[test]
    fn both_interleavings_of_independent_allocations_join() {
        // <new, U[H] new> has two surface redexes; all surface orderings
        // reach the same canonical two-qubit program.
        let e = engine();
        let m = MultiDistribution::singleton(closed("<new, U[H] new>"));
        let tree = oracle_tree(&e, m, 3, Mode::Surface, &OracleGuard::default()).unwrap();
        let finals: Vec<_> = tree.levels[3]
            .iter()
            .filter(|m| m.entries().iter().all(|(_, p)| e.is_snf(p)))
            .collect();
        assert!(!finals.is_empty());
        for w in finals.windows(2) {
            assert!(w[0].mdist_eq(w[1]));
        }
        let (_, p) = &finals[0].entries()[0];
        assert_eq!(p.state().qubit_count(), 2);
        // (1/√2)(|00⟩ + |01⟩): first-met register is the bare `new` qubit.
        let amp = p.state().amplitudes();
        assert!((amp[0].re - std::f64::consts::FRAC_1_SQRT_2).abs() <= EPS);
        assert!((amp[1].re - std::f64::consts::FRAC_1_SQRT_2).abs() <= EPS);
    }

    #[test]
    fn strict_coin_frontier_resyncs_at_round_boundaries() {
        let e = engine();
        let delta = "\\!x. meas(U[H] new, \\y. y, x !x)";
        let m = MultiDistribution::singleton(closed(&format!("({delta}) !({delta})")));
        let tree = oracle_tree(&e, m, 4, Mode::StrictSurface, &OracleGuard::generous()).unwrap();
        // Choices diverge mid-round and rejoin when the measurement lands.
        assert_eq!(tree.levels[0].len(), 1);
        assert!(tree.levels[1].len() > 1);
        assert_eq!(tree.levels[4].len(), 1);
        let final_pr = e.snf_mass(&tree.levels[4][0]);
        assert!((final_pr - 0.5).abs() <= EPS);
    }

    #[test]
    fn guard_trips_on_depth() {
        let e = engine();
        let m = MultiDistribution::singleton(closed("new"));
        let err = oracle_tree(&e, m, 40, Mode::Surface, &OracleGuard::default());
        assert!(matches!(err, Err(OracleError::Guard(_))));
    }
}
