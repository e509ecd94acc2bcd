//! One-step reduction and its liftings to multidistributions.
//!
//! Root rules: the two β flavors (b) and (!b), qubit allocation (n),
//! measurement (m), and gate application (u1)/(u2). β steps close under
//! arbitrary contexts; quantum steps close under surface contexts only, so
//! a redex under a `!` or inside a measurement branch never fires a quantum
//! rule. Measurement deletes the read qubit on the fly: register indices
//! above the measured one decrement, and every result is re-canonicalized.
//!
//! Three liftings drive multidistribution reduction: `General` (any redex,
//! per-entry skips allowed), `Surface` (surface redexes only, skips
//! allowed) and `StrictSurface` (every entry that can do a surface step
//! must do one; exactly the surface-normal entries skip).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::program::{MultiDistribution, Program, ProgramError};
use crate::quantum::{QuantumError, DEFAULT_MAX_QUBITS};
use crate::syntax::{open, replace_at, subterm_at, ChildStep, GateTable, Position, Term};

/// Which root rule a redex occurrence fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    BetaLin,
    BetaBang,
    QNew,
    QUnary,
    QBinary,
    QMeas,
}

impl RuleKind {
    pub fn is_quantum(self) -> bool {
        !matches!(self, RuleKind::BetaLin | RuleKind::BetaBang)
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::BetaLin => "beta_lin",
            RuleKind::BetaBang => "beta_bang",
            RuleKind::QNew => "q_new",
            RuleKind::QUnary => "q_unary",
            RuleKind::QBinary => "q_binary",
            RuleKind::QMeas => "q_meas",
        }
    }

    pub fn from_name(name: &str) -> Option<RuleKind> {
        Some(match name {
            "beta_lin" => RuleKind::BetaLin,
            "beta_bang" => RuleKind::BetaBang,
            "q_new" => RuleKind::QNew,
            "q_unary" => RuleKind::QUnary,
            "q_binary" => RuleKind::QBinary,
            "q_meas" => RuleKind::QMeas,
            _ => return None,
        })
    }
}

/// A fireable redex: position, rule, and surface classification. Quantum
/// redexes are only ever reported at surface positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RedexOccurrence {
    pub pos: Position,
    pub kind: RuleKind,
    pub is_surface: bool,
}

/// Lifting flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    General,
    Surface,
    StrictSurface,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::General => "general",
            Mode::Surface => "surface",
            Mode::StrictSurface => "strict",
        }
    }

    /// May this mode fire the given occurrence?
    pub fn allows(self, r: &RedexOccurrence) -> bool {
        match self {
            Mode::General => true,
            Mode::Surface | Mode::StrictSurface => r.is_surface,
        }
    }
}

/// Per-entry action of one lifted step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Choice {
    Skip,
    Fire(RedexOccurrence),
}

/// One action per entry of a multidistribution, in entry order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule(pub Vec<Choice>);

impl Schedule {
    pub fn all_skip(&self) -> bool {
        self.0.iter().all(|c| matches!(c, Choice::Skip))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error("no {kind:?} redex at {pos}")]
    InvalidOccurrence { pos: Position, kind: RuleKind },
    #[error("quantum rule at non-surface position {pos}")]
    NonSurfaceQuantum { pos: Position },
    #[error("schedule has {got} choices for {expected} entries")]
    ScheduleLength { expected: usize, got: usize },
    #[error("schedule violates {mode:?} at entry {entry}: {reason}")]
    ScheduleViolation {
        mode: Mode,
        entry: usize,
        reason: String,
    },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("result not a program: {0}")]
    Result(#[from] ProgramError),
}

impl StepError {
    /// Resource guards get a dedicated exit code in the CLI.
    pub fn is_capacity(&self) -> bool {
        matches!(
            self,
            StepError::Quantum(QuantumError::CapacityExceeded { .. })
        )
    }
}

/// Redex choice policy for `run`.
#[derive(Debug, Clone)]
pub enum SchedulerKind {
    /// First applicable redex in preorder.
    Leftmost,
    /// Last applicable redex in preorder.
    Rightmost,
    /// Uniform choice among applicable redexes, from the run seed.
    Random,
    /// Explicit schedules, consumed one per step.
    Script(Vec<Schedule>),
}

/// Strategy and stop rule for a reduction session.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub max_steps: usize,
    /// Stop once the snf mass gained over `window` steps drops below this.
    pub delta: f64,
    pub window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::StrictSurface,
            scheduler: SchedulerKind::Leftmost,
            seed: 0,
            max_steps: 200,
            delta: 1e-9,
            window: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    /// snf mass has stopped growing within the configured window.
    Stable,
    /// No entry has an applicable redex.
    NormalForm,
    ScriptExhausted,
}

#[derive(Debug, Clone)]
pub struct TraceStep {
    pub schedule: Schedule,
    pub result: MultiDistribution,
    pub pr: f64,
}

/// A reduction sequence m0, m1, … with per-step schedules and snf masses.
#[derive(Debug, Clone)]
pub struct Trace {
    pub initial: MultiDistribution,
    pub initial_pr: f64,
    pub steps: Vec<TraceStep>,
    pub stop: StopReason,
}

impl Trace {
    pub fn final_mdist(&self) -> &MultiDistribution {
        self.steps
            .last()
            .map(|s| &s.result)
            .unwrap_or(&self.initial)
    }

    pub fn final_pr(&self) -> f64 {
        self.steps.last().map(|s| s.pr).unwrap_or(self.initial_pr)
    }

    /// (step index, snf mass), starting at step 0.
    pub fn pr_curve(&self) -> Vec<(usize, f64)> {
        std::iter::once((0, self.initial_pr))
            .chain(self.steps.iter().enumerate().map(|(i, s)| (i + 1, s.pr)))
            .collect()
    }
}

/// The rewrite engine: gate table plus the memory-capacity guard.
#[derive(Debug, Clone)]
pub struct Engine {
    gates: GateTable,
    max_qubits: u32,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(GateTable::default(), DEFAULT_MAX_QUBITS)
    }
}

impl Engine {
    pub fn new(gates: GateTable, max_qubits: u32) -> Engine {
        Engine { gates, max_qubits }
    }

    pub fn gates(&self) -> &GateTable {
        &self.gates
    }

    /// The rule a term matches at its root, if any. Shapes that fit no
    /// rule (e.g. `(λ!x.M) N` with `N` not a thunk, or a unary gate
    /// applied to a pair) are stuck, not errors.
    fn classify(&self, t: &Term) -> Option<RuleKind> {
        match t {
            Term::New => Some(RuleKind::QNew),
            Term::Meas(s, _, _) if matches!(&**s, Term::Reg(_)) => Some(RuleKind::QMeas),
            Term::App(f, a) => match &**f {
                Term::LinLam(_) => Some(RuleKind::BetaLin),
                Term::BangLam(_) if matches!(&**a, Term::Bang(_)) => Some(RuleKind::BetaBang),
                Term::Gate(g) => {
                    let def = self.gates.get(g)?;
                    match def.arity {
                        1 if matches!(&**a, Term::Reg(_)) => Some(RuleKind::QUnary),
                        2 if pair_of_registers(a).is_some() => Some(RuleKind::QBinary),
                        _ => None,
                    }
                }
                _ => None,
            },
            _ => None,
        }
    }

    /// Redexes of a bare term in deterministic preorder. β redexes are
    /// listed at every position with their surface flag; quantum redexes
    /// only at surface positions.
    pub fn find_redexes_term(&self, t: &Term) -> Vec<RedexOccurrence> {
        fn go(
            engine: &Engine,
            t: &Term,
            pos: Position,
            surface: bool,
            out: &mut Vec<RedexOccurrence>,
        ) {
            if let Some(kind) = engine.classify(t) {
                if surface || !kind.is_quantum() {
                    out.push(RedexOccurrence {
                        pos: pos.clone(),
                        kind,
                        is_surface: surface,
                    });
                }
            }
            match t {
                Term::Var(_) | Term::Free(_) | Term::Reg(_) | Term::Gate(_) | Term::New => {}
                Term::Bang(b) => go(engine, b, pos.child(ChildStep::BangBody), false, out),
                Term::LinLam(b) | Term::BangLam(b) => {
                    go(engine, b, pos.child(ChildStep::Body), surface, out)
                }
                Term::App(f, a) => {
                    go(engine, f, pos.child(ChildStep::Fun), surface, out);
                    go(engine, a, pos.child(ChildStep::Arg), surface, out);
                }
                Term::Meas(s, b0, b1) => {
                    go(engine, s, pos.child(ChildStep::Subject), surface, out);
                    go(engine, b0, pos.child(ChildStep::Branch0), false, out);
                    go(engine, b1, pos.child(ChildStep::Branch1), false, out);
                }
            }
        }
        let mut out = Vec::new();
        go(self, t, Position::root(), true, &mut out);
        out
    }

    pub fn find_redexes(&self, p: &Program) -> Vec<RedexOccurrence> {
        self.find_redexes_term(p.term())
    }

    /// Surface normal form: no surface redex.
    pub fn is_snf(&self, p: &Program) -> bool {
        !self.find_redexes(p).iter().any(|r| r.is_surface)
    }

    /// Total weight of snf entries (Pr).
    pub fn snf_mass(&self, m: &MultiDistribution) -> f64 {
        m.entries()
            .iter()
            .filter(|(_, p)| self.is_snf(p))
            .fold(0.0, |acc, (w, _)| acc + w)
    }

    /// Fires the redex at `r.pos`, rebuilding around the context and
    /// canonicalizing every result program.
    pub fn step_at(
        &self,
        p: &Program,
        r: &RedexOccurrence,
    ) -> Result<MultiDistribution, StepError> {
        let invalid = || StepError::InvalidOccurrence {
            pos: r.pos.clone(),
            kind: r.kind,
        };
        let sub = subterm_at(p.term(), &r.pos).ok_or_else(invalid)?;
        if self.classify(sub) != Some(r.kind) {
            return Err(invalid());
        }
        let surface = r.pos.is_surface();
        if surface != r.is_surface {
            return Err(invalid());
        }
        if r.kind.is_quantum() && !surface {
            return Err(StepError::NonSurfaceQuantum { pos: r.pos.clone() });
        }

        let mut out = MultiDistribution::default();
        match (r.kind, sub) {
            (RuleKind::BetaLin, Term::App(f, a)) => {
                let Term::LinLam(body) = &**f else {
                    return Err(invalid());
                };
                let term = replace_at(p.term(), &r.pos, open(body, a)).ok_or_else(invalid)?;
                out.push(1.0, Program::new(p.state().clone(), term)?);
            }
            (RuleKind::BetaBang, Term::App(f, a)) => {
                let (Term::BangLam(body), Term::Bang(arg)) = (&**f, &**a) else {
                    return Err(invalid());
                };
                let term = replace_at(p.term(), &r.pos, open(body, arg)).ok_or_else(invalid)?;
                out.push(1.0, Program::new(p.state().clone(), term)?);
            }
            (RuleKind::QNew, Term::New) => {
                let fresh = p.state().qubit_count();
                let state = p.state().new_qubit(self.max_qubits)?;
                let term = replace_at(p.term(), &r.pos, Term::Reg(fresh)).ok_or_else(invalid)?;
                out.push(1.0, Program::new(state, term)?);
            }
            (RuleKind::QUnary, Term::App(f, a)) => {
                let (Term::Gate(g), Term::Reg(i)) = (&**f, &**a) else {
                    return Err(invalid());
                };
                let def = self.gates.get(g).ok_or_else(invalid)?;
                let state = p.state().apply_unary(def, *i)?;
                let term = replace_at(p.term(), &r.pos, Term::Reg(*i)).ok_or_else(invalid)?;
                out.push(1.0, Program::new(state, term)?);
            }
            (RuleKind::QBinary, Term::App(f, a)) => {
                let Term::Gate(g) = &**f else {
                    return Err(invalid());
                };
                let (i, j) = pair_of_registers(a).ok_or_else(invalid)?;
                let def = self.gates.get(g).ok_or_else(invalid)?;
                let state = p.state().apply_binary(def, i, j)?;
                let term = replace_at(p.term(), &r.pos, (**a).clone()).ok_or_else(invalid)?;
                out.push(1.0, Program::new(state, term)?);
            }
            (RuleKind::QMeas, Term::Meas(s, b0, b1)) => {
                let Term::Reg(i) = &**s else {
                    return Err(invalid());
                };
                for outcome in p.state().measure(*i)? {
                    let branch = if outcome.bit == 0 { b0 } else { b1 };
                    let term =
                        replace_at(p.term(), &r.pos, (**branch).clone()).ok_or_else(invalid)?;
                    // The measured qubit is gone: registers above it slide
                    // down to keep memory size equal to register count.
                    let term =
                        crate::syntax::map_registers(&term, &|k| if k > *i { k - 1 } else { k });
                    out.push(outcome.probability, Program::new(outcome.state, term)?);
                }
            }
            _ => return Err(invalid()),
        }
        Ok(out)
    }

    /// One lifted step under `schedule`. Mass is preserved.
    pub fn lift_step(
        &self,
        m: &MultiDistribution,
        schedule: &Schedule,
        mode: Mode,
    ) -> Result<MultiDistribution, StepError> {
        if schedule.0.len() != m.len() {
            return Err(StepError::ScheduleLength {
                expected: m.len(),
                got: schedule.0.len(),
            });
        }
        let mut out = MultiDistribution::default();
        for (entry, ((w, p), choice)) in m.entries().iter().zip(&schedule.0).enumerate() {
            match choice {
                Choice::Skip => {
                    if mode == Mode::StrictSurface && !self.is_snf(p) {
                        return Err(StepError::ScheduleViolation {
                            mode,
                            entry,
                            reason: "skip on a program with a surface redex".to_string(),
                        });
                    }
                    out.push(*w, p.clone());
                }
                Choice::Fire(r) => {
                    if !mode.allows(r) {
                        return Err(StepError::ScheduleViolation {
                            mode,
                            entry,
                            reason: format!("non-surface redex at {}", r.pos),
                        });
                    }
                    if !self.find_redexes(p).contains(r) {
                        return Err(StepError::ScheduleViolation {
                            mode,
                            entry,
                            reason: format!("no {:?} redex at {}", r.kind, r.pos),
                        });
                    }
                    let stepped = self.step_at(p, r)?;
                    for (q, result) in stepped.entries() {
                        out.push(w * q, result.clone());
                    }
                }
            }
        }
        Ok(out)
    }

    /// Applicable redexes for a mode: surface ones under `Surface` and
    /// `StrictSurface`, all of them under `General`.
    pub fn applicable_redexes(&self, p: &Program, mode: Mode) -> Vec<RedexOccurrence> {
        self.find_redexes(p)
            .into_iter()
            .filter(|r| mode.allows(r))
            .collect()
    }

    /// Builds the schedule a scheduler picks for `m`. Entries without an
    /// applicable redex skip; the schedulers never skip an entry that
    /// could fire, so the all-skip schedule only arises at a fixpoint.
    pub fn make_schedule(
        &self,
        m: &MultiDistribution,
        mode: Mode,
        scheduler: &SchedulerKind,
        rng: &mut ChaCha8Rng,
    ) -> Option<Schedule> {
        let choices = m
            .entries()
            .iter()
            .map(|(_, p)| {
                let redexes = self.applicable_redexes(p, mode);
                match scheduler {
                    SchedulerKind::Leftmost => redexes.first().cloned(),
                    SchedulerKind::Rightmost => redexes.last().cloned(),
                    SchedulerKind::Random => redexes.choose(rng).cloned(),
                    SchedulerKind::Script(_) => None,
                }
                .map(Choice::Fire)
                .unwrap_or(Choice::Skip)
            })
            .collect();
        Some(Schedule(choices))
    }

    /// Runs a reduction session: schedules are resolved per step, the snf
    /// mass is tracked, and the session stops at `max_steps`, at a
    /// fixpoint, or when the mass plateaus within `delta` over `window`
    /// steps.
    pub fn run(&self, m0: MultiDistribution, cfg: &RunConfig) -> Result<Trace, StepError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let initial_pr = self.snf_mass(&m0);
        let mut trace = Trace {
            initial: m0,
            initial_pr,
            steps: Vec::new(),
            stop: StopReason::MaxSteps,
        };
        let mut current = trace.initial.clone();
        let mut history = vec![initial_pr];
        for k in 0..cfg.max_steps {
            let schedule = match &cfg.scheduler {
                SchedulerKind::Script(script) => match script.get(k) {
                    Some(s) => s.clone(),
                    None => {
                        trace.stop = StopReason::ScriptExhausted;
                        return Ok(trace);
                    }
                },
                other => self
                    .make_schedule(&current, cfg.mode, other, &mut rng)
                    .expect("non-script scheduler always yields a schedule"),
            };
            if schedule.all_skip() && !matches!(cfg.scheduler, SchedulerKind::Script(_)) {
                trace.stop = StopReason::NormalForm;
                return Ok(trace);
            }
            current = self.lift_step(&current, &schedule, cfg.mode)?;
            let pr = self.snf_mass(&current);
            history.push(pr);
            trace.steps.push(TraceStep {
                schedule,
                result: current.clone(),
                pr,
            });
            let k1 = history.len() - 1;
            if k1 >= cfg.window && (history[k1] - history[k1 - cfg.window]).abs() < cfg.delta {
                trace.stop = StopReason::Stable;
                return Ok(trace);
            }
        }
        Ok(trace)
    }
}

/// Matches the expanded pair of registers `λf. f r_i r_j` — the exact
/// shape the desugarer produces for `<r_i, r_j>`.
pub fn pair_of_registers(t: &Term) -> Option<(u32, u32)> {
    let (m, n) = t.as_pair()?;
    match (m, n) {
        (Term::Reg(i), Term::Reg(j)) => Some((i, j)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse_program_file;
    use crate::quantum::QuantumState;
    use crate::syntax::parse_term;
    use crate::EPS;
    use num_complex::Complex64;

    fn engine() -> Engine {
        Engine::default()
    }

    fn term(s: &str) -> Term {
        parse_term(s, &GateTable::default()).unwrap()
    }

    fn closed(s: &str) -> Program {
        Program::closed(term(s)).unwrap()
    }

    fn prog(state: QuantumState, s: &str) -> Program {
        Program::new(state, term(s)).unwrap()
    }

    const DELTA: &str = "\\!x. meas(U[H] new, \\y. y, x !x)";

    fn coin() -> Program {
        closed(&format!("({DELTA}) !({DELTA})"))
    }

    #[test]
    fn coin_redexes_lead_with_the_root_bang_beta() {
        // Δ!Δ also exposes the `new` inside the function body: λ! bodies
        // and meas subjects are surface contexts. Leftmost order puts the
        // root β first, matching the usual reduction of the example.
        let redexes = engine().find_redexes(&coin());
        assert_eq!(redexes.len(), 2);
        assert_eq!(redexes[0].kind, RuleKind::BetaBang);
        assert!(redexes[0].is_surface);
        assert!(redexes[0].pos.is_root());
        assert_eq!(redexes[1].kind, RuleKind::QNew);
        assert!(redexes[1].is_surface);
    }

    #[test]
    fn bang_beta_requires_a_literal_thunk() {
        let p = closed("(\\!x. x !x) (\\y. y)");
        assert!(engine().find_redexes(&p).is_empty());
        assert!(engine().is_snf(&p));
    }

    #[test]
    fn rightmost_scheduler_fires_the_inner_allocation_first() {
        let e = engine();
        let m = MultiDistribution::singleton(coin());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let schedule = e
            .make_schedule(&m, Mode::StrictSurface, &SchedulerKind::Rightmost, &mut rng)
            .unwrap();
        let Choice::Fire(r) = &schedule.0[0] else {
            panic!("expected a fire");
        };
        assert_eq!(r.kind, RuleKind::QNew);
        let next = e.lift_step(&m, &schedule, Mode::StrictSurface).unwrap();
        let expected = MultiDistribution::singleton(prog(
            QuantumState::zeros(1),
            &format!("(\\!x. meas(U[H] r0, \\y. y, x !x)) !({DELTA})"),
        ));
        assert!(next.mdist_eq(&expected), "{next}");
    }

    #[test]
    fn quantum_redexes_are_surface_only() {
        let e = engine();
        // Inside a bang: the gate application is invisible to the engine.
        let redexes = e.find_redexes_term(&term("!(U[H] r0)"));
        assert!(redexes.is_empty());
        // A β redex inside a bang is reported, flagged non-surface.
        let redexes = e.find_redexes_term(&term("!((\\x. x) y)"));
        assert_eq!(redexes.len(), 1);
        assert_eq!(redexes[0].kind, RuleKind::BetaLin);
        assert!(!redexes[0].is_surface);
    }

    #[test]
    fn new_allocates_the_next_register() {
        let e = engine();
        let p = closed("new");
        let r = &e.find_redexes(&p)[0];
        let m = e.step_at(&p, r).unwrap();
        let expected = MultiDistribution::singleton(prog(QuantumState::zeros(1), "r0"));
        assert!(m.mdist_eq(&expected));
    }

    #[test]
    fn hadamard_step_builds_superposition() {
        let e = engine();
        let p = prog(QuantumState::zeros(1), "U[H] r0");
        let r = &e.find_redexes(&p)[0];
        assert_eq!(r.kind, RuleKind::QUnary);
        let m = e.step_at(&p, r).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus =
            QuantumState::from_amplitudes(vec![Complex64::new(s, 0.0), Complex64::new(s, 0.0)])
                .unwrap();
        assert!(m.mdist_eq(&MultiDistribution::singleton(prog(plus, "r0"))));
    }

    #[test]
    fn measurement_splits_the_coin() {
        let e = engine();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus =
            QuantumState::from_amplitudes(vec![Complex64::new(s, 0.0), Complex64::new(s, 0.0)])
                .unwrap();
        let p = Program::new(
            plus,
            term(&format!("meas(r0, \\y. y, ({DELTA}) !({DELTA}))")),
        )
        .unwrap();
        let r = &e.find_redexes(&p)[0];
        assert_eq!(r.kind, RuleKind::QMeas);
        let m = e.step_at(&p, r).unwrap();
        let expected =
            MultiDistribution::from_entries(vec![(0.5, closed("\\y. y")), (0.5, coin())]).unwrap();
        assert!(m.mdist_eq(&expected));
    }

    #[test]
    fn step_under_context_fires_new_inside_meas_subject() {
        let e = engine();
        let p = closed(&format!("meas(U[H] new, \\y. y, ({DELTA}) !({DELTA}))"));
        let surface: Vec<_> = e
            .find_redexes(&p)
            .into_iter()
            .filter(|r| r.is_surface)
            .collect();
        assert_eq!(surface.len(), 1, "only the allocation is fireable");
        assert_eq!(surface[0].kind, RuleKind::QNew);
        let m = e.step_at(&p, &surface[0]).unwrap();
        let expected = MultiDistribution::singleton(prog(
            QuantumState::zeros(1),
            &format!("meas(U[H] r0, \\y. y, ({DELTA}) !({DELTA}))"),
        ));
        assert!(m.mdist_eq(&expected));
    }

    #[test]
    fn inner_beta_under_outer_redex() {
        let e = engine();
        let p = closed("(\\x. x) ((\\y. y) (\\z. z))");
        let redexes = e.find_redexes(&p);
        assert_eq!(redexes.len(), 2);
        let inner = redexes.iter().find(|r| !r.pos.is_root()).unwrap();
        let m = e.step_at(&p, inner).unwrap();
        let expected = MultiDistribution::singleton(closed("(\\x. x) (\\z. z)"));
        assert!(m.mdist_eq(&expected));
    }

    #[test]
    fn binary_gate_fires_on_expanded_register_pair() {
        let e = engine();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus_zero = QuantumState::from_amplitudes(vec![
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
        ])
        .unwrap();
        let p = Program::new(plus_zero, term("U[CNOT] <r0, r1>")).unwrap();
        let redexes = e.find_redexes(&p);
        assert_eq!(redexes.len(), 1);
        assert_eq!(redexes[0].kind, RuleKind::QBinary);
        let m = e.step_at(&p, &redexes[0]).unwrap();
        let bell = QuantumState::from_amplitudes(vec![
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(s, 0.0),
        ])
        .unwrap();
        let expected = MultiDistribution::singleton(Program::new(bell, term("<r0, r1>")).unwrap());
        assert!(m.mdist_eq(&expected));
    }

    #[test]
    fn unary_gate_on_pair_is_stuck() {
        let e = engine();
        let p = prog(QuantumState::zeros(2), "U[H] <r0, r1>");
        assert!(e.find_redexes(&p).is_empty());
        assert!(e.is_snf(&p));
    }

    #[test]
    fn snf_examples() {
        let e = engine();
        assert!(e.is_snf(&closed("\\y. y")));
        assert!(e.is_snf(&closed(&format!("!(({DELTA}) !({DELTA}))"))));
        assert!(!e.is_snf(&coin()));
    }

    #[test]
    fn measurement_decrements_higher_registers() {
        // meas(r0, …, …) applied in a context holding r1: after reading
        // qubit 0, the old r1 becomes r0.
        let e = engine();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let state = QuantumState::from_amplitudes(vec![
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(s, 0.0),
        ])
        .unwrap();
        let p = Program::new(state, term("meas(r1, \\y. y, \\y. y) r0")).unwrap();
        let r = e
            .find_redexes(&p)
            .into_iter()
            .find(|r| r.kind == RuleKind::QMeas)
            .unwrap();
        let m = e.step_at(&p, &r).unwrap();
        let zero = prog(QuantumState::zeros(1), "(\\y. y) r0");
        let one = Program::new(
            QuantumState::from_amplitudes(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
                .unwrap(),
            term("(\\y. y) r0"),
        )
        .unwrap();
        let expected = MultiDistribution::from_entries(vec![(0.5, zero), (0.5, one)]).unwrap();
        assert!(m.mdist_eq(&expected));
    }

    #[test]
    fn strict_lift_skips_exactly_snf_entries() {
        let e = engine();
        let m =
            MultiDistribution::from_entries(vec![(0.5, closed("\\y. y")), (0.5, coin())]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let schedule = e
            .make_schedule(&m, Mode::StrictSurface, &SchedulerKind::Leftmost, &mut rng)
            .unwrap();
        assert!(matches!(schedule.0[0], Choice::Skip));
        assert!(matches!(schedule.0[1], Choice::Fire(_)));
        let next = e.lift_step(&m, &schedule, Mode::StrictSurface).unwrap();
        let expected = MultiDistribution::from_entries(vec![
            (0.5, closed("\\y. y")),
            (
                0.5,
                closed(&format!("meas(U[H] new, \\y. y, ({DELTA}) !({DELTA}))")),
            ),
        ])
        .unwrap();
        assert!(next.mdist_eq(&expected));
        assert!((next.total_mass() - 1.0).abs() <= EPS);
    }

    #[test]
    fn strict_lift_rejects_lazy_skip() {
        let e = engine();
        let m = MultiDistribution::from_entries(vec![(0.5, closed("(\\x. x) new")), (0.5, coin())])
            .unwrap();
        // Firing only the second entry violates the strict lifting.
        let fire = e.find_redexes(&coin())[0].clone();
        let schedule = Schedule(vec![Choice::Skip, Choice::Fire(fire)]);
        let err = e.lift_step(&m, &schedule, Mode::StrictSurface);
        assert!(matches!(err, Err(StepError::ScheduleViolation { .. })));
        // The same schedule is a legal Surface step.
        let ok = e.lift_step(&m, &schedule, Mode::Surface);
        assert!(ok.is_ok());
    }

    #[test]
    fn surface_mode_rejects_non_surface_redexes() {
        let e = engine();
        // snf, but a β redex hides inside the thunk
        let p = closed("!((\\x. x) (\\y. y))");
        let inner = e
            .find_redexes(&p)
            .into_iter()
            .find(|r| !r.is_surface)
            .unwrap();
        let m = MultiDistribution::singleton(p);
        let schedule = Schedule(vec![Choice::Fire(inner)]);
        assert!(matches!(
            e.lift_step(&m, &schedule, Mode::Surface),
            Err(StepError::ScheduleViolation { .. })
        ));
        assert!(e.lift_step(&m, &schedule, Mode::General).is_ok());
    }

    #[test]
    fn snf_singleton_runs_to_constant_trace() {
        let e = engine();
        let m = MultiDistribution::singleton(closed("\\y. y"));
        let trace = e.run(m.clone(), &RunConfig::default()).unwrap();
        assert_eq!(trace.stop, StopReason::NormalForm);
        assert!(trace.steps.is_empty());
        assert!(trace.final_mdist().mdist_eq(&m));
        assert!((trace.final_pr() - 1.0).abs() <= EPS);
    }

    #[test]
    fn coin_reaches_half_snf_in_four_strict_steps() {
        let e = engine();
        let cfg = RunConfig {
            max_steps: 4,
            window: 100,
            ..RunConfig::default()
        };
        let trace = e.run(MultiDistribution::singleton(coin()), &cfg).unwrap();
        assert_eq!(trace.steps.len(), 4);
        let expected =
            MultiDistribution::from_entries(vec![(0.5, closed("\\y. y")), (0.5, coin())]).unwrap();
        assert!(trace.final_mdist().mdist_eq(&expected));
        assert!((trace.final_pr() - 0.5).abs() <= EPS);
    }

    #[test]
    fn entangled_pair_reaches_the_paper_outcome() {
        let e = engine();
        let src = "let <x, y> = U[CNOT] <U[H] new, new> in meas(y, \\z. z, \\z. z) x";
        let p = parse_program_file(src, e.gates()).unwrap();
        let cfg = RunConfig {
            max_steps: 8,
            window: 100,
            ..RunConfig::default()
        };
        let trace = e
            .run(MultiDistribution::singleton(p.clone()), &cfg)
            .unwrap();
        let zero = prog(QuantumState::zeros(1), "(\\z. z) r0");
        let one = Program::new(
            QuantumState::from_amplitudes(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
                .unwrap(),
            term("(\\z. z) r0"),
        )
        .unwrap();
        let expected = MultiDistribution::from_entries(vec![(0.5, zero), (0.5, one)]).unwrap();
        assert!(
            trace.final_mdist().mdist_eq(&expected),
            "got {}",
            trace.final_mdist()
        );

        // One more strict step discharges the identity applications.
        let cfg = RunConfig {
            max_steps: 9,
            window: 100,
            ..RunConfig::default()
        };
        let trace = e.run(MultiDistribution::singleton(p), &cfg).unwrap();
        let zero = prog(QuantumState::zeros(1), "r0");
        let one = Program::new(
            QuantumState::from_amplitudes(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
                .unwrap(),
            term("r0"),
        )
        .unwrap();
        let expected = MultiDistribution::from_entries(vec![(0.5, zero), (0.5, one)]).unwrap();
        assert!(trace.final_mdist().mdist_eq(&expected));
    }

    #[test]
    fn looping_mix_needs_the_strict_lifting_to_progress() {
        let e = engine();
        let omega = "(\\!x. x !x) !(\\!x. x !x)";
        let m = MultiDistribution::from_entries(vec![
            (0.5, closed("(\\x. x) new")),
            (0.5, closed(omega)),
        ])
        .unwrap();
        // A Surface schedule may spin on the Ω entry alone forever.
        let omega_redex = e.find_redexes(&closed(omega))[0].clone();
        let lazy = Schedule(vec![Choice::Skip, Choice::Fire(omega_redex)]);
        let spun = e.lift_step(&m, &lazy, Mode::Surface).unwrap();
        assert!(spun.mdist_eq(&m));
        // The strict lifting must also fire the I new entry.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let schedule = e
            .make_schedule(&m, Mode::StrictSurface, &SchedulerKind::Leftmost, &mut rng)
            .unwrap();
        let next = e.lift_step(&m, &schedule, Mode::StrictSurface).unwrap();
        assert!(!next.mdist_eq(&m));
        // Two more strict steps land the first entry in snf: Pr = 1/2.
        let cfg = RunConfig {
            max_steps: 3,
            window: 100,
            ..RunConfig::default()
        };
        let trace = e.run(m, &cfg).unwrap();
        assert!((trace.final_pr() - 0.5).abs() <= EPS);
    }

    #[test]
    fn capacity_guard_trips() {
        let e = Engine::new(GateTable::default(), 1);
        let p = prog(QuantumState::zeros(1), "<r0, new>");
        let r = e
            .find_redexes(&p)
            .into_iter()
            .find(|r| r.kind == RuleKind::QNew)
            .unwrap();
        let err = e.step_at(&p, &r).unwrap_err();
        assert!(err.is_capacity());
    }

    #[test]
    fn mass_is_preserved_by_lift() {
        let e = engine();
        let m =
            MultiDistribution::from_entries(vec![(0.25, coin()), (0.5, closed("new"))]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let schedule = e
            .make_schedule(&m, Mode::StrictSurface, &SchedulerKind::Leftmost, &mut rng)
            .unwrap();
        let next = e.lift_step(&m, &schedule, Mode::StrictSurface).unwrap();
        assert!((next.total_mass() - m.total_mass()).abs() <= EPS);
    }

    #[test]
    fn trace_replays_deterministically_with_seed() {
        let e = engine();
        let cfg = RunConfig {
            mode: Mode::StrictSurface,
            scheduler: SchedulerKind::Random,
            seed: 42,
            max_steps: 12,
            window: 100,
            delta: 1e-9,
        };
        let t1 = e.run(MultiDistribution::singleton(coin()), &cfg).unwrap();
        let t2 = e.run(MultiDistribution::singleton(coin()), &cfg).unwrap();
        assert_eq!(t1.steps.len(), t2.steps.len());
        for (a, b) in t1.steps.iter().zip(&t2.steps) {
            assert_eq!(a.schedule, b.schedule);
            assert!(a.result.mdist_eq(&b.result));
        }
    }
}
