//! Term syntax: AST, positions, occurrences, validity, substitution.
//!
//! Binders carry no names: bound variables are de Bruijn indices counting
//! both `λ` and `λ!` binders, so α-equivalence is plain structural equality.
//! Names are regenerated when printing.

mod gates;
mod parse;
mod print;

pub use gates::{GateDef, GateTable};
pub use parse::{parse_term, ParseError};
pub use print::print_term;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A term of the quantum λ-calculus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    /// Bound variable (de Bruijn index; counts `λ` and `λ!` binders).
    Var(u32),
    /// Free variable, by name.
    Free(String),
    /// `!M` — duplicable/discardable thunk.
    Bang(Box<Term>),
    /// `λx. M` — linear abstraction.
    LinLam(Box<Term>),
    /// `λ!x. M` — non-linear abstraction; argument must be a thunk.
    BangLam(Box<Term>),
    /// Application.
    App(Box<Term>, Box<Term>),
    /// Register `rN`: placeholder for qubit `N` of the memory.
    Reg(u32),
    /// Built-in gate constant `U[id]`.
    Gate(String),
    /// Allocates a fresh qubit in state |0⟩.
    New,
    /// `meas(P, M, N)`: measure `P` (a register at rule time), continue as
    /// `M` on outcome 0 and as `N` on outcome 1.
    Meas(Box<Term>, Box<Term>, Box<Term>),
}

impl Term {
    pub fn lin_lam(body: Term) -> Term {
        Term::LinLam(Box::new(body))
    }

    pub fn bang_lam(body: Term) -> Term {
        Term::BangLam(Box::new(body))
    }

    pub fn bang(t: Term) -> Term {
        Term::Bang(Box::new(t))
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    pub fn meas(subject: Term, branch0: Term, branch1: Term) -> Term {
        Term::Meas(Box::new(subject), Box::new(branch0), Box::new(branch1))
    }

    /// `<M, N>` desugared: `λf. f M N` with `f` a fresh linear binder.
    /// `M` and `N` move under one binder, so their indices shift by 1.
    pub fn pair(m: Term, n: Term) -> Term {
        let m = shift(&m, 0, 1);
        let n = shift(&n, 0, 1);
        Term::lin_lam(Term::app(Term::app(Term::Var(0), m), n))
    }

    /// `let <x, y> = p in body` desugared: `p (λx. λy. body)`.
    /// `body` is taken with `x` at index 1 and `y` at index 0 already.
    pub fn let_pair(p: Term, body: Term) -> Term {
        Term::app(p, Term::lin_lam(Term::lin_lam(body)))
    }

    /// If `self` is the expanded pair `λf. f M N` with `f` unused in `M`, `N`,
    /// returns `(M, N)` with indices shifted back out of the binder.
    pub fn as_pair(&self) -> Option<(Term, Term)> {
        if let Term::LinLam(body) = self {
            if let Term::App(fm, n) = &**body {
                if let Term::App(f, m) = &**fm {
                    if **f == Term::Var(0) && !uses_var(m, 0) && !uses_var(n, 0) {
                        return Some((unshift(m, 0), unshift(n, 0)));
                    }
                }
            }
        }
        None
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Free(_) | Term::Reg(_) | Term::Gate(_) | Term::New => 1,
            Term::Bang(t) | Term::LinLam(t) | Term::BangLam(t) => 1 + t.size(),
            Term::App(f, a) => 1 + f.size() + a.size(),
            Term::Meas(s, b0, b1) => 1 + s.size() + b0.size() + b1.size(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_term(self))
    }
}

/// One step from a node to a child in the AST.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChildStep {
    /// Function side of an application.
    Fun,
    /// Argument side of an application.
    Arg,
    /// Body of a `λ` or `λ!` abstraction.
    Body,
    /// Body of a `!` thunk — not a surface step.
    BangBody,
    /// Subject of a measurement.
    Subject,
    /// Outcome-0 branch of a measurement — not a surface step.
    Branch0,
    /// Outcome-1 branch of a measurement — not a surface step.
    Branch1,
}

impl ChildStep {
    pub fn is_surface(self) -> bool {
        !matches!(
            self,
            ChildStep::BangBody | ChildStep::Branch0 | ChildStep::Branch1
        )
    }
}

/// A path from the root of a term to one of its subterms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position(pub Vec<ChildStep>);

impl Position {
    pub fn root() -> Position {
        Position(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// A position is surface iff its path never enters a `!` body nor a
    /// measurement branch.
    pub fn is_surface(&self) -> bool {
        self.0.iter().all(|s| s.is_surface())
    }

    pub fn child(&self, step: ChildStep) -> Position {
        let mut path = self.0.clone();
        path.push(step);
        Position(path)
    }
}

impl std::str::FromStr for Position {
    type Err = String;

    fn from_str(s: &str) -> Result<Position, String> {
        if s.is_empty() || s == "root" {
            return Ok(Position::root());
        }
        let mut path = Vec::new();
        for part in s.split('.') {
            path.push(match part {
                "fun" => ChildStep::Fun,
                "arg" => ChildStep::Arg,
                "body" => ChildStep::Body,
                "bang" => ChildStep::BangBody,
                "subject" => ChildStep::Subject,
                "branch0" => ChildStep::Branch0,
                "branch1" => ChildStep::Branch1,
                other => return Err(format!("unknown path step '{other}'")),
            });
        }
        Ok(Position(path))
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        let parts: Vec<&str> = self
            .0
            .iter()
            .map(|s| match s {
                ChildStep::Fun => "fun",
                ChildStep::Arg => "arg",
                ChildStep::Body => "body",
                ChildStep::BangBody => "bang",
                ChildStep::Subject => "subject",
                ChildStep::Branch0 => "branch0",
                ChildStep::Branch1 => "branch1",
            })
            .collect();
        f.write_str(&parts.join("."))
    }
}

/// Returns the subterm at `pos`, or `None` if the path leaves the AST.
pub fn subterm_at<'a>(t: &'a Term, pos: &Position) -> Option<&'a Term> {
    let mut cur = t;
    for step in &pos.0 {
        cur = match (step, cur) {
            (ChildStep::Fun, Term::App(f, _)) => f,
            (ChildStep::Arg, Term::App(_, a)) => a,
            (ChildStep::Body, Term::LinLam(b)) | (ChildStep::Body, Term::BangLam(b)) => b,
            (ChildStep::BangBody, Term::Bang(b)) => b,
            (ChildStep::Subject, Term::Meas(s, _, _)) => s,
            (ChildStep::Branch0, Term::Meas(_, b, _)) => b,
            (ChildStep::Branch1, Term::Meas(_, _, b)) => b,
            _ => return None,
        };
    }
    Some(cur)
}

/// Rebuilds `t` with the subterm at `pos` replaced by `sub`.
pub fn replace_at(t: &Term, pos: &Position, sub: Term) -> Option<Term> {
    fn go(t: &Term, path: &[ChildStep], sub: Term) -> Option<Term> {
        let Some((step, rest)) = path.split_first() else {
            return Some(sub);
        };
        Some(match (step, t) {
            (ChildStep::Fun, Term::App(f, a)) => Term::app(go(f, rest, sub)?, (**a).clone()),
            (ChildStep::Arg, Term::App(f, a)) => Term::app((**f).clone(), go(a, rest, sub)?),
            (ChildStep::Body, Term::LinLam(b)) => Term::lin_lam(go(b, rest, sub)?),
            (ChildStep::Body, Term::BangLam(b)) => Term::bang_lam(go(b, rest, sub)?),
            (ChildStep::BangBody, Term::Bang(b)) => Term::bang(go(b, rest, sub)?),
            (ChildStep::Subject, Term::Meas(s, b0, b1)) => {
                Term::meas(go(s, rest, sub)?, (**b0).clone(), (**b1).clone())
            }
            (ChildStep::Branch0, Term::Meas(s, b0, b1)) => {
                Term::meas((**s).clone(), go(b0, rest, sub)?, (**b1).clone())
            }
            (ChildStep::Branch1, Term::Meas(s, b0, b1)) => {
                Term::meas((**s).clone(), (**b0).clone(), go(b1, rest, sub)?)
            }
            _ => return None,
        })
    }
    go(t, &pos.0, sub)
}

/// An occurrence of a subterm, with its surface classification.
#[derive(Debug, Clone)]
pub struct Occurrence<'a> {
    pub pos: Position,
    pub term: &'a Term,
    pub surface: bool,
}

/// All occurrences in deterministic preorder: a node before its children,
/// function before argument, subject before branches.
pub fn enumerate_occurrences(t: &Term) -> Vec<Occurrence<'_>> {
    fn go<'a>(t: &'a Term, pos: Position, surface: bool, out: &mut Vec<Occurrence<'a>>) {
        out.push(Occurrence {
            pos: pos.clone(),
            term: t,
            surface,
        });
        match t {
            Term::Var(_) | Term::Free(_) | Term::Reg(_) | Term::Gate(_) | Term::New => {}
            Term::Bang(b) => go(b, pos.child(ChildStep::BangBody), false, out),
            Term::LinLam(b) | Term::BangLam(b) => go(b, pos.child(ChildStep::Body), surface, out),
            Term::App(f, a) => {
                go(f, pos.child(ChildStep::Fun), surface, out);
                go(a, pos.child(ChildStep::Arg), surface, out);
            }
            Term::Meas(s, b0, b1) => {
                go(s, pos.child(ChildStep::Subject), surface, out);
                go(b0, pos.child(ChildStep::Branch0), false, out);
                go(b1, pos.child(ChildStep::Branch1), false, out);
            }
        }
    }
    let mut out = Vec::new();
    go(t, Position::root(), true, &mut out);
    out
}

/// Free variable names.
pub fn free_vars(t: &Term) -> BTreeSet<String> {
    free_var_occurrences(t).into_keys().collect()
}

/// Free variable names with occurrence counts.
pub fn free_var_occurrences(t: &Term) -> BTreeMap<String, usize> {
    fn go(t: &Term, out: &mut BTreeMap<String, usize>) {
        match t {
            Term::Free(name) => *out.entry(name.clone()).or_insert(0) += 1,
            Term::Var(_) | Term::Reg(_) | Term::Gate(_) | Term::New => {}
            Term::Bang(b) | Term::LinLam(b) | Term::BangLam(b) => go(b, out),
            Term::App(f, a) => {
                go(f, out);
                go(a, out);
            }
            Term::Meas(s, b0, b1) => {
                go(s, out);
                go(b0, out);
                go(b1, out);
            }
        }
    }
    let mut out = BTreeMap::new();
    go(t, &mut out);
    out
}

/// The set of register identifiers occurring in `t`.
pub fn registers(t: &Term) -> BTreeSet<u32> {
    register_occurrences(t)
        .into_iter()
        .map(|(i, _, _)| i)
        .collect()
}

/// Every register occurrence in preorder, with position and surface flag.
pub fn register_occurrences(t: &Term) -> Vec<(u32, Position, bool)> {
    enumerate_occurrences(t)
        .into_iter()
        .filter_map(|occ| match occ.term {
            Term::Reg(i) => Some((*i, occ.pos, occ.surface)),
            _ => None,
        })
        .collect()
}

/// A violation of term validity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A register identifier occurs more than once.
    DuplicateRegister {
        index: u32,
        positions: Vec<Position>,
    },
    /// A register occurs under a `!` or in a measurement branch.
    NonSurfaceRegister { index: u32, position: Position },
    /// A linear binder whose variable does not occur free exactly once.
    NonLinearBinder {
        binder: Position,
        occurrences: usize,
    },
    /// The unique occurrence of a linear variable is not surface in the body.
    NonSurfaceBinderUse {
        binder: Position,
        occurrence: Position,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateRegister { index, positions } => {
                let ps: Vec<String> = positions.iter().map(|p| p.to_string()).collect();
                write!(
                    f,
                    "register r{index} occurs more than once ({})",
                    ps.join(", ")
                )
            }
            Violation::NonSurfaceRegister { index, position } => {
                write!(
                    f,
                    "register r{index} occurs at non-surface position {position}"
                )
            }
            Violation::NonLinearBinder {
                binder,
                occurrences,
            } => write!(
                f,
                "linear binder at {binder} used {occurrences} times (must be exactly once)"
            ),
            Violation::NonSurfaceBinderUse { binder, occurrence } => write!(
                f,
                "linear variable bound at {binder} occurs at non-surface position {occurrence}"
            ),
        }
    }
}

/// Outcome of a validity check; empty `violations` means the term is valid.
#[derive(Debug, Clone, Default)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks the two validity conditions: every register occurs at most once
/// and only at surface positions; every `λ`-bound variable occurs free
/// exactly once in its body, at a surface position of that body.
pub fn validate(t: &Term) -> ValidityReport {
    let mut violations = Vec::new();

    let mut by_index: BTreeMap<u32, Vec<(Position, bool)>> = BTreeMap::new();
    for (i, pos, surface) in register_occurrences(t) {
        by_index.entry(i).or_default().push((pos, surface));
    }
    for (index, occs) in &by_index {
        if occs.len() > 1 {
            violations.push(Violation::DuplicateRegister {
                index: *index,
                positions: occs.iter().map(|(p, _)| p.clone()).collect(),
            });
        }
        for (pos, surface) in occs {
            if !surface {
                violations.push(Violation::NonSurfaceRegister {
                    index: *index,
                    position: pos.clone(),
                });
            }
        }
    }

    for occ in enumerate_occurrences(t) {
        if let Term::LinLam(body) = occ.term {
            let uses = bound_var_uses(body, 0);
            if uses.len() != 1 {
                violations.push(Violation::NonLinearBinder {
                    binder: occ.pos.clone(),
                    occurrences: uses.len(),
                });
            }
            for (use_pos, surface) in &uses {
                if !surface {
                    violations.push(Violation::NonSurfaceBinderUse {
                        binder: occ.pos.clone(),
                        occurrence: use_pos.clone(),
                    });
                }
            }
        }
    }

    ValidityReport { violations }
}

/// Occurrences of the bound variable `index` (relative to the root of `t`),
/// with surface classification relative to `t`.
fn bound_var_uses(t: &Term, index: u32) -> Vec<(Position, bool)> {
    fn go(t: &Term, index: u32, pos: Position, surface: bool, out: &mut Vec<(Position, bool)>) {
        match t {
            Term::Var(i) if *i == index => out.push((pos, surface)),
            Term::Var(_) | Term::Free(_) | Term::Reg(_) | Term::Gate(_) | Term::New => {}
            Term::Bang(b) => go(b, index, pos.child(ChildStep::BangBody), false, out),
            Term::LinLam(b) | Term::BangLam(b) => {
                go(b, index + 1, pos.child(ChildStep::Body), surface, out)
            }
            Term::App(f, a) => {
                go(f, index, pos.child(ChildStep::Fun), surface, out);
                go(a, index, pos.child(ChildStep::Arg), surface, out);
            }
            Term::Meas(s, b0, b1) => {
                go(s, index, pos.child(ChildStep::Subject), surface, out);
                go(b0, index, pos.child(ChildStep::Branch0), false, out);
                go(b1, index, pos.child(ChildStep::Branch1), false, out);
            }
        }
    }
    let mut out = Vec::new();
    go(t, index, Position::root(), true, &mut out);
    out
}

fn uses_var(t: &Term, index: u32) -> bool {
    !bound_var_uses(t, index).is_empty()
}

/// Shifts bound variables ≥ `cutoff` up by `by`.
pub fn shift(t: &Term, cutoff: u32, by: u32) -> Term {
    match t {
        Term::Var(i) if *i >= cutoff => Term::Var(i + by),
        Term::Var(_) | Term::Free(_) | Term::Reg(_) | Term::Gate(_) | Term::New => t.clone(),
        Term::Bang(b) => Term::bang(shift(b, cutoff, by)),
        Term::LinLam(b) => Term::lin_lam(shift(b, cutoff + 1, by)),
        Term::BangLam(b) => Term::bang_lam(shift(b, cutoff + 1, by)),
        Term::App(f, a) => Term::app(shift(f, cutoff, by), shift(a, cutoff, by)),
        Term::Meas(s, b0, b1) => Term::meas(
            shift(s, cutoff, by),
            shift(b0, cutoff, by),
            shift(b1, cutoff, by),
        ),
    }
}

/// Shifts bound variables > `cutoff` down by one. Only sound when `cutoff`
/// itself does not occur.
fn unshift(t: &Term, cutoff: u32) -> Term {
    match t {
        Term::Var(i) if *i > cutoff => Term::Var(i - 1),
        Term::Var(_) | Term::Free(_) | Term::Reg(_) | Term::Gate(_) | Term::New => t.clone(),
        Term::Bang(b) => Term::bang(unshift(b, cutoff)),
        Term::LinLam(b) => Term::lin_lam(unshift(b, cutoff + 1)),
        Term::BangLam(b) => Term::bang_lam(unshift(b, cutoff + 1)),
        Term::App(f, a) => Term::app(unshift(f, cutoff), unshift(a, cutoff)),
        Term::Meas(s, b0, b1) => {
            Term::meas(unshift(s, cutoff), unshift(b0, cutoff), unshift(b1, cutoff))
        }
    }
}

/// β-contraction helper: substitutes the binder variable of `body` (index 0
/// at the root) with `arg`, lowering the remaining indices.
pub fn open(body: &Term, arg: &Term) -> Term {
    fn go(t: &Term, depth: u32, arg: &Term) -> Term {
        match t {
            Term::Var(i) if *i == depth => shift(arg, 0, depth),
            Term::Var(i) if *i > depth => Term::Var(i - 1),
            Term::Var(_) | Term::Free(_) | Term::Reg(_) | Term::Gate(_) | Term::New => t.clone(),
            Term::Bang(b) => Term::bang(go(b, depth, arg)),
            Term::LinLam(b) => Term::lin_lam(go(b, depth + 1, arg)),
            Term::BangLam(b) => Term::bang_lam(go(b, depth + 1, arg)),
            Term::App(f, a) => Term::app(go(f, depth, arg), go(a, depth, arg)),
            Term::Meas(s, b0, b1) => {
                Term::meas(go(s, depth, arg), go(b0, depth, arg), go(b1, depth, arg))
            }
        }
    }
    go(body, 0, arg)
}

/// Capture-avoiding substitution of the free variable `name` by `arg`.
/// Capture is impossible by construction: binders are anonymous indices and
/// `arg`'s own bound variables are shifted when crossing binders.
pub fn subst(body: &Term, name: &str, arg: &Term) -> Term {
    fn go(t: &Term, depth: u32, name: &str, arg: &Term) -> Term {
        match t {
            Term::Free(n) if n == name => shift(arg, 0, depth),
            Term::Var(_) | Term::Free(_) | Term::Reg(_) | Term::Gate(_) | Term::New => t.clone(),
            Term::Bang(b) => Term::bang(go(b, depth, name, arg)),
            Term::LinLam(b) => Term::lin_lam(go(b, depth + 1, name, arg)),
            Term::BangLam(b) => Term::bang_lam(go(b, depth + 1, name, arg)),
            Term::App(f, a) => Term::app(go(f, depth, name, arg), go(a, depth, name, arg)),
            Term::Meas(s, b0, b1) => Term::meas(
                go(s, depth, name, arg),
                go(b0, depth, name, arg),
                go(b1, depth, name, arg),
            ),
        }
    }
    go(body, 0, name, arg)
}

/// Applies a register renaming to every `Reg` occurrence.
pub fn map_registers(t: &Term, f: &impl Fn(u32) -> u32) -> Term {
    match t {
        Term::Reg(i) => Term::Reg(f(*i)),
        Term::Var(_) | Term::Free(_) | Term::Gate(_) | Term::New => t.clone(),
        Term::Bang(b) => Term::bang(map_registers(b, f)),
        Term::LinLam(b) => Term::lin_lam(map_registers(b, f)),
        Term::BangLam(b) => Term::bang_lam(map_registers(b, f)),
        Term::App(fun, a) => Term::app(map_registers(fun, f), map_registers(a, f)),
        Term::Meas(s, b0, b1) => Term::meas(
            map_registers(s, f),
            map_registers(b0, f),
            map_registers(b1, f),
        ),
    }
}
