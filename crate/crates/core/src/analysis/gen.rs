//! Random valid-program generator.
//!
//! Terms are valid by construction: linear binders are threaded as
//! obligations that must be placed exactly once at a surface position of
//! their body, registers are allocated fresh at surface positions only,
//! and thunk bodies and measurement branches are entered with no pending
//! obligations. The memory is a random complex-Gaussian normalized state
//! over the allocated registers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::program::Program;
use crate::quantum::QuantumState;
use crate::syntax::Term;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Balanced β and quantum constructs.
    Mixed,
    /// Biased toward `new`, gates and measurements.
    QuantumHeavy,
    /// Biased toward β redexes, thunks and nested abstractions.
    ClassicalHeavy,
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    /// Approximate term-size budget.
    pub size: usize,
    pub profile: Profile,
    pub max_registers: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            size: 12,
            profile: Profile::Mixed,
            max_registers: 3,
        }
    }
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    profile: Profile,
    max_registers: u32,
    regs_used: u32,
}

/// Productions the generator draws from when no obligation forces its hand.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Prod {
    Identity,
    BangVar,
    New,
    FreshReg,
    GateUnary,
    GateBinary,
    MeasFresh,
    BetaRedex,
    BangRedex,
    App,
    LinLamIntro,
    BangLamIntro,
    Thunk,
    MeasDeep,
}

impl<'a> Gen<'a> {
    fn weight(&self, p: Prod, surface: bool, budget: usize) -> u32 {
        let quantum_ok = surface && self.regs_used < self.max_registers;
        let w = match p {
            Prod::Identity => 2,
            Prod::BangVar => 3,
            Prod::New => 2,
            Prod::FreshReg => {
                if quantum_ok {
                    2
                } else {
                    0
                }
            }
            Prod::GateUnary => {
                if quantum_ok && budget >= 3 {
                    2
                } else {
                    0
                }
            }
            Prod::GateBinary => {
                if surface && self.regs_used + 2 <= self.max_registers && budget >= 7 {
                    1
                } else {
                    0
                }
            }
            Prod::MeasFresh => {
                if quantum_ok && budget >= 4 {
                    2
                } else {
                    0
                }
            }
            Prod::BetaRedex => {
                if budget >= 5 {
                    2
                } else {
                    0
                }
            }
            Prod::BangRedex => {
                if budget >= 5 {
                    2
                } else {
                    0
                }
            }
            Prod::App => {
                if budget >= 4 {
                    2
                } else {
                    0
                }
            }
            Prod::LinLamIntro => {
                if budget >= 3 {
                    2
                } else {
                    0
                }
            }
            Prod::BangLamIntro => {
                if budget >= 3 {
                    1
                } else {
                    0
                }
            }
            Prod::Thunk => {
                if budget >= 2 {
                    2
                } else {
                    0
                }
            }
            Prod::MeasDeep => {
                if quantum_ok && budget >= 5 {
                    1
                } else {
                    0
                }
            }
        };
        if w == 0 {
            return 0;
        }
        match (self.profile, p) {
            (Profile::QuantumHeavy, Prod::New | Prod::FreshReg | Prod::GateUnary) => w * 3,
            (Profile::QuantumHeavy, Prod::MeasFresh | Prod::MeasDeep) => w * 12,
            (Profile::QuantumHeavy, Prod::GateBinary) => w * 4,
            (Profile::QuantumHeavy, Prod::Identity | Prod::Thunk) => w / 2,
            (Profile::ClassicalHeavy, Prod::BetaRedex | Prod::BangRedex | Prod::Thunk) => w * 3,
            (Profile::ClassicalHeavy, Prod::LinLamIntro | Prod::App) => w * 2,
            _ => w,
        }
    }

    fn fresh_reg(&mut self) -> Term {
        let r = Term::Reg(self.regs_used);
        self.regs_used += 1;
        r
    }

    /// `obligations` are levels of enclosing linear binders that must be
    /// used exactly once, at a surface position, inside this subtree.
    /// `surface` tracks whether registers may appear here.
    fn gen(
        &mut self,
        budget: usize,
        depth: u32,
        obligations: &[u32],
        bang_vars: &[u32],
        surface: bool,
    ) -> Term {
        let var_of = |level: u32| Term::Var(depth - 1 - level);

        if obligations.len() >= 2 {
            // Split the pending linear variables across an application.
            let mut left = Vec::new();
            let mut right = Vec::new();
            for &o in obligations {
                if self.rng.gen_bool(0.5) {
                    left.push(o);
                } else {
                    right.push(o);
                }
            }
            if left.is_empty() {
                left.push(right.remove(0));
            } else if right.is_empty() {
                right.push(left.remove(0));
            }
            let sub = budget.saturating_sub(1).max(2);
            let lb = (sub / 2).max(1);
            let f = self.gen(lb, depth, &left, bang_vars, surface);
            let a = self.gen(sub - lb, depth, &right, bang_vars, surface);
            return Term::app(f, a);
        }

        if let [level] = obligations {
            if budget <= 2 {
                return var_of(*level);
            }
            // Keep the variable in play or push it deeper.
            return match self.rng.gen_range(0..6u32) {
                0 => var_of(*level),
                1 => {
                    let arg = self.gen(budget - 2, depth, &[], bang_vars, surface);
                    Term::app(var_of(*level), arg)
                }
                2 => {
                    let f = self.gen(budget - 2, depth, &[], bang_vars, surface);
                    Term::app(f, var_of(*level))
                }
                3 => {
                    let body =
                        self.gen(budget - 1, depth + 1, &[*level, depth], bang_vars, surface);
                    Term::lin_lam(body)
                }
                4 if budget >= 5 => {
                    let b0 = self.gen((budget - 2) / 2, depth, &[], bang_vars, false);
                    let b1 = self.gen((budget - 2) / 2, depth, &[], bang_vars, false);
                    Term::meas(var_of(*level), b0, b1)
                }
                _ => {
                    let body = self.gen(budget - 1, depth + 1, obligations, bang_vars, surface);
                    Term::bang_lam(body)
                }
            };
        }

        // No obligations pending.
        if budget <= 1 {
            return self.closed_leaf(depth, bang_vars, surface);
        }
        let prods = [
            Prod::Identity,
            Prod::BangVar,
            Prod::New,
            Prod::FreshReg,
            Prod::GateUnary,
            Prod::GateBinary,
            Prod::MeasFresh,
            Prod::BetaRedex,
            Prod::BangRedex,
            Prod::App,
            Prod::LinLamIntro,
            Prod::BangLamIntro,
            Prod::Thunk,
            Prod::MeasDeep,
        ];
        let weights: Vec<u32> = prods
            .iter()
            .map(|&p| {
                let mut w = self.weight(p, surface, budget);
                if p == Prod::BangVar && bang_vars.is_empty() {
                    w = 0;
                }
                w
            })
            .collect();
        let total: u32 = weights.iter().sum();
        if total == 0 {
            return self.closed_leaf(depth, bang_vars, surface);
        }
        let mut pick = self.rng.gen_range(0..total);
        let mut chosen = Prod::Identity;
        for (p, w) in prods.iter().zip(&weights) {
            if pick < *w {
                chosen = *p;
                break;
            }
            pick -= w;
        }

        match chosen {
            Prod::Identity => Term::lin_lam(Term::Var(0)),
            Prod::BangVar => {
                let lv = bang_vars[self.rng.gen_range(0..bang_vars.len())];
                var_of(lv)
            }
            Prod::New => Term::New,
            Prod::FreshReg => self.fresh_reg(),
            Prod::GateUnary => {
                let g = if self.rng.gen_bool(0.5) { "H" } else { "NOT" };
                Term::app(Term::Gate(g.into()), self.fresh_reg())
            }
            Prod::GateBinary => {
                let a = self.fresh_reg();
                let b = self.fresh_reg();
                Term::app(Term::Gate("CNOT".into()), Term::pair(a, b))
            }
            Prod::MeasFresh => {
                let sub = budget.saturating_sub(2);
                let b0 = self.gen(sub / 2, depth, &[], bang_vars, false);
                let b1 = self.gen(sub - sub / 2, depth, &[], bang_vars, false);
                Term::meas(self.fresh_reg(), b0, b1)
            }
            Prod::BetaRedex => {
                let sub = budget - 2;
                let body = self.gen(sub / 2, depth + 1, &[depth], bang_vars, surface);
                let arg = self.gen(sub - sub / 2, depth, &[], bang_vars, surface);
                Term::app(Term::lin_lam(body), arg)
            }
            Prod::BangRedex => {
                let sub = budget - 3;
                let body = self.gen(sub / 2, depth + 1, &[], bang_vars, surface);
                // The argument thunk keeps registers out by construction.
                let arg = self.gen(sub - sub / 2, depth, &[], bang_vars, false);
                Term::app(Term::bang_lam(body), Term::bang(arg))
            }
            Prod::App => {
                let sub = budget - 1;
                let f = self.gen(sub / 2, depth, &[], bang_vars, surface);
                let a = self.gen(sub - sub / 2, depth, &[], bang_vars, surface);
                Term::app(f, a)
            }
            Prod::LinLamIntro => {
                let body = self.gen(budget - 1, depth + 1, &[depth], bang_vars, surface);
                Term::lin_lam(body)
            }
            Prod::BangLamIntro => {
                let mut bvs = bang_vars.to_vec();
                bvs.push(depth);
                let body = self.gen(budget - 1, depth + 1, &[], &bvs, surface);
                Term::bang_lam(body)
            }
            Prod::Thunk => {
                let body = self.gen(budget - 1, depth, &[], bang_vars, false);
                Term::bang(body)
            }
            Prod::MeasDeep => {
                let sub = budget.saturating_sub(4);
                let subject = Term::app(
                    Term::Gate("H".into()),
                    if self.rng.gen_bool(0.7) {
                        self.fresh_reg()
                    } else {
                        Term::New
                    },
                );
                let b0 = self.gen(sub / 2, depth, &[], bang_vars, false);
                let b1 = self.gen(sub - sub / 2, depth, &[], bang_vars, false);
                Term::meas(subject, b0, b1)
            }
        }
    }

    fn closed_leaf(&mut self, depth: u32, bang_vars: &[u32], surface: bool) -> Term {
        if !bang_vars.is_empty() && self.rng.gen_bool(0.4) {
            let lv = bang_vars[self.rng.gen_range(0..bang_vars.len())];
            return Term::Var(depth - 1 - lv);
        }
        if surface && self.regs_used < self.max_registers && self.rng.gen_bool(0.3) {
            return self.fresh_reg();
        }
        match self.rng.gen_range(0..3u32) {
            0 => Term::New,
            1 => Term::lin_lam(Term::Var(0)),
            _ => Term::bang(Term::lin_lam(Term::Var(0))),
        }
    }
}

/// Generates a valid term; registers used are exactly 0..k-1 for some k.
pub fn gen_term(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Term {
    let mut gen = Gen {
        rng,
        profile: cfg.profile,
        max_registers: cfg.max_registers,
        regs_used: 0,
    };
    gen.gen(cfg.size.max(2), 0, &[], &[], true)
}

/// Generates a valid program: a generated term over a random normalized
/// memory of matching size.
pub fn gen_program(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Program {
    let term = gen_term(cfg, rng);
    let regs = crate::syntax::registers(&term);
    let n = regs.len() as u32;
    let state = QuantumState::random(n, rng);
    Program::new(state, term).expect("generated terms are valid by construction")
}

/// Retries `gen_program` until `accept` holds; panics after `attempts`.
pub fn gen_program_where(
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
    attempts: usize,
    accept: impl Fn(&Program) -> bool,
) -> Program {
    for _ in 0..attempts {
        let p = gen_program(cfg, rng);
        if accept(&p) {
            return p;
        }
    }
    panic!("no accepted program within {attempts} attempts");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{validate, Term};
    use rand::SeedableRng;

    #[test]
    fn generated_programs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for profile in [
            Profile::Mixed,
            Profile::QuantumHeavy,
            Profile::ClassicalHeavy,
        ] {
            let cfg = GenConfig {
                size: 12,
                profile,
                max_registers: 3,
            };
            for _ in 0..500 {
                let p = gen_program(&cfg, &mut rng);
                assert!(validate(p.term()).is_valid(), "{}", p.term());
            }
        }
    }

    #[test]
    fn tiny_budget_yields_tiny_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = GenConfig {
            size: 1,
            ..GenConfig::default()
        };
        let p = gen_program(&cfg, &mut rng);
        assert!(p.term().size() <= 3);
    }

    #[test]
    fn quantum_heavy_profile_measures_often() {
        fn has_meas(t: &Term) -> bool {
            match t {
                Term::Meas(_, _, _) => true,
                Term::Var(_) | Term::Free(_) | Term::Reg(_) | Term::Gate(_) | Term::New => false,
                Term::Bang(b) | Term::LinLam(b) | Term::BangLam(b) => has_meas(b),
                Term::App(f, a) => has_meas(f) || has_meas(a),
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cfg = GenConfig {
            size: 12,
            profile: Profile::QuantumHeavy,
            max_registers: 3,
        };
        let with_meas = (0..1000)
            .filter(|_| has_meas(gen_program(&cfg, &mut rng).term()))
            .count();
        assert!(with_meas >= 500, "only {with_meas}/1000 drew a measurement");
    }
}
