//! Pretty-printer. Binder names are regenerated (the AST stores none);
//! recognizable pair encodings print back as `<M, N>`.

use super::{free_vars, Term};
use std::collections::BTreeSet;

const NAME_POOL: [&str; 9] = ["x", "y", "z", "u", "v", "w", "f", "g", "h"];

struct Printer {
    taken: BTreeSet<String>,
    scope: Vec<String>,
    fresh_counter: usize,
}

/// Precedence levels: 0 = anywhere, 1 = function position, 2 = atom.
const P_TERM: u8 = 0;
const P_APP: u8 = 1;
const P_ATOM: u8 = 2;

impl Printer {
    fn fresh_name(&mut self) -> String {
        loop {
            let candidate = if self.fresh_counter < NAME_POOL.len() {
                NAME_POOL[self.fresh_counter].to_string()
            } else {
                let i = self.fresh_counter - NAME_POOL.len();
                format!(
                    "{}{}",
                    NAME_POOL[i % NAME_POOL.len()],
                    1 + i / NAME_POOL.len()
                )
            };
            self.fresh_counter += 1;
            if !self.taken.contains(&candidate) && !self.scope.contains(&candidate) {
                return candidate;
            }
        }
    }

    fn print(&mut self, t: &Term, prec: u8, out: &mut String) {
        if let Some((m, n)) = t.as_pair() {
            out.push('<');
            self.print(&m, P_TERM, out);
            out.push_str(", ");
            self.print(&n, P_TERM, out);
            out.push('>');
            return;
        }
        match t {
            Term::Var(i) => {
                let i = *i as usize;
                if i < self.scope.len() {
                    out.push_str(&self.scope[self.scope.len() - 1 - i]);
                } else {
                    // Dangling index: only reachable when printing open
                    // subterms out of context.
                    out.push('#');
                    out.push_str(&i.to_string());
                }
            }
            Term::Free(n) => out.push_str(n),
            Term::Reg(i) => {
                out.push('r');
                out.push_str(&i.to_string());
            }
            Term::Gate(g) => {
                out.push_str("U[");
                out.push_str(g);
                out.push(']');
            }
            Term::New => out.push_str("new"),
            Term::Bang(b) => {
                out.push('!');
                self.print(b, P_ATOM, out);
            }
            Term::LinLam(body) | Term::BangLam(body) => {
                let parens = prec > P_TERM;
                if parens {
                    out.push('(');
                }
                out.push('\\');
                if matches!(t, Term::BangLam(_)) {
                    out.push('!');
                }
                let name = self.fresh_name();
                out.push_str(&name);
                out.push_str(". ");
                self.scope.push(name);
                self.print(body, P_TERM, out);
                self.scope.pop();
                if parens {
                    out.push(')');
                }
            }
            Term::App(f, a) => {
                let parens = prec > P_APP;
                if parens {
                    out.push('(');
                }
                self.print(f, P_APP, out);
                out.push(' ');
                self.print(a, P_ATOM, out);
                if parens {
                    out.push(')');
                }
            }
            Term::Meas(s, b0, b1) => {
                out.push_str("meas(");
                self.print(s, P_TERM, out);
                out.push_str(", ");
                self.print(b0, P_TERM, out);
                out.push_str(", ");
                self.print(b1, P_TERM, out);
                out.push(')');
            }
        }
    }
}

/// Renders a term in the concrete syntax. `parse_term(print_term(t))` is
/// α-equal (hence equal) to `t`.
pub fn print_term(t: &Term) -> String {
    let mut printer = Printer {
        taken: free_vars(t),
        scope: Vec::new(),
        fresh_counter: 0,
    };
    let mut out = String::new();
    printer.print(t, P_TERM, &mut out);
    out
}
