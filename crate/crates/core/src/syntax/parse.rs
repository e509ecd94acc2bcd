//! Concrete syntax.
//!
//! ```text
//! term  := '\' '!'? IDENT '.' term
//!        | 'let' '<' IDENT ',' IDENT '>' '=' term 'in' term
//!        | app
//! app   := atom { atom } [ lambda-or-let ]     (left-associative)
//! atom  := '!' atom | IDENT | 'rN' | 'U[NAME]' | 'new'
//!        | 'meas' '(' term ',' term ',' term ')'
//!        | '<' term (',' term)+ '>'
//!        | '(' term ')'
//! ```
//!
//! `#` starts a comment running to end of line. Application binds tighter
//! than `λ`; a `λ` body extends maximally to the right; `!` binds the
//! following atom. `<M, N>` is sugar for `λf. f M N` (fresh linear `f`),
//! tuples nest to the right, and `let <x,y> = P in B` is sugar for
//! `P (λx. λy. B)`.

use super::{GateTable, Term};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Lambda,
    Bang,
    Dot,
    LParen,
    RParen,
    LAngle,
    RAngle,
    Comma,
    Equals,
    Ident(String),
    Register(u32),
    GateRef(String),
    New,
    Meas,
    Let,
    In,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Lambda => write!(f, "'\\'"),
            Tok::Bang => write!(f, "'!'"),
            Tok::Dot => write!(f, "'.'"),
            Tok::LParen => write!(f, "'('"),
            Tok::RParen => write!(f, "')'"),
            Tok::LAngle => write!(f, "'<'"),
            Tok::RAngle => write!(f, "'>'"),
            Tok::Comma => write!(f, "','"),
            Tok::Equals => write!(f, "'='"),
            Tok::Ident(s) => write!(f, "identifier '{s}'"),
            Tok::Register(i) => write!(f, "register r{i}"),
            Tok::GateRef(g) => write!(f, "gate U[{g}]"),
            Tok::New => write!(f, "'new'"),
            Tok::Meas => write!(f, "'meas'"),
            Tok::Let => write!(f, "'let'"),
            Tok::In => write!(f, "'in'"),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: unexpected character '{ch}'")]
    UnexpectedChar { line: u32, col: u32, ch: char },
    #[error("{line}:{col}: unterminated gate reference")]
    UnterminatedGate { line: u32, col: u32 },
    #[error("{line}:{col}: register index out of range")]
    RegisterRange { line: u32, col: u32 },
    #[error("{line}:{col}: unknown gate '{id}'")]
    UnknownGate { line: u32, col: u32, id: String },
    #[error("{line}:{col}: expected {expected}, found {found}")]
    Unexpected {
        line: u32,
        col: u32,
        expected: String,
        found: String,
    },
    #[error("unexpected end of input: expected {expected}")]
    Eof { expected: String },
}

struct Lexer<'a> {
    src: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

type Spanned = (Tok, u32, u32);

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            src: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.src.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            while let Some(&c) = self.src.peek() {
                if c == '#' {
                    while let Some(&c) = self.src.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else if c.is_whitespace() {
                    self.bump();
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.bump() else {
                return Ok(out);
            };
            let tok = match c {
                '\\' | 'λ' => Tok::Lambda,
                '!' => Tok::Bang,
                '.' => Tok::Dot,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '<' => Tok::LAngle,
                '>' => Tok::RAngle,
                ',' => Tok::Comma,
                '=' => Tok::Equals,
                c if c.is_alphabetic() || c == '_' => {
                    let mut word = String::from(c);
                    while let Some(&c) = self.src.peek() {
                        if c.is_alphanumeric() || c == '_' {
                            word.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.word_token(word, line, col)?
                }
                ch => return Err(ParseError::UnexpectedChar { line, col, ch }),
            };
            out.push((tok, line, col));
        }
    }

    fn word_token(&mut self, word: String, line: u32, col: u32) -> Result<Tok, ParseError> {
        if word == "U" && self.src.peek() == Some(&'[') {
            self.bump();
            let mut id = String::new();
            loop {
                match self.bump() {
                    Some(']') => break,
                    Some(c) if c.is_alphanumeric() || c == '_' => id.push(c),
                    _ => return Err(ParseError::UnterminatedGate { line, col }),
                }
            }
            return Ok(Tok::GateRef(id));
        }
        if let Some(digits) = word.strip_prefix('r') {
            if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
                let index: u32 = digits
                    .parse()
                    .map_err(|_| ParseError::RegisterRange { line, col })?;
                return Ok(Tok::Register(index));
            }
        }
        Ok(match word.as_str() {
            "new" => Tok::New,
            "meas" => Tok::Meas,
            "let" => Tok::Let,
            "in" => Tok::In,
            _ => Tok::Ident(word),
        })
    }
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    next: usize,
    env: Vec<String>,
    gates: &'a GateTable,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.next).map(|(t, _, _)| t)
    }

    fn bump(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.next).cloned();
        if t.is_some() {
            self.next += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        match self.bump() {
            Some((t, _, _)) if t == want => Ok(()),
            Some((t, line, col)) => Err(ParseError::Unexpected {
                line,
                col,
                expected: want.to_string(),
                found: t.to_string(),
            }),
            None => Err(ParseError::Eof {
                expected: want.to_string(),
            }),
        }
    }

    fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.bump() {
            Some((Tok::Ident(n), _, _)) => Ok(n),
            Some((t, line, col)) => Err(ParseError::Unexpected {
                line,
                col,
                expected: "identifier".to_string(),
                found: t.to_string(),
            }),
            None => Err(ParseError::Eof {
                expected: "identifier".to_string(),
            }),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Some(Tok::Lambda) => self.lambda(),
            Some(Tok::Let) => self.let_pair(),
            _ => self.app(),
        }
    }

    fn lambda(&mut self) -> Result<Term, ParseError> {
        self.expect(Tok::Lambda)?;
        let banged = matches!(self.peek(), Some(Tok::Bang));
        if banged {
            self.bump();
        }
        let name = self.expect_ident()?;
        self.expect(Tok::Dot)?;
        self.env.push(name);
        let body = self.term()?;
        self.env.pop();
        Ok(if banged {
            Term::bang_lam(body)
        } else {
            Term::lin_lam(body)
        })
    }

    fn let_pair(&mut self) -> Result<Term, ParseError> {
        self.expect(Tok::Let)?;
        self.expect(Tok::LAngle)?;
        let x = self.expect_ident()?;
        self.expect(Tok::Comma)?;
        let y = self.expect_ident()?;
        self.expect(Tok::RAngle)?;
        self.expect(Tok::Equals)?;
        let p = self.term()?;
        self.expect(Tok::In)?;
        self.env.push(x);
        self.env.push(y);
        let body = self.term()?;
        self.env.pop();
        self.env.pop();
        Ok(Term::let_pair(p, body))
    }

    fn app(&mut self) -> Result<Term, ParseError> {
        let mut acc = self.atom()?;
        loop {
            match self.peek() {
                Some(
                    Tok::Bang
                    | Tok::Ident(_)
                    | Tok::Register(_)
                    | Tok::GateRef(_)
                    | Tok::New
                    | Tok::Meas
                    | Tok::LParen
                    | Tok::LAngle,
                ) => {
                    let arg = self.atom()?;
                    acc = Term::app(acc, arg);
                }
                // A trailing λ or let extends maximally to the right.
                Some(Tok::Lambda | Tok::Let) => {
                    let arg = self.term()?;
                    return Ok(Term::app(acc, arg));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        let Some((tok, line, col)) = self.bump() else {
            return Err(ParseError::Eof {
                expected: "a term".to_string(),
            });
        };
        match tok {
            Tok::Bang => Ok(Term::bang(self.atom()?)),
            Tok::Ident(name) => {
                if let Some(depth) = self.env.iter().rev().position(|n| *n == name) {
                    Ok(Term::Var(depth as u32))
                } else {
                    Ok(Term::Free(name))
                }
            }
            Tok::Register(i) => Ok(Term::Reg(i)),
            Tok::GateRef(id) => {
                if self.gates.contains(&id) {
                    Ok(Term::Gate(id))
                } else {
                    Err(ParseError::UnknownGate { line, col, id })
                }
            }
            Tok::New => Ok(Term::New),
            Tok::Meas => {
                self.expect(Tok::LParen)?;
                let s = self.term()?;
                self.expect(Tok::Comma)?;
                let b0 = self.term()?;
                self.expect(Tok::Comma)?;
                let b1 = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(Term::meas(s, b0, b1))
            }
            Tok::LAngle => {
                let mut items = vec![self.term()?];
                self.expect(Tok::Comma)?;
                items.push(self.term()?);
                while matches!(self.peek(), Some(Tok::Comma)) {
                    self.bump();
                    items.push(self.term()?);
                }
                self.expect(Tok::RAngle)?;
                let mut acc = items.pop().unwrap();
                while let Some(item) = items.pop() {
                    acc = Term::pair(item, acc);
                }
                Ok(acc)
            }
            Tok::LParen => {
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            t => Err(ParseError::Unexpected {
                line,
                col,
                expected: "a term".to_string(),
                found: t.to_string(),
            }),
        }
    }
}

/// Parses a term; gate references are checked against `gates`.
pub fn parse_term(text: &str, gates: &GateTable) -> Result<Term, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    let mut parser = Parser {
        toks,
        next: 0,
        env: Vec::new(),
        gates,
    };
    let term = parser.term()?;
    if let Some((t, line, col)) = parser.bump() {
        return Err(ParseError::Unexpected {
            line,
            col,
            expected: "end of input".to_string(),
            found: t.to_string(),
        });
    }
    Ok(term)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Term {
        parse_term(s, &GateTable::default()).unwrap()
    }

    #[test]
    fn application_is_left_associative() {
        assert_eq!(parse("f a b"), parse("(f a) b"));
    }

    #[test]
    fn lambda_body_extends_right() {
        assert_eq!(
            parse("\\x. x y"),
            Term::lin_lam(Term::app(Term::Var(0), Term::Free("y".into())))
        );
    }

    #[test]
    fn bang_binds_the_following_atom() {
        assert_eq!(
            parse("x !x"),
            Term::app(Term::Free("x".into()), Term::bang(Term::Free("x".into())))
        );
        assert_eq!(
            parse("!f y"),
            Term::app(Term::bang(Term::Free("f".into())), Term::Free("y".into()))
        );
    }

    #[test]
    fn let_sugar_expands_to_application() {
        let t = parse("let <x, y> = p in y x");
        let body = Term::app(Term::Var(0), Term::Var(1));
        assert_eq!(
            t,
            Term::app(Term::Free("p".into()), Term::lin_lam(Term::lin_lam(body)))
        );
    }

    #[test]
    fn comments_and_whitespace_are_skipped() {
        assert_eq!(parse("# the identity\n\\x. x # done"), parse("\\x. x"));
    }

    #[test]
    fn errors_carry_location() {
        let err = parse_term("\\x. %", &GateTable::default()).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnexpectedChar {
                line: 1,
                col: 5,
                ch: '%'
            }
        );
        let err = parse_term("U[NOPE] r0", &GateTable::default()).unwrap_err();
        assert!(matches!(err, ParseError::UnknownGate { id, .. } if id == "NOPE"));
    }

    #[test]
    fn trailing_lambda_is_the_last_argument() {
        assert_eq!(parse("f \\x. x"), parse("f (\\x. x)"));
    }

    #[test]
    fn shadowing_resolves_to_nearest_binder() {
        assert_eq!(
            parse("\\x. \\x. x"),
            Term::lin_lam(Term::lin_lam(Term::Var(0)))
        );
    }
}
