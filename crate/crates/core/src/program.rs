//! Programs and multidistributions.
//!
//! A program pairs a quantum memory with a valid term whose registers are
//! exactly {0..n-1}; it stands for its re-indexing class. Equality is
//! decided through a canonical representative: registers are renumbered in
//! the order the deterministic preorder walk first meets them, and the
//! memory is permuted accordingly. This is sound because a valid term uses
//! each register exactly once, so the preorder induces a unique permutation.

use std::collections::BTreeSet;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quantum::{Permutation, QuantumError, QuantumState};
use crate::syntax::{
    map_registers, parse_term, print_term, register_occurrences, validate, GateTable, ParseError,
    Term, ValidityReport,
};
use crate::EPS;

#[derive(Debug, thiserror::Error)]
pub enum ProgramError {
    #[error("invalid term: {0}")]
    InvalidTerm(ValidityReport),
    #[error("registers {registers:?} do not match memory of {qubits} qubits")]
    RegisterMismatch {
        registers: BTreeSet<u32>,
        qubits: u32,
    },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("weight {0} outside (0, 1]")]
    BadWeight(f64),
    #[error("total mass {0} exceeds 1")]
    MassExceeded(f64),
}

/// A canonical (memory, term) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    state: QuantumState,
    term: Term,
}

impl Program {
    /// Canonicalizes a raw (state, term) pair. The term must be valid and
    /// mention exactly the registers 0..n-1 where n is the memory size.
    pub fn new(state: QuantumState, term: Term) -> Result<Program, ProgramError> {
        let report = validate(&term);
        if !report.is_valid() {
            return Err(ProgramError::InvalidTerm(report));
        }
        let occs = register_occurrences(&term);
        let n = state.qubit_count();
        let found: BTreeSet<u32> = occs.iter().map(|(i, _, _)| *i).collect();
        let expected: BTreeSet<u32> = (0..n).collect();
        if found != expected || occs.len() != n as usize {
            return Err(ProgramError::RegisterMismatch {
                registers: found,
                qubits: n,
            });
        }

        // σ sends the k-th register met in preorder to index k. Renaming
        // the registers by σ moves qubit i to slot σ(i), which under the
        // |b_{σ(0)}…b_{σ(n-1)}⟩ convention of `permute` is σ⁻¹.
        let mut map = vec![0u32; n as usize];
        for (k, (i, _, _)) in occs.iter().enumerate() {
            map[*i as usize] = k as u32;
        }
        let sigma = Permutation::new(map).expect("register occurrences form a bijection");
        let term = map_registers(&term, &|i| sigma.apply(i));
        let state = state.permute(&sigma.inverse())?;
        Ok(Program { state, term })
    }

    /// A program over the empty memory; the term must be register-free.
    pub fn closed(term: Term) -> Result<Program, ProgramError> {
        Program::new(QuantumState::empty(), term)
    }

    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    pub fn term(&self) -> &Term {
        &self.term
    }

    /// Equality of re-indexing classes: canonical terms are α-equal and
    /// canonical memories agree entrywise within tolerance.
    pub fn eq_within(&self, other: &Program, eps: f64) -> bool {
        self.term == other.term && self.state.approx_eq(&other.state, eps)
    }

    pub fn program_eq(&self, other: &Program) -> bool {
        self.eq_within(other, EPS)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "state": state_amplitudes_json(&self.state),
            "term": print_term(&self.term),
        })
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {})",
            format_state_literal(&self.state),
            print_term(&self.term)
        )
    }
}

pub fn state_amplitudes_json(q: &QuantumState) -> Vec<[f64; 2]> {
    q.amplitudes().iter().map(|a| [a.re, a.im]).collect()
}

/// Renders a state in the program-file literal syntax.
pub fn format_state_literal(q: &QuantumState) -> String {
    let parts: Vec<String> = q
        .amplitudes()
        .iter()
        .map(|a| format!("{},{}", a.re, a.im))
        .collect();
    format!("[{}]", parts.join("; "))
}

/// A finite multiset of weighted programs with total mass ≤ 1.
#[derive(Debug, Clone, Default)]
pub struct MultiDistribution {
    entries: Vec<(f64, Program)>,
}

impl MultiDistribution {
    pub fn singleton(p: Program) -> MultiDistribution {
        MultiDistribution {
            entries: vec![(1.0, p)],
        }
    }

    pub fn from_entries(entries: Vec<(f64, Program)>) -> Result<MultiDistribution, ProgramError> {
        let mut mass = 0.0;
        for (w, _) in &entries {
            if !(*w > 0.0 && *w <= 1.0 + EPS) {
                return Err(ProgramError::BadWeight(*w));
            }
            mass += w;
        }
        if mass > 1.0 + EPS {
            return Err(ProgramError::MassExceeded(mass));
        }
        Ok(MultiDistribution { entries })
    }

    pub fn entries(&self) -> &[(f64, Program)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().fold(0.0, |acc, (w, _)| acc + w)
    }

    /// q · m, pointwise on weights.
    pub fn scale(&self, q: f64) -> MultiDistribution {
        MultiDistribution {
            entries: self
                .entries
                .iter()
                .map(|(w, p)| (w * q, p.clone()))
                .collect(),
        }
    }

    /// Multiset sum.
    pub fn add(&self, other: &MultiDistribution) -> MultiDistribution {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        MultiDistribution { entries }
    }

    pub(crate) fn push(&mut self, weight: f64, program: Program) {
        self.entries.push((weight, program));
    }

    /// Merges entries whose programs are equal, summing weights. Used for
    /// comparison and reporting only; reduction itself acts entrywise on
    /// the multiset.
    pub fn coalesced(&self) -> MultiDistribution {
        let mut out: Vec<(f64, Program)> = Vec::new();
        for (w, p) in &self.entries {
            if let Some((w0, _)) = out.iter_mut().find(|(_, q)| q.program_eq(p)) {
                *w0 += w;
            } else {
                out.push((*w, p.clone()));
            }
        }
        MultiDistribution { entries: out }
    }

    /// Multiset equality up to program equality and weight tolerance,
    /// after coalescing both sides.
    pub fn mdist_eq(&self, other: &MultiDistribution) -> bool {
        let a = self.coalesced();
        let b = other.coalesced();
        if a.entries.len() != b.entries.len() {
            return false;
        }
        let mut used = vec![false; b.entries.len()];
        for (w, p) in &a.entries {
            let found = b
                .entries
                .iter()
                .enumerate()
                .find(|(k, (wb, pb))| !used[*k] && (w - wb).abs() <= EPS && p.program_eq(pb));
            match found {
                Some((k, _)) => used[k] = true,
                None => return false,
            }
        }
        true
    }
}

impl fmt::Display for MultiDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, (w, p)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{w} {p}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProgramFileError {
    #[error("state literal: {0}")]
    StateLiteral(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Program(#[from] ProgramError),
}

/// Parses the `state: [re,im; re,im; ...]` literal.
pub fn parse_state_literal(text: &str) -> Result<QuantumState, ProgramFileError> {
    let body = text
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| ProgramFileError::StateLiteral("expected [ ... ]".to_string()))?;
    let mut amp = Vec::new();
    for chunk in body.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let (re, im) = chunk
            .split_once(',')
            .ok_or_else(|| ProgramFileError::StateLiteral(format!("expected re,im: {chunk}")))?;
        let re: f64 = re
            .trim()
            .parse()
            .map_err(|e| ProgramFileError::StateLiteral(format!("{chunk}: {e}")))?;
        let im: f64 = im
            .trim()
            .parse()
            .map_err(|e| ProgramFileError::StateLiteral(format!("{chunk}: {e}")))?;
        amp.push(Complex64::new(re, im));
    }
    QuantumState::from_amplitudes(amp).map_err(|e| ProgramFileError::StateLiteral(e.to_string()))
}

/// Parses a program file: comments `#`, an optional `state:` line (empty
/// memory when omitted), and one term.
pub fn parse_program_file(text: &str, gates: &GateTable) -> Result<Program, ProgramFileError> {
    let mut state = None;
    let mut term_text = String::new();
    for line in text.lines() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let trimmed = line.trim();
        if state.is_none() && term_text.trim().is_empty() {
            if let Some(rest) = trimmed.strip_prefix("state:") {
                state = Some(parse_state_literal(rest)?);
                continue;
            }
        }
        term_text.push_str(line);
        term_text.push('\n');
    }
    let term = parse_term(&term_text, gates)?;
    let state = state.unwrap_or_else(QuantumState::empty);
    Ok(Program::new(state, term)?)
}

/// Serde form of a program, matching the JSON export schema.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProgramJson {
    pub state: Vec<[f64; 2]>,
    pub term: String,
}
