//! Declared gate constants and their unitary matrices.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::Deserialize;

use crate::EPS;

/// A declared gate: arity 1 or 2, matrix of dimension 2^arity, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GateDef {
    pub arity: u8,
    pub matrix: Vec<Complex64>,
}

impl GateDef {
    pub fn dim(&self) -> usize {
        1 << self.arity
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[row * self.dim() + col]
    }

    /// Max-norm distance of U†U from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += self.entry(k, i).conj() * self.entry(k, j);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - expect).norm());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GateError {
    #[error("gate {0}: arity must be 1 or 2")]
    BadArity(String),
    #[error("gate {0}: matrix must be {1}x{1}")]
    BadDimension(String, usize),
    #[error("gate {0}: matrix is not unitary (defect {1:.3e})")]
    NotUnitary(String, f64),
}

/// The table of gate constants a term may mention. `H`, `CNOT` and `NOT`
/// are preloaded.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTable {
    gates: BTreeMap<String, GateDef>,
}

impl Default for GateTable {
    fn default() -> Self {
        let mut t = GateTable {
            gates: BTreeMap::new(),
        };
        let s = std::f64::consts::FRAC_1_SQRT_2;
        t.insert_unary_named("H", [[s, s], [s, -s]]).unwrap();
        t.insert_unary_named("NOT", [[0.0, 1.0], [1.0, 0.0]])
            .unwrap();
        let mut cnot = vec![Complex64::new(0.0, 0.0); 16];
        for (row, col) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            cnot[row * 4 + col] = Complex64::new(1.0, 0.0);
        }
        t.insert(
            "CNOT",
            GateDef {
                arity: 2,
                matrix: cnot,
            },
        )
        .unwrap();
        t
    }
}

impl GateTable {
    /// An empty table, without the built-ins.
    pub fn empty() -> GateTable {
        GateTable {
            gates: BTreeMap::new(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&GateDef> {
        self.gates.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.gates.contains_key(id)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.gates.keys().map(|s| s.as_str())
    }

    /// Declares a gate; rejects bad arities, bad dimensions, and matrices
    /// that are not unitary within tolerance.
    pub fn insert(&mut self, id: &str, def: GateDef) -> Result<(), GateError> {
        if def.arity != 1 && def.arity != 2 {
            return Err(GateError::BadArity(id.to_string()));
        }
        let d = def.dim();
        if def.matrix.len() != d * d {
            return Err(GateError::BadDimension(id.to_string(), d));
        }
        let defect = def.unitarity_defect();
        if defect > EPS {
            return Err(GateError::NotUnitary(id.to_string(), defect));
        }
        self.gates.insert(id.to_string(), def);
        Ok(())
    }

    /// Declares a unary gate from a real 2×2 matrix.
    pub fn insert_unary_named(&mut self, id: &str, rows: [[f64; 2]; 2]) -> Result<(), GateError> {
        let matrix = rows
            .iter()
            .flatten()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        self.insert(id, GateDef { arity: 1, matrix })
    }

    /// Loads extra gates from the JSON gate-file format:
    /// `{"NAME": {"arity": 1, "matrix": [[[re,im],[re,im]],[[re,im],[re,im]]]}}`.
    pub fn load_json(&mut self, text: &str) -> Result<(), GateLoadError> {
        let file: BTreeMap<String, GateFileEntry> =
            serde_json::from_str(text).map_err(GateLoadError::Json)?;
        for (name, entry) in file {
            let dim = 1usize << entry.arity.min(7);
            let mut matrix = Vec::with_capacity(dim * dim);
            if entry.matrix.len() != dim {
                return Err(GateLoadError::Gate(GateError::BadDimension(name, dim)));
            }
            for row in &entry.matrix {
                if row.len() != dim {
                    return Err(GateLoadError::Gate(GateError::BadDimension(name, dim)));
                }
                for &[re, im] in row {
                    matrix.push(Complex64::new(re, im));
                }
            }
            self.insert(
                &name,
                GateDef {
                    arity: entry.arity,
                    matrix,
                },
            )
            .map_err(GateLoadError::Gate)?;
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct GateFileEntry {
    arity: u8,
    matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, thiserror::Error)]
pub enum GateLoadError {
    #[error("gate file: {0}")]
    Json(serde_json::Error),
    #[error("{0}")]
    Gate(GateError),
}

impl fmt::Display for GateTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.names().collect();
        write!(f, "{}", names.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_unitary() {
        let t = GateTable::default();
        for name in ["H", "CNOT", "NOT"] {
            let g = t.get(name).unwrap();
            assert!(g.unitarity_defect() <= EPS, "{name}");
        }
    }

    #[test]
    fn non_unitary_matrix_rejected() {
        let mut t = GateTable::empty();
        let err = t.insert_unary_named("BAD", [[1.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(err, Err(GateError::NotUnitary(_, _))));
    }

    #[test]
    fn gate_file_roundtrip() {
        let mut t = GateTable::default();
        t.load_json(r#"{"Z": {"arity": 1, "matrix": [[[1,0],[0,0]],[[0,0],[-1,0]]]}}"#)
            .unwrap();
        assert!(t.contains("Z"));
        assert!(t
            .load_json(r#"{"B": {"arity": 1, "matrix": [[[1,0],[0,0]],[[1,0],[1,0]]]}}"#)
            .is_err());
    }
}
