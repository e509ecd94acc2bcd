//! Dense state-vector memory.
//!
//! A memory over `n` qubits is a normalized vector of 2^n complex
//! amplitudes. Basis index bits are read as |b0…b_{n-1}⟩ with b0 the most
//! significant bit, so the Kronecker product structure matches the index
//! arithmetic directly: allocating a qubit appends a least-significant bit.
//!
//! Gates at arbitrary indices are the conjugates σ⁻¹ ∘ (A⊗Id) ∘ σ of the
//! front-position rules by the swap permutations; they are implemented here
//! by direct bit manipulation, with the permutation route kept as an
//! independent oracle in the tests.

use num_complex::Complex64;
use rand::Rng;

use crate::syntax::GateDef;
use crate::{DROP_EPS, EPS};

/// Default cap on memory size; every bundled example fits well below it.
pub const DEFAULT_MAX_QUBITS: u32 = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantumError {
    #[error("qubit capacity exceeded: requested {requested}, max {max}")]
    CapacityExceeded { requested: u32, max: u32 },
    #[error("qubit index {index} out of range for {qubits} qubits")]
    IndexOutOfRange { index: u32, qubits: u32 },
    #[error("binary gate applied twice to qubit {index}")]
    IndexClash { index: u32 },
    #[error("amplitude vector length {len} is not a power of two")]
    BadDimension { len: usize },
    #[error("state vector has norm {norm}, expected 1")]
    NotNormalized { norm: f64 },
    #[error("permutation size {got} does not match {expected} qubits")]
    PermutationSize { expected: u32, got: usize },
    #[error("not a permutation: {0:?}")]
    NotBijective(Vec<u32>),
    #[error("gate arity {arity} does not fit this operation")]
    GateArity { arity: u8 },
}

/// Normalized state of an `n`-qubit memory. The unique 0-qubit state is the
/// scalar 1 (empty memory).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    qubits: u32,
    amp: Vec<Complex64>,
}

/// One branch of a destructive measurement.
#[derive(Debug, Clone)]
pub struct MeasureOutcome {
    pub bit: u8,
    pub probability: f64,
    pub state: QuantumState,
}

impl QuantumState {
    /// The empty memory |⟩.
    pub fn empty() -> QuantumState {
        QuantumState {
            qubits: 0,
            amp: vec![Complex64::new(1.0, 0.0)],
        }
    }

    /// |0…0⟩ over `n` qubits.
    pub fn zeros(n: u32) -> QuantumState {
        let mut amp = vec![Complex64::new(0.0, 0.0); 1 << n];
        amp[0] = Complex64::new(1.0, 0.0);
        QuantumState { qubits: n, amp }
    }

    /// Builds a state from amplitudes; the length must be a power of two
    /// and the vector normalized within tolerance.
    pub fn from_amplitudes(amp: Vec<Complex64>) -> Result<QuantumState, QuantumError> {
        if amp.is_empty() || !amp.len().is_power_of_two() {
            return Err(QuantumError::BadDimension { len: amp.len() });
        }
        let qubits = amp.len().trailing_zeros();
        let state = QuantumState { qubits, amp };
        let norm = state.norm();
        if (norm - 1.0).abs() > EPS {
            return Err(QuantumError::NotNormalized { norm });
        }
        Ok(state)
    }

    /// A random state with independent complex-Gaussian amplitudes,
    /// normalized.
    pub fn random(n: u32, rng: &mut impl Rng) -> QuantumState {
        fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        }
        let mut amp: Vec<Complex64> = (0..1usize << n)
            .map(|_| Complex64::new(gaussian(rng), gaussian(rng)))
            .collect();
        let norm: f64 = amp.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amp {
            *a /= norm;
        }
        QuantumState { qubits: n, amp }
    }

    pub fn qubit_count(&self) -> u32 {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.amp.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amp
    }

    pub fn norm(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Entrywise comparison within `eps`.
    pub fn approx_eq(&self, other: &QuantumState, eps: f64) -> bool {
        self.qubits == other.qubits
            && self
                .amp
                .iter()
                .zip(&other.amp)
                .all(|(a, b)| (a - b).norm() <= eps)
    }

    fn check_index(&self, i: u32) -> Result<(), QuantumError> {
        if i >= self.qubits {
            return Err(QuantumError::IndexOutOfRange {
                index: i,
                qubits: self.qubits,
            });
        }
        Ok(())
    }

    /// Bit mask selecting qubit `i` in a basis index (b0 most significant).
    fn mask(&self, i: u32) -> usize {
        1usize << (self.qubits - 1 - i)
    }

    /// ν: appends a fresh qubit in state |0⟩ (the Kronecker product Q ⊗ |0⟩).
    pub fn new_qubit(&self, max_qubits: u32) -> Result<QuantumState, QuantumError> {
        if self.qubits + 1 > max_qubits {
            return Err(QuantumError::CapacityExceeded {
                requested: self.qubits + 1,
                max: max_qubits,
            });
        }
        let mut amp = vec![Complex64::new(0.0, 0.0); self.amp.len() * 2];
        for (i, a) in self.amp.iter().enumerate() {
            amp[2 * i] = *a;
        }
        Ok(QuantumState {
            qubits: self.qubits + 1,
            amp,
        })
    }

    /// σ(Q): the amplitude of |b0…b_{n-1}⟩ moves to the ket whose k-th bit
    /// is b_{σ(k)}.
    pub fn permute(&self, sigma: &Permutation) -> Result<QuantumState, QuantumError> {
        if sigma.len() != self.qubits as usize {
            return Err(QuantumError::PermutationSize {
                expected: self.qubits,
                got: sigma.len(),
            });
        }
        let n = self.qubits;
        let mut amp = vec![Complex64::new(0.0, 0.0); self.amp.len()];
        for (b, a) in self.amp.iter().enumerate() {
            let mut c = 0usize;
            for k in 0..n {
                let src_bit = (b >> (n - 1 - sigma.apply(k))) & 1;
                c |= src_bit << (n - 1 - k);
            }
            amp[c] = *a;
        }
        Ok(QuantumState {
            qubits: self.qubits,
            amp,
        })
    }

    /// π^A_i: applies the 2×2 unitary `a` to qubit `i`.
    pub fn apply_unary(&self, a: &GateDef, i: u32) -> Result<QuantumState, QuantumError> {
        if a.arity != 1 {
            return Err(QuantumError::GateArity { arity: a.arity });
        }
        self.check_index(i)?;
        let mask = self.mask(i);
        let mut amp = self.amp.clone();
        for idx in 0..self.amp.len() {
            if idx & mask == 0 {
                let hi = idx | mask;
                let x0 = self.amp[idx];
                let x1 = self.amp[hi];
                amp[idx] = a.entry(0, 0) * x0 + a.entry(0, 1) * x1;
                amp[hi] = a.entry(1, 0) * x0 + a.entry(1, 1) * x1;
            }
        }
        Ok(QuantumState {
            qubits: self.qubits,
            amp,
        })
    }

    /// π^A_{i,j}: applies the 4×4 unitary `a` to the qubit pair `(i, j)`,
    /// `i` feeding the most significant input bit.
    pub fn apply_binary(&self, a: &GateDef, i: u32, j: u32) -> Result<QuantumState, QuantumError> {
        if a.arity != 2 {
            return Err(QuantumError::GateArity { arity: a.arity });
        }
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(QuantumError::IndexClash { index: i });
        }
        let mi = self.mask(i);
        let mj = self.mask(j);
        let mut amp = self.amp.clone();
        for base in 0..self.amp.len() {
            if base & mi == 0 && base & mj == 0 {
                let idx = |bi: usize, bj: usize| base | (bi * mi) | (bj * mj);
                let mut inputs = [Complex64::new(0.0, 0.0); 4];
                for bi in 0..2 {
                    for bj in 0..2 {
                        inputs[2 * bi + bj] = self.amp[idx(bi, bj)];
                    }
                }
                for bi in 0..2 {
                    for bj in 0..2 {
                        let row = 2 * bi + bj;
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (col, x) in inputs.iter().enumerate() {
                            acc += a.entry(row, col) * x;
                        }
                        amp[idx(bi, bj)] = acc;
                    }
                }
            }
        }
        Ok(QuantumState {
            qubits: self.qubits,
            amp,
        })
    }

    /// ρ_b^i: probability of reading `bit` when measuring qubit `i`.
    pub fn outcome_probability(&self, i: u32, bit: u8) -> Result<f64, QuantumError> {
        self.check_index(i)?;
        let mask = self.mask(i);
        let want = if bit == 0 { 0 } else { mask };
        Ok(self
            .amp
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & mask == want)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// π_b^i with the garbage-collection convention: projects qubit `i`
    /// onto `bit`, deletes it, renormalizes. `None` when the branch
    /// probability is below the drop threshold.
    pub fn project(&self, i: u32, bit: u8) -> Result<Option<(f64, QuantumState)>, QuantumError> {
        self.check_index(i)?;
        let prob = self.outcome_probability(i, bit)?;
        if prob < DROP_EPS {
            return Ok(None);
        }
        let pos = self.qubits - 1 - i;
        let low_mask = (1usize << pos) - 1;
        let sel = if bit == 0 { 0 } else { 1usize << pos };
        let scale = prob.sqrt();
        let mut amp = vec![Complex64::new(0.0, 0.0); self.amp.len() / 2];
        for (idx, a) in self.amp.iter().enumerate() {
            if idx & (1 << pos) == sel {
                let reduced = ((idx >> (pos + 1)) << pos) | (idx & low_mask);
                amp[reduced] = a / scale;
            }
        }
        Ok(Some((
            prob,
            QuantumState {
                qubits: self.qubits - 1,
                amp,
            },
        )))
    }

    /// Destructive measurement of qubit `i`: the branches with probability
    /// ≥ drop threshold, in outcome order. Probabilities sum to 1.
    pub fn measure(&self, i: u32) -> Result<Vec<MeasureOutcome>, QuantumError> {
        self.check_index(i)?;
        let mut out = Vec::with_capacity(2);
        for bit in [0u8, 1u8] {
            if let Some((probability, state)) = self.project(i, bit)? {
                out.push(MeasureOutcome {
                    bit,
                    probability,
                    state,
                });
            }
        }
        Ok(out)
    }
}

/// A bijection on qubit positions {0..n-1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<u32>);

impl Permutation {
    pub fn new(map: Vec<u32>) -> Result<Permutation, QuantumError> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &v in &map {
            if (v as usize) >= n || seen[v as usize] {
                return Err(QuantumError::NotBijective(map));
            }
            seen[v as usize] = true;
        }
        Ok(Permutation(map))
    }

    pub fn identity(n: u32) -> Permutation {
        Permutation((0..n).collect())
    }

    /// σ_{a,b}: exchanges positions `a` and `b`.
    pub fn swap(n: u32, a: u32, b: u32) -> Permutation {
        let mut map: Vec<u32> = (0..n).collect();
        map.swap(a as usize, b as usize);
        Permutation(map)
    }

    /// A permutation with σ(i) = 0 and σ(j) = 1, remaining positions in
    /// ascending order. Used to express binary gates at arbitrary indices.
    pub fn pair_to_front(n: u32, i: u32, j: u32) -> Permutation {
        let mut map = vec![u32::MAX; n as usize];
        map[i as usize] = 0;
        map[j as usize] = 1;
        let mut next = 2;
        for k in 0..n {
            if k != i && k != j {
                map[k as usize] = next;
                next += 1;
            }
        }
        Permutation(map)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, k: u32) -> u32 {
        self.0[k as usize]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0u32; self.0.len()];
        for (k, &v) in self.0.iter().enumerate() {
            inv[v as usize] = k as u32;
        }
        Permutation(inv)
    }
}
