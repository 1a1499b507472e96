//! Pauli-string algebra and the Jordan-Wigner form of the star SIAM.
//!
//! The transformation is applied to each spin sector separately. With the
//! chain order `(B,s) ... (1,s), (0,s), (0,sb), (1,sb) ... (B,sb)` every
//! hybridization string stays inside one sector and the two impurity qubits
//! sit next to each other, so no inter-sector parity string is needed for
//! the number-conserving Hamiltonian terms.
//!
//! Occupation convention: `|1>` is occupied and `Z|1> = -|1>`, matching
//! `d^dag -> (X - iY)/2` on the impurity qubit.

use crate::model::SiamParams;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Dense conversions are guarded to keep memory bounded.
pub const MAX_DENSE_QUBITS: usize = 14;

#[derive(Debug, thiserror::Error)]
pub enum PauliError {
    #[error("{n_qubits} qubits exceed the dense-matrix guard of {MAX_DENSE_QUBITS}")]
    TooManyQubits { n_qubits: usize },
    #[error("qubit counts differ: {left} vs {right}")]
    QubitCountMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn other(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];
}

/// Assignment of SIAM sites to chain qubits.
///
/// Qubit indices run along the chain: qubit `0` is bath site `B` of the up
/// sector, qubit `B` the up impurity, qubit `B+1` the down impurity and
/// qubit `2B+1` bath site `B` of the down sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QubitLayout {
    b: usize,
}

impl QubitLayout {
    pub fn new(bath_sites: usize) -> Self {
        Self { b: bath_sites }
    }

    pub fn bath_sites(&self) -> usize {
        self.b
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.b + 2
    }

    /// Chain qubit for `site` (0 = impurity, 1..=B bath) of the given spin.
    pub fn qubit(&self, site: usize, spin: Spin) -> usize {
        assert!(site <= self.b, "site {site} out of range for B={}", self.b);
        match spin {
            Spin::Up => self.b - site,
            Spin::Down => self.b + 1 + site,
        }
    }

    pub fn impurity_qubit(&self, spin: Spin) -> usize {
        self.qubit(0, spin)
    }

    pub fn site_of(&self, qubit: usize) -> (usize, Spin) {
        assert!(qubit < self.n_qubits());
        if qubit <= self.b {
            (self.b - qubit, Spin::Up)
        } else {
            (qubit - self.b - 1, Spin::Down)
        }
    }

    /// Bitmask over the up-sector qubits.
    pub fn up_mask(&self) -> usize {
        (1 << (self.b + 1)) - 1
    }

    pub fn down_mask(&self) -> usize {
        self.up_mask() << (self.b + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliLetter {
    I,
    X,
    Y,
    Z,
}

impl std::fmt::Display for PauliLetter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = match self {
            PauliLetter::I => 'I',
            PauliLetter::X => 'X',
            PauliLetter::Y => 'Y',
            PauliLetter::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// One Pauli letter per qubit, with the action masks precomputed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    letters: Vec<PauliLetter>,
    x_mask: usize,
    zy_mask: usize,
    n_y: usize,
}

impl PauliString {
    pub fn from_letters(letters: &[PauliLetter]) -> Self {
        let mut x_mask = 0;
        let mut zy_mask = 0;
        let mut n_y = 0;
        for (q, letter) in letters.iter().enumerate() {
            match letter {
                PauliLetter::I => {}
                PauliLetter::X => x_mask |= 1 << q,
                PauliLetter::Y => {
                    x_mask |= 1 << q;
                    zy_mask |= 1 << q;
                    n_y += 1;
                }
                PauliLetter::Z => zy_mask |= 1 << q,
            }
        }
        Self { letters: letters.to_vec(), x_mask, zy_mask, n_y }
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self::from_letters(&vec![PauliLetter::I; n_qubits])
    }

    /// Single non-identity letter at `qubit`.
    pub fn single(n_qubits: usize, qubit: usize, letter: PauliLetter) -> Self {
        let mut letters = vec![PauliLetter::I; n_qubits];
        letters[qubit] = letter;
        Self::from_letters(&letters)
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[PauliLetter] {
        &self.letters
    }

    pub fn letter(&self, qubit: usize) -> PauliLetter {
        self.letters[qubit]
    }

    /// `(x_mask, zy_mask, n_y)`: flip mask, phase mask and Y count, so that
    /// `P|i> = i^{n_y} (-1)^{popcount(i & zy_mask)} |i ^ x_mask>`.
    pub fn masks(&self) -> (usize, usize, usize) {
        (self.x_mask, self.zy_mask, self.n_y)
    }
}

impl std::fmt::Display for PauliString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for letter in &self.letters {
            write!(f, "{letter}")?;
        }
        Ok(())
    }
}

/// Real-weighted sum of Pauli strings plus an explicit identity offset.
///
/// Coefficients are real by construction, which keeps the sum Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    identity_coeff: f64,
    terms: Vec<(f64, PauliString)>,
}

impl PauliSum {
    pub fn identity(n_qubits: usize, coeff: f64) -> Self {
        Self { n_qubits, identity_coeff: coeff, terms: Vec::new() }
    }

    /// Add `coeff * string`, merging duplicates and dropping exact zeros.
    pub fn add_term(&mut self, coeff: f64, string: PauliString) {
        assert_eq!(string.len(), self.n_qubits, "string length mismatch");
        if coeff == 0.0 {
            return;
        }
        if string.x_mask == 0 && string.zy_mask == 0 {
            self.identity_coeff += coeff;
            return;
        }
        if let Some((c, _)) = self.terms.iter_mut().find(|(_, s)| *s == string) {
            *c += coeff;
            if *c == 0.0 {
                self.terms.retain(|(c, _)| *c != 0.0);
            }
        } else {
            self.terms.push((coeff, string));
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn identity_coeff(&self) -> f64 {
        self.identity_coeff
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, &PauliString)> {
        self.terms.iter().map(|(c, s)| (*c, s))
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Coefficient of `string`, zero when absent.
    pub fn coefficient_of(&self, string: &PauliString) -> f64 {
        self.terms
            .iter()
            .find(|(_, s)| s == string)
            .map(|(c, _)| *c)
            .unwrap_or(0.0)
    }

    /// Hermitian dense matrix in the computational basis, identity included.
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>, PauliError> {
        if self.n_qubits > MAX_DENSE_QUBITS {
            return Err(PauliError::TooManyQubits { n_qubits: self.n_qubits });
        }
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::from_diagonal_element(dim, dim, Complex64::from(self.identity_coeff));
        for (coeff, string) in &self.terms {
            let (x_mask, zy_mask, n_y) = string.masks();
            let prefactor = Complex64::I.powu(n_y as u32) * coeff;
            for col in 0..dim {
                let sign = if (col & zy_mask).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
                m[(col ^ x_mask, col)] += prefactor * sign;
            }
        }
        Ok(m)
    }
}

/// Jordan-Wigner transform of the SIAM Hamiltonian on the given layout.
///
/// The identity offset is tracked so that the dense matrix equals the
/// second-quantized Hamiltonian including its constants.
pub fn jwt_siam(siam: &SiamParams, layout: &QubitLayout) -> PauliSum {
    assert_eq!(siam.bath_sites(), layout.bath_sites(), "layout does not match bath count");
    let n = layout.n_qubits();
    let eps_sum: f64 = siam.bath.iter().map(|site| site.energy).sum();
    let mut h = PauliSum::identity(n, siam.u / 4.0 - siam.mu + eps_sum);

    // Impurity: U/4 Z Z  +  (mu/2 - U/4)(Z + Z)
    let imp_up = layout.impurity_qubit(Spin::Up);
    let imp_down = layout.impurity_qubit(Spin::Down);
    let mut zz = vec![PauliLetter::I; n];
    zz[imp_up] = PauliLetter::Z;
    zz[imp_down] = PauliLetter::Z;
    h.add_term(siam.u / 4.0, PauliString::from_letters(&zz));
    for q in [imp_up, imp_down] {
        h.add_term(siam.mu / 2.0 - siam.u / 4.0, PauliString::single(n, q, PauliLetter::Z));
    }

    for spin in Spin::BOTH {
        for (idx, site) in siam.bath.iter().enumerate() {
            let p = idx + 1;
            // Bath: -eps_p/2 Z_p
            h.add_term(-site.energy / 2.0, PauliString::single(n, layout.qubit(p, spin), PauliLetter::Z));
            // Hybridization: V_p/2 (X Z..Z X + Y Z..Z Y) between impurity and site p
            for edge in [PauliLetter::X, PauliLetter::Y] {
                let mut letters = vec![PauliLetter::I; n];
                letters[layout.qubit(0, spin)] = edge;
                for between in 1..p {
                    letters[layout.qubit(between, spin)] = PauliLetter::Z;
                }
                letters[layout.qubit(p, spin)] = edge;
                h.add_term(site.coupling / 2.0, PauliString::from_letters(&letters));
            }
        }
    }
    h
}

/// Total `sum_p Z_{p,spin}` over one spin sector (impurity included).
pub fn sector_z_sum(layout: &QubitLayout, spin: Spin) -> PauliSum {
    let n = layout.n_qubits();
    let mut sum = PauliSum::identity(n, 0.0);
    for site in 0..=layout.bath_sites() {
        sum.add_term(1.0, PauliString::single(n, layout.qubit(site, spin), PauliLetter::Z));
    }
    sum
}

/// True iff the dense commutator `[a, b]` has max-norm below `1e-12`.
pub fn commutes(a: &PauliSum, b: &PauliSum) -> Result<bool, PauliError> {
    if a.n_qubits != b.n_qubits {
        return Err(PauliError::QubitCountMismatch { left: a.n_qubits, right: b.n_qubits });
    }
    let da = a.to_dense()?;
    let db = b.to_dense()?;
    let comm = &da * &db - &db * &da;
    Ok(comm.iter().map(|c| c.norm()).fold(0.0, f64::max) < 1e-12)
}
