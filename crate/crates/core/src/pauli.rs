//! Pauli-string algebra.
//!
//! Hamiltonians, observables, twirl frames and symmetry layers are all written
//! as real-weighted Pauli strings. Letter `k` of a string acts on qubit `k`, so
//! `ZZII` is `Z_0 Z_1` on four qubits. Measurement outcomes use the matching
//! little-endian convention: bit `k` of an outcome integer is qubit `k`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{Basis, MeasurementRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    /// Symplectic bits `(x, z)`; `Y` is `(1, 1)`.
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    /// Single-qubit product `self * other` as `(power of i, result)`.
    fn mul(self, other: Pauli) -> (u8, Pauli) {
        use Pauli::*;
        match (self, other) {
            (I, p) | (p, I) => (0, p),
            (a, b) if a == b => (0, I),
            (X, Y) => (1, Z),
            (Y, Z) => (1, X),
            (Z, X) => (1, Y),
            (Y, X) => (3, Z),
            (Z, Y) => (3, X),
            (X, Z) => (3, Y),
            _ => unreachable!(),
        }
    }

    fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn from_char(c: char) -> Result<Self> {
        match c {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(Error::Parse(format!("unknown Pauli letter '{other}'"))),
        }
    }
}

/// Global phase picked up by a Pauli product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PlusOne,
    PlusI,
    MinusOne,
    MinusI,
}

impl Phase {
    fn from_power(k: u8) -> Self {
        match k % 4 {
            0 => Phase::PlusOne,
            1 => Phase::PlusI,
            2 => Phase::MinusOne,
            _ => Phase::MinusI,
        }
    }

    pub fn to_complex(self) -> num_complex::Complex64 {
        use num_complex::Complex64 as C;
        match self {
            Phase::PlusOne => C::new(1.0, 0.0),
            Phase::PlusI => C::new(0.0, 1.0),
            Phase::MinusOne => C::new(-1.0, 0.0),
            Phase::MinusI => C::new(0.0, -1.0),
        }
    }
}

/// A real-weighted Pauli string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    letters: Vec<Pauli>,
    coeff: f64,
}

impl PauliTerm {
    pub fn new(letters: Vec<Pauli>, coeff: f64) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidArgument("Pauli term needs at least one qubit".into()));
        }
        if !coeff.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite coefficient {coeff}")));
        }
        Ok(Self { letters, coeff })
    }

    pub fn identity(num_qubits: usize) -> Self {
        Self { letters: vec![Pauli::I; num_qubits], coeff: 1.0 }
    }

    /// Unit-coefficient term with the given letters on the given qubits.
    pub fn from_sparse(num_qubits: usize, ops: &[(usize, Pauli)], coeff: f64) -> Result<Self> {
        let mut letters = vec![Pauli::I; num_qubits];
        for &(q, p) in ops {
            if q >= num_qubits {
                return Err(Error::QubitOutOfRange { index: q, num_qubits });
            }
            letters[q] = p;
        }
        Self::new(letters, coeff)
    }

    pub fn parse_letters(s: &str, coeff: f64) -> Result<Self> {
        let letters = s.chars().map(Pauli::from_char).collect::<Result<Vec<_>>>()?;
        Self::new(letters, coeff)
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn num_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn with_coeff(&self, coeff: f64) -> Self {
        Self { letters: self.letters.clone(), coeff }
    }

    pub fn label(&self) -> String {
        self.letters.iter().map(|p| p.as_char()).collect()
    }

    /// Qubits carrying a non-identity letter.
    pub fn support(&self) -> Vec<usize> {
        self.letters
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != Pauli::I)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|p| *p == Pauli::I)
    }

    /// Bit masks `(x, z)` of the symplectic representation.
    pub fn masks(&self) -> (u64, u64) {
        let mut x = 0u64;
        let mut z = 0u64;
        for (i, p) in self.letters.iter().enumerate() {
            let (xb, zb) = p.bits();
            if xb {
                x |= 1 << i;
            }
            if zb {
                z |= 1 << i;
            }
        }
        (x, z)
    }

    pub fn count_y(&self) -> usize {
        self.letters.iter().filter(|p| **p == Pauli::Y).count()
    }

    /// The measurement basis in which this term is diagonal, if any.
    pub fn diagonal_basis(&self) -> Option<Basis> {
        let has = |l: Pauli| self.letters.contains(&l);
        match (has(Pauli::X), has(Pauli::Y), has(Pauli::Z)) {
            (false, false, _) => Some(Basis::Z),
            (true, false, false) => Some(Basis::X),
            _ => None,
        }
    }

    /// Relabel qubits: letter on qubit `i` moves to qubit `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.letters.len() {
            return Err(Error::SizeMismatch { expected: self.letters.len(), got: perm.len() });
        }
        let mut letters = vec![Pauli::I; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            letters[p] = self.letters[i];
        }
        Ok(Self { letters, coeff: self.coeff })
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.coeff, self.label())
    }
}

/// Qubit-wise product `a * b` with its accumulated phase. Coefficients multiply.
pub fn multiply(a: &PauliTerm, b: &PauliTerm) -> Result<(Phase, PauliTerm)> {
    if a.letters.len() != b.letters.len() {
        return Err(Error::SizeMismatch { expected: a.letters.len(), got: b.letters.len() });
    }
    let mut power = 0u8;
    let letters = a
        .letters
        .iter()
        .zip(&b.letters)
        .map(|(&pa, &pb)| {
            let (k, p) = pa.mul(pb);
            power += k;
            p
        })
        .collect();
    Ok((Phase::from_power(power), PauliTerm { letters, coeff: a.coeff * b.coeff }))
}

/// Returns `CNOT t CNOT†`. The ±1 sign of the conjugation is folded into the coefficient.
pub fn conjugate_by_cnot(t: &PauliTerm, control: usize, target: usize) -> Result<PauliTerm> {
    let n = t.letters.len();
    for q in [control, target] {
        if q >= n {
            return Err(Error::QubitOutOfRange { index: q, num_qubits: n });
        }
    }
    if control == target {
        return Err(Error::InvalidArgument("CNOT control equals target".into()));
    }
    let (xc, zc) = t.letters[control].bits();
    let (xt, zt) = t.letters[target].bits();
    let negate = xc && zt && (xt == zc);
    let mut out = t.clone();
    out.letters[control] = Pauli::from_bits(xc, zc ^ zt);
    out.letters[target] = Pauli::from_bits(xt ^ xc, zt);
    if negate {
        out.coeff = -out.coeff;
    }
    Ok(out)
}

/// A canonical sum of Pauli terms: merged, lexicographically ordered, zero terms dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliSum {
    num_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl PauliSum {
    pub fn new(num_qubits: usize, terms: impl IntoIterator<Item = PauliTerm>) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::InvalidArgument("Pauli sum needs at least one qubit".into()));
        }
        let mut merged: BTreeMap<Vec<Pauli>, f64> = BTreeMap::new();
        for t in terms {
            if t.num_qubits() != num_qubits {
                return Err(Error::SizeMismatch { expected: num_qubits, got: t.num_qubits() });
            }
            *merged.entry(t.letters).or_insert(0.0) += t.coeff;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(letters, coeff)| PauliTerm { letters, coeff })
            .collect();
        Ok(Self { num_qubits, terms })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            num_qubits: self.num_qubits,
            terms: self.terms.iter().map(|t| t.with_coeff(t.coeff * factor)).collect(),
        }
    }

    /// Parse the line format `<coeff> <letters>`; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(c), Some(l), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse(format!("line {}: expected `<coeff> <letters>`", lineno + 1)));
            };
            let coeff: f64 = c
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad coefficient '{c}'", lineno + 1)))?;
            terms.push(PauliTerm::parse_letters(l, coeff)?);
        }
        let n = terms
            .first()
            .map(PauliTerm::num_qubits)
            .ok_or_else(|| Error::Parse("no terms".into()))?;
        Self::new(n, terms)
    }

    pub fn to_text(&self) -> String {
        self.terms.iter().map(|t| format!("{t}\n")).collect()
    }
}

impl FromStr for PauliSum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// A shot-based estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }
}

/// Per-basis pooled outcome histogram (frame-corrected).
pub(crate) fn pooled_counts(records: &[MeasurementRecord], basis: Basis) -> BTreeMap<u64, u64> {
    let mut pooled = BTreeMap::new();
    for r in records.iter().filter(|r| r.basis == basis) {
        for (outcome, count) in r.corrected_counts() {
            *pooled.entry(outcome).or_insert(0) += count;
        }
    }
    pooled
}

/// Estimate `obs` from counts, with each term's parity divided by `scale(term)`.
///
/// Terms diagonal in the same basis are estimated from the same shots, so
/// their sample covariance is included; separate bases add in quadrature.
pub(crate) fn scaled_estimate(
    obs: &PauliSum,
    records: &[MeasurementRecord],
    mut scale: impl FnMut(&PauliTerm) -> Result<f64>,
) -> Result<Estimate> {
    let mut value = 0.0;
    let mut variance = 0.0;
    let mut by_basis: BTreeMap<Basis, Vec<(u64, f64)>> = BTreeMap::new();
    for t in &obs.terms {
        if t.is_identity() {
            value += t.coeff;
            continue;
        }
        let basis = t.diagonal_basis().ok_or_else(|| Error::Unmeasurable(t.label()))?;
        let (x, z) = t.masks();
        let mask = x | z;
        by_basis.entry(basis).or_default().push((mask, t.coeff / scale(t)?));
    }
    for (basis, terms) in by_basis {
        if !records.iter().any(|r| r.basis == basis) {
            let label = obs
                .terms
                .iter()
                .find(|t| t.diagonal_basis() == Some(basis) && !t.is_identity())
                .map(PauliTerm::label)
                .unwrap_or_default();
            return Err(Error::Unmeasurable(label));
        }
        let counts = pooled_counts(records, basis);
        let shots: u64 = counts.values().sum();
        if shots == 0 {
            return Err(Error::EmptyCounts);
        }
        let (mut s1, mut s2) = (0.0, 0.0);
        for (&outcome, &count) in &counts {
            let v: f64 = terms
                .iter()
                .map(|&(mask, w)| if (outcome & mask).count_ones() % 2 == 0 { w } else { -w })
                .sum();
            s1 += v * count as f64;
            s2 += v * v * count as f64;
        }
        let n = shots as f64;
        let mean = s1 / n;
        let var = (s2 / n - mean * mean).max(0.0);
        value += mean;
        variance += var / n;
    }
    Ok(Estimate::new(value, variance.sqrt()))
}

/// Estimate `⟨obs⟩` from measurement records.
///
/// Z-only terms read Z-basis records and X-only terms read X-basis records;
/// records sharing a basis are pooled after undoing their readout frames.
pub fn expectation_from_counts(obs: &PauliSum, records: &[MeasurementRecord]) -> Result<Estimate> {
    scaled_estimate(obs, records, |_| Ok(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::RecordMeta;

    fn term(s: &str) -> PauliTerm {
        PauliTerm::parse_letters(s, 1.0).unwrap()
    }

    #[test]
    fn single_qubit_products() {
        let (ph, p) = multiply(&term("X"), &term("X")).unwrap();
        assert_eq!((ph, p.label().as_str()), (Phase::PlusOne, "I"));
        let (ph, p) = multiply(&term("X"), &term("Y")).unwrap();
        assert_eq!((ph, p.label().as_str()), (Phase::PlusI, "Z"));
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(multiply(&term("XX"), &term("X")).is_err());
    }

    #[test]
    fn cnot_propagation_rules() {
        let out = conjugate_by_cnot(&term("XI"), 0, 1).unwrap();
        assert_eq!(out.label(), "XX");
        let out = conjugate_by_cnot(&term("IZ"), 0, 1).unwrap();
        assert_eq!(out.label(), "ZZ");
        assert!(conjugate_by_cnot(&term("IZ"), 0, 2).is_err());
        assert!(conjugate_by_cnot(&term("IZ"), 1, 1).is_err());
    }

    #[test]
    fn sum_is_merged_and_sorted() {
        let s = PauliSum::new(
            2,
            vec![
                PauliTerm::parse_letters("ZZ", 1.0).unwrap(),
                PauliTerm::parse_letters("XI", 0.5).unwrap(),
                PauliTerm::parse_letters("ZZ", -0.25).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(s.to_text(), "0.5 XI\n0.75 ZZ\n");
        assert_eq!(PauliSum::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn text_format_errors() {
        assert!(PauliSum::parse("1.0 ZQ").is_err());
        assert!(PauliSum::parse("abc ZZ").is_err());
        assert!(PauliSum::parse("1.0 ZZ\n1.0 Z").is_err());
    }

    fn record(basis: Basis, counts: &[(u64, u64)]) -> MeasurementRecord {
        MeasurementRecord::new(basis, counts.iter().copied().collect(), RecordMeta::default())
    }

    #[test]
    fn aligned_parity() {
        let obs = PauliSum::parse("1.0 ZZ").unwrap();
        let est = expectation_from_counts(&obs, &[record(Basis::Z, &[(0b00, 1000)])]).unwrap();
        assert_eq!((est.value, est.stderr), (1.0, 0.0));
    }

    #[test]
    fn balanced_parity() {
        let obs = PauliSum::parse("1.0 ZZ").unwrap();
        let est =
            expectation_from_counts(&obs, &[record(Basis::Z, &[(0b00, 500), (0b01, 500)])]).unwrap();
        assert!(est.value.abs() < 1e-15);
        assert!(est.stderr > 0.0);
        assert!((est.stderr - (1.0f64 / 1000.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mixed_terms_and_missing_bases() {
        let zz = [record(Basis::Z, &[(0, 10)])];
        assert!(matches!(
            expectation_from_counts(&PauliSum::parse("1.0 XZ").unwrap(), &zz),
            Err(Error::Unmeasurable(_))
        ));
        assert!(matches!(
            expectation_from_counts(&PauliSum::parse("1.0 XX").unwrap(), &zz),
            Err(Error::Unmeasurable(_))
        ));
        let empty = [record(Basis::Z, &[])];
        assert!(matches!(
            expectation_from_counts(&PauliSum::parse("1.0 ZZ").unwrap(), &empty),
            Err(Error::EmptyCounts)
        ));
    }

    #[test]
    fn frames_are_undone_before_pooling() {
        let obs = PauliSum::parse("1.0 ZI").unwrap();
        let mut r = record(Basis::Z, &[(0b01, 100)]);
        r.readout_mask = 0b01;
        let est = expectation_from_counts(&obs, &[r]).unwrap();
        assert_eq!(est.value, 1.0);
    }
}
