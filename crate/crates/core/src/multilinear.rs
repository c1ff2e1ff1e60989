//! Exterior forms on `R^n` (`n <= 9`), endomorphisms acting on them as
//! derivations and by pullback, and the metric operations (inner product,
//! Hodge star) on the exterior algebra.
//!
//! Indices are 1-based throughout the public API: `e^{127}` is
//! `MultiIndex::new(&[1, 2, 7])` and prints as `127`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Deref, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 9;

fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

/// A strictly increasing tuple of indices, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex(u16);

impl MultiIndex {
    pub const EMPTY: MultiIndex = MultiIndex(0);

    /// Builds a multi-index from strictly increasing 1-based indices.
    pub fn new(indices: &[usize]) -> Result<Self> {
        let mut bits = 0u16;
        let mut last = 0;
        for &i in indices {
            if i == 0 || i > MAX_DIM || i <= last {
                return Err(Error::InvalidIndex(format!("{indices:?}")));
            }
            bits |= 1 << (i - 1);
            last = i;
        }
        Ok(MultiIndex(bits))
    }

    /// Sorts arbitrary 1-based indices. Returns the sign of the sorting
    /// permutation, or `None` when an index repeats.
    pub fn sorted(indices: &[usize]) -> Result<Option<(f64, Self)>> {
        let mut bits = 0u16;
        let mut sign = 1.0;
        for &i in indices {
            if i == 0 || i > MAX_DIM {
                return Err(Error::InvalidIndex(format!("{indices:?}")));
            }
            let bit = 1u16 << (i - 1);
            if bits & bit != 0 {
                return Ok(None);
            }
            if (bits >> i).count_ones() % 2 == 1 {
                sign = -sign;
            }
            bits |= bit;
        }
        Ok(Some((sign, MultiIndex(bits))))
    }

    /// `{1, ..., dim}`.
    pub fn full(dim: usize) -> Self {
        MultiIndex(((1u32 << dim) - 1) as u16)
    }

    pub fn from_bits(bits: u16) -> Self {
        MultiIndex(bits)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn degree(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, i: usize) -> bool {
        i >= 1 && i <= MAX_DIM && self.0 & (1 << (i - 1)) != 0
    }

    /// Largest index, or 0 for the empty multi-index.
    pub fn max_index(self) -> usize {
        16 - self.0.leading_zeros() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (1..=MAX_DIM).filter(move |&i| self.contains(i))
    }

    /// 0-based positions, ascending.
    pub(crate) fn slots(self) -> impl Iterator<Item = usize> {
        (0..MAX_DIM).filter(move |&i| self.0 & (1 << i) != 0)
    }

    pub fn complement(self, dim: usize) -> Self {
        MultiIndex(Self::full(dim).0 & !self.0)
    }

    pub fn is_disjoint(self, other: Self) -> bool {
        self.0 & other.0 == 0
    }

    /// Sign of `e^self ^ e^other` relative to `e^{self u other}`, or `None`
    /// when the two overlap.
    pub fn wedge_sign(self, other: Self) -> Option<f64> {
        if !self.is_disjoint(other) {
            return None;
        }
        let mut swaps = 0;
        for j in other.slots() {
            swaps += (self.0 >> (j + 1)).count_ones();
        }
        Some(if swaps % 2 == 0 { 1.0 } else { -1.0 })
    }

    pub fn union(self, other: Self) -> Self {
        MultiIndex(self.0 | other.0)
    }

    /// All multi-indices of the given degree in `{1..dim}`, lexicographically.
    pub fn all(dim: usize, degree: usize) -> Vec<MultiIndex> {
        fn rec(start: usize, dim: usize, left: usize, acc: u16, out: &mut Vec<MultiIndex>) {
            if left == 0 {
                out.push(MultiIndex(acc));
                return;
            }
            for i in start..dim {
                if dim - i < left {
                    break;
                }
                rec(i + 1, dim, left - 1, acc | (1 << i), out);
            }
        }
        let mut out = Vec::new();
        if degree <= dim {
            rec(0, dim, degree, 0, &mut out);
        }
        out
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        let diff = self.0 ^ other.0;
        if diff == 0 {
            return Ordering::Equal;
        }
        let low = diff & diff.wrapping_neg();
        let above = !((low << 1).wrapping_sub(1));
        let (owner, rival) = if self.0 & low != 0 {
            (Ordering::Less, other.0)
        } else {
            (Ordering::Greater, self.0)
        };
        if rival & above != 0 {
            owner
        } else {
            owner.reverse()
        }
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in self.iter() {
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{self}")
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as usize)
                    .ok_or_else(|| Error::InvalidIndex(s.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        MultiIndex::new(&digits).map_err(|_| Error::InvalidIndex(s.to_string()))
    }
}

/// Determinant of the submatrix of `m` on the given rows and columns.
pub(crate) fn minor(m: &DMatrix<f64>, rows: MultiIndex, cols: MultiIndex) -> f64 {
    let k = rows.degree();
    debug_assert_eq!(k, cols.degree());
    let mut a = [[0.0f64; MAX_DIM]; MAX_DIM];
    for (r, i) in rows.slots().enumerate() {
        for (c, j) in cols.slots().enumerate() {
            a[r][c] = m[(i, j)];
        }
    }
    match k {
        0 => 1.0,
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        _ => {
            let mut det = 1.0;
            for col in 0..k {
                let pivot = (col..k)
                    .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                    .unwrap();
                if a[pivot][col] == 0.0 {
                    return 0.0;
                }
                if pivot != col {
                    a.swap(pivot, col);
                    det = -det;
                }
                det *= a[col][col];
                for r in col + 1..k {
                    let factor = a[r][col] / a[col][col];
                    for c in col + 1..k {
                        a[r][c] -= factor * a[col][c];
                    }
                }
            }
            det
        }
    }
}

/// A homogeneous exterior form with real coefficients on `R^dim`.
///
/// Exactly-zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct KForm {
    dim: usize,
    degree: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl KForm {
    /// # Panics
    /// If `dim` is not in `1..=9` or `degree > dim`.
    pub fn zero(dim: usize, degree: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "unsupported dimension {dim}");
        assert!(degree <= dim, "degree {degree} exceeds dimension {dim}");
        KForm {
            dim,
            degree,
            terms: BTreeMap::new(),
        }
    }

    pub fn try_zero(dim: usize, degree: usize) -> Result<Self> {
        check_dim(dim)?;
        if degree > dim {
            return Err(Error::DegreeMismatch {
                expected: dim,
                found: degree,
            });
        }
        Ok(Self::zero(dim, degree))
    }

    pub fn scalar(dim: usize, c: f64) -> Self {
        let mut f = Self::zero(dim, 0);
        f.add_term(MultiIndex::EMPTY, c);
        f
    }

    /// `c e^{i_1 ... i_k}` for arbitrary (possibly unsorted) 1-based indices.
    pub fn monomial(dim: usize, indices: &[usize], c: f64) -> Result<Self> {
        let mut f = Self::try_zero(dim, indices.len())?;
        if indices.iter().any(|&i| i > dim) {
            return Err(Error::InvalidIndex(format!("{indices:?}")));
        }
        if let Some((sign, mi)) = MultiIndex::sorted(indices)? {
            f.add_term(mi, sign * c);
        }
        Ok(f)
    }

    /// The coordinate 1-form `e^i`.
    pub fn covector(dim: usize, i: usize) -> Result<Self> {
        Self::monomial(dim, &[i], 1.0)
    }

    /// `e^{1...dim}`.
    pub fn volume(dim: usize) -> Self {
        let mut f = Self::zero(dim, dim);
        f.add_term(MultiIndex::full(dim), 1.0);
        f
    }

    /// Parses expressions like `e127 + e347 - 2e135 + 0.5*e246`.
    pub fn parse(dim: usize, expr: &str) -> Result<Self> {
        check_dim(dim)?;
        let bad = |msg: &str| Error::Parse(format!("{msg} in {expr:?}"));
        let chars: Vec<char> = expr.chars().filter(|c| !c.is_whitespace()).collect();
        if chars.is_empty() {
            return Err(bad("empty expression"));
        }
        let mut pos = 0;
        let mut acc: Option<KForm> = None;
        while pos < chars.len() {
            let mut sign = 1.0;
            if pos > 0 || matches!(chars[pos], '+' | '-') {
                match chars.get(pos) {
                    Some('+') => pos += 1,
                    Some('-') => {
                        sign = -1.0;
                        pos += 1;
                    }
                    _ => return Err(bad("expected '+' or '-'")),
                }
            }
            let start = pos;
            pos = scan_number(&chars, pos);
            let coeff = if pos > start {
                let text: String = chars[start..pos].iter().collect();
                text.parse::<f64>()
                    .map_err(|_| bad(&format!("bad coefficient {text:?}")))?
            } else {
                1.0
            };
            if chars.get(pos) == Some(&'*') {
                pos += 1;
            }
            let term = if chars.get(pos) == Some(&'e') {
                pos += 1;
                let braced = chars.get(pos) == Some(&'^');
                if braced {
                    pos += 1;
                    if chars.get(pos) != Some(&'{') {
                        return Err(bad("expected '{'"));
                    }
                    pos += 1;
                }
                let idx_start = pos;
                while pos < chars.len() && chars[pos].is_ascii_digit() {
                    pos += 1;
                }
                if braced {
                    if chars.get(pos) != Some(&'}') {
                        return Err(bad("expected '}'"));
                    }
                    pos += 1;
                }
                let idx: Vec<usize> = chars[idx_start..pos]
                    .iter()
                    .filter_map(|c| c.to_digit(10).map(|d| d as usize))
                    .collect();
                if idx.is_empty() {
                    return Err(bad("missing indices"));
                }
                if idx.contains(&0) || idx.iter().any(|&i| i > dim) {
                    return Err(bad("index out of range"));
                }
                KForm::monomial(dim, &idx, sign * coeff)?
            } else if pos > start {
                KForm::scalar(dim, sign * coeff)
            } else {
                return Err(bad("expected a term"));
            };
            acc = Some(match acc {
                None => term,
                Some(a) => a.try_add(&term).map_err(|_| bad("mixed degrees"))?,
            });
        }
        if !coeff_finite(acc.as_ref().unwrap()) {
            return Err(bad("non-finite coefficient"));
        }
        Ok(acc.unwrap())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, mi: MultiIndex) -> f64 {
        self.terms.get(&mi).copied().unwrap_or(0.0)
    }

    /// Coefficient of `e^{indices}` with the sign of the sorting permutation.
    pub fn coefficient(&self, indices: &[usize]) -> Result<f64> {
        Ok(match MultiIndex::sorted(indices)? {
            Some((sign, mi)) => sign * self.get(mi),
            None => 0.0,
        })
    }

    /// Coefficient of `e^{1...dim}`.
    pub fn top(&self) -> f64 {
        self.get(MultiIndex::full(self.dim))
    }

    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        self.terms.iter().map(|(&k, &v)| (k, v))
    }

    /// Adds `c e^mi`.
    ///
    /// # Panics
    /// If `mi` has the wrong degree or uses an index above `dim`.
    pub fn add_term(&mut self, mi: MultiIndex, c: f64) {
        assert_eq!(mi.degree(), self.degree, "degree mismatch in add_term");
        assert!(mi.max_index() <= self.dim, "index out of range in add_term");
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(mi).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.remove(&mi);
        }
    }

    pub fn set(&mut self, mi: MultiIndex, c: f64) {
        self.terms.remove(&mi);
        self.add_term(mi, c);
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coeff_norm(&self) -> f64 {
        self.terms.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Drops coefficients with `|c| <= tol`.
    pub fn chop(mut self, tol: f64) -> Self {
        self.terms.retain(|_, v| v.abs() > tol);
        self
    }

    pub fn map_coefficients(&self, f: impl Fn(MultiIndex, f64) -> f64) -> Self {
        let mut out = Self::zero(self.dim, self.degree);
        for (mi, c) in self.terms() {
            out.add_term(mi, f(mi, c));
        }
        out
    }

    fn same_shape(&self, other: &KForm) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &KForm) -> Result<KForm> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (mi, c) in other.terms() {
            out.add_term(mi, c);
        }
        Ok(out)
    }

    /// Largest coefficient of `self - other`.
    pub fn distance(&self, other: &KForm) -> f64 {
        (self - other).max_abs()
    }

    pub fn try_wedge(&self, other: &KForm) -> Result<KForm> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let degree = self.degree + other.degree;
        let mut out = KForm::zero(self.dim, degree.min(self.dim));
        if degree > self.dim {
            return Ok(out);
        }
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                if let Some(sign) = a.wedge_sign(b) {
                    out.add_term(a.union(b), sign * ca * cb);
                }
            }
        }
        Ok(out)
    }

    /// # Panics
    /// On dimension mismatch; see [`KForm::try_wedge`].
    pub fn wedge(&self, other: &KForm) -> KForm {
        self.try_wedge(other).expect("wedge of forms on different spaces")
    }

    /// Interior product `v _| self`.
    pub fn contract(&self, v: &DVector<f64>) -> Result<KForm> {
        if self.degree == 0 {
            return Err(Error::ContractScalar);
        }
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        let mut out = KForm::zero(self.dim, self.degree - 1);
        for (mi, c) in self.terms() {
            for (pos, slot) in mi.slots().enumerate() {
                let x = v[slot];
                if x != 0.0 {
                    let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                    out.add_term(MultiIndex(mi.0 & !(1 << slot)), sign * x * c);
                }
            }
        }
        Ok(out)
    }

    /// Interior product with the basis vector `e_i` (1-based).
    pub fn contract_basis(&self, i: usize) -> Result<KForm> {
        if i == 0 || i > self.dim {
            return Err(Error::InvalidIndex(i.to_string()));
        }
        let mut v = DVector::zeros(self.dim);
        v[i - 1] = 1.0;
        self.contract(&v)
    }

    /// The derivation action `theta(A)`, determined on 1-forms by
    /// `theta(A) e^i = -sum_j A_ij e^j`, i.e. `-A^T` in the dual basis.
    pub fn try_theta(&self, a: &Endomorphism) -> Result<KForm> {
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: a.dim(),
            });
        }
        let mut out = KForm::zero(self.dim, self.degree);
        for (mi, c) in self.terms() {
            for i in mi.slots() {
                for j in 0..self.dim {
                    let aij = a[(i, j)];
                    if aij == 0.0 {
                        continue;
                    }
                    if i == j {
                        out.add_term(mi, -aij * c);
                        continue;
                    }
                    if mi.0 & (1 << j) != 0 {
                        continue;
                    }
                    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                    let between = mi.0 & (((1u16 << hi) - 1) & !((1u16 << (lo + 1)) - 1));
                    let sign = if between.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    let target = MultiIndex((mi.0 & !(1 << i)) | (1 << j));
                    out.add_term(target, -sign * aij * c);
                }
            }
        }
        Ok(out)
    }

    /// # Panics
    /// On dimension mismatch; see [`KForm::try_theta`].
    pub fn theta(&self, a: &Endomorphism) -> KForm {
        self.try_theta(a).expect("theta with mismatched dimension")
    }

    /// Pullback `P^* self`, with `P^* e^i = sum_j P_ij e^j`.
    pub fn pullback(&self, p: &Endomorphism) -> Result<KForm> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: p.dim(),
            });
        }
        let hadamard: f64 = p.column_iter().map(|c| c.norm()).product();
        if !(p.determinant().abs() > 1e-12 * hadamard) {
            return Err(Error::Singular);
        }
        let mut out = KForm::zero(self.dim, self.degree);
        let targets = MultiIndex::all(self.dim, self.degree);
        for (mi, c) in self.terms() {
            for &t in &targets {
                let m = minor(p, mi, t);
                if m != 0.0 {
                    out.add_term(t, c * m);
                }
            }
        }
        Ok(out)
    }

    /// Coefficients in the lexicographic basis of the degree.
    pub fn to_vector(&self) -> DVector<f64> {
        let basis = MultiIndex::all(self.dim, self.degree);
        DVector::from_iterator(basis.len(), basis.iter().map(|&mi| self.get(mi)))
    }

    pub fn from_vector(dim: usize, degree: usize, v: &[f64]) -> Result<Self> {
        let basis = MultiIndex::all(dim, degree);
        let mut out = Self::try_zero(dim, degree)?;
        if basis.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: v.len(),
            });
        }
        for (mi, &c) in basis.into_iter().zip(v) {
            out.add_term(mi, c);
        }
        Ok(out)
    }

    /// The same form viewed on `R^dim` for a larger `dim`.
    pub fn embed(&self, dim: usize) -> Result<KForm> {
        check_dim(dim)?;
        if dim < self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: dim,
            });
        }
        Ok(KForm {
            dim,
            degree: self.degree,
            terms: self.terms.clone(),
        })
    }

    /// The same form on `R^dim` for a smaller `dim`.
    pub fn restrict(&self, dim: usize) -> Result<KForm> {
        check_dim(dim)?;
        if self.degree > dim || self.terms.keys().any(|mi| mi.max_index() > dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim,
            });
        }
        Ok(KForm {
            dim,
            degree: self.degree,
            terms: self.terms.clone(),
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forms always serialize")
    }
}

/// End of the numeric literal starting at `pos`. An exponent marker is only
/// taken when followed by a sign, so `2e13` reads as `2 * e^{13}`.
fn scan_number(chars: &[char], mut pos: usize) -> usize {
    let start = pos;
    while pos < chars.len() && (chars[pos].is_ascii_digit() || chars[pos] == '.') {
        pos += 1;
    }
    if pos > start
        && matches!(chars.get(pos), Some('e' | 'E'))
        && matches!(chars.get(pos + 1), Some('+' | '-'))
        && chars.get(pos + 2).is_some_and(|c| c.is_ascii_digit())
    {
        pos += 2;
        while pos < chars.len() && chars[pos].is_ascii_digit() {
            pos += 1;
        }
    }
    pos
}

fn coeff_finite(f: &KForm) -> bool {
    f.terms.values().all(|c| c.is_finite())
}

impl fmt::Display for KForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (mi, c)) in self.terms().enumerate() {
            let sign = if c < 0.0 { "-" } else if n > 0 { "+" } else { "" };
            let sep = if n > 0 { " " } else { "" };
            let mag = c.abs();
            let lead = if n > 0 { format!("{sep}{sign} ") } else { sign.to_string() };
            if mi.degree() == 0 {
                write!(f, "{lead}{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{lead}e{mi}")?;
            } else {
                write!(f, "{lead}{mag}e{mi}")?;
            }
        }
        Ok(())
    }
}

impl Serialize for KForm {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.terms.len() + 2))?;
        map.serialize_entry("dim", &self.dim)?;
        map.serialize_entry("degree", &self.degree)?;
        for (mi, c) in self.terms() {
            map.serialize_entry(&mi.to_string(), &c)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for KForm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(deserializer)?;
        let int = |key: &str| -> std::result::Result<usize, D::Error> {
            let v = *raw
                .get(key)
                .ok_or_else(|| de::Error::missing_field(if key == "dim" { "dim" } else { "degree" }))?;
            if v.fract() != 0.0 || !(0.0..=MAX_DIM as f64).contains(&v) {
                return Err(de::Error::custom(format!("invalid {key}: {v}")));
            }
            Ok(v as usize)
        };
        let dim = int("dim")?;
        let degree = int("degree")?;
        let mut out = KForm::try_zero(dim, degree).map_err(de::Error::custom)?;
        for (key, &c) in &raw {
            if key == "dim" || key == "degree" {
                continue;
            }
            let mi: MultiIndex = key.parse().map_err(de::Error::custom)?;
            if mi.degree() != degree || mi.max_index() > dim {
                return Err(de::Error::custom(format!("index {key} does not fit dim {dim}, degree {degree}")));
            }
            if !c.is_finite() {
                return Err(de::Error::custom(format!("non-finite coefficient at {key}")));
            }
            out.add_term(mi, c);
        }
        Ok(out)
    }
}

impl AddAssign<&KForm> for KForm {
    fn add_assign(&mut self, rhs: &KForm) {
        self.same_shape(rhs).expect("adding forms of different shape");
        for (mi, c) in rhs.terms() {
            self.add_term(mi, c);
        }
    }
}

impl SubAssign<&KForm> for KForm {
    fn sub_assign(&mut self, rhs: &KForm) {
        self.same_shape(rhs).expect("subtracting forms of different shape");
        for (mi, c) in rhs.terms() {
            self.add_term(mi, -c);
        }
    }
}

impl Add<&KForm> for &KForm {
    type Output = KForm;
    fn add(self, rhs: &KForm) -> KForm {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&KForm> for &KForm {
    type Output = KForm;
    fn sub(self, rhs: &KForm) -> KForm {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Add for KForm {
    type Output = KForm;
    fn add(mut self, rhs: KForm) -> KForm {
        self += &rhs;
        self
    }
}

impl Sub for KForm {
    type Output = KForm;
    fn sub(mut self, rhs: KForm) -> KForm {
        self -= &rhs;
        self
    }
}

impl Mul<f64> for &KForm {
    type Output = KForm;
    fn mul(self, s: f64) -> KForm {
        self.map_coefficients(|_, c| s * c)
    }
}

impl Mul<f64> for KForm {
    type Output = KForm;
    fn mul(self, s: f64) -> KForm {
        &self * s
    }
}

impl Mul<&KForm> for f64 {
    type Output = KForm;
    fn mul(self, f: &KForm) -> KForm {
        f * self
    }
}

impl Mul<KForm> for f64 {
    type Output = KForm;
    fn mul(self, f: KForm) -> KForm {
        &f * self
    }
}

impl Neg for &KForm {
    type Output = KForm;
    fn neg(self) -> KForm {
        self * -1.0
    }
}

impl Neg for KForm {
    type Output = KForm;
    fn neg(self) -> KForm {
        &self * -1.0
    }
}

/// A linear endomorphism of `R^n`; column `j` is the image of `e_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Endomorphism(DMatrix<f64>);

impl Endomorphism {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        check_dim(m.nrows())?;
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("non-finite matrix entry".into()));
        }
        Ok(Endomorphism(m))
    }

    /// # Panics
    /// If `data.len() != n * n` or `n` is unsupported.
    pub fn from_row_slice(n: usize, data: &[f64]) -> Self {
        Self::new(DMatrix::from_row_slice(n, n, data)).expect("invalid endomorphism")
    }

    pub fn identity(n: usize) -> Self {
        Endomorphism(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Endomorphism(DMatrix::zeros(n, n))
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Endomorphism(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn commutator(&self, other: &Endomorphism) -> Endomorphism {
        Endomorphism(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn transpose(&self) -> Endomorphism {
        Endomorphism(self.0.transpose())
    }

    /// Adjoint with respect to `h`: `H^{-1} A^T H`.
    pub fn adjoint(&self, h: &Metric) -> Endomorphism {
        Endomorphism(h.inverse() * self.0.transpose() * h.matrix())
    }

    /// Frobenius inner product `tr(X^* Y)` for the metric `h`.
    pub fn inner(&self, other: &Endomorphism, h: &Metric) -> f64 {
        (self.adjoint(h).0 * &other.0).trace()
    }

    /// Frobenius norm for the metric `h`.
    pub fn norm_h(&self, h: &Metric) -> f64 {
        self.inner(self, h).max(0.0).sqrt()
    }

    /// Block-diagonal extension by zeros to `R^n`.
    pub fn embed(&self, n: usize) -> Endomorphism {
        let mut m = DMatrix::zeros(n, n);
        let k = self.dim().min(n);
        m.view_mut((0, 0), (k, k)).copy_from(&self.0.view((0, 0), (k, k)));
        Endomorphism(m)
    }

    /// Top-left `n x n` block.
    pub fn restrict(&self, n: usize) -> Endomorphism {
        Endomorphism(self.0.view((0, 0), (n, n)).into_owned())
    }

    pub fn try_inverse(&self) -> Result<Endomorphism> {
        self.0.clone().try_inverse().map(Endomorphism).ok_or(Error::Singular)
    }

    pub fn exp(&self) -> Endomorphism {
        Endomorphism(self.0.exp())
    }

    /// `P^{-1} self P`.
    pub fn conjugate(&self, p: &Endomorphism) -> Result<Endomorphism> {
        Ok(Endomorphism(p.try_inverse()?.0 * &self.0 * &p.0))
    }
}

impl Serialize for Endomorphism {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = self.0.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Endomorphism {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(de::Error::custom("matrix must be square"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Endomorphism::new(DMatrix::from_row_slice(n, n, &flat)).map_err(de::Error::custom)
    }
}

impl Deref for Endomorphism {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

macro_rules! endo_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&Endomorphism> for &Endomorphism {
            type Output = Endomorphism;
            fn $method(self, rhs: &Endomorphism) -> Endomorphism {
                Endomorphism(&self.0 $op &rhs.0)
            }
        }
        impl $trait for Endomorphism {
            type Output = Endomorphism;
            fn $method(self, rhs: Endomorphism) -> Endomorphism {
                Endomorphism(self.0 $op rhs.0)
            }
        }
        impl $trait<&Endomorphism> for Endomorphism {
            type Output = Endomorphism;
            fn $method(self, rhs: &Endomorphism) -> Endomorphism {
                Endomorphism(self.0 $op &rhs.0)
            }
        }
        impl $trait<Endomorphism> for &Endomorphism {
            type Output = Endomorphism;
            fn $method(self, rhs: Endomorphism) -> Endomorphism {
                Endomorphism(&self.0 $op rhs.0)
            }
        }
    };
}

endo_binop!(Add, add, +);
endo_binop!(Sub, sub, -);
endo_binop!(Mul, mul, *);

impl Mul<f64> for &Endomorphism {
    type Output = Endomorphism;
    fn mul(self, s: f64) -> Endomorphism {
        Endomorphism(&self.0 * s)
    }
}

impl Mul<f64> for Endomorphism {
    type Output = Endomorphism;
    fn mul(self, s: f64) -> Endomorphism {
        Endomorphism(self.0 * s)
    }
}

impl Mul<&Endomorphism> for f64 {
    type Output = Endomorphism;
    fn mul(self, a: &Endomorphism) -> Endomorphism {
        a * self
    }
}

impl Neg for &Endomorphism {
    type Output = Endomorphism;
    fn neg(self) -> Endomorphism {
        Endomorphism(-&self.0)
    }
}

impl Neg for Endomorphism {
    type Output = Endomorphism;
    fn neg(self) -> Endomorphism {
        Endomorphism(-self.0)
    }
}

/// A positive definite inner product on `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    g: DMatrix<f64>,
    inv: DMatrix<f64>,
    det: f64,
}

impl Metric {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::NonPositiveMetric);
        }
        check_dim(g.nrows())?;
        let scale = g.amax().max(f64::MIN_POSITIVE);
        if (&g - g.transpose()).amax() > 1e-10 * scale || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonPositiveMetric);
        }
        let g = (&g + g.transpose()) * 0.5;
        let chol = g.clone().cholesky().ok_or(Error::NonPositiveMetric)?;
        let det = chol.determinant();
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::NonPositiveMetric);
        }
        let inv = chol.inverse();
        Ok(Metric { g, inv, det })
    }

    pub fn euclidean(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is a metric")
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    /// `g(u, v)`.
    pub fn apply(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.g * v)[(0, 0)]
    }

    /// The positively oriented unit volume form `sqrt(det g) e^{1...n}`.
    pub fn volume_form(&self) -> KForm {
        self.det.sqrt() * KForm::volume(self.dim())
    }

    fn check(&self, a: &KForm) -> Result<()> {
        if a.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: a.dim(),
            });
        }
        Ok(())
    }

    /// Induced inner product of two forms of equal degree.
    pub fn inner(&self, a: &KForm, b: &KForm) -> Result<f64> {
        self.check(a)?;
        a.same_shape(b)?;
        let mut sum = 0.0;
        for (i, ca) in a.terms() {
            for (j, cb) in b.terms() {
                sum += ca * cb * minor(&self.inv, i, j);
            }
        }
        Ok(sum)
    }

    pub fn norm(&self, a: &KForm) -> Result<f64> {
        Ok(self.inner(a, a)?.max(0.0).sqrt())
    }

    /// Hodge star determined by `a ^ *b = <a, b> vol`.
    pub fn hodge_star(&self, vol: &KForm, a: &KForm) -> Result<KForm> {
        self.check(a)?;
        self.check(vol)?;
        let n = self.dim();
        if vol.degree() != n || vol.len() > 1 {
            return Err(Error::DegreeMismatch {
                expected: n,
                found: vol.degree(),
            });
        }
        let v = vol.top();
        let norm = v.abs() / self.det.sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::BadVolume(norm));
        }
        let k = a.degree();
        let mut out = KForm::zero(n, n - k);
        for i in MultiIndex::all(n, k) {
            let raised: f64 = a.terms().map(|(j, c)| c * minor(&self.inv, i, j)).sum();
            if raised == 0.0 {
                continue;
            }
            let ic = i.complement(n);
            let sign = i.wedge_sign(ic).unwrap();
            out.add_term(ic, sign * raised * v);
        }
        Ok(out)
    }

    /// Hodge star for the orientation of `e^{1...n}`.
    pub fn star(&self, a: &KForm) -> Result<KForm> {
        self.hodge_star(&self.volume_form(), a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(s: &str) -> MultiIndex {
        s.parse().unwrap()
    }

    #[test]
    fn multi_index_order_is_lexicographic() {
        let mut all = MultiIndex::all(5, 3);
        let strings: Vec<String> = all.iter().map(|m| m.to_string()).collect();
        let mut sorted = strings.clone();
        sorted.sort();
        assert_eq!(strings, sorted);
        all.reverse();
        all.sort();
        assert_eq!(all.iter().map(|m| m.to_string()).collect::<Vec<_>>(), sorted);
        assert!(mi("12") < mi("123"));
        assert!(mi("123") < mi("13"));
        assert!(mi("") < mi("1"));
    }

    #[test]
    fn sorting_sign() {
        assert_eq!(MultiIndex::sorted(&[2, 1]).unwrap(), Some((-1.0, mi("12"))));
        assert_eq!(MultiIndex::sorted(&[3, 1, 2]).unwrap(), Some((1.0, mi("123"))));
        assert_eq!(MultiIndex::sorted(&[2, 2]).unwrap(), None);
        assert!(MultiIndex::new(&[2, 1]).is_err());
        assert!(MultiIndex::new(&[10]).is_err());
    }

    #[test]
    fn wedge_of_covectors() {
        let e = |i| KForm::covector(4, i).unwrap();
        assert_eq!(e(2).wedge(&e(1)), KForm::monomial(4, &[1, 2], -1.0).unwrap());
        assert!(e(3).wedge(&e(3)).is_zero());
        let a = KForm::parse(4, "e12 + e34").unwrap();
        assert_eq!(a.wedge(&a), KForm::parse(4, "2e1234").unwrap());
    }

    #[test]
    fn parser_accepts_common_spellings() {
        let a = KForm::parse(7, "e127 + e347 - 2e135 + 0.5*e^{246} - 1.5e-1e567").unwrap();
        assert_eq!(a.get(mi("127")), 1.0);
        assert_eq!(a.get(mi("135")), -2.0);
        assert_eq!(a.get(mi("246")), 0.5);
        assert_eq!(a.get(mi("567")), -0.15);
        assert_eq!(KForm::parse(3, "e21").unwrap(), KForm::parse(3, "-e12").unwrap());
        for bad in ["", "e", "e12 + e3", "e18", "2x", "e1e2", "+-e1"] {
            assert!(KForm::parse(7, bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn contraction_signs() {
        let a = KForm::parse(3, "e123").unwrap();
        assert_eq!(a.contract_basis(1).unwrap(), KForm::parse(3, "e23").unwrap());
        assert_eq!(a.contract_basis(2).unwrap(), KForm::parse(3, "-e13").unwrap());
        assert_eq!(a.contract_basis(3).unwrap(), KForm::parse(3, "e12").unwrap());
        assert!(matches!(KForm::scalar(3, 1.0).contract_basis(1), Err(Error::ContractScalar)));
    }

    #[test]
    fn theta_on_covectors() {
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 1)] = 2.0;
        let a = Endomorphism::new(m).unwrap();
        let e1 = KForm::covector(3, 1).unwrap();
        assert_eq!(e1.theta(&a), KForm::parse(3, "-2e2").unwrap());
        assert!(KForm::covector(3, 2).unwrap().theta(&a).is_zero());
        let e13 = KForm::parse(3, "e13").unwrap();
        assert_eq!(e13.theta(&a), KForm::parse(3, "-2e23").unwrap());
    }

    #[test]
    fn pullback_is_determinant_on_top_forms() {
        let p = Endomorphism::from_row_slice(3, &[1.0, 2.0, 0.0, 0.5, 1.0, 3.0, -1.0, 0.0, 2.0]);
        let vol = KForm::volume(3);
        assert!((vol.pullback(&p).unwrap().top() - p.determinant()).abs() < 1e-14);
        assert!(matches!(vol.pullback(&Endomorphism::zeros(3)), Err(Error::Singular)));
    }

    #[test]
    fn euclidean_star_in_dimension_three() {
        let g = Metric::euclidean(3);
        let star = |s: &str| g.star(&KForm::parse(3, s).unwrap()).unwrap();
        assert_eq!(star("e1"), KForm::parse(3, "e23").unwrap());
        assert_eq!(star("e2"), KForm::parse(3, "-e13").unwrap());
        assert_eq!(star("e12"), KForm::parse(3, "e3").unwrap());
        let wrong = KForm::parse(3, "2e123").unwrap();
        assert!(matches!(g.hodge_star(&wrong, &KForm::covector(3, 1).unwrap()), Err(Error::BadVolume(_))));
    }

    #[test]
    fn json_round_trip() {
        let a = KForm::parse(7, "e127 + 0.1e347 - 2e135").unwrap();
        let s = a.to_json();
        assert_eq!(KForm::from_json(&s).unwrap(), a);
        assert!(KForm::from_json(r#"{"dim":7,"degree":3,"12":1.0}"#).is_err());
        assert!(KForm::from_json(r#"{"dim":3,"degree":2,"14":1.0}"#).is_err());
        assert!(KForm::from_json(r#"{"degree":2}"#).is_err());
    }
}
