//! Supernatural numbers, the rational groups ℚ(a) and the homotopy groups of
//! the unitary group of a UHF algebra.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SupernaturalError {
    #[error("type sequence is empty")]
    EmptySequence,
    #[error("type {value} at position {index} is below 2")]
    TooSmall { index: usize, value: u64 },
    #[error("{prev} does not divide {next} (position {index})")]
    Divisibility { index: usize, prev: u64, next: u64 },
    #[error("tail ratio must be at least 2, got {0}")]
    BadTail(u64),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("cannot parse {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exponent {
    Finite(u64),
    Infinite,
}

impl Exponent {
    fn add(self, other: Self) -> Self {
        match (self, other) {
            (Exponent::Finite(a), Exponent::Finite(b)) => Exponent::Finite(a + b),
            _ => Exponent::Infinite,
        }
    }

    fn is_zero(self) -> bool {
        self == Exponent::Finite(0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(e) => write!(f, "{e}"),
            Exponent::Infinite => f.write_str("∞"),
        }
    }
}

pub fn is_prime(n: u64) -> bool {
    n >= 2 && matches!(factorize(n).as_slice(), [(_, 1)])
}

/// Prime factorization by trial division, ascending primes.
pub fn factorize(mut n: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut push = |p: u64, n: &mut u64| {
        let mut e = 0;
        while (*n).is_multiple_of(p) {
            *n /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
    };
    push(2, &mut n);
    push(3, &mut n);
    let mut p: u64 = 5;
    while p.checked_mul(p).is_some_and(|sq| sq <= n) {
        push(p, &mut n);
        push(p + 2, &mut n);
        p += 6;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Formal product ∏ p^{a_p} with a_p ∈ ℕ ∪ {∞}; absent primes have exponent 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupernaturalNumber {
    exponents: BTreeMap<u64, Exponent>,
}

impl SupernaturalNumber {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn from_natural(n: u64) -> Self {
        let mut out = Self::one();
        for (p, e) in factorize(n.max(1)) {
            out.exponents.insert(p, Exponent::Finite(e));
        }
        out
    }

    pub fn prime_power(p: u64, e: Exponent) -> Result<Self, SupernaturalError> {
        if !is_prime(p) {
            return Err(SupernaturalError::NotPrime(p));
        }
        let mut out = Self::one();
        if !e.is_zero() {
            out.exponents.insert(p, e);
        }
        Ok(out)
    }

    /// p^∞ for every prime p dividing n.
    pub fn infinite_part(n: u64) -> Self {
        Self {
            exponents: factorize(n.max(1))
                .into_iter()
                .map(|(p, _)| (p, Exponent::Infinite))
                .collect(),
        }
    }

    pub fn exponent(&self, p: u64) -> Exponent {
        self.exponents
            .get(&p)
            .copied()
            .unwrap_or(Exponent::Finite(0))
    }

    pub fn exponents(&self) -> &BTreeMap<u64, Exponent> {
        &self.exponents
    }

    pub fn infinite_primes(&self) -> BTreeSet<u64> {
        self.exponents
            .iter()
            .filter(|(_, e)| **e == Exponent::Infinite)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.infinite_primes().is_empty()
    }

    /// Type of the UHF algebra ⊗ M_{n_j}-limit with the given divisibility
    /// chain. `tail = Some(r)` continues the chain as n_last·r^j forever.
    pub fn from_type_sequence(ns: &[u64], tail: Option<u64>) -> Result<Self, SupernaturalError> {
        let Some(&last) = ns.last() else {
            return Err(SupernaturalError::EmptySequence);
        };
        for (index, &value) in ns.iter().enumerate() {
            if value < 2 {
                return Err(SupernaturalError::TooSmall { index, value });
            }
        }
        for (index, w) in ns.windows(2).enumerate() {
            if w[1] % w[0] != 0 {
                return Err(SupernaturalError::Divisibility {
                    index: index + 1,
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        // Along a divisibility chain every exponent is nondecreasing, so the
        // supremum of the finite part is attained at the last entry.
        let mut out = Self::from_natural(last);
        if let Some(r) = tail {
            if r < 2 {
                return Err(SupernaturalError::BadTail(r));
            }
            out = out.mul(&Self::infinite_part(r));
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut exponents = self.exponents.clone();
        for (&p, &e) in &other.exponents {
            let entry = exponents.entry(p).or_insert(Exponent::Finite(0));
            *entry = entry.add(e);
        }
        Self { exponents }
    }

    /// Whether q ∈ ℚ(a) = ⋃ n⁻¹ℤ over naturals n dividing a.
    pub fn q_contains(&self, q: &Rational64) -> bool {
        let den = q.denom().unsigned_abs();
        factorize(den)
            .into_iter()
            .all(|(p, e)| self.exponent(p) >= Exponent::Finite(e))
    }

    /// Naturals (c, d) with a·c = b·d when they exist. Since both numbers are
    /// finitely supported, this holds iff their infinite primes agree.
    pub fn iso_equivalent(&self, other: &Self) -> Option<(BigUint, BigUint)> {
        if self.infinite_primes() != other.infinite_primes() {
            return None;
        }
        let mut c = BigUint::from(1u32);
        let mut d = BigUint::from(1u32);
        let primes: BTreeSet<u64> = self
            .exponents
            .keys()
            .chain(other.exponents.keys())
            .copied()
            .collect();
        for p in primes {
            if let (Exponent::Finite(a), Exponent::Finite(b)) =
                (self.exponent(p), other.exponent(p))
            {
                let base = BigUint::from(p);
                if a < b {
                    c *= base.pow((b - a) as u32);
                } else if b < a {
                    d *= base.pow((a - b) as u32);
                }
            }
        }
        Some((c, d))
    }
}

impl fmt::Display for SupernaturalNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponents.is_empty() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self
            .exponents
            .iter()
            .map(|(p, e)| match e {
                Exponent::Finite(1) => p.to_string(),
                _ => format!("{p}^{e}"),
            })
            .collect();
        f.write_str(&parts.join("·"))
    }
}

impl FromStr for SupernaturalNumber {
    type Err = SupernaturalError;

    /// Accepts products such as `2^inf*3`, `2^∞·3^2`, `12` or `1`; a
    /// composite base raised to ∞ sets each of its primes to ∞.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| SupernaturalError::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let text = s.trim();
        if text.is_empty() {
            return Err(err("empty"));
        }
        let mut out = Self::one();
        for factor in text.split(['*', '·', '.']) {
            let factor = factor.trim();
            let (base, exp) = match factor.split_once('^') {
                Some((b, e)) => (b.trim(), Some(e.trim())),
                None => (factor, None),
            };
            let base: u64 = base.parse().map_err(|_| err("bad base"))?;
            if base == 0 {
                return Err(err("zero base"));
            }
            let term = match exp {
                None => Self::from_natural(base),
                Some("inf" | "∞" | "oo") => Self::infinite_part(base),
                Some(e) => {
                    let e: u64 = e.parse().map_err(|_| err("bad exponent"))?;
                    let mut t = Self::one();
                    for (p, k) in factorize(base) {
                        if k * e > 0 {
                            t.exponents.insert(p, Exponent::Finite(k * e));
                        }
                    }
                    t
                }
            };
            out = out.mul(&term);
        }
        Ok(out)
    }
}

/// Groups appearing in the homotopy table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Trivial,
    Rationals(SupernaturalNumber),
    IntegersTimesRationals(SupernaturalNumber),
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Trivial => f.write_str("0"),
            Group::Rationals(a) => write!(f, "ℚ({a})"),
            Group::IntegersTimesRationals(a) => write!(f, "ℤ×ℚ({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomotopyRow {
    pub k: usize,
    /// π_k of the unitary group U(𝔄).
    pub unitary: Group,
    /// π_k of the isotropy group U_ω(𝔄) of the product state.
    pub isotropy: Group,
}

/// π_k(U(𝔄)) and π_k(U_ω(𝔄)) for 1 ≤ k ≤ k_max, with 𝔄 of type a.
pub fn homotopy_table(a: &SupernaturalNumber, k_max: usize) -> Vec<HomotopyRow> {
    (1..=k_max)
        .map(|k| {
            let (unitary, isotropy) = if k % 2 == 0 {
                (Group::Trivial, Group::Trivial)
            } else if k == 1 {
                (
                    Group::Rationals(a.clone()),
                    Group::IntegersTimesRationals(a.clone()),
                )
            } else {
                (Group::Rationals(a.clone()), Group::Rationals(a.clone()))
            };
            HomotopyRow {
                k,
                unitary,
                isotropy,
            }
        })
        .collect()
}
