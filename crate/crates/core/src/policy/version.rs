//! Version values and their total order.
//!
//! Every version text is split on `.`; each part is a leading digit run
//! (compared numerically, arbitrary length) followed by a suffix compared
//! lexicographically. Trailing zero parts are ignored, so `1.0` and `1.0.0`
//! denote the same version. Schemes only decide which texts are accepted.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::hash::{Hash, Hasher};
use core::str::FromStr;

use thiserror::Error;

pub const DEFAULT_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VersionError {
    #[error("`{text}` is not a valid {scheme} version")]
    Invalid { text: String, scheme: VersionScheme },
}

/// Version schemes named by the software identification tag standard.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum VersionScheme {
    #[default]
    MultipartNumeric,
    MultipartNumericSuffix,
    AlphaNumeric,
    Decimal,
    Semver,
    Unknown,
    Other(String),
}

impl VersionScheme {
    pub fn as_str(&self) -> &str {
        match self {
            VersionScheme::MultipartNumeric => "multipartnumeric",
            VersionScheme::MultipartNumericSuffix => "multipartnumeric+suffix",
            VersionScheme::AlphaNumeric => "alphanumeric",
            VersionScheme::Decimal => "decimal",
            VersionScheme::Semver => "semver",
            VersionScheme::Unknown => "unknown",
            VersionScheme::Other(s) => s,
        }
    }
}

impl fmt::Display for VersionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VersionScheme {
    type Err = core::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "multipartnumeric" => VersionScheme::MultipartNumeric,
            "multipartnumeric+suffix" => VersionScheme::MultipartNumericSuffix,
            "alphanumeric" => VersionScheme::AlphaNumeric,
            "decimal" => VersionScheme::Decimal,
            "semver" => VersionScheme::Semver,
            "unknown" => VersionScheme::Unknown,
            _ => VersionScheme::Other(s.into()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Part {
    /// Digit run with leading zeros stripped; empty means zero.
    digits: String,
    suffix: String,
}

impl Part {
    fn is_zero(&self) -> bool {
        self.digits.is_empty() && self.suffix.is_empty()
    }
}

impl Ord for Part {
    fn cmp(&self, other: &Self) -> Ordering {
        self.digits
            .len()
            .cmp(&other.digits.len())
            .then_with(|| self.digits.cmp(&other.digits))
            .then_with(|| self.suffix.cmp(&other.suffix))
    }
}

impl PartialOrd for Part {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A version text with its precomputed order key.
#[derive(Clone)]
pub struct Version {
    text: String,
    key: Vec<Part>,
}

impl Version {
    /// Accepts any non-empty text under the generic ordering.
    pub fn new(text: &str) -> Result<Self, VersionError> {
        Self::parse(text, &VersionScheme::Unknown)
    }

    pub fn parse(text: &str, scheme: &VersionScheme) -> Result<Self, VersionError> {
        let invalid = || VersionError::Invalid {
            text: text.into(),
            scheme: scheme.clone(),
        };
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return Err(invalid());
        }
        let numeric = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        let ok = match scheme {
            VersionScheme::MultipartNumeric => text.split('.').all(numeric),
            VersionScheme::MultipartNumericSuffix => {
                let mut parts = text.split('.');
                let last = parts.next_back().unwrap_or_default();
                parts.all(numeric)
                    && last.bytes().next().is_some_and(|b| b.is_ascii_digit())
            }
            VersionScheme::Decimal => {
                let mut parts = text.splitn(2, '.');
                parts.next().is_some_and(numeric) && parts.next().is_none_or(numeric)
            }
            VersionScheme::Semver => {
                let core = text.split(['-', '+']).next().unwrap_or_default();
                let parts: Vec<&str> = core.split('.').collect();
                parts.len() == 3 && parts.iter().all(|p| numeric(p))
            }
            VersionScheme::AlphaNumeric | VersionScheme::Unknown | VersionScheme::Other(_) => true,
        };
        if !ok {
            return Err(invalid());
        }
        Ok(Version {
            text: text.to_string(),
            key: order_key(text),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Number of significant parts in the order key.
    pub fn significant_parts(&self) -> usize {
        self.key.len()
    }

    /// True for versions equivalent to `0`, the least element of the order.
    pub fn is_minimum(&self) -> bool {
        self.key.is_empty()
    }
}

fn order_key(text: &str) -> Vec<Part> {
    let mut key: Vec<Part> = text
        .split('.')
        .map(|p| {
            let split = p.bytes().position(|b| !b.is_ascii_digit()).unwrap_or(p.len());
            let (digits, suffix) = p.split_at(split);
            Part {
                digits: digits.trim_start_matches('0').to_string(),
                suffix: suffix.to_string(),
            }
        })
        .collect();
    while key.last().is_some_and(Part::is_zero) {
        key.pop();
    }
    key
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Version {}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Hash for Version {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for p in &self.key {
            p.digits.hash(state);
            p.suffix.hash(state);
        }
    }
}

impl fmt::Debug for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Version({:?})", self.text)
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

pub fn compare_versions(a: &str, b: &str, scheme: &VersionScheme) -> Result<Ordering, VersionError> {
    Ok(Version::parse(a, scheme)?.cmp(&Version::parse(b, scheme)?))
}

/// `count` distinct versions strictly between `lo` and `hi` (or above `lo`
/// when `hi` is `None`), in increasing order. Built by extending `lo` with
/// zero parts and then `.1`, `.2`, ...
pub(crate) fn versions_after(lo: &Version, hi: Option<&Version>, count: usize) -> Vec<Version> {
    let width = lo.key.len().max(hi.map_or(0, |h| h.key.len()));
    let mut base = String::from(lo.as_str());
    let own_parts = lo.as_str().split('.').count();
    for _ in own_parts..width {
        base.push_str(".0");
    }
    let out: Vec<Version> = (1..=count)
        .map(|i| Version::new(&alloc::format!("{base}.{i}")).expect("non-empty"))
        .collect();
    debug_assert!(out.iter().all(|v| v > lo && hi.is_none_or(|h| v < h)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmp(a: &str, b: &str) -> Ordering {
        compare_versions(a, b, &VersionScheme::MultipartNumeric).unwrap()
    }

    #[test]
    fn three_part_examples() {
        assert_eq!(cmp("1.2.3", "1.3.2"), Ordering::Less);
        assert_eq!(cmp("1.10.0", "1.9.9"), Ordering::Greater);
        assert_eq!(cmp("2.0.0", "2.0.0"), Ordering::Equal);
        assert_eq!(cmp("1.0", "1.0.0"), Ordering::Equal);
        assert_eq!(cmp("01.2", "1.2"), Ordering::Equal);
    }

    #[test]
    fn scheme_validation() {
        assert!(Version::parse("1.2.x", &VersionScheme::MultipartNumeric).is_err());
        assert!(Version::parse("1.2.3rc1", &VersionScheme::MultipartNumericSuffix).is_ok());
        assert!(Version::parse("1.2", &VersionScheme::Semver).is_err());
        assert!(Version::parse("1.2.3-beta", &VersionScheme::Semver).is_ok());
        assert!(Version::parse("1.25", &VersionScheme::Decimal).is_ok());
        assert!(Version::parse("1.2.5", &VersionScheme::Decimal).is_err());
        assert!(Version::parse("", &VersionScheme::Unknown).is_err());
        assert!(compare_versions("a", "1", &VersionScheme::MultipartNumeric).is_err());
    }

    #[test]
    fn suffixes_order_after_digits() {
        let s = VersionScheme::MultipartNumericSuffix;
        assert_eq!(compare_versions("1.2", "1.2a", &s).unwrap(), Ordering::Less);
        assert_eq!(compare_versions("1.2b", "1.3", &s).unwrap(), Ordering::Less);
    }

    #[test]
    fn long_digit_runs_do_not_overflow() {
        assert_eq!(cmp("99999999999999999999999", "100000000000000000000000"), Ordering::Less);
    }

    #[test]
    fn gap_representatives_land_in_the_gap() {
        let lo = Version::new("1.2").unwrap();
        let hi = Version::new("1.2.0.0.1").unwrap();
        let reps = versions_after(&lo, Some(&hi), 3);
        assert_eq!(reps.len(), 3);
        for w in reps.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(reps.iter().all(|v| *v > lo && *v < hi));
        let zero = Version::new("0").unwrap();
        assert!(zero.is_minimum());
    }
}
