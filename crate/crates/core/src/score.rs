//! Exact rational scores.
//!
//! Rewards and aggregate metrics are kept as reduced fractions so that
//! recounts and metric oracles can be compared with `==` instead of a
//! floating-point tolerance. On the wire a score is a string such as `"1"`,
//! `"0"` or `"4/5"`.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A reduced rational number. Rewards live in `[0, 1]`; deltas between
/// metrics may be negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score(Ratio<i64>);

impl Score {
    pub const ZERO: Score = Score(Ratio::new_raw(0, 1));
    pub const ONE: Score = Score(Ratio::new_raw(1, 1));
    /// The travel-domain reward for a correct but non-optimal choice.
    pub const PARTIAL: Score = Score(Ratio::new_raw(4, 5));

    /// Panics if `denom` is zero.
    pub fn new(numer: i64, denom: i64) -> Self {
        Score(Ratio::new(numer, denom))
    }

    pub fn from_integer(value: i64) -> Self {
        Score(Ratio::from_integer(value))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn is_unit_interval(&self) -> bool {
        *self >= Score::ZERO && *self <= Score::ONE
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// Arithmetic mean; `None` for an empty input.
    pub fn mean<I>(values: I) -> Option<Score>
    where
        I: IntoIterator<Item = Score>,
    {
        let mut total = Score::ZERO;
        let mut count = 0i64;
        for v in values {
            total = total + v;
            count += 1;
        }
        (count > 0).then(|| Score(total.0 / count))
    }
}

impl Default for Score {
    fn default() -> Self {
        Score::ZERO
    }
}

impl Add for Score {
    type Output = Score;
    fn add(self, rhs: Score) -> Score {
        Score(self.0 + rhs.0)
    }
}

impl Sub for Score {
    type Output = Score;
    fn sub(self, rhs: Score) -> Score {
        Score(self.0 - rhs.0)
    }
}

impl Sum for Score {
    fn sum<I: Iterator<Item = Score>>(iter: I) -> Score {
        iter.fold(Score::ZERO, Add::add)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid score literal `{0}`")]
pub struct ParseScoreError(String);

impl FromStr for Score {
    type Err = ParseScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseScoreError(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let numer: i64 = n.parse().map_err(|_| err())?;
        let denom: i64 = d.parse().map_err(|_| err())?;
        if denom == 0 {
            return Err(err());
        }
        Ok(Score::new(numer, denom))
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        assert_eq!(Score::PARTIAL.to_string(), "4/5");
        assert_eq!(Score::ONE.to_string(), "1");
        assert_eq!("8/10".parse::<Score>().unwrap(), Score::PARTIAL);
        assert_eq!("-1/2".parse::<Score>().unwrap(), Score::new(-1, 2));
        assert!("1/0".parse::<Score>().is_err());
        assert!("x".parse::<Score>().is_err());
    }

    #[test]
    fn mean_is_exact() {
        assert_eq!(Score::mean([Score::ONE, Score::PARTIAL]), Some(Score::new(9, 10)));
        assert_eq!(Score::mean(std::iter::empty()), None);
    }

    #[test]
    fn serde_as_string() {
        let json = serde_json::to_string(&Score::new(3, 5)).unwrap();
        assert_eq!(json, "\"3/5\"");
        let back: Score = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Score::new(3, 5));
    }
}
