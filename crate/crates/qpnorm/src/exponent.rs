use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A norm index p in [1, inf], with infinity kept as a tagged sentinel so no
/// arithmetic ever sees a huge float standing in for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub const ONE: Exponent = Exponent::Finite(1.0);
    pub const TWO: Exponent = Exponent::Finite(2.0);
    pub const INF: Exponent = Exponent::Infinity;

    /// Validating constructor. `f64::INFINITY` maps to the sentinel.
    pub fn new(value: f64) -> Result<Exponent> {
        if value.is_nan() {
            return Err(Error::InvalidExponent("NaN".into()));
        }
        if value == f64::INFINITY {
            return Ok(Exponent::Infinity);
        }
        if value < 1.0 || !value.is_finite() {
            return Err(Error::InvalidExponent(format!(
                "{value} is outside [1, inf]"
            )));
        }
        Ok(Exponent::Finite(value))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Exponent::Finite(v) if *v == 1.0)
    }

    /// The raw value, `f64::INFINITY` for the sentinel. Useful in exponent
    /// formulas like `1 - 2/p` that behave correctly in the limit.
    pub fn as_f64(&self) -> f64 {
        match self {
            Exponent::Finite(v) => *v,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    /// 1/p, with 1/inf = 0.
    pub fn recip(&self) -> f64 {
        match self {
            Exponent::Finite(v) => 1.0 / v,
            Exponent::Infinity => 0.0,
        }
    }

    /// The dual index p* with 1/p + 1/p* = 1. One and infinity are each
    /// other's duals exactly; interior values use p/(p-1).
    pub fn dual(&self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(v) if *v == 1.0 => Exponent::Infinity,
            Exponent::Finite(v) => Exponent::Finite(v / (v - 1.0)),
        }
    }

    /// Stable byte encoding for hashing / fingerprints.
    pub(crate) fn to_bits(self) -> u64 {
        match self {
            Exponent::Finite(v) => v.to_bits(),
            Exponent::Infinity => f64::INFINITY.to_bits(),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(v) => write!(f, "{v}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Exponent> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") || t == "∞" {
            return Ok(Exponent::Infinity);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::InvalidExponent(format!("cannot parse {t:?}")))?;
        Exponent::new(v)
    }
}

/// Free-function form of [`Exponent::dual`].
pub fn dual_exponent(p: Exponent) -> Exponent {
    p.dual()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_of_one_is_infinity() {
        assert_eq!(Exponent::ONE.dual(), Exponent::Infinity);
        assert_eq!(Exponent::Infinity.dual(), Exponent::ONE);
    }

    #[test]
    fn two_is_self_dual() {
        assert_eq!(Exponent::TWO.dual(), Exponent::TWO);
    }

    #[test]
    fn four_thirds_dual_is_four() {
        let p = Exponent::new(4.0 / 3.0).unwrap();
        let d = p.dual().as_f64();
        assert!((d - 4.0).abs() < 1e-12, "dual(4/3) = {d}");
    }

    #[test]
    fn rejects_below_one_and_nan() {
        assert!(Exponent::new(0.5).is_err());
        assert!(Exponent::new(f64::NAN).is_err());
        assert!(Exponent::new(-3.0).is_err());
    }

    #[test]
    fn parses_inf_and_decimals() {
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::Infinity);
        assert_eq!(
            "1.5".parse::<Exponent>().unwrap(),
            Exponent::Finite(1.5)
        );
        assert!("0.3".parse::<Exponent>().is_err());
    }

    #[test]
    fn duality_involution_sentinels_exact() {
        for p in [Exponent::ONE, Exponent::TWO, Exponent::Infinity] {
            assert_eq!(p.dual().dual(), p);
        }
    }

    #[test]
    fn duality_involution_machine_precision() {
        // Deterministic spread over [1, inf]: interior points plus the
        // sentinels themselves.
        let mut values = vec![1.0, 2.0, f64::INFINITY];
        for i in 1..=100u32 {
            let u = i as f64 / 101.0;
            values.push(1.0 / u); // p in (1.01, 101)
        }
        for v in values {
            let p = Exponent::new(v).unwrap();
            let pp = p.dual().dual();
            match (p, pp) {
                (Exponent::Infinity, Exponent::Infinity) => {}
                (Exponent::Finite(a), Exponent::Finite(b)) => {
                    assert!(
                        (a - b).abs() <= 1e-12 * a.abs(),
                        "dual(dual({a})) = {b}"
                    );
                }
                _ => panic!("sentinel mismatch for {p}"),
            }
        }
    }
}
