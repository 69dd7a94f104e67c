//! Exact rational numbers.
//!
//! All probabilities, capacities and drifts are carried as arbitrary-precision
//! fractions. Floating point only appears in simulation statistics.

use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = num_rational::BigRational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseRationalError {
    #[error("empty rational literal")]
    Empty,
    #[error("malformed rational literal `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

/// Builds `num / den` in lowest terms. Panics on a zero denominator.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

/// Parses `p/q`, `p` or a finite decimal such as `0.45` exactly.
pub fn parse(text: &str) -> Result<Rational, ParseRationalError> {
    let t = text.trim();
    if t.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    let malformed = || ParseRationalError::Malformed(t.to_string());
    if let Some((p, q)) = t.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| malformed())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| malformed())?;
        if q.is_zero() {
            return Err(ParseRationalError::ZeroDenominator(t.to_string()));
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        let negative = whole.starts_with('-');
        let digits = frac.len() as u32;
        if digits == 0 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let whole_part = if whole.is_empty() || whole == "-" || whole == "+" {
            BigInt::zero()
        } else {
            BigInt::from_str(whole).map_err(|_| malformed())?
        };
        let scale = BigInt::from(10u32).pow(digits);
        let frac_part = BigInt::from_str(frac).map_err(|_| malformed())?;
        let magnitude = whole_part.abs() * &scale + frac_part;
        let num = if negative { -magnitude } else { magnitude };
        return Ok(Rational::new(num, scale));
    }
    let n = BigInt::from_str(t).map_err(|_| malformed())?;
    Ok(Rational::from_integer(n))
}

/// Always `p/q`, including integers (`1/1`), so files round-trip bit-exactly.
pub fn to_fraction_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact decimal expansion when the denominator has only factors 2 and 5,
/// otherwise a 17-significant-digit approximation.
pub fn to_decimal_string(r: &Rational) -> String {
    let mut den = r.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut twos, mut fives) = (0u32, 0u32);
    while (&den % &two).is_zero() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return format!("{:.17}", to_f64(r));
    }
    let digits = twos.max(fives);
    let scaled = r * Rational::from_integer(BigInt::from(10).pow(digits));
    let n = scaled.to_integer();
    if digits == 0 {
        return n.to_string();
    }
    let negative = n.is_negative();
    let s = n.abs().to_string();
    let s = format!("{:0>width$}", s, width = digits as usize + 1);
    let (w, f) = s.split_at(s.len() - digits as usize);
    format!("{}{}.{}", if negative { "-" } else { "" }, w, f)
}

/// Least common multiple of the denominators, when it fits in a `u64`.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Option<u64> {
    let mut acc = BigInt::one();
    for v in values {
        acc = num_integer::Integer::lcm(&acc, v.denom());
    }
    acc.to_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_all_literal_forms() {
        assert_eq!(parse("2/5").unwrap(), ratio(2, 5));
        assert_eq!(parse("4/10").unwrap(), ratio(2, 5));
        assert_eq!(parse("3").unwrap(), int(3));
        assert_eq!(parse("0.45").unwrap(), ratio(9, 20));
        assert_eq!(parse("-0.5").unwrap(), ratio(-1, 2));
        assert_eq!(parse(".02").unwrap(), ratio(1, 50));
        assert_eq!(parse("1/0"), Err(ParseRationalError::ZeroDenominator("1/0".into())));
        assert!(parse("a/b").is_err());
        assert!(parse("").is_err());
        assert!(parse("1.").is_err());
    }

    #[test]
    fn fraction_strings_are_always_p_over_q() {
        assert_eq!(to_fraction_string(&int(1)), "1/1");
        assert_eq!(to_fraction_string(&ratio(-6, 4)), "-3/2");
    }

    #[test]
    fn decimal_strings() {
        assert_eq!(to_decimal_string(&ratio(17, 50)), "0.34");
        assert_eq!(to_decimal_string(&ratio(-1, 8)), "-0.125");
        assert_eq!(to_decimal_string(&int(2)), "2");
        assert_eq!(to_decimal_string(&ratio(1, 3)).len(), 19);
    }

    #[test]
    fn lcm_of_denominators() {
        let v = [ratio(1, 3), ratio(2, 5), ratio(4, 15)];
        assert_eq!(common_denominator(v.iter()), Some(15));
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(p in -1_000_000i64..1_000_000, q in 1i64..1_000_000) {
            let r = ratio(p, q);
            prop_assert_eq!(parse(&to_fraction_string(&r)).unwrap(), r.clone());
            prop_assert!(r.denom() > &BigInt::zero());
        }
    }
}
