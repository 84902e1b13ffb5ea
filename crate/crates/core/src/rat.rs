//! Exact rational arithmetic helpers.
//!
//! All lengths, offsets, and function values in this crate are
//! arbitrary-precision rationals, so length equalities are decided exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat_zero() -> Rat {
    Rat::zero()
}

pub fn rat_one() -> Rat {
    Rat::one()
}

pub fn rat_abs(r: &Rat) -> Rat {
    r.abs()
}

/// Renders a rational as `p/q`, or just `p` when the denominator is one.
pub fn rat_to_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `p/q` or `p`. Decimal notation is rejected.
pub fn parse_rat(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    if s.contains('.') {
        return Err(format!("decimal notation not allowed in rational: {s:?}"));
    }
    match s.split_once('/') {
        None => {
            let n: BigInt = s.parse().map_err(|_| format!("bad integer {s:?}"))?;
            Ok(Rat::from_integer(n))
        }
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| format!("bad numerator {p:?}"))?;
            let q: BigInt = q.trim().parse().map_err(|_| format!("bad denominator {q:?}"))?;
            if q.is_zero() {
                return Err(format!("zero denominator in {s:?}"));
            }
            Ok(Rat::new(p, q))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print_round_trip() {
        for s in ["3/2", "-7/3", "0", "12", "-4"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(rat_to_string(&r), s);
        }
        assert_eq!(rat_to_string(&parse_rat("6/4").unwrap()), "3/2");
        assert!(parse_rat("1.5").is_err());
        assert!(parse_rat("1/0").is_err());
    }
}
