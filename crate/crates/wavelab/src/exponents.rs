//! Exact rational evaluation of the exponent formulas: critical exponents,
//! Strichartz admissibility, and the Hölder interpolation coefficients used
//! by the cone-shell estimates.
//!
//! Everything here is exact; floating point is deliberately absent so that a
//! sign error in a formula cannot hide behind rounding.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Zero};
use thiserror::Error;

/// Exact rational scalar. `i128` leaves ample headroom for the products of
/// small integers these formulas produce.
pub type Q = Ratio<i128>;

/// Shorthand constructor, always reduced with positive denominator.
pub fn q(num: i128, den: i128) -> Q {
    Ratio::new(num, den)
}

/// Parses "3", "-2", "9/4" style rationals.
pub fn parse_rational(s: &str) -> Result<Q, ExponentError> {
    let s = s.trim();
    let parse_int = |t: &str| {
        i128::from_str(t.trim()).map_err(|_| ExponentError::Domain {
            message: format!("not a rational: {s:?}"),
        })
    };
    match s.split_once('/') {
        Some((a, b)) => {
            let den = parse_int(b)?;
            if den == 0 {
                return Err(ExponentError::Domain {
                    message: format!("zero denominator in {s:?}"),
                });
            }
            Ok(Ratio::new(parse_int(a)?, den))
        }
        None => Ok(Ratio::from_integer(parse_int(s)?)),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExponentError {
    #[error("domain error: {message}")]
    Domain { message: String },
    /// Names the violated inequality, e.g. "p must exceed 1+6/d = 3".
    #[error("hypothesis violation: {constraint}")]
    HypothesisViolation { constraint: String },
}

/// Energy-critical exponent `p_e = 1 + 4/(d-2)`.
pub fn critical_exponent(d: u32) -> Result<Q, ExponentError> {
    if d < 3 {
        return Err(ExponentError::Domain {
            message: format!("dimension must be at least 3, got {d}"),
        });
    }
    Ok(Q::one() + q(4, i128::from(d) - 2))
}

/// Critical Sobolev regularity `s_p = d/2 - 2/(p-1)`.
pub fn critical_sobolev(d: u32, p: Q) -> Result<Q, ExponentError> {
    if p <= Q::one() {
        return Err(ExponentError::Domain {
            message: format!("s_p requires p > 1, got p = {p}"),
        });
    }
    Ok(q(i128::from(d), 2) - q(2, 1) / (p - Q::one()))
}

/// Lower end of the admissible range, `1 + 6/d`.
pub fn lower_exponent(d: u32) -> Q {
    Q::one() + q(6, i128::from(d))
}

/// A finite-or-infinite exponent, used where an endpoint such as
/// `r = ∞` must be expressible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtQ {
    Finite(Q),
    Infinity,
}

impl fmt::Display for ExtQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtQ::Finite(v) => write!(f, "{v}"),
            ExtQ::Infinity => write!(f, "inf"),
        }
    }
}

/// Exact record of every exponent attached to a pair `(d, p)`.
///
/// Invariants (all exact):
/// - `k1 + k2 = p`
/// - `k1/(p+1) + k2/q = 1`
/// - `k1/(p+1) + k2/r = 1/2`
/// - `(q, r)` is a 1-admissible pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentTable {
    pub d: u32,
    pub p: Q,
    pub p_e: Q,
    pub s_p: Q,
    pub q: Q,
    pub r: Q,
    pub k1: Q,
    pub k2: Q,
    /// `None` when the formula's denominator vanishes; reported as
    /// "undefined" rather than guessing a limit.
    pub kappa1: Option<Q>,
    pub kappa2: Q,
}

fn check_range(d: u32, p: Q) -> Result<(), ExponentError> {
    let lower = lower_exponent(d);
    let upper = critical_exponent(d)?;
    if p <= lower {
        return Err(ExponentError::HypothesisViolation {
            constraint: format!("p must exceed 1+6/d = {lower} (got p = {p})"),
        });
    }
    if p >= upper {
        return Err(ExponentError::HypothesisViolation {
            constraint: format!("p must stay below p_e = 1+4/(d-2) = {upper} (got p = {p})"),
        });
    }
    Ok(())
}

/// The interpolation pair `(q, r)` together with `k1, k2`:
///
/// `1/q = 2/(dp-d-2)`, `1/r = (dp-2p-d)/(2(dp-d-2))`,
/// `k1 = (p+1)(d+2+2p-dp)/((d+2+2p-dp)+2)`, `k2 = (dp-d-2)/((d+2+2p-dp)+2)`.
///
/// Requires `1 + 6/d < p < p_e(d)`; outside this range the formulas stop
/// producing admissible pairs, so the violation is an error, never a clamp.
pub fn lemma_pair(d: u32, p: Q) -> Result<ExponentTable, ExponentError> {
    check_range(d, p)?;
    let di = q(i128::from(d), 1);
    let one = Q::one();
    let two = q(2, 1);

    // a = dp - d - 2 > 0 on the range; b = d + 2 + 2p - dp > 0 below p_e.
    let a = di * p - di - two;
    let b = di + two + two * p - di * p;
    let qq = a / two;
    let rr = two * a / (di * p - two * p - di);
    let k1 = (p + one) * b / (b + two);
    let k2 = a / (b + two);

    let (kappa1, kappa2) = kappa_bounds(d, p)?;

    Ok(ExponentTable {
        d,
        p,
        p_e: critical_exponent(d)?,
        s_p: critical_sobolev(d, p)?,
        q: qq,
        r: rr,
        k1,
        k2,
        kappa1,
        kappa2,
    })
}

/// Weighted-energy decay thresholds:
///
/// `κ1 = ((d+2)(d+3) - (d+3)(d-2)p) / ((d-1)(d+3) - (d+1)(d-3)p)` and
/// `κ2 = (4 - (d-2)(p-1)) / (p+1)`.
///
/// `κ1` is `None` when its denominator vanishes.
pub fn kappa_bounds(d: u32, p: Q) -> Result<(Option<Q>, Q), ExponentError> {
    if p <= Q::one() {
        return Err(ExponentError::HypothesisViolation {
            constraint: format!("kappa bounds require p > 1 (got p = {p})"),
        });
    }
    let upper = critical_exponent(d)?;
    if p > upper {
        return Err(ExponentError::HypothesisViolation {
            constraint: format!("kappa bounds require p <= p_e = {upper} (got p = {p})"),
        });
    }
    let di = i128::from(d);
    let num1 = q((di + 2) * (di + 3), 1) - q((di + 3) * (di - 2), 1) * p;
    let den1 = q((di - 1) * (di + 3), 1) - q((di + 1) * (di - 3), 1) * p;
    let kappa1 = if den1.is_zero() { None } else { Some(num1 / den1) };
    let kappa2 = (q(4, 1) - q(di - 2, 1) * (p - Q::one())) / (p + Q::one());
    Ok((kappa1, kappa2))
}

/// Outcome of an admissibility check; `failures` lists every violated
/// condition so a caller can report all of them at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub failures: Vec<String>,
}

/// Checks whether `(q, r)` is an `s`-admissible pair in dimension `d`:
/// `q, r >= 2`, `r < ∞`, `2/q + (d-1)/r <= (d-1)/2`,
/// `1/q + d/r = d/2 - s`, and `(q, r) != (2, 2(d-1)/(d-3))`.
pub fn check_admissible(d: u32, qq: Q, rr: ExtQ, s: Q) -> AdmissibilityReport {
    let mut failures = Vec::new();
    let di = q(i128::from(d), 1);
    let two = q(2, 1);

    if qq < two {
        failures.push(format!("q must be at least 2 (got q = {qq})"));
    }
    let r = match rr {
        ExtQ::Infinity => {
            failures.push("r must be finite".to_string());
            None
        }
        ExtQ::Finite(r) => {
            if r < two {
                failures.push(format!("r must be at least 2 (got r = {r})"));
            }
            Some(r)
        }
    };

    if let Some(r) = r {
        if !qq.is_zero() && !r.is_zero() {
            let wave = two / qq + (di - Q::one()) / r;
            let bound = (di - Q::one()) / two;
            if wave > bound {
                failures.push(format!(
                    "2/q + (d-1)/r = {wave} exceeds (d-1)/2 = {bound}"
                ));
            }
            let scaling = Q::one() / qq + di / r;
            let target = di / two - s;
            if scaling != target {
                failures.push(format!(
                    "1/q + d/r = {scaling} must equal d/2 - s = {target}"
                ));
            }
        }
        if d > 3 {
            let r_excl = two * (di - Q::one()) / (di - q(3, 1));
            if qq == two && r == r_excl {
                failures.push(format!(
                    "(q,r) = (2, 2(d-1)/(d-3)) = (2, {r_excl}) is the excluded endpoint"
                ));
            }
        }
    }

    AdmissibilityReport {
        admissible: failures.is_empty(),
        failures,
    }
}

/// Cross-product collinearity test of `(1/(p+1), 1/(p+1))`, `(1/q, 1/r)` and
/// `(1/p, 1/(2p))`, plus the three interpolation identities. Exact.
pub fn holder_check(table: &ExponentTable) -> bool {
    let one = Q::one();
    let two = q(2, 1);
    let p = table.p;

    let id1 = table.k1 + table.k2 == p;
    let id2 = table.k1 / (p + one) + table.k2 / table.q == one;
    let id3 = table.k1 / (p + one) + table.k2 / table.r == one / two;

    let a = (one / (p + one), one / (p + one));
    let b = (one / table.q, one / table.r);
    let c = (one / p, one / (two * p));
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);

    id1 && id2 && id3 && cross.is_zero()
}

/// Formats a rational for CSV output: integer when the denominator is 1.
pub fn display_q(v: Q) -> String {
    if v.denom().is_one() {
        format!("{}", v.numer())
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Converts to f64 (for handing exponents to the floating-point side).
pub fn to_f64(v: Q) -> f64 {
    let n = *v.numer() as f64;
    let d = *v.denom() as f64;
    n / d
}

/// Evenly spaced rational lattice of `count` interior points of `(lo, hi)`.
pub fn rational_lattice(lo: Q, hi: Q, count: usize) -> Vec<Q> {
    let step = (hi - lo) / q(count as i128 + 1, 1);
    (1..=count).map(|k| lo + step * q(k as i128, 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn critical_exponent_values() {
        assert_eq!(critical_exponent(3).unwrap(), q(5, 1));
        assert_eq!(critical_exponent(4).unwrap(), q(3, 1));
        assert_eq!(critical_exponent(5).unwrap(), q(7, 3));
        assert!(matches!(
            critical_exponent(2),
            Err(ExponentError::Domain { .. })
        ));
    }

    #[test]
    fn critical_sobolev_values() {
        // Exact substitution oracle: s_p = d/2 - 2/(p-1).
        assert_eq!(critical_sobolev(3, q(4, 1)).unwrap(), q(5, 6));
        assert_eq!(critical_sobolev(3, q(5, 1)).unwrap(), q(1, 1));
        assert_eq!(critical_sobolev(5, q(9, 4)).unwrap(), q(9, 10));
        assert!(critical_sobolev(3, q(1, 1)).is_err());
        assert!(critical_sobolev(3, q(1, 2)).is_err());
    }

    #[test]
    fn lemma_pair_spot_values() {
        let t = lemma_pair(3, q(4, 1)).unwrap();
        assert_eq!(t.q, q(7, 2));
        assert_eq!(t.r, q(14, 1));
        assert_eq!(t.k1, q(5, 3));
        assert_eq!(t.k2, q(7, 3));

        let t = lemma_pair(5, q(9, 4)).unwrap();
        assert_eq!(t.q, q(17, 8));
        assert_eq!(t.r, q(34, 7));
        assert_eq!(t.k1, q(13, 36));
        assert_eq!(t.k2, q(17, 9));

        // d=4, p=11/4: exact substitution into the closed forms gives
        // q=5/2, r=20/3, and (k1, k2) = (3/4, 2); the identities below pin
        // the values independently.
        let t = lemma_pair(4, q(11, 4)).unwrap();
        assert_eq!(t.q, q(5, 2));
        assert_eq!(t.r, q(20, 3));
        assert_eq!(t.k1, q(3, 4));
        assert_eq!(t.k2, q(2, 1));
        assert_eq!(t.k1 + t.k2, t.p);
        assert_eq!(t.k1 / (t.p + Q::one()) + t.k2 / t.q, Q::one());
        assert_eq!(t.k1 / (t.p + Q::one()) + t.k2 / t.r, q(1, 2));
    }

    #[test]
    fn lemma_pair_range_errors_name_bound() {
        let err = lemma_pair(3, q(3, 1)).unwrap_err();
        match err {
            ExponentError::HypothesisViolation { constraint } => {
                assert!(constraint.contains("1+6/d = 3"), "{constraint}");
            }
            other => panic!("unexpected error {other:?}"),
        }
        let err = lemma_pair(3, q(5, 1)).unwrap_err();
        match err {
            ExponentError::HypothesisViolation { constraint } => {
                assert!(constraint.contains("p_e"), "{constraint}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn admissibility_examples() {
        // Consistent with lemma_pair(3, 4).
        let rep = check_admissible(3, q(7, 2), ExtQ::Finite(q(14, 1)), Q::one());
        assert!(rep.admissible, "{:?}", rep.failures);

        // Excluded endpoint r = ∞.
        let rep = check_admissible(3, q(2, 1), ExtQ::Infinity, Q::one());
        assert!(!rep.admissible);
        assert!(rep.failures.iter().any(|f| f.contains("finite")));

        // The excluded pair (2, 2(d-1)/(d-3)) in d=5.
        let rep = check_admissible(5, q(2, 1), ExtQ::Finite(q(4, 1)), Q::one());
        assert!(!rep.admissible);
        assert!(
            rep.failures.iter().any(|f| f.contains("excluded endpoint")),
            "{:?}",
            rep.failures
        );
    }

    #[test]
    fn kappa_spot_values() {
        let (k1, k2) = kappa_bounds(3, q(4, 1)).unwrap();
        assert_eq!(k1, Some(q(1, 2)));
        assert_eq!(k2, q(1, 5));

        // kappa2 vanishes at the critical exponent.
        let (_, k2) = kappa_bounds(3, q(5, 1)).unwrap();
        assert_eq!(k2, q(0, 1));

        // d=4, p=11/4: numerator (6)(7) - (7)(2)(11/4) = 7/2, denominator
        // (3)(7) - (5)(1)(11/4) = 29/4, so kappa1 = 14/29.
        let (k1, k2) = kappa_bounds(4, q(11, 4)).unwrap();
        assert_eq!(k1, Some(q(14, 29)));
        assert_eq!(k2, q(2, 15));
    }

    #[test]
    fn kappa2_zero_at_critical_for_all_d() {
        for d in 3..=5 {
            let pe = critical_exponent(d).unwrap();
            let (_, k2) = kappa_bounds(d, pe).unwrap();
            assert!(k2.is_zero(), "d={d}");
        }
    }

    #[test]
    fn holder_check_examples() {
        let t = lemma_pair(3, q(4, 1)).unwrap();
        assert!(holder_check(&t));

        let t = lemma_pair(5, q(9, 4)).unwrap();
        assert!(holder_check(&t));

        let mut t = lemma_pair(3, q(4, 1)).unwrap();
        t.k2 += q(1, 1000);
        assert!(!holder_check(&t));
    }

    #[test]
    fn lattice_identities_exact() {
        // >= 50 interior rational p per dimension: every table invariant
        // holds exactly and the pair is 1-admissible.
        for d in 3..=5u32 {
            let lo = lower_exponent(d);
            let hi = critical_exponent(d).unwrap();
            let ps = rational_lattice(lo, hi, 50);
            assert_eq!(ps.len(), 50);
            for p in ps {
                let t = lemma_pair(d, p).unwrap();
                assert!(holder_check(&t), "d={d} p={p}");
                let rep = check_admissible(d, t.q, ExtQ::Finite(t.r), Q::one());
                assert!(rep.admissible, "d={d} p={p}: {:?}", rep.failures);
                let (k1, k2) = (t.kappa1.unwrap(), t.kappa2);
                assert!(k1 > Q::zero(), "kappa1 positive on open range, d={d} p={p}");
                assert!(k2 > Q::zero(), "kappa2 positive on open range, d={d} p={p}");
            }
        }
    }

    #[test]
    fn parse_rational_forms() {
        assert_eq!(parse_rational("4").unwrap(), q(4, 1));
        assert_eq!(parse_rational("9/4").unwrap(), q(9, 4));
        assert_eq!(parse_rational("-3/2").unwrap(), q(-3, 2));
        assert!(parse_rational("a/b").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    proptest! {
        // Random rationals inside the hypothesis range keep every identity
        // exact; the denominators are kept modest to avoid silly overflow.
        #[test]
        fn prop_lemma_pair_identities(d in 3u32..=5, num in 1i128..2000, den in 1i128..2000) {
            let lo = lower_exponent(d);
            let hi = critical_exponent(d).unwrap();
            // Map the random fraction into (lo, hi) strictly.
            let frac = q(num.min(den - 1).max(1), den.max(2));
            let p = lo + (hi - lo) * frac;
            prop_assume!(p > lo && p < hi);
            let t = lemma_pair(d, p).unwrap();
            prop_assert!(holder_check(&t));
            prop_assert!(check_admissible(d, t.q, ExtQ::Finite(t.r), Q::one()).admissible);
        }
    }
}
