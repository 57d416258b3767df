//! Small exact fractions for AP, so the result is the correctly rounded
//! value of the rational metric rather than an accumulation of float error.

use std::cmp::Ordering;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Frac {
    pub n: u128,
    pub d: u128,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Frac {
    pub const ZERO: Frac = Frac { n: 0, d: 1 };

    pub fn new(n: u128, d: u128) -> Frac {
        debug_assert!(d != 0);
        let g = gcd(n, d).max(1);
        Frac { n: n / g, d: d / g }
    }

    pub fn checked_add(self, other: Frac) -> Option<Frac> {
        let g = gcd(self.d, other.d);
        let d = (self.d / g).checked_mul(other.d)?;
        let n = self.n.checked_mul(other.d / g)?.checked_add(other.n.checked_mul(self.d / g)?)?;
        Some(Frac::new(n, d))
    }
}

/// `n / d` as f64. Exact operands below 2^53 make this a single, correctly
/// rounded division.
pub(crate) fn ratio_to_f64(n: u128, d: u128) -> f64 {
    const EXACT: u128 = 1 << 53;
    if n < EXACT && d < EXACT {
        return n as f64 / d as f64;
    }
    // scale both down together; loses at most a few ulps on huge operands
    let shift = (128 - n.max(d).leading_zeros()).saturating_sub(53);
    (n >> shift) as f64 / (d >> shift) as f64
}

impl Ord for Frac {
    fn cmp(&self, other: &Frac) -> Ordering {
        // operands are detection counts; the products cannot overflow u128
        (self.n * other.d).cmp(&(other.n * self.d))
    }
}

impl PartialOrd for Frac {
    fn partial_cmp(&self, other: &Frac) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = Frac::new(2, 4);
        assert_eq!(a, Frac { n: 1, d: 2 });
        assert_eq!(a.checked_add(Frac::new(1, 3)).unwrap(), Frac::new(5, 6));
        assert_eq!(Frac::new(2, 3).max(Frac::new(3, 5)), Frac::new(2, 3));
        let f = Frac::new(56, 66);
        assert_eq!((f.n, f.d), (28, 33));
        assert_eq!(ratio_to_f64(f.n, f.d), 28.0 / 33.0);
        assert_eq!(ratio_to_f64(Frac::ZERO.n, Frac::ZERO.d), 0.0);
        assert!(Frac { n: u128::MAX, d: 1 }.checked_add(Frac { n: 1, d: 1 }).is_none());
    }

    #[test]
    fn large_ratio_close() {
        let (n, d) = (1u128 << 70, 3u128 << 69);
        assert!((ratio_to_f64(n, d) - 2.0 / 3.0).abs() < 1e-15);
    }
}
