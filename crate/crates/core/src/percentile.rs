//! Linear-interpolation percentiles over sorted wei values.
//!
//! The rank of quantile `q` in a sorted list of `n` values is `r = q * (n - 1)`;
//! the percentile is `v[floor(r)] + frac(r) * (v[floor(r) + 1] - v[floor(r)])`.
//! Values are kept as a wei base plus a fractional offset so comparisons stay
//! exact for prices beyond the f64 integer range.

use crate::error::{Error, Result};
use crate::Wei;

/// Ranks within this distance of an integer are treated as that integer, so
/// `0.84 * 100` style products do not pick up a spurious fractional step.
const RANK_SNAP: f64 = 1e-9;

/// Largest offset snap, in wei.
const OFFSET_SNAP_MAX: f64 = 1e-3;

/// An interpolated percentile: `base + offset` wei with `0 <= offset < upper - base`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolated {
    pub base: Wei,
    pub offset: f64,
}

impl Interpolated {
    /// Smallest integer wei not below the interpolated value.
    pub fn ceil_wei(&self) -> Wei {
        self.base + self.offset.ceil() as Wei
    }

    pub fn as_f64(&self) -> f64 {
        self.base as f64 + self.offset
    }

    /// True when `price` lies strictly below the interpolated value.
    pub fn is_above(&self, price: Wei) -> bool {
        if price < self.base {
            return true;
        }
        ((price - self.base) as f64) < self.offset
    }
}

/// Percentile at quantile `q` in `[0, 1]` of an ascending slice.
pub fn interpolate_sorted(sorted: &[Wei], q: f64) -> Result<Interpolated> {
    if sorted.is_empty() {
        return Err(Error::Precondition("percentile of an empty list".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile {q} outside [0, 1]")));
    }
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let mut rank = q * (sorted.len() - 1) as f64;
    if (rank - rank.round()).abs() < RANK_SNAP {
        rank = rank.round();
    }
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        return Ok(Interpolated {
            base: sorted[lo],
            offset: 0.0,
        });
    }
    let span = sorted[lo + 1] - sorted[lo];
    let mut offset = frac * span as f64;
    // the same snap carried through to wei, capped so it never swallows a
    // real fraction
    if (offset - offset.round()).abs() <= (span as f64 * RANK_SNAP).min(OFFSET_SNAP_MAX) {
        offset = offset.round();
    }
    Ok(Interpolated {
        base: sorted[lo],
        offset,
    })
}

/// Percentile of an unsorted list; sorts a copy.
pub fn interpolate(values: &[Wei], q: f64) -> Result<Interpolated> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    interpolate_sorted(&sorted, q)
}

/// Converts a percentage level in the open interval (0, 100) into a quantile.
pub fn level_to_quantile(alpha: f64) -> Result<f64> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 100.0 {
        Ok(alpha / 100.0)
    } else {
        Err(Error::Domain(format!("percentile level {alpha} outside (0, 100)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_values_at_two_and_a_half() {
        let p = interpolate_sorted(&[1, 2, 3, 4, 5, 6, 7], 0.025).unwrap();
        assert_eq!(p.base, 1);
        assert!((p.as_f64() - 1.15).abs() < 1e-12);
        assert!(p.is_above(1));
        assert!(!p.is_above(2));
    }

    #[test]
    fn integer_rank_has_no_offset() {
        let v: Vec<Wei> = (1..=101).collect();
        let p = interpolate_sorted(&v, 0.84).unwrap();
        assert_eq!(p.offset, 0.0);
        assert_eq!(p.ceil_wei(), 85);
    }

    #[test]
    fn whole_wei_results_are_not_rounded_up() {
        // rank 80 * 0.74512 = 59.6096 and 0.6096 * 6250 = 3810 exactly
        let mut v: Vec<Wei> = vec![0; 59];
        v.extend([737_662, 743_912]);
        v.extend(vec![900_000; 20]);
        let p = interpolate_sorted(&v, 0.74512).unwrap();
        assert_eq!(p.offset, 3810.0);
        assert_eq!(p.ceil_wei(), 741_472);
        assert!(!p.is_above(741_472));
        assert!(p.is_above(741_471));
    }

    #[test]
    fn extremes() {
        let v = [3, 9, 27];
        assert_eq!(interpolate_sorted(&v, 0.0).unwrap().ceil_wei(), 3);
        assert_eq!(interpolate_sorted(&v, 1.0).unwrap().ceil_wei(), 27);
        assert!(interpolate_sorted(&[], 0.5).is_err());
        assert!(interpolate_sorted(&v, 1.5).is_err());
    }

    #[test]
    fn huge_values_compare_exactly() {
        let big = u128::MAX / 4;
        let p = interpolate_sorted(&[big, big + 10], 0.5).unwrap();
        assert!(p.is_above(big + 4));
        assert!(!p.is_above(big + 5));
        assert_eq!(p.ceil_wei(), big + 5);
    }

    #[test]
    fn level_domain() {
        assert!(level_to_quantile(0.0).is_err());
        assert!(level_to_quantile(100.0).is_err());
        assert!(level_to_quantile(f64::NAN).is_err());
        assert_eq!(level_to_quantile(75.0).unwrap(), 0.75);
    }
}
