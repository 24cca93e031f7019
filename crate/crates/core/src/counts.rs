//! Ratio-to-count conversions.
//!
//! Products such as `0.7 * 10` land a hair above or below the exact decimal
//! result in binary floating point, which would push `ceil` or a half-way
//! `round` onto the wrong integer. Products within `SNAP` of an integer (or of
//! a half-integer, for rounding) are snapped before the integer step.

const SNAP: f64 = 1e-9;

fn snap_to(x: f64, step: f64) -> f64 {
    let snapped = (x / step).round() * step;
    if (x - snapped).abs() <= SNAP * x.abs().max(1.0) {
        snapped
    } else {
        x
    }
}

/// `round(ratio * n)` with halves rounded away from zero.
pub fn round_count(ratio: f64, n: usize) -> usize {
    let x = snap_to(ratio * n as f64, 0.5);
    x.round().max(0.0) as usize
}

/// `max(1, round(ratio * n))`, the cluster-count rule.
pub fn cluster_count(ratio: f64, n: usize) -> usize {
    round_count(ratio, n).max(1)
}

/// `ceil(ratio * n)`.
pub fn ceil_count(ratio: f64, n: usize) -> usize {
    let x = snap_to(ratio * n as f64, 1.0);
    x.ceil().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_half_away_from_zero() {
        assert_eq!(round_count(0.5, 5), 3);
        assert_eq!(round_count(0.5, 3), 2);
        assert_eq!(round_count(0.25, 16), 4);
        assert_eq!(round_count(0.3, 5), 2);
        assert_eq!(round_count(0.5, 8), 4);
    }

    #[test]
    fn cluster_count_floors_at_one() {
        assert_eq!(cluster_count(0.25, 1), 1);
        assert_eq!(cluster_count(0.1, 2), 1);
        assert_eq!(cluster_count(0.5, 0), 1);
    }

    #[test]
    fn ceil_is_not_fooled_by_representation_error() {
        // 0.7 * 10 == 7.000000000000001 in binary64
        assert_eq!(ceil_count(0.7, 10), 7);
        assert_eq!(ceil_count(0.4, 10), 4);
        assert_eq!(ceil_count(0.4, 9), 4);
        assert_eq!(ceil_count(0.4, 415), 166);
        assert_eq!(ceil_count(1.0, 13), 13);
        assert_eq!(ceil_count(0.4, 0), 0);
    }
}
