//! Physical constants and the small unit conversions used throughout.
//!
//! Internal convention: times in seconds, lengths in the unit named by the
//! field (`_nm`, `_um`), rates in counts per second unless a `_cph` suffix
//! says counts per hour. Time tags are integer picoseconds.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Picoseconds per second.
pub const PS_PER_S: f64 = 1e12;

/// Seconds per hour.
pub const S_PER_HOUR: f64 = 3600.0;

/// Counts/second to counts/hour.
pub fn cps_to_cph(rate_cps: f64) -> f64 {
    rate_cps * S_PER_HOUR
}

/// Counts/hour to counts/second.
pub fn cph_to_cps(rate_cph: f64) -> f64 {
    rate_cph / S_PER_HOUR
}

/// Seconds to picoseconds, rounded to the nearest tick.
pub fn s_to_ps(t_s: f64) -> u64 {
    (t_s * PS_PER_S).round() as u64
}

/// Picoseconds to seconds.
pub fn ps_to_s(t_ps: u64) -> f64 {
    t_ps as f64 / PS_PER_S
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_conversions_are_inverse() {
        let r = 1527.7778;
        assert!((cph_to_cps(cps_to_cph(r)) - r).abs() < 1e-9);
        assert_eq!(cps_to_cph(1.0), 3600.0);
    }

    #[test]
    fn time_conversions() {
        assert_eq!(s_to_ps(2e-9), 2000);
        assert!((ps_to_s(2000) - 2e-9).abs() < 1e-24);
    }
}
