//! Power unit conversions.

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(23.0) - 0.199_526_231_496_888).abs() < 1e-12);
        assert!((dbm_to_watts(-104.0) - 3.981_071_705_534_97e-14).abs() < 1e-25);
        assert!((watts_to_dbm(dbm_to_watts(33.0)) - 33.0).abs() < 1e-12);
        assert!((db_to_linear(-128.1) - 10f64.powf(-12.81)).abs() < 1e-25);
    }
}
