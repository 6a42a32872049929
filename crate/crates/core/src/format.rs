/// 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exactly() {
        for x in [0.0, -0.0, 1.0, 0.1, -3.75e-300, 1.0 / 3.0, f64::MAX, f64::MIN_POSITIVE] {
            assert_eq!(fmt_sig17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
