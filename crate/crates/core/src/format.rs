//! Text formatting shared by every CSV writer.

/// Formats a float with 17 significant digits so it parses back bit-identically.
///
/// Integral values below 2^53 are written without an exponent, which is still exact.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() && x.fract() == 0.0 && x.abs() < 9.007_199_254_740_992e15 {
        if x == 0.0 && x.is_sign_negative() {
            return "-0".to_string();
        }
        return format!("{}", x as i64);
    }
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_cases() {
        assert_eq!(fmt_f64(15.0), "15");
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-0.0), "-0");
    }

    proptest! {
        #[test]
        fn parses_back_exactly(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let back: f64 = fmt_f64(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
