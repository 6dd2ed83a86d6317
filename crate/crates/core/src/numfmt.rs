//! Canonical 9-significant-digit float formatting.
//!
//! Every float that crosses a file boundary (layout files, CSV maps,
//! graph dumps) goes through [`g9`], and every float parsed back in is
//! re-quantized with [`q9`]. That makes serialize/parse a bijection on
//! the values the pipeline actually constructs, which is what the
//! byte-identical round-trip and determinism guarantees rest on.

/// Format `v` with 9 significant digits, `%g`-style: positional for
/// moderate exponents, `me<exp>` otherwise, trailing zeros trimmed.
pub fn g9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    // {:.8e} renders exactly 9 significant digits, rounded to nearest.
    let sci = format!("{:.8e}", v);
    let (mant, exp) = sci.split_once('e').expect("exponential form");
    let exp: i32 = exp.parse().expect("exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 9);

    let body = if (-4..9).contains(&exp) {
        positional(&digits, exp)
    } else {
        let frac = digits[1..].trim_end_matches('0');
        if frac.is_empty() {
            format!("{}e{}", &digits[..1], exp)
        } else {
            format!("{}.{}e{}", &digits[..1], frac, exp)
        }
    };
    if neg {
        format!("-{}", body)
    } else {
        body
    }
}

fn positional(digits: &str, exp: i32) -> String {
    if exp < 0 {
        let frac = digits.trim_end_matches('0');
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), frac)
    } else {
        let point = exp as usize + 1;
        if point >= digits.len() {
            let mut s = digits.to_string();
            s.push_str(&"0".repeat(point - digits.len()));
            s
        } else {
            let frac = digits[point..].trim_end_matches('0');
            if frac.is_empty() {
                digits[..point].to_string()
            } else {
                format!("{}.{}", &digits[..point], frac)
            }
        }
    }
}

/// Quantize `v` to the value its canonical 9-digit rendering parses to.
pub fn q9(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    g9(v).parse().expect("canonical form reparses")
}
