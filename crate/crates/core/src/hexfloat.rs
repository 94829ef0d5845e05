//! Lossless text encoding of `f64` as C99 hexadecimal float literals
//! (`0x1.8p+1` is 3.0). Used by checkpoints so saved weights reload
//! bit-for-bit on any platform.

use std::fmt::Write;

/// Formats `x` in the shortest normalized hexadecimal form.
pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 {
        (0, -1022)
    } else {
        (1, exp_bits - 1023)
    };
    let mut out = format!("{sign}0x{lead}");
    if frac != 0 {
        let digits = format!("{frac:013x}");
        let _ = write!(out, ".{}", digits.trim_end_matches('0'));
    }
    let _ = write!(out, "p{exp:+}");
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0:?} is not a hexadecimal float literal")]
pub struct ParseHexFloatError(pub String);

/// Parses a hexadecimal float literal such as `-0x1.f4p-3`.
pub fn parse(text: &str) -> Result<f64, ParseHexFloatError> {
    let err = || ParseHexFloatError(text.to_string());
    let s = text.trim();
    match s {
        "nan" => return Ok(f64::NAN),
        "inf" | "+inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (negative, rest) = match s.as_bytes().first() {
        Some(b'-') => (true, &s[1..]),
        Some(b'+') => (false, &s[1..]),
        _ => (false, s),
    };
    let rest = rest
        .strip_prefix("0x")
        .or_else(|| rest.strip_prefix("0X"))
        .ok_or_else(err)?;
    let (mantissa_text, exp_text) = rest.split_once(['p', 'P']).ok_or_else(err)?;
    let (int_part, frac_part) = mantissa_text.split_once('.').unwrap_or((mantissa_text, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    let exponent: i32 = exp_text.parse().map_err(|_| err())?;

    let mut mantissa: u64 = 0;
    let mut significant = 0u32;
    for c in int_part.chars().chain(frac_part.chars()) {
        let d = c.to_digit(16).ok_or_else(err)? as u64;
        if mantissa == 0 && d == 0 {
            continue;
        }
        significant += 4;
        if significant > 60 {
            return Err(err());
        }
        mantissa = (mantissa << 4) | d;
    }
    if mantissa >= 1 << 53 {
        // More precision than an f64 holds; never produced by `format`.
        return Err(err());
    }
    let scale = exponent - 4 * frac_part.len() as i32;
    let magnitude = scale_by_pow2(mantissa as f64, scale);
    Ok(if negative { -magnitude } else { magnitude })
}

fn pow2(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// `x · 2^k` with a single rounding step.
fn scale_by_pow2(x: f64, k: i32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    match k {
        k if k > 1023 => {
            if k > 2046 {
                f64::INFINITY
            } else {
                x * pow2(1023) * pow2(k - 1023)
            }
        }
        k if k >= -1022 => x * pow2(k),
        k if k >= -2044 => x * pow2(k + 1022) * pow2(-1022),
        _ => 0.0,
    }
}
