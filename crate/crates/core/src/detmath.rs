//! Deterministic elementary functions.
//!
//! The recording generator promises bit-identical output across platforms,
//! so its math cannot go through the platform `libm` (whose `sin`/`ln`
//! results differ by a few ulp between implementations). The functions here
//! use only IEEE-754 add/mul/div plus bit twiddling, with fixed polynomial
//! coefficients, and are accurate to ~1e-14 relative — far below anything
//! the signal path can resolve.

const FRAC_2_PI: f64 = 0.636_619_772_367_581_3;
// pi/2 in three parts with short mantissas, so k * PIO2_1 and k * PIO2_2
// stay exact for |k| < 2^20 (Cody-Waite argument reduction, good for
// |x| < ~1.6e6).
const PIO2_1: f64 = 1.570_796_326_734_125_6;
const PIO2_2: f64 = 6.077_100_506_303_966e-11;
const PIO2_3: f64 = 2.022_266_248_795_950_6e-21;
const LN_2: f64 = 0.693_147_180_559_945_3;

/// sin on the reduced range |r| <= pi/4 (Taylor, through r^15).
#[inline]
fn sin_poly(r: f64) -> f64 {
    let r2 = r * r;
    let mut p = -1.0 / 1_307_674_368_000.0; // 1/15!
    p = p * r2 + 1.0 / 6_227_020_800.0; // 1/13!
    p = p * r2 - 1.0 / 39_916_800.0;
    p = p * r2 + 1.0 / 362_880.0;
    p = p * r2 - 1.0 / 5_040.0;
    p = p * r2 + 1.0 / 120.0;
    p = p * r2 - 1.0 / 6.0;
    r + r * r2 * p
}

/// cos on the reduced range |r| <= pi/4 (Taylor, through r^14).
#[inline]
fn cos_poly(r: f64) -> f64 {
    let r2 = r * r;
    let mut p = -1.0 / 87_178_291_200.0; // 1/14!
    p = p * r2 + 1.0 / 479_001_600.0; // 1/12!
    p = p * r2 - 1.0 / 3_628_800.0;
    p = p * r2 + 1.0 / 40_320.0;
    p = p * r2 - 1.0 / 720.0;
    p = p * r2 + 1.0 / 24.0;
    p = p * r2 - 0.5;
    1.0 + r2 * p
}

#[inline]
fn reduce(x: f64) -> (f64, i64) {
    let k = (x * FRAC_2_PI).round();
    let r = ((x - k * PIO2_1) - k * PIO2_2) - k * PIO2_3;
    (r, (k as i64).rem_euclid(4))
}

/// Deterministic sine. Callers keep |x| below ~1e6 (all of ours do).
pub fn sin(x: f64) -> f64 {
    if x == 0.0 {
        return x;
    }
    let (r, q) = reduce(x);
    match q {
        0 => sin_poly(r),
        1 => cos_poly(r),
        2 => -sin_poly(r),
        _ => -cos_poly(r),
    }
}

/// Deterministic cosine.
pub fn cos(x: f64) -> f64 {
    let (r, q) = reduce(x);
    match q {
        0 => cos_poly(r),
        1 => -sin_poly(r),
        2 => -cos_poly(r),
        _ => sin_poly(r),
    }
}

/// Deterministic natural logarithm.
pub fn ln(x: f64) -> f64 {
    if x < 0.0 || x.is_nan() {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let (x, sub_adjust) = if x < f64::MIN_POSITIVE {
        (x * 18_014_398_509_481_984.0, -54.0) // 2^54
    } else {
        (x, 0.0)
    };
    let bits = x.to_bits();
    let mut exp = ((bits >> 52) & 0x7ff) as i64 - 1023;
    let mut m = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | 0x3ff0_0000_0000_0000);
    if m > std::f64::consts::SQRT_2 {
        m *= 0.5;
        exp += 1;
    }
    // ln(m) = 2 atanh(t), t = (m-1)/(m+1), |t| <= 0.1716.
    let t = (m - 1.0) / (m + 1.0);
    let t2 = t * t;
    let mut p = 1.0 / 19.0;
    p = p * t2 + 1.0 / 17.0;
    p = p * t2 + 1.0 / 15.0;
    p = p * t2 + 1.0 / 13.0;
    p = p * t2 + 1.0 / 11.0;
    p = p * t2 + 1.0 / 9.0;
    p = p * t2 + 1.0 / 7.0;
    p = p * t2 + 1.0 / 5.0;
    p = p * t2 + 1.0 / 3.0;
    p = p * t2 + 1.0;
    (exp as f64 + sub_adjust) * LN_2 + 2.0 * t * p
}
