//! Fast `sin`/`cos` for the moderate arguments seen by sine layers.
//!
//! Reduction by multiples of pi/2 with a three-part constant (exact for
//! `|x| < 2^19 pi/2`), followed by the classic minimax kernels on
//! `[-pi/4, pi/4]`. Agrees with the platform libm to within a couple of
//! ulps; larger or non-finite arguments defer to the standard library.

// Coefficients as published with fdlibm.
#![allow(clippy::excessive_precision)]

use std::f64::consts::FRAC_2_PI as INV_PIO2;

const PIO2_1: f64 = 1.570_796_326_734_125_6e0;
const PIO2_2: f64 = 6.077_100_506_303_966e-11;
const PIO2_2T: f64 = 2.022_266_248_795_950_6e-21;
const LIMIT: f64 = 8.0e5;
const ROUNDER: f64 = 6_755_399_441_055_744.0;

const S1: f64 = -1.666_666_666_666_663_2e-1;
const S2: f64 = 8.333_333_333_322_49e-3;
const S3: f64 = -1.984_126_982_985_795e-4;
const S4: f64 = 2.755_731_370_707_006_8e-6;
const S5: f64 = -2.505_076_025_340_686_3e-8;
const S6: f64 = 1.589_690_995_211_55e-10;

const C1: f64 = 4.166_666_666_666_660_2e-2;
const C2: f64 = -1.388_888_888_887_411e-3;
const C3: f64 = 2.480_158_728_947_673e-5;
const C4: f64 = -2.755_731_435_139_066_3e-7;
const C5: f64 = 2.087_572_321_298_175e-9;
const C6: f64 = -1.135_964_755_778_819_5e-11;

#[inline(always)]
fn kernel_sin(x: f64) -> f64 {
    let z = x * x;
    let r = S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)));
    x + x * z * (S1 + z * r)
}

#[inline(always)]
fn kernel_cos(x: f64) -> f64 {
    let z = x * x;
    let r = z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let hz = 0.5 * z;
    let w = 1.0 - hz;
    w + (((1.0 - w) - hz) + z * r)
}

/// `(sin x, cos x)`.
#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    if x.is_nan() || x.abs() >= LIMIT {
        return x.sin_cos();
    }
    // Round to nearest with the 1.5 * 2^52 trick; the low mantissa bits of
    // `t` then hold the quadrant.
    let t = x * INV_PIO2 + ROUNDER;
    let q = t.to_bits();
    let n = t - ROUNDER;
    let r = ((x - n * PIO2_1) - n * PIO2_2) - n * PIO2_2T;
    let s = kernel_sin(r);
    let c = kernel_cos(r);
    let odd = q & 1 == 1;
    let (a, b) = if odd { (c, s) } else { (s, c) };
    // sin flips sign in quadrants 2 and 3, cos in quadrants 1 and 2.
    let sa = (q & 2) << 62;
    let sb = (q.wrapping_add(1) & 2) << 62;
    (f64::from_bits(a.to_bits() ^ sa), f64::from_bits(b.to_bits() ^ sb))
}

#[inline]
pub fn sin(x: f64) -> f64 {
    sin_cos(x).0
}
