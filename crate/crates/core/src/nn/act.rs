//! Activation kernels.
//!
//! `exp` here is branch-free (range reduction by `ln 2`, degree-13 Taylor
//! polynomial, exponent built from bits), so loops over slices vectorize.
//! Accurate to a few ulp on the clamped range.

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
/// `1.5 * 2^52`: adding and subtracting it rounds to the nearest integer.
const SHIFTER: f64 = 6_755_399_441_055_744.0;
const TWO_52: f64 = 4_503_599_627_370_496.0;
/// `1/n!` for `n = 13..=0`.
const TAYLOR: [f64; 14] = [
    1.0 / 6_227_020_800.0,
    1.0 / 479_001_600.0,
    1.0 / 39_916_800.0,
    1.0 / 3_628_800.0,
    1.0 / 362_880.0,
    1.0 / 40_320.0,
    1.0 / 5_040.0,
    1.0 / 720.0,
    1.0 / 120.0,
    1.0 / 24.0,
    1.0 / 6.0,
    0.5,
    1.0,
    1.0,
];

#[inline(always)]
pub(crate) fn exp(x: f64) -> f64 {
    let x = x.clamp(-708.0, 708.0);
    let k = (x * LOG2E + SHIFTER) - SHIFTER;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = TAYLOR[0];
    for c in &TAYLOR[1..] {
        p = p * r + c;
    }
    // k + 1023 lies in [1, 2046]; the low mantissa bits of 2^52 + n hold n.
    let biased = (k + 1023.0 + TWO_52).to_bits() & ((1u64 << 52) - 1);
    p * f64::from_bits(biased << 52)
}

#[inline(always)]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

#[inline(always)]
pub(crate) fn tanh(x: f64) -> f64 {
    let e = exp(-2.0 * x.abs());
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

pub(crate) fn sigmoid_slice(v: &mut [f64]) {
    for x in v {
        *x = sigmoid(*x);
    }
}

pub(crate) fn tanh_slice(v: &mut [f64]) {
    for x in v {
        *x = tanh(*x);
    }
}
