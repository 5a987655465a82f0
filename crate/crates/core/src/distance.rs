//! Distance and angle kernels.
//!
//! Every distance in this crate is a *squared* Euclidean distance stored as
//! `f32`. Squared distances order points exactly like Euclidean ones, and the
//! only place a square root is needed is the apex angle of a triangle.
//!
//! # Summation order
//!
//! [`squared_l2`] accumulates in `f32` with a fixed order so results are
//! reproducible across runs and platforms without fused multiply-add:
//!
//! 1. the first `8 * (d / 8)` coordinates go to eight lanes, coordinate `i`
//!    into lane `i % 8`, each lane summed front to back;
//! 2. the lanes are reduced as `((l0 + l4) + (l2 + l6)) + ((l1 + l5) + (l3 + l7))`;
//! 3. the remaining `d % 8` coordinates are added front to back.
//!
//! `(a - b)^2` and `(b - a)^2` are bitwise equal, so the kernel is exactly
//! symmetric.

use crate::error::{Error, Result};

const LANES: usize = 8;

/// Squared Euclidean distance `sum_i (a_i - b_i)^2`.
///
/// Panics if the slices have different lengths; a dimension mismatch is a
/// programming error, not a recoverable state.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len(), "squared_l2: dimension mismatch");
    let split = a.len() - a.len() % LANES;
    let (a_head, a_tail) = a.split_at(split);
    let (b_head, b_tail) = b.split_at(split);

    let mut lanes = [0f32; LANES];
    for (x, y) in a_head.chunks_exact(LANES).zip(b_head.chunks_exact(LANES)) {
        let x: &[f32; LANES] = x.try_into().unwrap();
        let y: &[f32; LANES] = y.try_into().unwrap();
        for i in 0..LANES {
            let t = x[i] - y[i];
            lanes[i] += t * t;
        }
    }
    let mut sum = ((lanes[0] + lanes[4]) + (lanes[2] + lanes[6]))
        + ((lanes[1] + lanes[5]) + (lanes[3] + lanes[7]));
    for (x, y) in a_tail.iter().zip(b_tail) {
        let t = x - y;
        sum += t * t;
    }
    sum
}

/// Cosine of the angle at `w` in the triangle `u w v`, given the three squared
/// side lengths `|uw|^2`, `|vw|^2` and `|uv|^2`.
///
/// Evaluated in `f64` from the `f32` inputs and clamped to `[-1, 1]`. Returns
/// `None` when `w` coincides with `u` or `v`.
#[inline]
pub fn cos_from_squared(uw: f32, vw: f32, uv: f32) -> Option<f64> {
    if uw <= 0.0 || vw <= 0.0 {
        return None;
    }
    let (a, b, c) = (uw as f64, vw as f64, uv as f64);
    let cos = (a + b - c) / (2.0 * (a * b).sqrt());
    Some(cos.clamp(-1.0, 1.0))
}

/// Cosine of the angle `∠uwv` (apex `w`).
///
/// `∠uwv > alpha` holds exactly when the returned value is `< cos(alpha)`.
pub fn cos_angle_at(w: &[f32], u: &[f32], v: &[f32]) -> Result<f64> {
    cos_from_squared(squared_l2(u, w), squared_l2(v, w), squared_l2(u, v))
        .ok_or(Error::DegenerateAngle)
}
