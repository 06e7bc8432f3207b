//! Quadratic B-spline interpolation kernel.

use crate::{Real, Vec3};

/// `D_p^{-1}` scale of the MLS-MPM affine transfer for quadratic splines.
#[inline]
pub fn inv_d(h: Real) -> Real {
    4.0 / (h * h)
}

/// One-dimensional weights for the three nodes `base, base+1, base+2` given
/// the fractional position `fx = x/h - base` in `[0.5, 1.5)`.
#[inline]
pub fn weights_1d(fx: Real) -> [Real; 3] {
    let a = 1.5 - fx;
    let b = fx - 1.0;
    let c = fx - 0.5;
    [0.5 * a * a, 0.75 - b * b, 0.5 * c * c]
}

/// Base node and per-axis weights of a point's 3×3×3 support.
pub fn stencil_weights(x: &Vec3, h: Real) -> ([i32; 3], [[Real; 3]; 3]) {
    let mut base = [0i32; 3];
    let mut w = [[0.0; 3]; 3];
    for a in 0..3 {
        let xs = x[a] / h;
        let b = (xs - 0.5).floor();
        base[a] = b as i32;
        w[a] = weights_1d(xs - b);
    }
    (base, w)
}
