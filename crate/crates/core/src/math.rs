//! Small dense linear-algebra helpers shared by the constitutive model and the
//! contact code.

use crate::{Mat3, Real, Vec3};

/// Signed SVD `F = U Σ Vᵀ` with `U`, `V` proper rotations. A reflection is
/// absorbed into the smallest singular value, which then carries the sign of
/// `det(F)`.
pub fn signed_svd(f: &Mat3) -> (Mat3, Vec3, Mat3) {
    let svd = f.svd(true, true);
    let mut u = svd.u.expect("svd requested u");
    let mut v_t = svd.v_t.expect("svd requested v_t");
    let mut sigma = svd.singular_values;

    // nalgebra sorts singular values in descending order; flip the last one.
    if u.determinant() < 0.0 {
        for r in 0..3 {
            u[(r, 2)] = -u[(r, 2)];
        }
        sigma[2] = -sigma[2];
    }
    if v_t.determinant() < 0.0 {
        for c in 0..3 {
            v_t[(2, c)] = -v_t[(2, c)];
        }
        sigma[2] = -sigma[2];
    }
    (u, sigma, v_t.transpose())
}

/// Rotation factor of the polar decomposition `F = R S`.
///
/// Uses the scaled Newton iteration `X ← ½(γX + X⁻ᵀ/γ)` when `det F > 0`,
/// falling back to the signed SVD otherwise.
pub fn polar_rotation(f: &Mat3) -> Mat3 {
    if f.determinant() > 0.0 {
        let mut x = *f;
        let mut scaled = true;
        for _ in 0..40 {
            let Some(inv) = x.try_inverse() else { break };
            let inv_t = inv.transpose();
            let g = if scaled { (inv_t.norm() / x.norm()).sqrt() } else { 1.0 };
            let next = (x * g + inv_t / g) * 0.5;
            let diff = (next - x).norm();
            x = next;
            if diff <= 1e-3 {
                scaled = false;
            }
            if diff <= 1e-15 {
                return x;
            }
            if diff <= 1e-8 && !scaled {
                // quadratic convergence: one more step reaches round-off
                let inv_t = x.try_inverse().map(|i| i.transpose()).unwrap_or(x);
                return (x + inv_t) * 0.5;
            }
        }
    }
    let (u, _, v) = signed_svd(f);
    u * v.transpose()
}

/// Orthonormal contact frame with the normal as the third row.
///
/// The first tangent is built from the world axis least aligned with the
/// normal (ties resolved in x, y, z order) by Gram-Schmidt, the second is
/// `n × t1`. The returned matrix maps world vectors into the contact frame.
pub fn contact_frame(normal: &Vec3) -> Mat3 {
    let n = normal.normalize();
    let mut axis = 0;
    for i in 1..3 {
        if n[i].abs() < n[axis].abs() {
            axis = i;
        }
    }
    let mut a = Vec3::zeros();
    a[axis] = 1.0;
    let t1 = (a - n * n.dot(&a)).normalize();
    let t2 = n.cross(&t1);
    Mat3::from_rows(&[t1.transpose(), t2.transpose(), n.transpose()])
}

pub fn is_finite_mat(m: &Mat3) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn is_finite_vec(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// `max_ij |A_ij|`
pub fn inf_norm(m: &Mat3) -> Real {
    m.iter().fold(0.0, |acc: Real, x| acc.max(x.abs()))
}
