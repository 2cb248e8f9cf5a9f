use crate::error::{invalid, Result};
use crate::geometry::{dist2, Vec3};

/// Gaussian-kernel transfer of bone displacements to skin points:
/// `d(x) = sum_j w_j d_j / sum_j w_j` with `w_j = exp(-|x - b_j|^2 / h^2)`.
///
/// Weights are shifted by the nearest bone point before exponentiation so
/// distant skin points do not underflow; the shift cancels in the ratio.
pub fn kernel_transfer_oracle(bone: &[Vec3], bone_disp: &[Vec3], skin: &[Vec3], h: f64) -> Result<Vec<Vec3>> {
    if bone.is_empty() || bone.len() != bone_disp.len() {
        return Err(invalid("kernel transfer needs non-empty, aligned bone points and displacements"));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("kernel bandwidth must be positive, got {h}")));
    }
    let inv_h2 = 1.0 / (h * h);
    let mut d2 = vec![0.0; bone.len()];
    Ok(skin
        .iter()
        .map(|&x| {
            let mut nearest = f64::INFINITY;
            for (slot, &b) in d2.iter_mut().zip(bone) {
                *slot = dist2(x, b);
                nearest = nearest.min(*slot);
            }
            let mut acc = [0.0; 3];
            let mut total = 0.0;
            for (&dj, v) in d2.iter().zip(bone_disp) {
                let w = (-(dj - nearest) * inv_h2).exp();
                total += w;
                for c in 0..3 {
                    acc[c] += w * v[c];
                }
            }
            acc.map(|a| a / total)
        })
        .collect())
}
