//! Row kernels evaluated in a ray frame (see [`crate::grid::RayFrame`]).
//! Each row is one line, sampled at spacing `h` in the direction of
//! propagation. All quadratures are the trapezoid rule on cell centres, and
//! the derivative kernels are the exact derivatives of the forward kernels.

use crate::grid::{cumsum_from_left, cumsum_from_right};

/// `h * sum_j a_j b_j`.
#[inline]
pub(crate) fn line_dot(a: &[f64], b: &[f64], h: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * h
}

/// `exp(-int_t^inf alpha)` at every sample of the row.
pub(crate) fn exit_attenuation(alpha: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; alpha.len()];
    cumsum_from_right(alpha, h, &mut out);
    for v in &mut out {
        *v = (-*v).exp();
    }
    out
}

/// Attenuated line integral `h sum_j src_j exp(-A+_j)` of one row.
pub(crate) fn attenuated_line(alpha: &[f64], src: &[f64], h: f64) -> f64 {
    line_dot(&exit_attenuation(alpha, h), src, h)
}

/// Ballistic solution along a row:
/// `out_j = sum_{i<=j} c_ji src_i exp(-int_{t_i}^{t_j} alpha)` with trapezoid
/// weights `c_ji = h` for `i < j` and `h / 2` for `i = j`.
pub(crate) fn ballistic_row(alpha: &[f64], src: &[f64], h: f64, out: &mut [f64]) {
    // carry_j = sum_{i<j} h src_i exp(-int_{t_i}^{t_j} alpha)
    let mut carry = 0.0;
    let n = alpha.len();
    for j in 0..n {
        out[j] = carry + 0.5 * h * src[j];
        if j + 1 < n {
            let step = 0.5 * h * (alpha[j] + alpha[j + 1]);
            carry = (carry + h * src[j]) * (-step).exp();
        }
    }
}

/// Directional derivative of [`ballistic_row`] with respect to `alpha` in the
/// direction `dalpha`:
/// `out_j = -sum_{i<j} h src_i exp(-(P_j - P_i)) (Q_j - Q_i)`, where `P`, `Q`
/// are the trapezoid running integrals of `alpha` and `dalpha`.
pub(crate) fn ballistic_row_derivative(alpha: &[f64], src: &[f64], dalpha: &[f64], h: f64, out: &mut [f64]) {
    let n = alpha.len();
    let mut q = vec![0.0; n];
    cumsum_from_left(dalpha, h, &mut q);
    // s_j = sum_{i<j} h src_i e^{-(P_j-P_i)},  t_j = same weighted by Q_i
    let mut s = 0.0;
    let mut t = 0.0;
    for j in 0..n {
        out[j] = -(q[j] * s - t);
        if j + 1 < n {
            let decay = (-0.5 * h * (alpha[j] + alpha[j + 1])).exp();
            s = (s + h * src[j]) * decay;
            t = (t + h * src[j] * q[j]) * decay;
        }
    }
}

/// Weight `w[u, v]` along a row:
/// `w_j = -(trapezoid running integral from the left of v exp(-U+))_j`,
/// with `U+` the beam transform of `u` ahead of each sample.
pub(crate) fn weight_row(u: &[f64], v: &[f64], h: f64, out: &mut [f64]) {
    let att = exit_attenuation(u, h);
    let weighted: Vec<f64> = att.iter().zip(v).map(|(e, x)| e * x).collect();
    cumsum_from_left(&weighted, h, out);
    for w in out.iter_mut() {
        *w = -*w;
    }
}
