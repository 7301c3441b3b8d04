//! Slice-level matrix-vector kernels shared by the layers.
//!
//! Weight matrices are row-major `out_dim x in_dim`; all kernels accumulate
//! in a fixed order so results are bit-reproducible.

/// y = W x
pub fn matvec(w: &[f64], out_dim: usize, in_dim: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), out_dim * in_dim);
    debug_assert_eq!(x.len(), in_dim);
    debug_assert_eq!(y.len(), out_dim);
    for (o, y_o) in y.iter_mut().enumerate() {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = 0.0;
        for (w_oi, x_i) in row.iter().zip(x.iter()) {
            acc += w_oi * x_i;
        }
        *y_o = acc;
    }
}

/// y += W x
pub fn matvec_add(w: &[f64], out_dim: usize, in_dim: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), out_dim * in_dim);
    for (o, y_o) in y.iter_mut().enumerate() {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = 0.0;
        for (w_oi, x_i) in row.iter().zip(x.iter()) {
            acc += w_oi * x_i;
        }
        *y_o += acc;
    }
}

/// dx += W^T dy
pub fn matvec_t_add(w: &[f64], out_dim: usize, in_dim: usize, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(w.len(), out_dim * in_dim);
    debug_assert_eq!(dy.len(), out_dim);
    debug_assert_eq!(dx.len(), in_dim);
    for (o, dy_o) in dy.iter().enumerate() {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        for (dx_i, w_oi) in dx.iter_mut().zip(row.iter()) {
            *dx_i += w_oi * dy_o;
        }
    }
}

/// dW += dy x^T
pub fn outer_add(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    debug_assert_eq!(dw.len(), dy.len() * x.len());
    let in_dim = x.len();
    for (o, dy_o) in dy.iter().enumerate() {
        let row = &mut dw[o * in_dim..(o + 1) * in_dim];
        for (dw_oi, x_i) in row.iter_mut().zip(x.iter()) {
            *dw_oi += dy_o * x_i;
        }
    }
}

/// a += b
pub fn add_assign(a: &mut [f64], b: &[f64]) {
    debug_assert_eq!(a.len(), b.len());
    for (a_i, b_i) in a.iter_mut().zip(b.iter()) {
        *a_i += b_i;
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
