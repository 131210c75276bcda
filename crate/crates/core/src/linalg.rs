//! Small dense kernels shared by the layers.
//!
//! Linear weights are stored `[in × out]` row-major so the forward pass is a
//! sequence of contiguous axpy updates and the input gradient is a sequence
//! of contiguous dot products. Summation order is fixed, so results are
//! bit-reproducible for a given binary.

use crate::Real;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[r, :] = x[r, :] · w (+ bias)` for `rows` rows.
///
/// `x` is `[rows × n_in]`, `w` is `[n_in × n_out]`, `out` is `[rows × n_out]`.
pub fn linear_forward<T: Real>(
    x: &[T],
    w: &[T],
    bias: Option<&[T]>,
    rows: usize,
    n_in: usize,
    n_out: usize,
    out: &mut [T],
) {
    debug_assert_eq!(x.len(), rows * n_in);
    debug_assert_eq!(w.len(), n_in * n_out);
    debug_assert_eq!(out.len(), rows * n_out);
    for r in 0..rows {
        let o = &mut out[r * n_out..(r + 1) * n_out];
        match bias {
            Some(b) => o.copy_from_slice(b),
            None => o.iter_mut().for_each(|v| *v = T::zero()),
        }
        let xr = &x[r * n_in..(r + 1) * n_in];
        for (i, &xi) in xr.iter().enumerate() {
            if xi != T::zero() {
                axpy(xi, &w[i * n_out..(i + 1) * n_out], o);
            }
        }
    }
}

/// Reverse of [`linear_forward`]: accumulates into `dw`, `db` and (when given)
/// `dx`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    rows: usize,
    n_in: usize,
    n_out: usize,
    dx: Option<&mut [T]>,
    dw: &mut [T],
    db: Option<&mut [T]>,
) {
    debug_assert_eq!(dy.len(), rows * n_out);
    for r in 0..rows {
        let dyr = &dy[r * n_out..(r + 1) * n_out];
        let xr = &x[r * n_in..(r + 1) * n_in];
        for (i, &xi) in xr.iter().enumerate() {
            if xi != T::zero() {
                axpy(xi, dyr, &mut dw[i * n_out..(i + 1) * n_out]);
            }
        }
    }
    if let Some(db) = db {
        for r in 0..rows {
            axpy(T::one(), &dy[r * n_out..(r + 1) * n_out], db);
        }
    }
    if let Some(dx) = dx {
        for r in 0..rows {
            let dyr = &dy[r * n_out..(r + 1) * n_out];
            let dxr = &mut dx[r * n_in..(r + 1) * n_in];
            for (i, d) in dxr.iter_mut().enumerate() {
                *d += dot(&w[i * n_out..(i + 1) * n_out], dyr);
            }
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// `x · σ(x)`
#[inline]
pub fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

/// Derivative of [`silu`].
#[inline]
pub fn silu_grad<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}
