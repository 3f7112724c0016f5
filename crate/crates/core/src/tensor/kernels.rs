//! Forward math shared by eager tensor methods and graph ops.

use super::{Element, Result, TensorError};

pub(crate) fn transpose<T: Element>(data: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Splits a shape around `axis` into `(outer, len, inner)` extents.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::Axis { axis, shape: shape.to_vec() });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

pub(crate) fn softmax<T: Element>(data: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| o * len * inner + a * inner + i;
            let max = (0..len).map(|a| data[at(a)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for a in 0..len {
                let e = (data[at(a)] - max).exp();
                out[at(a)] = e;
                total = total + e;
            }
            for a in 0..len {
                out[at(a)] = out[at(a)] / total;
            }
        }
    }
    out
}

/// `dx = y ⊙ (dy − Σ_axis dy⊙y)`.
pub(crate) fn softmax_backward<T: Element>(y: &[T], dy: &[T], dx: &mut [T], outer: usize, len: usize, inner: usize) {
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| o * len * inner + a * inner + i;
            let dot: T = (0..len).map(|a| dy[at(a)] * y[at(a)]).sum();
            for a in 0..len {
                dx[at(a)] = dx[at(a)] + y[at(a)] * (dy[at(a)] - dot);
            }
        }
    }
}

/// Log-softmax of one row, stabilized by max subtraction.
pub(crate) fn log_softmax_row<T: Element>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    row.iter().map(|&v| v - lse).collect()
}

/// Row-wise normalization over the last axis. Returns `(out, xhat, rstd)`.
pub(crate) fn layer_norm<T: Element>(x: &[T], gain: &[T], bias: &[T], d: usize, eps: T) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / d;
    let dt = T::from_usize(d).expect("extent fits float");
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() / dt;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dt;
        let rs = (var + eps).sqrt().recip();
        rstd[r] = rs;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[r * d + j] = h;
            out[r * d + j] = gain[j] * h + bias[j];
        }
    }
    (out, xhat, rstd)
}

const GELU_C: f64 = 0.044_715;

fn sqrt_2_over_pi<T: Element>() -> T {
    T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt())
}

/// Tanh-approximated GELU, `½x(1 + tanh u)`, evaluated as `x·σ(2u)`.
pub(crate) fn gelu<T: Element>(x: T) -> T {
    x * sigmoid(gelu_2u(x))
}

pub(crate) fn gelu_grad<T: Element>(x: T) -> T {
    let c = T::from_f64_lossy(GELU_C);
    let three = T::from_f64_lossy(3.0);
    let two_k = T::from_f64_lossy(2.0) * sqrt_2_over_pi::<T>();
    let s = sigmoid(gelu_2u(x));
    s + x * s * (T::one() - s) * two_k * (T::one() + three * c * x * x)
}

fn gelu_2u<T: Element>(x: T) -> T {
    let c = T::from_f64_lossy(GELU_C);
    T::from_f64_lossy(2.0) * sqrt_2_over_pi::<T>() * (x + c * x * x * x)
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus<T: Element>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
