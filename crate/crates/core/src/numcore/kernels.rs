//! Slice-level numeric kernels used by the tape.

use crate::scalar::Scalar;

/// `a [m×k] · b [k×n]`.
pub fn gemm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// `a [m×k] · bᵀ` where `b` is `[n×k]`.
pub fn gemm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).fold(T::zero(), |s, (&x, &y)| s + x * y);
        }
    }
    out
}

/// `aᵀ · b` where `a` is `[m×k]` and `b` is `[m×n]`; result `[k×n]`.
pub fn gemm_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    let inner = T::lit(GELU_C) * (x + T::lit(GELU_A) * x * x * x);
    half * x * (T::one() + inner.tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * x * x)
}
