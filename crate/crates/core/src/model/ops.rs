//! Dense kernels on row-major slices.

use super::Scalar;

/// Dot product with eight independent accumulators so the loop vectorizes;
/// the summation order is fixed, so results are reproducible.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

/// `out += W x` for `W` of shape `rows x cols`.
pub(crate) fn matvec_acc<T: Scalar>(w: &[T], cols: usize, x: &[T], out: &mut [T]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = *o + dot(row, x);
    }
}

/// `out += Wᵀ g`
pub(crate) fn matvec_t_acc<T: Scalar>(w: &[T], cols: usize, g: &[T], out: &mut [T]) {
    for (gr, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gr != T::zero() {
            axpy(*gr, row, out);
        }
    }
}

/// `dW += g xᵀ`
pub(crate) fn outer_acc<T: Scalar>(dw: &mut [T], cols: usize, g: &[T], x: &[T]) {
    for (gr, row) in g.iter().zip(dw.chunks_exact_mut(cols)) {
        if *gr != T::zero() {
            axpy(*gr, x, row);
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub(crate) fn leaky_relu<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        slope * x
    }
}

#[inline]
pub(crate) fn leaky_relu_grad<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        slope
    }
}

/// Numerically stable softmax, in place.
pub(crate) fn softmax<T: Scalar>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum = sum + *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..21).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }

    #[test]
    fn transposed_products() {
        // W = [[1, 2], [3, 4], [5, 6]]
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut y = [0.0; 3];
        matvec_acc(&w, 2, &[1.0, -1.0], &mut y);
        assert_eq!(y, [-1.0, -1.0, -1.0]);
        let mut x = [0.0; 2];
        matvec_t_acc(&w, 2, &[1.0, 0.0, 2.0], &mut x);
        assert_eq!(x, [11.0, 14.0]);
        let mut dw = [0.0; 6];
        outer_acc(&mut dw, 2, &[1.0, 2.0, 3.0], &[1.0, 10.0]);
        assert_eq!(dw, [1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
    }

    #[test]
    fn softmax_is_normalized_and_stable() {
        let mut v = [1000.0f64, 1000.0];
        softmax(&mut v);
        assert_eq!(v, [0.5, 0.5]);
    }
}
