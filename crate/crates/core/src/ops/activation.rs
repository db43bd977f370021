//! Elementwise activations.

use crate::tensor::{Element, Tensor};

/// Elementwise `max(0, x)`.
pub fn relu<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// ReLU gradient; the subgradient at exactly 0 is defined as 0.
pub fn relu_backward<T: Element>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut grad_in = grad_out.clone();
    for (g, &x) in grad_in.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    grad_in
}

/// Numerically stable logistic function, split by sign so the exponential
/// argument is never positive. Saturated values are clamped to the nearest
/// representable numbers inside (0, 1), keeping the output strictly open.
pub fn sigmoid<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    let two = T::one() + T::one();
    let hi = T::one() - T::epsilon() / two;
    let lo = T::min_positive_value();
    input.map(|x| {
        let y = if x >= T::zero() {
            T::one() / (T::one() + (-x).exp())
        } else {
            let e = x.exp();
            e / (T::one() + e)
        };
        y.max(lo).min(hi)
    })
}

/// Sigmoid gradient from the forward output: `dy * y * (1 - y)`.
pub fn sigmoid_backward<T: Element>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut grad_in = grad_out.clone();
    for (g, &y) in grad_in.data_mut().iter_mut().zip(output.data()) {
        *g = *g * y * (T::one() - y);
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn relu_clamps_negatives() {
        let t = Tensor::from_vec(Shape::nhwc(1, 1, 1, 2), vec![-3.0f32, 3.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 3.0]);
    }

    #[test]
    fn relu_gradient_zero_at_origin() {
        let t = Tensor::from_vec(Shape::nhwc(1, 1, 1, 3), vec![-1.0f64, 0.0, 2.0]).unwrap();
        let g = Tensor::filled(t.shape(), 1.0f64);
        assert_eq!(relu_backward(&t, &g).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let t = Tensor::from_vec(Shape::nhwc(1, 1, 1, 1), vec![0.0f64]).unwrap();
        assert_eq!(sigmoid(&t).data(), &[0.5]);
    }

    #[test]
    fn sigmoid_gradient_at_zero_is_quarter() {
        let t = Tensor::from_vec(Shape::nhwc(1, 1, 1, 1), vec![0.0f64]).unwrap();
        let y = sigmoid(&t);
        let g = Tensor::filled(t.shape(), 1.0f64);
        assert_eq!(sigmoid_backward(&y, &g).data(), &[0.25]);
    }

    #[test]
    fn sigmoid_stays_strictly_inside_unit_interval() {
        let t = Tensor::from_vec(
            Shape::nhwc(1, 1, 1, 4),
            vec![-500.0f32, -30.0, 30.0, 500.0],
        )
        .unwrap();
        for &y in sigmoid(&t).data() {
            assert!(y > 0.0 && y < 1.0, "saturated to {y}");
        }
    }
}
