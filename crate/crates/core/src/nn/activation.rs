use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| x.max(0.0))
}

/// Passes `grad` where `input > 0`; the derivative at exactly zero is zero.
pub fn relu_backward(input: &Tensor, grad: &Tensor) -> Result<Tensor> {
    if input.shape() != grad.shape() {
        return Err(Error::Shape(format!(
            "relu grad {:?} vs input {:?}",
            grad.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(input.shape(), data)
}
