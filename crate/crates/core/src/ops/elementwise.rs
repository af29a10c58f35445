use crate::error::{Error, Result};
use crate::tensor::{ensure_finite, Element, Tensor};

pub fn relu<E: Element>(x: &Tensor<E>) -> Tensor<E> {
    x.map(|v| if v > E::zero() { v } else { E::zero() })
}

pub fn relu_backward<E: Element>(x: &Tensor<E>, grad_out: &Tensor<E>) -> Tensor<E> {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > E::zero() { g } else { E::zero() })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Logistic function, evaluated as `e^x / (1 + e^x)` for negative `x` so the
/// exponential never overflows.
pub fn sigmoid_scalar<E: Element>(x: E) -> E {
    if x >= E::zero() {
        E::one() / (E::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}

pub fn sigmoid<E: Element>(x: &Tensor<E>) -> Tensor<E> {
    x.map(sigmoid_scalar)
}

/// Gradient of the sigmoid given its output `y`.
pub fn sigmoid_backward<E: Element>(y: &Tensor<E>, grad_out: &Tensor<E>) -> Tensor<E> {
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| g * s * (E::one() - s))
        .collect();
    Tensor::from_parts(y.shape().to_vec(), data)
}

fn same_shape<E: Element>(op: &'static str, a: &Tensor<E>, b: &Tensor<E>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, "operand", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

fn zip_with<E: Element>(
    op: &'static str,
    a: &Tensor<E>,
    b: &Tensor<E>,
    f: impl Fn(E, E) -> E,
) -> Result<Tensor<E>> {
    same_shape(op, a, b)?;
    let data: Vec<E> = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    ensure_finite(op, &data)?;
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

pub fn add<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn mul<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    zip_with("mul", a, b, |x, y| x * y)
}

/// True when `mask` has shape `[x.shape[0], 1, ..., 1]` with the rank of `x`.
pub fn is_leading_mask(mask: &[usize], x: &[usize]) -> bool {
    mask.len() == x.len() && mask[0] == x[0] && mask[1..].iter().all(|&n| n == 1)
}

/// Scales every slice `x[t, ...]` by `mask[t]`.
pub fn broadcast_mul<E: Element>(x: &Tensor<E>, mask: &Tensor<E>) -> Result<Tensor<E>> {
    if !is_leading_mask(mask.shape(), x.shape()) {
        let mut expected = vec![1; x.rank()];
        expected[0] = x.shape()[0];
        return Err(Error::shape(
            "broadcast_mul",
            "mask",
            format!("{expected:?}"),
            format!("{:?}", mask.shape()),
        ));
    }
    let per = x.len() / x.shape()[0];
    let mut data = Vec::with_capacity(x.len());
    for (chunk, &m) in x.data().chunks_exact(per).zip(mask.data()) {
        data.extend(chunk.iter().map(|&v| v * m));
    }
    ensure_finite("broadcast_mul", &data)?;
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

/// Gradients with respect to `(x, mask)`.
pub fn broadcast_mul_backward<E: Element>(
    x: &Tensor<E>,
    mask: &Tensor<E>,
    grad_out: &Tensor<E>,
) -> (Tensor<E>, Tensor<E>) {
    let per = x.len() / x.shape()[0];
    let mut gx = Vec::with_capacity(x.len());
    let mut gm = Vec::with_capacity(mask.len());
    for ((xs, gs), &m) in x
        .data()
        .chunks_exact(per)
        .zip(grad_out.data().chunks_exact(per))
        .zip(mask.data())
    {
        gx.extend(gs.iter().map(|&g| g * m));
        gm.push(xs.iter().zip(gs).fold(E::zero(), |acc, (&v, &g)| acc + v * g));
    }
    (
        Tensor::from_parts(x.shape().to_vec(), gx),
        Tensor::from_parts(mask.shape().to_vec(), gm),
    )
}
