use crate::error::{Error, Result};
use crate::tensor::{ensure_finite, Element, Tensor};

fn dims<E: Element>(input: &Tensor<E>, weight: &Tensor<E>, bias: &Tensor<E>) -> Result<(usize, usize, usize)> {
    if weight.rank() != 2 {
        return Err(Error::shape("dense", "weight rank", 2, weight.rank()));
    }
    let (k, m) = (weight.shape()[0], weight.shape()[1]);
    let trailing = *input.shape().last().expect("rank >= 1");
    if trailing != k {
        return Err(Error::shape("dense", "trailing axis", k, trailing));
    }
    if bias.shape() != [m] {
        return Err(Error::shape("dense", "bias", format!("[{m}]"), format!("{:?}", bias.shape())));
    }
    Ok((input.len() / k, k, m))
}

/// Affine map over the trailing axis, broadcast over the leading ones.
pub fn dense<E: Element>(input: &Tensor<E>, weight: &Tensor<E>, bias: &Tensor<E>) -> Result<Tensor<E>> {
    let (rows, k, m) = dims(input, weight, bias)?;
    let mut out = Vec::with_capacity(rows * m);
    for _ in 0..rows {
        out.extend_from_slice(bias.data());
    }
    E::gemm(rows, k, m, input.data(), (k as isize, 1), weight.data(), (m as isize, 1), E::one(), &mut out, (m as isize, 1));
    ensure_finite("dense", &out)?;
    let mut shape = input.shape().to_vec();
    *shape.last_mut().expect("rank >= 1") = m;
    Ok(Tensor::from_parts(shape, out))
}

/// Gradients with respect to (input, weight, bias).
pub fn dense_backward<E: Element>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: &Tensor<E>,
    grad_out: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let (rows, k, m) = dims(input, weight, bias)?;
    let mut gi = vec![E::zero(); rows * k];
    E::gemm(rows, m, k, grad_out.data(), (m as isize, 1), weight.data(), (1, m as isize), E::zero(), &mut gi, (k as isize, 1));
    let mut gw = vec![E::zero(); k * m];
    E::gemm(k, rows, m, input.data(), (1, k as isize), grad_out.data(), (m as isize, 1), E::zero(), &mut gw, (m as isize, 1));
    let mut gb = vec![E::zero(); m];
    for row in grad_out.data().chunks_exact(m) {
        for (b, &v) in gb.iter_mut().zip(row) {
            *b = *b + v;
        }
    }
    Ok((
        Tensor::from_parts(input.shape().to_vec(), gi),
        Tensor::from_parts(weight.shape().to_vec(), gw),
        Tensor::from_parts(vec![m], gb),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_arithmetic() {
        let x = Tensor::<f64>::new(vec![2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        assert_eq!(dense(&x, &w, &b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn identity_broadcasts_over_leading_axes() {
        let x = Tensor::<f32>::from_fn(&[2, 3, 4], |i| (i[0] * 12 + i[1] * 4 + i[2]) as f32);
        let w = Tensor::from_fn(&[4, 4], |i| if i[0] == i[1] { 1.0 } else { 0.0 });
        assert_eq!(dense(&x, &w, &Tensor::zeros(&[4])).unwrap(), x);
    }

    #[test]
    fn trailing_mismatch() {
        let x = Tensor::<f32>::zeros(&[3]);
        let w = Tensor::zeros(&[2, 2]);
        assert!(dense(&x, &w, &Tensor::zeros(&[2])).is_err());
    }
}
