use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the logarithm.
pub const BCE_EPS: f64 = 1e-7;

fn check<E: Element>(predictions: &Tensor<E>, labels: &Tensor<E>) -> Result<()> {
    if predictions.shape() != labels.shape() {
        return Err(Error::shape(
            "bce_loss",
            "labels",
            format!("{:?}", predictions.shape()),
            format!("{:?}", labels.shape()),
        ));
    }
    if let Some(&bad) = labels.data().iter().find(|&&y| y != E::zero() && y != E::one()) {
        return Err(Error::InvalidLabel(bad.as_f64()));
    }
    Ok(())
}

fn clamp<E: Element>(p: E) -> (E, bool) {
    let eps = E::from_f64_lossy(BCE_EPS);
    if p < eps {
        (eps, true)
    } else if p > E::one() - eps {
        (E::one() - eps, true)
    } else {
        (p, false)
    }
}

/// Mean binary cross-entropy, as a one-element tensor.
pub fn bce_loss<E: Element>(predictions: &Tensor<E>, labels: &Tensor<E>) -> Result<Tensor<E>> {
    check(predictions, labels)?;
    let n = E::from_usize(predictions.len()).expect("count");
    let total = predictions
        .data()
        .iter()
        .zip(labels.data())
        .fold(E::zero(), |acc, (&p, &y)| {
            let (p, _) = clamp(p);
            acc - (y * p.ln() + (E::one() - y) * (E::one() - p).ln())
        });
    Ok(Tensor::scalar(total / n))
}

pub fn bce_loss_backward<E: Element>(predictions: &Tensor<E>, labels: &Tensor<E>, grad_out: E) -> Tensor<E> {
    let n = E::from_usize(predictions.len()).expect("count");
    let data = predictions
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&p, &y)| {
            let (pc, clamped) = clamp(p);
            if clamped {
                E::zero()
            } else {
                grad_out * ((E::one() - y) / (E::one() - pc) - y / pc) / n
            }
        })
        .collect();
    Tensor::from_parts(predictions.shape().to_vec(), data)
}

/// Scalar form used by the evaluation code.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}
