use crate::error::{Error, Result};
use crate::tensor::{strides_of, Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceMode {
    Sum,
    Mean,
    Max,
}

/// Shape bookkeeping for a reduction: which axes collapse and where each
/// input element lands in the output.
#[derive(Debug, Clone)]
pub struct ReducePlan {
    pub input_shape: Vec<usize>,
    pub axes: Vec<bool>,
    pub output_shape: Vec<usize>,
    /// Output stride of each input axis (0 for reduced axes).
    out_strides: Vec<usize>,
    pub group: usize,
}

impl ReducePlan {
    pub fn new(input_shape: &[usize], axes: &[usize], keep_dims: bool) -> Result<Self> {
        let rank = input_shape.len();
        let mut mask = vec![false; rank];
        for &a in axes {
            if a >= rank {
                return Err(Error::InvalidArgument(format!("reduce: axis {a} out of range for rank {rank}")));
            }
            mask[a] = true;
        }
        let kept: Vec<usize> = (0..rank).filter(|&a| !mask[a]).map(|a| input_shape[a]).collect();
        let kept_strides = strides_of(&kept);
        let mut out_strides = vec![0; rank];
        let mut k = 0;
        for a in 0..rank {
            if !mask[a] {
                out_strides[a] = kept_strides[k];
                k += 1;
            }
        }
        let output_shape = if keep_dims {
            (0..rank).map(|a| if mask[a] { 1 } else { input_shape[a] }).collect()
        } else if kept.is_empty() {
            vec![1]
        } else {
            kept
        };
        let group = (0..rank).filter(|&a| mask[a]).map(|a| input_shape[a]).product();
        Ok(ReducePlan {
            input_shape: input_shape.to_vec(),
            axes: mask,
            output_shape,
            out_strides,
            group,
        })
    }

    /// Output index for every input element, in input order.
    fn targets(&self) -> Vec<usize> {
        let numel: usize = self.input_shape.iter().product();
        let rank = self.input_shape.len();
        let mut index = vec![0usize; rank];
        let mut out = 0usize;
        let mut targets = Vec::with_capacity(numel);
        for _ in 0..numel {
            targets.push(out);
            for a in (0..rank).rev() {
                index[a] += 1;
                out += self.out_strides[a];
                if index[a] < self.input_shape[a] {
                    break;
                }
                out -= self.out_strides[a] * index[a];
                index[a] = 0;
            }
        }
        targets
    }
}

/// Reduces `axes` of `input`. An empty axis set returns the input unchanged.
/// For `Max`, also returns the winning input index per output element
/// (first occurrence on ties).
pub fn reduce<E: Element>(
    input: &Tensor<E>,
    axes: &[usize],
    mode: ReduceMode,
    keep_dims: bool,
) -> Result<(Tensor<E>, Option<Vec<u32>>)> {
    let plan = ReducePlan::new(input.shape(), axes, keep_dims)?;
    let numel_out: usize = plan.output_shape.iter().product();
    let targets = plan.targets();
    match mode {
        ReduceMode::Sum | ReduceMode::Mean => {
            let mut out = vec![E::zero(); numel_out];
            for (&t, &v) in targets.iter().zip(input.data()) {
                out[t] = out[t] + v;
            }
            if mode == ReduceMode::Mean {
                let n = E::from_usize(plan.group).expect("group size");
                out.iter_mut().for_each(|v| *v = *v / n);
            }
            Ok((Tensor::from_parts(plan.output_shape, out), None))
        }
        ReduceMode::Max => {
            let mut out = vec![E::neg_infinity(); numel_out];
            let mut arg = vec![u32::MAX; numel_out];
            for (i, (&t, &v)) in targets.iter().zip(input.data()).enumerate() {
                if arg[t] == u32::MAX || v > out[t] {
                    out[t] = v;
                    arg[t] = i as u32;
                }
            }
            Ok((Tensor::from_parts(plan.output_shape, out), Some(arg)))
        }
    }
}

pub fn reduce_backward<E: Element>(
    input_shape: &[usize],
    axes: &[usize],
    mode: ReduceMode,
    argmax: Option<&[u32]>,
    grad_out: &Tensor<E>,
) -> Result<Tensor<E>> {
    let plan = ReducePlan::new(input_shape, axes, false)?;
    let mut grad = Tensor::zeros(input_shape);
    match mode {
        ReduceMode::Sum | ReduceMode::Mean => {
            let scale = if mode == ReduceMode::Mean {
                E::one() / E::from_usize(plan.group).expect("group size")
            } else {
                E::one()
            };
            let go = grad_out.data();
            for (g, t) in grad.data_mut().iter_mut().zip(plan.targets()) {
                *g = go[t] * scale;
            }
        }
        ReduceMode::Max => {
            let arg = argmax.expect("max reduction records its argmax");
            let data = grad.data_mut();
            for (&i, &g) in arg.iter().zip(grad_out.data()) {
                data[i as usize] = data[i as usize] + g;
            }
        }
    }
    Ok(grad)
}
