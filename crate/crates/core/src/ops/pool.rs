use crate::error::{Error, Result};
use crate::tensor::{ensure_finite, Element, Tensor};

/// Pooling window over the `(T, H, W)` axes.
pub type Window = (usize, usize, usize);

pub fn pooled_extent(extent: usize, window: usize) -> usize {
    extent.div_ceil(window)
}

pub fn pooled_shape(shape: &[usize], window: Window) -> Vec<usize> {
    vec![
        pooled_extent(shape[0], window.0),
        pooled_extent(shape[1], window.1),
        pooled_extent(shape[2], window.2),
        shape[3],
    ]
}

fn validate<E: Element>(input: &Tensor<E>, window: Window) -> Result<()> {
    if input.rank() != 4 {
        return Err(Error::shape("maxpool", "input rank", 4, input.rank()));
    }
    for (axis, w) in [window.0, window.1, window.2].into_iter().enumerate() {
        if w == 0 {
            return Err(Error::ZeroWindow { op: "maxpool", axis });
        }
    }
    Ok(())
}

/// Ceil-mode max pooling. Returns the pooled tensor and, per output element,
/// the linear input index that won (lowest index on ties).
pub fn maxpool<E: Element>(input: &Tensor<E>, window: Window) -> Result<(Tensor<E>, Vec<u32>)> {
    validate(input, window)?;
    let s = input.shape();
    let (t, h, w, c) = (s[0], s[1], s[2], s[3]);
    let out_shape = pooled_shape(s, window);
    let (ot, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
    let mut out = Vec::with_capacity(ot * oh * ow * c);
    let mut argmax = Vec::with_capacity(out.capacity());
    let data = input.data();
    let mut best = vec![(E::neg_infinity(), u32::MAX); c];
    for pt in 0..ot {
        let t_range = pt * window.0..((pt + 1) * window.0).min(t);
        for py in 0..oh {
            let y_range = py * window.1..((py + 1) * window.1).min(h);
            for px in 0..ow {
                let x_range = px * window.2..((px + 1) * window.2).min(w);
                best.fill((E::neg_infinity(), u32::MAX));
                for it in t_range.clone() {
                    for iy in y_range.clone() {
                        for ix in x_range.clone() {
                            let base = ((it * h + iy) * w + ix) * c;
                            for (ch, slot) in best.iter_mut().enumerate() {
                                let v = data[base + ch];
                                if slot.1 == u32::MAX || v > slot.0 {
                                    *slot = (v, (base + ch) as u32);
                                }
                            }
                        }
                    }
                }
                for &(v, i) in &best {
                    out.push(v);
                    argmax.push(i);
                }
            }
        }
    }
    ensure_finite("maxpool", &out)?;
    Ok((Tensor::from_parts(out_shape, out), argmax))
}

pub fn maxpool_backward<E: Element>(input_shape: &[usize], argmax: &[u32], grad_out: &Tensor<E>) -> Tensor<E> {
    let mut grad = Tensor::zeros(input_shape);
    let data = grad.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        data[i as usize] = data[i as usize] + g;
    }
    grad
}

/// Number of comparisons a ceil-mode max pool performs.
pub fn comparisons(shape: &[usize], window: Window) -> u64 {
    let per_axis = |extent: usize, win: usize| -> Vec<usize> {
        (0..pooled_extent(extent, win))
            .map(|o| ((o + 1) * win).min(extent) - o * win)
            .collect()
    };
    let (ts, ys, xs) = (
        per_axis(shape[0], window.0),
        per_axis(shape[1], window.1),
        per_axis(shape[2], window.2),
    );
    let mut total = 0u64;
    for &a in &ts {
        for &b in &ys {
            for &d in &xs {
                total += (a * b * d - 1) as u64;
            }
        }
    }
    total * shape[3] as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_window_is_identity() {
        let x = Tensor::<f32>::from_fn(&[2, 3, 4, 2], |i| (i[0] * 7 + i[1] * 5 + i[2] * 3 + i[3]) as f32);
        let (y, _) = maxpool(&x, (1, 1, 1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ceil_mode_keeps_trailing_frame() {
        let x = Tensor::<f32>::from_fn(&[5, 1, 1, 1], |i| i[0] as f32);
        let (y, arg) = maxpool(&x, (2, 1, 1)).unwrap();
        assert_eq!(y.shape(), &[3, 1, 1, 1]);
        assert_eq!(y.data(), &[1.0, 3.0, 4.0]);
        assert_eq!(arg, vec![1, 3, 4]);
    }

    #[test]
    fn oversized_window_collapses_axis() {
        let x = Tensor::<f32>::from_fn(&[3, 2, 2, 1], |i| (i[0] + i[1] + i[2]) as f32);
        let (y, _) = maxpool(&x, (8, 1, 1)).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let x = Tensor::<f32>::full(&[2, 2, 2, 1], 1.0);
        let (_, arg) = maxpool(&x, (2, 2, 2)).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn zero_window_is_rejected() {
        let x = Tensor::<f32>::zeros(&[2, 2, 2, 1]);
        assert!(matches!(maxpool(&x, (1, 0, 1)), Err(Error::ZeroWindow { axis: 1, .. })));
    }

    #[test]
    fn comparison_count() {
        // 5 frames, window 2: windows of 2, 2, 1 → 1 + 1 + 0 comparisons.
        assert_eq!(comparisons(&[5, 1, 1, 3], (2, 1, 1)), 6);
    }
}
