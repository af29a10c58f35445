//! Same-padded stride-1 3D convolution over `[T, H, W, C]` clips.
//!
//! The input is zero-padded spatially once; each output frame is then a sum
//! of `kT * kH` strided GEMMs (see [`accumulate_frame`]). Kernel taps whose
//! temporal offset falls outside the clip are skipped rather than multiplied
//! by zero padding.

use crate::error::{Error, Result};
use crate::tensor::{ensure_finite, Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv3dGeometry {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kt: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
}

impl Conv3dGeometry {
    pub fn infer<E: Element>(
        input: &Tensor<E>,
        kernel: &Tensor<E>,
        bias: &Tensor<E>,
    ) -> Result<Self> {
        const OP: &str = "conv3d";
        if input.rank() != 4 {
            return Err(Error::shape(OP, "input rank", 4, input.rank()));
        }
        if kernel.rank() != 5 {
            return Err(Error::shape(OP, "kernel rank", 5, kernel.rank()));
        }
        let [t, h, w, cin] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
        let ks = kernel.shape();
        for (axis, &extent) in ["kT", "kH", "kW"].iter().zip(&ks[..3]) {
            if extent % 2 == 0 {
                return Err(Error::EvenKernel { op: OP, axis, extent });
            }
        }
        if ks[3] != cin {
            return Err(Error::shape(OP, "Cin (kernel axis 3)", cin, ks[3]));
        }
        let cout = ks[4];
        if bias.shape() != [cout] {
            return Err(Error::shape(OP, "bias", format!("[{cout}]"), format!("{:?}", bias.shape())));
        }
        Ok(Conv3dGeometry {
            t,
            h,
            w,
            cin,
            kt: ks[0],
            kh: ks[1],
            kw: ks[2],
            cout,
        })
    }

    /// Range of temporal kernel taps that land inside the clip for output frame `t`.
    fn valid_kt(&self, t: usize) -> (usize, usize) {
        let pad = self.kt / 2;
        let lo = pad.saturating_sub(t);
        let hi = (self.t + pad - t).min(self.kt);
        (lo, hi)
    }

    pub fn macs(&self) -> u64 {
        (self.t * self.h * self.w) as u64
            * (self.kt * self.kh * self.kw * self.cin * self.cout) as u64
    }
}

/// Input frames with `kH/2` and `kW/2` zeros around each spatial border.
struct Padded<E> {
    data: Vec<E>,
    hp: usize,
    wp: usize,
    cin: usize,
}

impl<E: Element> Padded<E> {
    fn new(g: &Conv3dGeometry, input: &[E]) -> Self {
        let (ph, pw) = (g.kh / 2, g.kw / 2);
        let (hp, wp) = (g.h + 2 * ph, g.w + 2 * pw);
        let mut data = vec![E::zero(); g.t * hp * wp * g.cin];
        let row = g.w * g.cin;
        for t in 0..g.t {
            for y in 0..g.h {
                let src = &input[(t * g.h + y) * row..][..row];
                let dst = ((t * hp + y + ph) * wp + pw) * g.cin;
                data[dst..dst + row].copy_from_slice(src);
            }
        }
        Padded { data, hp, wp, cin: g.cin }
    }

    fn frame(&self, t: usize) -> &[E] {
        let len = self.hp * self.wp * self.cin;
        &self.data[t * len..][..len]
    }
}

/// Output rows laid out with the padded row pitch: position `(y, x)` lives at
/// row `y * wp + x`; the `kW - 1` trailing rows of each line are scratch.
fn pitched_rows(g: &Conv3dGeometry, wp: usize) -> usize {
    (g.h - 1) * wp + g.w
}

/// Accumulates every valid `(kt, ky)` tap of output frame `t` into `out`
/// (pitched layout, `cout` columns). For a fixed `(kt, ky)` the input rows
/// `(y + ky, x .. x + kW)` are contiguous in the padded buffer, so each tap
/// row is a single strided GEMM without an im2col copy.
fn accumulate_frame<E: Element>(g: &Conv3dGeometry, padded: &Padded<E>, kernel: &[E], t: usize, out: &mut [E]) {
    let rows = pitched_rows(g, padded.wp);
    let k = g.kw * g.cin;
    let (lo, hi) = g.valid_kt(t);
    for kt in lo..hi {
        let frame = padded.frame(t + kt - g.kt / 2);
        for ky in 0..g.kh {
            let a = &frame[ky * padded.wp * g.cin..];
            let b = &kernel[(kt * g.kh + ky) * k * g.cout..][..k * g.cout];
            E::gemm(rows, k, g.cout, a, (g.cin as isize, 1), b, (g.cout as isize, 1), E::one(), out, (g.cout as isize, 1));
        }
    }
}

fn conv_same<E: Element>(g: &Conv3dGeometry, input: &[E], kernel: &[E], bias: &[E]) -> Vec<E> {
    let padded = Padded::new(g, input);
    let rows = pitched_rows(g, padded.wp);
    let mut pitched = vec![E::zero(); rows * g.cout];
    let mut out = vec![E::zero(); g.t * g.h * g.w * g.cout];
    for t in 0..g.t {
        for row in pitched.chunks_exact_mut(g.cout) {
            row.copy_from_slice(bias);
        }
        accumulate_frame(g, &padded, kernel, t, &mut pitched);
        for y in 0..g.h {
            let src = &pitched[y * padded.wp * g.cout..][..g.w * g.cout];
            out[((t * g.h + y) * g.w) * g.cout..][..g.w * g.cout].copy_from_slice(src);
        }
    }
    out
}

/// The kernel mirrored on every spatial axis with `Cin` and `Cout` swapped.
/// Same-padded convolution with it is the adjoint of the original.
fn flip_transpose<E: Element>(g: &Conv3dGeometry, kernel: &[E]) -> Vec<E> {
    let mut out = vec![E::zero(); kernel.len()];
    let taps = g.kt * g.kh * g.kw;
    for tap in 0..taps {
        let mirrored = taps - 1 - tap;
        for ci in 0..g.cin {
            for co in 0..g.cout {
                out[(mirrored * g.cout + co) * g.cin + ci] = kernel[(tap * g.cin + ci) * g.cout + co];
            }
        }
    }
    out
}

pub fn conv3d<E: Element>(input: &Tensor<E>, kernel: &Tensor<E>, bias: &Tensor<E>) -> Result<Tensor<E>> {
    let g = Conv3dGeometry::infer(input, kernel, bias)?;
    let out = conv_same(&g, input.data(), kernel.data(), bias.data());
    ensure_finite("conv3d", &out)?;
    Ok(Tensor::from_parts(vec![g.t, g.h, g.w, g.cout], out))
}

pub struct Conv3dGrads<E> {
    pub input: Option<Tensor<E>>,
    pub kernel: Tensor<E>,
    pub bias: Tensor<E>,
}

pub fn conv3d_backward<E: Element>(
    input: &Tensor<E>,
    kernel: &Tensor<E>,
    bias: &Tensor<E>,
    grad_out: &Tensor<E>,
    need_input: bool,
) -> Result<Conv3dGrads<E>> {
    let g = Conv3dGeometry::infer(input, kernel, bias)?;
    if grad_out.shape() != [g.t, g.h, g.w, g.cout] {
        return Err(Error::shape("conv3d_backward", "grad_out", format!("{:?}", [g.t, g.h, g.w, g.cout]), format!("{:?}", grad_out.shape())));
    }
    let mut grad_bias = vec![E::zero(); g.cout];
    for row in grad_out.data().chunks_exact(g.cout) {
        for (b, &v) in grad_bias.iter_mut().zip(row) {
            *b = *b + v;
        }
    }

    let padded = Padded::new(&g, input.data());
    let rows = pitched_rows(&g, padded.wp);
    let k = g.kw * g.cin;
    let mut grad_kernel = vec![E::zero(); kernel.len()];
    let mut pitched = vec![E::zero(); rows * g.cout];
    for t in 0..g.t {
        // grad_out in pitched layout with zeroed scratch rows
        pitched.fill(E::zero());
        for y in 0..g.h {
            let src = &grad_out.data()[((t * g.h + y) * g.w) * g.cout..][..g.w * g.cout];
            pitched[y * padded.wp * g.cout..][..g.w * g.cout].copy_from_slice(src);
        }
        let (lo, hi) = g.valid_kt(t);
        for kt in lo..hi {
            let frame = padded.frame(t + kt - g.kt / 2);
            for ky in 0..g.kh {
                let a = &frame[ky * padded.wp * g.cin..];
                let dk = &mut grad_kernel[(kt * g.kh + ky) * k * g.cout..][..k * g.cout];
                // dK[k, cout] += A^T[k, rows] * dOut[rows, cout]
                E::gemm(k, rows, g.cout, a, (1, g.cin as isize), &pitched, (g.cout as isize, 1), E::one(), dk, (g.cout as isize, 1));
            }
        }
    }

    let grad_input = need_input.then(|| {
        let adjoint = Conv3dGeometry {
            cin: g.cout,
            cout: g.cin,
            ..g
        };
        let flipped = flip_transpose(&g, kernel.data());
        let zeros = vec![E::zero(); g.cin];
        Tensor::from_parts(input.shape().to_vec(), conv_same(&adjoint, grad_out.data(), &flipped, &zeros))
    });
    Ok(Conv3dGrads {
        input: grad_input,
        kernel: Tensor::from_parts(kernel.shape().to_vec(), grad_kernel),
        bias: Tensor::from_parts(vec![g.cout], grad_bias),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_yields_bias() {
        let input = Tensor::<f32>::zeros(&[3, 4, 5, 2]);
        let kernel = Tensor::from_fn(&[3, 3, 3, 2, 3], |i| (i[4] as f32 + 1.0) * 0.1);
        let bias = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let out = conv3d(&input, &kernel, &bias).unwrap();
        assert_eq!(out.shape(), &[3, 4, 5, 3]);
        for row in out.data().chunks(3) {
            assert_eq!(row, bias.data());
        }
    }

    #[test]
    fn unit_kernel_is_identity() {
        let input = Tensor::<f64>::from_fn(&[2, 3, 4, 1], |i| (i[0] * 12 + i[1] * 4 + i[2]) as f64 - 7.5);
        let kernel = Tensor::full(&[1, 1, 1, 1, 1], 1.0);
        let out = conv3d(&input, &kernel, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn rejects_even_kernel_and_channel_mismatch() {
        let input = Tensor::<f32>::zeros(&[2, 4, 4, 2]);
        let even = Tensor::zeros(&[3, 2, 3, 2, 1]);
        assert!(matches!(
            conv3d(&input, &even, &Tensor::zeros(&[1])),
            Err(Error::EvenKernel { axis: "kH", extent: 2, .. })
        ));
        let wrong_cin = Tensor::zeros(&[3, 3, 3, 3, 1]);
        let err = conv3d(&input, &wrong_cin, &Tensor::zeros(&[1])).unwrap_err();
        assert!(err.to_string().contains("Cin"), "{err}");
    }

    #[test]
    fn kernel_longer_than_clip() {
        // kT = 5 on a 2-frame clip: every frame sees only part of the kernel.
        let input = Tensor::<f64>::from_fn(&[2, 1, 1, 1], |i| i[0] as f64 + 1.0);
        let kernel = Tensor::from_fn(&[5, 1, 1, 1, 1], |i| (i[0] + 1) as f64);
        let out = conv3d(&input, &kernel, &Tensor::zeros(&[1])).unwrap();
        // out[0] = k[2]*x0 + k[3]*x1 = 3 + 8; out[1] = k[1]*x0 + k[2]*x1 = 2 + 6
        assert_eq!(out.data(), &[11.0, 8.0]);
    }
}
