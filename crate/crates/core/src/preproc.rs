//! Clip preprocessing: framerate reduction, grayscale conversion and
//! resizing, frame differencing and single-level Haar down-sampling.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decoded frames before any preprocessing, shaped `[T, H, W, C]` with
/// `C` = 1 (gray) or 3 (RGB) and values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawClip {
    pub frames: Tensor<f32>,
    pub fps: f64,
    pub source_id: String,
}

impl RawClip {
    pub fn new(frames: Tensor<f32>, fps: f64, source_id: impl Into<String>) -> Result<Self> {
        if frames.rank() != 4 {
            return Err(Error::shape("RawClip", "rank", 4, frames.rank()));
        }
        let c = frames.shape()[3];
        if c != 1 && c != 3 {
            return Err(Error::shape("RawClip", "channels", "1 or 3", c));
        }
        if frames.shape()[0] < 2 {
            return Err(Error::InvalidArgument(format!("a clip needs at least 2 frames, got {}", frames.shape()[0])));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        Ok(RawClip {
            frames,
            fps,
            source_id: source_id.into(),
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn duration(&self) -> f64 {
        self.frame_count() as f64 / self.fps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocConfig {
    pub target_fps: f64,
    /// Resize target ahead of the wavelet transform.
    pub target_hw_pre_dwt: (usize, usize),
    /// Resize target when the wavelet transform is off.
    pub target_hw_no_dwt: (usize, usize),
    pub use_wavelet: bool,
    pub difference_frames: bool,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        PreprocConfig {
            target_fps: 5.0,
            target_hw_pre_dwt: (300, 400),
            target_hw_no_dwt: (150, 200),
            use_wavelet: false,
            difference_frames: true,
        }
    }
}

impl PreprocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_fps > 0.0 && self.target_fps.is_finite()) {
            return Err(Error::InvalidConfig(format!("target_fps must be positive, got {}", self.target_fps)));
        }
        for (name, (h, w)) in [("target_hw_pre_dwt", self.target_hw_pre_dwt), ("target_hw_no_dwt", self.target_hw_no_dwt)] {
            if h == 0 || w == 0 {
                return Err(Error::InvalidConfig(format!("{name} extents must be positive")));
            }
        }
        if self.use_wavelet && (!self.target_hw_pre_dwt.0.is_multiple_of(2) || !self.target_hw_pre_dwt.1.is_multiple_of(2)) {
            return Err(Error::InvalidConfig("target_hw_pre_dwt must be even when use_wavelet is set".into()));
        }
        Ok(())
    }

    /// Spatial extents and channel count of the network input produced from
    /// a single-channel (grayscale) clip.
    pub fn output_hwc(&self) -> (usize, usize, usize) {
        if self.use_wavelet {
            (self.target_hw_pre_dwt.0 / 2, self.target_hw_pre_dwt.1 / 2, 4)
        } else {
            (self.target_hw_no_dwt.0, self.target_hw_no_dwt.1, 1)
        }
    }

    /// Frame count after framerate reduction of a clip with `frames` frames at `fps`.
    pub fn output_frames(&self, frames: usize, fps: f64) -> usize {
        reduced_frame_count(frames, fps, self.target_fps)
    }
}

fn reduced_frame_count(frames: usize, fps: f64, target_fps: f64) -> usize {
    // the epsilon absorbs representation error in frames * target / fps
    ((frames as f64 * target_fps / fps) + 1e-9).floor() as usize
}

/// Frame indices kept when resampling `frames` frames from `fps` to `target_fps`.
pub fn framerate_indices(frames: usize, fps: f64, target_fps: f64) -> Result<Vec<usize>> {
    if target_fps > fps {
        return Err(Error::InvalidArgument(format!("target fps {target_fps} exceeds source fps {fps}")));
    }
    if target_fps <= 0.0 {
        return Err(Error::InvalidArgument(format!("target fps must be positive, got {target_fps}")));
    }
    let step = fps / target_fps;
    Ok((0..reduced_frame_count(frames, fps, target_fps))
        .map(|i| ((i as f64 * step).round() as usize).min(frames - 1))
        .collect())
}

/// Keeps frames `round(i * fps / target_fps)`; no interpolation.
pub fn reduce_framerate(clip: &RawClip, target_fps: f64) -> Result<RawClip> {
    let indices = framerate_indices(clip.frame_count(), clip.fps, target_fps)?;
    if indices.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "clip of {:.3}s holds no frame at {target_fps} fps",
            clip.duration()
        )));
    }
    let s = clip.frames.shape();
    let mut data = Vec::with_capacity(indices.len() * clip.frames.len() / s[0]);
    for &i in &indices {
        data.extend_from_slice(clip.frames.frame(i));
    }
    let frames = Tensor::new(vec![indices.len(), s[1], s[2], s[3]], data)?;
    Ok(RawClip {
        frames,
        fps: target_fps,
        source_id: clip.source_id.clone(),
    })
}

/// Luminance conversion followed by bilinear resampling with half-pixel
/// centres. Output is `[T, H, W, 1]`.
pub fn to_grayscale_resize(clip: &RawClip, hw: (usize, usize)) -> Result<Tensor<f32>> {
    let (oh, ow) = hw;
    if oh == 0 || ow == 0 {
        return Err(Error::InvalidArgument(format!("resize target {oh}x{ow} has a zero extent")));
    }
    let s = clip.frames.shape();
    let (t, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut out = Vec::with_capacity(t * oh * ow);
    let mut gray = vec![0f32; h * w];
    for f in 0..t {
        let frame = clip.frames.frame(f);
        if c == 1 {
            gray.copy_from_slice(frame);
        } else {
            for (g, px) in gray.iter_mut().zip(frame.chunks_exact(3)) {
                *g = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
            }
        }
        resize_bilinear(&gray, (h, w), (oh, ow), &mut out);
    }
    Tensor::new(vec![t, oh, ow, 1], out)
}

fn source_taps(out: usize, len_in: usize, len_out: usize) -> (usize, usize, f32) {
    let scale = len_in as f64 / len_out as f64;
    let pos = ((out as f64 + 0.5) * scale - 0.5).clamp(0.0, (len_in - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(len_in - 1);
    (lo, hi, (pos - lo as f64) as f32)
}

fn resize_bilinear(src: &[f32], (h, w): (usize, usize), (oh, ow): (usize, usize), out: &mut Vec<f32>) {
    if (h, w) == (oh, ow) {
        out.extend_from_slice(src);
        return;
    }
    let cols: Vec<_> = (0..ow).map(|x| source_taps(x, w, ow)).collect();
    for y in 0..oh {
        let (y0, y1, fy) = source_taps(y, h, oh);
        let (r0, r1) = (&src[y0 * w..][..w], &src[y1 * w..][..w]);
        for &(x0, x1, fx) in &cols {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push((top + (bottom - top) * fy).clamp(0.0, 1.0));
        }
    }
}

/// `out[0] = 0`, `out[t] = clip[t] - clip[t - 1]`.
pub fn frame_difference(clip: &Tensor<f32>) -> Result<Tensor<f32>> {
    let t = clip.shape()[0];
    if clip.rank() != 4 || t < 2 {
        return Err(Error::InvalidArgument(format!(
            "frame differencing needs a [T, H, W, C] clip with T >= 2, got {:?}",
            clip.shape()
        )));
    }
    let per = clip.len() / t;
    let mut out = vec![0f32; clip.len()];
    for f in 1..t {
        let (prev, cur) = (clip.frame(f - 1), clip.frame(f));
        for ((o, &a), &b) in out[f * per..(f + 1) * per].iter_mut().zip(cur).zip(prev) {
            *o = a - b;
        }
    }
    Tensor::new(clip.shape().to_vec(), out)
}

/// Orthonormal single-level 2D Haar transform of every frame and channel.
///
/// Each 2x2 block `[[a, b], [c, d]]` becomes
/// `LL = (a+b+c+d)/2`, `LH = (a-b+c-d)/2`, `HL = (a+b-c-d)/2`, `HH = (a-b-c+d)/2`,
/// stored as channels `[LL, LH, HL, HH]` per source channel, so the output
/// is `[T, H/2, W/2, 4C]`.
pub fn haar_dwt_downsample(frames: &Tensor<f32>) -> Result<Tensor<f32>> {
    if frames.rank() != 4 {
        return Err(Error::shape("haar_dwt", "rank", 4, frames.rank()));
    }
    let s = frames.shape();
    let (t, h, w, c) = (s[0], s[1], s[2], s[3]);
    if h % 2 != 0 {
        return Err(Error::OddExtent { axis: "H", extent: h });
    }
    if w % 2 != 0 {
        return Err(Error::OddExtent { axis: "W", extent: w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let data = frames.data();
    let mut out = vec![0f32; t * oh * ow * 4 * c];
    for f in 0..t {
        for y in 0..oh {
            for x in 0..ow {
                let at = |dy: usize, dx: usize, ch: usize| data[((f * h + 2 * y + dy) * w + 2 * x + dx) * c + ch];
                let dst = ((f * oh + y) * ow + x) * 4 * c;
                for ch in 0..c {
                    let (a, b, cc, d) = (at(0, 0, ch), at(0, 1, ch), at(1, 0, ch), at(1, 1, ch));
                    let o = &mut out[dst + 4 * ch..dst + 4 * ch + 4];
                    o[0] = (a + b + cc + d) * 0.5;
                    o[1] = (a - b + cc - d) * 0.5;
                    o[2] = (a + b - cc - d) * 0.5;
                    o[3] = (a - b - cc + d) * 0.5;
                }
            }
        }
    }
    Tensor::new(vec![t, oh, ow, 4 * c], out)
}

/// Inverse of [`haar_dwt_downsample`].
pub fn haar_dwt_inverse(subbands: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = subbands.shape();
    if subbands.rank() != 4 || !s[3].is_multiple_of(4) {
        return Err(Error::shape("haar_idwt", "channels", "a multiple of 4", s[3]));
    }
    let (t, oh, ow, c) = (s[0], s[1], s[2], s[3] / 4);
    let (h, w) = (oh * 2, ow * 2);
    let data = subbands.data();
    let mut out = vec![0f32; t * h * w * c];
    for f in 0..t {
        for y in 0..oh {
            for x in 0..ow {
                let src = ((f * oh + y) * ow + x) * 4 * c;
                for ch in 0..c {
                    let b = &data[src + 4 * ch..src + 4 * ch + 4];
                    let (ll, lh, hl, hh) = (b[0], b[1], b[2], b[3]);
                    let mut put = |dy: usize, dx: usize, v: f32| out[((f * h + 2 * y + dy) * w + 2 * x + dx) * c + ch] = v;
                    put(0, 0, (ll + lh + hl + hh) * 0.5);
                    put(0, 1, (ll - lh + hl - hh) * 0.5);
                    put(1, 0, (ll + lh - hl - hh) * 0.5);
                    put(1, 1, (ll - lh - hl + hh) * 0.5);
                }
            }
        }
    }
    Tensor::new(vec![t, h, w, c], out)
}

/// Full preprocessing chain: framerate reduction, grayscale resize, optional
/// frame differencing and optional Haar down-sampling.
pub fn preprocess(clip: &RawClip, cfg: &PreprocConfig) -> Result<Tensor<f32>> {
    cfg.validate()?;
    let reduced = reduce_framerate(clip, cfg.target_fps)?;
    let hw = if cfg.use_wavelet { cfg.target_hw_pre_dwt } else { cfg.target_hw_no_dwt };
    let mut frames = to_grayscale_resize(&reduced, hw)?;
    if cfg.difference_frames {
        frames = frame_difference(&frames)?;
    }
    if cfg.use_wavelet {
        frames = haar_dwt_downsample(&frames)?;
    }
    Ok(frames)
}
