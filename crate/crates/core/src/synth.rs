//! Synthetic labeled clips: bright elliptical agents drifting over a static
//! smooth background, where positive clips contain one startle-like event
//! (a short burst of speed together with a sharp turn).

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{write_clip, LabeledClip, Manifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    /// Uniform agent intensity.
    Smooth,
    /// A one-pixel checkerboard on every agent, averaging to a faint
    /// contrast against the background.
    HighFrequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub hw: (usize, usize),
    pub frames: usize,
    pub fps: f64,
    /// Inclusive agent-count range.
    pub agents: (usize, usize),
    /// Semi-axis range in pixels.
    pub semi_axis: (f64, f64),
    pub intensity: (f64, f64),
    pub background: (f64, f64),
    /// Per-clip sensor noise standard deviation is drawn from this range.
    pub noise: (f64, f64),
    /// Base speed range in pixels per frame.
    pub speed: (f64, f64),
    /// Maximum heading change per frame outside events, in degrees.
    pub drift_deg: f64,
    pub texture: Texture,
    pub event: EventRanges,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRanges {
    pub duration: (usize, usize),
    pub speed_multiplier: (f64, f64),
    pub turn_deg: (f64, f64),
}

impl Default for EventRanges {
    fn default() -> Self {
        EventRanges {
            duration: (1, 3),
            speed_multiplier: (3.0, 5.0),
            turn_deg: (60.0, 120.0),
        }
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            hw: (160, 208),
            frames: 20,
            fps: 5.0,
            agents: (1, 3),
            semi_axis: (6.0, 10.0),
            intensity: (0.6, 0.9),
            background: (0.1, 0.4),
            noise: (0.0, 0.01),
            speed: (2.0, 3.0),
            drift_deg: 10.0,
            texture: Texture::Smooth,
            event: EventRanges::default(),
        }
    }
}

impl SceneConfig {
    /// The default scene with lengths and speeds scaled to a `hw` frame.
    pub fn scaled(hw: (usize, usize)) -> Self {
        let d = SceneConfig::default();
        let s = hw.0 as f64 / d.hw.0 as f64;
        SceneConfig {
            hw,
            semi_axis: (d.semi_axis.0 * s, d.semi_axis.1 * s),
            speed: (d.speed.0 * s, d.speed.1 * s),
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::InvalidConfig(why));
        let (h, w) = self.hw;
        if self.frames < 8 {
            return bad(format!("clips need at least 8 frames to hold an event, got {}", self.frames));
        }
        if self.agents.0 > self.agents.1 {
            return bad("agent range is empty".into());
        }
        if 2.0 * self.semi_axis.1 + 2.0 >= h.min(w) as f64 {
            return bad(format!("agents with semi-axis {} do not fit a {h}x{w} frame", self.semi_axis.1));
        }
        let ranges = [self.semi_axis, self.intensity, self.background, self.noise, self.speed];
        if ranges.iter().any(|&(lo, hi)| !(lo <= hi && lo >= 0.0)) {
            return bad("value ranges must be non-negative and ordered".into());
        }
        if self.intensity.1 > 1.0 || self.background.1 > 1.0 {
            return bad("intensities must lie in [0, 1]".into());
        }
        let e = &self.event;
        if e.duration.0 == 0 || e.duration.0 > e.duration.1 || e.duration.1 > 3 {
            return bad("event duration must lie within 1..=3 frames".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub onset: usize,
    pub duration: usize,
    pub speed_multiplier: f64,
    pub turn_deg: f64,
    pub agent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub semi_axes: (f64, f64),
    pub orientation: f64,
    pub intensity: f64,
    /// Centre `(y, x)` in every frame.
    pub path: Vec<(f64, f64)>,
}

/// A rendered clip with the ground truth used to make it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frames: Tensor<f32>,
    pub agents: Vec<Agent>,
    pub event: Option<EventSpec>,
    pub noise_sigma: f64,
    pub background: Vec<f32>,
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Static background: a few low-frequency plane waves mapped into `range`.
fn background(rng: &mut impl Rng, (h, w): (usize, usize), range: (f64, f64)) -> Vec<f32> {
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let angle = rng.gen_range(0.0..PI);
            let freq = rng.gen_range(0.5..2.0) * 2.0 * PI / h.max(w) as f64;
            (angle.cos() * freq, angle.sin() * freq, rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let (lo, hi) = range;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = waves.iter().map(|&(fy, fx, ph)| (fy * y as f64 + fx * x as f64 + ph).sin()).sum::<f64>() / 3.0;
            out.push((lo + (hi - lo) * 0.5 * (s + 1.0)) as f32);
        }
    }
    out
}

/// Moves `pos` by `step`, reflecting off the walls of the box
/// `[lo, hi]` on each axis. Returns the new position and step direction.
fn reflect(pos: (f64, f64), step: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> ((f64, f64), (f64, f64)) {
    let axis = |p: f64, d: f64, lo: f64, hi: f64| {
        let mut p = p + d;
        let mut flip = 1.0;
        for _ in 0..4 {
            if p < lo {
                p = 2.0 * lo - p;
                flip = -flip;
            } else if p > hi {
                p = 2.0 * hi - p;
                flip = -flip;
            } else {
                break;
            }
        }
        (p.clamp(lo, hi), flip)
    };
    let (y, fy) = axis(pos.0, step.0, lo.0, hi.0);
    let (x, fx) = axis(pos.1, step.1, lo.1, hi.1);
    ((y, x), (fy, fx))
}

/// Draws one clip. Positive clips carry exactly one event.
pub fn generate(scene: &SceneConfig, positive: bool, rng: &mut impl Rng) -> Result<Scene> {
    scene.validate()?;
    let (h, w) = scene.hw;
    let t_len = scene.frames;
    let bg = background(rng, scene.hw, scene.background);
    let noise_sigma = uniform(rng, scene.noise);
    let count = rng.gen_range(scene.agents.0..=scene.agents.1);
    if positive && count == 0 {
        return Err(Error::InvalidConfig("a positive clip needs at least one agent".into()));
    }
    let event = positive.then(|| {
        let e = &scene.event;
        EventSpec {
            onset: rng.gen_range(3..=t_len - 4),
            duration: rng.gen_range(e.duration.0..=e.duration.1),
            speed_multiplier: uniform(rng, e.speed_multiplier),
            turn_deg: uniform(rng, e.turn_deg) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            agent: rng.gen_range(0..count),
        }
    });

    let drift = scene.drift_deg.to_radians();
    let mut agents = Vec::with_capacity(count);
    for i in 0..count {
        let semi_axes = (uniform(rng, scene.semi_axis), uniform(rng, scene.semi_axis));
        let reach = semi_axes.0.max(semi_axes.1) + 1.0;
        let (lo, hi) = ((reach, reach), (h as f64 - 1.0 - reach, w as f64 - 1.0 - reach));
        let mut pos = (rng.gen_range(lo.0..hi.0), rng.gen_range(lo.1..hi.1));
        let mut heading = rng.gen_range(0.0..2.0 * PI);
        let speed = uniform(rng, scene.speed);
        let mut path = vec![pos];
        for t in 1..t_len {
            let mut v = speed;
            heading += rng.gen_range(-drift..=drift);
            if let Some(e) = event.as_ref().filter(|e| e.agent == i) {
                if t == e.onset {
                    heading += e.turn_deg.to_radians();
                }
                if (e.onset..e.onset + e.duration).contains(&t) {
                    v *= e.speed_multiplier;
                }
            }
            let (next, flip) = reflect(pos, (v * heading.sin(), v * heading.cos()), lo, hi);
            let (dy, dx) = (heading.sin() * flip.0, heading.cos() * flip.1);
            heading = dy.atan2(dx);
            pos = next;
            path.push(pos);
        }
        agents.push(Agent {
            semi_axes,
            orientation: rng.gen_range(0.0..PI),
            intensity: uniform(rng, scene.intensity),
            path,
        });
    }

    let mut data = Vec::with_capacity(t_len * h * w);
    let mut frame = vec![0f32; h * w];
    for t in 0..t_len {
        frame.copy_from_slice(&bg);
        for a in &agents {
            draw_agent(&mut frame, scene, a, a.path[t]);
        }
        if noise_sigma > 0.0 {
            let normal = rand_distr::Normal::new(0.0, noise_sigma).expect("valid std");
            for v in frame.iter_mut() {
                *v += rand_distr::Distribution::sample(&normal, rng) as f32;
            }
        }
        data.extend(frame.iter().map(|v| v.clamp(0.0, 1.0)));
    }
    Ok(Scene {
        frames: Tensor::new(vec![t_len, h, w, 1], data)?,
        agents,
        event,
        noise_sigma,
        background: bg,
    })
}

/// Anti-aliased ellipse: coverage falls off linearly over one pixel at the
/// rim, so the intensity centroid tracks the sub-pixel centre.
fn draw_agent(frame: &mut [f32], scene: &SceneConfig, agent: &Agent, (cy, cx): (f64, f64)) {
    let (h, w) = scene.hw;
    let (a, b) = agent.semi_axes;
    let (sin, cos) = agent.orientation.sin_cos();
    let reach = a.max(b) + 1.0;
    let y0 = (cy - reach).floor().max(0.0) as usize;
    let y1 = ((cy + reach).ceil() as usize).min(h - 1);
    let x0 = (cx - reach).floor().max(0.0) as usize;
    let x1 = ((cx + reach).ceil() as usize).min(w - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            let r = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
            // distance to the rim, approximately, in pixels
            let coverage = ((1.0 - r) * a.min(b) + 0.5).clamp(0.0, 1.0);
            if coverage <= 0.0 {
                continue;
            }
            let target = match scene.texture {
                Texture::Smooth => agent.intensity,
                Texture::HighFrequency => {
                    let base = frame[y * w + x] as f64;
                    let sign = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
                    (base + 0.05 + sign * (agent.intensity - 0.5)).clamp(0.0, 1.0)
                }
            };
            let px = &mut frame[y * w + x];
            *px = (*px as f64 * (1.0 - coverage) + target * coverage) as f32;
        }
    }
}

pub fn clip_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Split sizes for `n` clips in the proportions 642 : 150 : 100.
pub fn split_sizes(n: usize) -> [(Split, usize); 3] {
    let test = ((n as f64 * 100.0 / 892.0).round() as usize).max(2);
    let val = ((n as f64 * 150.0 / 892.0).round() as usize).max(2);
    [(Split::Train, n - test - val), (Split::Val, val), (Split::Test, test)]
}

/// Positives per split: `round(size * ratio)` kept within `[1, size - 1]`
/// for val and test, with train absorbing the remainder.
pub fn stratify(n: usize, ratio: f64) -> Result<[(Split, usize, usize); 3]> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("positive ratio must lie in (0, 1), got {ratio}")));
    }
    if n < 10 {
        return Err(Error::InvalidArgument(format!("a dataset needs at least 10 clips, got {n}")));
    }
    let total_pos = (n as f64 * ratio).round() as usize;
    let sizes = split_sizes(n);
    let held = |size: usize| ((size as f64 * ratio).round() as usize).clamp(1, size - 1);
    let val = held(sizes[1].1);
    let test = held(sizes[2].1);
    let train = total_pos.saturating_sub(val + test).clamp(1, sizes[0].1 - 1);
    Ok([(Split::Train, sizes[0].1, train), (Split::Val, sizes[1].1, val), (Split::Test, sizes[2].1, test)])
}

/// Writes `n` clips and a manifest into `dir`. Clip `i` draws from its own
/// stream of the seed, so output does not depend on thread count.
pub fn generate_dataset(dir: impl AsRef<Path>, n: usize, ratio: f64, seed: u64, scene: &SceneConfig, threads: usize) -> Result<Manifest> {
    let dir = dir.as_ref();
    scene.validate()?;
    let plan = stratify(n, ratio)?;
    let mut slots = Vec::with_capacity(n);
    for (split, size, pos) in plan {
        slots.extend((0..size).map(|i| (split, i < pos)));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    slots.shuffle(&mut order_rng);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let indexed: Vec<(usize, (Split, bool))> = slots.into_iter().enumerate().collect();
    let entries = parallel::map(&indexed, threads, |&(i, (split, label))| -> Result<ManifestEntry> {
        let name = format!("clip_{i:05}.tclp");
        let scene = generate(scene, label, &mut clip_rng(seed, i as u64))?;
        let clip = LabeledClip {
            frames: scene.frames,
            label: Some(label),
            id: name.clone(),
        };
        write_clip(dir.join(&name), &clip)?;
        Ok(ManifestEntry {
            path: name.into(),
            label,
            split,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        root: dir.to_path_buf(),
        entries,
    };
    manifest.save()?;
    Ok(manifest)
}
