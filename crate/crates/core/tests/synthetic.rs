use std::collections::BTreeMap;
use std::path::Path;

use tempnet::dataset::{Manifest, Split};
use tempnet::synth::{clip_rng, generate, generate_dataset, stratify, EventRanges, SceneConfig};
use tempnet::Tensor;

/// Intensity-weighted centroid of `frame - background`.
fn centroid(frame: &[f32], background: &[f32], w: usize) -> (f64, f64) {
    let (mut m, mut sy, mut sx) = (0.0, 0.0, 0.0);
    for (i, (&v, &b)) in frame.iter().zip(background).enumerate() {
        let d = (v - b) as f64;
        m += d;
        sy += d * (i / w) as f64;
        sx += d * (i % w) as f64;
    }
    (sy / m, sx / m)
}

#[test]
fn event_triples_centroid_displacement() {
    let scene = SceneConfig {
        agents: (1, 1),
        semi_axis: (6.0, 8.0),
        background: (0.2, 0.2),
        noise: (0.0, 0.0),
        speed: (2.0, 2.0),
        event: EventRanges { duration: (3, 3), speed_multiplier: (3.0, 3.0), ..Default::default() },
        ..Default::default()
    };
    let (h, w) = scene.hw;
    let mut checked = 0;
    for i in 0..60 {
        let s = generate(&scene, true, &mut clip_rng(9, i)).unwrap();
        let e = s.event.clone().unwrap();
        let c: Vec<(f64, f64)> = (0..scene.frames).map(|t| centroid(s.frames.frame(t), &s.background, w)).collect();
        // a wall bounce shortens the measured step, so keep clips whose
        // centres stay one event step clear of the reflection box
        let margin = 8.0 + 1.0 + 6.0;
        if c.iter().any(|&(y, x)| y < margin || x < margin || y > (h as f64) - margin || x > (w as f64) - margin) {
            continue;
        }
        let step: Vec<f64> = c.windows(2).map(|p| ((p[1].0 - p[0].0).powi(2) + (p[1].1 - p[0].1).powi(2)).sqrt()).collect();
        // step[t - 1] is the displacement arriving at frame t
        let during: Vec<f64> = (e.onset..e.onset + 3).map(|t| step[t - 1]).collect();
        let calm: Vec<f64> = (1..scene.frames).filter(|t| !(e.onset..e.onset + 3).contains(t)).map(|t| step[t - 1]).collect();
        let base = calm.iter().sum::<f64>() / calm.len() as f64;
        assert!((base - 2.0).abs() < 0.1, "clip {i}: calm step {base}");
        for d in during {
            assert!((d / base - 3.0).abs() < 0.15, "clip {i}: event step ratio {}", d / base);
        }
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} clips avoided the walls");
}

#[test]
fn static_scene_preprocesses_to_zero() {
    let scene = SceneConfig { agents: (0, 0), noise: (0.0, 0.0), ..Default::default() };
    let s = generate(&scene, false, &mut clip_rng(3, 0)).unwrap();
    let clip = tempnet::preproc::RawClip::new(s.frames, 5.0, "static").unwrap();
    let out = tempnet::preproc::preprocess(&clip, &Default::default()).unwrap();
    assert_eq!(out.shape(), &[20, 150, 200, 1]);
    assert!(out.data().iter().all(|&v| v == 0.0));
}

/// Largest total squared frame difference over the clip.
fn motion_energy(frames: &Tensor<f32>) -> f64 {
    (1..frames.shape()[0])
        .map(|t| frames.frame(t).iter().zip(frames.frame(t - 1)).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scored(scene: &SceneConfig, seed: u64, n: u64) -> Vec<(f64, bool)> {
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let s = generate(scene, positive, &mut clip_rng(seed, i)).unwrap();
            (motion_energy(&s.frames), positive)
        })
        .collect()
}

fn accuracy(scores: &[(f64, bool)], threshold: f64) -> f64 {
    scores.iter().filter(|&&(s, y)| (s > threshold) == y).count() as f64 / scores.len() as f64
}

#[test]
fn hand_rule_separates_classes_but_not_perfectly() {
    let scene = SceneConfig::default();
    let fit = scored(&scene, 1, 400);
    let mut candidates: Vec<f64> = fit.iter().map(|s| s.0).collect();
    candidates.sort_by(f64::total_cmp);
    let threshold = candidates
        .windows(2)
        .map(|p| 0.5 * (p[0] + p[1]))
        .max_by(|a, b| accuracy(&fit, *a).total_cmp(&accuracy(&fit, *b)))
        .unwrap();
    let held_out = accuracy(&scored(&scene, 2, 400), threshold);
    assert!((0.8..1.0).contains(&held_out), "held-out hand-rule accuracy {held_out}");
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn datasets_are_byte_identical_across_runs_and_threads() {
    let scene = SceneConfig::scaled((40, 52));
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(a.path(), 24, 0.5, 5, &scene, 1).unwrap();
    generate_dataset(b.path(), 24, 0.5, 5, &scene, 3).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));
    let c = tempfile::tempdir().unwrap();
    generate_dataset(c.path(), 24, 0.5, 6, &scene, 1).unwrap();
    assert_ne!(tree(a.path()), tree(c.path()));
}

#[test]
fn splits_keep_label_balance() {
    let scene = SceneConfig::scaled((40, 52));
    for (n, ratio) in [(40, 0.5), (57, 0.3), (10, 0.5)] {
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(dir.path(), n, ratio, 1, &scene, 1).unwrap();
        let m = Manifest::load(dir.path()).unwrap();
        assert_eq!(m.entries.len(), n);
        for ((split, size, _), s) in stratify(n, ratio).unwrap().into_iter().zip(Split::ALL) {
            assert_eq!(split, s);
            let entries: Vec<_> = m.split(s).collect();
            assert_eq!(entries.len(), size);
            let pos = entries.iter().filter(|e| e.label).count() as f64;
            assert!((pos - size as f64 * ratio).abs() <= 1.0, "{s} {pos}/{size}");
            assert!(pos >= 1.0 && pos < size as f64);
        }
    }
}
