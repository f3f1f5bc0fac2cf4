//! Seeded toy editing tasks.
//!
//! Each source clip is a smooth scene made of a colour gradient and a few
//! soft blobs that drift slowly, so clips contain some motion without being
//! noise. Scenario names follow a fixed list of twelve everyday edits.

use crate::error::Result;
use crate::genmodel::GeneratorDims;
use crate::media::{ClipDims, EditTask, VideoClip};
use crate::numcore::RealArray;
use crate::rng::{derive_seed, SplitMix64};

pub const SCENARIOS: [&str; 12] = [
    "Bird opens wing",
    "Car lights",
    "Dog yawning",
    "Goldfish",
    "Man climbs rock",
    "Man pets dog",
    "Man raises hand",
    "Monkey reaches fruit",
    "Red car door",
    "Robot wave",
    "Rose blooming",
    "Turtle extends neck",
];

/// `"Man pets dog"` becomes `"man_pets_dog"`.
pub fn slug(name: &str) -> String {
    name.to_lowercase().replace(' ', "_")
}

/// Smooth seeded scene with `dims`.
pub fn scene_clip(dims: ClipDims, seed: u64) -> Result<VideoClip> {
    let mut rng = SplitMix64::for_domain(seed, "scene");
    let (h, w, c) = (dims.height, dims.width, dims.channels);
    let base: Vec<f64> = (0..c).map(|_| rng.uniform(0.25, 0.75)).collect();
    let slope: Vec<(f64, f64)> = (0..c).map(|_| (rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2))).collect();
    struct Blob {
        y: f64,
        x: f64,
        vy: f64,
        vx: f64,
        r: f64,
        amp: Vec<f64>,
    }
    let blobs: Vec<Blob> = (0..3)
        .map(|_| Blob {
            y: rng.uniform(0.2, 0.8),
            x: rng.uniform(0.2, 0.8),
            vy: rng.uniform(-0.01, 0.01),
            vx: rng.uniform(-0.01, 0.01),
            r: rng.uniform(0.1, 0.25),
            amp: (0..c).map(|_| rng.uniform(-0.2, 0.2)).collect(),
        })
        .collect();
    let frames = RealArray::from_fn(&dims.shape(), |i| {
        let ch = i % c;
        let x = (i / c) % w;
        let y = (i / (c * w)) % h;
        let t = (i / (c * w * h)) as f64;
        let (fy, fx) = ((y as f64 + 0.5) / h as f64, (x as f64 + 0.5) / w as f64);
        let mut v = base[ch] + slope[ch].0 * (fy - 0.5) + slope[ch].1 * (fx - 0.5);
        for b in &blobs {
            let dy = fy - (b.y + b.vy * t);
            let dx = fx - (b.x + b.vx * t);
            v += b.amp[ch] * (-(dy * dy + dx * dx) / (2.0 * b.r * b.r)).exp();
        }
        v.clamp(0.0, 1.0)
    });
    VideoClip::new(frames, 25.0)
}

/// Task `index` of the suite for `seed`. Odd indices have no source audio.
pub fn toy_task(dims: GeneratorDims, seed: u64, index: usize) -> Result<EditTask> {
    let key = derive_seed(seed, "toy-task", index as u64);
    let mut rng = SplitMix64::new(key);
    let clip = scene_clip(dims.clip, key)?;
    let name = match index / SCENARIOS.len() {
        0 => slug(SCENARIOS[index]),
        round => format!("{}_{round}", slug(SCENARIOS[index % SCENARIOS.len()])),
    };
    let max_k = (dims.clip.frames / 3).max(1);
    let preserved = 1 + (rng.next_u64() % max_k as u64) as usize;
    let mut task = EditTask::new(name, clip, rng.next_u64() % 1_000_000, preserved)?;
    task.comment = Some(SCENARIOS[index % SCENARIOS.len()].to_string());
    if index.is_multiple_of(2) {
        task = task.with_audio_seed(rng.next_u64());
    }
    Ok(task)
}

pub fn toy_suite(dims: GeneratorDims, seed: u64, n: usize) -> Result<Vec<EditTask>> {
    (0..n).map(|i| toy_task(dims, seed, i)).collect()
}

/// Same prompt, different source clip: the transfer target for `task`.
pub fn related_task(task: &EditTask, seed: u64) -> Result<EditTask> {
    let key = derive_seed(seed, "related-task", task.prompt_id);
    let mut related = task.clone();
    related.name = format!("{}_related", task.name);
    related.source = scene_clip(task.source.dims(), key)?;
    related.audio_seed = task.audio_seed.map(|s| derive_seed(s, "related-audio", 0));
    Ok(related)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_deterministic_and_named() {
        let dims = GeneratorDims::desk();
        let a = toy_suite(dims, 1, 13).unwrap();
        assert_eq!(a, toy_suite(dims, 1, 13).unwrap());
        assert_eq!(a[5].name, "man_pets_dog");
        assert_eq!(a[12].name, "bird_opens_wing_1");
        assert!(a.iter().all(|t| t.preserved >= 1 && t.preserved < 17));
        assert!(a[0].audio_seed.is_some() && a[1].audio_seed.is_none());
        assert_ne!(a[0].source, toy_task(dims, 2, 0).unwrap().source);
    }

    #[test]
    fn related_task_shares_prompt() {
        let t = toy_task(GeneratorDims::tiny(), 3, 0).unwrap();
        let r = related_task(&t, 3).unwrap();
        assert_eq!(r.prompt_id, t.prompt_id);
        assert_ne!(r.source, t.source);
    }
}
