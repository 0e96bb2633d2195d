//! Frame sampling, sub-interval selection and visibility pruning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scene::{SamplingMode, SceneAnnotation, SceneError};

pub const TRAIN_FRAME_COUNT: usize = 32;
pub const DEFAULT_MIN_FRAMES: usize = 4;

/// Sampled timestamps for a video of `duration` seconds.
pub fn sample_frames(duration: f64, mode: SamplingMode) -> Vec<f64> {
    match mode {
        SamplingMode::Train32 => {
            let last = (TRAIN_FRAME_COUNT - 1) as f64;
            (0..TRAIN_FRAME_COUNT).map(|k| k as f64 * duration / last).collect()
        }
        SamplingMode::Bench1Fps => (0..=duration.floor() as usize).map(|k| k as f64).collect(),
    }
}

/// Inclusive range of frame indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameInterval {
    pub start: usize,
    pub end: usize,
}

impl FrameInterval {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        FrameInterval { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.frames().contains(&frame)
    }
}

/// For each start frame, the last frame of the run over which every required
/// object stays visible, or `None` if some object is missing at the start.
fn visible_run_ends(scene: &SceneAnnotation, required: &[&str]) -> Result<Vec<Option<usize>>, SceneError> {
    let tracks = required
        .iter()
        .map(|id| scene.object(id).ok_or_else(|| SceneError::UnknownObject(id.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let n = scene.frames.len();
    let visible: Vec<bool> = (0..n).map(|f| tracks.iter().all(|t| t.visible_at(f))).collect();
    let mut ends = vec![None; n];
    let mut run_end = None;
    for f in (0..n).rev() {
        if visible[f] {
            run_end = Some(run_end.unwrap_or(f));
        } else {
            run_end = None;
        }
        ends[f] = run_end;
    }
    Ok(ends)
}

/// Number of valid (start, end) pairs per start frame.
fn window_counts(ends: &[Option<usize>], min_frames: usize) -> Vec<usize> {
    ends.iter()
        .enumerate()
        .map(|(s, e)| match e {
            Some(e) if e + 1 >= s + min_frames => e + 2 - s - min_frames,
            _ => 0,
        })
        .collect()
}

/// Picks a window uniformly over all valid frame-index pairs.
///
/// A pair `(s, e)` is valid when it spans at least `min_frames` sampled
/// frames (and at least two) and every required object has a sample at every
/// frame in between.
pub fn select_subinterval<R: Rng + ?Sized>(
    scene: &SceneAnnotation,
    required: &[&str],
    min_frames: usize,
    rng: &mut R,
) -> Result<FrameInterval, SceneError> {
    let min_frames = min_frames.max(2);
    let ends = visible_run_ends(scene, required)?;
    let counts = window_counts(&ends, min_frames);
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(SceneError::NoValidWindow { min_frames });
    }
    let mut pick = rng.random_range(0..total);
    for (s, &c) in counts.iter().enumerate() {
        if pick < c {
            return Ok(FrameInterval::new(s, s + min_frames - 1 + pick));
        }
        pick -= c;
    }
    unreachable!("pick is below the total window count")
}

/// Ids of objects sampled at every frame of `interval`, in scene order.
pub fn prune_invisible(scene: &SceneAnnotation, interval: FrameInterval) -> Vec<String> {
    scene
        .objects
        .iter()
        .filter(|o| interval.frames().all(|f| o.visible_at(f)))
        .map(|o| o.object_id.clone())
        .collect()
}
