//! Scene annotation schema, ingestion and validation.
//!
//! One JSON document per video:
//!
//! ```json
//! {"video_id": "v1", "duration": 30.0, "sampling_mode": "bench1fps",
//!  "frames": [{"t": 0.0, "pose": {"R": [[1,0,0],[0,1,0],[0,0,1]], "t": [0,0,0]}}],
//!  "objects": [{"id": "person_0", "category": "person", "is_agent": true,
//!               "samples": [{"t": 0.0, "center": [0,0,5], "bbox": [10,20,50,90],
//!                            "orientation": {"azimuth": 0, "elevation": 0, "roll": 0}}]}]}
//! ```
//!
//! `image_size` (`[width, height]`) and per-frame `point_map` are optional
//! extensions; they are omitted from serialized output when absent.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{OrientationTriple, Pose, Rotation, Vec3};
use crate::lifting::PointMap;

/// Reserved observer name; object ids may not use it.
pub const CAMERA_ID: &str = "camera";

/// Timestamps closer than this are considered the same sampled frame.
pub const TIME_MATCH_TOLERANCE: f64 = 1e-6;

pub const MIN_CURATED_DURATION: f64 = 20.0;
pub const MAX_CURATED_DURATION: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplingMode {
    /// 32 uniformly spaced frames, endpoints included.
    #[serde(rename = "train32")]
    Train32,
    /// One frame per second starting at 0.
    #[serde(rename = "bench1fps")]
    Bench1Fps,
}

/// Integer pixel box, top-left inclusive, bottom-right exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x1: i32,
    pub y1: i32,
    pub x2: i32,
    pub y2: i32,
}

impl BBox {
    pub fn new(x1: i32, y1: i32, x2: i32, y2: i32) -> Self {
        BBox { x1, y1, x2, y2 }
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.x1, self.y1, self.x2, self.y2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub timestamp: f64,
    /// Index of the frame this sample belongs to; resolved at load time.
    pub frame: usize,
    pub center_world: Vec3,
    pub bbox: BBox,
    pub orientation: Option<OrientationTriple>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub object_id: String,
    pub category: String,
    pub is_agent: bool,
    /// Sorted by frame index.
    pub samples: Vec<TrajectorySample>,
}

impl ObjectTrack {
    pub fn sample_at(&self, frame: usize) -> Option<&TrajectorySample> {
        self.samples
            .binary_search_by_key(&frame, |s| s.frame)
            .ok()
            .map(|i| &self.samples[i])
    }

    pub fn visible_at(&self, frame: usize) -> bool {
        self.sample_at(frame).is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub timestamp: f64,
    pub camera_pose: Pose,
    pub point_map: Option<PointMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub video_id: String,
    pub duration: f64,
    pub sampling_mode: SamplingMode,
    /// `(width, height)` in pixels, when declared.
    pub image_size: Option<(u32, u32)>,
    pub frames: Vec<FrameRecord>,
    pub objects: Vec<ObjectTrack>,
}

impl SceneAnnotation {
    pub fn object(&self, id: &str) -> Option<&ObjectTrack> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp).collect()
    }

    pub fn timestamp(&self, frame: usize) -> f64 {
        self.frames[frame].timestamp
    }

    /// Index of the sampled frame at time `t`, within [`TIME_MATCH_TOLERANCE`].
    pub fn frame_index(&self, t: f64) -> Option<usize> {
        let i = self.frames.partition_point(|f| f.timestamp < t - TIME_MATCH_TOLERANCE);
        (i < self.frames.len() && (self.frames[i].timestamp - t).abs() <= TIME_MATCH_TOLERANCE).then_some(i)
    }

    pub fn agents(&self) -> impl Iterator<Item = &ObjectTrack> {
        self.objects.iter().filter(|o| o.is_agent)
    }
}

/// One failed check, with a JSON-style path such as `frames[3].t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvariantViolation(Vec<Violation>),
    #[error("no window of at least {min_frames} frames where all required objects are visible")]
    NoValidWindow { min_frames: usize },
    #[error("unknown object id {0:?}")]
    UnknownObject(String),
}

impl SceneError {
    pub fn violations(&self) -> Vec<Violation> {
        match self {
            SceneError::Schema { path, message } => vec![Violation {
                path: path.clone(),
                message: message.clone(),
            }],
            SceneError::InvariantViolation(v) => v.clone(),
            other => vec![Violation {
                path: String::new(),
                message: other.to_string(),
            }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Reject videos outside the curated duration range.
    pub enforce_curation: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { enforce_curation: true }
    }
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RawScene {
    video_id: String,
    duration: f64,
    sampling_mode: SamplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_size: Option<[u32; 2]>,
    frames: Vec<RawFrame>,
    objects: Vec<RawObject>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawFrame {
    t: f64,
    pose: RawPose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point_map: Option<RawPointMap>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPose {
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    t: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPointMap {
    height: usize,
    width: usize,
    points: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawObject {
    id: String,
    category: String,
    is_agent: bool,
    samples: Vec<RawSample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSample {
    t: f64,
    center: [f64; 3],
    bbox: [i32; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<RawOrientation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawOrientation {
    azimuth: f64,
    elevation: f64,
    roll: f64,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Parses and fully validates one annotation document.
pub fn load_scene(bytes: &[u8], opts: &LoadOptions) -> Result<SceneAnnotation, SceneError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let raw: RawScene = serde_path_to_error::deserialize(de).map_err(|e| SceneError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    build_scene(raw, opts)
}

/// Serializes a scene in the annotation wire format.
pub fn scene_to_json(scene: &SceneAnnotation) -> String {
    let raw = RawScene {
        video_id: scene.video_id.clone(),
        duration: scene.duration,
        sampling_mode: scene.sampling_mode,
        image_size: scene.image_size.map(|(w, h)| [w, h]),
        frames: scene
            .frames
            .iter()
            .map(|f| RawFrame {
                t: f.timestamp,
                pose: RawPose {
                    r: f.camera_pose.rotation.to_rows(),
                    t: arr3(&f.camera_pose.translation),
                },
                point_map: f.point_map.as_ref().map(|pm| RawPointMap {
                    height: pm.height(),
                    width: pm.width(),
                    points: pm.points().iter().map(arr3).collect(),
                }),
            })
            .collect(),
        objects: scene
            .objects
            .iter()
            .map(|o| RawObject {
                id: o.object_id.clone(),
                category: o.category.clone(),
                is_agent: o.is_agent,
                samples: o
                    .samples
                    .iter()
                    .map(|s| RawSample {
                        t: s.timestamp,
                        center: arr3(&s.center_world),
                        bbox: [s.bbox.x1, s.bbox.y1, s.bbox.x2, s.bbox.y2],
                        orientation: s.orientation.map(|o| RawOrientation {
                            azimuth: o.azimuth,
                            elevation: o.elevation,
                            roll: o.roll,
                        }),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&raw).expect("scene serialization is infallible")
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

pub fn duration_filter(duration: f64) -> bool {
    (MIN_CURATED_DURATION..=MAX_CURATED_DURATION).contains(&duration)
}

fn build_scene(raw: RawScene, opts: &LoadOptions) -> Result<SceneAnnotation, SceneError> {
    let mut v = Collector(Vec::new());

    if raw.video_id.is_empty() {
        v.push("video_id", "must be non-empty");
    }
    if !(raw.duration.is_finite() && raw.duration > 0.0) {
        v.push("duration", format!("must be a positive number, got {}", raw.duration));
    } else if opts.enforce_curation && !duration_filter(raw.duration) {
        v.push(
            "duration",
            format!(
                "{}s outside curated range [{MIN_CURATED_DURATION}, {MAX_CURATED_DURATION}]",
                raw.duration
            ),
        );
    }
    if let Some([w, h]) = raw.image_size {
        if w == 0 || h == 0 {
            v.push("image_size", "width and height must be positive");
        }
    }
    if raw.frames.is_empty() {
        v.push("frames", "at least one frame is required");
    }

    let mut frames = Vec::with_capacity(raw.frames.len());
    let mut prev_t = f64::NEG_INFINITY;
    for (k, f) in raw.frames.into_iter().enumerate() {
        if !f.t.is_finite() || f.t < 0.0 {
            v.push(format!("frames[{k}].t"), format!("invalid timestamp {}", f.t));
        } else if f.t <= prev_t {
            v.push(
                format!("frames[{k}].t"),
                format!("timestamps must be strictly increasing ({} after {})", f.t, prev_t),
            );
        } else if raw.duration.is_finite() && f.t > raw.duration + TIME_MATCH_TOLERANCE {
            v.push(format!("frames[{k}].t"), format!("{} exceeds duration {}", f.t, raw.duration));
        }
        if f.t.is_finite() {
            prev_t = prev_t.max(f.t);
        }
        let rotation = match Rotation::from_rows(f.pose.r) {
            Ok(r) => r,
            Err(e) => {
                v.push(format!("frames[{k}].pose.R"), e.to_string());
                Rotation::identity()
            }
        };
        if f.pose.t.iter().any(|c| !c.is_finite()) {
            v.push(format!("frames[{k}].pose.t"), "non-finite translation");
        }
        let point_map = match f.point_map {
            None => None,
            Some(pm) => {
                let points = pm.points.into_iter().map(vec3).collect();
                match PointMap::new(pm.height, pm.width, points) {
                    Ok(m) => {
                        if let Some((w, h)) = raw.image_size.map(|[w, h]| (w as usize, h as usize)) {
                            if m.width() != w || m.height() != h {
                                v.push(
                                    format!("frames[{k}].point_map"),
                                    format!("{}x{} does not match image size {w}x{h}", m.width(), m.height()),
                                );
                            }
                        }
                        Some(m)
                    }
                    Err(e) => {
                        v.push(format!("frames[{k}].point_map"), e.to_string());
                        None
                    }
                }
            }
        };
        frames.push(FrameRecord {
            timestamp: f.t,
            camera_pose: Pose::new(rotation, vec3(f.pose.t)),
            point_map,
        });
    }

    let mut seen = HashSet::new();
    let mut objects = Vec::with_capacity(raw.objects.len());
    for (i, o) in raw.objects.into_iter().enumerate() {
        let base = format!("objects[{i}]");
        if o.id.is_empty() {
            v.push(format!("{base}.id"), "must be non-empty");
        } else if o.id == CAMERA_ID {
            v.push(format!("{base}.id"), format!("{CAMERA_ID:?} is reserved for the camera observer"));
        } else if !seen.insert(o.id.clone()) {
            v.push(format!("{base}.id"), format!("duplicate object id {:?}", o.id));
        }
        if o.category.is_empty() {
            v.push(format!("{base}.category"), "must be non-empty");
        }
        let mut samples = Vec::with_capacity(o.samples.len());
        let mut prev_frame: Option<usize> = None;
        for (j, s) in o.samples.into_iter().enumerate() {
            let sp = format!("{base}.samples[{j}]");
            let frame = frames
                .iter()
                .position(|f: &FrameRecord| (f.timestamp - s.t).abs() <= TIME_MATCH_TOLERANCE);
            let Some(frame) = frame else {
                v.push(format!("{sp}.t"), format!("timestamp {} does not match any frame", s.t));
                continue;
            };
            if prev_frame.is_some_and(|p| frame <= p) {
                v.push(format!("{sp}.t"), "sample timestamps must be strictly increasing");
            }
            prev_frame = Some(frame);
            if s.center.iter().any(|c| !c.is_finite()) {
                v.push(format!("{sp}.center"), "non-finite center");
            }
            let [x1, y1, x2, y2] = s.bbox;
            if !(x1 < x2 && y1 < y2) {
                v.push(format!("{sp}.bbox"), format!("degenerate box {:?}", s.bbox));
            }
            if x1 < 0 || y1 < 0 {
                v.push(format!("{sp}.bbox"), "negative coordinates");
            }
            if let Some([w, h]) = raw.image_size {
                if x2 > w as i32 || y2 > h as i32 {
                    v.push(format!("{sp}.bbox"), format!("box {:?} exceeds image {w}x{h}", s.bbox));
                }
            }
            let orientation = match s.orientation {
                None => None,
                Some(_) if !o.is_agent => {
                    v.push(format!("{sp}.orientation"), "orientation on a non-agent track");
                    None
                }
                Some(r) => match OrientationTriple::new(r.azimuth, r.elevation, r.roll) {
                    Ok(ot) => Some(ot),
                    Err(e) => {
                        v.push(format!("{sp}.orientation"), e.to_string());
                        None
                    }
                },
            };
            samples.push(TrajectorySample {
                timestamp: s.t,
                frame,
                center_world: vec3(s.center),
                bbox: BBox::new(x1, y1, x2, y2),
                orientation,
            });
        }
        objects.push(ObjectTrack {
            object_id: o.id,
            category: o.category,
            is_agent: o.is_agent,
            samples,
        });
    }

    if !v.0.is_empty() {
        return Err(SceneError::InvariantViolation(v.0));
    }
    Ok(SceneAnnotation {
        video_id: raw.video_id,
        duration: raw.duration,
        sampling_mode: raw.sampling_mode,
        image_size: raw.image_size.map(|[w, h]| (w, h)),
        frames,
        objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "video_id": "v1", "duration": 30.0, "sampling_mode": "bench1fps",
        "frames": [
            {"t": 0.0, "pose": {"R": [[1,0,0],[0,1,0],[0,0,1]], "t": [0,0,0]}},
            {"t": 1.0, "pose": {"R": [[1,0,0],[0,1,0],[0,0,1]], "t": [0,0,0]}},
            {"t": 2.0, "pose": {"R": [[1,0,0],[0,1,0],[0,0,1]], "t": [0,0,0]}}
        ],
        "objects": [
            {"id": "p0", "category": "person", "is_agent": true, "samples": [
                {"t": 0.0, "center": [0,0,5], "bbox": [10,20,50,90], "orientation": {"azimuth": 0, "elevation": 0, "roll": 0}},
                {"t": 1.0, "center": [0,0,6], "bbox": [10,20,50,90]},
                {"t": 2.0, "center": [0,0,7], "bbox": [10,20,50,90]}
            ]}
        ]
    }"#;

    fn load(s: &str) -> Result<SceneAnnotation, SceneError> {
        load_scene(s.as_bytes(), &LoadOptions::default())
    }

    #[test]
    fn minimal_document_loads() {
        let s = load(MINIMAL).unwrap();
        assert_eq!(s.frames.len(), 3);
        assert_eq!(s.objects[0].samples[2].frame, 2);
        assert_eq!(s.objects[0].samples[2].center_world, Vec3::new(0.0, 0.0, 7.0));
        assert!(s.objects[0].samples[0].orientation.is_some());
        assert_eq!(s.frame_index(1.0000001), Some(1));
        assert_eq!(s.frame_index(1.5), None);
    }

    #[test]
    fn round_trip_is_identity() {
        let s = load(MINIMAL).unwrap();
        let again = load(&scene_to_json(&s)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let doc = MINIMAL.replacen("\"t\": 2.0, \"pose\"", "\"t\": 0.5, \"pose\"", 1);
        let err = load(&doc).unwrap_err();
        let paths: Vec<_> = err.violations().into_iter().map(|v| v.path).collect();
        assert!(paths.contains(&"frames[2].t".to_string()), "{paths:?}");
    }

    #[test]
    fn orientation_on_non_agent_rejected() {
        let doc = MINIMAL.replace("\"is_agent\": true", "\"is_agent\": false");
        let err = load(&doc).unwrap_err();
        assert!(matches!(err, SceneError::InvariantViolation(_)));
        assert_eq!(err.violations()[0].path, "objects[0].samples[0].orientation");
    }

    #[test]
    fn schema_error_reports_field_path() {
        let doc = MINIMAL.replacen("\"center\": [0,0,5]", "\"center\": [0,0]", 1);
        match load(&doc).unwrap_err() {
            SceneError::Schema { path, .. } => assert_eq!(path, "objects[0].samples[0].center"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn curation_bounds() {
        assert!(!duration_filter(19.9));
        assert!(duration_filter(20.0));
        assert!(duration_filter(60.0));
        assert!(duration_filter(120.0));
        assert!(!duration_filter(120.1));

        let long = MINIMAL.replace("\"duration\": 30.0", "\"duration\": 150.0");
        let err = load(&long).unwrap_err();
        assert_eq!(err.violations()[0].path, "duration");
        assert!(load_scene(long.as_bytes(), &LoadOptions { enforce_curation: false }).is_ok());
    }

    #[test]
    fn sample_off_frame_grid_rejected() {
        let doc = MINIMAL.replacen("{\"t\": 1.0, \"center\"", "{\"t\": 1.5, \"center\"", 1);
        let err = load(&doc).unwrap_err();
        assert_eq!(err.violations()[0].path, "objects[0].samples[1].t");
    }

    #[test]
    fn bbox_checks() {
        let doc = MINIMAL.replacen("[10,20,50,90]", "[50,20,10,90]", 1);
        assert!(load(&doc).is_err());
        let sized = MINIMAL.replace("\"frames\"", "\"image_size\": [40, 100], \"frames\"");
        let err = load(&sized).unwrap_err();
        assert!(err.violations().iter().all(|v| v.path.ends_with(".bbox")));
    }

    #[test]
    fn reserved_and_duplicate_ids() {
        let doc = MINIMAL.replace("\"id\": \"p0\"", "\"id\": \"camera\"");
        assert!(load(&doc).is_err());
    }

    #[test]
    fn bad_rotation_reported() {
        let doc = MINIMAL.replacen("[[1,0,0],[0,1,0],[0,0,1]]", "[[2,0,0],[0,1,0],[0,0,1]]", 1);
        let err = load(&doc).unwrap_err();
        assert_eq!(err.violations()[0].path, "frames[0].pose.R");
    }
}
