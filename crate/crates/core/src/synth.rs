//! Synthetic scenes from parametric motion scripts, and an analytic answer
//! oracle evaluated directly on the closed-form paths.
//!
//! The oracle deliberately does not call into the attribute or answer-rule
//! modules: thresholds are restated here and every series is recomputed from
//! the scripts.
//!
//! ```json
//! {"video_id": "s1", "duration": 30.0, "sampling_mode": "bench1fps", "seed": 7,
//!  "camera": {"type": "static", "position": [0, 0, 0], "yaw_deg": 0},
//!  "objects": [
//!    {"id": "p", "category": "person", "is_agent": true,
//!     "path": {"type": "linear", "position": [0, 0, 5], "velocity": [0.2, 0, 0]},
//!     "orientation": {"type": "yaw", "start_deg": 0, "rate_deg_per_s": 6, "elevation": 0}},
//!    {"id": "b", "category": "ball", "is_agent": false,
//!     "path": {"type": "geometric_radial", "origin": [0, 0, 0], "direction": [0, 0, 1], "r0": 3, "ratio": 1.05},
//!     "visible": [0, 20]}
//!  ]}
//! ```

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::{
    AnswerSequence, BasicChoice, DirectionLabel, FrontAxis, SideAxis, SpeedCompChoice, TrendChoice, VertAxis,
};
use crate::geometry::{OrientationTriple, Pose, Rotation, Vec3};
use crate::qa::{QuestionSpec, QuestionType};
use crate::sampling::sample_frames;
use crate::scene::{
    load_scene, scene_to_json, BBox, FrameRecord, LoadOptions, ObjectTrack, SamplingMode, SceneAnnotation,
    TrajectorySample, CAMERA_ID,
};
use crate::viewpoint::{Mobility, Observer};

pub const DEFAULT_IMAGE_SIZE: [u32; 2] = [640, 480];
const FOCAL_PX: f64 = 500.0;
const MAX_ABS_ELEVATION: f64 = 80.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("unsupported question for the oracle: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub video_id: String,
    pub duration: f64,
    pub sampling_mode: SamplingMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_image_size")]
    pub image_size: [u32; 2],
    pub camera: CameraScript,
    pub objects: Vec<ObjectScript>,
}

fn default_image_size() -> [u32; 2] {
    DEFAULT_IMAGE_SIZE
}

/// Camera path. The camera never pitches or rolls; `yaw_deg` turns it about
/// world +y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CameraScript {
    Static {
        position: [f64; 3],
        #[serde(default)]
        yaw_deg: f64,
    },
    Linear {
        position: [f64; 3],
        velocity: [f64; 3],
        #[serde(default)]
        yaw_deg: f64,
    },
    /// Circles `center` in the horizontal plane, always looking at it.
    Orbit {
        center: [f64; 3],
        radius: f64,
        angular_velocity_deg: f64,
        #[serde(default)]
        phase_deg: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectScript {
    pub id: String,
    pub category: String,
    pub is_agent: bool,
    pub path: PathScript,
    /// Required for agents, forbidden otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<OrientationScript>,
    /// Closed time window in which the object is annotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathScript {
    Static {
        position: [f64; 3],
    },
    /// p(t) = position + velocity·t
    Linear {
        position: [f64; 3],
        velocity: [f64; 3],
    },
    /// p(t_k) = origin + direction·r0·ratio^k for the k-th sampled frame.
    GeometricRadial {
        origin: [f64; 3],
        direction: [f64; 3],
        r0: f64,
        ratio: f64,
    },
    /// Horizontal circle about `center`.
    Circular {
        center: [f64; 3],
        radius: f64,
        angular_velocity_deg: f64,
        #[serde(default)]
        phase_deg: f64,
    },
}

/// Agent facing angles relative to the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OrientationScript {
    Fixed {
        azimuth: f64,
        #[serde(default)]
        elevation: f64,
        #[serde(default)]
        roll: f64,
    },
    /// Azimuth grows linearly with time.
    Yaw {
        start_deg: f64,
        rate_deg_per_s: f64,
        #[serde(default)]
        elevation: f64,
    },
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

impl CameraScript {
    fn position(&self, t: f64) -> Vec3 {
        match self {
            CameraScript::Static { position, .. } => v3(*position),
            CameraScript::Linear { position, velocity, .. } => v3(*position) + v3(*velocity) * t,
            CameraScript::Orbit {
                center,
                radius,
                angular_velocity_deg,
                phase_deg,
            } => {
                let th = (phase_deg + angular_velocity_deg * t).to_radians();
                v3(*center) + Vec3::new(th.sin(), 0.0, -th.cos()) * *radius
            }
        }
    }

    /// Heading about world +y: the camera looks along (sin φ, 0, cos φ).
    fn heading_deg(&self, t: f64) -> f64 {
        match self {
            CameraScript::Static { yaw_deg, .. } | CameraScript::Linear { yaw_deg, .. } => *yaw_deg,
            CameraScript::Orbit {
                angular_velocity_deg,
                phase_deg,
                ..
            } => -(phase_deg + angular_velocity_deg * t),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            CameraScript::Static { position, yaw_deg } => {
                (finite(position) && yaw_deg.is_finite()).then_some(()).ok_or("camera: non-finite value".into())
            }
            CameraScript::Linear {
                position,
                velocity,
                yaw_deg,
            } => (finite(position) && finite(velocity) && yaw_deg.is_finite())
                .then_some(())
                .ok_or("camera: non-finite value".into()),
            CameraScript::Orbit {
                center,
                radius,
                angular_velocity_deg,
                phase_deg,
            } => {
                if !(finite(center) && angular_velocity_deg.is_finite() && phase_deg.is_finite()) {
                    Err("camera: non-finite value".into())
                } else if !(*radius > 0.0) {
                    Err(format!("camera: orbit radius must be positive, got {radius}"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl PathScript {
    /// Position at the `k`-th sampled frame, taken at time `t`.
    pub fn position(&self, k: usize, t: f64) -> Vec3 {
        match self {
            PathScript::Static { position } => v3(*position),
            PathScript::Linear { position, velocity } => v3(*position) + v3(*velocity) * t,
            PathScript::GeometricRadial {
                origin,
                direction,
                r0,
                ratio,
            } => v3(*origin) + v3(*direction).normalize() * (r0 * ratio.powi(k as i32)),
            PathScript::Circular {
                center,
                radius,
                angular_velocity_deg,
                phase_deg,
            } => {
                let th = (phase_deg + angular_velocity_deg * t).to_radians();
                v3(*center) + Vec3::new(th.cos(), 0.0, th.sin()) * *radius
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            PathScript::Static { position } => finite(position).then_some(()).ok_or("non-finite position".into()),
            PathScript::Linear { position, velocity } => (finite(position) && finite(velocity))
                .then_some(())
                .ok_or("non-finite value".into()),
            PathScript::GeometricRadial {
                origin,
                direction,
                r0,
                ratio,
            } => {
                if !(finite(origin) && finite(direction) && r0.is_finite() && ratio.is_finite()) {
                    Err("non-finite value".into())
                } else if v3(*direction).norm() == 0.0 {
                    Err("direction must be non-zero".into())
                } else if !(*r0 > 0.0) {
                    Err(format!("r0 must be positive, got {r0}"))
                } else if !(*ratio > 0.0) {
                    Err(format!("ratio must be positive, got {ratio}"))
                } else {
                    Ok(())
                }
            }
            PathScript::Circular {
                center,
                radius,
                angular_velocity_deg,
                phase_deg,
            } => {
                if !(finite(center) && radius.is_finite() && angular_velocity_deg.is_finite() && phase_deg.is_finite())
                {
                    Err("non-finite value".into())
                } else if !(*radius > 0.0) {
                    Err(format!("radius must be positive, got {radius}"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl OrientationScript {
    /// (azimuth, elevation, roll) in degrees; azimuth is not wrapped.
    fn angles(&self, t: f64) -> (f64, f64, f64) {
        match self {
            OrientationScript::Fixed {
                azimuth,
                elevation,
                roll,
            } => (*azimuth, *elevation, *roll),
            OrientationScript::Yaw {
                start_deg,
                rate_deg_per_s,
                elevation,
            } => (start_deg + rate_deg_per_s * t, *elevation, 0.0),
        }
    }

    fn triple(&self, t: f64) -> Result<OrientationTriple, String> {
        let (a, e, r) = self.angles(t);
        let mut az = a.rem_euclid(360.0);
        if az >= 360.0 {
            az = 0.0;
        }
        OrientationTriple::new(az, e, r).map_err(|e| e.to_string())
    }

    fn validate(&self) -> Result<(), String> {
        let (elevation, roll, rest) = match self {
            OrientationScript::Fixed {
                azimuth,
                elevation,
                roll,
            } => (*elevation, *roll, *azimuth),
            OrientationScript::Yaw {
                start_deg,
                rate_deg_per_s,
                elevation,
            } => (*elevation, 0.0, start_deg + rate_deg_per_s),
        };
        if !(elevation.is_finite() && roll.is_finite() && rest.is_finite()) {
            return Err("non-finite orientation".into());
        }
        if elevation.abs() > MAX_ABS_ELEVATION {
            return Err(format!("elevation {elevation} exceeds ±{MAX_ABS_ELEVATION}"));
        }
        if !(roll > -180.0 && roll <= 180.0) {
            return Err(format!("roll {roll} not in (-180, 180]"));
        }
        Ok(())
    }
}

impl SynthSpec {
    pub fn from_json(bytes: &[u8]) -> Result<SynthSpec, SynthError> {
        let spec: SynthSpec = serde_json::from_slice(bytes).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.video_id.is_empty() {
            return bad("video_id must be non-empty".into());
        }
        if !(self.duration.is_finite() && self.duration >= 1.0) {
            return bad(format!("duration must be at least 1s, got {}", self.duration));
        }
        if self.image_size[0] < 4 || self.image_size[1] < 4 {
            return bad("image_size must be at least 4x4".into());
        }
        self.camera.validate().map_err(SynthError::InvalidSpec)?;
        let mut seen = HashSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            let at = |m: String| SynthError::InvalidSpec(format!("objects[{i}] ({}): {m}", o.id));
            if o.id.is_empty() || o.id == CAMERA_ID {
                return Err(at("invalid id".into()));
            }
            if !seen.insert(o.id.as_str()) {
                return Err(at("duplicate id".into()));
            }
            if o.category.is_empty() {
                return Err(at("empty category".into()));
            }
            o.path.validate().map_err(at)?;
            match (&o.orientation, o.is_agent) {
                (Some(s), true) => s.validate().map_err(at)?,
                (None, true) => return Err(at("agents need an orientation script".into())),
                (Some(_), false) => return Err(at("orientation script on a non-agent".into())),
                (None, false) => {}
            }
            if let Some([a, b]) = o.visible {
                if !(a.is_finite() && b.is_finite() && a <= b) {
                    return Err(at(format!("bad visibility window [{a}, {b}]")));
                }
            }
        }
        Ok(())
    }

    /// Sampled timestamps, recomputed independently of the sampling module.
    pub fn timestamps(&self) -> Vec<f64> {
        match self.sampling_mode {
            SamplingMode::Train32 => (0..32).map(|k| k as f64 * self.duration / 31.0).collect(),
            SamplingMode::Bench1Fps => (0..=self.duration.floor() as usize).map(|k| k as f64).collect(),
        }
    }
}

fn object_visible(o: &ObjectScript, t: f64) -> bool {
    o.visible.is_none_or(|[a, b]| t >= a - 1e-9 && t <= b + 1e-9)
}

fn camera_pose(script: &CameraScript, t: f64) -> Pose {
    Pose::new(Rotation::rot_y(script.heading_deg(t)), script.position(t))
}

/// Pinhole box around the projected center, clamped into the image.
fn synthetic_bbox(center_world: &Vec3, camera: &Pose, [w, h]: [u32; 2]) -> BBox {
    let c = camera.rotation.transpose().apply(&(center_world - camera.translation));
    let (w, h) = (w as f64, h as f64);
    let (u, v, half) = if c.z > 0.1 {
        let half = (0.5 * FOCAL_PX / c.z).clamp(1.0, w.min(h) / 4.0);
        (FOCAL_PX * c.x / c.z + w / 2.0, FOCAL_PX * c.y / c.z + h / 2.0, half)
    } else {
        (w / 2.0, h - 2.0, 1.0)
    };
    let u = u.clamp(1.0, w - 1.0);
    let v = v.clamp(1.0, h - 1.0);
    let x1 = (u - half).floor().max(0.0) as i32;
    let y1 = (v - half).floor().max(0.0) as i32;
    let x2 = ((u + half).ceil().min(w) as i32).max(x1 + 1);
    let y2 = ((v + half).ceil().min(h) as i32).max(y1 + 1);
    BBox::new(x1, y1, x2, y2)
}

/// Evaluates the scripts at the sampled timestamps.
///
/// The result is round-tripped through the annotation loader, so anything
/// returned here satisfies every scene invariant.
pub fn generate_scene(spec: &SynthSpec) -> Result<SceneAnnotation, SynthError> {
    spec.validate()?;
    let times = sample_frames(spec.duration, spec.sampling_mode);
    let frames: Vec<FrameRecord> = times
        .iter()
        .map(|&t| FrameRecord {
            timestamp: t,
            camera_pose: camera_pose(&spec.camera, t),
            point_map: None,
        })
        .collect();
    let mut objects = Vec::with_capacity(spec.objects.len());
    for o in &spec.objects {
        let mut samples = Vec::new();
        for (k, &t) in times.iter().enumerate() {
            if !object_visible(o, t) {
                continue;
            }
            let center = o.path.position(k, t);
            let orientation = match &o.orientation {
                Some(s) => Some(s.triple(t).map_err(|m| SynthError::InvalidSpec(format!("{}: {m}", o.id)))?),
                None => None,
            };
            samples.push(TrajectorySample {
                timestamp: t,
                frame: k,
                center_world: center,
                bbox: synthetic_bbox(&center, &frames[k].camera_pose, spec.image_size),
                orientation,
            });
        }
        if samples.is_empty() {
            return Err(SynthError::InvalidSpec(format!("{}: never visible", o.id)));
        }
        objects.push(ObjectTrack {
            object_id: o.id.clone(),
            category: o.category.clone(),
            is_agent: o.is_agent,
            samples,
        });
    }
    let scene = SceneAnnotation {
        video_id: spec.video_id.clone(),
        duration: spec.duration,
        sampling_mode: spec.sampling_mode,
        image_size: Some((spec.image_size[0], spec.image_size[1])),
        frames,
        objects,
    };
    load_scene(
        scene_to_json(&scene).as_bytes(),
        &LoadOptions {
            enforce_curation: false,
        },
    )
    .map_err(|e| SynthError::InvalidSpec(e.to_string()))
}

/// A random but valid spec, reproducible from `seed`.
pub fn random_spec(video_id: &str, seed: u64, mode: SamplingMode) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = match mode {
        SamplingMode::Bench1Fps => rng.random_range(20..=40) as f64,
        SamplingMode::Train32 => rng.random_range(20..=120) as f64,
    };
    let point = |rng: &mut ChaCha8Rng| {
        [
            rng.random_range(-4.0..4.0),
            rng.random_range(-1.5..1.5),
            rng.random_range(3.0..12.0),
        ]
    };
    let camera = match rng.random_range(0..3) {
        0 => CameraScript::Static {
            position: [0.0, 0.0, 0.0],
            yaw_deg: rng.random_range(-30.0..30.0),
        },
        1 => CameraScript::Linear {
            position: [0.0, 0.0, 0.0],
            velocity: [rng.random_range(-0.1..0.1), 0.0, rng.random_range(-0.1..0.1)],
            yaw_deg: rng.random_range(-30.0..30.0),
        },
        _ => CameraScript::Orbit {
            center: [0.0, 0.0, 6.0],
            radius: rng.random_range(4.0..8.0),
            angular_velocity_deg: rng.random_range(-3.0..3.0),
            phase_deg: rng.random_range(-20.0..20.0),
        },
    };
    let n = rng.random_range(2..=5);
    let n_agents = rng.random_range(0..=n.min(3));
    let agent_categories = ["person", "dog", "car", "cyclist"];
    let object_categories = ["ball", "chair", "box", "cup", "bottle"];
    let mut objects = Vec::with_capacity(n);
    for i in 0..n {
        let is_agent = i < n_agents;
        let path = match rng.random_range(0..4) {
            0 => PathScript::Static { position: point(&mut rng) },
            1 => {
                let s = rng.random_range(0.0..0.6);
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                PathScript::Linear {
                    position: point(&mut rng),
                    velocity: [s * a.cos(), rng.random_range(-0.05..0.05), s * a.sin()],
                }
            }
            2 => PathScript::GeometricRadial {
                origin: [0.0, 0.0, 0.0],
                direction: point(&mut rng),
                r0: rng.random_range(2.0..6.0),
                ratio: *[0.93, 0.97, 1.0, 1.04, 1.08].choose(&mut rng).expect("non-empty"),
            },
            _ => PathScript::Circular {
                center: point(&mut rng),
                radius: rng.random_range(0.5..3.0),
                angular_velocity_deg: rng.random_range(-30.0..30.0),
                phase_deg: rng.random_range(0.0..360.0),
            },
        };
        let orientation = is_agent.then(|| {
            if rng.random_bool(0.5) {
                OrientationScript::Fixed {
                    azimuth: rng.random_range(0.0..360.0),
                    elevation: rng.random_range(-30.0..30.0),
                    roll: rng.random_range(-20.0..20.0),
                }
            } else {
                OrientationScript::Yaw {
                    start_deg: rng.random_range(0.0..360.0),
                    rate_deg_per_s: rng.random_range(-20.0..20.0),
                    elevation: rng.random_range(-20.0..20.0),
                }
            }
        });
        let visible = match rng.random_range(0..4) {
            0 => Some([0.0, (duration * rng.random_range(0.5..0.9)).round()]),
            1 => Some([(duration * rng.random_range(0.1..0.5)).round(), duration]),
            _ => None,
        };
        let category = if is_agent {
            agent_categories[rng.random_range(0..agent_categories.len())]
        } else {
            object_categories[rng.random_range(0..object_categories.len())]
        };
        objects.push(ObjectScript {
            id: format!("o{i}"),
            category: category.to_string(),
            is_agent,
            path,
            orientation,
            visible,
        });
    }
    SynthSpec {
        video_id: video_id.to_string(),
        duration,
        sampling_mode: mode,
        seed,
        image_size: DEFAULT_IMAGE_SIZE,
        camera,
        objects,
    }
}

// ---------------------------------------------------------------------------
// Oracle

const ORACLE_TREND_LOW: f64 = 0.8;
const ORACLE_TREND_HIGH: f64 = 1.2;
const ORACLE_SPEED_LOW: f64 = 0.83;
const ORACLE_SPEED_HIGH: f64 = 1.20;
const ORACLE_POS_CONE_DEG: f64 = 70.0;
const ORACLE_NEG_CONE_DEG: f64 = 110.0;
const ORACLE_SPEED_FLOOR: f64 = 1e-9;
const ORACLE_MIN_SEPARATION: f64 = 1e-6;

/// Oracle answer plus the smallest gap between any compared quantity and
/// its threshold. A tiny margin means rounding could flip the answer.
#[derive(Debug, Clone)]
pub struct OracleAnswer {
    pub answer: AnswerSequence,
    pub margin: f64,
}

struct Margin(f64);

impl Margin {
    fn note(&mut self, value: f64, threshold: f64) {
        self.0 = self.0.min((value - threshold).abs());
    }
}

/// Observer origin and forward/left/up axes in world coordinates.
struct Axes {
    origin: Vec3,
    f: Vec3,
    l: Vec3,
    u: Vec3,
}

impl Axes {
    fn coords(&self, p: &Vec3) -> Vec3 {
        self.dir(&(p - self.origin))
    }

    /// Components along (forward, left, up).
    fn dir(&self, d: &Vec3) -> Vec3 {
        Vec3::new(d.dot(&self.f), d.dot(&self.l), d.dot(&self.u))
    }
}

fn camera_axes(spec: &SynthSpec, t: f64) -> (Vec3, Vec3, Vec3) {
    let phi = spec.camera.heading_deg(t).to_radians();
    let forward = Vec3::new(phi.sin(), 0.0, phi.cos());
    let right = Vec3::new(phi.cos(), 0.0, -phi.sin());
    (forward, -right, Vec3::new(0.0, -1.0, 0.0))
}

/// Camera-coordinate axes of an agent; camera coords are x right, y down,
/// z forward.
fn agent_axes_camera(az: f64, el: f64, roll: f64) -> (Vec3, Vec3, Vec3) {
    let (a, e, r) = (az.to_radians(), el.to_radians(), roll.to_radians());
    let f = Vec3::new(a.sin() * e.cos(), -e.sin(), -a.cos() * e.cos());
    // camera up is (0,-1,0); left = up x f
    let l = Vec3::new(-f.z, 0.0, f.x).normalize();
    let u = f.cross(&l);
    let (sr, cr) = r.sin_cos();
    (f, l * cr + u * sr, u * cr - l * sr)
}

fn object<'a>(spec: &'a SynthSpec, id: &str) -> Result<&'a ObjectScript, SynthError> {
    spec.objects
        .iter()
        .find(|o| o.id == id)
        .ok_or_else(|| SynthError::Unsupported(format!("unknown object {id}")))
}

fn forward_world(spec: &SynthSpec, o: &ObjectScript, t: f64) -> Result<Vec3, SynthError> {
    let s = o
        .orientation
        .as_ref()
        .ok_or_else(|| SynthError::Unsupported(format!("{} has no orientation", o.id)))?;
    let (az, el, roll) = s.angles(t);
    let (f, _, _) = agent_axes_camera(az, el, roll);
    let (cf, cl, cu) = camera_axes(spec, t);
    // camera x, y, z in world are -left, -up, forward
    Ok(-cl * f.x - cu * f.y + cf * f.z)
}

fn observer_axes(spec: &SynthSpec, observer: &Observer, k: usize, times: &[f64]) -> Result<Axes, SynthError> {
    let t = times[k];
    let (cf, cl, cu) = camera_axes(spec, t);
    match observer {
        Observer::Camera => Ok(Axes {
            origin: spec.camera.position(t),
            f: cf,
            l: cl,
            u: cu,
        }),
        Observer::Object(id) => {
            let o = object(spec, id)?;
            let s = o
                .orientation
                .as_ref()
                .ok_or_else(|| SynthError::Unsupported(format!("{id} is not an agent")))?;
            let (az, el, roll) = s.angles(t);
            let (f, l, u) = agent_axes_camera(az, el, roll);
            let to_world = |v: Vec3| -cl * v.x - cu * v.y + cf * v.z;
            Ok(Axes {
                origin: o.path.position(k, t),
                f: to_world(f),
                l: to_world(l),
                u: to_world(u),
            })
        }
    }
}

fn oracle_trend(values: &[f64], m: &mut Margin) -> Vec<TrendChoice> {
    #[derive(PartialEq)]
    enum Band {
        Up,
        Down,
        Flat,
    }
    let mut band = |r: f64| {
        m.note(r, ORACLE_TREND_LOW);
        m.note(r, ORACLE_TREND_HIGH);
        if r > ORACLE_TREND_HIGH {
            Band::Up
        } else if r < ORACLE_TREND_LOW {
            Band::Down
        } else {
            Band::Flat
        }
    };
    let n = values.len();
    let mut out = Vec::new();
    let mut s = 0;
    while s + 1 < n {
        match band(values[s + 1] / values[s]) {
            b @ (Band::Up | Band::Down) => {
                let mut e = s + 1;
                while e + 1 < n && band(values[e + 1] / values[e]) == b {
                    e += 1;
                }
                out.push(if b == Band::Up {
                    TrendChoice::Larger
                } else {
                    TrendChoice::Smaller
                });
                s = e;
            }
            Band::Flat => {
                let exit = (s + 2..n).find_map(|j| match band(values[j] / values[s]) {
                    Band::Flat => None,
                    b => Some((j, b)),
                });
                match exit {
                    None => {
                        out.push(TrendChoice::Constant);
                        break;
                    }
                    Some((j, b)) => {
                        out.push(if b == Band::Up {
                            TrendChoice::ConstantThenLarger
                        } else {
                            TrendChoice::ConstantThenSmaller
                        });
                        s = j;
                    }
                }
            }
        }
    }
    out
}

fn oracle_direction(c: &Vec3, m: &mut Margin) -> Result<DirectionLabel, SynthError> {
    let n = c.norm();
    if n <= ORACLE_MIN_SEPARATION {
        return Err(SynthError::Unsupported("degenerate direction".into()));
    }
    let pos = ORACLE_POS_CONE_DEG.to_radians().cos();
    let neg = ORACLE_NEG_CONE_DEG.to_radians().cos();
    let mut sign = |x: f64| {
        let x = x / n;
        m.note(x, pos);
        m.note(x, neg);
        if x > pos {
            1
        } else if x < neg {
            -1
        } else {
            0
        }
    };
    let (f, l, u) = (sign(c.x), sign(c.y), sign(c.z));
    Ok(DirectionLabel {
        front: [FrontAxis::Behind, FrontAxis::None, FrontAxis::Front][(f + 1) as usize],
        side: [SideAxis::Right, SideAxis::None, SideAxis::Left][(l + 1) as usize],
        vert: [VertAxis::Below, VertAxis::None, VertAxis::Above][(u + 1) as usize],
    })
}

fn oracle_speeds(coords: &[Vec3], times: &[f64], m: &mut Margin) -> Vec<f64> {
    (1..coords.len())
        .map(|k| {
            let s = (coords[k] - coords[k - 1]).norm() / (times[k] - times[k - 1]);
            // nonzero speeds this small are rounding noise on either side
            if s > 0.0 && s < 1e-6 {
                m.0 = 0.0;
            }
            s.max(ORACLE_SPEED_FLOOR)
        })
        .collect()
}

fn collapse(states: Vec<BasicChoice>) -> Result<AnswerSequence, SynthError> {
    let mut out: Vec<BasicChoice> = Vec::new();
    for s in states {
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    AnswerSequence::new(out).map_err(|e| SynthError::Unsupported(e.to_string()))
}

/// Analytic answer for a question over a synthetic scene.
pub fn expected_answer(spec: &SynthSpec, q: &QuestionSpec) -> Result<AnswerSequence, SynthError> {
    oracle_answer(spec, q).map(|o| o.answer)
}

/// [`expected_answer`] together with its decision margin.
pub fn oracle_answer(spec: &SynthSpec, q: &QuestionSpec) -> Result<OracleAnswer, SynthError> {
    let times = spec.timestamps();
    let (s, e) = (q.interval.start, q.interval.end);
    if s >= e || e >= times.len() {
        return Err(SynthError::Unsupported(format!("interval {s}..={e}")));
    }
    let arity = match q.qtype {
        QuestionType::Distance | QuestionType::Direction | QuestionType::SpeedComparison => 2,
        _ => 1,
    };
    if q.targets.len() != arity {
        return Err(SynthError::Unsupported("wrong number of targets".into()));
    }
    let frames: Vec<usize> = (s..=e).collect();
    let anchor = |t: Option<f64>| {
        t.and_then(|t| times.iter().position(|&x| (x - t).abs() <= 1e-6))
            .ok_or_else(|| SynthError::Unsupported(format!("anchor {t:?} is not a sampled time")))
    };
    let pose_frame = |k: usize| -> Result<usize, SynthError> {
        match q.viewpoint.mobility {
            Mobility::Relative => Ok(k),
            Mobility::Absolute => anchor(q.viewpoint.anchor_time),
        }
    };
    let axes_at = |k: usize| observer_axes(spec, &q.viewpoint.observer, pose_frame(k)?, &times);
    let world = |id: &str, k: usize| -> Result<Vec3, SynthError> { Ok(object(spec, id)?.path.position(k, times[k])) };
    let coords_of = |id: &str| -> Result<Vec<Vec3>, SynthError> {
        frames.iter().map(|&k| Ok(axes_at(k)?.coords(&world(id, k)?))).collect()
    };
    let window: Vec<f64> = frames.iter().map(|&k| times[k]).collect();

    let mut m = Margin(f64::INFINITY);
    let states: Vec<BasicChoice> = match q.qtype {
        QuestionType::Distance => {
            let d: Vec<f64> = frames
                .iter()
                .map(|&k| Ok((world(&q.targets[0], k)? - world(&q.targets[1], k)?).norm()))
                .collect::<Result<_, SynthError>>()?;
            if d.iter().any(|&x| x <= 0.0) {
                return Err(SynthError::Unsupported("coincident objects".into()));
            }
            oracle_trend(&d, &mut m).into_iter().map(BasicChoice::from).collect()
        }
        QuestionType::Direction => frames
            .iter()
            .map(|&k| {
                let d = world(&q.targets[0], k)? - world(&q.targets[1], k)?;
                oracle_direction(&axes_at(k)?.dir(&d), &mut m).map(BasicChoice::from)
            })
            .collect::<Result<_, _>>()?,
        QuestionType::Orientation => {
            let o = object(spec, &q.targets[0])?;
            frames
                .iter()
                .map(|&k| {
                    let fw = forward_world(spec, o, times[k])?;
                    oracle_direction(&axes_at(k)?.dir(&fw), &mut m).map(BasicChoice::from)
                })
                .collect::<Result<_, _>>()?
        }
        QuestionType::Speed => {
            let sp = oracle_speeds(&coords_of(&q.targets[0])?, &window, &mut m);
            oracle_trend(&sp, &mut m).into_iter().map(BasicChoice::from).collect()
        }
        QuestionType::SpeedComparison => {
            let a = oracle_speeds(&coords_of(&q.targets[0])?, &window, &mut m);
            let b = oracle_speeds(&coords_of(&q.targets[1])?, &window, &mut m);
            a.iter()
                .zip(&b)
                .map(|(x, y)| {
                    let r = x / y;
                    m.note(r, ORACLE_SPEED_LOW);
                    m.note(r, ORACLE_SPEED_HIGH);
                    BasicChoice::from(if r > ORACLE_SPEED_HIGH {
                        SpeedCompChoice::FormerFaster
                    } else if r < ORACLE_SPEED_LOW {
                        SpeedCompChoice::LatterFaster
                    } else {
                        SpeedCompChoice::NearlySame
                    })
                })
                .collect()
        }
        QuestionType::DirectionPrediction => {
            let t_end = times[e];
            let seen_until = t_end - 1.0;
            let last_seen = frames
                .iter()
                .rev()
                .copied()
                .find(|&k| times[k] <= seen_until + 1e-6)
                .ok_or_else(|| SynthError::Unsupported("interval shorter than the hidden second".into()))?;
            let tail_start = frames
                .iter()
                .copied()
                .find(|&k| times[k] >= seen_until - 1e-9)
                .expect("the end frame is in the tail");
            if tail_start == e {
                return Err(SynthError::Unsupported("single-sample tail".into()));
            }
            let frozen = match q.viewpoint.mobility {
                Mobility::Relative => last_seen,
                Mobility::Absolute => anchor(q.viewpoint.anchor_time)?,
            };
            let axes = observer_axes(spec, &q.viewpoint.observer, frozen, &times)?;
            let d = world(&q.targets[0], e)? - world(&q.targets[0], tail_start)?;
            vec![oracle_direction(&axes.dir(&d), &mut m)?.into()]
        }
    };
    Ok(OracleAnswer {
        answer: collapse(states)?,
        margin: m.0,
    })
}
