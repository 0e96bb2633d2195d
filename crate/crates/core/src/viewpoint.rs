//! Observer identity, mobility and per-timestamp observer poses.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{frame_from_orientation_with, GeometryError, GimbalPolicy, Pose};
use crate::scene::{SceneAnnotation, CAMERA_ID};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Observer {
    Camera,
    Object(String),
}

impl Observer {
    pub fn as_str(&self) -> &str {
        match self {
            Observer::Camera => CAMERA_ID,
            Observer::Object(id) => id,
        }
    }

    pub fn object_id(&self) -> Option<&str> {
        match self {
            Observer::Camera => None,
            Observer::Object(id) => Some(id),
        }
    }
}

impl fmt::Display for Observer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<&str> for Observer {
    fn from(s: &str) -> Self {
        if s == CAMERA_ID {
            Observer::Camera
        } else {
            Observer::Object(s.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mobility {
    /// The observer pose follows the observer at every timestamp.
    Relative,
    /// The observer pose is frozen at the anchor timestamp.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawViewpoint", into = "RawViewpoint")]
pub struct ViewpointSpec {
    pub observer: Observer,
    pub mobility: Mobility,
    /// Set iff `mobility` is `Absolute`.
    pub anchor_time: Option<f64>,
}

impl ViewpointSpec {
    pub fn relative(observer: Observer) -> Self {
        ViewpointSpec {
            observer,
            mobility: Mobility::Relative,
            anchor_time: None,
        }
    }

    pub fn absolute(observer: Observer, anchor_time: f64) -> Self {
        ViewpointSpec {
            observer,
            mobility: Mobility::Absolute,
            anchor_time: Some(anchor_time),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawViewpoint {
    observer: String,
    mobility: Mobility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor_time: Option<f64>,
}

impl TryFrom<RawViewpoint> for ViewpointSpec {
    type Error = String;

    fn try_from(r: RawViewpoint) -> Result<Self, String> {
        match (r.mobility, r.anchor_time) {
            (Mobility::Absolute, None) => Err("absolute viewpoint requires anchor_time".into()),
            (Mobility::Relative, Some(_)) => Err("relative viewpoint cannot carry anchor_time".into()),
            _ => Ok(ViewpointSpec {
                observer: Observer::from(r.observer.as_str()),
                mobility: r.mobility,
                anchor_time: r.anchor_time,
            }),
        }
    }
}

impl From<ViewpointSpec> for RawViewpoint {
    fn from(v: ViewpointSpec) -> Self {
        RawViewpoint {
            observer: v.observer.as_str().to_string(),
            mobility: v.mobility,
            anchor_time: v.anchor_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ViewError {
    #[error("observer {observer} is not visible at {time}s")]
    ObserverNotVisible { observer: String, time: f64 },
    #[error("observer {0} is not an agent")]
    NotAnAgent(String),
    #[error("object {object} has no orientation at {time}s")]
    MissingOrientation { object: String, time: f64 },
    #[error("unknown object id {0:?}")]
    UnknownObject(String),
    #[error("anchor time {0:?} is not a sampled timestamp")]
    InvalidAnchor(Option<f64>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The frame whose pose defines the observer when asking about `frame`.
pub fn pose_frame(view: &ViewpointSpec, scene: &SceneAnnotation, frame: usize) -> Result<usize, ViewError> {
    match view.mobility {
        Mobility::Relative => Ok(frame),
        Mobility::Absolute => view
            .anchor_time
            .and_then(|t| scene.frame_index(t))
            .ok_or(ViewError::InvalidAnchor(view.anchor_time)),
    }
}

/// Observer pose (observer-to-world) used for the sampled frame `frame`.
pub fn observer_pose_at(
    view: &ViewpointSpec,
    scene: &SceneAnnotation,
    frame: usize,
    gimbal: GimbalPolicy,
) -> Result<Pose, ViewError> {
    let at = pose_frame(view, scene, frame)?;
    match &view.observer {
        Observer::Camera => Ok(scene.frames[at].camera_pose),
        Observer::Object(id) => {
            let track = scene.object(id).ok_or_else(|| ViewError::UnknownObject(id.clone()))?;
            if !track.is_agent {
                return Err(ViewError::NotAnAgent(id.clone()));
            }
            let time = scene.timestamp(at);
            let sample = track.sample_at(at).ok_or_else(|| ViewError::ObserverNotVisible {
                observer: id.clone(),
                time,
            })?;
            let orientation = sample.orientation.ok_or_else(|| ViewError::MissingOrientation {
                object: id.clone(),
                time,
            })?;
            Ok(frame_from_orientation_with(
                &orientation,
                &scene.frames[at].camera_pose,
                &sample.center_world,
                gimbal,
            )?)
        }
    }
}
