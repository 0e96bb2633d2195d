//! Per-timestamp attribute series expressed in an observer frame.

use thiserror::Error;

use crate::geometry::{direction_to_observer, world_to_observer, GimbalPolicy, Vec3};
use crate::sampling::FrameInterval;
use crate::scene::SceneAnnotation;
use crate::viewpoint::{observer_pose_at, ViewError, ViewpointSpec};

/// Minimum separation (scene units) for a direction between two objects.
pub const DEFAULT_EPS_DIR: f64 = 1e-6;

/// Length of the hidden tail used for direction prediction, in seconds.
pub const FINAL_SECOND: f64 = 1.0;

const TAIL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttributeError {
    #[error(transparent)]
    View(#[from] ViewError),
    #[error("object {object} is not visible at {time}s")]
    ObjectNotVisible { object: String, time: f64 },
    #[error("unknown object id {0:?}")]
    UnknownObject(String),
    #[error("series timestamps are not aligned")]
    MisalignedSeries,
    #[error("objects coincide at {time}s")]
    CoincidentObjects { time: f64 },
    #[error("{0} is not an agent")]
    NotAnAgent(String),
    #[error("{object} has no orientation at {time}s")]
    MissingOrientation { object: String, time: f64 },
    #[error("series needs at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("fewer than two samples within the final second")]
    InsufficientTail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series<T> {
    pub timestamps: Vec<f64>,
    pub values: Vec<T>,
}

impl<T> Series<T> {
    pub fn new(timestamps: Vec<f64>, values: Vec<T>) -> Self {
        assert_eq!(timestamps.len(), values.len(), "series length mismatch");
        Series { timestamps, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn aligned_with<U>(&self, other: &Series<U>) -> bool {
        self.timestamps == other.timestamps
    }
}

/// Object center at each frame of `interval`, in the observer's frame.
pub fn positions_in_view(
    scene: &SceneAnnotation,
    view: &ViewpointSpec,
    object_id: &str,
    interval: FrameInterval,
    gimbal: GimbalPolicy,
) -> Result<Series<Vec3>, AttributeError> {
    let track = scene
        .object(object_id)
        .ok_or_else(|| AttributeError::UnknownObject(object_id.to_string()))?;
    let mut timestamps = Vec::with_capacity(interval.len());
    let mut values = Vec::with_capacity(interval.len());
    for f in interval.frames() {
        let time = scene.timestamp(f);
        let sample = track.sample_at(f).ok_or_else(|| AttributeError::ObjectNotVisible {
            object: object_id.to_string(),
            time,
        })?;
        let pose = observer_pose_at(view, scene, f, gimbal)?;
        timestamps.push(time);
        values.push(world_to_observer(&sample.center_world, &pose));
    }
    Ok(Series::new(timestamps, values))
}

pub fn distance_series(a: &Series<Vec3>, b: &Series<Vec3>) -> Result<Series<f64>, AttributeError> {
    if !a.aligned_with(b) {
        return Err(AttributeError::MisalignedSeries);
    }
    let values = a.values.iter().zip(&b.values).map(|(p, q)| (p - q).norm()).collect();
    Ok(Series::new(a.timestamps.clone(), values))
}

/// Unit direction of `target` as seen from `reference` at each timestamp.
pub fn direction_series(
    target: &Series<Vec3>,
    reference: &Series<Vec3>,
    eps_dir: f64,
) -> Result<Series<Vec3>, AttributeError> {
    if !target.aligned_with(reference) {
        return Err(AttributeError::MisalignedSeries);
    }
    let values = target
        .values
        .iter()
        .zip(&reference.values)
        .zip(&target.timestamps)
        .map(|((t, r), &time)| {
            let d = t - r;
            let n = d.norm();
            if n <= eps_dir {
                Err(AttributeError::CoincidentObjects { time })
            } else {
                Ok(d / n)
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(Series::new(target.timestamps.clone(), values))
}

/// Agent forward vector at each frame of `interval`, in the observer's frame.
pub fn orientation_series(
    scene: &SceneAnnotation,
    view: &ViewpointSpec,
    agent_id: &str,
    interval: FrameInterval,
    gimbal: GimbalPolicy,
) -> Result<Series<Vec3>, AttributeError> {
    let track = scene
        .object(agent_id)
        .ok_or_else(|| AttributeError::UnknownObject(agent_id.to_string()))?;
    if !track.is_agent {
        return Err(AttributeError::NotAnAgent(agent_id.to_string()));
    }
    let mut timestamps = Vec::with_capacity(interval.len());
    let mut values = Vec::with_capacity(interval.len());
    for f in interval.frames() {
        let time = scene.timestamp(f);
        let sample = track.sample_at(f).ok_or_else(|| AttributeError::ObjectNotVisible {
            object: agent_id.to_string(),
            time,
        })?;
        let orientation = sample.orientation.ok_or_else(|| AttributeError::MissingOrientation {
            object: agent_id.to_string(),
            time,
        })?;
        let forward_world = scene.frames[f].camera_pose.rotation.apply(&orientation.forward_in_camera());
        let pose = observer_pose_at(view, scene, f, gimbal)?;
        timestamps.push(time);
        values.push(direction_to_observer(&forward_world, &pose));
    }
    Ok(Series::new(timestamps, values))
}

/// Speed over each adjacent pair, stamped at the right endpoint.
pub fn speed_series(positions: &Series<Vec3>) -> Result<Series<f64>, AttributeError> {
    if positions.len() < 2 {
        return Err(AttributeError::TooShort {
            needed: 2,
            got: positions.len(),
        });
    }
    let values = positions
        .values
        .windows(2)
        .zip(positions.timestamps.windows(2))
        .map(|(p, t)| (p[1] - p[0]).norm() / (t[1] - t[0]))
        .collect();
    Ok(Series::new(positions.timestamps[1..].to_vec(), values))
}

/// Displacement from the first sample within the final second to the last.
pub fn final_second_displacement(positions: &Series<Vec3>) -> Result<Vec3, AttributeError> {
    let Some(&t_last) = positions.timestamps.last() else {
        return Err(AttributeError::InsufficientTail);
    };
    let first = positions
        .timestamps
        .iter()
        .position(|&t| t >= t_last - FINAL_SECOND - TAIL_TOLERANCE)
        .expect("last sample is always inside the tail");
    if first + 1 >= positions.len() {
        return Err(AttributeError::InsufficientTail);
    }
    Ok(positions.values[positions.len() - 1] - positions.values[first])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrientationTriple, Pose, Rotation};
    use crate::scene::{BBox, FrameRecord, ObjectTrack, SamplingMode, TrajectorySample};
    use crate::viewpoint::Observer;
    use approx::assert_relative_eq;

    fn series(points: &[(f64, f64, f64)]) -> Series<Vec3> {
        Series::new(
            (0..points.len()).map(|k| k as f64).collect(),
            points.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect(),
        )
    }

    fn track(id: &str, agent: bool, centers: &[Vec3], orient: Option<Vec<f64>>) -> ObjectTrack {
        ObjectTrack {
            object_id: id.into(),
            category: if agent { "person" } else { "ball" }.into(),
            is_agent: agent,
            samples: centers
                .iter()
                .enumerate()
                .map(|(k, c)| TrajectorySample {
                    timestamp: k as f64,
                    frame: k,
                    center_world: *c,
                    bbox: BBox::new(0, 0, 1, 1),
                    orientation: orient
                        .as_ref()
                        .map(|az| OrientationTriple::new(az[k], 0.0, 0.0).unwrap()),
                })
                .collect(),
        }
    }

    fn scene(cams: Vec<Pose>, objects: Vec<ObjectTrack>) -> SceneAnnotation {
        SceneAnnotation {
            video_id: "v".into(),
            duration: (cams.len() - 1) as f64,
            sampling_mode: SamplingMode::Bench1Fps,
            image_size: None,
            frames: cams
                .into_iter()
                .enumerate()
                .map(|(k, p)| FrameRecord {
                    timestamp: k as f64,
                    camera_pose: p,
                    point_map: None,
                })
                .collect(),
            objects,
        }
    }

    #[test]
    fn static_object_under_absolute_camera_is_constant() {
        let cams = (0..4).map(|k| Pose::from_translation(Vec3::new(k as f64, 0.0, 0.0))).collect();
        let s = scene(cams, vec![track("b", false, &[Vec3::new(1.0, 2.0, 3.0); 4], None)]);
        let v = ViewpointSpec::absolute(Observer::Camera, 0.0);
        let p = positions_in_view(&s, &v, "b", FrameInterval::new(0, 3), GimbalPolicy::Fail).unwrap();
        assert!(p.values.iter().all(|x| *x == Vec3::new(1.0, 2.0, 3.0)));
    }

    #[test]
    fn object_coincident_with_agent_observer_is_origin() {
        let centers: Vec<Vec3> = (0..4).map(|k| Vec3::new(k as f64, 0.5, 4.0)).collect();
        let s = scene(
            vec![Pose::identity(); 4],
            vec![track("p", true, &centers, Some(vec![0.0, 30.0, 60.0, 90.0]))],
        );
        let v = ViewpointSpec::relative("p".into());
        let p = positions_in_view(&s, &v, "p", FrameInterval::new(0, 3), GimbalPolicy::Fail).unwrap();
        for x in p.values {
            assert_relative_eq!(x, Vec3::zeros(), epsilon = 1e-12);
        }
    }

    #[test]
    fn positions_match_closed_form() {
        // Camera rotated 90° about y and translated; object at fixed world point.
        let cam = Pose::new(Rotation::rot_y(90.0), Vec3::new(0.0, 0.0, 1.0));
        let s = scene(vec![cam; 2], vec![track("b", false, &[Vec3::new(2.0, 0.0, 1.0); 2], None)]);
        let v = ViewpointSpec::relative(Observer::Camera);
        let p = positions_in_view(&s, &v, "b", FrameInterval::new(0, 1), GimbalPolicy::Fail).unwrap();
        // rotY(90) = [[0,0,1],[0,1,0],[-1,0,0]]; Rᵀ (2,0,0) = (0,0,2)
        assert_relative_eq!(p.values[0], Vec3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn invisible_object_errors() {
        let s = scene(vec![Pose::identity(); 3], vec![track("b", false, &[Vec3::z(); 2], None)]);
        let v = ViewpointSpec::relative(Observer::Camera);
        let err = positions_in_view(&s, &v, "b", FrameInterval::new(0, 2), GimbalPolicy::Fail).unwrap_err();
        assert!(matches!(err, AttributeError::ObjectNotVisible { .. }));
    }

    #[test]
    fn distance_cases() {
        let a = series(&[(0.0, 0.0, 0.0); 3]);
        let b = series(&[(3.0, 4.0, 0.0); 3]);
        assert_eq!(distance_series(&a, &b).unwrap().values, vec![5.0; 3]);
        assert_eq!(distance_series(&a, &a).unwrap().values, vec![0.0; 3]);
        let r: Vec<(f64, f64, f64)> = (0..5).map(|k| (0.0, 0.0, 2.0 * 1.5f64.powi(k))).collect();
        let d = distance_series(&series(&r), &a.clone().with_len(5)).unwrap();
        for w in d.values.windows(2) {
            assert_relative_eq!(w[1] / w[0], 1.5, epsilon = 1e-12);
        }
        let short = series(&[(0.0, 0.0, 0.0); 2]);
        assert_eq!(distance_series(&a, &short), Err(AttributeError::MisalignedSeries));
    }

    impl Series<Vec3> {
        fn with_len(self, n: usize) -> Self {
            let v = self.values[0];
            Series::new((0..n).map(|k| k as f64).collect(), vec![v; n])
        }
    }

    #[test]
    fn direction_cases() {
        let r = series(&[(1.0, 1.0, 1.0)]);
        let t = series(&[(1.0, 1.0, 2.0)]);
        assert_eq!(direction_series(&t, &r, DEFAULT_EPS_DIR).unwrap().values[0], Vec3::new(0.0, 0.0, 1.0));
        assert!(matches!(
            direction_series(&r, &r, DEFAULT_EPS_DIR),
            Err(AttributeError::CoincidentObjects { .. })
        ));
        let t = series(&[(2.0, 1.0, 2.0)]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(
            direction_series(&t, &r, DEFAULT_EPS_DIR).unwrap().values[0],
            Vec3::new(h, 0.0, h),
            epsilon = 1e-12
        );
    }

    #[test]
    fn orientation_cases() {
        let center = [Vec3::new(0.0, 0.0, 5.0); 3];
        let s = scene(
            vec![Pose::identity(); 3],
            vec![
                track("p", true, &center, Some(vec![0.0, 45.0, 90.0])),
                track("b", false, &center, None),
            ],
        );
        let cam = ViewpointSpec::relative(Observer::Camera);
        let o = orientation_series(&s, &cam, "p", FrameInterval::new(0, 2), GimbalPolicy::Fail).unwrap();
        assert_relative_eq!(o.values[0], Vec3::new(0.0, 0.0, -1.0), epsilon = 1e-12);
        assert_relative_eq!(o.values[2], Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);

        let own = ViewpointSpec::relative("p".into());
        let o = orientation_series(&s, &own, "p", FrameInterval::new(0, 2), GimbalPolicy::Fail).unwrap();
        for f in o.values {
            assert_relative_eq!(f, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        }
        assert_eq!(
            orientation_series(&s, &cam, "b", FrameInterval::new(0, 2), GimbalPolicy::Fail),
            Err(AttributeError::NotAnAgent("b".into()))
        );
    }

    #[test]
    fn speed_cases() {
        let still = series(&[(1.0, 1.0, 1.0); 4]);
        assert_eq!(speed_series(&still).unwrap().values, vec![0.0; 3]);
        let moving = series(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (2.0, 0.0, 0.0)]);
        let sp = speed_series(&moving).unwrap();
        assert_eq!(sp.values, vec![1.0, 1.0]);
        assert_eq!(sp.timestamps, vec![1.0, 2.0]);
        assert!(matches!(speed_series(&series(&[(0.0, 0.0, 0.0)])), Err(AttributeError::TooShort { .. })));
    }

    #[test]
    fn co_moving_relative_speed_is_zero() {
        let centers: Vec<Vec3> = (0..4).map(|k| Vec3::new(2.0 * k as f64, 0.0, 5.0)).collect();
        let cams = (0..4).map(|k| Pose::from_translation(Vec3::new(2.0 * k as f64, 0.0, 0.0))).collect();
        let s = scene(cams, vec![track("b", false, &centers, None)]);
        let v = ViewpointSpec::relative(Observer::Camera);
        let p = positions_in_view(&s, &v, "b", FrameInterval::new(0, 3), GimbalPolicy::Fail).unwrap();
        assert!(speed_series(&p).unwrap().values.iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn final_second_cases() {
        assert_eq!(final_second_displacement(&series(&[(1.0, 2.0, 3.0); 3])).unwrap(), Vec3::zeros());
        let m = series(&[(5.0, 5.0, 5.0), (0.0, 0.0, 0.0), (0.0, 0.0, 2.0)]);
        assert_eq!(final_second_displacement(&m).unwrap(), Vec3::new(0.0, 0.0, 2.0));
        // 0.5 s spacing: the tail holds three samples, first at t_last - 1
        let dense = Series::new(
            vec![0.0, 0.5, 1.0, 1.5, 2.0],
            (0..5).map(|k| Vec3::new(k as f64, 0.0, 0.0)).collect(),
        );
        assert_eq!(final_second_displacement(&dense).unwrap(), Vec3::new(2.0, 0.0, 0.0));
        let sparse = Series::new(vec![0.0, 2.0], vec![Vec3::zeros(), Vec3::x()]);
        assert_eq!(final_second_displacement(&sparse), Err(AttributeError::InsufficientTail));
    }
}
