//! Object denotation, template question text and free-form prompt assembly.

use std::path::Path;

use crate::geometry::GimbalPolicy;
use crate::attributes::positions_in_view;
use crate::qa::{QaError, QuestionSpec, QuestionType};
use crate::sampling::prune_invisible;
use crate::scene::{BBox, SceneAnnotation};
use crate::viewpoint::{Mobility, Observer};

/// Seconds rendered without trailing zeros, at most two decimals.
pub fn fmt_seconds(t: f64) -> String {
    let s = format!("{:.2}", t);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Which frame a bounding box in a denotation comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DenotationRole {
    /// First frame of the queried sub-interval.
    Initial,
    /// Last frame shown before the hidden tail (direction prediction).
    Final,
    /// The anchor frame of an absolute viewpoint.
    AtAnchor(f64),
}

pub fn denote_object(category: &str, role: DenotationRole, bbox: &BBox) -> String {
    match role {
        DenotationRole::Initial => format!("{category} with initial bounding box coordinates {bbox}"),
        DenotationRole::Final => format!("{category} with final bounding box coordinates {bbox}"),
        DenotationRole::AtAnchor(t) => {
            format!("{category} with bounding box coordinates {bbox} at {}s", fmt_seconds(t))
        }
    }
}

fn denote_at(scene: &SceneAnnotation, id: &str, role: DenotationRole, frame: usize) -> String {
    let track = scene.object(id).expect("spec targets exist in the scene");
    let sample = track.sample_at(frame).expect("targets are visible over the interval");
    denote_object(&track.category, role, &sample.bbox)
}

/// Observer phrase; for absolute viewpoints it includes the anchor time.
fn observer_phrase(scene: &SceneAnnotation, spec: &QuestionSpec) -> String {
    let view = &spec.viewpoint;
    match (&view.observer, view.mobility, view.anchor_time) {
        (Observer::Camera, Mobility::Absolute, Some(t)) => format!("the camera at {}s", fmt_seconds(t)),
        (Observer::Camera, _, _) => "the camera".to_string(),
        (Observer::Object(id), Mobility::Absolute, Some(t)) => {
            let frame = scene.frame_index(t).expect("anchor is a sampled frame");
            denote_at(scene, id, DenotationRole::AtAnchor(t), frame)
        }
        (Observer::Object(id), _, _) => denote_at(scene, id, DenotationRole::Initial, spec.interval.start),
    }
}

/// Fills the template for the spec's (mobility, type) pair.
pub fn build_template_question(scene: &SceneAnnotation, spec: &QuestionSpec) -> String {
    let start = spec.interval.start;
    let t_s = fmt_seconds(scene.timestamp(start));
    let t_e = fmt_seconds(scene.timestamp(spec.interval.end));
    let obj_v = observer_phrase(scene, spec);
    let obj1 = match spec.qtype {
        QuestionType::DirectionPrediction => {
            let f = spec.last_visible_frame(scene).unwrap_or(start);
            denote_at(scene, &spec.targets[0], DenotationRole::Final, f)
        }
        _ => denote_at(scene, &spec.targets[0], DenotationRole::Initial, start),
    };
    let obj2 = spec
        .targets
        .get(1)
        .map(|id| denote_at(scene, id, DenotationRole::Initial, start))
        .unwrap_or_default();

    let perspective = match spec.viewpoint.mobility {
        Mobility::Relative => format!("following the perspective of {obj_v}"),
        Mobility::Absolute => format!("from the perspective of {obj_v}"),
    };
    let body = match spec.qtype {
        QuestionType::Distance => format!("how does the distance between {obj1} and {obj2} change?"),
        QuestionType::Direction => format!("how does the direction of {obj1} to {obj2} change?"),
        QuestionType::Orientation => format!("how does the orientation of {obj1} change?"),
        QuestionType::Speed => format!("how does the speed of {obj1} change?"),
        QuestionType::SpeedComparison => format!("compare the speed between {obj1} and {obj2}."),
        QuestionType::DirectionPrediction => {
            let mut p = perspective;
            p[..1].make_ascii_uppercase();
            return format!("{p}, predict the moving direction of {obj1}.");
        }
    };
    format!("Between {t_s}s and {t_e}s, {perspective}, {body}")
}

pub const PROMPT_PLACEHOLDERS: [&str; 5] = ["{viewpoint}", "{coord}", "{time_1}", "{time_2}", "{timestamps}"];

/// Free-form QA prompt text with literal placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        PromptTemplate { text: text.into() }
    }

    pub fn from_file(path: &Path) -> Result<Self, QaError> {
        std::fs::read_to_string(path)
            .map(PromptTemplate::new)
            .map_err(|_| QaError::MissingPromptTemplate(path.display().to_string()))
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes every `{key}` in `values`; unknown braces are left alone.
    pub fn fill(&self, values: &[(&str, &str)]) -> String {
        let mut out = self.text.clone();
        for (key, value) in values {
            out = out.replace(key, value);
        }
        out
    }
}

/// Prompt asking an external model for a free-form question over the spec's
/// interval, with every continuously visible object's trajectory in the
/// observer frame.
pub fn build_nontemplate_prompt(
    scene: &SceneAnnotation,
    spec: &QuestionSpec,
    template: &PromptTemplate,
    gimbal: GimbalPolicy,
) -> Result<String, QaError> {
    let iv = spec.interval;
    let mut coord = Vec::new();
    for id in prune_invisible(scene, iv) {
        let p = positions_in_view(scene, &spec.viewpoint, &id, iv, gimbal)?;
        let triples: Vec<String> = p
            .values
            .iter()
            .map(|v| format!("({:.3}, {:.3}, {:.3})", v.x, v.y, v.z))
            .collect();
        let name = denote_at(scene, &id, DenotationRole::Initial, iv.start);
        coord.push(format!("{name}: [{}]", triples.join(", ")));
    }
    let timestamps: Vec<String> = iv.frames().map(|f| fmt_seconds(scene.timestamp(f))).collect();
    let viewpoint = observer_phrase(scene, spec);
    let t1 = fmt_seconds(scene.timestamp(iv.start));
    let t2 = fmt_seconds(scene.timestamp(iv.end));
    let coord = coord.join("\n");
    let timestamps = timestamps.join(", ");
    Ok(template.fill(&[
        ("{viewpoint}", &viewpoint),
        ("{coord}", &coord),
        ("{time_1}", &t1),
        ("{time_2}", &t2),
        ("{timestamps}", &timestamps),
    ]))
}
