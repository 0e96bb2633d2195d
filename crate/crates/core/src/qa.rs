//! Question specs, QA items and the end-to-end item generator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::answers::{
    assign_labels, classify_direction, compare_speeds, floor_speeds, make_distractors, merge_states,
    render_answer, segment_trend, AnswerError, AnswerFamily, AnswerSequence, Letter, RuleConstants,
};
use crate::attributes::{
    direction_series, distance_series, final_second_displacement, orientation_series, positions_in_view,
    speed_series, AttributeError, FINAL_SECOND,
};
use crate::geometry::GimbalPolicy;
use crate::sampling::{select_subinterval, FrameInterval, DEFAULT_MIN_FRAMES};
use crate::scene::{SceneAnnotation, SceneError};
use crate::templates::build_template_question;
use crate::viewpoint::{Mobility, Observer, ViewError, ViewpointSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Distance,
    Direction,
    Orientation,
    Speed,
    SpeedComparison,
    DirectionPrediction,
}

impl QuestionType {
    pub const ALL: [QuestionType; 6] = [
        QuestionType::Distance,
        QuestionType::Direction,
        QuestionType::Orientation,
        QuestionType::Speed,
        QuestionType::SpeedComparison,
        QuestionType::DirectionPrediction,
    ];

    /// Number of target objects the question names.
    pub fn arity(self) -> usize {
        match self {
            QuestionType::Distance | QuestionType::Direction | QuestionType::SpeedComparison => 2,
            _ => 1,
        }
    }

    pub fn family(self) -> AnswerFamily {
        match self {
            QuestionType::Distance | QuestionType::Speed => AnswerFamily::Trend,
            QuestionType::SpeedComparison => AnswerFamily::SpeedComp,
            _ => AnswerFamily::Direction,
        }
    }

    fn abbrev(self) -> &'static str {
        match self {
            QuestionType::Distance => "dis",
            QuestionType::Direction => "dir",
            QuestionType::Orientation => "ori",
            QuestionType::Speed => "spd",
            QuestionType::SpeedComparison => "spd_comp",
            QuestionType::DirectionPrediction => "dir_pred",
        }
    }
}

/// One of the twelve mobility × type template categories, or free-form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subtask {
    Template(Mobility, QuestionType),
    NonTemplate,
}

impl Subtask {
    /// All thirteen tags in report order.
    pub fn all() -> Vec<Subtask> {
        let mut v: Vec<Subtask> = [Mobility::Absolute, Mobility::Relative]
            .into_iter()
            .flat_map(|m| QuestionType::ALL.into_iter().map(move |q| Subtask::Template(m, q)))
            .collect();
        v.push(Subtask::NonTemplate);
        v
    }

    pub fn tag(&self) -> String {
        match self {
            Subtask::Template(m, q) => {
                let prefix = match m {
                    Mobility::Absolute => "abs",
                    Mobility::Relative => "rel",
                };
                format!("{prefix}_{}", q.abbrev())
            }
            Subtask::NonTemplate => "non_template".to_string(),
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for Subtask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Subtask::all()
            .into_iter()
            .find(|t| t.tag() == s)
            .ok_or_else(|| format!("unknown subtask tag {s:?}"))
    }
}

impl Serialize for Subtask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.tag())
    }
}

impl<'de> Deserialize<'de> for Subtask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Four option texts keyed A–D.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Options {
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "B")]
    pub b: String,
    #[serde(rename = "C")]
    pub c: String,
    #[serde(rename = "D")]
    pub d: String,
}

impl Options {
    pub fn from_array([a, b, c, d]: [String; 4]) -> Self {
        Options { a, b, c, d }
    }

    pub fn get(&self, l: Letter) -> &str {
        match l {
            Letter::A => &self.a,
            Letter::B => &self.b,
            Letter::C => &self.c,
            Letter::D => &self.d,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Letter, &str)> {
        Letter::ALL.into_iter().map(move |l| (l, self.get(l)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub item_id: String,
    pub video_id: String,
    pub subtask: Subtask,
    pub question: String,
    pub options: Options,
    pub answer: Letter,
    pub t_start: f64,
    pub t_end: f64,
    pub visible_until: f64,
    pub viewpoint: ViewpointSpec,
    pub targets: Vec<String>,
    pub seed: u64,
    /// `"llm"` for free-form items; absent for template items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl QAItem {
    pub fn correct_text(&self) -> &str {
        self.options.get(self.answer)
    }
}

/// Everything needed to pose and answer one template question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionSpec {
    pub qtype: QuestionType,
    pub targets: Vec<String>,
    pub viewpoint: ViewpointSpec,
    pub interval: FrameInterval,
}

impl QuestionSpec {
    pub fn subtask(&self) -> Subtask {
        Subtask::Template(self.viewpoint.mobility, self.qtype)
    }

    /// Last timestamp shown to the answerer.
    pub fn visible_until(&self, scene: &SceneAnnotation) -> f64 {
        let t_end = scene.timestamp(self.interval.end);
        match self.qtype {
            QuestionType::DirectionPrediction => t_end - FINAL_SECOND,
            _ => t_end,
        }
    }

    /// Last sampled frame of the interval at or before `visible_until`.
    pub fn last_visible_frame(&self, scene: &SceneAnnotation) -> Option<usize> {
        let limit = self.visible_until(scene) + crate::scene::TIME_MATCH_TOLERANCE;
        self.interval.frames().rev().find(|&f| scene.timestamp(f) <= limit)
    }

    /// Recovers the spec an item was generated from.
    pub fn from_item(item: &QAItem, scene: &SceneAnnotation) -> Option<QuestionSpec> {
        let Subtask::Template(_, qtype) = item.subtask else {
            return None;
        };
        Some(QuestionSpec {
            qtype,
            targets: item.targets.clone(),
            viewpoint: item.viewpoint.clone(),
            interval: FrameInterval::new(scene.frame_index(item.t_start)?, scene.frame_index(item.t_end)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TypeWeights {
    pub distance: f64,
    pub direction: f64,
    pub orientation: f64,
    pub speed: f64,
    pub speed_comparison: f64,
    pub direction_prediction: f64,
}

impl Default for TypeWeights {
    fn default() -> Self {
        TypeWeights {
            distance: 1.0,
            direction: 1.0,
            orientation: 1.0,
            speed: 1.0,
            speed_comparison: 1.0,
            direction_prediction: 1.0,
        }
    }
}

impl TypeWeights {
    pub fn only(q: QuestionType) -> Self {
        let mut w = TypeWeights {
            distance: 0.0,
            direction: 0.0,
            orientation: 0.0,
            speed: 0.0,
            speed_comparison: 0.0,
            direction_prediction: 0.0,
        };
        *w.weight_mut(q) = 1.0;
        w
    }

    pub fn weight(&self, q: QuestionType) -> f64 {
        match q {
            QuestionType::Distance => self.distance,
            QuestionType::Direction => self.direction,
            QuestionType::Orientation => self.orientation,
            QuestionType::Speed => self.speed,
            QuestionType::SpeedComparison => self.speed_comparison,
            QuestionType::DirectionPrediction => self.direction_prediction,
        }
    }

    pub fn weight_mut(&mut self, q: QuestionType) -> &mut f64 {
        match q {
            QuestionType::Distance => &mut self.distance,
            QuestionType::Direction => &mut self.direction,
            QuestionType::Orientation => &mut self.orientation,
            QuestionType::Speed => &mut self.speed,
            QuestionType::SpeedComparison => &mut self.speed_comparison,
            QuestionType::DirectionPrediction => &mut self.direction_prediction,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ws: Vec<f64> = QuestionType::ALL.iter().map(|&q| self.weight(q)).collect();
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("type weights must be finite and non-negative".into());
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err("at least one type weight must be positive".into());
        }
        Ok(())
    }

    /// Expected share of each template subtask under a fair mobility coin.
    pub fn subtask_proportions(&self) -> BTreeMap<Subtask, f64> {
        let total: f64 = QuestionType::ALL.iter().map(|&q| self.weight(q)).sum();
        let mut out = BTreeMap::new();
        for q in QuestionType::ALL {
            for m in [Mobility::Absolute, Mobility::Relative] {
                out.insert(Subtask::Template(m, q), 0.5 * self.weight(q) / total);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaConfig {
    pub type_weights: TypeWeights,
    pub min_frames: usize,
    /// Attempts per item before it is skipped.
    pub retry_limit: usize,
    pub rules: RuleConstants,
    #[serde(with = "gimbal_serde")]
    pub gimbal: GimbalPolicy,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig {
            type_weights: TypeWeights::default(),
            min_frames: DEFAULT_MIN_FRAMES,
            retry_limit: 16,
            rules: RuleConstants::default(),
            gimbal: GimbalPolicy::default(),
        }
    }
}

mod gimbal_serde {
    use super::GimbalPolicy;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(g: &GimbalPolicy, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match g {
            GimbalPolicy::Fail => "fail",
            GimbalPolicy::CameraForwardFallback => "camera_forward",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<GimbalPolicy, D::Error> {
        match String::deserialize(d)?.as_str() {
            "fail" => Ok(GimbalPolicy::Fail),
            "camera_forward" => Ok(GimbalPolicy::CameraForwardFallback),
            other => Err(serde::de::Error::custom(format!("unknown gimbal policy {other:?}"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum QaError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error(transparent)]
    Answer(#[from] AnswerError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error("no eligible targets: {0}")]
    NoEligibleTargets(String),
    #[error("target does not move in the final second")]
    DegenerateMotion,
    #[error("no frame of the interval is visible before the hidden tail")]
    NoVisibleFrames,
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: Box<QaError> },
    #[error("prompt template not found: {0}")]
    MissingPromptTemplate(String),
}

/// Per-item seed: first eight bytes of SHA-256 over the master seed, video id
/// and item index.
pub fn item_seed(master_seed: u64, video_id: &str, item_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((video_id.len() as u64).to_le_bytes());
    h.update(video_id.as_bytes());
    h.update((item_index as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn item_id(video_id: &str, item_index: usize) -> String {
    format!("{video_id}-q{item_index:06}")
}

fn eligible_types(scene: &SceneAnnotation, weights: &TypeWeights) -> Vec<(QuestionType, f64)> {
    let n_objects = scene.objects.len();
    let n_agents = scene.agents().count();
    QuestionType::ALL
        .into_iter()
        .filter(|&q| weights.weight(q) > 0.0)
        .filter(|&q| match q {
            QuestionType::Orientation => n_agents >= 1,
            q => n_objects >= q.arity(),
        })
        .map(|q| (q, weights.weight(q)))
        .collect()
}

/// Draws the question type by weight among the types this scene supports,
/// and the mobility by a fair coin.
pub fn sample_type_and_mobility<R: Rng + ?Sized>(
    scene: &SceneAnnotation,
    weights: &TypeWeights,
    rng: &mut R,
) -> Result<(QuestionType, Mobility), QaError> {
    let eligible = eligible_types(scene, weights);
    if eligible.is_empty() {
        return Err(QaError::NoEligibleTargets(format!(
            "{} objects, {} agents",
            scene.objects.len(),
            scene.agents().count()
        )));
    }
    let dist = WeightedIndex::new(eligible.iter().map(|(_, w)| *w)).expect("weights are positive");
    let qtype = eligible[dist.sample(rng)].0;
    let mobility = if rng.random_bool(0.5) {
        Mobility::Relative
    } else {
        Mobility::Absolute
    };
    Ok((qtype, mobility))
}

/// Draws targets, observer, interval and anchor for a fixed type/mobility.
pub fn sample_targets_and_view<R: Rng + ?Sized>(
    scene: &SceneAnnotation,
    qtype: QuestionType,
    mobility: Mobility,
    config: &QaConfig,
    rng: &mut R,
) -> Result<QuestionSpec, QaError> {
    let pool: Vec<&str> = match qtype {
        QuestionType::Orientation => scene.agents().map(|o| o.object_id.as_str()).collect(),
        _ => scene.objects.iter().map(|o| o.object_id.as_str()).collect(),
    };
    if pool.len() < qtype.arity() {
        return Err(QaError::NoEligibleTargets(format!("{qtype:?} needs {} targets", qtype.arity())));
    }
    let targets: Vec<String> = pool
        .choose_multiple(rng, qtype.arity())
        .map(|s| s.to_string())
        .collect();

    let mut observers: Vec<Observer> = vec![Observer::Camera];
    observers.extend(scene.agents().map(|a| Observer::Object(a.object_id.clone())));
    if qtype == QuestionType::Orientation && mobility == Mobility::Relative {
        // an agent watching its own facing under its own motion is always Front
        observers.retain(|o| o.object_id() != Some(targets[0].as_str()));
    }
    let observer = observers.choose(rng).expect("camera is always available").clone();

    let mut required: Vec<&str> = targets.iter().map(String::as_str).collect();
    if let Some(id) = observer.object_id() {
        if !required.contains(&id) {
            required.push(id);
        }
    }
    let interval = select_subinterval(scene, &required, config.min_frames, rng)?;

    let mut spec = QuestionSpec {
        qtype,
        targets,
        viewpoint: ViewpointSpec::relative(observer.clone()),
        interval,
    };
    let last_visible = spec.last_visible_frame(scene).ok_or(QaError::NoVisibleFrames)?;
    if mobility == Mobility::Absolute {
        let anchor = rng.random_range(interval.start..=last_visible);
        spec.viewpoint = ViewpointSpec::absolute(observer, scene.timestamp(anchor));
    }
    Ok(spec)
}

/// Full question-spec draw: type and mobility, then targets and view.
pub fn sample_question_spec<R: Rng + ?Sized>(
    scene: &SceneAnnotation,
    config: &QaConfig,
    rng: &mut R,
) -> Result<QuestionSpec, QaError> {
    let (qtype, mobility) = sample_type_and_mobility(scene, &config.type_weights, rng)?;
    sample_targets_and_view(scene, qtype, mobility, config, rng)
}

/// The correct procedural answer for a spec.
pub fn derive_answer(
    scene: &SceneAnnotation,
    spec: &QuestionSpec,
    config: &QaConfig,
) -> Result<AnswerSequence, QaError> {
    let rules = &config.rules;
    let view = &spec.viewpoint;
    let iv = spec.interval;
    let g = config.gimbal;
    let positions = |id: &str| positions_in_view(scene, view, id, iv, g);
    let seq = match spec.qtype {
        QuestionType::Distance => {
            let d = distance_series(&positions(&spec.targets[0])?, &positions(&spec.targets[1])?)?;
            merge_states(&segment_trend(&d.values, rules)?)?
        }
        QuestionType::Direction => {
            let dirs = direction_series(&positions(&spec.targets[0])?, &positions(&spec.targets[1])?, rules.eps_dir)?;
            let labels = dirs
                .values
                .iter()
                .map(|v| classify_direction(v, rules))
                .collect::<Result<Vec<_>, _>>()?;
            merge_states(&labels)?
        }
        QuestionType::Orientation => {
            let fwd = orientation_series(scene, view, &spec.targets[0], iv, g)?;
            let labels = fwd
                .values
                .iter()
                .map(|v| classify_direction(v, rules))
                .collect::<Result<Vec<_>, _>>()?;
            merge_states(&labels)?
        }
        QuestionType::Speed => {
            let s = speed_series(&positions(&spec.targets[0])?)?;
            merge_states(&segment_trend(&floor_speeds(&s.values, rules), rules)?)?
        }
        QuestionType::SpeedComparison => {
            let a = speed_series(&positions(&spec.targets[0])?)?;
            let b = speed_series(&positions(&spec.targets[1])?)?;
            let choices = compare_speeds(&floor_speeds(&a.values, rules), &floor_speeds(&b.values, rules), rules)?;
            merge_states(&choices)?
        }
        QuestionType::DirectionPrediction => {
            // A relative observer is frozen at the last frame the answerer sees.
            let frozen = match view.mobility {
                Mobility::Absolute => view.clone(),
                Mobility::Relative => {
                    let f = spec.last_visible_frame(scene).ok_or(QaError::NoVisibleFrames)?;
                    ViewpointSpec::absolute(view.observer.clone(), scene.timestamp(f))
                }
            };
            let p = positions_in_view(scene, &frozen, &spec.targets[0], iv, g)?;
            let d = final_second_displacement(&p)?;
            let n = d.norm();
            if n <= rules.eps_dir {
                return Err(QaError::DegenerateMotion);
            }
            merge_states(&[classify_direction(&(d / n), rules)?])?
        }
    };
    Ok(seq)
}

/// A generated item together with the sequences behind its options.
#[derive(Debug, Clone)]
pub struct GeneratedItem {
    pub item: QAItem,
    pub spec: QuestionSpec,
    pub correct: AnswerSequence,
    pub distractors: [AnswerSequence; 3],
}

fn attempt<R: Rng + ?Sized>(
    scene: &SceneAnnotation,
    qtype: QuestionType,
    mobility: Mobility,
    config: &QaConfig,
    item_index: usize,
    seed: u64,
    rng: &mut R,
) -> Result<GeneratedItem, QaError> {
    let spec = sample_targets_and_view(scene, qtype, mobility, config, rng)?;
    let correct = derive_answer(scene, &spec, config)?;
    let distractors = make_distractors(&correct, rng)?;
    let texts = distractors.clone().map(|d| render_answer(&d));
    let (options, answer) = assign_labels(render_answer(&correct), texts, rng)?;
    let item = QAItem {
        item_id: item_id(&scene.video_id, item_index),
        video_id: scene.video_id.clone(),
        subtask: spec.subtask(),
        question: build_template_question(scene, &spec),
        options: Options::from_array(options),
        answer,
        t_start: scene.timestamp(spec.interval.start),
        t_end: scene.timestamp(spec.interval.end),
        visible_until: spec.visible_until(scene),
        viewpoint: spec.viewpoint.clone(),
        targets: spec.targets.clone(),
        seed,
        provenance: None,
    };
    Ok(GeneratedItem {
        item,
        spec,
        correct,
        distractors,
    })
}

/// Generates one template item from its per-item seed.
///
/// Type and mobility are drawn once; targets, observer and interval are
/// redrawn up to `retry_limit` times when a draw cannot be answered.
pub fn generate_item(
    scene: &SceneAnnotation,
    item_index: usize,
    seed: u64,
    config: &QaConfig,
) -> Result<GeneratedItem, QaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (qtype, mobility) = sample_type_and_mobility(scene, &config.type_weights, &mut rng)?;
    let mut last = None;
    let attempts = config.retry_limit.max(1);
    for _ in 0..attempts {
        match attempt(scene, qtype, mobility, config, item_index, seed, &mut rng) {
            Ok(g) => return Ok(g),
            Err(e) => last = Some(e),
        }
    }
    Err(QaError::RetriesExhausted {
        attempts,
        last: Box::new(last.expect("at least one attempt")),
    })
}

pub fn generate_qa(
    scene: &SceneAnnotation,
    item_index: usize,
    seed: u64,
    config: &QaConfig,
) -> Result<QAItem, QaError> {
    generate_item(scene, item_index, seed, config).map(|g| g.item)
}
