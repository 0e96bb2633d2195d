//! Basic answer choices, trend segmentation, rendering, distractors and
//! option labelling.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Thresholds used to turn attribute series into basic choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConstants {
    /// Closed "nearly constant" band for distance/speed trends, as a
    /// multiple of the segment's first value.
    pub trend_low: f64,
    pub trend_high: f64,
    /// Closed "nearly the same" band for former/latter speed ratios.
    pub speed_comp_low: f64,
    pub speed_comp_high: f64,
    /// An axis label is positive below this angle to the axis.
    pub positive_cone_deg: f64,
    /// An axis label is negative above this angle to the axis.
    pub negative_cone_deg: f64,
    /// Speeds are floored at this value before any ratio test.
    pub eps_speed: f64,
    /// Minimum separation for a direction between two objects.
    pub eps_dir: f64,
}

impl Default for RuleConstants {
    fn default() -> Self {
        RuleConstants {
            trend_low: 0.8,
            trend_high: 1.2,
            speed_comp_low: 0.83,
            speed_comp_high: 1.20,
            positive_cone_deg: 70.0,
            negative_cone_deg: 110.0,
            eps_speed: 1e-9,
            eps_dir: crate::attributes::DEFAULT_EPS_DIR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("vector is not unit length")]
    NotUnit,
    #[error("series needs at least 2 values, got {0}")]
    TooShort(usize),
    #[error("non-positive value at index {0}")]
    NonPositiveValue(usize),
    #[error("series are not aligned")]
    MisalignedSeries,
    #[error("empty state list")]
    Empty,
    #[error("states mix answer families")]
    MixedFamilies,
    #[error("sequence is not canonical: adjacent states repeat")]
    NotCanonical,
    #[error("could not draw distinct distractors")]
    ExhaustedRetries,
    #[error("duplicate option text {0:?}")]
    DuplicateOption(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrendChoice {
    Constant,
    ConstantThenLarger,
    ConstantThenSmaller,
    Larger,
    Smaller,
}

impl TrendChoice {
    pub const ALL: [TrendChoice; 5] = [
        TrendChoice::ConstantThenLarger,
        TrendChoice::ConstantThenSmaller,
        TrendChoice::Constant,
        TrendChoice::Larger,
        TrendChoice::Smaller,
    ];

    pub fn text(self) -> &'static str {
        match self {
            TrendChoice::ConstantThenLarger => "Keep nearly constant then become larger",
            TrendChoice::ConstantThenSmaller => "Keep nearly constant then become smaller",
            TrendChoice::Constant => "Keep nearly constant",
            TrendChoice::Larger => "Become larger",
            TrendChoice::Smaller => "Become smaller",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrontAxis {
    Front,
    Behind,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SideAxis {
    Left,
    Right,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertAxis {
    Above,
    Below,
    None,
}

/// Combination of per-axis cone labels; at least one axis is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectionLabel {
    pub front: FrontAxis,
    pub side: SideAxis,
    pub vert: VertAxis,
}

impl DirectionLabel {
    pub fn is_empty(&self) -> bool {
        self.front == FrontAxis::None && self.side == SideAxis::None && self.vert == VertAxis::None
    }

    /// All 26 non-empty label combinations.
    pub fn all() -> Vec<DirectionLabel> {
        let fronts = [FrontAxis::Front, FrontAxis::Behind, FrontAxis::None];
        let sides = [SideAxis::Left, SideAxis::Right, SideAxis::None];
        let verts = [VertAxis::Above, VertAxis::Below, VertAxis::None];
        let mut out = Vec::with_capacity(26);
        for front in fronts {
            for side in sides {
                for vert in verts {
                    let l = DirectionLabel { front, side, vert };
                    if !l.is_empty() {
                        out.push(l);
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for DirectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [
            match self.front {
                FrontAxis::Front => Some("Front"),
                FrontAxis::Behind => Some("Behind"),
                FrontAxis::None => None,
            },
            match self.side {
                SideAxis::Left => Some("Left"),
                SideAxis::Right => Some("Right"),
                SideAxis::None => None,
            },
            match self.vert {
                VertAxis::Above => Some("Above"),
                VertAxis::Below => Some("Below"),
                VertAxis::None => None,
            },
        ]
        .into_iter()
        .flatten()
        .collect();
        f.write_str(&parts.join("-"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpeedCompChoice {
    NearlySame,
    FormerFaster,
    LatterFaster,
}

impl SpeedCompChoice {
    pub const ALL: [SpeedCompChoice; 3] = [
        SpeedCompChoice::NearlySame,
        SpeedCompChoice::FormerFaster,
        SpeedCompChoice::LatterFaster,
    ];

    pub fn text(self) -> &'static str {
        match self {
            SpeedCompChoice::NearlySame => "Nearly the same",
            SpeedCompChoice::FormerFaster => "The former is faster",
            SpeedCompChoice::LatterFaster => "The latter is faster",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFamily {
    Trend,
    Direction,
    SpeedComp,
}

impl AnswerFamily {
    pub fn choices(self) -> Vec<BasicChoice> {
        match self {
            AnswerFamily::Trend => TrendChoice::ALL.into_iter().map(BasicChoice::Trend).collect(),
            AnswerFamily::Direction => DirectionLabel::all().into_iter().map(BasicChoice::Direction).collect(),
            AnswerFamily::SpeedComp => SpeedCompChoice::ALL.into_iter().map(BasicChoice::SpeedComp).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasicChoice {
    Trend(TrendChoice),
    Direction(DirectionLabel),
    SpeedComp(SpeedCompChoice),
}

impl BasicChoice {
    pub fn family(&self) -> AnswerFamily {
        match self {
            BasicChoice::Trend(_) => AnswerFamily::Trend,
            BasicChoice::Direction(_) => AnswerFamily::Direction,
            BasicChoice::SpeedComp(_) => AnswerFamily::SpeedComp,
        }
    }
}

impl fmt::Display for BasicChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasicChoice::Trend(t) => f.write_str(t.text()),
            BasicChoice::Direction(d) => d.fmt(f),
            BasicChoice::SpeedComp(s) => f.write_str(s.text()),
        }
    }
}

impl From<TrendChoice> for BasicChoice {
    fn from(t: TrendChoice) -> Self {
        BasicChoice::Trend(t)
    }
}

impl From<DirectionLabel> for BasicChoice {
    fn from(d: DirectionLabel) -> Self {
        BasicChoice::Direction(d)
    }
}

impl From<SpeedCompChoice> for BasicChoice {
    fn from(s: SpeedCompChoice) -> Self {
        BasicChoice::SpeedComp(s)
    }
}

/// Non-empty, single-family state list with no adjacent repeats.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnswerSequence {
    family: AnswerFamily,
    states: Vec<BasicChoice>,
}

impl AnswerSequence {
    pub fn new(states: Vec<BasicChoice>) -> Result<Self, AnswerError> {
        let family = states.first().ok_or(AnswerError::Empty)?.family();
        if states.iter().any(|s| s.family() != family) {
            return Err(AnswerError::MixedFamilies);
        }
        if states.windows(2).any(|w| w[0] == w[1]) {
            return Err(AnswerError::NotCanonical);
        }
        Ok(AnswerSequence { family, states })
    }

    pub fn family(&self) -> AnswerFamily {
        self.family
    }

    pub fn states(&self) -> &[BasicChoice] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Collapses runs of equal adjacent states.
pub fn merge_states<S: Into<BasicChoice> + Copy>(states: &[S]) -> Result<AnswerSequence, AnswerError> {
    let mut out: Vec<BasicChoice> = Vec::with_capacity(states.len());
    for s in states {
        let s = (*s).into();
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    AnswerSequence::new(out)
}

pub const SEQUENCE_SEPARATOR: &str = ", then ";

pub fn render_answer(seq: &AnswerSequence) -> String {
    seq.states
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(SEQUENCE_SEPARATOR)
}

/// Per-axis cone labels for a unit direction in observer coordinates.
///
/// Axes: forward `(0,0,1)`, left `(-1,0,0)`, up `(0,-1,0)`. An angle strictly
/// below the positive cone gives Front/Left/Above, strictly above the
/// negative cone gives Behind/Right/Below.
pub fn classify_direction(v: &Vec3, rules: &RuleConstants) -> Result<DirectionLabel, AnswerError> {
    if !((v.norm() - 1.0).abs() <= 1e-6) {
        return Err(AnswerError::NotUnit);
    }
    let pos = rules.positive_cone_deg.to_radians().cos();
    let neg = rules.negative_cone_deg.to_radians().cos();
    // cosines of the angle to forward, left and up
    let (cf, cl, cu) = (v.z, -v.x, -v.y);
    let axis = |c: f64| {
        if c > pos {
            1
        } else if c < neg {
            -1
        } else {
            0
        }
    };
    Ok(DirectionLabel {
        front: match axis(cf) {
            1 => FrontAxis::Front,
            -1 => FrontAxis::Behind,
            _ => FrontAxis::None,
        },
        side: match axis(cl) {
            1 => SideAxis::Left,
            -1 => SideAxis::Right,
            _ => SideAxis::None,
        },
        vert: match axis(cu) {
            1 => VertAxis::Above,
            -1 => VertAxis::Below,
            _ => VertAxis::None,
        },
    })
}

/// Greedy left-to-right trend segmentation.
///
/// From baseline `i`, the first ratio `v[i+1]/v[i]` picks the pattern: above
/// the band starts a maximal run of rising steps (Larger), below it a maximal
/// run of falling steps (Smaller); inside it, values stay within the band of
/// `v[i]` up to some `m` and the segment becomes Constant (if `m` is the last
/// index) or ends at `m+1` as ConstantThenLarger/ConstantThenSmaller. The next
/// baseline is the segment's last index.
pub fn segment_trend(values: &[f64], rules: &RuleConstants) -> Result<Vec<TrendChoice>, AnswerError> {
    Ok(segment_trend_spans(values, rules)?.into_iter().map(|s| s.choice).collect())
}

/// One trend segment covering values `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrendSpan {
    pub choice: TrendChoice,
    pub start: usize,
    pub end: usize,
}

/// [`segment_trend`] with the index span of each segment.
pub fn segment_trend_spans(values: &[f64], rules: &RuleConstants) -> Result<Vec<TrendSpan>, AnswerError> {
    if values.len() < 2 {
        return Err(AnswerError::TooShort(values.len()));
    }
    if let Some(i) = values.iter().position(|&v| !(v > 0.0)) {
        return Err(AnswerError::NonPositiveValue(i));
    }
    let (lo, hi) = (rules.trend_low, rules.trend_high);
    let last = values.len() - 1;
    let ratio = |a: usize, b: usize| values[b] / values[a];
    let mut out = Vec::new();
    let mut i = 0;
    while i < last {
        let r = ratio(i, i + 1);
        if r > hi {
            let mut j = i + 1;
            while j < last && ratio(j, j + 1) > hi {
                j += 1;
            }
            out.push(TrendSpan { choice: TrendChoice::Larger, start: i, end: j });
            i = j;
        } else if r < lo {
            let mut j = i + 1;
            while j < last && ratio(j, j + 1) < lo {
                j += 1;
            }
            out.push(TrendSpan { choice: TrendChoice::Smaller, start: i, end: j });
            i = j;
        } else {
            let mut m = i + 1;
            while m < last && (lo..=hi).contains(&ratio(i, m + 1)) {
                m += 1;
            }
            if m == last {
                out.push(TrendSpan { choice: TrendChoice::Constant, start: i, end: m });
                i = m;
            } else {
                let choice = if ratio(i, m + 1) > hi {
                    TrendChoice::ConstantThenLarger
                } else {
                    TrendChoice::ConstantThenSmaller
                };
                out.push(TrendSpan { choice, start: i, end: m + 1 });
                i = m + 1;
            }
        }
    }
    Ok(out)
}

/// Per-timestamp former/latter speed comparison.
pub fn compare_speeds(
    former: &[f64],
    latter: &[f64],
    rules: &RuleConstants,
) -> Result<Vec<SpeedCompChoice>, AnswerError> {
    if former.len() != latter.len() {
        return Err(AnswerError::MisalignedSeries);
    }
    if let Some(i) = latter.iter().position(|&v| !(v > 0.0)) {
        return Err(AnswerError::NonPositiveValue(i));
    }
    Ok(former
        .iter()
        .zip(latter)
        .map(|(f, l)| {
            let r = f / l;
            if r > rules.speed_comp_high {
                SpeedCompChoice::FormerFaster
            } else if r < rules.speed_comp_low {
                SpeedCompChoice::LatterFaster
            } else {
                SpeedCompChoice::NearlySame
            }
        })
        .collect())
}

/// Applies the speed floor so static objects compare as nearly constant.
pub fn floor_speeds(values: &[f64], rules: &RuleConstants) -> Vec<f64> {
    values.iter().map(|v| v.max(rules.eps_speed)).collect()
}

/// Candidate draws before the length range is widened.
pub const DISTRACTOR_DRAWS: usize = 1000;

/// Inclusive length range for distractors of an answer with `n` states.
pub fn distractor_length_range(n: usize) -> (usize, usize) {
    (n.saturating_sub(3).max(1), n + 3)
}

fn random_sequence<R: Rng + ?Sized>(
    choices: &[BasicChoice],
    len: usize,
    rng: &mut R,
) -> AnswerSequence {
    let mut states = Vec::with_capacity(len);
    let mut prev: Option<usize> = None;
    for _ in 0..len {
        let idx = match prev {
            None => rng.random_range(0..choices.len()),
            Some(p) => {
                let k = rng.random_range(0..choices.len() - 1);
                if k >= p {
                    k + 1
                } else {
                    k
                }
            }
        };
        states.push(choices[idx]);
        prev = Some(idx);
    }
    AnswerSequence::new(states).expect("drawn sequences are canonical")
}

/// Three pairwise-distinct wrong answers from the same family.
pub fn make_distractors<R: Rng + ?Sized>(
    correct: &AnswerSequence,
    rng: &mut R,
) -> Result<[AnswerSequence; 3], AnswerError> {
    let choices = correct.family.choices();
    let (lo, hi) = distractor_length_range(correct.len());
    for widen in [0, 2] {
        let mut picked: Vec<AnswerSequence> = Vec::with_capacity(3);
        for _ in 0..DISTRACTOR_DRAWS {
            let len = rng.random_range(lo..=hi + widen);
            let cand = random_sequence(&choices, len, rng);
            if cand != *correct && !picked.contains(&cand) {
                picked.push(cand);
                if picked.len() == 3 {
                    let [a, b, c] = <[AnswerSequence; 3]>::try_from(picked).expect("three picked");
                    return Ok([a, b, c]);
                }
            }
        }
    }
    Err(AnswerError::ExhaustedRetries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Letter> {
        Self::ALL.get(i).copied()
    }

    pub fn from_char(c: char) -> Option<Letter> {
        match c.to_ascii_uppercase() {
            'A' => Some(Letter::A),
            'B' => Some(Letter::B),
            'C' => Some(Letter::C),
            'D' => Some(Letter::D),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Shuffles the four texts into A–D and returns the correct letter.
pub fn assign_labels<R: Rng + ?Sized>(
    correct: String,
    distractors: [String; 3],
    rng: &mut R,
) -> Result<([String; 4], Letter), AnswerError> {
    let mut all = vec![correct];
    all.extend(distractors);
    for i in 0..all.len() {
        if all[i + 1..].contains(&all[i]) {
            return Err(AnswerError::DuplicateOption(all[i].clone()));
        }
    }
    let mut order = [0usize, 1, 2, 3];
    order.shuffle(rng);
    let key = Letter::from_index(order.iter().position(|&i| i == 0).expect("0 is in the permutation"))
        .expect("four slots");
    let options = order.map(|i| std::mem::take(&mut all[i]));
    Ok((options, key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rules() -> RuleConstants {
        RuleConstants::default()
    }

    fn label(s: &str) -> DirectionLabel {
        let mut l = DirectionLabel {
            front: FrontAxis::None,
            side: SideAxis::None,
            vert: VertAxis::None,
        };
        for part in s.split('-') {
            match part {
                "Front" => l.front = FrontAxis::Front,
                "Behind" => l.front = FrontAxis::Behind,
                "Left" => l.side = SideAxis::Left,
                "Right" => l.side = SideAxis::Right,
                "Above" => l.vert = VertAxis::Above,
                "Below" => l.vert = VertAxis::Below,
                other => panic!("bad label part {other}"),
            }
        }
        l
    }

    #[test]
    fn classify_examples() {
        let r = rules();
        assert_eq!(classify_direction(&Vec3::new(0.0, 0.0, 1.0), &r).unwrap(), label("Front"));
        assert_eq!(classify_direction(&Vec3::new(0.0, -1.0, 0.0), &r).unwrap(), label("Above"));
        let fr = Vec3::new(1.0, 0.0, 1.0).normalize();
        assert_eq!(classify_direction(&fr, &r).unwrap(), label("Front-Right"));
        assert_eq!(classify_direction(&Vec3::new(-1.0, 0.0, 0.0), &r).unwrap(), label("Left"));
        assert_eq!(classify_direction(&Vec3::new(0.0, 0.0, 2.0), &r), Err(AnswerError::NotUnit));
    }

    #[test]
    fn classify_cone_boundaries_are_exclusive() {
        let r = rules();
        let (s70, c70) = 70f64.to_radians().sin_cos();
        // exactly 70° to forward, 90° to the others
        let at70 = Vec3::new(0.0, s70, c70);
        assert_eq!(classify_direction(&at70, &r).unwrap().front, FrontAxis::None);
        let c110 = 110f64.to_radians().cos();
        let at110 = Vec3::new(0.0, (1.0 - c110 * c110).sqrt(), c110);
        assert_eq!(classify_direction(&at110, &r).unwrap().front, FrontAxis::None);
        let inside = Vec3::new(0.0, 69.9f64.to_radians().sin(), 69.9f64.to_radians().cos());
        assert_eq!(classify_direction(&inside, &r).unwrap().front, FrontAxis::Front);
    }

    #[test]
    fn trend_examples() {
        let r = rules();
        assert_eq!(segment_trend(&[10.0, 10.5, 9.8, 13.0], &r).unwrap(), vec![TrendChoice::ConstantThenLarger]);
        assert_eq!(segment_trend(&[5.0; 4], &r).unwrap(), vec![TrendChoice::Constant]);
        assert_eq!(
            segment_trend(&[10.0, 12.5, 12.4], &r).unwrap(),
            vec![TrendChoice::Larger, TrendChoice::Constant]
        );
        assert_eq!(segment_trend(&[8.0, 4.0, 2.0, 1.0], &r).unwrap(), vec![TrendChoice::Smaller]);
        assert_eq!(
            segment_trend(&[10.0, 9.0, 7.0, 7.0], &r).unwrap(),
            vec![TrendChoice::ConstantThenSmaller, TrendChoice::Constant]
        );
    }

    #[test]
    fn trend_band_is_closed() {
        let r = rules();
        assert_eq!(segment_trend(&[5.0, 6.0], &r).unwrap(), vec![TrendChoice::Constant]);
        assert_eq!(segment_trend(&[5.0, 4.0], &r).unwrap(), vec![TrendChoice::Constant]);
        assert_eq!(segment_trend(&[5.0, 6.0000001], &r).unwrap(), vec![TrendChoice::Larger]);
    }

    #[test]
    fn trend_errors() {
        let r = rules();
        assert_eq!(segment_trend(&[1.0], &r), Err(AnswerError::TooShort(1)));
        assert_eq!(segment_trend(&[1.0, 0.0], &r), Err(AnswerError::NonPositiveValue(1)));
        assert_eq!(segment_trend(&[1.0, f64::NAN], &r), Err(AnswerError::NonPositiveValue(1)));
    }

    #[test]
    fn static_speeds_are_constant_after_floor() {
        let r = rules();
        let floored = floor_speeds(&[0.0, 0.0, 0.0], &r);
        assert_eq!(segment_trend(&floored, &r).unwrap(), vec![TrendChoice::Constant]);
    }

    #[test]
    fn speed_comparison_examples() {
        let r = rules();
        assert_eq!(compare_speeds(&[6.0], &[5.0], &r).unwrap(), vec![SpeedCompChoice::NearlySame]);
        assert_eq!(compare_speeds(&[5.0], &[4.0], &r).unwrap(), vec![SpeedCompChoice::FormerFaster]);
        assert_eq!(compare_speeds(&[3.0], &[4.0], &r).unwrap(), vec![SpeedCompChoice::LatterFaster]);
        assert_eq!(compare_speeds(&[2.0; 3], &[2.0; 3], &r).unwrap(), vec![SpeedCompChoice::NearlySame; 3]);
        assert_eq!(compare_speeds(&[1.0], &[1.0, 2.0], &r), Err(AnswerError::MisalignedSeries));
        assert_eq!(compare_speeds(&[1.0], &[0.0], &r), Err(AnswerError::NonPositiveValue(0)));
    }

    #[test]
    fn merge_examples() {
        let f = label("Front");
        let l = label("Left");
        let seq = merge_states(&[f, f, l, l, f]).unwrap();
        assert_eq!(seq.states(), &[f.into(), l.into(), f.into()]);
        assert_eq!(merge_states(&[TrendChoice::Larger]).unwrap().len(), 1);
        assert_eq!(merge_states::<TrendChoice>(&[]), Err(AnswerError::Empty));
        let mixed = vec![BasicChoice::Trend(TrendChoice::Larger), BasicChoice::Direction(f)];
        assert_eq!(merge_states(&mixed), Err(AnswerError::MixedFamilies));
    }

    #[test]
    fn render_examples() {
        let seq = merge_states(&[TrendChoice::ConstantThenLarger]).unwrap();
        assert_eq!(render_answer(&seq), "Keep nearly constant then become larger");
        let seq = merge_states(&[label("Front"), label("Front-Right")]).unwrap();
        assert_eq!(render_answer(&seq), "Front, then Front-Right");
        let seq = merge_states(&[SpeedCompChoice::NearlySame]).unwrap();
        assert_eq!(render_answer(&seq), "Nearly the same");
        let seq = merge_states(&[label("Behind-Left-Below")]).unwrap();
        assert_eq!(render_answer(&seq), "Behind-Left-Below");
    }

    #[test]
    fn direction_family_has_26_labels() {
        let all = DirectionLabel::all();
        assert_eq!(all.len(), 26);
        let texts: std::collections::HashSet<String> = all.iter().map(|l| l.to_string()).collect();
        assert_eq!(texts.len(), 26);
    }

    #[test]
    fn distractor_lengths_and_distinctness() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let one = merge_states(&[SpeedCompChoice::FormerFaster]).unwrap();
        for _ in 0..200 {
            let d = make_distractors(&one, &mut rng).unwrap();
            for s in &d {
                assert!((1..=4).contains(&s.len()));
                assert_ne!(s, &one);
                assert_eq!(s.family(), AnswerFamily::SpeedComp);
            }
            assert!(d[0] != d[1] && d[1] != d[2] && d[0] != d[2]);
        }
        let five = merge_states(&[
            TrendChoice::Larger,
            TrendChoice::Constant,
            TrendChoice::Smaller,
            TrendChoice::Larger,
            TrendChoice::Smaller,
        ])
        .unwrap();
        assert_eq!(distractor_length_range(5), (2, 8));
        for _ in 0..200 {
            for s in make_distractors(&five, &mut rng).unwrap() {
                assert!((2..=8).contains(&s.len()));
            }
        }
    }

    #[test]
    fn distractors_are_seed_deterministic() {
        let c = merge_states(&[label("Front"), label("Left")]).unwrap();
        let a = make_distractors(&c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = make_distractors(&c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    fn texts() -> (String, [String; 3]) {
        ("right".into(), ["w1".into(), "w2".into(), "w3".into()])
    }

    #[test]
    fn labels_reproducible_and_correct() {
        let (c, d) = texts();
        let a = assign_labels(c.clone(), d.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = assign_labels(c.clone(), d.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0[a.1.index()], c);
        assert_eq!(a.0.iter().filter(|t| **t == c).count(), 1);
    }

    #[test]
    fn labels_uniform_over_seeds() {
        let mut counts = [0usize; 4];
        for seed in 0..10_000u64 {
            let (c, d) = texts();
            let (_, key) = assign_labels(c, d, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            counts[key.index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn duplicate_options_rejected() {
        let err = assign_labels("x".into(), ["y".into(), "x".into(), "z".into()], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(err, Err(AnswerError::DuplicateOption("x".into())));
    }

    #[test]
    fn letters() {
        assert_eq!(Letter::from_char('c'), Some(Letter::C));
        assert_eq!(Letter::from_char('e'), None);
        assert_eq!(Letter::D.to_string(), "D");
        assert_eq!(serde_json::to_string(&Letter::B).unwrap(), "\"B\"");
    }

    fn any_trend() -> impl Strategy<Value = TrendChoice> {
        prop::sample::select(TrendChoice::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn merge_is_idempotent(xs in prop::collection::vec(any_trend(), 1..30)) {
            let once = merge_states(&xs).unwrap();
            let twice = merge_states(once.states()).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.states().windows(2).all(|w| w[0] != w[1]));
            // order preserved: output is a subsequence of the input
            let mut it = xs.iter().map(|&t| BasicChoice::Trend(t));
            prop_assert!(once.states().iter().all(|s| it.any(|x| x == *s)));
        }

        #[test]
        fn trend_segments_cover_every_transition(
            vals in prop::collection::vec(0.1f64..10.0, 2..40)
        ) {
            let r = RuleConstants::default();
            let spans = segment_trend_spans(&vals, &r).unwrap();
            let covered: usize = spans.iter().map(|s| s.end - s.start).sum();
            prop_assert_eq!(covered, vals.len() - 1);
            prop_assert_eq!(spans[0].start, 0);
            prop_assert!(spans.windows(2).all(|w| w[0].end == w[1].start));
            let segs: Vec<TrendChoice> = spans.iter().map(|s| s.choice).collect();
            // Constant only as the final segment
            for s in &segs[..segs.len() - 1] {
                prop_assert_ne!(*s, TrendChoice::Constant);
            }
            // Larger/Smaller segments are maximal, so they never repeat back to back.
            for w in segs.windows(2) {
                prop_assert!(!(w[0] == w[1] && matches!(w[0], TrendChoice::Larger | TrendChoice::Smaller)));
            }
        }

        #[test]
        fn classify_is_total_on_unit_vectors(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let v = Vec3::new(x, y, z);
            prop_assume!(v.norm() > 1e-3);
            let l = classify_direction(&v.normalize(), &RuleConstants::default()).unwrap();
            prop_assert!(!l.is_empty());
        }
    }
}
