use dynspatial::answers::render_answer;
use dynspatial::qa::{generate_item, item_seed, QaConfig, QuestionType, Subtask, TypeWeights};
use dynspatial::scene::SamplingMode;
use dynspatial::synth::{generate_scene, oracle_answer, random_spec};
use std::collections::BTreeMap;

#[test]
fn pipeline_matches_oracle_on_random_scenes() {
    let mut per_subtask: BTreeMap<Subtask, usize> = BTreeMap::new();
    let mut mismatches = Vec::new();
    for (i, mode) in (0..60u64).flat_map(|s| [(s, SamplingMode::Bench1Fps), (s + 1000, SamplingMode::Train32)]) {
        let spec = random_spec(&format!("v{i}"), i, mode);
        let scene = generate_scene(&spec).unwrap();
        for q in QuestionType::ALL {
            let config = QaConfig {
                type_weights: TypeWeights::only(q),
                ..QaConfig::default()
            };
            for idx in 0..4 {
                let Ok(g) = generate_item(&scene, idx, item_seed(9, &scene.video_id, idx), &config) else {
                    continue;
                };
                let oracle = oracle_answer(&spec, &g.spec).unwrap();
                if oracle.margin < 1e-7 {
                    continue;
                }
                let want = render_answer(&oracle.answer);
                if g.item.correct_text() != want {
                    mismatches.push(format!("{:?}: pipeline {:?} oracle {:?}", g.spec, g.item.correct_text(), want));
                }
                *per_subtask.entry(g.item.subtask).or_default() += 1;
            }
        }
    }
    assert!(mismatches.is_empty(), "{} mismatches, first: {}", mismatches.len(), mismatches[0]);
    assert_eq!(per_subtask.len(), 12, "{per_subtask:?}");
}
