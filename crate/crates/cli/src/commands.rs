//! Subcommand implementations, kept free of argument parsing so tests can
//! drive them directly.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dynspatial::dataset::{read_dataset, read_jsonl, write_dataset, write_jsonl};
use dynspatial::eval::{dataset_stats, score, DatasetStats, Prediction, ScoreReport};
use dynspatial::qa::{generate_item, item_seed, sample_question_spec, QAItem, QaConfig};
use dynspatial::scene::{load_scene, scene_to_json, LoadOptions, SceneAnnotation, SceneError};
use dynspatial::synth::{generate_scene, random_spec, SynthSpec};
use dynspatial::templates::{build_nontemplate_prompt, PromptTemplate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::llm::{llm_classify_agents, llm_filter_video, llm_generate_nontemplate, CompletionClient, LlmPayload};

/// `.json` files directly inside `dir`, sorted by name.
pub fn json_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn thread_pool(workers: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

/// Loads every annotation in `dir`. Unreadable or invalid files are logged
/// and returned separately; later files reusing a video id are skipped.
pub fn load_annotations(
    dir: &Path,
    opts: &LoadOptions,
) -> anyhow::Result<(Vec<SceneAnnotation>, Vec<(PathBuf, String)>)> {
    let mut scenes = Vec::new();
    let mut failed = Vec::new();
    let mut ids = HashSet::new();
    for path in json_files(dir)? {
        let result = fs::read(&path)
            .map_err(|e| e.to_string())
            .and_then(|b| load_scene(&b, opts).map_err(|e| e.to_string()));
        match result {
            Ok(s) if !ids.insert(s.video_id.clone()) => {
                let msg = format!("duplicate video id {:?}", s.video_id);
                tracing::warn!(file = %path.display(), "{msg}");
                failed.push((path, msg));
            }
            Ok(s) => scenes.push(s),
            Err(e) => {
                tracing::warn!(file = %path.display(), error = %e, "skipping annotation");
                failed.push((path, e));
            }
        }
    }
    Ok((scenes, failed))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub videos: usize,
    pub skipped_files: usize,
    pub items: usize,
    pub failed_items: usize,
    pub per_subtask: BTreeMap<String, usize>,
}

enum Work<'a> {
    Template(&'a SceneAnnotation, usize),
    Free(&'a SceneAnnotation, usize),
}

/// Generates every item for `scenes` on a pool of `workers` threads.
///
/// Each item depends only on (master seed, video id, item index), and the
/// output order is fixed, so the result does not depend on `workers`.
pub fn generate_items(
    scenes: &[SceneAnnotation],
    config: &RunConfig,
    workers: usize,
    llm: Option<&dyn CompletionClient>,
) -> anyhow::Result<(Vec<QAItem>, usize)> {
    let qa = config.qa_config();
    let free_template = if config.nontemplate_per_video > 0 {
        if llm.is_none() {
            bail!("nontemplate_per_video > 0 but no LLM endpoint is configured");
        }
        Some(config.prompts.nontemplate()?)
    } else {
        None
    };
    let mut work = Vec::new();
    for s in scenes {
        work.extend((0..config.items_per_video).map(|i| Work::Template(s, i)));
        let free = config.items_per_video..config.items_per_video + config.nontemplate_per_video;
        work.extend(free.map(|i| Work::Free(s, i)));
    }
    let results: Vec<Option<QAItem>> = thread_pool(workers)?.install(|| {
        work.par_iter()
            .map(|w| match w {
                Work::Template(scene, i) => {
                    let seed = item_seed(config.master_seed, &scene.video_id, *i);
                    match generate_item(scene, *i, seed, &qa) {
                        Ok(g) => Some(g.item),
                        Err(e) => {
                            tracing::debug!(video = %scene.video_id, item = i, error = %e, "item skipped");
                            None
                        }
                    }
                }
                Work::Free(scene, i) => {
                    let template = free_template.as_ref().expect("checked above");
                    let client = llm.expect("checked above");
                    free_item(scene, *i, config.master_seed, &qa, template, client)
                }
            })
            .collect()
    });
    let failed = results.iter().filter(|r| r.is_none()).count();
    Ok((results.into_iter().flatten().collect(), failed))
}

fn free_item(
    scene: &SceneAnnotation,
    index: usize,
    master_seed: u64,
    qa: &QaConfig,
    template: &PromptTemplate,
    client: &dyn CompletionClient,
) -> Option<QAItem> {
    let seed = item_seed(master_seed, &scene.video_id, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = sample_question_spec(scene, qa, &mut rng)
        .and_then(|spec| build_nontemplate_prompt(scene, &spec, template, qa.gimbal).map(|p| (spec, p)))
        .map_err(anyhow::Error::from)
        .and_then(|(spec, prompt)| Ok(llm_generate_nontemplate(client, &prompt, scene, &spec, index, seed)?));
    match result {
        Ok(v) => match v.payload {
            LlmPayload::Qa(item) => Some(*item),
            _ => None,
        },
        Err(e) => {
            tracing::warn!(video = %scene.video_id, item = index, error = %e, "free-form item skipped");
            None
        }
    }
}

pub fn cmd_generate(
    config: &RunConfig,
    annotation_dir: &Path,
    out_path: &Path,
    llm: Option<&dyn CompletionClient>,
) -> anyhow::Result<GenerateSummary> {
    let opts = LoadOptions {
        enforce_curation: config.enforce_curation,
    };
    let (mut scenes, failed) = load_annotations(annotation_dir, &opts)?;
    let mut skipped_files = failed.len();
    if let Some(mode) = config.sampling_mode {
        scenes.retain(|s| {
            let keep = s.sampling_mode == mode;
            if !keep {
                tracing::warn!(video = %s.video_id, "sampling mode differs from the configured one; skipped");
                skipped_files += 1;
            }
            keep
        });
    }
    let (items, failed_items) = generate_items(&scenes, config, config.worker_count, llm)?;
    let file = fs::File::create(out_path).with_context(|| format!("creating {}", out_path.display()))?;
    write_dataset(&items, file)?;
    let stats = dataset_stats(&items);
    Ok(GenerateSummary {
        videos: scenes.len(),
        skipped_files,
        items: items.len(),
        failed_items,
        per_subtask: stats
            .subtasks
            .into_iter()
            .filter(|(_, s)| s.count > 0)
            .map(|(k, s)| (k, s.count))
            .collect(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SynthSummary {
    pub written: usize,
    pub failed: usize,
}

fn write_scene(out_dir: &Path, scene: &SceneAnnotation) -> anyhow::Result<()> {
    let path = out_dir.join(format!("{}.json", scene.video_id));
    fs::write(&path, scene_to_json(scene)).with_context(|| format!("writing {}", path.display()))
}

/// Turns every spec file in `spec_dir` into an annotation file in `out_dir`.
pub fn cmd_synth(spec_dir: &Path, out_dir: &Path) -> anyhow::Result<SynthSummary> {
    fs::create_dir_all(out_dir)?;
    let mut summary = SynthSummary::default();
    for path in json_files(spec_dir)? {
        let result = fs::read(&path)
            .map_err(anyhow::Error::from)
            .and_then(|b| Ok(SynthSpec::from_json(&b)?))
            .and_then(|spec| Ok(generate_scene(&spec)?))
            .and_then(|scene| write_scene(out_dir, &scene));
        match result {
            Ok(()) => summary.written += 1,
            Err(e) => {
                tracing::warn!(file = %path.display(), error = %e, "spec skipped");
                summary.failed += 1;
            }
        }
    }
    Ok(summary)
}

/// Writes `count` random synthetic scenes, `synth-00000.json` onwards.
pub fn cmd_synth_random(count: usize, config: &RunConfig, out_dir: &Path) -> anyhow::Result<SynthSummary> {
    fs::create_dir_all(out_dir)?;
    let mode = config.sampling_mode.unwrap_or(dynspatial::scene::SamplingMode::Bench1Fps);
    let mut summary = SynthSummary::default();
    for i in 0..count {
        let id = format!("synth-{i:05}");
        let spec = random_spec(&id, item_seed(config.master_seed, &id, 0), mode);
        match generate_scene(&spec).map_err(anyhow::Error::from).and_then(|s| write_scene(out_dir, &s)) {
            Ok(()) => summary.written += 1,
            Err(e) => {
                tracing::warn!(video = %id, error = %e, "random scene skipped");
                summary.failed += 1;
            }
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileViolation {
    pub file: String,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub files: usize,
    pub violations: Vec<FileViolation>,
}

pub fn cmd_validate(annotation_dir: &Path, opts: &LoadOptions) -> anyhow::Result<ValidationReport> {
    let mut report = ValidationReport::default();
    for path in json_files(annotation_dir)? {
        report.files += 1;
        let file = path.display().to_string();
        let found: Vec<(String, String)> = match fs::read(&path) {
            Err(e) => vec![(String::new(), e.to_string())],
            Ok(bytes) => match load_scene(&bytes, opts) {
                Ok(_) => vec![],
                Err(SceneError::Schema { path, message }) => vec![(path, message)],
                Err(e) => {
                    let v = e.violations();
                    if v.is_empty() {
                        vec![(String::new(), e.to_string())]
                    } else {
                        v.into_iter().map(|v| (v.path, v.message)).collect()
                    }
                }
            },
        };
        report.violations.extend(found.into_iter().map(|(path, message)| FileViolation {
            file: file.clone(),
            path,
            message,
        }));
    }
    Ok(report)
}

pub fn read_dataset_file(path: &Path) -> anyhow::Result<Vec<QAItem>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_dataset(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

pub fn cmd_score(dataset: &Path, predictions: &Path) -> anyhow::Result<ScoreReport> {
    let items = read_dataset_file(dataset)?;
    let f = fs::File::open(predictions).with_context(|| format!("opening {}", predictions.display()))?;
    let preds: Vec<Prediction> = read_jsonl(BufReader::new(f))?;
    Ok(score(&items, &preds)?)
}

pub fn cmd_stats(dataset: &Path) -> anyhow::Result<DatasetStats> {
    Ok(dataset_stats(&read_dataset_file(dataset)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub video_id: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationRecord {
    pub video_id: String,
    pub keep: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonagents: Option<Vec<String>>,
    pub cached: bool,
}

/// Screens captions, then classifies categories of the kept videos. Items
/// whose responses cannot be parsed, or whose requests fail, are logged and
/// left out.
pub fn cmd_curate(
    captions: &[Caption],
    config: &RunConfig,
    client: &dyn CompletionClient,
    workers: usize,
) -> anyhow::Result<Vec<CurationRecord>> {
    let filter = config.prompts.curation()?;
    let classify = config.prompts.classification()?;
    let records: Vec<Option<CurationRecord>> = thread_pool(workers)?.install(|| {
        captions
            .par_iter()
            .map(|c| {
                let run = || -> Result<CurationRecord, crate::llm::LlmError> {
                    let f = llm_filter_video(client, &filter, &c.caption)?;
                    let LlmPayload::Keep(keep) = f.payload else {
                        unreachable!("filter yields a keep verdict")
                    };
                    let mut rec = CurationRecord {
                        video_id: c.video_id.clone(),
                        keep,
                        agents: None,
                        nonagents: None,
                        cached: f.cached,
                    };
                    if keep {
                        let v = llm_classify_agents(client, &classify, &c.caption)?;
                        if let LlmPayload::Agents { agents, nonagents } = v.payload {
                            rec.agents = Some(agents);
                            rec.nonagents = Some(nonagents);
                        }
                        rec.cached &= v.cached;
                    }
                    Ok(rec)
                };
                run().map_err(|e| tracing::warn!(video = %c.video_id, error = %e, "curation skipped")).ok()
            })
            .collect()
    });
    Ok(records.into_iter().flatten().collect())
}

pub fn read_captions(path: &Path) -> anyhow::Result<Vec<Caption>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_jsonl(BufReader::new(f))?)
}

pub fn write_records<T: Serialize>(records: &[T], out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => {
            write_jsonl(records, fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)?;
        }
        None => {
            write_jsonl(records, io::stdout().lock())?;
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut o = io::stdout().lock();
            writeln!(o, "{text}")?;
        }
    }
    Ok(())
}
