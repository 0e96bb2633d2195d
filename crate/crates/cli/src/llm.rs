//! External completion endpoint: HTTP client with retries and an in-flight
//! limit, an on-disk response cache, and parsers for the three prompt kinds.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use dynspatial::answers::Letter;
use dynspatial::qa::{item_id, Options, QAItem, QuestionSpec, Subtask};
use dynspatial::sampling::prune_invisible;
use dynspatial::scene::SceneAnnotation;
use dynspatial::templates::PromptTemplate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::LlmConfig;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("endpoint {endpoint} unavailable after {attempts} attempt(s): {last}")]
    EndpointUnavailable {
        endpoint: String,
        attempts: u32,
        last: String,
    },
    #[error("unparseable response: {0}")]
    UnparseableResponse(String),
    #[error("response cache: {0}")]
    Cache(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub cached: bool,
}

/// The single interface every LLM-backed operation goes through.
pub trait CompletionClient: Send + Sync {
    fn endpoint(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<Completion, LlmError>;
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    limit: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        InFlight {
            limit: limit.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().expect("in-flight lock poisoned");
        while *used >= self.limit {
            used = self.freed.wait(used).expect("in-flight lock poisoned");
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("in-flight lock poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

/// POSTs `{"prompt", "max_tokens"}` and returns the body as opaque text.
pub struct HttpClient {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
    max_tokens: u32,
    max_attempts: u32,
    initial_backoff: Duration,
    in_flight: InFlight,
}

impl HttpClient {
    pub fn new(config: &LlmConfig) -> HttpClient {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let token = config.auth_env.as_deref().and_then(|k| std::env::var(k).ok());
        HttpClient {
            agent,
            endpoint: config.endpoint.clone(),
            token,
            max_tokens: config.max_tokens,
            max_attempts: config.max_retries.max(1),
            initial_backoff: Duration::from_millis(config.initial_backoff_ms),
            in_flight: InFlight::new(config.max_in_flight),
        }
    }

    fn post_once(&self, prompt: &str) -> Result<String, Failure> {
        let body = serde_json::json!({ "prompt": prompt, "max_tokens": self.max_tokens }).to_string();
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let _permit = self.in_flight.acquire();
        let mut resp = req.send(body.as_bytes()).map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        match status {
            200..=299 => Ok(text),
            408 | 429 | 500..=599 => Err(Failure::Retryable(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()))),
        }
    }
}

impl CompletionClient for HttpClient {
    fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Retries transport errors, timeouts, 429 and 5xx with exponential
    /// backoff, up to the configured number of attempts.
    fn complete(&self, prompt: &str) -> Result<Completion, LlmError> {
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match self.post_once(prompt) {
                Ok(text) => return Ok(Completion { text, cached: false }),
                Err(Failure::Fatal(e)) => {
                    return Err(LlmError::EndpointUnavailable {
                        endpoint: self.endpoint.clone(),
                        attempts: attempt,
                        last: e,
                    })
                }
                Err(Failure::Retryable(e)) => {
                    tracing::debug!(attempt, error = %e, "completion request failed");
                    last = e;
                    if attempt < self.max_attempts {
                        std::thread::sleep(self.initial_backoff * 2u32.saturating_pow(attempt - 1));
                    }
                }
            }
        }
        Err(LlmError::EndpointUnavailable {
            endpoint: self.endpoint.clone(),
            attempts: self.max_attempts,
            last,
        })
    }
}

/// Wraps a client with a directory of responses keyed by
/// SHA-256(endpoint, prompt), so interrupted runs resume without repeats.
pub struct CachedClient<C> {
    inner: C,
    dir: PathBuf,
}

impl<C: CompletionClient> CachedClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CachedClient { inner, dir })
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }

    fn path_for(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", cache_key(self.inner.endpoint(), prompt)))
    }
}

pub fn cache_key(endpoint: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update((endpoint.len() as u64).to_le_bytes());
    h.update(endpoint.as_bytes());
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

fn write_atomic(path: &Path, text: &str) -> io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, text)?;
    fs::rename(tmp, path)
}

impl<C: CompletionClient> CompletionClient for CachedClient<C> {
    fn endpoint(&self) -> &str {
        self.inner.endpoint()
    }

    fn complete(&self, prompt: &str) -> Result<Completion, LlmError> {
        let path = self.path_for(prompt);
        match fs::read_to_string(&path) {
            Ok(text) => return Ok(Completion { text, cached: true }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        let c = self.inner.complete(prompt)?;
        write_atomic(&path, &c.text)?;
        Ok(c)
    }
}

/// Builds the configured client, cached when a cache directory is set.
pub fn build_client(config: &LlmConfig) -> anyhow::Result<Box<dyn CompletionClient>> {
    let http = HttpClient::new(config);
    Ok(match &config.cache_dir {
        Some(dir) => Box::new(CachedClient::new(http, dir)?),
        None => Box::new(http),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmPayload {
    Keep(bool),
    Agents { agents: Vec<String>, nonagents: Vec<String> },
    Qa(Box<QAItem>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmVerdict {
    pub payload: LlmPayload,
    pub raw_response: String,
    pub cached: bool,
}

/// The raw body plus, when it is a JSON object, each of its string fields;
/// endpoints commonly wrap the completion as `{"text": ...}`.
fn candidates(raw: &str) -> Vec<String> {
    let mut out = vec![raw.to_string()];
    if let Ok(serde_json::Value::Object(m)) = serde_json::from_str::<serde_json::Value>(raw) {
        fn strings(v: &serde_json::Value, out: &mut Vec<String>) {
            match v {
                serde_json::Value::String(s) => out.push(s.clone()),
                serde_json::Value::Array(a) => a.iter().for_each(|x| strings(x, out)),
                serde_json::Value::Object(m) => m.values().for_each(|x| strings(x, out)),
                _ => {}
            }
        }
        m.values().for_each(|v| strings(v, &mut out));
    }
    out
}

/// First keep/drop keyword in the response.
pub fn parse_keep(raw: &str) -> Result<bool, LlmError> {
    for text in candidates(raw).iter().rev() {
        for word in text.split(|c: char| !c.is_ascii_alphabetic()) {
            match word.to_ascii_lowercase().as_str() {
                "keep" | "yes" => return Ok(true),
                "drop" | "no" | "discard" | "reject" => return Ok(false),
                _ => {}
            }
        }
    }
    Err(LlmError::UnparseableResponse(format!("no keep/drop verdict in {:?}", excerpt(raw))))
}

#[derive(Deserialize)]
struct AgentLists {
    agents: Vec<String>,
    #[serde(alias = "non_agents", alias = "nonAgents")]
    nonagents: Vec<String>,
}

/// `{"agents": [...], "nonagents": [...]}`, possibly surrounded by prose.
pub fn parse_agents(raw: &str) -> Result<(Vec<String>, Vec<String>), LlmError> {
    for text in candidates(raw) {
        if let Ok(l) = serde_json::from_str::<AgentLists>(&text) {
            return Ok((l.agents, l.nonagents));
        }
        if let (Some(a), Some(b)) = (text.find('{'), text.rfind('}')) {
            if a < b {
                if let Ok(l) = serde_json::from_str::<AgentLists>(&text[a..=b]) {
                    return Ok((l.agents, l.nonagents));
                }
            }
        }
    }
    Err(LlmError::UnparseableResponse(format!("no agent lists in {:?}", excerpt(raw))))
}

fn option_line(line: &str) -> Option<(Letter, &str)> {
    let line = line.trim_start();
    let (letter, rest) = if let Some(r) = line.strip_prefix('(') {
        let mut cs = r.chars();
        let l = Letter::from_char(cs.next()?)?;
        (l, cs.as_str().strip_prefix(')')?)
    } else {
        let mut cs = line.chars();
        let c = cs.next()?;
        if !c.is_ascii_uppercase() {
            return None;
        }
        let l = Letter::from_char(c)?;
        let r = cs.as_str();
        (l, r.strip_prefix(['.', ')', ':'])?)
    };
    Some((letter, rest.trim()))
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let t = line.trim_start();
    let head = t.get(..label.len())?;
    head.eq_ignore_ascii_case(label).then(|| t[label.len()..].trim_start_matches([':', ' ']).trim())
}

/// `Question: … / A. … / B. … / C. … / D. … / Answer: X`.
pub fn parse_qa_block(raw: &str) -> Result<(String, [String; 4], Letter), LlmError> {
    let mut last_err = String::from("empty response");
    for text in candidates(raw).iter().rev() {
        match parse_qa_text(text) {
            Ok(r) => return Ok(r),
            Err(e) => last_err = e,
        }
    }
    Err(LlmError::UnparseableResponse(last_err))
}

fn parse_qa_text(text: &str) -> Result<(String, [String; 4], Letter), String> {
    let mut question: Option<String> = None;
    let mut options: [Option<String>; 4] = Default::default();
    let mut answer: Option<&str> = None;
    let mut in_question = false;
    for line in text.lines() {
        if let Some(q) = strip_label(line, "question") {
            question = Some(q.to_string());
            in_question = true;
        } else if let Some(a) = strip_label(line, "answer") {
            answer = Some(a);
            in_question = false;
        } else if let Some((l, body)) = option_line(line) {
            options[l.index()].get_or_insert_with(|| body.to_string());
            in_question = false;
        } else if in_question && !line.trim().is_empty() {
            let q = question.as_mut().expect("set when in_question");
            q.push(' ');
            q.push_str(line.trim());
        }
    }
    let question = question.filter(|q| !q.is_empty()).ok_or("missing question")?;
    let mut opts: Vec<String> = Vec::with_capacity(4);
    for (i, o) in options.into_iter().enumerate() {
        match o.filter(|o| !o.is_empty()) {
            Some(o) => opts.push(o),
            None => return Err(format!("missing option {}", Letter::ALL[i])),
        }
    }
    let distinct: std::collections::HashSet<&String> = opts.iter().collect();
    if distinct.len() != 4 {
        return Err("options are not pairwise distinct".into());
    }
    let a = answer.ok_or("missing answer")?;
    let a = a.trim_matches(|c: char| "()[]. :*".contains(c));
    let mut cs = a.chars();
    let letter = match (cs.next(), cs.next()) {
        (Some(c), None) => Letter::from_char(c),
        (Some(c), Some(n)) if !n.is_ascii_alphanumeric() => Letter::from_char(c),
        _ => None,
    }
    .ok_or_else(|| format!("answer {a:?} is not one of A-D"))?;
    let opts: [String; 4] = opts.try_into().expect("four options");
    Ok((question, opts, letter))
}

fn excerpt(s: &str) -> String {
    s.chars().take(120).collect()
}

pub fn llm_filter_video(
    client: &dyn CompletionClient,
    template: &PromptTemplate,
    caption: &str,
) -> Result<LlmVerdict, LlmError> {
    let c = client.complete(&template.fill(&[("{caption}", caption)]))?;
    Ok(LlmVerdict {
        payload: LlmPayload::Keep(parse_keep(&c.text)?),
        raw_response: c.text,
        cached: c.cached,
    })
}

pub fn llm_classify_agents(
    client: &dyn CompletionClient,
    template: &PromptTemplate,
    caption: &str,
) -> Result<LlmVerdict, LlmError> {
    let c = client.complete(&template.fill(&[("{caption}", caption)]))?;
    let (agents, nonagents) = parse_agents(&c.text)?;
    Ok(LlmVerdict {
        payload: LlmPayload::Agents { agents, nonagents },
        raw_response: c.text,
        cached: c.cached,
    })
}

/// Sends a prompt from `build_nontemplate_prompt` and turns the reply into a
/// free-form item over the same interval and viewpoint.
pub fn llm_generate_nontemplate(
    client: &dyn CompletionClient,
    prompt: &str,
    scene: &SceneAnnotation,
    spec: &QuestionSpec,
    item_index: usize,
    seed: u64,
) -> Result<LlmVerdict, LlmError> {
    let c = client.complete(prompt)?;
    let (question, options, answer) = parse_qa_block(&c.text)?;
    let t_end = scene.timestamp(spec.interval.end);
    let item = QAItem {
        item_id: item_id(&scene.video_id, item_index),
        video_id: scene.video_id.clone(),
        subtask: Subtask::NonTemplate,
        question,
        options: Options::from_array(options),
        answer,
        t_start: scene.timestamp(spec.interval.start),
        t_end,
        visible_until: t_end,
        viewpoint: spec.viewpoint.clone(),
        targets: prune_invisible(scene, spec.interval),
        seed,
        provenance: Some("llm".into()),
    };
    Ok(LlmVerdict {
        payload: LlmPayload::Qa(Box::new(item)),
        raw_response: c.text,
        cached: c.cached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_parsing() {
        assert!(parse_keep("keep").unwrap());
        assert!(parse_keep("Verdict: KEEP.").unwrap());
        assert!(!parse_keep("drop, too static").unwrap());
        assert!(parse_keep(r#"{"text": "keep"}"#).unwrap());
        assert!(parse_keep("hmm").is_err());
    }

    #[test]
    fn agent_parsing() {
        let (a, n) = parse_agents(r#"Sure! {"agents": ["person"], "nonagents": ["ball"]} done"#).unwrap();
        assert_eq!((a, n), (vec!["person".to_string()], vec!["ball".to_string()]));
        let (a, n) = parse_agents(r#"{"agents": [], "nonagents": []}"#).unwrap();
        assert!(a.is_empty() && n.is_empty());
        let wrapped = serde_json::json!({"text": "{\"agents\": [\"dog\"], \"non_agents\": []}"}).to_string();
        assert_eq!(parse_agents(&wrapped).unwrap().0, ["dog"]);
        assert!(matches!(parse_agents("agents: person"), Err(LlmError::UnparseableResponse(_))));
        assert!(parse_agents(r#"{"agents": ["x"]}"#).is_err());
    }

    const BLOCK: &str = "Question: Which object ends up closer to the camera?\n\
                         A. The person\nB) The ball\n(C) Both equally\nD: Neither\nAnswer: B";

    #[test]
    fn qa_block_parsing() {
        let (q, o, a) = parse_qa_block(BLOCK).unwrap();
        assert_eq!(q, "Which object ends up closer to the camera?");
        assert_eq!(o[2], "Both equally");
        assert_eq!(a, Letter::B);
        let multi = "Question: First line\ncontinues here\nA. a\nB. b\nC. c\nD. d\nAnswer: (d)";
        let (q, _, a) = parse_qa_block(multi).unwrap();
        assert_eq!(q, "First line continues here");
        assert_eq!(a, Letter::D);
    }

    #[test]
    fn qa_block_errors() {
        let no_d = BLOCK.replace("D: Neither\n", "");
        assert!(matches!(parse_qa_block(&no_d), Err(LlmError::UnparseableResponse(m)) if m.contains("option D")));
        let bad_key = BLOCK.replace("Answer: B", "Answer: E");
        assert!(parse_qa_block(&bad_key).is_err());
        let dup = BLOCK.replace("Neither", "Both equally");
        assert!(parse_qa_block(&dup).is_err());
        assert!(parse_qa_block("").is_err());
    }

    #[test]
    fn cache_key_separates_endpoints() {
        assert_ne!(cache_key("a", "bc"), cache_key("ab", "c"));
        assert_eq!(cache_key("e", "p"), cache_key("e", "p"));
        assert_eq!(cache_key("e", "p").len(), 64);
    }
}
