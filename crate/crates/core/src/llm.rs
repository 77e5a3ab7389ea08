//! Chat-completion backend for code generation.
//!
//! The bearer token comes from `AMDD_LLM_TOKEN` and is scrubbed from every
//! line that reaches the transcript.

use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::codegen::{dialect_extension, AgentProgramIR, GenerationResult, PromptBundle, SourceUnit};

pub const TOKEN_ENV: &str = "AMDD_LLM_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    /// First retry delay; doubled on each further attempt.
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        LlmEndpointConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4".into(),
            temperature: 0.0,
            max_retries: 3,
            backoff_ms: 500,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("environment variable {TOKEN_ENV} is not set")]
    MissingToken,
    #[error("endpoint unreachable after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: String, transcript: String },
    #[error("endpoint rejected the request with HTTP {status}")]
    Http { status: u16, transcript: String },
    #[error("no code blocks in the response ({reason})")]
    Extraction { reason: String, raw: String, transcript: String },
}

impl LlmError {
    /// The redacted transcript accumulated before the failure.
    pub fn transcript(&self) -> &str {
        match self {
            LlmError::MissingToken => "",
            LlmError::Transport { transcript, .. }
            | LlmError::Http { transcript, .. }
            | LlmError::Extraction { transcript, .. } => transcript,
        }
    }
}

/// Append-only log with the secret removed from every entry.
struct Transcript {
    secret: String,
    text: String,
}

impl Transcript {
    fn push(&mut self, line: impl AsRef<str>) {
        let line = line.as_ref();
        let clean = if self.secret.is_empty() { line.to_string() } else { line.replace(&self.secret, "[REDACTED]") };
        self.text.push_str(&clean);
        if !clean.ends_with('\n') {
            self.text.push('\n');
        }
    }
}

pub struct LlmClient {
    cfg: LlmEndpointConfig,
    token: String,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient").field("cfg", &self.cfg).field("token", &"[REDACTED]").finish()
    }
}

impl LlmClient {
    pub fn from_env(cfg: LlmEndpointConfig) -> Result<Self, LlmError> {
        match std::env::var(TOKEN_ENV) {
            Ok(t) if !t.is_empty() => Ok(Self::with_token(cfg, t)),
            _ => Err(LlmError::MissingToken),
        }
    }

    pub fn with_token(cfg: LlmEndpointConfig, token: impl Into<String>) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .expect("http client builds");
        LlmClient { cfg, token: token.into(), http }
    }

    pub fn config(&self) -> &LlmEndpointConfig {
        &self.cfg
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn complete(&self, system: &str, user: &str, log: &mut Transcript) -> Result<String, LlmError> {
        let body = json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        log.push(format!("POST {}", self.endpoint()));
        log.push(format!("request: {}", serde_json::to_string_pretty(&body).unwrap_or_default()));

        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 2).min(16));
                log.push(format!("retrying in {delay} ms"));
                thread::sleep(Duration::from_millis(delay));
            }
            let sent = self.http.post(self.endpoint()).bearer_auth(&self.token).json(&body).send();
            let resp = match sent {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    log.push(format!("attempt {attempt}/{attempts}: transport error: {last}"));
                    continue;
                }
            };
            let status = resp.status();
            let text = resp.text().unwrap_or_default();
            log.push(format!("attempt {attempt}/{attempts}: HTTP {}", status.as_u16()));
            log.push(format!("response: {text}"));
            if status.is_server_error() {
                last = format!("HTTP {}", status.as_u16());
                continue;
            }
            if !status.is_success() {
                return Err(LlmError::Http { status: status.as_u16(), transcript: log.text.clone() });
            }
            let parsed: Json = serde_json::from_str(&text).map_err(|e| LlmError::Extraction {
                reason: format!("response is not JSON: {e}"),
                raw: text.clone(),
                transcript: log.text.clone(),
            })?;
            return match parsed.pointer("/choices/0/message/content").and_then(Json::as_str) {
                Some(content) => Ok(content.to_string()),
                None => Err(LlmError::Extraction {
                    reason: "no choices[0].message.content".into(),
                    raw: text,
                    transcript: log.text.clone(),
                }),
            };
        }
        Err(LlmError::Transport { attempts, last, transcript: log.text.clone() })
    }
}

/// Where a bundle's transcript is stored under an output directory.
pub fn transcript_path(out_dir: &Path, checksum: &str) -> PathBuf {
    out_dir.join("artifacts").join("llm").join(format!("{checksum}.log"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBlock {
    pub lang: String,
    pub filename: Option<String>,
    pub text: String,
}

/// `// file: a.java`, `# file: a.py`, `-- filename: x` and the like.
fn filename_hint(line: &str) -> Option<String> {
    let t = line.trim().trim_matches(|c| c == '*' || c == '`');
    let t = ["//", "#", "--", "/*"].iter().find_map(|p| t.strip_prefix(p)).unwrap_or(t).trim();
    let t = t.trim_end_matches("*/").trim();
    let lower = t.to_ascii_lowercase();
    let rest = ["filename:", "file:"].iter().find_map(|p| lower.strip_prefix(p).map(|_| &t[p.len()..]))?;
    let name = rest.trim().trim_matches('`');
    let ok = !name.is_empty()
        && name.contains('.')
        && !name.contains(char::is_whitespace)
        && !name.contains("..")
        && !name.starts_with('/');
    ok.then(|| name.to_string())
}

/// Every fenced block, with a filename taken from the line just before the
/// fence or from a first-line comment inside it.
pub fn extract_code_blocks(text: &str) -> Vec<CodeBlock> {
    let mut out = Vec::new();
    let mut prev: Option<&str> = None;
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let Some(lang) = line.trim_start().strip_prefix("```") else {
            if !line.trim().is_empty() {
                prev = Some(line);
            }
            continue;
        };
        let mut body: Vec<&str> = Vec::new();
        let mut closed = false;
        for l in lines.by_ref() {
            if l.trim_start().starts_with("```") {
                closed = true;
                break;
            }
            body.push(l);
        }
        if !closed && body.is_empty() {
            break;
        }
        let filename = prev.and_then(filename_hint).or_else(|| body.first().and_then(|l| filename_hint(l)));
        let mut text = body.join("\n");
        text.push('\n');
        out.push(CodeBlock { lang: lang.trim().to_string(), filename, text });
        prev = None;
    }
    out
}

fn as_programs(block: &CodeBlock) -> Option<Vec<AgentProgramIR>> {
    if block.lang != "json" {
        return None;
    }
    serde_json::from_str::<Vec<AgentProgramIR>>(&block.text)
        .ok()
        .or_else(|| serde_json::from_str::<AgentProgramIR>(&block.text).ok().map(|p| vec![p]))
}

/// Splits a model reply into source units (and IR programs when a JSON
/// block happens to parse as IR). Unnamed blocks are named after the
/// bundle's classes in order.
pub fn units_from_reply(reply: &str, bundle: &PromptBundle) -> Result<(Vec<SourceUnit>, Vec<AgentProgramIR>), String> {
    let blocks = extract_code_blocks(reply);
    if blocks.is_empty() {
        return Err("response contains no fenced code".into());
    }
    let ext = dialect_extension(&bundle.dialect);
    let mut units: Vec<SourceUnit> = Vec::new();
    let mut programs = Vec::new();
    let mut unnamed = 0;
    for b in &blocks {
        if let Some(p) = as_programs(b) {
            programs.extend(p);
            continue;
        }
        let filename = b.filename.clone().unwrap_or_else(|| {
            let name = match bundle.classes.get(unnamed) {
                Some(c) => format!("agent_{c}.{ext}"),
                None => format!("agent_{}.{ext}", unnamed + 1),
            };
            unnamed += 1;
            name
        });
        match units.iter_mut().find(|u| u.filename == filename) {
            Some(u) => u.text.push_str(&b.text),
            None => units.push(SourceUnit { filename, text: b.text.clone() }),
        }
    }
    units.sort_by(|a, b| a.filename.cmp(&b.filename));
    programs.sort_by(|a, b| a.agent_name.cmp(&b.agent_name));
    Ok((units, programs))
}

pub fn generate_llm(bundle: &PromptBundle, client: &LlmClient) -> Result<GenerationResult, LlmError> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut log = Transcript { secret: client.token.clone(), text: String::new() };
    log.push(format!("started: {started}"));
    log.push(format!("bundle: {}", bundle.checksum));
    log.push(format!("model: {} temperature: {}", client.cfg.model, client.cfg.temperature));
    let reply = client.complete(&bundle.directives, &bundle.full_text(), &mut log)?;
    match units_from_reply(&reply, bundle) {
        Ok((units, programs)) => {
            for u in &units {
                log.push(format!("extracted {} ({} bytes)", u.filename, u.text.len()));
            }
            if !programs.is_empty() {
                log.push(format!("parsed {} IR programs", programs.len()));
            }
            Ok(GenerationResult { programs, source_units: Some(units), backend_log: log.text })
        }
        Err(reason) => {
            log.push(format!("extraction failed: {reason}"));
            Err(LlmError::Extraction { reason, raw: reply, transcript: log.text })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hints() {
        assert_eq!(filename_hint("// file: Operator.java").as_deref(), Some("Operator.java"));
        assert_eq!(filename_hint("# File: mcc_agent.py").as_deref(), Some("mcc_agent.py"));
        assert_eq!(filename_hint("**file: `UV.java`**").as_deref(), Some("UV.java"));
        assert_eq!(filename_hint("Here is the code:"), None);
        assert_eq!(filename_hint("// file: ../etc/passwd"), None);
        assert_eq!(filename_hint("// file: /abs.java"), None);
    }

    #[test]
    fn blocks_and_names() {
        let reply = "Intro\n// file: A.java\n```java\nclass A {}\n```\ntext\n```java\nclass B {}\n```\n```python\n# file: c.py\nx = 1\n```\n";
        let b = extract_code_blocks(reply);
        assert_eq!(b.len(), 3);
        assert_eq!(b[0].filename.as_deref(), Some("A.java"));
        assert_eq!(b[0].text, "class A {}\n");
        assert_eq!(b[1].filename, None);
        assert_eq!(b[2].filename.as_deref(), Some("c.py"));
        assert!(extract_code_blocks("no code here").is_empty());
    }

    #[test]
    fn transcript_redacts() {
        let mut t = Transcript { secret: "sk-abc".into(), text: String::new() };
        t.push("Authorization: Bearer sk-abc");
        assert!(!t.text.contains("sk-abc"));
        assert!(t.text.contains("[REDACTED]"));
    }
}
