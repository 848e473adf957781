//! Remote language-model plumbing.
//!
//! The engine never asks a model for numbers. Prompts carry a finished draft
//! and the list of numerals the reply must keep; replies that drop or invent
//! a numeral are discarded by the caller.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::cache::hex;
use crate::error::{Error, Result};

pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Stable pseudonym for a student id.
pub fn student_token(student_id: &str) -> String {
    let digest = hex(&Sha256::digest(student_id.as_bytes()));
    format!("learner-{}", &digest[..10])
}

/// Replaces raw identifiers with their pseudonyms.
#[derive(Debug, Clone, Default)]
pub struct Anonymizer {
    pairs: Vec<(String, String)>,
}

impl Anonymizer {
    pub fn new(student_ids: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut pairs: Vec<(String, String)> = student_ids
            .into_iter()
            .map(Into::into)
            .filter(|s: &String| !s.is_empty())
            .map(|s| {
                let t = student_token(&s);
                (s, t)
            })
            .collect();
        // longest first so prefixes of other ids are not replaced early
        pairs.sort_by_key(|(s, _)| std::cmp::Reverse(s.len()));
        Anonymizer { pairs }
    }

    pub fn scrub(&self, text: &str) -> String {
        let mut out = text.to_owned();
        for (raw, token) in &self.pairs {
            out = out.replace(raw.as_str(), token);
        }
        out
    }
}

/// Maps `f` over `items` with at most `max_in_flight` calls running at once;
/// results keep the input order.
pub fn run_bounded<T, R, F>(items: Vec<T>, max_in_flight: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let n = items.len();
    let workers = max_in_flight.max(1).min(n.max(1));
    let queue: Mutex<Vec<(usize, T)>> = Mutex::new(items.into_iter().enumerate().rev().collect());
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue lock").pop();
                let Some((i, item)) = next else { break };
                let r = f(item);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

type Responder = Box<dyn Fn(&str) -> Result<String> + Send + Sync>;

/// In-process client that records every prompt and answers with a closure.
pub struct RecordingClient {
    responder: Responder,
    prompts: Mutex<Vec<String>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl RecordingClient {
    pub fn new(responder: impl Fn(&str) -> Result<String> + Send + Sync + 'static) -> Self {
        RecordingClient {
            responder: Box::new(responder),
            prompts: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    /// Echoes the draft section of each prompt back unchanged.
    pub fn echo() -> Self {
        RecordingClient::new(|p| Ok(draft_of(p).to_owned()))
    }

    /// Fails every call.
    pub fn failing() -> Self {
        RecordingClient::new(|_| Err(Error::Backend("connection refused".into())))
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt lock").clone()
    }

    /// Largest number of overlapping calls observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl LlmClient for RecordingClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.prompts.lock().expect("prompt lock").push(prompt.to_owned());
        let out = (self.responder)(prompt);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        out
    }
}

pub const DRAFT_START: &str = "<draft>";
pub const DRAFT_END: &str = "</draft>";

/// The text between the draft markers of a prompt, or the whole prompt.
pub fn draft_of(prompt: &str) -> &str {
    match (prompt.find(DRAFT_START), prompt.find(DRAFT_END)) {
        (Some(a), Some(b)) if a + DRAFT_START.len() <= b => prompt[a + DRAFT_START.len()..b].trim(),
        _ => prompt,
    }
}
