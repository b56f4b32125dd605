use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::{Backend, GenerationParams, GenerationRecord, LlmError, Result};

/// Counts calls in flight and remembers the peak.
#[derive(Debug, Default)]
pub struct ConcurrencyProbe {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl ConcurrencyProbe {
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn enter(&self) {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.current.fetch_sub(1, Ordering::SeqCst);
    }
}

enum Script {
    Sequential(Mutex<VecDeque<String>>),
    Keyed(HashMap<String, String>),
}

/// Scripted backend for tests and dry runs.
pub struct MockBackend {
    script: Script,
    delay: Duration,
    probe: Arc<ConcurrencyProbe>,
}

impl MockBackend {
    /// Hands out `outputs` in call order. Only deterministic when calls are
    /// made one at a time.
    pub fn sequential(outputs: impl IntoIterator<Item = String>) -> Self {
        MockBackend {
            script: Script::Sequential(Mutex::new(outputs.into_iter().collect())),
            delay: Duration::ZERO,
            probe: Arc::default(),
        }
    }

    /// Answers each prompt with the output scripted for that exact prompt.
    pub fn keyed(outputs: HashMap<String, String>) -> Self {
        MockBackend {
            script: Script::Keyed(outputs),
            delay: Duration::ZERO,
            probe: Arc::default(),
        }
    }

    /// Holds every call open for `delay`, so overlapping calls show up in
    /// the probe.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn probe(&self) -> Arc<ConcurrencyProbe> {
        Arc::clone(&self.probe)
    }
}

impl Backend for MockBackend {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<GenerationRecord> {
        self.probe.enter();
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let output = match &self.script {
            Script::Sequential(queue) => queue.lock().expect("mock queue poisoned").pop_front(),
            Script::Keyed(map) => map.get(prompt).cloned(),
        };
        self.probe.leave();
        let output = output.ok_or_else(|| {
            let head: String = prompt.chars().take(60).collect();
            LlmError::Unscripted(head)
        })?;
        let mut rec = GenerationRecord::new(params, prompt, output);
        rec.finish_reason = Some("stop".into());
        Ok(rec)
    }
}
