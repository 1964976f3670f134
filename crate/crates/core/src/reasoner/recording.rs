use std::sync::Mutex;

use super::{ChatMessage, GenerationParams, Reasoner, ReasonerCall, ReasonerError};

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedCall {
    pub question_id: String,
    pub turn: usize,
    pub messages: Vec<ChatMessage>,
    pub params: GenerationParams,
}

/// Wraps a backend and logs every request it forwards.
pub struct RecordingReasoner<R> {
    inner: R,
    log: Mutex<Vec<RecordedCall>>,
}

impl<R: Reasoner> RecordingReasoner<R> {
    pub fn new(inner: R) -> Self {
        RecordingReasoner {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.log.lock().expect("recording lock poisoned").clone()
    }
}

impl<R: Reasoner> Reasoner for RecordingReasoner<R> {
    fn generate(&self, call: &ReasonerCall<'_>) -> Result<String, ReasonerError> {
        self.log
            .lock()
            .expect("recording lock poisoned")
            .push(RecordedCall {
                question_id: call.item.id.clone(),
                turn: call.turn,
                messages: call.messages.to_vec(),
                params: call.params.clone(),
            });
        self.inner.generate(call)
    }
}
