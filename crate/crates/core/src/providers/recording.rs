use std::sync::Mutex;

use super::{Backend, Completion, ModelRequest, ProviderError};

/// Wraps a backend and keeps every request it sees, in call order.
#[derive(Debug)]
pub struct RecordingBackend<B> {
    inner: B,
    requests: Mutex<Vec<ModelRequest>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ModelRequest> {
        self.requests.lock().expect("request log poisoned").clone()
    }

    pub fn take_requests(&self) -> Vec<ModelRequest> {
        std::mem::take(&mut *self.requests.lock().expect("request log poisoned"))
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &ModelRequest) -> Result<Completion, ProviderError> {
        self.requests
            .lock()
            .expect("request log poisoned")
            .push(request.clone());
        self.inner.complete(request)
    }
}
