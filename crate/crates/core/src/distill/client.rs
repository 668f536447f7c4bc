//! Pluggable teacher/judge transports. Tests and offline runs use the
//! closure-backed stubs; the CLI wires HTTP clients behind the same traits.

use super::TeacherRequest;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

/// Generates one raw completion for a teacher request.
pub trait TeacherClient: Send + Sync {
    fn generate(&self, request: &TeacherRequest) -> Result<String, TransportError>;
}

/// Returns the judge's single-line verdict for a filled judge prompt.
pub trait JudgeClient: Send + Sync {
    fn judge(&self, prompt: &str) -> Result<String, TransportError>;
}

/// Closure-backed teacher stub.
pub struct FnTeacher<F>(pub F);

impl<F> TeacherClient for FnTeacher<F>
where
    F: Fn(&TeacherRequest) -> Result<String, TransportError> + Send + Sync,
{
    fn generate(&self, request: &TeacherRequest) -> Result<String, TransportError> {
        (self.0)(request)
    }
}

/// Closure-backed judge stub.
pub struct FnJudge<F>(pub F);

impl<F> JudgeClient for FnJudge<F>
where
    F: Fn(&str) -> Result<String, TransportError> + Send + Sync,
{
    fn judge(&self, prompt: &str) -> Result<String, TransportError> {
        (self.0)(prompt)
    }
}

/// Bounded retry with exponential backoff for external calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(200) }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; for tests.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay: Duration::ZERO }
    }
}

/// Runs `call` until it succeeds or the policy is exhausted, sleeping
/// `base_delay * 2^attempt` between attempts.
pub fn call_with_retry<T>(
    policy: &RetryPolicy,
    mut call: impl FnMut() -> Result<T, TransportError>,
) -> Result<T, TransportError> {
    let attempts = policy.max_attempts.max(1);
    let mut last = TransportError("no attempts made".into());
    for attempt in 0..attempts {
        match call() {
            Ok(v) => return Ok(v),
            Err(e) => last = e,
        }
        if attempt + 1 < attempts && !policy.base_delay.is_zero() {
            std::thread::sleep(policy.base_delay * 2u32.saturating_pow(attempt));
        }
    }
    Err(TransportError(format!("{} (after {attempts} attempts)", last.0)))
}
