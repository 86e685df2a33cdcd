use std::time::Duration;

use ureq::http::Response;
use ureq::Agent;

/// Agent that returns HTTP error statuses as responses.
pub fn agent(timeout: Duration) -> Agent {
    Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into()
}

/// `Retry-After` in milliseconds (delta-seconds form only).
pub fn retry_after_ms<B>(resp: &Response<B>) -> Option<u64> {
    let value = resp.headers().get("retry-after")?.to_str().ok()?;
    value.trim().parse::<f64>().ok().filter(|s| *s >= 0.0).map(|s| (s * 1000.0) as u64)
}

/// Delay before retry number `attempt` (1-based): the server's hint when
/// given, else exponential from `base_ms`. Capped at one minute.
pub fn backoff(base_ms: u64, attempt: u32, retry_after_ms: Option<u64>) -> Duration {
    let exp = base_ms.saturating_mul(1u64 << (attempt.saturating_sub(1)).min(16));
    Duration::from_millis(retry_after_ms.unwrap_or(exp).min(60_000))
}
