//! Mapping between modeled milliseconds and wall-clock time.

use std::time::Duration;

/// Wall-clock duration of `model_ms` modeled milliseconds when one modeled
/// millisecond lasts `time_scale` wall milliseconds.
pub fn wall(model_ms: f64, time_scale: f64) -> Duration {
    Duration::from_secs_f64((model_ms * time_scale / 1000.0).max(0.0))
}

/// Modeled milliseconds corresponding to a wall-clock duration.
pub fn modeled(elapsed: Duration, time_scale: f64) -> f64 {
    elapsed.as_secs_f64() * 1000.0 / time_scale
}

/// Sleeps for a modeled duration. The tokio timer rounds to whole
/// milliseconds, which is too coarse at small time scales, so the wait runs
/// on the blocking pool.
pub async fn model_sleep(model_ms: f64, time_scale: f64) {
    let d = wall(model_ms, time_scale);
    if d.is_zero() {
        return;
    }
    tokio::task::spawn_blocking(move || std::thread::sleep(d))
        .await
        .expect("sleep task panicked");
}
