use std::f64::consts::PI;

/// Global learning rate at 0-based step `t` of `total`: a linear ramp from 0
/// to `base` over `[0, warmup)`, then a cosine decay from `base` to
/// `floor * base` over `[warmup, total)`.
pub fn global_lr(t: u64, base: f64, warmup: u64, total: u64, floor: f64) -> f64 {
    if t < warmup {
        return base * t as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1) as f64;
    let progress = ((t - warmup) as f64 / span).min(1.0);
    base * (floor + (1.0 - floor) * 0.5 * (1.0 + (PI * progress).cos()))
}
