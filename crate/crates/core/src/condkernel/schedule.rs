//! Weight of the transparency-mask loss over training steps.

pub const ALPHA_LOSS_START: f64 = 10.0;
pub const ALPHA_LOSS_DECAY: f64 = 0.9997;
pub const ALPHA_LOSS_FLOOR: f64 = 0.01;

/// `max(10 · 0.9997^t, 0.01)`
pub fn alpha_loss_weight(step: u64) -> f64 {
    let t = step.min(i32::MAX as u64) as i32;
    (ALPHA_LOSS_START * ALPHA_LOSS_DECAY.powi(t)).max(ALPHA_LOSS_FLOOR)
}
