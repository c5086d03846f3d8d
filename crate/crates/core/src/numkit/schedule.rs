use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning-rate and loss-weight schedule constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub eta0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub noam_dim: u32,
    pub noam_warmup: u32,
    pub noam_factor: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            eta0: 0.01,
            alpha: 10.0,
            beta: 0.75,
            theta: 10.0,
            noam_dim: 256,
            noam_warmup: 4000,
            noam_factor: 1.0,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta0 > 0.0
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.theta > 0.0
            && self.noam_dim > 0
            && self.noam_warmup > 0
            && self.noam_factor > 0.0;
        if ok && [self.eta0, self.alpha, self.beta, self.theta, self.noam_factor]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::contract(format!("invalid schedule config {self:?}")))
        }
    }
}

fn check_progress(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::contract(format!("progress must lie in [0, 1], got {p}")))
    }
}

/// Inverse-decay rate `η₀ / (1 + αp)^β`.
pub fn inv_decay_lr(p: f64, cfg: &ScheduleConfig) -> Result<f64> {
    check_progress(p)?;
    Ok(cfg.eta0 / (1.0 + cfg.alpha * p).powf(cfg.beta))
}

/// Progressive loss weight `2 / (1 + e^{-θp}) − 1`, rising from 0 toward 1.
pub fn progressive_mu(p: f64, theta: f64) -> Result<f64> {
    check_progress(p)?;
    if !(theta > 0.0) {
        return Err(Error::contract(format!("theta must be positive, got {theta}")));
    }
    Ok(2.0 / (1.0 + (-theta * p).exp()) - 1.0)
}

/// Warm-up then inverse-square-root decay ("Noam").
pub fn noam_lr(step: u64, cfg: &ScheduleConfig) -> Result<f64> {
    if step == 0 {
        return Err(Error::contract("noam schedule is defined for step >= 1"));
    }
    let s = step as f64;
    let warm = f64::from(cfg.noam_warmup);
    Ok(cfg.noam_factor * f64::from(cfg.noam_dim).powf(-0.5) * s.powf(-0.5).min(s * warm.powf(-1.5)))
}

/// The Noam rate at `step = warmup`, which is its maximum.
pub fn noam_peak(cfg: &ScheduleConfig) -> f64 {
    cfg.noam_factor * f64::from(cfg.noam_dim).powf(-0.5) * f64::from(cfg.noam_warmup).powf(-0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_decay_values() {
        let c = ScheduleConfig::default();
        assert_eq!(inv_decay_lr(0.0, &c).unwrap(), 0.01);
        // 0.01 / 6^0.75 and 0.01 / 11^0.75, evaluated independently
        let half = 0.01 / (6f64.ln() * 0.75).exp();
        let one = 0.01 / (11f64.ln() * 0.75).exp();
        assert!((inv_decay_lr(0.5, &c).unwrap() - half).abs() < 1e-15);
        assert!((inv_decay_lr(1.0, &c).unwrap() - one).abs() < 1e-15);
        assert!((half - 0.002_608_5).abs() < 1e-7);
        assert!((one - 0.001_655_6).abs() < 1e-7);
        assert!(inv_decay_lr(1.01, &c).is_err());
        assert!(inv_decay_lr(-0.1, &c).is_err());
    }

    #[test]
    fn mu_values() {
        assert_eq!(progressive_mu(0.0, 10.0).unwrap(), 0.0);
        assert!((progressive_mu(0.2, 10.0).unwrap() - 1f64.tanh()).abs() < 1e-15);
        assert!((progressive_mu(0.2, 10.0).unwrap() - 0.761_59).abs() < 1e-5);
        assert!((progressive_mu(1.0, 10.0).unwrap() - 0.999_909).abs() < 1e-6);
        assert!(progressive_mu(0.5, 0.0).is_err());
    }

    #[test]
    fn noam_values() {
        let c = ScheduleConfig::default();
        let peak = noam_lr(4000, &c).unwrap();
        assert!((peak - 4000f64.powf(-0.5) / 16.0).abs() < 1e-18);
        assert!((peak - 9.8821e-4).abs() < 1e-8);
        assert!((noam_lr(1, &c).unwrap() - 4000f64.powf(-1.5) / 16.0).abs() < 1e-20);
        assert!((noam_lr(1, &c).unwrap() - 2.4705e-7).abs() < 1e-11);
        assert!((noam_lr(16000, &c).unwrap() - peak / 2.0).abs() < 1e-18);
        assert_eq!(noam_peak(&c), peak);
        assert!(noam_lr(0, &c).is_err());
    }

    #[test]
    fn validate_rejects_bad_constants() {
        let mut c = ScheduleConfig::default();
        assert!(c.validate().is_ok());
        c.eta0 = 0.0;
        assert!(c.validate().is_err());
        c = ScheduleConfig { theta: -1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
