//! Scalar rewards over a [`MetricVector`].
//!
//! * mixed: `R = α·accuracy − (1 − α)·E*`
//! * power constraint: `R = accuracy` if peak power ≤ budget, else 0
//! * accuracy constraint: `R = 1 − E*` if accuracy ≥ threshold, else 0
//!
//! `E*` is energy normalized by the device profile's bounds.

use serde::{Deserialize, Serialize};

use crate::costmodel::{DeviceProfile, MetricVector};
use crate::error::{NasError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardConfig {
    Mixed { alpha: f64 },
    PowerConstraint { power_budget_w: f64 },
    AccuracyConstraint { accuracy_threshold: f64 },
}

impl RewardConfig {
    pub fn check(&self) -> Result<()> {
        match *self {
            RewardConfig::Mixed { alpha } if !(0.0..=1.0).contains(&alpha) => Err(
                NasError::Config(format!("reward alpha must be in [0, 1], got {alpha}")),
            ),
            RewardConfig::PowerConstraint { power_budget_w }
                if !(power_budget_w > 0.0 && power_budget_w.is_finite()) =>
            {
                Err(NasError::Config(format!(
                    "power_budget_w must be positive, got {power_budget_w}"
                )))
            }
            RewardConfig::AccuracyConstraint { accuracy_threshold }
                if !(0.0..=1.0).contains(&accuracy_threshold) =>
            {
                Err(NasError::Config(format!(
                    "accuracy_threshold must be in [0, 1], got {accuracy_threshold}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            RewardConfig::Mixed { .. } => "mixed",
            RewardConfig::PowerConstraint { .. } => "power_constraint",
            RewardConfig::AccuracyConstraint { .. } => "accuracy_constraint",
        }
    }

    pub fn reward(&self, metrics: &MetricVector, profile: &DeviceProfile) -> Result<f64> {
        match *self {
            RewardConfig::Mixed { alpha } => mixed_reward(metrics, alpha, profile),
            RewardConfig::PowerConstraint { power_budget_w } => {
                Ok(power_constraint_reward(metrics, power_budget_w))
            }
            RewardConfig::AccuracyConstraint { accuracy_threshold } => Ok(
                accuracy_constraint_reward(metrics, accuracy_threshold, profile),
            ),
        }
    }

    /// The constraint predicate, for constraint kinds.
    pub fn constraint(&self) -> Option<Constraint> {
        match *self {
            RewardConfig::Mixed { .. } => None,
            RewardConfig::PowerConstraint { power_budget_w } => {
                Some(Constraint::PowerBudget(power_budget_w))
            }
            RewardConfig::AccuracyConstraint { accuracy_threshold } => {
                Some(Constraint::AccuracyThreshold(accuracy_threshold))
            }
        }
    }
}

/// Feasibility predicate over one candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    PowerBudget(f64),
    AccuracyThreshold(f64),
}

impl Constraint {
    pub fn satisfied(&self, m: &MetricVector) -> bool {
        match *self {
            Constraint::PowerBudget(b) => m.peak_power_w <= b,
            Constraint::AccuracyThreshold(t) => m.accuracy >= t,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Constraint::PowerBudget(b) => format!("peak_power_w<={b}"),
            Constraint::AccuracyThreshold(t) => format!("accuracy>={t}"),
        }
    }
}

/// `α·accuracy − (1 − α)·E*`.
pub fn mixed_from_normalized(alpha: f64, accuracy: f64, energy_norm: f64) -> f64 {
    alpha * accuracy - (1.0 - alpha) * energy_norm
}

pub fn mixed_reward(metrics: &MetricVector, alpha: f64, profile: &DeviceProfile) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(NasError::Config(format!(
            "reward alpha must be in [0, 1], got {alpha}"
        )));
    }
    let e = profile.normalize_energy(metrics.energy_j).value();
    Ok(mixed_from_normalized(alpha, metrics.accuracy, e))
}

pub fn power_constraint_reward(metrics: &MetricVector, budget_w: f64) -> f64 {
    if metrics.peak_power_w <= budget_w {
        metrics.accuracy
    } else {
        0.0
    }
}

pub fn accuracy_constraint_from_normalized(accuracy: f64, threshold: f64, energy_norm: f64) -> f64 {
    if accuracy >= threshold {
        1.0 - energy_norm
    } else {
        0.0
    }
}

pub fn accuracy_constraint_reward(
    metrics: &MetricVector,
    threshold: f64,
    profile: &DeviceProfile,
) -> f64 {
    let e = profile.normalize_energy(metrics.energy_j).value();
    accuracy_constraint_from_normalized(metrics.accuracy, threshold, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn metrics(accuracy: f64, energy_j: f64, peak_power_w: f64) -> MetricVector {
        MetricVector {
            accuracy,
            error_rate: 1.0 - accuracy,
            params: 0,
            flops: 0,
            latency_s: 0.0,
            energy_j,
            peak_power_w,
            memory_bytes: 0,
        }
    }

    /// Profile where normalized energy equals raw energy.
    fn unit_profile() -> DeviceProfile {
        DeviceProfile {
            energy_bounds: (f64::MIN_POSITIVE, 1.0),
            ..DeviceProfile::workstation()
        }
    }

    #[test]
    fn alpha_one_is_accuracy() {
        let p = unit_profile();
        for e in [0.0, 0.3, 1.0, 17.0] {
            assert_eq!(mixed_reward(&metrics(0.9, e, 0.0), 1.0, &p).unwrap(), 0.9);
        }
    }

    #[test]
    fn mixed_examples() {
        assert!((mixed_from_normalized(0.25, 0.92, 0.40) - -0.07).abs() < 1e-15);
        assert_eq!(mixed_from_normalized(0.0, 0.8, 0.3), -0.3);
        let p = DeviceProfile {
            energy_bounds: (1.0, 5.0),
            ..DeviceProfile::workstation()
        };
        // E = 2.6 -> E* = 0.4
        let r = mixed_reward(&metrics(0.92, 2.6, 0.0), 0.25, &p).unwrap();
        assert!((r - -0.07).abs() < 1e-12, "{r}");
        assert!(mixed_reward(&metrics(0.9, 1.0, 0.0), 1.2, &p).is_err());
        assert!(mixed_reward(&metrics(0.9, 1.0, 0.0), -0.1, &p).is_err());
    }

    #[test]
    fn power_constraint_examples() {
        assert_eq!(power_constraint_reward(&metrics(0.8, 0.0, 65.0), 70.0), 0.8);
        assert_eq!(power_constraint_reward(&metrics(0.8, 0.0, 72.0), 70.0), 0.0);
        assert_eq!(power_constraint_reward(&metrics(0.6, 0.0, 70.0), 70.0), 0.6);
    }

    #[test]
    fn accuracy_constraint_examples() {
        assert!((accuracy_constraint_from_normalized(0.9, 0.85, 0.3) - 0.7).abs() < 1e-15);
        assert_eq!(accuracy_constraint_from_normalized(0.84, 0.85, 0.3), 0.0);
        assert_eq!(accuracy_constraint_from_normalized(0.85, 0.85, 0.0), 1.0);
        let p = DeviceProfile {
            energy_bounds: (1.0, 5.0),
            ..DeviceProfile::workstation()
        };
        assert_eq!(accuracy_constraint_reward(&metrics(0.85, 1.0, 0.0), 0.85, &p), 1.0);
    }

    #[test]
    fn config_checks_and_serde() {
        assert!(RewardConfig::Mixed { alpha: 1.5 }.check().is_err());
        assert!(RewardConfig::PowerConstraint { power_budget_w: 0.0 }.check().is_err());
        assert!(RewardConfig::AccuracyConstraint { accuracy_threshold: -0.1 }.check().is_err());
        let cfg: RewardConfig =
            serde_json::from_str(r#"{"kind":"power_constraint","power_budget_w":70}"#).unwrap();
        assert_eq!(cfg, RewardConfig::PowerConstraint { power_budget_w: 70.0 });
        assert!(serde_json::from_str::<RewardConfig>(r#"{"kind":"mixed","alpha":0.5,"power_budget_w":1}"#).is_err());
        assert!(cfg.constraint().unwrap().satisfied(&metrics(0.1, 0.0, 70.0)));
    }

    proptest! {
        #[test]
        fn constraint_rewards_zero_when_violated(acc in 0.0f64..1.0, power in 0.0f64..200.0, budget in 1.0f64..200.0, thr in 0.0f64..1.0, e in 0.0f64..2.0) {
            let p = unit_profile();
            let m = metrics(acc, e, power);
            if power > budget {
                prop_assert_eq!(power_constraint_reward(&m, budget), 0.0);
            }
            if acc < thr {
                prop_assert_eq!(accuracy_constraint_reward(&m, thr, &p), 0.0);
            } else {
                let r = accuracy_constraint_reward(&m, thr, &p);
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn mixed_is_affine_and_monotone(alpha in 0.0f64..=1.0, a in 0.0f64..1.0, b in 0.0f64..1.0, e in 0.0f64..1.0, f in 0.0f64..1.0) {
            let p = unit_profile();
            let r = mixed_reward(&metrics(a, e, 0.0), alpha, &p).unwrap();
            prop_assert_eq!(r, alpha * a - (1.0 - alpha) * p.normalize_energy(e).value());
            prop_assert!((-1.0..=1.0).contains(&r));
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(mixed_reward(&metrics(hi, e, 0.0), alpha, &p).unwrap() >= mixed_reward(&metrics(lo, e, 0.0), alpha, &p).unwrap());
            let (elo, ehi) = if e <= f { (e, f) } else { (f, e) };
            prop_assert!(mixed_reward(&metrics(a, ehi, 0.0), alpha, &p).unwrap() <= mixed_reward(&metrics(a, elo, 0.0), alpha, &p).unwrap());
        }
    }
}
