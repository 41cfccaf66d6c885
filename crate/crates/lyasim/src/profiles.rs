//! DNN model profiles and partition-point cost views.
//!
//! A profile describes one model with K candidate partition layers through
//! cumulative compute fractions c(0..=K) and feature-size ratios d(0..=K):
//!
//! * c(k): fraction of the model's multiply-accumulate work done by layers
//!   1..k, with c(0) = 0, c(K) = 1, strictly increasing;
//! * d(k): bits leaving layer k as a ratio of the input size, with
//!   d(0) = 1, d(K) = 0, d(k) >= 0 (intermediate feature maps may exceed
//!   the input, so d(k) > 1 is legal).
//!
//! Splitting at layer k costs `c(k) * C * rho` device CPU cycles,
//! `d(k) * D` uplink bits and `(1 - c(k)) * C * rho` edge CPU cycles,
//! where C is total MACs, D input bits and rho cycles per MAC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("failed to read profile file: {0}")]
    Io(#[from] std::io::Error),
    #[error("profile file is not valid JSON: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("profile {model}: {rule} at k={index}")]
    Invalid {
        model: String,
        rule: String,
        index: usize,
    },
    #[error("profile {model}: {rule}")]
    InvalidScalar { model: String, rule: String },
    #[error("partition point {k} out of range 0..={max}")]
    PartitionOutOfRange { k: usize, max: usize },
}

/// Stage workloads implied by one partition choice: local cycles to run
/// layers 1..k, bits to uplink layer k's features, edge cycles for the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionCosts {
    pub local_cycles: f64,
    pub transfer_bits: f64,
    pub edge_cycles: f64,
}

/// Per-layer cost profile of one DNN model. `compute_fraction` and
/// `feature_ratio` both have K+1 entries; K is implied by their length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DnnProfile {
    pub model_name: String,
    /// Total multiply-accumulate operations of the full model.
    pub total_macs: f64,
    /// Size of one task's raw input in bits.
    pub input_bits: f64,
    /// Cumulative compute fraction c(0..=K).
    pub compute_fraction: Vec<f64>,
    /// Feature-map size ratio d(0..=K).
    pub feature_ratio: Vec<f64>,
}

impl DnnProfile {
    /// Number of candidate partition layers K.
    #[must_use]
    pub fn num_layers(&self) -> usize {
        self.compute_fraction.len().saturating_sub(1)
    }

    /// Checks every profile rule; boundary values are compared exactly, as
    /// parsed, with no tolerance.
    pub fn validate(&self) -> Result<(), ProfileError> {
        let invalid_scalar = |rule: &str| ProfileError::InvalidScalar {
            model: self.model_name.clone(),
            rule: rule.to_string(),
        };
        if !(self.total_macs.is_finite() && self.total_macs > 0.0) {
            return Err(invalid_scalar("total_macs must be finite and > 0"));
        }
        if !(self.input_bits.is_finite() && self.input_bits > 0.0) {
            return Err(invalid_scalar("input_bits must be finite and > 0"));
        }
        if self.compute_fraction.len() != self.feature_ratio.len() {
            return Err(invalid_scalar(
                "compute_fraction and feature_ratio must have equal length",
            ));
        }
        if self.compute_fraction.len() < 2 {
            return Err(invalid_scalar("profile needs at least K=1 (two entries)"));
        }
        let invalid = |rule: &str, index: usize| ProfileError::Invalid {
            model: self.model_name.clone(),
            rule: rule.to_string(),
            index,
        };
        let k_last = self.num_layers();
        let c = &self.compute_fraction;
        let d = &self.feature_ratio;
        for (k, &v) in c.iter().enumerate() {
            if !v.is_finite() {
                return Err(invalid("compute_fraction must be finite", k));
            }
        }
        for (k, &v) in d.iter().enumerate() {
            if !v.is_finite() {
                return Err(invalid("feature_ratio must be finite", k));
            }
        }
        if c[0] != 0.0 {
            return Err(invalid("compute_fraction must start at 0", 0));
        }
        if c[k_last] != 1.0 {
            return Err(invalid("compute_fraction must end at 1", k_last));
        }
        for k in 1..=k_last {
            if c[k] <= c[k - 1] {
                return Err(invalid("compute_fraction must be strictly increasing", k));
            }
        }
        if d[0] != 1.0 {
            return Err(invalid("feature_ratio must start at 1", 0));
        }
        if d[k_last] != 0.0 {
            return Err(invalid("feature_ratio must end at 0", k_last));
        }
        for k in 0..=k_last {
            if d[k] < 0.0 {
                return Err(invalid("feature_ratio must be nonnegative", k));
            }
        }
        Ok(())
    }

    /// Stage workloads for partition point `k` at `rho` cycles per MAC.
    pub fn partition_view(&self, k: usize, rho: f64) -> Result<PartitionCosts, ProfileError> {
        let max = self.num_layers();
        if k > max {
            return Err(ProfileError::PartitionOutOfRange { k, max });
        }
        let total_cycles = self.total_macs * rho;
        Ok(PartitionCosts {
            local_cycles: self.compute_fraction[k] * total_cycles,
            transfer_bits: self.feature_ratio[k] * self.input_bits,
            edge_cycles: (1.0 - self.compute_fraction[k]) * total_cycles,
        })
    }
}

/// Loads and validates a JSON array of profiles.
pub fn load_profiles(path: impl AsRef<Path>) -> Result<Vec<DnnProfile>, ProfileError> {
    let text = std::fs::read_to_string(path)?;
    parse_profiles(&text)
}

/// Parses and validates a JSON array of profiles from a string.
pub fn parse_profiles(text: &str) -> Result<Vec<DnnProfile>, ProfileError> {
    let profiles: Vec<DnnProfile> = serde_json::from_str(text)?;
    for p in &profiles {
        p.validate()?;
    }
    Ok(profiles)
}

/// Serializes profiles to pretty JSON (the same schema `load_profiles`
/// reads back).
pub fn profiles_to_json(profiles: &[DnnProfile]) -> String {
    serde_json::to_string_pretty(profiles).expect("profile serialization cannot fail")
}

/// Deterministic synthetic profile generator for tests and fixtures.
///
/// Compute fractions come from normalized random positive gaps, so they
/// are strictly increasing with exact 0 and 1 endpoints; feature ratios
/// follow a rise-then-decay curve with d(0) = 1, d(K) = 0.
#[must_use]
pub fn synth_profile(num_layers: usize, seed: u64) -> DnnProfile {
    let k_last = num_layers.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let gaps: Vec<f64> = (0..k_last).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = gaps.iter().sum();
    let mut cum = 0.0;
    let mut compute_fraction = Vec::with_capacity(k_last + 1);
    compute_fraction.push(0.0);
    for g in &gaps {
        cum += g;
        compute_fraction.push(cum / total);
    }
    let last = compute_fraction.len() - 1;
    compute_fraction[last] = 1.0;

    // Feature maps first widen (ratio above 1) then shrink toward the
    // compact task output.
    let peak = rng.gen_range(1.05..1.6);
    let decay = rng.gen_range(1.5..3.0);
    let mut feature_ratio = Vec::with_capacity(k_last + 1);
    for k in 0..=k_last {
        if k == 0 {
            feature_ratio.push(1.0);
        } else if k == k_last {
            feature_ratio.push(0.0);
        } else {
            let x = k as f64 / k_last as f64;
            let rise = 1.0 + (peak - 1.0) * (x * std::f64::consts::PI).sin();
            let fall = (1.0 - x).powf(decay);
            feature_ratio.push((rise * fall).max(0.0));
        }
    }

    DnnProfile {
        model_name: format!("synth_{seed}_{k_last}"),
        total_macs: rng.gen_range(5e7..5e8),
        input_bits: rng.gen_range(2e4..2e5),
        compute_fraction,
        feature_ratio,
    }
}

/// Two hand-written K=10 profiles shipped as the default workload mix: a
/// compute-heavy vision backbone with a small input, and a lighter audio
/// encoder with a larger input stream.
#[must_use]
pub fn builtin_profiles() -> Vec<DnnProfile> {
    vec![
        DnnProfile {
            model_name: "vision_backbone".to_string(),
            total_macs: 2.0e8,
            input_bits: 6.0e4,
            compute_fraction: vec![
                0.0, 0.06, 0.14, 0.24, 0.36, 0.50, 0.64, 0.76, 0.86, 0.94, 1.0,
            ],
            feature_ratio: vec![
                1.0, 1.35, 1.10, 0.82, 0.58, 0.38, 0.24, 0.14, 0.07, 0.025, 0.0,
            ],
        },
        DnnProfile {
            model_name: "audio_encoder".to_string(),
            total_macs: 1.2e8,
            input_bits: 1.0e5,
            compute_fraction: vec![
                0.0, 0.08, 0.18, 0.30, 0.44, 0.58, 0.71, 0.82, 0.90, 0.96, 1.0,
            ],
            feature_ratio: vec![
                1.0, 1.20, 0.90, 0.65, 0.45, 0.30, 0.19, 0.11, 0.05, 0.015, 0.0,
            ],
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_profile() -> DnnProfile {
        DnnProfile {
            model_name: "tiny".to_string(),
            total_macs: 1.0e9,
            input_bits: 8.0e5,
            compute_fraction: vec![0.0, 0.3, 1.0],
            feature_ratio: vec![1.0, 0.5, 0.0],
        }
    }

    #[test]
    fn minimal_valid_profile_loads() {
        let text = r#"[{
            "model_name": "tiny",
            "total_macs": 1e9,
            "input_bits": 8e5,
            "compute_fraction": [0.0, 0.3, 1.0],
            "feature_ratio": [1.0, 0.5, 0.0]
        }]"#;
        let profiles = parse_profiles(text).unwrap();
        assert_eq!(profiles.len(), 1);
        assert_eq!(profiles[0].num_layers(), 2);
        assert_eq!(profiles[0], small_profile());
    }

    #[test]
    fn non_increasing_compute_fraction_names_index() {
        let mut p = small_profile();
        p.compute_fraction = vec![0.0, 0.5, 0.4, 1.0];
        p.feature_ratio = vec![1.0, 0.6, 0.3, 0.0];
        let err = p.validate().unwrap_err();
        match err {
            ProfileError::Invalid { index, ref rule, .. } => {
                assert_eq!(index, 2);
                assert!(rule.contains("strictly increasing"), "rule: {rule}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn feature_ratio_above_one_is_valid() {
        let mut p = small_profile();
        p.compute_fraction = vec![0.0, 0.3, 0.6, 1.0];
        p.feature_ratio = vec![1.0, 1.4, 0.5, 0.0];
        p.validate().unwrap();
    }

    #[test]
    fn unknown_profile_key_is_rejected() {
        let text = r#"[{
            "model_name": "tiny",
            "total_macs": 1e9,
            "input_bits": 8e5,
            "compute_fraction": [0.0, 1.0],
            "feature_ratio": [1.0, 0.0],
            "flops": 12
        }]"#;
        assert!(matches!(
            parse_profiles(text).unwrap_err(),
            ProfileError::Schema(_)
        ));
    }

    #[test]
    fn partition_view_boundaries_and_interior() {
        // C = 1e9 MACs, rho = 0.12, D = 8e5 bits, c = [0, .3, 1], d = [1, .5, 0].
        let p = small_profile();
        let v0 = p.partition_view(0, 0.12).unwrap();
        assert_eq!(v0.local_cycles, 0.0);
        assert_eq!(v0.transfer_bits, 8.0e5);
        assert!((v0.edge_cycles - 1.2e8).abs() < 1e-3);

        let v2 = p.partition_view(2, 0.12).unwrap();
        assert!((v2.local_cycles - 1.2e8).abs() < 1e-3);
        assert_eq!(v2.transfer_bits, 0.0);
        assert_eq!(v2.edge_cycles, 0.0);

        let v1 = p.partition_view(1, 0.12).unwrap();
        assert!((v1.local_cycles - 3.6e7).abs() < 1e-3);
        assert!((v1.transfer_bits - 4.0e5).abs() < 1e-9);
        assert!((v1.edge_cycles - 8.4e7).abs() < 1e-3);
    }

    #[test]
    fn partition_view_rejects_out_of_range() {
        let p = small_profile();
        assert!(matches!(
            p.partition_view(3, 0.12).unwrap_err(),
            ProfileError::PartitionOutOfRange { k: 3, max: 2 }
        ));
    }

    #[test]
    fn synth_profile_is_valid_and_deterministic() {
        for seed in 0..20 {
            let p = synth_profile(8, seed);
            p.validate().unwrap();
            assert_eq!(p.num_layers(), 8);
            let q = synth_profile(8, seed);
            assert_eq!(p, q);
        }
    }

    #[test]
    fn synth_profile_forces_at_least_one_layer() {
        let p = synth_profile(0, 7);
        p.validate().unwrap();
        assert_eq!(p.num_layers(), 1);
    }

    #[test]
    fn builtin_profiles_are_valid() {
        let ps = builtin_profiles();
        assert_eq!(ps.len(), 2);
        for p in &ps {
            p.validate().unwrap();
            assert_eq!(p.num_layers(), 10);
        }
    }

    #[test]
    fn json_round_trip_preserves_profiles() {
        let ps = builtin_profiles();
        let text = profiles_to_json(&ps);
        let back = parse_profiles(&text).unwrap();
        assert_eq!(ps, back);
    }

    proptest! {
        #[test]
        fn partition_cycles_always_sum_to_total(seed in 0u64..500, k_last in 1usize..12) {
            let p = synth_profile(k_last, seed);
            let rho = 0.12;
            let total = p.total_macs * rho;
            for k in 0..=p.num_layers() {
                let v = p.partition_view(k, rho).unwrap();
                let sum = v.local_cycles + v.edge_cycles;
                prop_assert!((sum - total).abs() <= 1e-12 * total);
                prop_assert!(v.local_cycles >= 0.0 && v.edge_cycles >= 0.0);
                prop_assert!(v.transfer_bits >= 0.0);
            }
        }

        #[test]
        fn local_cycles_increase_with_k(seed in 0u64..200) {
            let p = synth_profile(6, seed);
            let mut prev = -1.0;
            for k in 0..=p.num_layers() {
                let v = p.partition_view(k, 0.12).unwrap();
                prop_assert!(v.local_cycles > prev);
                prev = v.local_cycles;
            }
        }
    }
}
