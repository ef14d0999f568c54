//! Reference configurations for the three scenarios at N=16, M=8, K=3.
//!
//! Learning rates, step budgets and penalties were chosen by pilot runs on the
//! reference data; each scenario shares one data configuration across methods.

use crate::datagen::{CodeDistribution, GenConfig};
use crate::training::{BatchSize, Method, Scenario, TrainConfig};

pub const REF_SOURCES: usize = 16;
pub const REF_MEASUREMENTS: usize = 8;
pub const REF_ACTIVE: usize = 3;
pub const REF_SAMPLES: usize = 2048;

/// L1 weight used by the reconstruction scenarios.
pub const REF_LAMBDA: f64 = 3e-2;

pub fn reference_data(seed: u64, distribution: CodeDistribution) -> GenConfig {
    GenConfig::new(REF_SOURCES, REF_MEASUREMENTS, REF_ACTIVE, REF_SAMPLES, seed)
        .with_distribution(distribution)
}

/// Methods compared in each scenario.
pub fn reference_methods(scenario: Scenario) -> Vec<Method> {
    match scenario {
        Scenario::KnownCodes => vec![Method::Sae, Method::Mlp { hidden: 1024 }],
        Scenario::KnownDictionary => vec![
            Method::Sae,
            Method::Mlp { hidden: 32 },
            Method::Mlp { hidden: 256 },
            Method::SaeIto,
        ],
        Scenario::UnknownBoth => vec![
            Method::Sae,
            Method::Mlp { hidden: 256 },
            Method::SparseCoding,
            Method::SaeIto,
        ],
    }
}

/// Training configuration for `method` under `scenario`.
///
/// * known codes: 5,000 steps, batch 256, dead outputs resampled every 500
///   steps; SAE lr 3e-4, MLP lr 1e-5.
/// * known dictionary: 10,000 steps, batch 256, lr 1e-4.
/// * unknown both: 20,000 full-batch steps, lr 3e-3, sparse-coding codes at lr 1e-2.
pub fn protocol(scenario: Scenario, method: Method) -> TrainConfig {
    let base = TrainConfig::new(scenario, method).with_lambda(REF_LAMBDA);
    match scenario {
        Scenario::KnownCodes => TrainConfig {
            steps: 5_000,
            eval_every: 500,
            batch: BatchSize::Size(256),
            resample_every: Some(500),
            lr: match method {
                Method::Mlp { .. } => 1e-5,
                _ => 3e-4,
            },
            ..base
        },
        Scenario::KnownDictionary => TrainConfig {
            steps: 10_000,
            eval_every: 1_000,
            batch: BatchSize::Size(256),
            lr: 1e-4,
            ..base
        },
        Scenario::UnknownBoth => TrainConfig {
            steps: 20_000,
            eval_every: 1_000,
            lr: 3e-3,
            code_lr: Some(1e-2),
            ..base
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocols_are_valid() {
        for scenario in Scenario::ALL {
            for method in reference_methods(scenario) {
                protocol(scenario, method).validate().unwrap();
            }
        }
        reference_data(0, CodeDistribution::Uniform)
            .validate()
            .unwrap();
    }
}
