//! Closed-form FLOP counts against an instrumented scalar reference.

mod common;

use common::opcount;
use sparsebench::flops::{flops_ito, flops_mlp, flops_sae, flops_sc_inference, FlopParams, Phase};

fn params(m: usize, n: usize, h: usize, learn: bool) -> FlopParams {
    FlopParams {
        m,
        n,
        hidden: Some(h),
        n_samples: 1,
        batch: 1,
        steps: 1,
        iters: Some(1),
        learn_dictionary: learn,
    }
}

#[test]
fn encoder_inference_counts_match_exactly() {
    for m in 1..=6 {
        for n in 1..=6 {
            for h in [1, 3, 8] {
                let p = params(m, n, h, true);
                assert_eq!(
                    opcount::sae_inference(m, n) as f64,
                    flops_sae(&p, Phase::Inference)
                );
                assert_eq!(
                    opcount::mlp_inference(m, n, h) as f64,
                    flops_mlp(&p, Phase::Inference)
                );
            }
        }
    }
}

#[test]
fn iterative_inference_counts_agree_at_scale() {
    for (m, n) in [(32, 64), (64, 256)] {
        let ratios = [
            opcount::ito(m, n, 1) as f64 / flops_ito(m, n, 1, 1),
            opcount::ito(m, n, 10) as f64 / flops_ito(m, n, 1, 10),
            opcount::sc_inference(m, n, false) as f64 / flops_sc_inference(m, n, 1, false),
        ];
        for r in ratios {
            assert!((0.8..=1.25).contains(&r), "m{m} n{n} ratio {r}");
        }
    }
}
