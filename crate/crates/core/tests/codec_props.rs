mod common;

use proptest::prelude::*;

use common::{random_parameters, random_structure, rng};
use spn_core::codec::simplex::{levels_for_step, quantize_to_levels};
use spn_core::codec::{spn_decode, spn_encode, CodecParams, CompressedMessage, CompressionBudget};
use spn_core::metrics::{similarity, tv_exact};
use spn_core::model::io::StructureSpec;

/// Largest-remainder rounding in exact integer arithmetic for weights
/// `a_i / total`.
fn oracle(a: &[u64], total: u64, levels: u64) -> Vec<u64> {
    let mut idx: Vec<u64> = a.iter().map(|&x| x * levels / total).collect();
    let rem: Vec<u64> = a.iter().map(|&x| x * levels % total).collect();
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| rem[j].cmp(&rem[i]).then(i.cmp(&j)));
    let short = levels - idx.iter().sum::<u64>();
    for &i in order.iter().take(short as usize) {
        idx[i] += 1;
    }
    idx
}

fn dyadic_weights() -> impl Strategy<Value = Vec<u64>> {
    // k parts summing to 1024, so every w·L below is exact in f64
    (1usize..=6).prop_flat_map(|k| {
        prop::collection::vec(0u64..=1024, k - 1).prop_map(move |mut cuts| {
            cuts.sort_unstable();
            let mut parts = Vec::with_capacity(k);
            let mut last = 0;
            for c in cuts.into_iter().chain([1024]) {
                parts.push(c - last);
                last = c;
            }
            parts
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn quantizer_matches_exact_oracle(a in dyadic_weights(), levels in 1u64..=400) {
        let w: Vec<f64> = a.iter().map(|&x| x as f64 / 1024.0).collect();
        let got = quantize_to_levels(&w, levels).unwrap();
        prop_assert_eq!(&got.indices, &oracle(&a, 1024, levels));
        // every coordinate within one step of its input
        for (q, x) in got.values().iter().zip(&w) {
            prop_assert!((q - x).abs() <= 1.0 / levels as f64 + 1e-15);
        }
    }

    #[test]
    fn levels_cover_the_step(step in 0.001f64..=1.0) {
        let l = levels_for_step(step);
        prop_assert!(1.0 / l as f64 <= step + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn round_trip_within_eps(seed in 0u64..1_000_000, eps in 0.05f64..1.0, weak in any::<bool>()) {
        let mut r = rng(seed);
        let n = 1 + (seed % 3) as usize;
        let s = random_structure(&mut r, n, 3);
        let truth = random_parameters(&mut r, &s, 2);
        let params = if weak { CodecParams::weak(eps) } else { CodecParams::strong(eps) };
        let spec = StructureSpec::categorical(s, 2);
        // weak variant refuses negligible leaves
        prop_assume!(!weak || truth.negligible_leaves(eps).is_empty());
        let msg = spn_encode(&truth, &[], &params).unwrap();
        let budget = CompressionBudget::new(&spec, &params).unwrap();
        prop_assert!(msg.bits.len() <= budget.bit_budget());
        let wire = CompressedMessage::from_bytes(&msg.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(&wire, &msg);
        let decoded = spn_decode(&spec, &wire, &params).unwrap();
        prop_assert!(tv_exact(&truth, &decoded).unwrap() <= eps);
        prop_assert!(similarity(&truth, &decoded).is_same_structure);
    }
}
