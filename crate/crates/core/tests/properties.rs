// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;

use cpuf::analysis::{crp_count, hamming_distance};
use cpuf::authenticator::{IntraStats, MatchPolicy};
use cpuf::entropy::sram_golden;
use cpuf::pipeline::Response;
use cpuf::{codec, dram_refresh_pause, forge_device, Environment, MemoryRegion, WrapperPattern};

const SRAM: u64 = 2 << 20;
const DRAM: u64 = 1 << 30;

proptest! {
    #[test]
    fn hamming_distance_is_a_metric(
        (a, b, c) in (1usize..64).prop_flat_map(|n| (
            prop::collection::vec(any::<u8>(), n),
            prop::collection::vec(any::<u8>(), n),
            prop::collection::vec(any::<u8>(), n),
        )),
    ) {
        let ab = hamming_distance(&a, &b).unwrap();
        prop_assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        prop_assert_eq!(ab, hamming_distance(&b, &a).unwrap());
        prop_assert!(ab <= hamming_distance(&a, &c).unwrap() + hamming_distance(&c, &b).unwrap());
    }

    #[test]
    fn crp_count_is_monotone(
        sram_blocks in 1u64..1 << 20,
        dram_blocks in 1u64..1 << 20,
        wrappers in 1u64..4,
        pauses in 1u64..16,
    ) {
        let base = crp_count(sram_blocks * 32, 32, dram_blocks * 64, 64, wrappers, pauses).unwrap();
        let more_sram = crp_count((sram_blocks + 1) * 32, 32, dram_blocks * 64, 64, wrappers, pauses).unwrap();
        let more_dram = crp_count(sram_blocks * 32, 32, (dram_blocks + 1) * 64, 64, wrappers, pauses).unwrap();
        let more_pauses = crp_count(sram_blocks * 32, 32, dram_blocks * 64, 64, wrappers, pauses + 1).unwrap();
        for bigger in [&more_sram, &more_dram, &more_pauses] {
            prop_assert!(bigger.combined > base.combined);
            prop_assert!(bigger.alternative > base.alternative);
        }
        prop_assert_eq!(&base.combined, &(&base.sram_crps * &base.dram_crps));
        if sram_blocks >= 2 && base.dram_crps >= 2u32.into() {
            prop_assert!(base.combined >= base.alternative);
        }
    }

    #[test]
    fn decay_is_monotone_in_pause_and_temperature(
        seed in any::<u64>(),
        block in 1u64..1000,
        p1 in 1.0f64..200.0,
        extra in 0.0f64..200.0,
        t1 in 0.0f64..80.0,
        dt in 0.0f64..20.0,
        wrapper in prop::sample::select(WrapperPattern::ALL.to_vec()),
    ) {
        let d = forge_device(seed, SRAM, DRAM).unwrap();
        let region = MemoryRegion::new(block * 1024, 1024);
        let written: Vec<u8> = (0..1024u32).map(|i| (i.wrapping_mul(2654435761) >> 13) as u8).collect();
        let flipped = |pause: f64, t: f64| -> Vec<u8> {
            let out = dram_refresh_pause(&d, region, &written, wrapper, pause, &Environment::new(t, 0).unwrap()).unwrap();
            out.iter().zip(&written).map(|(o, w)| o ^ w).collect()
        };
        let base = flipped(p1, t1);
        for more in [flipped(p1 + extra, t1), flipped(p1, t1 + dt)] {
            // Every cell that flipped under the milder condition still flips.
            prop_assert!(base.iter().zip(&more).all(|(b, m)| b & !m == 0));
        }
    }

    #[test]
    fn response_round_trip_and_dynamic_threshold(
        id in any::<u64>(),
        bitstream_r in prop::collection::vec(any::<u8>(), 0..256),
        temperature_c in 0.0f64..=100.0,
        noise_seed in any::<u64>(),
        buckets in prop::collection::vec((0.0f64..=100.0, 0.0f64..100.0, 0.0f64..10.0, 0u64..100), 1..4),
    ) {
        let resp = Response { id, bitstream_r };
        let bytes = codec::encode_response(&resp);
        prop_assert_eq!(codec::decode_response(&bytes).unwrap(), resp);

        let env = Environment::new(temperature_c, noise_seed).unwrap();
        let mut buckets: Vec<IntraStats> = buckets
            .into_iter()
            .map(|(t, mean, std, max)| IntraStats { temperature_c: t, mean, std, max })
            .collect();
        buckets.sort_by(|a, b| a.temperature_c.total_cmp(&b.temperature_c));
        buckets.dedup_by(|a, b| a.temperature_c == b.temperature_c);
        let nearest = *buckets
            .iter()
            .min_by(|a, b| (a.temperature_c - temperature_c).abs().total_cmp(&(b.temperature_c - temperature_c).abs()))
            .unwrap();
        let policy = MatchPolicy::dynamic(buckets.clone(), 4.0, 1 << 40).unwrap();
        prop_assert_eq!(policy.mt(&env), (nearest.mean + 4.0 * nearest.std).floor() as u64);
        let worst = buckets.iter().map(|b| (b.mean + 4.0 * b.std).floor() as u64).max().unwrap();
        prop_assert!(MatchPolicy::dynamic(buckets, 4.0, worst).is_err());
    }
}

#[test]
fn truncated_and_padded_encodings_are_rejected() {
    let bytes = codec::encode_response(&Response { id: 7, bitstream_r: vec![1, 2, 3] });
    for cut in 0..bytes.len() {
        assert!(codec::decode_response(&bytes[..cut]).is_err(), "cut {cut}");
    }
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(codec::decode_response(&longer).is_err());
}

#[test]
fn sram_seed_pairs_differ_in_about_half_the_bits() {
    // Two independent devices: start-up bits are independent fair coins, so
    // the HD of a 256-bit block is Binomial(256, 1/2).
    let region = MemoryRegion::new(0, 32);
    let mut sum = 0u64;
    let pairs = 200u64;
    for k in 0..pairs {
        let a = sram_golden(&forge_device(2 * k, SRAM, DRAM).unwrap(), region).unwrap();
        let b = sram_golden(&forge_device(2 * k + 1, SRAM, DRAM).unwrap(), region).unwrap();
        let hd = (a ^ b).count_ones() as u64;
        assert!((hd as i64 - 128).abs() <= 40, "pair {k}: {hd}");
        sum += hd;
    }
    let mean = sum as f64 / pairs as f64;
    assert!((mean - 128.0).abs() <= 25.0 && (mean - 128.0).abs() <= 3.0, "mean {mean}");
}
