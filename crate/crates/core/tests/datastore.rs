mod common;

use std::path::Path;

use common::{bits, random_stack};
use croptype::datastore::bsf::{decode, encode};
use croptype::datastore::{
    parse_band_combination, read_bandstack, resize_bilinear, select_bands, write_bandstack, BandCombination, BandStack,
    Satellite,
};
use croptype::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn bsf_round_trip_is_bit_exact_on_10000_stacks() {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..10_000 {
        let stack = random_stack(&mut rng);
        let back = if i % 100 == 0 {
            let path = dir.path().join(format!("{i}.bsf"));
            write_bandstack(&stack, &path).unwrap();
            read_bandstack(&path).unwrap()
        } else {
            decode(&encode(&stack).unwrap(), Path::new("mem")).unwrap()
        };
        assert_eq!(bits(&back), bits(&stack), "stack {i}");
        assert_eq!(BandStack { data: vec![], ..back }, BandStack { data: vec![], ..stack }, "stack {i}");
    }
}

#[test]
fn reference_combinations_parse_where_the_sensor_has_the_bands() {
    let table = [
        "R+G+B",
        "G+R+NIR",
        "R+G+B+SWIR1",
        "SWIR1+NIR+B",
        "SWIR2+NIR+B",
        "NIR+SWIR1+SWIR2",
        "U-B+NIR+SWIR1+SWIR2",
        "R+G+B+RED-EDGE2",
        "R+G+B+NIR",
    ];
    for combo in table {
        for sat in Satellite::ALL {
            let spec = sat.spec();
            let tokens = BandCombination::parse(combo).unwrap();
            let supported = tokens.tokens().iter().all(|t| spec.bands.contains(&t.as_str()));
            match parse_band_combination(combo, &spec) {
                Ok((_, idx)) => {
                    assert!(supported, "{combo} on {sat}");
                    let names: Vec<&str> = idx.iter().map(|&i| spec.bands[i]).collect();
                    assert_eq!(names.join("+"), combo);
                }
                Err(Error::UnknownBand { .. }) => assert!(!supported, "{combo} on {sat}"),
                Err(e) => panic!("{combo} on {sat}: {e}"),
            }
        }
    }
    assert!(parse_band_combination("R+G+B+RED-EDGE2", &Satellite::L8.spec()).is_err());
    assert!(parse_band_combination("SWIR1+NIR+B", &Satellite::PS.spec()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn selection_composes_as_index_composition(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = random_stack(&mut rng);
        let mut first = stack.bands.clone();
        first.shuffle(&mut rng);
        first.truncate(rng.gen_range(1..=first.len()));
        let mut second = first.clone();
        second.shuffle(&mut rng);
        second.truncate(rng.gen_range(1..=second.len()));
        let a = BandCombination::new(&first).unwrap();
        let b = BandCombination::new(&second).unwrap();
        let twice = select_bands(&select_bands(&stack, &a).unwrap(), &b).unwrap();
        let once = select_bands(&stack, &b).unwrap();
        prop_assert_eq!(bits(&twice), bits(&once));
        prop_assert_eq!(twice.bands, once.bands);
    }

    #[test]
    fn resize_stays_within_band_bounds(seed in any::<u64>(), th in 1usize..12, tw in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stack = random_stack(&mut rng);
        stack.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let out = resize_bilinear(&stack, th, tw);
        prop_assert_eq!((out.height, out.width), (th, tw));
        for b in 0..stack.bands.len() {
            let src = stack.plane(b);
            let lo = src.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = src.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            for &v in out.plane(b) {
                prop_assert!(v >= lo - 1e-6 && v <= hi + 1e-6, "{} outside [{}, {}]", v, lo, hi);
            }
        }
    }
}
