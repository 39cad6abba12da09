use std::path::PathBuf;

use pum_core::data::{
    generate_synthetic, load_csv, sample_choice, subsample, write_csv, AlternativeColumns, CsvSchema, LoadOptions,
    SubsampleMode, SyntheticSpec,
};
use pum_core::estimators::estimate_fy_nag;
use pum_core::{ChoiceDataset, Perturbation, PumError, SolverConfig};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn shannon() -> Perturbation {
    Perturbation::shannon(1.0).unwrap()
}

#[test]
fn zero_noise_repeats_the_baseline() {
    let spec = SyntheticSpec::new(2, 3, vec![1.0, 2.0, 0.5], shannon(), 4).with_noise(1.0, 0.0);
    let data = generate_synthetic(&spec).unwrap();
    assert_eq!(data.observation(0).x, data.observation(1).x);
    assert!(data.features().iter().all(|x| x.abs() <= 1.0));
}

#[test]
fn generation_is_deterministic_in_the_seed() {
    let spec = SyntheticSpec::new(50, 4, vec![0.3, -1.0], shannon(), 77);
    let a = generate_synthetic(&spec).unwrap();
    assert_eq!(a, generate_synthetic(&spec).unwrap());
    let other = SyntheticSpec { seed: 78, ..spec };
    assert_ne!(a, generate_synthetic(&other).unwrap());
}

#[test]
fn zero_beta_gives_uniform_frequencies() {
    let n = 10_000;
    let data = generate_synthetic(&SyntheticSpec::new(n, 3, vec![0.0; 3], shannon(), 9)).unwrap();
    let band = 3.0 * (1.0 / 3.0 * (2.0 / 3.0) / n as f64).sqrt();
    for i in 0..3 {
        let freq = data.choices().iter().filter(|&&y| y == i).count() as f64 / n as f64;
        assert!((freq - 1.0 / 3.0).abs() <= band, "alternative {i}: {freq}");
    }
}

#[test]
fn large_sample_recovers_beta() {
    let data = generate_synthetic(&SyntheticSpec::new(100_000, 3, vec![1.0, 2.0, 0.5], shannon(), 23)).unwrap();
    let est = estimate_fy_nag(&shannon(), &data, &SolverConfig::default()).unwrap();
    let err: f64 = est.beta.iter().zip([1.0, 2.0, 0.5]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    assert!(err < 0.05, "{:?}", est.beta);
}

#[test]
fn resampled_labels_match_model_probabilities() {
    let n = 100_000;
    for (pert, seed) in
        [(shannon(), 1), (Perturbation::quadratic(2.0).unwrap(), 2), (Perturbation::cauchy(1.0).unwrap(), 3)]
    {
        // Zero noise fixes the feature draw, so every label is a fresh sample
        // from the same distribution.
        let spec = SyntheticSpec::new(n, 3, vec![1.0, 2.0, 0.5], pert.clone(), seed).with_noise(1.0, 0.0);
        let data = generate_synthetic(&spec).unwrap();
        let p = pert.choice_probabilities(&data.observation(0).utilities(&[1.0, 2.0, 0.5])).unwrap();
        for (i, &pi) in p.iter().enumerate() {
            let freq = data.choices().iter().filter(|&&y| y == i).count() as f64 / n as f64;
            let band = 4.0 * (pi * (1.0 - pi) / n as f64).sqrt();
            assert!((freq - pi).abs() <= band, "{:?} alternative {i}: {freq} vs {pi}", pert.family());
        }
    }
}

#[test]
fn inverse_cdf_sampling() {
    assert_eq!(sample_choice(&[0.2, 0.3, 0.5], 0.0), 0);
    assert_eq!(sample_choice(&[0.2, 0.3, 0.5], 0.2), 1);
    assert_eq!(sample_choice(&[0.2, 0.3, 0.5], 0.99), 2);
    // Rounding can leave u above the accumulated mass; the last supported
    // alternative absorbs it.
    assert_eq!(sample_choice(&[0.5, 0.5 - 1e-16, 0.0], 1.0 - 1e-17), 1);
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for with_ids in [false, true] {
        let mut spec = SyntheticSpec::new(200, 4, vec![1.0, -0.5, 0.25], shannon(), 5);
        if with_ids {
            spec = spec.with_ids(9);
        }
        let data = generate_synthetic(&spec).unwrap();
        let path = dir.path().join(format!("round_trip_{with_ids}.csv"));
        write_csv(&data, &path).unwrap();
        let loaded = load_csv(&path, &CsvSchema::generic(4, 3, with_ids), LoadOptions::default()).unwrap();
        assert_eq!(loaded.dropped(), 0);
        let bits = |d: &ChoiceDataset| d.features().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&loaded.data), bits(&data));
        assert_eq!(loaded.data, data);
    }
}

fn availability_schema() -> CsvSchema {
    CsvSchema {
        alternatives: vec![
            AlternativeColumns {
                name: "train".into(),
                code: "train".into(),
                attributes: vec!["train_time".into()],
                availability: None,
            },
            AlternativeColumns {
                name: "car".into(),
                code: "car".into(),
                attributes: vec!["car_time".into()],
                availability: Some("car_av".into()),
            },
        ],
        choice_column: "choice".into(),
        id_column: None,
    }
}

#[test]
fn unavailable_rows_are_filtered() {
    let loaded = load_csv(&fixture("availability.csv"), &availability_schema(), LoadOptions::default()).unwrap();
    assert_eq!(loaded.data.len(), 2);
    assert_eq!(loaded.dropped_unavailable, 1);
    assert_eq!(loaded.data.choices(), &[0, 1]);
    assert_eq!(loaded.data.features(), &[1.5, 2.0, 3.0, 0.5]);
    let kept = load_csv(
        &fixture("availability.csv"),
        &availability_schema(),
        LoadOptions { filter_unavailable: false, standardize: false },
    )
    .unwrap();
    assert_eq!(kept.data.len(), 3);
}

#[test]
fn swissmetro_fixture_loads() {
    let schema = CsvSchema::swissmetro();
    let loaded = load_csv(&fixture("swissmetro_10.csv"), &schema, LoadOptions::default()).unwrap();
    // Rows 4-6 lack a car, row 8 has CHOICE = 0.
    assert_eq!((loaded.data.k(), loaded.data.d()), (3, 5));
    assert_eq!(loaded.data.len(), 6);
    assert_eq!((loaded.dropped_unavailable, loaded.dropped_invalid_choice), (3, 1));
    assert_eq!(loaded.data.ids().unwrap(), &[1, 1, 1, 3, 3, 3]);
    assert_eq!(loaded.data.choices(), &[1, 1, 0, 2, 1, 2]);
    let third = loaded.data.observation(2);
    assert_eq!(third.x, &[1.0, 0.0, 130.0, 48.0, 60.0, 0.0, 0.0, 67.0, 58.0, 30.0, 0.0, 1.0, 117.0, 52.0, 0.0]);

    let all =
        load_csv(&fixture("swissmetro_10.csv"), &schema, LoadOptions { filter_unavailable: false, standardize: false })
            .unwrap();
    assert_eq!(all.data.len(), 9);
    // Fifth surviving row is the GA holder's train choice: no fare on TRAIN or SM.
    let ga = all.data.observation(5);
    assert_eq!(&ga.x[..10], &[1.0, 0.0, 180.0, 0.0, 120.0, 0.0, 0.0, 70.0, 0.0, 10.0]);
    assert_eq!(ga.y, 0);
}

#[test]
fn standardization_is_invertible_on_beta() {
    let schema = CsvSchema::swissmetro();
    let raw = load_csv(&fixture("swissmetro_10.csv"), &schema, LoadOptions::default()).unwrap();
    let std =
        load_csv(&fixture("swissmetro_10.csv"), &schema, LoadOptions { filter_unavailable: true, standardize: true })
            .unwrap();
    let scaler = std.scaler.unwrap();
    let beta_std = [0.3, -0.2, -1.1, 0.7, 0.05];
    let beta_raw = scaler.unscale_beta(&beta_std);
    // Same choice probabilities up to the shift common to all alternatives.
    for n in 0..raw.data.len() {
        let a = raw.data.observation(n).utilities(&beta_raw);
        let b = std.data.observation(n).utilities(&beta_std);
        let pa = shannon().choice_probabilities(&a).unwrap();
        let pb = shannon().choice_probabilities(&b).unwrap();
        for (x, y) in pa.iter().zip(pb.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn missing_column_is_named() {
    let mut schema = CsvSchema::swissmetro();
    schema.alternatives[2].attributes[3] = "CAR_COST".into();
    let err = load_csv(&fixture("swissmetro_10.csv"), &schema, LoadOptions::default()).unwrap_err();
    assert!(matches!(&err, PumError::MissingColumn(c) if c == "CAR_COST"), "{err}");
}

#[test]
fn bad_cell_reports_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "choice,car_av,train_time,car_time\ntrain,1,1.5,2.0\ncar,1,fast,1.0\n").unwrap();
    let err = load_csv(&path, &availability_schema(), LoadOptions::default()).unwrap_err();
    match err {
        PumError::BadCell { row, column, value } => {
            assert_eq!((row, column.as_str(), value.as_str()), (2, "train_time", "fast"));
        }
        other => panic!("unexpected {other}"),
    }
}

fn panel() -> ChoiceDataset {
    generate_synthetic(&SyntheticSpec::new(45, 3, vec![1.0, 2.0, 0.5], shannon(), 8).with_ids(9)).unwrap()
}

#[test]
fn row_subsample_of_full_size_is_a_permutation() {
    let data = panel();
    let sub = subsample(&data, SubsampleMode::Rows(45), 3).unwrap();
    let key = |d: &ChoiceDataset| {
        let mut rows: Vec<(Vec<u64>, usize)> =
            d.iter().map(|o| (o.x.iter().map(|x| x.to_bits()).collect(), o.y)).collect();
        rows.sort();
        rows
    };
    assert_eq!(key(&sub), key(&data));
    assert_ne!(sub, data);
}

#[test]
fn one_decision_maker_keeps_nine_rows() {
    let data = panel();
    let sub = subsample(&data, SubsampleMode::DecisionMakers(1), 11).unwrap();
    assert_eq!(sub.len(), 9);
    let ids = sub.ids().unwrap();
    assert!(ids.iter().all(|&i| i == ids[0]));
    let first = data.ids().unwrap().iter().position(|&i| i == ids[0]).unwrap();
    for n in 0..9 {
        let (a, b) = (sub.observation(n), data.observation(first + n));
        assert_eq!((a.x, a.y), (b.x, b.y));
    }
}

#[test]
fn subsampling_is_deterministic_and_bounded() {
    let data = panel();
    for mode in [SubsampleMode::Rows(12), SubsampleMode::DecisionMakers(3)] {
        let a = subsample(&data, mode, 42).unwrap();
        assert_eq!(a, subsample(&data, mode, 42).unwrap());
        assert_eq!((a.k(), a.d()), (3, 3));
    }
    assert!(subsample(&data, SubsampleMode::Rows(46), 1).is_err());
    assert!(subsample(&data, SubsampleMode::DecisionMakers(6), 1).is_err());
    let anonymous = generate_synthetic(&SyntheticSpec::new(10, 3, vec![1.0], shannon(), 8)).unwrap();
    assert!(subsample(&anonymous, SubsampleMode::DecisionMakers(1), 1).is_err());
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

    #[test]
    fn subsampled_rows_are_rows_of_the_source(n in 1usize..=45, ids in 1usize..=5, seed in proptest::prelude::any::<u64>()) {
        let data = panel();
        for mode in [SubsampleMode::Rows(n), SubsampleMode::DecisionMakers(ids)] {
            let sub = subsample(&data, mode, seed).unwrap();
            proptest::prop_assert_eq!((sub.k(), sub.d()), (data.k(), data.d()));
            for o in sub.iter() {
                proptest::prop_assert!(data.iter().any(|s| s.x == o.x && s.y == o.y));
            }
        }
    }
}
