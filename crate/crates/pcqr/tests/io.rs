use std::fs;

use pcqr::dataset::{read_dataset, read_episode_table, write_dataset, DatasetMeta, EPISODES_FILE};
use pcqr::fsutil::{fmt_f64, parse_f64};
use pcqr::kv::KeyValues;
use pcqr::model_io::{
    decode_model, decode_suite, encode_model, encode_suite, read_suite, write_model, write_suite,
    read_model,
};
use pcqr::settings::{domain_from_kv, domain_to_kv, experiment_from_kv, experiment_to_kv};
use pcqr::Error;
use pcqr_core::eval::ExperimentConfig;
use pcqr_core::forest::ForestConfig;
use pcqr_core::monitor::{build_monitor, fit_timestep};
use pcqr_core::sim::{generate_dataset, DomainConfig, SkirmishConfig, TamariskConfig};
use proptest::prelude::*;

fn small_forest() -> ForestConfig {
    ForestConfig {
        tree_count: 8,
        ..ForestConfig::default()
    }
}

fn domains() -> [DomainConfig; 2] {
    [
        DomainConfig::Tamarisk(TamariskConfig {
            horizon: 12,
            ..TamariskConfig::default()
        }),
        DomainConfig::Skirmish(SkirmishConfig::default()),
    ]
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    for domain in domains() {
        let dir = tempfile::tempdir().unwrap();
        let episodes = generate_dataset(&domain, 40, 17).unwrap();
        let meta = DatasetMeta {
            domain: domain.clone(),
            seed: 17,
            episode_count: 40,
        };
        write_dataset(dir.path(), &episodes, &meta).unwrap();
        let (back, back_meta) = read_dataset(dir.path()).unwrap();
        assert_eq!(back_meta, meta);
        assert_eq!(back.len(), episodes.len());
        for (a, b) in episodes.iter().zip(&back) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.rewards()), bits(b.rewards()));
            assert_eq!(bits(a.cumulative()), bits(b.cumulative()));
            for (x, y) in a.features().iter().zip(b.features()) {
                assert_eq!(bits(x), bits(y));
            }
        }
        let first = fs::read(dir.path().join(EPISODES_FILE)).unwrap();
        let again = tempfile::tempdir().unwrap();
        write_dataset(again.path(), &back, &back_meta).unwrap();
        assert_eq!(first, fs::read(again.path().join(EPISODES_FILE)).unwrap());
    }
}

#[test]
fn model_and_suite_round_trips_are_bit_exact() {
    let domain = &domains()[0];
    let episodes = generate_dataset(domain, 80, 3).unwrap();
    let model = fit_timestep(&episodes, 4, &small_forest()).unwrap();
    let bytes = encode_model(&model);
    let back = decode_model(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(encode_model(&back), bytes);

    let suite = build_monitor(&episodes[..50], &episodes[50..], &small_forest()).unwrap();
    let bytes = encode_suite(&suite);
    let back = decode_suite(&bytes).unwrap();
    assert_eq!(back, suite);
    assert_eq!(encode_suite(&back), bytes);

    let dir = tempfile::tempdir().unwrap();
    write_model(&dir.path().join("m.bin"), &model).unwrap();
    write_suite(&dir.path().join("s.bin"), &suite).unwrap();
    assert_eq!(read_model(&dir.path().join("m.bin")).unwrap(), model);
    assert_eq!(read_suite(&dir.path().join("s.bin")).unwrap(), suite);
}

#[test]
fn corrupt_model_files_are_rejected() {
    let episodes = generate_dataset(&domains()[0], 30, 1).unwrap();
    let model = fit_timestep(&episodes, 0, &small_forest()).unwrap();
    let good = encode_model(&model);
    let format_err = |b: &[u8]| matches!(decode_model(b), Err(Error::Format { .. }));

    assert!(format_err(&good[..good.len() / 2]));
    assert!(format_err(&good[..5]));
    let mut magic = good.clone();
    magic[0] ^= 0xff;
    assert!(format_err(&magic));
    let mut version = good.clone();
    version[8] = 99;
    assert!(format_err(&version));
    let suite = build_monitor(&episodes[..20], &episodes[20..], &small_forest()).unwrap();
    assert!(decode_model(&encode_suite(&suite)).is_err());
    assert!(decode_suite(&good).is_err());
    let missing = tempfile::tempdir().unwrap().path().join("none.bin");
    assert!(matches!(read_model(&missing), Err(Error::Io { .. })));
}

fn table_with(edit: impl Fn(&mut Vec<String>)) -> pcqr::Result<()> {
    let domain = &domains()[1];
    let episodes = generate_dataset(domain, 3, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = DatasetMeta {
        domain: domain.clone(),
        seed: 2,
        episode_count: 3,
    };
    write_dataset(dir.path(), &episodes, &meta).unwrap();
    let path = dir.path().join(EPISODES_FILE);
    let mut lines: Vec<String> = fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    edit(&mut lines);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    read_episode_table(&path).map(|_| ())
}

#[test]
fn malformed_episode_tables_are_rejected() {
    assert!(table_with(|_| {}).is_ok());
    let replace_last = |line: &mut String, value: &str| {
        let cut = line.rfind(',').unwrap();
        line.truncate(cut + 1);
        line.push_str(value);
    };
    assert!(table_with(|l| replace_last(&mut l[3], "12345")).is_err());
    assert!(table_with(|l| replace_last(&mut l[3], "abc")).is_err());
    assert!(table_with(|l| {
        l.remove(4);
    })
    .is_err());
    assert!(table_with(|l| l[0] = l[0].replace("reward", "rwd")).is_err());
    assert!(table_with(|l| l[2].push_str(",1")).is_err());
}

#[test]
fn dataset_metadata_must_match_table() {
    let domain = &domains()[0];
    let episodes = generate_dataset(domain, 5, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = DatasetMeta {
        domain: domain.clone(),
        seed: 4,
        episode_count: 5,
    };
    write_dataset(dir.path(), &episodes, &meta).unwrap();
    let path = dir.path().join("metadata.txt");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replace("episode_count=5", "episode_count=6")).unwrap();
    assert!(read_dataset(dir.path()).is_err());
    fs::write(&path, text.replace("tamarisk.horizon=12", "tamarisk.horizon=13")).unwrap();
    assert!(read_dataset(dir.path()).is_err());
    fs::write(&path, text.replace("schema_version=1", "schema_version=2")).unwrap();
    assert!(read_dataset(dir.path()).is_err());
    fs::remove_file(&path).unwrap();
    assert!(read_dataset(dir.path()).is_err());
}

#[test]
fn settings_round_trip() {
    for domain in domains() {
        assert_eq!(domain_from_kv(&domain_to_kv(&domain)).unwrap(), domain);
    }
    let config = ExperimentConfig {
        partition_seeds: vec![4, 9],
        delta: 0.1,
        ..ExperimentConfig::default()
    };
    let kv = experiment_to_kv(&config);
    assert_eq!(experiment_from_kv(&kv, &ExperimentConfig::default()).unwrap(), config);

    let mut bad = domain_to_kv(&domains()[0]);
    bad.set("tamarisk.budgett", 2);
    assert!(domain_from_kv(&bad).is_err());
}

#[test]
fn key_value_files_reject_duplicates_and_garbage() {
    let origin = std::path::Path::new("inline");
    let kv = KeyValues::parse("# note\na = 1\n\nb=x y\n", origin).unwrap();
    assert_eq!(kv.get("a"), Some("1"));
    assert_eq!(kv.get("b"), Some("x y"));
    assert!(KeyValues::parse("a=1\na=2\n", origin).is_err());
    assert!(KeyValues::parse("novalue\n", origin).is_err());
    assert!(kv.parsed::<u32>("b").is_err());
}

proptest! {
    #[test]
    fn float_text_round_trips(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(!v.is_nan());
        prop_assert_eq!(parse_f64(&fmt_f64(v)).unwrap().to_bits(), v.to_bits());
    }
}
