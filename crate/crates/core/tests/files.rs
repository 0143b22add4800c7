use std::fs;

use featagg::data::synthetic::{generate, SyntheticConfig, SyntheticKind};
use featagg::data::{load_model, read_bags, read_bags_auto, save_model, write_bags, FormatError};
use featagg::trainer::train;
use featagg::{Error, TrainingConfig};

fn small() -> featagg::data::BagContainer {
    generate(&SyntheticConfig {
        dataset: SyntheticKind::Xor,
        bags_per_class: 6,
        features_per_bag: 5,
        ..Default::default()
    })
}

#[test]
fn container_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bags.lfab");
    let c = small();
    write_bags(&c, &path).unwrap();
    assert_eq!(read_bags(&path).unwrap(), c);
}

#[test]
fn csv_and_binary_agree() {
    let dir = tempfile::tempdir().unwrap();
    let c = small();
    let mut text = String::from("bag_id,label,f1,f2\n");
    for bag in &c.bags {
        for row in bag.descriptors.iter_rows() {
            text.push_str(&format!("{},{},{},{}\n", bag.id, bag.label, row[0], row[1]));
        }
    }
    let csv = dir.path().join("bags.csv");
    fs::write(&csv, text).unwrap();
    let from_csv = read_bags_auto(&csv).unwrap();
    assert_eq!(from_csv.bags, c.bags);
    assert_eq!(from_csv.dim, 2);
}

#[test]
fn saved_model_predicts_identically() {
    let dir = tempfile::tempdir().unwrap();
    let c = small();
    let (fit, held_out) = c.bags.split_at(10);
    let cfg = TrainingConfig {
        k: 3,
        epochs: 2,
        ..Default::default()
    };
    let model = train(fit, None, &cfg).unwrap();
    let path = dir.path().join("m.lfam");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    for bag in held_out {
        assert_eq!(model.posterior(bag).unwrap(), loaded.posterior(bag).unwrap());
    }
    assert_eq!(loaded.config, model.config);

    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(
        load_model(&path),
        Err(Error::Format(FormatError::Truncated(_)))
    ));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_bags(dir.path().join("absent.lfab")).unwrap_err();
    assert!(matches!(err, Error::Format(FormatError::Io(_))), "{err}");
}
