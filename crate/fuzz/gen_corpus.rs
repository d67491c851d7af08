//! Regenerates the checked-in seed corpora from known-good encoders.
//! Run from the fuzz directory: `cargo run --bin gen-corpus`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gridfill::dataset::{reshape_to_image, write_folds, FoldAssignment};
use gridfill::masks::{irregular_mask, random_day_mask, write_mask};
use gridfill::models::{save_model, Architecture, ModelBundle};
use gridfill::synth::{generate_fleet, SynthSpec};
use gridfill::tensor::Tensor;
use gridfill::training::{format_config, TrainConfig};

fn corpus_dir(target: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(target);
    std::fs::create_dir_all(&dir).expect("create corpus dir");
    dir
}

fn put(target: &str, name: &str, bytes: &[u8]) {
    std::fs::write(corpus_dir(target).join(name), bytes).expect("write seed");
}

fn main() {
    // gft1_decode: a couple of small valid tensors plus a truncated one.
    let t = Tensor::from_vec(&[2, 3], vec![1.0, -2.5, 0.0, 4.0, 5.5, -6.25]).unwrap();
    put("gft1_decode", "small-2x3", &t.to_bytes());
    let scalar = Tensor::from_vec(&[1], vec![42.0]).unwrap();
    put("gft1_decode", "scalar", &scalar.to_bytes());
    let mut truncated = t.to_bytes();
    truncated.truncate(truncated.len() - 7);
    put("gft1_decode", "truncated", &truncated);

    // csv_ingest: a well-formed two-meter day plus a few malformed rows.
    let mut csv = String::from("timestamp,site_id,meter_id,meter_type,reading\n");
    for h in 0..24 {
        csv.push_str(&format!("2016-01-04T{h:02}:00:00,S01,S01M01,electricity,{}.5\n", h + 10));
        csv.push_str(&format!("2016-01-04T{h:02}:00:00,S01,S01M02,steam,{}\n", h * 2));
    }
    put("csv_ingest", "two-meters", csv.as_bytes());
    put(
        "csv_ingest",
        "rough-edges",
        b"timestamp,site_id,meter_id,meter_type,reading\n\
          2016-01-04T00:00:00,S01,M1,electricity,\n\
          not-a-time,S01,M1,electricity,3\n\
          2016-01-04T01:00:00,S01,M1,plasma,3\n",
    );

    // mask_parse: one of each kind, via the real writer.
    let day_mask = random_day_mask(0.1, 1).unwrap();
    write_mask(&day_mask, &corpus_dir("mask_parse").join("random-days")).unwrap();
    let irr = irregular_mask(2);
    write_mask(&irr, &corpus_dir("mask_parse").join("irregular")).unwrap();

    // config_parse: defaults, overrides, and a commented file.
    put("config_parse", "defaults", format_config(&TrainConfig::default()).as_bytes());
    let mut cfg = TrainConfig::default();
    cfg.ae1d_channels = Some([2, 2, 2]);
    cfg.ae1d_bottleneck = Some(4);
    cfg.max_epochs = 3;
    cfg.patience = 2;
    put("config_parse", "overrides", format_config(&cfg).as_bytes());
    put("config_parse", "commented", b"# tiny run\nmax_epochs 3\npatience 1\n");

    // checkpoint_parse: a tiny untrained ae1d checkpoint.
    let widths = cfg.widths_for(Architecture::Ae1d).unwrap();
    let bundle = ModelBundle::init_with(&widths, 0);
    save_model(&bundle, &corpus_dir("checkpoint_parse").join("tiny-ae1d")).unwrap();

    // image_parse: one real stored image from a one-meter synthetic fleet.
    let spec = SynthSpec { n_sites: 1, meters_per_site: 1, seed: 1, ..SynthSpec::default() };
    let records = generate_fleet(&spec).unwrap();
    let image = reshape_to_image(&records[0]).unwrap();
    gridfill::dataset::write_image(&image, &corpus_dir("image_parse").join("one-meter")).unwrap();

    // folds_parse: a five-site assignment via the real writer.
    let by_site: BTreeMap<String, usize> =
        (0..5).map(|i| (format!("S{i:02}"), i)).collect();
    write_folds(&FoldAssignment { by_site }, &corpus_dir("folds_parse").join("five-sites"))
        .unwrap();

    println!("corpora regenerated under {}", Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").display());
}
