//! Small end-to-end runs checking pipeline-level invariants that the
//! acceptance gates don't isolate: toggle orthogonality and bundle
//! round-trips.

use keypose::classifier::argmax;
use keypose::pipeline::{load_bundle, run_pipeline, PipelineConfig};
use keypose::pose_data::GrayImage;
use keypose::synth_gen::{generate_dataset, DatasetSpec, Split};

fn small_dataset(dir: &std::path::Path) -> std::path::PathBuf {
    let mut spec = DatasetSpec::new(55);
    spec.sequences_per_class = 4;
    spec.num_frames = 16;
    generate_dataset(&spec, dir).unwrap();
    dir.join("manifest.json")
}

fn small_config(manifest: std::path::PathBuf, out: std::path::PathBuf) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.model_store = out.join("bundle.json");
    config.manifest = manifest;
    config.output_dir = out;
    config.filter.epochs = 8;
    config.cluster.epochs = 20;
    config.classifier.epochs = 6;
    config.seed = 3;
    config
}

#[test]
fn filtering_toggle_does_not_change_key_actor_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(&dir.path().join("data"));

    let mut on = small_config(manifest.clone(), dir.path().join("on"));
    on.ablation.filtering = true;
    run_pipeline(&on).unwrap();

    let mut off = small_config(manifest, dir.path().join("off"));
    off.ablation.filtering = false;
    run_pipeline(&off).unwrap();

    let actors_on = dir.path().join("on/actors");
    let actors_off = dir.path().join("off/actors");
    let mut names: Vec<String> = std::fs::read_dir(&actors_on)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let a = std::fs::read_to_string(actors_on.join(&name)).unwrap();
        let b = std::fs::read_to_string(actors_off.join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs between filtering on/off");
    }
}

#[test]
fn bundle_reload_reproduces_run_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(&dir.path().join("data"));
    let config = small_config(manifest, dir.path().join("out"));
    let report = run_pipeline(&config).unwrap();
    assert!(report.is_self_consistent());

    let bundle = load_bundle(&config.model_store).unwrap();
    let classifier = bundle.classifier.into_model().unwrap();

    // In key-actor mode the sequence prediction is exactly the prediction
    // of its single grid, which the run materialized to disk.
    for prediction in &report.predictions {
        let grid_path = config.output_dir.join("grids").join(format!(
            "{}__{:02}.pgm",
            prediction.sequence_id, prediction.key_actor_id
        ));
        let grid = GrayImage::read_pgm(&grid_path).unwrap();
        let dist = classifier.predict(&grid).unwrap();
        assert_eq!(dist, prediction.distribution);
        assert_eq!(argmax(&dist) as u32, prediction.predicted);
    }

    // The filter model round-trips into a usable state as well.
    let filter = bundle.filter.into_model().unwrap();
    assert!(filter.threshold > 0.0);
    let cluster = bundle.cluster.into_model().unwrap();
    assert_eq!(cluster.k, config.cluster.k);
}

#[test]
fn jump_key_poses_cover_crouch_and_apex_phases() {
    use keypose::dec_cluster::{dec_fit, select_key_poses, DecConfig};
    use keypose::pipeline::{encode_record, rows_to_matrix};
    use keypose::pose_filter::{train_autoencoder, FilterConfig};
    use keypose::synth_gen::{generate_sequence, ActionClass, SynthSpec};

    let mut spec = SynthSpec::new(ActionClass::Jump, 77);
    spec.num_actors = 1;
    let (record, _, truth) = generate_sequence(&spec).unwrap();
    let rows = encode_record(&record, &[truth.key_actor_id], false);
    let vectors: Vec<_> = rows.iter().map(|r| r.vector.clone()).collect();
    let references: Vec<_> = vectors.iter().cloned().cycle().take(96).collect();
    let sae = train_autoencoder(
        &references,
        &FilterConfig { epochs: 150, seed: 2, ..FilterConfig::default() },
    )
    .unwrap();
    let (enc_spec, enc_params) = sae.encoder();
    let matrix = rows_to_matrix(&rows);
    let frames: Vec<u32> = rows.iter().map(|r| r.frame).collect();
    let fit = dec_fit(
        &enc_spec,
        &enc_params,
        &matrix,
        &DecConfig { k: 8, seed: 5, epochs: 60, ..DecConfig::default() },
    )
    .unwrap();
    let picks = select_key_poses(&fit.model, &fit.q, &matrix, &frames).unwrap();
    assert_eq!(picks.len(), 8);

    // Bounce phase from the generator's 16-frame period: 0 = crouched on
    // the ground, 1 = apex. The selected frames must span both extremes.
    let phase = |t: u32| (2.0 * std::f64::consts::PI * t as f64 / 16.0).sin().abs();
    let has_crouch = picks.iter().any(|p| phase(p.frame_index) < 0.35);
    let has_apex = picks.iter().any(|p| phase(p.frame_index) > 0.65);
    let phases: Vec<f64> = picks.iter().map(|p| phase(p.frame_index)).collect();
    assert!(has_crouch && has_apex, "selected phases {phases:?}");
}

#[test]
fn report_counts_match_the_split() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = small_dataset(&dir.path().join("data"));
    let manifest: keypose::synth_gen::Manifest =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    let expected_test = manifest
        .sequences
        .iter()
        .filter(|e| e.split == Split::Test)
        .count();

    let config = small_config(manifest_path, dir.path().join("out"));
    let report = run_pipeline(&config).unwrap();
    assert_eq!(report.predictions.len(), expected_test);
    assert_eq!(report.classes, vec!["wave", "walk", "jump"]);
}
