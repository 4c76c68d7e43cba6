//! Command-line pipeline for key-pose action recognition.
//!
//! Each stage is its own subcommand operating on files, so any part of the
//! pipeline can be run and inspected in isolation; `run` and `ablate`
//! orchestrate everything end to end.
//!
//! Exit codes: 0 success, 1 data error, 2 config error, 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use keypose::classifier::{argmax, average_precision, train_classifier, ClassifierConfig};
use keypose::dec_cluster::{dec_fit, kmeans, select_key_poses, ClusterModelDoc, DecConfig};
use keypose::grid_builder::{build_grid, draw_joint_markers, extract_tile, GridLayout, Tile};
use keypose::pipeline::{
    encode_record, identify_actor, read_vector_table, rows_to_matrix, run_ablation, run_pipeline,
    write_vector_table, GridSidecar, PipelineConfig, PipelineError,
};
use keypose::pose_data::{load_frames, parse_pose_tracks, validate_sequence, GrayImage};
use keypose::pose_filter::{train_autoencoder, FilterConfig, FilterModelDoc};
use keypose::synth_gen::{generate_dataset, ActionClass, DatasetSpec};

#[derive(Parser)]
#[command(name = "keypose", version, about = "Key-pose action recognition pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset with ground-truth key actors
    Synth(SynthArgs),
    /// Check a sequence document (and optionally its frames) for violations
    Validate(ValidateArgs),
    /// Identify the key actor of a sequence by motion score
    IdentifyActor(IdentifyActorArgs),
    /// Encode a sequence's poses into a feature-vector table (CSV)
    Encode(EncodeArgs),
    /// Train the pose-filter autoencoder on reference vectors
    TrainFilter(TrainFilterArgs),
    /// Split pose vectors into kept/discarded by reconstruction error
    Filter(FilterArgs),
    /// Cluster pose vectors in latent space and select key poses
    Cluster(ClusterArgs),
    /// Crop key-pose regions from frames and assemble an action grid
    BuildGrids(BuildGridsArgs),
    /// Train the grid classifier
    TrainClassifier(TrainClassifierArgs),
    /// Predict the class distribution of one grid image
    Predict(PredictArgs),
    /// Evaluate a classifier over a directory of labeled grids
    Eval(EvalArgs),
    /// Run the full pipeline over a dataset manifest
    Run(RunArgs),
    /// Run the component-toggle ladder and report each step's precision
    Ablate(RunArgs),
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn data(message: impl ToString) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn config(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }

    fn internal(message: impl ToString) -> Self {
        Self {
            code: 3,
            message: message.to_string(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

impl From<keypose::synth_gen::SynthError> for CliError {
    fn from(e: keypose::synth_gen::SynthError) -> Self {
        use keypose::synth_gen::SynthError::*;
        match &e {
            InvalidSpec(_) => CliError::config(e),
            Geometry(_) => CliError::data(e),
            Io(_) => CliError::internal(e),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_string(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::internal(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

fn load_record(path: &Path) -> Result<keypose::pose_data::SequenceRecord, CliError> {
    parse_pose_tracks(&read_to_string(path)?).map_err(CliError::data)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Validate(args) => cmd_validate(args),
        Command::IdentifyActor(args) => cmd_identify_actor(args),
        Command::Encode(args) => cmd_encode(args),
        Command::TrainFilter(args) => cmd_train_filter(args),
        Command::Filter(args) => cmd_filter(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::BuildGrids(args) => cmd_build_grids(args),
        Command::TrainClassifier(args) => cmd_train_classifier(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Run(args) => cmd_run(args, false),
        Command::Ablate(args) => cmd_run(args, true),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated class names (subset of wave,walk,jump)
    #[arg(long, default_value = "wave,walk,jump")]
    classes: String,
    #[arg(long, default_value_t = 40)]
    per_class: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    actors: u32,
    #[arg(long, default_value_t = 32)]
    frames: u32,
    #[arg(long, default_value_t = 192)]
    width: u32,
    #[arg(long, default_value_t = 160)]
    height: u32,
    #[arg(long, default_value_t = 2.5)]
    motion_ratio: f64,
    #[arg(long, default_value_t = 0.5)]
    noise_std: f64,
    /// Probability that a stored pose is joint-shuffled
    #[arg(long, default_value_t = 0.0)]
    corrupt_prob: f64,
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let classes: Vec<ActionClass> = args
        .classes
        .split(',')
        .map(|name| {
            ActionClass::ALL
                .iter()
                .find(|c| c.name() == name.trim())
                .copied()
                .ok_or_else(|| CliError::config(format!("unknown class '{name}'")))
        })
        .collect::<Result<_, _>>()?;
    let spec = DatasetSpec {
        classes,
        sequences_per_class: args.per_class,
        num_actors: args.actors,
        num_frames: args.frames,
        width: args.width,
        height: args.height,
        motion_ratio: args.motion_ratio,
        noise_std: args.noise_std,
        corrupt_prob: args.corrupt_prob,
        seed: args.seed,
    };
    let manifest = generate_dataset(&spec, &args.out)?;
    let train = manifest
        .sequences
        .iter()
        .filter(|e| e.split == keypose::synth_gen::Split::Train)
        .count();
    println!(
        "wrote {} sequences ({} train / {} test) to {}",
        manifest.sequences.len(),
        train,
        manifest.sequences.len() - train,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    sequence: PathBuf,
    /// Frame directory to cross-check geometry against
    #[arg(long)]
    frames: Option<PathBuf>,
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let record = load_record(&args.sequence)?;
    let store = match &args.frames {
        Some(dir) => Some(load_frames(dir).map_err(CliError::data)?),
        None => None,
    };
    let violations = validate_sequence(&record, store.as_ref());
    if violations.is_empty() {
        println!("{}: ok", record.sequence_id);
        return Ok(());
    }
    let mut fatal = false;
    for v in &violations {
        println!(
            "{}: {} {v}",
            record.sequence_id,
            if v.is_fatal() { "fatal:" } else { "warning:" }
        );
        fatal |= v.is_fatal();
    }
    if fatal {
        return Err(CliError::data(format!(
            "{} violation(s), at least one fatal",
            violations.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// identify-actor / encode
// ---------------------------------------------------------------------------

#[derive(Args)]
struct IdentifyActorArgs {
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    score_threshold: f64,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_identify_actor(args: IdentifyActorArgs) -> Result<(), CliError> {
    let record = load_record(&args.sequence)?;
    let report = identify_actor(&record, args.score_threshold)?;
    let text = serde_json::to_string_pretty(&report).unwrap();
    match args.out {
        Some(path) => write_string(&path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Encode normalized Cartesian offsets instead of polar coordinates
    #[arg(long, default_value_t = false)]
    cartesian: bool,
    /// Restrict to one track id (default: every track)
    #[arg(long)]
    track: Option<u32>,
}

fn cmd_encode(args: EncodeArgs) -> Result<(), CliError> {
    let record = load_record(&args.sequence)?;
    let track_ids: Vec<u32> = match args.track {
        Some(id) => {
            if record.track(id).is_none() {
                return Err(CliError::data(format!("no track {id} in sequence")));
            }
            vec![id]
        }
        None => record.tracks.iter().map(|t| t.track_id).collect(),
    };
    let rows = encode_record(&record, &track_ids, args.cartesian);
    write_vector_table(&args.out, &rows)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train-filter / filter
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrainFilterArgs {
    /// Reference vector tables (CSV); may repeat
    #[arg(long, required = true)]
    vectors: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 150)]
    epochs: u32,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Threshold multiplier in tau = mean + k * std
    #[arg(long, default_value_t = 2.0)]
    k: f64,
}

fn cmd_train_filter(args: TrainFilterArgs) -> Result<(), CliError> {
    let mut references = Vec::new();
    for path in &args.vectors {
        references.extend(read_vector_table(path)?.into_iter().map(|r| r.vector));
    }
    let config = FilterConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch,
        seed: args.seed,
        threshold_multiplier: args.k,
    };
    let model = train_autoencoder(&references, &config).map_err(CliError::data)?;
    write_string(&args.out, &serde_json::to_string(&model.to_doc()).unwrap())?;
    println!(
        "trained on {} references: error mean {:.6}, std {:.6}, threshold {:.6}",
        references.len(),
        model.error_mean,
        model.error_std,
        model.threshold
    );
    Ok(())
}

#[derive(Args)]
struct FilterArgs {
    /// Filter model document from train-filter
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vectors: PathBuf,
    /// Write the kept/discarded partition here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_filter(args: FilterArgs) -> Result<(), CliError> {
    let doc: FilterModelDoc =
        serde_json::from_str(&read_to_string(&args.model)?).map_err(CliError::data)?;
    let model = doc.into_model().map_err(CliError::data)?;
    let rows = read_vector_table(&args.vectors)?;
    let vectors: Vec<_> = rows.iter().map(|r| r.vector.clone()).collect();
    let (kept, discarded) = model.filter_poses(&vectors);

    #[derive(serde::Serialize)]
    struct Entry {
        row: usize,
        track_id: u32,
        frame: u32,
    }
    #[derive(serde::Serialize)]
    struct Decisions {
        threshold: f64,
        kept: Vec<Entry>,
        discarded: Vec<Entry>,
    }
    let entry = |i: &usize| Entry {
        row: *i,
        track_id: rows[*i].track_id,
        frame: rows[*i].frame,
    };
    let decisions = Decisions {
        threshold: model.threshold,
        kept: kept.iter().map(entry).collect(),
        discarded: discarded.iter().map(entry).collect(),
    };
    let text = serde_json::to_string_pretty(&decisions).unwrap();
    match args.out {
        Some(path) => write_string(&path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cluster
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ClusterArgs {
    /// Filter model document providing the pretrained encoder
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 80)]
    epochs: u32,
    #[arg(long, default_value_t = 1)]
    update_interval: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Sweep cluster counts (e.g. 2..12) comparing k-means inertia and the
    /// self-trained objective instead of fitting once
    #[arg(long)]
    sweep: Option<String>,
}

fn cmd_cluster(args: ClusterArgs) -> Result<(), CliError> {
    let doc: FilterModelDoc =
        serde_json::from_str(&read_to_string(&args.model)?).map_err(CliError::data)?;
    let filter = doc.into_model().map_err(CliError::data)?;
    let (enc_spec, enc_params) = filter.encoder();
    let rows = read_vector_table(&args.vectors)?;
    if rows.is_empty() {
        return Err(CliError::data("empty vector table"));
    }
    let matrix = rows_to_matrix(&rows);
    let frames: Vec<u32> = rows.iter().map(|r| r.frame).collect();

    if let Some(range) = &args.sweep {
        let (lo, hi) = range
            .split_once("..")
            .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
            .ok_or_else(|| CliError::config(format!("bad sweep range '{range}'")))?;
        #[derive(serde::Serialize)]
        struct SweepRow {
            k: usize,
            kmeans_inertia: f64,
            dec_initial_kl: f64,
            dec_final_kl: f64,
        }
        let latents = keypose::neural_core::forward(&enc_spec, &enc_params, &matrix)
            .map_err(CliError::data)?;
        let mut table = Vec::new();
        for k in lo..=hi.min(rows.len()) {
            let km = kmeans(&latents, k, args.seed, 4).map_err(CliError::data)?;
            let config = DecConfig {
                k,
                seed: args.seed,
                epochs: args.epochs,
                update_interval: args.update_interval,
                ..DecConfig::default()
            };
            let fit = dec_fit(&enc_spec, &enc_params, &matrix, &config).map_err(CliError::data)?;
            let row = SweepRow {
                k,
                kmeans_inertia: km.inertia,
                dec_initial_kl: *fit.update_losses.first().unwrap(),
                dec_final_kl: *fit.update_losses.last().unwrap(),
            };
            println!(
                "k={k}: kmeans inertia {:.4}, KL {:.6} -> {:.6}",
                row.kmeans_inertia, row.dec_initial_kl, row.dec_final_kl
            );
            table.push(row);
        }
        write_string(&args.out, &serde_json::to_string_pretty(&table).unwrap())?;
        return Ok(());
    }

    let config = DecConfig {
        k: args.k,
        seed: args.seed,
        epochs: args.epochs,
        update_interval: args.update_interval,
        ..DecConfig::default()
    };
    let fit = dec_fit(&enc_spec, &enc_params, &matrix, &config).map_err(CliError::data)?;
    let picks = select_key_poses(&fit.model, &fit.q, &matrix, &frames).map_err(CliError::data)?;

    #[derive(serde::Serialize)]
    struct KeyPoseEntry {
        cluster: usize,
        track_id: u32,
        frame: u32,
        row: usize,
    }
    #[derive(serde::Serialize)]
    struct ClusterOut {
        cluster: ClusterModelDoc,
        initial_kl: f64,
        final_kl: f64,
        key_poses: Vec<KeyPoseEntry>,
    }
    let out = ClusterOut {
        cluster: ClusterModelDoc::new(&fit.model),
        initial_kl: *fit.update_losses.first().unwrap(),
        final_kl: *fit.update_losses.last().unwrap(),
        key_poses: picks
            .iter()
            .map(|p| KeyPoseEntry {
                cluster: p.cluster,
                track_id: rows[p.index].track_id,
                frame: p.frame_index,
                row: p.index,
            })
            .collect(),
    };
    write_string(&args.out, &serde_json::to_string(&out).unwrap())?;
    println!(
        "selected {} key poses at frames {:?}",
        out.key_poses.len(),
        out.key_poses.iter().map(|p| p.frame).collect::<Vec<_>>()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// build-grids
// ---------------------------------------------------------------------------

#[derive(Args)]
struct BuildGridsArgs {
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    /// Cluster output document naming the key poses
    #[arg(long)]
    keyposes: PathBuf,
    /// Output grid image (PGM); the sidecar lands next to it as .json
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 112)]
    tile_size: u32,
    #[arg(long, default_value_t = 2)]
    rows: u32,
    #[arg(long, default_value_t = 4)]
    cols: u32,
    #[arg(long, default_value_t = 3)]
    border: u32,
    /// Stamp joint markers into each tile
    #[arg(long, default_value_t = false)]
    overlay_joints: bool,
}

fn cmd_build_grids(args: BuildGridsArgs) -> Result<(), CliError> {
    let record = load_record(&args.sequence)?;
    let store = load_frames(&args.frames).map_err(CliError::data)?;
    let keyposes: serde_json::Value =
        serde_json::from_str(&read_to_string(&args.keyposes)?).map_err(CliError::data)?;
    let entries = keyposes
        .get("key_poses")
        .and_then(|v| v.as_array())
        .ok_or_else(|| CliError::data("keyposes document lacks key_poses"))?;
    let layout = GridLayout {
        rows: args.rows,
        cols: args.cols,
        tile_size: args.tile_size,
        border: args.border,
    };
    let mut tiles: Vec<Tile> = Vec::new();
    let mut key_actor = 0u32;
    for e in entries {
        let track_id = e.get("track_id").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        let frame = e
            .get("frame")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| CliError::data("key pose entry lacks frame"))? as u32;
        key_actor = track_id;
        let pose = record.pose(track_id, frame).ok_or_else(|| {
            CliError::data(format!("no pose for track {track_id} frame {frame}"))
        })?;
        let image = store
            .frame(frame)
            .ok_or_else(|| CliError::data(format!("missing frame {frame}")))?;
        let mut tile =
            extract_tile(image, frame, &pose.bbox, args.tile_size).map_err(CliError::data)?;
        if args.overlay_joints {
            draw_joint_markers(&mut tile, &pose.joints, args.tile_size);
        }
        tiles.push(tile);
    }
    let grid = build_grid(tiles, &layout, record.label).map_err(CliError::data)?;
    grid.image
        .write_pgm(&args.out)
        .map_err(CliError::internal)?;
    let sidecar = GridSidecar {
        sequence_id: record.sequence_id.clone(),
        key_actor_id: key_actor,
        label: record.label,
        tiles: grid.sources.clone(),
    };
    let sidecar_path = args.out.with_extension("json");
    write_string(&sidecar_path, &serde_json::to_string_pretty(&sidecar).unwrap())?;
    println!(
        "wrote {}x{} grid to {}",
        grid.image.width(),
        grid.image.height(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train-classifier / predict / eval
// ---------------------------------------------------------------------------

/// Load `(grid, label, stem)` tuples from a directory of PGM files with
/// JSON sidecars, sorted by file name so training is order-independent.
fn load_grid_dir(dir: &Path) -> Result<Vec<(GrayImage, u32, String)>, CliError> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            name.strip_suffix(".pgm").map(str::to_string)
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::data(format!("no .pgm grids in {}", dir.display())));
    }
    let mut out = Vec::with_capacity(names.len());
    for stem in names {
        let image =
            GrayImage::read_pgm(&dir.join(format!("{stem}.pgm"))).map_err(CliError::data)?;
        let sidecar: GridSidecar =
            serde_json::from_str(&read_to_string(&dir.join(format!("{stem}.json")))?)
                .map_err(CliError::data)?;
        let label = sidecar
            .label
            .ok_or_else(|| CliError::data(format!("{stem}: sidecar has no label")))?;
        out.push((image, label, stem));
    }
    Ok(out)
}

#[derive(Args)]
struct TrainClassifierArgs {
    /// Directory of grid PGMs with JSON sidecars
    #[arg(long)]
    grids: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated class names; defaults to class<i> up to the largest label
    #[arg(long)]
    classes: Option<String>,
    #[arg(long, default_value_t = 150)]
    epochs: u32,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn cmd_train_classifier(args: TrainClassifierArgs) -> Result<(), CliError> {
    let data = load_grid_dir(&args.grids)?;
    let classes: Vec<String> = match &args.classes {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => {
            let max = data.iter().map(|(_, l, _)| *l).max().unwrap_or(0);
            (0..=max).map(|i| format!("class{i}")).collect()
        }
    };
    let refs: Vec<(&GrayImage, u32)> = data.iter().map(|(g, l, _)| (g, *l)).collect();
    let config = ClassifierConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch,
        seed: args.seed,
        ..ClassifierConfig::default()
    };
    let model = train_classifier(&refs, &classes, &config).map_err(CliError::data)?;
    let loss = model.evaluate_loss(&refs).map_err(CliError::internal)?;
    write_string(&args.out, &serde_json::to_string(&model.to_doc()).unwrap())?;
    println!(
        "trained on {} grids, {} classes, final training loss {loss:.6}",
        refs.len(),
        classes.len()
    );
    Ok(())
}

#[derive(Args)]
struct PredictArgs {
    /// Classifier model document
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    grid: PathBuf,
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let doc: keypose::classifier::ClassifierModelDoc =
        serde_json::from_str(&read_to_string(&args.model)?).map_err(CliError::data)?;
    let model = doc.into_model().map_err(CliError::data)?;
    let grid = GrayImage::read_pgm(&args.grid).map_err(CliError::data)?;
    let distribution = model.predict(&grid).map_err(CliError::data)?;
    let predicted = argmax(&distribution);
    #[derive(serde::Serialize)]
    struct Prediction<'a> {
        predicted: usize,
        class: &'a str,
        distribution: &'a [f64],
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&Prediction {
            predicted,
            class: &model.classes[predicted],
            distribution: &distribution,
        })
        .unwrap()
    );
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    grids: PathBuf,
    /// Also write the metrics as JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let doc: keypose::classifier::ClassifierModelDoc =
        serde_json::from_str(&read_to_string(&args.model)?).map_err(CliError::data)?;
    let model = doc.into_model().map_err(CliError::data)?;
    let data = load_grid_dir(&args.grids)?;
    let images: Vec<&GrayImage> = data.iter().map(|(g, _, _)| g).collect();
    let dists = model.predict_batch(&images).map_err(CliError::data)?;
    let predicted: Vec<usize> = dists.iter().map(|d| argmax(d)).collect();
    let labels: Vec<usize> = data.iter().map(|(_, l, _)| *l as usize).collect();
    let (per_class, mean) = average_precision(&predicted, &labels, model.num_classes());
    let correct = predicted
        .iter()
        .zip(labels.iter())
        .filter(|(a, b)| a == b)
        .count();
    let accuracy = correct as f64 / labels.len() as f64;

    println!("{:<12} {:>10}", "class", "precision");
    for (name, p) in model.classes.iter().zip(per_class.iter()) {
        println!("{name:<12} {:>9.2}%", p * 100.0);
    }
    println!("{:<12} {:>9.2}%", "mean", mean * 100.0);
    println!("accuracy: {correct}/{} = {:.2}%", labels.len(), accuracy * 100.0);
    if let Some(path) = args.out {
        #[derive(serde::Serialize)]
        struct EvalOut {
            per_class_precision: Vec<f64>,
            mean_precision: f64,
            accuracy: f64,
        }
        write_string(
            &path,
            &serde_json::to_string_pretty(&EvalOut {
                per_class_precision: per_class,
                mean_precision: mean,
                accuracy,
            })
            .unwrap(),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run / ablate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration file (JSON); flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    model_store: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    score_threshold: Option<f64>,
    #[arg(long)]
    filter_k: Option<f64>,
    #[arg(long)]
    filter_epochs: Option<u32>,
    #[arg(long)]
    filter_lr: Option<f64>,
    #[arg(long)]
    filter_batch: Option<usize>,
    #[arg(long)]
    cluster_k: Option<usize>,
    #[arg(long)]
    cluster_epochs: Option<u32>,
    #[arg(long)]
    cluster_update_interval: Option<u32>,
    #[arg(long)]
    grid_tile_size: Option<u32>,
    #[arg(long)]
    grid_rows: Option<u32>,
    #[arg(long)]
    grid_cols: Option<u32>,
    #[arg(long)]
    grid_border: Option<u32>,
    #[arg(long)]
    classifier_epochs: Option<u32>,
    #[arg(long)]
    classifier_lr: Option<f64>,
    #[arg(long)]
    classifier_batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    all_actors: Option<bool>,
    #[arg(long)]
    random_frames: Option<bool>,
    #[arg(long)]
    cartesian: Option<bool>,
    #[arg(long)]
    filtering: Option<bool>,
}

impl RunArgs {
    fn into_config(self) -> Result<PipelineConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => serde_json::from_str(&read_to_string(path)?)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(config.manifest, self.manifest);
        set!(config.model_store, self.model_store);
        set!(config.output_dir, self.output_dir);
        set!(config.score_threshold, self.score_threshold);
        set!(config.filter.k, self.filter_k);
        set!(config.filter.epochs, self.filter_epochs);
        set!(config.filter.lr, self.filter_lr);
        set!(config.filter.batch, self.filter_batch);
        set!(config.cluster.k, self.cluster_k);
        set!(config.cluster.epochs, self.cluster_epochs);
        set!(config.cluster.update_interval, self.cluster_update_interval);
        set!(config.grid.tile_size, self.grid_tile_size);
        set!(config.grid.rows, self.grid_rows);
        set!(config.grid.cols, self.grid_cols);
        set!(config.grid.border, self.grid_border);
        set!(config.classifier.epochs, self.classifier_epochs);
        set!(config.classifier.lr, self.classifier_lr);
        set!(config.classifier.batch, self.classifier_batch);
        set!(config.seed, self.seed);
        set!(config.ablation.all_actors, self.all_actors);
        set!(config.ablation.random_frames, self.random_frames);
        set!(config.ablation.cartesian, self.cartesian);
        set!(config.ablation.filtering, self.filtering);
        Ok(config)
    }
}

fn cmd_run(args: RunArgs, ablate: bool) -> Result<(), CliError> {
    let config = args.into_config()?;
    if !config.manifest.exists() {
        return Err(CliError::data(format!(
            "manifest not found: {}",
            config.manifest.display()
        )));
    }
    if ablate {
        let rows = run_ablation(&config)?;
        println!(
            "{:<28} {:>10} {:>16}",
            "configuration", "accuracy", "mean precision"
        );
        for row in &rows {
            println!(
                "{:<28} {:>9.2}% {:>15.2}%",
                row.name,
                row.test_accuracy * 100.0,
                row.mean_precision * 100.0
            );
        }
        let table_path = config.output_dir.join("ablate").join("summary.json");
        write_string(&table_path, &serde_json::to_string_pretty(&rows).unwrap())?;
    } else {
        let report = run_pipeline(&config)?;
        println!(
            "test accuracy: {:.2}%  mean precision: {:.2}%  ({} test sequences)",
            report.test_accuracy * 100.0,
            report.mean_precision * 100.0,
            report.predictions.len()
        );
        for (name, p) in report.classes.iter().zip(report.per_class_precision.iter()) {
            println!("  {name:<12} {:>9.2}%", p * 100.0);
        }
        println!(
            "report: {}",
            config.output_dir.join("report.json").display()
        );
    }
    Ok(())
}
