use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stgcnn_cvae::evaluator::{
    benchmark_inference, evaluate_dataset, export_predictions, window_rng, EvalOptions, SampleMode, Sampler,
    Selection, EXPORT_HEADER,
};
use stgcnn_cvae::model::CvaeModel;
use stgcnn_cvae::synthetic::{generate, Pattern};
use stgcnn_cvae::trainer::{fit, make_split, restore, PreparedWindow, RunFiles, TrainConfig, TrainState};
use stgcnn_cvae::trajdata::{
    build_windows, parse_annotations, read_windows, resample, write_windows, SequenceWindow, WindowMode,
};
use stgcnn_cvae::{Error, Result, FRAME_PERIOD, OBS_LEN, SEQ_LEN};

#[derive(Parser)]
#[command(name = "stgcvae", version, about = "Multimodal pedestrian trajectory prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse annotation files into a window cache.
    Preprocess(PreprocessArgs),
    /// Train a model on a window cache.
    Train(TrainArgs),
    /// Best-of-K ADE/FDE of a checkpoint on a window cache.
    Evaluate(EvaluateArgs),
    /// Inference latency of a checkpoint.
    Bench(BenchArgs),
    /// Sample futures for the last observed frames of an annotation file.
    Predict(PredictArgs),
    /// Write a cache of generated walkers.
    GenSynthetic(SyntheticArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Annotation file or directory searched recursively for `*.txt`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Target grid rate in Hz.
    #[arg(long, default_value_t = 2.5)]
    rate: f64,
    /// Rate of consecutive annotated frames in Hz.
    #[arg(long, default_value_t = 2.5)]
    source_rate: f64,
    /// Window start spacing in grid frames [default: 1 in train mode, 20 in infer mode].
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, default_value = "train", value_parser = parse_mode)]
    mode: WindowMode,
    /// Inputs are robot logs; every file must carry a `#robot_id=` header.
    #[arg(long)]
    robot_log: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Scene kept out of training and used for validation.
    #[arg(long)]
    holdout: Option<String>,
    /// `key = value` training config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for checkpoints and metrics.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Continue from `last.stgc` in the run directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "latent")]
    sample_mode: SampleMode,
    /// Take the ADE and FDE minima independently.
    #[arg(long)]
    oracle_per_metric: bool,
    /// Directory for per-window prediction CSVs.
    #[arg(long)]
    export: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Timed inference repetitions added to the report; 0 skips.
    #[arg(long, default_value_t = 0)]
    latency_reps: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 3)]
    agents: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Annotation file; its last 8 grid frames are the observation.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 2.5)]
    source_rate: f64,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "latent")]
    sample_mode: SampleMode,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 1)]
    agents: usize,
    #[arg(long, default_value_t = 16)]
    windows: usize,
    #[arg(long, default_value = "const-velocity")]
    pattern: Pattern,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> std::result::Result<WindowMode, String> {
    match s {
        "train" => Ok(WindowMode::Train),
        "infer" => Ok(WindowMode::Infer),
        _ => Err(format!("expected train or infer, got {s:?}")),
    }
}

fn annotation_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(Error::Config(format!("input {} does not exist", input.display())));
    }
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(input).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "txt") {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn load_cache(path: &Path) -> Result<Vec<SequenceWindow>> {
    with_path(path, read_windows(path))
}

fn load_model(path: &Path) -> Result<CvaeModel> {
    with_path(path, CvaeModel::load(path)).map(|(m, _)| m)
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    if !(a.rate > 0.0 && a.source_rate > 0.0) {
        return Err(Error::Config("rates must be positive".into()));
    }
    let stride = a.stride.unwrap_or(match a.mode {
        WindowMode::Train => 1,
        WindowMode::Infer => SEQ_LEN,
    });
    let files = annotation_files(&a.input)?;
    let mut windows = Vec::new();
    for f in &files {
        let scene = parse_annotations(f)?;
        if a.robot_log && scene.robot_id.is_none() {
            return Err(Error::Config(format!("{}: robot log without a #robot_id header", f.display())));
        }
        let scene = scene.with_source_rate(a.source_rate);
        let r = resample(&scene, 1.0 / a.rate)?;
        if !r.dropped_agents.is_empty() {
            eprintln!("warning: {}: dropped {} agents with a single point", f.display(), r.dropped_agents.len());
        }
        let ws = build_windows(&r.scene, stride, a.mode)?;
        println!("{}: {} frames, {} agents, {} windows", scene.name, r.scene.frame_count(), scene.agent_ids().len(), ws.len());
        windows.extend(ws);
    }
    if windows.is_empty() {
        eprintln!("warning: no windows found under {}", a.input.display());
    }
    write_windows(&a.output, &windows)?;
    let agents: usize = windows.iter().map(SequenceWindow::agents).sum();
    let max = windows.iter().map(SequenceWindow::agents).max().unwrap_or(0);
    let mean = if windows.is_empty() { 0.0 } else { agents as f64 / windows.len() as f64 };
    println!("windows {} agents {agents} mean_agents {mean:.2} max_agents {max}", windows.len());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => with_path(p, TrainConfig::read(p))?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
        if config.lr_switch_epoch >= e {
            config.lr_switch_epoch = e.saturating_sub(1);
        }
    }
    if a.holdout.is_some() {
        config.held_out_scene = a.holdout.clone();
    }
    config.validate()?;
    let windows = load_cache(&a.data)?;
    let (train, val) = match &config.held_out_scene {
        Some(scene) => make_split(&windows, scene)?,
        None => (windows, Vec::new()),
    };
    if train.is_empty() {
        return Err(Error::Config("no training windows after the split".into()));
    }
    let prepared = train.into_iter().map(PreparedWindow::new).collect::<Result<Vec<_>>>()?;
    let files = RunFiles { dir: a.out.clone() };
    std::fs::create_dir_all(&files.dir)?;
    config.to_kv().write(&files.dir.join("config.kv"))?;
    let mut state = if a.resume && files.last().exists() {
        restore(&files.last())?
    } else {
        TrainState::new(&config)?
    };
    println!("params {} windows {} validation {}", state.model.param_count(), prepared.len(), val.len());
    fit(&mut state, &prepared, &val, &config, Some(&files), |s, v| {
        let r = &s.report;
        let val = v.map_or(String::new(), |v| format!(" val_ade {v:.4}"));
        println!("epoch {} total {:.5} rec {:.5} kl {:.5} w_kl {:.6}{val}", r.epoch, r.total, r.rec, r.kl, r.weight);
    })?;
    println!("wrote {}", files.last().display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let windows = load_cache(&a.data)?;
    let opts = EvalOptions {
        k: a.k,
        mode: a.sample_mode,
        selection: if a.oracle_per_metric { Selection::PerMetric } else { Selection::ByAde },
        seed: a.seed,
        latency_reps: a.latency_reps,
        jobs: a.jobs.max(1),
    };
    let report = evaluate_dataset(&model, &windows, &opts)?;
    print!("{}", report.to_text());
    if let Some(dir) = &a.export {
        let paths = export_predictions(&model, &windows, a.k, a.sample_mode, a.seed, dir)?;
        eprintln!("exported {} files to {}", paths.len(), dir.display());
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let window = generate(Pattern::ConstVelocity, a.agents, 1, &mut ChaCha8Rng::seed_from_u64(a.seed))?.remove(0);
    let stats = benchmark_inference(&model, &window, a.reps, 10)?;
    println!("agents = {}", a.agents);
    println!("reps = {}", a.reps);
    println!("latency_mean_ms = {:.4}", stats.mean * 1e3);
    println!("latency_p95_ms = {:.4}", stats.p95 * 1e3);
    println!("param_count = {}", model.param_count());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let scene = with_path(&a.input, parse_annotations(&a.input))?.with_source_rate(a.source_rate);
    let scene = resample(&scene, FRAME_PERIOD)?.scene;
    let last = scene.annotations.iter().map(|r| r.frame).max().ok_or_else(|| Error::Config("input has no annotations".into()))?;
    let first = last - OBS_LEN as i64 + 1;
    let at = |id: i64, f: i64| scene.annotations.iter().find(|r| r.agent == id && r.frame == f).map(|r| [r.x, r.y]);
    let ids: Vec<i64> = scene.agent_ids().into_iter().filter(|&id| (first..=last).all(|f| at(id, f).is_some())).collect();
    if ids.is_empty() {
        return Err(Error::Config(format!("no agent is present in all of the last {OBS_LEN} frames")));
    }
    let positions = (first..=last).flat_map(|f| ids.iter().map(move |&id| at(id, f).unwrap())).collect();
    let window = SequenceWindow::new(scene.name.clone(), ids.clone(), positions, None)?;
    let sampler = Sampler::new(&model, &window)?;
    let mut rng = window_rng(a.seed, 0);
    let mut csv = format!("{EXPORT_HEADER}\n");
    for t in 0..OBS_LEN {
        for (i, id) in ids.iter().enumerate() {
            let p = window.position(t, i);
            csv.push_str(&format!("{id},{t},-1,{},{}\n", p[0], p[1]));
        }
    }
    for s in 0..a.k {
        let future = sampler.sample(a.sample_mode, &mut rng)?;
        for (j, p) in future.iter().enumerate() {
            let (t, i) = (OBS_LEN + j / ids.len(), j % ids.len());
            csv.push_str(&format!("{},{t},{s},{},{}\n", ids[i], p[0], p[1]));
        }
    }
    match &a.out {
        Some(p) => std::fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn gen_synthetic(a: SyntheticArgs) -> Result<()> {
    let windows = generate(a.pattern, a.agents, a.windows, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    write_windows(&a.out, &windows)?;
    println!("wrote {} {} windows of {} agents to {}", windows.len(), a.pattern.name(), a.agents, a.out.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Dimension(_) | Error::Contract(_) | Error::Integrity(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(a),
        Command::Predict(a) => predict(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
