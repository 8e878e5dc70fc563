use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vocadapt::audio::{load_wav, mel_spectrogram, read_mel, save_wav, AudioClip};
use vocadapt::autodiff::checkpoint::CheckpointBundle;
use vocadapt::autodiff::inject_gradient_fault;
use vocadapt::config::RunConfig;
use vocadapt::data::{build_corpora, read_manifest, ClipPool, Split};
use vocadapt::eval::{compare_modes, evaluate_checkpoint, report_file_name, Vocoder};
use vocadapt::gradcheck;
use vocadapt::models::GeneratorKind;
use vocadapt::pipeline::{run_experiment, seed_dir};
use vocadapt::training::{
    cdc_pool_for, checkpoint_meta, finetune, load_generator, pretrain, write_step_log, FinetuneMode, RunOutputs,
};
use vocadapt::Error;

const RUN_ROOT_ENV: &str = "VOCADAPT_RUN_ROOT";

#[derive(Parser)]
#[command(name = "vocadapt", version, about = "Few-shot GAN vocoder adaptation toolkit")]
struct Cli {
    /// Base for relative output paths. Falls back to $VOCADAPT_RUN_ROOT, then the working directory.
    #[arg(long, global = true)]
    run_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the source and target corpora with manifests.
    SynthData(SynthArgs),
    /// Train a vocoder on the source train split.
    Pretrain(PretrainArgs),
    /// Adapt a pretrained vocoder to the target train split.
    Finetune(FinetuneArgs),
    /// Vocode one mel (or the mel of one WAV).
    Synthesize(SynthesizeArgs),
    /// Score one checkpoint on manifest splits.
    Evaluate(EvaluateArgs),
    /// Train/test comparison of one checkpoint per fine-tuning mode.
    Compare(CompareArgs),
    /// Finite-difference check of every differentiable op and loss.
    Gradcheck(GradcheckArgs),
    /// Full pipeline (corpora, pretraining, three modes, comparison) per seed.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    source_speakers: Option<usize>,
    #[arg(long)]
    utterances: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Melgan,
    Hifigan,
}

impl From<ModelArg> for GeneratorKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Melgan => GeneratorKind::MelganLike,
            ModelArg::Hifigan => GeneratorKind::HifiganLike,
        }
    }
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    None,
    Traditional,
    Cdc,
}

impl From<ModeArg> for FinetuneMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::None => FinetuneMode::None,
            ModeArg::Traditional => FinetuneMode::Traditional,
            ModeArg::Cdc => FinetuneMode::Cdc,
        }
    }
}

#[derive(Args)]
struct FinetuneArgs {
    /// Source checkpoint.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Target manifest.
    #[arg(long)]
    data: PathBuf,
    /// Source manifest, needed by `cdc` when the consistency pool draws on source data.
    #[arg(long)]
    source_data: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Replaces the configuration stored in the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, conflicts_with = "wav", required_unless_present = "wav")]
    mel: Option<PathBuf>,
    #[arg(long)]
    wav: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    Both,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    split: SplitArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// `MODE=PATH`, once per mode.
    #[arg(long = "ckpt", required = true)]
    ckpts: Vec<String>,
    /// Target manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value = "all")]
    module: String,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scales the named op's gradient by 1.01.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_usage() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CliResult = std::result::Result<(), Failure>;

struct Ctx {
    root: Option<PathBuf>,
}

impl Ctx {
    fn output(&self, p: &Path) -> PathBuf {
        match &self.root {
            Some(r) if p.is_relative() => r.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn require_file(p: &Path, what: &str) -> CliResult {
    if p.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", p.display())))
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => {
            require_file(p, "config")?;
            Ok(RunConfig::load(p)?)
        }
        None => Ok(RunConfig::default()),
    }
}

fn ensure_parent(p: &Path) -> CliResult {
    if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d).map_err(|e| Error::Io {
            path: d.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

/// `dir/name.ext` → `dir/name.<suffix>`
fn sibling(p: &Path, suffix: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{stem}.{suffix}"))
}

fn write_snapshot(cfg: &RunConfig, path: &Path) -> CliResult {
    std::fs::write(path, cfg.to_toml()).map_err(|e| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn synth_data(ctx: &Ctx, a: SynthArgs) -> CliResult {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.data.seed = s;
    }
    if let Some(k) = a.source_speakers {
        cfg.data.source_speakers = k;
    }
    if let Some(m) = a.utterances {
        cfg.data.utterances_per_speaker = m;
    }
    cfg.validate()?;
    let out = ctx.output(&a.out);
    if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(runtime(format!("parent directory {} does not exist", parent.display())));
        }
    }
    let paths = build_corpora(&out, &cfg.data.corpus(), cfg.data.seed, cfg.dsp.sample_rate)?;
    write_snapshot(&cfg, &out.join("config.toml"))?;
    println!("{}", paths.source_manifest.display());
    println!("{}", paths.target_manifest.display());
    Ok(())
}

fn cmd_pretrain(ctx: &Ctx, a: PretrainArgs) -> CliResult {
    require_file(&a.data, "manifest")?;
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(m) = a.model {
        cfg.model.kind = m.into();
    }
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let pool = ClipPool::from_manifest(&a.data, Split::Train, &cfg.dsp)?;
    let out = ctx.output(&a.out);
    ensure_parent(&out)?;
    let outputs = RunOutputs {
        checkpoint_dir: (cfg.train.checkpoint_interval > 0).then(|| sibling(&out, "steps")),
    };
    let res = pretrain(&pool, &cfg, &outputs)?;
    res.bundle.save(&out)?;
    write_step_log(&sibling(&out, "log.jsonl"), &res.logs, cfg.train.log_interval)?;
    write_snapshot(&cfg, &sibling(&out, "config.toml"))?;
    if let Some(last) = res.logs.last() {
        println!("pretrain: {} steps, final {:?}", last.step, last.losses);
    }
    println!("{}", out.display());
    Ok(())
}

fn cmd_finetune(ctx: &Ctx, a: FinetuneArgs) -> CliResult {
    let mode: FinetuneMode = a.mode.into();
    let Some(from) = a.from else {
        return Err(usage(format!("--mode {} needs --from CHECKPOINT", mode.as_str())));
    };
    require_file(&from, "checkpoint")?;
    require_file(&a.data, "manifest")?;
    let source = CheckpointBundle::load(&from)?;
    let mut cfg = match &a.config {
        Some(p) => load_config(Some(p))?,
        None => checkpoint_meta(&source)?.config,
    };
    if let Some(s) = a.steps {
        cfg.finetune.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let target = ClipPool::from_manifest(&a.data, Split::Train, &cfg.dsp)?;
    let cdc_pool = if mode == FinetuneMode::Cdc {
        let src = match &a.source_data {
            Some(p) => {
                require_file(p, "source manifest")?;
                Some(ClipPool::from_manifest(p, Split::Train, &cfg.dsp)?)
            }
            None => None,
        };
        Some(cdc_pool_for(cfg.cdc.pool, src, &target).map_err(|e| usage(format!("{e} (pass --source-data)")))?)
    } else {
        None
    };
    let out = ctx.output(&a.out);
    ensure_parent(&out)?;
    let outputs = RunOutputs {
        checkpoint_dir: (cfg.train.checkpoint_interval > 0).then(|| sibling(&out, "steps")),
    };
    let res = finetune(&source, &target, cdc_pool.as_ref(), mode, &cfg, &outputs)?;
    res.bundle.save(&out)?;
    write_step_log(&sibling(&out, "log.jsonl"), &res.logs, cfg.train.log_interval)?;
    write_snapshot(&cfg, &sibling(&out, "config.toml"))?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_synthesize(ctx: &Ctx, a: SynthesizeArgs) -> CliResult {
    require_file(&a.ckpt, "checkpoint")?;
    let bundle = CheckpointBundle::load(&a.ckpt)?;
    let (g, cfg) = load_generator(&bundle)?;
    let mel = match (&a.mel, &a.wav) {
        (Some(m), _) => {
            require_file(m, "mel file")?;
            read_mel(m, &cfg.dsp)?
        }
        (None, Some(w)) => {
            require_file(w, "wav file")?;
            mel_spectrogram(&load_wav(w)?, &cfg.dsp)?
        }
        (None, None) => return Err(usage("one of --mel or --wav is required")),
    };
    let wave = g.frozen_copy().vocode(&mel)?;
    let out = ctx.output(&a.out);
    ensure_parent(&out)?;
    save_wav(&AudioClip::new(wave, cfg.dsp.sample_rate)?, &out)?;
    println!("{}", out.display());
    Ok(())
}

fn mode_label(bundle: &CheckpointBundle) -> Result<(String, u64, usize), Failure> {
    let meta = checkpoint_meta(bundle)?;
    let mode = meta.phase.strip_prefix("finetune.").unwrap_or(&meta.phase).to_owned();
    Ok((mode, meta.config.train.seed, meta.step))
}

fn cmd_evaluate(ctx: &Ctx, a: EvaluateArgs) -> CliResult {
    require_file(&a.ckpt, "checkpoint")?;
    require_file(&a.data, "manifest")?;
    let bundle = CheckpointBundle::load(&a.ckpt)?;
    let (_, cfg) = load_generator(&bundle)?;
    let (mode, seed, step) = mode_label(&bundle)?;
    let entries = read_manifest(&a.data)?;
    let splits: &[Split] = match a.split {
        SplitArg::Train => &[Split::Train],
        SplitArg::Test => &[Split::Test],
        SplitArg::Both => &[Split::Train, Split::Test],
    };
    let out = ctx.output(&a.out);
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    for &split in splits {
        let pool = ClipPool::load(&entries, split, &cfg.dsp)?;
        let r = evaluate_checkpoint(&bundle, &pool, split.as_str(), &mode, &cfg.dsp, &cfg.eval)?;
        let path = out.join(report_file_name(&bundle.kind, &mode, seed, step, split.as_str()));
        r.save(&path)?;
        println!(
            "{} {}: mr_stft {:.6} ± {:.6}, mcd {:.4} ± {:.4} over {} clips",
            mode,
            split.as_str(),
            r.mr_stft.mean,
            r.mr_stft.std,
            r.mcd.mean,
            r.mcd.std,
            r.count
        );
    }
    write_snapshot(&cfg, &out.join("config.toml"))
}

fn cmd_compare(ctx: &Ctx, a: CompareArgs) -> CliResult {
    require_file(&a.data, "manifest")?;
    let mut loaded = Vec::new();
    for spec in &a.ckpts {
        let Some((m, p)) = spec.split_once('=') else {
            return Err(usage(format!("--ckpt expects MODE=PATH, got '{spec}'")));
        };
        let mode = FinetuneMode::parse(m)?;
        let p = PathBuf::from(p);
        require_file(&p, "checkpoint")?;
        loaded.push((mode, CheckpointBundle::load(&p)?));
    }
    let (_, cfg) = load_generator(&loaded[0].1)?;
    let entries = read_manifest(&a.data)?;
    let train = ClipPool::load(&entries, Split::Train, &cfg.dsp)?;
    let test = ClipPool::load(&entries, Split::Test, &cfg.dsp)?;
    let refs: Vec<_> = loaded.iter().map(|(m, b)| (*m, b)).collect();
    let (table, reports) = compare_modes(&refs, &train, &test, &cfg.dsp, &cfg.eval)?;
    let out = ctx.output(&a.out);
    table.save(&out)?;
    for (r, (_, b)) in reports.iter().zip(loaded.iter().flat_map(|x| [x, x])) {
        let (mode, seed, step) = mode_label(b)?;
        r.save(&out.join(report_file_name(&b.kind, &mode, seed, step, &r.split)))?;
    }
    write_snapshot(&cfg, &out.join("config.toml"))?;
    print!("{}", table.render());
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> CliResult {
    if !(a.tolerance > 0.0 && a.step > 0.0) {
        return Err(usage("--tolerance and --step must be positive"));
    }
    inject_gradient_fault(a.inject_fault.as_deref());
    let results = gradcheck::run(&a.module, a.seed, a.step, a.tolerance);
    inject_gradient_fault(None);
    let results = results?;
    let mut failed = Vec::new();
    for r in &results {
        println!(
            "{:<5} {:<12} {:<26} rel_err {:.3e} ({} probes, {} skipped)",
            if r.passed { "ok" } else { "FAIL" },
            r.module,
            r.name,
            r.rel_error,
            r.probes,
            r.skipped
        );
        if !r.passed {
            failed.push(format!("{} ({:.3e})", r.name, r.rel_error));
        }
    }
    println!("{} of {} cases passed at tolerance {:e}", results.len() - failed.len(), results.len(), a.tolerance);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!("gradient check failed: {}", failed.join(", "))))
    }
}

fn cmd_experiment(ctx: &Ctx, a: ExperimentArgs) -> CliResult {
    let cfg = load_config(a.config.as_deref())?;
    cfg.validate()?;
    let root = ctx.output(&a.out);
    for seed in a.seeds {
        let out = run_experiment(&cfg, seed, &seed_dir(&root, seed))?;
        println!("seed {seed}");
        print!("{}", out.table.render());
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let ctx = Ctx {
        root: cli.run_root.or_else(|| std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from)),
    };
    match cli.command {
        Command::SynthData(a) => synth_data(&ctx, a),
        Command::Pretrain(a) => cmd_pretrain(&ctx, a),
        Command::Finetune(a) => cmd_finetune(&ctx, a),
        Command::Synthesize(a) => cmd_synthesize(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Experiment(a) => cmd_experiment(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
