use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pcf_ecapa::eval::{format_scores, run_eval, score_trials, ChunkConfig, DcfParams, FeatureStore, TrialList};
use pcf_ecapa::model::{count_params, load_model, Classifier, ModelConfig, Network, MODEL_KEYS};
use pcf_ecapa::nn::Module;
use pcf_ecapa::rf::{analytic_maps, emit_rf_panel, gradient_rf_maps, rf_half_window, valid_blocks};
use pcf_ecapa::train::{
    save_checkpoint, train_toy, AdamState, LossConfig, LossKind, ScheduleConfig, SynthConfig, SyntheticCorpus,
    TrainConfig,
};

use crate::manifest::RunManifest;
use crate::settings::Settings;
use crate::{ChunkArgs, Cli, Command, ModelArgs, ScheduleArgs, SynthArgs};

/// Output classes of the summary classifier when none are given.
const DEFAULT_CLASSES: usize = 5994;

struct Ctx {
    out: PathBuf,
    settings: Settings,
    manifest: RunManifest,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.manifest.outputs.push(path.clone());
        Ok(path)
    }
}

use crate::CliError;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let mut settings = Settings::load(cli.config.as_deref())?;
    let seed = settings.take("seed", cli.seed, 0u64)?;
    let name = match &cli.command {
        Command::Summary(_) => "summary",
        Command::Rf(_) => "rf",
        Command::Synth(_) => "synth",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Score(_) => "score",
    };
    let mut manifest = RunManifest::new(name, seed);
    if let Some(c) = &cli.config {
        manifest.inputs.push(c.clone());
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    let mut ctx = Ctx {
        out: cli.out,
        settings,
        manifest,
    };
    match cli.command {
        Command::Summary(a) => summary(&mut ctx, seed, &a.model, a.include_classifier, a.classes),
        Command::Rf(a) => rf(&mut ctx, seed, &a.model, a.block, a.channel),
        Command::Synth(a) => synth(&mut ctx, seed, &a.synth, a.feat_dim),
        Command::Train(a) => train(&mut ctx, seed, &a.model, &a.synth, &a.schedule),
        Command::Eval(a) => {
            let cost = resolve_cost(&mut ctx, a.p_target, a.c_miss, a.c_fa)?;
            eval(&mut ctx, &a.input, Some(cost))
        }
        Command::Score(a) => eval(&mut ctx, &a.input, None),
    }?;
    let Ctx { out, settings, manifest } = ctx;
    settings.finish()?;
    manifest.write(&out, start.elapsed().as_secs_f64())?;
    Ok(())
}

fn resolve_model(ctx: &mut Ctx, seed: u64, args: &ModelArgs, base: ModelConfig) -> Result<ModelConfig, CliError> {
    let mut flags = Vec::new();
    let mut push = |k, v: Option<String>| {
        if let Some(v) = v {
            flags.push((k, v));
        }
    };
    push("variant", args.variant.clone());
    push("channels", args.channels.map(|v| v.to_string()));
    push("feat_dim", args.feat_dim.map(|v| v.to_string()));
    push("embed_dim", args.embed_dim.map(|v| v.to_string()));
    push("mfa_out", args.mfa_out.map(|v| v.to_string()));
    push("se_bottleneck", args.se_bottleneck.map(|v| v.to_string()));
    push("attention_bottleneck", args.attention_bottleneck.map(|v| v.to_string()));
    push("res2_scale", args.res2_scale.map(|v| v.to_string()));
    push("stages", args.stages.map(|v| v.to_string()));
    flags.push(("seed", seed.to_string()));
    let pairs = ctx.settings.take_pairs(&MODEL_KEYS, flags);
    let cfg = base.overlay(&pairs)?;
    for line in cfg.to_text().lines() {
        if let Some((k, v)) = line.split_once('=') {
            ctx.manifest.set(&format!("model.{k}"), v);
        }
    }
    Ok(cfg)
}

fn summary(
    ctx: &mut Ctx,
    seed: u64,
    model: &ModelArgs,
    include_classifier: bool,
    classes: Option<usize>,
) -> Result<(), CliError> {
    let cfg = resolve_model(ctx, seed, model, ModelConfig::ecapa(512))?;
    let include = ctx.settings.take("include_classifier", include_classifier.then_some(true), false)?;
    let classes = ctx.settings.take("classes", classes, DEFAULT_CLASSES)?;
    let net = Network::new(&cfg)?;
    let clf = if include {
        Some(Classifier::linear(cfg.embed_dim, classes, seed)?)
    } else {
        None
    };
    let audit = count_params(&net, clf.as_ref());
    let mut text = audit.to_string();
    if include {
        text.push_str(&format!(
            "  {:<10} {:>12}  ({:.3}M)\n",
            "with head",
            audit.total(true),
            audit.total(true) as f64 / 1e6
        ));
    }
    print!("{text}");
    ctx.manifest.set("include_classifier", include);
    ctx.manifest.set("classes", classes);
    ctx.write("param_audit.txt", text)?;
    Ok(())
}

fn rf(ctx: &mut Ctx, seed: u64, model: &ModelArgs, block: Option<usize>, channel: Option<usize>) -> Result<(), CliError> {
    let cfg = resolve_model(ctx, seed, model, ModelConfig::ecapa(512))?;
    let channel = ctx.settings.take("channel", channel, 0usize)?;
    let blocks: Vec<usize> = match ctx.settings.take_opt("block", block)? {
        Some(b) => vec![b],
        None => valid_blocks(&cfg).collect(),
    };
    ctx.manifest.set("channel", channel);
    ctx.manifest.set("blocks", format!("{blocks:?}"));
    let anchors: Vec<(usize, usize)> = blocks.iter().map(|&b| (b, channel)).collect();
    // the oracle validates anchors, so run it first
    let oracle = gradient_rf_maps(&cfg, &anchors)?;
    let half = rf_half_window(&cfg)?;
    let analytic = analytic_maps(&cfg, half, &anchors);
    let written = emit_rf_panel(&analytic, &ctx.out)?;
    ctx.manifest.outputs.extend(written);

    let mut disagree = Vec::new();
    for (a, o) in analytic.iter().zip(&oracle) {
        let ok = a.same_grid(o);
        println!(
            "block {} channel {}: {}/{} bins, {} frames, {}",
            a.block,
            a.channel,
            a.freq_coverage(),
            a.freq_bins(),
            a.time_extent(),
            if ok { "agree" } else { "DISAGREE" }
        );
        if !ok {
            disagree.push(a.block);
        }
    }
    if disagree.is_empty() {
        println!("AGREE");
        return Ok(());
    }
    let mut diag = oracle.clone();
    for m in &mut diag {
        m.model = format!("{}-oracle", m.model);
    }
    ctx.manifest.outputs.extend(emit_rf_panel(&diag, &ctx.out)?);
    println!("DISAGREE");
    Err(CliError::Runtime(format!(
        "analytic and gradient receptive fields differ on blocks {disagree:?}"
    )))
}

fn resolve_synth(ctx: &mut Ctx, seed: u64, a: &SynthArgs, feat_dim: usize) -> Result<SynthConfig, CliError> {
    let d = SynthConfig::default();
    let s = &mut ctx.settings;
    let cfg = SynthConfig {
        speakers: s.take("speakers", a.speakers, d.speakers)?,
        train_utts: s.take("train_utts", a.train_utts, d.train_utts)?,
        heldout_utts: s.take("heldout_utts", a.heldout_utts, d.heldout_utts)?,
        frames: s.take("frames", a.frames, d.frames)?,
        feat_dim,
        template_noise: s.take("template_noise", a.template_noise, d.template_noise)?,
        frame_noise: s.take("frame_noise", a.frame_noise, d.frame_noise)?,
        session_dims: s.take("session_dims", a.session_dims, d.session_dims)?,
        session_scale: s.take("session_scale", a.session_scale, d.session_scale)?,
        seed,
    };
    cfg.validate()?;
    let m = &mut ctx.manifest;
    m.set("data.speakers", cfg.speakers);
    m.set("data.train_utts", cfg.train_utts);
    m.set("data.heldout_utts", cfg.heldout_utts);
    m.set("data.frames", cfg.frames);
    m.set("data.feat_dim", cfg.feat_dim);
    m.set("data.template_noise", cfg.template_noise);
    m.set("data.frame_noise", cfg.frame_noise);
    m.set("data.session_dims", cfg.session_dims);
    m.set("data.session_scale", cfg.session_scale);
    Ok(cfg)
}

fn synth(ctx: &mut Ctx, seed: u64, a: &SynthArgs, feat_dim: Option<usize>) -> Result<(), CliError> {
    let feat_dim = ctx.settings.take("feat_dim", feat_dim, 80)?;
    let cfg = resolve_synth(ctx, seed, a, feat_dim)?;
    let corpus = SyntheticCorpus::generate(&cfg)?;
    for (name, utts) in [("train", &corpus.train), ("heldout", &corpus.heldout)] {
        let store = corpus.store(utts);
        let manifest = store.save_with_manifest(ctx.path(name), "feats.scp")?;
        ctx.manifest.outputs.push(manifest);
        println!("{name}: {} utterances", store.len());
    }
    let trials = corpus.heldout_trials();
    ctx.write("heldout_trials.txt", trials.to_text())?;
    println!("heldout trials: {}", trials.len());
    Ok(())
}

fn resolve_schedule(ctx: &mut Ctx, seed: u64, a: &ScheduleArgs) -> Result<TrainConfig, CliError> {
    let s = &mut ctx.settings;
    let d = ScheduleConfig::toy();
    let schedule = ScheduleConfig {
        cycle_steps: s.take("cycle_steps", a.cycle_steps, d.cycle_steps)?,
        cycles: s.take("cycles", a.cycles, d.cycles)?,
        lr_min: s.take("lr_min", a.lr_min, d.lr_min)?,
        lr_max: s.take("lr_max", a.lr_max, d.lr_max)?,
        weight_decay: s.take("weight_decay", a.weight_decay, d.weight_decay)?,
    };
    let base = match s.take("loss", a.loss.clone(), "circle".to_string())?.as_str() {
        "circle" => LossConfig::circle(),
        "aam" => LossConfig::aam(),
        other => return Err(CliError::Usage(format!("key `loss`: expected circle or aam, got `{other}`"))),
    };
    let loss = LossConfig {
        margin: s.take("margin", a.margin, base.margin)?,
        scale: s.take("scale", a.scale, base.scale)?,
        ..base
    };
    let cfg = TrainConfig {
        batch: s.take("batch", a.batch, TrainConfig::default().batch)?,
        schedule,
        loss,
        seed,
    };
    let m = &mut ctx.manifest;
    m.set("train.batch", cfg.batch);
    m.set("train.cycle_steps", schedule.cycle_steps);
    m.set("train.cycles", schedule.cycles);
    m.set("train.lr_min", schedule.lr_min);
    m.set("train.lr_max", schedule.lr_max);
    m.set("train.weight_decay", schedule.weight_decay);
    m.set("train.loss", if loss.kind == LossKind::Circle { "circle" } else { "aam" });
    m.set("train.margin", loss.margin);
    m.set("train.scale", loss.scale);
    Ok(cfg)
}

fn train(ctx: &mut Ctx, seed: u64, model: &ModelArgs, data: &SynthArgs, sched: &ScheduleArgs) -> Result<(), CliError> {
    let cfg = resolve_model(ctx, seed, model, ModelConfig::tiny_pcf(64))?;
    let synth = resolve_synth(ctx, seed, data, cfg.feat_dim)?;
    let tcfg = resolve_schedule(ctx, seed, sched)?;
    let corpus = SyntheticCorpus::generate(&synth)?;
    let mut net = Network::new(&cfg)?;
    let mut clf = Classifier::cosine(cfg.embed_dim, synth.speakers, seed)?;
    let mut params = net.params();
    params.extend(clf.params());
    let mut adam = AdamState::new(&params.iter().map(|p| p.numel()).collect::<Vec<_>>());
    drop(params);
    log::info!(
        "training {} (C={}) for {} steps on {} utterances",
        cfg.variant_name(),
        cfg.channels,
        tcfg.schedule.total_steps(),
        corpus.train.len()
    );
    let ckpt = ctx.path("checkpoint.ckpt");
    let report = match train_toy(&mut net, &mut clf, &mut adam, &corpus.train, &tcfg) {
        Ok(r) => r,
        Err(e @ pcf_ecapa::Error::Diverged { .. }) => {
            save_checkpoint(&ckpt, &net, &clf, &adam)?;
            ctx.manifest.outputs.push(ckpt);
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let loss_path = ctx.path("loss.csv");
    report.write_csv(File::create(&loss_path).map_err(|e| io_err(&loss_path, e))?)?;
    ctx.manifest.outputs.push(loss_path);
    save_checkpoint(&ckpt, &net, &clf, &adam)?;
    ctx.manifest.outputs.push(ckpt);
    let last = report.steps.last().map_or(f64::NAN, |s| s.loss);
    println!("steps={}", report.steps.len());
    println!("final_loss={last:.6}");
    println!("train_accuracy={:.6}", report.train_accuracy);
    Ok(())
}

fn resolve_cost(ctx: &mut Ctx, p: Option<f64>, cm: Option<f64>, cf: Option<f64>) -> Result<DcfParams, CliError> {
    let d = DcfParams::default();
    let s = &mut ctx.settings;
    let cost = DcfParams {
        p_target: s.take("p_target", p, d.p_target)?,
        c_miss: s.take("c_miss", cm, d.c_miss)?,
        c_fa: s.take("c_fa", cf, d.c_fa)?,
    };
    ctx.manifest.set("cost.p_target", cost.p_target);
    ctx.manifest.set("cost.c_miss", cost.c_miss);
    ctx.manifest.set("cost.c_fa", cost.c_fa);
    Ok(cost)
}

fn resolve_chunks(ctx: &mut Ctx, a: &ChunkArgs) -> Result<ChunkConfig, CliError> {
    let d = ChunkConfig::default();
    let s = &mut ctx.settings;
    let c = ChunkConfig {
        chunk: s.take("chunk", a.chunk, d.chunk)?,
        stride: s.take("stride", a.stride, d.stride)?,
        min_frames: s.take("min_frames", a.min_frames, d.min_frames)?,
    };
    c.validate()?;
    ctx.manifest.set("chunks.chunk", c.chunk);
    ctx.manifest.set("chunks.stride", c.stride);
    ctx.manifest.set("chunks.min_frames", c.min_frames);
    Ok(c)
}

fn required(ctx: &mut Ctx, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let p: PathBuf = ctx
        .settings
        .take_opt(key, flag)?
        .ok_or_else(|| CliError::Usage(format!("missing `--{key}`")))?;
    ctx.manifest.inputs.push(p.clone());
    Ok(p)
}

fn eval(ctx: &mut Ctx, input: &crate::InputArgs, cost: Option<DcfParams>) -> Result<(), CliError> {
    let model = required(ctx, "model", input.model.clone())?;
    let features = required(ctx, "features", input.features.clone())?;
    let trials = required(ctx, "trials", input.trials.clone())?;
    let chunks = resolve_chunks(ctx, &input.chunks)?;
    let net = load_model(&model)?;
    let store = FeatureStore::load_manifest(&features)?;
    let trials = TrialList::load(&trials)?;
    let (scores, padded) = match cost {
        Some(cost) => {
            let rep = run_eval(&net, &store, &trials, &chunks, &cost)?;
            let text = rep.metrics.to_text();
            print!("{text}");
            ctx.write("metrics.txt", text)?;
            (rep.scores, rep.padded)
        }
        None => {
            let s = score_trials(&net, &store, &trials, &chunks)?;
            println!("trials={}", s.scores.len());
            (s.scores, s.padded)
        }
    };
    if !padded.is_empty() {
        log::warn!("{} utterances shorter than {} frames were padded", padded.len(), chunks.min_frames);
    }
    ctx.write("scores.txt", format_scores(&trials, &scores))?;
    Ok(())
}
