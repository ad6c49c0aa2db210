use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use msdd_core::msdd::train::train_with;
use msdd_core::msdd::TrainingSession;
use msdd_core::pipeline::{
    diarize_session, load_model, save_model, weight_summary, Mode, ModelCard, PipelineConfig, WeightSummary,
};
use msdd_core::scorer::{emit_rttm, parse_rttm, score_sessions, DerBreakdown, EvalSetup};
use msdd_core::synthembed::{gen_session, load_archive, overlap_fraction, save_archive, SessionEmbeddings};
use msdd_core::types::SpeakerTimeline;

/// Multi-scale speaker diarization on embedding archives.
#[derive(Debug, Parser)]
#[command(name = "msdd", version)]
struct Cli {
    /// Pipeline configuration (TOML); `MSDD_<SECTION>__<KEY>` variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus of embedding archives and reference RTTMs.
    Synth(SynthArgs),
    /// Diarize every archive in a directory.
    Diarize(DiarizeArgs),
    /// Train the decoder on two-speaker sessions.
    Train(TrainArgs),
    /// Score hypothesis RTTMs against references.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sets both the minimum and maximum speaker count.
    #[arg(long, conflicts_with_all = ["min_speakers", "max_speakers"])]
    num_speakers: Option<usize>,
    #[arg(long)]
    min_speakers: Option<usize>,
    #[arg(long)]
    max_speakers: Option<usize>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Clustering,
    Msdd,
}

#[derive(Debug, Args)]
struct DiarizeArgs {
    /// Directory of `.manifest` archives.
    #[arg(long)]
    input: PathBuf,
    /// Directory receiving one RTTM per session.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Coarsest-to-base clustering weight ratio.
    #[arg(long)]
    r: Option<f64>,
    /// Run report; defaults to `<out>/report.jsonl`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Archives with a `<name>.rttm` reference next to each manifest.
    #[arg(long)]
    train_dir: PathBuf,
    #[arg(long)]
    val_dir: PathBuf,
    /// Checkpoint manifest path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch log; defaults to the checkpoint path with a `.jsonl` extension.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SetupArg {
    Forgiving,
    Full,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    hypothesis: PathBuf,
    #[arg(long, value_enum, default_value = "forgiving")]
    setup: SetupArg,
    /// Score report (line-delimited JSON).
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(cfg, a),
        Command::Diarize(a) => cmd_diarize(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Score(a) => cmd_score(a),
    }
}

struct JsonLines {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonLines {
    fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        writeln!(self.out).with_context(|| format!("writing {}", self.path.display()))?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.out
            .flush()
            .with_context(|| format!("writing {}", self.path.display()))
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating directory {}", path.display()))
}

/// Files in `dir` with extension `ext`, sorted by name.
fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("reading directory {}", dir.display()))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Serialize)]
struct CorpusEntry<'a> {
    session_id: &'a str,
    seed: u64,
    num_speakers: usize,
    duration: f64,
    overlap_fraction: f64,
    manifest: String,
    reference: String,
}

fn cmd_synth(mut cfg: PipelineConfig, a: SynthArgs) -> Result<()> {
    let s = &mut cfg.synth;
    if let Some(v) = a.sessions {
        s.sessions = v;
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(v) = a.num_speakers {
        s.min_speakers = v;
        s.max_speakers = v;
    }
    if let Some(v) = a.min_speakers {
        s.min_speakers = v;
    }
    if let Some(v) = a.max_speakers {
        s.max_speakers = v;
    }
    if let Some(v) = a.duration {
        s.session_duration = v;
    }
    if let Some(v) = a.overlap {
        s.overlap_fraction = v;
    }
    if let Some(v) = a.prefix {
        s.prefix = v;
    }
    cfg.validate()?;
    let scales = cfg.scales.resolve()?;
    let synth = &cfg.synth;
    let settings = (0..synth.sessions)
        .map(|i| synth.session(i, &scales))
        .collect::<msdd_core::Result<Vec<_>>>()?;
    create_dir(&a.out)?;
    let sessions = settings
        .par_iter()
        .map(gen_session)
        .collect::<msdd_core::Result<Vec<_>>>()?;

    let mut corpus = JsonLines::create(&a.out.join("corpus.jsonl"))?;
    for (sc, session) in settings.iter().zip(&sessions) {
        let name = &sc.session_id;
        let manifest = save_archive(&a.out, name, &session.data)?;
        let rttm = a.out.join(format!("{name}.rttm"));
        write_file(&rttm, &emit_rttm(&session.timeline))?;
        corpus.write(&CorpusEntry {
            session_id: name,
            seed: sc.seed,
            num_speakers: sc.num_speakers,
            duration: sc.session_duration,
            overlap_fraction: overlap_fraction(&session.timeline),
            manifest: file_name(&manifest),
            reference: file_name(&rttm),
        })?;
    }
    corpus.finish()?;
    eprintln!("wrote {} sessions to {}", sessions.len(), a.out.display());
    Ok(())
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_archives(dir: &Path) -> Result<Vec<(PathBuf, SessionEmbeddings)>> {
    let manifests = files_with_extension(dir, "manifest")?;
    if manifests.is_empty() {
        bail!("no .manifest archives in {}", dir.display());
    }
    manifests
        .into_par_iter()
        .map(|m| {
            let data = load_archive(&m).with_context(|| format!("loading {}", m.display()))?;
            Ok((m, data))
        })
        .collect()
}

#[derive(Serialize)]
struct DiarizeRecord<'a> {
    session_id: &'a str,
    mode: Mode,
    num_speakers: usize,
    base_steps: usize,
    hypothesis: String,
    scale_weights: Option<WeightSummary>,
}

fn cmd_diarize(mut cfg: PipelineConfig, a: DiarizeArgs) -> Result<()> {
    if let Some(m) = a.mode {
        cfg.decoder.mode = match m {
            ModeArg::Clustering => Mode::Clustering,
            ModeArg::Msdd => Mode::Msdd,
        };
    }
    if let Some(p) = a.checkpoint {
        cfg.decoder.checkpoint = Some(p);
    }
    if let Some(t) = a.threshold {
        cfg.decoder.threshold = t;
    }
    if let Some(r) = a.r {
        cfg.clustering.r = r;
    }
    cfg.validate()?;
    let model = match cfg.decoder.mode {
        Mode::Clustering => None,
        Mode::Msdd => {
            let Some(path) = &cfg.decoder.checkpoint else {
                bail!("msdd mode requires a checkpoint (--checkpoint or decoder.checkpoint)");
            };
            Some(load_model(path).with_context(|| format!("loading checkpoint {}", path.display()))?)
        }
    };
    let archives = load_archives(&a.input)?;
    create_dir(&a.out)?;
    let model_ref = model.as_ref().map(|(p, card)| (p, &card.scales));
    let results = archives
        .par_iter()
        .map(|(path, data)| {
            diarize_session(data, &cfg, model_ref).with_context(|| format!("diarizing {}", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;

    let report_path = a.report.unwrap_or_else(|| a.out.join("report.jsonl"));
    let mut report = JsonLines::create(&report_path)?;
    for ((path, data), result) in archives.iter().zip(&results) {
        let rttm = a.out.join(format!("{}.rttm", stem(path)));
        write_file(&rttm, &emit_rttm(&result.timeline))?;
        report.write(&DiarizeRecord {
            session_id: &data.session_id,
            mode: cfg.decoder.mode,
            num_speakers: result.clustering.num_speakers,
            base_steps: data.num_base(),
            hypothesis: file_name(&rttm),
            scale_weights: result.decoded.as_ref().and_then(weight_summary),
        })?;
    }
    report.finish()?;
    eprintln!("diarized {} sessions into {}", results.len(), a.out.display());
    Ok(())
}

fn reference_of(manifest: &Path, data: &SessionEmbeddings) -> Result<SpeakerTimeline> {
    let path = manifest.with_extension("rttm");
    let text = fs::read_to_string(&path).with_context(|| format!("reading reference {}", path.display()))?;
    let mut sessions = parse_rttm(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(sessions
        .remove(&data.session_id)
        .unwrap_or_else(|| SpeakerTimeline::empty(data.session_id.clone())))
}

fn training_sessions(dir: &Path, cfg: &PipelineConfig) -> Result<Vec<TrainingSession>> {
    let scales = cfg.scales.resolve()?;
    let t = &cfg.training;
    load_archives(dir)?
        .into_par_iter()
        .map(|(path, data)| {
            if data.scale_config() != &scales {
                bail!(
                    "{}: archive windows {:?} differ from the configured {:?}",
                    path.display(),
                    data.scale_config().windows(),
                    scales.windows()
                );
            }
            let reference = reference_of(&path, &data)?;
            TrainingSession::new(&reference, data, t.profile_source, t.scale_weight_ratio)
                .with_context(|| format!("ingesting {}", path.display()))
        })
        .collect()
}

#[derive(Serialize)]
struct TrainSummary {
    best_epoch: usize,
    best_f1: f64,
    checkpoint: String,
}

fn cmd_train(mut cfg: PipelineConfig, a: TrainArgs) -> Result<()> {
    if let Some(v) = a.max_epochs {
        cfg.training.max_epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.training.seed = v;
    }
    cfg.validate()?;
    let train = training_sessions(&a.train_dir, &cfg)?;
    let val = training_sessions(&a.val_dir, &cfg)?;
    let first = &train[0].data;
    let model_cfg = cfg.model.config(first.scale_config().num_scales(), first.dim());
    if let Some(bad) = train.iter().chain(&val).find(|s| s.data.dim() != model_cfg.emb_dim) {
        bail!(
            "session {} has embedding width {}, expected {}",
            bad.data.session_id,
            bad.data.dim(),
            model_cfg.emb_dim
        );
    }

    let log_path = a.log.unwrap_or_else(|| a.out.with_extension("jsonl"));
    let mut log = JsonLines::create(&log_path)?;
    let mut log_err = None;
    let (params, report) = train_with(&train, &val, model_cfg, &cfg.training, |e| {
        eprintln!(
            "epoch {} loss {:.5} val_f1 {:.4} best {:.4}",
            e.epoch, e.train_loss, e.val_f1, e.best_f1
        );
        if log_err.is_none() {
            log_err = log.write(e).err();
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let card = ModelCard {
        model: model_cfg,
        scales: cfg.scales.resolve()?,
        training: cfg.training,
        best_epoch: report.best_epoch,
        best_f1: report.best_f1,
    };
    save_model(&a.out, &params, &card).with_context(|| format!("saving {}", a.out.display()))?;
    log.write(&TrainSummary {
        best_epoch: report.best_epoch,
        best_f1: report.best_f1,
        checkpoint: file_name(&a.out),
    })?;
    log.finish()?;
    Ok(())
}

/// Sessions of every RTTM in `dir`; a file without entries yields an empty
/// session named after its stem.
fn read_rttm_dir(dir: &Path) -> Result<BTreeMap<String, SpeakerTimeline>> {
    let mut out = BTreeMap::new();
    for path in files_with_extension(dir, "rttm")? {
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let sessions = parse_rttm(&text).with_context(|| format!("parsing {}", path.display()))?;
        if sessions.is_empty() {
            let id = stem(&path);
            out.insert(id.clone(), SpeakerTimeline::empty(id));
        }
        for (id, timeline) in sessions {
            if out.insert(id.clone(), timeline).is_some() {
                bail!("session {id} appears in more than one file of {}", dir.display());
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum ScoreRecord<'a> {
    Session {
        session_id: &'a str,
        #[serde(flatten)]
        breakdown: &'a DerBreakdown,
    },
    Aggregate {
        setup: &'a EvalSetup,
        sessions: usize,
        #[serde(flatten)]
        breakdown: &'a DerBreakdown,
    },
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let reference = read_rttm_dir(&a.reference)?;
    let hypothesis = read_rttm_dir(&a.hypothesis)?;
    let r: BTreeSet<&String> = reference.keys().collect();
    let h: BTreeSet<&String> = hypothesis.keys().collect();
    let no_hyp: Vec<&str> = r.difference(&h).map(|s| s.as_str()).collect();
    let no_ref: Vec<&str> = h.difference(&r).map(|s| s.as_str()).collect();
    if !no_hyp.is_empty() || !no_ref.is_empty() {
        let mut msg = String::from("unmatched session ids");
        if !no_hyp.is_empty() {
            msg.push_str(&format!("; without hypothesis: {}", no_hyp.join(", ")));
        }
        if !no_ref.is_empty() {
            msg.push_str(&format!("; without reference: {}", no_ref.join(", ")));
        }
        bail!(msg);
    }
    let setup = match a.setup {
        SetupArg::Forgiving => EvalSetup::forgiving(),
        SetupArg::Full => EvalSetup::full(),
    };
    let report = score_sessions(&reference, &hypothesis, &setup)?;
    let mut out = JsonLines::create(&a.out)?;
    for s in &report.sessions {
        out.write(&ScoreRecord::Session {
            session_id: &s.session_id,
            breakdown: &s.breakdown,
        })?;
    }
    out.write(&ScoreRecord::Aggregate {
        setup: &report.setup,
        sessions: report.sessions.len(),
        breakdown: &report.pooled,
    })?;
    out.finish()?;
    eprintln!(
        "{} sessions, pooled DER {:.4}",
        report.sessions.len(),
        report.pooled.der
    );
    Ok(())
}
