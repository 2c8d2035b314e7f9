use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Task};
use super::run_dir::RunDir;
use super::{BenchArgs, Cli, Command, EvalArgs, MockArgs, SampleArgs, SmearArgs, TrainArgs, UnfoldArgs};
use crate::datasets::{
    apply_preprocess, derive_kinematics, fit_preprocess, load_events, sample_mock, save_events, smear_matrix,
    EventFile, FeatureMatrix, Layout, MockFamily, MockSpec, Space, N_FEATURES,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, histogram_dump, EvalOptions, BINS_1D};
use crate::numerics::{derive_seed, Matrix};

/// Progress output; a closed stdout (e.g. `| head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}
use crate::odeint::{generate, unfold};
use crate::train::{
    adamw_step, cfm_batch_for_rows, cfm_loss_and_grad, load_checkpoint, save_checkpoint, train, train_from,
    CheckpointRecord, EpochLog, OptimizerState, TrainData, TrainState,
};
use crate::velocity::{ActivationCache, NetMode};

pub(crate) fn dispatch(cli: Cli, dotted: &[String]) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut overrides = cli.set.clone();
    overrides.extend_from_slice(dotted);
    // command flags first, then explicit key=value overrides on top
    match &cli.command {
        Command::Mock(a) => mock_flags(&mut cfg, a)?,
        Command::Smear(a) => smear_flags(&mut cfg, a),
        Command::Train(a) => train_flags(&mut cfg, a),
        Command::Sample(a) => sample_flags(&mut cfg, a),
        Command::Unfold(a) => unfold_flags(&mut cfg, a),
        Command::Eval(a) => eval_flags(&mut cfg, a),
        Command::Bench(a) => bench_flags(&mut cfg, a),
    }
    let mut cfg = cfg.with_overrides(&overrides)?;
    if let Some(dir) = &cli.out_dir {
        cfg.output = dir.clone();
    }
    let threads = cli.threads.max(1);
    match cli.command {
        Command::Mock(_) => cmd_mock(&cfg),
        Command::Smear(_) => cmd_smear(&cfg),
        Command::Train(a) => cmd_train(cfg, a.resume.as_deref(), threads),
        Command::Sample(_) => cmd_sample(&cfg, threads),
        Command::Unfold(_) => cmd_unfold(&cfg, threads),
        Command::Eval(_) => cmd_eval(&cfg, threads),
        Command::Bench(_) => cmd_bench(&cfg, threads),
    }
}

fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::Config(format!("missing {what}")))
}

fn set_tolerance(cfg: &mut RunConfig, tol: Option<f64>) {
    if let Some(t) = tol {
        cfg.solver.atol = t;
        cfg.solver.rtol = t;
    }
}

// ---- flag application ----

fn mock_flags(cfg: &mut RunConfig, a: &MockArgs) -> Result<()> {
    let family = match &a.family {
        Some(f) => Some(f.parse::<MockFamily>()?),
        None => None,
    };
    let mut spec = match cfg.dataset.mock.take() {
        Some(s) => s,
        None => MockSpec::new(
            family.ok_or_else(|| Error::Config("mock needs --family or a [dataset.mock] section".into()))?,
            a.n.unwrap_or(100_000),
            a.seed.unwrap_or(cfg.seed),
        ),
    };
    if let Some(f) = family {
        spec.family = f;
    }
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(s) = a.shift {
        spec.shift = s;
    }
    if let Some(loc) = a.loc {
        if spec.family != MockFamily::Delta {
            return Err(Error::Config("--loc applies to the delta family only".into()));
        }
        spec.shift = loc;
    }
    cfg.dataset.mock = Some(spec);
    Ok(())
}

fn smear_flags(cfg: &mut RunConfig, a: &SmearArgs) {
    if a.data.is_some() {
        cfg.dataset.path = a.data.clone();
    }
    if let Some(s) = a.sigma {
        cfg.smear.sigma_smear = s;
    }
    if let Some(k) = a.k {
        cfg.smear.k = k;
    }
    if let Some(s) = a.seed {
        cfg.smear.seed = s;
    }
}

fn train_flags(cfg: &mut RunConfig, a: &TrainArgs) {
    if let Some(m) = a.mode {
        cfg.model.mode = m;
    }
    if a.data.is_some() {
        cfg.dataset.path = a.data.clone();
    }
    if let Some(e) = a.epochs {
        cfg.train.max_epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(h) = a.hidden {
        cfg.model.hidden = h;
    }
    if let Some(b) = a.blocks {
        cfg.model.blocks = b;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(v) = a.validation_subset {
        cfg.train.validation_subset = v;
    }
}

fn sample_flags(cfg: &mut RunConfig, a: &SampleArgs) {
    if a.checkpoint.is_some() {
        cfg.sample.checkpoint = a.checkpoint.clone();
    }
    if let Some(n) = a.n {
        cfg.sample.n = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    set_tolerance(cfg, a.tol);
}

fn unfold_flags(cfg: &mut RunConfig, a: &UnfoldArgs) {
    if a.checkpoint.is_some() {
        cfg.sample.checkpoint = a.checkpoint.clone();
    }
    if a.data.is_some() {
        cfg.dataset.path = a.data.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    set_tolerance(cfg, a.tol);
}

fn eval_flags(cfg: &mut RunConfig, a: &EvalArgs) {
    if a.gen.is_some() {
        cfg.eval.gen = a.gen.clone();
    }
    if a.truth.is_some() {
        cfg.eval.truth = a.truth.clone();
    }
    if a.train.is_some() {
        cfg.eval.train = a.train.clone();
    }
    if a.histograms {
        cfg.eval.histograms = true;
    }
}

fn bench_flags(cfg: &mut RunConfig, a: &BenchArgs) {
    if a.checkpoint.is_some() {
        cfg.sample.checkpoint = a.checkpoint.clone();
    }
    if a.data.is_some() {
        cfg.dataset.path = a.data.clone();
    }
    if let Some(v) = a.iterations {
        cfg.bench.train_iterations = v;
    }
    if let Some(v) = a.batch {
        cfg.bench.train_batch = v;
    }
    if let Some(v) = a.runs {
        cfg.bench.inference_runs = v;
    }
    if let Some(v) = a.samples {
        cfg.bench.inference_samples = v;
    }
    set_tolerance(cfg, a.tol);
}

// ---- summaries ----

/// Count, range and moments of one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub count: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

fn summarize(xs: &[f64]) -> ColumnSummary {
    let n = xs.len();
    if n == 0 {
        return ColumnSummary { count: 0, min: None, max: None, mean: None, std: None, skewness: None, excess_kurtosis: None };
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let m = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / nf;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let shape = m2 > 0.0;
    ColumnSummary {
        count: n,
        min: Some(xs.iter().copied().fold(f64::INFINITY, f64::min)),
        max: Some(xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        mean: Some(mean),
        std: Some(m2.sqrt()),
        skewness: shape.then(|| m3 / m2.powf(1.5)),
        excess_kurtosis: shape.then(|| m4 / (m2 * m2) - 3.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockSummary {
    pub spec: MockSpec,
    pub summary: ColumnSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedSummary {
    pub t: ColumnSummary,
    pub m_pipi: ColumnSummary,
    pub recoil_shell_offset: ColumnSummary,
    /// Events whose pion pair has an unphysical invariant mass.
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmearSummary {
    pub rows: usize,
    pub truth_std: Vec<Option<f64>>,
    pub detector_std: Vec<Option<f64>>,
    pub truth_derived: DerivedSummary,
    pub detector_derived: DerivedSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub events: usize,
    pub nfe_mean: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub atol: f64,
    pub rtol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean: f64,
    pub std: f64,
    pub samples: Vec<f64>,
}

impl TimingStats {
    fn new(samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n.max(1.0);
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt(), samples }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTraining {
    pub iterations: usize,
    pub batch: usize,
    pub ms_per_iteration: TimingStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchInference {
    pub runs: usize,
    pub samples: usize,
    pub atol: f64,
    pub rtol: f64,
    pub events_per_second: TimingStats,
    pub nfe_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: NetMode,
    pub parameters: usize,
    pub training: BenchTraining,
    pub inference: BenchInference,
}

// ---- commands ----

fn cmd_mock(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.dataset.mock.clone().expect("mock flags fill the spec");
    let mut run = RunDir::create(&cfg.output, "mock", cfg)?;
    let data = sample_mock(&spec)?;
    save_events(run.output("events.ev"), &EventFile::plain(data.clone()))?;
    let summary = MockSummary { spec, summary: summarize(&data.column_f64(0)) };
    run.write_json("summary.json", &summary)?;
    say!("wrote {} events to {}", data.n_events(), run.dir.join("events.ev").display());
    run.finish()
}

fn derived_summary(m: &FeatureMatrix) -> DerivedSummary {
    let (mut t, mut mpp, mut off, mut failures) = (Vec::new(), Vec::new(), Vec::new(), 0);
    for i in 0..m.n_events() {
        match derive_kinematics(&m.row_f64(i)) {
            Ok(d) => {
                t.push(d.t);
                mpp.push(d.m_pipi);
                off.push(d.recoil_shell_offset);
            }
            Err(_) => failures += 1,
        }
    }
    DerivedSummary {
        t: summarize(&t),
        m_pipi: summarize(&mpp),
        recoil_shell_offset: summarize(&off),
        failures,
    }
}

fn cmd_smear(cfg: &RunConfig) -> Result<()> {
    let path = require(&cfg.dataset.path, "input events (--data or dataset.path)")?;
    cfg.smear.validate()?;
    let file = load_events(&path)?;
    if file.layout != Layout::Plain || file.data.n_features() != N_FEATURES {
        return Err(Error::Shape(format!(
            "smearing needs a plain {N_FEATURES}-feature truth file, got {} features ({:?})",
            file.data.n_features(),
            file.layout
        )));
    }
    file.data.require_space(Space::Physical)?;
    let mut run = RunDir::create(&cfg.output, "smear", cfg)?;
    run.input("truth", &path)?;
    let truth = file.data;
    let detector = smear_matrix(&truth, &cfg.smear)?;
    save_events(run.output("paired.ev"), &EventFile::paired(&truth, &detector)?)?;
    let stds = |m: &FeatureMatrix| m.columns_f64().iter().map(|c| summarize(c).std).collect();
    let summary = SmearSummary {
        rows: truth.n_events(),
        truth_std: stds(&truth),
        detector_std: stds(&detector),
        truth_derived: derived_summary(&truth),
        detector_derived: derived_summary(&detector),
    };
    run.write_json("summary.json", &summary)?;
    say!("smeared {} events (sigma_smear = {})", summary.rows, cfg.smear.sigma_smear);
    run.finish()
}

fn training_blocks(file: &EventFile, task: Task) -> Result<(FeatureMatrix, Option<FeatureMatrix>)> {
    let (truth, detector) = match (file.layout, task) {
        (Layout::Paired, Task::Unfold) => {
            let (t, d) = file.split_pair()?;
            (t, Some(d))
        }
        (Layout::Paired, Task::Generate) => (file.split_pair()?.0, None),
        (Layout::Plain, Task::Generate) => (file.data.clone(), None),
        (Layout::Plain, Task::Unfold) => {
            return Err(Error::Validation("unfolding needs a paired truth/detector file".into()))
        }
    };
    truth.require_space(Space::Physical)?;
    Ok((truth, detector))
}

/// Keeps the log records of epochs before `after` (resume truncates the rest).
fn truncate_log(path: &Path, after: usize) -> Result<()> {
    let Ok(f) = fs::File::open(path) else {
        return fs::write(path, "").map_err(|e| Error::io(path, e));
    };
    let mut kept = String::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Ok(rec) = serde_json::from_str::<EpochLog>(&line) {
            if rec.epoch <= after {
                kept.push_str(&line);
                kept.push('\n');
            }
        }
    }
    fs::write(path, kept).map_err(|e| Error::io(path, e))
}

fn cmd_train(mut cfg: RunConfig, resume: Option<&Path>, threads: usize) -> Result<()> {
    let path = require(&cfg.dataset.path, "training events (--data or dataset.path)")?;
    let resumed = match resume {
        Some(p) => {
            let rec = load_checkpoint(p)?;
            rec.require_mode(cfg.model.mode.net_mode())?;
            cfg.train = crate::train::TrainConfig { max_epochs: cfg.train.max_epochs, ..rec.train.clone() };
            cfg.model.hidden = rec.net.hidden;
            cfg.model.blocks = rec.net.blocks;
            cfg.model.time = rec.net.time.clone();
            cfg.model.cond_hidden = rec.net.cond_hidden;
            cfg.model.cond_embed = rec.net.cond_embed;
            Some((p.to_path_buf(), rec))
        }
        None => None,
    };
    let file = load_events(&path)?;
    let (truth, detector) = training_blocks(&file, cfg.model.mode)?;
    let stats = match &resumed {
        Some((_, rec)) => rec.stats.clone(),
        None => fit_preprocess(&truth, cfg.preprocess.scale)?,
    };
    let data = TrainData {
        truth: apply_preprocess(&truth, &stats)?,
        detector: detector.map(|d| apply_preprocess(&d, &stats)).transpose()?,
        stats,
    };
    let mut run = RunDir::create(&cfg.output, "train", &cfg)?;
    run.input("data", &path)?;
    let log_path = run.output("epochs.jsonl");
    let last_path = run.output("last.ckpt");
    let best_path = run.output("best.ckpt");
    match &resumed {
        Some((p, rec)) => {
            run.input("resume", p)?;
            truncate_log(&log_path, rec.epoch)?;
        }
        None => fs::write(&log_path, "").map_err(|e| Error::io(&log_path, e))?,
    }
    let mut log = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let observer = |e: &crate::train::EpochEnd| -> Result<()> {
        writeln!(log, "{}", e.log.to_json_line()).map_err(|err| Error::io(&log_path, err))?;
        log.flush().map_err(|err| Error::io(&log_path, err))?;
        save_checkpoint(&last_path, &e.state.snapshot())?;
        if e.improved {
            save_checkpoint(&best_path, &e.state.snapshot())?;
        }
        say!(
            "epoch {:>4}  loss {:.5}  val {:.5}  chi2 {}  W1 {:.4e}  nfe {:.1}  lr {:.2e}",
            e.log.epoch,
            e.log.train_loss,
            e.log.val_loss,
            e.log.chi2_mean.map_or("-".into(), |v| format!("{v:.3}")),
            e.log.wasserstein_mean,
            e.log.nfe_mean,
            e.log.lr
        );
        Ok(())
    };
    let outcome = match resumed {
        Some((_, rec)) => train_from(TrainState::resume(rec, cfg.train.max_epochs)?, &data, threads, observer)?,
        None => {
            let net = cfg.model.net_config(truth.n_features());
            train(net, &data, &cfg.train, threads, observer)?
        }
    };
    if outcome.log.is_empty() {
        save_checkpoint(&last_path, &outcome.last)?;
        if let Some(best) = &outcome.best {
            save_checkpoint(&best_path, best)?;
        }
    }
    if let Some(best) = &outcome.best {
        say!("best epoch {} (monitored {:?})", best.epoch, best.monitored);
    }
    run.finish()
}

fn load_model(cfg: &RunConfig, mode: NetMode) -> Result<(PathBuf, CheckpointRecord)> {
    let path = require(&cfg.sample.checkpoint, "checkpoint (--checkpoint or sample.checkpoint)")?;
    let rec = load_checkpoint(&path)?;
    rec.require_mode(mode)?;
    Ok((path, rec))
}

fn cmd_sample(cfg: &RunConfig, threads: usize) -> Result<()> {
    cfg.solver.validate()?;
    let (ckpt, rec) = load_model(cfg, NetMode::Unconditional)?;
    let mut run = RunDir::create(&cfg.output, "sample", cfg)?;
    run.input("checkpoint", &ckpt)?;
    let out = generate(&rec.network()?, &rec.stats, cfg.sample.n, &cfg.solver, cfg.seed, threads)?;
    save_events(run.output("samples.ev"), &EventFile::plain(out.events.clone()))?;
    let summary = SampleSummary {
        events: out.events.n_events(),
        nfe_mean: out.nfe_mean,
        accepted_steps: out.accepted_steps,
        rejected_steps: out.rejected_steps,
        atol: cfg.solver.atol,
        rtol: cfg.solver.rtol,
    };
    run.write_json("summary.json", &summary)?;
    say!(
        "generated {} events; mean NFE {:.1} ({} accepted, {} rejected steps)",
        summary.events, summary.nfe_mean, summary.accepted_steps, summary.rejected_steps
    );
    run.finish()
}

fn detector_block(file: &EventFile) -> Result<FeatureMatrix> {
    let d = match file.layout {
        Layout::Paired => file.split_pair()?.1,
        Layout::Plain => file.data.clone(),
    };
    d.require_space(Space::Physical)?;
    Ok(d)
}

fn cmd_unfold(cfg: &RunConfig, threads: usize) -> Result<()> {
    cfg.solver.validate()?;
    let (ckpt, rec) = load_model(cfg, NetMode::Conditional)?;
    let path = require(&cfg.dataset.path, "detector events (--data or dataset.path)")?;
    let detector = detector_block(&load_events(&path)?)?;
    let mut run = RunDir::create(&cfg.output, "unfold", cfg)?;
    run.input("checkpoint", &ckpt)?;
    run.input("detector", &path)?;
    let out = unfold(&rec.network()?, &rec.stats, &detector, &cfg.solver, cfg.seed, threads)?;
    save_events(run.output("unfolded.ev"), &EventFile::plain(out.events.clone()))?;
    let summary = SampleSummary {
        events: out.events.n_events(),
        nfe_mean: out.nfe_mean,
        accepted_steps: out.accepted_steps,
        rejected_steps: out.rejected_steps,
        atol: cfg.solver.atol,
        rtol: cfg.solver.rtol,
    };
    run.write_json("summary.json", &summary)?;
    say!("unfolded {} events; mean NFE {:.1}", summary.events, summary.nfe_mean);
    run.finish()
}

/// Truth block of a paired file, or the whole plain file.
fn truth_block(file: &EventFile) -> Result<FeatureMatrix> {
    match file.layout {
        Layout::Paired => Ok(file.split_pair()?.0),
        Layout::Plain => Ok(file.data.clone()),
    }
}

fn cmd_eval(cfg: &RunConfig, threads: usize) -> Result<()> {
    let gen_path = require(&cfg.eval.gen, "generated events (--gen)")?;
    let truth_path = require(&cfg.eval.truth, "truth events (--truth)")?;
    let gen = truth_block(&load_events(&gen_path)?)?;
    let truth = truth_block(&load_events(&truth_path)?)?;
    if gen.n_features() != truth.n_features() {
        return Err(Error::Shape(format!(
            "generated events have {} features, truth {}",
            gen.n_features(),
            truth.n_features()
        )));
    }
    let mut run = RunDir::create(&cfg.output, "eval", cfg)?;
    run.input("gen", &gen_path)?;
    run.input("truth", &truth_path)?;
    let train_events = match &cfg.eval.train {
        Some(p) => {
            run.input("train", p)?;
            Some(truth_block(&load_events(p)?)?)
        }
        None => None,
    };
    let stats = match &train_events {
        Some(t) => Some(fit_preprocess(t, cfg.preprocess.scale)?),
        None => None,
    };
    let opts = EvalOptions {
        nn: crate::metrics::NnConfig { threads, ..cfg.eval.nn.clone() },
        stats,
        nfe_mean: None,
        skip_pairwise: false,
    };
    let report = evaluate(&gen, &truth, train_events.as_ref(), &opts)?;
    run.write_json("metrics.json", &report)?;
    if cfg.eval.histograms {
        run.write_json("histograms.json", &histogram_dump(&gen, &truth, BINS_1D)?)?;
    }
    say!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    run.finish()
}

fn cmd_bench(cfg: &RunConfig, threads: usize) -> Result<()> {
    cfg.solver.validate()?;
    let path = require(&cfg.sample.checkpoint, "checkpoint (--checkpoint)")?;
    let rec = load_checkpoint(&path)?;
    let b = &cfg.bench;
    if b.train_iterations == 0 || b.train_batch == 0 || b.inference_runs == 0 || b.inference_samples == 0 {
        return Err(Error::Config("bench sizes must be positive".into()));
    }
    let mut run = RunDir::create(&cfg.output, "bench", cfg)?;
    run.input("checkpoint", &path)?;
    let dim = rec.net.dim;
    let mode = rec.mode();
    let (truth, detector) = match &cfg.dataset.path {
        Some(p) => {
            run.input("data", p)?;
            let file = load_events(p)?;
            let task = if mode == NetMode::Conditional { Task::Unfold } else { Task::Generate };
            let (t, d) = training_blocks(&file, task)?;
            (
                apply_preprocess(&t, &rec.stats)?,
                d.map(|d| apply_preprocess(&d, &rec.stats)).transpose()?,
            )
        }
        None => {
            let normal = |stream: u64, n: usize| -> Result<FeatureMatrix> {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream));
                let v: Vec<f32> = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                FeatureMatrix::new(Matrix::from_vec(n, dim, v)?, Space::Standardized)
            };
            let n = b.train_batch.max(b.inference_samples);
            (normal(1, n)?, (mode == NetMode::Conditional).then(|| normal(2, n)).transpose()?)
        }
    };

    let mut net = rec.network()?;
    let mut opt = OptimizerState::for_params(net.params());
    let mut cache = ActivationCache::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows: Vec<usize> = (0..b.train_batch).map(|i| i % truth.n_events()).collect();
    let mut train_ms = Vec::with_capacity(b.train_iterations);
    for _ in 0..b.train_iterations {
        let start = Instant::now();
        let batch = cfm_batch_for_rows(&truth, detector.as_ref(), &rows, &mut rng)?;
        let (_, grads) = cfm_loss_and_grad(&net, &batch, &mut cache)?;
        adamw_step(net.params_mut(), &grads, &mut opt, cfg.train.learning_rate, cfg.train.weight_decay)?;
        train_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }

    let net = rec.network()?;
    let mut rates = Vec::with_capacity(b.inference_runs);
    let mut nfe = 0.0;
    for r in 0..b.inference_runs {
        let start = Instant::now();
        let out = match &detector {
            None => generate(&net, &rec.stats, b.inference_samples, &cfg.solver, cfg.seed + r as u64, threads)?,
            Some(d) => {
                let idx: Vec<usize> = (0..b.inference_samples).map(|i| i % d.n_events()).collect();
                unfold(&net, &rec.stats, &d.select_rows(&idx), &cfg.solver, cfg.seed + r as u64, threads)?
            }
        };
        rates.push(b.inference_samples as f64 / start.elapsed().as_secs_f64());
        nfe = out.nfe_mean;
    }
    let report = BenchReport {
        mode,
        parameters: net.parameter_count(),
        training: BenchTraining {
            iterations: b.train_iterations,
            batch: b.train_batch,
            ms_per_iteration: TimingStats::new(train_ms),
        },
        inference: BenchInference {
            runs: b.inference_runs,
            samples: b.inference_samples,
            atol: cfg.solver.atol,
            rtol: cfg.solver.rtol,
            events_per_second: TimingStats::new(rates),
            nfe_mean: nfe,
        },
    };
    run.write_json("bench.json", &report)?;
    say!(
        "training: {:.1} ± {:.1} ms/iteration (batch {})\ninference: {:.0} ± {:.0} events/s (tol {:.0e}, NFE {:.1})",
        report.training.ms_per_iteration.mean,
        report.training.ms_per_iteration.std,
        b.train_batch,
        report.inference.events_per_second.mean,
        report.inference.events_per_second.std,
        cfg.solver.atol,
        nfe
    );
    run.finish()
}
