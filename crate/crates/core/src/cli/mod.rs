//! The `sparse-coders` command line: `datagen`, `train`, `eval`, `ablate` and
//! `compare`, each driven by a flat `key=value` config file whose keys can
//! also be given as `--key=value`.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::coder::{evaluate_batch, fvu, Activation, CoderConfig, CoderKind, Estimator};
use crate::datagen::{
    read_ground_truth, sample_batch, write_codes, write_ground_truth, write_shard, ActivationShard,
    DataBatch, GroundTruth, SyntheticSpec, Teacher,
};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, binned_ablation, class_labels, dense_latents, designate_features, flag_ultra_high,
    labels_from_codes, learned_directions, oracle_f1, patch_loss_increase, recovery_with,
    sparse_probe, Downstream, FeatureStats, MatchStrategy, ProbeConfig, Readout, ReadoutFit,
    MAJORITY_THRESHOLD, ULTRA_HIGH_THRESHOLD,
};
use crate::optim::OptimizerKind;
use crate::rng::{mix64, Rng};
use crate::train::{train, BatchSource, BiasInit, ShardSource, SyntheticSource, TrainConfig};

pub use config::Config;

#[derive(Debug, Parser)]
#[command(
    name = "sparse-coders",
    version,
    about = "Train and evaluate sparse autoencoders and transcoders",
    after_help = "Any config key can also be passed as --key=value after the subcommand."
)]
struct Cli {
    /// Seed for every random stream (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic activation shards with a known dictionary.
    Datagen { config: Option<PathBuf> },
    /// Train a coder on shards or on freshly sampled synthetic data.
    Train { config: Option<PathBuf> },
    /// Score a checkpoint: firing rates, recovery, F1, FVU.
    Eval { config: Option<PathBuf> },
    /// Zero-ablate score-binned groups of latents.
    Ablate { config: Option<PathBuf> },
    /// Tabulate several eval summaries side by side.
    Compare {
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
    },
}

const GLOBAL_FLAGS: [&str; 3] = ["seed", "out", "threads"];

/// Splits `--key=value` overrides (other than the global flags) from the
/// arguments clap should see.
fn split_overrides(args: Vec<OsString>) -> (Vec<OsString>, Vec<String>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for (i, a) in args.into_iter().enumerate() {
        let s = a.to_string_lossy();
        let is_override = i > 0
            && s.starts_with("--")
            && s.split_once('=')
                .is_some_and(|(k, _)| !GLOBAL_FLAGS.contains(&&k[2..]));
        if is_override {
            overrides.push(s.into_owned());
        } else {
            rest.push(a);
        }
    }
    (rest, overrides)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let (args, overrides) = split_overrides(args.into_iter().map(Into::into).collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli, &overrides) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, overrides: &[String]) -> Result<()> {
    if cli.threads > 0 {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let load = |path: &Option<PathBuf>, seeded: bool| -> Result<Config> {
        let mut cfg = match path {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        for o in overrides {
            cfg.set_override(o)?;
        }
        // eval and ablate are deterministic and ignore --seed
        if let (Some(seed), true) = (cli.seed, seeded) {
            cfg.set("seed", &seed.to_string(), Path::new("--seed"));
        }
        Ok(cfg)
    };
    let out = &cli.out;
    match &cli.command {
        Command::Datagen { config } => cmd_datagen(&load(config, true)?, out),
        Command::Train { config } => cmd_train(&load(config, true)?, out),
        Command::Eval { config } => cmd_eval(&load(config, false)?, out).map(|_| ()),
        Command::Ablate { config } => cmd_ablate(&load(config, false)?, out),
        Command::Compare { summaries } => {
            if !overrides.is_empty() {
                return Err(Error::invalid("compare takes no config keys"));
            }
            cmd_compare(summaries, out)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Either plain SAE data (targets = inputs) or transcoder data with a
/// teacher network producing targets.
fn synthetic_setup(cfg: &Config) -> Result<(GroundTruth, Option<Teacher>)> {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        seed: cfg.get_or("seed", 0)?,
        m_true: cfg.get_or("m_true", d.m_true)?,
        d_in: cfg.get_or("d_in", d.d_in)?,
        k_true: cfg.get_or("k_true", d.k_true)?,
        freq_decades: cfg.get_or("freq_decades", d.freq_decades)?,
        binary_codes: cfg.get_or("binary_codes", d.binary_codes)?,
        amplitude_low: cfg.get_or("amplitude_low", d.amplitude_low)?,
        amplitude_high: cfg.get_or("amplitude_high", d.amplitude_high)?,
        noise_sigma: cfg.get_or("noise_sigma", d.noise_sigma)?,
    };
    let mode: String = cfg.get_or("mode", "sae".to_string())?;
    let teacher = match mode.as_str() {
        "sae" => None,
        "transcoder" => {
            let d_out = cfg.get_or("d_out", spec.d_in)?;
            let hidden = cfg.get_or("teacher_hidden", 4 * spec.d_in)?;
            Some(Teacher::new(mix64(spec.seed ^ 0x7465_6163), spec.d_in, hidden, d_out)?)
        }
        other => return Err(cfg.error("mode", format!("expected sae or transcoder, got {other}"))),
    };
    Ok((GroundTruth::generate(&spec)?, teacher))
}

fn dataset_summary(batches: &[DataBatch], gt: &GroundTruth) -> String {
    let tokens: usize = batches.iter().map(|b| b.len()).sum();
    let active: usize = batches
        .iter()
        .filter_map(|b| b.codes.as_ref())
        .map(|c| (0..c.n_rows()).map(|t| c.row(t).0.len()).sum::<usize>())
        .sum();
    let norm: f64 = batches
        .iter()
        .flat_map(|b| b.x.rows().into_iter().collect::<Vec<_>>())
        .map(|r| r.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt())
        .sum();
    let b0 = &batches[0];
    let mut s = String::new();
    let _ = writeln!(s, "shards={}", batches.len());
    let _ = writeln!(s, "tokens={tokens}");
    let _ = writeln!(s, "d_in={}", b0.x.ncols());
    let _ = writeln!(s, "d_out={}", b0.y.ncols());
    let _ = writeln!(s, "m_true={}", gt.m_true());
    let _ = writeln!(s, "mean_active_features={}", active as f64 / tokens as f64);
    let _ = writeln!(s, "mean_input_norm={}", norm / tokens as f64);
    s
}

/// Writes `shard_NNN.sbsh` files with `.sbcd` code sidecars, the ground
/// truth (`ground_truth.sbgt`) and `dataset.txt`.
pub fn cmd_datagen(cfg: &Config, out: &Path) -> Result<()> {
    let (gt, teacher) = synthetic_setup(cfg)?;
    let count: usize = cfg.get_or("count", 65_536)?;
    let shards: usize = cfg.get_or("shards", 1)?;
    cfg.finish()?;
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    if shards == 0 {
        return Err(Error::invalid("shards must be at least 1"));
    }
    create_dir(out)?;
    let mut batches = Vec::with_capacity(shards);
    for i in 0..shards {
        let mut rng = Rng::stream(mix64(gt.seed ^ 0x6461_7461), i as u64);
        let batch = sample_batch(&gt, teacher.as_ref(), count, &mut rng)?;
        let shard = match teacher {
            None => ActivationShard::sae(batch.x.clone()),
            Some(_) => ActivationShard::transcoder(batch.x.clone(), batch.y.clone())?,
        };
        write_shard(out.join(format!("shard_{i:03}.sbsh")), &shard)?;
        if let Some(c) = &batch.codes {
            write_codes(out.join(format!("shard_{i:03}.sbcd")), c)?;
        }
        batches.push(batch);
    }
    write_ground_truth(out.join("ground_truth.sbgt"), &gt, teacher.as_ref())?;
    let summary = dataset_summary(&batches, &gt);
    write_text(&out.join("dataset.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn parse_enum<T: std::str::FromStr>(cfg: &Config, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    cfg.get_or(key, default)
}

fn coder_config(cfg: &Config, d_in: usize, d_out: usize, k: usize) -> Result<CoderConfig> {
    let kind: CoderKind = parse_enum(cfg, "kind", CoderKind::Sae)?;
    let mut c = CoderConfig::new(kind, d_in, d_out, cfg.get_or("n_latents", 512)?, k);
    c.activation = parse_enum(cfg, "activation", Activation::TopK)?;
    c.binary = cfg.get_or("binary", false)?;
    c.estimator = parse_enum(cfg, "estimator", Estimator::SigmoidSte)?;
    c.ste_temperature = cfg.get_or("ste_temperature", c.ste_temperature)?;
    c.gumbel_temperature = cfg.get_or("gumbel_temperature", c.gumbel_temperature)?;
    c.validate().map_err(|e| cfg.error("kind", e.to_string()))?;
    Ok(c)
}

fn ground_truth_for(cfg: &Config, data_dir: &Path) -> Result<Option<(GroundTruth, Option<Teacher>)>> {
    let explicit: Option<PathBuf> = cfg.get("ground_truth")?;
    let path = explicit.unwrap_or_else(|| data_dir.join("ground_truth.sbgt"));
    if cfg.contains("ground_truth") || path.exists() {
        Ok(Some(read_ground_truth(&path)?))
    } else {
        Ok(None)
    }
}

/// Trains one coder per requested `k`; outputs `train_log.csv` and
/// checkpoints under `out` (or `out/k{k}` when sweeping).
pub fn cmd_train(cfg: &Config, out: &Path) -> Result<()> {
    let data_dir: Option<PathBuf> = cfg.get("data_dir")?;
    let synthetic: bool = cfg.get_or("synthetic", false)?;
    let (mut source, gt): (Box<dyn BatchSource>, Option<GroundTruth>) = match (data_dir, synthetic) {
        (Some(_), true) => {
            return Err(cfg.error("data_dir", "conflicts with synthetic=true; choose one data source"))
        }
        (None, false) => {
            return Err(cfg.error("data_dir", "no data source; set data_dir or synthetic=true"))
        }
        (Some(dir), false) => {
            let gt = ground_truth_for(cfg, &dir)?.map(|(g, _)| g);
            (Box::new(ShardSource::open(&dir)?), gt)
        }
        (None, true) => {
            let (gt, teacher) = synthetic_setup(cfg)?;
            let seed = mix64(gt.seed ^ 0x7374_7265);
            (Box::new(SyntheticSource::new(gt.clone(), teacher, seed)), Some(gt))
        }
    };
    let (d_in, d_out) = source.dims();
    let ks: Vec<usize> = cfg.get_list("k")?.unwrap_or_else(|| vec![8]);
    let resume: Option<PathBuf> = cfg.get("resume")?;
    if resume.is_some() && ks.len() > 1 {
        return Err(cfg.error("resume", "cannot resume a k sweep"));
    }
    let mut runs = Vec::new();
    for &k in &ks {
        let coder = coder_config(cfg, d_in, d_out, k)?;
        let mut tc = TrainConfig::new(coder);
        if let Some(o) = cfg.get::<OptimizerKind>("optimizer")? {
            tc = tc.with_optimizer(o);
        }
        let batch = cfg.get_or("batch_size", tc.batch_size)?;
        let steps = cfg.get_or("steps", tc.steps())?;
        tc = tc.with_steps(steps, batch);
        tc.lr = cfg.get_or("lr", tc.lr)?;
        tc.warmup_steps = cfg.get_or("warmup_steps", tc.warmup_steps)?;
        tc.momentum = cfg.get_or("momentum", tc.momentum)?;
        tc.log_every = cfg.get_or("log_every", tc.log_every)?;
        tc.dead_window_tokens = cfg.get_or("dead_window_tokens", tc.dead_window_tokens)?;
        tc.seed = cfg.get_or("seed", 0)?;
        tc.bias_init = parse_enum(cfg, "bias_init", BiasInit::Mean)?;
        tc.init_samples = cfg.get_or("init_samples", tc.init_samples)?;
        tc.prefetch = cfg.get_or("prefetch", false)?;
        let dir = if ks.len() == 1 {
            out.to_path_buf()
        } else {
            out.join(format!("k{k}"))
        };
        tc.checkpoint_dir = Some(dir.clone());
        tc.validate().map_err(|e| cfg.error("steps", e.to_string()))?;
        runs.push((tc, dir));
    }
    cfg.finish()?;
    let resume = resume.map(Checkpoint::load).transpose()?;
    for (tc, dir) in runs {
        create_dir(&dir)?;
        let outcome = train(&tc, source.as_mut(), gt.as_ref(), resume.clone())?;
        outcome.log.write_csv(dir.join("train_log.csv"))?;
        if let Some(last) = outcome.log.last() {
            println!(
                "{} k={} step={} loss={} fvu={} dead_fraction={}",
                tc.coder.variant_name(),
                tc.coder.k,
                last.step,
                last.loss,
                last.fvu,
                last.dead_fraction
            );
        }
    }
    Ok(())
}

/// Everything `eval` reports, in summary order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub entries: Vec<(String, String)>,
}

impl EvalSummary {
    fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

struct EvalData {
    ck: Checkpoint,
    batch: DataBatch,
    gt: Option<(GroundTruth, Option<Teacher>)>,
}

fn load_eval_data(cfg: &Config) -> Result<EvalData> {
    let ck_path: PathBuf = cfg.require("checkpoint")?;
    let dir: PathBuf = cfg.require("data_dir")?;
    let ck = Checkpoint::load(&ck_path)?;
    let src = ShardSource::open(&dir)?;
    let c = &ck.config;
    if src.dims() != (c.d_in, c.d_out) {
        return Err(Error::DimMismatch(format!(
            "checkpoint expects ({}, {}) but {} holds {:?}",
            c.d_in,
            c.d_out,
            dir.display(),
            src.dims()
        )));
    }
    if (c.kind == CoderKind::Sae) != src.is_sae() {
        return Err(Error::DimMismatch(format!(
            "{} checkpoint cannot be scored on {} shards",
            c.kind,
            if src.is_sae() { "SAE" } else { "transcoder" }
        )));
    }
    let n: usize = cfg.get_or("eval_tokens", 0)?;
    let batch = if n == 0 || n >= src.len() {
        src.all()
    } else {
        src.window(0, n)
    };
    let gt = ground_truth_for(cfg, &dir)?;
    Ok(EvalData { ck, batch, gt })
}

/// Readout head fit on the first tokens' true targets, with labels from the
/// most frequent ground-truth features.
fn fit_readout(cfg: &Config, data: &EvalData) -> Result<Option<(Readout, Vec<usize>)>> {
    let classes: usize = cfg.get_or("readout_classes", 8)?;
    let fit_tokens: usize = cfg.get_or("readout_tokens", 10_000)?;
    let (Some((gt, _)), Some(codes)) = (&data.gt, &data.batch.codes) else {
        return Ok(None);
    };
    let designated = designate_features(gt, classes.min(gt.m_true()))?;
    let labels = class_labels(codes, &designated);
    let n = fit_tokens.clamp(1, labels.len());
    let head = Readout::fit(
        data.batch.y.slice(ndarray::s![..n, ..]),
        &labels[..n],
        designated.len() + 1,
        ReadoutFit::default(),
    )?;
    Ok(Some((head, labels)))
}

fn opt_csv(v: Option<impl ToString>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// Writes `firing_rates.csv`, `recovery.csv`, `f1.csv` (when ground truth is
/// available) and `summary.txt`.
pub fn cmd_eval(cfg: &Config, out: &Path) -> Result<EvalSummary> {
    let data = load_eval_data(cfg)?;
    let threshold: f64 = cfg.get_or("ultra_threshold", ULTRA_HIGH_THRESHOLD)?;
    let strategy = match cfg.get_or("match", "greedy".to_string())?.as_str() {
        "greedy" => MatchStrategy::Greedy,
        "optimal" => MatchStrategy::Optimal,
        other => return Err(cfg.error("match", format!("expected greedy or optimal, got {other}"))),
    };
    let probe_tokens: usize = cfg.get_or("probe_tokens", 10_000)?;
    let readout = fit_readout(cfg, &data)?;
    cfg.finish()?;

    let coder = &data.ck.config;
    let params = data.ck.eval_params();
    let batch = &data.batch;
    let eval = evaluate_batch(coder, &params, batch.x.view(), None)?;
    let stats = FeatureStats::from_active(coder.n_latents, &eval.active);
    let ultra = flag_ultra_high(&stats, threshold)?;
    let majority = flag_ultra_high(&stats, MAJORITY_THRESHOLD)?;

    let mut s = EvalSummary { entries: Vec::new() };
    s.push("variant", coder.variant_name());
    s.push("k", coder.k);
    s.push("n_latents", coder.n_latents);
    s.push("tokens", stats.tokens_evaluated);
    s.push("fvu", fvu(eval.y_hat.view(), batch.y.view())?);
    s.push("dead_count", stats.dead().len());
    s.push("ultra_high_count", ultra.len());
    s.push("ultra_high_threshold", threshold);
    s.push("majority_count", majority.len());

    create_dir(out)?;
    let mut csv = String::from("feature,fire_count,firing_rate,ultra_high\n");
    for i in 0..coder.n_latents {
        let _ = writeln!(
            csv,
            "{i},{},{},{}",
            stats.fire_count[i],
            stats.firing_rate[i],
            u8::from(stats.firing_rate[i] > threshold)
        );
    }
    write_text(&out.join("firing_rates.csv"), &csv)?;

    if let Some((gt, _)) = &data.gt {
        let rec = recovery_with(gt, learned_directions(coder, &params), strategy)?;
        let mut csv = String::from("feature,matched_true_feature,cosine\n");
        for i in 0..coder.n_latents {
            let _ = writeln!(csv, "{i},{},{}", opt_csv(rec.matching[i]), rec.similarity[i]);
        }
        write_text(&out.join("recovery.csv"), &csv)?;
        s.push("mmcs", rec.mmcs);

        if let Some(codes) = &batch.codes {
            let f1 = oracle_f1(&eval.active, codes, &rec.matching)?;
            let mut csv = String::from("feature,matched_true_feature,tp,fp,fn,f1\n");
            for (i, f) in f1.features.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{i},{},{},{},{},{}",
                    opt_csv(f.matched_true_feature),
                    f.tp,
                    f.fp,
                    f.fn_,
                    opt_csv(f.f1)
                );
            }
            write_text(&out.join("f1.csv"), &csv)?;
            let scores = f1.scores();
            s.push("scorable_features", f1.scorable());
            if f1.scorable() > 0 {
                s.push("f1_unweighted", aggregate(&scores, &stats, false)?);
                s.push("f1_weighted", aggregate(&scores, &stats, true)?);
            }

            let n = probe_tokens.clamp(1, batch.len());
            let target = designate_features(gt, 1)?;
            let labels = labels_from_codes(&codes.slice(0, n), &target);
            let both = labels.iter().any(|&l| l) && labels.iter().any(|&l| !l);
            if both && n >= 5 {
                let z = dense_latents(coder, &params, batch.x.slice(ndarray::s![..n, ..]))?;
                s.push("probe_accuracy", sparse_probe(z.view(), &labels, ProbeConfig::default())?);
            }
        }
    }
    if coder.kind != CoderKind::Sae {
        if let Some((head, labels)) = &readout {
            let inc = patch_loss_increase(coder, &params, head, batch.x.view(), batch.y.view(), labels)?;
            s.push("loss_increase", inc);
        }
    }
    write_text(&out.join("summary.txt"), &s.to_text())?;
    print!("{}", s.to_text());
    Ok(s)
}

/// Per-feature scores from a CSV with a `feature` column; empty cells mean
/// no score.
pub fn read_scores(path: &Path, column: &str, n_latents: usize) -> Result<Vec<Option<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let bad = |msg: String| Error::DimMismatch(format!("{}: {msg}", path.display()));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("no header".into()))?
        .split(',')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(format!("no `{name}` column")))
    };
    let (fcol, scol) = (col("feature")?, col(column)?);
    let mut scores = vec![None; n_latents];
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let get = |c: usize| cells.get(c).map(|s| s.trim()).unwrap_or("");
        let f: usize = get(fcol)
            .parse()
            .map_err(|_| bad(format!("row {}: bad feature index", i + 1)))?;
        if f >= n_latents {
            return Err(bad(format!("feature {f} outside {n_latents} latents")));
        }
        let v = get(scol);
        if !v.is_empty() {
            scores[f] = Some(v.parse().map_err(|_| bad(format!("row {}: bad score {v:?}", i + 1)))?);
        }
    }
    Ok(scores)
}

/// Writes `ablation.csv`.
pub fn cmd_ablate(cfg: &Config, out: &Path) -> Result<()> {
    let data = load_eval_data(cfg)?;
    let scores_path: PathBuf = cfg.require("scores")?;
    let column: String = cfg.get_or("score_column", "f1".to_string())?;
    let n_bins: usize = cfg.get_or("n_bins", 10)?;
    let downstream: String = cfg.get_or("downstream", "auto".to_string())?;
    let readout = fit_readout(cfg, &data)?;
    cfg.finish()?;

    let coder = &data.ck.config;
    let params = data.ck.eval_params();
    let scores = read_scores(&scores_path, &column, coder.n_latents)?;
    let readout = readout.filter(|_| coder.kind != CoderKind::Sae);
    let ds = match (downstream.as_str(), &readout) {
        ("mse", _) | ("auto", None) => Downstream::Mse,
        ("readout" | "auto", Some((head, labels))) => Downstream::Readout {
            readout: head,
            labels,
        },
        ("readout", None) => {
            return Err(cfg.error(
                "downstream",
                "readout loss needs a transcoder checkpoint, ground truth and code sidecars",
            ))
        }
        (other, _) => {
            return Err(cfg.error("downstream", format!("expected auto, mse or readout, got {other}")))
        }
    };
    let x = data.batch.x.view();
    let eval = evaluate_batch(coder, &params, x, None)?;
    let stats = FeatureStats::from_active(coder.n_latents, &eval.active);
    let curve = binned_ablation(coder, &params, &scores, &stats, x, data.batch.y.view(), n_bins, ds)?;
    create_dir(out)?;
    write_text(&out.join("ablation.csv"), &curve.to_csv())?;
    print!("{}", curve.to_csv());
    Ok(())
}

fn read_summary(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

/// Writes `compare.csv` in long format: one row per (metric, run) with the
/// difference from the first run.
pub fn cmd_compare(paths: &[PathBuf], out: &Path) -> Result<()> {
    if paths.len() < 2 {
        return Err(Error::invalid("compare needs at least two summaries"));
    }
    let runs: Vec<Vec<(String, String)>> = paths.iter().map(|p| read_summary(p)).collect::<Result<_>>()?;
    let numeric = |run: &[(String, String)]| -> Vec<(String, f64)> {
        run.iter()
            .filter_map(|(k, v)| v.parse::<f64>().ok().map(|x| (k.clone(), x)))
            .filter(|(k, _)| k != "k")
            .collect()
    };
    let metrics: Vec<Vec<(String, f64)>> = runs.iter().map(|r| numeric(r)).collect();
    let shared: Vec<String> = metrics[0]
        .iter()
        .map(|(k, _)| k.clone())
        .filter(|k| metrics.iter().all(|m| m.iter().any(|(mk, _)| mk == k)))
        .collect();
    for (p, m) in paths.iter().zip(&metrics) {
        for (k, _) in m {
            if !shared.contains(k) {
                eprintln!("warning: {} metric `{k}` is not in every summary; dropped", p.display());
            }
        }
    }
    let ident = |run: &[(String, String)], key: &str| {
        run.iter()
            .find(|(k, _)| k == key)
            .map_or(String::new(), |(_, v)| v.clone())
    };
    let value = |m: &[(String, f64)], key: &str| m.iter().find(|(k, _)| k == key).unwrap().1;
    let mut csv = String::from("metric,run,variant,k,value,delta\n");
    for key in &shared {
        let base = value(&metrics[0], key);
        for (i, (p, m)) in paths.iter().zip(&metrics).enumerate() {
            let v = value(m, key);
            let _ = writeln!(
                csv,
                "{key},{},{},{},{v},{}",
                p.display(),
                ident(&runs[i], "variant"),
                ident(&runs[i], "k"),
                v - base
            );
        }
    }
    create_dir(out)?;
    write_text(&out.join("compare.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
