use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use appprint::applog::{build_vocabulary, compute_frequencies, load_dataset, EventLog, Owner, Scope};
use appprint::boost::{train_adaboost, BoostAlgorithm, ThresholdSearch};
use appprint::harness::{
    augment_pool, load_base, make_variant, render_base, run_experiment, run_grid, save_base, write_outputs,
    Classifier, ExperimentConfig, GridConfig, ImagePool, RunManifest, Seeds, SplitMode, Variant,
};
use appprint::imager::{write_pgm, RESIZED_SIDE};
use appprint::nnet::{
    activation_grid, build_model, dump_activations, load_checkpoint, save_checkpoint, train, Model, Precision, Real,
    TrainConfig,
};
use appprint::synthgen::{generate_dataset, write_dataset, SynthConfig};
use appprint::{Error, Result};

mod selftest;

#[derive(Parser)]
#[command(name = "appprint", version, about = "Identify users from app-usage day images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-user dataset (manifest + one CSV log per user)
    Synth(SynthArgs),
    /// Parse logs, build the app vocabulary and write frequency tables
    Ingest(DataArgs),
    /// Render unfiltered day images into the cache
    Render(RenderArgs),
    /// Blur and resize rendered day images into a training pool
    Augment(AugmentArgs),
    /// Train one classifier on a whole variant pool and save it
    Train(CellArgs),
    /// Cross-validate one (encoding, variant, classifier) cell
    Evaluate(CellArgs),
    /// Cross-validate every cell of the experiment grid
    Grid(CellArgs),
    /// Rebuild report CSV and SVG files from a reports.json
    Report(ReportArgs),
    /// Write per-layer activation grids of a trained CNN as PGM files
    DumpActivations(DumpArgs),
    /// Run the gradient check and the boosting and metric oracles
    Selftest(SelftestArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration; flags given on the command line override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cache directory for tables, day images and pools [default: cache]
    #[arg(long, env = "APPPRINT_CACHE")]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Number of users [default: 15]
    #[arg(long)]
    users: Option<usize>,
    /// Days per user [default: 40]
    #[arg(long)]
    days: Option<usize>,
    /// Vocabulary size [default: 100]
    #[arg(long)]
    apps: Option<usize>,
    /// Dirichlet concentration of app preferences [default: 0.05]
    #[arg(long)]
    concentration: Option<f64>,
    /// Generator seed [default: 7]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: data]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset manifest [default: <data_dir>/manifest.json]
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    data: DataArgs,
    /// global, local, perday or all [default: all]
    #[arg(long)]
    encoding: Option<String>,
    /// Also export every day image as PGM into this directory
    #[arg(long)]
    pgm: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    common: Common,
    /// global, local, perday or all [default: all]
    #[arg(long)]
    encoding: Option<String>,
    /// Comma-separated blur sizes [default: 1,2,...,15]
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<u8>>,
}

#[derive(Args)]
struct CellArgs {
    #[command(flatten)]
    common: Common,
    /// global, local or perday [default: perday; grid: all three]
    #[arg(long)]
    encoding: Option<Scope>,
    /// all, f1-f7, f8-f15 or dropout [default: all; grid: all four]
    #[arg(long)]
    variant: Option<Variant>,
    /// cnn or adaboost [default: cnn; grid: both]
    #[arg(long)]
    classifier: Option<Classifier>,
    /// Master seed; shuffle, dropout and model seeds derive from it [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Grid cells run concurrently [default: 1]
    #[arg(long)]
    workers: Option<usize>,
    /// CNN arithmetic: fast32 or check64 [default: fast32]
    #[arg(long)]
    precision: Option<Precision>,
    /// Keep all images of a user-day in one fold [default: off]
    #[arg(long)]
    group_by_day: bool,
    /// Boosting variant: samme_r or samme [default: samme_r]
    #[arg(long)]
    boost_algo: Option<BoostAlgorithm>,
    /// Search every stump threshold instead of 256 histogram bins [default: off]
    #[arg(long)]
    exact_stumps: bool,
    /// CNN training epochs [default: 20]
    #[arg(long)]
    epochs: Option<usize>,
    /// Cross-validation folds [default: 5]
    #[arg(long)]
    folds: Option<usize>,
    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// reports.json written by `evaluate` or `grid`
    #[arg(long)]
    input: PathBuf,
    /// Output directory [default: directory of --input]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    common: Common,
    /// CNN checkpoint written by `train`
    #[arg(long)]
    model: PathBuf,
    /// Input image as a PGM file (resized to 50x50 if needed)
    #[arg(long, conflicts_with = "index")]
    image: Option<PathBuf>,
    /// Input image by position in the cached pool [default: 0]
    #[arg(long)]
    index: Option<usize>,
    /// Pool encoding for --index [default: perday]
    #[arg(long)]
    encoding: Option<Scope>,
    /// Output directory [default: out/activations]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Seed of the random oracle instances [default: 0]
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Declarative run configuration. Every field has a default, so a config
/// file may set any subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    data_dir: PathBuf,
    cache_dir: PathBuf,
    output_dir: PathBuf,
    synth: SynthConfig,
    filter_sizes: Vec<u8>,
    encoding: Scope,
    variant: Variant,
    classifier: Classifier,
    grid: GridConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: "data".into(),
            cache_dir: "cache".into(),
            output_dir: "out".into(),
            synth: SynthConfig::default(),
            filter_sizes: (1..=15).collect(),
            encoding: Scope::PerDay,
            variant: Variant::All,
            classifier: Classifier::Cnn,
            grid: GridConfig::default(),
        }
    }
}

impl RunConfig {
    fn load(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            None => RunConfig::default(),
        };
        if let Some(dir) = &common.cache_dir {
            cfg.cache_dir = dir.clone();
        }
        Ok(cfg)
    }

    fn manifest_path(&self, data: &Option<PathBuf>) -> PathBuf {
        data.clone().unwrap_or_else(|| self.data_dir.join("manifest.json"))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join("run.json"), text)?;
        Ok(())
    }

    fn apply(&mut self, a: &CellArgs) {
        let s = &mut self.grid.settings;
        if let Some(seed) = a.seed {
            s.seeds = Seeds::from_master(seed);
        }
        if let Some(p) = a.precision {
            s.precision = p;
        }
        if a.group_by_day {
            s.split = SplitMode::GroupByDay;
        }
        if let Some(algo) = a.boost_algo {
            s.boost.algorithm = algo;
        }
        if a.exact_stumps {
            s.boost.search = ThresholdSearch::Exact;
        }
        if let Some(e) = a.epochs {
            s.train.epochs = e;
        }
        if let Some(k) = a.folds {
            s.folds = k;
        }
        if let Some(w) = a.workers {
            self.grid.workers = w;
        }
        if let Some(out) = &a.out {
            self.output_dir = out.clone();
        }
        if let Some(e) = a.encoding {
            self.encoding = e;
        }
        if let Some(v) = a.variant {
            self.variant = v;
        }
        if let Some(c) = a.classifier {
            self.classifier = c;
        }
    }

    fn cell(&self) -> ExperimentConfig {
        ExperimentConfig {
            encoding: self.encoding,
            variant: self.variant,
            classifier: self.classifier,
            settings: self.grid.settings.clone(),
        }
    }
}

fn parse_encodings(s: &Option<String>) -> Result<Vec<Scope>> {
    match s.as_deref() {
        None | Some("all") => Ok(Scope::ALL.to_vec()),
        Some(one) => Ok(vec![one.parse()?]),
    }
}

fn load_logs(cfg: &RunConfig, data: &Option<PathBuf>) -> Result<Vec<EventLog>> {
    let path = cfg.manifest_path(data);
    if !path.exists() {
        return Err(Error::Config(format!(
            "dataset manifest {} not found; run `appprint synth` or pass --data",
            path.display()
        )));
    }
    load_dataset(&path)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.common)?;
    let s = &mut cfg.synth;
    if let Some(v) = a.users {
        s.n_users = v;
    }
    if let Some(v) = a.days {
        s.n_days = v;
    }
    if let Some(v) = a.apps {
        s.vocab_size = v;
    }
    if let Some(v) = a.concentration {
        s.concentration = v;
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(out) = a.out {
        cfg.data_dir = out;
    }
    let (profiles, logs) = generate_dataset(&cfg.synth)?;
    let manifest = write_dataset(&cfg.data_dir, &logs, &profiles)?;
    cfg.save(&cfg.data_dir)?;
    let events: usize = logs.iter().map(EventLog::len).sum();
    println!("wrote {} users, {events} events; manifest {}", logs.len(), manifest.display());
    Ok(())
}

fn cmd_ingest(a: DataArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.common)?;
    let logs = load_logs(&cfg, &a.data)?;
    let vocab = build_vocabulary(&logs)?;
    let dir = &cfg.cache_dir;
    fs::create_dir_all(dir.join("tables"))?;
    let global = compute_frequencies(&logs, &vocab, Scope::Global, Owner::Dataset)?;
    global.write_csv(&vocab, BufWriter::new(File::create(dir.join("tables").join("global.csv"))?))?;
    for log in &logs {
        let local = compute_frequencies(&logs, &vocab, Scope::Local, Owner::User(log.user_id.clone()))?;
        let path = dir.join("tables").join(format!("local-{}.csv", log.user_id));
        local.write_csv(&vocab, BufWriter::new(File::create(path)?))?;
    }
    let days: usize = logs.iter().map(|l| appprint::applog::split_days(l).len()).sum();
    println!("{} users, {} apps, {days} user-days; tables in {}", logs.len(), vocab.len(), dir.join("tables").display());
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.data.common)?;
    let logs = load_logs(&cfg, &a.data.data)?;
    let vocab = build_vocabulary(&logs)?;
    for enc in parse_encodings(&a.encoding)? {
        let images = render_base(&logs, &vocab, enc)?;
        save_base(&cfg.cache_dir, enc, &images)?;
        if let Some(dir) = &a.pgm {
            let dir = dir.join(enc.name());
            fs::create_dir_all(&dir)?;
            for im in &images {
                let path = dir.join(format!("{}_{}.pgm", im.meta.user_id, im.meta.day));
                write_pgm(BufWriter::new(File::create(path)?), im.rows, im.cols, &im.pixels)?;
            }
        }
        println!("{enc}: {} day images of {}x{}", images.len(), images[0].rows, images[0].cols);
    }
    Ok(())
}

fn cmd_augment(a: AugmentArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.common)?;
    if let Some(f) = a.filters {
        cfg.filter_sizes = f;
    }
    for enc in parse_encodings(&a.encoding)? {
        let base = load_base(&cfg.cache_dir, enc)?;
        let pool = augment_pool(&base, &cfg.filter_sizes, RESIZED_SIDE)?;
        pool.save(&cfg.cache_dir)?;
        println!("{enc}: {} base images -> {} pool images", base.len(), pool.len());
    }
    cfg.save(&cfg.cache_dir)
}

fn train_cnn<T: Real>(pool: &ImagePool, cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = &cfg.grid.settings;
    let mut model: Model<T> = build_model(pool.n_classes(), s.seeds.model)?;
    let tc = TrainConfig { seed: appprint::rng::mix(s.seeds.model, 1), ..s.train.clone() };
    let history = train(&mut model, &pool.pixels, &pool.labels(), &tc)?;
    save_checkpoint(&model, BufWriter::new(File::create(out.join("model.apck"))?))?;
    history.write_csv(BufWriter::new(File::create(out.join("history.csv"))?))?;
    if let Some(last) = history.epochs.last() {
        println!("epoch {}: val_loss {:.4} val_acc {:.4}", last.epoch, last.val_loss, last.val_acc);
    }
    Ok(())
}

fn cmd_train(a: CellArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.common)?;
    cfg.apply(&a);
    let pool = ImagePool::load(&cfg.cache_dir, cfg.encoding)?;
    let (pool, info) = make_variant(&pool, cfg.variant, cfg.grid.settings.seeds.dropout)?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    println!("training {} on {} {} images", cfg.classifier, info.n_images, cfg.encoding);
    match cfg.classifier {
        Classifier::Cnn => match cfg.grid.settings.precision {
            Precision::Fast32 => train_cnn::<f32>(&pool, &cfg, &out)?,
            Precision::Check64 => train_cnn::<f64>(&pool, &cfg, &out)?,
        },
        Classifier::Adaboost => {
            let fit = train_adaboost(&pool.pixels, pool.image_len(), &pool.labels(), pool.n_classes(), &cfg.grid.settings.boost)?;
            fit.ensemble.write_text(BufWriter::new(File::create(out.join("ensemble.txt"))?))?;
            println!("{} stumps", fit.ensemble.stumps.len());
        }
    }
    cfg.save(&out)
}

fn print_summary(reports: &[appprint::harness::ExperimentReport]) {
    for r in reports {
        println!(
            "{:<7} {:<8} {:<9} macro-F {:.4}  micro-F {:.4}",
            r.encoding.name().to_uppercase(),
            r.variant,
            r.classifier,
            r.mean_macro_f(),
            r.mean_micro_f()
        );
        for note in &r.notes {
            println!("        note: {note}");
        }
    }
    for d in appprint::harness::degradations(reports) {
        println!(
            "DROPOUT degradation {} {}: {:.4} ({} {:.4} -> {:.4})",
            d.encoding.name().to_uppercase(),
            d.classifier,
            d.delta,
            d.best_variant,
            d.best_macro_f,
            d.dropout_macro_f
        );
    }
}

fn cmd_evaluate(a: CellArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.common)?;
    cfg.apply(&a);
    let pool = ImagePool::load(&cfg.cache_dir, cfg.encoding)?;
    let report = run_experiment(&cfg.cell(), &pool)?;
    let reports = vec![report];
    write_outputs(&cfg.output_dir, &reports)?;
    cfg.save(&cfg.output_dir)?;
    print_summary(&reports);
    Ok(())
}

fn cmd_grid(a: CellArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.common)?;
    cfg.apply(&a);
    if let Some(e) = a.encoding {
        cfg.grid.encodings = vec![e];
    }
    if let Some(v) = a.variant {
        cfg.grid.variants = vec![v];
    }
    if let Some(c) = a.classifier {
        cfg.grid.classifiers = vec![c];
    }
    let pools = cfg.grid.encodings.iter().map(|&e| ImagePool::load(&cfg.cache_dir, e)).collect::<Result<Vec<_>>>()?;
    let reports = run_grid(&pools, &cfg.grid)?;
    write_outputs(&cfg.output_dir, &reports)?;
    let mut manifest = RunManifest::new("grid", cfg.grid.clone(), cfg.filter_sizes.clone());
    manifest.data = Some(cfg.data_dir.clone());
    manifest.cache_dir = Some(cfg.cache_dir.clone());
    manifest.synth = Some(cfg.synth.clone());
    manifest.save(&cfg.output_dir.join("run_manifest.json"))?;
    cfg.save(&cfg.output_dir)?;
    print_summary(&reports);
    println!("{} reports written to {}", reports.len(), cfg.output_dir.display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let reports: Vec<appprint::harness::ExperimentReport> = serde_json::from_str(&fs::read_to_string(&a.input)?)?;
    let out = a.out.unwrap_or_else(|| a.input.parent().map(Path::to_path_buf).unwrap_or_default());
    write_outputs(&out, &reports)?;
    print_summary(&reports);
    Ok(())
}

fn dump<T: Real>(model: &Model<T>, image: &[f32], out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    for act in dump_activations(model, image)? {
        let (rows, cols, px) = activation_grid(&act);
        let path = out.join(format!("{:02}_{}.pgm", act.layer, act.name));
        write_pgm(BufWriter::new(File::create(&path)?), rows, cols, &px)?;
        println!("{} {} -> {}", act.name, act.shape, path.display());
    }
    Ok(())
}

fn cmd_dump(a: DumpArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.common)?;
    let image: Vec<f32> = match &a.image {
        Some(path) => {
            let (rows, cols, bytes) = appprint::imager::read_pgm(BufReader::new(File::open(path)?))?;
            let px: Vec<f64> = bytes.iter().map(|&b| b as f64 / 255.0).collect();
            appprint::imager::resize_pixels(&px, rows, cols, RESIZED_SIDE, RESIZED_SIDE).into_iter().map(|p| p as f32).collect()
        }
        None => {
            let pool = ImagePool::load(&cfg.cache_dir, a.encoding.unwrap_or(Scope::PerDay))?;
            let i = a.index.unwrap_or(0);
            if i >= pool.len() {
                return Err(Error::Param(format!("index {i} outside a pool of {}", pool.len())));
            }
            pool.image(i).to_vec()
        }
    };
    let out = a.out.unwrap_or_else(|| cfg.output_dir.join("activations"));
    let bytes = fs::read(&a.model)?;
    match load_checkpoint::<f32, _>(&bytes[..]) {
        Ok(m) => dump(&m, &image, &out),
        Err(Error::Format(_)) => dump(&load_checkpoint::<f64, _>(&bytes[..])?, &image, &out),
        Err(e) => Err(e),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Render(a) => cmd_render(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Report(a) => cmd_report(a),
        Command::DumpActivations(a) => cmd_dump(a),
        Command::Selftest(a) => selftest::run(a.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
