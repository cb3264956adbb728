use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use robosketch::canvas::Canvas;
use robosketch::classifier::{rasterize_train_splits, train_classifier, Classifier};
use robosketch::config::Config;
use robosketch::dqn::pretrain::Pretrainer;
use robosketch::dqn::{DqnTrainer, Reference};
use robosketch::env::{PenState, StepInfo};
use robosketch::eval::{report_markdown, run_draw, trajectory_overlay, write_report_csv, DrawOutcome, DrawStep, EpisodeReport};
use robosketch::gridmap::{export_trajectory, simulate_execution, Trajectory};
use robosketch::quickdraw::{
    average_complexity, ingest, rasterize_sketch, read_ndjson, Dataset, SketchRecord, TEST_ONLY_CATEGORIES,
    TRAIN_CATEGORIES,
};
use robosketch::{Error, Result};
use serde::{Deserialize, Serialize};
use sketchnet::{Checkpoint, ModelKind};

#[derive(Parser)]
#[command(name = "robosketch", version, about = "Train and run a sketch-drawing Q-network")]
struct Cli {
    /// JSON hyperparameter file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file, for single-file verbs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split Quick, Draw! ndjson files into per-category train/test sets.
    Ingest {
        /// Directory holding `<category>.ndjson[.gz]` files.
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated categories; defaults to all thirteen.
        #[arg(long, value_delimiter = ',')]
        categories: Vec<String>,
        #[arg(long)]
        train_size: Option<usize>,
        #[arg(long)]
        recognized_only: bool,
    },
    /// Supervised pre-training of the Q-network on random strokes.
    Pretrain {
        #[arg(long)]
        epochs: Option<u64>,
    },
    /// Train the category classifier on the dataset's train splits.
    TrainClassifier {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<u64>,
    },
    /// Double Q-learning from a pre-trained checkpoint.
    Train {
        #[arg(long)]
        pretrained: PathBuf,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[command(flatten)]
        refs: ReferenceArgs,
        /// Environment steps; defaults to `max_total_strokes`.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Draw one reference greedily and write the episode artifacts.
    Draw {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[command(flatten)]
        refs: ReferenceArgs,
        /// Position of the sketch within the selected split.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Convert a drawn episode into a gridmap waypoint file.
    ExportTraj {
        #[arg(long)]
        episode: PathBuf,
    },
    /// Replay a waypoint file on a blank canvas.
    SimulateExec {
        #[arg(long)]
        trajectory: PathBuf,
        /// PGM canvas the execution must reproduce bit for bit.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Draw one sketch per category and write the results table.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[command(flatten)]
        refs: ReferenceArgs,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Format episode reports as Markdown and CSV tables.
    Report {
        /// `reports.json` files written by `eval`.
        #[arg(long, required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct ReferenceArgs {
    /// Dataset manifest written by `ingest`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Single ndjson file of reference sketches, instead of `--data`.
    #[arg(long, conflicts_with = "data")]
    sketches: Option<PathBuf>,
    /// Restrict to these categories (comma-separated).
    #[arg(long, value_delimiter = ',')]
    category: Vec<String>,
    /// Which split references come from.
    #[arg(long, default_value = "train")]
    split: Split,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Split {
    Train,
    Test,
}

/// A reference sketch with the records its category averages come from.
struct Source {
    category: String,
    sketches: Vec<SketchRecord>,
    all: Vec<SketchRecord>,
}

impl ReferenceArgs {
    fn sources(&self) -> Result<Vec<Source>> {
        let mut out = Vec::new();
        if let Some(path) = &self.sketches {
            let records = read_ndjson(path)?;
            let mut cats: Vec<String> = Vec::new();
            for r in &records {
                if !cats.contains(&r.category) {
                    cats.push(r.category.clone());
                }
            }
            for c in cats {
                let sketches: Vec<SketchRecord> = records.iter().filter(|r| r.category == c).cloned().collect();
                out.push(Source {
                    category: c,
                    all: sketches.clone(),
                    sketches,
                });
            }
        } else if let Some(path) = &self.data {
            for cat in Dataset::load(path)?.categories {
                let sketches = match self.split {
                    Split::Train => cat.train.clone(),
                    Split::Test => cat.test.clone(),
                };
                let mut all = cat.train;
                all.extend(cat.test);
                out.push(Source {
                    category: cat.name,
                    sketches,
                    all,
                });
            }
        } else {
            return Err(Error::Config("one of --data or --sketches is required".into()));
        }
        if !self.category.is_empty() {
            out.retain(|s| self.category.contains(&s.category));
            for c in &self.category {
                if !out.iter().any(|s| &s.category == c) {
                    return Err(Error::Config(format!("no sketches for category {c:?}")));
                }
            }
        }
        out.retain(|s| !s.sketches.is_empty());
        if out.is_empty() {
            return Err(Error::Config("the selection contains no reference sketches".into()));
        }
        Ok(out)
    }
}

/// `draw` output, read back by `export-traj`.
#[derive(Serialize, Deserialize)]
struct EpisodeFile {
    category: String,
    canvas_size: usize,
    start: [usize; 2],
    start_pen_down: bool,
    similarity_pct: f64,
    dqn_reward: f64,
    pixel_reward: f64,
    steps: Vec<DrawStep>,
    report: EpisodeReport,
}

fn out_dir(cli_out: &Option<PathBuf>, default: &str) -> Result<PathBuf> {
    let dir = cli_out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn jsonl_line(w: &mut impl Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn load_classifier(path: &Option<PathBuf>) -> Result<Option<Classifier>> {
    path.as_ref().map(Classifier::load).transpose()
}

fn load_q(path: &Path) -> Result<Checkpoint> {
    Ok(Checkpoint::load(path, Some(ModelKind::QNetwork))?)
}

fn summary(value: serde_json::Value) {
    println!("{value}");
}

fn draw_one(
    cfg: &Config,
    q: &Checkpoint,
    classifier: Option<&Classifier>,
    src: &Source,
    index: usize,
    dir: &Path,
) -> Result<(DrawOutcome, EpisodeReport)> {
    let sketch = src.sketches.get(index).ok_or_else(|| {
        Error::Config(format!(
            "index {index} outside the {} sketches of {:?}",
            src.sketches.len(),
            src.category
        ))
    })?;
    let reference = Reference {
        category: src.category.clone(),
        canvas: Arc::new(rasterize_sketch(sketch, cfg.canvas_size)),
    };
    let outcome = run_draw(&q.network, &reference, classifier, cfg)?;
    let avg = average_complexity(&src.all).expect("source has sketches");
    let report = EpisodeReport::new(&outcome, sketch, &avg);
    fs::create_dir_all(dir)?;
    outcome.final_canvas.write_pgm(BufWriter::new(File::create(dir.join("canvas.pgm"))?))?;
    reference.canvas.write_pgm(BufWriter::new(File::create(dir.join("reference.pgm"))?))?;
    fs::write(
        dir.join("overlay.ppm"),
        trajectory_overlay(&reference.canvas, outcome.start, &outcome.steps, 4),
    )?;
    let traj = export_trajectory(outcome.start, cfg.canvas_size, &outcome.infos, &cfg.gridmap())?;
    traj.write_jsonl(BufWriter::new(File::create(dir.join("trajectory.jsonl"))?))?;
    let file = EpisodeFile {
        category: outcome.category.clone(),
        canvas_size: cfg.canvas_size,
        start: [outcome.start.x, outcome.start.y],
        start_pen_down: outcome.start.down,
        similarity_pct: outcome.similarity_pct,
        dqn_reward: outcome.dqn_reward,
        pixel_reward: outcome.pixel_reward,
        steps: outcome.steps.clone(),
        report: report.clone(),
    };
    write_json(&dir.join("episode.json"), &file)?;
    Ok((outcome, report))
}

fn dir_name(category: &str) -> String {
    category.replace(' ', "_")
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    match cli.command {
        Command::Ingest {
            input,
            categories,
            train_size,
            recognized_only,
        } => {
            let categories: Vec<String> = if categories.is_empty() {
                TRAIN_CATEGORIES.iter().chain(&TEST_ONLY_CATEGORIES).map(|s| s.to_string()).collect()
            } else {
                categories
            };
            let mut size = train_size.unwrap_or(cfg.train_dataset_size);
            if !cfg.train_dataset_per_category {
                let n_train = categories
                    .iter()
                    .filter(|c| !TEST_ONLY_CATEGORIES.contains(&c.as_str()))
                    .count()
                    .max(1);
                size = size.div_ceil(n_train);
            }
            let dir = out_dir(&cli.out, "data")?;
            let m = ingest(&input, &categories, size, cfg.seed, recognized_only || cfg.recognized_only, &dir)?;
            summary(serde_json::json!({
                "manifest": dir.join("manifest.json"),
                "categories": m.categories.iter().map(|c| serde_json::json!({
                    "category": c.category, "train": c.train, "test": c.test,
                })).collect::<Vec<_>>(),
            }));
        }
        Command::Pretrain { epochs } => {
            let dir = out_dir(&cli.out, "ck")?;
            let epochs = epochs.unwrap_or(cfg.epochs);
            let mut p = Pretrainer::new(&cfg)?;
            let mut log = BufWriter::new(File::create(dir.join("pretrain_log.jsonl"))?);
            let mut last = None;
            let mut fault = None;
            for _ in 0..epochs {
                match p.epoch() {
                    Ok(e) => {
                        jsonl_line(&mut log, &e)?;
                        last = Some(e);
                    }
                    Err(e) => {
                        fault = Some(e);
                        break;
                    }
                }
            }
            log.flush()?;
            let ck_path = dir.join("pre.ckpt");
            p.checkpoint().save(&ck_path)?;
            if let Some(e) = fault {
                return Err(e);
            }
            let accuracy = p.heldout_accuracy()?;
            let s = serde_json::json!({
                "checkpoint": ck_path,
                "epochs": p.epochs_done(),
                "final_loss": last.map(|e| e.loss),
                "heldout_accuracy": accuracy,
            });
            write_json(&dir.join("pretrain_summary.json"), &s)?;
            summary(s);
        }
        Command::TrainClassifier { data, epochs } => {
            let dir = out_dir(&cli.out, "ck")?;
            if let Some(e) = epochs {
                cfg.classifier_epochs = e;
            }
            let ds = Dataset::load(&data)?;
            let cats: Vec<_> = ds.categories.into_iter().filter(|c| !c.train.is_empty()).collect();
            let examples = rasterize_train_splits(&cats, cfg.canvas_size);
            let names = cats.into_iter().map(|c| c.name).collect();
            let mut log = BufWriter::new(File::create(dir.join("classifier_log.jsonl"))?);
            let mut io_err = None;
            let run = train_classifier(&examples, names, &cfg, |e| {
                if let Err(err) = jsonl_line(&mut log, e) {
                    io_err.get_or_insert(err);
                }
            })?;
            if let Some(e) = io_err {
                return Err(e);
            }
            log.flush()?;
            let ck_path = dir.join("cls.ckpt");
            run.checkpoint().save(&ck_path)?;
            summary(serde_json::json!({
                "checkpoint": ck_path,
                "categories": run.classifier.categories,
                "initial_accuracy": run.initial_accuracy,
                "heldout_accuracy": run.log.last().map(|e| e.heldout_accuracy),
                "heldout": run.heldout,
            }));
        }
        Command::Train {
            pretrained,
            classifier,
            refs,
            steps,
        } => {
            let dir = out_dir(&cli.out, "ck")?;
            let pre = load_q(&pretrained)?;
            let classifier = load_classifier(&classifier)?;
            let references: Vec<Reference> = refs
                .sources()?
                .into_iter()
                .flat_map(|s| {
                    let category = s.category;
                    let size = cfg.canvas_size;
                    s.sketches.into_iter().map(move |r| Reference {
                        category: category.clone(),
                        canvas: Arc::new(rasterize_sketch(&r, size)),
                    })
                })
                .collect();
            let mut trainer = DqnTrainer::new(&cfg, references, pre.network, classifier)?;
            let steps = steps.unwrap_or(cfg.max_total_strokes);
            let mut log = BufWriter::new(File::create(dir.join("train_log.jsonl"))?);
            let mut fault = None;
            let mut episodes = 0u64;
            for _ in 0..steps {
                match trainer.step() {
                    Ok(o) => {
                        if let Some(ep) = o.episode {
                            jsonl_line(&mut log, &ep)?;
                            episodes += 1;
                        }
                    }
                    Err(e) => {
                        fault = Some(e);
                        break;
                    }
                }
            }
            log.flush()?;
            let ck_path = dir.join("q.ckpt");
            trainer.checkpoint().save(&ck_path)?;
            if cfg.double_q_coin_flip {
                trainer.second_checkpoint().save(dir.join("q_b.ckpt"))?;
            }
            if let Some(e) = fault {
                return Err(e);
            }
            summary(serde_json::json!({
                "checkpoint": ck_path,
                "steps": trainer.steps(),
                "updates": trainer.updates(),
                "episodes": episodes,
            }));
        }
        Command::Draw {
            checkpoint,
            classifier,
            refs,
            index,
        } => {
            let dir = out_dir(&cli.out, "draw")?;
            let q = load_q(&checkpoint)?;
            let classifier = load_classifier(&classifier)?;
            let sources = refs.sources()?;
            let (outcome, _) = draw_one(&cfg, &q, classifier.as_ref(), &sources[0], index, &dir)?;
            summary(serde_json::json!({
                "category": outcome.category,
                "similarity_pct": outcome.similarity_pct,
                "dqn_reward": outcome.dqn_reward,
                "pixel_reward": outcome.pixel_reward,
                "out": dir,
            }));
        }
        Command::ExportTraj { episode } => {
            let ep: EpisodeFile = serde_json::from_str(&fs::read_to_string(&episode)?)?;
            let infos: Vec<StepInfo> = ep
                .steps
                .iter()
                .map(|s| StepInfo {
                    action: s.action,
                    dx: s.dx,
                    dy: s.dy,
                    pixels_changed: 0,
                    slow: s.slow,
                    terminal: false,
                })
                .collect();
            let start = PenState {
                x: ep.start[0],
                y: ep.start[1],
                down: ep.start_pen_down,
            };
            let traj = export_trajectory(start, ep.canvas_size, &infos, &cfg.gridmap())?;
            let path = cli.out.unwrap_or_else(|| PathBuf::from("trajectory.jsonl"));
            traj.write_jsonl(BufWriter::new(File::create(&path)?))?;
            summary(serde_json::json!({ "trajectory": path, "waypoints": traj.waypoints.len() }));
        }
        Command::SimulateExec { trajectory, compare } => {
            let traj = Trajectory::read_jsonl(BufReader::new(File::open(&trajectory)?))?;
            let exec = simulate_execution(&traj)?;
            let path = cli.out.unwrap_or_else(|| PathBuf::from("executed.pgm"));
            exec.canvas.write_pgm(BufWriter::new(File::create(&path)?))?;
            let mut matches = None;
            if let Some(expected) = compare {
                let expected = Canvas::read_pgm(BufReader::new(File::open(&expected)?))?;
                if expected != exec.canvas {
                    return Err(Error::Fidelity(format!(
                        "executed canvas differs from {} ({} vs {} inked cells)",
                        trajectory.display(),
                        exec.canvas.ink_count(),
                        expected.ink_count()
                    )));
                }
                matches = Some(true);
            }
            summary(serde_json::json!({
                "canvas": path,
                "inked": exec.canvas.ink_count(),
                "matches": matches,
            }));
        }
        Command::Eval {
            checkpoint,
            classifier,
            refs,
            index,
        } => {
            let dir = out_dir(&cli.out, "eval")?;
            let q = load_q(&checkpoint)?;
            let classifier = load_classifier(&classifier)?;
            let mut reports = Vec::new();
            for src in refs.sources()? {
                let (_, report) = draw_one(&cfg, &q, classifier.as_ref(), &src, index, &dir.join(dir_name(&src.category)))?;
                reports.push(report);
            }
            write_json(&dir.join("reports.json"), &reports)?;
            fs::write(dir.join("table.md"), report_markdown(&reports))?;
            write_report_csv(File::create(dir.join("table.csv"))?, &reports)?;
            summary(serde_json::json!({ "reports": dir.join("reports.json"), "rows": reports.len() }));
        }
        Command::Report { reports } => {
            let dir = out_dir(&cli.out, "report")?;
            let mut rows: Vec<EpisodeReport> = Vec::new();
            for path in &reports {
                let mut batch: Vec<EpisodeReport> = serde_json::from_str(&fs::read_to_string(path)?)?;
                rows.append(&mut batch);
            }
            if rows.is_empty() {
                return Err(Error::Config("no episode reports to tabulate".into()));
            }
            fs::write(dir.join("table.md"), report_markdown(&rows))?;
            write_report_csv(File::create(dir.join("table.csv"))?, &rows)?;
            summary(serde_json::json!({ "table": dir.join("table.md"), "csv": dir.join("table.csv"), "rows": rows.len() }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            eprintln!("{}", serde_json::json!({ "error": "usage", "message": message.trim() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
