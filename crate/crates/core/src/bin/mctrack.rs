use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mctrack::fusion::FusionMode;
use mctrack::glimpse::FeatureSource;
use mctrack::metrics::{evaluate, format_table, MotReport};
use mctrack::pipeline::{bench, format_bench, record, run_on, run_pipeline, train_glimpse, PipelineConfig};
use mctrack::records::load_tracks;
use mctrack::sim::{Scenario, Simulator, BUILTIN_SCENARIOS};
use mctrack::{Error, ErrorKind, Result};

/// Multi-camera ground-plane people tracker.
///
/// Exit codes: 0 success, 2 invalid configuration or arguments, 3 bad or
/// missing input data, 4 runtime failure.
#[derive(Parser, Debug)]
#[command(name = "mctrack", version, about, long_about)]
struct Cli {
    /// TOML pipeline config; flags override values from the file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Root for outputs when --out is not given.
    #[arg(long, global = true, env = "MCTRACK_DATA_DIR", value_name = "DIR", default_value = "mctrack-data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a scenario to per-view heatmap files and ground truth.
    Simulate(SimulateArgs),
    /// Train the temporal glimpse classifier on simulated proposals.
    TrainGlimpse(TrainArgs),
    /// Run the online pipeline and write tracks, detections and metrics.
    Track(TrackArgs),
    /// Score a tracks CSV against a ground-truth CSV.
    Eval(EvalArgs),
    /// Measure throughput over a sweep of camera counts.
    Bench(BenchArgs),
    /// Train, track every comparison variant and bench, writing one table.
    All(AllArgs),
    /// List builtin scenarios or export one as JSON.
    Scenarios(ScenariosArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Overrides shared by the pipeline subcommands.
#[derive(Args, Debug, Default)]
struct PipelineFlags {
    /// Builtin scenario name or scenario JSON path.
    #[arg(long, value_name = "NAME|FILE")]
    scenario: Option<String>,
    /// Process only the first N frames.
    #[arg(long, value_name = "N")]
    frames: Option<u64>,
    /// Fusion mode: average the views or keep the per-view stack.
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
    /// Color histogram appearance term in the association cost.
    #[arg(long, value_enum)]
    color: Option<Switch>,
    /// Gating radius d_L in meters (max speed / frame rate).
    #[arg(long, value_name = "M")]
    gate_radius: Option<f64>,
    /// Minimum occupancy score of a proposal.
    #[arg(long, value_name = "S")]
    min_score: Option<f64>,
    /// Classifier decision threshold.
    #[arg(long, value_name = "P")]
    decision_threshold: Option<f64>,
    /// IoU above which a proposal is labeled a person (I_T).
    #[arg(long, value_name = "IOU")]
    label_iou: Option<f64>,
    /// Side of the square ground box used for labeling and evaluation (m).
    #[arg(long, value_name = "M")]
    box_side: Option<f64>,
    /// IoU threshold of the evaluation protocol.
    #[arg(long, value_name = "IOU")]
    iou_threshold: Option<f64>,
    /// Number of past frames in the glimpse (n).
    #[arg(long, value_name = "N")]
    history_len: Option<usize>,
    /// Comma-separated glimpse dilations, oldest slot first (n + 1 values).
    #[arg(long, value_name = "D,..", value_delimiter = ',')]
    dilations: Option<Vec<usize>>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FusionArg {
    Avg,
    Stack,
}

impl From<FusionArg> for FusionMode {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Avg => FusionMode::Avg,
            FusionArg::Stack => FusionMode::Stack,
        }
    }
}

impl PipelineFlags {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(s) = &self.scenario {
            c.scenario = Some(s.clone());
            c.frames_dir = None;
        }
        if let Some(v) = self.frames {
            c.frames = Some(v);
        }
        if let Some(v) = self.fusion {
            c.fusion.mode = v.into();
        }
        if let Some(v) = self.color {
            c.tracker.use_color = v == Switch::On;
        }
        if let Some(v) = self.gate_radius {
            c.tracker.gate_radius = v;
        }
        if let Some(v) = self.min_score {
            c.detect.min_score = v;
        }
        if let Some(v) = self.decision_threshold {
            c.detect.decision_threshold = v;
        }
        if let Some(v) = self.label_iou {
            c.detect.label_iou = v;
        }
        if let Some(v) = self.box_side {
            c.detect.box_side = v;
            c.eval.box_side = v;
        }
        if let Some(v) = self.iou_threshold {
            c.eval.iou_threshold = v;
        }
        if let Some(v) = self.history_len {
            c.glimpse.history_len = v;
        }
        if let Some(v) = &self.dilations {
            c.glimpse.dilations = v.clone();
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Builtin scenario name or scenario JSON path.
    #[arg(long, value_name = "NAME|FILE")]
    scenario: String,
    /// Output directory (default: <data-dir>/sim/<scenario>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Render only the first N frames.
    #[arg(long, value_name = "N")]
    frames: Option<u64>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write PPM color frames (needed for --color on with recordings).
    #[arg(long)]
    rgb: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Classifier JSON to write (default: <data-dir>/glimpse.json).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Use the per-view stack as features instead of the averaged map.
    #[arg(long)]
    stacked: bool,
    /// Gradient-descent epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct TrackArgs {
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Read frames recorded by `simulate` instead of a scenario.
    #[arg(long, value_name = "DIR", conflicts_with = "scenario")]
    frames_dir: Option<PathBuf>,
    /// Glimpse classifier JSON; without one every proposal is accepted.
    #[arg(long, value_name = "FILE")]
    classifier: Option<PathBuf>,
    /// Output directory (default: <data-dir>/track).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also write coasted trajectory states (matched = 0).
    #[arg(long)]
    include_coasted: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Ground-truth CSV (frame,id,x_m,y_m,matched).
    #[arg(long, value_name = "FILE")]
    gt: PathBuf,
    /// Tracks CSV in the same format.
    #[arg(long, value_name = "FILE")]
    tracks: PathBuf,
    /// Side of the square ground box (m).
    #[arg(long, value_name = "M")]
    box_side: Option<f64>,
    /// IoU threshold for a valid match.
    #[arg(long, value_name = "IOU")]
    iou_threshold: Option<f64>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Comma-separated camera counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    cameras: Vec<usize>,
    /// Untimed warm-up frames per run.
    #[arg(long, default_value_t = 20)]
    warmup: u64,
    /// Output directory for bench.json and bench.txt (default: <data-dir>/bench).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AllArgs {
    /// Output directory (default: <data-dir>/all).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Timed frames per bench run.
    #[arg(long, default_value_t = 500)]
    bench_frames: u64,
    /// Skip the throughput sweep.
    #[arg(long)]
    skip_bench: bool,
}

#[derive(Args, Debug)]
struct ScenariosArgs {
    /// Builtin to export; lists the builtins when omitted.
    name: Option<String>,
    /// Write the JSON here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Runtime => 4,
    }
}

fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    match &cli.config {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn scenario_of(config: &PipelineConfig, fallback: &str) -> Result<Scenario> {
    let mut s = Scenario::resolve(config.scenario.as_deref().unwrap_or(fallback))?;
    if let Some(n) = config.frames {
        s = s.truncated(n);
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    let data_dir = cli.data_dir.clone();
    match &cli.command {
        Command::Simulate(a) => {
            let mut s = Scenario::resolve(&a.scenario)?;
            if let Some(seed) = a.seed {
                s = s.with_seed(seed);
            }
            let out = a.out.clone().unwrap_or_else(|| data_dir.join("sim").join(&s.name));
            let sim = Simulator::new(s)?;
            let m = record(&sim, &out, a.frames.unwrap_or(u64::MAX), a.rgb)?;
            println!("wrote {} frames x {} views to {}", m.frames, m.cameras.len(), out.display());
        }
        Command::TrainGlimpse(a) => {
            let mut c = base_config(&cli)?;
            a.pipeline.apply(&mut c);
            if let Some(e) = a.epochs {
                c.train.epochs = e;
            }
            let s = scenario_of(&c, "noisy_4cam")?;
            let source = if a.stacked {
                FeatureSource::Stacked { channels: 0 }
            } else {
                FeatureSource::Mean
            };
            let (model, report) = train_glimpse(&c, &s, source)?;
            let out = a.out.clone().unwrap_or_else(|| data_dir.join("glimpse.json"));
            if let Some(dir) = out.parent() {
                std::fs::create_dir_all(dir)?;
            }
            model.save(&out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            println!("wrote {}", out.display());
        }
        Command::Track(a) => {
            let mut c = base_config(&cli)?;
            a.pipeline.apply(&mut c);
            if let Some(d) = &a.frames_dir {
                c.frames_dir = Some(d.clone());
                c.scenario = None;
            }
            if let Some(p) = &a.classifier {
                c.classifier = Some(p.clone());
            }
            if a.out.is_some() {
                c.output_dir = a.out.clone();
            }
            c.include_coasted |= a.include_coasted;
            let out_dir = c.output_dir.clone().unwrap_or_else(|| data_dir.join("track"));
            let out = run_pipeline(&c)?;
            out.write(&out_dir)?;
            if let Some(r) = &out.report {
                println!("{}", format_table(&[("mctrack", r)]));
            }
            let t = out.timing.summary(0);
            println!(
                "{} frames, {:.1} fps (pipeline), {:.1} fps (with source)",
                t.frames, t.fps_pipeline, t.fps_total
            );
            println!("wrote {}", out_dir.display());
        }
        Command::Eval(a) => {
            let mut c = base_config(&cli)?;
            if let Some(v) = a.box_side {
                c.eval.box_side = v;
            }
            if let Some(v) = a.iou_threshold {
                c.eval.iou_threshold = v;
            }
            c.eval.validate()?;
            let gt = load_tracks(&a.gt)?;
            let hyp = load_tracks(&a.tracks)?;
            let r = evaluate(&gt, &hyp, &c.eval)?;
            if a.json {
                println!("{}", r.to_json()?);
            } else {
                println!("{}", format_table(&[("mctrack", &r)]));
            }
        }
        Command::Bench(a) => {
            let mut c = base_config(&cli)?;
            a.pipeline.apply(&mut c);
            // --frames is the number of timed frames here (default 500)
            let frames = c.frames.take().unwrap_or(500);
            let s = Scenario::resolve(c.scenario.as_deref().unwrap_or("bench_4cam"))?;
            let runs = bench(&c, &s, &a.cameras, frames, a.warmup)?;
            let text = format_bench(&runs);
            print!("{text}");
            let out = a.out.clone().unwrap_or_else(|| data_dir.join("bench"));
            write_text(&out.join("bench.txt"), &text)?;
            write_text(&out.join("bench.json"), &serde_json::to_string_pretty(&runs)?)?;
            println!("wrote {}", out.display());
        }
        Command::All(a) => {
            let base = base_config(&cli)?;
            let out = a.out.clone().unwrap_or_else(|| data_dir.join("all"));
            run_all(&base, &out, a)?;
        }
        Command::Scenarios(a) => match &a.name {
            None => {
                for n in BUILTIN_SCENARIOS {
                    println!("{n}");
                }
            }
            Some(n) => {
                let s = mctrack::sim::builtin(n).ok_or_else(|| Error::Config(format!("unknown builtin scenario {n:?}")))?;
                match &a.out {
                    Some(p) => s.save(p)?,
                    None => println!("{}", serde_json::to_string_pretty(&s)?),
                }
            }
        },
    }
    Ok(())
}

/// Every comparison of the reproduction table in one go.
fn run_all(base: &PipelineConfig, out: &Path, a: &AllArgs) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let noisy = Scenario::resolve("noisy_4cam")?;

    let (mean_model, mean_report) = train_glimpse(base, &noisy, FeatureSource::Mean)?;
    mean_model.save(&out.join("glimpse_mean.json"))?;
    let (stack_model, stack_report) = train_glimpse(base, &noisy, FeatureSource::Stacked { channels: 0 })?;
    stack_model.save(&out.join("glimpse_stack.json"))?;
    let mut single = base.clone();
    single.glimpse.history_len = 0;
    single.glimpse.dilations = vec![1];
    let (_, single_report) = train_glimpse(&single, &noisy, FeatureSource::Mean)?;
    let training = serde_json::json!({
        "mean_n4": mean_report,
        "stack_n4": stack_report,
        "mean_n0": single_report,
    });
    write_text(&out.join("training.json"), &serde_json::to_string_pretty(&training)?)?;
    println!(
        "glimpse held-out accuracy: n=4 {:.3}, n=0 {:.3}, stacked n=4 {:.3}",
        mean_report.test_accuracy, single_report.test_accuracy, stack_report.test_accuracy
    );

    let variants: Vec<(&str, &str, FusionMode, bool, Option<&mctrack::glimpse::GlimpseClassifier>)> = vec![
        ("clean", "clean_4cam", FusionMode::Avg, false, None),
        ("noisy_avg", "noisy_4cam", FusionMode::Avg, false, Some(&mean_model)),
        ("noisy_stack", "noisy_4cam", FusionMode::Stack, false, Some(&stack_model)),
        ("noisy_avg_color", "noisy_4cam", FusionMode::Avg, true, Some(&mean_model)),
        ("noisy_stack_color", "noisy_4cam", FusionMode::Stack, true, Some(&stack_model)),
    ];
    let mut reports: Vec<(String, MotReport)> = Vec::new();
    for (label, scenario, mode, color, model) in variants {
        let mut c = base.clone();
        c.fusion.mode = mode;
        c.tracker.use_color = color;
        let sim = Simulator::new(Scenario::resolve(scenario)?)?;
        let recognizer = match model {
            Some(m) => mctrack::detect::Recognizer::Glimpse(m.clone()),
            None => mctrack::detect::Recognizer::PassThrough,
        };
        let run = run_on(&c, &sim, recognizer)?;
        run.write(&out.join(label))?;
        let r = run.report.ok_or(Error::EmptyGroundTruth)?;
        reports.push((label.to_string(), r));
    }
    let rows: Vec<(&str, &MotReport)> = reports.iter().map(|(l, r)| (l.as_str(), r)).collect();
    let table = format_table(&rows);
    print!("{table}");
    write_text(&out.join("table.txt"), &table)?;

    if !a.skip_bench {
        let runs = bench(base, &Scenario::resolve("bench_4cam")?, &[1, 2, 4, 8], a.bench_frames, 20)?;
        let text = format_bench(&runs);
        print!("{text}");
        write_text(&out.join("bench.txt"), &text)?;
        write_text(&out.join("bench.json"), &serde_json::to_string_pretty(&runs)?)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
