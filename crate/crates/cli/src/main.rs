use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use roadcourse::nn::{
    build_pyramid, load_weights, save_weights, train, tune_biases_mcc, LabeledImage, Topology, TrainConfig,
};
use roadcourse::pipeline::{evaluate_run, write_evaluation, LabelSource, RunWriter};
use roadcourse::report::{find_runs, summary_table, svg_plot, RunRecord};
use roadcourse::sim::{frame_dir, write_scenario, FrameSource, Preset, Scenario, ScenarioConfig, ScenarioDir};
use roadcourse::{image, ClassId, ClassMembershipMap, Error, PipelineConfig, RunOptions};

#[derive(Parser)]
#[command(name = "roadcourse", version, about = "Road-course estimation from camera, radar and digital map data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario directory.
    Simulate {
        #[arg(long, default_value = "A")]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a segmentation network on the images of a scenario directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Topology name `mssn-<levels>-<convs>-<filters>`.
        #[arg(long, default_value = "mssn-2-3-8")]
        topology: String,
        /// Number of pooling stages per branch.
        #[arg(long, default_value_t = 1)]
        pooling: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-2)]
        learn_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use every n-th frame; a disjoint set of frames is held out for
        /// bias tuning.
        #[arg(long, default_value_t = 10)]
        every: usize,
        /// Skip the output-bias tuning on held-out frames.
        #[arg(long)]
        no_tune: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every pixel of a grayscale PGM image.
    Infer {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the estimator over a scenario and write per-frame outputs.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Disable road detection (digital map only).
        #[arg(long)]
        no_optical: bool,
        /// Use the noise-free label maps instead of the degraded ones.
        #[arg(long)]
        truth_labels: bool,
        /// Output directory (default: `<scenario>/run`, or `<scenario>/run_digital` with --no-optical).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate written runs against the scenario ground truth.
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        /// A run directory, or a directory of run directories.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Plot error against look-ahead distance and tabulate evaluated runs.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        svg: PathBuf,
        /// Summary table (default: `summary.csv` next to the SVG).
        #[arg(long)]
        table: Option<PathBuf>,
        /// Also plot the digital-only baseline of every run (dashed).
        #[arg(long)]
        baseline: bool,
    },
    /// Simulate and evaluate many presets and seeds in parallel.
    Batch {
        #[arg(long, default_value = "ABCDE")]
        presets: String,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 200)]
        frames: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration file.
    Config,
}

fn load_config(path: Option<&Path>) -> roadcourse::Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn frame_count(root: &Path) -> usize {
    (0..).take_while(|&i| frame_dir(root, i).is_dir()).count()
}

fn load_frames(root: &Path, indices: impl Iterator<Item = usize>) -> roadcourse::Result<Vec<LabeledImage>> {
    indices
        .map(|i| {
            let dir = frame_dir(root, i);
            Ok(LabeledImage {
                image: image::load_pgm(&dir.join("image.pgm"))?,
                labels: ClassMembershipMap::load_pgm(&dir.join("labels_truth.pgm"))?,
            })
        })
        .collect()
}

fn simulate(preset: Preset, seed: u64, frames: usize, out: &Path) -> roadcourse::Result<()> {
    let scn = Scenario::generate(&ScenarioConfig {
        frames,
        ..ScenarioConfig::preset(preset, seed)
    })?;
    write_scenario(&scn, out)?;
    println!("wrote {frames} frames of preset {preset} (seed {seed}) to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    data: &Path,
    topology: &str,
    pooling: usize,
    epochs: usize,
    learn_rate: f64,
    seed: u64,
    every: usize,
    no_tune: bool,
    out: &Path,
) -> roadcourse::Result<()> {
    let t = Topology::parse_with_pooling(topology, pooling)?;
    let n = frame_count(data);
    let every = every.max(1);
    if n == 0 {
        return Err(Error::InvalidInput(format!("no frames under {}", data.display())));
    }
    let train_set = load_frames(data, (0..n).step_by(every))?;
    let present: Vec<ClassId> = ClassId::ALL
        .into_iter()
        .filter(|&c| train_set.iter().any(|d| d.labels.count(c) > 0))
        .collect();
    info!("training {} on {} images, classes {:?}", t, train_set.len(), present);
    let cfg = TrainConfig {
        learn_rate,
        epochs,
        seed,
        classes: present,
        ..TrainConfig::default()
    };
    let result = train::<f32>(&train_set, &t, &cfg)?;
    let mut net = result.network;
    if !no_tune && every > 1 {
        let held_out = load_frames(data, (every / 2..n).step_by(every))?;
        if !held_out.is_empty() {
            net = tune_biases_mcc(&net, &held_out)?;
        }
    }
    save_weights(&net, out)?;
    println!(
        "final loss {:.5}, weights written to {}",
        result.loss_trace.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn infer(weights: &Path, image_path: &Path, out: &Path) -> roadcourse::Result<()> {
    let net = load_weights(weights)?;
    let img = image::load_pgm(image_path)?;
    let pyr = build_pyramid(&img, &net.topology)?;
    let (dense, _) = net.forward_dense(&pyr)?;
    dense.full_class_map(img.height(), img.width()).save_pgm(out)?;
    println!("wrote {}x{} label map to {}", img.width(), img.height(), out.display());
    Ok(())
}

fn run_cmd(
    scenario: &Path,
    config: Option<&Path>,
    no_optical: bool,
    truth_labels: bool,
    out: Option<PathBuf>,
) -> roadcourse::Result<()> {
    let cfg = load_config(config)?;
    let src = ScenarioDir::open(scenario)?;
    let out = out.unwrap_or_else(|| scenario.join(if no_optical { "run_digital" } else { "run" }));
    let opts = RunOptions {
        optical: !no_optical,
        labels: if truth_labels { LabelSource::Truth } else { LabelSource::Noisy },
    };
    let mut writer = RunWriter::create(&out)?;
    let summary = roadcourse::run(&src, &cfg, opts, &mut writer)?;
    let mut label = src.meta().preset.to_string();
    if no_optical {
        label.push_str("-no-optical");
    }
    writer.finish(&summary, &label)?;
    println!(
        "{} frames: fused error {:.3} m, digital-only error {:.3} m, optical map available on {:.1}% of frames",
        summary.frames,
        summary.fused.mean_error,
        summary.digital.mean_error,
        100.0 * summary.fused.availability
    );
    println!("outputs in {}", out.display());
    Ok(())
}

fn evaluate(scenario: &Path, runs: &Path, config: Option<&Path>) -> roadcourse::Result<()> {
    let cfg = load_config(config)?;
    let src = ScenarioDir::open(scenario)?;
    for dir in find_runs(runs).or_else(|_| Ok::<_, Error>(vec![runs.to_path_buf()]))? {
        let s = evaluate_run(&src, &dir, &cfg)?;
        let label = RunRecord::load(&dir)
            .map(|r| r.label)
            .unwrap_or_else(|_| src.meta().preset.to_string());
        write_evaluation(&dir, &s, &label)?;
        println!(
            "{}: fused {:.3} m, digital-only {:.3} m, availability {:.3}",
            dir.display(),
            s.fused.mean_error,
            s.digital.mean_error,
            s.fused.availability
        );
    }
    Ok(())
}

fn report(runs: &Path, svg: &Path, table: Option<PathBuf>, baseline: bool) -> roadcourse::Result<()> {
    let records = find_runs(runs)?
        .iter()
        .map(|d| RunRecord::load(d))
        .collect::<roadcourse::Result<Vec<_>>>()?;
    write(svg, &svg_plot(&records, baseline))?;
    let table = table.unwrap_or_else(|| svg.with_file_name("summary.csv"));
    let text = summary_table(&records);
    write(&table, &text)?;
    print!("{text}");
    Ok(())
}

fn write(path: &Path, text: &str) -> roadcourse::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn batch(
    presets: &str,
    seeds: u64,
    frames: usize,
    config: Option<&Path>,
    jobs: usize,
    out: &Path,
) -> roadcourse::Result<()> {
    let cfg = load_config(config)?;
    let presets = presets
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| c.to_string().parse::<Preset>())
        .collect::<roadcourse::Result<Vec<_>>>()?;
    let jobs_list: Vec<(Preset, u64)> = presets.iter().flat_map(|&p| (0..seeds).map(move |s| (p, s))).collect();
    std::fs::create_dir_all(out).map_err(|e| Error::InvalidInput(format!("{}: {e}", out.display())))?;
    let workers = jobs.clamp(1, jobs_list.len().max(1));
    let results: Vec<roadcourse::Result<()>> = std::thread::scope(|sc| {
        let handles: Vec<_> = (0..workers)
            .map(|k| {
                let (jobs_list, cfg) = (&jobs_list, &cfg);
                sc.spawn(move || {
                    jobs_list
                        .iter()
                        .skip(k)
                        .step_by(workers)
                        .map(|&(p, seed)| {
                            let scn = Scenario::generate(&ScenarioConfig {
                                frames,
                                ..ScenarioConfig::preset(p, seed)
                            })?;
                            let cfg = PipelineConfig { seed, ..cfg.clone() };
                            let s = roadcourse::run(&scn, &cfg, RunOptions::default(), &mut ())?;
                            let dir = out.join(format!("{p}_{seed:03}"));
                            std::fs::create_dir_all(&dir)
                                .map_err(|e| Error::InvalidInput(format!("{}: {e}", dir.display())))?;
                            write_evaluation(&dir, &s, &p.to_string())?;
                            info!("{p} seed {seed}: fused {:.3} m, digital {:.3} m", s.fused.mean_error, s.digital.mean_error);
                            Ok(())
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    results.into_iter().collect::<roadcourse::Result<Vec<_>>>()?;
    report(out, &out.join("profile.svg"), Some(out.join("summary.csv")), true)
}

fn execute(cmd: Command) -> roadcourse::Result<()> {
    match cmd {
        Command::Simulate { preset, seed, frames, out } => simulate(preset, seed, frames, &out),
        Command::Train {
            data,
            topology,
            pooling,
            epochs,
            learn_rate,
            seed,
            every,
            no_tune,
            out,
        } => train_cmd(&data, &topology, pooling, epochs, learn_rate, seed, every, no_tune, &out),
        Command::Infer { weights, image, out } => infer(&weights, &image, &out),
        Command::Run {
            scenario,
            config,
            no_optical,
            truth_labels,
            out,
        } => run_cmd(&scenario, config.as_deref(), no_optical, truth_labels, out),
        Command::Evaluate { scenario, runs, config } => evaluate(&scenario, &runs, config.as_deref()),
        Command::Report { runs, svg, table, baseline } => report(&runs, &svg, table, baseline),
        Command::Batch {
            presets,
            seeds,
            frames,
            config,
            jobs,
            out,
        } => batch(&presets, seeds, frames, config.as_deref(), jobs, &out),
        Command::Config => {
            print!("{}", PipelineConfig::default().to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
