use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gog_core::geom::{Line2, Vec2};
use gog_core::gripper::GripperState;
use gog_core::harness::{
    self, load_scenario, load_suite, prepare_cloth, trial_setup, RunOptions, Scenario, Suite,
};
use gog_core::io::Raster;
use gog_core::metrics::{generate_fold_ground_truth, iou, wrinkle_penalty};
use gog_core::percept::DEFAULT_SCALE;
use gog_core::planner::{execute, TaskKind, Trajectory};

#[derive(Parser)]
#[command(
    name = "gog",
    version,
    about = "Cloth manipulation benchmark for a width-controlled, variable-friction gripper"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of a suite file and write rows, aggregates and masks.
    Run {
        suite: PathBuf,
        /// Output directory (default: the suite's `out`, else ./gog-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the suite seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also render episode frames.
        #[arg(long)]
        frames: bool,
        /// Render every Nth recorded frame.
        #[arg(long, default_value_t = 10)]
        stride: usize,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Score a fold from two mask images (PGM or PNG).
    Score {
        pre: PathBuf,
        post: PathBuf,
        /// Fold line as `px,py,nx,ny` in world meters; the normal points at
        /// the side that moves.
        #[arg(long, value_parser = parse_line, allow_hyphen_values = true)]
        fold_line: Line2,
        /// Shaded post-fold image for the wrinkle penalty.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Meters per pixel for images that carry no placement.
        #[arg(long, default_value_t = DEFAULT_SCALE)]
        scale: f64,
    },
    /// Execute a trajectory file on a settled cloth and print the episode.
    Replay {
        trajectory: PathBuf,
        /// Scenario whose cloth, gripper and first trial pose are used
        /// (default: the 0.3 m square at the origin).
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full report, frames included, here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print or check configuration files.
    Config {
        /// Print a suite file with every key at its default.
        #[arg(long)]
        defaults: bool,
        /// Validate a scenario or suite file.
        #[arg(long)]
        check: Option<PathBuf>,
    },
}

fn parse_line(s: &str) -> std::result::Result<Line2, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: {t:?}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != 4 {
        return Err(format!("expected px,py,nx,ny, got {} values", v.len()));
    }
    Line2::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]))
        .ok_or_else(|| "normal must be non-zero".to_string())
}

fn default_suite() -> Suite {
    let mut s = Scenario::new("example", TaskKind::Fold);
    s.params.n_folds = Some(2);
    s.params.direction = Some([1.0, 0.0]);
    Suite::new(0, vec![s])
}

fn run(
    suite: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    frames: bool,
    stride: usize,
    jobs: Option<usize>,
) -> Result<bool> {
    let suite_file = load_suite(&suite)?;
    let out = out
        .or_else(|| suite_file.out.clone())
        .unwrap_or_else(|| PathBuf::from("gog-out"));
    let opts = RunOptions {
        seed,
        jobs,
        snapshots: frames,
    };
    let run = harness::run_suite(&suite_file, &opts)?;
    run.write(&out, frames.then_some(stride))
        .with_context(|| format!("writing {}", out.display()))?;
    for a in &run.report.summary.scenarios {
        let mut line = format!("{:<24} {:>7}", a.scope, a.count);
        let mut add = |label: &str, v: Option<f64>| {
            if let Some(v) = v {
                line.push_str(&format!("  {label} {v:.4}"));
            }
        };
        add("miou1", a.miou_1);
        add("miou2", a.miou_2);
        add("wr", a.mean_wr);
        add("offset_mm", a.mean_abs_offset.map(|v| v * 1000.0));
        add("perfect%", a.lift_perfect_pct);
        add("force_n", a.mean_peak_force);
        add("z_before", a.mean_max_z_before);
        add("z_after", a.mean_max_z_after);
        println!("{line}");
    }
    for r in run.report.rows.iter().filter(|r| !r.valid) {
        eprintln!(
            "trial {} #{} failed: {}",
            r.scenario,
            r.trial,
            r.failure.as_deref().unwrap_or("unknown")
        );
    }
    println!("wrote {}", out.display());
    Ok(run.report.all_valid())
}

fn score(
    pre: PathBuf,
    post: PathBuf,
    line: Line2,
    image: Option<PathBuf>,
    scale: f64,
) -> Result<()> {
    let load = |p: &PathBuf| Raster::load(p).with_context(|| format!("reading {}", p.display()));
    let pre_mask = load(&pre)?.to_mask(scale)?;
    let post_mask = load(&post)?.to_mask(scale)?;
    let truth = generate_fold_ground_truth(&pre_mask, &line)?;
    let mut out = serde_json::Map::new();
    out.insert("iou".into(), iou(&post_mask, &truth).into());
    out.insert(
        "area_ratio".into(),
        (post_mask.count() as f64 / pre_mask.count().max(1) as f64).into(),
    );
    if let Some(p) = image {
        let img = load(&p)?.to_gray(scale)?;
        if img.frame != post_mask.frame {
            bail!(
                "{} and {} are not on the same pixel grid",
                p.display(),
                post.display()
            );
        }
        out.insert(
            "wr".into(),
            wrinkle_penalty(&img, &post_mask, &Default::default())?.into(),
        );
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn replay(
    trajectory: PathBuf,
    scenario: Option<PathBuf>,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<bool> {
    let text = std::fs::read_to_string(&trajectory)
        .with_context(|| format!("reading {}", trajectory.display()))?;
    let traj: Trajectory = text.parse()?;
    let s = match scenario {
        Some(p) => load_scenario(&p)?,
        None => {
            let mut s = Scenario::new("replay", TaskKind::Fold);
            s.pose.jitter_xy = 0.0;
            s.pose.jitter_yaw_deg = 0.0;
            s
        }
    };
    let cloth = prepare_cloth(&s, &trial_setup(&s, seed, 0)?)?;
    let gripper = GripperState::new(s.gripper)?;
    let mut report = execute(s.task, &traj, &cloth, &gripper, &s.exec)?.report;
    if let Some(p) = out {
        std::fs::write(&p, report.to_json()? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
    }
    report.frames.clear();
    println!("{}", report.to_json()?);
    Ok(!report.failed())
}

fn config(defaults: bool, check: Option<PathBuf>) -> Result<()> {
    if let Some(p) = check {
        let text =
            std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        // a scenario file has a top-level task; anything else is a suite
        let is_scenario = text
            .parse::<toml::Table>()
            .map(|t| t.contains_key("task"))
            .unwrap_or(false);
        if !is_scenario {
            let suite = gog_core::harness::parse_suite(&text, &p)?;
            println!("ok: {} scenario(s)", suite.resolved()?.len());
        } else {
            let s = gog_core::harness::parse_scenario(&text, &p)?;
            println!(
                "ok: scenario {} ({} task, {} trials)",
                s.name, s.task, s.trials
            );
        }
        return Ok(());
    }
    if !defaults {
        bail!("nothing to do: pass --defaults or --check FILE");
    }
    print!("{}", toml::to_string(&default_suite())?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            suite,
            out,
            seed,
            frames,
            stride,
            jobs,
        } => run(suite, out, seed, frames, stride, jobs),
        Command::Score {
            pre,
            post,
            fold_line,
            image,
            scale,
        } => score(pre, post, fold_line, image, scale).map(|_| true),
        Command::Replay {
            trajectory,
            scenario,
            seed,
            out,
        } => replay(trajectory, scenario, seed, out),
        Command::Config { defaults, check } => config(defaults, check).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
