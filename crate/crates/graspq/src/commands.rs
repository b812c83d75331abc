//! The four `graspq` subcommands as library functions.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use graspq_core::gqn::ViewMode;
use graspq_core::seed::{self, Stream};
use graspq_core::servo::{evaluate, run_episode, train, EpisodeLog, EvalReport, Model};
use graspq_core::world::{GraspWorld, ObjectKind};

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::error::{io_err, Result};
use crate::frames::{write_pgm, write_ppm};
use crate::plot::render_svg;
use crate::trainlog::{final_success, read_log, write_log};

pub const LOG_FILE: &str = "train.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.gqck";
pub const CONFIG_FILE: &str = "config.txt";
pub const ABLATION_FILE: &str = "ablation.csv";

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub log: Vec<EpisodeLog>,
    pub final_success: f64,
    pub log_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub checkpoint: Checkpoint,
}

fn progress(tag: &str, verbose: bool) -> impl FnMut(&EpisodeLog) + '_ {
    let mut wins = 0usize;
    move |row: &EpisodeLog| {
        wins += usize::from(row.success);
        if verbose && (row.episode + 1).is_multiple_of(100) {
            eprintln!(
                "{tag}episode {:>5}  success(last 100) {:.2}  epsilon {:.3}  loss {:.5}",
                row.episode + 1,
                wins as f64 / 100.0,
                row.epsilon,
                row.loss
            );
            wins = 0;
        } else if (row.episode + 1).is_multiple_of(100) {
            wins = 0;
        }
    }
}

/// Trains, then writes `train.csv`, `checkpoint.gqck` and `config.txt`
/// (plus `frames/` when `debug_frames > 0`) under `out`.
pub fn cmd_train(config: &RunConfig, out: &Path, verbose: bool) -> Result<TrainReport> {
    config.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let outcome = train(&config.train, progress("", verbose))?;
    fs::write(out.join(CONFIG_FILE), config.to_text()).map_err(io_err(out.join(CONFIG_FILE)))?;
    let log_path = out.join(LOG_FILE);
    write_log(&log_path, &outcome.log)?;
    let checkpoint_path = out.join(CHECKPOINT_FILE);
    let ck = Checkpoint {
        config: config.clone(),
        episodes: outcome.log.len() as u64,
        model: outcome.model,
    };
    checkpoint::save(&checkpoint_path, &ck)?;
    if config.debug_frames > 0 {
        dump_frames(config, &ck.model, &out.join("frames"))?;
    }
    Ok(TrainReport {
        final_success: final_success(&outcome.log),
        log: outcome.log,
        log_path,
        checkpoint_path,
        checkpoint: ck,
    })
}

fn dump_frames(config: &RunConfig, model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let world = GraspWorld::new(config.train.world.clone())?;
    let mut rng = seed::rng(config.train.seed, Stream::Policy, 2);
    for e in 0..config.debug_frames {
        let reset = seed::derive(config.train.seed, Stream::Evaluation, e as u64);
        let r = run_episode(&world, config.train.objects[0], reset, &mut &*model, 0.0, &mut rng)?;
        for (t, state) in r.states.iter().enumerate() {
            let obs = world.observe(state);
            let stem = format!("ep{e:03}_t{t:02}");
            write_ppm(&dir.join(format!("{stem}_overhead.ppm")), &obs.overhead)?;
            write_pgm(&dir.join(format!("{stem}_height.pgm")), &obs.overhead, 3)?;
            write_ppm(&dir.join(format!("{stem}_wrist.ppm")), &obs.wrist)?;
        }
    }
    Ok(())
}

/// Greedy success per object kind of a saved model.
pub fn cmd_eval(checkpoint: &Path, episodes: usize, seed: u64) -> Result<Vec<(ObjectKind, EvalReport)>> {
    let ck = checkpoint::load(checkpoint)?;
    let world = GraspWorld::new(ck.config.train.world.clone())?;
    ObjectKind::ALL
        .iter()
        .map(|&kind| Ok((kind, evaluate(&world, &mut &ck.model, kind, episodes, seed)?)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub view: ViewMode,
    pub object: ObjectKind,
    /// Final-10% training success, one value per seed.
    pub success: Vec<f64>,
}

pub const ABLATION_VIEWS: [ViewMode; 2] = [ViewMode::Single, ViewMode::Multi];

fn run_name(view: ViewMode, object: ObjectKind, seed: u64) -> String {
    format!("{view}-{object}-seed{seed}")
}

/// Trains every view × object × seed cell and writes per-run logs under
/// `out/runs/` plus the `ablation.csv` summary.
pub fn cmd_ablate(config: &RunConfig, out: &Path, verbose: bool) -> Result<Vec<AblationRow>> {
    config.validate()?;
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    let seeds = config.seeds();
    let cells: Vec<(ViewMode, ObjectKind, u64)> = ABLATION_VIEWS
        .iter()
        .flat_map(|&v| ObjectKind::ALL.iter().map(move |&o| (v, o)))
        .flat_map(|(v, o)| seeds.iter().map(move |&s| (v, o, s)))
        .collect();
    let results: Mutex<Vec<Option<Result<f64>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let jobs = match config.jobs {
        0 => std::thread::available_parallelism().map_or(1, usize::from),
        n => n,
    }
    .min(cells.len());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(view, object, seed)) = cells.get(i) else {
            break;
        };
        let mut c = config.with_view(view);
        c.train.objects = vec![object];
        c.train.seed = seed;
        let name = run_name(view, object, seed);
        let tag = format!("[{name}] ");
        let result = train(&c.train, progress(&tag, verbose))
            .map_err(Into::into)
            .and_then(|o| {
                write_log(&runs_dir.join(format!("{name}.csv")), &o.log)?;
                Ok(final_success(&o.log))
            });
        results.lock().unwrap()[i] = Some(result);
    };
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(work);
        }
    });
    let mut values = Vec::with_capacity(cells.len());
    for r in results.into_inner().unwrap() {
        values.push(r.expect("every cell ran")?);
    }
    let rows: Vec<AblationRow> = values
        .chunks(seeds.len())
        .zip(ABLATION_VIEWS.iter().flat_map(|&v| ObjectKind::ALL.iter().map(move |&o| (v, o))))
        .map(|(success, (view, object))| AblationRow {
            view,
            object,
            success: success.to_vec(),
        })
        .collect();
    write_ablation(&out.join(ABLATION_FILE), &seeds, &rows)?;
    Ok(rows)
}

fn write_ablation(path: &Path, seeds: &[u64], rows: &[AblationRow]) -> Result<()> {
    let mut text = String::from("view,object");
    for s in seeds {
        text.push_str(&format!(",seed{s}"));
    }
    text.push('\n');
    for r in rows {
        text.push_str(&format!("{},{}", r.view, r.object));
        for v in &r.success {
            text.push_str(&format!(",{v:.6}"));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Success-rate learning curves of the given training logs, one line each.
pub fn cmd_plot(logs: &[PathBuf], out: &Path) -> Result<()> {
    let mut series = Vec::with_capacity(logs.len());
    for path in logs {
        let rows = read_log(path)?;
        let label = path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        series.push((label, rows.iter().map(|r| f64::from(u8::from(r.success))).collect()));
    }
    let svg = render_svg("Grasp success during training", "success rate", &series);
    fs::write(out, svg).map_err(io_err(out))
}
