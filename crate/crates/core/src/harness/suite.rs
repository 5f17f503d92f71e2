//! Running a suite: every trial of every scenario, in parallel, gathered in
//! canonical order.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::Raster;

use super::frames::render_frames;
use super::report::SuiteReport;
use super::scenario::{Scenario, Suite};
use super::tasks::{run_trial, trial_masks, trial_setup, TrialOutcome};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Overrides the suite's seed.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    /// Record particle snapshots so frames can be rendered.
    pub snapshots: bool,
}

pub struct SuiteRun {
    pub report: SuiteReport,
    /// Same order as the report rows.
    pub outcomes: Vec<TrialOutcome>,
    pub scenarios: Vec<Scenario>,
}

pub fn run_suite(suite: &Suite, opts: &RunOptions) -> Result<SuiteRun> {
    let scenarios = suite.resolved()?;
    let seed = opts.seed.unwrap_or(suite.seed);
    let jobs: Vec<(usize, usize)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(k, s)| (0..s.trials).map(move |t| (k, t)))
        .collect();
    let work = || -> Result<Vec<TrialOutcome>> {
        jobs.par_iter()
            .map(|&(k, t)| {
                let s = &scenarios[k];
                Ok(run_trial(s, trial_setup(s, seed, t)?, opts.snapshots))
            })
            .collect()
    };
    let mut outcomes = match opts.jobs {
        Some(0) => return Err(Error::validation("jobs", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::validation("jobs", e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    outcomes.sort_by(|a, b| {
        a.row
            .scenario
            .cmp(&b.row.scenario)
            .then(a.row.trial.cmp(&b.row.trial))
    });
    let report = SuiteReport::new(
        seed,
        &scenarios,
        outcomes.iter().map(|o| o.row.clone()).collect(),
    );
    Ok(SuiteRun {
        report,
        outcomes,
        scenarios,
    })
}

impl SuiteRun {
    /// Writes `rows.csv`, `report.json`, the suite as run (`suite.toml`),
    /// masks as P5 graymaps under `masks/` and one episode record per
    /// episode under `episodes/`. With `frame_stride`, episodes also get
    /// rendered frames under `frames/<scenario>_t<trial>_e<episode>/`.
    pub fn write(&self, dir: &Path, frame_stride: Option<usize>) -> Result<()> {
        self.report.write(dir)?;
        let resolved = Suite::new(self.report.summary.meta.seed, self.scenarios.clone());
        std::fs::write(
            dir.join("suite.toml"),
            toml::to_string(&resolved).map_err(|e| Error::validation("suite", e.to_string()))?,
        )?;
        let masks = dir.join("masks");
        let episodes = dir.join("episodes");
        std::fs::create_dir_all(&masks)?;
        std::fs::create_dir_all(&episodes)?;
        let scale_of = |name: &str| {
            self.scenarios
                .iter()
                .find(|s| s.name == name)
                .map(|s| s.sim.scale)
                .expect("outcome belongs to a scenario")
        };
        self.outcomes.par_iter().try_for_each(|o| -> Result<()> {
            for (stem, mask) in trial_masks(o) {
                Raster::from_mask(mask).save(&masks.join(format!("{stem}.pgm")))?;
            }
            for (k, e) in o.episodes.iter().enumerate() {
                let stem = format!("{}_t{:03}_e{}", o.row.scenario, o.row.trial, k + 1);
                let mut record = e.clone();
                if frame_stride.is_none() {
                    record.frames.clear();
                }
                std::fs::write(
                    episodes.join(format!("{stem}.json")),
                    record.to_json()? + "\n",
                )?;
                if let (Some(stride), Some(start)) = (frame_stride, &o.start) {
                    if e.frames.is_empty() {
                        continue;
                    }
                    let out = dir.join("frames").join(&stem);
                    std::fs::create_dir_all(&out)?;
                    for (name, img) in render_frames(e, start, stride, scale_of(&o.row.scenario))? {
                        std::fs::write(out.join(name), img.to_png()?)?;
                    }
                }
            }
            Ok(())
        })
    }
}
