//! Suite results: per-trial rows (CSV) and aggregates (JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::planner::{LiftClass, TaskKind};

use super::scenario::Scenario;
use super::tasks::TrialRow;

pub const ROWS_FILE: &str = "rows.csv";
pub const REPORT_FILE: &str = "report.json";

/// Means over the valid rows of one scenario, or of the whole suite.
/// Entries stay empty when no valid row carries the metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scope: String,
    pub task: Option<TaskKind>,
    pub trials: usize,
    pub valid: usize,
    /// `"valid/trials"`.
    pub count: String,
    pub miou_1: Option<f64>,
    pub miou_2: Option<f64>,
    /// Over every fold of every valid trial.
    pub miou: Option<f64>,
    pub mean_wr_1: Option<f64>,
    pub mean_wr_2: Option<f64>,
    pub mean_wr: Option<f64>,
    pub mean_offset: Option<f64>,
    pub mean_abs_offset: Option<f64>,
    pub lift_perfect_pct: Option<f64>,
    pub lift_half_pct: Option<f64>,
    pub lift_fail_pct: Option<f64>,
    pub mean_peak_force: Option<f64>,
    pub mean_max_z_before: Option<f64>,
    pub mean_max_z_after: Option<f64>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl Aggregate {
    /// Aggregates `rows` in the order given.
    pub fn over<'a>(
        scope: &str,
        task: Option<TaskKind>,
        rows: impl IntoIterator<Item = &'a TrialRow>,
    ) -> Self {
        let rows: Vec<&TrialRow> = rows.into_iter().collect();
        let valid: Vec<&TrialRow> = rows.iter().copied().filter(|r| r.valid).collect();
        let pick = |f: fn(&TrialRow) -> Option<f64>| mean(valid.iter().filter_map(|r| f(r)));
        let both = |a: fn(&TrialRow) -> Option<f64>, b: fn(&TrialRow) -> Option<f64>| {
            mean(valid.iter().flat_map(|r| [a(r), b(r)]).flatten())
        };
        let lifts: Vec<LiftClass> = valid.iter().filter_map(|r| r.lift).collect();
        let pct = |c: LiftClass| {
            (!lifts.is_empty()).then(|| {
                100.0 * lifts.iter().filter(|l| **l == c).count() as f64 / lifts.len() as f64
            })
        };
        Aggregate {
            scope: scope.to_string(),
            task,
            trials: rows.len(),
            valid: valid.len(),
            count: format!("{}/{}", valid.len(), rows.len()),
            miou_1: pick(|r| r.iou_1),
            miou_2: pick(|r| r.iou_2),
            miou: both(|r| r.iou_1, |r| r.iou_2),
            mean_wr_1: pick(|r| r.wr_1),
            mean_wr_2: pick(|r| r.wr_2),
            mean_wr: both(|r| r.wr_1, |r| r.wr_2),
            mean_offset: pick(|r| r.offset),
            mean_abs_offset: pick(|r| r.offset.map(f64::abs)),
            lift_perfect_pct: pct(LiftClass::Perfect),
            lift_half_pct: pct(LiftClass::Half),
            lift_fail_pct: pct(LiftClass::Fail),
            mean_peak_force: pick(|r| r.peak_force),
            mean_max_z_before: pick(|r| r.max_z_before),
            mean_max_z_after: pick(|r| r.max_z_after),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub seed: u64,
    /// SHA-256 of the resolved scenario list.
    pub config_hash: String,
    pub scenarios: usize,
    pub trials: usize,
    pub valid: usize,
}

/// The JSON half of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub meta: RunMeta,
    pub scenarios: Vec<Aggregate>,
    pub overall: Aggregate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub summary: Summary,
    /// Sorted by scenario name, then trial.
    pub rows: Vec<TrialRow>,
}

pub fn config_hash(scenarios: &[Scenario]) -> String {
    let canonical = serde_json::to_vec(scenarios).expect("scenarios serialize");
    hex::encode(Sha256::digest(&canonical))
}

fn summarize(meta_seed: u64, config_hash: String, version: String, rows: &[TrialRow]) -> Summary {
    let mut scenarios = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let name = &rows[start].scenario;
        let end = start
            + rows[start..]
                .iter()
                .take_while(|r| &r.scenario == name)
                .count();
        scenarios.push(Aggregate::over(
            name,
            Some(rows[start].task),
            &rows[start..end],
        ));
        start = end;
    }
    Summary {
        meta: RunMeta {
            version,
            seed: meta_seed,
            config_hash,
            scenarios: scenarios.len(),
            trials: rows.len(),
            valid: rows.iter().filter(|r| r.valid).count(),
        },
        scenarios,
        overall: Aggregate::over("overall", None, rows),
    }
}

impl SuiteReport {
    /// Builds the report from rows, which are put in canonical order first.
    pub fn new(seed: u64, scenarios: &[Scenario], mut rows: Vec<TrialRow>) -> Self {
        rows.sort_by(|a, b| a.scenario.cmp(&b.scenario).then(a.trial.cmp(&b.trial)));
        let summary = summarize(
            seed,
            config_hash(scenarios),
            env!("CARGO_PKG_VERSION").to_string(),
            &rows,
        );
        SuiteReport { summary, rows }
    }

    pub fn all_valid(&self) -> bool {
        self.rows.iter().all(|r| r.valid)
    }

    pub fn rows_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(csv_error)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn summary_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.summary)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(ROWS_FILE), self.rows_csv()?)?;
        std::fs::write(dir.join(REPORT_FILE), self.summary_json()?)?;
        Ok(())
    }

    /// Reads a written report and checks that its aggregates follow from
    /// its rows.
    pub fn load(dir: &Path) -> Result<Self> {
        let rows_path = dir.join(ROWS_FILE);
        let mut reader = csv::Reader::from_path(&rows_path).map_err(csv_error)?;
        let rows = reader
            .deserialize()
            .collect::<std::result::Result<Vec<TrialRow>, _>>()
            .map_err(|e| Error::Config {
                path: rows_path.clone(),
                message: e.to_string(),
            })?;
        let summary_path = dir.join(REPORT_FILE);
        let summary: Summary = serde_json::from_slice(&std::fs::read(&summary_path)?)?;
        let report = SuiteReport { summary, rows };
        report.check()?;
        Ok(report)
    }

    /// Recomputes every aggregate from the rows and compares exactly.
    pub fn check(&self) -> Result<()> {
        let m = &self.summary.meta;
        let again = summarize(m.seed, m.config_hash.clone(), m.version.clone(), &self.rows);
        if again != self.summary {
            return Err(Error::validation(
                "suite report",
                "aggregates do not match the rows",
            ));
        }
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::validation("rows", format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, trial: usize, valid: bool, iou: Option<f64>) -> TrialRow {
        TrialRow {
            scenario: name.into(),
            trial,
            task: TaskKind::Fold,
            x: 0.01 * trial as f64,
            y: -0.02,
            yaw_deg: 12.5,
            valid,
            iou_1: iou,
            wr_1: iou.map(|_| 0.001),
            area_ratio_1: None,
            iou_2: None,
            wr_2: None,
            area_ratio_2: None,
            offset: None,
            lift: None,
            peak_force: None,
            max_z_before: None,
            max_z_after: None,
            failure: (!valid).then(|| "simulation diverged, at t=1".to_string()),
        }
    }

    #[test]
    fn aggregates_skip_failed_rows() {
        let rows = vec![
            row("a", 0, true, Some(0.9)),
            row("a", 1, true, Some(0.8)),
            row("a", 2, false, Some(0.1)),
        ];
        let agg = Aggregate::over("a", Some(TaskKind::Fold), &rows);
        assert_eq!(agg.count, "2/3");
        assert!((agg.miou_1.unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(agg.miou, agg.miou_1);
        assert_eq!(agg.mean_offset, None);
    }

    #[test]
    fn written_report_loads_and_checks() {
        let rows = vec![
            row("b", 1, true, Some(0.7)),
            row("a", 0, false, None),
            row("b", 0, true, Some(1.0 / 3.0)),
        ];
        let r = SuiteReport::new(4, &[], rows);
        assert_eq!(r.rows[0].scenario, "a");
        assert_eq!(r.rows[1].trial, 0);
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        let back = SuiteReport::load(dir.path()).unwrap();
        assert_eq!(back, r);

        let json = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
        std::fs::write(
            dir.path().join(REPORT_FILE),
            json.replace("\"2/2\"", "\"3/3\""),
        )
        .unwrap();
        assert!(SuiteReport::load(dir.path()).is_err());
    }
}
