//! Scenario and suite files.
//!
//! A scenario is one task run for a number of trials on one cloth. Files are
//! TOML; every table rejects unknown keys and omitted tables take their
//! defaults. A suite file holds a seed, optional catalog entries and any
//! number of `[[scenario]]` tables.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloth::ClothSpec;
use crate::error::{Error, Result};
use crate::gripper::GripperParams;
use crate::metrics::{CannyParams, PayloadSetup};
use crate::percept::{CornerParams, DEFAULT_SCALE};
use crate::planner::{ExecParams, FoldOptions, PlannerParams, TaskKind};

use super::catalog;

/// Where each trial places the cloth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseSpec {
    pub x: f64,
    pub y: f64,
    pub yaw_deg: f64,
    /// Uniform jitter added to x and y, meters either way.
    pub jitter_xy: f64,
    pub jitter_yaw_deg: f64,
    /// Explicit `[x, y, yaw_deg]` poses, used in turn instead of jitter.
    pub poses: Vec<[f64; 3]>,
    /// Random ridges raised before settling.
    pub wrinkles: usize,
    pub wrinkle_amplitude: f64,
    pub wrinkle_half_width: f64,
}

impl Default for PoseSpec {
    fn default() -> Self {
        PoseSpec {
            x: 0.0,
            y: 0.0,
            yaw_deg: 0.0,
            jitter_xy: 0.05,
            jitter_yaw_deg: 45.0,
            poses: Vec::new(),
            wrinkles: 0,
            wrinkle_amplitude: 0.02,
            wrinkle_half_width: 0.03,
        }
    }
}

/// Task parameters. Which keys are required, optional or forbidden depends
/// on the task; see [`Scenario::validate`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_folds: Option<usize>,
    /// World direction: the moving side for folds, travel for drags, the
    /// grasped edge for lifts, the slide for flattening.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slide_length: Option<f64>,
    /// Distance of the flattening ridge from the cloth center along
    /// `direction`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge_offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge_half_width: Option<f64>,
}

pub const DEFAULT_DIRECTION: [f64; 2] = [1.0, 0.0];
pub const DEFAULT_RIDGE_OFFSET: f64 = 0.05;
pub const DEFAULT_RIDGE_AMPLITUDE: f64 = 0.02;
pub const DEFAULT_RIDGE_HALF_WIDTH: f64 = 0.03;

impl TaskParams {
    fn present(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut note = |set: bool, k| {
            if set {
                keys.push(k)
            }
        };
        note(self.n_folds.is_some(), "n_folds");
        note(self.direction.is_some(), "direction");
        note(self.distance.is_some(), "distance");
        note(self.height.is_some(), "height");
        note(self.hold.is_some(), "hold");
        note(self.slide_length.is_some(), "slide_length");
        note(self.ridge_offset.is_some(), "ridge_offset");
        note(self.ridge_amplitude.is_some(), "ridge_amplitude");
        note(self.ridge_half_width.is_some(), "ridge_half_width");
        keys
    }

    pub fn direction(&self) -> [f64; 2] {
        self.direction.unwrap_or(DEFAULT_DIRECTION)
    }
}

/// (required, optional) task keys.
fn task_keys(task: TaskKind) -> (&'static [&'static str], &'static [&'static str]) {
    match task {
        TaskKind::Fold => (&["n_folds"], &["direction"]),
        TaskKind::Drag => (&["distance"], &["direction"]),
        TaskKind::Lift => (&["height", "hold"], &["direction"]),
        TaskKind::Flatten => (
            &["slide_length"],
            &[
                "direction",
                "ridge_offset",
                "ridge_amplitude",
                "ridge_half_width",
            ],
        ),
        TaskKind::Payload => (&[], &[]),
    }
}

/// Mask resolution and settling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    /// Meters per mask pixel.
    pub scale: f64,
    /// Settling before the task and after each manipulation, seconds.
    pub settle_time: f64,
    /// Kinetic energy per particle below which the cloth counts as still, J.
    pub settle_tol: f64,
    /// Align fold and drag directions with the observed cloth edges.
    pub snap_direction: bool,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            scale: DEFAULT_SCALE,
            settle_time: 2.0,
            settle_tol: 1e-7,
            snap_direction: true,
        }
    }
}

fn default_trials() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub task: TaskKind,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub params: TaskParams,
    #[serde(default)]
    pub pose: PoseSpec,
    #[serde(default)]
    pub cloth: ClothSpec,
    #[serde(default)]
    pub gripper: GripperParams,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub corners: CornerParams,
    #[serde(default)]
    pub canny: CannyParams,
    #[serde(default)]
    pub exec: ExecParams,
    #[serde(default)]
    pub sim: SimSpec,
    /// Pull rig for payload tasks; carries its own cloth.
    #[serde(default)]
    pub payload: PayloadSetup,
}

impl Scenario {
    /// A scenario with default blocks and no task parameters.
    pub fn new(name: impl Into<String>, task: TaskKind) -> Self {
        Scenario {
            name: name.into(),
            task,
            trials: default_trials(),
            params: TaskParams::default(),
            pose: PoseSpec::default(),
            cloth: ClothSpec::default(),
            gripper: GripperParams::default(),
            planner: PlannerParams::default(),
            corners: CornerParams::default(),
            canny: CannyParams::default(),
            exec: ExecParams::default(),
            sim: SimSpec::default(),
            payload: PayloadSetup::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid =
            |reason: String| Error::validation("scenario", format!("{}: {reason}", self.name));
        if self.name.trim().is_empty() {
            return Err(Error::validation("scenario", "name must not be empty"));
        }
        if !self
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(invalid(
                "name may only hold letters, digits, '-', '_' and '.'".into(),
            ));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1".into()));
        }
        let (required, optional) = task_keys(self.task);
        for key in required {
            if !self.params.present().contains(key) {
                return Err(invalid(format!("task {} needs params.{key}", self.task)));
            }
        }
        for key in self.params.present() {
            if !required.contains(&key) && !optional.contains(&key) {
                return Err(invalid(format!(
                    "params.{key} does not apply to {} tasks",
                    self.task
                )));
            }
        }
        let p = &self.params;
        if let Some(n) = p.n_folds {
            if !(1..=2).contains(&n) {
                return Err(invalid(format!("params.n_folds must be 1 or 2, got {n}")));
            }
        }
        if let Some([x, y]) = p.direction {
            if !(x.is_finite() && y.is_finite()) || x.hypot(y) < 1e-9 {
                return Err(invalid(
                    "params.direction must be a finite non-zero vector".into(),
                ));
            }
        }
        let positive = |v: Option<f64>, key: &str, allow_zero: bool| -> Result<()> {
            match v {
                Some(v) if !v.is_finite() || v < 0.0 || (!allow_zero && v == 0.0) => {
                    Err(invalid(format!(
                        "params.{key} must be {}, got {v}",
                        if allow_zero {
                            "non-negative"
                        } else {
                            "positive"
                        }
                    )))
                }
                _ => Ok(()),
            }
        };
        positive(p.distance, "distance", true)?;
        positive(p.height, "height", false)?;
        positive(p.hold, "hold", true)?;
        positive(p.slide_length, "slide_length", false)?;
        positive(p.ridge_amplitude, "ridge_amplitude", true)?;
        positive(p.ridge_half_width, "ridge_half_width", false)?;
        if let Some(v) = p.ridge_offset {
            if !v.is_finite() {
                return Err(invalid("params.ridge_offset must be finite".into()));
            }
        }
        let pose = &self.pose;
        if !(pose.jitter_xy >= 0.0 && pose.jitter_yaw_deg >= 0.0) {
            return Err(invalid("pose jitter must be non-negative".into()));
        }
        if pose.wrinkles > 0 && !(pose.wrinkle_amplitude >= 0.0 && pose.wrinkle_half_width > 0.0) {
            return Err(invalid(
                "wrinkle amplitude and half width must be valid".into(),
            ));
        }
        if !(self.sim.scale > 0.0 && self.sim.settle_time >= 0.0 && self.sim.settle_tol > 0.0) {
            return Err(invalid(
                "sim scale, settle_time and settle_tol must be positive".into(),
            ));
        }
        self.cloth.validate()?;
        self.gripper.validate()?;
        self.planner.validate(&self.gripper)?;
        if self.task == TaskKind::Payload {
            self.payload.cloth.validate()?;
        }
        Ok(())
    }

    pub fn fold_options(&self) -> FoldOptions {
        FoldOptions {
            scale: self.sim.scale,
            corners: self.corners,
            planner: self.planner,
            exec: self.exec,
            canny: self.canny,
            settle_time: self.sim.settle_time,
            settle_tol: self.sim.settle_tol,
            snap_direction: self.sim.snap_direction,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub seed: u64,
    /// Default output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Bundled catalog items to include, each expanding to its scenarios.
    #[serde(default)]
    pub catalog: Vec<String>,
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<Scenario>,
}

impl Suite {
    pub fn new(seed: u64, scenarios: Vec<Scenario>) -> Self {
        Suite {
            seed,
            out: None,
            catalog: Vec::new(),
            scenarios,
        }
    }

    /// Catalog entries expanded in front of the file's own scenarios.
    pub fn resolved(&self) -> Result<Vec<Scenario>> {
        let mut all = Vec::new();
        for name in &self.catalog {
            all.extend(catalog::scenarios_for(name)?);
        }
        all.extend(self.scenarios.iter().cloned());
        if all.is_empty() {
            return Err(Error::validation("suite", "no scenarios"));
        }
        let mut names: Vec<&str> = all.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(
                "suite",
                format!("scenario name {:?} appears twice", w[0]),
            ));
        }
        for s in &all {
            s.validate()?;
        }
        Ok(all)
    }
}

fn line_of(text: &str, span: &Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

fn config_error(path: &Path, message: String) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        message,
    }
}

fn parse_error(path: &Path, text: &str, e: toml::de::Error) -> Error {
    let message = e.message().trim_end().to_string();
    match e.span() {
        Some(span) => config_error(path, format!("line {}: {message}", line_of(text, &span))),
        None => config_error(path, message),
    }
}

/// Positions of the keys a validation message may point at.
#[derive(Deserialize)]
struct Located {
    #[serde(default)]
    name: Option<String>,
    task: Option<toml::Spanned<toml::Value>>,
    params: Option<toml::Spanned<toml::Value>>,
}

#[derive(Deserialize)]
struct LocatedSuite {
    #[serde(default)]
    scenario: Vec<toml::Spanned<Located>>,
}

fn locate(loc: &Located, whole: Option<&Range<usize>>, message: &str) -> Option<Range<usize>> {
    let key_span = |v: &Option<toml::Spanned<toml::Value>>| v.as_ref().map(|s| s.span());
    if message.contains("params.") {
        key_span(&loc.params).or_else(|| key_span(&loc.task))
    } else {
        key_span(&loc.task)
    }
    .or_else(|| whole.cloned())
}

fn validation_error(path: &Path, text: &str, span: Option<Range<usize>>, e: Error) -> Error {
    match span {
        Some(span) => config_error(path, format!("line {}: {e}", line_of(text, &span))),
        None => config_error(path, e.to_string()),
    }
}

/// Parses and validates one scenario.
pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| parse_error(path, text, e))?;
    scenario.validate().map_err(|e| {
        let span = toml::from_str::<Located>(text)
            .ok()
            .and_then(|loc| locate(&loc, None, &e.to_string()));
        validation_error(path, text, span, e)
    })?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(path, e.to_string()))?;
    parse_scenario(&text, path)
}

/// Parses a suite and validates every scenario in it, catalog entries
/// included.
pub fn parse_suite(text: &str, path: &Path) -> Result<Suite> {
    let suite: Suite = toml::from_str(text).map_err(|e| parse_error(path, text, e))?;
    for s in &suite.scenarios {
        if let Err(e) = s.validate() {
            let span = toml::from_str::<LocatedSuite>(text).ok().and_then(|ls| {
                let message = e.to_string();
                ls.scenario
                    .iter()
                    .find(|l| l.get_ref().name.as_deref() == Some(s.name.as_str()))
                    .and_then(|l| locate(l.get_ref(), Some(&l.span()), &message))
            });
            return Err(validation_error(path, text, span, e));
        }
    }
    suite
        .resolved()
        .map_err(|e| config_error(path, e.to_string()))?;
    Ok(suite)
}

pub fn load_suite(path: &Path) -> Result<Suite> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(path, e.to_string()))?;
    parse_suite(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario> {
        parse_scenario(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_fold_fills_defaults() {
        let s = parse("name = \"t\"\ntask = \"fold\"\n[params]\nn_folds = 2\n").unwrap();
        assert_eq!(s.trials, 5);
        assert_eq!(s.cloth, ClothSpec::default());
        assert_eq!(s.pose.jitter_yaw_deg, 45.0);
        assert_eq!(s.params.direction(), DEFAULT_DIRECTION);
    }

    #[test]
    fn missing_task_key_is_named() {
        let e = parse("name = \"t\"\ntask = \"fold\"\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("params.n_folds"), "{e}");
        assert!(e.contains("line 2"), "{e}");
        let e = parse("name = \"t\"\ntask = \"lift\"\n\n[params]\nheight = 0.5\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("params.hold") && e.contains("line 4"), "{e}");
    }

    #[test]
    fn foreign_task_key_is_rejected() {
        let e = parse("name = \"t\"\ntask = \"fold\"\n[params]\nn_folds = 1\ndistance = 0.5\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("params.distance"), "{e}");
    }

    #[test]
    fn duplicate_and_unknown_keys_carry_lines() {
        let e = parse("name = \"t\"\ntask = \"fold\"\ntask = \"drag\"\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 3"), "{e}");
        let e =
            parse("name = \"t\"\ntask = \"fold\"\n[params]\nn_folds = 1\n[cloth]\nwidht_m = 0.3\n")
                .unwrap_err()
                .to_string();
        assert!(e.contains("line 6") && e.contains("widht_m"), "{e}");
    }

    #[test]
    fn suite_rejects_duplicate_names_and_points_at_bad_scenario() {
        let text = "seed = 3\n[[scenario]]\nname = \"a\"\ntask = \"payload\"\n[[scenario]]\nname = \"a\"\ntask = \"payload\"\n";
        assert!(parse_suite(text, Path::new("s.toml"))
            .unwrap_err()
            .to_string()
            .contains("twice"));
        let text = "[[scenario]]\nname = \"a\"\ntask = \"payload\"\n\n[[scenario]]\nname = \"b\"\ntask = \"drag\"\n";
        let e = parse_suite(text, Path::new("s.toml"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("params.distance") && e.contains("line 7"), "{e}");
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let mut s = Scenario::new("x", TaskKind::Drag);
        s.params.distance = Some(0.5);
        let back = parse(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }
}
