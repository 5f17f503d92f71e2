//! Mass-spring cloth on a table plane.
//!
//! Particles sit on a regular grid connected by structural, shear and bend
//! springs. Integration is semi-implicit Euler at a fixed step; the table is
//! the plane z = 0, resolved by position projection with Coulomb friction on
//! the tangential velocity. Grasp constraints arrive from the gripper as a
//! [`GraspConstraintSet`] and are enforced per finger with a force cap, so a
//! finger whose load exceeds its cap lets go (high friction) or slips along
//! its roller axis (low friction).

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3, GRAVITY};
use crate::gripper::{Finger, FrictionMode, GraspConstraintSet};

/// Default physics step, seconds.
pub const DEFAULT_DT: f64 = 1e-3;
/// Largest step accepted by [`ClothState::step`].
pub const DT_MAX: f64 = 5e-3;
/// Allowed table penetration after a step, meters.
pub const PENETRATION_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClothSpec {
    pub width_m: f64,
    pub height_m: f64,
    pub nx: usize,
    pub ny: usize,
    /// kg/m²
    pub mass_per_area: f64,
    /// N/m
    pub stiffness_structural: f64,
    pub stiffness_shear: f64,
    pub stiffness_bend: f64,
    /// Spring-axis damping, N·s/m.
    pub damping: f64,
    pub table_friction_mu: f64,
    /// Initial height of a freshly built cloth above the table, meters.
    pub rest_thickness: f64,
}

impl Default for ClothSpec {
    fn default() -> Self {
        ClothSpec {
            width_m: 0.3,
            height_m: 0.3,
            nx: 16,
            ny: 16,
            mass_per_area: 0.2,
            stiffness_structural: 20.0,
            stiffness_shear: 5.0,
            stiffness_bend: 0.01,
            damping: 0.01,
            table_friction_mu: 0.4,
            rest_thickness: 1e-3,
        }
    }
}

impl ClothSpec {
    pub fn square(side: f64, n: usize) -> Self {
        ClothSpec {
            width_m: side,
            height_m: side,
            nx: n,
            ny: n,
            ..ClothSpec::default()
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_per_area * self.width_m * self.height_m
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::validation(
                "cloth spec",
                format!("grid must be at least 2x2, got {}x{}", self.nx, self.ny),
            ));
        }
        let positive = [
            ("width_m", self.width_m),
            ("height_m", self.height_m),
            ("mass_per_area", self.mass_per_area),
            ("stiffness_structural", self.stiffness_structural),
            ("stiffness_shear", self.stiffness_shear),
            ("stiffness_bend", self.stiffness_bend),
            ("damping", self.damping),
            ("table_friction_mu", self.table_friction_mu),
            ("rest_thickness", self.rest_thickness),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(
                    "cloth spec",
                    format!("{name} must be positive and finite, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// Planar placement of a cloth: center position on the table and yaw.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub origin: Vec2,
    pub yaw: f64,
}

impl Placement {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Placement {
            origin: Vec2::new(x, y),
            yaw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpringKind {
    Structural,
    Shear,
    Bend,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub i: usize,
    pub j: usize,
    pub rest_length: f64,
    pub stiffness: f64,
    pub kind: SpringKind,
}

/// Grid layout of a cloth built by [`build_cloth`]; particle (i, j) has index
/// `j * nx + i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTopology {
    pub nx: usize,
    pub ny: usize,
    pub spacing_x: f64,
    pub spacing_y: f64,
}

impl GridTopology {
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Corner indices of cell (i, j) in counter-clockwise material order.
    pub fn cell(&self, i: usize, j: usize) -> [usize; 4] {
        [
            self.index(i, j),
            self.index(i + 1, j),
            self.index(i + 1, j + 1),
            self.index(i, j + 1),
        ]
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.ny - 1).flat_map(move |j| (0..self.nx - 1).map(move |i| (i, j)))
    }
}

/// Per-particle physical constants shared by every particle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub particle_mass: f64,
    pub damping: f64,
    pub table_mu: f64,
    /// Half-width of the fabric patch a particle stands for. Grasp capture
    /// tests overlap of this patch with the jaw footprint.
    pub patch_radius: f64,
    pub rest_thickness: f64,
}

#[derive(Clone, Debug)]
pub struct ClothState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    springs: Arc<[Spring]>,
    pub time: f64,
    pub material: Material,
    pub grid: Option<GridTopology>,
}

/// Force each finger's constraints applied to the cloth during one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FingerLoad {
    /// Sum of constraint forces applied to the grasped particles, N.
    pub force: Vec3,
    /// Magnitude of the force the constraint would have needed to hold
    /// every particle in place, N.
    pub demand: f64,
    pub cap: f64,
    /// The demand exceeded the cap during this step.
    pub slipped: bool,
    pub engaged: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFeedback {
    pub loads: [FingerLoad; 2],
}

impl ConstraintFeedback {
    pub fn load(&self, finger: Finger) -> &FingerLoad {
        &self.loads[finger.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub elastic: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SettleOutcome {
    /// True when the kinetic tolerance was met, false when time ran out.
    pub converged: bool,
    pub steps: usize,
}

/// Builds a flat cloth at height `rest_thickness` with zero velocity.
pub fn build_cloth(spec: &ClothSpec, placement: Placement) -> Result<ClothState> {
    spec.validate()?;
    let (nx, ny) = (spec.nx, spec.ny);
    let sx = spec.width_m / (nx - 1) as f64;
    let sy = spec.height_m / (ny - 1) as f64;
    let grid = GridTopology {
        nx,
        ny,
        spacing_x: sx,
        spacing_y: sy,
    };
    let (s, c) = placement.yaw.sin_cos();
    let mut positions = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let lx = i as f64 * sx - 0.5 * spec.width_m;
            let ly = j as f64 * sy - 0.5 * spec.height_m;
            positions.push(Vec3::new(
                placement.origin.x + c * lx - s * ly,
                placement.origin.y + s * lx + c * ly,
                spec.rest_thickness,
            ));
        }
    }

    let mut springs = Vec::new();
    let mut add = |a: usize, b: usize, rest: f64, k: f64, kind: SpringKind| {
        springs.push(Spring {
            i: a,
            j: b,
            rest_length: rest,
            stiffness: k,
            kind,
        });
    };
    let diag = (sx * sx + sy * sy).sqrt();
    for j in 0..ny {
        for i in 0..nx {
            let p = grid.index(i, j);
            if i + 1 < nx {
                add(
                    p,
                    grid.index(i + 1, j),
                    sx,
                    spec.stiffness_structural,
                    SpringKind::Structural,
                );
            }
            if j + 1 < ny {
                add(
                    p,
                    grid.index(i, j + 1),
                    sy,
                    spec.stiffness_structural,
                    SpringKind::Structural,
                );
            }
            if i + 1 < nx && j + 1 < ny {
                add(
                    p,
                    grid.index(i + 1, j + 1),
                    diag,
                    spec.stiffness_shear,
                    SpringKind::Shear,
                );
                add(
                    grid.index(i + 1, j),
                    grid.index(i, j + 1),
                    diag,
                    spec.stiffness_shear,
                    SpringKind::Shear,
                );
            }
            if i + 2 < nx {
                add(
                    p,
                    grid.index(i + 2, j),
                    2.0 * sx,
                    spec.stiffness_bend,
                    SpringKind::Bend,
                );
            }
            if j + 2 < ny {
                add(
                    p,
                    grid.index(i, j + 2),
                    2.0 * sy,
                    spec.stiffness_bend,
                    SpringKind::Bend,
                );
            }
        }
    }

    let material = Material {
        particle_mass: spec.total_mass() / (nx * ny) as f64,
        damping: spec.damping,
        table_mu: spec.table_friction_mu,
        patch_radius: 0.5 * sx.min(sy),
        rest_thickness: spec.rest_thickness,
    };
    Ok(ClothState {
        velocities: vec![Vec3::zeros(); positions.len()],
        positions,
        springs: springs.into(),
        time: 0.0,
        material,
        grid: Some(grid),
    })
}

impl ClothState {
    /// Assembles a state from raw parts (no grid). Used for degenerate test
    /// states such as a single free particle.
    pub fn from_parts(
        positions: Vec<Vec3>,
        velocities: Vec<Vec3>,
        springs: Vec<Spring>,
        material: Material,
    ) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::validation(
                "cloth state",
                "positions and velocities differ in length",
            ));
        }
        for s in &springs {
            if s.i == s.j || s.i >= positions.len() || s.j >= positions.len() {
                return Err(Error::validation(
                    "cloth state",
                    format!("spring ({}, {}) references invalid particles", s.i, s.j),
                ));
            }
        }
        Ok(ClothState {
            positions,
            velocities,
            springs: springs.into(),
            time: 0.0,
            material,
            grid: None,
        })
    }

    /// Same particles, springs and material with positions replaced and
    /// velocities zeroed. Lets tests and scenario builders pose a cloth
    /// analytically while keeping its topology.
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::validation(
                "cloth state",
                "replacement positions have the wrong length",
            ));
        }
        let mut out = self.clone();
        out.velocities = vec![Vec3::zeros(); positions.len()];
        out.positions = positions;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn springs(&self) -> &[Spring] {
        &self.springs
    }

    pub fn total_mass(&self) -> f64 {
        self.material.particle_mass * self.len() as f64
    }

    /// Pure step: returns the advanced state and the constraint loads.
    pub fn step(
        &self,
        dt: f64,
        constraints: &GraspConstraintSet,
    ) -> Result<(ClothState, ConstraintFeedback)> {
        let mut next = self.clone();
        let feedback = next.advance(dt, constraints)?;
        Ok((next, feedback))
    }

    /// In-place variant of [`ClothState::step`]. On error the state is left
    /// partially advanced and should be discarded.
    pub fn advance(
        &mut self,
        dt: f64,
        constraints: &GraspConstraintSet,
    ) -> Result<ConstraintFeedback> {
        if !(dt > 0.0 && dt <= DT_MAX) {
            return Err(Error::validation(
                "time step",
                format!("dt must be in (0, {DT_MAX}], got {dt}"),
            ));
        }
        let n = self.len();
        constraints.check_indices(n)?;

        let m = self.material.particle_mass;
        let inv_m = 1.0 / m;
        let c = self.material.damping;

        let mut force = vec![Vec3::new(0.0, 0.0, -m * GRAVITY); n];
        for s in self.springs.iter() {
            let d = self.positions[s.j] - self.positions[s.i];
            let len = d.norm();
            if len <= 1e-12 {
                continue;
            }
            let dir = d / len;
            let rel_v = (self.velocities[s.j] - self.velocities[s.i]).dot(&dir);
            let f = dir * (s.stiffness * (len - s.rest_length) + c * rel_v);
            force[s.i] += f;
            force[s.j] -= f;
        }

        let mut v_new: Vec<Vec3> = self
            .velocities
            .iter()
            .zip(&force)
            .map(|(v, f)| v + f * (inv_m * dt))
            .collect();
        let v_free = v_new.clone();
        let mut pinned = vec![false; n];

        for anchor in &constraints.anchors {
            if pinned[anchor.particle] {
                continue;
            }
            pinned[anchor.particle] = true;
            v_new[anchor.particle] = (anchor.position - self.positions[anchor.particle]) / dt;
        }

        let mut feedback = ConstraintFeedback::default();
        for finger in Finger::BOTH {
            let entries: Vec<_> = constraints
                .entries
                .iter()
                .filter(|e| e.finger == finger && !pinned[e.particle])
                .collect();
            // first entry for a particle wins when both fingers hold it
            let mut seen = Vec::with_capacity(entries.len());
            let entries: Vec<_> = entries
                .into_iter()
                .filter(|e| {
                    if seen.contains(&e.particle) {
                        false
                    } else {
                        seen.push(e.particle);
                        true
                    }
                })
                .collect();
            if entries.is_empty() {
                continue;
            }
            let cap = entries[0].friction_force_cap;
            let load = &mut feedback.loads[finger.index()];
            load.engaged = true;
            load.cap = cap;
            match entries[0].mode {
                FrictionMode::HighFriction => {
                    let mut demand = Vec3::zeros();
                    let targets: Vec<Vec3> = entries
                        .iter()
                        .map(|e| {
                            let vt = (e.target - self.positions[e.particle]) / dt;
                            demand += (vt - v_free[e.particle]) * (m / dt);
                            vt
                        })
                        .collect();
                    load.demand = demand.norm();
                    if load.demand > cap {
                        load.slipped = true;
                        continue;
                    }
                    load.force = demand;
                    for (e, vt) in entries.iter().zip(targets) {
                        v_new[e.particle] = vt;
                        pinned[e.particle] = true;
                    }
                }
                FrictionMode::LowFriction => {
                    let mut along_impulse = 0.0;
                    let mut per_particle = Vec::with_capacity(entries.len());
                    for e in &entries {
                        let a = e.slide_axis;
                        let d = e.target - self.positions[e.particle];
                        let d_along = d.dot(&a);
                        let v_perp = (d - a * d_along) / dt;
                        let vf_along = v_free[e.particle].dot(&a);
                        let j = m * (d_along / dt - vf_along);
                        along_impulse += j;
                        per_particle.push((v_perp, vf_along, j, a));
                    }
                    let cap_impulse = cap * dt;
                    let scale = if along_impulse.abs() > cap_impulse {
                        load.slipped = true;
                        cap_impulse / along_impulse.abs()
                    } else {
                        1.0
                    };
                    load.demand = along_impulse.abs() / dt;
                    let mut applied = Vec3::zeros();
                    for (e, (v_perp, vf_along, j, a)) in entries.iter().zip(per_particle) {
                        let v = v_perp + a * (vf_along + scale * j * inv_m);
                        applied += (v - v_free[e.particle]) * (m / dt);
                        v_new[e.particle] = v;
                        pinned[e.particle] = true;
                    }
                    load.force = applied;
                }
            }
        }

        let mu = self.material.table_mu;
        for k in 0..n {
            let x = self.positions[k];
            let mut v = v_new[k];
            let mut p = x + v * dt;
            if !pinned[k] && p.z < 0.0 {
                // inelastic normal response; friction budget is the normal
                // velocity change times mu
                let vz_contact = -x.z.max(0.0) / dt;
                let dvn = vz_contact - v.z;
                let vt = Vec2::new(v.x, v.y);
                let speed = vt.norm();
                let reduced = (speed - mu * dvn).max(0.0);
                let vt = if speed > 0.0 {
                    vt * (reduced / speed)
                } else {
                    vt
                };
                p = Vec3::new(x.x + vt.x * dt, x.y + vt.y * dt, 0.0);
                v = Vec3::new(vt.x, vt.y, 0.0);
            }
            self.positions[k] = p;
            self.velocities[k] = v;
        }
        self.time += dt;

        if let Some(bad) = self
            .positions
            .iter()
            .zip(&self.velocities)
            .position(|(p, v)| {
                !(p.iter().all(|c| c.is_finite()) && v.iter().all(|c| c.is_finite()))
            })
        {
            return Err(Error::Diverged {
                particle: bad,
                time: self.time,
            });
        }
        Ok(feedback)
    }

    /// Steps with no constraints until kinetic energy drops below
    /// `kinetic_tol` or `max_time` elapses. Always takes at least one step.
    pub fn settle(&self, max_time: f64, kinetic_tol: f64) -> Result<(ClothState, SettleOutcome)> {
        self.settle_with(
            max_time,
            kinetic_tol,
            DEFAULT_DT,
            &GraspConstraintSet::default(),
        )
    }

    pub fn settle_with(
        &self,
        max_time: f64,
        kinetic_tol: f64,
        dt: f64,
        constraints: &GraspConstraintSet,
    ) -> Result<(ClothState, SettleOutcome)> {
        if !(kinetic_tol > 0.0) {
            return Err(Error::validation("settle", "kinetic_tol must be positive"));
        }
        let mut state = self.clone();
        let max_steps = ((max_time / dt).ceil() as usize).max(1);
        for steps in 1..=max_steps {
            state.advance(dt, constraints)?;
            if state.energy().kinetic < kinetic_tol {
                return Ok((
                    state,
                    SettleOutcome {
                        converged: true,
                        steps,
                    },
                ));
            }
        }
        Ok((
            state,
            SettleOutcome {
                converged: false,
                steps: max_steps,
            },
        ))
    }

    pub fn energy(&self) -> Energy {
        let m = self.material.particle_mass;
        let kinetic = self
            .velocities
            .iter()
            .map(|v| 0.5 * m * v.norm_squared())
            .sum();
        let elastic = self
            .springs
            .iter()
            .map(|s| {
                let stretch = (self.positions[s.j] - self.positions[s.i]).norm() - s.rest_length;
                0.5 * s.stiffness * stretch * stretch
            })
            .sum();
        Energy { kinetic, elastic }
    }

    /// Gravitational potential relative to the table plane.
    pub fn potential_energy(&self) -> f64 {
        let m = self.material.particle_mass;
        self.positions.iter().map(|p| m * GRAVITY * p.z).sum()
    }

    pub fn mechanical_energy(&self) -> f64 {
        let e = self.energy();
        e.kinetic + e.elastic + self.potential_energy()
    }

    pub fn min_z(&self) -> f64 {
        self.positions
            .iter()
            .map(|p| p.z)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_z(&self) -> f64 {
        self.positions
            .iter()
            .map(|p| p.z)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn centroid(&self) -> Vec3 {
        self.positions.iter().sum::<Vec3>() / self.len().max(1) as f64
    }

    /// Debug dump: one line per particle, `index,x,y,z`.
    pub fn write_positions_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,x,y,z")?;
        for (k, p) in self.positions.iter().enumerate() {
            writeln!(w, "{k},{},{},{}", p.x, p.y, p.z)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(state: &ClothState, kind: SpringKind) -> usize {
        state.springs().iter().filter(|s| s.kind == kind).count()
    }

    #[test]
    fn smallest_grid_spring_counts() {
        let c = build_cloth(
            &ClothSpec {
                nx: 2,
                ny: 2,
                ..ClothSpec::default()
            },
            Placement::default(),
        )
        .unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(count(&c, SpringKind::Structural), 4);
        assert_eq!(count(&c, SpringKind::Shear), 2);
        assert_eq!(count(&c, SpringKind::Bend), 0);
    }

    #[test]
    fn rest_lengths_follow_grid_spacing() {
        let c = build_cloth(&ClothSpec::default(), Placement::default()).unwrap();
        let spacing = 0.3 / 15.0;
        for s in c.springs() {
            let expected = match s.kind {
                SpringKind::Structural => spacing,
                SpringKind::Shear => spacing * 2f64.sqrt(),
                SpringKind::Bend => 2.0 * spacing,
            };
            assert!((s.rest_length - expected).abs() < 1e-15, "{s:?}");
            let actual = (c.positions[s.j] - c.positions[s.i]).norm();
            assert!((actual - s.rest_length).abs() < 1e-12);
        }
        assert_eq!(
            c.energy(),
            Energy {
                kinetic: 0.0,
                elastic: c.energy().elastic
            }
        );
        assert!(c.energy().elastic < 1e-20);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(build_cloth(
            &ClothSpec {
                nx: 1,
                ..ClothSpec::default()
            },
            Placement::default()
        )
        .is_err());
        assert!(build_cloth(
            &ClothSpec {
                width_m: 0.0,
                ..ClothSpec::default()
            },
            Placement::default()
        )
        .is_err());
        assert!(build_cloth(
            &ClothSpec {
                damping: -1.0,
                ..ClothSpec::default()
            },
            Placement::default()
        )
        .is_err());
    }

    #[test]
    fn stretched_spring_energy() {
        let material = Material {
            particle_mass: 0.01,
            damping: 0.0,
            table_mu: 0.4,
            patch_radius: 0.0,
            rest_thickness: 1e-3,
        };
        let state = ClothState::from_parts(
            vec![Vec3::zeros(), Vec3::new(0.11, 0.0, 0.0)],
            vec![Vec3::zeros(); 2],
            vec![Spring {
                i: 0,
                j: 1,
                rest_length: 0.1,
                stiffness: 100.0,
                kind: SpringKind::Structural,
            }],
            material,
        )
        .unwrap();
        let e = state.energy();
        assert_eq!(e.kinetic, 0.0);
        assert!((e.elastic - 0.005).abs() < 1e-12);
    }

    #[test]
    fn bad_dt_rejected() {
        let c = build_cloth(&ClothSpec::default(), Placement::default()).unwrap();
        assert!(c.step(0.0, &GraspConstraintSet::default()).is_err());
        assert!(c.step(1.0, &GraspConstraintSet::default()).is_err());
    }

    #[test]
    fn divergence_names_particle() {
        let mut c = build_cloth(&ClothSpec::default(), Placement::default()).unwrap();
        c.velocities[0] = Vec3::new(f64::NAN, 0.0, 0.0);
        match c.step(DEFAULT_DT, &GraspConstraintSet::default()) {
            Err(Error::Diverged { particle, .. }) => assert_eq!(particle, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn settle_with_infinite_tolerance_takes_one_step() {
        let c = build_cloth(&ClothSpec::default(), Placement::default()).unwrap();
        let (s, out) = c.settle(1.0, f64::INFINITY).unwrap();
        assert!(out.converged);
        assert_eq!(out.steps, 1);
        assert!((s.time - DEFAULT_DT).abs() < 1e-15);
    }
}
