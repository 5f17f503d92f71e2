//! Bundled benchmark items. Dimensions and areal densities are placeholder
//! values picked to resemble each item class; override them in a scenario
//! file's `[cloth]` table for real measurements.

use crate::cloth::ClothSpec;
use crate::error::{Error, Result};
use crate::planner::TaskKind;

use super::scenario::Scenario;

#[derive(Clone, Debug, PartialEq)]
pub struct CatalogItem {
    pub name: &'static str,
    pub width_m: f64,
    pub height_m: f64,
    pub mass_per_area: f64,
}

/// Target particle spacing for catalog cloths, meters.
const SPACING: f64 = 0.02;

impl CatalogItem {
    /// Grid at about [`SPACING`], coarsened until no particle is lighter
    /// than one of the default cloth's. The default stiffness and damping
    /// are tuned for that mass at the default step; lighter particles make
    /// the explicit integration blow up.
    pub fn cloth(&self) -> ClothSpec {
        let base = ClothSpec::default();
        let floor = base.total_mass() / (base.nx * base.ny) as f64;
        let total = self.width_m * self.height_m * self.mass_per_area;
        let nodes = |len: f64, spacing: f64| ((len / spacing).round() as usize + 1).max(3);
        let mut spacing = SPACING;
        let (mut nx, mut ny) = (nodes(self.width_m, spacing), nodes(self.height_m, spacing));
        while total / ((nx * ny) as f64) < floor && (nx > 3 || ny > 3) {
            spacing *= 1.05;
            (nx, ny) = (nodes(self.width_m, spacing), nodes(self.height_m, spacing));
        }
        ClothSpec {
            width_m: self.width_m,
            height_m: self.height_m,
            nx,
            ny,
            mass_per_area: self.mass_per_area,
            ..base
        }
    }
}

pub const ITEMS: [CatalogItem; 5] = [
    CatalogItem {
        name: "small_towel",
        width_m: 0.3,
        height_m: 0.3,
        mass_per_area: 0.2,
    },
    CatalogItem {
        name: "medium_towel",
        width_m: 0.45,
        height_m: 0.45,
        mass_per_area: 0.25,
    },
    CatalogItem {
        name: "napkin",
        width_m: 0.25,
        height_m: 0.25,
        mass_per_area: 0.12,
    },
    CatalogItem {
        name: "pillowcase",
        width_m: 0.4,
        height_m: 0.3,
        mass_per_area: 0.15,
    },
    CatalogItem {
        name: "rag",
        width_m: 0.2,
        height_m: 0.2,
        mass_per_area: 0.18,
    },
];

pub fn item(name: &str) -> Option<&'static CatalogItem> {
    ITEMS.iter().find(|i| i.name == name)
}

/// The standard scenarios for one item: a two-fold run, a 0.5 m drag and a
/// lift, five jittered trials each.
pub fn scenarios_for(name: &str) -> Result<Vec<Scenario>> {
    let it = item(name).ok_or_else(|| {
        let known: Vec<&str> = ITEMS.iter().map(|i| i.name).collect();
        Error::validation(
            "catalog",
            format!("unknown item {name:?}; known items: {}", known.join(", ")),
        )
    })?;
    let make = |task: TaskKind| {
        let mut s = Scenario::new(format!("{}-{task}", it.name), task);
        s.cloth = it.cloth();
        s
    };
    let mut fold = make(TaskKind::Fold);
    fold.params.n_folds = Some(2);
    let mut drag = make(TaskKind::Drag);
    drag.params.distance = Some(0.5);
    let mut lift = make(TaskKind::Lift);
    lift.params.height = Some(0.5);
    lift.params.hold = Some(5.0);
    Ok(vec![fold, drag, lift])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_item_yields_valid_scenarios() {
        for it in &ITEMS {
            let all = scenarios_for(it.name).unwrap();
            assert_eq!(all.len(), 3);
            for s in &all {
                s.validate().unwrap();
            }
        }
        assert!(scenarios_for("duvet").is_err());
    }

    #[test]
    fn spacing_tracks_size() {
        let c = item("medium_towel").unwrap().cloth();
        assert_eq!((c.nx, c.ny), (24, 24));
    }

    #[test]
    fn no_item_has_lighter_particles_than_the_default() {
        let base = ClothSpec::default();
        let floor = base.total_mass() / (base.nx * base.ny) as f64;
        for it in &ITEMS {
            let c = it.cloth();
            assert!(
                c.total_mass() / (c.nx * c.ny) as f64 >= floor,
                "{}",
                it.name
            );
        }
        assert_eq!(item("small_towel").unwrap().cloth(), base);
    }
}
