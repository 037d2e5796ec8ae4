use serde::{Deserialize, Serialize};

use super::scene::{Point, Scene};

/// Obstruction class of a radio link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkClass {
    Los,
    /// Blocked by other vehicles only.
    NlosV,
    /// Blocked by a building or foliage.
    NlosB,
}

impl LinkClass {
    pub const ALL: [LinkClass; 3] = [LinkClass::Los, LinkClass::NlosV, LinkClass::NlosB];
}

/// Classifies the straight path `tx→rx`. Buildings and foliage take
/// precedence over vehicles; vehicles whose footprint holds either endpoint
/// are the link's own terminals and never obstruct it.
pub fn classify_link(tx: Point, rx: Point, scene: &Scene) -> LinkClass {
    classify(tx, rx, scene, true)
}

/// Classifies the path from `tx` to the base station. An elevated base
/// station sees over vehicles, so only buildings and foliage count.
pub fn classify_bs_link(tx: Point, scene: &Scene) -> LinkClass {
    classify(tx, scene.base_station.position, scene, !scene.base_station.elevated)
}

fn classify(tx: Point, rx: Point, scene: &Scene, vehicles_block: bool) -> LinkClass {
    if scene.obstacles.iter().any(|o| o.rect.intersects_segment(tx, rx)) {
        return LinkClass::NlosB;
    }
    if vehicles_block
        && scene.vehicles.iter().any(|v| {
            !v.footprint_contains(tx) && !v.footprint_contains(rx) && v.footprint_intersects(tx, rx)
        })
    {
        return LinkClass::NlosV;
    }
    LinkClass::Los
}
