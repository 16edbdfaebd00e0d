use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::scene::Point;
use crate::error::{Error, Result};

pub const DEFAULT_NEAR_THRESHOLD: f64 = 1.5;
pub const NUM_SPATIAL_CLASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Front,
    Left,
    Right,
    Back,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Front, Direction::Left, Direction::Right, Direction::Back];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Front => "front",
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Back => "back",
        }
    }

    /// Front-back mirror; left and right are their own mirrors.
    pub fn mirrored(self) -> Direction {
        match self {
            Direction::Front => Direction::Back,
            Direction::Back => Direction::Front,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Near,
    Far,
}

impl Distance {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Distance::Near => "near",
            Distance::Far => "far",
        }
    }
}

/// One of the eight direction × distance classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpatialLabel {
    pub direction: Direction,
    pub distance: Distance,
}

impl SpatialLabel {
    pub fn new(direction: Direction, distance: Distance) -> Self {
        Self { direction, distance }
    }

    /// `2 · direction + distance`.
    pub fn class_index(self) -> usize {
        2 * self.direction.index() + self.distance.index()
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= NUM_SPATIAL_CLASSES {
            return Err(Error::IndexOutOfRange {
                index,
                len: NUM_SPATIAL_CLASSES,
            });
        }
        let distance = if index % 2 == 0 { Distance::Near } else { Distance::Far };
        Ok(Self::new(Direction::ALL[index / 2], distance))
    }

    pub fn all() -> impl Iterator<Item = SpatialLabel> {
        (0..NUM_SPATIAL_CLASSES).map(|i| Self::from_index(i).expect("in range"))
    }
}

impl fmt::Display for SpatialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.direction.as_str(), self.distance.as_str())
    }
}

impl FromStr for SpatialLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (dir, dist) = s
            .split_once('/')
            .ok_or_else(|| Error::invalid(format!("bad spatial label {s:?}")))?;
        let direction = Direction::ALL
            .into_iter()
            .find(|d| d.as_str() == dir)
            .ok_or_else(|| Error::invalid(format!("bad direction {dir:?}")))?;
        let distance = match dist {
            "near" => Distance::Near,
            "far" => Distance::Far,
            _ => return Err(Error::invalid(format!("bad distance {dist:?}"))),
        };
        Ok(Self::new(direction, distance))
    }
}

/// Quantize a body-frame position (x forward, y left) into a spatial class.
///
/// Sectors are half-open quadrants centred on the axes:
/// front `[-45°, 45°)`, left `[45°, 135°)`, back `[135°, 225°)`,
/// right `[225°, 315°)`.
pub fn label_quantize(relative_position: Point, near_threshold: f64) -> Result<SpatialLabel> {
    let [x, y] = relative_position;
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::NonFinite("relative position"));
    }
    if x == 0.0 && y == 0.0 {
        return Err(Error::Degenerate("source at the listener origin".into()));
    }
    let mut azimuth = y.atan2(x);
    if azimuth < -FRAC_PI_4 {
        azimuth += 2.0 * PI;
    }
    let direction = if azimuth < FRAC_PI_4 {
        Direction::Front
    } else if azimuth < 3.0 * FRAC_PI_4 {
        Direction::Left
    } else if azimuth < 5.0 * FRAC_PI_4 {
        Direction::Back
    } else {
        Direction::Right
    };
    let distance = if x.hypot(y) < near_threshold {
        Distance::Near
    } else {
        Distance::Far
    };
    Ok(SpatialLabel::new(direction, distance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sector_centres() {
        assert_eq!(
            label_quantize([0.5, 0.0], 1.5).unwrap(),
            SpatialLabel::new(Direction::Front, Distance::Near)
        );
        assert_eq!(
            label_quantize([0.0, 3.0], 1.5).unwrap(),
            SpatialLabel::new(Direction::Left, Distance::Far)
        );
        assert_eq!(label_quantize([-2.0, 0.0], 1.5).unwrap().direction, Direction::Back);
        assert_eq!(label_quantize([0.0, -1.0], 1.5).unwrap().direction, Direction::Right);
    }

    #[test]
    fn boundaries_are_half_open() {
        for r in [0.3, 1.0, 2.0, 10.0] {
            assert_eq!(label_quantize([r, r], 1.5).unwrap().direction, Direction::Left);
            assert_eq!(label_quantize([-r, r], 1.5).unwrap().direction, Direction::Back);
            assert_eq!(label_quantize([-r, -r], 1.5).unwrap().direction, Direction::Right);
            assert_eq!(label_quantize([r, -r], 1.5).unwrap().direction, Direction::Front);
        }
        assert_eq!(label_quantize([1.5, 0.0], 1.5).unwrap().distance, Distance::Far);
    }

    #[test]
    fn origin_is_degenerate() {
        assert!(matches!(label_quantize([0.0, 0.0], 1.5), Err(Error::Degenerate(_))));
    }

    #[test]
    fn class_index_bijection() {
        for (i, label) in SpatialLabel::all().enumerate() {
            assert_eq!(label.class_index(), i);
            assert_eq!(label.to_string().parse::<SpatialLabel>().unwrap(), label);
        }
        assert!(SpatialLabel::from_index(8).is_err());
    }

    fn next_ccw(d: Direction) -> Direction {
        match d {
            Direction::Front => Direction::Left,
            Direction::Left => Direction::Back,
            Direction::Back => Direction::Right,
            Direction::Right => Direction::Front,
        }
    }

    #[test]
    fn partition_and_rotation_over_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; NUM_SPATIAL_CLASSES];
        for _ in 0..100_000 {
            let x: f64 = rng.random_range(-5.0..5.0);
            let y: f64 = rng.random_range(-5.0..5.0);
            if x == 0.0 && y == 0.0 {
                continue;
            }
            let label = label_quantize([x, y], 1.5).unwrap();
            counts[label.class_index()] += 1;
            let rotated = label_quantize([-y, x], 1.5).unwrap();
            assert_eq!(rotated.direction, next_ccw(label.direction), "({x}, {y})");
            assert_eq!(rotated.distance, label.distance);
        }
        assert!(counts.iter().all(|&c| c > 0));
    }

    proptest! {
        #[test]
        fn every_point_has_one_class(x in -50.0f64..50.0, y in -50.0f64..50.0) {
            prop_assume!(x != 0.0 || y != 0.0);
            let label = label_quantize([x, y], DEFAULT_NEAR_THRESHOLD).unwrap();
            prop_assert!(label.class_index() < NUM_SPATIAL_CLASSES);
            prop_assert_eq!(label_quantize([-y, x], DEFAULT_NEAR_THRESHOLD).unwrap().direction, next_ccw(label.direction));
        }
    }
}
