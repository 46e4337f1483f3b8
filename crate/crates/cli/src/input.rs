//! JSON input files. Every schema rejects unknown fields.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use quadweyl_core::geom::{Ball5, DyadicSquare, Point5};
use quadweyl_core::kakeya::{Plate, PlateFamily};
use quadweyl_core::mvt::RealNodeSet;
use quadweyl_core::select::SquareCollection;
use quadweyl_core::transversality::Point2;

pub fn read_json<T: DeserializeOwned>(path: &str) -> Result<T> {
    let text = std::fs::read_to_string(Path::new(path)).with_context(|| format!("cannot read {path}"))?;
    serde_json::from_str(&text).with_context(|| format!("{path} does not match the input schema"))
}

/// {"x": [...], "y": [...]} with X_i, Y_i in (i-1, i].
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodesFile {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl NodesFile {
    pub fn into_nodes(self) -> Result<RealNodeSet> {
        Ok(RealNodeSet::new(self.x, self.y)?)
    }
}

/// {"level": K, "squares": [[i, j], ...]}.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquaresFile {
    pub level: u32,
    pub squares: Vec<[u32; 2]>,
}

impl SquaresFile {
    pub fn into_collection(self) -> Result<SquareCollection> {
        let squares = self
            .squares
            .iter()
            .map(|&[i, j]| DyadicSquare::new(self.level, i, j))
            .collect::<quadweyl_core::Result<Vec<_>>>()?;
        Ok(SquareCollection::new(self.level, squares)?)
    }
}

/// Ten single points {"points": [[x, y], ...]} or ten sets {"sets": [[[x, y], ...], ...]}.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsFile {
    pub points: Option<Vec<Point2>>,
    pub sets: Option<Vec<Vec<Point2>>>,
}

impl PointsFile {
    pub fn into_sets(self) -> Result<Vec<Vec<Point2>>> {
        match (self.points, self.sets) {
            (Some(p), None) => Ok(p.into_iter().map(|q| vec![q]).collect()),
            (None, Some(s)) => Ok(s),
            _ => bail!("point file needs exactly one of \"points\" and \"sets\""),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallInput {
    pub center: [f64; 5],
    pub radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyInput {
    pub index: Option<usize>,
    pub plates: Vec<Plate>,
}

/// {"ball": {...}, "families": [{"index": j, "plates": [{"base", "offset", "width"}]}]}.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamiliesFile {
    pub ball: BallInput,
    pub families: Vec<FamilyInput>,
}

impl FamiliesFile {
    pub fn into_parts(self) -> Result<(Ball5, Vec<PlateFamily>)> {
        let ball = Ball5::new(Point5::new(self.ball.center)?, self.ball.radius)?;
        let families = self
            .families
            .into_iter()
            .enumerate()
            .map(|(k, f)| PlateFamily::new(f.index.unwrap_or(k), f.plates))
            .collect::<quadweyl_core::Result<Vec<_>>>()?;
        Ok((ball, families))
    }
}
