//! Scenario text format.
//!
//! ```text
//! resolution: 0.5
//! name: corridor
//! object: person 3 1
//!
//! #####
//! #S.C#
//! #####
//! ```
//!
//! Header lines are `key: value`; the grid follows the first blank line.
//! `object: <container|person> <col> <row>` places an extra object at a grid
//! position counted from the top-left character. Grid objects get ids in
//! reading order, followed by the `object:` lines in file order.

use thiserror::Error;

use super::{Terrain, WorldModel};
use crate::geometry::{Pose2, Pose3};
use crate::graph::{DoorState, ObjectId, ObjectLabel, WorldObject};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("scenario has no start cell 'S'")]
    NoStartCell,
    #[error("scenario has more than one start cell 'S'")]
    MultipleStartCells,
    #[error("object at column {col}, row {row} sits on a wall")]
    ObjectOnWall { col: usize, row: usize },
}

fn parse_err(line: usize, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::ParseError {
        line,
        reason: reason.into(),
    }
}

pub fn load_scenario(text: &str) -> Result<WorldModel, ScenarioError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut resolution = None;
    let mut name = String::new();
    let mut extra: Vec<(usize, ObjectLabel, usize, usize)> = Vec::new();

    let mut k = 0;
    while k < lines.len() && !lines[k].trim().is_empty() {
        let lineno = k + 1;
        let (key, value) = lines[k]
            .split_once(':')
            .ok_or_else(|| parse_err(lineno, "expected `key: value`"))?;
        let value = value.trim();
        match key.trim() {
            "resolution" => {
                let r: f64 = value
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad resolution {value:?}")))?;
                if !(r > 0.0 && r.is_finite()) {
                    return Err(parse_err(lineno, "resolution must be positive"));
                }
                resolution = Some(r);
            }
            "name" => name = value.to_string(),
            "object" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                let [label, col, row] = parts[..] else {
                    return Err(parse_err(lineno, "expected `object: <label> <col> <row>`"));
                };
                let label = match label {
                    "container" => ObjectLabel::Container,
                    "person" => ObjectLabel::Person,
                    other => return Err(parse_err(lineno, format!("unsupported object label {other:?}"))),
                };
                let col = col.parse().map_err(|_| parse_err(lineno, "bad column"))?;
                let row = row.parse().map_err(|_| parse_err(lineno, "bad row"))?;
                extra.push((lineno, label, col, row));
            }
            other => return Err(parse_err(lineno, format!("unknown header key {other:?}"))),
        }
        k += 1;
    }
    let resolution = resolution.ok_or_else(|| parse_err(k.max(1), "missing `resolution:` header"))?;
    while k < lines.len() && lines[k].trim().is_empty() {
        k += 1;
    }
    let grid_start = k;
    let mut rows: Vec<&str> = lines[grid_start..].iter().map(|l| l.trim_end()).collect();
    while rows.last().is_some_and(|r| r.is_empty()) {
        rows.pop();
    }
    if rows.is_empty() {
        return Err(parse_err(grid_start + 1, "missing grid"));
    }
    let width = rows[0].chars().count();
    let height = rows.len();

    let mut terrain = vec![Terrain::Wall; width * height];
    let mut objects = Vec::new();
    let mut doors = Vec::new();
    let mut start = None;
    let mut next_id = 0u64;
    let mut fresh_id = || {
        next_id += 1;
        ObjectId(next_id)
    };

    for (r, row) in rows.iter().enumerate() {
        let lineno = grid_start + r + 1;
        if row.chars().count() != width {
            return Err(parse_err(
                lineno,
                format!("row width {} differs from {width}", row.chars().count()),
            ));
        }
        let j = height - 1 - r;
        for (i, ch) in row.chars().enumerate() {
            let (x, y) = ((i as f64 + 0.5) * resolution, (j as f64 + 0.5) * resolution);
            let cell = &mut terrain[j * width + i];
            match ch {
                '#' => {}
                '.' => *cell = Terrain::Floor,
                'S' => {
                    *cell = Terrain::Floor;
                    if start.replace(Pose2::at(x, y)).is_some() {
                        return Err(ScenarioError::MultipleStartCells);
                    }
                }
                'D' | 'd' => {
                    let state = if ch == 'D' {
                        DoorState::Closed
                    } else {
                        DoorState::Open
                    };
                    let id = fresh_id();
                    *cell = Terrain::Door(id);
                    doors.push((id, (i, j), state));
                    objects.push(WorldObject::door(id, Pose3::planar(x, y, 0.0), state));
                }
                'C' | 'P' => {
                    *cell = Terrain::Floor;
                    let label = if ch == 'C' {
                        ObjectLabel::Container
                    } else {
                        ObjectLabel::Person
                    };
                    objects.push(WorldObject::new(fresh_id(), label, Pose3::planar(x, y, 0.0)));
                }
                other => return Err(parse_err(lineno, format!("unexpected grid character {other:?}"))),
            }
        }
    }
    let start = start.ok_or(ScenarioError::NoStartCell)?;

    for (lineno, label, col, row) in extra {
        if col >= width || row >= height {
            return Err(parse_err(
                lineno,
                format!("object position ({col}, {row}) is outside the grid"),
            ));
        }
        let j = height - 1 - row;
        if terrain[j * width + col] != Terrain::Floor {
            return Err(ScenarioError::ObjectOnWall { col, row });
        }
        let (x, y) = ((col as f64 + 0.5) * resolution, (j as f64 + 0.5) * resolution);
        objects.push(WorldObject::new(fresh_id(), label, Pose3::planar(x, y, 0.0)));
    }

    Ok(WorldModel::from_parts(
        name, width, height, resolution, terrain, doors, objects, start,
    ))
}
