//! Deterministic 2D ground-truth world: occupancy, doors, objects, a
//! disk-shaped robot, a raycast lidar and a line-of-sight object detector.
//!
//! World cell `(i, j)` covers `[i*res, (i+1)*res) x [j*res, (j+1)*res)`;
//! `j = 0` is the bottom row of the scenario text.

pub mod raycast;
mod scenario;

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, Aabb, Pose2};
use crate::graph::{DoorState, ObjectId, WorldObject};
use crate::grid::{CellState, GridMap};

pub use scenario::{load_scenario, ScenarioError};

/// The bundled two-room mock lab: 30x40 cells at 0.5 m, one closed door,
/// two containers and a person.
pub const MOCK_LAB: &str = include_str!("../../scenarios/mock_lab.scn");

/// Collision checks per `step`.
const SUBSTEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terrain {
    Wall,
    Floor,
    Door(ObjectId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose2,
    pub radius: f64,
    pub max_speed: f64,
    pub max_yaw_rate: f64,
}

impl RobotState {
    pub const DEFAULT_RADIUS: f64 = 0.2;

    pub fn at(pose: Pose2) -> Self {
        Self {
            pose,
            radius: Self::DEFAULT_RADIUS,
            max_speed: 1.0,
            max_yaw_rate: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MotionCommand {
    /// Body-frame velocities.
    Velocity {
        vx: f64,
        vy: f64,
        wz: f64,
    },
    Waypoint {
        target: Pose2,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub lidar_rays: usize,
    pub lidar_range: f64,
    pub detector_range: f64,
    pub detector_fov: f64,
    /// Standard deviation of additive lidar range noise. Zero disables it.
    pub range_noise_std: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            lidar_rays: 72,
            lidar_range: 5.0,
            detector_range: 3.0,
            detector_fov: TAU,
            range_noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Perception {
    PoseUpdate { pose: Pose2 },
    LocalGrid { gridmap: GridMap },
    ObjectDetected { object: WorldObject },
    DoorStateChanged { door: ObjectId, state: DoorState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionEvent {
    pub step: u64,
    #[serde(flatten)]
    pub perception: Perception,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayHit {
    Hit { distance: f64, cell: (i64, i64) },
    Miss,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("object {0} is not a door")]
    NotADoor(ObjectId),
}

#[derive(Debug, Clone)]
pub struct WorldModel {
    name: String,
    width: usize,
    height: usize,
    resolution: f64,
    terrain: Vec<Terrain>,
    doors: BTreeMap<ObjectId, ((i64, i64), DoorState)>,
    objects: BTreeMap<ObjectId, WorldObject>,
    start: Pose2,
    robot: RobotState,
    rng: ChaCha8Rng,
}

impl WorldModel {
    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        name: String,
        width: usize,
        height: usize,
        resolution: f64,
        terrain: Vec<Terrain>,
        doors: Vec<(ObjectId, (usize, usize), DoorState)>,
        objects: Vec<WorldObject>,
        start: Pose2,
    ) -> Self {
        Self {
            name,
            width,
            height,
            resolution,
            terrain,
            doors: doors
                .into_iter()
                .map(|(id, (i, j), s)| (id, ((i as i64, j as i64), s)))
                .collect(),
            objects: objects.into_iter().map(|o| (o.id, o)).collect(),
            start,
            robot: RobotState::at(start),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn start(&self) -> Pose2 {
        self.start
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    /// Seeds the sensor noise generator.
    pub fn seed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn set_robot_limits(&mut self, radius: f64, max_speed: f64, max_yaw_rate: f64) {
        assert!(radius > 0.0 && max_speed > 0.0 && max_yaw_rate > 0.0);
        self.robot.radius = radius;
        self.robot.max_speed = max_speed;
        self.robot.max_yaw_rate = max_yaw_rate;
    }

    /// Moves the robot without collision checks. Intended for test setup.
    pub fn place_robot(&mut self, pose: Pose2) {
        self.robot.pose = pose;
    }

    pub fn terrain(&self, i: i64, j: i64) -> Option<Terrain> {
        (i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height)
            .then(|| self.terrain[j as usize * self.width + i as usize])
    }

    /// Walls, closed doors and everything outside the map.
    pub fn is_blocking(&self, i: i64, j: i64) -> bool {
        match self.terrain(i, j) {
            None | Some(Terrain::Wall) => true,
            Some(Terrain::Floor) => false,
            Some(Terrain::Door(id)) => self.doors[&id].1 == DoorState::Closed,
        }
    }

    pub fn objects(&self) -> impl Iterator<Item = &WorldObject> {
        self.objects.values()
    }

    pub fn object(&self, id: ObjectId) -> Option<&WorldObject> {
        self.objects.get(&id)
    }

    pub fn door_state(&self, id: ObjectId) -> Option<DoorState> {
        self.doors.get(&id).map(|d| d.1)
    }

    pub fn door_cell(&self, id: ObjectId) -> Option<(i64, i64)> {
        self.doors.get(&id).map(|d| d.0)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            (x / self.resolution).floor() as i64,
            (y / self.resolution).floor() as i64,
        )
    }

    pub fn cell_box(&self, i: i64, j: i64) -> Aabb {
        let r = self.resolution;
        Aabb {
            min: (i as f64 * r, j as f64 * r),
            max: ((i + 1) as f64 * r, (j + 1) as f64 * r),
        }
    }

    /// Whether a disk at `(x, y)` strictly overlaps a blocking cell.
    pub fn disk_collides(&self, x: f64, y: f64, radius: f64) -> bool {
        let (i0, j0) = self.cell_of(x - radius, y - radius);
        let (i1, j1) = self.cell_of(x + radius, y + radius);
        (j0..=j1).any(|j| {
            (i0..=i1)
                .any(|i| self.is_blocking(i, j) && self.cell_box(i, j).distance_to_point((x, y)) < radius)
        })
    }

    /// Advances the robot by one command. Translation is split into
    /// sub-steps and halts before the first sub-step that would collide.
    pub fn step(&mut self, command: MotionCommand, dt: f64) -> RobotState {
        assert!(dt > 0.0, "dt must be positive");
        let r = self.robot;
        let (mut mx, mut my, mut dtheta) = (0.0, 0.0, 0.0);
        match command {
            MotionCommand::Velocity { vx, vy, wz } => {
                let speed = vx.hypot(vy);
                let scale = if speed > r.max_speed {
                    r.max_speed / speed
                } else {
                    1.0
                };
                let (vx, vy) = (vx * scale, vy * scale);
                let (s, c) = r.pose.theta.sin_cos();
                mx = (c * vx - s * vy) * dt;
                my = (s * vx + c * vy) * dt;
                dtheta = wz.clamp(-r.max_yaw_rate, r.max_yaw_rate) * dt;
            }
            MotionCommand::Waypoint { target } => {
                let dist = r.pose.distance(&target);
                if dist > 0.0 {
                    let travel = (r.max_speed * dt).min(dist);
                    mx = (target.x - r.pose.x) / dist * travel;
                    my = (target.y - r.pose.y) / dist * travel;
                    let heading = my.atan2(mx);
                    let turn = normalize_angle(heading - r.pose.theta);
                    let limit = r.max_yaw_rate * dt;
                    dtheta = turn.clamp(-limit, limit);
                }
            }
        }
        let (mut x, mut y) = (r.pose.x, r.pose.y);
        if mx != 0.0 || my != 0.0 {
            for k in 1..=SUBSTEPS {
                let f = k as f64 / SUBSTEPS as f64;
                let (nx, ny) = (r.pose.x + mx * f, r.pose.y + my * f);
                if self.disk_collides(nx, ny, r.radius) {
                    break;
                }
                (x, y) = (nx, ny);
            }
        }
        self.robot.pose = Pose2::new(x, y, r.pose.theta + dtheta);
        self.robot
    }

    /// First blocking cell along a ray, by grid traversal.
    pub fn raycast(&self, origin: &Pose2, angle: f64, max_range: f64) -> RayHit {
        let mut hit = RayHit::Miss;
        raycast::traverse(
            self.resolution,
            (origin.x, origin.y),
            angle,
            max_range,
            |i, j, t| {
                if self.terrain(i, j).is_none() {
                    return true;
                }
                if self.is_blocking(i, j) {
                    hit = RayHit::Hit {
                        distance: t,
                        cell: (i, j),
                    };
                    return true;
                }
                false
            },
        );
        hit
    }

    /// Whether the segment from `from` to `to` crosses no blocking cell other
    /// than `except`.
    pub fn line_of_sight(&self, from: (f64, f64), to: (f64, f64), except: Option<(i64, i64)>) -> bool {
        let dist = (to.0 - from.0).hypot(to.1 - from.1);
        let angle = (to.1 - from.1).atan2(to.0 - from.0);
        let mut clear = true;
        raycast::traverse(self.resolution, from, angle, dist, |i, j, _| {
            if Some((i, j)) != except && self.is_blocking(i, j) {
                clear = false;
                return true;
            }
            false
        });
        clear
    }

    /// Lidar scan as a local grid aligned with the world cells, covering
    /// `lidar_range` around the robot and clipped to the map.
    pub fn scan(&mut self, config: &SensorConfig) -> GridMap {
        let pose = self.robot.pose;
        let range = config.lidar_range;
        let (i0, j0) = self.cell_of(pose.x - range, pose.y - range);
        let (i1, j1) = self.cell_of(pose.x + range, pose.y + range);
        let (i0, j0) = (i0.max(0), j0.max(0));
        let (i1, j1) = (i1.min(self.width as i64 - 1), j1.min(self.height as i64 - 1));
        let res = self.resolution;
        let mut grid = GridMap::new(
            (i1 - i0 + 1).max(0) as usize,
            (j1 - j0 + 1).max(0) as usize,
            res,
            Pose2::at(i0 as f64 * res, j0 as f64 * res),
        );
        let noise = (config.range_noise_std > 0.0)
            .then(|| Normal::new(0.0, config.range_noise_std).expect("finite std"));
        for k in 0..config.lidar_rays {
            let angle = pose.theta + TAU * k as f64 / config.lidar_rays as f64;
            let max_range = match &noise {
                Some(n) => (range + n.sample(&mut self.rng)).max(0.0),
                None => range,
            };
            raycast::traverse(res, (pose.x, pose.y), angle, max_range, |i, j, _| {
                if self.terrain(i, j).is_none() {
                    return true;
                }
                let (li, lj) = (i - i0, j - j0);
                if self.is_blocking(i, j) {
                    grid.set(li, lj, CellState::Occupied);
                    return true;
                }
                if grid.get(li, lj) != Some(CellState::Occupied) {
                    grid.set(li, lj, CellState::Free);
                }
                false
            });
        }
        grid
    }

    /// Objects within detector range, field of view and line of sight, in id order.
    pub fn detect(&self, config: &SensorConfig) -> Vec<WorldObject> {
        let pose = self.robot.pose;
        self.objects
            .values()
            .filter(|o| {
                let d = pose.distance_to(o.pose.x, o.pose.y);
                if d > config.detector_range {
                    return false;
                }
                if config.detector_fov < TAU && d > 0.0 {
                    let bearing = normalize_angle((o.pose.y - pose.y).atan2(o.pose.x - pose.x) - pose.theta);
                    if bearing.abs() > config.detector_fov / 2.0 {
                        return false;
                    }
                }
                let own = self.cell_of(o.pose.x, o.pose.y);
                self.line_of_sight((pose.x, pose.y), (o.pose.x, o.pose.y), Some(own))
            })
            .cloned()
            .collect()
    }

    pub fn sense(&mut self, config: &SensorConfig, step: u64) -> Vec<PerceptionEvent> {
        let mut out = vec![
            Perception::PoseUpdate {
                pose: self.robot.pose,
            },
            Perception::LocalGrid {
                gridmap: self.scan(config),
            },
        ];
        out.extend(
            self.detect(config)
                .into_iter()
                .map(|object| Perception::ObjectDetected { object }),
        );
        out.into_iter()
            .map(|perception| PerceptionEvent { step, perception })
            .collect()
    }

    pub fn set_door(
        &mut self,
        door: ObjectId,
        state: DoorState,
        step: u64,
    ) -> Result<PerceptionEvent, WorldError> {
        let obj = self
            .objects
            .get_mut(&door)
            .ok_or(WorldError::UnknownObject(door))?;
        let entry = self.doors.get_mut(&door).ok_or(WorldError::NotADoor(door))?;
        entry.1 = state;
        obj.state = Some(state);
        Ok(PerceptionEvent {
            step,
            perception: Perception::DoorStateChanged { door, state },
        })
    }

    /// Cells reachable from the start through floor and door cells,
    /// regardless of door state.
    pub fn reachable_cells(&self) -> Vec<(i64, i64)> {
        let start = self.cell_of(self.start.x, self.start.y);
        let mut seen = vec![false; self.width * self.height];
        let mut stack = vec![start];
        let mut out = Vec::new();
        while let Some((i, j)) = stack.pop() {
            match self.terrain(i, j) {
                None | Some(Terrain::Wall) => continue,
                _ => {}
            }
            let k = j as usize * self.width + i as usize;
            if std::mem::replace(&mut seen[k], true) {
                continue;
            }
            out.push((i, j));
            stack.extend([(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]);
        }
        out.sort_by_key(|&(i, j)| (j, i));
        out
    }
}
