//! Agent moves to cartesian end-effector waypoints and back.
//!
//! Cell `(c, r)` of the canvas sits at `origin + (c, r)·l1` on the drawing
//! plane. Each action displaces the end effector by its cell offset times
//! `l1`; a lifted pen sits `l2` above the plane. Trajectories are JSON
//! lines: a header, the initial pose, then one waypoint per step.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::canvas::{Canvas, Cell};
use crate::env::{Action, PenState, StepInfo, MAX_OFFSET};
use crate::error::{Error, Result};

pub const FORMAT: &str = "robosketch-trajectory/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridmapConfig {
    /// Cell edge, metres.
    pub l1: f64,
    /// Pen-lift height above the drawing plane, metres.
    pub l2: f64,
    /// Position of cell (0, 0), metres.
    pub origin: [f64; 2],
    /// Height of the drawing plane, metres.
    pub z_canvas: f64,
}

impl Default for GridmapConfig {
    fn default() -> Self {
        Self {
            l1: 0.005,
            l2: 0.020,
            origin: [0.0, 0.0],
            z_canvas: 0.0,
        }
    }
}

impl GridmapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l1 > 0.0 && self.l1.is_finite() && self.l2 > 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!(
                "l1 and l2 must be positive, got {} and {}",
                self.l1, self.l2
            )));
        }
        if !(self.origin.iter().all(|v| v.is_finite()) && self.z_canvas.is_finite()) {
            return Err(Error::Config("origin and z_canvas must be finite".into()));
        }
        Ok(())
    }

    pub fn z_for(&self, pen_down: bool) -> f64 {
        if pen_down {
            self.z_canvas
        } else {
            self.z_canvas + self.l2
        }
    }

    pub fn cell_position(&self, cell: Cell) -> (f64, f64) {
        (
            self.origin[0] + cell.x as f64 * self.l1,
            self.origin[1] + cell.y as f64 * self.l1,
        )
    }
}

/// `p + (dx, dy)·l1`.
pub fn to_cartesian(p: (f64, f64), dx: i32, dy: i32, l1: f64) -> (f64, f64) {
    (p.0 + f64::from(dx) * l1, p.1 + f64::from(dy) * l1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub format: String,
    pub gridmap: GridmapConfig,
    pub canvas_size: usize,
    pub start_cell: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub pen_down: bool,
    /// `None` for the initial pose.
    pub action: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub waypoints: Vec<Waypoint>,
}

/// Waypoints for an episode that started at `start` and took `steps`
/// (with their post-clamp displacements).
pub fn export_trajectory(start: PenState, canvas_size: usize, steps: &[StepInfo], cfg: &GridmapConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let start_cell = start.cell();
    let mut p = cfg.cell_position(start_cell);
    let mut waypoints = Vec::with_capacity(steps.len() + 1);
    waypoints.push(Waypoint {
        step: 0,
        x: p.0,
        y: p.1,
        z: cfg.z_for(start.down),
        pen_down: start.down,
        action: None,
    });
    for (i, s) in steps.iter().enumerate() {
        if s.dx.abs() > MAX_OFFSET || s.dy.abs() > MAX_OFFSET {
            return Err(Error::Contract(format!(
                "step {} displaces ({}, {}) cells, beyond ±{MAX_OFFSET}",
                i + 1,
                s.dx,
                s.dy
            )));
        }
        let pen_down = Action::decode(s.action)?.pen_down;
        p = to_cartesian(p, s.dx, s.dy, cfg.l1);
        waypoints.push(Waypoint {
            step: i + 1,
            x: p.0,
            y: p.1,
            z: cfg.z_for(pen_down),
            pen_down,
            action: Some(s.action),
        });
    }
    Ok(Trajectory {
        header: TrajectoryHeader {
            format: FORMAT.into(),
            gridmap: *cfg,
            canvas_size,
            start_cell: [start_cell.x, start_cell.y],
        },
        waypoints,
    })
}

impl Trajectory {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for wp in &self.waypoints {
            serde_json::to_writer(&mut w, wp)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut header = None;
        let mut waypoints = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |e: serde_json::Error| Error::Format {
                line: i + 1,
                message: e.to_string(),
            };
            if header.is_none() {
                let h: TrajectoryHeader = serde_json::from_str(&line).map_err(bad)?;
                if h.format != FORMAT {
                    return Err(Error::Format {
                        line: i + 1,
                        message: format!("unknown trajectory format {:?}", h.format),
                    });
                }
                header = Some(h);
            } else {
                waypoints.push(serde_json::from_str(&line).map_err(bad)?);
            }
        }
        let header = header.ok_or(Error::Format {
            line: 1,
            message: "missing trajectory header".into(),
        })?;
        Ok(Self { header, waypoints })
    }
}

/// What the simulated executor did: the inked canvas and the cell visited
/// at each waypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub canvas: Canvas,
    pub cells: Vec<Cell>,
}

fn recover_axis(v: f64, origin: f64, l1: f64, size: usize, step: usize, axis: &str) -> Result<usize> {
    let f = (v - origin) / l1;
    if !f.is_finite() || f < -0.5 || f > size as f64 - 0.5 {
        return Err(Error::Fidelity(format!(
            "waypoint {step}: {axis} = {v} m lies {f:.3} cells from the origin, off the {size}-cell grid"
        )));
    }
    Ok(f.round() as usize)
}

/// Replays a trajectory on a blank canvas: positions are mapped back to
/// the nearest cell and pen-down moves are inked with the environment's
/// line rasterizer.
pub fn simulate_execution(traj: &Trajectory) -> Result<Execution> {
    let cfg = traj.header.gridmap;
    cfg.validate()?;
    let size = traj.header.canvas_size;
    let mut canvas = Canvas::new(size);
    let mut cells: Vec<Cell> = Vec::with_capacity(traj.waypoints.len());
    let z_tol = 1e-9 + 1e-9 * cfg.l2;
    for (i, wp) in traj.waypoints.iter().enumerate() {
        if wp.step != i || (i == 0) != wp.action.is_none() {
            return Err(Error::Fidelity(format!(
                "waypoint {i} is out of sequence (step {}, action {:?})",
                wp.step, wp.action
            )));
        }
        if (wp.z - cfg.z_for(wp.pen_down)).abs() > z_tol {
            return Err(Error::Fidelity(format!(
                "waypoint {i}: z = {} m does not match pen_down = {}",
                wp.z, wp.pen_down
            )));
        }
        if let Some(a) = wp.action {
            if Action::decode(a)?.pen_down != wp.pen_down {
                return Err(Error::Fidelity(format!("waypoint {i}: pen state disagrees with action {a}")));
            }
        }
        let cell = Cell::new(
            recover_axis(wp.x, cfg.origin[0], cfg.l1, size, i, "x")?,
            recover_axis(wp.y, cfg.origin[1], cfg.l1, size, i, "y")?,
        );
        if let Some(&prev) = cells.last() {
            let (dx, dy) = (cell.x.abs_diff(prev.x), cell.y.abs_diff(prev.y));
            if dx > MAX_OFFSET as usize || dy > MAX_OFFSET as usize {
                return Err(Error::Fidelity(format!(
                    "waypoint {i} jumps ({dx}, {dy}) cells, beyond one patch"
                )));
            }
            if wp.pen_down {
                canvas.draw_segment(prev, cell)?;
            }
        } else if [cell.x, cell.y] != traj.header.start_cell {
            return Err(Error::Fidelity(format!(
                "initial pose maps to {cell:?}, header says {:?}",
                traj.header.start_cell
            )));
        }
        cells.push(cell);
    }
    Ok(Execution { canvas, cells })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::Rng;

    use super::*;
    use crate::env::SketchEnv;
    use crate::rng::rng_for;

    fn episode(seed: u64, steps: usize, pen_down_only: Option<bool>) -> (PenState, Vec<StepInfo>, Canvas, Vec<Cell>) {
        let env = SketchEnv::new(84, 150).unwrap();
        let mut state = env.reset(Arc::new(Canvas::new(84))).unwrap();
        let start = state.pen;
        let mut rng = rng_for(seed, 0, 0);
        let mut infos = Vec::new();
        let mut cells = vec![state.pen.cell()];
        for _ in 0..steps {
            let mut a = rng.gen_range(0..242u32) as usize;
            if let Some(down) = pen_down_only {
                a = a % 121 + if down { 121 } else { 0 };
            }
            infos.push(env.step(&mut state, a).unwrap());
            cells.push(state.pen.cell());
        }
        (start, infos, state.generated, cells)
    }

    #[test]
    fn to_cartesian_examples() {
        let (x, y) = to_cartesian((0.300, 0.100), 2, -1, 0.005);
        assert!((x - 0.310).abs() < 1e-12 && (y - 0.095).abs() < 1e-12);
        assert_eq!(to_cartesian((0.3, 0.1), 0, 0, 0.005), (0.3, 0.1));
        let back = to_cartesian(to_cartesian((0.3, 0.1), 4, -3, 0.005), -4, 3, 0.005);
        assert!((back.0 - 0.3).abs() < 1e-12 && (back.1 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn fence_posts_and_pen_lift() {
        let cfg = GridmapConfig::default();
        let (start, _, _, _) = episode(1, 0, None);
        let t = export_trajectory(start, 84, &[], &cfg).unwrap();
        assert_eq!(t.waypoints.len(), 1);
        assert_eq!(t.waypoints[0].action, None);

        let (start, infos, canvas, _) = episode(2, 150, Some(false));
        let t = export_trajectory(start, 84, &infos, &cfg).unwrap();
        assert_eq!(t.waypoints.len(), 151);
        assert!(t.waypoints.iter().all(|w| w.z == cfg.z_canvas + cfg.l2));
        let exec = simulate_execution(&t).unwrap();
        assert_eq!(exec.canvas.ink_count(), 0);
        assert_eq!(exec.canvas, canvas);
    }

    #[test]
    fn round_trip_through_jsonl_reproduces_the_episode() {
        let cfg = GridmapConfig {
            origin: [0.12, -0.3],
            z_canvas: 0.85,
            ..GridmapConfig::default()
        };
        for seed in 0..10 {
            let (start, infos, canvas, cells) = episode(seed, 150, None);
            let t = export_trajectory(start, 84, &infos, &cfg).unwrap();
            let mut buf = Vec::new();
            t.write_jsonl(&mut buf).unwrap();
            let back = Trajectory::read_jsonl(&buf[..]).unwrap();
            assert_eq!(back, t);
            let exec = simulate_execution(&back).unwrap();
            assert_eq!(exec.canvas, canvas);
            assert_eq!(exec.cells, cells);
            let zs: std::collections::BTreeSet<u64> = t.waypoints.iter().map(|w| w.z.to_bits()).collect();
            assert!(zs.len() <= 2);
        }
    }

    #[test]
    fn oversized_displacement_is_a_contract_violation() {
        let (start, mut infos, _, _) = episode(3, 3, None);
        infos[1].dx = 6;
        assert!(matches!(
            export_trajectory(start, 84, &infos, &GridmapConfig::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn perturbed_coordinates_are_detected() {
        let cfg = GridmapConfig::default();
        let (start, infos, canvas, cells) = episode(4, 150, Some(true));
        let t = export_trajectory(start, 84, &infos, &cfg).unwrap();
        for i in [1, 40, 75, 150] {
            for sign in [-1.0, 1.0] {
                let mut bad = t.clone();
                bad.waypoints[i].x += sign * cfg.l1;
                match simulate_execution(&bad) {
                    Err(e) => assert_eq!(e.kind(), "fidelity"),
                    Ok(exec) => assert!(exec.canvas != canvas || exec.cells != cells),
                }
            }
        }
        let mut off = t.clone();
        off.waypoints[10].y = -0.6 * cfg.l1;
        assert_eq!(simulate_execution(&off).unwrap_err().kind(), "fidelity");
        let mut lifted = t;
        lifted.waypoints[5].z += cfg.l2;
        assert_eq!(simulate_execution(&lifted).unwrap_err().kind(), "fidelity");
    }

    #[test]
    fn linearity_of_displacements() {
        let mut rng = rng_for(5, 0, 0);
        for _ in 0..1000 {
            let p = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (a, b) = ((rng.gen_range(-5..=5), rng.gen_range(-5..=5)), (rng.gen_range(-5..=5), rng.gen_range(-5..=5)));
            let joint = to_cartesian(p, a.0 + b.0, a.1 + b.1, 0.005);
            let chained = to_cartesian(to_cartesian(p, a.0, a.1, 0.005), b.0, b.1, 0.005);
            assert!((joint.0 - chained.0).abs() < 1e-12 && (joint.1 - chained.1).abs() < 1e-12);
        }
    }
}
