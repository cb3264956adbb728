//! The drawing MDP: a pen moving over a canvas with 242 discrete actions.
//!
//! An action moves the pen by `(dx, dy) ∈ [−5, 5]²` cells inside the
//! 11×11 patch around it and sets the pen contact flag. Moves clamp to the
//! canvas; when the new flag is "down" the segment from the old to the new
//! position is inked.

use std::sync::Arc;

use crate::canvas::{Canvas, Cell};
use crate::error::{Error, Result};

/// Default canvas side length.
pub const CANVAS_SIZE: usize = 84;
/// Local patch side length.
pub const PATCH_SIZE: usize = 11;
/// Largest displacement per step along each axis.
pub const MAX_OFFSET: i32 = (PATCH_SIZE as i32 - 1) / 2;
/// Patch cells per pen state.
pub const PATCH_CELLS: usize = PATCH_SIZE * PATCH_SIZE;
pub const NUM_ACTIONS: usize = 2 * PATCH_CELLS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub dx: i32,
    pub dy: i32,
    pub pen_down: bool,
}

impl Action {
    pub const fn new(dx: i32, dy: i32, pen_down: bool) -> Self {
        Self { dx, dy, pen_down }
    }

    /// Index layout: `pen_down·121 + (dy+5)·11 + (dx+5)`.
    pub fn decode(index: usize) -> Result<Self> {
        if index >= NUM_ACTIONS {
            return Err(Error::Contract(format!(
                "action index {index} outside [0, {}]",
                NUM_ACTIONS - 1
            )));
        }
        let cell = index % PATCH_CELLS;
        Ok(Self {
            dx: (cell % PATCH_SIZE) as i32 - MAX_OFFSET,
            dy: (cell / PATCH_SIZE) as i32 - MAX_OFFSET,
            pen_down: index >= PATCH_CELLS,
        })
    }

    pub fn encode(self) -> Result<usize> {
        let range = -MAX_OFFSET..=MAX_OFFSET;
        if !range.contains(&self.dx) || !range.contains(&self.dy) {
            return Err(Error::Contract(format!(
                "offset ({}, {}) outside [−{MAX_OFFSET}, {MAX_OFFSET}]",
                self.dx, self.dy
            )));
        }
        let cell = (self.dy + MAX_OFFSET) as usize * PATCH_SIZE + (self.dx + MAX_OFFSET) as usize;
        Ok(usize::from(self.pen_down) * PATCH_CELLS + cell)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PenState {
    pub x: usize,
    pub y: usize,
    pub down: bool,
}

impl PenState {
    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }
}

/// One episode's state. The reference is shared and never mutated.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub generated: Canvas,
    pub reference: Arc<Canvas>,
    pub pen: PenState,
    /// Steps taken this episode.
    pub k: usize,
}

/// What a step did. `dx`/`dy` are the displacement actually applied after
/// clamping to the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    pub action: usize,
    pub dx: i32,
    pub dy: i32,
    pub pixels_changed: usize,
    /// Moved fewer than 5 cells along both axes.
    pub slow: bool,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchEnv {
    pub size: usize,
    pub total_strokes: usize,
}

impl SketchEnv {
    pub fn new(size: usize, total_strokes: usize) -> Result<Self> {
        if size < PATCH_SIZE {
            return Err(Error::Config(format!(
                "canvas size {size} is smaller than the {PATCH_SIZE}×{PATCH_SIZE} patch"
            )));
        }
        if total_strokes == 0 {
            return Err(Error::Config("total_strokes must be positive".into()));
        }
        Ok(Self { size, total_strokes })
    }

    pub fn start_pen(&self) -> PenState {
        PenState {
            x: self.size / 2,
            y: self.size / 2,
            down: false,
        }
    }

    /// Blank canvas, pen up at the centre, `k = 0`.
    pub fn reset(&self, reference: Arc<Canvas>) -> Result<EnvState> {
        if reference.size() != self.size {
            return Err(Error::Config(format!(
                "reference is {0}×{0}, environment is {1}×{1}",
                reference.size(),
                self.size
            )));
        }
        if !reference.is_binary() {
            return Err(Error::Config("reference canvas must be binary".into()));
        }
        Ok(EnvState {
            generated: Canvas::new(self.size),
            reference,
            pen: self.start_pen(),
            k: 0,
        })
    }

    pub fn is_terminal(&self, state: &EnvState) -> bool {
        state.k >= self.total_strokes
    }

    /// Applies `action` in place.
    pub fn step(&self, state: &mut EnvState, action: usize) -> Result<StepInfo> {
        if self.is_terminal(state) {
            return Err(Error::Contract(format!(
                "step on a terminal state (k = {})",
                state.k
            )));
        }
        let a = Action::decode(action)?;
        let max = self.size as i64 - 1;
        let old = state.pen;
        let nx = (old.x as i64 + i64::from(a.dx)).clamp(0, max) as usize;
        let ny = (old.y as i64 + i64::from(a.dy)).clamp(0, max) as usize;
        let new = PenState {
            x: nx,
            y: ny,
            down: a.pen_down,
        };
        let pixels_changed = if a.pen_down {
            state.generated.draw_segment(old.cell(), new.cell())?
        } else {
            0
        };
        state.pen = new;
        state.k += 1;
        let dx = nx as i32 - old.x as i32;
        let dy = ny as i32 - old.y as i32;
        Ok(StepInfo {
            action,
            dx,
            dy,
            pixels_changed,
            slow: dx.abs() < MAX_OFFSET && dy.abs() < MAX_OFFSET,
            terminal: state.k >= self.total_strokes,
        })
    }
}

/// `D(x, y) = √((x − p_x)² + (y − p_y)²) / M`, row-major.
pub fn distance_map(pen: PenState, size: usize) -> Vec<f32> {
    let mut out = vec![0.0; size * size];
    write_distance_map(pen, size, &mut out);
    out
}

fn write_distance_map(pen: PenState, size: usize, out: &mut [f32]) {
    let m = size as f32;
    for y in 0..size {
        let ddy = (y as f32 - pen.y as f32).powi(2);
        for x in 0..size {
            let ddx = (x as f32 - pen.x as f32).powi(2);
            out[y * size + x] = (ddx + ddy).sqrt() / m;
        }
    }
}

/// Constant map: ones when the pen touches the canvas, zeros otherwise.
pub fn colour_map(pen_down: bool, size: usize) -> Vec<f32> {
    vec![if pen_down { 1.0 } else { 0.0 }; size * size]
}

/// 11×11 window of `canvas` centred on the pen; outside cells read 0.
pub fn local_patch(canvas: &Canvas, pen: PenState) -> Vec<f32> {
    let mut out = vec![0.0; PATCH_CELLS];
    write_local_patch(canvas, pen, &mut out);
    out
}

fn write_local_patch(canvas: &Canvas, pen: PenState, out: &mut [f32]) {
    let size = canvas.size() as i64;
    let half = MAX_OFFSET as i64;
    for i in 0..PATCH_SIZE {
        let sy = pen.y as i64 + i as i64 - half;
        for j in 0..PATCH_SIZE {
            let sx = pen.x as i64 + j as i64 - half;
            out[i * PATCH_SIZE + j] = if (0..size).contains(&sx) && (0..size).contains(&sy) {
                canvas.get(Cell::new(sx as usize, sy as usize))
            } else {
                0.0
            };
        }
    }
}

/// Writes the four global channels `[generated, reference, distance,
/// colour]` into `out` (length `4·M²`).
pub fn write_global_stream(generated: &Canvas, reference: &Canvas, pen: PenState, out: &mut [f32]) {
    let plane = generated.size() * generated.size();
    assert_eq!(out.len(), 4 * plane, "global stream buffer has the wrong length");
    out[..plane].copy_from_slice(generated.pixels());
    out[plane..2 * plane].copy_from_slice(reference.pixels());
    write_distance_map(pen, generated.size(), &mut out[2 * plane..3 * plane]);
    out[3 * plane..].fill(if pen.down { 1.0 } else { 0.0 });
}

/// Network input streams of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `4 × M × M`
    pub global: Vec<f32>,
    /// `1 × 11 × 11`
    pub local: Vec<f32>,
}

impl Observation {
    pub fn of(state: &EnvState) -> Self {
        let plane = state.generated.size().pow(2);
        let mut global = vec![0.0; 4 * plane];
        write_global_stream(&state.generated, &state.reference, state.pen, &mut global);
        Self {
            global,
            local: local_patch(&state.generated, state.pen),
        }
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.global.len() / 4;
        &self.global[c * plane..(c + 1) * plane]
    }
}

/// Stacks the streams of `states` into sample-major network input buffers.
pub fn stack_streams<'a>(states: impl IntoIterator<Item = &'a EnvState>) -> (usize, Vec<f32>, Vec<f32>) {
    let mut global = Vec::new();
    let mut local = Vec::new();
    let mut n = 0;
    for s in states {
        let plane = s.generated.size().pow(2);
        let start = global.len();
        global.resize(start + 4 * plane, 0.0);
        write_global_stream(&s.generated, &s.reference, s.pen, &mut global[start..]);
        let start = local.len();
        local.resize(start + PATCH_CELLS, 0.0);
        write_local_patch(&s.generated, s.pen, &mut local[start..]);
        n += 1;
    }
    (n, global, local)
}
