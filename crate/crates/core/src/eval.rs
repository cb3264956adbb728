//! Greedy drawing episodes, per-sketch reports and the results table.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sketchnet::{Input, ModelKind, NetError, Network};

use crate::canvas::{bresenham_line, Canvas, Cell};
use crate::classifier::Classifier;
use crate::config::Config;
use crate::dqn::policy::argmax;
use crate::dqn::reward::{eval_similarity_percent, is_slow, regime, similarity_s, step_reward, Regime};
use crate::dqn::trainer::{theta_reward, Reference};
use crate::env::{stack_streams, Action, PenState, SketchEnv, StepInfo};
use crate::error::{Error, Result};
use crate::quickdraw::{complexity_metrics, AverageComplexity, SketchRecord};

/// One logged step of a drawing episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawStep {
    pub k: usize,
    pub action: usize,
    pub dx: i32,
    pub dy: i32,
    pub pen_down: bool,
    pub x: usize,
    pub y: usize,
    pub regime: String,
    pub s_k: f64,
    pub s_k1: f64,
    pub theta: Option<f64>,
    pub slow: bool,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawOutcome {
    pub category: String,
    pub start: PenState,
    pub steps: Vec<DrawStep>,
    pub infos: Vec<StepInfo>,
    pub final_canvas: Canvas,
    pub similarity_pct: f64,
    /// Sum of every step reward.
    pub dqn_reward: f64,
    /// Sum over the pixel-regime steps only.
    pub pixel_reward: f64,
}

/// Runs the greedy policy of `q` for `total_strokes` steps on `reference`.
pub fn run_draw(q: &Network<f32>, reference: &Reference, classifier: Option<&Classifier>, cfg: &Config) -> Result<DrawOutcome> {
    if q.architecture().kind != ModelKind::QNetwork {
        return Err(Error::Net(NetError::Shape(
            "drawing needs a Q-network checkpoint, got a classifier".into(),
        )));
    }
    let env = SketchEnv::new(cfg.canvas_size, cfg.total_strokes)?;
    let reward_cfg = cfg.reward();
    let mut state = env.reset(reference.canvas.clone())?;
    let start = state.pen;
    let mut s_k = similarity_s(&state.generated, &state.reference, cfg.similarity_scale)?;
    let mut steps = Vec::with_capacity(cfg.total_strokes);
    let mut infos = Vec::with_capacity(cfg.total_strokes);
    while !env.is_terminal(&state) {
        let (batch, global, local) = stack_streams([&state]);
        let values = q.predict(&Input { batch, global: &global, local: &local })?;
        let action = argmax(&values);
        let k = state.k;
        let reg = regime(&reward_cfg, k)?;
        let info = env.step(&mut state, action)?;
        let s_k1 = similarity_s(&state.generated, &state.reference, cfg.similarity_scale)?;
        let theta = match reg {
            Regime::Pixel => None,
            Regime::Theta => Some(theta_reward(
                classifier,
                &reference.category,
                &state.generated,
                cfg.untrained_category_theta,
            )?),
        };
        let slow = is_slow(&info, cfg.slow_threshold);
        let reward = step_reward(&reward_cfg, k, slow, s_k, s_k1, theta.unwrap_or(0.0))?;
        steps.push(DrawStep {
            k,
            action,
            dx: info.dx,
            dy: info.dy,
            pen_down: Action::decode(action)?.pen_down,
            x: state.pen.x,
            y: state.pen.y,
            regime: match reg {
                Regime::Pixel => "pixel".into(),
                Regime::Theta => "theta".into(),
            },
            s_k,
            s_k1,
            theta,
            slow,
            reward,
        });
        infos.push(info);
        s_k = s_k1;
    }
    let dqn_reward = steps.iter().map(|s| s.reward).sum();
    let pixel_reward = steps.iter().filter(|s| s.regime == "pixel").map(|s| s.reward).sum();
    Ok(DrawOutcome {
        category: reference.category.clone(),
        start,
        steps,
        infos,
        similarity_pct: eval_similarity_percent(&state.generated, &reference.canvas)?,
        final_canvas: state.generated,
        dqn_reward,
        pixel_reward,
    })
}

/// One row of the results table plus the audit-only pixel subtotal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub category: String,
    pub mse_similarity_pct: f64,
    pub dqn_reward: f64,
    pub pixel_reward: f64,
    pub sketch_strokes: usize,
    pub sketch_points: usize,
    pub sketch_velocity: f64,
    pub category_strokes: f64,
    pub category_points: f64,
    pub category_velocity: f64,
}

impl EpisodeReport {
    pub fn new(outcome: &DrawOutcome, sketch: &SketchRecord, category: &AverageComplexity) -> Self {
        let m = complexity_metrics(sketch);
        Self {
            category: outcome.category.clone(),
            mse_similarity_pct: outcome.similarity_pct,
            dqn_reward: outcome.dqn_reward,
            pixel_reward: outcome.pixel_reward,
            sketch_strokes: m.stroke_count,
            sketch_points: m.point_count,
            sketch_velocity: m.stroke_velocity,
            category_strokes: category.strokes,
            category_points: category.points,
            category_velocity: category.velocity,
        }
    }
}

/// Results-table columns after the row label, in order.
pub const TABLE_COLUMNS: [&str; 8] = [
    "MSE Simil.",
    "DQN Rew.",
    "Sketch strokes",
    "Sketch points",
    "Sketch Vel.",
    "Categ. Strokes",
    "Categ. Points",
    "Categ. Vel.",
];

/// Row label column of the CSV form.
pub const LABEL_COLUMN: &str = "Category";

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            c.next().map_or_else(String::new, |f| f.to_uppercase().collect::<String>() + c.as_str())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Markdown table with one row per report.
pub fn report_markdown(rows: &[EpisodeReport]) -> String {
    let mut out = format!("| |{}|\n", TABLE_COLUMNS.map(|c| format!(" {c} ")).join("|"));
    out.push_str(&format!("|---|{}|\n", ["---:"; 8].join("|")));
    for r in rows {
        out.push_str(&format!(
            "| {} | {:.0}% | {:.2} | {} | {} | {:.2} | {:.2} | {:.2} | {:.2} |\n",
            title_case(&r.category),
            r.mse_similarity_pct,
            r.dqn_reward,
            r.sketch_strokes,
            r.sketch_points,
            r.sketch_velocity,
            r.category_strokes,
            r.category_points,
            r.category_velocity
        ));
    }
    out
}

/// CSV with full-precision numbers; [`read_report_csv`] parses it back
/// exactly.
pub fn write_report_csv<W: Write>(w: W, rows: &[EpisodeReport]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec![LABEL_COLUMN];
    header.extend(TABLE_COLUMNS);
    wr.write_record(&header)?;
    for r in rows {
        wr.write_record([
            r.category.clone(),
            r.mse_similarity_pct.to_string(),
            r.dqn_reward.to_string(),
            r.sketch_strokes.to_string(),
            r.sketch_points.to_string(),
            r.sketch_velocity.to_string(),
            r.category_strokes.to_string(),
            r.category_points.to_string(),
            r.category_velocity.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Parsed CSV row: label and the eight numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub values: [f64; 8],
}

pub fn read_report_csv(text: &str) -> Result<Vec<TableRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let mut expected = vec![LABEL_COLUMN.to_string()];
    expected.extend(TABLE_COLUMNS.iter().map(|c| c.to_string()));
    if header != expected {
        return Err(Error::Format {
            line: 1,
            message: format!("unexpected columns {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let mut values = [0.0; 8];
        for (j, v) in values.iter_mut().enumerate() {
            *v = rec[j + 1].parse().map_err(|e| Error::Format {
                line: i + 2,
                message: format!("column {:?}: {e}", TABLE_COLUMNS[j]),
            })?;
        }
        rows.push(TableRow {
            label: rec[0].to_string(),
            values,
        });
    }
    Ok(rows)
}

/// Start-to-end colour: purple at the first waypoint, red at the last.
pub fn gradient(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    [lerp(128.0, 255.0), 0, lerp(128.0, 0.0)]
}

/// Binary PPM (`P6`) of the agent's path over a faint copy of the
/// reference, each cell drawn as a `scale × scale` block. Pen-down moves
/// are drawn as lines, every visited cell as a dot, both coloured by time.
pub fn trajectory_overlay(reference: &Canvas, start: PenState, steps: &[DrawStep], scale: usize) -> Vec<u8> {
    let m = reference.size();
    let side = m * scale;
    let mut img = vec![255u8; side * side * 3];
    let mut paint = |cell: Cell, rgb: [u8; 3]| {
        for yy in cell.y * scale..(cell.y + 1) * scale {
            for xx in cell.x * scale..(cell.x + 1) * scale {
                img[(yy * side + xx) * 3..(yy * side + xx) * 3 + 3].copy_from_slice(&rgb);
            }
        }
    };
    for y in 0..m {
        for x in 0..m {
            if reference.get(Cell::new(x, y)) > 0.0 {
                paint(Cell::new(x, y), [200, 200, 200]);
            }
        }
    }
    let n = steps.len().max(1) as f64;
    let mut prev = start.cell();
    paint(prev, gradient(0.0));
    for (i, s) in steps.iter().enumerate() {
        let cell = Cell::new(s.x, s.y);
        let colour = gradient((i + 1) as f64 / n);
        if s.pen_down {
            for c in bresenham_line(prev, cell) {
                paint(c, colour);
            }
        }
        paint(cell, colour);
        prev = cell;
    }
    let mut out = format!("P6\n{side} {side}\n255\n").into_bytes();
    out.extend_from_slice(&img);
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use sketchnet::{Activation, Architecture};

    use super::*;
    use crate::quickdraw::{average_complexity, Stroke};

    fn reference() -> Reference {
        let mut c = Canvas::new(84);
        c.draw_segment(Cell::new(0, 83), Cell::new(83, 83)).unwrap();
        c.draw_segment(Cell::new(83, 83), Cell::new(42, 0)).unwrap();
        Reference {
            category: "triangle".into(),
            canvas: Arc::new(c),
        }
    }

    fn sketch(strokes: usize) -> SketchRecord {
        SketchRecord {
            category: "triangle".into(),
            recognized: true,
            strokes: (0..strokes)
                .map(|i| Stroke {
                    x: vec![0, 10 * i as u8],
                    y: vec![0, 0],
                })
                .collect(),
        }
    }

    #[test]
    fn zero_network_episode_is_well_formed_and_reproducible() {
        let q = Network::zeros(Architecture::q_network(Activation::Linear));
        let cfg = Config::default();
        let a = run_draw(&q, &reference(), None, &cfg).unwrap();
        assert_eq!(a.steps.len(), 150);
        // All-zero Q picks action 0: pen up, (−5, −5).
        assert!(a.steps.iter().all(|s| s.action == 0 && !s.pen_down));
        assert_eq!(a.final_canvas.ink_count(), 0);
        assert!((0.0..=100.0).contains(&a.similarity_pct));
        let b = run_draw(&q, &reference(), None, &cfg).unwrap();
        assert_eq!(a, b);
        let resum: f64 = a.steps.iter().map(|s| s.reward).sum();
        assert!((resum - a.dqn_reward).abs() < 1e-6);
    }

    #[test]
    fn random_network_rewards_add_up() {
        let q = Network::init(Architecture::q_network(Activation::Linear), 3);
        let out = run_draw(&q, &reference(), None, &Config::default()).unwrap();
        let mut total = 0.0;
        let mut pixel = 0.0;
        for s in &out.steps {
            total += s.reward;
            if s.k < 100 {
                pixel += s.reward;
            }
        }
        assert!((total - out.dqn_reward).abs() < 1e-6);
        assert!((pixel - out.pixel_reward).abs() < 1e-6);
    }

    #[test]
    fn classifier_checkpoint_is_rejected() {
        let q = Network::init(Architecture::classifier(8), 0);
        let err = run_draw(&q, &reference(), None, &Config::default()).unwrap_err();
        assert_eq!(err.kind(), "shape_mismatch");
    }

    #[test]
    fn table_schema_averages_and_csv_round_trip() {
        let q = Network::zeros(Architecture::q_network(Activation::Linear));
        let out = run_draw(&q, &reference(), None, &Config::default()).unwrap();
        let cat = [sketch(3), sketch(5)];
        let avg = average_complexity(&cat).unwrap();
        assert_eq!(avg.strokes, 4.0);
        let row = EpisodeReport::new(&out, &cat[0], &avg);
        let md = report_markdown(std::slice::from_ref(&row));
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2].matches('|').count(), 10);
        for c in TABLE_COLUMNS {
            assert!(lines[0].contains(c));
        }
        assert!(lines[2].starts_with("| Triangle |"));

        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[row.clone(), row.clone()]).unwrap();
        let parsed = read_report_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(
            parsed[0].values,
            [
                row.mse_similarity_pct,
                row.dqn_reward,
                row.sketch_strokes as f64,
                row.sketch_points as f64,
                row.sketch_velocity,
                row.category_strokes,
                row.category_points,
                row.category_velocity
            ]
        );
    }

    #[test]
    fn overlay_gradient_runs_purple_to_red() {
        assert_eq!(gradient(0.0), [128, 0, 128]);
        assert_eq!(gradient(1.0), [255, 0, 0]);
        let q = Network::init(Architecture::q_network(Activation::Linear), 1);
        let r = reference();
        let out = run_draw(&q, &r, None, &Config::default()).unwrap();
        let img = trajectory_overlay(&r.canvas, out.start, &out.steps, 4);
        assert!(img.starts_with(b"P6\n336 336\n255\n"));
        assert_eq!(img.len(), b"P6\n336 336\n255\n".len() + 336 * 336 * 3);
    }
}
