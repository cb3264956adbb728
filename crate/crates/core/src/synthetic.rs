//! Procedural sketches in the Quick, Draw! record format.
//!
//! Each family is a jittered geometric template (position, size, rotation
//! and per-point noise), used for smoke tests, demos and desk-scale runs
//! where the real dataset is not at hand.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::quickdraw::{SketchRecord, Stroke, TRAIN_CATEGORIES};
use crate::rng::rng_for;

/// Families [`synthetic_sketch`] knows, in template order.
pub const FAMILIES: [&str; 9] = [
    TRAIN_CATEGORIES[0],
    TRAIN_CATEGORIES[1],
    TRAIN_CATEGORIES[2],
    TRAIN_CATEGORIES[3],
    TRAIN_CATEGORIES[4],
    TRAIN_CATEGORIES[5],
    TRAIN_CATEGORIES[6],
    TRAIN_CATEGORIES[7],
    "triangle",
];

type Poly = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, n: usize) -> Poly {
    (0..=n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Poly {
    vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
}

/// Template polylines in a unit box centred at the origin.
fn template(family: usize) -> Vec<Poly> {
    match family {
        // book: cover plus spine
        0 => vec![rect(-0.8, -0.6, 0.8, 0.6), vec![(0.0, -0.6), (0.0, 0.6)]],
        // hammer: head and handle
        1 => vec![rect(-0.7, -0.8, 0.7, -0.45), vec![(0.0, -0.45), (0.0, 0.9)]],
        // chair: back, seat, legs
        2 => vec![
            vec![(-0.5, -0.9), (-0.5, 0.1), (0.5, 0.1), (0.5, 0.9)],
            vec![(-0.5, 0.1), (-0.5, 0.9)],
        ],
        // fan: hub and three blades
        3 => {
            let mut p = vec![ellipse(0.0, 0.0, 0.15, 0.15, 10)];
            for b in 0..3 {
                let t = 2.0 * PI * b as f64 / 3.0;
                p.push(vec![(0.15 * t.cos(), 0.15 * t.sin()), (0.9 * t.cos(), 0.9 * t.sin())]);
            }
            p
        }
        // mountain: two peaks
        4 => vec![vec![(-0.9, 0.6), (-0.4, -0.5), (0.0, 0.2), (0.4, -0.8), (0.9, 0.6)]],
        // flower: disc, petals, stem
        5 => {
            let mut p = vec![ellipse(0.0, -0.3, 0.2, 0.2, 10)];
            for b in 0..6 {
                let t = 2.0 * PI * b as f64 / 6.0;
                p.push(ellipse(0.4 * t.cos(), -0.3 + 0.4 * t.sin(), 0.15, 0.15, 8));
            }
            p.push(vec![(0.0, -0.1), (0.0, 0.9)]);
            p
        }
        // bus: body, windows line, wheels
        6 => vec![
            rect(-0.9, -0.5, 0.9, 0.4),
            vec![(-0.9, -0.1), (0.9, -0.1)],
            ellipse(-0.5, 0.55, 0.15, 0.15, 10),
            ellipse(0.5, 0.55, 0.15, 0.15, 10),
        ],
        // whale: body and tail
        7 => vec![
            ellipse(-0.15, 0.0, 0.65, 0.35, 20),
            vec![(0.5, 0.0), (0.9, -0.35), (0.9, 0.35), (0.5, 0.0)],
        ],
        // triangle
        _ => vec![vec![(-0.8, 0.7), (0.8, 0.7), (0.0, -0.7), (-0.8, 0.7)]],
    }
}

/// One jittered sketch of `family` (an index into [`FAMILIES`]).
pub fn synthetic_sketch(family: usize, rng: &mut ChaCha8Rng) -> SketchRecord {
    let family = family.min(FAMILIES.len() - 1);
    let scale = rng.gen_range(70.0..115.0);
    let cx = 127.5 + rng.gen_range(-20.0..20.0);
    let cy = 127.5 + rng.gen_range(-20.0..20.0);
    let angle: f64 = rng.gen_range(-0.25..0.25);
    let (sin, cos) = angle.sin_cos();
    let strokes = template(family)
        .into_iter()
        .map(|poly| {
            let (x, y) = poly
                .into_iter()
                .map(|(px, py)| {
                    let jx = px + rng.gen_range(-0.04..0.04);
                    let jy = py + rng.gen_range(-0.04..0.04);
                    let rx = cx + scale * (cos * jx - sin * jy);
                    let ry = cy + scale * (sin * jx + cos * jy);
                    (rx.round().clamp(0.0, 255.0) as u8, ry.round().clamp(0.0, 255.0) as u8)
                })
                .unzip();
            Stroke { x, y }
        })
        .collect();
    SketchRecord {
        category: FAMILIES[family].to_string(),
        recognized: true,
        strokes,
    }
}

/// `n` sketches of `family`, reproducible from `seed`.
pub fn synthetic_records(family: usize, n: usize, seed: u64) -> Vec<SketchRecord> {
    let mut rng = rng_for(seed, 0x5e7, family as u64);
    (0..n).map(|_| synthetic_sketch(family, &mut rng)).collect()
}
