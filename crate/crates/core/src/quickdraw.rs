//! Quick, Draw! simplified-format ingestion: parsing, rasterization,
//! complexity metrics and reproducible train/test splits.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canvas::{Canvas, Cell};
use crate::error::{Error, Result};

/// Categories the agent and classifier are trained on, in classifier
/// output order.
pub const TRAIN_CATEGORIES: [&str; 8] =
    ["book", "hammer", "chair", "fan", "mountain", "flower", "bus", "whale"];
/// Categories only ever used for testing.
pub const TEST_ONLY_CATEGORIES: [&str; 5] = ["wine bottle", "dog", "triangle", "sun", "mona lisa"];

/// One polyline; `x` and `y` have equal, non-zero length.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Stroke {
    pub x: Vec<u8>,
    pub y: Vec<u8>,
}

impl Stroke {
    pub fn points(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Euclidean polyline length in source units.
    pub fn length(&self) -> f64 {
        self.points()
            .zip(self.points().skip(1))
            .map(|((x0, y0), (x1, y1))| {
                (f64::from(x1) - f64::from(x0)).hypot(f64::from(y1) - f64::from(y0))
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SketchRecord {
    pub category: String,
    pub recognized: bool,
    pub strokes: Vec<Stroke>,
}

#[derive(Deserialize)]
struct RawRecord {
    word: String,
    recognized: bool,
    drawing: Vec<Vec<Vec<i64>>>,
}

#[derive(Serialize)]
struct RawRecordOut<'a> {
    word: &'a str,
    recognized: bool,
    drawing: Vec<[&'a [u8]; 2]>,
}

impl SketchRecord {
    /// Parses one simplified-format line (`word`, `recognized`, `drawing`;
    /// other fields are ignored). `line_no` is used in error messages.
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self> {
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let format = |message: String| Error::Format { line: line_no, message };
        if raw.drawing.is_empty() {
            return Err(format("drawing has no strokes".into()));
        }
        let mut strokes = Vec::with_capacity(raw.drawing.len());
        for (si, stroke) in raw.drawing.iter().enumerate() {
            if stroke.len() != 2 {
                return Err(format(format!(
                    "stroke {si} has {} coordinate lists, expected [x, y]",
                    stroke.len()
                )));
            }
            let (xs, ys) = (&stroke[0], &stroke[1]);
            if xs.len() != ys.len() {
                return Err(format(format!(
                    "stroke {si} is ragged: {} x values, {} y values",
                    xs.len(),
                    ys.len()
                )));
            }
            if xs.is_empty() {
                return Err(format(format!("stroke {si} has no points")));
            }
            let coord = |v: i64| {
                u8::try_from(v).map_err(|_| format(format!("stroke {si}: coordinate {v} outside [0, 255]")))
            };
            strokes.push(Stroke {
                x: xs.iter().map(|&v| coord(v)).collect::<Result<_>>()?,
                y: ys.iter().map(|&v| coord(v)).collect::<Result<_>>()?,
            });
        }
        Ok(Self {
            category: raw.word,
            recognized: raw.recognized,
            strokes,
        })
    }

    /// Serializes back to the simplified format.
    pub fn to_line(&self) -> String {
        serde_json::to_string(&RawRecordOut {
            word: &self.category,
            recognized: self.recognized,
            drawing: self.strokes.iter().map(|s| [&s.x[..], &s.y[..]]).collect(),
        })
        .expect("record serialization cannot fail")
    }

    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(Stroke::len).sum()
    }
}

/// Reads every non-blank line of an ndjson file; `.gz` input (by magic
/// bytes) is decompressed transparently.
pub fn read_ndjson(path: impl AsRef<Path>) -> Result<Vec<SketchRecord>> {
    let mut file = File::open(path.as_ref())?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let file = File::open(path.as_ref())?;
    let reader: Box<dyn BufRead> = if n == 2 && magic == [0x1f, 0x8b] {
        Box::new(BufReader::new(GzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    parse_ndjson(reader)
}

pub fn parse_ndjson<R: BufRead>(reader: R) -> Result<Vec<SketchRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(SketchRecord::parse_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn write_ndjson<W: Write>(mut w: W, records: &[SketchRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_line())?;
    }
    Ok(())
}

/// Maps a source coordinate in `[0, 255]` onto `[0, size − 1]`, rounding
/// to nearest.
pub fn scale_coordinate(c: u8, size: usize) -> usize {
    (2 * usize::from(c) * (size - 1) + 255) / 510
}

/// Draws every stroke as a Bresenham polyline; strokes are not joined.
pub fn rasterize_sketch(record: &SketchRecord, size: usize) -> Canvas {
    let mut canvas = Canvas::new(size);
    for stroke in &record.strokes {
        let cells: Vec<Cell> = stroke
            .points()
            .map(|(x, y)| Cell::new(scale_coordinate(x, size), scale_coordinate(y, size)))
            .collect();
        canvas.ink(cells[0]);
        for pair in cells.windows(2) {
            canvas
                .draw_segment(pair[0], pair[1])
                .expect("scaled coordinates lie on the canvas");
        }
    }
    canvas
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityMetrics {
    pub stroke_count: usize,
    pub point_count: usize,
    /// Total polyline length (source units) per point.
    pub stroke_velocity: f64,
}

pub fn complexity_metrics(record: &SketchRecord) -> ComplexityMetrics {
    let point_count = record.point_count();
    let length: f64 = record.strokes.iter().map(Stroke::length).sum();
    ComplexityMetrics {
        stroke_count: record.strokes.len(),
        point_count,
        stroke_velocity: if point_count == 0 { 0.0 } else { length / point_count as f64 },
    }
}

/// Mean metrics over a set of sketches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageComplexity {
    pub strokes: f64,
    pub points: f64,
    pub velocity: f64,
}

pub fn average_complexity<'a>(records: impl IntoIterator<Item = &'a SketchRecord>) -> Option<AverageComplexity> {
    let (mut n, mut s, mut p, mut v) = (0usize, 0.0, 0.0, 0.0);
    for r in records {
        let m = complexity_metrics(r);
        n += 1;
        s += m.stroke_count as f64;
        p += m.point_count as f64;
        v += m.stroke_velocity;
    }
    (n > 0).then(|| AverageComplexity {
        strokes: s / n as f64,
        points: p / n as f64,
        velocity: v / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<SketchRecord>,
    pub test: Vec<SketchRecord>,
    pub seed: u64,
}

/// Shuffles with a ChaCha8 stream seeded by `seed`, then takes the first
/// `train_size` records for training.
pub fn split_dataset(records: &[SketchRecord], seed: u64, train_size: usize) -> Result<DatasetSplit> {
    if train_size > records.len() {
        return Err(Error::Config(format!(
            "train size {train_size} exceeds the {} available records",
            records.len()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = order.split_at(train_size);
    Ok(DatasetSplit {
        train: train.iter().map(|&i| records[i].clone()).collect(),
        test: test.iter().map(|&i| records[i].clone()).collect(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub category: String,
    pub source: String,
    pub total: usize,
    pub eligible: usize,
    pub train: usize,
    pub test: usize,
    pub train_file: String,
    pub test_file: String,
}

/// Written by [`ingest`]; lists per-category split files relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub train_size: usize,
    pub recognized_only: bool,
    pub categories: Vec<CategoryEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryData {
    pub name: String,
    pub train: Vec<SketchRecord>,
    pub test: Vec<SketchRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub categories: Vec<CategoryData>,
}

impl Dataset {
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let categories = manifest
            .categories
            .iter()
            .map(|c| {
                Ok(CategoryData {
                    name: c.category.clone(),
                    train: read_ndjson(dir.join(&c.train_file))?,
                    test: read_ndjson(dir.join(&c.test_file))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { manifest, categories })
    }

    pub fn category(&self, name: &str) -> Option<&CategoryData> {
        self.categories.iter().find(|c| c.name == name)
    }
}

fn normalize_name(name: &str) -> String {
    let lower = name.to_lowercase();
    let lower = lower.trim();
    lower.strip_prefix("the ").unwrap_or(lower).to_string()
}

/// Finds `<category>.ndjson[.gz]` or the official
/// `full_simplified_<category>.ndjson[.gz]` under `dir`, case-insensitively
/// and ignoring a leading "the ".
pub fn find_category_file(dir: &Path, category: &str) -> Result<PathBuf> {
    let want = normalize_name(category);
    let mut matches: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let stem = name
            .strip_suffix(".gz")
            .unwrap_or(name)
            .strip_suffix(".ndjson")
            .map(|s| s.strip_prefix("full_simplified_").unwrap_or(s));
        if stem.is_some_and(|s| normalize_name(s) == want) {
            matches.push(path);
        }
    }
    matches.sort();
    matches
        .into_iter()
        .next()
        .ok_or_else(|| Error::Config(format!("no ndjson file for category {category:?} in {}", dir.display())))
}

fn file_stem_for(category: &str) -> String {
    category.replace(' ', "_")
}

/// Reads each category, filters to recognized drawings when asked, splits
/// `train_size` per category and writes split files plus `manifest.json`
/// into `out_dir`.
pub fn ingest(
    input_dir: &Path,
    categories: &[String],
    train_size: usize,
    seed: u64,
    recognized_only: bool,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::with_capacity(categories.len());
    for category in categories {
        let source = find_category_file(input_dir, category)?;
        let records = read_ndjson(&source)?;
        let total = records.len();
        let eligible: Vec<SketchRecord> = records
            .into_iter()
            .filter(|r| r.recognized || !recognized_only)
            .map(|mut r| {
                r.category = category.clone();
                r
            })
            .collect();
        // Test-only categories never contribute training sketches.
        let train_size = if TEST_ONLY_CATEGORIES.contains(&normalize_name(category).as_str()) {
            0
        } else {
            train_size
        };
        if train_size > eligible.len() {
            return Err(Error::Config(format!(
                "category {category:?}: train size {train_size} exceeds {} eligible records",
                eligible.len()
            )));
        }
        let split = split_dataset(&eligible, seed, train_size)?;
        let stem = file_stem_for(category);
        let train_file = format!("{stem}.train.ndjson");
        let test_file = format!("{stem}.test.ndjson");
        write_ndjson(File::create(out_dir.join(&train_file))?, &split.train)?;
        write_ndjson(File::create(out_dir.join(&test_file))?, &split.test)?;
        entries.push(CategoryEntry {
            category: category.clone(),
            source: source.display().to_string(),
            total,
            eligible: eligible.len(),
            train: split.train.len(),
            test: split.test.len(),
            train_file,
            test_file,
        });
    }
    let manifest = DatasetManifest {
        seed,
        train_size,
        recognized_only,
        categories: entries,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}
