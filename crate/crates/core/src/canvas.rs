//! The square drawing surface, line rasterization and PGM/raw byte I/O.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// A grid cell; `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// `M × M` grid of intensities in `[0, 1]`, row-major. `1` is ink.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    size: usize,
    pixels: Vec<f32>,
}

/// Cells on the Bresenham line between `a` and `b`, both ends included.
///
/// The walk always starts from the lexicographically smaller `(x, y)`
/// endpoint so the pixel set does not depend on direction.
pub fn bresenham_line(a: Cell, b: Cell) -> Vec<Cell> {
    let (from, to) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
    let (x0, y0) = (from.x as i64, from.y as i64);
    let (x1, y1) = (to.x as i64, to.y as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    let mut cells = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        cells.push(Cell::new(x as usize, y as usize));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    cells
}

impl Canvas {
    /// Blank canvas.
    pub fn new(size: usize) -> Self {
        Self {
            size,
            pixels: vec![0.0; size * size],
        }
    }

    pub fn from_pixels(size: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != size * size {
            return Err(Error::Contract(format!(
                "{} pixels for a {size}×{size} canvas",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("pixel intensity {v} outside [0, 1]")));
        }
        Ok(Self { size, pixels })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, cell: Cell) -> f32 {
        self.pixels[cell.y * self.size + cell.x]
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.size && cell.y < self.size
    }

    /// Sets a cell to ink; returns whether it changed.
    pub fn ink(&mut self, cell: Cell) -> bool {
        let p = &mut self.pixels[cell.y * self.size + cell.x];
        let changed = *p != 1.0;
        *p = 1.0;
        changed
    }

    /// Inks every cell of the Bresenham segment `from`–`to`; returns the
    /// number of cells that changed.
    pub fn draw_segment(&mut self, from: Cell, to: Cell) -> Result<usize> {
        if !self.contains(from) || !self.contains(to) {
            return Err(Error::Contract(format!(
                "segment {from:?}–{to:?} leaves the {0}×{0} canvas",
                self.size
            )));
        }
        Ok(bresenham_line(from, to)
            .into_iter()
            .filter(|&c| self.ink(c))
            .count())
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.pixels.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Row-major bytes, `round(v · 255)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    pub fn from_bytes(size: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != size * size {
            return Err(Error::Contract(format!(
                "{} bytes for a {size}×{size} canvas",
                bytes.len()
            )));
        }
        Ok(Self {
            size,
            pixels: bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        })
    }

    /// Binary PGM (`P5`, maxval 255, ink = 255).
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.size, self.size)?;
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() + 16);
        self.write_pgm(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads a square `P5` image with maxval 255.
    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = Vec::new();
        let mut fields: Vec<String> = Vec::new();
        // Magic, width, height, maxval; '#' comments allowed between fields.
        while fields.len() < 4 {
            let mut byte = [0u8; 1];
            r.read_exact(&mut byte)?;
            match byte[0] {
                b'#' if header.is_empty() => {
                    let mut comment = String::new();
                    r.read_line(&mut comment)?;
                }
                c if c.is_ascii_whitespace() => {
                    if !header.is_empty() {
                        fields.push(String::from_utf8_lossy(&header).into_owned());
                        header.clear();
                    }
                }
                c => header.push(c),
            }
        }
        let bad = |m: String| Error::Format { line: 1, message: m };
        if fields[0] != "P5" {
            return Err(bad(format!("expected P5 magic, found {:?}", fields[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if w != h {
            return Err(bad(format!("canvas must be square, got {w}×{h}")));
        }
        if maxval != 255 {
            return Err(bad(format!("maxval must be 255, got {maxval}")));
        }
        let mut bytes = vec![0u8; w * h];
        r.read_exact(&mut bytes)?;
        Self::from_bytes(w, &bytes)
    }

    /// One bit per cell (ink iff intensity ≥ 0.5), LSB-first.
    pub fn pack_bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.pixels.len().div_ceil(8)];
        for (i, &v) in self.pixels.iter().enumerate() {
            if v >= 0.5 {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    pub fn unpack_bits(size: usize, bits: &[u8]) -> Result<Self> {
        if bits.len() != (size * size).div_ceil(8) {
            return Err(Error::Contract(format!(
                "{} packed bytes for a {size}×{size} canvas",
                bits.len()
            )));
        }
        let pixels = (0..size * size)
            .map(|i| if bits[i / 8] >> (i % 8) & 1 == 1 { 1.0 } else { 0.0 })
            .collect();
        Ok(Self { size, pixels })
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;

    /// Major-axis walk: minor offset is the exact line rounded half-up in
    /// the direction of travel, starting from the smaller endpoint.
    fn reference_line(a: Cell, b: Cell) -> BTreeSet<Cell> {
        let (from, to) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
        let (dx, dy) = (to.x as i64 - from.x as i64, to.y as i64 - from.y as i64);
        let major = dx.abs().max(dy.abs());
        let mut set = BTreeSet::new();
        for i in 0..=major {
            let step = |d: i64| {
                if major == 0 {
                    0
                } else {
                    d.signum() * ((2 * i * d.abs() + major) / (2 * major))
                }
            };
            set.insert(Cell::new(
                (from.x as i64 + step(dx)) as usize,
                (from.y as i64 + step(dy)) as usize,
            ));
        }
        set
    }

    #[test]
    fn degenerate_segment_is_one_pixel() {
        let mut c = Canvas::new(84);
        assert_eq!(c.draw_segment(Cell::new(0, 0), Cell::new(0, 0)).unwrap(), 1);
        assert_eq!(c.ink_count(), 1);
        assert_eq!(c.get(Cell::new(0, 0)), 1.0);
    }

    #[test]
    fn axis_aligned_segment() {
        let mut c = Canvas::new(84);
        c.draw_segment(Cell::new(0, 0), Cell::new(5, 0)).unwrap();
        assert_eq!(c.ink_count(), 6);
        assert!((0..=5).all(|x| c.get(Cell::new(x, 0)) == 1.0));
    }

    #[test]
    fn shallow_segment_matches_reference() {
        let line: BTreeSet<Cell> = bresenham_line(Cell::new(0, 0), Cell::new(5, 3)).into_iter().collect();
        assert_eq!(line.len(), 6);
        assert_eq!(line, reference_line(Cell::new(0, 0), Cell::new(5, 3)));
    }

    #[test]
    fn segments_leaving_the_canvas_are_rejected() {
        let mut c = Canvas::new(10);
        assert!(c.draw_segment(Cell::new(0, 0), Cell::new(10, 0)).is_err());
    }

    #[test]
    fn pgm_and_bytes_round_trip() {
        let mut c = Canvas::new(84);
        c.draw_segment(Cell::new(3, 4), Cell::new(60, 70)).unwrap();
        let pgm = c.to_pgm();
        assert!(pgm.starts_with(b"P5\n84 84\n255\n"));
        assert_eq!(Canvas::read_pgm(&pgm[..]).unwrap(), c);
        assert_eq!(Canvas::from_bytes(84, &c.to_bytes()).unwrap(), c);
        assert_eq!(Canvas::unpack_bits(84, &c.pack_bits()).unwrap(), c);
        assert_eq!(c.pack_bits().len(), 882);
    }

    #[test]
    fn pgm_with_comment_and_wrong_maxval() {
        let mut data = b"P5\n# made by hand\n2 2\n255\n".to_vec();
        data.extend_from_slice(&[0, 255, 255, 0]);
        let c = Canvas::read_pgm(&data[..]).unwrap();
        assert_eq!(c.ink_count(), 2);
        let mut bad = b"P5\n2 2\n15\n".to_vec();
        bad.extend_from_slice(&[0, 15, 15, 0]);
        assert!(Canvas::read_pgm(&bad[..]).is_err());
    }

    proptest! {
        #[test]
        fn line_is_symmetric_and_matches_reference(ax in 0usize..84, ay in 0usize..84, bx in 0usize..84, by in 0usize..84) {
            let (a, b) = (Cell::new(ax, ay), Cell::new(bx, by));
            let ab: BTreeSet<Cell> = bresenham_line(a, b).into_iter().collect();
            let ba: BTreeSet<Cell> = bresenham_line(b, a).into_iter().collect();
            prop_assert_eq!(&ab, &ba);
            prop_assert_eq!(ab.len(), ax.abs_diff(bx).max(ay.abs_diff(by)) + 1);
            prop_assert!(ab.contains(&a) && ab.contains(&b));
            prop_assert_eq!(ab, reference_line(a, b));
        }

        #[test]
        fn byte_round_trip_is_exact(bytes in proptest::collection::vec(any::<u8>(), 64)) {
            let c = Canvas::from_bytes(8, &bytes).unwrap();
            prop_assert_eq!(c.to_bytes(), bytes.clone());
            let mut pgm = Vec::new();
            c.write_pgm(&mut pgm).unwrap();
            prop_assert_eq!(Canvas::read_pgm(&pgm[..]).unwrap().to_bytes(), bytes);
        }
    }
}
