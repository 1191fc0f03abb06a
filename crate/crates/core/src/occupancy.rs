//! Dense scalar maps over the ground grid or an image lattice, plus the
//! `OMAP` binary format and PGM export.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! "OMAP" | u32 rows | u32 cols | f32 cell_size | rows*cols f32, row-major
//! ```
//!
//! A `cell_size` of 0 marks an image-plane map. Stacked maps use the magic
//! `"OMST"`, the same three fields, then a `u32` channel count followed by
//! the channel planes back to back.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{GroundGrid, ImageSize, Point2};

const MAGIC: &[u8; 4] = b"OMAP";
const STACK_MAGIC: &[u8; 4] = b"OMST";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lattice {
    Ground(GroundGrid),
    Image(ImageSize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMap {
    lattice: Lattice,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl OccupancyMap {
    pub fn zeros_ground(grid: GroundGrid) -> Self {
        Self {
            lattice: Lattice::Ground(grid),
            rows: grid.rows,
            cols: grid.cols,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn zeros_image(size: ImageSize) -> Self {
        Self {
            lattice: Lattice::Image(size),
            rows: size.height,
            cols: size.width,
            values: vec![0.0; size.width * size.height],
        }
    }

    pub fn from_values(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        let (rows, cols) = match lattice {
            Lattice::Ground(g) => (g.rows, g.cols),
            Lattice::Image(s) => (s.height, s.width),
        };
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!("{} values for a {rows}x{cols} map", values.len())));
        }
        Ok(Self {
            lattice,
            rows,
            cols,
            values,
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn grid(&self) -> Option<GroundGrid> {
        match self.lattice {
            Lattice::Ground(g) => Some(g),
            Lattice::Image(_) => None,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Zero outside the lattice.
    #[inline]
    pub fn get_or_zero(&self, row: isize, col: isize) -> f64 {
        if row < 0 || col < 0 || row as usize >= self.rows || col as usize >= self.cols {
            0.0
        } else {
            self.values[row as usize * self.cols + col as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.cols + col] = value;
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.values {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// (row, col, value) of the first maximal entry in row-major order.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 / self.cols, best.0 % self.cols, best.1)
    }

    /// Bilinear sample at continuous (x = col, y = row) coordinates with
    /// pixel centers on integers; reads past the border clamp to the edge.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let xmax = (self.cols - 1) as f64;
        let ymax = (self.rows - 1) as f64;
        let x = x.clamp(0.0, xmax);
        let y = y.clamp(0.0, ymax);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.cols - 1);
        let y1 = (y0 + 1).min(self.rows - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(y0, x0) * (1.0 - fx) + self.get(y0, x1) * fx;
        let bottom = self.get(y1, x0) * (1.0 - fx) + self.get(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Nearest-pixel sample; `None` outside the lattice.
    pub fn sample_nearest(&self, p: &Point2) -> Option<f64> {
        let size = ImageSize::new(self.cols, self.rows);
        size.pixel_of(p).map(|(r, c)| self.get(r, c))
    }

    /// Writes the `OMAP` binary encoding.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        write_header_fields(&mut w, self)?;
        write_plane(&mut w, &self.values)?;
        Ok(())
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.values.len());
        self.write_binary(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads an `OMAP` stream. Ground maps come back with their origin at
    /// (0, 0) since the format does not carry it.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Data(format!("bad occupancy-map magic {magic:?}")));
        }
        let (lattice, n) = read_header_fields(&mut r)?;
        let values = read_plane(&mut r, n)?;
        Self::from_values(lattice, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        self.write_binary(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// 16-bit binary PGM; values are clamped to [0, 1] and scaled to 65535.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n65535\n", self.cols, self.rows)?;
        let mut buf = Vec::with_capacity(self.values.len() * 2);
        for v in &self.values {
            let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
            buf.extend_from_slice(&q.to_be_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }
}

fn write_header_fields<W: Write>(w: &mut W, map: &OccupancyMap) -> Result<()> {
    let cell_size = match map.lattice {
        Lattice::Ground(g) => g.cell_size as f32,
        Lattice::Image(_) => 0.0,
    };
    w.write_all(&(map.rows as u32).to_le_bytes())?;
    w.write_all(&(map.cols as u32).to_le_bytes())?;
    w.write_all(&cell_size.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_header_fields<R: Read>(r: &mut R) -> Result<(Lattice, usize)> {
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let cell_size = f32::from_le_bytes(read_u32(r)?.to_le_bytes());
    if rows == 0 || cols == 0 {
        return Err(Error::Data("occupancy map with zero extent".into()));
    }
    let lattice = if cell_size == 0.0 {
        Lattice::Image(ImageSize::new(cols, rows))
    } else if cell_size > 0.0 && cell_size.is_finite() {
        Lattice::Ground(GroundGrid {
            origin: [0.0, 0.0],
            cell_size: cell_size as f64,
            rows,
            cols,
        })
    } else {
        return Err(Error::Data(format!("invalid cell size {cell_size}")));
    };
    Ok((lattice, rows * cols))
}

fn write_plane<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_plane<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Data(format!("truncated occupancy map: {e}")))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes channel planes sharing one lattice in the stacked `OMST` format.
pub fn write_stacked<W: Write>(mut w: W, channels: &[OccupancyMap]) -> Result<()> {
    let first = channels
        .first()
        .ok_or_else(|| Error::ShapeMismatch("no channels to write".into()))?;
    if channels.iter().any(|c| c.lattice != first.lattice) {
        return Err(Error::ShapeMismatch("stacked channels differ in lattice".into()));
    }
    w.write_all(STACK_MAGIC)?;
    write_header_fields(&mut w, first)?;
    w.write_all(&(channels.len() as u32).to_le_bytes())?;
    for c in channels {
        write_plane(&mut w, &c.values)?;
    }
    Ok(())
}

pub fn read_stacked<R: Read>(mut r: R) -> Result<Vec<OccupancyMap>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != STACK_MAGIC {
        return Err(Error::Data(format!("bad stacked-map magic {magic:?}")));
    }
    let (lattice, n) = read_header_fields(&mut r)?;
    let channels = read_u32(&mut r)? as usize;
    (0..channels)
        .map(|_| OccupancyMap::from_values(lattice, read_plane(&mut r, n)?))
        .collect()
}
