//! Three-level spatial pyramid max pooling.
//!
//! Level `l ∈ {0, 1, 2}` splits the image into `2^l × 2^l` equal cells; the
//! codes of descriptors falling in a cell are max-pooled, and the 21 cell
//! vectors are concatenated level by level (cells row-major within a level)
//! and ℓ2-normalised as a whole.

use ndarray::Array2;

use crate::error::{Error, Result};

pub const PYRAMID_LEVELS: usize = 3;
/// `1 + 4 + 16`.
pub const PYRAMID_CELLS: usize = 21;

/// Codes of one image, one row per descriptor, with descriptor locations.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedImage {
    pub codes: Array2<f64>,
    pub locations: Vec<[f32; 2]>,
    pub image_size: (u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidFeature {
    values: Vec<f64>,
    p: usize,
}

impl PyramidFeature {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn codebook_size(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            values: vec![0.0; PYRAMID_CELLS * p],
            p,
        }
    }

    /// Slice of the feature belonging to `(level, row, col)`.
    pub fn cell(&self, level: usize, row: usize, col: usize) -> &[f64] {
        let off = cell_offset(level, row, col) * self.p;
        &self.values[off..off + self.p]
    }
}

/// Index of `(level, row, col)` among the 21 cells.
pub fn cell_offset(level: usize, row: usize, col: usize) -> usize {
    let side = 1 << level;
    debug_assert!(level < PYRAMID_LEVELS && row < side && col < side);
    // cells before this level: (4^level − 1) / 3
    ((1 << (2 * level)) - 1) / 3 + row * side + col
}

/// `min(floor(coord · 2^l / extent), 2^l − 1)`.
pub fn cell_index(coord: f32, extent: u32, level: usize) -> usize {
    let side = 1usize << level;
    if extent == 0 {
        return 0;
    }
    let i = (f64::from(coord) * side as f64 / f64::from(extent)).floor();
    (i.max(0.0) as usize).min(side - 1)
}

/// Componentwise maximum of `rows`; the zero vector when `rows` is empty.
pub fn max_pool<'a, I>(rows: I, p: usize) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out: Option<Vec<f64>> = None;
    for row in rows {
        if row.len() != p {
            return Err(Error::InvalidArgument(format!(
                "code of width {} pooled with p = {p}",
                row.len()
            )));
        }
        match out.as_mut() {
            None => out = Some(row.to_vec()),
            Some(acc) => acc.iter_mut().zip(row).for_each(|(a, &v)| *a = a.max(v)),
        }
    }
    Ok(out.unwrap_or_else(|| vec![0.0; p]))
}

/// Pooled 21p vector before normalisation.
pub fn pyramid_pooled(ci: &CodedImage) -> Result<Vec<f64>> {
    let (m, p) = ci.codes.dim();
    if m != ci.locations.len() {
        return Err(Error::InvalidArgument(format!(
            "{m} codes but {} locations",
            ci.locations.len()
        )));
    }
    let (w, h) = ci.image_size;
    for &[x, y] in &ci.locations {
        if !(x >= 0.0 && x <= w as f32 && y >= 0.0 && y <= h as f32) {
            return Err(Error::InvalidArgument(format!(
                "location ({x}, {y}) outside {w}x{h} image"
            )));
        }
    }
    let codes = ci.codes.as_standard_layout();
    let rows: Vec<&[f64]> = (0..m).map(|i| codes.row(i).to_slice().unwrap()).collect();

    let mut out = vec![0.0; PYRAMID_CELLS * p];
    for level in 0..PYRAMID_LEVELS {
        let side = 1 << level;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); side * side];
        for (i, &[x, y]) in ci.locations.iter().enumerate() {
            let r = cell_index(y, h, level);
            let c = cell_index(x, w, level);
            members[r * side + c].push(i);
        }
        for (cell, idx) in members.iter().enumerate() {
            let pooled = max_pool(idx.iter().map(|&i| rows[i]), p)?;
            let off = cell_offset(level, cell / side, cell % side) * p;
            out[off..off + p].copy_from_slice(&pooled);
        }
    }
    Ok(out)
}

pub fn build_pyramid(ci: &CodedImage) -> Result<PyramidFeature> {
    let p = ci.codes.ncols();
    let mut values = pyramid_pooled(ci)?;
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(PyramidFeature { values, p })
}
