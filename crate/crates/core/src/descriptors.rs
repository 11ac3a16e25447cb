//! Dense gradient-orientation descriptors and the `NNSC` descriptor file.
//!
//! Each patch is split into 4×4 spatial cells; every pixel votes its gradient
//! magnitude into one of 8 orientation bins of its cell (hard assignment over
//! `[0, 2π)`). The 128-vector is ℓ2-normalised, clamped at 0.2 and
//! renormalised. Gradients are central differences with replicated borders.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter, DESCRIPTOR_MAGIC};

pub const CELLS_PER_SIDE: usize = 4;
pub const ORIENTATION_BINS: usize = 8;
pub const DESCRIPTOR_DIM: usize = CELLS_PER_SIDE * CELLS_PER_SIDE * ORIENTATION_BINS;
pub const CLAMP: f64 = 0.2;

pub const DEFAULT_PATCH: usize = 16;
pub const DEFAULT_STEP: usize = 8;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Decodes any format the `image` crate understands and converts to luma.
    pub fn open(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::InvalidInput(format!("{}: {other}", path.display())),
        })?;
        let luma = img.to_luma32f();
        let (w, h) = luma.dimensions();
        let pixels = luma
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v).clamp(0.0, 1.0))
            .collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// `M` descriptors of dimension `L` with their pixel locations.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    data: Array2<f32>,
    locations: Vec<[f32; 2]>,
    image_size: (u32, u32),
}

impl DescriptorSet {
    pub fn new(data: Array2<f32>, locations: Vec<[f32; 2]>, image_size: (u32, u32)) -> Result<Self> {
        if data.nrows() != locations.len() {
            return Err(Error::InvalidArgument(format!(
                "{} descriptors but {} locations",
                data.nrows(),
                locations.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite descriptor entry {v}")));
        }
        let (w, h) = (image_size.0 as f32, image_size.1 as f32);
        if let Some(loc) = locations
            .iter()
            .find(|[x, y]| !(*x >= 0.0 && *x <= w && *y >= 0.0 && *y <= h))
        {
            return Err(Error::InvalidInput(format!(
                "location ({}, {}) outside {}x{} image",
                loc[0], loc[1], image_size.0, image_size.1
            )));
        }
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
            locations,
            image_size,
        })
    }

    pub fn empty(dim: usize, image_size: (u32, u32)) -> Self {
        Self {
            data: Array2::zeros((0, dim)),
            locations: Vec::new(),
            image_size,
        }
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn descriptor(&self, m: usize) -> ArrayView1<'_, f32> {
        self.data.row(m)
    }

    pub fn descriptor_f64(&self, m: usize) -> Vec<f64> {
        self.data.row(m).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn locations(&self) -> &[[f32; 2]] {
        &self.locations
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(DESCRIPTOR_MAGIC);
        w.put_u64(self.len() as u64);
        w.put_u32(self.dim() as u32);
        w.put_u32(self.image_size.0);
        w.put_u32(self.image_size.1);
        for &v in self.data.iter() {
            w.put_f32(v);
        }
        for &[x, y] in &self.locations {
            w.put_f32(x);
            w.put_f32(y);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::with_header(bytes, DESCRIPTOR_MAGIC)?;
        let m = format::to_usize(r.u64()?, "descriptor count")?;
        let l = r.u32()? as usize;
        let width = r.u32()?;
        let height = r.u32()?;
        let len = m
            .checked_mul(l)
            .ok_or_else(|| Error::Format("descriptor matrix too large".into()))?;
        let data = r.f32_vec(len)?;
        let flat = r.f32_vec(m.saturating_mul(2))?;
        r.finish()?;
        let data = Array2::from_shape_vec((m, l), data)
            .map_err(|e| Error::Format(format!("dimension mismatch: {e}")))?;
        let locations = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Self::new(data, locations, (width, height)).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&format::read_file(path)?).map_err(|e| e.in_file(path))
    }
}

pub fn save_descriptors(set: &DescriptorSet, path: &Path) -> Result<()> {
    set.save(path)
}

pub fn load_descriptors(path: &Path) -> Result<DescriptorSet> {
    DescriptorSet::load(path)
}

/// Number of patch positions along one axis.
pub fn grid_positions(extent: usize, patch: usize, step: usize) -> usize {
    if extent < patch {
        0
    } else {
        (extent - patch) / step + 1
    }
}

/// Per-pixel gradient magnitude and orientation bin.
fn gradient_field(img: &GrayImage) -> (Vec<f64>, Vec<u8>) {
    let (w, h) = (img.width, img.height);
    let mut mag = vec![0.0; w * h];
    let mut bin = vec![0u8; w * h];
    let bin_width = 2.0 * PI / ORIENTATION_BINS as f64;
    for y in 0..h {
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = 0.5 * (img.at(xr, y) - img.at(xl, y));
            let gy = 0.5 * (img.at(x, yd) - img.at(x, yu));
            let m = gx.hypot(gy);
            if m == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += 2.0 * PI;
            }
            let b = ((theta / bin_width) as usize).min(ORIENTATION_BINS - 1);
            mag[y * w + x] = m;
            bin[y * w + x] = b as u8;
        }
    }
    (mag, bin)
}

fn normalize_clamped(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    v.iter_mut().for_each(|x| *x = (*x / norm).min(CLAMP));
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Extracts one 128-dim descriptor per `patch`×`patch` window on a regular
/// grid with stride `step`, in row-major order of patch positions.
pub fn extract_dense(image: &GrayImage, patch: usize, step: usize) -> Result<DescriptorSet> {
    if patch < 8 {
        return Err(Error::InvalidArgument(format!("patch size {patch} < 8")));
    }
    if step < 1 {
        return Err(Error::InvalidArgument("step must be at least 1".into()));
    }
    if let Some(v) = image.pixels.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite pixel {v}")));
    }
    if let Some(v) = image.pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidInput(format!("pixel {v} outside [0, 1]")));
    }
    let nx = grid_positions(image.width, patch, step);
    let ny = grid_positions(image.height, patch, step);
    if nx == 0 || ny == 0 {
        return Err(Error::EmptySet(format!(
            "{}x{} image is smaller than one {patch}x{patch} patch",
            image.width, image.height
        )));
    }

    let (mag, bin) = gradient_field(image);
    let mut data = Array2::<f32>::zeros((nx * ny, DESCRIPTOR_DIM));
    let mut locations = Vec::with_capacity(nx * ny);
    let mut hist = vec![0.0f64; DESCRIPTOR_DIM];
    for (row, (gy, gx)) in (0..ny)
        .flat_map(|gy| (0..nx).map(move |gx| (gy, gx)))
        .enumerate()
    {
        let (px, py) = (gx * step, gy * step);
        hist.iter_mut().for_each(|h| *h = 0.0);
        for dy in 0..patch {
            let cy = dy * CELLS_PER_SIDE / patch;
            for dx in 0..patch {
                let idx = (py + dy) * image.width + px + dx;
                let m = mag[idx];
                if m == 0.0 {
                    continue;
                }
                let cx = dx * CELLS_PER_SIDE / patch;
                hist[(cy * CELLS_PER_SIDE + cx) * ORIENTATION_BINS + bin[idx] as usize] += m;
            }
        }
        normalize_clamped(&mut hist);
        data.row_mut(row)
            .iter_mut()
            .zip(&hist)
            .for_each(|(d, &h)| *d = h as f32);
        let half = patch as f64 / 2.0;
        locations.push([(px as f64 + half) as f32, (py as f64 + half) as f32]);
    }
    DescriptorSet::new(data, locations, (image.width as u32, image.height as u32))
}
