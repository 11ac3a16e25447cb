//! Synthetic classification data with a known generating dictionary.
//!
//! Each class owns a private set of nonnegative unit-norm atoms. Every
//! descriptor of an image is one atom of the image's class scaled by a factor
//! in `[0.5, 1]` (noiseless, 1-sparse), placed on a regular grid.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codebook::Dictionary;
use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub atoms_per_class: usize,
    pub dim: usize,
    pub images_per_class: usize,
    /// Descriptors per image = `grid × grid`.
    pub grid: usize,
    pub image_size: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            atoms_per_class: 4,
            dim: 16,
            images_per_class: 40,
            grid: 4,
            image_size: 64,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Generating atoms, class `c` owning columns `c·a .. (c+1)·a`.
    pub atoms: Dictionary,
    pub class_names: Vec<String>,
    /// `(label, descriptors)` grouped by class.
    pub images: Vec<(u32, DescriptorSet)>,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.classes < 1 || spec.atoms_per_class < 1 || spec.dim < 1 || spec.grid < 1 {
        return Err(Error::InvalidArgument("synthetic spec sizes must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.classes * spec.atoms_per_class;
    let raw = Array2::from_shape_fn((spec.dim, p), |_| rng.random::<f64>());
    let atoms = Dictionary::normalized(raw)?;

    let cell = spec.image_size as f32 / spec.grid as f32;
    let locations: Vec<[f32; 2]> = (0..spec.grid)
        .flat_map(|r| (0..spec.grid).map(move |c| (r, c)))
        .map(|(r, c)| [(c as f32 + 0.5) * cell, (r as f32 + 0.5) * cell])
        .collect();

    let mut images = Vec::with_capacity(spec.classes * spec.images_per_class);
    for class in 0..spec.classes {
        for _ in 0..spec.images_per_class {
            let n = spec.grid * spec.grid;
            let mut data = Array2::<f32>::zeros((n, spec.dim));
            for m in 0..n {
                let k = class * spec.atoms_per_class + rng.random_range(0..spec.atoms_per_class);
                let scale = rng.random_range(0.5..=1.0);
                data.row_mut(m)
                    .iter_mut()
                    .zip(atoms.atom(k))
                    .for_each(|(d, &a)| *d = (scale * a) as f32);
            }
            let set = DescriptorSet::new(data, locations.clone(), (spec.image_size, spec.image_size))?;
            images.push((class as u32, set));
        }
    }
    Ok(SyntheticData {
        atoms,
        class_names: (0..spec.classes).map(|c| format!("class{c:02}")).collect(),
        images,
    })
}

/// Writes `<dir>/<class>/img_NNNN.nnsc` files readable by `load_dataset`.
pub fn write_dataset(dir: &Path, data: &SyntheticData) -> Result<()> {
    for name in &data.class_names {
        let cdir = dir.join(name);
        fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
    }
    let mut counters = vec![0usize; data.class_names.len()];
    for (label, set) in &data.images {
        let l = *label as usize;
        let path = dir
            .join(&data.class_names[l])
            .join(format!("img_{:04}.nnsc", counters[l]));
        counters[l] += 1;
        set.save(&path)?;
    }
    Ok(())
}
