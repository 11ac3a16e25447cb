use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::descriptors::{extract_dense, DescriptorSet, GrayImage};
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "pgm", "ppm", "pnm", "pbm", "bmp", "tif", "tiff"];
const DESCRIPTOR_EXTENSION: &str = "nnsc";

#[derive(Debug, Clone)]
pub struct ImageEntry {
    pub path: PathBuf,
    pub label: u32,
    pub descriptors: DescriptorSet,
}

/// Images grouped by class, classes in sorted directory-name order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub images: Vec<ImageEntry>,
}

impl Dataset {
    pub fn class_indices(&self, label: u32) -> Vec<usize> {
        self.images
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn descriptor_dim(&self) -> Option<usize> {
        self.images
            .iter()
            .find(|e| !e.descriptors.is_empty())
            .map(|e| e.descriptors.dim())
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

pub fn is_image_path(path: &Path) -> bool {
    extension(path).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str()))
}

fn is_descriptor_path(path: &Path) -> bool {
    extension(path).is_some_and(|e| e == DESCRIPTOR_EXTENSION)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.retain(|p| {
        !p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'))
    });
    entries.sort();
    Ok(entries)
}

fn load_one(path: &Path, patch: usize, step: usize) -> Result<DescriptorSet> {
    if is_descriptor_path(path) {
        DescriptorSet::load(path)
    } else {
        let img = GrayImage::open(path)?;
        extract_dense(&img, patch, step).map_err(|e| match e {
            Error::EmptySet(msg) | Error::InvalidInput(msg) => {
                Error::InvalidInput(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }
}

/// Reads `<dir>/<class>/<file>` where each file is an image (extracted
/// with `patch`/`step`) or a precomputed `.nnsc` descriptor file.
pub fn load_dataset(dir: &Path, patch: usize, step: usize) -> Result<Dataset> {
    let classes: Vec<PathBuf> = sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    if classes.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "{} has no class subdirectories",
            dir.display()
        )));
    }
    let mut class_names = Vec::with_capacity(classes.len());
    let mut files = Vec::new();
    for (label, class_dir) in classes.iter().enumerate() {
        class_names.push(
            class_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        for f in sorted_entries(class_dir)? {
            if f.is_file() && (is_image_path(&f) || is_descriptor_path(&f)) {
                files.push((f, label as u32));
            }
        }
    }
    let images = files
        .into_par_iter()
        .map(|(path, label)| {
            let descriptors = load_one(&path, patch, step)?;
            Ok(ImageEntry {
                path,
                label,
                descriptors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        class_names,
        images,
    })
}

/// Expands files and directories (recursively, sorted) into descriptor sets.
pub fn load_descriptor_inputs(inputs: &[PathBuf]) -> Result<Vec<(PathBuf, DescriptorSet)>> {
    fn walk(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        if path.is_dir() {
            for entry in sorted_entries(path)? {
                walk(&entry, out)?;
            }
        } else if is_descriptor_path(path) || !path.exists() {
            out.push(path.to_path_buf());
        }
        Ok(())
    }
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            walk(input, &mut files)?;
        } else {
            files.push(input.clone());
        }
    }
    files
        .into_par_iter()
        .map(|p| DescriptorSet::load(&p).map(|d| (p, d)))
        .collect()
}
