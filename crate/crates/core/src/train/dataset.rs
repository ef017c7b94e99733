//! Training-data plumbing: grid-cropped sample store, manifest
//! persistence, and random patch/QF batch synthesis.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{luminance_f64, ColorSpace, ImageBuffer};
use crate::jpeg::{build_qmap, compress_simulate, stack_image_and_qmap, Subsampling};
use crate::tensor::Tensor;

/// One grid crop of a source image, as persisted in the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CropRef {
    pub path: PathBuf,
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

/// In-memory dataset: source images plus the deterministic grid crops
/// cut from them.
pub struct SampleStore {
    images: Vec<ImageBuffer>,
    crops: Vec<(usize, usize, usize)>, // (image index, x, y)
    paths: Vec<PathBuf>,
    crop_size: usize,
    validation_every: Option<usize>,
}

impl SampleStore {
    pub fn crop_size(&self) -> usize {
        self.crop_size
    }

    pub fn len(&self) -> usize {
        self.crops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }

    pub fn source_paths(&self) -> &[PathBuf] {
        &self.paths
    }

    pub fn crop_image(&self, index: usize) -> Result<ImageBuffer> {
        let (img, x, y) = self.crops[index];
        self.images[img].crop(x, y, self.crop_size, self.crop_size)
    }

    fn is_validation(&self, index: usize) -> bool {
        match self.validation_every {
            Some(every) => index % every == 0,
            None => false,
        }
    }

    pub fn training_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_validation(i)).collect()
    }

    pub fn validation_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_validation(i)).collect()
    }

    /// Line-delimited JSON, one crop per line.
    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for &(img, x, y) in &self.crops {
            let entry = CropRef {
                path: self.paths[img].clone(),
                x,
                y,
                size: self.crop_size,
            };
            let line = serde_json::to_string(&entry)
                .map_err(|e| Error::Dataset(format!("manifest serialization: {}", e)))?;
            let _ = writeln!(out, "{}", line);
        }
        std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
    }

    /// The training manifest must never overlap the evaluation set.
    pub fn assert_disjoint_from(&self, other_paths: &[PathBuf]) -> Result<()> {
        for p in &self.paths {
            if other_paths.contains(p) {
                return Err(Error::Dataset(format!(
                    "training image {} also appears in the evaluation set",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

fn convert_mode(img: ImageBuffer, color: bool) -> Result<ImageBuffer> {
    match (img.is_gray(), color) {
        (false, true) | (true, false) => Ok(img),
        (true, true) => {
            // replicate gray into RGB
            let data = img.data().iter().flat_map(|&v| [v, v, v]).collect();
            ImageBuffer::new(img.width(), img.height(), ColorSpace::Rgb, data)
        }
        (false, false) => {
            let luma = luminance_f64(&img);
            ImageBuffer::from_planes_f64(img.width(), img.height(), ColorSpace::Gray, &[luma])
        }
    }
}

/// Scans `dir` for lossless images, converts them to the requested
/// mode, and cuts the deterministic crop grid. Undersized images are
/// skipped with a warning on stderr.
pub fn ingest_dataset(
    dir: impl AsRef<Path>,
    crop_size: usize,
    stride: usize,
    color: bool,
    validation_fraction: f64,
) -> Result<SampleStore> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                Some("png") | Some("ppm") | Some("pgm") | Some("pnm")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("no lossless images under {}", dir.display())));
    }

    let mut images = Vec::new();
    let mut paths = Vec::new();
    let mut crops = Vec::new();
    for path in files {
        let img = convert_mode(ImageBuffer::load(&path)?, color)?;
        if img.width() < crop_size || img.height() < crop_size {
            eprintln!(
                "warning: skipping undersized image {} ({}x{}, need {}x{})",
                path.display(),
                img.width(),
                img.height(),
                crop_size,
                crop_size
            );
            continue;
        }
        let idx = images.len();
        for y in (0..=img.height() - crop_size).step_by(stride) {
            for x in (0..=img.width() - crop_size).step_by(stride) {
                crops.push((idx, x, y));
            }
        }
        images.push(img);
        paths.push(path);
    }
    if crops.is_empty() {
        return Err(Error::Dataset("every image was undersized".into()));
    }
    let validation_every = if validation_fraction > 0.0 {
        Some(((1.0 / validation_fraction).round() as usize).max(2))
    } else {
        None
    };
    Ok(SampleStore { images, crops, paths, crop_size, validation_every })
}

/// One training batch: network input (degraded image + normalized
/// quantization map) and the clean target, both (B, C, H, W) in [0,1].
pub struct Batch {
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
    pub qfs: Vec<u8>,
}

/// Draws `batch` random (crop, position, QF) triples and degrades them
/// on the fly. Draw order is fixed, so a seeded RNG reproduces the
/// batch bit-exactly.
pub fn sample_batch(
    store: &SampleStore,
    indices: &[usize],
    patch_size: usize,
    batch: usize,
    qf_range: (u8, u8),
    subsampling: Subsampling,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if indices.is_empty() {
        return Err(Error::Dataset("empty sample store".into()));
    }
    if patch_size > store.crop_size() {
        return Err(Error::Dataset(format!(
            "patch size {} exceeds crop size {}",
            patch_size,
            store.crop_size()
        )));
    }
    let mut inputs = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    let mut qfs = Vec::with_capacity(batch);
    for _ in 0..batch {
        let crop_idx = indices[rng.random_range(0..indices.len())];
        let max_off = store.crop_size() - patch_size;
        let px = if max_off == 0 { 0 } else { rng.random_range(0..=max_off) };
        let py = if max_off == 0 { 0 } else { rng.random_range(0..=max_off) };
        let qf = rng.random_range(qf_range.0..=qf_range.1);

        let crop = store.crop_image(crop_idx)?;
        let clean = crop.crop(px, py, patch_size, patch_size)?;
        let (degraded, luma, chroma) = compress_simulate(&clean, qf, subsampling)?;
        let chroma_ref = if clean.is_gray() { None } else { Some(&chroma) };
        let qmap = build_qmap(patch_size, patch_size, &luma, chroma_ref)?;
        inputs.push(stack_image_and_qmap::<f32>(&degraded, &qmap)?);
        targets.push(clean.to_tensor::<f32>());
        qfs.push(qf);
    }

    Ok(Batch {
        input: concat_batch(&inputs)?,
        target: concat_batch(&targets)?,
        qfs,
    })
}

fn concat_batch(samples: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let [_, c, h, w] = samples[0].dims4();
    let mut data = Vec::with_capacity(samples.len() * c * h * w);
    for s in samples {
        if s.dims4() != [1, c, h, w] {
            return Err(Error::shape("concat_batch", "inconsistent sample shapes"));
        }
        data.extend_from_slice(s.data());
    }
    Tensor::new(&[samples.len(), c, h, w], data)
}
