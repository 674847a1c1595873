//! On-disk formats for images and the dataset.
//!
//! Images are binary 8-bit PGM (`P5`). The dataset is `dataset.bin`, the raw
//! little-endian `f64` pixels of every image in order, plus `dataset.json`
//! describing shape, labels and split.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{ShapeDataset, CLASS_NAMES, IMAGE_SIDE, NUM_CLASSES, PIXELS};
use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const DATASET_BIN: &str = "dataset.bin";
pub const DATASET_JSON: &str = "dataset.json";

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.to_u8());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |m: &str| Error::Config(format!("malformed PGM: {m}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ascii"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("only binary P5 is supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
    let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max != 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
    if data.len() != w * h {
        return Err(bad("raster size does not match header"));
    }
    GrayImage::from_u8(w, h, data)
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    std::fs::write(path, encode_pgm(image))?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&std::fs::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub seed: u64,
    pub n_per_class: usize,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn save_dataset(dir: &Path, ds: &ShapeDataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut bin = Vec::with_capacity(ds.len() * PIXELS * 8);
    for img in &ds.images {
        for p in img.pixels() {
            bin.extend_from_slice(&p.to_le_bytes());
        }
    }
    std::fs::write(dir.join(DATASET_BIN), bin)?;
    let meta = DatasetMeta {
        seed: ds.seed,
        n_per_class: ds.n_per_class,
        count: ds.len(),
        width: IMAGE_SIDE,
        height: IMAGE_SIDE,
        class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        class_counts: ds.class_counts().to_vec(),
        labels: ds.labels.clone(),
        train: ds.train.clone(),
        test: ds.test.clone(),
    };
    std::fs::write(dir.join(DATASET_JSON), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<ShapeDataset> {
    let meta_path = dir.join(DATASET_JSON);
    let bin_path = dir.join(DATASET_BIN);
    let missing = |p: &Path, e: std::io::Error| Error::Config(format!("cannot read {}: {e}", p.display()));
    let meta: DatasetMeta =
        serde_json::from_str(&std::fs::read_to_string(&meta_path).map_err(|e| missing(&meta_path, e))?)?;
    let bin = std::fs::read(&bin_path).map_err(|e| missing(&bin_path, e))?;
    if (meta.width, meta.height) != (IMAGE_SIDE, IMAGE_SIDE) {
        return Err(Error::Config(format!("dataset images must be {IMAGE_SIDE}x{IMAGE_SIDE}")));
    }
    if bin.len() != meta.count * PIXELS * 8 || meta.labels.len() != meta.count {
        return Err(Error::Config(format!("{} does not match its sidecar", bin_path.display())));
    }
    let in_range = |v: &[usize], bound: usize| v.iter().all(|&i| i < bound);
    if !in_range(&meta.labels, NUM_CLASSES) || !in_range(&meta.train, meta.count) || !in_range(&meta.test, meta.count) {
        return Err(Error::Config(format!("{} has out-of-range indices", meta_path.display())));
    }
    let images = bin
        .chunks_exact(PIXELS * 8)
        .map(|chunk| {
            let px = chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            GrayImage::new(IMAGE_SIDE, IMAGE_SIDE, px)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShapeDataset {
        images,
        labels: meta.labels,
        seed: meta.seed,
        n_per_class: meta.n_per_class,
        train: meta.train,
        test: meta.test,
    })
}
