use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{io_err, DataError, Result};
use crate::{IMAGE_PIXELS, IMAGE_SIDE, NUM_CLASSES};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Standard file names `(images, labels)` of each split inside a data directory.
pub const SPLIT_FILES: [(Split, &str, &str); 2] = [
    (Split::Train, "train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
    (Split::Test, "t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"),
];

/// 28×28 grayscale images with class labels in `0..10`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxDataset {
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl IdxDataset {
    pub fn new(images: Vec<u8>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.len() != labels.len() * IMAGE_PIXELS {
            return Err(DataError::CountMismatch {
                images: images.len() / IMAGE_PIXELS,
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(DataError::Invalid(format!("label {bad} is not a class id")));
        }
        Ok(Self { images, labels, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
    }

    /// First `n` examples (all of them if `n` exceeds the size).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images[..n * IMAGE_PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut images = Vec::with_capacity(indices.len() * IMAGE_PIXELS);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Self {
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(io_err(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io_err(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(DataError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.bytes.len(),
                needed: n - (self.bytes.len() - self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(DataError::Trailing {
                path: self.path.to_path_buf(),
                offset: self.pos,
                trailing: self.bytes.len() - self.pos,
            });
        }
        Ok(())
    }
}

fn parse_images(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let mut c = Cursor { bytes, pos: 0, path };
    let magic = c.u32()?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::WrongMagic {
            path: path.to_path_buf(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let n = c.u32()?;
    let (rows, cols) = (c.u32()?, c.u32()?);
    if rows as usize != IMAGE_SIDE || cols as usize != IMAGE_SIDE {
        return Err(DataError::BadDimensions {
            path: path.to_path_buf(),
            offset: 8,
            dims: vec![n, rows, cols],
        });
    }
    let data = c.take(n as usize * IMAGE_PIXELS)?.to_vec();
    c.finish()?;
    Ok(data)
}

fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let mut c = Cursor { bytes, pos: 0, path };
    let magic = c.u32()?;
    if magic != LABEL_MAGIC {
        return Err(DataError::WrongMagic {
            path: path.to_path_buf(),
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let n = c.u32()? as usize;
    let data = c.take(n)?.to_vec();
    c.finish()?;
    if let Some(i) = data.iter().position(|&l| l as usize >= NUM_CLASSES) {
        return Err(DataError::BadLabel {
            path: path.to_path_buf(),
            offset: 8 + i,
            value: data[i],
        });
    }
    Ok(data)
}

/// Reads an image file and a label file, each optionally gzip-compressed.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<IdxDataset> {
    let images = parse_images(&read_maybe_gz(images_path)?, images_path)?;
    let labels = parse_labels(&read_maybe_gz(labels_path)?, labels_path)?;
    IdxDataset::new(images, labels, split)
}

/// Loads a split from a data directory holding the standard file names.
pub fn load_split(dir: &Path, split: Split) -> Result<IdxDataset> {
    let (_, img, lab) = SPLIT_FILES.iter().find(|(s, _, _)| *s == split).unwrap();
    let (ip, lp): (PathBuf, PathBuf) = (dir.join(img), dir.join(lab));
    load_idx(&ip, &lp, split)
}

/// Writes the dataset as an IDX pair, gzip-compressed when `gzip` is set.
pub fn write_idx(ds: &IdxDataset, images_path: &Path, labels_path: &Path, gzip: bool) -> Result<()> {
    let n = ds.len() as u32;
    let mut img = Vec::with_capacity(16 + ds.images.len());
    for v in [IMAGE_MAGIC, n, IMAGE_SIDE as u32, IMAGE_SIDE as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(&ds.images);
    let mut lab = Vec::with_capacity(8 + ds.labels.len());
    for v in [LABEL_MAGIC, n] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(&ds.labels);
    for (bytes, path) in [(img, images_path), (lab, labels_path)] {
        let out = if gzip {
            let mut enc = GzEncoder::new(Vec::new(), Compression::default());
            enc.write_all(&bytes).map_err(io_err(path))?;
            enc.finish().map_err(io_err(path))?
        } else {
            bytes
        };
        fs::write(path, out).map_err(io_err(path))?;
    }
    Ok(())
}
