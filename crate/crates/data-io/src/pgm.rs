use std::fs;
use std::path::Path;

use crate::error::{io_err, DataError, Result};
use crate::{IMAGE_PIXELS, IMAGE_SIDE};

const SEPARATOR: u8 = 255;

/// `(height, width)` of a grid with 1-pixel separators between cells.
pub fn grid_dimensions(rows: usize, cols: usize) -> (usize, usize) {
    (rows * IMAGE_SIDE + rows.saturating_sub(1), cols * IMAGE_SIDE + cols.saturating_sub(1))
}

/// Writes 28×28 images with intensities in `[0, 1]` as a binary graymap,
/// row-major into a `rows × cols` grid. Intensities are clamped and mapped
/// with `floor(255·v + 0.5)`; unused cells stay black.
pub fn write_image_grid(images: &[Vec<f64>], rows: usize, cols: usize, path: &Path) -> Result<()> {
    if images.is_empty() {
        return Err(DataError::Invalid("no images to write".into()));
    }
    if rows * cols < images.len() {
        return Err(DataError::Invalid(format!("{} images do not fit a {rows}x{cols} grid", images.len())));
    }
    if let Some(bad) = images.iter().find(|im| im.len() != IMAGE_PIXELS) {
        return Err(DataError::Invalid(format!("image with {} pixels", bad.len())));
    }
    let (h, w) = grid_dimensions(rows, cols);
    let mut pix = vec![SEPARATOR; h * w];
    for r in 0..rows {
        for c in 0..cols {
            let im = images.get(r * cols + c);
            for i in 0..IMAGE_SIDE {
                for j in 0..IMAGE_SIDE {
                    let v = im.map_or(0.0, |im| im[i * IMAGE_SIDE + j]);
                    let y = r * (IMAGE_SIDE + 1) + i;
                    let x = c * (IMAGE_SIDE + 1) + j;
                    pix[y * w + x] = (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8;
                }
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pix);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, out).map_err(io_err(path))
}
