//! Binary PPM/PGM dumps of observation tensors for debugging.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use graspq_core::tensornet::Tensor;

use crate::error::{io_err, Result};

fn byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write(path: &Path, header: String, pixels: impl Iterator<Item = u8>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let bytes: Vec<u8> = header.into_bytes().into_iter().chain(pixels).collect();
    w.write_all(&bytes).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// First three channels of a `[C, H, W]` tensor as a binary PPM.
pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    let [c, h, w] = image.shape() else {
        panic!("expected a [C, H, W] image, got {:?}", image.shape());
    };
    assert!(*c >= 3, "PPM needs three channels");
    let plane = h * w;
    let d = image.data();
    let pixels = (0..plane).flat_map(move |i| (0..3).map(move |ch| byte(d[ch * plane + i])));
    write(path, format!("P6\n{w} {h}\n255\n"), pixels)
}

/// Channel `channel` of a `[C, H, W]` tensor as a binary PGM.
pub fn write_pgm(path: &Path, image: &Tensor, channel: usize) -> Result<()> {
    let [_, h, w] = image.shape() else {
        panic!("expected a [C, H, W] image, got {:?}", image.shape());
    };
    let plane = h * w;
    let d = &image.data()[channel * plane..(channel + 1) * plane];
    write(path, format!("P5\n{w} {h}\n255\n"), d.iter().map(|&v| byte(v)))
}
