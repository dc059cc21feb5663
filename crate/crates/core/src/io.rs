//! PNG/PGM helpers with path-carrying errors.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, RgbImage};

use crate::error::CoreError;

pub type IdImage = ImageBuffer<Luma<u16>, Vec<u16>>;

fn ensure_parent(path: &Path) -> Result<(), CoreError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
        }
    }
    Ok(())
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> CoreError + '_ {
    move |source| CoreError::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, CoreError> {
    Ok(image::open(path).map_err(image_err(path))?.to_rgb8())
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<(), CoreError> {
    ensure_parent(path)?;
    img.save(path).map_err(image_err(path))
}

pub fn load_gray(path: &Path) -> Result<GrayImage, CoreError> {
    Ok(image::open(path).map_err(image_err(path))?.to_luma8())
}

pub fn save_gray(img: &GrayImage, path: &Path) -> Result<(), CoreError> {
    ensure_parent(path)?;
    img.save(path).map_err(image_err(path))
}

pub fn load_ids(path: &Path) -> Result<IdImage, CoreError> {
    Ok(image::open(path).map_err(image_err(path))?.to_luma16())
}

pub fn save_ids(img: &IdImage, path: &Path) -> Result<(), CoreError> {
    ensure_parent(path)?;
    img.save(path).map_err(image_err(path))
}

/// Writes a binary 16-bit PGM (`P5`, maxval 65535).
pub fn save_pgm16(width: u32, height: u32, data: &[u16], path: &Path) -> Result<(), CoreError> {
    assert_eq!(data.len(), width as usize * height as usize);
    ensure_parent(path)?;
    let mut bytes = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for v in data {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| CoreError::io(path, e))
}

/// Reads a binary 16-bit PGM written by [`save_pgm16`] (or any `P5` file
/// with maxval > 255).
pub fn load_pgm16(path: &Path) -> Result<(u32, u32, Vec<u16>), CoreError> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let parse_err = |msg: &str| CoreError::Parse {
        path: path.to_path_buf(),
        field: "header".into(),
        message: msg.into(),
    };
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        let mut line = String::new();
        if reader.read_line(&mut line).map_err(|e| CoreError::io(path, e))? == 0 {
            return Err(parse_err("truncated header"));
        }
        let line = line.split('#').next().unwrap_or("");
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    if tokens[0] != "P5" {
        return Err(parse_err("not a binary PGM"));
    }
    let width: u32 = tokens[1].parse().map_err(|_| parse_err("bad width"))?;
    let height: u32 = tokens[2].parse().map_err(|_| parse_err("bad height"))?;
    let maxval: u32 = tokens[3].parse().map_err(|_| parse_err("bad maxval"))?;
    if maxval < 256 {
        return Err(parse_err("expected 16-bit samples"));
    }
    let mut raw = vec![0u8; width as usize * height as usize * 2];
    reader
        .read_exact(&mut raw)
        .map_err(|e| CoreError::io(path, e))?;
    let data = raw
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok((width, height, data))
}
