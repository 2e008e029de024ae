//! Field checkpoints and image files.
//!
//! Checkpoint layout, all little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `P3DF` |
//! | 4 | format version (u32, currently 1) |
//! | 12 | resolution `nx, ny, nz` (u32 each) |
//! | 48 | extent min then max corner (f64 each) |
//! | 4·n | raw density parameters (f32) |
//! | 12·n | raw color parameters (f32, RGB interleaved per node) |
//!
//! with `n = nx·ny·nz` nodes in x-fastest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb as ImgRgb};
use sha2::{Digest, Sha256};

use crate::field::{Extent, VoxelField};
use crate::map::{ColorMap, Map, Mask, ScalarMap};
use crate::{Error, Result, Vec3};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"P3DF";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Refuse headers that would ask for more than this many nodes.
const MAX_NODES: u64 = 1 << 28;

pub fn write_field(field: &VoxelField, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for n in field.resolution() {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    let e = field.extent();
    for v in e.min.iter().chain(e.max.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    for &d in field.density_params() {
        w.write_all(&(d as f32).to_le_bytes())?;
    }
    for c in field.color_params() {
        for &v in c {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn format_err(field: &'static str, detail: impl Into<String>) -> Error {
    Error::Format {
        field,
        detail: detail.into(),
    }
}

fn read_exact<const N: usize>(r: &mut impl Read, field: &'static str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| format_err(field, format!("truncated: {e}")))?;
    Ok(buf)
}

pub fn read_field(mut r: impl Read) -> Result<VoxelField> {
    let magic = read_exact::<4>(&mut r, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(format_err("magic", format!("expected {:?}, found {:?}", CHECKPOINT_MAGIC, magic)));
    }
    let version = u32::from_le_bytes(read_exact(&mut r, "version")?);
    if version != CHECKPOINT_VERSION {
        return Err(format_err("version", format!("unsupported version {version}")));
    }
    let mut res = [0usize; 3];
    for (slot, name) in res.iter_mut().zip(["resolution.x", "resolution.y", "resolution.z"]) {
        let n = u32::from_le_bytes(read_exact(&mut r, name)?);
        if n == 0 {
            return Err(format_err(name, "must be at least 1"));
        }
        *slot = n as usize;
    }
    let nodes = res.iter().map(|&n| n as u64).product::<u64>();
    if nodes > MAX_NODES {
        return Err(format_err("resolution", format!("{nodes} nodes exceeds the supported maximum")));
    }
    let mut corners = [0.0f64; 6];
    for v in corners.iter_mut() {
        *v = f64::from_le_bytes(read_exact(&mut r, "extent")?);
    }
    let extent = Extent::new(
        Vec3::new(corners[0], corners[1], corners[2]),
        Vec3::new(corners[3], corners[4], corners[5]),
    )
    .map_err(|e| format_err("extent", e.to_string()))?;
    let n = nodes as usize;
    let mut density = Vec::with_capacity(n);
    for _ in 0..n {
        density.push(f32::from_le_bytes(read_exact(&mut r, "density")?) as f64);
    }
    let mut color = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c = [0.0; 3];
        for v in c.iter_mut() {
            *v = f32::from_le_bytes(read_exact(&mut r, "color")?) as f64;
        }
        color.push(c);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| format_err("trailer", e.to_string()))? != 0 {
        return Err(format_err("trailer", "unexpected bytes after the color array"));
    }
    let field = VoxelField::from_params(res, extent, density, color)?;
    if !field.is_finite() {
        return Err(format_err("density", "non-finite parameter"));
    }
    Ok(field)
}

pub fn save_field(field: &VoxelField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_field(field, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<VoxelField> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_field(BufReader::new(file))
}

/// SHA-256 of the checkpoint encoding, hex encoded.
pub fn field_hash(field: &VoxelField) -> String {
    let mut bytes = Vec::new();
    write_field(field, &mut bytes).expect("writing to memory");
    hex::encode(Sha256::digest(&bytes))
}

fn to_u8(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

fn save_image<P: image::Pixel<Subpixel = u8> + image::PixelWithColorType>(
    img: ImageBuffer<P, Vec<u8>>,
    path: &Path,
) -> Result<()> {
    img.save(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })
}

/// Writes colors clamped to `[0, 1]`; the format follows the extension
/// (`.png` or `.ppm`).
pub fn write_color_image(map: &ColorMap, path: impl AsRef<Path>) -> Result<()> {
    let img = ImageBuffer::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        let c = map.get(x as usize, y as usize);
        ImgRgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])])
    });
    save_image(img, path.as_ref())
}

/// Writes `value / scale` as gray, clamped; non-finite values are black.
pub fn write_gray_image(map: &ScalarMap, scale: f64, path: impl AsRef<Path>) -> Result<()> {
    let img = ImageBuffer::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        let v = *map.get(x as usize, y as usize);
        Luma([if v.is_finite() { to_u8(v / scale) } else { 0 }])
    });
    save_image(img, path.as_ref())
}

pub fn write_mask_image(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let img = ImageBuffer::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if *mask.get(x as usize, y as usize) { 255u8 } else { 0 }])
    });
    save_image(img, path.as_ref())
}

/// Loads an RGB image with values scaled to `[0, 1]`.
pub fn read_color_image(path: impl AsRef<Path>) -> Result<ColorMap> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Ok(Map::from_fn(w as usize, h as usize, |x, y| {
        let p = img.get_pixel(x as u32, y as u32).0;
        [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
    }))
}

/// Loads an image as a mask: any channel above half intensity is set.
pub fn read_mask_image(path: impl AsRef<Path>) -> Result<Mask> {
    Ok(read_color_image(path)?.map(|c| c.iter().any(|&v| v > 0.5)))
}

/// Loads a grayscale image as a depth map, `value · scale`; black is
/// read as `+inf`.
pub fn read_depth_image(path: impl AsRef<Path>, scale: f64) -> Result<ScalarMap> {
    Ok(read_color_image(path)?.map(|c| if c[0] == 0.0 { f64::INFINITY } else { c[0] * scale }))
}
