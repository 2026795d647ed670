//! Mask PNGs, PFM/TIFF depth maps and the on-disk dataset layout.
//!
//! A dataset is a directory with one subdirectory per mirror:
//!
//! ```text
//! <root>/<mirror_id>/depth.pfm
//! <root>/<mirror_id>/gt.png
//! <root>/<mirror_id>/foreground.png
//! <root>/<mirror_id>/pred_init.png
//! ```
//!
//! `depth.tif` / `depth.tiff` are accepted in place of `depth.pfm`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Cursor, Read, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, DepthMap, Grid};

fn format_err(path: &Path, reason: impl ToString) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

fn gray_to_mask(img: &GrayImage) -> BinaryMask {
    let (w, h) = img.dimensions();
    Grid::from_vec(h as usize, w as usize, img.as_raw().iter().map(|&v| v != 0).collect())
        .expect("image buffer matches its dimensions")
}

fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    let data = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, data)
        .expect("mask buffer matches its dimensions")
}

/// Reads a mask image; any nonzero luma is foreground.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path).map_err(|e| format_err(path, e))?;
    Ok(gray_to_mask(&img.to_luma8()))
}

/// Writes an 8-bit grayscale PNG with 0 / 255.
pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    mask_to_gray(mask)
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| format_err(path, e))
}

pub fn encode_mask_png(mask: &BinaryMask) -> Vec<u8> {
    encode_gray_png(&mask_to_gray(mask))
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| format_err(Path::new("<memory>"), e))?;
    Ok(gray_to_mask(&img.to_luma8()))
}

/// PNG-encodes an 8-bit grayscale raster.
pub fn encode_gray8_png(grid: &Grid<u8>) -> Vec<u8> {
    let img = GrayImage::from_raw(grid.width() as u32, grid.height() as u32, grid.as_slice().to_vec())
        .expect("buffer matches dimensions");
    encode_gray_png(&img)
}

pub fn decode_gray8_png(bytes: &[u8]) -> Result<Grid<u8>> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| format_err(Path::new("<memory>"), e))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Grid::from_vec(h as usize, w as usize, img.into_raw())
}

fn encode_gray_png(img: &GrayImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding cannot fail");
    out.into_inner()
}

/// Display rendering of a depth map: linear stretch of the 1st..99th
/// percentile range onto 0..=255.
pub fn depth_preview(depth: &DepthMap) -> Grid<u8> {
    if depth.is_empty() {
        return Grid::filled(depth.height(), depth.width(), 0);
    }
    let mut sorted: Vec<f32> = depth.as_slice().to_vec();
    sorted.sort_by(f32::total_cmp);
    let pick = |q: f64| sorted[((sorted.len() - 1) as f64 * q).round() as usize];
    let (lo, hi) = (pick(0.01), pick(0.99));
    let span = if hi > lo { hi - lo } else { 1.0 };
    depth.map(|v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// Reads a single-channel Portable FloatMap (`Pf`).
///
/// PFM stores rows bottom-to-top; the returned map is top-to-bottom.
pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut tokens = Vec::new();
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(format_err(path, "truncated header"));
        }
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    if tokens.len() != 4 {
        return Err(format_err(path, "malformed header"));
    }
    match tokens[0].as_str() {
        "Pf" => {}
        "PF" => return Err(format_err(path, "three-channel PFM not supported")),
        other => return Err(format_err(path, format!("bad magic {other:?}"))),
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format_err(path, format!("bad dimension {s:?}")));
    let width = parse(&tokens[1])?;
    let height = parse(&tokens[2])?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| format_err(path, "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(path, "bad scale"));
    }
    let little = scale < 0.0;
    let mut raw = vec![0u8; width * height * 4];
    reader
        .read_exact(&mut raw)
        .map_err(|_| format_err(path, "truncated pixel data"))?;
    let mut data = vec![0f32; width * height];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        let (file_row, col) = (i / width, i % width);
        data[(height - 1 - file_row) * width + col] = v;
    }
    DepthMap::new(Grid::from_vec(height, width, data)?).map_err(|e| format_err(path, e))
}

/// Writes a little-endian single-channel PFM.
pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "Pf\n{} {}\n-1.0\n", depth.width(), depth.height())?;
    let w = depth.width();
    for row in (0..depth.height()).rev() {
        for &v in &depth.as_slice()[row * w..(row + 1) * w] {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a single-channel 32-bit float TIFF.
pub fn read_tiff(path: &Path) -> Result<DepthMap> {
    use tiff::decoder::{Decoder, DecodingResult};
    let mut decoder = Decoder::new(BufReader::new(File::open(path)?)).map_err(|e| format_err(path, e))?;
    let (w, h) = decoder.dimensions().map_err(|e| format_err(path, e))?;
    match decoder.colortype().map_err(|e| format_err(path, e))? {
        tiff::ColorType::Gray(32) => {}
        other => return Err(format_err(path, format!("expected 32-bit gray, got {other:?}"))),
    }
    match decoder.read_image().map_err(|e| format_err(path, e))? {
        DecodingResult::F32(data) => {
            DepthMap::new(Grid::from_vec(h as usize, w as usize, data)?).map_err(|e| format_err(path, e))
        }
        _ => Err(format_err(path, "expected float samples")),
    }
}

pub fn write_tiff(path: &Path, depth: &DepthMap) -> Result<()> {
    use tiff::encoder::{colortype::Gray32Float, TiffEncoder};
    let file = BufWriter::new(File::create(path)?);
    let mut encoder = TiffEncoder::new(file).map_err(|e| format_err(path, e))?;
    encoder
        .write_image::<Gray32Float>(depth.width() as u32, depth.height() as u32, depth.as_slice())
        .map_err(|e| format_err(path, e))
}

/// Dispatches on extension: `.pfm`, `.tif`, `.tiff`.
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    match extension(path).as_deref() {
        Some("pfm") => read_pfm(path),
        Some("tif" | "tiff") => read_tiff(path),
        _ => Err(format_err(path, "unknown depth format")),
    }
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    match extension(path).as_deref() {
        Some("pfm") => write_pfm(path, depth),
        Some("tif" | "tiff") => write_tiff(path, depth),
        _ => Err(format_err(path, "unknown depth format")),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

/// One mirror of a dataset, fully loaded.
#[derive(Clone, Debug)]
pub struct Mirror {
    pub id: String,
    pub depth: DepthMap,
    pub gt: Option<BinaryMask>,
    pub foreground: BinaryMask,
    pub pred_init: BinaryMask,
}

impl Mirror {
    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }
}

pub fn mirror_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn depth_file(dir: &Path) -> Result<PathBuf> {
    ["depth.pfm", "depth.tif", "depth.tiff"]
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| format_err(dir, "no depth.pfm or depth.tif"))
}

/// Loads one mirror directory. `gt.png` is optional (live annotation).
pub fn load_mirror(dir: &Path) -> Result<Mirror> {
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let depth = read_depth(&depth_file(dir)?)?;
    let gt_path = dir.join("gt.png");
    let gt = if gt_path.is_file() {
        Some(read_mask(&gt_path)?)
    } else {
        None
    };
    let foreground = read_mask(&dir.join("foreground.png"))?;
    let pred_init = read_mask(&dir.join("pred_init.png"))?;
    for (name, m) in [("foreground", &foreground), ("pred_init", &pred_init)]
        .into_iter()
        .chain(gt.as_ref().map(|g| ("gt", g)))
    {
        if m.dims() != depth.dims() {
            return Err(format_err(
                &dir.join(format!("{name}.png")),
                format!("dims {:?} differ from depth {:?}", m.dims(), depth.dims()),
            ));
        }
    }
    Ok(Mirror {
        id,
        depth,
        gt,
        foreground,
        pred_init,
    })
}

/// Ground-truth masks of every mirror, without depth.
pub fn load_gt_masks(root: &Path) -> Result<Vec<BinaryMask>> {
    let mut masks = Vec::new();
    for dir in mirror_dirs(root)? {
        let path = dir.join("gt.png");
        if !path.is_file() {
            return Err(format_err(&path, "missing ground truth"));
        }
        masks.push(read_mask(&path)?);
    }
    if masks.is_empty() {
        return Err(format_err(root, "dataset contains no mirrors"));
    }
    Ok(masks)
}

pub fn load_dataset(root: &Path) -> Result<Vec<Mirror>> {
    let mirrors = mirror_dirs(root)?
        .iter()
        .map(|d| load_mirror(d))
        .collect::<Result<Vec<_>>>()?;
    if mirrors.is_empty() {
        return Err(format_err(root, "dataset contains no mirrors"));
    }
    Ok(mirrors)
}

pub fn save_mirror(root: &Path, mirror: &Mirror) -> Result<PathBuf> {
    let dir = root.join(&mirror.id);
    std::fs::create_dir_all(&dir)?;
    write_pfm(&dir.join("depth.pfm"), &mirror.depth)?;
    if let Some(gt) = &mirror.gt {
        write_mask(&dir.join("gt.png"), gt)?;
    }
    write_mask(&dir.join("foreground.png"), &mirror.foreground)?;
    write_mask(&dir.join("pred_init.png"), &mirror.pred_init)?;
    Ok(dir)
}
