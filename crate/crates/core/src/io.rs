//! Lossless image files and the on-disk dataset layout.
//!
//! A dataset directory looks like
//!
//! ```text
//! dataset/
//!   classes.json          {"classes": [...], "unlabeled": 255}
//!   images/<stem>.png     8-bit RGB
//!   layouts/<stem>.png    8-bit single channel (gray or indexed), one class index per pixel
//!   depth/<stem>.png      optional, 16-bit gray, 0 = invalid
//! ```
//!
//! Source ids are positions in the lexicographically sorted stem list.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Grid, Rgb, Rgb8};
use crate::layout::{ClassTable, SemanticLayout};

pub fn read_rgb(path: &Path) -> Result<Grid<Rgb8>> {
    let img = image::open(path).map_err(|e| Error::format(path, e))?.into_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    Ok(Grid::from_vec(w as usize, h as usize, data))
}

pub fn write_rgb(path: &Path, grid: &Grid<Rgb8>) -> Result<()> {
    let raw: Vec<u8> = grid.as_slice().iter().flatten().copied().collect();
    write_png(path, grid.width(), grid.height(), png::ColorType::Rgb, None, &raw)
}

/// Reads an 8-bit single-channel PNG (grayscale or indexed) without palette expansion.
pub fn read_indexed(path: &Path) -> Result<Grid<u8>> {
    let (info, buf) = read_png_raw(path)?;
    if info.bit_depth != png::BitDepth::Eight
        || !matches!(info.color_type, png::ColorType::Grayscale | png::ColorType::Indexed)
    {
        return Err(Error::format(
            path,
            format!(
                "expected an 8-bit single-channel image, found {:?} at {:?}",
                info.color_type, info.bit_depth
            ),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h);
    for row in buf.chunks_exact(info.line_size).take(h) {
        data.extend_from_slice(&row[..w]);
    }
    Ok(Grid::from_vec(w, h, data))
}

/// Writes a single-channel 8-bit PNG. With a palette the file is indexed, otherwise gray.
pub fn write_indexed(path: &Path, grid: &Grid<u8>, palette: Option<&[Rgb8]>) -> Result<()> {
    match palette {
        Some(pal) => {
            let flat: Vec<u8> = pal.iter().flatten().copied().collect();
            write_png(path, grid.width(), grid.height(), png::ColorType::Indexed, Some(flat), grid.as_slice())
        }
        None => write_png(path, grid.width(), grid.height(), png::ColorType::Grayscale, None, grid.as_slice()),
    }
}

/// Reads a depth map: 8- or 16-bit gray, zero marks invalid pixels.
pub fn read_depth(path: &Path) -> Result<Grid<Option<f64>>> {
    let (info, buf) = read_png_raw(path)?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::format(path, "depth maps must be grayscale"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h);
    for row in buf.chunks_exact(info.line_size).take(h) {
        match info.bit_depth {
            png::BitDepth::Eight => data.extend(row[..w].iter().map(|&v| (v > 0).then_some(v as f64))),
            png::BitDepth::Sixteen => data.extend(row[..2 * w].chunks_exact(2).map(|b| {
                let v = u16::from_be_bytes([b[0], b[1]]);
                (v > 0).then_some(v as f64)
            })),
            d => return Err(Error::format(path, format!("unsupported depth bit depth {d:?}"))),
        }
    }
    Ok(Grid::from_vec(w, h, data))
}

/// Writes depth as 16-bit gray, `None` as zero. Values are rounded and saturated.
pub fn write_depth(path: &Path, depth: &Grid<Option<f64>>) -> Result<()> {
    let raw: Vec<u8> = depth
        .as_slice()
        .iter()
        .flat_map(|d| {
            let v = d.map_or(0, |v| v.round().clamp(1.0, 65535.0) as u16);
            v.to_be_bytes()
        })
        .collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, depth.width() as u32, depth.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc.write_header().map_err(|e| Error::format(path, e))?;
        writer.write_image_data(&raw).map_err(|e| Error::format(path, e))?;
        writer.finish().map_err(|e| Error::format(path, e))?;
    }
    write_bytes(path, &out)
}

fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map_err(|e| Error::io(path, e))
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    palette: Option<Vec<u8>>,
    raw: &[u8],
) -> Result<()> {
    let bytes = encode_png(width, height, color, palette, raw).map_err(|e| Error::format(path, e))?;
    write_bytes(path, &bytes)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    palette: Option<Vec<u8>>,
    raw: &[u8],
) -> std::result::Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        if let Some(pal) = palette {
            enc.set_palette(pal);
        }
        let mut writer = enc.write_header()?;
        writer.write_image_data(raw)?;
        writer.finish()?;
    }
    Ok(out)
}

/// PNG bytes of an RGB grid.
pub(crate) fn encode_rgb(grid: &Grid<Rgb8>) -> Vec<u8> {
    let raw: Vec<u8> = grid.as_slice().iter().flatten().copied().collect();
    encode_png(grid.width(), grid.height(), png::ColorType::Rgb, None, &raw).expect("in-memory PNG encode")
}

/// PNG bytes of an 8-bit gray grid.
pub(crate) fn encode_gray(grid: &Grid<u8>) -> Vec<u8> {
    encode_png(grid.width(), grid.height(), png::ColorType::Grayscale, None, grid.as_slice())
        .expect("in-memory PNG encode")
}

/// Decodes an 8-bit PNG of exactly `channels` channels from memory.
pub(crate) fn decode_u8(bytes: &[u8], channels: usize) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader.output_buffer_size().ok_or("image too large")?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let found = match info.color_type {
        png::ColorType::Grayscale | png::ColorType::Indexed => 1,
        png::ColorType::Rgb => 3,
        other => return Err(format!("unexpected color type {other:?}")),
    };
    if found != channels || info.bit_depth != png::BitDepth::Eight {
        return Err(format!("expected {channels} 8-bit channel(s)"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h * channels);
    for row in buf.chunks_exact(info.line_size).take(h) {
        data.extend_from_slice(&row[..w * channels]);
    }
    Ok((w, h, data))
}

fn read_png_raw(path: &Path) -> Result<(png::OutputInfo, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e))?;
    Ok((info, buf))
}

/// Converts a `[0, 1]` float buffer to 8 bits with rounding.
pub fn to_rgb8(grid: &Grid<Rgb>) -> Grid<Rgb8> {
    grid.map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
}

pub fn to_rgb_f64(grid: &Grid<Rgb8>) -> Grid<Rgb> {
    grid.map(|p| p.map(|c| c as f64 / 255.0))
}

/// A fixed, well-separated display palette for class indices.
pub fn class_palette(n: usize) -> Vec<Rgb8> {
    (0..256)
        .map(|i| {
            if i >= n {
                return [0, 0, 0];
            }
            // Golden-ratio hue walk at fixed saturation/value.
            let h = (i as f64 * 0.618_033_988_749_895).fract() * 6.0;
            let f = h.fract();
            let (v, p, q, t) = (0.9, 0.25, 0.9 - 0.65 * f, 0.25 + 0.65 * f);
            let (r, g, b) = match h as u32 {
                0 => (v, t, p),
                1 => (q, v, p),
                2 => (p, v, t),
                3 => (p, q, v),
                4 => (t, p, v),
                _ => (v, p, q),
            };
            [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
        })
        .collect()
}

pub fn read_layout(path: &Path, table: &ClassTable) -> Result<SemanticLayout> {
    let labels = read_indexed(path)?;
    SemanticLayout::new(table.clone(), labels).map_err(|e| Error::format(path, e))
}

pub fn write_layout(path: &Path, layout: &SemanticLayout) -> Result<()> {
    write_indexed(path, &layout.labels, Some(&class_palette(layout.table.len())))
}

pub fn read_class_table(path: &Path) -> Result<ClassTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: ClassTable = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
    table.validate().map_err(|e| Error::format(path, e))?;
    Ok(table)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    use std::io::Write;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// One entry of an on-disk dataset.
#[derive(Clone, Debug)]
pub struct DatasetItem {
    pub stem: String,
    pub source_id: u32,
    pub image: Option<PathBuf>,
    pub layout: PathBuf,
    pub depth: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub table: ClassTable,
    pub items: Vec<DatasetItem>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let table = read_class_table(&root.join("classes.json"))?;
        let layouts = root.join("layouts");
        let mut stems: Vec<String> = fs::read_dir(&layouts)
            .map_err(|e| Error::io(&layouts, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "png"))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        stems.sort();
        let items = stems
            .into_iter()
            .enumerate()
            .map(|(i, stem)| {
                let file = format!("{stem}.png");
                let image = root.join("images").join(&file);
                let depth = root.join("depth").join(&file);
                DatasetItem {
                    source_id: i as u32,
                    image: image.exists().then_some(image),
                    depth: depth.exists().then_some(depth),
                    layout: layouts.join(&file),
                    stem,
                }
            })
            .collect();
        Ok(Self {
            root: root.to_path_buf(),
            table,
            items,
        })
    }

    pub fn load_layout(&self, item: &DatasetItem) -> Result<SemanticLayout> {
        read_layout(&item.layout, &self.table)
    }

    pub fn load_image(&self, item: &DatasetItem) -> Result<Grid<Rgb8>> {
        let path = item.image.as_ref().ok_or_else(|| Error::Io {
            path: self.root.join("images").join(format!("{}.png", item.stem)),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing training image"),
        })?;
        read_rgb(path)
    }
}

/// Writes a dataset directory in the layout [`Dataset::open`] reads.
pub fn write_dataset(
    root: &Path,
    table: &ClassTable,
    samples: &[(String, Grid<Rgb8>, SemanticLayout, Option<Grid<Option<f64>>>)],
) -> Result<()> {
    write_json(&root.join("classes.json"), table)?;
    for (stem, image, layout, depth) in samples {
        write_rgb(&root.join("images").join(format!("{stem}.png")), image)?;
        write_layout(&root.join("layouts").join(format!("{stem}.png")), layout)?;
        if let Some(d) = depth {
            write_depth(&root.join("depth").join(format!("{stem}.png")), d)?;
        }
    }
    Ok(())
}
