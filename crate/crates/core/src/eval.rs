//! Layout agreement and mean power spectra.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Rgb};
use crate::layout::SemanticLayout;

/// Bins below this power are clamped before the logarithm.
pub const POWER_FLOOR: f64 = 1e-12;
pub const DEFAULT_RESOLUTION: (usize, usize) = (256, 256);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutAgreement {
    /// IoU per class name, for classes present in either layout.
    pub per_class_iou: BTreeMap<String, f64>,
    pub mean_iou: f64,
    pub pixel_accuracy: f64,
    /// Pixels labeled in the reference.
    pub labeled_pixels: usize,
}

/// Compares a predicted layout with the reference over the pixels the
/// reference labels. A pixel left unlabeled by the prediction counts as a
/// miss for the reference class.
pub fn layout_agreement(reference: &SemanticLayout, predicted: &SemanticLayout) -> Result<LayoutAgreement> {
    if reference.dims() != predicted.dims() {
        return Err(Error::DimensionMismatch {
            what: "predicted layout",
            expected: reference.dims(),
            found: predicted.dims(),
        });
    }
    if reference.table.classes != predicted.table.classes {
        return Err(Error::ClassTableMismatch("reference vs predicted layout".into()));
    }
    let n = reference.table.len();
    let mut inter = vec![0usize; n];
    let mut in_ref = vec![0usize; n];
    let mut in_pred = vec![0usize; n];
    let (mut total, mut correct) = (0usize, 0usize);
    for (r, p) in reference.labels.as_slice().iter().zip(predicted.labels.as_slice()) {
        if *r == reference.table.unlabeled {
            continue;
        }
        total += 1;
        in_ref[*r as usize] += 1;
        if *p != predicted.table.unlabeled {
            in_pred[*p as usize] += 1;
        }
        if r == p {
            correct += 1;
            inter[*r as usize] += 1;
        }
    }
    let mut per_class_iou = BTreeMap::new();
    for c in 0..n {
        let union = in_ref[c] + in_pred[c] - inter[c];
        if union > 0 {
            per_class_iou.insert(reference.table.classes[c].clone(), inter[c] as f64 / union as f64);
        }
    }
    let mean_iou = if per_class_iou.is_empty() {
        0.0
    } else {
        per_class_iou.values().sum::<f64>() / per_class_iou.len() as f64
    };
    Ok(LayoutAgreement {
        per_class_iou,
        mean_iou,
        pixel_accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        labeled_pixels: total,
    })
}

/// Per-pair agreements plus dataset averages of mean IoU and accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub mean_iou: f64,
    pub pixel_accuracy: f64,
    pub pairs: Vec<(String, LayoutAgreement)>,
}

impl AgreementReport {
    pub fn from_pairs(pairs: Vec<(String, LayoutAgreement)>) -> Self {
        let n = pairs.len().max(1) as f64;
        Self {
            mean_iou: pairs.iter().map(|(_, a)| a.mean_iou).sum::<f64>() / n,
            pixel_accuracy: pairs.iter().map(|(_, a)| a.pixel_accuracy).sum::<f64>() / n,
            pairs,
        }
    }
}

/// `0.299 R + 0.587 G + 0.114 B`, arranged so gray pixels map exactly to
/// their value.
#[inline]
pub fn luminance(p: &Rgb) -> f64 {
    p[1] + 0.299 * (p[0] - p[1]) + 0.114 * (p[2] - p[1])
}

/// Bilinear resize of a single-channel grid; a no-op when the size matches.
pub fn resize(g: &Grid<f64>, resolution: (usize, usize)) -> Grid<f64> {
    let (h, w) = resolution;
    if g.dims() == resolution {
        return g.clone();
    }
    let buf: ImageBuffer<Luma<f32>, Vec<f32>> =
        ImageBuffer::from_vec(g.width() as u32, g.height() as u32, g.as_slice().iter().map(|&v| v as f32).collect())
            .expect("buffer sized from grid");
    let out = imageops::resize(&buf, w as u32, h as u32, FilterType::Triangle);
    Grid::from_vec(w, h, out.into_raw().into_iter().map(f64::from).collect())
}

/// Unnormalized 2D DFT power `|F(u, v)|²`, DC at `(0, 0)`.
pub fn power_spectrum(g: &Grid<f64>) -> Grid<f64> {
    let (w, h) = (g.width(), g.height());
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut data: Vec<Complex<f64>> = g.as_slice().iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
    Grid::from_vec(w, h, data.into_iter().map(|c| c.norm_sqr()).collect())
}

/// Moves the DC bin to `(w / 2, h / 2)`.
pub fn fftshift<T: Clone>(g: &Grid<T>) -> Grid<T> {
    let (w, h) = (g.width(), g.height());
    Grid::from_fn(w, h, |x, y| g.get((x + w - w / 2) % w, (y + h - h / 2) % h).clone())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerSpectrum {
    /// `(h, w)` analysis resolution.
    pub resolution: (usize, usize),
    /// Mean power before flooring, DC-centered.
    pub mean_power: Grid<f64>,
    /// `log10(max(mean_power, floor))`, DC-centered.
    pub log_power: Grid<f64>,
    pub samples: usize,
}

/// Mean power spectrum of the luminance of `images` at `resolution`.
pub fn mean_power_spectrum(images: &[Grid<Rgb>], resolution: (usize, usize)) -> Result<PowerSpectrum> {
    if images.is_empty() {
        return Err(Error::EmptyInput("mean_power_spectrum image list"));
    }
    if resolution.0 == 0 || resolution.1 == 0 {
        return Err(Error::InvalidConfig("spectrum resolution must be positive".into()));
    }
    let spectra: Vec<Grid<f64>> = images
        .par_iter()
        .map(|img| power_spectrum(&resize(&img.map(luminance), resolution)))
        .collect();
    let (h, w) = resolution;
    let mut acc = vec![0.0; w * h];
    for s in &spectra {
        for (a, v) in acc.iter_mut().zip(s.as_slice()) {
            *a += v;
        }
    }
    let n = images.len() as f64;
    let mean = fftshift(&Grid::from_vec(w, h, acc.into_iter().map(|a| a / n).collect()));
    let log_power = mean.map(|&p| p.max(POWER_FLOOR).log10());
    Ok(PowerSpectrum {
        resolution,
        mean_power: mean,
        log_power,
        samples: images.len(),
    })
}

/// Mean absolute difference of log power over all bins.
pub fn spectrum_distance(a: &PowerSpectrum, b: &PowerSpectrum) -> Result<f64> {
    if a.resolution != b.resolution {
        return Err(Error::DimensionMismatch {
            what: "power spectrum",
            expected: a.resolution,
            found: b.resolution,
        });
    }
    let s: f64 = a
        .log_power
        .as_slice()
        .iter()
        .zip(b.log_power.as_slice())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(s / a.log_power.len() as f64)
}

/// Serializes a grid as a little-endian float64 `.npy` array of shape `(h, w)`.
pub fn npy_bytes(g: &Grid<f64>) -> Vec<u8> {
    let mut header = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        g.height(),
        g.width()
    );
    let unpadded = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + 8 * g.len());
    out.extend_from_slice(b"\x93NUMPY\x01\x00");
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in g.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_npy(path: &Path, g: &Grid<f64>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&npy_bytes(g)).map_err(|e| Error::io(path, e))
}

/// 8-bit rendering of the log spectrum, min to black and max to white.
pub fn render_spectrum(s: &PowerSpectrum) -> Grid<u8> {
    let lo = s.log_power.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.log_power.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    s.log_power.map(|&v| (((v - lo) / span) * 255.0).round() as u8)
}

/// Writes `<stem>.npy` and `<stem>.png` under `dir`.
pub fn export_spectrum(s: &PowerSpectrum, dir: &Path, stem: &str) -> Result<()> {
    write_npy(&dir.join(format!("{stem}.npy")), &s.log_power)?;
    crate::io::write_indexed(&dir.join(format!("{stem}.png")), &render_spectrum(s), None)
}
