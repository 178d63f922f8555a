//! Turning a canvas into a finished image.
//!
//! The [`Finisher`] trait is the plug point for a trained synthesis model.
//! [`BaselineFinisher`] is an analytic stand-in: a discrete harmonic fill of
//! every non-content pixel, optionally followed by a per-region color shift
//! toward the class mean.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compositor::{Canvas, Layer, PixelState};
use crate::error::{Error, Result};
use crate::grid::{BoundingBox, Grid, Rgb};
use crate::io;
use crate::layout::{label_components, Components, Connectivity, SemanticLayout};

/// `true` exactly at pixels whose state is not content.
pub fn missing_mask(canvas: &Canvas) -> Grid<bool> {
    canvas.non_content_mask()
}

/// What a finisher sees: the canvas, its layout, and the missing mask.
#[derive(Clone, Debug)]
pub struct FinisherInput {
    pub canvas: Canvas,
    pub layout: SemanticLayout,
    pub missing: Grid<bool>,
}

impl FinisherInput {
    pub fn new(canvas: Canvas, layout: SemanticLayout) -> Result<Self> {
        if canvas.dims() != layout.dims() {
            return Err(Error::DimensionMismatch {
                what: "canvas vs layout",
                expected: layout.dims(),
                found: canvas.dims(),
            });
        }
        let missing = missing_mask(&canvas);
        Ok(Self { canvas, layout, missing })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.canvas.dims()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FillOptions {
    /// Stop once no value changes by more than this in a sweep (RGB in `[0, 1]`).
    pub tol: f64,
    pub max_iters: usize,
    pub harmonize: bool,
    /// Fraction of the gap to the class mean closed by harmonization.
    pub blend: f64,
}

impl Default for FillOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iters: 5000,
            harmonize: true,
            blend: 0.3,
        }
    }
}

impl FillOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("fill tolerance {} must be positive", self.tol)));
        }
        if !(0.0..=1.0).contains(&self.blend) {
            return Err(Error::InvalidConfig(format!("harmonize blend {} outside [0, 1]", self.blend)));
        }
        Ok(())
    }
}

/// Outcome of [`harmonic_fill`].
#[derive(Clone, Debug, PartialEq)]
pub struct FillReport {
    pub image: Grid<Rgb>,
    pub iterations: usize,
    /// Largest per-channel change of each sweep.
    pub max_changes: Vec<f64>,
    pub converged: bool,
}

/// Jacobi iteration of the 4-neighbor Laplace equation over `unknown`, with
/// every other pixel held fixed. At the frame edge only in-frame neighbors
/// are averaged (zero-flux border).
///
/// Each 4-connected unknown region starts at the mean of the known pixels
/// bordering it; regions with no known neighbor take the mean of all known
/// pixels and stay there.
pub fn harmonic_fill(values: &Grid<Rgb>, unknown: &Grid<bool>, tol: f64, max_iters: usize) -> Result<FillReport> {
    let (w, h) = (values.width(), values.height());
    let known_count = unknown.as_slice().iter().filter(|&&u| !u).count();
    if known_count == 0 {
        return Err(Error::NoContent);
    }
    let mut img = values.clone();
    let holes = label_components(&unknown.map(|&u| if u { 0u8 } else { 1 }), 1, Connectivity::Four);
    if holes.components.is_empty() {
        return Ok(FillReport {
            image: img,
            iterations: 0,
            max_changes: Vec::new(),
            converged: true,
        });
    }

    let mut global = [0.0; 3];
    for (v, &u) in values.as_slice().iter().zip(unknown.as_slice()) {
        if !u {
            for c in 0..3 {
                global[c] += v[c];
            }
        }
    }
    let global = global.map(|s| s / known_count as f64);

    let n_holes = holes.components.len();
    let mut sum = vec![[0.0; 3]; n_holes];
    let mut cnt = vec![0usize; n_holes];
    let neighbors = |x: usize, y: usize| {
        let mut out = [None; 4];
        if x > 0 {
            out[0] = Some((x - 1, y));
        }
        if x + 1 < w {
            out[1] = Some((x + 1, y));
        }
        if y > 0 {
            out[2] = Some((x, y - 1));
        }
        if y + 1 < h {
            out[3] = Some((x, y + 1));
        }
        out
    };
    for (x, y, &id) in holes.ids.iter_xy() {
        if id == Components::NONE {
            continue;
        }
        for (nx, ny) in neighbors(x, y).into_iter().flatten() {
            if !*unknown.get(nx, ny) {
                let v = values.get(nx, ny);
                for c in 0..3 {
                    sum[id as usize][c] += v[c];
                }
                cnt[id as usize] += 1;
            }
        }
    }
    let mut active = Vec::new();
    for (x, y, &id) in holes.ids.iter_xy() {
        if id == Components::NONE {
            continue;
        }
        let i = id as usize;
        if cnt[i] == 0 {
            img.set(x, y, global);
        } else {
            img.set(x, y, sum[i].map(|s| s / cnt[i] as f64));
            let nb: Vec<usize> = neighbors(x, y).into_iter().flatten().map(|(nx, ny)| ny * w + nx).collect();
            active.push((y * w + x, nb));
        }
    }

    let mut max_changes = Vec::new();
    let mut converged = active.is_empty();
    let mut buf = img.as_slice().to_vec();
    let mut next: Vec<Rgb> = vec![[0.0; 3]; active.len()];
    while !converged && max_changes.len() < max_iters {
        let change = next
            .par_iter_mut()
            .zip(active.par_iter())
            .map(|(out, (i, nb))| {
                let mut acc = [0.0; 3];
                for &j in nb {
                    for c in 0..3 {
                        acc[c] += buf[j][c];
                    }
                }
                let k = nb.len() as f64;
                *out = acc.map(|a| a / k);
                (0..3).map(|c| (out[c] - buf[*i][c]).abs()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        for (v, (i, _)) in next.iter().zip(&active) {
            buf[*i] = *v;
        }
        max_changes.push(change);
        converged = change < tol;
    }
    Ok(FillReport {
        image: Grid::from_vec(w, h, buf),
        iterations: max_changes.len(),
        max_changes,
        converged,
    })
}

/// Shifts each layout region's mean color a `blend` fraction toward the mean
/// of the content pixels of its class.
pub fn harmonize(image: &Grid<Rgb>, content: &Grid<bool>, layout: &SemanticLayout, blend: f64) -> Grid<Rgb> {
    let n = layout.table.len();
    let mut class_sum = vec![[0.0; 3]; n];
    let mut class_cnt = vec![0usize; n];
    for (x, y, &l) in layout.labels.iter_xy() {
        if layout.is_labeled(x, y) && *content.get(x, y) {
            let v = image.get(x, y);
            for c in 0..3 {
                class_sum[l as usize][c] += v[c];
            }
            class_cnt[l as usize] += 1;
        }
    }
    let comps = label_components(&layout.labels, layout.table.unlabeled, Connectivity::Four);
    let mut reg_sum = vec![[0.0; 3]; comps.components.len()];
    for (x, y, &id) in comps.ids.iter_xy() {
        if id != Components::NONE {
            let v = image.get(x, y);
            for c in 0..3 {
                reg_sum[id as usize][c] += v[c];
            }
        }
    }
    let shift: Vec<Option<Rgb>> = comps
        .components
        .iter()
        .zip(&reg_sum)
        .map(|(comp, s)| {
            let k = comp.class as usize;
            (class_cnt[k] > 0).then(|| {
                std::array::from_fn(|c| blend * (class_sum[k][c] / class_cnt[k] as f64 - s[c] / comp.area as f64))
            })
        })
        .collect();
    Grid::from_fn(image.width(), image.height(), |x, y| {
        let v = *image.get(x, y);
        let id = *comps.ids.get(x, y);
        match shift.get(id as usize).copied().flatten() {
            Some(d) => std::array::from_fn(|c| (v[c] + d[c]).clamp(0.0, 1.0)),
            None => v,
        }
    })
}

/// Harmonic fill of every non-content pixel, then optional harmonization.
/// Harmonization is skipped when no pixel is missing, so finishing a
/// finished image is the identity.
pub fn finish_baseline(input: &FinisherInput, opts: &FillOptions) -> Result<Grid<Rgb>> {
    opts.validate()?;
    let report = harmonic_fill(&input.canvas.rgb, &input.missing, opts.tol, opts.max_iters)?;
    if !report.converged {
        log::warn!(
            "harmonic fill stopped after {} sweeps with change {:.2e}",
            report.iterations,
            report.max_changes.last().copied().unwrap_or(0.0)
        );
    }
    // A canvas with nothing missing is treated as already finished.
    let any_missing = input.missing.as_slice().iter().any(|&m| m);
    if opts.harmonize && opts.blend > 0.0 && any_missing {
        let content = input.missing.map(|&m| !m);
        Ok(harmonize(&report.image, &content, &input.layout, opts.blend))
    } else {
        Ok(report.image)
    }
}

/// A synthesis backend.
pub trait Finisher: Send + Sync {
    fn name(&self) -> &str;
    fn run(&self, input: &FinisherInput) -> Result<Grid<Rgb>>;
}

/// Runs `backend` and checks the output size.
pub fn finish(input: &FinisherInput, backend: &dyn Finisher) -> Result<Grid<Rgb>> {
    let out = backend.run(input).map_err(|e| match e {
        e @ (Error::Backend { .. } | Error::BackendDimension { .. }) => e,
        other => Error::Backend {
            backend: backend.name().to_string(),
            message: other.to_string(),
        },
    })?;
    if out.dims() != input.dims() {
        return Err(Error::BackendDimension {
            backend: backend.name().to_string(),
            expected: input.dims(),
            found: out.dims(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct BaselineFinisher {
    pub options: FillOptions,
}

impl Finisher for BaselineFinisher {
    fn name(&self) -> &str {
        "baseline"
    }
    fn run(&self, input: &FinisherInput) -> Result<Grid<Rgb>> {
        finish_baseline(input, &self.options)
    }
}

/// Returns the canvas colors as they are.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityFinisher;

impl Finisher for IdentityFinisher {
    fn name(&self) -> &str {
        "identity"
    }
    fn run(&self, input: &FinisherInput) -> Result<Grid<Rgb>> {
        Ok(input.canvas.rgb.clone())
    }
}

/// An external program called as
/// `program [args..] <canvas.png> <state.png> <layout.png> <output.png>`.
/// It must write an RGB PNG of the canvas size to the output path.
#[derive(Clone, Debug)]
pub struct ExternalFinisher {
    pub program: PathBuf,
    pub args: Vec<String>,
    label: String,
}

impl ExternalFinisher {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        let program = program.into();
        let label = format!("external:{}", program.display());
        Self { program, args, label }
    }

    fn fail(&self, message: impl ToString) -> Error {
        Error::Backend {
            backend: self.label.clone(),
            message: message.to_string(),
        }
    }
}

static EXCHANGE_COUNTER: AtomicU64 = AtomicU64::new(0);

impl Finisher for ExternalFinisher {
    fn name(&self) -> &str {
        &self.label
    }

    fn run(&self, input: &FinisherInput) -> Result<Grid<Rgb>> {
        let dir = std::env::temp_dir().join(format!(
            "segsynth-finish-{}-{}",
            std::process::id(),
            EXCHANGE_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::create_dir_all(&dir).map_err(|e| self.fail(e))?;
        let result = self.exchange(&dir, input);
        let _ = std::fs::remove_dir_all(&dir);
        result
    }
}

impl ExternalFinisher {
    fn exchange(&self, dir: &Path, input: &FinisherInput) -> Result<Grid<Rgb>> {
        let (canvas, state, layout, output) =
            (dir.join("canvas.png"), dir.join("state.png"), dir.join("layout.png"), dir.join("output.png"));
        input.canvas.export(&canvas, &state)?;
        io::write_layout(&layout, &input.layout)?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .args([&canvas, &state, &layout, &output])
            .status()
            .map_err(|e| self.fail(format!("could not start: {e}")))?;
        if !status.success() {
            return Err(self.fail(format!("exited with {status}")));
        }
        let img = io::read_rgb(&output).map_err(|e| self.fail(e))?;
        Ok(io::to_rgb_f64(&img))
    }
}

/// Backend by name: `baseline`, `identity`, or `external:<program>`.
pub fn backend_by_name(name: &str, options: FillOptions) -> Result<Box<dyn Finisher>> {
    match name {
        "baseline" => Ok(Box::new(BaselineFinisher { options })),
        "identity" => Ok(Box::new(IdentityFinisher)),
        other => match other.strip_prefix("external:") {
            Some(p) if !p.is_empty() => Ok(Box::new(ExternalFinisher::new(p, Vec::new()))),
            _ => Err(Error::InvalidConfig(format!(
                "unknown finisher backend `{name}` (expected baseline, identity or external:<program>)"
            ))),
        },
    }
}

/// Canvas with every pixel marked content, as one frame-sized layer.
pub fn content_canvas(rgb: Grid<Rgb>) -> Canvas {
    let (w, h) = (rgb.width(), rgb.height());
    Canvas {
        rgb,
        state: Grid::new(w, h, PixelState::Content),
        provenance: Grid::new(w, h, 0),
        layers: vec![Layer {
            region: 0,
            segment_id: Canvas::NO_LAYER,
            class_index: 0,
            bbox: BoundingBox::full((h, w)),
            mask: Grid::new(w, h, true),
            paint_rank: 0,
        }],
    }
}
