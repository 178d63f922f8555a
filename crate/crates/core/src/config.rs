//! Pipeline configuration, read from TOML. Every field has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::AlignOptions;
use crate::bank::ExtractOptions;
use crate::canvas_sim::SimConfig;
use crate::compositor::{fallback_preset, ElisionOptions, DEFAULT_BAND, DEFAULT_INTERIOR_RATE};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_RESOLUTION;
use crate::finisher::FillOptions;
use crate::layout::ClassTable;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub bank: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub outputs: Option<PathBuf>,
    /// Ordering table written by `derive-ordering`.
    pub ordering: Option<PathBuf>,
}

impl PathsConfig {
    pub fn resolve_against(&mut self, dir: &Path) {
        for p in [&mut self.bank, &mut self.dataset, &mut self.outputs, &mut self.ordering].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Candidates considered per region; 1 means plain argmax retrieval.
    pub k: usize,
    /// Outputs per layout.
    pub samples: usize,
    /// Never retrieve segments from this source image.
    pub exclude_source: Option<u32>,
    /// Reject layouts whose unlabeled fraction exceeds this.
    pub max_unlabeled_fraction: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 1,
            samples: 1,
            exclude_source: None,
            max_unlabeled_fraction: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositorConfig {
    pub band: f64,
    pub interior_rate: f64,
    /// Back-to-front class names used when no ordering file is given, or to
    /// break ties when deriving one.
    pub fallback: Vec<String>,
    /// Named fallback (`cityscapes`, `ade20k`, `nyu40`), used when `fallback` is empty.
    pub preset: Option<String>,
    /// Class names that get no exterior band.
    pub exterior_exclude: Vec<String>,
}

impl Default for CompositorConfig {
    fn default() -> Self {
        Self {
            band: DEFAULT_BAND,
            interior_rate: DEFAULT_INTERIOR_RATE,
            fallback: Vec::new(),
            preset: None,
            exterior_exclude: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub color_transfer_fraction: f64,
    pub band: f64,
    pub interior_rate: f64,
    pub exclude_same_source: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            color_transfer_fraction: d.color_transfer_fraction,
            band: d.band,
            interior_rate: d.interior_rate,
            exclude_same_source: d.exclude_same_source,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinisherConfig {
    /// `baseline`, `identity`, or `external:<program>`.
    pub backend: String,
    pub tol: f64,
    pub max_iters: usize,
    pub harmonize: bool,
    pub blend: f64,
}

impl Default for FinisherConfig {
    fn default() -> Self {
        let d = FillOptions::default();
        Self {
            backend: "baseline".into(),
            tol: d.tol,
            max_iters: d.max_iters,
            harmonize: d.harmonize,
            blend: d.blend,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Spectrum analysis size `[h, w]`.
    pub resolution: [usize; 2],
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            resolution: [DEFAULT_RESOLUTION.0, DEFAULT_RESOLUTION.1],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub bank: ExtractOptions,
    pub retrieval: RetrievalConfig,
    pub alignment: AlignOptions,
    pub compositor: CompositorConfig,
    pub sim: SimSection,
    pub finisher: FinisherConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths in it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.paths.resolve_against(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.retrieval.k == 0 {
            return bad("retrieval.k must be at least 1".into());
        }
        if self.retrieval.samples == 0 {
            return bad("retrieval.samples must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.retrieval.max_unlabeled_fraction) {
            return bad(format!(
                "retrieval.max_unlabeled_fraction {} outside [0, 1]",
                self.retrieval.max_unlabeled_fraction
            ));
        }
        if self.bank.min_area == 0 {
            return bad("bank.min_area must be at least 1".into());
        }
        if self.eval.resolution.contains(&0) {
            return bad("eval.resolution entries must be positive".into());
        }
        self.alignment.validate()?;
        self.elision(&empty_table(), 0)?.validate()?;
        self.sim_config(&empty_table())?.validate()?;
        self.fill_options().validate()?;
        crate::finisher::backend_by_name(&self.finisher.backend, self.fill_options())?;
        if let Some(p) = &self.compositor.preset {
            if fallback_preset(p, &empty_table()).is_none() {
                return bad(format!("unknown fallback preset `{p}`"));
            }
        }
        Ok(())
    }

    pub fn fill_options(&self) -> FillOptions {
        FillOptions {
            tol: self.finisher.tol,
            max_iters: self.finisher.max_iters,
            harmonize: self.finisher.harmonize,
            blend: self.finisher.blend,
        }
    }

    fn class_indices(names: &[String], table: &ClassTable, what: &str) -> Result<Vec<u8>> {
        names
            .iter()
            .map(|n| {
                table
                    .index_of(n)
                    .ok_or_else(|| Error::InvalidConfig(format!("{what} names unknown class `{n}`")))
            })
            .collect()
    }

    /// Elision options with class names resolved against `table`.
    pub fn elision(&self, table: &ClassTable, seed: u64) -> Result<ElisionOptions> {
        let exterior_exclude = if table.is_empty() {
            Vec::new()
        } else {
            Self::class_indices(&self.compositor.exterior_exclude, table, "compositor.exterior_exclude")?
        };
        Ok(ElisionOptions {
            band: self.compositor.band,
            interior_rate: self.compositor.interior_rate,
            exterior_exclude,
            seed,
        })
    }

    pub fn sim_config(&self, table: &ClassTable) -> Result<SimConfig> {
        let exterior_exclude = if table.is_empty() {
            Vec::new()
        } else {
            Self::class_indices(&self.compositor.exterior_exclude, table, "compositor.exterior_exclude")?
        };
        Ok(SimConfig {
            color_transfer_fraction: self.sim.color_transfer_fraction,
            band: self.sim.band,
            interior_rate: self.sim.interior_rate,
            rng_seed: self.seed,
            exclude_same_source: self.sim.exclude_same_source,
            exterior_exclude,
            align: self.alignment,
        })
    }

    /// The configured back-to-front fallback, if any: the explicit list
    /// (completed with unlisted classes in index order) or the preset.
    pub fn fallback(&self, table: &ClassTable) -> Result<Option<Vec<u8>>> {
        if !self.compositor.fallback.is_empty() {
            let listed = Self::class_indices(&self.compositor.fallback, table, "compositor.fallback")?;
            let names: Vec<&str> = listed.iter().map(|&c| table.name(c)).collect();
            return Ok(Some(crate::compositor::order_with_listed(table, &names)));
        }
        match &self.compositor.preset {
            Some(p) => Ok(Some(
                fallback_preset(p, table).ok_or_else(|| Error::InvalidConfig(format!("unknown fallback preset `{p}`")))?,
            )),
            None => Ok(None),
        }
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.eval.resolution[0], self.eval.resolution[1])
    }

    /// A configured path, or a missing-input error naming the key.
    pub fn require(&self, value: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        value.clone().ok_or_else(|| Error::InvalidConfig(format!("`{key}` is not set (config file or flag)")))
    }
}

/// Empty table used when validating configuration before data is loaded.
fn empty_table() -> ClassTable {
    ClassTable {
        classes: Vec::new(),
        unlabeled: crate::layout::UNLABELED,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn overrides_and_rejections() {
        let c = PipelineConfig::from_toml("seed = 7\n[compositor]\nband = 0.1\n[retrieval]\nk = 3\n").unwrap();
        assert_eq!((c.seed, c.compositor.band, c.retrieval.k), (7, 0.1, 3));
        assert!(PipelineConfig::from_toml("[compositor]\ninterior_rate = 1.5\n").is_err());
        assert!(PipelineConfig::from_toml("[retrieval]\nk = 0\n").is_err());
        assert!(PipelineConfig::from_toml("[finisher]\nbackend = \"gan\"\n").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn fallback_resolution() {
        let t = ClassTable::new(["sky", "road", "car"]).unwrap();
        let mut c = PipelineConfig::default();
        assert_eq!(c.fallback(&t).unwrap(), None);
        c.compositor.fallback = vec!["road".into()];
        assert_eq!(c.fallback(&t).unwrap(), Some(vec![1, 0, 2]));
        c.compositor.fallback.clear();
        c.compositor.preset = Some("cityscapes".into());
        assert_eq!(c.fallback(&t).unwrap(), Some(vec![0, 1, 2]));
        c.compositor.fallback = vec!["plane".into()];
        assert!(c.fallback(&t).is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.toml");
        std::fs::write(&f, "[paths]\nbank = \"bank\"\noutputs = \"/abs/out\"\n").unwrap();
        let c = PipelineConfig::load(&f).unwrap();
        assert_eq!(c.paths.bank, Some(dir.path().join("bank")));
        assert_eq!(c.paths.outputs, Some(PathBuf::from("/abs/out")));
    }
}
