//! Command-line front end. Each `cmd_*` function is callable from code and
//! returns a summary; [`run`] maps errors to categorized exit codes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::bank::{build_bank_with_table, load_bank, save_bank, MemoryBank, TrainingPair, BANK_VERSION};
use crate::canvas_sim::{export_training_pairs, ExportManifest};
use crate::compositor::{derive_ordering, DepthMap, OrderingTable};
use crate::config::PipelineConfig;
use crate::error::{exit, Error, Result};
use crate::eval::{export_spectrum, layout_agreement, mean_power_spectrum, spectrum_distance, AgreementReport};
use crate::finisher::backend_by_name;
use crate::grid::{Grid, Rgb8};
use crate::io::{self, Dataset};
use crate::layout::{ClassTable, SemanticLayout};
use crate::pipeline::{mix_seed, synthesize, SynthOptions};
use crate::retrieval::BankIndex;

#[derive(Debug, Parser)]
#[command(name = "segsynth", version, about = "Semi-parametric image synthesis from semantic layouts")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output; repeat for more.
    #[arg(long, short, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract every segment of a dataset into a memory bank.
    BuildBank {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Derive the class-pair ordering table from dataset depth maps.
    DeriveOrdering {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize images for dense layout files.
    Synth {
        #[arg(required = true)]
        layouts: Vec<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        ordering: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pick uniformly among the k best segments per region.
        #[arg(long)]
        k: Option<usize>,
        /// Outputs per layout.
        #[arg(long)]
        samples: Option<usize>,
        /// Finisher backend: baseline, identity or external:<program>.
        #[arg(long)]
        backend: Option<String>,
    },
    /// Export simulated training canvases for a dataset.
    Simulate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare predicted layouts with reference layouts (files or directories).
    EvalLayout {
        reference: PathBuf,
        predicted: PathBuf,
        /// classes.json; defaults to the configured dataset's, then the bank's.
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean power spectra of two image directories and their distance.
    EvalSpectrum {
        dir_a: PathBuf,
        dir_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a memory bank, verifying every asset.
    InspectBank {
        #[arg(long)]
        bank: Option<PathBuf>,
    },
}

fn timed<T>(what: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    info!("{what}: {:.3}s", start.elapsed().as_secs_f64());
    out
}

fn set(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn load_pairs(ds: &Dataset) -> Result<Vec<(Grid<Rgb8>, SemanticLayout)>> {
    ds.items
        .par_iter()
        .map(|it| Ok((ds.load_image(it)?, ds.load_layout(it)?)))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BankSummary {
    pub segments: usize,
    pub per_class: BTreeMap<String, usize>,
    pub sources: usize,
}

fn bank_summary(bank: &MemoryBank) -> BankSummary {
    let per_class = bank
        .table
        .classes
        .iter()
        .cloned()
        .zip(bank.stats())
        .collect();
    let mut sources: Vec<u32> = bank.segments().iter().map(|s| s.source_id).collect();
    sources.dedup();
    BankSummary {
        segments: bank.len(),
        per_class,
        sources: sources.len(),
    }
}

pub fn cmd_build_bank(cfg: &PipelineConfig) -> Result<BankSummary> {
    let ds_root = cfg.require(&cfg.paths.dataset, "paths.dataset")?;
    let bank_dir = cfg.require(&cfg.paths.bank, "paths.bank")?;
    let ds = Dataset::open(&ds_root)?;
    let data = timed("load dataset", || load_pairs(&ds))?;
    let pairs: Vec<TrainingPair<'_>> = data
        .iter()
        .zip(&ds.items)
        .map(|((image, layout), it)| TrainingPair {
            image,
            layout,
            source_id: it.source_id,
        })
        .collect();
    let bank = timed("extract segments", || build_bank_with_table(ds.table.clone(), &pairs, cfg.bank))?;
    timed("write bank", || save_bank(&bank, &bank_dir))?;
    let s = bank_summary(&bank);
    info!("{} segments from {} images", s.segments, s.sources);
    Ok(s)
}

pub fn cmd_derive_ordering(cfg: &PipelineConfig) -> Result<OrderingTable> {
    let ds_root = cfg.require(&cfg.paths.dataset, "paths.dataset")?;
    let out = cfg.require(&cfg.paths.ordering, "paths.ordering")?;
    let ds = Dataset::open(&ds_root)?;
    let with_depth: Vec<_> = ds.items.iter().filter(|it| it.depth.is_some()).collect();
    info!("{} of {} samples carry depth", with_depth.len(), ds.items.len());
    let data: Vec<(SemanticLayout, DepthMap)> = with_depth
        .par_iter()
        .map(|it| {
            let layout = ds.load_layout(it)?;
            let depth = DepthMap::new(io::read_depth(it.depth.as_ref().expect("filtered"))?)?;
            Ok((layout, depth))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<(&SemanticLayout, &DepthMap)> = data.iter().map(|(l, d)| (l, d)).collect();
    let table = timed("derive ordering", || {
        derive_ordering(&refs, &ds.table, cfg.fallback(&ds.table)?, cfg.bank.connectivity)
    })?;
    table.save(&out)?;
    Ok(table)
}

/// The configured ordering file, or a table built from the fallback order.
pub fn resolve_ordering(cfg: &PipelineConfig, table: &ClassTable) -> Result<OrderingTable> {
    if let Some(p) = &cfg.paths.ordering {
        let o = OrderingTable::load(p)?;
        if o.classes() != table.classes.as_slice() {
            return Err(Error::ClassTableMismatch(format!("ordering {} vs bank", p.display())));
        }
        return Ok(o);
    }
    match cfg.fallback(table)? {
        Some(f) => OrderingTable::from_fallback(table, f),
        None => Err(Error::MissingFallback),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthSummary {
    pub outputs: Vec<PathBuf>,
    pub regions: usize,
    pub matched: usize,
}

/// Output directory for sample `s` of the layout with file stem `stem`.
pub fn synth_output_dir(out: &Path, stem: &str, s: usize, samples: usize) -> PathBuf {
    if samples <= 1 {
        out.join(stem)
    } else {
        out.join(stem).join(format!("sample_{s:02}"))
    }
}

pub fn cmd_synth(cfg: &PipelineConfig, layouts: &[PathBuf]) -> Result<SynthSummary> {
    let bank_dir = cfg.require(&cfg.paths.bank, "paths.bank")?;
    let out = cfg.require(&cfg.paths.outputs, "paths.outputs")?;
    let bank = timed("load bank", || load_bank(&bank_dir))?;
    let ordering = resolve_ordering(cfg, &bank.table)?;
    let backend = backend_by_name(&cfg.finisher.backend, cfg.fill_options())?;
    let opts = SynthOptions {
        k: cfg.retrieval.k,
        exclude_source: cfg.retrieval.exclude_source,
        align: cfg.alignment,
        elision: cfg.elision(&bank.table, 0)?,
        max_unlabeled_fraction: cfg.retrieval.max_unlabeled_fraction,
    };
    let loaded: Vec<(String, SemanticLayout)> = layouts
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "layout".into());
            let layout = io::read_layout(p, &bank.table)?;
            crate::pipeline::check_dense(&layout, opts.max_unlabeled_fraction)?;
            Ok((stem, layout))
        })
        .collect::<Result<_>>()?;
    let mut frames: Vec<(usize, usize)> = loaded.iter().map(|(_, l)| l.dims()).collect();
    frames.sort();
    frames.dedup();
    let indices: BTreeMap<(usize, usize), BankIndex<'_>> = frames.into_iter().map(|f| (f, BankIndex::new(&bank, f))).collect();
    let samples = cfg.retrieval.samples;
    let jobs: Vec<(usize, usize)> = (0..loaded.len()).flat_map(|i| (0..samples).map(move |s| (i, s))).collect();
    let start = Instant::now();
    let results: Vec<(PathBuf, usize, usize)> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let (stem, layout) = &loaded[i];
            let seed = mix_seed(cfg.seed, &[i as u64, s as u64]);
            let syn = synthesize(layout, &indices[&layout.dims()], &ordering, &opts, backend.as_ref(), seed)?;
            let dir = synth_output_dir(&out, stem, s, samples);
            io::write_rgb(&dir.join("final.png"), &io::to_rgb8(&syn.image))?;
            syn.canvas.export(&dir.join("canvas.png"), &dir.join("state.png"))?;
            io::write_json(&dir.join("provenance.json"), &syn.provenance)?;
            let matched = syn
                .provenance
                .regions
                .iter()
                .filter(|r| r.status == crate::pipeline::RegionStatus::Matched)
                .count();
            Ok((dir, syn.provenance.regions.len(), matched))
        })
        .collect::<Result<_>>()?;
    let regions: usize = results.iter().map(|r| r.1).sum();
    let secs = start.elapsed().as_secs_f64();
    info!(
        "synthesized {} outputs, {regions} regions in {secs:.3}s ({:.1} regions/s)",
        results.len(),
        regions as f64 / secs.max(1e-9)
    );
    Ok(SynthSummary {
        regions,
        matched: results.iter().map(|r| r.2).sum(),
        outputs: results.into_iter().map(|r| r.0).collect(),
    })
}

pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<ExportManifest> {
    let ds = Dataset::open(&cfg.require(&cfg.paths.dataset, "paths.dataset")?)?;
    let bank = load_bank(&cfg.require(&cfg.paths.bank, "paths.bank")?)?;
    let out = cfg.require(&cfg.paths.outputs, "paths.outputs")?;
    let sim = cfg.sim_config(&bank.table)?;
    let manifest = timed("simulate canvases", || export_training_pairs(&ds, &bank, &sim, &out))?;
    info!("{} samples, {} failed", manifest.samples.len(), manifest.failures());
    Ok(manifest)
}

fn class_table_for_eval(cfg: &PipelineConfig, classes: Option<&Path>) -> Result<ClassTable> {
    if let Some(p) = classes {
        return io::read_class_table(p);
    }
    if let Some(d) = &cfg.paths.dataset {
        return io::read_class_table(&d.join("classes.json"));
    }
    if let Some(b) = &cfg.paths.bank {
        return Ok(load_bank(b)?.table);
    }
    Err(Error::InvalidConfig("no class table: pass --classes or set paths.dataset".into()))
}

fn pngs_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = e.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "png") {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn cmd_eval_layout(
    cfg: &PipelineConfig,
    reference: &Path,
    predicted: &Path,
    classes: Option<&Path>,
    out: Option<&Path>,
) -> Result<AgreementReport> {
    let table = class_table_for_eval(cfg, classes)?;
    let pairs: Vec<(String, PathBuf, PathBuf)> = if reference.is_dir() {
        pngs_in(reference)?
            .into_iter()
            .map(|r| {
                let rel = r.strip_prefix(reference).expect("listed under reference").to_path_buf();
                (rel.to_string_lossy().into_owned(), r, predicted.join(&rel))
            })
            .collect()
    } else {
        vec![(
            reference.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            reference.to_path_buf(),
            predicted.to_path_buf(),
        )]
    };
    let agreements = pairs
        .par_iter()
        .map(|(name, r, p)| {
            let a = layout_agreement(&io::read_layout(r, &table)?, &io::read_layout(p, &table)?)?;
            Ok((name.clone(), a))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = AgreementReport::from_pairs(agreements);
    if let Some(o) = out {
        io::write_json(o, &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    pub distance: f64,
    pub samples_a: usize,
    pub samples_b: usize,
    pub resolution: (usize, usize),
}

/// PNG images of a directory tree; when any file is named `final.png` only
/// those are used, so synthesis output directories can be passed directly.
pub fn spectrum_inputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let all = pngs_in(dir)?;
    let finals: Vec<PathBuf> = all.iter().filter(|p| p.file_name().is_some_and(|n| n == "final.png")).cloned().collect();
    Ok(if finals.is_empty() { all } else { finals })
}

pub fn cmd_eval_spectrum(cfg: &PipelineConfig, dir_a: &Path, dir_b: &Path) -> Result<SpectrumSummary> {
    let out = cfg.require(&cfg.paths.outputs, "paths.outputs")?;
    let res = cfg.resolution();
    let load = |d: &Path| -> Result<Vec<Grid<crate::grid::Rgb>>> {
        spectrum_inputs(d)?
            .par_iter()
            .map(|p| Ok(io::to_rgb_f64(&io::read_rgb(p)?)))
            .collect()
    };
    let a = mean_power_spectrum(&load(dir_a)?, res)?;
    let b = mean_power_spectrum(&load(dir_b)?, res)?;
    export_spectrum(&a, &out, "spectrum_a")?;
    export_spectrum(&b, &out, "spectrum_b")?;
    let summary = SpectrumSummary {
        distance: spectrum_distance(&a, &b)?,
        samples_a: a.samples,
        samples_b: b.samples,
        resolution: res,
    };
    io::write_json(&out.join("spectrum.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct BankReport {
    pub version: u32,
    pub classes: Vec<String>,
    #[serde(flatten)]
    pub summary: BankSummary,
    pub frames: Vec<(usize, usize)>,
    pub min_area: usize,
}

pub fn cmd_inspect_bank(cfg: &PipelineConfig) -> Result<BankReport> {
    let bank = load_bank(&cfg.require(&cfg.paths.bank, "paths.bank")?)?;
    let mut frames: Vec<(usize, usize)> = bank.segments().iter().map(|s| s.region.frame).collect();
    frames.sort();
    frames.dedup();
    Ok(BankReport {
        version: BANK_VERSION,
        classes: bank.table.classes.clone(),
        summary: bank_summary(&bank),
        frames,
        min_area: bank.options.min_area,
    })
}

/// Writes a line to stdout, ignoring a closed pipe.
fn emit(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn print_json<T: Serialize>(v: &T) {
    emit(&serde_json::to_string_pretty(v).expect("summaries serialize"));
}

fn dispatch(cli: Cli, mut cfg: PipelineConfig) -> Result<()> {
    match cli.command {
        Command::BuildBank { dataset, bank } => {
            set(&mut cfg.paths.dataset, &dataset);
            set(&mut cfg.paths.bank, &bank);
            print_json(&cmd_build_bank(&cfg)?);
        }
        Command::DeriveOrdering { dataset, out } => {
            set(&mut cfg.paths.dataset, &dataset);
            set(&mut cfg.paths.ordering, &out);
            let t = cmd_derive_ordering(&cfg)?;
            emit(&format!("wrote ordering over {} classes", t.classes().len()));
        }
        Command::Synth {
            layouts,
            bank,
            ordering,
            out,
            k,
            samples,
            backend,
        } => {
            set(&mut cfg.paths.bank, &bank);
            set(&mut cfg.paths.ordering, &ordering);
            set(&mut cfg.paths.outputs, &out);
            if let Some(k) = k {
                cfg.retrieval.k = k;
            }
            if let Some(s) = samples {
                cfg.retrieval.samples = s;
            }
            if let Some(b) = backend {
                cfg.finisher.backend = b;
            }
            cfg.validate()?;
            print_json(&cmd_synth(&cfg, &layouts)?);
        }
        Command::Simulate { dataset, bank, out } => {
            set(&mut cfg.paths.dataset, &dataset);
            set(&mut cfg.paths.bank, &bank);
            set(&mut cfg.paths.outputs, &out);
            let m = cmd_simulate(&cfg)?;
            emit(&format!("{} samples exported, {} failed", m.samples.len(), m.failures()));
        }
        Command::EvalLayout {
            reference,
            predicted,
            classes,
            out,
        } => {
            let r = cmd_eval_layout(&cfg, &reference, &predicted, classes.as_deref(), out.as_deref())?;
            emit(&format!("mean IoU {:.4}, pixel accuracy {:.4} over {} layouts", r.mean_iou, r.pixel_accuracy, r.pairs.len()));
        }
        Command::EvalSpectrum { dir_a, dir_b, out } => {
            set(&mut cfg.paths.outputs, &out);
            print_json(&cmd_eval_spectrum(&cfg, &dir_a, &dir_b)?);
        }
        Command::InspectBank { bank } => {
            set(&mut cfg.paths.bank, &bank);
            print_json(&cmd_inspect_bank(&cfg)?);
        }
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    init_logging(cli.verbose);
    let result = (|| -> Result<()> {
        let mut cfg = match &cli.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(j) = cli.jobs {
            if j == 0 {
                return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
            }
            pool = pool.num_threads(j);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| dispatch(cli, cfg))
    })();
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            }
        }
    }
}
