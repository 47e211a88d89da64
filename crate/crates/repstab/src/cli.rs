//! The `repstab` command line.
//!
//! Every command that is given `--output` also writes a [`RunManifest`] next
//! to what it produced; `repstab replay` re-runs it and compares digests.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use repstab_core::align::{self, AlignmentSpec, ScanWindow};
use repstab_core::brainprep::{self, PreprocessConfig, VoxelMask, DEFAULT_HIGHPASS_HZ, DEFAULT_TOP_K};
use repstab_core::encode::{self, LambdaChoice, DEFAULT_LAMBDA_GRID};
use repstab_core::repstore::{compose_bag_of_words, BowUnit};
use repstab_core::resta;
use repstab_core::simcore;
use repstab_core::{Matrix, RepresentationSet, ScanSeries, StimulusCorpus, TokenNormalizer};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bxm1::{self, SpaceFile};
use crate::error::{Error, Result};
use crate::manifest::{self, FileDigest, RunManifest, TOOL_VERSION};
use crate::synth::{self, BrainSpec};
use crate::{par, tables, text};

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "repstab", version, about = "Representational similarity and stability analysis")]
pub struct Cli {
    /// Output file, or directory for the synth-* commands.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "REPSTAB_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Bxm1,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Cosine similarity matrix of a representation set.
    Simmat { input: PathBuf },
    /// RSA score of two spaces, printed as JSON.
    Rsa {
        a: PathBuf,
        b: PathBuf,
        /// Stimulus mask CSV applied to both spaces.
        #[arg(long, alias = "masks")]
        mask: Option<PathBuf>,
        /// Correlate 1 - S instead of S.
        #[arg(long)]
        dissimilarity: bool,
    },
    /// Stability curve over a context-length series.
    Resta {
        /// Text file listing one representation file per line.
        series: PathBuf,
        #[arg(long, default_value_t = 1)]
        gap: usize,
        /// Emit consecutive differences of the curve.
        #[arg(long)]
        delta: bool,
    },
    /// RSA grid between all pairs of spaces.
    Crossrsa {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
    },
    /// Clean a scan series.
    Preprocess {
        input: PathBuf,
        #[command(flatten)]
        clean: CleanArgs,
        /// Where to write the surviving-voxel mask (default: <output stem>.mask.csv).
        #[arg(long)]
        mask_output: Option<PathBuf>,
    },
    /// Rank regions by cross-subject RSA and select the top k.
    SelectRegions {
        #[arg(required = true, num_args = 2..)]
        subjects: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        /// Rank the series as given, without preprocessing.
        #[arg(long)]
        raw: bool,
    },
    /// Scan windows of a corpus under a delay, with annotation masks.
    Align {
        corpus: PathBuf,
        #[command(flatten)]
        timing: TimingArgs,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Bag-of-words vectors per sentence or per scan.
    ComposeBow {
        corpus: PathBuf,
        embeddings: PathBuf,
        #[arg(long, value_enum, default_value_t = UnitArg::Sentence)]
        unit: UnitArg,
        #[command(flatten)]
        timing: TimingArgs,
        /// Use tokens verbatim instead of lowercasing and trimming punctuation.
        #[arg(long)]
        no_normalize: bool,
    },
    /// Ridge encoding model from X to scans, scored by block cross-validation.
    Encode {
        x: PathBuf,
        y: PathBuf,
        /// Fixed ridge strength; by default it is picked from a grid per fold.
        #[arg(long, conflicts_with = "lambda_grid")]
        lambda: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        /// Delay the X rows were aligned with, recorded in the fold report.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        delay: f64,
    },
    /// Synthetic representation sets.
    SynthReps {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        context_series: Option<usize>,
        #[arg(long, default_value_t = 0.1, requires = "context_series")]
        perturb: f64,
        #[arg(long)]
        rotate: bool,
    },
    /// Synthetic multi-subject scan series driven by a representation set.
    SynthBrain {
        reps: PathBuf,
        #[arg(long, default_value_t = 0)]
        lag_scans: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 4)]
        regions: usize,
        /// Comma-separated region indices; all regions by default.
        #[arg(long, value_delimiter = ',')]
        signal_regions: Option<Vec<usize>>,
        #[arg(long, default_value_t = 8)]
        voxels_per_region: usize,
        #[arg(long, default_value_t = 2)]
        subjects: usize,
        #[arg(long)]
        identity_map: bool,
        #[arg(long, default_value_t = 2.0)]
        scan_period: f64,
    },
    /// Re-run a manifest into a scratch directory and compare output digests.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CleanArgs {
    /// JSON preprocessing config.
    #[arg(long, conflicts_with_all = ["simple", "no_center", "no_detrend", "highpass", "no_standardize"])]
    pub config: Option<PathBuf>,
    /// Mean removal only.
    #[arg(long, conflicts_with_all = ["no_center", "no_detrend", "highpass", "no_standardize"])]
    pub simple: bool,
    #[arg(long)]
    pub no_center: bool,
    #[arg(long)]
    pub no_detrend: bool,
    /// High-pass cutoff in Hz; 0 disables the filter.
    #[arg(long)]
    pub highpass: Option<f64>,
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TimingArgs {
    /// Scans to build windows for (default: enough to cover the corpus).
    #[arg(long)]
    pub n_scans: Option<usize>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub delay: f64,
    #[arg(long, default_value_t = 2.0)]
    pub scan_period: f64,
    #[arg(long, default_value_t = 4)]
    pub words_per_scan: usize,
    #[arg(long, default_value_t = 0.5)]
    pub word_duration: f64,
    /// Restrict the corpus to one block.
    #[arg(long)]
    pub block: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitArg {
    Sentence,
    Scan,
}

impl CleanArgs {
    pub fn config(&self) -> Result<PreprocessConfig> {
        if let Some(p) = &self.config {
            let text = text::read_text(p)?;
            return Ok(serde_json::from_str(&text)?);
        }
        if self.simple {
            return Ok(PreprocessConfig::simple());
        }
        Ok(PreprocessConfig {
            center: !self.no_center,
            detrend: !self.no_detrend,
            highpass_cutoff_hz: self.highpass.unwrap_or(DEFAULT_HIGHPASS_HZ),
            standardize: !self.no_standardize,
        })
    }
}

impl TimingArgs {
    pub fn spec(&self) -> AlignmentSpec {
        AlignmentSpec {
            scan_period_s: self.scan_period,
            words_per_scan: self.words_per_scan,
            word_duration_s: self.word_duration,
            delay_s: self.delay,
        }
    }

    fn corpus(&self, corpus: StimulusCorpus) -> Result<StimulusCorpus> {
        match self.block {
            Some(b) => {
                let c = corpus.block(b);
                if c.is_empty() {
                    return Err(Error::Usage(format!("corpus has no block {b}")));
                }
                Ok(c)
            }
            None => Ok(corpus),
        }
    }

    fn windows(&self, corpus: &StimulusCorpus) -> Result<Vec<ScanWindow>> {
        let spec = self.spec();
        let n = self.n_scans.unwrap_or_else(|| corpus.len().div_ceil(self.words_per_scan.max(1)).max(1));
        let slots = n * self.words_per_scan;
        if slots != corpus.len() {
            eprintln!("note: {n} scans hold {slots} word slots for {} words", corpus.len());
        }
        Ok(align::build_scan_windows(corpus, &spec, n)?)
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simmat { .. } => "simmat",
            Command::Rsa { .. } => "rsa",
            Command::Resta { .. } => "resta",
            Command::Crossrsa { .. } => "crossrsa",
            Command::Preprocess { .. } => "preprocess",
            Command::SelectRegions { .. } => "select-regions",
            Command::Align { .. } => "align",
            Command::ComposeBow { .. } => "compose-bow",
            Command::Encode { .. } => "encode",
            Command::SynthReps { .. } => "synth-reps",
            Command::SynthBrain { .. } => "synth-brain",
            Command::Replay { .. } => "replay",
        }
    }

    /// Whether `--output` names a directory.
    pub fn writes_directory(&self) -> bool {
        matches!(self, Command::SynthReps { .. } | Command::SynthBrain { .. })
    }
}

/// Files a command read and wrote, and what it printed.
#[derive(Debug, Default)]
pub struct Run {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub stdout: String,
}

impl Run {
    fn input<'p>(&mut self, p: &'p Path) -> &'p Path {
        self.inputs.push(p.to_path_buf());
        p
    }

    fn write(&mut self, p: &Path, bytes: &[u8]) -> Result<()> {
        bxm1::write_bytes(p, bytes)?;
        self.outputs.push(p.to_path_buf());
        Ok(())
    }

    /// Writes to `--output` when given, else prints.
    fn emit(&mut self, out: Option<&Path>, text: String) -> Result<()> {
        match out {
            Some(p) => self.write(p, text.as_bytes()),
            None => {
                self.stdout.push_str(&text);
                Ok(())
            }
        }
    }
}

fn required_output(cli: &Cli) -> Result<&Path> {
    cli.output.as_deref().ok_or_else(|| Error::Usage(format!("{} needs --output", cli.command.name())))
}

fn format_or(cli: &Cli, default: Format, allowed: &[Format]) -> Result<Format> {
    let f = cli.format.unwrap_or(default);
    if !allowed.contains(&f) {
        return Err(Error::Usage(format!("{} cannot write {f:?}", cli.command.name()).to_lowercase()));
    }
    Ok(f)
}

/// `dir/stem.tag` next to `out`.
pub fn sidecar(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.{tag}"))
}

fn pretty(v: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn reps_bytes(reps: &RepresentationSet, f: Format) -> Result<Vec<u8>> {
    let (m, meta) = bxm1::reps_container(reps);
    Ok(match f {
        Format::Csv => bxm1::encode_csv(&m, &meta)?.into_bytes(),
        _ => bxm1::encode(&m, &meta)?,
    })
}

fn scan_bytes(s: &ScanSeries, f: Format) -> Result<Vec<u8>> {
    let (m, meta) = bxm1::scan_container(s);
    Ok(match f {
        Format::Csv => bxm1::encode_csv(&m, &meta)?.into_bytes(),
        _ => bxm1::encode(&m, &meta)?,
    })
}

/// Paths listed in a series file, resolved against its directory.
pub fn read_series_list(path: &Path) -> Result<Vec<PathBuf>> {
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(text::read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

/// Labels for a grid: metadata labels when they are distinct, else file stems.
fn grid_labels(paths: &[PathBuf], sims: &[repstab_core::SimilarityMatrix]) -> Vec<String> {
    let meta: Vec<String> = sims.iter().map(|s| s.source_meta().label()).collect();
    if meta.iter().collect::<BTreeSet<_>>().len() == meta.len() {
        return meta;
    }
    paths.iter().map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned()).collect()
}

fn dispatch(cli: &Cli) -> Result<Run> {
    let mut run = Run::default();
    let out = cli.output.as_deref();
    match &cli.command {
        Command::Simmat { input } => {
            let f = format_or(cli, Format::Bxm1, &[Format::Bxm1, Format::Csv])?;
            let out = required_output(cli)?;
            let sim = SpaceFile::load(run.input(input))?.into_simmat()?;
            let (m, meta) = bxm1::simmat_container(&sim);
            let bytes = match f {
                Format::Csv => bxm1::encode_csv(&m, &meta)?.into_bytes(),
                _ => bxm1::encode(&m, &meta)?,
            };
            run.write(out, &bytes)?;
        }
        Command::Rsa { a, b, mask, dissimilarity } => {
            let f = format_or(cli, Format::Json, &[Format::Json, Format::Csv])?;
            let mut sa = SpaceFile::load(run.input(a))?.into_simmat()?;
            let mut sb = SpaceFile::load(run.input(b))?.into_simmat()?;
            if let Some(mp) = mask {
                let keep = tables::parse_mask_csv(&text::read_text(run.input(mp))?)?;
                let name = mp.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                sa = simcore::subset(&sa, &keep, &name)?;
                sb = simcore::subset(&sb, &keep, &name)?;
            }
            let score = if *dissimilarity { simcore::rsa_dissimilarity(&sa, &sb)? } else { simcore::rsa(&sa, &sb)? };
            let text = match f {
                Format::Csv => format!("value,n_stimuli,pair_count\n{},{},{}\n", score.value, score.n_stimuli, score.pair_count),
                _ => pretty(&serde_json::to_value(score)?)?,
            };
            if let Some(p) = out {
                run.write(p, text.as_bytes())?;
            }
            run.stdout.push_str(&text);
        }
        Command::Resta { series, gap, delta } => {
            let f = format_or(cli, Format::Csv, &[Format::Csv, Format::Json])?;
            let paths = read_series_list(run.input(series))?;
            let sets = paths.iter().map(|p| bxm1::load_matrix(run.input(p))).collect::<Result<Vec<_>>>()?;
            let mut curve = par::stability_curve(&sets, *gap)?;
            if *delta {
                curve = resta::delta_curve(&curve)?;
            }
            let text = match f {
                Format::Json => pretty(&tables::curve_json(&curve)?)?,
                _ => tables::curve_csv(&curve),
            };
            run.emit(out, text)?;
        }
        Command::Crossrsa { inputs } => {
            let f = format_or(cli, Format::Csv, &[Format::Csv, Format::Json])?;
            let sims = inputs
                .iter()
                .map(|p| SpaceFile::load(run.input(p))?.into_simmat())
                .collect::<Result<Vec<_>>>()?;
            let grid = par::rsa_grid(grid_labels(inputs, &sims), &sims)?;
            let text = match f {
                Format::Json => pretty(&tables::grid_json(&grid))?,
                _ => tables::grid_csv(&grid),
            };
            run.emit(out, text)?;
        }
        Command::Preprocess { input, clean, mask_output } => {
            let f = format_or(cli, Format::Bxm1, &[Format::Bxm1, Format::Csv])?;
            let out = required_output(cli)?;
            let cfg = clean.config()?;
            if let Some(p) = &clean.config {
                run.input(p);
            }
            let series = bxm1::load_scan_series(run.input(input))?;
            let (cleaned, mask) = brainprep::preprocess(&series, &cfg)?;
            run.write(out, &scan_bytes(&cleaned, f)?)?;
            let mp = mask_output.clone().unwrap_or_else(|| sidecar(out, "mask.csv"));
            run.write(&mp, tables::voxel_mask_csv(&mask, series.region_of_voxel()).as_bytes())?;
        }
        Command::SelectRegions { subjects, k, raw } => {
            let f = format_or(cli, Format::Csv, &[Format::Csv, Format::Json])?;
            let loaded = subjects
                .iter()
                .map(|p| bxm1::load_scan_series(run.input(p)))
                .collect::<Result<Vec<_>>>()?;
            let (ranked, kept) = select_inputs(&loaded, *raw)?;
            let mut ranking = brainprep::rank_regions_cross_subject(&ranked)?;
            ranking.k = *k;
            for s in &ranking.skipped {
                eprintln!("warning: skipped region {}: {}", s.label, s.reason);
            }
            let masks = loaded
                .iter()
                .zip(&kept)
                .map(|(s, alive)| {
                    let top = brainprep::select_top_k(&ranking, s.region_of_voxel(), *k)?;
                    let keep: Vec<bool> = top.keep.iter().zip(&alive.keep).map(|(a, b)| *a && *b).collect();
                    Ok(VoxelMask { keep, provenance: top.provenance })
                })
                .collect::<Result<Vec<_>>>()?;
            let text = match f {
                Format::Json => pretty(&tables::ranking_json(&ranking))?,
                _ => tables::ranking_csv(&ranking),
            };
            run.emit(out, text)?;
            if let Some(o) = out {
                for (s, m) in loaded.iter().zip(&masks) {
                    let p = sidecar(o, &format!("{}.mask.csv", s.subject_id));
                    run.write(&p, tables::voxel_mask_csv(m, s.region_of_voxel()).as_bytes())?;
                }
            }
        }
        Command::Align { corpus, timing, lexicon } => {
            let f = format_or(cli, Format::Csv, &[Format::Csv, Format::Json])?;
            let lex = lexicon.as_deref().map(|p| run.input(p));
            let corpus = timing.corpus(text::load_corpus(run.input(corpus), lex)?)?;
            let windows = timing.windows(&corpus)?;
            let assoc = align::apply_delay(&windows, &timing.spec())?;
            let mut masks = vec![("sentence_end", align::delayed_mask(&assoc, &align::sentence_end_mask(&corpus, &windows)))];
            if lex.is_some() {
                let m = align::lexicon_mention_mask(&corpus, &windows, TokenNormalizer::default())?;
                masks.push(("lexicon_mention", align::delayed_mask(&assoc, &m)));
            }
            let text = match f {
                Format::Json => pretty(&tables::alignment_json(&assoc, &masks))?,
                _ => tables::alignment_csv(&assoc, &masks),
            };
            run.emit(out, text)?;
        }
        Command::ComposeBow { corpus, embeddings, unit, timing, no_normalize } => {
            let f = format_or(cli, Format::Bxm1, &[Format::Bxm1, Format::Csv])?;
            let out = required_output(cli)?;
            let corpus = timing.corpus(text::load_corpus(run.input(corpus), None)?)?;
            let table = text::load_embedding_table(run.input(embeddings))?;
            let norm = if *no_normalize { TokenNormalizer::NONE } else { TokenNormalizer::default() };
            let bow = match unit {
                UnitArg::Sentence => compose_bag_of_words(&corpus, &table, BowUnit::Sentence, norm)?,
                UnitArg::Scan => {
                    let windows = timing.windows(&corpus)?;
                    let shifted: Vec<ScanWindow> = align::apply_delay(&windows, &timing.spec())?
                        .iter()
                        .map(|a| ScanWindow { scan_index: a.scan_index, start: a.start, end: a.end })
                        .collect();
                    compose_bag_of_words(&corpus, &table, BowUnit::Windows(&shifted), norm)?
                }
            };
            if bow.oov_tokens > 0 || bow.empty_units > 0 {
                eprintln!(
                    "warning: {} out-of-vocabulary tokens, {} units without any known token",
                    bow.oov_tokens, bow.empty_units
                );
            }
            run.write(out, &reps_bytes(&bow.reps, f)?)?;
        }
        Command::Encode { x, y, lambda, lambda_grid, blocks, delay } => {
            let f = format_or(cli, Format::Csv, &[Format::Csv, Format::Json])?;
            let xs = bxm1::load_matrix(run.input(x))?;
            let ys = bxm1::load_scan_series(run.input(y))?;
            let ym = encoding_targets(&xs, &ys)?;
            let choice = match (lambda, lambda_grid) {
                (Some(l), _) => LambdaChoice::Fixed(*l),
                (None, Some(g)) => LambdaChoice::Grid(g.clone()),
                (None, None) => LambdaChoice::Grid(DEFAULT_LAMBDA_GRID.to_vec()),
            };
            let xb = encode::split_blocks(xs.values(), *blocks)?;
            let yb = encode::split_blocks(&ym, *blocks)?;
            let regions = ys.region_of_voxel();
            let report = encode::block_cv(&xb, &yb, &choice, Some(regions))?;
            let ev = tables::voxel_ev(&report);
            match f {
                Format::Json => {
                    let mut v = tables::folds_json(&report, *delay);
                    v["per_voxel_ev"] = json!(ev);
                    run.emit(out, pretty(&v)?)?;
                }
                _ => {
                    run.emit(out, tables::voxel_ev_csv(&ev, regions))?;
                    if let Some(o) = out {
                        run.write(&sidecar(o, "regions.csv"), tables::region_ev_csv(&ev, regions).as_bytes())?;
                        run.write(&sidecar(o, "folds.json"), pretty(&tables::folds_json(&report, *delay))?.as_bytes())?;
                    }
                }
            }
        }
        Command::SynthReps { n, d, context_series, perturb, rotate } => {
            let f = format_or(cli, Format::Bxm1, &[Format::Bxm1, Format::Csv])?;
            let dir = required_output(cli)?;
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let ext = if f == Format::Csv { "csv" } else { "bxm1" };
            let base = synth::synth_reps(*n, *d, cli.seed)?;
            run.write(&dir.join(format!("base.{ext}")), &reps_bytes(&base, f)?)?;
            if *rotate {
                run.write(&dir.join(format!("rotated.{ext}")), &reps_bytes(&synth::rotated(&base, cli.seed)?, f)?)?;
            }
            if let Some(m) = context_series {
                let mut list = String::new();
                for (c, set) in synth::context_series(&base, *m, *perturb, cli.seed)?.iter().enumerate() {
                    let name = format!("ctx_c{c}.{ext}");
                    run.write(&dir.join(&name), &reps_bytes(set, f)?)?;
                    list.push_str(&name);
                    list.push('\n');
                }
                run.write(&dir.join("series.txt"), list.as_bytes())?;
            }
        }
        Command::SynthBrain {
            reps,
            lag_scans,
            noise,
            regions,
            signal_regions,
            voxels_per_region,
            subjects,
            identity_map,
            scan_period,
        } => {
            let f = format_or(cli, Format::Bxm1, &[Format::Bxm1, Format::Csv])?;
            let dir = required_output(cli)?;
            let reps = bxm1::load_matrix(run.input(reps))?;
            let spec = BrainSpec {
                lag_scans: *lag_scans,
                noise: *noise,
                regions: *regions,
                voxels_per_region: *voxels_per_region,
                signal_regions: signal_regions.clone().unwrap_or_else(|| (0..*regions).collect()),
                subjects: *subjects,
                identity_map: *identity_map,
                scan_period_s: *scan_period,
                seed: cli.seed,
            };
            let series = synth::synth_brain(&reps, &spec)?;
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let ext = if f == Format::Csv { "csv" } else { "bxm1" };
            for s in &series {
                run.write(&dir.join(format!("{}.{ext}", s.subject_id)), &scan_bytes(s, f)?)?;
            }
        }
        Command::Replay { .. } => unreachable!("replay is handled before dispatch"),
    }
    Ok(run)
}

/// Series used for ranking, and per subject the voxels that survived cleaning.
fn select_inputs(subjects: &[ScanSeries], raw: bool) -> Result<(Vec<ScanSeries>, Vec<VoxelMask>)> {
    if raw {
        let all = subjects
            .iter()
            .map(|s| VoxelMask { keep: vec![true; s.n_voxels()], provenance: "raw".into() })
            .collect();
        return Ok((subjects.to_vec(), all));
    }
    let cfg = PreprocessConfig::default();
    Ok(subjects.iter().map(|s| brainprep::preprocess(s, &cfg)).collect::<repstab_core::Result<Vec<_>>>()?.into_iter().unzip())
}

/// Scan rows matching X: the `scan{s}` rows when X is scan-indexed, else all rows.
pub fn encoding_targets(x: &RepresentationSet, y: &ScanSeries) -> Result<Matrix> {
    let idx: Option<Vec<usize>> =
        x.stimulus_ids().iter().map(|id| id.strip_prefix("scan").and_then(|s| s.parse().ok())).collect();
    match idx {
        Some(idx) => {
            if let Some(&s) = idx.iter().find(|&&s| s >= y.n_scans()) {
                return Err(repstab_core::Error::Bounds { index: s, len: y.n_scans() }.into());
            }
            Ok(y.values().select_rows(&idx))
        }
        None if x.n_stimuli() == y.n_scans() => Ok(y.values().clone()),
        None => Err(repstab_core::Error::Alignment(format!("{} X rows vs {} scans", x.n_stimuli(), y.n_scans())).into()),
    }
}

fn digests(paths: &[PathBuf], base: Option<&Path>) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let name = match base {
                Some(b) => p.strip_prefix(b).unwrap_or(p).to_string_lossy().into_owned(),
                None => fs::canonicalize(p).map_err(|e| Error::io(p, e))?.to_string_lossy().into_owned(),
            };
            Ok(FileDigest { path: name, sha256: manifest::digest_file(p)? })
        })
        .collect()
}

fn output_base(cli: &Cli, out: &Path) -> PathBuf {
    if cli.command.writes_directory() {
        out.to_path_buf()
    } else {
        out.parent().unwrap_or(Path::new("")).to_path_buf()
    }
}

fn build_manifest(cli: &Cli, args: &[String], run: &Run) -> Result<Option<RunManifest>> {
    let Some(out) = cli.output.as_deref() else { return Ok(None) };
    let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
    Ok(Some(RunManifest {
        command: cli.command.name().to_string(),
        args: args.to_vec(),
        cwd: cwd.to_string_lossy().into_owned(),
        inputs: digests(&run.inputs, None)?,
        outputs: digests(&run.outputs, Some(&output_base(cli, out)))?,
        config: serde_json::to_value(cli)?,
        seed: cli.seed,
        tool_version: TOOL_VERSION.to_string(),
    }))
}

/// Runs one parsed command; `args` are recorded in the manifest.
pub fn execute(cli: &Cli, args: &[String]) -> Result<Run> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, cli.threads);
    }
    let run = par::with_threads(cli.threads, || dispatch(cli))??;
    if let Some(m) = build_manifest(cli, args, &run)? {
        let out = cli.output.as_deref().expect("manifest implies output");
        m.write(&manifest::manifest_path(out, cli.command.writes_directory()))?;
    }
    Ok(run)
}

/// Re-runs a manifest in a scratch directory and checks every output digest.
pub fn replay(path: &Path, threads: Option<usize>) -> Result<Run> {
    let m = RunManifest::read(path)?;
    m.verify_inputs()?;
    let mut argv = vec![OsString::from("repstab")];
    argv.extend(m.args.iter().map(OsString::from));
    let mut cli = Cli::try_parse_from(argv).map_err(|e| Error::Manifest(format!("recorded arguments no longer parse: {e}")))?;
    if cli.command.name() != m.command {
        return Err(Error::Manifest(format!("recorded command {} but arguments run {}", m.command, cli.command.name())));
    }
    if threads.is_some() {
        cli.threads = threads;
    }
    let original = cli.output.clone().ok_or_else(|| Error::Manifest("recorded run has no output".into()))?;
    if std::env::current_dir().ok().as_deref() != Some(Path::new(&m.cwd)) {
        std::env::set_current_dir(&m.cwd).map_err(|e| Error::io(&m.cwd, e))?;
    }
    let scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let out = if cli.command.writes_directory() {
        scratch.path().join("out")
    } else {
        scratch.path().join(original.file_name().unwrap_or_default())
    };
    cli.output = Some(out.clone());
    let fresh = par::with_threads(cli.threads, || dispatch(&cli))??;
    let now = digests(&fresh.outputs, Some(&output_base(&cli, &out)))?;
    for want in &m.outputs {
        match now.iter().find(|d| d.path == want.path) {
            Some(d) if d.sha256 == want.sha256 => {}
            Some(_) => return Err(Error::Manifest(format!("output {} differs on replay", want.path))),
            None => return Err(Error::Manifest(format!("replay did not produce {}", want.path))),
        }
    }
    if now.len() != m.outputs.len() {
        return Err(Error::Manifest(format!("replay produced {} outputs, manifest lists {}", now.len(), m.outputs.len())));
    }
    Ok(Run { inputs: vec![path.to_path_buf()], outputs: Vec::new(), stdout: format!("replayed {} outputs: identical\n", now.len()) })
}

/// Parses `argv` (program name first), runs it and returns the exit code.
pub fn run_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &args) {
        Ok(run) => {
            print!("{}", run.stdout);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}
