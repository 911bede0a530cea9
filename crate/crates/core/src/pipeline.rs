//! End-to-end runs: affinities (read or synthesized) to fragments, merge
//! history, segmentation and evaluation, with every artifact written to an
//! output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agglomerate::{agglomerate, build_rag, extract_segmentation, Bins, MergeFunction, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::io;
use crate::malis::ORACLE_LIMIT;
use crate::metrics::{evaluate, EvalReport};
use crate::synth::SynthSpec;
use crate::watershed::{extract_fragments, Mode};
use crate::LabelVolume;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub merge_function: MergeFunction,
    pub threshold: f64,
    pub bins: usize,
    pub oracle_limit: usize,
    /// Affinity volume to segment. Exclusive with `synth`.
    pub affinities: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    /// Generate ground truth and affinities instead of reading them.
    pub synth: Option<SynthSpec>,
    pub output_dir: PathBuf,
    pub ignore_gt_background: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::ThreeD,
            merge_function: MergeFunction::default(),
            threshold: 0.5,
            bins: DEFAULT_BINS,
            oracle_limit: ORACLE_LIMIT,
            affinities: None,
            ground_truth: None,
            synth: None,
            output_dir: PathBuf::from("out"),
            ignore_gt_background: true,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|source| Error::Io { path: path.into(), source })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidThreshold(self.threshold));
        }
        Bins::new(self.bins)?;
        if let MergeFunction::Quantile(q) = self.merge_function {
            MergeFunction::quantile(q)?;
        }
        if self.oracle_limit == 0 {
            return Err(Error::Config("oracle_limit must be positive".into()));
        }
        match (&self.affinities, &self.synth) {
            (Some(_), Some(_)) => return Err(Error::Config("give either affinities or synth, not both".into())),
            (None, None) => return Err(Error::Config("no input: set affinities or synth".into())),
            (None, Some(spec)) => {
                spec.validate()?;
                if self.ground_truth.is_some() {
                    return Err(Error::Config("synth runs produce their own ground truth".into()));
                }
            }
            (Some(_), None) => {}
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir is empty".into()));
        }
        Ok(())
    }
}

/// Stage timings in seconds per megavoxel, with the columns of the usual
/// throughput table. Affinity prediction is outside this crate, so `unet`
/// is always `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub dataset: String,
    pub unet: Option<f64>,
    pub watershed: f64,
    pub agglomeration: f64,
    pub total: f64,
    pub megavoxels: f64,
    pub seconds: StageSeconds,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSeconds {
    pub watershed: f64,
    /// RAG construction, agglomeration and segmentation extraction.
    pub agglomeration: f64,
    pub total: f64,
}

impl Throughput {
    pub fn new(dataset: impl Into<String>, voxels: usize, seconds: StageSeconds) -> Self {
        let megavoxels = voxels as f64 / 1e6;
        Throughput {
            dataset: dataset.into(),
            unet: None,
            watershed: seconds.watershed / megavoxels,
            agglomeration: seconds.agglomeration / megavoxels,
            total: seconds.total / megavoxels,
            megavoxels,
            seconds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub shape: [usize; 3],
    pub fragments: usize,
    pub merges: usize,
    pub segments: usize,
    /// Absent when no ground truth was given.
    pub evaluation: Option<EvalReport>,
    pub throughput: Throughput,
    pub artifacts: Vec<PathBuf>,
}

fn distinct_nonzero(volume: &LabelVolume) -> usize {
    volume.labels().into_iter().filter(|&l| l != 0).count()
}

/// Runs every stage and writes `gt`, `affinities`, `fragments`,
/// `history.csv`, `segmentation` and `report.json` into `output_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|source| Error::Io { path: out.clone(), source })?;
    let mut artifacts = Vec::new();
    let mut record = |name: &str| {
        let path = out.join(name);
        artifacts.push(path.clone());
        path
    };

    let (aff, gt, dataset) = match (&config.affinities, &config.synth) {
        (Some(path), _) => {
            let aff = io::read_affinities(path).map_err(|e| e.in_stage("input"))?;
            let gt = match &config.ground_truth {
                Some(p) => Some(io::read_labels(p).map_err(|e| e.in_stage("input"))?),
                None => None,
            };
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (aff, gt, name)
        }
        (None, Some(spec)) => {
            let (gt, aff) = spec.generate::<f32>().map_err(|e| e.in_stage("input"))?;
            io::write_labels(&gt, record("gt")).map_err(|e| e.in_stage("input"))?;
            io::write_affinities(&aff, record("affinities")).map_err(|e| e.in_stage("input"))?;
            (aff, Some(gt), format!("synth-{}", spec.seed))
        }
        (None, None) => unreachable!("validated"),
    };
    if let Some(gt) = &gt {
        gt.check_shape(aff.shape()).map_err(|e| e.in_stage("input"))?;
    }

    let start = Instant::now();
    let fragments = extract_fragments(&aff, config.mode);
    let t_watershed = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let bins = Bins::new(config.bins)?;
    let rag = build_rag(&fragments, &aff, bins).map_err(|e| e.in_stage("build_rag"))?;
    let history = agglomerate(&rag, config.merge_function, config.threshold).map_err(|e| e.in_stage("agglomerate"))?;
    let segmentation = extract_segmentation(&fragments, &history, config.threshold);
    let t_agglomeration = start.elapsed().as_secs_f64();

    io::write_labels(&fragments, record("fragments")).map_err(|e| e.in_stage("watershed"))?;
    history.save(record("history.csv")).map_err(|e| e.in_stage("agglomerate"))?;
    io::write_labels(&segmentation, record("segmentation")).map_err(|e| e.in_stage("extract_segmentation"))?;

    let evaluation = match &gt {
        Some(gt) => Some(evaluate(&segmentation, gt, config.ignore_gt_background).map_err(|e| e.in_stage("evaluate"))?),
        None => None,
    };

    let seconds = StageSeconds {
        watershed: t_watershed,
        agglomeration: t_agglomeration,
        total: t_watershed + t_agglomeration,
    };
    let report_path = record("report.json");
    let report = PipelineReport {
        config: config.clone(),
        shape: aff.shape().dims(),
        fragments: distinct_nonzero(&fragments),
        merges: history.len(),
        segments: distinct_nonzero(&segmentation),
        evaluation,
        throughput: Throughput::new(dataset, aff.shape().len(), seconds),
        artifacts,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&report_path, text).map_err(|source| Error::Io { path: report_path.clone(), source })?;
    Ok(report)
}
