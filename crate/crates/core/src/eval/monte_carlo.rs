use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{Architecture, ExperimentConfig};
use super::metrics::MetricsReport;
use crate::data::{balanced_split, LabeledPixels};
use crate::error::{Error, Result};
use crate::net::{
    extract_heatmap, predict_all, train, AttentionCnnModel, MinMaxScaler, Samples, TrainHistory,
    TrainOptions,
};
use crate::select::Heatmap;

/// One row of the per-run metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    /// Depth name without the attention suffix, e.g. `CNN-2`.
    pub arch: String,
    pub attention: bool,
    pub aa: f64,
    pub kappa: f64,
    pub epochs: usize,
    pub seconds: f64,
}

impl RunRecord {
    pub fn architecture(&self) -> Result<Architecture> {
        let mut a: Architecture = self.arch.parse()?;
        a.attention = self.attention;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub arch: Architecture,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub arch: Architecture,
    pub completed: usize,
    pub failed: usize,
    pub aa_mean: f64,
    pub aa_std: f64,
    pub kappa_mean: f64,
    pub kappa_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub base_seed: u64,
    pub runs: usize,
    pub bands: usize,
    pub aggregates: Vec<Aggregate>,
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl MonteCarloReport {
    pub fn aggregate(&self, arch: Architecture) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.arch == arch)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("report: {e}")))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("report: {e}")))
    }

    pub fn records_csv(&self) -> Result<String> {
        records_to_csv(&self.records)
    }
}

pub fn records_to_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)
            .map_err(|e| Error::Parse(format!("run records: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Parse(format!("run records: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn records_from_csv(text: &str) -> Result<Vec<RunRecord>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| Error::Parse(format!("run records: {e}"))))
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Mean and sample standard deviation of AA and kappa per architecture.
/// Records are reduced in run order whatever order they arrive in.
pub fn aggregate(
    archs: &[Architecture],
    records: &[RunRecord],
    failures: &[RunFailure],
) -> Result<Vec<Aggregate>> {
    let mut out = Vec::with_capacity(archs.len());
    for &arch in archs {
        let mut rs: Vec<&RunRecord> = Vec::new();
        for r in records {
            if r.architecture()? == arch {
                rs.push(r);
            }
        }
        rs.sort_by_key(|r| r.run);
        let aa: Vec<f64> = rs.iter().map(|r| r.aa).collect();
        let kappa: Vec<f64> = rs.iter().map(|r| r.kappa).collect();
        let (aa_mean, aa_std) = mean_std(&aa);
        let (kappa_mean, kappa_std) = mean_std(&kappa);
        out.push(Aggregate {
            arch,
            completed: rs.len(),
            failed: failures.iter().filter(|f| f.arch == arch).count(),
            aa_mean,
            aa_std,
            kappa_mean,
            kappa_std,
        });
    }
    Ok(out)
}

/// Scaled training, validation and test sets of one run.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub run: usize,
    pub seed: u64,
    pub num_classes: usize,
    pub scaler: MinMaxScaler,
    pub train: Samples,
    pub validation: Samples,
    pub test: Samples,
}

/// Balanced split with seed `seed`, min-max scaled on the training part.
pub fn prepare_run(pixels: &LabeledPixels, run: usize, seed: u64) -> Result<PreparedRun> {
    let split = balanced_split(pixels, seed)?;
    let scaler = MinMaxScaler::fit(&split.train)?;
    Ok(PreparedRun {
        run,
        seed,
        num_classes: split.num_classes,
        train: scaler.transform(&split.train)?,
        validation: scaler.transform(&split.validation)?,
        test: scaler.transform(&split.test)?,
        scaler,
    })
}

/// Result of training one architecture in one run.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub record: RunRecord,
    pub metrics: MetricsReport,
    pub model: AttentionCnnModel,
    pub history: TrainHistory,
}

/// Trains `arch` from scratch on a prepared run and evaluates it on the
/// test part. Initialization and batch order are seeded with the run seed.
pub fn train_and_evaluate(
    prep: &PreparedRun,
    arch: Architecture,
    opts: &TrainOptions,
) -> Result<TrainedRun> {
    let watch = Stopwatch::start();
    let cfg = arch.net_config(prep.num_classes, prep.seed);
    let mut model = AttentionCnnModel::new(cfg, prep.train.bands())?;
    let opts = TrainOptions {
        seed: prep.seed,
        ..opts.clone()
    };
    let history = train(&mut model, &prep.train, &prep.validation, &opts)?;
    let predictions = predict_all(&model, &prep.test)?;
    let metrics = MetricsReport::evaluate(&predictions, prep.test.labels(), prep.num_classes)?;
    let record = RunRecord {
        run: prep.run,
        arch: format!("CNN-{}", arch.blocks),
        attention: arch.attention,
        aa: metrics.average_accuracy,
        kappa: metrics.kappa,
        epochs: history.epochs.len(),
        seconds: watch.seconds(),
    };
    info!(
        "run {} {arch}: AA {:.4} kappa {:.4} after {} epochs",
        prep.run, record.aa, record.kappa, record.epochs
    );
    Ok(TrainedRun {
        record,
        metrics,
        model,
        history,
    })
}

/// What one (run, architecture) cell of the protocol produced.
pub(crate) struct CellOutcome {
    pub run: usize,
    pub arch: Architecture,
    pub result: Result<(RunRecord, Option<Heatmap>)>,
}

/// Runs every configured architecture on every run, optionally extracting
/// the band heatmap of attention models from the training set.
pub(crate) fn run_protocol(
    config: &ExperimentConfig,
    pixels: &LabeledPixels,
    with_heatmaps: bool,
    jobs: usize,
) -> Vec<CellOutcome> {
    let one_run = |r: usize| -> Vec<CellOutcome> {
        let prep = match prepare_run(pixels, r, config.run_seed(r)) {
            Ok(p) => p,
            Err(e) => {
                let msg = e.to_string();
                return config
                    .architectures
                    .iter()
                    .map(|&arch| CellOutcome {
                        run: r,
                        arch,
                        result: Err(Error::Data(msg.clone())),
                    })
                    .collect();
            }
        };
        config
            .architectures
            .iter()
            .map(|&arch| {
                let result = train_and_evaluate(&prep, arch, &config.train).and_then(|t| {
                    let heat = if with_heatmaps && arch.attention {
                        let h = extract_heatmap(&t.model, &prep.train, None)?;
                        Some(Heatmap::new(
                            h.scores().to_vec(),
                            vec![format!("run{r}:{arch}")],
                        )?)
                    } else {
                        None
                    };
                    Ok((t.record, heat))
                });
                CellOutcome { run: r, arch, result }
            })
            .collect()
    };
    map_runs(config.runs, jobs, one_run)
        .into_iter()
        .flatten()
        .collect()
}

#[cfg(feature = "parallel")]
fn map_runs<T: Send>(runs: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    use rayon::prelude::*;
    if jobs <= 1 {
        return (0..runs).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| (0..runs).into_par_iter().map(&f).collect()),
        Err(e) => {
            warn!("could not start {jobs} worker threads ({e}), running sequentially");
            (0..runs).map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn map_runs<T>(runs: usize, jobs: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    if jobs > 1 {
        warn!("built without parallel support, running {runs} runs sequentially");
    }
    (0..runs).map(f).collect()
}

pub(crate) fn collect(
    config: &ExperimentConfig,
    bands: usize,
    cells: Vec<CellOutcome>,
) -> Result<(MonteCarloReport, Vec<Heatmap>)> {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut heatmaps = Vec::new();
    for c in cells {
        match c.result {
            Ok((rec, heat)) => {
                records.push(rec);
                heatmaps.extend(heat);
            }
            Err(e) => {
                warn!("run {} {} failed: {e}", c.run, c.arch);
                failures.push(RunFailure {
                    run: c.run,
                    arch: c.arch,
                    error: e.to_string(),
                });
            }
        }
    }
    let aggregates = aggregate(&config.architectures, &records, &failures)?;
    Ok((
        MonteCarloReport {
            base_seed: config.base_seed,
            runs: config.runs,
            bands,
            aggregates,
            records,
            failures,
        },
        heatmaps,
    ))
}

/// Monte-Carlo cross-validation: for run `r` the pixels are re-split with
/// seed `base_seed + r` and every architecture is trained and tested.
/// Failed runs are recorded and left out of the aggregates.
pub fn monte_carlo(
    config: &ExperimentConfig,
    pixels: &LabeledPixels,
    jobs: usize,
) -> Result<MonteCarloReport> {
    config.validate()?;
    let cells = run_protocol(config, pixels, false, jobs);
    Ok(collect(config, pixels.bands, cells)?.0)
}

/// Wall-clock timer that reads zero where no clock is available.
pub(crate) struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.start.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        return 0.0;
    }
}
