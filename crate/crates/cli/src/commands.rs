use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use specband::data::{
    balanced_split, header_path_for, load_cube, load_ground_truth, parse_index_list, synth_cube, to_pixels,
    write_cube, write_ground_truth, write_reduced, LabeledPixels, SynthSpec,
};
use specband::eval::{
    band_selection_pipeline, monte_carlo, prepare_run, train_and_evaluate, Architecture,
    DataSource, ExperimentConfig, MetricsReport, PipelineReport,
};
use specband::net::{
    encode_checkpoint, extract_heatmap, predict_all, read_checkpoint, Checkpoint, MinMaxScaler,
    TrainHistory, TrainOptions,
};
use specband::select::{aggregate_heatmaps, select_bands, BandSelection, Heatmap, DEFAULT_LAMBDAS};

use crate::fail::{CliResult, Failure, Stage};
use crate::manifest::{unix_now, RunManifest, Writer};
use crate::{
    Cli, Command, DataArgs, EvalArgs, PipelineArgs, ReduceArgs, SelectArgs, SynthArgs, TrainArgs,
    TrainingArgs,
};

pub fn run(cli: &Cli, argv: Vec<String>) -> CliResult<()> {
    let started = unix_now();
    let mut writer = Writer::new(&cli.out_dir)?;
    let (name, seed, config) = match &cli.command {
        Command::Train(a) => ("train", train(cli, a, &mut writer)?),
        Command::Select(a) => ("select", select(cli, a, &mut writer)?),
        Command::Pipeline(a) => ("pipeline", pipeline(cli, a, &mut writer)?),
        Command::Reduce(a) => ("reduce", reduce(cli, a, &mut writer)?),
        Command::Synth(a) => ("synth", synth(cli, a, &mut writer)?),
        Command::Eval(a) => ("eval", eval(cli, a, &mut writer)?),
    }
    .flatten_seed();
    let path = writer.finish(RunManifest {
        command: name.into(),
        argv,
        seed,
        jobs: cli.jobs,
        started_unix: started,
        finished_unix: 0,
        config,
        artifacts: Vec::new(),
    })?;
    println!("manifest: {}", path.display());
    Ok(())
}

/// Seed actually used and the resolved settings as TOML.
type Outcome = (u64, String);

trait FlattenSeed {
    fn flatten_seed(self) -> (&'static str, u64, String);
}

impl FlattenSeed for (&'static str, Outcome) {
    fn flatten_seed(self) -> (&'static str, u64, String) {
        (self.0, self.1 .0, self.1 .1)
    }
}

fn to_toml<T: Serialize>(value: &T) -> CliResult<String> {
    toml::to_string(value).map_err(|e| Failure::data(format!("serializing settings: {e}")))
}

fn experiment_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    match &cli.config {
        None => Ok(ExperimentConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text).map_err(|e| Failure::config(e.to_string()))
        }
    }
}

fn apply_training(opts: &mut TrainOptions, t: &TrainingArgs) {
    if let Some(v) = t.epochs {
        opts.max_epochs = v;
    }
    if let Some(v) = t.patience {
        opts.patience = v;
    }
    if let Some(v) = t.batch_size {
        opts.batch_size = v;
    }
    if let Some(v) = t.learning_rate {
        opts.adam.lr = v;
    }
}

fn parse_archs(names: &[String]) -> CliResult<Vec<Architecture>> {
    names
        .iter()
        .map(|n| n.parse().map_err(|e: specband::Error| Failure::config(e.to_string())))
        .collect()
}

fn validate_lambdas(lambdas: &[f64]) -> CliResult<()> {
    match lambdas.iter().find(|l| !(**l > 0.0 && **l < 0.5)) {
        Some(l) => Err(Failure::config(format!("contamination rate {l} outside (0, 0.5)"))),
        None => Ok(()),
    }
}

/// Flags take precedence over the configuration file.
fn data_source(args: &DataArgs, config: &ExperimentConfig) -> CliResult<DataSource> {
    match (&args.data, &args.gt) {
        (Some(cube), Some(gt)) => Ok(DataSource::Files {
            cube: cube.clone(),
            header: args.header.clone(),
            ground_truth: gt.clone(),
        }),
        (Some(cube), None) => Err(Failure::data(format!(
            "no ground truth given for {} (pass --gt)",
            cube.display()
        ))),
        (None, Some(_)) => Err(Failure::config("--gt given without --data")),
        (None, None) => config
            .data
            .clone()
            .ok_or_else(|| Failure::config("no data: pass --data and --gt or set [data] in the config")),
    }
}

fn load_pixels(source: &DataSource) -> CliResult<LabeledPixels> {
    let (cube, gt) = match source {
        DataSource::Files {
            cube,
            header,
            ground_truth,
        } => {
            let header = header.clone().unwrap_or_else(|| header_path_for(cube));
            let c = load_cube(cube, &header).stage("loading cube")?;
            if !ground_truth.exists() {
                return Err(Failure::data(format!(
                    "ground truth {} not found",
                    ground_truth.display()
                )));
            }
            let g = load_ground_truth(ground_truth, c.rows(), c.cols())
                .stage("loading ground truth")?;
            (c, g)
        }
        DataSource::Synthetic(spec) => synth_cube(spec).stage("generating synthetic cube")?,
    };
    let px = to_pixels(&cube, &gt).stage("extracting labeled pixels")?;
    info!(
        "{} labeled pixels, {} bands, class counts {:?}",
        px.len(),
        px.bands,
        px.class_counts
    );
    Ok(px)
}

fn history_csv(h: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_loss,train_accuracy,val_accuracy\n");
    for e in &h.epochs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.train_loss, e.train_accuracy, e.val_accuracy
        ));
    }
    out
}

#[derive(Serialize)]
struct TrainSettings {
    data: DataSource,
    arch: Architecture,
    seed: u64,
    train: TrainOptions,
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    arch: Architecture,
    seed: u64,
    epochs: usize,
    best_epoch: usize,
    best_val_accuracy: f64,
    test: &'a MetricsReport,
}

fn train(cli: &Cli, a: &TrainArgs, w: &mut Writer) -> CliResult<Outcome> {
    let config = experiment_config(cli)?;
    let arch = Architecture::new(a.blocks, a.attention);
    arch.net_config(2, 0)
        .validate()
        .map_err(|e| Failure::config(e.to_string()))?;
    let mut opts = config.train.clone();
    apply_training(&mut opts, &a.training);
    let source = data_source(&a.data, &config)?;
    let seed = cli.seed.unwrap_or(config.base_seed);
    let px = load_pixels(&source)?;

    let prep = prepare_run(&px, 0, seed).stage("splitting")?;
    let t = train_and_evaluate(&prep, arch, &opts).stage("training")?;
    let ckpt = Checkpoint {
        model: t.model.clone(),
        scaler: Some(prep.scaler.clone()),
    };
    w.write("checkpoint", "checkpoint.bin", encode_checkpoint(&ckpt).stage("checkpoint")?)?;
    w.write("history", "history.csv", history_csv(&t.history))?;
    let summary = TrainSummary {
        arch,
        seed,
        epochs: t.history.epochs.len(),
        best_epoch: t.history.best_epoch,
        best_val_accuracy: t.history.best_val_accuracy,
        test: &t.metrics,
    };
    w.write("metrics", "metrics.toml", to_toml(&summary)?)?;
    if arch.attention {
        let h = extract_heatmap(&t.model, &prep.train, None).stage("heatmap")?;
        w.write("heatmap", "heatmap.csv", h.to_csv())?;
    }
    println!(
        "{arch}: test AA {:.4}, kappa {:.4}, {} epochs (best {})",
        t.metrics.average_accuracy,
        t.metrics.kappa,
        t.history.epochs.len(),
        t.history.best_epoch
    );
    let settings = TrainSettings {
        data: source,
        arch,
        seed,
        train: opts,
    };
    Ok((seed, to_toml(&settings)?))
}

fn selection_file(lambda: f64) -> String {
    format!("selection_lambda_{lambda}.toml")
}

fn write_selections(w: &mut Writer, selections: &[BandSelection]) -> CliResult<()> {
    for s in selections {
        w.write("selection", selection_file(s.lambda), s.to_report().stage("selection report")?)?;
        println!(
            "lambda {}: {} bands {:?}",
            s.lambda,
            s.selected.len(),
            s.selected
        );
    }
    Ok(())
}

/// Heatmap of a checkpoint over the training split of `seed`.
fn checkpoint_heatmap(path: &Path, px: &LabeledPixels, seed: u64) -> CliResult<Heatmap> {
    let ckpt = read_checkpoint(path).stage("reading checkpoint")?;
    let split = balanced_split(px, seed).stage("splitting")?;
    let scaler = match &ckpt.scaler {
        Some(s) => s.clone(),
        None => MinMaxScaler::fit(&split.train).stage("scaling")?,
    };
    let train = scaler.transform(&split.train).stage("scaling")?;
    let h = extract_heatmap(&ckpt.model, &train, None).stage("heatmap")?;
    Heatmap::new(h.scores().to_vec(), vec![path.display().to_string()]).stage("heatmap")
}

#[derive(Serialize)]
struct SelectSettings {
    heatmaps: Vec<PathBuf>,
    checkpoints: Vec<PathBuf>,
    lambdas: Vec<f64>,
    seed: u64,
}

fn select(cli: &Cli, a: &SelectArgs, w: &mut Writer) -> CliResult<Outcome> {
    let config = experiment_config(cli)?;
    let lambdas = if a.lambda.is_empty() {
        DEFAULT_LAMBDAS.to_vec()
    } else {
        a.lambda.clone()
    };
    validate_lambdas(&lambdas)?;
    if a.heatmaps.is_empty() && a.checkpoints.is_empty() {
        return Err(Failure::config("pass --heatmaps or --checkpoints"));
    }
    let seed = cli.seed.unwrap_or(config.base_seed);
    let mut maps = Vec::new();
    for p in &a.heatmaps {
        maps.push(Heatmap::read_csv(p).stage(&format!("reading {}", p.display()))?);
    }
    if !a.checkpoints.is_empty() {
        let px = load_pixels(&data_source(&a.data, &config)?)?;
        for p in &a.checkpoints {
            maps.push(checkpoint_heatmap(p, &px, seed)?);
        }
    }
    // Mismatched inputs are a property of the files, not of the flags.
    let heatmap = aggregate_heatmaps(&maps)
        .map_err(|e| Failure::data(format!("aggregating heatmaps: {e}")))?;
    w.write("heatmap", "heatmap.csv", heatmap.to_csv())?;
    let selections = lambdas
        .iter()
        .map(|&l| select_bands(&heatmap, l))
        .collect::<specband::Result<Vec<_>>>()
        .stage("selecting bands")?;
    write_selections(w, &selections)?;
    let settings = SelectSettings {
        heatmaps: a.heatmaps.clone(),
        checkpoints: a.checkpoints.clone(),
        lambdas,
        seed,
    };
    Ok((seed, to_toml(&settings)?))
}

fn write_pipeline(w: &mut Writer, report: &PipelineReport) -> CliResult<()> {
    w.write("heatmap", "heatmap.csv", report.heatmap.to_csv())?;
    for h in &report.run_heatmaps {
        let tag = h.provenance().join("_").replace(':', "_");
        w.write("run-heatmap", format!("heatmaps/{tag}.csv"), h.to_csv())?;
    }
    write_selections(w, &report.selections)?;
    w.write("report", "full/report.toml", report.full.to_text().stage("report")?)?;
    w.write("runs", "full/runs.csv", report.full.records_csv().stage("report")?)?;
    for agg in &report.full.aggregates {
        println!(
            "full {}: AA {:.4} ± {:.4}, kappa {:.4} ± {:.4} ({} runs, {} failed)",
            agg.arch, agg.aa_mean, agg.aa_std, agg.kappa_mean, agg.kappa_std, agg.completed, agg.failed
        );
    }
    for (i, r) in report.reduced.iter().enumerate() {
        let dir = format!("reduced/set{i}");
        let bands: String = r.bands.iter().map(|b| format!("{b}\n")).collect();
        w.write("reduced-bands", format!("{dir}/bands.txt"), bands)?;
        if let Some(rep) = &r.report {
            w.write("report", format!("{dir}/report.toml"), rep.to_text().stage("report")?)?;
            w.write("runs", format!("{dir}/runs.csv"), rep.records_csv().stage("report")?)?;
            for agg in &rep.aggregates {
                println!(
                    "lambda {:?} ({} bands) {}: AA {:.4} ± {:.4}, kappa {:.4} ± {:.4}",
                    r.lambdas,
                    r.bands.len(),
                    agg.arch,
                    agg.aa_mean,
                    agg.aa_std,
                    agg.kappa_mean,
                    agg.kappa_std
                );
            }
        }
        if let Some(e) = &r.error {
            w.write("reduced-error", format!("{dir}/error.txt"), e)?;
            println!("lambda {:?}: evaluation failed: {e}", r.lambdas);
        }
    }
    Ok(())
}

fn pipeline(cli: &Cli, a: &PipelineArgs, w: &mut Writer) -> CliResult<Outcome> {
    let mut config = experiment_config(cli)?;
    if let Some(r) = a.runs {
        config.runs = r;
    }
    if let Some(s) = cli.seed {
        config.base_seed = s;
    }
    if !a.arch.is_empty() {
        config.architectures = parse_archs(&a.arch)?;
    }
    if !a.lambda.is_empty() {
        config.lambdas = a.lambda.clone();
    }
    if a.no_reduced {
        config.evaluate_reduced = false;
    }
    apply_training(&mut config.train, &a.training);
    config.data = Some(data_source(&a.data, &config)?);
    config.validate().map_err(|e| Failure::config(e.to_string()))?;
    if config.attention_architectures().is_empty() {
        return Err(Failure::config("band selection needs an attention architecture (e.g. CNN-2A)"));
    }
    let px = load_pixels(config.data.as_ref().expect("set above"))?;
    let report = band_selection_pipeline(&config, &px, cli.jobs).stage("pipeline")?;
    write_pipeline(w, &report)?;
    let text = config.to_text().map_err(Failure::from)?;
    w.write("config", "config.toml", &text)?;
    Ok((config.base_seed, text))
}

/// Selection reports carry `selected`; anything else is read as a list.
fn read_selection(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(sel) = BandSelection::from_report(&text) {
        return Ok(sel.selected);
    }
    parse_index_list(&text).stage(&format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct ReduceSettings {
    cube: PathBuf,
    header: PathBuf,
    selection: PathBuf,
    bands: Vec<usize>,
    output: PathBuf,
}

fn reduce(cli: &Cli, a: &ReduceArgs, w: &mut Writer) -> CliResult<Outcome> {
    let header = a.header.clone().unwrap_or_else(|| header_path_for(&a.cube));
    let cube = load_cube(&a.cube, &header).stage("loading cube")?;
    let bands = read_selection(&a.selection)?;
    let out = w.path(&a.output);
    let out_header = header_path_for(&out);
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Failure::data(format!("cannot create {}: {e}", parent.display())))?;
    }
    let reduced = write_reduced(&cube, &bands, &out, &out_header).stage("reducing")?;
    w.record("cube", &a.output);
    w.record("header", header_path_for(&a.output));
    w.record("sidecar", specband::data::sidecar_path_for(&a.output));
    println!(
        "kept {} of {} bands in {}",
        reduced.bands(),
        cube.bands(),
        out.display()
    );
    let settings = ReduceSettings {
        cube: a.cube.clone(),
        header,
        selection: a.selection.clone(),
        bands,
        output: a.output.clone(),
    };
    Ok((cli.seed.unwrap_or(0), to_toml(&settings)?))
}

fn synth(cli: &Cli, a: &SynthArgs, w: &mut Writer) -> CliResult<Outcome> {
    let seed = cli.seed.unwrap_or(0);
    let spec = SynthSpec {
        bands: a.bands,
        classes: a.classes,
        planted: a.planted.clone(),
        sigma: a.sigma,
        rows: a.rows,
        cols: a.cols,
        seed,
    };
    let (cube, gt) = synth_cube(&spec).map_err(|e| Failure::config(e.to_string()))?;
    let data = PathBuf::from(format!("{}.bin", a.name));
    let gt_path = PathBuf::from(format!("{}_gt.bin", a.name));
    write_cube(&cube, &w.path(&data), &w.path(header_path_for(&data))).stage("writing cube")?;
    w.record("cube", &data);
    w.record("header", header_path_for(&data));
    write_ground_truth(&gt, &w.path(&gt_path)).stage("writing ground truth")?;
    w.record("ground-truth", &gt_path);
    println!(
        "{}x{}x{} cube with planted bands {:?} in {}",
        spec.rows,
        spec.cols,
        spec.bands,
        spec.planted,
        w.path(&data).display()
    );
    Ok((seed, to_toml(&spec)?))
}

#[derive(Serialize)]
struct EvalSettings {
    checkpoint: PathBuf,
    data: DataSource,
    seed: u64,
}

fn eval(cli: &Cli, a: &EvalArgs, w: &mut Writer) -> CliResult<Outcome> {
    let mut config = experiment_config(cli)?;
    if let Some(ck) = &a.checkpoint {
        let source = data_source(&a.data, &config)?;
        let seed = cli.seed.unwrap_or(config.base_seed);
        let ckpt = read_checkpoint(ck).stage("reading checkpoint")?;
        let px = load_pixels(&source)?;
        let split = balanced_split(&px, seed).stage("splitting")?;
        let scaler = match &ckpt.scaler {
            Some(s) => s.clone(),
            None => MinMaxScaler::fit(&split.train).stage("scaling")?,
        };
        let test = scaler.transform(&split.test).stage("scaling")?;
        let pred = predict_all(&ckpt.model, &test).stage("predicting")?;
        let metrics = MetricsReport::evaluate(&pred, test.labels(), ckpt.model.num_classes())
            .stage("metrics")?;
        w.write("metrics", "metrics.toml", to_toml(&metrics)?)?;
        println!(
            "{}: test AA {:.4}, kappa {:.4}",
            ckpt.model.config.name(),
            metrics.average_accuracy,
            metrics.kappa
        );
        let settings = EvalSettings {
            checkpoint: ck.clone(),
            data: source,
            seed,
        };
        return Ok((seed, to_toml(&settings)?));
    }

    if let Some(r) = a.runs {
        config.runs = r;
    }
    if let Some(s) = cli.seed {
        config.base_seed = s;
    }
    if !a.arch.is_empty() {
        config.architectures = parse_archs(&a.arch)?;
    }
    apply_training(&mut config.train, &a.training);
    config.data = Some(data_source(&a.data, &config)?);
    config.validate().map_err(|e| Failure::config(e.to_string()))?;
    let px = load_pixels(config.data.as_ref().expect("set above"))?;
    let report = monte_carlo(&config, &px, cli.jobs).stage("monte carlo")?;
    w.write("report", "report.toml", report.to_text().stage("report")?)?;
    w.write("runs", "runs.csv", report.records_csv().stage("report")?)?;
    for agg in &report.aggregates {
        println!(
            "{}: AA {:.4} ± {:.4}, kappa {:.4} ± {:.4} ({} runs, {} failed)",
            agg.arch, agg.aa_mean, agg.aa_std, agg.kappa_mean, agg.kappa_std, agg.completed, agg.failed
        );
    }
    let text = config.to_text().map_err(Failure::from)?;
    Ok((config.base_seed, text))
}
