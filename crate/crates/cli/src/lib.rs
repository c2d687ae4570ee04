//! Command-line front end: argument parsing, dataset loading, and one
//! function per subcommand. Every run writes its artifacts and a
//! `summary-<command>.json` into `--out-dir`.

mod args;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use fisens::classifier::{accuracy, argmax, train_sgd, ClassifierModel, LabeledDataset, TrainConfig};
use fisens::experiments::{
    layer_sensitivity, one_pixel_attack, percentile_report, pixel_fi_map, random_pixel_attacks, roc_pr,
    score_dataset, simulate_outliers, ChannelMode, OutlierSpec, PixelFiMap, DEFAULT_VALUE_GRID,
};
use fisens::influence::{InfluenceRecord, Measure, Objective, ObjectiveKind};
use fisens::io;
use fisens::manifold::PerturbationTarget;

pub use args::*;

/// Parses `argv` and runs the command. Returns the process exit status:
/// 0 on success, 1 when validation or computation fails, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Train(a) => &a.common,
        Command::FiSample(a) => &a.common,
        Command::FiLayers(a) => &a.common,
        Command::FiDataset(a) => &a.common,
        Command::FiPixels(a) => &a.common,
        Command::Outliers(OutliersCommand::Simulate(a)) => &a.common,
        Command::Outliers(OutliersCommand::Scan(a)) => &a.common,
        Command::Outliers(OutliersCommand::Eval(a)) => &a.common,
        Command::Attack(AttackCommand::OnePixel(a)) => &a.common,
    };
    if common.workers == Some(0) {
        bail!("--workers must be positive");
    }
    fs::create_dir_all(&common.out_dir)
        .with_context(|| format!("cannot create output directory {}", common.out_dir.display()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;

    let start = Instant::now();
    let mut run = Run::new(&common.out_dir);
    let name = pool.install(|| -> Result<&'static str> {
        Ok(match &cli.command {
            Command::Train(a) => {
                train(a, &mut run)?;
                "train"
            }
            Command::FiSample(a) => {
                fi_sample(a, &mut run)?;
                "fi-sample"
            }
            Command::FiLayers(a) => {
                fi_layers(a, &mut run)?;
                "fi-layers"
            }
            Command::FiDataset(a) => {
                fi_dataset(a, &mut run)?;
                "fi-dataset"
            }
            Command::FiPixels(a) => {
                fi_pixels(a, &mut run)?;
                "fi-pixels"
            }
            Command::Outliers(OutliersCommand::Simulate(a)) => {
                outliers_simulate(a, &mut run)?;
                "outliers-simulate"
            }
            Command::Outliers(OutliersCommand::Scan(a)) => {
                outliers_scan(a, &mut run)?;
                "outliers-scan"
            }
            Command::Outliers(OutliersCommand::Eval(a)) => {
                outliers_eval(a, &mut run)?;
                "outliers-eval"
            }
            Command::Attack(AttackCommand::OnePixel(a)) => {
                attack_one_pixel(a, &mut run)?;
                "attack-one-pixel"
            }
        })
    })?;

    let summary = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(&cli.command)?,
        "seeds": run.seeds,
        "workers": pool.current_num_threads(),
        "timings": { "total_seconds": start.elapsed().as_secs_f64() },
        "outputs": run.outputs,
        "results": run.results,
    });
    let path = common.out_dir.join(format!("summary-{name}.json"));
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Artifacts and results collected for the run summary.
struct Run {
    out_dir: PathBuf,
    outputs: Vec<String>,
    seeds: serde_json::Map<String, Value>,
    results: serde_json::Map<String, Value>,
}

impl Run {
    fn new(out_dir: &Path) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
            seeds: Default::default(),
            results: Default::default(),
        }
    }

    /// Path for an output file, recorded in the summary.
    fn output(&mut self, file: &str) -> PathBuf {
        self.outputs.push(file.to_string());
        self.out_dir.join(file)
    }

    fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.into(), json!(seed));
    }

    fn result(&mut self, name: &str, value: impl Serialize) -> Result<()> {
        self.results.insert(name.into(), serde_json::to_value(value)?);
        Ok(())
    }
}

fn load(src: &DataSource) -> Result<LabeledDataset> {
    let data = match (&src.images, &src.labels, &src.csv) {
        (Some(images), Some(labels), None) => io::read_idx(images, labels)
            .with_context(|| format!("reading {} / {}", images.display(), labels.display()))?,
        (None, None, Some(csv)) => {
            let shape = src.shape.context("--csv needs --shape")?;
            io::read_csv_dataset(csv, shape).with_context(|| format!("reading {}", csv.display()))?
        }
        _ => bail!("give a dataset with --images and --labels, or --csv and --shape"),
    };
    Ok(match src.limit {
        Some(n) => data.head(n),
        None => data,
    })
}

fn load_test(src: &TestSource, shape: Option<fisens::classifier::ImageShape>) -> Result<LabeledDataset> {
    load(&DataSource {
        images: src.test_images.clone(),
        labels: src.test_labels.clone(),
        csv: src.test_csv.clone(),
        shape,
        limit: src.test_limit,
    })
}

fn load_model(path: &Path) -> Result<ClassifierModel> {
    io::load_model(path).with_context(|| format!("loading model {}", path.display()))
}

/// Samples whose ids are listed, in the listed order.
fn select_ids(data: &LabeledDataset, ids: &Option<Vec<usize>>) -> Result<LabeledDataset> {
    let Some(ids) = ids else {
        return Ok(data.clone());
    };
    let positions = ids
        .iter()
        .map(|id| {
            data.ids()
                .iter()
                .position(|x| x == id)
                .with_context(|| format!("no sample with id {id}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(data.select(&positions))
}

fn train(a: &TrainArgs, run: &mut Run) -> Result<()> {
    let data = load(&a.data)?;
    let Some(&input) = a.arch.first() else {
        bail!("--arch needs at least an input and an output width");
    };
    if input != data.shape().len() {
        bail!("--arch starts at {input} but images have {} values", data.shape().len());
    }
    let init = ClassifierModel::random(&a.arch, a.activation, a.seed)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        seed: a.seed,
    };
    let trained = train_sgd(&init, &data, &config)?;
    io::save_model(&trained.model, run.output("model.json"))?;

    let mut losses = String::from("epoch,mean_cross_entropy\n");
    for (e, l) in trained.epoch_losses.iter().enumerate() {
        losses.push_str(&format!("{e},{l}\n"));
    }
    fs::write(run.output("losses.csv"), losses)?;

    run.seed("init_and_shuffle", a.seed);
    run.result("train_config", config)?;
    run.result("samples", data.len())?;
    run.result("final_loss", trained.epoch_losses.last())?;
    run.result("train_accuracy", accuracy(&trained.model, &data)?)?;
    Ok(())
}

fn fi_sample(a: &ScoreArgs, run: &mut Run) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = select_ids(&load(&a.data)?, &a.ids)?;
    let records = score_dataset(&model, &data, &a.target, a.objective, &a.measures)?;
    io::write_records(&records, run.output("records.csv"))?;
    summarize_records(&records, run)
}

fn summarize_records(records: &[InfluenceRecord], run: &mut Run) -> Result<()> {
    let warnings = records.iter().filter(|r| r.warning.is_some()).count();
    let max_fi = records.iter().filter_map(|r| r.fi).fold(f64::NAN, f64::max);
    run.result("records", records.len())?;
    run.result("manifold_warnings", warnings)?;
    run.result("max_fi", max_fi)?;
    Ok(())
}

fn fi_layers(a: &LayersArgs, run: &mut Run) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = load(&a.data)?;
    data.validate_for(&model)?;
    let rows = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let x = data.image(i);
            let objective = a.objective.bind(Some(data.label(i)))?;
            let s = layer_sensitivity(&model, x, objective)?;
            let probs = model.forward(x)?;
            let y_pred = argmax(&probs);
            let record = |target: String, v: &fisens::influence::FiValue| InfluenceRecord {
                sample_id: data.id(i),
                target,
                fi: Some(v.fi),
                jacobian_norm: None,
                cook_max: None,
                y_true: Some(data.label(i)),
                y_pred,
                p_pred: probs[y_pred],
                residual_ratio: Some(v.residual_ratio),
                warning: v.warning,
            };
            let mut out: Vec<InfluenceRecord> =
                s.per_layer.iter().enumerate().map(|(l, v)| record(format!("layer:{l}"), v)).collect();
            out.push(record("all-params".into(), &s.all_params));
            Ok(out)
        })
        .collect::<fisens::Result<Vec<_>>>()?;

    let layers = model.layer_count();
    let mut means = vec![0.0; layers + 1];
    let mut violations = 0;
    for sample in &rows {
        let all = sample[layers].fi.unwrap_or(0.0);
        for (l, r) in sample.iter().enumerate() {
            means[l] += r.fi.unwrap_or(0.0) / rows.len() as f64;
            if l < layers && r.fi.unwrap_or(0.0) > all + 1e-8 {
                violations += 1;
            }
        }
    }
    let records: Vec<InfluenceRecord> = rows.into_iter().flatten().collect();
    io::write_records(&records, run.output("layers.csv"))?;
    run.result("mean_fi_per_layer", &means[..layers])?;
    run.result("mean_fi_all_params", means[layers])?;
    run.result("dominance_violations", violations)?;
    Ok(())
}

fn fi_dataset(a: &DatasetArgs, run: &mut Run) -> Result<()> {
    let model = load_model(&a.model)?;
    let train = load(&a.data)?;
    let test = load_test(&a.test, a.data.shape)?;
    let mut summary = serde_json::Map::new();
    for (name, data) in [("train", &train), ("test", &test)] {
        let records = score_dataset(&model, data, &a.target, a.objective, &[Measure::Fi])?;
        io::write_records(&records, run.output(&format!("records-{name}.csv")))?;
        let scores: Vec<f64> = records.iter().filter_map(|r| r.fi).collect();
        let table = percentile_report(&scores, &a.percentiles)?;
        io::write_percentiles(&table, run.output(&format!("percentiles-{name}.csv")))?;
        summary.insert(name.into(), serde_json::to_value(&table)?);
    }
    run.result("percentiles", summary)?;
    run.result("percentile_convention", "nearest-rank: value at rank max(1, ceil(p/100 * n))")?;
    Ok(())
}

fn fi_pixels(a: &PixelsArgs, run: &mut Run) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = load(&a.data)?;
    let ids = a.ids.clone().or_else(|| data.ids().first().map(|&id| vec![id]));
    let data = select_ids(&data, &ids)?;
    data.validate_for(&model)?;
    let mode = match a.channel_mode {
        ChannelArg::PerChannel => ChannelMode::PerChannel,
        ChannelArg::Averaged => ChannelMode::Averaged,
    };
    let mut argmax_pixels = Vec::new();
    for i in 0..data.len() {
        let map = pixel_fi_map(&model, data.image(i), data.shape(), Objective::CrossEntropyPred, &a.scales, mode)?;
        for &scale in &a.scales {
            let single = PixelFiMap {
                maps: [(scale, map.maps[&scale].clone())].into(),
                ..map.clone()
            };
            io::write_pixel_map(&single, run.output(&format!("pixel-map-{}-k{scale}.csv", data.id(i))))?;
        }
        let top = map.averaged(a.scales[0]).map(|m| argmax(&m)).unwrap_or(0);
        argmax_pixels.push(json!({
            "sample_id": data.id(i),
            "scale": a.scales[0],
            "row": top / map.width,
            "col": top % map.width,
        }));
    }
    run.result("max_fi_pixels", argmax_pixels)?;
    Ok(())
}

fn outliers_simulate(a: &SimulateArgs, run: &mut Run) -> Result<()> {
    let data = load(&a.data)?;
    let count = a.count.unwrap_or((data.len() as f64 * 0.05).round() as usize);
    let spec = OutlierSpec {
        count,
        max_shift: a.max_shift,
        seed: a.seed,
    };
    let sim = simulate_outliers(&data, &spec)?;
    // stored by position, so reloaded ids are 0..n and outliers start at n
    let plain = LabeledDataset::new(data.images().to_vec(), data.labels().to_vec(), data.shape())?;
    let mixed = plain.concat(&sim.dataset)?;
    io::write_idx(
        &mixed,
        run.output("mixed-images-idx3-ubyte.gz"),
        run.output("mixed-labels-idx1-ubyte.gz"),
    )?;
    io::write_origins(&sim.origins, run.output("origins.csv"))?;
    run.seed("outliers", a.seed);
    run.result("spec", spec)?;
    run.result("outliers_from", data.len())?;
    run.result("total_samples", mixed.len())?;
    Ok(())
}

fn outliers_scan(a: &ScanArgs, run: &mut Run) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = load(&a.data)?;
    let records = score_dataset(&model, &data, &PerturbationTarget::Input, ObjectiveKind::TrueLabel, &a.measures)?;
    io::write_records(&records, run.output("records.csv"))?;
    summarize_records(&records, run)
}

fn outliers_eval(a: &EvalArgs, run: &mut Run) -> Result<()> {
    let records = io::read_records(&a.records).with_context(|| format!("reading {}", a.records.display()))?;
    let is_outlier: Vec<bool> = records.iter().map(|r| r.sample_id >= a.outliers_from).collect();
    type Pick = fn(&InfluenceRecord) -> Option<f64>;
    let measures: [(&str, Pick); 3] = [
        ("fi", |r| r.fi),
        ("jacobian_norm", |r| r.jacobian_norm),
        ("cook_max", |r| r.cook_max),
    ];
    let mut areas = serde_json::Map::new();
    for (name, pick) in measures {
        let Some(scores) = records.iter().map(pick).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let (roc, pr) = roc_pr(&scores, &is_outlier)?;
        io::write_curve(&roc, "roc", run.output(&format!("roc-{name}.csv")))?;
        io::write_curve(&pr, "pr", run.output(&format!("pr-{name}.csv")))?;
        areas.insert(name.into(), json!({ "roc_auc": roc.area, "pr_auc": pr.area }));
    }
    if areas.is_empty() {
        bail!("no measure is present for every record");
    }
    run.result("areas", areas)?;
    run.result("outliers", is_outlier.iter().filter(|&&o| o).count())?;
    run.result("pr_area_rule", "sum of recall increments times interpolated precision")?;
    Ok(())
}

fn attack_one_pixel(a: &AttackArgs, run: &mut Run) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = select_ids(&load(&a.data)?, &a.ids)?;
    data.validate_for(&model)?;
    let shape = data.shape();
    let rows = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let x = data.image(i);
            let id = data.id(i);
            let mut rows = vec![io::AttackRow {
                sample_id: id,
                strategy: "fi".into(),
                trial: 0,
                outcome: one_pixel_attack(&model, x, shape, &DEFAULT_VALUE_GRID)?,
            }];
            let random = random_pixel_attacks(&model, x, shape, &DEFAULT_VALUE_GRID, a.random_trials, a.seed + id as u64)?;
            rows.extend(random.into_iter().enumerate().map(|(t, outcome)| io::AttackRow {
                sample_id: id,
                strategy: "random".into(),
                trial: t,
                outcome,
            }));
            Ok(rows)
        })
        .collect::<fisens::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    io::write_attacks(&rows, run.output("attacks.csv"))?;

    let stats = |strategy: &str| {
        let picked: Vec<_> = rows.iter().filter(|r| r.strategy == strategy).collect();
        let n = picked.len().max(1) as f64;
        json!({
            "attacks": picked.len(),
            "mean_drop": picked.iter().map(|r| r.outcome.drop()).sum::<f64>() / n,
            "flip_rate": picked.iter().filter(|r| r.outcome.y_after != r.outcome.y_pred).count() as f64 / n,
        })
    };
    run.seed("random_pixels_base", a.seed);
    run.result("value_grid", DEFAULT_VALUE_GRID)?;
    run.result("fi", stats("fi"))?;
    run.result("random", stats("random"))?;
    Ok(())
}
