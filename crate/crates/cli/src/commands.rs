use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use recfuse::augment::augment_entities;
use recfuse::candidates::validate_truth;
use recfuse::eval::{generate_benchmark, report, run_experiment};
use recfuse::inference::fuse_dataset;
use recfuse::io;
use recfuse::learner::train;
use recfuse::{build_candidate_sets, FusionDataset, FusionModel, GroundTruth};

use crate::config::RunConfig;
use crate::manifest;

pub const FUSED_FILE: &str = "fused.csv";
pub const AUGMENTED_FILE: &str = "augmented.csv";
pub const AUGMENTED_LABELS_FILE: &str = "augmented_labels.csv";
pub const REPORT_JSONL: &str = "report.jsonl";
pub const REPORT_TABLE: &str = "report.txt";
pub const BENCH_DATA: &str = "data.csv";
pub const BENCH_TRUTH: &str = "truth.csv";
pub const BENCH_CONSTRAINTS: &str = "constraints.txt";

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .output
        .dir
        .clone()
        .context("no output directory: pass --out or set output.dir")?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Dataset (with constraints attached) and labels; labels are checked against the candidate sets.
fn load_inputs(cfg: &RunConfig, need_labels: bool) -> Result<(FusionDataset, GroundTruth)> {
    let delim = cfg.delimiter()?;
    let data = cfg
        .input
        .data
        .as_deref()
        .context("no input data: pass --data or set input.data")?;
    let mut ds = io::read_dataset(data, delim)?;
    if let Some(p) = &cfg.input.constraints {
        let dcs = io::read_constraints(p, ds.schema())?;
        ds = ds.with_constraints(dcs);
    }
    let truth = match &cfg.input.labels {
        Some(p) => io::read_labels(p, delim, &ds)?,
        None if need_labels => bail!("this command needs labels: pass --labels or set input.labels"),
        None => GroundTruth::new(),
    };
    validate_truth(&ds, &build_candidate_sets(&ds), &truth)?;
    Ok((ds, truth))
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let (ds, truth) = load_inputs(cfg, false)?;
    let cands = build_candidate_sets(&ds);
    let labeled_clusters = {
        let mut ks: Vec<usize> = truth.iter().map(|((k, _), _)| k).collect();
        ks.dedup();
        ks.len()
    };
    println!("rows         {}", ds.n_rows());
    println!("clusters     {}", ds.n_clusters());
    println!("attributes   {}", ds.n_attributes());
    match ds.sources() {
        Some(s) => println!("sources      {}", s.len()),
        None => println!("sources      none"),
    }
    println!("constraints  {}", ds.constraints().len());
    println!("labels       {} pairs in {labeled_clusters} clusters", truth.len());
    println!();
    println!("{:<24} {:>5}", "attribute", "rho");
    for (j, name) in ds.schema().iter().enumerate() {
        println!("{:<24} {:>5}", name, cands.label_dimension(j));
    }
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let (mut ds, mut truth) = load_inputs(cfg, false)?;
    if cfg.augment.ratio > 0.0 {
        if truth.fully_labeled_clusters(ds.n_attributes()).is_empty() {
            eprintln!("warning: no fully labeled cluster, skipping augmentation");
        } else {
            let aug = augment_entities(&ds, &truth, &cfg.augment)?;
            eprintln!("augmentation: {} synthetic clusters", aug.n_clusters());
            (ds, truth) = aug.apply(&ds, &truth)?;
        }
    }
    let started = Instant::now();
    let cands = build_candidate_sets(&ds);
    let (model, _) = train(&ds, &cands, &truth, &cfg.features, &cfg.train, None)?;
    let files = model.save_dir(&dir)?;
    manifest::write(&dir, "train", cfg, &files)?;
    eprintln!(
        "trained {} attributes x {} stages in {:.1}s -> {}",
        model.attributes.len(),
        model.n_stages(),
        started.elapsed().as_secs_f64(),
        dir.display()
    );
    Ok(())
}

pub fn fuse(cfg: &RunConfig) -> Result<()> {
    let model_dir = cfg
        .input
        .model
        .as_deref()
        .context("no model: pass --model or set input.model")?;
    let model = FusionModel::load_dir(model_dir)?;
    let (ds, truth) = load_inputs(cfg, false)?;
    let dir = out_dir(cfg)?;
    let table = fuse_dataset(&model, &ds, &truth)?;
    let path = dir.join(FUSED_FILE);
    io::write_fused(create(&path)?, cfg.delimiter()?, &table, cfg.output.confidence)?;
    manifest::write(&dir, "fuse", cfg, &[path.clone()])?;
    eprintln!("fused {} clusters -> {}", table.cluster_ids.len(), path.display());
    Ok(())
}

pub fn augment(cfg: &RunConfig) -> Result<()> {
    let (ds, truth) = load_inputs(cfg, true)?;
    let dir = out_dir(cfg)?;
    let aug = augment_entities(&ds, &truth, &cfg.augment)?;
    let delim = cfg.delimiter()?;
    let rows = dir.join(AUGMENTED_FILE);
    io::write_rows(
        create(&rows)?,
        delim,
        ds.schema(),
        &aug.rows,
        &aug.clusters,
        aug.sources.as_deref(),
    )?;
    let labels: Vec<(String, String, String)> = aug
        .labels
        .iter()
        .map(|(k, j, v)| (k.clone(), ds.schema()[*j].clone(), v.clone()))
        .collect();
    let label_path = dir.join(AUGMENTED_LABELS_FILE);
    io::write_labels(create(&label_path)?, delim, &labels)?;
    manifest::write(&dir, "augment", cfg, &[rows.clone(), label_path])?;
    eprintln!("augment: {} synthetic clusters -> {}", aug.n_clusters(), rows.display());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let (ds, truth) = load_inputs(cfg, true)?;
    let dir = out_dir(cfg)?;
    let started = Instant::now();
    let r = run_experiment(&ds, &truth, &cfg.experiment())?;
    let jsonl = dir.join(REPORT_JSONL);
    std::fs::write(&jsonl, report::to_jsonl(&r)).with_context(|| format!("writing {}", jsonl.display()))?;
    let table = report::to_table(&r);
    let txt = dir.join(REPORT_TABLE);
    std::fs::write(&txt, &table).with_context(|| format!("writing {}", txt.display()))?;
    manifest::write(&dir, "evaluate", cfg, &[jsonl, txt])?;
    eprint!("{table}");
    eprintln!("evaluated in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

pub fn bench(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let b = generate_benchmark(&cfg.benchmark, cfg.seed)?;
    let delim = cfg.delimiter()?;
    let data = dir.join(BENCH_DATA);
    io::write_dataset(create(&data)?, delim, &b.dataset)?;
    let schema = b.dataset.schema();
    let labels: Vec<(String, String, String)> = b
        .truth
        .iter()
        .map(|((k, j), v)| (b.dataset.cluster_id(k).to_string(), schema[j].clone(), v.to_string()))
        .collect();
    let truth = dir.join(BENCH_TRUTH);
    io::write_labels(create(&truth)?, delim, &labels)?;
    let mut outputs = vec![data.clone(), truth];
    if !b.dataset.constraints().is_empty() {
        let rules: String = b.dataset.constraints().iter().map(|dc| format!("{dc}\n")).collect();
        let path = dir.join(BENCH_CONSTRAINTS);
        std::fs::write(&path, rules).with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path);
    }
    manifest::write(&dir, "bench", cfg, &outputs)?;
    eprintln!(
        "benchmark: {} clusters, {} rows ({} corrupted) -> {}",
        b.dataset.n_clusters(),
        b.dataset.n_rows(),
        b.corrupted.len(),
        data.display()
    );
    Ok(())
}
