//! Command-line front end. Each subcommand takes an optional config path and
//! any number of `--set key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::inference::{fit, Chain, ParameterizationKind};
use crate::metrics::ChainDiagnostics;
use crate::pipeline::{
    chain_diagnostics, column_means, evaluate, median_table, picar_surface, read_summary_csv, run_replicate,
    write_summary_csv, MethodBuilder, PicarSetup, RankStrategy, SummaryRow,
};
use crate::rng::derive_seed;
use crate::simulation::{generate_dataset, Dataset};

#[derive(Debug, Parser)]
#[command(name = "picarz", version, about = "Two-part spatial models with projected Moran bases")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic replicate datasets.
    Simulate(CommonArgs),
    /// Build the mesh and Moran basis pool for a dataset.
    Mesh(CommonArgs),
    /// Choose occurrence and prevalence ranks.
    SelectRank(CommonArgs),
    /// Run the sampler on the training rows.
    Fit(CommonArgs),
    /// Predict at the validation rows from a stored chain.
    Predict(CommonArgs),
    /// Median table and gridded plot data.
    Report(CommonArgs),
    /// Simulate, fit and score replicates in one go.
    Benchmark(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat `section.key = value` configuration file.
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set mcmc.iterations=5000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl CommonArgs {
    pub fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a.load()?),
        Command::Mesh(a) => mesh(&a.load()?),
        Command::SelectRank(a) => select_rank(&a.load()?),
        Command::Fit(a) => fit_cmd(&a.load()?),
        Command::Predict(a) => predict_cmd(&a.load()?),
        Command::Report(a) => report(&a.load()?),
        Command::Benchmark(a) => benchmark(&a.load()?),
    }
}

fn prepare_out_dir(cfg: &RunConfig, echo_name: &str) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_text(&dir.join(echo_name), &cfg.echo())?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    Dataset::read_csv(&cfg.dataset_path()?)
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let dir = prepare_out_dir(cfg, "simulate.config")?;
    let family = cfg.family()?;
    let sim = cfg.simulation()?;
    let root = cfg.seed()?;
    let b = cfg.replicates()?;
    for k in 0..b {
        let ds = generate_dataset(&family, &sim, derive_seed(root, k as u64))?;
        let path = dir.join(format!("dataset_{k:03}.csv"));
        ds.write(&path)?;
    }
    println!("wrote {b} dataset(s) to {}", dir.display());
    Ok(())
}

pub fn mesh(cfg: &RunConfig) -> Result<()> {
    let dir = prepare_out_dir(cfg, "mesh.config")?;
    let data = load_dataset(cfg)?;
    let opts = cfg.replicate_options(cfg.seed()?)?;
    let pool_rank = match opts.rank {
        RankStrategy::Fixed { p_o, p_p } => p_o.max(p_p),
        RankStrategy::Grid { p_max, .. } => p_max.unwrap_or((opts.mesh.target_vertices / 4).min(250)),
    };
    let train = data.train();
    let cv = data.validation();
    let setup = PicarSetup::build(&train.sites, &cv.sites, &opts.mesh, opts.precision, pool_rank)?;
    setup.mesh.write(&dir.join("mesh.txt"))?;
    setup.pool.write(&dir.join("basis.txt"))?;
    println!(
        "mesh: {} vertices, {} triangles; basis pool rank {}",
        setup.mesh.num_vertices(),
        setup.mesh.num_triangles(),
        setup.pool.rank()
    );
    Ok(())
}

pub fn select_rank(cfg: &RunConfig) -> Result<()> {
    let dir = prepare_out_dir(cfg, "select-rank.config")?;
    let data = load_dataset(cfg)?;
    let mut opts = cfg.replicate_options(cfg.seed()?)?;
    if let RankStrategy::Fixed { .. } = opts.rank {
        opts.rank = RankStrategy::default();
    }
    let mut b = MethodBuilder::new(&data, &opts)?;
    let (_, (p_o, p_p), choice, _) = b.picar_setup()?;
    if let Some(c) = choice {
        write_text(&dir.join("ranks.csv"), &c.to_csv())?;
    }
    println!("p_o = {p_o}\np_p = {p_p}");
    Ok(())
}

/// Sidecar with acceptance rates, timing and per-parameter ES/sec.
pub fn chain_summary_text(chain: &Chain, diag: &ChainDiagnostics, family: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!("method = {}\n", chain.kind));
    s.push_str(&format!("family = {family}\n"));
    s.push_str(&format!("seconds = {}\n", chain.seconds));
    s.push_str(&format!("seed = {}\n", chain.seed));
    s.push_str(&format!("iterations = {}\n", chain.iterations));
    s.push_str(&format!("burn_in = {}\n", chain.burn_in));
    s.push_str(&format!("thin = {}\n", chain.thin));
    s.push_str(&format!("retained = {}\n", chain.len()));
    s.push_str(&format!("adaptation_frozen = {}\n", chain.adaptation_frozen));
    for b in &chain.blocks {
        s.push_str(&format!("acceptance.{} = {}\n", b.name, b.acceptance));
    }
    for p in &diag.parameters {
        s.push_str(&format!("mean.{} = {}\n", p.name, p.mean));
        s.push_str(&format!("se.{} = {}\n", p.name, p.se));
        s.push_str(&format!("ess.{} = {}\n", p.name, p.ess));
        s.push_str(&format!("ess_per_sec.{} = {}\n", p.name, p.ess_per_sec));
    }
    s
}

/// Read one `key = value` entry from a chain sidecar.
pub fn summary_value(text: &str, key: &str) -> Option<String> {
    text.lines().find_map(|l| {
        let (k, v) = l.split_once('=')?;
        (k.trim() == key).then(|| v.trim().to_string())
    })
}

fn sidecar(chain_path: &Path) -> PathBuf {
    chain_path.with_extension("summary")
}

pub fn fit_cmd(cfg: &RunConfig) -> Result<()> {
    prepare_out_dir(cfg, "fit.config")?;
    let data = load_dataset(cfg)?;
    let opts = cfg.replicate_options(cfg.seed()?)?;
    let kind = opts.methods[0];
    let mut b = MethodBuilder::new(&data, &opts)?;
    let fit_data = b.fit_data()?;
    let design = b.build(kind)?;
    let chain = fit(&fit_data, &design.latent, &opts.priors, &opts.sampler, None)?;
    let path = cfg.chain_path();
    chain.write_csv(&path)?;
    let diag = chain_diagnostics(&chain);
    write_text(&sidecar(&path), &chain_summary_text(&chain, &diag, opts.family.name()))?;
    println!(
        "{}: ranks ({}, {}), {} draws in {:.1} s -> {}",
        kind,
        design.ranks.0,
        design.ranks.1,
        chain.len(),
        chain.seconds,
        path.display()
    );
    Ok(())
}

pub fn predict_cmd(cfg: &RunConfig) -> Result<()> {
    let dir = prepare_out_dir(cfg, "predict.config")?;
    let data = load_dataset(cfg)?;
    let path = cfg.chain_path();
    let side = fs::read_to_string(sidecar(&path)).ok();
    let kind: ParameterizationKind = match side.as_deref().and_then(|t| summary_value(t, "method")) {
        Some(m) => m.parse()?,
        None => cfg.methods()?[0],
    };
    let chain = Chain::read_csv(&path, kind)?;
    let mut opts = cfg.replicate_options(cfg.seed()?)?;
    // The chain fixes the ranks; no need to search again.
    opts.rank = RankStrategy::Fixed {
        p_o: chain.layout.p_o,
        p_p: chain.layout.p_p,
    };
    let mut b = MethodBuilder::new(&data, &opts)?;
    let design = b.build(kind)?;
    let (pred, report, _) = evaluate(&chain, &design, &b.cv, &opts)?;
    let out = dir.join("predictions.csv");
    let err = |e: csv::Error| Error::parse(out.display().to_string(), e.to_string());
    let mut w = csv::Writer::from_path(&out).map_err(err)?;
    w.write_record(["x_coord", "y_coord", "z", "mean", "sd", "prob"]).map_err(err)?;
    for i in 0..b.cv.len() {
        w.write_record([
            b.cv.sites[i].x.to_string(),
            b.cv.sites[i].y.to_string(),
            b.cv.z[i].to_string(),
            pred.mean[i].to_string(),
            pred.sd[i].to_string(),
            pred.prob[i].to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&out, e))?;
    let seconds: f64 = side
        .as_deref()
        .and_then(|t| summary_value(t, "seconds"))
        .and_then(|s| s.parse().ok())
        .unwrap_or(f64::NAN);
    let row = SummaryRow {
        family: opts.family.name().to_string(),
        method: kind.name().to_string(),
        rmspe_total: report.rmspe_total,
        rmspe_positive: report.rmspe_positive,
        auc: report.auc,
        minutes: seconds / 60.0,
    };
    write_summary_csv(&dir.join("summary.csv"), std::slice::from_ref(&row))?;
    println!(
        "rmspe_total = {:.4}\nrmspe_positive = {:.4}\nauc = {:.4}",
        report.rmspe_total, report.rmspe_positive, report.auc
    );
    Ok(())
}

fn print_table(rows: &[SummaryRow]) {
    println!("{:<18} {:<18} {:>12} {:>15} {:>8} {:>9}", "family", "method", "rmspe_total", "rmspe_positive", "auc", "minutes");
    for r in rows {
        println!(
            "{:<18} {:<18} {:>12.4} {:>15.4} {:>8.4} {:>9.3}",
            r.family, r.method, r.rmspe_total, r.rmspe_positive, r.auc, r.minutes
        );
    }
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let dir = prepare_out_dir(cfg, "report.config")?;
    let mut rows = Vec::new();
    for p in cfg.summary_paths() {
        rows.extend(read_summary_csv(&p)?);
    }
    let table = median_table(&rows);
    write_summary_csv(&dir.join("table.csv"), &table)?;
    print_table(&table);

    // Surfaces need a PICAR chain and its dataset.
    let chain_path = cfg.chain_path();
    let Ok(dataset_path) = cfg.dataset_path() else {
        return Ok(());
    };
    if !chain_path.exists() {
        return Ok(());
    }
    let side = fs::read_to_string(sidecar(&chain_path)).unwrap_or_default();
    let kind: ParameterizationKind = match summary_value(&side, "method") {
        Some(m) => m.parse()?,
        None => cfg.methods()?[0],
    };
    if !matches!(kind, ParameterizationKind::Picar | ParameterizationKind::PicarCorrelated) {
        return Ok(());
    }
    let data = Dataset::read_csv(&dataset_path)?;
    let chain = Chain::read_csv(&chain_path, kind)?;
    let mut opts = cfg.replicate_options(cfg.seed()?)?;
    opts.rank = RankStrategy::Fixed {
        p_o: chain.layout.p_o,
        p_p: chain.layout.p_p,
    };
    let mut b = MethodBuilder::new(&data, &opts)?;
    let (setup, ..) = b.picar_setup()?;
    let region = BoundingBox::of(&data.sites).ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    let (nx, ny) = cfg.report_grid()?;
    let surface = picar_surface(
        &chain,
        &opts.family,
        opts.link,
        setup,
        &region,
        nx,
        ny,
        &column_means(&data.x),
        opts.predict_draws,
    )?;
    let out = dir.join("surface.csv");
    surface.write_csv(&out)?;
    println!("surface: {} grid points -> {}", surface.sites.len(), out.display());
    Ok(())
}

pub fn benchmark(cfg: &RunConfig) -> Result<()> {
    let dir = prepare_out_dir(cfg, "benchmark.config")?;
    let family = cfg.family()?;
    let sim = cfg.simulation()?;
    let root = cfg.seed()?;
    let b = cfg.replicates()?;
    let mut rows = Vec::new();
    for k in 0..b {
        let seed = derive_seed(root, k as u64);
        let ds = generate_dataset(&family, &sim, seed)?;
        let opts = cfg.replicate_options(seed)?;
        for o in run_replicate(&ds.data, &opts)? {
            let row = SummaryRow::from_outcome(&family, &o);
            println!(
                "replicate {k}: {} rmspe_total {:.4} auc {:.4} ({:.1} s)",
                row.method,
                row.rmspe_total,
                row.auc,
                o.total_seconds()
            );
            rows.push(row);
        }
        write_summary_csv(&dir.join("summary.csv"), &rows)?;
    }
    let table = median_table(&rows);
    write_summary_csv(&dir.join("table.csv"), &table)?;
    print_table(&table);
    Ok(())
}
