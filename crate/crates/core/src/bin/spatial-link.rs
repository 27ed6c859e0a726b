use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use spatial_link::graph::{DistanceMetric, Variant};
use spatial_link::grid::{
    compute_threshold_bands_in, diff_grids, resample_nearest, Band, ChangeOrientation, RegionWindow,
};
use spatial_link::io::{load_grid_auto, save_grid};
use spatial_link::paths::extract_all_paths;
use spatial_link::pipeline::{
    self, graph_document, metadata, paths_document, prepare_graph, read_json, results_document,
    run_aar, run_pipeline, run_sweep, test_paths, write_json, AarConfig, BandScope, GraphDocument,
    PathsDocument, RunConfig,
};
use spatial_link::significance::SignificanceConfig;
use spatial_link::synthetic::{generate, generate_null, NoiseModel, PlantSpec};
use spatial_link::Error;

#[derive(Parser, Debug)]
#[command(
    name = "spatial-link",
    version,
    about = "Significant spatial linkage paths between two gridded change fields"
)]
struct Cli {
    /// Base seed for the permutation null and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SPATIAL_LINK_THREADS")]
    threads: Option<usize>,
    /// JSON run configuration; command line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the median, Q3 and upper-fence bands of a grid as JSON.
    Thresholds {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "loss-negative")]
        orientation: ChangeOrientation,
        #[arg(long)]
        window: Option<RegionWindow>,
        #[arg(long, default_value_t = 1.5)]
        ub_multiplier: f64,
    },
    /// Per-cell B - A.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Nearest-neighbour resampling to a new grid size.
    Resample {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build the weighted proximity graph and write graph.json.
    BuildGraph {
        #[command(flatten)]
        run: RunArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Enumerate Source-to-Target paths of a graph and write paths.json.
    ExtractPaths {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Permutation-test the paths of paths.json and write results.json.
    Significance {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        paths: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Full run: graph.json, paths.json, results.json, significant.geojson, frequency.csv.
    Pipeline {
        #[command(flatten)]
        run: RunArgs,
        /// Run all nine band pairings into `<source band>_<target band>/`.
        #[arg(long)]
        sweep_bands: bool,
        #[arg(long, short = 'o', default_value = "out")]
        out_dir: PathBuf,
    },
    /// Generate synthetic grids from a plant specification.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Aerosol benchmark: components and origin-to-station path significance.
    Aar {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        values: PathBuf,
        #[arg(long)]
        origins: PathBuf,
        /// Station as `lat,lon`.
        #[arg(long, allow_hyphen_values = true)]
        station: String,
        #[arg(long, default_value_t = 2000.0)]
        min_extent_km: f64,
        #[arg(long, default_value_t = 250.0)]
        max_edge_km: f64,
        #[arg(long, default_value_t = 150.0)]
        snap_km: f64,
        #[arg(long, default_value_t = 0.005)]
        alpha: f64,
        #[arg(long, default_value_t = 999)]
        m: usize,
        #[arg(long, default_value_t = 11)]
        max_len: usize,
        #[arg(long, default_value_t = 1_000_000)]
        cap: usize,
        #[arg(short, long, default_value = "aar_report.json")]
        out: PathBuf,
    },
}

/// Flags shared by the commands that take a run configuration. Anything left
/// unset falls back to `--config` and then to the defaults.
#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    /// Binary anomaly mask for the cmad variant.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    orientation_source: Option<ChangeOrientation>,
    #[arg(long)]
    orientation_target: Option<ChangeOrientation>,
    /// Analysis window `r0:r1,c0:c1` (inclusive) or `antarctic`.
    #[arg(long)]
    window: Option<RegionWindow>,
    /// Estimate bands over the whole grid instead of the window.
    #[arg(long)]
    global_bands: bool,
    #[arg(long)]
    ub_multiplier: Option<f64>,
    #[arg(long)]
    band_source: Option<Band>,
    #[arg(long)]
    band_target: Option<Band>,
    #[arg(long)]
    dmax: Option<f64>,
    #[arg(long)]
    metric: Option<DistanceMetric>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    cap: Option<usize>,
    /// Share one null per Source/Target pattern.
    #[arg(long)]
    shared_null: bool,
    /// Benjamini-Hochberg control instead of raw p < alpha.
    #[arg(long)]
    bh: bool,
    /// Resample inputs to `rows,cols` first.
    #[arg(long, value_parser = parse_dims)]
    resample: Option<[usize; 2]>,
}

fn parse_dims(s: &str) -> Result<[usize; 2], String> {
    let (r, c) = s
        .split_once([',', 'x'])
        .ok_or_else(|| format!("expected rows,cols, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok([p(r)?, p(c)?])
}

impl RunArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { cfg.$target = v; })*
            };
        }
        set!(
            orientation_source => orientation_source,
            orientation_target => orientation_target,
            ub_multiplier => ub_multiplier,
            band_source => band_source,
            band_target => band_target,
            dmax => dmax,
            metric => metric,
            max_len => max_len,
            m => m,
            alpha => alpha,
            variant => variant,
            cap => path_cap,
        );
        if self.source.is_some() {
            cfg.source = self.source.clone();
        }
        if self.target.is_some() {
            cfg.target = self.target.clone();
        }
        if self.mask.is_some() {
            cfg.mask = self.mask.clone();
        }
        if self.window.is_some() {
            cfg.window = self.window;
        }
        if self.resample.is_some() {
            cfg.resample = self.resample;
        }
        if self.global_bands {
            cfg.band_scope = BandScope::Global;
        }
        cfg.shared_null |= self.shared_null;
        cfg.bh |= self.bh;
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_config(cli: &Cli, args: &RunArgs) -> Result<RunConfig, Error> {
    let mut cfg = base_config(cli)?;
    args.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// A synth spec file: grid size plus either a plant specification or a
/// pure-noise request.
#[derive(Deserialize)]
struct SynthFile {
    rows: usize,
    cols: usize,
    #[serde(default)]
    null: bool,
    #[serde(default)]
    noise: Option<NoiseModel>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    plant: Option<PlantSpec>,
}

fn synth(cli: &Cli, spec_path: &Path, out_dir: &Path) -> anyhow::Result<()> {
    let file: SynthFile = read_json(spec_path)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let seed = cli.seed.or(file.seed);
    let plant = file.plant.filter(|_| !file.null);
    let summary = if let Some(mut plant) = plant {
        if let Some(seed) = seed {
            plant.seed = seed;
        }
        if let Some(noise) = file.noise {
            plant.noise = noise;
        }
        let inst = generate(&plant, file.rows, file.cols).map_err(Error::from)?;
        save_grid(&inst.source, &out_dir.join("source.json")).map_err(Error::from)?;
        save_grid(&inst.target, &out_dir.join("target.json")).map_err(Error::from)?;
        json!({
            "rows": file.rows,
            "cols": file.cols,
            "plant": plant,
            "oracle": inst.oracle.iter().map(|c| [c.row, c.col]).collect::<Vec<_>>(),
            "split": inst.split,
            "bands_source": inst.bands_source,
            "bands_target": inst.bands_target,
        })
    } else {
        let noise = file.noise.unwrap_or_default();
        let seed = seed.unwrap_or(0);
        let (s, t) = generate_null(file.rows, file.cols, &noise, seed).map_err(Error::from)?;
        save_grid(&s, &out_dir.join("source.json")).map_err(Error::from)?;
        save_grid(&t, &out_dir.join("target.json")).map_err(Error::from)?;
        json!({ "rows": file.rows, "cols": file.cols, "noise": noise, "seed": seed, "oracle": null })
    };
    write_json(&out_dir.join("oracle.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn parse_station(s: &str) -> anyhow::Result<[f64; 2]> {
    let (lat, lon) = s
        .split_once(',')
        .with_context(|| format!("station must be `lat,lon`, got `{s}`"))?;
    Ok([lat.trim().parse()?, lon.trim().parse()?])
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Thresholds {
            grid,
            orientation,
            window,
            ub_multiplier,
        } => {
            let g = load_grid_auto(grid).map_err(Error::from)?;
            let w = window.unwrap_or_else(|| g.window());
            let bands = compute_threshold_bands_in(&g, *orientation, &w, *ub_multiplier)
                .map_err(Error::from)?;
            println!("{}", serde_json::to_string_pretty(&bands)?);
        }
        Command::Diff { a, b, out } => {
            let ga = load_grid_auto(a).map_err(Error::from)?;
            let gb = load_grid_auto(b).map_err(Error::from)?;
            let d = diff_grids(&ga, &gb).map_err(Error::from)?;
            save_grid(&d, out).map_err(Error::from)?;
        }
        Command::Resample {
            grid,
            rows,
            cols,
            out,
        } => {
            let g = load_grid_auto(grid).map_err(Error::from)?;
            let r = resample_nearest(&g, *rows, *cols).map_err(Error::from)?;
            save_grid(&r, out).map_err(Error::from)?;
        }
        Command::BuildGraph { run, out } => {
            let cfg = run_config(cli, run)?;
            let (source, target, mask) = pipeline::load_inputs(&cfg)?;
            let stage = prepare_graph(&source, &target, mask.as_ref(), &cfg)?;
            let meta = metadata(&cfg, cfg.seed, cfg.variant);
            write_json(out, &graph_document(&stage.graph, &meta))?;
            eprintln!(
                "graph: {} nodes, {} edges",
                stage.graph.node_count(),
                stage.graph.edge_count()
            );
        }
        Command::ExtractPaths {
            graph,
            max_len,
            cap,
            out,
        } => {
            let doc: GraphDocument = read_json(graph)?;
            let meta = doc.metadata.clone();
            let g = doc.into_graph().map_err(Error::from)?;
            let base = base_config(cli)?;
            let paths = extract_all_paths(
                &g,
                max_len.unwrap_or(base.max_len),
                cap.unwrap_or(base.path_cap),
            )
            .map_err(Error::from)?;
            write_json(out, &paths_document(&g, &paths, &meta))?;
            eprintln!("paths: {}", paths.len());
        }
        Command::Significance {
            graph,
            paths,
            run,
            out,
        } => {
            let mut cfg = base_config(cli)?;
            run.apply(&mut cfg);
            let g = read_json::<GraphDocument>(graph)?
                .into_graph()
                .map_err(Error::from)?;
            let p = read_json::<PathsDocument>(paths)?
                .into_paths(&g)
                .map_err(Error::from)?;
            let (source, target, mask) = pipeline::load_inputs(&cfg)?;
            let sig = SignificanceConfig {
                m: cfg.m,
                alpha: cfg.alpha,
                seed: cfg.seed,
                shared_null: cfg.shared_null,
                bh: cfg.bh,
            };
            let results = test_paths(&g, &p, &source, &target, mask.as_ref(), &sig)?;
            let meta = metadata(&cfg, cfg.seed, g.params.variant);
            write_json(out, &results_document(&results, &meta))?;
            eprintln!(
                "significant: {} of {}",
                results.iter().filter(|r| r.significant).count(),
                results.len()
            );
        }
        Command::Pipeline {
            run,
            sweep_bands,
            out_dir,
        } => {
            let cfg = run_config(cli, run)?;
            let summaries = if *sweep_bands {
                run_sweep(&cfg, out_dir)?
            } else {
                vec![run_pipeline(&cfg, out_dir)?]
            };
            println!("{}", serde_json::to_string_pretty(&summaries)?);
        }
        Command::Synth { spec, out_dir } => synth(cli, spec, out_dir)?,
        Command::Aar {
            mask,
            values,
            origins,
            station,
            min_extent_km,
            max_edge_km,
            snap_km,
            alpha,
            m,
            max_len,
            cap,
            out,
        } => {
            let cfg = AarConfig {
                mask: mask.clone(),
                values: values.clone(),
                origins: origins.clone(),
                station: parse_station(station)?,
                min_extent_km: *min_extent_km,
                max_edge_km: *max_edge_km,
                snap_km: *snap_km,
                alpha: *alpha,
                m: *m,
                seed: base_config(cli)?.seed,
                max_len: *max_len,
                path_cap: *cap,
            };
            let report = run_aar(&cfg, out)?;
            eprintln!(
                "components: {} ({} retained), paths: {}, significant: {}",
                report.components.len(),
                report.components.iter().filter(|c| c.retained).count(),
                report.paths.len(),
                report.significant
            );
        }
    }
    Ok(())
}

fn report(err: &anyhow::Error) {
    let (module, hint) = match err.downcast_ref::<Error>() {
        Some(e) => (e.module(), e.hint()),
        None => ("io-cli", "see --help"),
    };
    eprintln!("error [module={module}]: {err:#}");
    eprintln!("hint: {hint}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error [module=io-cli]: cannot start thread pool: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::FAILURE
        }
    }
}
