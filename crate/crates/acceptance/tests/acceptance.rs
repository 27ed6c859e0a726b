//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_link::aar::{build_aar_graph, connected_components, equirect_km, GeoPoint};
use spatial_link::delaunay::delaunay_edges;
use spatial_link::graph::{filter_edges_by_distance, DistanceMetric};
use spatial_link::grid::{Band, Cell};
use spatial_link::io::save_grid;
use spatial_link::paths::extract_all_paths;
use spatial_link::pipeline::{analyze, RunConfig};
use spatial_link::significance::p_value;
use spatial_link::synthetic::{generate, generate_null, recovers, NoiseModel, PlantSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn path_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut mismatches = 0;
    let mut total_paths = 0;
    for i in 0..200 {
        let g = common::random_graph(&mut rng);
        let max_len = 3 + i % 4;
        let got: BTreeSet<Vec<usize>> = extract_all_paths(&g, max_len, 1_000_000)
            .expect("no cap hit")
            .into_iter()
            .map(|p| p.nodes)
            .collect();
        let want = common::dfs_paths(&g, max_len);
        total_paths += want.len();
        if got != want {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        mismatches == 0 && t < Duration::from_secs(10),
        format!(
            "200 graphs, {total_paths} oracle paths, {mismatches} mismatching graphs, {}",
            secs(t)
        ),
    )
}

fn delaunay() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut bad = Vec::new();
    for k in 0..100 {
        let mut set = BTreeSet::new();
        while set.len() < 50 {
            set.insert((rng.random_range(0..40i64), rng.random_range(0..40i64)));
        }
        let pts: Vec<(i64, i64)> = set.into_iter().collect();
        if let Err(e) = common::check_delaunay(&pts) {
            bad.push(format!("set {k}: {e}"));
        }
    }
    let lattice: Vec<(i64, i64)> = (0..20).flat_map(|r| (0..25).map(move |c| (r, c))).collect();
    let first = delaunay_edges(&lattice).expect("lattice triangulates");
    let stable = (0..5).all(|_| delaunay_edges(&lattice).as_ref() == Ok(&first));
    if let Err(e) = common::check_delaunay(&lattice) {
        bad.push(format!("lattice: {e}"));
    }
    let t = start.elapsed();
    outcome(
        bad.is_empty() && stable && t < Duration::from_secs(30),
        format!(
            "100 random 50-point sets, {} failures{}; 20x25 lattice stable over 5 runs: {stable}; {}",
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default(),
            secs(t)
        ),
    )
}

fn distance_filter() -> Outcome {
    let pts = [
        Cell::new(10, 10),
        Cell::new(10, 21),
        Cell::new(0, 0),
        Cell::new(8, 8),
    ];
    let kept = filter_edges_by_distance(&[(0, 1), (2, 3)], &pts, 11.0, DistanceMetric::Euclidean);
    let examples = kept == vec![(0, 1)];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut wrong = 0;
    for _ in 0..10_000 {
        let a = Cell::new(rng.random_range(0..40), rng.random_range(0..40));
        let b = Cell::new(rng.random_range(0..40), rng.random_range(0..40));
        if a == b {
            continue;
        }
        let (dr, dc) = (a.row.abs_diff(b.row), a.col.abs_diff(b.col));
        let within = dr * dr + dc * dc <= 121;
        let kept = !filter_edges_by_distance(&[(0, 1)], &[a, b], 11.0, DistanceMetric::Euclidean)
            .is_empty();
        if kept != within {
            wrong += 1;
        }
    }
    outcome(
        examples && wrong == 0,
        format!("(10,10)-(10,21) kept and (0,0)-(8,8) dropped: {examples}; {wrong} misclassified of 10^4 pairs"),
    )
}

fn null_calibration() -> Outcome {
    let start = Instant::now();
    let (mut paths, mut significant) = (0usize, 0usize);
    for seed in 0..20u64 {
        let (s, t) = generate_null(121, 401, &NoiseModel::default(), 0x0b5e_0000 + seed)
            .expect("null instance");
        let a = analyze(&s, &t, None, &RunConfig::default()).expect("null run");
        paths += a.paths.len();
        significant += a.significant_count();
    }
    let frac = significant as f64 / paths.max(1) as f64;
    let t = start.elapsed();
    outcome(
        paths >= 500 && (0.03..=0.07).contains(&frac) && t < Duration::from_secs(600),
        format!(
            "{significant}/{paths} paths significant = {frac:.4} (target [0.03, 0.07]), {}",
            secs(t)
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn planted_spec(seed: u64) -> PlantSpec {
    let mut spec = PlantSpec::horizontal(Cell::new(60, 185), 11, 3, seed);
    spec.band_source = Band::Moderate;
    spec.band_target = Band::Moderate;
    spec
}

fn planted_recovery() -> Outcome {
    let mut recovered = 0;
    let mut slowest = Duration::ZERO;
    for seed in 0..50u64 {
        let start = Instant::now();
        let inst = generate(&planted_spec(0x91a7_0000 + seed), 121, 401).expect("planted instance");
        let a =
            analyze(&inst.source, &inst.target, None, &RunConfig::default()).expect("planted run");
        if a.significant()
            .any(|(p, _)| recovers(&inst.oracle, &p.cells(&a.graph)))
        {
            recovered += 1;
        }
        slowest = slowest.max(start.elapsed());
    }
    outcome(
        recovered >= 45 && slowest < Duration::from_secs(60),
        format!(
            "{recovered}/50 seeds recovered (need 45), slowest instance {}",
            secs(slowest)
        ),
    )
}

fn band_asymmetry() -> Outcome {
    let mut held = 0;
    let n = 10;
    let mut notes = Vec::new();
    for seed in 0..n {
        let inst = generate(&planted_spec(0xa5a5_0000 + seed), 121, 401).expect("planted instance");
        let moderate =
            analyze(&inst.source, &inst.target, None, &RunConfig::default()).expect("moderate run");
        let extreme = RunConfig {
            band_source: Band::Anomalous,
            band_target: Band::Anomalous,
            ..RunConfig::default()
        };
        let extreme = analyze(&inst.source, &inst.target, None, &extreme).expect("anomalous run");
        if extreme.significant_count() == 0 && moderate.significant_count() >= 1 {
            held += 1;
        } else {
            notes.push(format!(
                "seed {seed}: moderate {} vs anomalous {}",
                moderate.significant_count(),
                extreme.significant_count()
            ));
        }
    }
    outcome(
        held == n,
        format!("{held}/{n} instances: >UB/>UB has 0 significant paths and moderate/moderate >= 1 {notes:?}"),
    )
}

fn equirectangular() -> Outcome {
    let a = equirect_km(45.0, 0.0, 45.0, 10.0);
    let b = equirect_km(0.0, 0.0, 10.0, 0.0);
    let chain = |pts: Vec<(f64, f64)>| {
        let geo: Vec<GeoPoint> = pts
            .iter()
            .enumerate()
            .map(|(k, &(lat, lon))| GeoPoint {
                lat,
                lon,
                cell: Cell::new(k, 0),
                value: 1.0,
            })
            .collect();
        let g = build_aar_graph(geo, 250.0).expect("aar graph");
        let comps = connected_components(&g, 2000.0);
        (comps.len(), comps[0].extent_km, comps[0].retained)
    };
    let meridian = chain((0..=20).map(|k| (k as f64, 0.0)).collect());
    let parallel = chain((0..=10).map(|k| (45.0, k as f64)).collect());
    let pass = (a - 785.67).abs() <= 0.01
        && (b - 1111.1).abs() <= 0.01
        && meridian.0 == 1
        && meridian.2
        && parallel.0 == 1
        && !parallel.2;
    outcome(
        pass,
        format!(
            "(45,0)-(45,10) = {a:.4} km, (0,0)-(10,0) = {b:.4} km; 20deg meridian extent {:.1} retained {}; 10deg at 45N extent {:.2} retained {}",
            meridian.1, meridian.2, parallel.1, parallel.2
        ),
    )
}

fn cli_binary() -> PathBuf {
    let exe = std::env::current_exe().expect("test executable path");
    let dir = exe
        .parent()
        .and_then(|d| d.parent())
        .expect("target profile dir");
    dir.join(format!("spatial-link{}", std::env::consts::EXE_SUFFIX))
}

fn thread_determinism() -> Outcome {
    let bin = cli_binary();
    if !bin.exists() {
        return outcome(false, format!("CLI binary not built at {}", bin.display()));
    }
    let dir = tempfile::tempdir().expect("temp dir");
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let bands = ["moderate", "high", "anomalous"];
    let mut identical = 0;
    let mut notes = Vec::new();
    for k in 0..5 {
        let inst = generate(&planted_spec(rng.random()), 121, 401).expect("planted instance");
        let case = dir.path().join(format!("case{k}"));
        std::fs::create_dir_all(&case).expect("case dir");
        save_grid(&inst.source, &case.join("source.json")).expect("write source");
        save_grid(&inst.target, &case.join("target.json")).expect("write target");
        let args = vec![
            "--seed".to_string(),
            rng.random_range(0..1_000_000u64).to_string(),
            "pipeline".into(),
            "--source".into(),
            case.join("source.json").display().to_string(),
            "--target".into(),
            case.join("target.json").display().to_string(),
            "--band-source".into(),
            bands[rng.random_range(0..2)].into(),
            "--band-target".into(),
            bands[rng.random_range(0..3)].into(),
            "--dmax".into(),
            rng.random_range(6..=11).to_string(),
            "--max-len".into(),
            rng.random_range(6..=11).to_string(),
            "--m".into(),
            [199, 499, 999][rng.random_range(0..3)].to_string(),
        ];
        let mut outputs = Vec::new();
        for threads in ["1", "8"] {
            let out = case.join(format!("t{threads}"));
            let status = Command::new(&bin)
                .args(&args)
                .args(["--threads", threads, "-o"])
                .arg(&out)
                .env_remove("SPATIAL_LINK_THREADS")
                .output()
                .expect("run CLI");
            if !status.status.success() {
                notes.push(format!(
                    "case {k}: {}",
                    String::from_utf8_lossy(&status.stderr).trim()
                ));
            }
            outputs.push(std::fs::read(out.join("results.json")).unwrap_or_default());
        }
        if !outputs[0].is_empty() && outputs[0] == outputs[1] {
            identical += 1;
        }
    }
    outcome(
        identical == 5,
        format!(
            "{identical}/5 configs with byte-identical results.json at 1 and 8 threads {notes:?}"
        ),
    )
}

fn p_formula() -> Outcome {
    let a = p_value(1.0, &[0.5; 999]);
    let b = p_value(0.4, &[0.4; 9]);
    outcome(
        a == 0.001 && b == 1.0,
        format!("p(1.0 vs 999 lower) = {a}, p(tied, M=9) = {b}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 oracle path enumeration", path_oracle),
        ("2 delaunay correctness", delaunay),
        ("3 distance filter conformance", distance_filter),
        ("4 null calibration", null_calibration),
        ("5 planted-linkage recovery", planted_recovery),
        ("6 band-pairing asymmetry", band_asymmetry),
        ("7 equirectangular metric", equirectangular),
        ("8 determinism under parallelism", thread_determinism),
        ("9 p-value formula", p_formula),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
