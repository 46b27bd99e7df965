//! Command-line front end: config-driven experiments with CSV and manifest
//! outputs.
//!
//! Subcommands mirror the config kinds: `region` prints the entropy rate
//! region, `simulate` runs one pair construction plus decode (and optional
//! improvement rounds), `sweep` runs the construction over an `(a, b)`
//! grid, and `verify` runs the oracle suites. Every run writes a
//! `manifest.json` carrying the full config, the resolved seed tree, and
//! measured diagnostics. Identical configs and seeds produce byte-identical
//! CSV output up to the `runtime_ms` column.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use swsim::codec::{build_pair, decode_fresh_orbit, improve_pair, rate_region_experiment};
use swsim::config::{ConfigError, ExperimentConfig, ExperimentKind};
use swsim::report::{
    fmt_sig, improve_row, region_row, simulate_row, sweep_row, RunManifest, IMPROVE_HEADER,
    REGION_HEADER, SIMULATE_HEADER,
};
use swsim::seeding::sub_seed;

#[derive(Parser)]
#[command(
    name = "swsim",
    version,
    about = "Simulator for zero-error distributed coding of correlated symbolic sources"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunOpts {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config, then $SWSIM_OUT, then ./swsim-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker cap for stages that parallelize.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print and record the source's entropy rate region.
    Region {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Build the pair codec on one orbit, decode, optionally improve.
    Simulate {
        #[command(flatten)]
        opts: RunOpts,
        /// Additionally decode a fresh orbit with the trained maps.
        #[arg(long)]
        train_test: bool,
        /// Write a per-position reconstruction dump (large).
        #[arg(long)]
        dump_positions: Option<PathBuf>,
    },
    /// Run the construction across the config's (a, b) grid.
    Sweep {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run verification suites against their oracles.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0x5157)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    /// Exact admissible-word counts against brute-force enumeration.
    Admissible,
    /// Codebook growth-rate thresholds.
    Growth,
    /// Rank/unrank bijection checks.
    Rank,
    /// Random-binning balance bound.
    Binning,
    /// Painted-base recovery and repaint distance.
    Recovery,
    /// Everything above.
    All,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Config and schema problems exit 2, runtime failures 1.
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Region { opts } => cmd_region(opts),
        Cmd::Simulate {
            opts,
            train_test,
            dump_positions,
        } => cmd_simulate(opts, train_test, dump_positions),
        Cmd::Sweep { opts } => cmd_sweep(opts),
        Cmd::Verify {
            suite,
            seed,
            out,
            threads,
        } => cmd_verify(suite, seed, out, threads),
    }
}

fn load_config(opts: &RunOpts, kind: ExperimentKind) -> Result<(ExperimentConfig, u64)> {
    let text = fs::read_to_string(&opts.config)
        .with_context(|| format!("reading config {}", opts.config.display()))?;
    let config = ExperimentConfig::from_json(&text)?;
    config.expect_kind(kind)?;
    let seed = opts.seed.unwrap_or(config.seed);
    Ok((config, seed))
}

fn resolve_out_dir(flag: &Option<PathBuf>, config: Option<&ExperimentConfig>) -> Result<PathBuf> {
    let dir = flag
        .clone()
        .or_else(|| config.and_then(|c| c.out_dir.as_ref().map(PathBuf::from)))
        .or_else(|| std::env::var_os("SWSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("swsim-out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, contents: &str, manifest: &mut RunManifest) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn finish(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_region(opts: RunOpts) -> Result<ExitCode> {
    let started = Instant::now();
    let (config, seed) = load_config(&opts, ExperimentKind::Region)?;
    let out = resolve_out_dir(&opts.out, Some(&config))?;
    let source = config.source.build().map_err(ConfigError::from)?;
    let region = source.rate_region();
    let tag = source.tag();
    println!(
        "{tag}: h = {}, h|F_X = {}, h|F_Y = {} ({:?})",
        fmt_sig(region.h),
        fmt_sig(region.h_given_x),
        fmt_sig(region.h_given_y),
        region.method
    );
    let mut manifest = RunManifest::new("region", seed, serde_json::to_value(&config)?);
    manifest.diagnostics = serde_json::to_value(region)?;
    let csv = format!("{REGION_HEADER}\n{}\n", region_row(&tag, &region));
    write_file(&out, "region.csv", &csv, &mut manifest)?;
    manifest.runtime_ms = started.elapsed().as_millis();
    finish(&out, &manifest)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(opts: RunOpts, train_test: bool, dump: Option<PathBuf>) -> Result<ExitCode> {
    let started = Instant::now();
    let (config, seed) = load_config(&opts, ExperimentKind::Simulate)?;
    let out = resolve_out_dir(&opts.out, Some(&config))?;
    let source = config.source.build().map_err(ConfigError::from)?;
    let tag = source.tag();
    let mut manifest = RunManifest::new("simulate", seed, serde_json::to_value(&config)?);
    for label in [
        "orbit",
        "tower.S",
        "tower.L",
        "paint.f",
        "paint.g",
        "gate.psi",
        "gate.phi5",
    ] {
        manifest.record_seed(label);
    }

    let orbit = source.sample_orbit(config.orbit_length, sub_seed(seed, "orbit"))?;
    let params = config.pair.to_params(seed);
    let codec = build_pair(&orbit, &source, &params)?;
    for w in &codec.region_warnings {
        eprintln!("warning: {w}");
        manifest.warnings.push(w.clone());
    }
    let report = codec.decode_self()?;
    println!(
        "{tag}: decoded with error fraction {} ({} erasures, {} disagreements over {} positions)",
        fmt_sig(report.error_fraction),
        report.erasures,
        report.disagreements,
        report.n
    );

    let runtime_ms = started.elapsed().as_millis();
    let csv = format!(
        "{SIMULATE_HEADER}\n{}\n",
        simulate_row(&tag, &codec, &report, runtime_ms)
    );
    write_file(&out, "simulate.csv", &csv, &mut manifest)?;

    // Fiber statistics of the decoder's candidate maps.
    let mut map_rows = vec![
        "map,keys,fiber_bound_log2,max_fiber_log2,truncated_fibers,coverage,histogram".to_string(),
    ];
    for stat in codec.name_map_stats() {
        let histogram = stat
            .histogram
            .iter()
            .map(|(size, count)| format!("{size}:{count}"))
            .collect::<Vec<_>>()
            .join(";");
        map_rows.push(format!(
            "{},{},{},{},{},{},{histogram}",
            stat.map,
            stat.keys,
            fmt_sig(stat.fiber_bound_log2),
            fmt_sig(stat.max_fiber_log2),
            stat.truncated_fibers,
            fmt_sig(stat.coverage),
        ));
    }
    write_file(
        &out,
        "name_maps.csv",
        &(map_rows.join("\n") + "\n"),
        &mut manifest,
    )?;

    let mut diagnostics = serde_json::json!({
        "build": codec.diagnostics,
        "decode": report,
        "region": codec.region,
    });

    // Optional improvement rounds on the x track.
    if let Some(improve) = &config.improve {
        let mut rows = vec![IMPROVE_HEADER.to_string()];
        let mut current = codec.p_x_track.clone();
        let mut reports = Vec::new();
        for round in 0..improve.rounds {
            manifest.record_seed(&format!("improve.tower.{round}"));
            manifest.record_seed(&format!("improve.paint.{round}"));
            manifest.record_seed(&format!("gate.improve.{round}"));
            let round_start = Instant::now();
            let (next, rep) =
                improve_pair(&codec, &orbit, &current, improve.eps, improve.delta, round)?;
            println!(
                "improve round {round}: distance {} (bound {}), error {} -> {}",
                fmt_sig(rep.distance),
                fmt_sig(rep.distance_bound),
                fmt_sig(rep.error_before),
                fmt_sig(rep.error_after)
            );
            rows.push(improve_row(
                &tag,
                round,
                &rep,
                round_start.elapsed().as_millis(),
            ));
            reports.push(rep);
            current = next;
        }
        write_file(
            &out,
            "improve.csv",
            &(rows.join("\n") + "\n"),
            &mut manifest,
        )?;
        diagnostics["improve"] = serde_json::to_value(&reports)?;
    }

    if train_test || config.train_test {
        manifest.record_seed("orbit.test");
        let test = decode_fresh_orbit(&codec, &source, sub_seed(seed, "orbit.test"))?;
        println!(
            "fresh-orbit decode: error fraction {}",
            fmt_sig(test.error_fraction)
        );
        diagnostics["fresh_orbit_decode"] = serde_json::to_value(&test)?;
    }

    if let Some(dump_path) = dump {
        let ((dx, dy), _) = codec.decode_tracks(&codec.p_x_track, &codec.p_y_track)?;
        let (tx, ty) = codec.truth();
        let mut body = String::from("pos,x_hat,y_hat,x_true,y_true\n");
        for i in 0..dx.len() {
            let sym = |v: Option<u16>| v.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            body.push_str(&format!(
                "{i},{},{},{},{}\n",
                sym(dx[i]),
                sym(dy[i]),
                tx.values[i],
                ty.values[i]
            ));
        }
        fs::write(&dump_path, body).with_context(|| format!("writing {}", dump_path.display()))?;
        manifest.outputs.push(dump_path.display().to_string());
    }

    manifest.diagnostics = diagnostics;
    manifest.runtime_ms = started.elapsed().as_millis();
    finish(&out, &manifest)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(opts: RunOpts) -> Result<ExitCode> {
    let started = Instant::now();
    let (config, seed) = load_config(&opts, ExperimentKind::Sweep)?;
    let out = resolve_out_dir(&opts.out, Some(&config))?;
    let sweep = config.sweep.as_ref().ok_or_else(|| {
        anyhow!(ConfigError::KindMismatch {
            expected: "a config with the `sweep` section".into(),
            found: "sweep config without the `sweep` field".into(),
        })
    })?;
    let source = config.source.build().map_err(ConfigError::from)?;
    let tag = source.tag();
    let orbit = source.sample_orbit(config.orbit_length, sub_seed(seed, "orbit"))?;
    let params = config.pair.to_params(seed);
    let grid = sweep.grid();

    let mut manifest = RunManifest::new("sweep", seed, serde_json::to_value(&config)?);
    manifest.record_seed("orbit");
    for &(a, b) in &grid {
        manifest.record_seed(&format!("sweep.cell.a{a}.b{b}"));
    }

    let cells = rate_region_experiment(&source, &orbit, &grid, &params, opts.threads);
    let mut rows = vec![SIMULATE_HEADER.to_string()];
    let mut failures = 0usize;
    for cell in &cells {
        rows.push(sweep_row(
            &tag, cell, params.m_s, params.m_l, params.ell, params.eta,
        ));
        match &cell.failure {
            Some(reason) => {
                failures += 1;
                eprintln!("cell (a={}, b={}) failed: {reason}", cell.a, cell.b);
            }
            None => println!(
                "cell (a={}, b={}): error fraction {}",
                cell.a,
                cell.b,
                fmt_sig(cell.error_frac)
            ),
        }
    }
    write_file(&out, "sweep.csv", &(rows.join("\n") + "\n"), &mut manifest)?;
    manifest.diagnostics = serde_json::to_value(&cells)?;
    manifest.runtime_ms = started.elapsed().as_millis();
    finish(&out, &manifest)?;
    if failures > 0 {
        eprintln!("{failures} of {} cells failed", cells.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(suite: Suite, seed: u64, out: Option<PathBuf>, threads: usize) -> Result<ExitCode> {
    let started = Instant::now();
    let out = resolve_out_dir(&out, None)?;
    let mut manifest = RunManifest::new(
        "verify",
        seed,
        serde_json::json!({ "suite": suite_name(suite) }),
    );
    let mut all_pass = true;

    if matches!(suite, Suite::Admissible | Suite::All) {
        let cases = swsim::verify::admissible_suite(14, &[1, 2, 3, 4], &[2, 3]);
        let mut rows = vec!["n,ell,alphabet,count,oracle_count,pass".to_string()];
        for c in &cases {
            rows.push(format!(
                "{},{},{},{},{},{}",
                c.n, c.ell, c.alphabet, c.dp_count, c.oracle_count, c.pass
            ));
        }
        let pass = cases.iter().all(|c| c.pass);
        all_pass &= pass;
        println!("verify admissible: {} cases, pass={pass}", cases.len());
        write_file(
            &out,
            "verify_admissible.csv",
            &(rows.join("\n") + "\n"),
            &mut manifest,
        )?;
    }

    if matches!(suite, Suite::Growth | Suite::All) {
        let cases = swsim::verify::growth_suite();
        let mut rows = vec!["n,ell,alphabet,growth_rate,threshold,pass".to_string()];
        for c in &cases {
            rows.push(format!(
                "{},{},{},{},{},{}",
                c.n,
                c.ell,
                c.alphabet,
                fmt_sig(c.rate),
                fmt_sig(c.threshold),
                c.pass
            ));
        }
        let pass = cases.iter().all(|c| c.pass);
        all_pass &= pass;
        println!("verify growth: {} cases, pass={pass}", cases.len());
        write_file(
            &out,
            "verify_growth.csv",
            &(rows.join("\n") + "\n"),
            &mut manifest,
        )?;
    }

    if matches!(suite, Suite::Rank | Suite::All) {
        let cases = swsim::verify::rank_suite(14, 10_000, seed);
        let mut rows = vec!["n,ell,alphabet,words_checked,pass".to_string()];
        for c in &cases {
            rows.push(format!(
                "{},{},{},{},{}",
                c.n, c.ell, c.alphabet, c.words_checked, c.pass
            ));
        }
        let pass = cases.iter().all(|c| c.pass);
        all_pass &= pass;
        println!("verify rank: {} cases, pass={pass}", cases.len());
        write_file(
            &out,
            "verify_rank.csv",
            &(rows.join("\n") + "\n"),
            &mut manifest,
        )?;
    }

    if matches!(suite, Suite::Binning | Suite::All) {
        let cases = swsim::verify::binning_suite(10_000, 200, seed, threads);
        let mut rows =
            vec!["universe,fiber_a,bins_b,eps,trials,success_fraction,threshold,pass".to_string()];
        for c in &cases {
            rows.push(format!(
                "{},{},{},{},{},{},{},{}",
                c.universe,
                c.fiber_a,
                c.bins_b,
                fmt_sig(c.eps),
                c.trials,
                fmt_sig(c.success_fraction),
                fmt_sig(c.threshold),
                c.pass
            ));
        }
        let pass = cases.iter().all(|c| c.pass);
        all_pass &= pass;
        println!("verify binning: {} cases, pass={pass}", cases.len());
        write_file(
            &out,
            "verify_binning.csv",
            &(rows.join("\n") + "\n"),
            &mut manifest,
        )?;
    }

    if matches!(suite, Suite::Recovery | Suite::All) {
        let cases = swsim::verify::recovery_suite(100, seed);
        let mut rows = vec![
            "idx,m,ell,alphabet,eps,blocks,paint_recovery_exact,repaint_recovery_exact,\
repaint_distance,distance_bound,pass"
                .to_string(),
        ];
        for c in &cases {
            rows.push(format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.idx,
                c.m,
                c.ell,
                c.alphabet,
                fmt_sig(c.eps),
                c.blocks,
                c.paint_recovery_exact,
                c.repaint_recovery_exact,
                fmt_sig(c.repaint_distance),
                fmt_sig(c.distance_bound),
                c.pass()
            ));
        }
        let pass = cases.iter().all(|c| c.pass());
        all_pass &= pass;
        println!("verify recovery: {} instances, pass={pass}", cases.len());
        write_file(
            &out,
            "verify_recovery.csv",
            &(rows.join("\n") + "\n"),
            &mut manifest,
        )?;
    }

    manifest.runtime_ms = started.elapsed().as_millis();
    finish(&out, &manifest)?;
    if all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verification failures recorded");
        Ok(ExitCode::from(1))
    }
}

fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::Admissible => "admissible",
        Suite::Growth => "growth",
        Suite::Rank => "rank",
        Suite::Binning => "binning",
        Suite::Recovery => "recovery",
        Suite::All => "all",
    }
}
