use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use consensus_lut::harness::config::{self, ConfigDoc};
use consensus_lut::harness::{
    run_scenario, run_suite, write_comparison_csv, write_report_csv, write_table_matrix,
    write_trajectory_csv, ScenarioConfig,
};
use consensus_lut::stability::{
    gamma_lower_bound, string_stability_margin, FrequencySweep, TopologyMatrix,
};
use consensus_lut::table::{build_table, load_table, save_table, Parallelism};
use consensus_lut::{BuildConfig, GainPair, GainTable};

#[derive(Parser)]
#[command(name = "consensus-lut", version, about = "Lookup-table scheduled consensus car following")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the gain table offline.
    BuildTable {
        #[arg(long)]
        axes: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 1 builds serially. Defaults to all cores.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run one scenario and write its trajectory and report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Exit 0 even if the run violates the safety constraint.
        #[arg(long)]
        allow_unsafe: bool,
    },
    /// Compare the lookup controller against both baselines on every scenario.
    Suite {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        baselines: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// String-stability sweep and coupling-gain bound.
    Stability {
        #[arg(long, conflicts_with_all = ["gamma", "k"])]
        table: Option<PathBuf>,
        #[arg(long, requires = "k")]
        gamma: Option<f64>,
        #[arg(long, requires = "gamma")]
        k: Option<f64>,
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Print a table summary or a single cell.
    InspectTable {
        table: PathBuf,
        #[arg(long, num_args = 3, value_names = ["I1", "I2", "I3"])]
        cell: Option<Vec<usize>>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::BuildTable {
            axes,
            candidates,
            config,
            out,
            workers,
        } => {
            let axes = config::table_axes(&ConfigDoc::load(&axes)?)?;
            let candidates = config::candidate_sets(&ConfigDoc::load(&candidates)?)?;
            let cfg = config::build_config(&ConfigDoc::load(&config)?)?;
            let parallelism = match workers {
                Some(0) => bail!("--workers must be at least 1"),
                Some(1) => Parallelism::Serial,
                Some(n) => Parallelism::Workers(n),
                None => Parallelism::Auto,
            };
            let started = Instant::now();
            let table = build_table(&axes, &candidates, &cfg, parallelism)?;
            save_table(&table, &out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "built {} cells ({} with gains) in {:.1} s -> {}",
                table.cells().len(),
                table.valid_cells(),
                started.elapsed().as_secs_f64(),
                out.display()
            );
        }
        Command::Run {
            scenario,
            config,
            table,
            out_dir,
            allow_unsafe,
        } => {
            let doc = ConfigDoc::load(&config)?;
            let cfg = config::build_config(&doc)?;
            let baselines = config::baselines(&doc)?;
            let scenario = config::scenario(&ConfigDoc::load(&scenario)?, &baselines)?;
            let table = table.map(load_table).transpose()?;
            let mut run = run_scenario(&scenario, &cfg, table.as_ref(), &baselines)?;
            fs::create_dir_all(&out_dir)?;
            let traj_path = out_dir.join(format!("{}_{}.csv", scenario.id, run.report.controller));
            write_trajectory_csv(&run.trajectory, &cfg, create(&traj_path)?)?;
            run.report.trajectory_path = Some(traj_path);
            write_report_csv([&run.report], create(&out_dir.join(format!("{}_report.csv", scenario.id)))?)?;
            write_report_csv([&run.report], io::stdout().lock())?;
            if run.report.fallback_engaged {
                eprintln!("note: no scheduled gains for this initial condition; fallback controller used");
            }
            if run.report.metrics.safety_violated && !allow_unsafe {
                eprintln!("safety constraint violated (pass --allow-unsafe to ignore)");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Suite {
            table,
            config,
            baselines,
            out_dir,
        } => {
            let cfg = config::build_config(&ConfigDoc::load(&config)?)?;
            let doc = ConfigDoc::load(&baselines)?;
            let baselines = config::baselines(&doc)?;
            let scenarios = match config::suite_scenario_paths(&doc) {
                Some(paths) => paths
                    .iter()
                    .map(|p| config::scenario(&ConfigDoc::load(p)?, &baselines))
                    .collect::<consensus_lut::Result<Vec<_>>>()?,
                None => ScenarioConfig::reference_suite(),
            };
            let table = load_table(&table)?;
            let mut report = run_suite(&table, &cfg, &baselines, &scenarios)?;
            fs::create_dir_all(&out_dir)?;
            for run in &mut report.runs {
                let path = out_dir.join(format!("{}_{}.csv", run.report.scenario, run.report.controller));
                write_trajectory_csv(&run.trajectory, &cfg, create(&path)?)?;
                run.report.trajectory_path = Some(path);
            }
            write_comparison_csv(&report, create(&out_dir.join("comparison.csv"))?)?;
            write_table_matrix(&report, create(&out_dir.join("summary.txt"))?)?;
            write_table_matrix(&report, io::stdout().lock())?;
        }
        Command::Stability {
            table,
            gamma,
            k,
            sweep,
        } => {
            let sweep = match sweep {
                Some(p) => config::frequency_sweep(&ConfigDoc::load(p)?)?,
                None => FrequencySweep::default(),
            };
            match (table, gamma, k) {
                (Some(path), _, _) => {
                    let table = load_table(&path)?;
                    stability_for_table(&table, &sweep)?;
                }
                (None, Some(gamma), Some(k)) => {
                    let cfg = BuildConfig::default();
                    stability_for_pair(GainPair::new(k, gamma)?, &cfg, &sweep)?;
                }
                _ => bail!("pass either --table or both --gamma and --k"),
            }
        }
        Command::InspectTable { table, cell } => inspect(&load_table(&table)?, cell)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn stability_for_pair(gains: GainPair, cfg: &BuildConfig, sweep: &FrequencySweep) -> Result<bool> {
    let r = string_stability_margin(gains, 1.0, cfg.time_gap, cfg.comm_delay, sweep)?;
    let bound = gamma_lower_bound(&TopologyMatrix::predecessor_diagonal(&[1.0], &[gains.k])?)?;
    println!(
        "gamma={} k={}  max|G|={:.6} at omega={:.4} rad/s  string_stable={}  gamma_bound={} (predecessor-diagonal) satisfied={}{}",
        gains.gamma,
        gains.k,
        r.max_magnitude,
        r.worst_omega,
        r.is_string_stable(),
        bound,
        gains.gamma > bound,
        if r.skipped.is_empty() {
            String::new()
        } else {
            format!("  skipped={:?}", r.skipped)
        }
    );
    Ok(r.is_string_stable())
}

fn stability_for_table(table: &GainTable, sweep: &FrequencySweep) -> Result<()> {
    let mut pairs: Vec<GainPair> = Vec::new();
    for c in table.cells().iter().filter(|c| c.is_valid()) {
        if !pairs.contains(c) {
            pairs.push(*c);
        }
    }
    pairs.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.k.total_cmp(&b.k)));
    let mut all = true;
    for p in pairs {
        all &= stability_for_pair(p, &table.config, sweep)?;
    }
    println!("all stored gain pairs string stable: {all}");
    Ok(())
}

fn inspect(table: &GainTable, cell: Option<Vec<usize>>) -> Result<()> {
    let mut out = io::stdout().lock();
    if let Some(idx) = cell {
        let idx = [idx[0], idx[1], idx[2]];
        let Some(pair) = table.cell(idx) else {
            bail!("cell {idx:?} outside table shape {:?}", table.axes.shape());
        };
        let key = table.axes.key(idx);
        writeln!(
            out,
            "cell {idx:?} dr={} vi={} vj={} -> {}",
            key.dr,
            key.vi,
            key.vj,
            if pair.is_valid() {
                format!("k={} gamma={}", pair.k, pair.gamma)
            } else {
                "NaN (fallback)".to_string()
            }
        )?;
        return Ok(());
    }
    let c = &table.config;
    writeln!(out, "shape {:?} ({} cells, {} with gains)", table.axes.shape(), table.cells().len(), table.valid_cells())?;
    writeln!(out, "dr [{}, {}]  vi [{}, {}]  vj [{}, {}]",
        table.axes.dr.first(), table.axes.dr.last(),
        table.axes.vi.first(), table.axes.vi.last(),
        table.axes.vj.first(), table.axes.vj.last())?;
    writeln!(out, "gamma candidates {:?}  k candidates {:?}", table.candidates.gammas(), table.candidates.ks())?;
    writeln!(out, "dt={} tmax={} tau={} lj={} tg={} hold={} mode={}", c.dt, c.t_max, c.comm_delay, c.leader_length, c.time_gap, c.hold_window, c.safety_mode)?;
    writeln!(out, "selection ties: comfort score, then smallest (gamma, k)")?;
    writeln!(out, "config digest {}", table.config_digest())?;
    let mut hist: Vec<(f64, usize)> = Vec::new();
    for g in table.cells().iter().filter(|c| c.is_valid()).map(|c| c.gamma) {
        match hist.iter_mut().find(|(v, _)| *v == g) {
            Some((_, n)) => *n += 1,
            None => hist.push((g, 1)),
        }
    }
    hist.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (g, n) in hist {
        writeln!(out, "  gamma={g}: {n} cells")?;
    }
    Ok(())
}
