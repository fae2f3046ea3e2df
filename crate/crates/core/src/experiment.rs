//! Batch runner: independent seeded runs, per-run summaries at the
//! checkpoint cycles, and the aggregate statistics table.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{BatchConfig, ConfigError, SimConfig};
use crate::dynamics::{CycleReport, World};
use crate::metrics::{profile_summary, top_k_snapshot, ProfileStats, RbvProfile, StrategySnapshot};
use crate::model::StrategyTag;
use crate::output::{format_float, RunRow, RunTable, TraceWriter};

/// Size of the leaderboard the top-k counts refer to.
pub const TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {run_id} (seed {seed}) failed: {message}")]
    Run {
        run_id: u32,
        seed: u64,
        message: String,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `i`: the `i`-th output of a SplitMix64 stream started at
/// `base_seed`. Depends only on `(base_seed, i)`.
pub fn derive_seed(base_seed: u64, run_id: u32) -> u64 {
    splitmix64(base_seed.wrapping_add((run_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Everything recorded at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Checkpoint as configured.
    pub requested: u32,
    /// Cycle actually captured (the last cycle when the run is shorter).
    pub cycle: u32,
    pub snapshot: StrategySnapshot,
    pub relative: [Option<f64>; 4],
    pub profiles: [ProfileStats; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: u32,
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
}

fn capture(world: &World, requested: u32) -> Checkpoint {
    let snapshot = top_k_snapshot(&world.firms, TOP_K, world.cycle);
    Checkpoint {
        requested,
        cycle: world.cycle,
        relative: snapshot.relative_diffs(),
        snapshot,
        profiles: profile_summary(&world.firms),
    }
}

/// Runs one simulation, calling `on_cycle` with the initial snapshot
/// (cycle 0) and after every step.
pub fn run_one_with<F>(
    run_id: u32,
    seed: u64,
    sim: &SimConfig,
    mut on_cycle: F,
) -> Result<RunSummary, ConfigError>
where
    F: FnMut(&World, &CycleReport),
{
    sim.validate()?;
    let config = SimConfig {
        rng_seed: seed,
        ..sim.clone()
    };
    let mut world = World::new(config);
    on_cycle(&world, &world.snapshot_report());

    let mut checkpoints = Vec::with_capacity(sim.checkpoint_cycles.len());
    let mut pending = sim.checkpoint_cycles.iter().copied().peekable();
    while let Some(&c) = pending.peek() {
        if c > 0 {
            break;
        }
        checkpoints.push(capture(&world, c));
        pending.next();
    }
    for _ in 0..sim.n_cycles {
        let report = world.step_cycle();
        on_cycle(&world, &report);
        while let Some(&c) = pending.peek() {
            if c != world.cycle {
                break;
            }
            checkpoints.push(capture(&world, c));
            pending.next();
        }
    }
    for c in pending {
        checkpoints.push(capture(&world, c));
    }
    Ok(RunSummary {
        run_id,
        seed,
        checkpoints,
    })
}

pub fn run_one(run_id: u32, seed: u64, sim: &SimConfig) -> Result<RunSummary, ConfigError> {
    run_one_with(run_id, seed, sim, |_, _| {})
}

/// Runs one simulation and writes its trace CSV to `path`.
pub fn run_one_traced(
    run_id: u32,
    seed: u64,
    sim: &SimConfig,
    path: &Path,
) -> Result<RunSummary, BatchError> {
    let fail = |message: String| BatchError::Run {
        run_id,
        seed,
        message,
    };
    let file = File::create(path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    let mut writer =
        TraceWriter::new(BufWriter::new(file), run_id).map_err(|e| fail(e.to_string()))?;
    let mut io_error = None;
    let summary = run_one_with(run_id, seed, sim, |_, report| {
        if io_error.is_none() {
            io_error = writer.write_report(report).err();
        }
    })?;
    if let Some(e) = io_error {
        return Err(fail(e.to_string()));
    }
    writer
        .finish()
        .and_then(|mut w| w.flush())
        .map_err(|e| fail(e.to_string()))?;
    Ok(summary)
}

const STRATEGY_FIELDS: [&str; 5] = ["top10", "best", "avg5", "avg10", "avgall"];
const RELATIVE_FIELDS: [&str; 4] = ["rel_best", "rel_avg5", "rel_avg10", "rel_avgall"];

/// Column names of the run table for the given checkpoints.
pub fn summary_columns(checkpoints: &[u32]) -> Vec<String> {
    let mut cols = Vec::new();
    for c in checkpoints {
        for field in STRATEGY_FIELDS {
            for tag in ["io", "rbv"] {
                cols.push(format!("{field}_{tag}_c{c}"));
            }
        }
        for field in RELATIVE_FIELDS {
            cols.push(format!("{field}_c{c}"));
        }
        cols.push(format!("leader_rbv_c{c}"));
        for p in RbvProfile::ALL {
            cols.push(format!("n_{}_c{c}", p.as_str()));
        }
        for p in RbvProfile::ALL {
            cols.push(format!("perf_{}_c{c}", p.as_str()));
        }
    }
    cols
}

impl RunSummary {
    /// Values in [`summary_columns`] order; missing values are NaN.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for cp in &self.checkpoints {
            let s = &cp.snapshot;
            for (io, rbv) in [
                (s.io.count_in_top as f64, s.rbv.count_in_top as f64),
                (s.io.best, s.rbv.best),
                (s.io.avg_top5, s.rbv.avg_top5),
                (s.io.avg_top10, s.rbv.avg_top10),
                (s.io.avg_all, s.rbv.avg_all),
            ] {
                v.push(io);
                v.push(rbv);
            }
            v.extend(cp.relative.iter().map(|r| r.unwrap_or(f64::NAN)));
            v.push(match s.leader {
                Some(StrategyTag::Rbv) => 1.0,
                Some(StrategyTag::Io) => 0.0,
                None => f64::NAN,
            });
            v.extend(cp.profiles.iter().map(|p| p.count as f64));
            v.extend(cp.profiles.iter().map(|p| p.mean_perf));
        }
        v
    }
}

pub fn summaries_to_table(checkpoints: &[u32], summaries: &[RunSummary]) -> RunTable {
    RunTable {
        columns: summary_columns(checkpoints),
        rows: summaries
            .iter()
            .map(|s| RunRow {
                run_id: s.run_id,
                seed: s.seed,
                values: s.values(),
            })
            .collect(),
    }
}

/// Per-column statistics over runs, NaNs skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub variance: f64,
    pub median: f64,
    pub max: f64,
    pub min: f64,
    /// For relative-difference columns: runs with value > 0 / < 0.
    pub tally: Option<(usize, usize)>,
}

impl ColumnStats {
    /// Sample statistics (`n - 1` denominator; zero spread for one value).
    pub fn of(values: &[f64], tally: bool) -> Self {
        let mut xs: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        let n = xs.len();
        let tally = tally.then(|| {
            (
                xs.iter().filter(|&&x| x > 0.0).count(),
                xs.iter().filter(|&&x| x < 0.0).count(),
            )
        });
        if n == 0 {
            let nan = f64::NAN;
            return Self {
                n,
                mean: nan,
                std_dev: nan,
                variance: nan,
                median: nan,
                max: nan,
                min: nan,
                tally,
            };
        }
        xs.sort_by(f64::total_cmp);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let median = if n % 2 == 1 {
            xs[n / 2]
        } else {
            (xs[n / 2 - 1] + xs[n / 2]) / 2.0
        };
        Self {
            n,
            mean,
            std_dev: variance.sqrt(),
            variance,
            median,
            max: xs[n - 1],
            min: xs[0],
            tally,
        }
    }
}

/// Aggregate table: one [`ColumnStats`] per run-table column.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub columns: Vec<String>,
    pub stats: Vec<ColumnStats>,
}

pub fn is_relative_column(name: &str) -> bool {
    name.starts_with("rel_")
}

pub fn aggregate(table: &RunTable) -> Aggregate {
    let stats = table
        .columns
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let col: Vec<f64> = table.rows.iter().map(|r| r.values[k]).collect();
            ColumnStats::of(&col, is_relative_column(name))
        })
        .collect();
    Aggregate {
        columns: table.columns.clone(),
        stats,
    }
}

impl Aggregate {
    pub fn get(&self, column: &str) -> Option<&ColumnStats> {
        self.columns
            .iter()
            .position(|c| c == column)
            .map(|k| &self.stats[k])
    }

    /// Rows are statistics, columns are run-table columns. Tally rows are
    /// filled for the relative-difference columns only.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["statistic".to_string()];
        header.extend(self.columns.iter().cloned());
        out.write_record(&header)?;

        type Getter = fn(&ColumnStats) -> Option<f64>;
        let rows: [(&str, Getter); 10] = [
            ("mean", |s| Some(s.mean)),
            ("std_dev", |s| Some(s.std_dev)),
            ("variance", |s| Some(s.variance)),
            ("median", |s| Some(s.median)),
            ("max", |s| Some(s.max)),
            ("min", |s| Some(s.min)),
            ("nb_io_gt_rbv", |s| s.tally.map(|t| t.0 as f64)),
            ("nb_rbv_gt_io", |s| s.tally.map(|t| t.1 as f64)),
            ("pct_io_gt_rbv", |s| s.tally.map(|t| pct(t.0, s.n))),
            ("pct_rbv_gt_io", |s| s.tally.map(|t| pct(t.1, s.n))),
        ];
        for (label, get) in rows {
            let mut rec = vec![label.to_string()];
            rec.extend(
                self.stats
                    .iter()
                    .map(|s| get(s).map(format_float).unwrap_or_default()),
            );
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn pct(k: usize, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        100.0 * k as f64 / n as f64
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub summaries: Vec<RunSummary>,
    pub table: RunTable,
    pub aggregate: Aggregate,
}

impl BatchOutput {
    pub fn runs_csv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.table.write_csv(&mut buf).expect("in-memory write");
        buf
    }

    pub fn aggregate_csv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.aggregate.write_csv(&mut buf).expect("in-memory write");
        buf
    }
}

/// Runs `batch.n_runs` simulations on `batch.workers` threads. Output is
/// ordered by run id whatever the completion order. When `trace_dir` is
/// given, each run's trace goes to `trace_dir/run_<id>.csv`.
pub fn run_batch(
    batch: &BatchConfig,
    sim: &SimConfig,
    trace_dir: Option<&Path>,
) -> Result<BatchOutput, BatchError> {
    batch.validate()?;
    sim.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(batch.workers)
        .build()
        .map_err(|e| BatchError::Pool(e.to_string()))?;

    let run = |run_id: u32| -> Result<RunSummary, BatchError> {
        let seed = derive_seed(batch.base_seed, run_id);
        let outcome = std::panic::catch_unwind(|| match trace_dir {
            Some(dir) => run_one_traced(run_id, seed, sim, &trace_path(dir, run_id)),
            None => run_one(run_id, seed, sim).map_err(BatchError::from),
        });
        outcome.unwrap_or_else(|panic| {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(BatchError::Run {
                run_id,
                seed,
                message,
            })
        })
    };
    let summaries: Vec<RunSummary> = pool.install(|| {
        (0..batch.n_runs)
            .into_par_iter()
            .map(run)
            .collect::<Result<_, _>>()
    })?;

    let table = summaries_to_table(&sim.checkpoint_cycles, &summaries);
    let aggregate = aggregate(&table);
    Ok(BatchOutput {
        summaries,
        table,
        aggregate,
    })
}

pub fn trace_path(dir: &Path, run_id: u32) -> PathBuf {
    dir.join(format!("run_{run_id}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_sim() -> SimConfig {
        SimConfig {
            n_firms: 20,
            n_markets: 5,
            n_cycles: 30,
            checkpoint_cycles: vec![5, 30],
            ..SimConfig::default()
        }
    }

    #[test]
    fn seed_derivation_is_stable() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
        // Pinned: changing this breaks the published seed contract.
        assert_eq!(derive_seed(0, 0), splitmix64(0x9E37_79B9_7F4A_7C15));
    }

    #[test]
    fn zero_cycle_run_snapshots_initial_world() {
        let sim = SimConfig {
            n_cycles: 0,
            ..small_sim()
        };
        let s = run_one(0, 1, &sim).unwrap();
        assert_eq!(s.checkpoints.len(), 2);
        assert!(s.checkpoints.iter().all(|c| c.cycle == 0));
        assert_eq!(s.checkpoints[0].snapshot.io.avg_all, 0.0);
    }

    #[test]
    fn run_is_deterministic() {
        let bits = |s: RunSummary| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(
            bits(run_one(0, 99, &small_sim()).unwrap()),
            bits(run_one(0, 99, &small_sim()).unwrap())
        );
    }

    #[test]
    fn invalid_config_aborts_before_running() {
        let sim = SimConfig {
            n_firms: 3,
            ..small_sim()
        };
        let mut called = false;
        assert!(run_one_with(0, 1, &sim, |_, _| called = true).is_err());
        assert!(!called);
    }

    #[test]
    fn single_run_aggregate_equals_row() {
        let batch = BatchConfig {
            n_runs: 1,
            base_seed: 5,
            workers: 1,
            trace: false,
        };
        let out = run_batch(&batch, &small_sim(), None).unwrap();
        for (k, s) in out.aggregate.stats.iter().enumerate() {
            let v = out.table.rows[0].values[k];
            if v.is_nan() {
                assert_eq!(s.n, 0);
                continue;
            }
            assert_eq!(s.mean, v);
            assert_eq!(s.median, v);
            assert_eq!(s.min, v);
            assert_eq!(s.max, v);
            assert_eq!(s.std_dev, 0.0);
        }
    }

    #[test]
    fn two_row_statistics_by_hand() {
        let s = ColumnStats::of(&[1.0, 4.0], true);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        // ((1-2.5)^2 + (4-2.5)^2) / 1
        assert_eq!(s.variance, 4.5);
        assert_eq!(s.tally, Some((2, 0)));
        let s = ColumnStats::of(&[-1.0, f64::NAN, 2.0, 0.0], true);
        assert_eq!(s.n, 3);
        assert_eq!(s.median, 0.0);
        assert_eq!(s.tally, Some((1, 1)));
    }
}
