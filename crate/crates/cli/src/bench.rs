use std::fs::{self, File};
use std::io::BufWriter;

use anyhow::{Context, Result};
use pic_core::serving::report::{write_json, write_request_csv, write_tidy_csv};
use pic_core::serving::{
    outcome_rows, run_poisson, run_synchronous, scaling_sweep, summarize_sync, synthetic_cases, Clock, WorkloadSpec,
};
use pic_core::{KvStore, LinkAlgorithm, StoreConfig};

use crate::args::{BenchArgs, ClockArg, Mode};

pub fn run(args: BenchArgs) -> Result<()> {
    args.check()?;
    let algorithms: Vec<LinkAlgorithm> =
        args.algorithm.iter().map(|a| a.parse()).collect::<Result<_, _>>()?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let create = |name: String| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(args.out.join(name))?)) };
    let tag = |a: &LinkAlgorithm| a.to_string().replace(':', "-");

    if args.mode == Mode::Sweep {
        let weights = args.model.load()?;
        let cfg = weights.config();
        let rows = scaling_sweep(cfg.hidden_dim, cfg.num_layers, &args.lengths, args.chunk_size, args.query_len, &algorithms)?;
        write_tidy_csv(create("sweep.csv".into())?, &rows)?;
        println!("wrote {} rows to {}", rows.len(), args.out.join("sweep.csv").display());
        return Ok(());
    }

    let weights = args.model.load()?;
    for algorithm in algorithms {
        // a private store per run keeps CCR and ids independent of earlier runs
        let kv_dir = tempfile::tempdir_in(&args.out)?;
        let store = KvStore::open(StoreConfig::new(args.kv_mem_bytes, kv_dir.path()))?;
        match args.mode {
            Mode::Sync => {
                let cases =
                    synthetic_cases(args.seed, args.cases, args.chunks_per_case, args.chunk_len, args.query_len);
                let outcomes = run_synchronous(&weights, &store, &cases, algorithm, args.max_new_tokens);
                for o in &outcomes {
                    if let Err(e) = &o.result {
                        eprintln!("case {}: {e}", o.index);
                    }
                }
                write_request_csv(create(format!("sync-{}.csv", tag(&algorithm)))?, &outcome_rows(&outcomes, algorithm))?;
                let summary = summarize_sync(&outcomes, algorithm);
                write_json(create(format!("sync-{}.json", tag(&algorithm)))?, &summary)?;
                println!("{}", serde_json::to_string(&summary)?);
            }
            Mode::Poisson => {
                let cases =
                    synthetic_cases(args.seed, args.users, args.chunks_per_case, args.chunk_len, args.query_len);
                let clock = match args.clock {
                    ClockArg::Simulated => {
                        Clock::Simulated { flops_per_second: args.flops_per_second, overhead_s: args.overhead }
                    }
                    ClockArg::Wall => Clock::Wall { time_scale: args.time_scale },
                };
                let spec = WorkloadSpec {
                    rate: args.rate,
                    duration_s: args.duration,
                    users: args.users,
                    algorithm,
                    max_new_tokens: args.max_new_tokens,
                    max_in_flight: args
                        .max_in_flight
                        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
                    clock,
                };
                let report = run_poisson(&weights, &store, &spec, &cases, args.seed)?;
                let t = tag(&algorithm);
                write_tidy_csv(create(format!("poisson-{t}-arrivals.csv"))?, &report.arrivals())?;
                write_request_csv(create(format!("poisson-{t}.csv"))?, &report.rows())?;
                write_tidy_csv(create(format!("poisson-{t}-summary.csv"))?, std::slice::from_ref(&report.summary))?;
                write_json(create(format!("poisson-{t}-summary.json"))?, &report.summary)?;
                println!("{}", serde_json::to_string(&report.summary)?);
            }
            Mode::Sweep => unreachable!(),
        }
    }
    Ok(())
}
