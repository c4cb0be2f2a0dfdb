use clap::{Parser, Subcommand};
use ibpm::bench::{bench_matrix, bench_rhs, case_matrix};
use ibpm::io::{grid_dump, looks_like_matrix, parse_matrix, write_matrix};
use ibpm::{parse_config, run_case, Error, RunOptions};
use ibpm_core::krylov::{SaParams, SolverParams};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ibpm", version, about = "Immersed boundary projection method flow solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a case.
    Run {
        config: PathBuf,
        /// Worker threads for the numerical kernels.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        threads: u64,
        /// Output directory (overrides the case file).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compare cg, pcg-diag, pcg-sa and amg on a case's coupled system or
    /// on a matrix file.
    Bench {
        input: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        rel_tol: f64,
        #[arg(long, default_value_t = 20000)]
        max_iters: usize,
        /// Also write the matrix to this file.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
    /// Print the grid face coordinates of a case.
    GridDump {
        config: PathBuf,
        /// Write to a file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run {
            config,
            threads,
            out,
            resume,
        } => {
            let cfg = parse_config(&config)?;
            let opts = RunOptions {
                out_dir: out,
                resume,
                threads: threads as usize,
            };
            let s = run_case(&cfg, &opts)?;
            println!("{} steps to t = {} written to {}", s.steps, s.final_time, s.out_dir.display());
            if let Some(c) = &s.couette {
                println!("couette profile error: l2 {:e} linf {:e}", c.l2, c.linf);
            }
            print!("{}", s.timing);
            Ok(())
        }
        Command::Bench {
            input,
            rel_tol,
            max_iters,
            dump_matrix,
        } => {
            let text = std::fs::read_to_string(&input).map_err(|e| Error::Config {
                path: input.display().to_string(),
                line: 0,
                msg: format!("cannot read input: {e}"),
            })?;
            let (a, sa) = if looks_like_matrix(&text) {
                (parse_matrix(&input, &text)?, SaParams::default())
            } else {
                let cfg = parse_config(&input)?;
                (case_matrix(&cfg)?, cfg.stepping.sa)
            };
            if let Some(p) = dump_matrix {
                write_matrix(&p, &a)?;
            }
            let params = SolverParams {
                rel_tol,
                max_iters,
                ..SolverParams::default()
            };
            if let Err(e) = params.validate() {
                return Err(Error::Config {
                    path: "command line".into(),
                    line: 0,
                    msg: e.to_string(),
                });
            }
            print!("{}", bench_matrix(&a, &bench_rhs(a.n_rows()), params, &sa));
            Ok(())
        }
        Command::GridDump { config, out } => {
            let cfg = parse_config(&config)?;
            let grid = cfg.grid.build().map_err(Error::Setup)?;
            let text = grid_dump(&grid);
            match out {
                Some(p) => ibpm::io::write_atomic(&p, &text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}
