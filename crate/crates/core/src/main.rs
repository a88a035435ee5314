use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use uplink_sched::cli::{run_matrix, write_outputs, CellReport};
use uplink_sched::config::{self, parse_config, parse_rhos, parse_seeds, ScenarioConfig};
use uplink_sched::SimMode;

/// Uplink QoS scheduling simulator.
#[derive(Debug, Parser)]
#[command(name = "uplink-sim", version)]
struct Args {
    /// Scenario file; the built-in four-station scenario when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// ss1, ss2, gpc or all; comma lists accepted.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, value_name = "N")]
    frames: Option<u64>,
    /// Comma list; `a..b` is an inclusive range.
    #[arg(long, value_name = "LIST")]
    seeds: Option<String>,
    /// Comma list; `start:stop:step` is an inclusive sweep.
    #[arg(long, value_name = "LIST")]
    rho: Option<String>,
    /// Output directory (overrides SIM_OUT and the config).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also write packets.csv.
    #[arg(long)]
    trace: bool,
    /// Drop rtPS packets that can no longer meet their deadline.
    #[arg(long)]
    drop_expired: bool,
    /// Print the effective scenario and exit.
    #[arg(long)]
    print_config: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn parse_modes(s: &str) -> Result<Vec<SimMode>, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(SimMode::ALL.to_vec());
    }
    s.split(',').map(str::parse).collect()
}

fn load(args: &Args) -> Result<ScenarioConfig, Vec<String>> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
            parse_config(&text)
                .map_err(|errs| errs.iter().map(|e| format!("{}: {e}", path.display())).collect::<Vec<_>>())?
        }
        None => config::reference_scenario(),
    };
    let mut errors = Vec::new();
    if let Some(m) = &args.mode {
        match parse_modes(m) {
            Ok(v) => cfg.modes = v,
            Err(e) => errors.push(format!("--mode: {e}")),
        }
    }
    if let Some(n) = args.frames {
        if n == 0 {
            errors.push("--frames: must be > 0".into());
        }
        cfg.frames = n;
    }
    if let Some(s) = &args.seeds {
        match parse_seeds(s) {
            Ok(v) => cfg.seeds = v,
            Err(e) => errors.push(format!("--seeds: {e}")),
        }
    }
    if let Some(r) = &args.rho {
        match parse_rhos(r) {
            Ok(v) => cfg.rhos = v,
            Err(e) => errors.push(format!("--rho: {e}")),
        }
    }
    cfg.trace |= args.trace;
    cfg.drop_expired |= args.drop_expired;
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

fn output_dir(args: &Args, cfg: &ScenarioConfig) -> PathBuf {
    if let Some(dir) = &args.out {
        return dir.clone();
    }
    if let Some(dir) = std::env::var_os("SIM_OUT") {
        return dir.into();
    }
    cfg.output_dir
        .as_ref()
        .map_or_else(|| PathBuf::from("out").join(&cfg.name), PathBuf::from)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(errors) => {
            for e in errors {
                eprintln!("error: {e}");
            }
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if args.print_config {
        print!("{}", config::serialize(&cfg));
        return ExitCode::SUCCESS;
    }

    let outcomes = run_matrix(&cfg);
    let mut failed = false;
    let mut reports: Vec<&CellReport> = Vec::new();
    for o in &outcomes {
        match &o.result {
            Ok(r) => {
                if !r.conservation_holds {
                    eprintln!("warning: {} seed {} rho {}: packet conservation failed", o.key.mode, o.key.seed, o.key.rho);
                }
                reports.push(r);
            }
            Err(e) => {
                failed = true;
                eprintln!("error: {} seed {} rho {}: {e}", o.key.mode, o.key.seed, o.key.rho);
            }
        }
    }

    let dir = output_dir(&args, &cfg);
    match write_outputs(&reports, &dir) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: writing {}: {e}", dir.display());
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    if failed {
        ExitCode::from(EXIT_RUNTIME)
    } else {
        ExitCode::SUCCESS
    }
}
