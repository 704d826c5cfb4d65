use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fairmarket_core::pricing::{weight_guide, CleaningCostModel, WeightVector};
use fairmarket_core::protocol::QuotePolicy;
use fairmarket_core::quality::assess_all;
use fairmarket_core::sim::{
    run_cheat, run_distribution, run_mistakes, run_protocol_demo, run_timing, ExperimentReport, MarketConfig,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fairmarket", version, about = "Quality-aware data market with hidden prices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the quality profile of every dataset in a config.
    Assess { config: PathBuf },
    /// Register buyers and quote a query for one of them.
    Quote {
        config: PathBuf,
        /// 1-based buyer number; earlier buyers are registered first.
        #[arg(long, default_value_t = 1)]
        user: u64,
        #[arg(long)]
        query: String,
        /// Four comma-separated weights summing to 1.
        #[arg(long, default_value = "0.25,0.25,0.25,0.25")]
        weights: String,
        /// Recharge before quoting.
        #[arg(long, default_value_t = 0.0)]
        balance: f64,
    },
    /// Run the textbook trace and the range-narrowing attack on the toy group.
    Demo,
    /// Run one experiment and print its JSON report.
    Exp(ExpArgs),
    /// Show which cleaning level each weight band selects.
    Guide { config: Option<PathBuf> },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Timing,
    Distribution,
    Mistakes,
    Cheat,
}

#[derive(clap::Args)]
struct ExpArgs {
    experiment: Experiment,
    /// Market config; defaults to the generated desk tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Corruption steps for the mistakes experiment.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 20)]
    cells: usize,
    /// Reveal prices to the cheating buyer (debug only).
    #[arg(long)]
    leak: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-dataset histogram CSVs (distribution only).
    #[arg(long)]
    histograms: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Assess { config } => assess(&config),
        Command::Quote {
            config,
            user,
            query,
            weights,
            balance,
        } => quote(&config, user, &query, &weights, balance),
        Command::Demo => demo(),
        Command::Exp(args) => experiment(args),
        Command::Guide { config } => {
            let model = match config {
                Some(p) => load(&p)?.cost_model,
                None => CleaningCostModel::default(),
            };
            print!("{}", weight_guide(&model));
            Ok(true)
        }
    }
}

fn load(path: &Path) -> Result<MarketConfig> {
    MarketConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn assess(path: &Path) -> Result<bool> {
    let cfg = load(path)?;
    let profiles = cfg
        .load_datasets()?
        .iter()
        .map(|d| assess_all(&d.vendor.relation, &d.vendor.rules, cfg.now))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{}", serde_json::to_string_pretty(&profiles)?);
    Ok(true)
}

fn parse_weights(s: &str) -> Result<WeightVector> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad weight {p:?}")))
        .collect::<Result<Vec<_>>>()?;
    let Ok(w) = <[f64; 4]>::try_from(parts) else {
        bail!("expected four weights, got {s:?}");
    };
    Ok(WeightVector::new(w)?)
}

fn quote(path: &Path, user: u64, query: &str, weights: &str, balance: f64) -> Result<bool> {
    if user == 0 {
        bail!("buyers are numbered from 1");
    }
    let weights = parse_weights(weights)?;
    let mut market = load(path)?.build_market()?;
    let mut buyer = None;
    for _ in 0..user {
        buyer = Some(market.register_buyer(QuotePolicy::Hold)?);
    }
    let (slot, user_id) = buyer.expect("at least one buyer");
    if balance > 0.0 {
        market.recharge(slot, balance)?;
    }
    let q = market.quote(slot, query, weights)?;
    let out = json!({
        "user_id": user_id,
        "session": q.session,
        "range": [q.range.lo, q.range.hi],
        "price_cipher": q.price_cipher.to_hex(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(true)
}

fn demo() -> Result<bool> {
    let outcome = match run_protocol_demo() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return Ok(false);
        }
    };
    for c in &outcome.checks {
        let mark = if c.ok { "ok  " } else { "FAIL" };
        println!("{mark} {}: {}", c.name, c.actual);
    }
    println!("{} probes, {} answered, {} leaks", outcome.probes, outcome.probes_answered, outcome.leaks);
    Ok(outcome.passed())
}

fn experiment(args: ExpArgs) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(p) => load(p)?,
        None => MarketConfig::desk(args.seed.unwrap_or(7)),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.leak_prices |= args.leak;
    let report = match args.experiment {
        Experiment::Timing => run_timing(&cfg)?,
        Experiment::Distribution => run_distribution(&cfg, args.trials)?,
        Experiment::Mistakes => run_mistakes(&cfg, args.steps, args.cells)?,
        Experiment::Cheat => run_cheat(&cfg, args.trials)?,
    };
    if let Some(dir) = &args.histograms {
        std::fs::create_dir_all(dir)?;
        for d in &report.distributions {
            std::fs::write(dir.join(format!("{}.csv", d.dataset)), d.histogram.to_csv())?;
        }
    }
    let text = report.to_json();
    match &args.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    let problems = check(&report, cfg.leak_prices);
    for p in &problems {
        eprintln!("assertion failed: {p}");
    }
    Ok(problems.is_empty())
}

fn check(report: &ExperimentReport, leak: bool) -> Vec<String> {
    let mut problems = Vec::new();
    if let Some(f) = &report.flow {
        if !leak && !f.holds() {
            problems.push(format!("information flow: {f:?}"));
        }
    }
    for m in &report.mistakes {
        if !m.non_increasing {
            problems.push(format!("{} price rose under corruption", m.dataset));
        }
    }
    if let Some(c) = &report.cheat {
        if c.trials > 1 {
            match (leak, c.significant(0.05)) {
                (false, true) => problems.push(format!("informed buyer beat random, p = {}", c.p_value)),
                (true, false) => problems.push(format!("leaked prices gave no edge, p = {}", c.p_value)),
                _ => {}
            }
        }
    }
    problems
}
