use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pesin_core::config::RunConfig;
use pesin_core::graph::{chain_through, coarse_grain, desk_orbits, Chain, ChainGraph};
use pesin_core::ladder::Lattice;
use pesin_core::partition::{markov_refine, PartitionOptions};
use pesin_core::shadow::{shadow_pi, ShadowOptions};
use pesin_core::suite::{fmt17, run_suite, SuiteReport, SUITES};
use pesin_core::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pesin", version, about = "Pesin charts, chain graphs and shadowing for toral endomorphisms")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML (or .json) run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run invariant suites and write a JSON summary plus one CSV per suite.
    Verify {
        /// Suite to run (repeatable); defaults to the config list, then all.
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
    /// Build the desk-scale chain graph and write it as JSON and DOT.
    Graph,
    /// Shadow the chain in a JSON file of vertex indices.
    Shadow {
        #[arg(long)]
        chain: PathBuf,
    },
    /// Limit stable and unstable manifolds at the center of a chain.
    Manifold {
        /// Chain file; defaults to a window through vertex 0.
        #[arg(long)]
        chain: Option<PathBuf>,
    },
    /// Markov refinement of the shadowed desk-scale graph.
    Partition,
    /// The radius lattice as CSV.
    Lattice {
        #[arg(long, default_value_t = 64)]
        depth: usize,
    },
}

enum Failure {
    /// Bad configuration or input file: exit 2.
    Input(String),
    /// A module reported an error or a suite failed: exit 1.
    Module(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Input(msg),
            e => Failure::Module(format!("{}: {e}", e.name())),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Module(format!("{e:#}"))
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Module(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    let out = cli.common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    match cli.command {
        Command::Verify { suites } => {
            if !suites.is_empty() {
                cfg.suites = suites;
            }
            cfg.validate()?;
            verify(&cfg, &out)
        }
        Command::Graph => graph(&cfg, &out),
        Command::Shadow { chain } => shadow(&cfg, &out, &chain),
        Command::Manifold { chain } => manifold(&cfg, &out, chain.as_deref()),
        Command::Partition => partition(&cfg, &out),
        Command::Lattice { depth } => lattice(&cfg, &out, depth),
    }
}

fn create_out(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write(path: PathBuf, body: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn verify(cfg: &RunConfig, out: &Path) -> Outcome {
    create_out(out)?;
    let names: Vec<String> =
        if cfg.suites.is_empty() { SUITES.iter().map(|s| s.to_string()).collect() } else { cfg.suites.clone() };
    let mut reports: Vec<SuiteReport> = Vec::new();
    let mut errors = Vec::new();
    for name in &names {
        match run_suite(name, cfg) {
            Ok(r) => {
                let mut body = Vec::new();
                r.write_csv(&mut body).context("serializing suite CSV")?;
                write(out.join(format!("{name}.csv")), body)?;
                println!("{:<12} {} ({:.2} s)", name, if r.passed { "pass" } else { "FAIL" }, r.elapsed_s);
                for c in r.failures() {
                    println!("    {}: {} vs {}", c.label, fmt17(c.value), fmt17(c.bound));
                }
                reports.push(r);
            }
            Err(e) => {
                println!("{:<12} ERROR {}: {e}", name, e.name());
                errors.push(serde_json::json!({ "suite": name, "error": e.name(), "message": e.to_string() }));
            }
        }
    }
    let passed = errors.is_empty() && reports.iter().all(|r| r.passed);
    let summary = serde_json::json!({
        "passed": passed,
        "seed": cfg.seed,
        "config": cfg,
        "suites": reports,
        "errors": errors,
    });
    write(out.join("summary.json"), serde_json::to_string_pretty(&summary).context("summary JSON")?)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Module("one or more suites failed".into()))
    }
}

fn build_graph(cfg: &RunConfig) -> std::result::Result<(pesin_core::chart::ChartContext, ChainGraph), Failure> {
    let ctx = cfg.context()?;
    let orbits = desk_orbits(&cfg.model()?, cfg.max_period, cfg.random_windows, cfg.seed, cfg.window_n)?;
    let g = coarse_grain(&ctx, &orbits, cfg.grain())?;
    Ok((ctx, g))
}

fn graph(cfg: &RunConfig, out: &Path) -> Outcome {
    let (_, g) = build_graph(cfg)?;
    create_out(out)?;
    write(out.join("graph.json"), serde_json::to_string(&g).context("graph JSON")?)?;
    write(out.join("graph.dot"), g.to_dot())?;
    println!("{} vertices, {} edges", g.len(), g.edges.len());
    Ok(())
}

fn read_chain(path: &Path, g: &ChainGraph) -> std::result::Result<Chain, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let vertices: Vec<usize> =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    if vertices.len() < 5 || vertices.len().is_multiple_of(2) {
        return Err(Failure::Input(format!("chain must have odd length at least 5, got {}", vertices.len())));
    }
    if let Some(v) = vertices.iter().find(|&&v| v >= g.len()) {
        return Err(Failure::Input(format!("vertex {v} out of range (graph has {})", g.len())));
    }
    let chain = Chain { vertices, periodic: false };
    if !chain.is_path_of(g) {
        return Err(Failure::Input("chain is not a path of the graph".into()));
    }
    Ok(chain)
}

fn shadow_options(cfg: &RunConfig) -> ShadowOptions {
    ShadowOptions { tol: cfg.tol, grid: cfg.manifold_grid, seed: pesin_core::manifold::Seed::Flat, semiconjugacy: true }
}

fn shadow(cfg: &RunConfig, out: &Path, chain_file: &Path) -> Outcome {
    let (ctx, g) = build_graph(cfg)?;
    let chain = read_chain(chain_file, &g)?;
    let r = shadow_pi(&g, &chain, &ctx.lattice, &shadow_options(cfg))?;
    create_out(out)?;
    write(out.join("shadow.json"), serde_json::to_string_pretty(&r).context("shadow JSON")?)?;
    let p = r.point.present;
    println!("point {} {}", fmt17(p.x), fmt17(p.y));
    match r.semiconjugacy_defect {
        Some(d) => println!("semiconjugacy defect {}", fmt17(d)),
        None => println!("semiconjugacy defect n/a (chain shorter than 7)"),
    }
    Ok(())
}

fn manifold(cfg: &RunConfig, out: &Path, chain_file: Option<&Path>) -> Outcome {
    let (ctx, g) = build_graph(cfg)?;
    let chain = match chain_file {
        Some(p) => read_chain(p, &g)?,
        None => chain_through(&g, 0, (cfg.chain_length - 1) / 2)
            .ok_or_else(|| Failure::Module("EmptyGraph: no window through vertex 0".into()))?,
    };
    let opts = ShadowOptions { semiconjugacy: false, ..shadow_options(cfg) };
    let r = shadow_pi(&g, &chain, &ctx.lattice, &opts)?;
    create_out(out)?;
    let mut max_g: f64 = 0.0;
    for (name, m) in [("stable", &r.stable), ("unstable", &r.unstable)] {
        let mut body = Vec::new();
        m.write_csv(&mut body).context("manifold CSV")?;
        write(out.join(format!("manifold_{name}.csv")), body)?;
        max_g = m.values.iter().fold(max_g, |a, v| a.max(v.abs()));
    }
    println!("radius s {} u {}", fmt17(r.stable.radius), fmt17(r.unstable.radius));
    println!("max |G| {}", fmt17(max_g));
    Ok(())
}

fn partition(cfg: &RunConfig, out: &Path) -> Outcome {
    let (ctx, g) = build_graph(cfg)?;
    let opts = ShadowOptions { semiconjugacy: false, ..shadow_options(cfg) };
    let mut samples = Vec::with_capacity(g.len());
    for v in 0..g.len() {
        let chain = chain_through(&g, v, 2)
            .ok_or_else(|| Failure::Module(format!("InsufficientSamples: no window through vertex {v}")))?;
        samples.push(shadow_pi(&g, &chain, &ctx.lattice, &opts)?);
    }
    let p = markov_refine(&g, &samples, &PartitionOptions::default())?;
    create_out(out)?;
    let body = serde_json::json!({
        "atoms": p.atoms,
        "successors": p.successor_matrix(),
        "atoms_per_box": p.atoms_per_box(),
        "fibers": p.fibers,
        "markov_defect": p.markov_defect,
        "fibers_within_bound": p.fibers_within_bound(),
    });
    write(out.join("partition.json"), serde_json::to_string_pretty(&body).context("partition JSON")?)?;
    println!("{} atoms over {} vertices", p.atoms.len(), g.len());
    Ok(())
}

fn lattice(cfg: &RunConfig, out: &Path, depth: usize) -> Outcome {
    let lat = Lattice::new(cfg.ladder());
    let mut body = String::from("index,ln_value,value\n");
    for i in 0..=depth {
        body.push_str(&format!("{i},{},{}\n", fmt17(lat.ln_value(i)?), fmt17(lat.value(i)?)));
    }
    create_out(out)?;
    write(out.join("lattice.csv"), body)?;
    println!("{} lattice elements", depth + 1);
    Ok(())
}
