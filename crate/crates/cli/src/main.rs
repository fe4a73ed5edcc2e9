use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mixobs::graph::{is_strongly_connected, link_connectivity, node_connectivity, parse_graph, DirectedGraph, NamedTopology};
use mixobs::scenario::{self, Scenario};
use mixobs::synthesis::{GainMethod, ObserverGain};

/// Observability analysis, gain design and simulation of distributed
/// observers for mixed CAV/HDV traffic.
#[derive(Parser)]
#[command(name = "mixobs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structural observability verdict, redundancy level and connectivity.
    Analyze(Common),
    /// Synthesize the block-diagonal observer gain and report ρ(Â).
    Design(Common),
    /// Run the distributed observer and write trace CSVs and metrics.
    Simulate(WithGain),
    /// Paired distributed vs centralized Kalman MSEE comparison.
    Compare(WithGain),
    /// Node and link connectivity of a named topology or graph file.
    Connectivity {
        /// `cycle(5)`, `ring(8,2)`, ... or a path to a graph file.
        graph: String,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or the name of a bundled scenario (fig1, fig9, ...).
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// ccl or descent.
    #[arg(long)]
    gain_method: Option<GainMethod>,
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Where output files go; nothing is written when omitted, except
    /// that `simulate` and `compare` default to the current directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct WithGain {
    #[command(flatten)]
    common: Common,
    /// Gain file written by `design`; defaults to `<out-dir>/gain.txt`.
    #[arg(long)]
    gain: Option<PathBuf>,
}

/// Failures mapped onto the exit-code contract.
enum Failure {
    Negative(anyhow::Error),
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Negative(e)
    }
}

fn load(c: &Common) -> Result<Scenario, Failure> {
    let path = Path::new(&c.scenario);
    let mut sc = if path.exists() {
        Scenario::load(path).map_err(|e| Failure::Usage(anyhow::anyhow!("{}:\n{e}", path.display())))?
    } else {
        match scenario::bundled(&c.scenario) {
            Some(sc) => sc,
            None => {
                return Err(Failure::Usage(anyhow::anyhow!(
                    "no scenario file `{}` and no bundled scenario of that name",
                    c.scenario
                )))
            }
        }
    };
    if let Some(s) = c.seed {
        sc.seed = s;
    }
    if let Some(h) = c.horizon {
        sc.horizon = h;
    }
    if let Some(m) = c.gain_method {
        sc.observer.synthesis.method = m;
    }
    if let Some(t) = c.rank_tol {
        sc.observer.rank_tol = Some(t);
    }
    Ok(sc)
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_gain(w: &WithGain) -> Result<ObserverGain, Failure> {
    let dir = w.common.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let path = w.gain.clone().unwrap_or_else(|| dir.join("gain.txt"));
    let text = fs::read_to_string(&path).map_err(|e| {
        Failure::Usage(anyhow::anyhow!(
            "cannot read gain file {}: {e}\nhint: run `mixobs design {} --out-dir {}` first, or pass --gain <file>",
            path.display(),
            w.common.scenario,
            dir.display()
        ))
    })?;
    ObserverGain::parse(&text).map_err(|e| Failure::Usage(anyhow::anyhow!("{}: {e}", path.display())))
}

fn analyze(c: &Common) -> Result<(), Failure> {
    let sc = load(c)?;
    let analysis = scenario::analyze(&sc).map_err(anyhow::Error::from)?;
    print!("{}", analysis.to_report(&sc));
    if let Some(dir) = &c.out_dir {
        write(dir, "analysis.txt", &analysis.to_key_value())?;
    }
    if !analysis.verdict.observable {
        return Err(Failure::Negative(anyhow::anyhow!("scenario is not distributed observable")));
    }
    Ok(())
}

fn design(c: &Common) -> Result<(), Failure> {
    let sc = load(c)?;
    let d = scenario::design(&sc).map_err(anyhow::Error::from)?;
    print!("{}", d.to_report());
    if let Some(dir) = &c.out_dir {
        write(dir, "gain.txt", &d.initial.result.gain.to_text())?;
        for (step, post) in &d.post_fault {
            write(dir, &format!("gain_after_step{step}.txt"), &post.result.gain.to_text())?;
        }
        write(dir, "design.txt", &d.to_report())?;
    }
    let unstable = std::iter::once(&d.initial)
        .chain(d.post_fault.iter().map(|(_, p)| p))
        .any(|p| p.result.achieved_spectral_radius >= 1.0);
    if unstable {
        return Err(Failure::Negative(anyhow::anyhow!("no Schur-stable gain found")));
    }
    Ok(())
}

fn simulate(w: &WithGain) -> Result<(), Failure> {
    let sc = load(&w.common)?;
    let gain = read_gain(w)?;
    let run = scenario::simulate(&sc, &gain).map_err(anyhow::Error::from)?;
    let dir = w.common.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    write(&dir, "truth.csv", &run.truth.to_csv())?;
    write(&dir, "trace.csv", &run.trace.to_csv())?;
    write(&dir, "metrics.txt", &run.metrics.to_key_value())?;
    print!("{}", run.metrics.to_key_value());
    Ok(())
}

fn compare(w: &WithGain) -> Result<(), Failure> {
    let sc = load(&w.common)?;
    let gain = read_gain(w)?;
    let cmp = scenario::compare(&sc, &gain).map_err(anyhow::Error::from)?;
    let dir = w.common.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    write(&dir, "msee.csv", &cmp.to_csv())?;
    write(&dir, "distributed_trace.csv", &cmp.distributed.to_csv())?;
    write(&dir, "central_trace.csv", &cmp.centralized.to_csv())?;
    write(&dir, "compare.txt", &cmp.to_key_value())?;
    print!("{}", cmp.to_key_value());
    Ok(())
}

fn connectivity(spec: &str) -> Result<(), Failure> {
    let (graph, named): (DirectedGraph, Option<NamedTopology>) = match spec.parse::<NamedTopology>() {
        Ok(t) => (t.build(), Some(t)),
        Err(_) => {
            let text = fs::read_to_string(spec)
                .map_err(|e| Failure::Usage(anyhow::anyhow!("`{spec}` is neither a topology nor a readable file: {e}")))?;
            let g = parse_graph(&text).map_err(|e| Failure::Usage(anyhow::anyhow!("{spec}: {e}")))?;
            (g.without_self_loops(), None)
        }
    };
    if graph.node_count() < 2 {
        return Err(Failure::Usage(anyhow::anyhow!("connectivity needs at least two nodes")));
    }
    let link = link_connectivity(&graph).map_err(anyhow::Error::from)?;
    println!("nodes={}", graph.node_count());
    println!("strongly_connected={}", is_strongly_connected(&graph));
    println!("node_connectivity={}", node_connectivity(&graph));
    println!("link_connectivity={link}");
    if let Some(t) = named {
        println!("tabulated_connectivity={}", t.tabulated_connectivity());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Analyze(c) => analyze(c),
        Command::Design(c) => design(c),
        Command::Simulate(w) => simulate(w),
        Command::Compare(w) => compare(w),
        Command::Connectivity { graph } => connectivity(graph),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Negative(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
