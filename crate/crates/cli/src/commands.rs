use std::fs;
use std::path::Path;

use h2sync::cases;
use h2sync::closedloop::{assemble, error_h2, probe_csv, rho_scaling_probe, ProbeRow};
use h2sync::conditions::{full_report, SolvabilityReport};
use h2sync::protocol::synthesize;
use h2sync::sim::{simulate, summary_csv, SimConfig, SimResult};
use h2sync::{AgentModel, CommGraph, ProtocolKind, ProtocolRealization};
use rayon::prelude::*;

use crate::cli::{Cli, Command, Inputs, ProtocolArg, ProtocolArgs, ReproduceArgs, SimArgs};
use crate::error::{CliError, CliResult};
use crate::output::{rho_list, OutputDir, ResolvedConfig};

/// Stored trajectory rows per run, at most.
const TRAJECTORY_ROWS: usize = 2000;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Check { inputs, out } => {
            let (model, graph) = load(&inputs)?;
            let dir = OutputDir::create(&out.out)?;
            write_inputs(&dir, &model, &graph, ResolvedConfig::new("check"))?;
            check(&dir, &model, &graph)
        }
        Command::Synth { inputs, protocol, out } => {
            let (model, graph) = load(&inputs)?;
            let dir = OutputDir::create(&out.out)?;
            let mut cfg = ResolvedConfig::new("synth");
            protocol_flags(&mut cfg, &protocol);
            write_inputs(&dir, &model, &graph, cfg)?;
            require_spanning_tree(&graph, protocol.protocol.into())?;
            synth(&dir, &model, protocol.protocol.into(), &protocol.rho, protocol.delta).map(drop)
        }
        Command::Analyze { inputs, protocol, out } => {
            let (model, graph) = load(&inputs)?;
            let dir = OutputDir::create(&out.out)?;
            let mut cfg = ResolvedConfig::new("analyze");
            protocol_flags(&mut cfg, &protocol);
            write_inputs(&dir, &model, &graph, cfg)?;
            analyze(&dir, &model, &graph, protocol.protocol.into(), &protocol.rho, protocol.delta).map(drop)
        }
        Command::Simulate { inputs, protocol, sim, out } => {
            let (model, graph) = load(&inputs)?;
            validate_sim(&sim)?;
            let dir = OutputDir::create(&out.out)?;
            let mut cfg = ResolvedConfig::new("simulate");
            protocol_flags(&mut cfg, &protocol);
            sim_flags(&mut cfg, &sim);
            write_inputs(&dir, &model, &graph, cfg)?;
            let kind = protocol.protocol.into();
            require_spanning_tree(&graph, kind)?;
            let reals = synth(&dir, &model, kind, &protocol.rho, protocol.delta)?;
            simulate_all(&dir, "custom", &model, &graph, &reals, &sim)
        }
        Command::ReproduceCase1(args) => reproduce(args, "case1", "reproduce-case1", cases::case1_graph()),
        Command::ReproduceCase2(args) => reproduce(args, "case2", "reproduce-case2", cases::case2_graph()),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

fn load(inputs: &Inputs) -> CliResult<(AgentModel, CommGraph)> {
    let input = |path: &Path, source| CliError::Input { path: path.to_path_buf(), source };
    let model = AgentModel::parse(&read(&inputs.model)?).map_err(|e| input(&inputs.model, e))?;
    let graph = CommGraph::parse(&read(&inputs.graph)?).map_err(|e| input(&inputs.graph, e))?;
    Ok((model, graph))
}

fn validate_sim(sim: &SimArgs) -> CliResult<()> {
    if sim.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    Ok(())
}

fn protocol_flags(cfg: &mut ResolvedConfig, p: &ProtocolArgs) {
    cfg.flag("protocol", ProtocolKind::from(p.protocol));
    cfg.flag("rho", rho_list(&p.rho));
    match p.delta {
        Some(d) => cfg.flag("delta", d),
        None => cfg.set("delta", "auto"),
    }
}

fn sim_flags(cfg: &mut ResolvedConfig, sim: &SimArgs) {
    cfg.flag("seed", sim.seed);
    cfg.flag("seeds", sim.seeds);
    cfg.flag("dt", sim.dt);
    cfg.flag("t_final", sim.t_final);
    cfg.flag("noise", format!("{:?}", sim.noise).to_lowercase());
    cfg.set("tail_fraction", 0.5);
    cfg.set("initial_conditions", "uniform [-1,1] per agent state, protocol states zero");
}

/// Copies the exact model and graph next to the outputs and records the run.
fn write_inputs(dir: &OutputDir, model: &AgentModel, graph: &CommGraph, mut cfg: ResolvedConfig) -> CliResult<()> {
    dir.write("model.txt", &model.to_text())?;
    dir.write("graph.txt", &graph.to_edge_list())?;
    cfg.set("model_file", "model.txt");
    cfg.set("graph_file", "graph.txt");
    dir.write("run.txt", &cfg.to_text())?;
    Ok(())
}

fn failures(report: &SolvabilityReport) -> String {
    report
        .failed_conditions()
        .iter()
        .map(|(c, d)| format!("({c}) {d}"))
        .collect::<Vec<_>>()
        .join("; ")
}

fn check(dir: &OutputDir, model: &AgentModel, graph: &CommGraph) -> CliResult<()> {
    let report = full_report(model, graph)?;
    let text = report.to_text();
    dir.write("report.txt", &text)?;
    print!("{text}");
    if report.overall {
        Ok(())
    } else {
        Err(CliError::Unsolvable(failures(&report)))
    }
}

fn require_spanning_tree(graph: &CommGraph, kind: ProtocolKind) -> CliResult<()> {
    if graph.has_spanning_tree() {
        return Ok(());
    }
    let label = match kind {
        ProtocolKind::P1 => 'c',
        ProtocolKind::P2 => 'd',
    };
    Err(CliError::Unsolvable(format!("({label}) graph has no directed spanning tree")))
}

fn rho_tag(rho: f64) -> String {
    format!("rho{rho}")
}

fn synth(
    dir: &OutputDir,
    model: &AgentModel,
    kind: ProtocolKind,
    rhos: &[f64],
    delta: Option<f64>,
) -> CliResult<Vec<ProtocolRealization>> {
    let reals = rhos
        .par_iter()
        .map(|&rho| synthesize(model, kind, rho, delta))
        .collect::<Result<Vec<_>, _>>()?;
    for r in &reals {
        dir.write(&format!("protocol_{}.txt", rho_tag(r.rho)), &r.to_text())?;
        let delta = r.delta.map_or("-".to_string(), |d| format!("{d:e}"));
        println!(
            "{} rho = {} delta = {delta} controller states per agent = {}",
            r.kind, r.rho, r.controller_state_dim
        );
    }
    Ok(reals)
}

fn analyze(
    dir: &OutputDir,
    model: &AgentModel,
    graph: &CommGraph,
    kind: ProtocolKind,
    rhos: &[f64],
    delta: Option<f64>,
) -> CliResult<Vec<ProbeRow>> {
    let rows = match rho_scaling_probe(model, graph, kind, rhos, delta) {
        Err(h2sync::Error::PreconditionFailed { condition, description }) => {
            return Err(CliError::Unsolvable(format!("({condition}) {description}")))
        }
        other => other?,
    };
    dir.write("analysis.csv", &probe_csv(&rows))?;
    println!("{:>8} {:>12} {:>12} {:>12}", "rho", "h2", "rho*h2", "abscissa");
    for r in &rows {
        println!("{:>8} {:>12.6} {:>12.6} {:>12.6}", r.rho, r.h2, r.rho_times_h2, r.spectral_abscissa);
    }
    Ok(rows)
}

fn simulate_all(
    dir: &OutputDir,
    label: &str,
    model: &AgentModel,
    graph: &CommGraph,
    reals: &[ProtocolRealization],
    sim: &SimArgs,
) -> CliResult<()> {
    let lp = graph.laplacian();
    let mut results: Vec<(f64, Vec<SimResult>)> = Vec::new();
    for real in reals {
        let cl = assemble(model, real, &lp)?;
        let abscissa = cl.spectral_abscissa()?;
        if abscissa >= 0.0 {
            return Err(h2sync::Error::NotHurwitz { abscissa }.into());
        }
        let h2 = error_h2(&cl)?;
        let runs = (0..sim.seeds)
            .into_par_iter()
            .map(|k| {
                let mut cfg = SimConfig::new(model.clone(), graph.clone(), real.clone());
                cfg.seed = sim.seed + k;
                cfg.dt = sim.dt;
                cfg.t_final = sim.t_final;
                cfg.noise = sim.noise.into();
                cfg.record_stride = (cfg.steps() / TRAJECTORY_ROWS).max(1);
                simulate(&cfg)
            })
            .collect::<Result<Vec<_>, _>>()?;
        dir.write(&format!("trajectory_{}.csv", rho_tag(real.rho)), &runs[0].trajectory_csv())?;
        let mean = runs.iter().map(|r| r.rms_sync_error).sum::<f64>() / runs.len() as f64;
        println!(
            "rho = {} rms_sync_error = {mean:.6} (mean of {} seed(s)); closed-loop H2 = {h2:.6}",
            real.rho,
            runs.len()
        );
        results.push((real.rho, runs));
    }
    let rows = results.iter().flat_map(|(_, runs)| runs.iter().map(|r| (label, r)));
    dir.write("summary.csv", &summary_csv(rows))?;
    Ok(())
}

fn reproduce(args: ReproduceArgs, label: &str, command: &str, graph: CommGraph) -> CliResult<()> {
    validate_sim(&args.sim)?;
    let kind: ProtocolKind = args.protocol.into();
    let (model, delta) = match args.protocol {
        ProtocolArg::P1 => (cases::triple_integrator().with_full_state(), None),
        ProtocolArg::P2 => (cases::triple_integrator(), Some(args.delta)),
    };
    let dir = OutputDir::create(&args.out.out)?;
    let mut cfg = ResolvedConfig::new(command);
    cfg.flag("protocol", kind);
    cfg.flag("rho", rho_list(&args.rho));
    match delta {
        Some(d) => cfg.flag("delta", d),
        None => cfg.set("delta", "none"),
    }
    sim_flags(&mut cfg, &args.sim);
    write_inputs(&dir, &model, &graph, cfg)?;

    check(&dir, &model, &graph)?;
    let reals = synth(&dir, &model, kind, &args.rho, delta)?;
    analyze(&dir, &model, &graph, kind, &args.rho, delta)?;
    simulate_all(&dir, label, &model, &graph, &reals, &args.sim)
}
