use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use pmu_core::{
    box_relax_round, load_case, local_search, min_pmu_blp, min_pmu_iterative, monte_carlo_mse,
    penalized, BlpOptions, BoxRelaxConfig, ConstraintKind, Error, IeeeCase,
    LocalSearchConfig, MinPmuConfig, Network, ObjectiveKind, ObservabilityConstraint,
    PenalizedConfig, Placement, Result, RunReport,
};

use crate::cli::{
    AlgArg, MinPmuArgs, MonteCarloArgs, PenaltyArgs, SnapshotArgs, SolveArgs, SweepArgs, Table1Args,
};

/// Everything needed to run one algorithm at one budget.
struct Job<'a> {
    alg: AlgArg,
    objective: ObjectiveKind,
    constraint: Option<ConstraintKind>,
    budget: usize,
    penalty: &'a PenaltyArgs,
}

impl Job<'_> {
    fn run(&self, net: &Network) -> Result<RunReport> {
        let penalized_with = |objective| {
            let mut cfg = PenalizedConfig::new(
                objective,
                self.constraint.unwrap_or(ConstraintKind::Complete),
                self.budget,
            );
            cfg.exponent = self.penalty.exponent;
            cfg.mu = self.penalty.mu;
            cfg.polish = !self.penalty.no_polish;
            penalized(net, &cfg)
        };
        let unconstrained = || match self.constraint {
            None | Some(ConstraintKind::None) => Ok(()),
            Some(kind) => Err(Error::Config(format!(
                "{} does not take an observability constraint (got {})",
                alg_name(self.alg),
                kind.name()
            ))),
        };
        match self.alg {
            AlgArg::PenalizedMmse => penalized_with(ObjectiveKind::Mse),
            AlgArg::PenalizedMi => penalized_with(ObjectiveKind::Mi),
            AlgArg::LocalSearch => {
                unconstrained()?;
                local_search(net, &LocalSearchConfig::new(self.objective, self.budget))
            }
            AlgArg::BoxRelax => {
                unconstrained()?;
                box_relax_round(net, &BoxRelaxConfig::new(self.objective, self.budget))
            }
        }
    }

    /// Objective the algorithm actually optimizes.
    fn effective_objective(&self) -> ObjectiveKind {
        match self.alg {
            AlgArg::PenalizedMmse => ObjectiveKind::Mse,
            AlgArg::PenalizedMi => ObjectiveKind::Mi,
            _ => self.objective,
        }
    }
}

fn alg_name(alg: AlgArg) -> &'static str {
    pmu_core::Algorithm::from(alg).name()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("CSV output: {other:?}")),
    }
}

fn trace_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kappa", "objective", "g_tilde", "mu", "step", "time_ms"]).map_err(csv_error)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for it in &report.iterations {
        w.write_record([
            it.kappa.to_string(),
            format!("{:e}", it.objective),
            opt(it.g_tilde),
            opt(it.mu),
            it.step.clone(),
            format!("{:.3}", it.time_ms),
        ])
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn print_summary(report: &RunReport) {
    let m = &report.final_metrics;
    let buses: Vec<String> = report.final_placement.support().iter().map(|k| k.to_string()).collect();
    println!(
        "{} {} constraint={} S={}: f_e={:.9e} f_mi={:.9e} normalized_mi={:.6} unobserved={} time={:.3}s",
        report.algorithm.name(),
        report.objective.name(),
        report.constraint.name(),
        report.budget,
        m.f_e,
        m.f_mi,
        m.normalized_mi,
        m.unobserved_count,
        report.wall_time_s
    );
    println!("placement (bus indices): {}", buses.join(","));
}

pub fn solve(args: &SolveArgs) -> Result<()> {
    let grid = load_case(&args.model.case)?;
    let net = Network::from_grid(&grid, &args.model.settings())?;
    let job = Job {
        alg: args.alg,
        objective: args.objective.into(),
        constraint: args.constraint.map(Into::into),
        budget: args.budget,
        penalty: &args.penalty,
    };
    let report = job.run(&net)?;
    if args.debug {
        for it in &report.iterations {
            eprintln!(
                "κ={} F={:.12e} g̃={:?} μ={:?} step={} kkt={:?} newton={:?} trust={}",
                it.kappa, it.objective, it.g_tilde, it.mu, it.step, it.kkt_residual, it.newton_steps, it.trust_active
            );
        }
        for note in &report.diagnostics.notes {
            eprintln!("note: {note}");
        }
    }
    write_file(&args.out.join("report.json"), &report.to_json()?)?;
    write_file(&args.out.join("trace.csv"), &trace_csv(&report)?)?;
    print_summary(&report);
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    #[serde(rename = "S")]
    s: usize,
    algorithm: &'static str,
    objective: &'static str,
    value: Option<f64>,
    unobserved: Option<usize>,
    wall_ms: u64,
    status: String,
}

fn status_of(e: &Error) -> &'static str {
    match e {
        Error::Infeasible(_) => "infeasible",
        Error::Numerical(_) => "numerical",
        _ => "error",
    }
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let (from, to) = args.range;
    if from == 0 || from > to {
        return Err(Error::Config(format!("empty or invalid budget range {from}..{to}")));
    }
    let grid = load_case(&args.model.case)?;
    if to > grid.n_buses() {
        return Err(Error::Config(format!(
            "budget range {from}..{to} exceeds the {} buses of the network",
            grid.n_buses()
        )));
    }
    let net = Network::from_grid(&grid, &args.model.settings())?;
    let points: Vec<(usize, AlgArg)> =
        (from..=to).flat_map(|s| args.algs.iter().map(move |&a| (s, a))).collect();
    let points_dir = args.out.join("points");
    let rows: Vec<Result<SweepRow>> = points
        .par_iter()
        .map(|&(s, alg)| {
            let constraint = match alg {
                AlgArg::PenalizedMmse | AlgArg::PenalizedMi => Some(args.constraint.into()),
                _ => None,
            };
            let job = Job {
                alg,
                objective: args.objective.into(),
                constraint,
                budget: s,
                penalty: &args.penalty,
            };
            let start = Instant::now();
            let outcome = job.run(&net);
            let wall_ms = start.elapsed().as_millis() as u64;
            let objective = job.effective_objective().name();
            Ok(match outcome {
                Ok(report) => {
                    let path = points_dir.join(format!("{}_S{s}.json", alg_name(alg)));
                    write_file(&path, &report.to_json()?)?;
                    SweepRow {
                        s,
                        algorithm: alg_name(alg),
                        objective,
                        value: Some(report.objective_value()),
                        unobserved: Some(report.final_metrics.unobserved_count),
                        wall_ms,
                        status: "ok".into(),
                    }
                }
                Err(e) => {
                    eprintln!("S={s} {}: {e}", alg_name(alg));
                    SweepRow {
                        s,
                        algorithm: alg_name(alg),
                        objective,
                        value: None,
                        unobserved: None,
                        wall_ms,
                        status: status_of(&e).into(),
                    }
                }
            })
        })
        .collect();
    fs::create_dir_all(&args.out)?;
    let mut w = csv::Writer::from_path(args.out.join("sweep.csv")).map_err(csv_error)?;
    let mut ok = 0;
    for row in rows {
        let row = row?;
        ok += usize::from(row.status == "ok");
        w.serialize(&row).map_err(csv_error)?;
    }
    w.flush()?;
    println!("{ok}/{} sweep points succeeded; wrote {}", points.len(), args.out.join("sweep.csv").display());
    Ok(())
}

pub fn table1(args: &Table1Args) -> Result<()> {
    let options = BlpOptions {
        node_limit: args.node_limit,
        ..BlpOptions::default()
    };
    let mut lines = vec!["case, branches, complete, depth_one".to_string()];
    let mut csv_rows = Vec::new();
    for case in IeeeCase::ALL {
        let grid = case.load()?;
        let mut counts = Vec::new();
        let mut flags = Vec::new();
        for kind in [ConstraintKind::Complete, ConstraintKind::DepthOne] {
            let constraint = ObservabilityConstraint::for_grid(kind, &grid);
            let sol = min_pmu_blp(&constraint, &options)?;
            let x = Placement::from_support(grid.n_buses(), &sol.witness)?;
            if !constraint.is_satisfied(x.x())? {
                return Err(Error::Numerical(format!(
                    "{} {} witness fails its own constraint",
                    case.name(),
                    kind.name()
                )));
            }
            if !sol.proven_optimal {
                flags.push(format!("{} not proven (gap {})", kind.name(), sol.gap));
            }
            counts.push(sol.s_min);
        }
        let label = format!("{}-bus", grid.n_buses());
        let mut line = format!("{label}, {}, {}, {}", grid.n_branches(), counts[0], counts[1]);
        if !flags.is_empty() {
            line += &format!("  [{}]", flags.join("; "));
        }
        lines.push(line);
        csv_rows.push((label, grid.n_branches(), counts[0], counts[1], flags.is_empty()));
    }
    for l in &lines {
        println!("{l}");
    }
    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["case", "branches", "complete", "depth_one", "proven"]).map_err(csv_error)?;
        for (label, nb, co, d1, proven) in csv_rows {
            w.write_record([label, nb.to_string(), co.to_string(), d1.to_string(), proven.to_string()])
                .map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        write_file(path, &String::from_utf8(bytes).expect("CSV output is UTF-8"))?;
    }
    Ok(())
}

pub fn min_pmu(args: &MinPmuArgs) -> Result<()> {
    let grid = load_case(&args.model.case)?;
    let net = Network::from_grid(&grid, &args.model.settings())?;
    let mut cfg = MinPmuConfig::new(args.tolerance);
    cfg.s0 = args.s0;
    cfg.bisection = args.bisection;
    let report = min_pmu_iterative(&net, &cfg)?;
    write_file(&args.out.join("report.json"), &report.to_json()?)?;
    write_file(&args.out.join("trace.csv"), &trace_csv(&report)?)?;
    println!("minimum S = {} for tolerance {:e}", report.budget, args.tolerance);
    print_summary(&report);
    Ok(())
}

#[derive(Serialize)]
struct MonteCarloOutput {
    support: Vec<usize>,
    f_e: f64,
    empirical_mse: f64,
    std_error: f64,
    z_score: f64,
    n_samples: usize,
    seed: u64,
}

pub fn montecarlo(args: &MonteCarloArgs) -> Result<()> {
    let grid = load_case(&args.model.case)?;
    let net = Network::from_grid(&grid, &args.model.settings())?;
    let n = grid.n_buses();
    let support: Vec<usize> = match (&args.buses, args.alg) {
        (Some(ids), _) => ids
            .iter()
            .map(|&id| {
                grid.internal_index(id)
                    .ok_or_else(|| Error::Config(format!("bus {id} is not in the case")))
            })
            .collect::<Result<_>>()?,
        (None, Some(alg)) => {
            let budget = args.budget.ok_or_else(|| Error::Config("--S is required with --alg".into()))?;
            let penalty = PenaltyArgs {
                exponent: pmu_core::convex::penalty::DEFAULT_EXPONENT,
                mu: pmu_core::MuChoice::Auto,
                no_polish: false,
            };
            let job = Job {
                alg,
                objective: ObjectiveKind::Mse,
                constraint: args.constraint.map(Into::into),
                budget,
                penalty: &penalty,
            };
            job.run(&net)?.final_placement.support()
        }
        (None, None) => return Err(Error::Config("give either --buses or --alg with --S".into())),
    };
    let placement = Placement::from_support(n, &support)?;
    let f_e = net.problem.f_e(placement.x())?;
    let mc = monte_carlo_mse(&net.problem, &placement, args.samples, args.seed)?;
    let out = MonteCarloOutput {
        support,
        f_e,
        empirical_mse: mc.empirical_mse,
        std_error: mc.std_error,
        z_score: (mc.empirical_mse - f_e) / mc.std_error,
        n_samples: mc.n_samples,
        seed: mc.seed,
    };
    println!(
        "f_e={:.9e} empirical={:.9e} stderr={:.3e} z={:.3} (n={}, seed={})",
        out.f_e, out.empirical_mse, out.std_error, out.z_score, out.n_samples, out.seed
    );
    if let Some(path) = &args.out {
        write_file(path, &serde_json::to_string_pretty(&out)?)?;
    }
    Ok(())
}

pub fn snapshot(args: &SnapshotArgs) -> Result<()> {
    let json = load_case(&args.case)?.to_json()?;
    match &args.out {
        Some(path) => write_file(path, &json),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(json.as_bytes())?;
            stdout.write_all(b"\n")?;
            Ok(())
        }
    }
}
