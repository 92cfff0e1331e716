use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use spinlab::free_energy::{chi_profile, initial_condition_psi, quenched_free_energy};
use spinlab::harness::{
    any_failed, emit_report, run_lower_bound, run_validation_suite, solve_psi_field, Criterion, ExperimentConfig,
    ReportFormat, ResultRecord,
};
use spinlab::hj::{evaluate_at_measure, pierro_saddle_value, HamiltonianSpec};
use spinlab::measures::{DiscreteMeasure, MeasurePair};
use spinlab::rng::derive_seed;
use spinlab::{Error, Result};

#[derive(Parser)]
#[command(name = "spinlab", version, about = "Bipartite spin glass: HJ solver, small-N simulation and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory (default: the config's output_dir, else ./out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the HJ equation from ψ and dump the field
    SolveHj,
    /// Quenched F̄_N over the config's model, swept over n_values/t_values
    EstimateFreeEnergy,
    /// F̄_N ≥ f − error on the (t, N) grid
    CheckBound,
    /// χ profiles and curvature signs at h = 0
    ProbeConvexity,
    /// Saddle-point formula values and small-t slope
    Pierro,
    /// Every module invariant with fixed seeds
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SolveHj => "solve-hj",
            Command::EstimateFreeEnergy => "estimate-free-energy",
            Command::CheckBound => "check-bound",
            Command::ProbeConvexity => "probe-convexity",
            Command::Pierro => "pierro",
            Command::Validate => "validate",
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut c = match (&cli.config, cli.seed) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(seed)) => ExperimentConfig::new(cli.command.name(), seed),
        (None, None) => return Err(Error::Config("a seed is required: pass --config or --seed".into())),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    Ok(c)
}

fn solve_hj_cmd(c: &ExperimentConfig, out: &Path) -> Result<Vec<ResultRecord>> {
    let grid = c.grid.clone().ok_or_else(|| Error::Config("solve-hj needs a grid".into()))?;
    let start = Instant::now();
    let f = solve_psi_field(&c.hamiltonian, &c.pi1, &c.pi2, &grid, c.quadrature_order)?;
    std::fs::create_dir_all(out)?;
    f.write_csv(&out.join("field.csv"))?;
    f.write_binary(&out.join("field.bin"))?;
    let mut recs = vec![];
    if c.hamiltonian == HamiltonianSpec::Bipartite {
        let v = evaluate_at_measure(&f, &c.mu)?;
        let params = [("t", f.time), ("k", f.k() as f64), ("h", f.h())];
        recs.push(ResultRecord::exact("solve_hj", &params, Criterion::Report, v, 0.0).timed(start));
    }
    let growth = f.lipschitz.iter().cloned().fold(0.0, f64::max) / f.lipschitz[0].max(f64::MIN_POSITIVE);
    recs.push(ResultRecord::exact("solve_hj_lipschitz_growth", &[("t", f.time)], Criterion::AtMost(1.0), growth, 0.05));
    Ok(recs)
}

fn estimate_cmd(c: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let model = c.model.clone().ok_or_else(|| Error::Config("estimate-free-energy needs a model".into()))?;
    let ns = if c.n_values.is_empty() { vec![model.n()] } else { c.n_values.clone() };
    let ts = if c.t_values.is_empty() { vec![model.t()] } else { c.t_values.clone() };
    let mut recs = vec![];
    for &n in &ns {
        for &t in &ts {
            let start = Instant::now();
            let m = model.with_n(n)?.with_t(t)?;
            let est = quenched_free_energy(&m, c.n_disorder, &c.truncation, derive_seed(c.seed, n as u64))?;
            recs.push(ResultRecord::assess("free_energy", &[("N", n as f64), ("t", t)], Criterion::Report, est, 0.0, 0.0).timed(start));
        }
    }
    Ok(recs)
}

fn convexity_cmd(c: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let ps = if c.p_values.is_empty() { vec![0.5, (1.0 + 0.5f64.sqrt()) / 2.0] } else { c.p_values.clone() };
    let hs = if c.h_values.is_empty() { (0..=40).map(|i| i as f64 * 0.25).chain([50.0]).collect() } else { c.h_values.clone() };
    let mut recs = vec![];
    for &p in &ps {
        let pi = DiscreteMeasure::rademacher(p)?;
        // at h = 0 the tilted measure is π itself: ⟨σ⟩ = 2p − 1, ⟨σ²⟩ = 1
        let m = 2.0 * p - 1.0;
        let at0 = chi_profile(&pi, 0.0, c.quadrature_order)?;
        recs.push(ResultRecord::exact("chi_d1_at_0", &[("p", p)], Criterion::Near(m * m), at0.d1, 1e-6));
        let d2 = 2.0 * (1.0 - m * m) * (1.0 - 3.0 * m * m);
        recs.push(ResultRecord::exact("chi_d2_at_0", &[("p", p)], Criterion::Near(d2), at0.d2, 1e-6));
        for &h in &hs {
            let start = Instant::now();
            let pr = chi_profile(&pi, h, c.quadrature_order)?;
            let params = [("p", p), ("h", h), ("d1", pr.d1), ("d2", pr.d2)];
            recs.push(ResultRecord::exact("chi_profile", &params, Criterion::Report, pr.chi, 0.0).timed(start));
        }
    }
    Ok(recs)
}

fn pierro_cmd(c: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let ts = if c.t_values.is_empty() { vec![0.05, 0.1, 0.25] } else { c.t_values.clone() };
    let order = c.quadrature_order;
    let psi = |a: &[f64], b: &[f64]| -> f64 {
        let bound = a.iter().chain(b).cloned().fold(1.0, f64::max);
        let mu = DiscreteMeasure::uniform(a, bound)
            .and_then(|x| DiscreteMeasure::uniform(b, bound).map(|y| MeasurePair::new(x, y)));
        mu.and_then(|mu| initial_condition_psi(&mu, &c.pi1, &c.pi2, order)).unwrap_or(f64::NAN)
    };
    let psi0 = psi(&[0.0], &[0.0]);
    let mut recs = vec![];
    for &t in &ts {
        let start = Instant::now();
        let opt = pierro_saddle_value(&psi, t, c.k_opt, c.restarts, c.seed)?;
        let spread = opt.restart_values.iter().map(|v| opt.value - v).fold(0.0, f64::max);
        let params = [("t", t), ("k_opt", c.k_opt as f64), ("restart_spread", spread)];
        recs.push(ResultRecord::exact("pierro_value", &params, Criterion::Report, opt.value, 0.0).timed(start));
        // the HJ solution has ∂_t f(0, (δ₀, δ₀)) = 0; ν = (δ_{2t}, δ₀) or (δ₀, δ_{2t})
        // bounds the value below, so a positive χ_a′(0) forces slope ≥ 2χ_a′(0)
        let slope = (opt.value - psi0) / t;
        let corner = psi(&[2.0 * t], &[0.0]).max(psi(&[0.0], &[2.0 * t]));
        let params = [("t", t), ("hj_slope", 0.0), ("corner_slope", (corner - psi0) / t)];
        recs.push(ResultRecord::exact("pierro_slope", &params, Criterion::Report, slope, 0.0));
        for (i, x) in opt.argmax.iter().enumerate() {
            let params = [("t", t), ("species", (i / c.k_opt) as f64 + 1.0), ("block", (i % c.k_opt) as f64)];
            recs.push(ResultRecord::exact("pierro_argmax", &params, Criterion::Report, *x, 0.0));
        }
    }
    Ok(recs)
}

fn run(cli: &Cli) -> Result<bool> {
    let config = load_config(cli)?;
    let out = cli.out.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let records = match cli.command {
        Command::SolveHj => solve_hj_cmd(&config, &out)?,
        Command::EstimateFreeEnergy => estimate_cmd(&config)?,
        Command::CheckBound => run_lower_bound(&config)?,
        Command::ProbeConvexity => convexity_cmd(&config)?,
        Command::Pierro => pierro_cmd(&config)?,
        Command::Validate => run_validation_suite(&config),
    };
    for r in &records {
        if r.pass.is_some() || records.len() <= 40 {
            println!("{:6} {:32} {:40} {:.6} ± {:.2e}", r.status(), r.experiment, r.params_string(), r.estimate, r.stderr);
        }
    }
    let format = match cli.format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
        Format::Both => ReportFormat::Both,
    };
    for p in emit_report(&records, &out, format)? {
        log::info!("wrote {}", p.display());
    }
    Ok(!any_failed(&records))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some criteria failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
