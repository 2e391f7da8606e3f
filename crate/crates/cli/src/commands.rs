//! Subcommand implementations.

use std::time::Instant;

use serde::Serialize;

use simcov::kernels::{KernelFamily, KernelSpec};
use simcov::kriging::{fit as fit_model, Hyper};
use simcov::measures::evaluate;
use simcov::procedures::{
    predict_m_for_target, predict_m_from_line, run_adaptive_experiment, run_static_experiment, run_target_precision,
    ConvergenceRow, ConvergenceTable, ExperimentConfig, KernelChoice, MPrediction, Strategy, TargetPrecisionConfig,
};
use simcov::rates::{regressor_min_eigenvalue, solve_allocation, KernelClass, RateParams};
use simcov::sampling::{draw_covariates, draw_test_points, Purpose, RngStream, SamplingDistribution, StreamPath};
use simcov::spectrum::{
    closed_form_applies, finite_rank_eigenvalues, nystrom_eigenvalues, se_gaussian_eigenvalues, EigenSequence,
};

use crate::config::{self, AllocateCfg, Config};
use crate::output::{self, fmt_f64, RunManifest, Timing};
use crate::{CliError, Source};

fn load(source: &Source) -> Result<Config, CliError> {
    let (text, origin) = config::source_text(source.config.as_deref(), source.preset.as_deref())?;
    config::load(&origin, &text, &source.set)
}

/// One experiment config per `(n, kernel)` pair, in that order.
fn experiment_configs(cfg: &Config) -> Result<Vec<ExperimentConfig>, CliError> {
    let e = cfg.experiment()?;
    let problem = cfg.problem_spec()?;
    let dist = cfg.distribution()?;
    let fit = cfg.fit_options()?;
    let test_points = cfg.test_points()?;
    let mut out = Vec::new();
    for n in e.n.to_vec() {
        for kernel in cfg.kernel_choices()? {
            let ec = ExperimentConfig {
                problem: problem.clone(),
                dist: dist.clone(),
                m_schedule: e.m.clone(),
                n,
                delta0: e.delta0,
                kernel,
                fit,
                macro_reps: e.macro_reps,
                master_seed: e.seed,
                test_points,
            };
            ec.validate()?;
            out.push(ec);
        }
    }
    Ok(out)
}

fn print_rows(rows: &[ConvergenceRow], with_strategy: bool) {
    println!(
        "{}{:<10} {:>4} {:>5} {:>5} {:>14} {:>12} {:>12}",
        if with_strategy { format!("{:<9}", "strategy") } else { String::new() },
        "kernel",
        "n",
        "m",
        "reps",
        "max_imse",
        "ipfs_ind",
        "ipfs_apfs"
    );
    for r in rows {
        println!(
            "{}{:<10} {:>4} {:>5} {:>5} {:>14.6e} {:>12.5} {:>12.5}",
            if with_strategy { format!("{:<9}", r.strategy.name()) } else { String::new() },
            r.kernel,
            r.n,
            r.m,
            r.macro_reps,
            r.mean_max_imse,
            r.mean_ipfs_ind,
            r.mean_ipfs_apfs
        );
    }
}

fn prefixed(label: &str, warnings: &[String]) -> Vec<String> {
    warnings.iter().map(|w| format!("{label}: {w}")).collect()
}

pub fn convergence(source: &Source) -> Result<(), CliError> {
    let cfg = load(source)?;
    let e = cfg.experiment()?;
    let mut manifest = RunManifest::new("convergence", Some(&cfg), Some(e.seed));
    let mut tables: Vec<(Strategy, String, usize, ConvergenceTable)> = Vec::new();
    for ec in experiment_configs(&cfg)? {
        let label = format!("{} n={}", ec.kernel.label(), ec.n);
        let t = Instant::now();
        let table = run_static_experiment(&ec)?;
        manifest.timing.push(Timing { label: label.clone(), seconds: t.elapsed().as_secs_f64() });
        manifest.warnings.extend(prefixed(&label, &table.warnings));
        tables.push((Strategy::Static, ec.kernel.label().to_string(), ec.n, table));
    }
    let rows: Vec<ConvergenceRow> = tables.iter().flat_map(|t| t.3.rows.clone()).collect();
    let refs: Vec<_> = tables.iter().map(|(s, k, n, t)| (*s, k.clone(), *n, t)).collect();
    output::write_file(&source.out, "convergence.csv", &output::convergence_csv(&rows, false))?;
    output::write_file(&source.out, "cells.csv", &output::cells_csv(&refs))?;
    output::write_manifest(&source.out, &manifest)?;
    print_rows(&rows, false);
    Ok(())
}

pub fn adaptive_compare(source: &Source) -> Result<(), CliError> {
    let cfg = load(source)?;
    let e = cfg.experiment()?;
    let ad = cfg.adaptive();
    let mut manifest = RunManifest::new("adaptive-compare", Some(&cfg), Some(e.seed));
    manifest.meta("adaptive_pool_size", ad.pool_size);
    manifest.meta(
        "adaptive_argmax",
        format!("maximum over a pool of {} i.i.d. draws from the sampling distribution per step", ad.pool_size),
    );
    let mut tables: Vec<(Strategy, String, usize, ConvergenceTable)> = Vec::new();
    for ec in experiment_configs(&cfg)? {
        let n0 = ad.n0.unwrap_or(ec.n);
        for strategy in [Strategy::Static, Strategy::Adaptive] {
            let label = format!("{} {} n={}", strategy.name(), ec.kernel.label(), ec.n);
            let t = Instant::now();
            let table = match strategy {
                Strategy::Static => run_static_experiment(&ec)?,
                Strategy::Adaptive => run_adaptive_experiment(&ec, n0, ad.pool_size)?,
            };
            manifest.timing.push(Timing { label: label.clone(), seconds: t.elapsed().as_secs_f64() });
            manifest.warnings.extend(prefixed(&label, &table.warnings));
            tables.push((strategy, ec.kernel.label().to_string(), ec.n, table));
        }
    }
    let rows: Vec<ConvergenceRow> = tables.iter().flat_map(|t| t.3.rows.clone()).collect();
    let refs: Vec<_> = tables.iter().map(|(s, k, n, t)| (*s, k.clone(), *n, t)).collect();
    output::write_file(&source.out, "convergence.csv", &output::convergence_csv(&rows, true))?;
    output::write_file(&source.out, "cells.csv", &output::cells_csv(&refs))?;
    output::write_manifest(&source.out, &manifest)?;
    print_rows(&rows, true);
    Ok(())
}

fn parse_point(s: &str) -> Result<(usize, f64), CliError> {
    let bad = || CliError::Config(format!("--point {s}: expected M:VALUE"));
    let (m, v) = s.split_once(':').ok_or_else(bad)?;
    Ok((m.trim().parse().map_err(|_| bad())?, v.trim().parse().map_err(|_| bad())?))
}

fn prediction_csv(schedule: &[(usize, f64)], p: &MPrediction, verified: &[Option<f64>]) -> String {
    let mut out = String::from("record,m,value\n");
    for (m, v) in schedule {
        out.push_str(&format!("schedule,{m},{}\n", fmt_f64(*v)));
    }
    out.push_str(&format!("slope,,{}\n", fmt_f64(p.slope)));
    out.push_str(&format!("intercept,,{}\n", fmt_f64(p.intercept)));
    out.push_str(&format!("c0,,{}\n", fmt_f64(p.c0)));
    out.push_str(&format!("m_hat,{},{}\n", p.m_hat, fmt_f64(p.m_continuous)));
    for v in verified {
        out.push_str(&format!("verified,{},{}\n", p.m_hat, v.map_or_else(String::new, fmt_f64)));
    }
    out
}

pub fn predict_m(args: &crate::PredictArgs) -> Result<(), CliError> {
    let source = &args.source;
    let has_config = source.config.is_some() || source.preset.is_some();
    if let (Some(slope), Some(intercept)) = (args.slope, args.intercept) {
        let c0 = args.c0.ok_or_else(|| CliError::Config("--c0 is required with --slope".into()))?;
        let p = predict_m_from_line(slope, intercept, c0)?;
        print_prediction(&[], &p);
        let mut manifest = RunManifest::new("predict-m", None, None);
        manifest.meta("prediction", p);
        output::write_file(&source.out, "predict_m.csv", &prediction_csv(&[], &p, &[]))?;
        return output::write_manifest(&source.out, &manifest);
    }
    if !args.points.is_empty() {
        let c0 = args.c0.ok_or_else(|| CliError::Config("--c0 is required with --point".into()))?;
        let points = args.points.iter().map(|s| parse_point(s)).collect::<Result<Vec<_>, _>>()?;
        let p = predict_m_for_target(&points, c0)?;
        print_prediction(&points, &p);
        let mut manifest = RunManifest::new("predict-m", None, None);
        manifest.meta("prediction", p);
        output::write_file(&source.out, "predict_m.csv", &prediction_csv(&points, &p, &[]))?;
        return output::write_manifest(&source.out, &manifest);
    }
    if !has_config {
        return Err(CliError::Config("predict-m needs --slope/--intercept, --point data, or a config".into()));
    }
    let cfg = load(source)?;
    let pm = cfg.predict_m()?;
    let e = cfg.experiment()?;
    let family = match pm.kernel {
        Some(f) => f,
        None => cfg.kernel_choices()?[0].family(),
    };
    let base = ExperimentConfig {
        problem: cfg.problem_spec()?,
        dist: cfg.distribution()?,
        m_schedule: pm.schedule.clone(),
        n: e.n.to_vec()[0],
        delta0: e.delta0,
        kernel: KernelChoice::Estimate(family),
        fit: cfg.fit_options()?,
        macro_reps: e.macro_reps,
        master_seed: e.seed,
        test_points: cfg.test_points()?,
    };
    let tp = TargetPrecisionConfig { base, c0: args.c0.unwrap_or(pm.c0), resamples: pm.resamples };
    let t = Instant::now();
    let r = run_target_precision(&tp)?;
    let mut manifest = RunManifest::new("predict-m", Some(&cfg), Some(e.seed));
    manifest.timing.push(Timing { label: "target precision".into(), seconds: t.elapsed().as_secs_f64() });
    manifest.warnings.extend(r.warnings.iter().cloned());
    manifest.meta("prediction", r.prediction);
    manifest.meta("median_verified", r.median_verified);
    manifest.meta("mean_verified", r.mean_verified);
    print_prediction(&r.schedule, &r.prediction);
    if let Some(med) = r.median_verified {
        println!(
            "verified with m_hat over {} reps: median max IMSE {med:.4e} (target {:.4e})",
            r.verified_max_imse.len(),
            tp.c0
        );
    }
    output::write_file(&source.out, "predict_m.csv", &prediction_csv(&r.schedule, &r.prediction, &r.verified_max_imse))?;
    output::write_manifest(&source.out, &manifest)
}

fn print_prediction(schedule: &[(usize, f64)], p: &MPrediction) {
    if !schedule.is_empty() {
        let ms: Vec<String> = schedule.iter().map(|(m, _)| m.to_string()).collect();
        println!("schedule: {{{}}}", ms.join(", "));
        for (m, v) in schedule {
            println!("  m = {m:>5}  max IMSE = {v:.6e}");
        }
    }
    println!("slope = {:.6}, intercept = {:.6}", p.slope, p.intercept);
    println!("m_hat = {} (continuous {:.4}) for c0 = {:e}", p.m_hat, p.m_continuous, p.c0);
}

/// Decay class implied by a kernel.
fn kernel_class(spec: &KernelSpec) -> KernelClass {
    match spec.family() {
        KernelFamily::FiniteRankLinear => KernelClass::FiniteRank,
        KernelFamily::SqExp => KernelClass::ExpDecay { kappa: 1.0 },
        f => KernelClass::PolyDecay { nu: f.smoothness().expect("Matérn family has a smoothness") },
    }
}

fn design_eigs(a: &AllocateCfg, dist: &SamplingDistribution, i: usize) -> Result<EigenSequence, CliError> {
    let spec = &a.designs[i].kernel;
    Ok(match *spec {
        KernelSpec::FiniteRankLinear { a: fa, b } => finite_rank_eigenvalues(fa, b, dist)?,
        KernelSpec::Stationary { tau2, phi, .. } if closed_form_applies(spec, dist) => {
            let sd = dist.stdev_param()[0];
            se_gaussian_eigenvalues(tau2, phi, 1.0 / (4.0 * sd * sd), a.eig_count)?
        }
        _ => {
            let stream = RngStream::new(a.seed, StreamPath::new(0, Purpose::NystromNodes).design(i as u64));
            nystrom_eigenvalues(spec, dist, a.nystrom_nodes, a.eig_count.min(a.nystrom_nodes), &stream)?
        }
    })
}

fn check_designs(a: &AllocateCfg) -> Result<(), CliError> {
    if a.designs.is_empty() {
        return Err(CliError::Config("allocate.designs is empty".into()));
    }
    for d in &a.designs {
        match d.kernel {
            KernelSpec::Stationary { family, tau2, phi } => {
                KernelSpec::stationary(family, tau2, phi)?;
            }
            KernelSpec::FiniteRankLinear { a, b } => {
                KernelSpec::finite_rank(a, b)?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct DesignEcho {
    kernel: String,
    params: RateParams,
    truncation: usize,
    trace: f64,
}

pub fn allocate(args: &crate::AllocateArgs) -> Result<(), CliError> {
    let source = &args.source;
    let cfg = load(source)?;
    let a = cfg.allocate()?;
    check_designs(a)?;
    let dist = cfg.distribution()?;
    let regressors = cfg.fit.regressors;
    let n_tot = args.n_tot.unwrap_or(a.n_tot);
    let d = dist.dim();
    let t = Instant::now();
    let mut params = Vec::new();
    let mut eigs = Vec::new();
    for (i, dc) in a.designs.iter().enumerate() {
        params.push(RateParams {
            class: kernel_class(&dc.kernel),
            d,
            r_star: dc.r_star,
            rho_star: dc.rho_star,
            sigma_bar2: dc.sigma_bar2,
            sigma_under2: dc.sigma_under2,
            c_f: dc.c_f,
            q: regressors.q(d),
            lambda_min_ff: regressor_min_eigenvalue(regressors, &dist),
        });
        eigs.push(design_eigs(a, &dist, i)?);
    }
    let alloc = solve_allocation(&params, &eigs, n_tot, a.m, a.grid_resolution, a.zeta_max)?;

    let mut manifest = RunManifest::new("allocate", Some(&cfg), Some(a.seed));
    manifest.timing.push(Timing { label: "allocation".into(), seconds: t.elapsed().as_secs_f64() });
    manifest.warnings.extend(alloc.warnings.iter().cloned());
    manifest.meta("n_tot", n_tot);
    manifest.meta("m", a.m);
    manifest.meta("zeta_max", a.zeta_max);
    manifest.meta("grid_resolution", a.grid_resolution);
    manifest.meta("method", alloc.method);
    manifest.meta("max_bound", alloc.max_bound);
    manifest.meta(
        "designs",
        a.designs
            .iter()
            .zip(&params)
            .zip(&eigs)
            .map(|((dc, p), e)| DesignEcho {
                kernel: dc.kernel.family().name().into(),
                params: *p,
                truncation: e.truncation(),
                trace: e.trace(),
            })
            .collect::<Vec<_>>(),
    );

    let mut csv = String::from("design,kernel,class,rho,n_i,bound\n");
    println!("{:>6} {:<18} {:>12} {:>14} {:>14}", "design", "kernel", "rho", "n_i", "R_i");
    for (i, ((dc, rho), bound)) in a.designs.iter().zip(&alloc.rho).zip(&alloc.bounds).enumerate() {
        let n_i = rho * n_tot as f64 / a.m as f64;
        let class = match params[i].class {
            KernelClass::FiniteRank => "finite_rank",
            KernelClass::ExpDecay { .. } => "exp_decay",
            KernelClass::PolyDecay { .. } => "poly_decay",
        };
        let name = dc.kernel.family().name();
        csv.push_str(&format!("{i},{name},{class},{},{},{}\n", fmt_f64(*rho), fmt_f64(n_i), fmt_f64(*bound)));
        println!("{i:>6} {name:<18} {rho:>12.6} {n_i:>14.4} {bound:>14.6e}");
    }
    println!("max R_i = {:.6e} ({:?})", alloc.max_bound, alloc.method);
    for w in &alloc.warnings {
        eprintln!("warning: {w}");
    }
    output::write_file(&source.out, "allocation.csv", &csv)?;
    output::write_manifest(&source.out, &manifest)
}

pub fn eigs(source: &Source) -> Result<(), CliError> {
    let cfg = load(source)?;
    let a = cfg.allocate()?;
    check_designs(a)?;
    let dist = cfg.distribution()?;
    let mut csv = String::from("design,kernel,source,index,eigenvalue,trace_tail\n");
    for (i, dc) in a.designs.iter().enumerate() {
        let e = design_eigs(a, &dist, i)?;
        let src = serde_json::to_value(e.source).expect("enum serializes");
        let src = src.as_str().unwrap_or_default();
        for (l, v) in e.values.iter().enumerate() {
            csv.push_str(&format!(
                "{i},{},{src},{l},{},{}\n",
                dc.kernel.family().name(),
                fmt_f64(*v),
                fmt_f64(e.trace_tail(l + 1))
            ));
        }
        println!("design {i}: {} eigenvalues from {src}, trace {:.6e}", e.truncation(), e.trace());
    }
    let manifest = RunManifest::new("eigs", Some(&cfg), Some(a.seed));
    output::write_file(&source.out, "eigs.csv", &csv)?;
    output::write_manifest(&source.out, &manifest)
}

#[derive(Serialize)]
struct DesignFit {
    design: usize,
    kernel: KernelSpec,
    beta_hat: Vec<f64>,
    loglik: f64,
    likelihood_evaluations: usize,
    noise_floor: f64,
    noise_fell_back_to_raw: bool,
    mean_noise_variance: f64,
}

#[derive(Serialize)]
struct FitDump {
    m: usize,
    n: usize,
    macro_rep: usize,
    designs: Vec<DesignFit>,
    measures: simcov::measures::MeasureReport,
}

pub fn fit(args: &crate::FitArgs) -> Result<(), CliError> {
    let source = &args.source;
    let cfg = load(source)?;
    let ec = experiment_configs(&cfg)?.remove(0);
    let m = args.m.unwrap_or(*ec.m_schedule.last().unwrap());
    if m == 0 {
        return Err(CliError::Config("--m must be at least 1".into()));
    }
    let rep = args.rep as u64;
    let seed = ec.master_seed;
    let points = draw_covariates(&ec.dist, m, &RngStream::new(seed, StreamPath::new(rep, Purpose::TrainingCovariates)))?;
    let tests =
        draw_test_points(&ec.dist, ec.test_points, &RngStream::new(seed, StreamPath::new(rep, Purpose::TestCovariates)))?;
    let hyper = match ec.kernel {
        KernelChoice::Estimate(f) => Hyper::Mle(f),
        KernelChoice::Fixed(spec) => Hyper::Fixed(spec),
    };
    let mut models = Vec::with_capacity(ec.problem.k());
    for i in 0..ec.problem.k() {
        let table = points
            .iter()
            .enumerate()
            .map(|(j, x)| {
                let path = StreamPath::new(rep, Purpose::Simulation).design(i as u64).point(j as u64);
                ec.problem.sample(i, x, ec.n, &RngStream::new(seed, path))
            })
            .collect::<Result<Vec<_>, _>>()?;
        models.push(fit_model(points.clone(), &table, hyper, &ec.fit)?);
    }
    let measures = evaluate(&models, &tests, ec.delta0, Some(&ec.problem))?;
    let designs = models
        .iter()
        .enumerate()
        .map(|(i, md)| DesignFit {
            design: i,
            kernel: *md.kernel(),
            beta_hat: md.beta_hat().to_vec(),
            loglik: md.loglik(),
            likelihood_evaluations: md.evaluations(),
            noise_floor: md.noise().floor,
            noise_fell_back_to_raw: md.noise().fell_back_to_raw,
            mean_noise_variance: md.noise().per_point_var.iter().sum::<f64>() / m as f64,
        })
        .collect();
    let dump = FitDump { m, n: ec.n, macro_rep: args.rep, designs, measures };
    let mut text = serde_json::to_string_pretty(&dump).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    print!("{text}");
    output::write_file(&source.out, "fit.json", &text)?;
    output::write_manifest(&source.out, &RunManifest::new("fit", Some(&cfg), Some(seed)))
}
