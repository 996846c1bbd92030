use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use hsketch::config::RunSettings;
use hsketch::experiment::{run_experiment, write_rows, ExperimentConfig, Quantity, Scheme, Task};
use hsketch::presets;
use hsketch::summary::{read_rows_from, summarize, SummaryTable};
use hsketch::workload::gen_stream;
use hsketch_core::estimator::{gamma_minus_one_third, gamma_minus_two_thirds};
use hsketch_core::{
    equal_memory_m_prime, eta1_closed, eta1_quadrature, gamma_fn, modulo_spectrum,
    predict_variance, truncation_correction, Complex, EtaParams, GroupElement, Parity, RHatTable,
    SketchConfig, TowerMode, TowerParams, TowerSketch, TAU_STAR,
};

#[derive(Parser)]
#[command(
    name = "hsketch",
    version,
    about = "Fourier tower sketches over finite abelian groups: experiments and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Default)]
struct Flags {
    /// Tower parameter m (cells per unit of log-scale).
    #[arg(long, global = true)]
    m: Option<u32>,
    /// Number of trials; trial t uses seed SEED + t.
    #[arg(long, global = true)]
    trials: Option<u32>,
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run only this scheme (fourier, ideal-oracle, fingerprint-r2 ... fingerprint-r6).
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Report max(0, estimate) for counts.
    #[arg(long, global = true)]
    clamp_nonnegative: bool,
    /// Subtract the truncation term in every column.
    #[arg(long, global = true)]
    literal_truncation: bool,
    /// Flat key = value settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print constants and numerical self-checks.
    SanityTable,
    /// Counts modulo 7 on three workloads, all schemes at equal memory.
    Modulo7,
    /// Second moment over Z_128, Fourier tower against the ideal sampler.
    L2,
    /// Union of two Z_7 streams.
    Union,
    /// Empirical against predicted variance of the support estimate.
    VarianceCheck,
    /// Time sketch updates and estimation.
    Bench,
    /// Summarize an experiment CSV.
    Summarize { csv: PathBuf },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let flags = RunSettings {
        m: cli.flags.m,
        trials: cli.flags.trials,
        seed: cli.flags.seed,
        out: cli.flags.out,
        scheme: cli.flags.scheme,
        clamp_nonnegative: cli.flags.clamp_nonnegative,
        literal_truncation: cli.flags.literal_truncation,
    };
    let settings = match &cli.flags.config {
        Some(path) => RunSettings::load(path)?.overridden_by(flags),
        None => flags,
    };
    let options = settings.estimate_options();
    let seed = settings.seed.unwrap_or(0);
    match cli.command {
        Command::SanityTable => sanity_table(),
        Command::Modulo7 => {
            let config = presets::modulo7(
                settings.m.unwrap_or(128),
                settings.trials.unwrap_or(40),
                seed,
                options,
            );
            run_preset(config, &settings, "modulo7.csv")
        }
        Command::L2 => {
            let config = presets::l2(
                settings.m.unwrap_or(256),
                settings.trials.unwrap_or(1000),
                seed,
                options,
            );
            run_preset(config, &settings, "l2.csv")
        }
        Command::Union => {
            let config = presets::union(
                settings.m.unwrap_or(64),
                settings.trials.unwrap_or(200),
                seed,
                options,
            );
            run_preset(config, &settings, "union.csv")
        }
        Command::VarianceCheck => variance_check(&settings),
        Command::Bench => bench(&settings),
        Command::Summarize { csv } => {
            let rows = read_rows_from(&csv)?;
            print!("{}", SummaryTable(&summarize(&rows)?));
            Ok(())
        }
    }
}

fn run_preset(
    mut config: ExperimentConfig,
    settings: &RunSettings,
    default_out: &str,
) -> anyhow::Result<()> {
    if let Some(name) = &settings.scheme {
        presets::filter_schemes(&mut config, name)?;
    }
    let out = settings
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(default_out));
    let start = Instant::now();
    let rows = run_experiment(&config)?;
    write_rows(&out, &rows)?;
    eprintln!(
        "wrote {} rows to {} in {:.1?}",
        rows.len(),
        out.display(),
        start.elapsed()
    );
    print!("{}", SummaryTable(&summarize(&rows)?));
    Ok(())
}

fn sanity_table() -> anyhow::Result<()> {
    let g13: f64 = gamma_minus_one_third();
    let g23: f64 = gamma_minus_two_thirds();
    println!("{:<40} {:>22}", "quantity", "value");
    println!("{:<40} {:>22.15}", "Gamma(-1/3)", g13);
    println!("{:<40} {:>22.15}", "Gamma(-2/3)", g23);
    println!("{:<40} {:>22.15}", "Gamma(tau*)", gamma_fn(TAU_STAR)?);
    let reflection =
        g13 * gamma_fn(4.0 / 3.0)? * (std::f64::consts::PI / 3.0).sin() / std::f64::consts::PI;
    println!(
        "{:<40} {:>22.3e}",
        "reflection residual at -1/3",
        (reflection + 1.0).abs()
    );
    for m in [32u32, 64, 128] {
        println!(
            "{:<40} {:>22.12}",
            format!("tau2(a = 0, m = {m})"),
            truncation_correction::<f64>(0, m)
        );
    }
    for m in [32u32, 64, 128] {
        let c = 3.0 * f64::from(m).recip() * (-g23) / (g13 * g13);
        println!(
            "{:<40} {:>22.12}",
            format!("3(-Gamma(-2/3))/(m Gamma(-1/3)^2), m={m}"),
            c
        );
    }
    for (a, b, c) in [
        (1.0, 2.0, 1.0 / 3.0),
        (0.5, 3.0, 1.0 / 3.0),
        (1.0, 1.5, 2.0 / 3.0),
    ] {
        let p = EtaParams::new(Complex::new(a, 0.0), Complex::new(b, 0.0), c)?;
        let closed = eta1_closed(&p)?;
        let quad = eta1_quadrature(&p, 1e-10)?;
        println!(
            "{:<40} {:>22.3e}",
            format!("eta1 closed vs quadrature ({a}, {b}, {c:.3})"),
            (closed - quad).norm() / closed.norm()
        );
    }
    for r in 2..=6 {
        println!(
            "{:<40} {:>10} {:>11}",
            format!("equal-memory m' (m = 128, r = {r})"),
            equal_memory_m_prime(128, r, Parity::Odd),
            equal_memory_m_prime(128, r, Parity::Even)
        );
    }
    Ok(())
}

fn variance_check(settings: &RunSettings) -> anyhow::Result<()> {
    let m = settings.m.unwrap_or(64);
    let trials = settings.trials.unwrap_or(200);
    let workload = presets::psi_group_workload();
    let config = ExperimentConfig {
        tasks: vec![Task::Moments {
            workload: workload.clone(),
            quantities: vec![Quantity::Support { p: 7 }],
        }],
        schemes: vec![Scheme::fourier(m)],
        trials,
        base_seed: settings.seed.unwrap_or(0),
        options: settings.estimate_options(),
        output: settings.out.clone(),
    };
    let rows = run_experiment(&config)?;
    let summary = summarize(&rows)?;
    let s = &summary[0];
    let stream = gen_stream(&workload)?;
    let group = hsketch_core::GroupDescriptor::cyclic(7)?;
    let hist: Vec<(GroupElement, u64)> =
        stream.truth.value_histogram(&group)?.into_iter().collect();
    let rhat = RHatTable::from_counts(group, &hist)?;
    let predicted = predict_variance(&modulo_spectrum::<f64>(7, 0)?, &rhat, s.truth, m)?;
    let empirical = s.std * s.std;
    println!("m = {m}, trials = {trials}, support = {}", s.truth);
    println!("mean estimate      {:.3}", s.mean);
    println!("empirical variance {:.3}", empirical);
    println!("predicted variance {:.3}", predicted);
    println!("ratio              {:.3}", empirical / predicted);
    Ok(())
}

fn bench(settings: &RunSettings) -> anyhow::Result<()> {
    let m = settings.m.unwrap_or(64);
    let trials = settings.trials.unwrap_or(20);
    if trials == 0 {
        bail!("trials must be at least 1");
    }
    let stream = gen_stream(&presets::psi_group_workload())?;
    let group = hsketch_core::GroupDescriptor::cyclic(7)?;
    let updates: Vec<(u64, GroupElement)> = stream
        .updates
        .iter()
        .map(|u| Ok((u.v, u.group_value(&group)?)))
        .collect::<hsketch::Result<_>>()?;
    let options = settings.estimate_options();
    let (mut update_time, mut query_time) = (0.0, 0.0);
    for t in 0..trials {
        let params = TowerParams::with_default_range(
            m,
            settings.seed.unwrap_or(0) + u64::from(t),
            TowerMode::Poisson,
        )?;
        let start = Instant::now();
        let mut sketch = TowerSketch::new(SketchConfig::new(group.clone(), params));
        for (v, y) in &updates {
            sketch.update(*v, y).context("update")?;
        }
        update_time += start.elapsed().as_secs_f64();
        let start = Instant::now();
        let agg = hsketch_core::Aggregates::new(&sketch, &options);
        for j in 1..7 {
            agg.modulo(7, j, &options)?;
        }
        agg.support(7, &options)?;
        query_time += start.elapsed().as_secs_f64();
    }
    let n = updates.len() as f64 * f64::from(trials);
    println!(
        "m = {m}, {} updates per trial, {trials} trials",
        updates.len()
    );
    println!("update  {:>10.1} ns/update", update_time / n * 1e9);
    println!(
        "query   {:>10.3} ms/sketch (7 quantities)",
        query_time / f64::from(trials) * 1e3
    );
    Ok(())
}
