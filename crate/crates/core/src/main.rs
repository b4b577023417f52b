use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use drifttrack::harness::{
    calibrate_c, format_float, run_sweep, simulate_to, with_threads, write_sweep, ExperimentConfig, SweepConfig,
};
use drifttrack::schedules::{
    classify_regime, critical_step, decay_dist_exp, decay_dist_hp, decay_gap_exp, decay_gap_hp, Schedule,
    ScheduleKind,
};
use drifttrack::theory::{BoundCurve, BoundFamily, BoundParams};
use drifttrack::{Error, Result};

const THREADS_ENV: &str = "DRIFTTRACK_THREADS";

#[derive(Parser)]
#[command(name = "drifttrack", version, about = "Track drifting strongly convex problems with proximal SGD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment and write series.csv, series.svg and meta.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: $DRIFTTRACK_THREADS, else all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run one experiment per parameter value and write sweep tables.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print an envelope as CSV `t,bound`.
    Bounds {
        #[arg(long)]
        family: String,
        /// Comma-separated `key=value` pairs: mu, mu_eff, L, eta, sigma,
        /// delta_drift, D0, delta, c, x0_dist_sq.
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long)]
        tmax: usize,
    },
    /// Print a step-size schedule as CSV `k,eta_k,T_k` followed by the regime report.
    Schedule {
        #[arg(long)]
        family: String,
        /// Comma-separated `key=value` pairs: mu, L, sigma, delta_drift, D, delta, c, eta.
        #[arg(long, default_value = "")]
        params: String,
    },
    /// Calibrate the constant of a high-probability envelope.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value = "dist_hp")]
        family: String,
        /// Required coverage (default 1 − delta).
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn parse_params(text: &str, allowed: &[&str]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{item}'")))?;
        let key = match k.trim() {
            "drift" => "delta_drift",
            other => other,
        };
        if !allowed.contains(&key) {
            return Err(Error::Config(format!(
                "unknown parameter '{key}' (expected one of {})",
                allowed.join(", ")
            )));
        }
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("parameter {key}: '{v}' is not a number")))?;
        out.insert(key.to_string(), value);
    }
    Ok(out)
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{THREADS_ENV}='{v}' is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn bounds(family: &str, params: &str, tmax: usize) -> Result<()> {
    let family = BoundFamily::parse(family)?;
    let p = parse_params(
        params,
        &["mu", "mu_eff", "L", "eta", "sigma", "delta_drift", "D0", "delta", "c", "x0_dist_sq"],
    )?;
    let get = |k: &str, default: f64| p.get(k).copied().unwrap_or(default);
    let mu = get("mu", 1.0);
    let mu_eff = get("mu_eff", mu);
    let l = get("L", 1.0);
    let sigma = get("sigma", 10.0);
    let drift = get("delta_drift", 1.0);
    let eta = match p.get("eta") {
        Some(&e) => e,
        None => critical_step(mu_eff, l, sigma, drift)?,
    };
    let curve = BoundCurve {
        family,
        params: BoundParams {
            mu,
            mu_eff,
            l,
            eta,
            sigma,
            drift,
            d0: get("D0", 1.0),
            delta: get("delta", 0.05),
            c: get("c", 1.0),
            x0_dist_sq: get("x0_dist_sq", get("D0", 1.0)),
        },
    };
    let values = curve.sample(tmax)?;
    let mut out = String::from("t,bound\n");
    for (t, v) in values.iter().enumerate() {
        out.push_str(&format!("{t},{}\n", format_float(*v)));
    }
    print!("{out}");
    Ok(())
}

fn schedule(family: &str, params: &str) -> Result<()> {
    let kind = ScheduleKind::parse(family)?;
    let p = parse_params(params, &["mu", "L", "sigma", "delta_drift", "D", "delta", "c", "eta"])?;
    let get = |k: &str, default: f64| p.get(k).copied().unwrap_or(default);
    let (mu, l, sigma, drift, d) = (
        get("mu", 1.0),
        get("L", 1.0),
        get("sigma", 10.0),
        get("delta_drift", 1.0),
        get("D", 100.0),
    );
    let s: Schedule = match kind {
        ScheduleKind::Constant => Schedule::constant(match p.get("eta") {
            Some(&e) => e,
            None => critical_step(mu, l, sigma, drift)?,
        })?,
        ScheduleKind::DecayDistExp => decay_dist_exp(mu, l, sigma, drift, d)?,
        ScheduleKind::DecayDistHp => decay_dist_hp(mu, l, sigma, drift, d)?,
        ScheduleKind::DecayGapExp => decay_gap_exp(mu, l, sigma, drift, d)?,
        ScheduleKind::DecayGapHp => decay_gap_hp(mu, l, sigma, drift, d, get("delta", 0.05), get("c", 1.0))?,
    };
    let mut out = String::from("k,eta_k,T_k\n");
    for e in &s.epochs {
        out.push_str(&format!("{},{},{}\n", e.index, format_float(e.eta), e.len));
    }
    out.push('\n');
    match classify_regime(mu, l, sigma, drift) {
        Ok(r) => {
            let regime = serde_json::to_value(r.regime)?;
            out.push_str(&format!("regime={}\n", regime.as_str().unwrap_or("?")));
            out.push_str(&format!("ratio={}\n", format_float(r.ratio)));
            out.push_str(&format!("threshold={}\n", format_float(r.threshold)));
            out.push_str(&format!("eta_star={}\n", format_float(r.eta_star)));
            out.push_str(&format!("error_dist={}\n", format_float(r.error_dist)));
            out.push_str(&format!("error_gap={}\n", format_float(r.error_gap)));
            out.push_str(&format!("degenerate_noise={}\n", r.degenerate));
        }
        Err(e) => out.push_str(&format!("regime=unavailable ({e})\n")),
    }
    if let Some(total) = s.total_len() {
        out.push_str(&format!("total_steps={total}\n"));
    }
    if let Some(f) = s.failure_level {
        out.push_str(&format!("failure_level={}\n", format_float(f)));
    }
    out.push_str(&format!("degenerate_schedule={}\n", s.degenerate));
    print!("{out}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, threads: n } => {
            let config = ExperimentConfig::load(&config)?;
            let dir = out_dir(out, &config);
            let result = with_threads(threads(n)?, || simulate_to(&config, &dir))??;
            let s = &result.series;
            let last = s.len() - 1;
            println!(
                "wrote {} ({} trials, T = {}): final mean dist_sq {}, final mean gap {}",
                dir.display(),
                s.trials,
                result.resolved.horizon,
                format_float(s.dist.mean[last]),
                format_float(s.gap.mean[last])
            );
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
            threads: n,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            let existing = config.sweep.take();
            let param = param
                .or_else(|| existing.as_ref().map(|s| s.param.clone()))
                .ok_or_else(|| Error::Config("no sweep parameter given".into()))?;
            let values = values
                .or_else(|| existing.map(|s| s.values))
                .ok_or_else(|| Error::Config("no sweep values given".into()))?;
            config.sweep = Some(SweepConfig {
                param: param.clone(),
                values,
            });
            config.validate()?;
            let dir = out_dir(out, &config);
            let results = with_threads(threads(n)?, || run_sweep(&config))??;
            write_sweep(&dir, &param, &results)?;
            println!("wrote {} ({} values of {param})", dir.display(), results.len());
        }
        Command::Bounds { family, params, tmax } => bounds(&family, &params, tmax)?,
        Command::Schedule { family, params } => schedule(&family, &params)?,
        Command::Calibrate {
            config,
            delta,
            trials,
            family,
            target,
            threads: n,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(d) = delta {
                config.bound.delta = d;
            }
            if let Some(t) = trials {
                config.trials = t;
            }
            config.validate()?;
            let family = BoundFamily::parse(&family)?;
            let cal = with_threads(threads(n)?, || calibrate_c(&config, family, target))??;
            println!("{}", serde_json::to_string_pretty(&cal)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
