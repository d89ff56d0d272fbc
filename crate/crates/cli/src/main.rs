use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use predissonance::discretize::build_grid;
use predissonance::evolve::{
    alpha_projection, build_cutoff, default_times, expansion, recurrence_time, remainder, residues_with, survival_box_on, survival_cap_on,
    StateVector,
};
use predissonance::experiments::{h_sweep, run_acceptance, sweep_csv};
use predissonance::model::validate_assumptions;
use predissonance::resonance::{
    first_order_resonance_with, resonances_direct_on, resonances_feshbach_on, well_states_on, Feshbach, ResonanceRecord,
};
use predissonance::{Error, ModelConfig};

#[derive(Parser)]
#[command(name = "predissonance", version, about = "Predissociation resonances of 2x2 semiclassical Schrödinger operators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Config JSON (schema predissonance-config/1, or {"preset": name, ...})
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "./out")]
    output: PathBuf,
    /// Dotted key=value, repeatable
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    nu: Option<u32>,
    /// "t0:t1:n", "t0:t1:n:log" or "log"
    #[arg(long)]
    times: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the standing assumptions
    Validate(Common),
    /// Well states in the window
    Spectrum(Common),
    /// Resonances by both methods
    Resonances(Common),
    /// Survival amplitude, box backend
    Evolve(Common),
    /// Box, CAP, expansion and remainder
    Compare(Common),
    /// h sweep of the full pipeline
    Sweep(Common),
    /// Acceptance suite
    Accept(Common),
}

/// Failure classes mapped to exit codes.
enum Fail {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Fail::Usage(e.into()),
            _ => Fail::Compute(e.into()),
        }
    }
}

impl From<anyhow::Error> for Fail {
    fn from(e: anyhow::Error) -> Self {
        Fail::Compute(e)
    }
}

fn load_config(c: &Common) -> Result<ModelConfig, Fail> {
    let text = fs::read_to_string(&c.config).with_context(|| format!("reading {}", c.config.display())).map_err(Fail::Usage)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Fail::Usage(anyhow!("config is not JSON: {e}")))?;
    let mut ov = Vec::new();
    for o in &c.overrides {
        let (k, val) = o.split_once('=').ok_or_else(|| Fail::Usage(anyhow!("override \"{o}\" is not key=value")))?;
        ov.push((k.trim().to_string(), val.trim().to_string()));
    }
    if let Some(t) = c.theta {
        ov.push(("distortion.theta".into(), t.to_string()));
    }
    if let Some(n) = c.nu {
        ov.push(("cutoff.nu".into(), n.to_string()));
    }
    ModelConfig::from_value(v, &ov).map_err(|e| Fail::Usage(e.into()))
}

/// Writes via a temporary file and rename.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

fn csv_with_hash(hash: &str, body: &str) -> String {
    format!("# config_hash={hash}\n{body}")
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json") + "\n"
}

fn parse_times(spec: &str, a: f64, t_default: f64, n_default: usize) -> Result<Vec<f64>, Fail> {
    if spec == "log" {
        return Ok(default_times(a, t_default, n_default));
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Fail::Usage(anyhow!("bad --times \"{spec}\""));
    if parts.len() < 3 || parts.len() > 4 {
        return Err(bad());
    }
    let t0: f64 = parts[0].parse().map_err(|_| bad())?;
    let t1: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(t0 >= 0.0 && t1 > t0 && n >= 2) {
        return Err(bad());
    }
    match parts.get(3) {
        None => Ok(predissonance::evolve::linear_times(t0, t1, n)),
        Some(&"log") if t0 > 0.0 => Ok((0..n).map(|i| (t0.ln() + (t1 / t0).ln() * i as f64 / (n - 1) as f64).exp()).collect()),
        _ => Err(bad()),
    }
}

fn run(cli: Cli) -> Result<ExitCode, Fail> {
    match cli.cmd {
        Cmd::Validate(c) => {
            let cfg = load_config(&c)?;
            let rep = validate_assumptions(&cfg);
            let v = json!({"config_hash": cfg.hash(), "assumptions": rep});
            // a closed pipe downstream is not an error here
            let _ = writeln!(std::io::stdout(), "{}", pretty(&v).trim_end());
            Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Spectrum(c) => {
            let cfg = load_config(&c)?;
            let grid = build_grid(&cfg)?;
            let b = well_states_on(&cfg, &grid)?;
            let v = json!({
                "config_hash": cfg.hash(), "h": cfg.h, "n_points": grid.n_points, "dx": grid.dx,
                "window": b.window, "a": b.a, "a_tilde": b.a_tilde, "nearest_outside": b.nearest_outside,
                "lambdas": b.lambdas(), "residuals": b.states.iter().map(|s| s.residual).collect::<Vec<_>>(),
            });
            let mut csv = String::from("x");
            for j in 0..b.m() {
                csv.push_str(&format!(",u{}", j + 1));
            }
            csv.push('\n');
            for (i, x) in grid.interior().iter().enumerate() {
                csv.push_str(&format!("{x:.12e}"));
                for s in &b.states {
                    csv.push_str(&format!(",{:.12e}", s.u[i]));
                }
                csv.push('\n');
            }
            let p = write_atomic(&c.output, "spectrum.json", &pretty(&v))?;
            write_atomic(&c.output, "well_states.csv", &csv_with_hash(&cfg.hash(), &csv))?;
            println!("{}", p.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Resonances(c) => {
            let cfg = load_config(&c)?;
            let grid = build_grid(&cfg)?;
            let b = well_states_on(&cfg, &grid)?;
            let theta = cfg.distortion.theta;
            let direct = resonances_direct_on(&cfg, &grid, &b, theta)?;
            let fesh = resonances_feshbach_on(&cfg, &grid, &b, theta)?;
            let fe = Feshbach::new(&cfg, &grid, &b, theta)?;
            let first: Vec<Value> = (0..b.m())
                .map(|j| first_order_resonance_with(&fe, &b, j).map(|z| json!({"re": z.re, "im": z.im})))
                .collect::<Result<_, _>>()?;
            let recs: Vec<ResonanceRecord> = direct.iter().chain(&fesh).map(ResonanceRecord::from).collect();
            let v = json!({"config_hash": cfg.hash(), "h": cfg.h, "theta": theta, "a": b.a, "resonances": recs, "first_order": first});
            let p = write_atomic(&c.output, "resonances.json", &pretty(&v))?;
            println!("{}", p.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Evolve(c) => {
            let cfg = load_config(&c)?;
            let grid = build_grid(&cfg)?;
            let b = well_states_on(&cfg, &grid)?;
            let (g, report) = build_cutoff(b.window, b.a, cfg.cutoff.nu)?;
            let t_rec = recurrence_time(&cfg, &grid, b.window.1 + 2.0 * b.a);
            let times = parse_times(c.times.as_deref().unwrap_or("log"), b.a, t_rec, cfg.experiment.time_points)?;
            let phi = StateVector::well_state(&b, 0);
            let s = survival_box_on(&cfg, &grid, &b, &phi, &g, &times)?;
            write_atomic(&c.output, "survival_box.csv", &csv_with_hash(&cfg.hash(), &s.to_csv()))?;
            let v = json!({"series": s, "cutoff": report, "alpha": alpha_projection(&phi, &b)});
            let p = write_atomic(&c.output, "survival_box.json", &pretty(&v))?;
            println!("{}", p.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Compare(c) => {
            let cfg = load_config(&c)?;
            let grid = build_grid(&cfg)?;
            let b = well_states_on(&cfg, &grid)?;
            let theta = cfg.distortion.theta;
            let (g, report) = build_cutoff(b.window, b.a, cfg.cutoff.nu)?;
            let t_rec = recurrence_time(&cfg, &grid, b.window.1 + 2.0 * b.a);
            let times = parse_times(c.times.as_deref().unwrap_or("log"), b.a, t_rec, cfg.experiment.time_points)?;
            let phi = StateVector::well_state(&b, 0);
            let alpha = alpha_projection(&phi, &b);
            let res = resonances_direct_on(&cfg, &grid, &b, theta)?;
            let fe = Feshbach::new(&cfg, &grid, &b, theta)?;
            let resid = residues_with(&fe, &b, &res, &alpha, 1.0)?;
            let rhos: Vec<_> = res.iter().map(|r| r.rho).collect();
            let model = expansion(&rhos, &resid.b, &times);
            let boxed = survival_box_on(&cfg, &grid, &b, &phi, &g, &times)?;
            let cap = survival_cap_on(&cfg, &grid, &phi, &g, &times, cfg.experiment.cap.eta, cfg.experiment.cap.dt, rhos[0].re)?;
            let r_box = remainder(&boxed, &model)?;
            let r_cap = remainder(&cap.series, &model)?;
            let hash = cfg.hash();
            write_atomic(&c.output, "survival_box.csv", &csv_with_hash(&hash, &boxed.to_csv()))?;
            write_atomic(&c.output, "survival_cap.csv", &csv_with_hash(&hash, &cap.series.to_csv()))?;
            write_atomic(&c.output, "expansion.csv", &csv_with_hash(&hash, &model.to_csv()))?;
            let mut rcsv = String::from("t,r_box,r_cap,trusted\n");
            for i in 0..times.len() {
                rcsv.push_str(&format!("{:.12e},{:.12e},{:.12e},{}\n", times[i], r_box[i], r_cap[i], boxed.trusted[i]));
            }
            write_atomic(&c.output, "remainder.csv", &csv_with_hash(&hash, &rcsv))?;
            let v = json!({
                "config_hash": hash, "t_rec": t_rec, "cutoff": report,
                "resonances": res.iter().map(ResonanceRecord::from).collect::<Vec<_>>(),
                "residues": resid, "cap_steps": cap.steps, "cap_max_norm_change": cap.max_norm_change,
            });
            let p = write_atomic(&c.output, "compare.json", &pretty(&v))?;
            println!("{}", p.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sweep(c) => {
            let cfg = load_config(&c)?;
            let recs = h_sweep(&cfg, &cfg.experiment.hs);
            write_atomic(&c.output, "sweep.csv", &csv_with_hash(&cfg.hash(), &sweep_csv(&recs)))?;
            let v = json!({"config_hash": cfg.hash(), "records": recs});
            let p = write_atomic(&c.output, "sweep.json", &pretty(&v))?;
            println!("{}", p.display());
            Ok(if recs.iter().all(|r| r.error.is_none()) { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Accept(c) => {
            let cfg = load_config(&c)?;
            let rep = run_acceptance(&cfg);
            let p = write_atomic(&c.output, "report.json", &rep.to_json())?;
            for cr in &rep.criteria {
                eprintln!("{:>2} {:?} {}", cr.criterion_id, cr.status, cr.name);
            }
            println!("{}", p.display());
            Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("E: usage: {}", e.to_string().lines().next().unwrap_or(""));
                let _ = e.print();
                return ExitCode::from(2);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Fail::Usage(e)) => {
            eprintln!("E: config: {e:#}");
            ExitCode::from(2)
        }
        Err(Fail::Compute(e)) => {
            eprintln!("E: compute: {e:#}");
            ExitCode::from(1)
        }
    }
}
