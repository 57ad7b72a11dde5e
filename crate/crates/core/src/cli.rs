//! `habitform solve | sweep | verify | simulate`.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 solver failure,
//! 3 failed verification.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_override, RunConfig};
use crate::output::{self, Summary};
use crate::policy::PolicySolution;
use crate::sim::Simulator;
use crate::sweep::{run_sweep, stepped, SweepSpec};
use crate::verify::{regime_samples, verify, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "habitform", version, about = "Habit-formation investment/consumption solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value config; the reference parameters when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: config `output_dir`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set delta=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps and Monte Carlo.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve and write phi_H, bracket history, dual, policy and summary files.
    Solve(Common),
    /// Run the certificate suite, including Monte Carlo when `sim.*` is set.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Skip the Monte Carlo checks even if configured.
        #[arg(long)]
        no_mc: bool,
    },
    /// Monte Carlo estimate of v(x0) and one reconstructed sample path.
    Simulate(Common),
    /// Solve across values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of delta, alpha, sharpe_ratio, rho, gamma.
        #[arg(long)]
        param: String,
        /// Comma-separated list or `start:end:step`.
        #[arg(long)]
        values: String,
    },
}

struct Failure(i32, String);

type Outcome = Result<(), Failure>;

fn usage(msg: impl ToString) -> Failure {
    Failure(EXIT_USAGE, msg.to_string())
}

fn solver(msg: impl ToString) -> Failure {
    Failure(EXIT_SOLVER, msg.to_string())
}

/// Parses arguments (first item is the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Solve(c) => load(&c).and_then(|(cfg, out)| cmd_solve(&cfg, &out)),
        Command::Verify { common, no_mc } => load(&common).and_then(|(cfg, out)| cmd_verify(&cfg, &out, no_mc)),
        Command::Simulate(c) => load(&c).and_then(|(cfg, out)| cmd_simulate(&cfg, &out)),
        Command::Sweep { common, param, values } => {
            load(&common).and_then(|(cfg, out)| cmd_sweep(&cfg, &out, &param, &values))
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn load(c: &Common) -> Result<(RunConfig, PathBuf), Failure> {
    let overrides = c.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>().map_err(usage)?;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path, &overrides),
        None => RunConfig::parse(&RunConfig::reference().to_text(), &overrides),
    }
    .map_err(usage)?;
    if let (Some(seed), Some(sim)) = (c.seed, cfg.sim.as_mut()) {
        sim.seed = seed;
    }
    if let Some(n) = c.threads {
        // Only the first call can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = c.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| "out".into());
    Ok((cfg, out))
}

fn write(out: &Path, files: &[(&str, String)]) -> Outcome {
    output::write_all(out, files).map_err(|e| usage(format!("cannot write to {}: {e}", out.display())))
}

fn solve(cfg: &RunConfig) -> Result<PolicySolution, Failure> {
    crate::solve(&cfg.params, &cfg.fbp).map_err(solver)
}

fn params_summary(s: &mut Summary, cfg: &RunConfig) {
    for key in crate::params::PARAM_KEYS {
        s.num(key, cfg.params.get(key).unwrap());
    }
}

fn cmd_solve(cfg: &RunConfig, out: &Path) -> Outcome {
    let t0 = Instant::now();
    let policy = solve(cfg)?;
    let dual = &policy.dual;
    let ys = cfg.y_grid.points(dual.y_min(), 100.0 * dual.y_star());
    let xs = cfg
        .x_grid
        .points(policy.x_floor() * (1.0 + 1e-4), policy.x_max.min(50.0));
    let dual_max = ys
        .iter()
        .map(|&y| dual.dual_residual(y).map(f64::abs).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let hjb_max = regime_samples(&policy, 100)
        .into_iter()
        .map(|x| policy.hjb_residual(x).map(f64::abs).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let wall = t0.elapsed().as_secs_f64();

    let mut s = Summary::default();
    params_summary(&mut s, cfg);
    s.num("y_star", dual.y_star());
    s.num("x_star", policy.x_star);
    s.num("x_floor", policy.x_floor());
    s.num("x_max", policy.x_max);
    s.num("y_min", dual.y_min());
    s.num("beta_hat", policy.beta_hat);
    match policy.crossing_point() {
        Ok((x0, c0)) => {
            s.num("x0", x0);
            s.num("c0", c0);
        }
        Err(e) => {
            s.push("x0", "none");
            s.push("c0", "none");
            s.push("crossing_error", e);
        }
    }
    s.num("max_hjb_residual", hjb_max);
    s.num("max_dual_residual", dual_max);
    s.push("bisection_iterations", dual.fbp.bisection_iterations);
    s.push("segments", dual.fbp.segments);
    s.num("eta_lo", dual.fbp.eta_bracket.0);
    s.num("eta_hi", dual.fbp.eta_bracket.1);
    s.push("wall_time_s", format!("{wall:.6}"));

    write(
        out,
        &[
            ("phi_H.csv", output::phi_h_csv(&dual.fbp)),
            ("bracket_history.csv", output::bracket_csv(&dual.fbp)),
            ("dual.csv", output::dual_csv(dual, &ys)),
            ("policy.csv", output::policy_csv(&policy, &xs)),
            ("summary.txt", s.render()),
        ],
    )?;
    println!(
        "y_star={:.10} x_star={:.10} beta_hat={:.6} max_hjb_residual={hjb_max:.3e} ({wall:.3}s)",
        dual.y_star(),
        policy.x_star,
        policy.beta_hat
    );
    Ok(())
}

fn cmd_verify(cfg: &RunConfig, out: &Path, no_mc: bool) -> Outcome {
    let policy = solve(cfg)?;
    let opts = VerifyOptions {
        mc: if no_mc { None } else { cfg.sim },
        ..VerifyOptions::default()
    };
    if let Some(sim) = &opts.mc {
        sim.validate(&policy).map_err(usage)?;
    }
    let report = verify(&policy, &opts);
    let mut s = Summary::default();
    params_summary(&mut s, cfg);
    for c in &report.checks {
        s.num(&format!("{}.measured", c.name), c.measured);
        s.push(&format!("{}.status", c.name), if c.passed { "pass" } else { "fail" });
    }
    s.push("status", if report.passed() { "pass" } else { "fail" });
    write(out, &[("verify.csv", output::verify_csv(&report)), ("summary.txt", s.render())])?;
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<30} {:.3e} (limit {:.1e})", c.name, c.measured, c.threshold);
    }
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<_> = report.failures().map(|c| c.name).collect();
        Err(Failure(EXIT_VERIFY, format!("failed checks: {}", names.join(", "))))
    }
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Outcome {
    let sim_cfg = cfg.sim.ok_or_else(|| usage("simulate needs sim.dt, sim.horizon_T, sim.n_paths, sim.seed and sim.x0"))?;
    if !(cfg.w0 > 0.0) {
        return Err(usage(format!("sim.w0 must be positive (got {})", cfg.w0)));
    }
    let policy = solve(cfg)?;
    sim_cfg.validate(&policy).map_err(usage)?;
    let t0 = Instant::now();
    let sim = Simulator::new(&policy);
    let est = sim.mc_value(&sim_cfg).map_err(usage)?;
    let wall = t0.elapsed().as_secs_f64();
    let path = sim.simulate_path(&sim_cfg, 0).map_err(usage)?;
    let (w, z) = sim.reconstruct_wealth(&path, cfg.w0);
    let rows = (0..path.x_values.len()).step_by(cfg.path_stride).map(|k| {
        let x = path.x_values[k];
        let (c, theta) = sim.controls_at(x);
        [path.times[k], x, c, theta, w[k], z[k]]
    });
    let paths = output::paths_csv(rows);

    let v = policy.value(sim_cfg.x0).map_err(usage)?;
    let err = (est.mean - v).abs();
    let tol = est.tolerance(v, sim_cfg.dt);
    let ok = err <= tol;
    let mut s = Summary::default();
    s.num("mc_x0", sim_cfg.x0);
    s.num("mc_mean", est.mean);
    match est.stderr {
        Some(se) => s.num("mc_stderr", se),
        None => s.push("mc_stderr", "n/a"),
    }
    s.num("mc_tail_bound", est.tail_bound);
    s.num("mc_v_x0", v);
    s.num("mc_abs_error", err);
    s.num("mc_tolerance", tol);
    s.push("mc_n_paths", est.n_paths);
    s.push("mc_clamp_count", est.clamp_count);
    s.push("mc_cap_count", est.cap_count);
    s.push("mc_capped_flag", est.cap_count > 0);
    s.push("mc_wall_time_s", format!("{wall:.3}"));
    s.push("mc_status", if ok { "pass" } else { "fail" });

    // The estimate is appended to any summary already in the run directory.
    let prior = std::fs::read_to_string(out.join("summary.txt")).unwrap_or_default();
    write(out, &[("paths.csv", paths), ("summary.txt", prior + &s.render())])?;
    let se = est.stderr.map_or("n/a".to_string(), |s| format!("{s:.3e}"));
    println!(
        "mean={:.8} stderr={se} v(x0)={v:.8} |diff|={err:.3e} tol={tol:.3e} caps={} ({wall:.1}s)",
        est.mean, est.cap_count
    );
    if ok {
        Ok(())
    } else {
        Err(Failure(EXIT_VERIFY, format!("Monte Carlo mean misses v(x0) by {err:.3e} > {tol:.3e}")))
    }
}

/// `a,b,c` or `start:end:step`.
pub fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    let bad = || format!("cannot parse sweep values `{s}`");
    if let [a, b, step] = s.split(':').collect::<Vec<_>>()[..] {
        let p = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let (a, b, step) = (p(a)?, p(b)?, p(step)?);
        if !(step > 0.0 && b >= a) {
            return Err(bad());
        }
        return Ok(stepped(a, b, step));
    }
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect()
}

fn cmd_sweep(cfg: &RunConfig, out: &Path, param: &str, values: &str) -> Outcome {
    let spec = SweepSpec {
        parameter: param.to_string(),
        values: parse_values(values).map_err(usage)?,
        base: cfg.params,
        fbp: cfg.fbp,
    };
    spec.validate().map_err(usage)?;
    let rows = run_sweep(&spec);
    write(out, &[("sweep.csv", output::sweep_csv(param, &rows))])?;
    for r in &rows {
        match &r.result {
            Ok(p) => println!("{param}={:<8} x_star={:.6} beta_hat={:.4}", r.value, p.x_star, p.beta_hat),
            Err(e) => println!("{param}={:<8} error: {e}", r.value),
        }
    }
    Ok(())
}

/// Entry point for the binary.
pub fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(run(std::env::args_os()) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert_eq!(parse_values("0.1:0.3:0.1").unwrap().len(), 3);
        assert!(parse_values("a,b").is_err());
        assert!(parse_values("1:0:0.1").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["habitform"]), EXIT_USAGE);
        assert_eq!(run(["habitform", "solve", "--set", "nokey"]), EXIT_USAGE);
        assert_eq!(run(["habitform", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["habitform", "--help"]), EXIT_OK);
    }
}
