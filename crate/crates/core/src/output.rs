//! CSV and summary text. Everything is rendered to strings first so that a
//! failing command leaves no partial files behind.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::dual::DualSolution;
use crate::fbp::FbpSolution;
use crate::policy::PolicySolution;
use crate::sweep::SweepRow;
use crate::verify::VerifyReport;

/// Full double precision (17 significant digits).
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn table<'a>(header: &str, rows: impl Iterator<Item = Vec<String>> + 'a) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out += &r.join(",");
        out.push('\n');
    }
    out
}

pub fn phi_h_csv(fbp: &FbpSolution) -> String {
    table("y,phi,H", fbp.increasing().map(|(y, phi, h)| vec![num(y), num(phi), num(h)]))
}

pub fn bracket_csv(fbp: &FbpSolution) -> String {
    table(
        "eta,exit_kind,exit_y",
        fbp.history
            .iter()
            .map(|b| vec![num(b.eta), b.exit.label().to_string(), num(b.exit_y)]),
    )
}

/// Rows whose evaluation fails (outside the solved range) are skipped.
pub fn dual_csv(dual: &DualSolution, ys: &[f64]) -> String {
    table(
        "y,u,u_prime,u_second,residual",
        ys.iter().filter_map(|&y| {
            Some(vec![
                num(y),
                num(dual.u(y).ok()?),
                num(dual.u_prime(y).ok()?),
                num(dual.u_second(y).ok()?),
                num(dual.dual_residual(y).ok()?),
            ])
        }),
    )
}

pub fn policy_csv(policy: &PolicySolution, xs: &[f64]) -> String {
    table(
        "x,c_star,theta_star,v,ce",
        xs.iter().filter_map(|&x| {
            Some(vec![
                num(x),
                num(policy.c_star(x).ok()?),
                num(policy.theta_star(x).ok()?),
                num(policy.value(x).ok()?),
                num(policy.ce(x).ok()?),
            ])
        }),
    )
}

pub fn sweep_csv(param: &str, rows: &[SweepRow]) -> String {
    table(
        "param,value,y_star,x_star,beta_hat,max_residual,status",
        rows.iter().map(|r| {
            let mut v = vec![param.to_string(), num(r.value)];
            match &r.result {
                Ok(p) => {
                    v.extend([num(p.y_star), num(p.x_star), num(p.beta_hat), num(p.max_residual)]);
                    v.push("ok".into());
                }
                Err(e) => {
                    v.extend(std::iter::repeat_n(String::new(), 4));
                    // Keep the row parseable.
                    v.push(format!("error: {}", e.replace([',', '\n'], ";")));
                }
            }
            v
        }),
    )
}

/// Columns t, x, c, theta, w, z.
pub fn paths_csv(rows: impl Iterator<Item = [f64; 6]>) -> String {
    table("t,x,c,theta,w,z", rows.map(|r| r.iter().map(|&v| num(v)).collect()))
}

pub fn verify_csv(report: &VerifyReport) -> String {
    table(
        "check,measured,threshold,status",
        report.checks.iter().map(|c| {
            vec![
                c.name.to_string(),
                num(c.measured),
                num(c.threshold),
                if c.passed { "pass" } else { "fail" }.to_string(),
            ]
        }),
    )
}

/// Ordered `key=value` lines.
#[derive(Debug, Clone, Default)]
pub struct Summary(Vec<(String, String)>);

impl Summary {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.push(key, num(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

/// Creates `dir` and writes every (file name, contents) pair.
pub fn write_all(dir: &Path, files: &[(&str, String)]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in files {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}
