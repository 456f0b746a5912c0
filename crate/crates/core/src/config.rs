//! Run configuration: a flat `key = value` file plus overrides.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::adjoint::JumpFormula;
use crate::error::{Error, Result};
use crate::forward::{IntegratorOptions, NewtonOptions};
use crate::nlp::SqpOptions;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    /// Number of control intervals; the problem default when `None`.
    pub n_controls: Option<usize>,
    /// Number of base integration steps; the problem default when `None`.
    pub steps: Option<usize>,
    pub newton_tol: f64,
    pub surface_tol: f64,
    pub root_tol: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub jump: JumpFormula,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "mass-spring".into(),
            n_controls: None,
            steps: None,
            newton_tol: 1e-12,
            surface_tol: 1e-9,
            root_tol: 1e-12,
            eps: 1e-6,
            max_iter: 200,
            jump: JumpFormula::Discrete,
            out: PathBuf::from("out"),
            seed: 0,
            threads: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl RunConfig {
    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "problem" => self.problem = value.to_string(),
            "n_controls" => self.n_controls = Some(parse(key, value)?),
            "steps" => self.steps = Some(parse(key, value)?),
            "newton_tol" => self.newton_tol = parse(key, value)?,
            "surface_tol" => self.surface_tol = parse(key, value)?,
            "root_tol" => self.root_tol = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "jump" => self.jump = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("newton_tol", self.newton_tol),
            ("surface_tol", self.surface_tol),
            ("root_tol", self.root_tol),
            ("eps", self.eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let (Some(n), Some(k)) = (self.n_controls, self.steps) {
            if k < n {
                return Err(Error::Config(format!("steps ({k}) must be at least n_controls ({n})")));
            }
        }
        if self.n_controls == Some(0) || self.steps == Some(0) || self.threads == Some(0) {
            return Err(Error::Config("counts must be positive".into()));
        }
        Ok(())
    }

    pub fn integrator_options(&self, default_steps: usize) -> IntegratorOptions {
        IntegratorOptions {
            steps: self.steps.unwrap_or(default_steps),
            newton: NewtonOptions {
                tol: self.newton_tol,
                ..NewtonOptions::default()
            },
            surface_tol: self.surface_tol,
            root_tol: self.root_tol,
            ..IntegratorOptions::default()
        }
    }

    pub fn sqp_options(&self) -> SqpOptions {
        SqpOptions {
            eps: self.eps,
            max_iter: self.max_iter,
            ..SqpOptions::default()
        }
    }

    /// The configuration in the same `key = value` form it is read from.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<usize>| v.map_or("default".to_string(), |v| v.to_string());
        let _ = writeln!(s, "problem = {}", self.problem);
        let _ = writeln!(s, "n_controls = {}", opt(self.n_controls));
        let _ = writeln!(s, "steps = {}", opt(self.steps));
        let _ = writeln!(s, "newton_tol = {:e}", self.newton_tol);
        let _ = writeln!(s, "surface_tol = {:e}", self.surface_tol);
        let _ = writeln!(s, "root_tol = {:e}", self.root_tol);
        let _ = writeln!(s, "eps = {:e}", self.eps);
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        let _ = writeln!(s, "jump = {}", self.jump);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "threads = {}", opt(self.threads));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = "# run\nproblem = race-car\nsteps = 600\n\nn_controls=10\njump = simple\neps = 1e-7\n";
        let cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.problem, "race-car");
        assert_eq!(cfg.steps, Some(600));
        assert_eq!(cfg.jump, JumpFormula::Simple);
        assert_eq!(cfg.eps, 1e-7);
        let again: String = cfg
            .to_text()
            .lines()
            .filter(|l| !l.ends_with("default"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(RunConfig::from_text(&again).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::from_text("steps 10"), Err(Error::Format(_))));
        assert!(matches!(RunConfig::from_text("colour = red"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("steps = ten"), Err(Error::Config(_))));
        let cfg = RunConfig::from_text("newton_tol = -1").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_text("steps = 5\nn_controls = 10").unwrap();
        assert!(cfg.validate().is_err());
    }
}
