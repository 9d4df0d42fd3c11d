mod calibrate;
mod diagnose;
mod examples;
mod tables;
mod wasserstein;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use clipbias::problems::{make_mixture_problem, MixtureSpec};
use clipbias::{make_example1, make_example2, EmpiricalJson, QuadraticProblem};
use serde::Serialize;

use crate::config::Settings;
use crate::output::{ManifestEntry, RunDir};
use crate::CliResult;

pub use tables::{table1_cell, table1_grid, table2_row, TABLE1_REFERENCE, TABLE2_REFERENCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandName {
    Examples,
    Table1,
    Table2,
    Diagnose,
    Calibrate,
    Wasserstein,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Examples => "examples",
            CommandName::Table1 => "table1",
            CommandName::Table2 => "table2",
            CommandName::Diagnose => "diagnose",
            CommandName::Calibrate => "calibrate",
            CommandName::Wasserstein => "wasserstein",
        }
    }
}

/// One embedded assertion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub checks: Vec<Check>,
    pub manifest: Vec<ManifestEntry>,
}

impl Outcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs one subcommand with already-merged settings.
pub fn run(cmd: CommandName, settings: &Settings, out: &Path) -> CliResult<Outcome> {
    let mut dir = RunDir::create(out)?;
    let (config, checks) = match cmd {
        CommandName::Examples => examples::run(settings, &mut dir)?,
        CommandName::Table1 => tables::run_table1(settings, &mut dir)?,
        CommandName::Table2 => tables::run_table2(settings, &mut dir)?,
        CommandName::Diagnose => diagnose::run(settings, &mut dir)?,
        CommandName::Calibrate => calibrate::run(settings, &mut dir)?,
        CommandName::Wasserstein => wasserstein::run(settings, &mut dir)?,
    };
    let out_dir = dir.path().to_path_buf();
    let manifest = dir.finish(cmd.as_str(), &config)?;
    Ok(Outcome {
        out_dir,
        checks,
        manifest,
    })
}

/// Data files plus a `summary.json` holding the effective config and checks.
fn write_summary<T: Serialize>(dir: &mut RunDir, config: &T, body: serde_json::Value, checks: &[Check]) -> CliResult<serde_json::Value> {
    let config = serde_json::to_value(config)?;
    dir.write_json(
        "summary.json",
        &serde_json::json!({ "config": config, "results": body, "checks": checks }),
    )?;
    Ok(config)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq)]
enum ProblemChoice {
    Example1,
    Example2,
    Synthetic,
    File(PathBuf),
}

impl ProblemChoice {
    fn parse(s: &str) -> Self {
        match s {
            "1" | "ex1" | "example1" => ProblemChoice::Example1,
            "2" | "ex2" | "example2" => ProblemChoice::Example2,
            "synthetic" | "mixture" => ProblemChoice::Synthetic,
            path => ProblemChoice::File(PathBuf::from(path)),
        }
    }

    fn build(&self, data_seed: u64) -> CliResult<QuadraticProblem> {
        Ok(match self {
            ProblemChoice::Example1 => make_example1(),
            ProblemChoice::Example2 => make_example2(),
            ProblemChoice::Synthetic => make_mixture_problem(&MixtureSpec::default(), data_seed)?,
            ProblemChoice::File(path) => {
                if !path.exists() {
                    return Err(format!("unknown problem '{}': expected 1, 2, synthetic or a JSON file", path.display()).into());
                }
                let text = std::fs::read_to_string(path)?;
                let doc: EmpiricalJson = serde_json::from_str(&text)?;
                QuadraticProblem::from_json(doc)?
            }
        })
    }

    fn is_synthetic_scale(&self) -> bool {
        !matches!(self, ProblemChoice::Example1 | ProblemChoice::Example2)
    }

    /// Example 1 starts at its optimum, Example 2 inside its dead zone.
    fn default_x0(&self) -> f64 {
        match self {
            ProblemChoice::Example1 => 1.0,
            ProblemChoice::Example2 => 1.5,
            _ => 0.0,
        }
    }
}

fn clip_threshold(c: f64) -> CliResult<clipbias::ClipThreshold> {
    Ok(clipbias::ClipThreshold::new(c)?)
}

fn batch_of(m: usize) -> clipbias::Batch {
    if m == 0 {
        clipbias::Batch::Full
    } else {
        clipbias::Batch::Sampled(m)
    }
}
