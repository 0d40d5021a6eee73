//! Project files and report formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::model::{Block, Coord, DsmSet, FeedbackDistribution, ProjectState};
use crate::netgen::TaskRow;
use crate::optimize::{AllocationResult, CostModel, Diagnostics};
use crate::simulate::{Completion, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
}

/// On-disk project description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectFile {
    pub m: usize,
    pub omega_l: Vec<Vec<f64>>,
    pub omega_s: Vec<Vec<f64>>,
    pub omega_ls: Vec<Vec<f64>>,
    pub omega_sl: Vec<Vec<f64>>,
    /// Feedback interval (steps) to probability.
    pub interval_pmf: BTreeMap<usize, f64>,
    pub epsilon: f64,
    pub cost_exponent_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

/// A validated project.
#[derive(Clone, Debug)]
pub struct Project {
    pub dsms: DsmSet<f64>,
    pub dist: FeedbackDistribution<f64>,
    pub costs: CostModel,
    /// Given initial state, or one unit of work on every local and system task.
    pub initial_state: ProjectState<f64>,
    pub gamma: Option<f64>,
}

fn violation(field: &str, rule: &str) -> IoError {
    IoError::InvariantViolation {
        field: field.into(),
        rule: rule.into(),
    }
}

impl ProjectFile {
    pub fn from_parts(dsms: &DsmSet<f64>, dist: &FeedbackDistribution<f64>, epsilon: f64, cost_exponent_p: f64) -> Self {
        let rows = |b: Block| dsms.omega(b).to_rows();
        Self {
            m: dsms.m(),
            omega_l: rows(Block::L),
            omega_s: rows(Block::S),
            omega_ls: rows(Block::LS),
            omega_sl: rows(Block::SL),
            interval_pmf: dist.entries().iter().copied().collect(),
            epsilon,
            cost_exponent_p,
            initial_state: None,
            gamma: None,
        }
    }

    /// Checks every domain invariant.
    pub fn validate(&self) -> Result<Project, IoError> {
        if self.m == 0 {
            return Err(violation("m", "must be at least 1"));
        }
        for (name, rows) in [
            ("omega_l", &self.omega_l),
            ("omega_s", &self.omega_s),
            ("omega_ls", &self.omega_ls),
            ("omega_sl", &self.omega_sl),
        ] {
            if rows.len() != self.m {
                return Err(violation(name, &format!("must have m = {} rows", self.m)));
            }
            if let Some(i) = rows.iter().position(|r| r.len() != self.m) {
                return Err(violation(&format!("{name}[{i}]"), &format!("must have m = {} entries", self.m)));
            }
        }
        let dsms = DsmSet::from_rows(&self.omega_l, &self.omega_s, &self.omega_ls, &self.omega_sl)?;
        let dist = FeedbackDistribution::new(self.interval_pmf.iter().map(|(&h, &p)| (h, p)))?;
        let costs = CostModel::power_law(&dsms, self.epsilon, self.cost_exponent_p)?;
        let initial_state = match &self.initial_state {
            None => ProjectState::unit(self.m),
            Some(s) => {
                for (name, v) in [("L", &s.l), ("S", &s.s), ("H", &s.h)] {
                    if v.len() != self.m {
                        return Err(violation(&format!("initial_state.{name}"), &format!("must have m = {} entries", self.m)));
                    }
                }
                ProjectState::new(s.l.clone(), s.s.clone(), s.h.clone())?
            }
        };
        if let Some(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(violation("gamma", "must be finite and nonnegative"));
            }
        }
        Ok(Project {
            dsms,
            dist,
            costs,
            initial_state,
            gamma: self.gamma,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

/// Parses and validates project JSON; `path` only labels errors.
pub fn parse_project_str(text: &str, path: &Path) -> Result<(ProjectFile, Project), IoError> {
    let file: ProjectFile = serde_json::from_str(text).map_err(|e| IoError::MalformedFile {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let project = file.validate()?;
    Ok((file, project))
}

pub fn parse_project(path: &Path) -> Result<(ProjectFile, Project), IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_project_str(&text, path)
}

/// Directory receiving report files; existing files are replaced only when
/// `overwrite` is set.
#[derive(Clone, Debug)]
pub struct OutputDir {
    root: PathBuf,
    overwrite: bool,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>, overwrite: bool) -> Result<Self, IoError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| IoError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(Self { root, overwrite })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Refuses up front if any of `names` would be overwritten.
    pub fn check(&self, names: &[&str]) -> Result<(), IoError> {
        if self.overwrite {
            return Ok(());
        }
        match names.iter().map(|n| self.root.join(n)).find(|p| p.exists()) {
            Some(p) => Err(IoError::WouldOverwrite(p)),
            None => Ok(()),
        }
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, IoError> {
        self.check(&[name])?;
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|source| IoError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub matrix: Block,
    /// One-based.
    pub i: usize,
    /// One-based.
    pub j: usize,
    pub omega: f64,
    pub psi: f64,
    pub spend: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub records: Vec<AllocationRecord>,
    pub rho_before: f64,
    pub rho_after: f64,
    pub total_cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: Diagnostics,
}

impl AllocationReport {
    pub fn new(dsms: &DsmSet<f64>, r: &AllocationResult) -> Self {
        let records = r
            .psi
            .iter()
            .map(|(&c, &psi)| AllocationRecord {
                matrix: c.block,
                i: c.i + 1,
                j: c.j + 1,
                omega: dsms.value(c),
                psi,
                spend: r.spend.get(&c).copied().unwrap_or(0.0),
            })
            .collect();
        Self {
            records,
            rho_before: r.rho_before,
            rho_after: r.rho_after,
            total_cost: r.total_cost,
            converged: r.converged,
            iterations: r.iterations,
            diagnostics: r.diagnostics.clone(),
        }
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn allocation_json(dsms: &DsmSet<f64>, r: &AllocationResult) -> String {
    to_json_pretty(&AllocationReport::new(dsms, r))
}

/// `k, L1..Lm, S1..Sm, H1..Hm, total_unfinished`
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let m = traj.states.first().map_or(0, ProjectState::m);
    let mut out = String::from("k");
    for team in ["L", "S", "H"] {
        for t in 1..=m {
            let _ = write!(out, ",{team}{t}");
        }
    }
    out.push_str(",total_unfinished\n");
    for (k, x) in traj.states.iter().enumerate() {
        let _ = write!(out, "{k}");
        for v in x.l.iter().chain(&x.s).chain(&x.h) {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", x.unfinished());
    }
    out
}

pub fn histogram_csv(hist: &BTreeMap<Completion, usize>) -> String {
    let mut out = String::from("completion_time,count\n");
    for (t, n) in hist {
        match t {
            Completion::At(k) => {
                let _ = writeln!(out, "{k},{n}");
            }
            Completion::NotCompleted => {
                let _ = writeln!(out, "not_completed,{n}");
            }
        }
    }
    out
}

pub fn centrality_investment_csv(rows: &[TaskRow]) -> String {
    let mut out = String::from("task_id,team,betweenness,pagerank,hub,investment\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.task_id, r.team, r.betweenness, r.pagerank, r.hub, r.investment
        );
    }
    out
}

/// One row per budget: both strategies' index and spend.
pub fn sweep_csv(points: &[(f64, AllocationResult, Option<AllocationResult>)]) -> String {
    let mut out = String::from("budget,rho_optimized,cost_optimized,converged,rho_baseline,cost_baseline\n");
    for (b, opt, base) in points {
        let (rb, cb) = base
            .as_ref()
            .map_or((String::new(), String::new()), |r| (r.rho_after.to_string(), r.total_cost.to_string()));
        let _ = writeln!(out, "{b},{},{},{},{rb},{cb}", opt.rho_after, opt.total_cost, opt.converged);
    }
    out
}

/// Optimized spend per coordinate (columns) for each budget (rows).
pub fn sweep_spend_csv(points: &[(f64, AllocationResult, Option<AllocationResult>)]) -> String {
    let coords: Vec<Coord> = points.first().map(|p| p.1.psi.keys().copied().collect()).unwrap_or_default();
    let mut out = String::from("budget");
    for c in &coords {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (b, opt, _) in points {
        let _ = write!(out, "{b}");
        for c in &coords {
            let _ = write!(out, ",{}", opt.spend.get(c).copied().unwrap_or(0.0));
        }
        out.push('\n');
    }
    out
}
