//! Monte Carlo check of the chance constraints of a fixed schedule.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{GmmSampler, SampleMatrix};
use crate::formulation::{wind_sensitivities, UcSchedule};
use crate::gmm::Gmm;
use crate::grid::{Case, PtdfMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    ReserveUp,
    ReserveDown,
    LineFwd,
    LineRev,
}

impl ConstraintKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::ReserveUp => "reserve_up",
            ConstraintKind::ReserveDown => "reserve_down",
            ConstraintKind::LineFwd => "line_fwd",
            ConstraintKind::LineRev => "line_rev",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "reserve_up" => ConstraintKind::ReserveUp,
            "reserve_down" => ConstraintKind::ReserveDown,
            "line_fwd" => ConstraintKind::LineFwd,
            "line_rev" => ConstraintKind::LineRev,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEstimate {
    pub t: usize,
    pub constraint: ConstraintKind,
    /// Branch label for line constraints, empty otherwise.
    pub branch: String,
    /// Fraction of samples violating the constraint.
    pub estimate: f64,
    /// `1.96·√(p(1−p)/N)`.
    pub ci_halfwidth: f64,
    /// Allowed risk.
    pub alpha: f64,
}

impl ViolationEstimate {
    /// Whether the estimate exceeds `alpha + k·ci_halfwidth`.
    pub fn exceeds(&self, k: f64) -> bool {
        self.estimate > self.alpha + k * self.ci_halfwidth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_samples: usize,
    pub rows: Vec<ViolationEstimate>,
}

impl ValidationReport {
    /// Rows whose estimate is above `alpha + k·CI`.
    pub fn exceeding(&self, k: f64) -> Vec<&ViolationEstimate> {
        self.rows.iter().filter(|r| r.exceeds(k)).collect()
    }

    pub fn worst_margin(&self) -> Option<&ViolationEstimate> {
        self.rows
            .iter()
            .max_by(|a, b| (a.estimate - a.alpha).total_cmp(&(b.estimate - b.alpha)))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "constraint", "branch", "estimate", "ci_halfwidth", "alpha"])?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.constraint.as_str().to_string(),
                r.branch.clone(),
                r.estimate.to_string(),
                r.ci_halfwidth.to_string(),
                r.alpha.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, n_samples: usize) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let num = |k: usize| -> Result<f64> {
                field(k)
                    .parse()
                    .map_err(|_| Error::input(format!("bad number '{}' in validation CSV", field(k))))
            };
            rows.push(ViolationEstimate {
                t: field(0)
                    .parse()
                    .map_err(|_| Error::input(format!("bad period '{}' in validation CSV", field(0))))?,
                constraint: ConstraintKind::parse(field(1))
                    .ok_or_else(|| Error::input(format!("unknown constraint '{}'", field(1))))?,
                branch: field(2).to_string(),
                estimate: num(3)?,
                ci_halfwidth: num(4)?,
                alpha: num(5)?,
            });
        }
        Ok(ValidationReport { n_samples, rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Samples per period.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            n_samples: 1_000_000,
            seed: 0,
        }
    }
}

/// Everything about one period that the violation test needs.
struct PeriodLimits {
    /// Violation of up reserve iff `Σe < up_threshold`.
    up_threshold: f64,
    /// Violation of down reserve iff `Σe > down_threshold`.
    down_threshold: f64,
    flows: Vec<f64>,
}

struct Counter<'a> {
    sens: &'a [Vec<f64>],
    caps: Vec<f64>,
    limits: PeriodLimits,
    up: u64,
    down: u64,
    fwd: Vec<u64>,
    rev: Vec<u64>,
}

impl<'a> Counter<'a> {
    fn new(sens: &'a [Vec<f64>], caps: Vec<f64>, limits: PeriodLimits) -> Self {
        let nb = sens.len();
        Counter {
            sens,
            caps,
            limits,
            up: 0,
            down: 0,
            fwd: vec![0; nb],
            rev: vec![0; nb],
        }
    }

    fn add(&mut self, e: &[f64]) {
        let total: f64 = e.iter().sum();
        if total < self.limits.up_threshold {
            self.up += 1;
        }
        if total > self.limits.down_threshold {
            self.down += 1;
        }
        for (l, s) in self.sens.iter().enumerate() {
            let flow = self.limits.flows[l] + s.iter().zip(e).map(|(a, b)| a * b).sum::<f64>();
            if flow > self.caps[l] {
                self.fwd[l] += 1;
            }
            if flow < -self.caps[l] {
                self.rev[l] += 1;
            }
        }
    }
}

fn period_limits(case: &Case, schedule: &UcSchedule, flows: &[Vec<f64>], t: usize) -> PeriodLimits {
    let r = &case.risk;
    let up_need = schedule.total_reserve_up(t);
    let down_need = schedule.total_reserve_down(t);
    PeriodLimits {
        // ΣUR < UR_extra − Σe  ⇔  Σe < UR_extra − ΣUR
        up_threshold: r.reserve_up_extra - up_need,
        // ΣDR < DR_extra + Σe  ⇔  Σe > ΣDR − DR_extra
        down_threshold: down_need - r.reserve_down_extra,
        flows: flows[t].clone(),
    }
}

fn estimates(case: &Case, t: usize, n: usize, c: &Counter) -> Vec<ViolationEstimate> {
    let r = &case.risk;
    let est = |count: u64, constraint, branch: String, alpha: f64| {
        let p = count as f64 / n as f64;
        ViolationEstimate {
            t,
            constraint,
            branch,
            estimate: p,
            ci_halfwidth: 1.96 * (p * (1.0 - p) / n as f64).sqrt(),
            alpha,
        }
    };
    let mut rows = vec![
        est(c.up, ConstraintKind::ReserveUp, String::new(), r.alpha_reserve_up),
        est(c.down, ConstraintKind::ReserveDown, String::new(), r.alpha_reserve_down),
    ];
    for (l, br) in case.network.branches.iter().enumerate() {
        let (ap, am) = r.line_alphas(br);
        rows.push(est(c.fwd[l], ConstraintKind::LineFwd, br.label(), ap));
        rows.push(est(c.rev[l], ConstraintKind::LineRev, br.label(), am));
    }
    rows
}

fn check_inputs(case: &Case, ptdf: &PtdfMatrix, schedule: &UcSchedule) -> Result<()> {
    if schedule.horizon != case.horizon
        || schedule.generators.len() != case.n_gens()
        || schedule.wind_farms.len() != case.n_wind()
    {
        return Err(Error::input("schedule does not match the case dimensions"));
    }
    if ptdf.n_branches() != case.network.n_branches() {
        return Err(Error::input("PTDF matrix does not match the network"));
    }
    Ok(())
}

/// Samples each period's forecast errors from its mixture and counts how
/// often each chance constraint of `schedule` fails. Period `t` draws from
/// its own ChaCha stream, so results do not depend on thread scheduling.
pub fn validate_schedule(
    case: &Case,
    ptdf: &PtdfMatrix,
    schedule: &UcSchedule,
    gmms: &[Gmm],
    cfg: &ValidationConfig,
) -> Result<ValidationReport> {
    check_inputs(case, ptdf, schedule)?;
    case.check_gmms(gmms)?;
    if cfg.n_samples == 0 {
        return Err(Error::input("n_samples must be positive"));
    }
    let sens = wind_sensitivities(case, ptdf);
    let flows = schedule.deterministic_flows(case, ptdf);
    let caps: Vec<f64> = case.network.branches.iter().map(|b| b.capacity).collect();
    let per_t: Vec<Result<Vec<ViolationEstimate>>> = (0..case.horizon)
        .into_par_iter()
        .map(|t| {
            let sampler = GmmSampler::new(&gmms[t])?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let d = sampler.dim();
            let (mut scratch, mut e) = (vec![0.0; d], vec![0.0; d]);
            let mut counter = Counter::new(&sens, caps.clone(), period_limits(case, schedule, &flows, t));
            for _ in 0..cfg.n_samples {
                sampler.sample_into(&mut rng, &mut scratch, &mut e);
                counter.add(&e);
            }
            Ok(estimates(case, t, cfg.n_samples, &counter))
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_t {
        rows.extend(r?);
    }
    Ok(ValidationReport {
        n_samples: cfg.n_samples,
        rows,
    })
}

/// Same counts over caller-provided error samples, one matrix per period.
pub fn validate_with_samples(
    case: &Case,
    ptdf: &PtdfMatrix,
    schedule: &UcSchedule,
    samples: &[SampleMatrix],
) -> Result<ValidationReport> {
    check_inputs(case, ptdf, schedule)?;
    if samples.len() != case.horizon {
        return Err(Error::input(format!(
            "{} sample sets for a horizon of {}",
            samples.len(),
            case.horizon
        )));
    }
    let n = samples[0].rows();
    if samples.iter().any(|s| s.rows() != n || s.cols() != case.n_wind()) || n == 0 {
        return Err(Error::input("sample sets must be non-empty, equally sized and match the wind farm count"));
    }
    let sens = wind_sensitivities(case, ptdf);
    let flows = schedule.deterministic_flows(case, ptdf);
    let caps: Vec<f64> = case.network.branches.iter().map(|b| b.capacity).collect();
    let mut rows = Vec::new();
    for (t, s) in samples.iter().enumerate() {
        let mut counter = Counter::new(&sens, caps.clone(), period_limits(case, schedule, &flows, t));
        for i in 0..n {
            counter.add(s.row(i));
        }
        rows.extend(estimates(case, t, n, &counter));
    }
    Ok(ValidationReport { n_samples: n, rows })
}
