//! Power-system data model, case-file ingestion and DC PTDFs.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{em_fit, nataf_sample, CorrelationSpec, EmConfig, MarginalHistogram};
use crate::gmm::{read_gmm_file, Gmm};

pub type BusId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    #[serde(default)]
    pub name: Option<String>,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Per-unit series reactance.
    pub reactance: f64,
    /// Thermal limit in MW, same in both directions.
    pub capacity: f64,
    /// Overrides of the case-wide line risk levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_minus: Option<f64>,
}

impl Branch {
    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.from_bus, self.to_bus))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<BusId>,
    pub slack_bus: BusId,
    pub branches: Vec<Branch>,
}

impl Network {
    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| *b == id)
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Checks every structural invariant; pointers are relative to the network object.
    pub fn check(&self) -> Result<()> {
        if self.buses.is_empty() {
            return Err(Error::schema("/network/buses", "network has no buses"));
        }
        let mut seen = BTreeMap::new();
        for (k, b) in self.buses.iter().enumerate() {
            if seen.insert(*b, k).is_some() {
                return Err(Error::schema(format!("/network/buses/{k}"), format!("duplicate bus {b}")));
            }
        }
        if self.bus_index(self.slack_bus).is_none() {
            return Err(Error::schema(
                "/network/slack_bus",
                format!("slack bus {} does not exist", self.slack_bus),
            ));
        }
        for (k, br) in self.branches.iter().enumerate() {
            let p = format!("/network/branches/{k}");
            for (field, bus) in [("from_bus", br.from_bus), ("to_bus", br.to_bus)] {
                if self.bus_index(bus).is_none() {
                    return Err(Error::schema(format!("{p}/{field}"), format!("dangling bus reference {bus}")));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::schema(p, "branch connects a bus to itself"));
            }
            if !(br.reactance > 0.0) || !br.reactance.is_finite() {
                return Err(Error::schema(format!("{p}/reactance"), format!("reactance {} must be > 0", br.reactance)));
            }
            if !(br.capacity > 0.0) || !br.capacity.is_finite() {
                return Err(Error::schema(format!("{p}/capacity"), format!("capacity {} must be > 0", br.capacity)));
            }
            for (field, a) in [("alpha_plus", br.alpha_plus), ("alpha_minus", br.alpha_minus)] {
                if let Some(a) = a {
                    if !(a > 0.0 && a < 0.5) {
                        return Err(Error::schema(format!("{p}/{field}"), format!("risk level {a} outside (0, 0.5)")));
                    }
                }
            }
        }
        if let Some(bus) = self.unreachable_bus() {
            return Err(Error::schema(
                "/network",
                format!("network is disconnected: bus {bus} unreachable from slack"),
            ));
        }
        Ok(())
    }

    fn unreachable_bus(&self) -> Option<BusId> {
        let n = self.n_buses();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            let (Some(a), Some(b)) = (self.bus_index(br.from_bus), self.bus_index(br.to_bus)) else {
                continue;
            };
            adj[a].push(b);
            adj[b].push(a);
        }
        let start = self.bus_index(self.slack_bus)?;
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().position(|s| !s).map(|k| self.buses[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub on: bool,
    /// Output in the period before the horizon (MW).
    pub power: f64,
    /// How many periods the unit has been in its current on/off state.
    pub periods_in_state: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub name: String,
    pub bus: BusId,
    pub p_max: f64,
    pub p_min: f64,
    /// Fuel cost `a·P² + b·P + c·v` ($/MW²h, $/MWh, $/h).
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    pub reserve_up_cost: f64,
    pub reserve_down_cost: f64,
    pub reserve_up_max: f64,
    pub reserve_down_max: f64,
    /// MW per interval.
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Intervals.
    pub min_up: u32,
    pub min_down: u32,
    pub initial_state: InitialState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindFarm {
    pub name: String,
    pub bus: BusId,
    pub capacity: f64,
    /// Expected output per interval (MW).
    pub forecast: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: BusId,
    pub demand: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub alpha_reserve_up: f64,
    pub alpha_reserve_down: f64,
    /// Default forward/reverse overloading risk for every branch.
    pub alpha_line: f64,
    pub reserve_up_extra: f64,
    pub reserve_down_extra: f64,
    /// Curtailment penalty `k_cur` ($/MW²h).
    pub curtailment_penalty: f64,
}

impl RiskParams {
    /// `(α⁺, α⁻)` for a branch, honoring per-branch overrides.
    pub fn line_alphas(&self, br: &Branch) -> (f64, f64) {
        (
            br.alpha_plus.unwrap_or(self.alpha_line),
            br.alpha_minus.unwrap_or(self.alpha_line),
        )
    }

    /// Same risk level for every chance constraint.
    pub fn with_uniform_alpha(mut self, alpha: f64) -> Self {
        self.alpha_reserve_up = alpha;
        self.alpha_reserve_down = alpha;
        self.alpha_line = alpha;
        self
    }
}

/// Marginal histograms and correlation for one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalUncertainty {
    pub marginals: Vec<MarginalHistogram>,
    pub correlation: Vec<Vec<f64>>,
}

impl IntervalUncertainty {
    pub fn correlation_spec(&self) -> CorrelationSpec {
        CorrelationSpec {
            matrix: self.correlation.clone(),
        }
    }
}

/// Where the forecast-error distribution comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uncertainty {
    /// Prefitted mixtures, path relative to the case file.
    GmmFile(PathBuf),
    /// One entry per interval, to be sampled and fitted.
    Intervals(Vec<IntervalUncertainty>),
}

/// Correlation entries a sweep overwrites with the swept coefficient `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSweep {
    pub pairs: Vec<(usize, usize)>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub name: String,
    pub horizon: usize,
    pub network: Network,
    pub generators: Vec<Generator>,
    pub wind_farms: Vec<WindFarm>,
    pub loads: Vec<Load>,
    pub risk: RiskParams,
    pub uncertainty: Uncertainty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_sweep: Option<CorrelationSweep>,
    /// When false every curtailment variable is fixed to zero.
    #[serde(default = "default_true")]
    pub allow_curtailment: bool,
    #[serde(skip)]
    pub source_dir: PathBuf,
}

impl Case {
    pub fn n_gens(&self) -> usize {
        self.generators.len()
    }

    pub fn n_wind(&self) -> usize {
        self.wind_farms.len()
    }

    /// System demand per interval.
    pub fn total_demand(&self, t: usize) -> f64 {
        self.loads.iter().map(|l| l.demand[t]).sum()
    }

    pub fn total_forecast(&self, t: usize) -> f64 {
        self.wind_farms.iter().map(|w| w.forecast[t]).sum()
    }

    /// Per-interval mixtures when the case references a GMM file.
    pub fn load_gmms(&self) -> Result<Option<Vec<Gmm>>> {
        match &self.uncertainty {
            Uncertainty::GmmFile(p) => {
                let path = if p.is_absolute() { p.clone() } else { self.source_dir.join(p) };
                let gmms = read_gmm_file(&path)?;
                self.check_gmms(&gmms)?;
                Ok(Some(gmms))
            }
            Uncertainty::Intervals(_) => Ok(None),
        }
    }

    pub fn check_gmms(&self, gmms: &[Gmm]) -> Result<()> {
        if gmms.len() != self.horizon {
            return Err(Error::input(format!(
                "{} mixtures for a horizon of {}",
                gmms.len(),
                self.horizon
            )));
        }
        for (t, g) in gmms.iter().enumerate() {
            if g.dimension != self.n_wind() {
                return Err(Error::input(format!(
                    "interval {t}: mixture dimension {} but {} wind farms",
                    g.dimension,
                    self.n_wind()
                )));
            }
        }
        Ok(())
    }

    /// Fits one mixture per interval from Nataf samples of the interval's
    /// marginals and correlation. Interval `t` uses seed `em.seed + t` for
    /// both sampling and EM, and intervals run in parallel.
    pub fn fit_gmms(&self, n_samples: usize, em: &EmConfig) -> Result<Vec<Gmm>> {
        use rayon::prelude::*;
        let Uncertainty::Intervals(iv) = &self.uncertainty else {
            return Err(Error::input("case references a prefitted GMM file; nothing to fit"));
        };
        iv.par_iter()
            .enumerate()
            .map(|(t, u)| {
                let seed = em.seed.wrapping_add(t as u64);
                let samples = nataf_sample(&u.marginals, &u.correlation_spec(), n_samples, seed)
                    .map_err(|e| e.context(format!("interval {t}")))?;
                let cfg = EmConfig { seed, ..*em };
                em_fit(&samples, &cfg).map_err(|e| e.context(format!("interval {t}")))
            })
            .collect()
    }

    /// Mixtures for the case: the referenced file, or a fresh fit.
    pub fn gmms_or_fit(&self, n_samples: usize, em: &EmConfig) -> Result<Vec<Gmm>> {
        match self.load_gmms()? {
            Some(g) => Ok(g),
            None => self.fit_gmms(n_samples, em),
        }
    }

    /// Copy with every sweep pair's correlation set to `r` in every interval.
    pub fn with_swept_correlation(&self, r: f64) -> Result<Case> {
        let sweep = self
            .correlation_sweep
            .as_ref()
            .ok_or_else(|| Error::input(format!("case {} defines no correlation_sweep", self.name)))?;
        let Uncertainty::Intervals(iv) = &self.uncertainty else {
            return Err(Error::input("a correlation sweep needs marginals and correlations, not a GMM file"));
        };
        let mut iv = iv.clone();
        for u in &mut iv {
            for &(a, b) in &sweep.pairs {
                u.correlation[a][b] = r;
                u.correlation[b][a] = r;
            }
        }
        let mut out = self.clone();
        out.uncertainty = Uncertainty::Intervals(iv);
        out.check()?;
        Ok(out)
    }

    pub fn check(&self) -> Result<()> {
        let t_len = self.horizon;
        if t_len == 0 {
            return Err(Error::schema("/horizon", "horizon must be at least 1"));
        }
        self.network.check()?;
        let bus_ok = |b: BusId| self.network.bus_index(b).is_some();
        if self.generators.is_empty() {
            return Err(Error::schema("/generators", "case has no generators"));
        }
        for (k, g) in self.generators.iter().enumerate() {
            let p = format!("/generators/{k}");
            if !bus_ok(g.bus) {
                return Err(Error::schema(format!("{p}/bus"), format!("dangling bus reference {}", g.bus)));
            }
            let nums = [
                g.p_max, g.p_min, g.a, g.b, g.c, g.startup_cost, g.shutdown_cost, g.reserve_up_cost,
                g.reserve_down_cost, g.reserve_up_max, g.reserve_down_max, g.ramp_up, g.ramp_down,
                g.initial_state.power,
            ];
            if nums.iter().any(|v| !v.is_finite()) {
                return Err(Error::schema(p, format!("generator {} has non-finite data", g.name)));
            }
            if g.p_min > g.p_max {
                return Err(Error::schema(
                    p,
                    format!(
                        "generator {}: p_min {} exceeds p_max {} (residual {})",
                        g.name,
                        g.p_min,
                        g.p_max,
                        g.p_min - g.p_max
                    ),
                ));
            }
            if g.p_min < 0.0 {
                return Err(Error::schema(format!("{p}/p_min"), format!("generator {}: negative p_min", g.name)));
            }
            if g.a < 0.0 {
                return Err(Error::schema(format!("{p}/a"), format!("generator {}: a = {} < 0 (nonconvex)", g.name, g.a)));
            }
            if g.min_up < 1 || g.min_down < 1 {
                return Err(Error::schema(p, format!("generator {}: min up/down must be ≥ 1", g.name)));
            }
            if g.reserve_up_max < 0.0 || g.reserve_down_max < 0.0 {
                return Err(Error::schema(p, format!("generator {}: negative reserve cap", g.name)));
            }
            if g.ramp_up < 0.0 || g.ramp_down < 0.0 {
                return Err(Error::schema(p, format!("generator {}: negative ramp limit", g.name)));
            }
            if g.startup_cost < 0.0 || g.shutdown_cost < 0.0 {
                return Err(Error::schema(p, format!("generator {}: negative startup/shutdown cost", g.name)));
            }
            let s = g.initial_state;
            if s.power < 0.0 || s.power > g.p_max || (!s.on && s.power != 0.0) {
                return Err(Error::schema(
                    format!("{p}/initial_state/power"),
                    format!("generator {}: initial power {} inconsistent with state", g.name, s.power),
                ));
            }
        }
        for (k, w) in self.wind_farms.iter().enumerate() {
            let p = format!("/wind_farms/{k}");
            if !bus_ok(w.bus) {
                return Err(Error::schema(format!("{p}/bus"), format!("dangling bus reference {}", w.bus)));
            }
            if w.forecast.len() != t_len {
                return Err(Error::schema(
                    format!("{p}/forecast"),
                    format!("expected {t_len} values, found {}", w.forecast.len()),
                ));
            }
            if let Some(t) = w.forecast.iter().position(|f| !(*f >= 0.0 && *f <= w.capacity)) {
                return Err(Error::schema(
                    format!("{p}/forecast/{t}"),
                    format!("forecast {} outside [0, {}]", w.forecast[t], w.capacity),
                ));
            }
        }
        for (k, l) in self.loads.iter().enumerate() {
            let p = format!("/loads/{k}");
            if !bus_ok(l.bus) {
                return Err(Error::schema(format!("{p}/bus"), format!("dangling bus reference {}", l.bus)));
            }
            if l.demand.len() != t_len {
                return Err(Error::schema(
                    format!("{p}/demand"),
                    format!("expected {t_len} values, found {}", l.demand.len()),
                ));
            }
            if let Some(t) = l.demand.iter().position(|d| !(*d >= 0.0) || !d.is_finite()) {
                return Err(Error::schema(format!("{p}/demand/{t}"), "demand must be ≥ 0"));
            }
        }
        let r = &self.risk;
        for (field, a) in [
            ("alpha_reserve_up", r.alpha_reserve_up),
            ("alpha_reserve_down", r.alpha_reserve_down),
            ("alpha_line", r.alpha_line),
        ] {
            if !(a > 0.0 && a < 0.5) {
                return Err(Error::schema(format!("/risk/{field}"), format!("risk level {a} outside (0, 0.5)")));
            }
        }
        for (field, v) in [
            ("reserve_up_extra", r.reserve_up_extra),
            ("reserve_down_extra", r.reserve_down_extra),
            ("curtailment_penalty", r.curtailment_penalty),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::schema(format!("/risk/{field}"), format!("{v} must be ≥ 0")));
            }
        }
        if let Uncertainty::Intervals(iv) = &self.uncertainty {
            if iv.len() != t_len {
                return Err(Error::schema(
                    "/uncertainty/intervals",
                    format!("expected {t_len} intervals, found {}", iv.len()),
                ));
            }
            for (t, u) in iv.iter().enumerate() {
                let p = format!("/uncertainty/intervals/{t}");
                if u.marginals.len() != self.n_wind() {
                    return Err(Error::schema(
                        format!("{p}/marginals"),
                        format!("expected {} marginals, found {}", self.n_wind(), u.marginals.len()),
                    ));
                }
                for (j, h) in u.marginals.iter().enumerate() {
                    h.check().map_err(|e| Error::schema(format!("{p}/marginals/{j}"), e.to_string()))?;
                }
                u.correlation_spec()
                    .check()
                    .map_err(|e| Error::schema(format!("{p}/correlation"), e.to_string()))?;
                if u.correlation.len() != self.n_wind() {
                    return Err(Error::schema(format!("{p}/correlation"), "dimension differs from wind farm count"));
                }
            }
        }
        if let Some(sw) = &self.correlation_sweep {
            for (k, (a, b)) in sw.pairs.iter().enumerate() {
                if *a >= self.n_wind() || *b >= self.n_wind() || a == b {
                    return Err(Error::schema(
                        format!("/correlation_sweep/pairs/{k}"),
                        format!("invalid wind farm pair ({a}, {b})"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a case document.
pub fn parse_case(text: &str, source_dir: impl Into<PathBuf>) -> Result<Case> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut case: Case = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(&e.path().to_string());
        Error::schema(pointer, e.inner().to_string())
    })?;
    case.source_dir = source_dir.into();
    case.check()?;
    Ok(case)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<Case> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_case(&text, dir)
}

/// `generators[0].p_max` → `/generators/0/p_max`.
fn json_pointer(path: &str) -> String {
    if path == "." || path.is_empty() {
        return String::new();
    }
    let mut out = String::new();
    for seg in path.split('.') {
        let mut rest = seg;
        if let Some(i) = rest.find('[') {
            out.push('/');
            out.push_str(&rest[..i]);
            rest = &rest[i..];
            for idx in rest.split(['[', ']']).filter(|s| !s.is_empty()) {
                out.push('/');
                out.push_str(idx);
            }
        } else {
            out.push('/');
            out.push_str(rest);
        }
    }
    out.replace("//", "/")
}

/// Branch flow per unit injection at each bus (withdrawn at the slack).
#[derive(Debug, Clone, PartialEq)]
pub struct PtdfMatrix {
    pub bus_ids: Vec<BusId>,
    /// `values[branch][bus]`.
    pub values: Vec<Vec<f64>>,
}

impl PtdfMatrix {
    pub fn n_branches(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, branch: usize) -> &[f64] {
        &self.values[branch]
    }

    pub fn at_bus(&self, branch: usize, bus: BusId) -> f64 {
        let k = self
            .bus_ids
            .iter()
            .position(|b| *b == bus)
            .expect("bus id validated at load time");
        self.values[branch][k]
    }

    /// Flows from a nodal injection vector ordered like `bus_ids`.
    pub fn flows(&self, injection: &[f64]) -> Vec<f64> {
        self.values
            .iter()
            .map(|r| r.iter().zip(injection).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// DC PTDF through the slack-reduced nodal susceptance matrix.
pub fn compute_ptdf(net: &Network) -> Result<PtdfMatrix> {
    let n = net.n_buses();
    let m = net.n_branches();
    let slack = net
        .bus_index(net.slack_bus)
        .ok_or_else(|| Error::input(format!("slack bus {} does not exist", net.slack_bus)))?;
    // reduced index: position among non-slack buses
    let red = |k: usize| if k < slack { Some(k) } else if k > slack { Some(k - 1) } else { None };

    let mut b = DMatrix::<f64>::zeros(n - 1, n - 1);
    let mut ends = Vec::with_capacity(m);
    for br in &net.branches {
        let i = net
            .bus_index(br.from_bus)
            .ok_or_else(|| Error::input(format!("unknown bus {}", br.from_bus)))?;
        let j = net
            .bus_index(br.to_bus)
            .ok_or_else(|| Error::input(format!("unknown bus {}", br.to_bus)))?;
        if !(br.reactance > 0.0) {
            return Err(Error::input("branch reactance must be positive"));
        }
        let y = 1.0 / br.reactance;
        let (ri, rj) = (red(i), red(j));
        if let Some(ri) = ri {
            b[(ri, ri)] += y;
        }
        if let Some(rj) = rj {
            b[(rj, rj)] += y;
        }
        if let (Some(ri), Some(rj)) = (ri, rj) {
            b[(ri, rj)] -= y;
            b[(rj, ri)] -= y;
        }
        ends.push((ri, rj, y));
    }
    let x = if n > 1 {
        let chol = b
            .cholesky()
            .ok_or_else(|| Error::input("reduced susceptance matrix is singular (network disconnected)"))?;
        chol.inverse()
    } else {
        DMatrix::zeros(0, 0)
    };
    let mut values = vec![vec![0.0; n]; m];
    for (l, (ri, rj, y)) in ends.iter().enumerate() {
        for k in 0..n {
            let Some(rk) = red(k) else { continue };
            let ti = ri.map_or(0.0, |ri| x[(ri, rk)]);
            let tj = rj.map_or(0.0, |rj| x[(rj, rk)]);
            values[l][k] = y * (ti - tj);
        }
    }
    Ok(PtdfMatrix {
        bus_ids: net.buses.clone(),
        values,
    })
}
