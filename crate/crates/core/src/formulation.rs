//! Deterministic equivalent of the chance-constrained unit commitment.
//!
//! Every chance constraint becomes linear once a single quantile of a
//! projected mixture is known, so [`build_quantile_table`] runs before any
//! optimization variable exists and [`build_miqp`] only reads numbers from
//! the table.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{quantiles_par, Gmm, QuantileConfig, UnivariateGmm};
use crate::grid::{Case, PtdfMatrix};
use crate::miqp::{branch_and_bound, MiqpModel, Sense, SolveConfig, SolveResult, VarId};

/// Right-hand sides of the reformulated chance constraints (MW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    /// `Quant(α_UR | 1ᵀe)` per interval.
    pub reserve_up: Vec<f64>,
    /// `Quant(1 − α_DR | 1ᵀe)` per interval.
    pub reserve_down: Vec<f64>,
    /// `Quant(1 − α⁺ | sᵀe)`, indexed `[t][branch]`.
    pub line_fwd: Vec<Vec<f64>>,
    /// `Quant(α⁻ | sᵀe)`, indexed `[t][branch]`.
    pub line_rev: Vec<Vec<f64>>,
    /// Wall time spent projecting and solving quantiles.
    pub elapsed_seconds: f64,
}

impl QuantileTable {
    pub fn horizon(&self) -> usize {
        self.reserve_up.len()
    }

    pub fn n_quantiles(&self) -> usize {
        2 * self.reserve_up.len() + self.line_fwd.iter().map(|r| 2 * r.len()).sum::<usize>()
    }

    /// Writes `t,constraint,branch,level,quantile` rows.
    pub fn write_csv(&self, case: &Case, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "constraint", "branch", "level", "quantile"])?;
        let r = &case.risk;
        for t in 0..self.horizon() {
            let ts = t.to_string();
            w.write_record([&ts, "reserve_up", "", &r.alpha_reserve_up.to_string(), &self.reserve_up[t].to_string()])?;
            w.write_record([
                &ts,
                "reserve_down",
                "",
                &(1.0 - r.alpha_reserve_down).to_string(),
                &self.reserve_down[t].to_string(),
            ])?;
            for (l, br) in case.network.branches.iter().enumerate() {
                let (ap, am) = r.line_alphas(br);
                let label = br.label();
                w.write_record([&ts, "line_fwd", &label, &(1.0 - ap).to_string(), &self.line_fwd[t][l].to_string()])?;
                w.write_record([&ts, "line_rev", &label, &am.to_string(), &self.line_rev[t][l].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Sensitivity of every branch flow to each wind farm's forecast error:
/// `[branch][farm]`.
pub fn wind_sensitivities(case: &Case, ptdf: &PtdfMatrix) -> Vec<Vec<f64>> {
    (0..ptdf.n_branches())
        .map(|l| case.wind_farms.iter().map(|w| ptdf.at_bus(l, w.bus)).collect())
        .collect()
}

/// Projects each interval's mixture onto the all-ones vector and the branch
/// sensitivity vectors, then solves the quantiles in parallel.
pub fn build_quantile_table(
    gmms: &[Gmm],
    case: &Case,
    ptdf: &PtdfMatrix,
    cfg: &QuantileConfig,
) -> Result<QuantileTable> {
    case.check_gmms(gmms)?;
    cfg.check()?;
    let started = Instant::now();
    let horizon = case.horizon;
    let nb = ptdf.n_branches();
    let sens = wind_sensitivities(case, ptdf);
    let ones = vec![1.0; case.n_wind()];
    let r = &case.risk;

    let mut system = Vec::with_capacity(horizon);
    let mut lines: Vec<Vec<UnivariateGmm>> = Vec::with_capacity(horizon);
    for (t, g) in gmms.iter().enumerate() {
        system.push(g.project(&ones).map_err(|e| e.context(format!("t={t}, system projection")))?);
        let per_branch = sens
            .iter()
            .enumerate()
            .map(|(l, s)| g.project(s).map_err(|e| e.context(format!("t={t}, branch {l}"))))
            .collect::<Result<Vec<_>>>()?;
        lines.push(per_branch);
    }

    // flat request list: (t, slot) with slot 0/1 reserve, 2+2l / 3+2l lines
    let mut items: Vec<(&UnivariateGmm, f64)> = Vec::with_capacity(horizon * (2 + 2 * nb));
    for t in 0..horizon {
        items.push((&system[t], r.alpha_reserve_up));
        items.push((&system[t], 1.0 - r.alpha_reserve_down));
        for (l, br) in case.network.branches.iter().enumerate() {
            let (ap, am) = r.line_alphas(br);
            items.push((&lines[t][l], 1.0 - ap));
            items.push((&lines[t][l], am));
        }
    }
    let values = quantiles_par(&items, cfg);
    let stride = 2 + 2 * nb;
    let mut table = QuantileTable {
        reserve_up: vec![0.0; horizon],
        reserve_down: vec![0.0; horizon],
        line_fwd: vec![vec![0.0; nb]; horizon],
        line_rev: vec![vec![0.0; nb]; horizon],
        elapsed_seconds: 0.0,
    };
    for (k, v) in values.into_iter().enumerate() {
        let (t, slot) = (k / stride, k % stride);
        let ctx = match slot {
            0 => format!("t={t}, reserve up"),
            1 => format!("t={t}, reserve down"),
            s => format!("t={t}, branch {}", (s - 2) / 2),
        };
        let v = v.map_err(|e| e.context(ctx))?;
        match slot {
            0 => table.reserve_up[t] = v,
            1 => table.reserve_down[t] = v,
            s if s % 2 == 0 => table.line_fwd[t][(s - 2) / 2] = v,
            s => table.line_rev[t][(s - 3) / 2] = v,
        }
    }
    table.elapsed_seconds = started.elapsed().as_secs_f64();
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormulationOptions {
    /// Emit the branch-flow chance constraints.
    pub line_constraints: bool,
}

impl Default for FormulationOptions {
    fn default() -> Self {
        FormulationOptions { line_constraints: true }
    }
}

/// Variable ids of the unit-commitment model, `[gen][t]` / `[farm][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UcVariables {
    pub on: Vec<Vec<VarId>>,
    pub power: Vec<Vec<VarId>>,
    pub reserve_up: Vec<Vec<VarId>>,
    pub reserve_down: Vec<Vec<VarId>>,
    pub startup: Vec<Vec<VarId>>,
    pub shutdown: Vec<Vec<VarId>>,
    pub curtailment: Vec<Vec<VarId>>,
}

impl UcVariables {
    /// Recovers the ids from variable names.
    pub fn from_model(case: &Case, model: &MiqpModel) -> Result<Self> {
        let index: HashMap<&str, VarId> = model
            .variables
            .iter()
            .enumerate()
            .map(|(j, v)| (v.name.as_str(), j))
            .collect();
        let look = |prefix: &str, owner: &str, t: usize| -> Result<VarId> {
            let name = var_name(prefix, owner, t);
            index
                .get(name.as_str())
                .copied()
                .ok_or_else(|| Error::input(format!("model has no variable {name}")))
        };
        let per_gen = |prefix: &str| -> Result<Vec<Vec<VarId>>> {
            case.generators
                .iter()
                .map(|g| (0..case.horizon).map(|t| look(prefix, &g.name, t)).collect())
                .collect()
        };
        Ok(UcVariables {
            on: per_gen("v")?,
            power: per_gen("p")?,
            reserve_up: per_gen("ur")?,
            reserve_down: per_gen("dr")?,
            startup: per_gen("su")?,
            shutdown: per_gen("sd")?,
            curtailment: case
                .wind_farms
                .iter()
                .map(|w| (0..case.horizon).map(|t| look("wcur", &w.name, t)).collect())
                .collect::<Result<_>>()?,
        })
    }
}

fn var_name(prefix: &str, owner: &str, t: usize) -> String {
    format!("{prefix}_{}_t{t}", owner.replace(char::is_whitespace, "_"))
}

/// Periods at the start of the horizon whose commitment is forced by the
/// unit's history, and the forced value.
fn forced_commitment(g: &crate::grid::Generator, horizon: usize) -> (usize, bool) {
    let s = g.initial_state;
    let need = if s.on { g.min_up } else { g.min_down };
    let left = need.saturating_sub(s.periods_in_state) as usize;
    (left.min(horizon), s.on)
}

/// Assembles the deterministic MIQP. Variable and row order is fixed, so the
/// model (and its MPS export) is reproducible.
pub fn build_miqp(
    case: &Case,
    ptdf: &PtdfMatrix,
    table: &QuantileTable,
    opts: &FormulationOptions,
) -> Result<(MiqpModel, UcVariables)> {
    case.check()?;
    let horizon = case.horizon;
    if table.horizon() != horizon || table.line_fwd.iter().any(|r| r.len() != ptdf.n_branches()) {
        return Err(Error::input("quantile table does not match the case dimensions"));
    }
    if ptdf.n_branches() != case.network.n_branches() {
        return Err(Error::input("PTDF matrix does not match the network"));
    }
    let mut m = MiqpModel::new(case.name.clone());
    let ng = case.n_gens();
    let mut vars = UcVariables {
        on: vec![Vec::with_capacity(horizon); ng],
        power: vec![Vec::with_capacity(horizon); ng],
        reserve_up: vec![Vec::with_capacity(horizon); ng],
        reserve_down: vec![Vec::with_capacity(horizon); ng],
        startup: vec![Vec::with_capacity(horizon); ng],
        shutdown: vec![Vec::with_capacity(horizon); ng],
        curtailment: vec![Vec::with_capacity(horizon); case.n_wind()],
    };

    for t in 0..horizon {
        for (i, g) in case.generators.iter().enumerate() {
            let v = m.add_binary(var_name("v", &g.name, t));
            let (forced, value) = forced_commitment(g, horizon);
            if t < forced {
                let x = if value { 1.0 } else { 0.0 };
                m.variables[v].lower = x;
                m.variables[v].upper = x;
            }
            let p = m.add_continuous(var_name("p", &g.name, t), 0.0, g.p_max);
            let ur = m.add_continuous(var_name("ur", &g.name, t), 0.0, g.reserve_up_max);
            let dr = m.add_continuous(var_name("dr", &g.name, t), 0.0, g.reserve_down_max);
            let su = m.add_continuous(var_name("su", &g.name, t), 0.0, g.startup_cost);
            let sd = m.add_continuous(var_name("sd", &g.name, t), 0.0, g.shutdown_cost);
            m.add_quadratic_cost(p, g.a);
            m.add_linear_cost(p, g.b);
            m.add_linear_cost(v, g.c);
            m.add_linear_cost(ur, g.reserve_up_cost);
            m.add_linear_cost(dr, g.reserve_down_cost);
            m.add_linear_cost(su, 1.0);
            m.add_linear_cost(sd, 1.0);
            vars.on[i].push(v);
            vars.power[i].push(p);
            vars.reserve_up[i].push(ur);
            vars.reserve_down[i].push(dr);
            vars.startup[i].push(su);
            vars.shutdown[i].push(sd);
        }
        for (j, w) in case.wind_farms.iter().enumerate() {
            let cap = if case.allow_curtailment { w.forecast[t] } else { 0.0 };
            let c = m.add_continuous(var_name("wcur", &w.name, t), 0.0, cap);
            m.add_quadratic_cost(c, case.risk.curtailment_penalty);
            vars.curtailment[j].push(c);
        }
    }

    for t in 0..horizon {
        // balance with scheduled wind = forecast − curtailment
        let mut terms: Vec<(VarId, f64)> = vars.power.iter().map(|p| (p[t], 1.0)).collect();
        terms.extend(vars.curtailment.iter().map(|c| (c[t], -1.0)));
        m.add_constraint(
            format!("balance_t{t}"),
            terms,
            Sense::Eq,
            case.total_demand(t) - case.total_forecast(t),
        );

        for (i, g) in case.generators.iter().enumerate() {
            let name = g.name.replace(char::is_whitespace, "_");
            let (v, p, ur, dr) = (vars.on[i][t], vars.power[i][t], vars.reserve_up[i][t], vars.reserve_down[i][t]);
            m.add_constraint(format!("pmax_{name}_t{t}"), [(p, 1.0), (ur, 1.0), (v, -g.p_max)], Sense::Le, 0.0);
            m.add_constraint(format!("pmin_{name}_t{t}"), [(p, 1.0), (dr, -1.0), (v, -g.p_min)], Sense::Ge, 0.0);

            // previous commitment and output: variables or initial constants
            let big_m = g.p_max;
            let (prev, v0, p0) = if t == 0 {
                let s = g.initial_state;
                (None, if s.on { 1.0 } else { 0.0 }, s.power)
            } else {
                (Some((vars.on[i][t - 1], vars.power[i][t - 1])), 0.0, 0.0)
            };
            let mut up: Vec<(VarId, f64)> = vec![(p, 1.0), (v, big_m)];
            let mut down: Vec<(VarId, f64)> = vec![(p, -1.0), (v, big_m)];
            let mut rhs_up = g.ramp_up + 2.0 * big_m;
            let mut rhs_down = g.ramp_down + 2.0 * big_m;
            match prev {
                Some((vp, pp)) => {
                    up.extend([(pp, -1.0), (vp, big_m)]);
                    down.extend([(pp, 1.0), (vp, big_m)]);
                }
                None => {
                    rhs_up += p0 - big_m * v0;
                    rhs_down += -p0 - big_m * v0;
                }
            }
            m.add_constraint(format!("ramp_up_{name}_t{t}"), up, Sense::Le, rhs_up);
            m.add_constraint(format!("ramp_down_{name}_t{t}"), down, Sense::Le, rhs_down);

            // SU ≥ su·(v − v_prev), SD ≥ sd·(v_prev − v)
            let (su, sd) = (vars.startup[i][t], vars.shutdown[i][t]);
            let (mut su_terms, mut sd_terms) = (vec![(su, 1.0), (v, -g.startup_cost)], vec![(sd, 1.0), (v, g.shutdown_cost)]);
            let (mut su_rhs, mut sd_rhs) = (0.0, 0.0);
            match prev {
                Some((vp, _)) => {
                    su_terms.push((vp, g.startup_cost));
                    sd_terms.push((vp, -g.shutdown_cost));
                }
                None => {
                    su_rhs = -g.startup_cost * v0;
                    sd_rhs = g.shutdown_cost * v0;
                }
            }
            m.add_constraint(format!("startup_{name}_t{t}"), su_terms, Sense::Ge, su_rhs);
            m.add_constraint(format!("shutdown_{name}_t{t}"), sd_terms, Sense::Ge, sd_rhs);
        }

        let r = &case.risk;
        m.add_constraint(
            format!("reserve_up_t{t}"),
            vars.reserve_up.iter().map(|u| (u[t], 1.0)),
            Sense::Ge,
            r.reserve_up_extra - table.reserve_up[t],
        );
        m.add_constraint(
            format!("reserve_down_t{t}"),
            vars.reserve_down.iter().map(|d| (d[t], 1.0)),
            Sense::Ge,
            r.reserve_down_extra + table.reserve_down[t],
        );

        if opts.line_constraints {
            for (l, br) in case.network.branches.iter().enumerate() {
                // flow = Σ s_i P_i + Σ s_j (W_f − W_cur) − Σ PTDF_k D_k
                let mut terms: Vec<(VarId, f64)> = Vec::new();
                for (i, g) in case.generators.iter().enumerate() {
                    terms.push((vars.power[i][t], ptdf.at_bus(l, g.bus)));
                }
                let mut constant = 0.0;
                for (j, w) in case.wind_farms.iter().enumerate() {
                    let s = ptdf.at_bus(l, w.bus);
                    terms.push((vars.curtailment[j][t], -s));
                    constant += s * w.forecast[t];
                }
                for ld in &case.loads {
                    constant -= ptdf.at_bus(l, ld.bus) * ld.demand[t];
                }
                let label = br.label().replace(char::is_whitespace, "_");
                m.add_constraint(
                    format!("line_fwd_{label}_t{t}"),
                    terms.clone(),
                    Sense::Le,
                    br.capacity - table.line_fwd[t][l] - constant,
                );
                m.add_constraint(
                    format!("line_rev_{label}_t{t}"),
                    terms,
                    Sense::Ge,
                    -br.capacity - table.line_rev[t][l] - constant,
                );
            }
        }
    }

    // minimum up/down time, skipping the tautologies of one-period minimums
    for (i, g) in case.generators.iter().enumerate() {
        let name = g.name.replace(char::is_whitespace, "_");
        let v0 = if g.initial_state.on { 1.0 } else { 0.0 };
        let on = &vars.on[i];
        // v_t − v_{t−1} as terms plus a constant
        let delta = |t: usize, scale: f64| -> (Vec<(VarId, f64)>, f64) {
            if t == 0 {
                (vec![(on[0], scale)], -scale * v0)
            } else {
                (vec![(on[t], scale), (on[t - 1], -scale)], 0.0)
            }
        };
        let ut = g.min_up as usize;
        if ut >= 2 {
            for t in 0..horizon {
                let mut terms = Vec::new();
                let (rhs, label);
                if t + ut <= horizon {
                    // Σ_{k=t}^{t+UT−1} v_k ≥ UT·(v_t − v_{t−1})
                    terms.extend((t..t + ut).map(|k| (on[k], 1.0)));
                    let (d, c) = delta(t, -(ut as f64));
                    terms.extend(d);
                    rhs = c * -1.0;
                    label = "min_up";
                } else {
                    // Σ_{k=t}^{T} [v_k − (v_t − v_{t−1})] ≥ 0
                    let n = (horizon - t) as f64;
                    terms.extend((t..horizon).map(|k| (on[k], 1.0)));
                    let (d, c) = delta(t, -n);
                    terms.extend(d);
                    rhs = -c;
                    label = "min_up_tail";
                }
                m.add_constraint(format!("{label}_{name}_t{t}"), terms, Sense::Ge, rhs);
            }
        }
        let dt = g.min_down as usize;
        if dt >= 2 {
            for t in 0..horizon {
                // Σ (1 − v_k) ≥ DT·(v_{t−1} − v_t)  ⇔  −Σ v_k − DT·(v_t − v_{t−1}) ≥ −len
                let (len, scale, label) = if t + dt <= horizon {
                    (dt, dt as f64, "min_down")
                } else {
                    (horizon - t, (horizon - t) as f64, "min_down_tail")
                };
                let mut terms: Vec<(VarId, f64)> = (t..t + len).map(|k| (on[k], -1.0)).collect();
                let (d, c) = delta(t, scale);
                terms.extend(d);
                m.add_constraint(format!("{label}_{name}_t{t}"), terms, Sense::Ge, -(len as f64) - c);
            }
        }
    }
    Ok((m, vars))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Startup plus shutdown.
    pub uc: f64,
    pub fuel: f64,
    pub reserve: f64,
    pub curtail_penalty: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSchedule {
    pub name: String,
    pub on: Vec<bool>,
    pub power: Vec<f64>,
    pub reserve_up: Vec<f64>,
    pub reserve_down: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindSchedule {
    pub name: String,
    pub scheduled: Vec<f64>,
    pub curtailed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcSchedule {
    pub case: String,
    pub horizon: usize,
    pub generators: Vec<GeneratorSchedule>,
    pub wind_farms: Vec<WindSchedule>,
    pub costs: CostBreakdown,
}

impl UcSchedule {
    pub fn total_reserve_up(&self, t: usize) -> f64 {
        self.generators.iter().map(|g| g.reserve_up[t]).sum()
    }

    pub fn total_reserve_down(&self, t: usize) -> f64 {
        self.generators.iter().map(|g| g.reserve_down[t]).sum()
    }

    pub fn total_curtailment(&self) -> f64 {
        self.wind_farms.iter().flat_map(|w| &w.curtailed).sum()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Expected branch flows `[t][branch]` under the forecast.
    pub fn deterministic_flows(&self, case: &Case, ptdf: &PtdfMatrix) -> Vec<Vec<f64>> {
        (0..self.horizon)
            .map(|t| {
                (0..ptdf.n_branches())
                    .map(|l| {
                        let mut f = 0.0;
                        for (g, s) in case.generators.iter().zip(&self.generators) {
                            f += ptdf.at_bus(l, g.bus) * s.power[t];
                        }
                        for (w, s) in case.wind_farms.iter().zip(&self.wind_farms) {
                            f += ptdf.at_bus(l, w.bus) * s.scheduled[t];
                        }
                        for ld in &case.loads {
                            f -= ptdf.at_bus(l, ld.bus) * ld.demand[t];
                        }
                        f
                    })
                    .collect()
            })
            .collect()
    }
}

/// Feasibility tolerance on rows and bounds when reading a solution (MW).
pub const SCHEDULE_TOLERANCE: f64 = 1e-6;

/// Cost terms recomputed from the schedule alone.
pub fn schedule_costs(case: &Case, schedule: &UcSchedule) -> CostBreakdown {
    let mut c = CostBreakdown::default();
    for (g, s) in case.generators.iter().zip(&schedule.generators) {
        let mut prev = g.initial_state.on;
        for t in 0..schedule.horizon {
            let on = s.on[t];
            let v = if on { 1.0 } else { 0.0 };
            if on && !prev {
                c.uc += g.startup_cost;
            }
            if !on && prev {
                c.uc += g.shutdown_cost;
            }
            prev = on;
            let p = s.power[t];
            c.fuel += g.a * p * p + g.b * p + g.c * v;
            c.reserve += g.reserve_up_cost * s.reserve_up[t] + g.reserve_down_cost * s.reserve_down[t];
        }
    }
    for w in &schedule.wind_farms {
        c.curtail_penalty += w.curtailed.iter().map(|x| case.risk.curtailment_penalty * x * x).sum::<f64>();
    }
    c.total = c.uc + c.fuel + c.reserve + c.curtail_penalty;
    c
}

/// Reads a schedule out of a solver assignment after checking it against
/// the model rows, and cross-checks the objective with the recomputed costs.
pub fn extract_schedule(case: &Case, model: &MiqpModel, assignment: &[f64]) -> Result<UcSchedule> {
    if assignment.len() != model.n_vars() {
        return Err(Error::input(format!(
            "assignment has {} values for {} variables",
            assignment.len(),
            model.n_vars()
        )));
    }
    if let Some((row, viol)) = model.worst_row(assignment) {
        if viol > SCHEDULE_TOLERANCE {
            return Err(Error::input(format!(
                "assignment violates row {} by {viol:e}",
                model.linear_constraints[row].name
            )));
        }
    }
    let viol = model.max_violation(assignment);
    if viol > SCHEDULE_TOLERANCE {
        return Err(Error::input(format!("assignment violates a variable bound by {viol:e}")));
    }
    let vars = UcVariables::from_model(case, model)?;
    let pick = |ids: &[VarId]| ids.iter().map(|&j| assignment[j]).collect::<Vec<f64>>();
    let generators = case
        .generators
        .iter()
        .enumerate()
        .map(|(i, g)| GeneratorSchedule {
            name: g.name.clone(),
            on: vars.on[i].iter().map(|&j| assignment[j] > 0.5).collect(),
            power: pick(&vars.power[i]),
            reserve_up: pick(&vars.reserve_up[i]),
            reserve_down: pick(&vars.reserve_down[i]),
        })
        .collect();
    let wind_farms = case
        .wind_farms
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let curtailed = pick(&vars.curtailment[j]);
            WindSchedule {
                name: w.name.clone(),
                scheduled: w.forecast.iter().zip(&curtailed).map(|(f, c)| f - c).collect(),
                curtailed,
            }
        })
        .collect();
    let mut schedule = UcSchedule {
        case: case.name.clone(),
        horizon: case.horizon,
        generators,
        wind_farms,
        costs: CostBreakdown::default(),
    };
    schedule.costs = schedule_costs(case, &schedule);
    let objective = model.evaluate(assignment);
    let total = schedule.costs.total;
    if (objective - total).abs() > 1e-4 * objective.abs().max(total.abs()).max(1.0) {
        return Err(Error::internal(format!(
            "recomputed cost {total} disagrees with the model objective {objective}"
        )));
    }
    Ok(schedule)
}

/// Everything produced by one solve of a case.
#[derive(Debug, Clone)]
pub struct CaseSolution {
    pub table: QuantileTable,
    pub model: MiqpModel,
    pub result: SolveResult,
    pub schedule: UcSchedule,
    pub total_seconds: f64,
}

/// Quantile table, model, branch-and-bound and schedule extraction in one
/// call. An infeasible model is reported as `Error::Infeasible`.
pub fn solve_case(
    case: &Case,
    gmms: &[Gmm],
    opts: &FormulationOptions,
    qcfg: &QuantileConfig,
    solve: &SolveConfig,
) -> Result<CaseSolution> {
    let started = Instant::now();
    let ptdf = crate::grid::compute_ptdf(&case.network)?;
    let table = build_quantile_table(gmms, case, &ptdf, qcfg)?;
    let (model, _) = build_miqp(case, &ptdf, &table, opts)?;
    let result = branch_and_bound(&model, solve)?.into_feasible()?;
    let schedule = extract_schedule(case, &model, &result.assignment)?;
    Ok(CaseSolution {
        table,
        model,
        result,
        schedule,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}
