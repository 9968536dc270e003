use std::path::Path;

use approx::assert_abs_diff_eq;
use ccuc::formulation::{
    build_miqp, build_quantile_table, extract_schedule, solve_case, FormulationOptions, UcVariables,
};
use ccuc::gmm::{GaussianComponent, Gmm, QuantileConfig};
use ccuc::grid::{compute_ptdf, load_case, Case};
use ccuc::miqp::{Sense, SolveConfig};
use ccuc::Error;
use proptest::prelude::*;

fn case3() -> (Case, Vec<Gmm>) {
    let c = load_case(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/case3.json")).unwrap();
    let g = c.load_gmms().unwrap().unwrap();
    (c, g)
}

fn gaussian(dim: usize, var: f64) -> Gmm {
    let cov = (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { var } else { 0.0 }).collect())
        .collect();
    Gmm::gaussian(vec![0.0; dim], cov).unwrap()
}

fn row<'a>(m: &'a ccuc::miqp::MiqpModel, name: &str) -> &'a ccuc::miqp::LinearConstraint {
    m.linear_constraints.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no row {name}"))
}

#[test]
fn case3_counts() {
    let (c, g) = case3();
    let ptdf = compute_ptdf(&c.network).unwrap();
    let table = build_quantile_table(&g, &c, &ptdf, &QuantileConfig::default()).unwrap();
    let (m, _) = build_miqp(&c, &ptdf, &table, &FormulationOptions::default()).unwrap();
    // per period: 3 gens x (v, p, ur, dr, su, sd) + 1 curtailment
    assert_eq!(m.n_vars(), 4 * 19);
    assert_eq!(m.binaries().len(), 12);
    // per period: balance, 6 per gen, 2 reserve, 2 per branch; then min up (g1, g2) and min down (g1)
    assert_eq!(m.n_constraints(), 4 * (1 + 18 + 2 + 6) + 12);
    let (m, _) = build_miqp(&c, &ptdf, &table, &FormulationOptions { line_constraints: false }).unwrap();
    assert_eq!(m.n_constraints(), 4 * (1 + 18 + 2) + 12);
    assert_eq!(table.n_quantiles(), 4 * (2 + 6));
}

#[test]
fn gaussian_reserve_rows() {
    let (mut c, _) = case3();
    c.risk = c.risk.with_uniform_alpha(0.02);
    let g = vec![gaussian(1, 100.0); 4];
    let ptdf = compute_ptdf(&c.network).unwrap();
    let table = build_quantile_table(&g, &c, &ptdf, &QuantileConfig::default()).unwrap();
    for t in 0..4 {
        assert_abs_diff_eq!(table.reserve_up[t], -20.5374891, epsilon = 1e-6);
        assert_abs_diff_eq!(table.reserve_down[t], 20.5374891, epsilon = 1e-6);
    }
    let (m, _) = build_miqp(&c, &ptdf, &table, &FormulationOptions::default()).unwrap();
    let up = row(&m, "reserve_up_t2");
    assert_eq!(up.sense, Sense::Ge);
    assert_abs_diff_eq!(up.rhs, 10.0 + 20.5374891, epsilon = 1e-6);
    assert_abs_diff_eq!(row(&m, "reserve_down_t2").rhs, 5.0 + 20.5374891, epsilon = 1e-6);
    // wind at bus 3: each line quantile scales with |PTDF|
    for (l, _) in c.network.branches.iter().enumerate() {
        let s = ptdf.at_bus(l, 3).abs();
        assert_abs_diff_eq!(table.line_fwd[0][l], 20.5374891 * s, epsilon = 1e-6);
        assert_abs_diff_eq!(table.line_rev[0][l], -20.5374891 * s, epsilon = 1e-6);
    }
}

#[test]
fn wind_at_slack_has_zero_line_margins() {
    let (mut c, _) = case3();
    c.wind_farms[0].bus = c.network.slack_bus;
    let g = vec![gaussian(1, 400.0); 4];
    let ptdf = compute_ptdf(&c.network).unwrap();
    let table = build_quantile_table(&g, &c, &ptdf, &QuantileConfig::default()).unwrap();
    for t in 0..4 {
        assert!(table.line_fwd[t].iter().chain(&table.line_rev[t]).all(|v| v.abs() < 1e-5));
        assert!(table.reserve_down[t] > 0.0);
    }
}

#[test]
fn history_forces_commitment() {
    let (mut c, g) = case3();
    // g1 on for 1 period with a 3-period minimum: on at t=0,1
    c.generators[0].min_up = 3;
    c.generators[0].initial_state.periods_in_state = 1;
    // g2 off for 1 period with a 3-period minimum: off at t=0,1
    c.generators[1].min_down = 3;
    c.generators[1].initial_state.periods_in_state = 1;
    let ptdf = compute_ptdf(&c.network).unwrap();
    let table = build_quantile_table(&g, &c, &ptdf, &QuantileConfig::default()).unwrap();
    let (m, vars) = build_miqp(&c, &ptdf, &table, &FormulationOptions::default()).unwrap();
    for t in 0..2 {
        let on = &m.variables[vars.on[0][t]];
        assert_eq!((on.lower, on.upper), (1.0, 1.0));
        let off = &m.variables[vars.on[1][t]];
        assert_eq!((off.lower, off.upper), (0.0, 0.0));
    }
    let free = &m.variables[vars.on[0][2]];
    assert_eq!((free.lower, free.upper), (0.0, 1.0));
}

#[test]
fn solution_respects_balance_and_reserves() {
    let (c, g) = case3();
    let sol = solve_case(&c, &g, &FormulationOptions::default(), &QuantileConfig::default(), &SolveConfig::exact())
        .unwrap();
    let s = &sol.schedule;
    for t in 0..c.horizon {
        let p: f64 = s.generators.iter().map(|g| g.power[t]).sum();
        let w: f64 = s.wind_farms.iter().map(|w| w.scheduled[t]).sum();
        assert_abs_diff_eq!(p + w, c.total_demand(t), epsilon = 1e-5);
        assert!(s.total_reserve_up(t) >= c.risk.reserve_up_extra - sol.table.reserve_up[t] - 1e-5);
        assert!(s.total_reserve_down(t) >= c.risk.reserve_down_extra + sol.table.reserve_down[t] - 1e-5);
        for (i, gen) in c.generators.iter().enumerate() {
            let gs = &s.generators[i];
            let v = if gs.on[t] { 1.0 } else { 0.0 };
            assert!(gs.power[t] + gs.reserve_up[t] <= gen.p_max * v + 1e-5);
            assert!(gs.power[t] - gs.reserve_down[t] >= gen.p_min * v - 1e-5);
        }
    }
    assert_abs_diff_eq!(s.costs.total, sol.result.objective, epsilon = 1e-6 * s.costs.total);
}

#[test]
fn extract_rejects_infeasible_assignment() {
    let (c, g) = case3();
    let sol = solve_case(&c, &g, &FormulationOptions::default(), &QuantileConfig::default(), &SolveConfig::exact())
        .unwrap();
    let vars = UcVariables::from_model(&c, &sol.model).unwrap();
    let mut x = sol.result.assignment.clone();
    x[vars.power[0][1]] += 5.0;
    assert!(matches!(extract_schedule(&c, &sol.model, &x), Err(Error::Input(_))));
    assert!(matches!(extract_schedule(&c, &sol.model, &x[1..]), Err(Error::Input(_))));
    assert!(extract_schedule(&c, &sol.model, &sol.result.assignment).is_ok());
}

#[test]
fn mixture_dimension_checked() {
    let (c, _) = case3();
    let ptdf = compute_ptdf(&c.network).unwrap();
    let wrong = vec![gaussian(2, 1.0); 4];
    assert!(build_quantile_table(&wrong, &c, &ptdf, &QuantileConfig::default()).is_err());
    let short = vec![gaussian(1, 1.0); 3];
    assert!(build_quantile_table(&short, &c, &ptdf, &QuantileConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Tighter risk levels push every reserve requirement and line margin outward.
    #[test]
    fn margins_grow_as_alpha_shrinks(
        a in 0.01f64..0.2,
        shrink in 0.1f64..0.9,
        w in 0.1f64..0.9,
        m1 in -30.0f64..0.0,
        m2 in 0.0f64..30.0,
        v1 in 1.0f64..400.0,
        v2 in 1.0f64..400.0,
    ) {
        let (c, _) = case3();
        let g = Gmm::new(1, vec![
            GaussianComponent { weight: w, mean: vec![m1], covariance: vec![vec![v1]] },
            GaussianComponent { weight: 1.0 - w, mean: vec![m2], covariance: vec![vec![v2]] },
        ]).unwrap();
        let gs = vec![g; 4];
        let ptdf = compute_ptdf(&c.network).unwrap();
        let table_at = |alpha: f64| {
            let mut c = c.clone();
            c.risk = c.risk.with_uniform_alpha(alpha);
            build_quantile_table(&gs, &c, &ptdf, &QuantileConfig::default()).unwrap()
        };
        let loose = table_at(a);
        let tight = table_at(a * shrink);
        prop_assert!(tight.reserve_up[0] <= loose.reserve_up[0] + 1e-9);
        prop_assert!(tight.reserve_down[0] >= loose.reserve_down[0] - 1e-9);
        prop_assert!(loose.reserve_up[0] < loose.reserve_down[0]);
        for l in 0..3 {
            prop_assert!(tight.line_fwd[0][l] >= loose.line_fwd[0][l] - 1e-9);
            prop_assert!(tight.line_rev[0][l] <= loose.line_rev[0][l] + 1e-9);
        }
    }
}
