use std::path::Path;

use approx::assert_abs_diff_eq;
use ccuc::grid::{compute_ptdf, load_case, parse_case, Branch, Network, Uncertainty};
use ccuc::Error;
use proptest::prelude::*;

fn data_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn case3_json() -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(data_dir().join("case3.json")).unwrap()).unwrap()
}

fn network_strategy() -> impl Strategy<Value = Network> {
    (2usize..10)
        .prop_flat_map(|n| {
            let tree = (1..n).map(|k| (0..k, 0.01f64..1.0)).collect::<Vec<_>>();
            let extra = prop::collection::vec((0..n, 0..n, 0.01f64..1.0), 0..n);
            (Just(n), tree, extra, 0..n)
        })
        .prop_map(|(n, tree, extra, slack)| {
            let buses: Vec<u32> = (0..n as u32).map(|k| 100 + 7 * k).collect();
            let mut branches: Vec<Branch> = tree
                .into_iter()
                .enumerate()
                .map(|(k, (parent, x))| branch(buses[parent], buses[k + 1], x))
                .collect();
            branches.extend(
                extra
                    .into_iter()
                    .filter(|(a, b, _)| a != b)
                    .map(|(a, b, x)| branch(buses[a], buses[b], x)),
            );
            Network {
                slack_bus: buses[slack],
                buses,
                branches,
            }
        })
}

fn branch(from: u32, to: u32, x: f64) -> Branch {
    Branch {
        name: None,
        from_bus: from,
        to_bus: to,
        reactance: x,
        capacity: 100.0,
        alpha_plus: None,
        alpha_minus: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Injection at the slack bus moves nothing, and flows out of every
    /// non-slack bus add up to its injection.
    #[test]
    fn ptdf_flows_conserve_power(net in network_strategy(), raw in prop::collection::vec(-50.0f64..50.0, 10)) {
        let ptdf = compute_ptdf(&net).unwrap();
        let n = net.buses.len();
        for l in 0..net.branches.len() {
            prop_assert_eq!(ptdf.at_bus(l, net.slack_bus), 0.0);
        }
        let inj: Vec<f64> = raw[..n].to_vec();
        let flows = ptdf.flows(&inj);
        for (k, bus) in net.buses.iter().enumerate() {
            if *bus == net.slack_bus {
                continue;
            }
            let out: f64 = net.branches.iter().zip(&flows).map(|(b, f)| {
                if b.from_bus == *bus { *f } else if b.to_bus == *bus { -*f } else { 0.0 }
            }).sum();
            prop_assert!((out - inj[k]).abs() < 1e-8, "bus {bus}: out {out} vs injection {}", inj[k]);
        }
    }
}

#[test]
fn parallel_lines_share_by_admittance() {
    let net = Network {
        buses: vec![1, 2],
        slack_bus: 1,
        branches: vec![branch(1, 2, 0.1), branch(1, 2, 0.3)],
    };
    let ptdf = compute_ptdf(&net).unwrap();
    // 100 MW from bus 1 to bus 2 splits 3:1
    let f = ptdf.flows(&[100.0, -100.0]);
    assert_abs_diff_eq!(f[0], 75.0, epsilon = 1e-12);
    assert_abs_diff_eq!(f[1], 25.0, epsilon = 1e-12);
}

#[test]
fn shipped_cases_load() {
    for name in ["case3.json", "case3-tight.json", "case6.json", "skewed.json"] {
        let c = load_case(data_dir().join(name)).unwrap();
        c.check().unwrap();
        match &c.uncertainty {
            Uncertainty::GmmFile(_) => assert_eq!(c.load_gmms().unwrap().unwrap().len(), c.horizon),
            Uncertainty::Intervals(iv) => assert_eq!(iv.len(), c.horizon),
        }
    }
}

#[test]
fn case_round_trips_through_json() {
    let c = load_case(data_dir().join("case6.json")).unwrap();
    let text = serde_json::to_string(&c).unwrap();
    let back = parse_case(&text, data_dir()).unwrap();
    assert_eq!(back, c);
}

fn schema_pointer(v: serde_json::Value) -> String {
    match parse_case(&v.to_string(), data_dir()) {
        Err(Error::Schema { pointer, .. }) => pointer,
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn schema_errors_point_at_the_field() {
    let mut v = case3_json();
    v["generators"][1]["bus"] = 9.into();
    assert_eq!(schema_pointer(v), "/generators/1/bus");

    let mut v = case3_json();
    v["loads"][0]["demand"] = serde_json::json!([1, 2, 3]);
    assert!(schema_pointer(v).starts_with("/loads/0/demand"));

    let mut v = case3_json();
    v["risk"]["alpha_line"] = 0.7.into();
    assert_eq!(schema_pointer(v), "/risk/alpha_line");

    let mut v = case3_json();
    v["generators"][0]["p_max"] = "big".into();
    assert!(schema_pointer(v).starts_with("/generators/0"));

    let mut v = case3_json();
    v["generators"][2]["a"] = (-0.1).into();
    assert_eq!(schema_pointer(v), "/generators/2/a");
}

#[test]
fn disconnected_network_is_a_schema_error() {
    let mut v = case3_json();
    v["network"]["buses"] = serde_json::json!([1, 2, 3, 4]);
    assert!(schema_pointer(v).starts_with("/network"));
}
