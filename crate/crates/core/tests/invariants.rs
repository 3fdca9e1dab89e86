use std::cmp::Ordering;
use std::collections::BTreeMap;

use proptest::prelude::*;

use fieldcalc::blocks;
use fieldcalc::eval::{parse_tree, to_notation, ValueTree};
use fieldcalc::lang::{parse, parse_expr, pretty_expr, Expr};
use fieldcalc::net::scenario::{SensorOverride, SensorValue};
use fieldcalc::net::{self, Point, Scenario};
use fieldcalc::stability::empirical_selfstab;
use fieldcalc::value::{DeviceId, DeviceNaming, LocalValue, NeighbouringField, Value};

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => (-1000i32..1000).prop_map(f64::from),
        4 => -1e6f64..1e6,
        1 => Just(f64::INFINITY),
        1 => Just(f64::NEG_INFINITY),
    ]
}

fn local() -> impl Strategy<Value = LocalValue> {
    let leaf = prop_oneof![number().prop_map(LocalValue::Num), any::<bool>().prop_map(LocalValue::Bool)];
    leaf.prop_recursive(2, 8, 3, |inner| prop::collection::vec(inner, 2..4).prop_map(LocalValue::tuple))
}

fn field() -> impl Strategy<Value = NeighbouringField> {
    prop::collection::btree_map(1u32..40, number().prop_map(LocalValue::Num), 1..4)
        .prop_map(|m| NeighbouringField::from_entries(m))
}

fn tree() -> impl Strategy<Value = ValueTree> {
    let root = prop_oneof![3 => local().prop_map(Value::Local), 1 => field().prop_map(Value::Field)];
    let leaf = root.clone().prop_map(ValueTree::leaf);
    leaf.prop_recursive(3, 24, 3, move |inner| {
        (root.clone(), prop::collection::vec(inner, 1..4)).prop_map(|(r, cs)| ValueTree::node(r, cs))
    })
}

fn ident() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["x", "y", "v", "acc"]).prop_map(str::to_string)
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        ident().prop_map(|v| Expr::var(&v)),
        (0u32..100).prop_map(|n| Expr::num(f64::from(n))),
        Just(Expr::call("snsNum", vec![])),
    ];
    leaf.prop_recursive(4, 32, 3, |inner| {
        let op = prop::sample::select(vec!["+", "-", "*", "/", "<", "=", "&&", "||"]);
        prop_oneof![
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::call(o, vec![a, b])),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(a, b, c)| Expr::call("mux", vec![a, b, c])),
            inner.clone().prop_map(|a| Expr::Nbr(Box::new(a))),
            inner.clone().prop_map(|a| Expr::call("minHood+", vec![a])),
            (ident(), inner.clone(), inner.clone()).prop_map(|(v, i, u)| Expr::Rep {
                init: Box::new(i),
                var: v,
                update: Box::new(u),
            }),
            (ident(), inner.clone(), inner.clone()).prop_map(|(n, b, body)| Expr::Let {
                name: n,
                bound: Box::new(b),
                body: Box::new(body),
            }),
            (inner.clone(), inner.clone(), inner).prop_map(|(g, t, e)| Expr::If {
                guard: Box::new(g),
                then_branch: Box::new(t),
                else_branch: Box::new(e),
            }),
        ]
    })
}

/// Random points; the first one carries the source sensor.
fn gradient_scenario(pts: &[(f64, f64)], seed: u64) -> Scenario {
    let positions = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
    let mut s = Scenario::frozen(positions, 25.0, seed, 1000.0);
    s.devices.sensors.insert("source".into(), SensorValue::Bool(false));
    s.devices.overrides.push(SensorOverride {
        device: 0,
        sensor: "source".into(),
        value: SensorValue::Bool(true),
    });
    s
}

fn dijkstra(pts: &[(f64, f64)], radius: f64) -> Vec<f64> {
    let d = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut dist = vec![f64::INFINITY; pts.len()];
    let mut done = vec![false; pts.len()];
    dist[0] = 0.0;
    while let Some(u) = (0..pts.len()).filter(|i| !done[*i] && dist[*i].is_finite()).min_by(|a, b| dist[*a].total_cmp(&dist[*b])) {
        done[u] = true;
        for v in 0..pts.len() {
            let r = d(pts[u], pts[v]);
            if v != u && r <= radius {
                dist[v] = dist[v].min(dist[u] + r);
            }
        }
    }
    dist
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn notation_round_trips(t in tree()) {
        let text = to_notation(&t, DeviceNaming::Numeric);
        prop_assert_eq!(parse_tree(&text).unwrap(), t, "{}", text);
    }

    #[test]
    fn alpha_labels_round_trip(id in 1u32..100_000) {
        let name = DeviceNaming::Alpha.name(id);
        prop_assert_eq!(DeviceNaming::parse_label(&name[name.char_indices().nth(1).unwrap().0..]), Some((id, DeviceNaming::Alpha)));
    }

    #[test]
    fn pretty_printing_round_trips(e in expr()) {
        let text = pretty_expr(&e);
        let back = parse_expr(&text).unwrap();
        prop_assert_eq!(pretty_expr(&back), text.clone());
        prop_assert_eq!(back, e, "{}", text);
    }

    #[test]
    fn order_is_antisymmetric(a in local(), b in local()) {
        if let (Ok(x), Ok(y)) = (a.try_cmp(&b), b.try_cmp(&a)) {
            prop_assert_eq!(x, y.reverse());
            prop_assert_eq!(x == Ordering::Equal, a.try_eq(&b).unwrap());
        }
    }

    #[test]
    fn order_is_transitive(a in number(), b in number(), c in number(), d in number(), e in number(), f in number()) {
        let (p, q, r) = (
            LocalValue::pair(a.into(), b.into()),
            LocalValue::pair(c.into(), d.into()),
            LocalValue::pair(e.into(), f.into()),
        );
        let le = |x: &LocalValue, y: &LocalValue| x.try_cmp(y).unwrap() != Ordering::Greater;
        if le(&p, &q) && le(&q, &r) {
            prop_assert!(le(&p, &r));
        }
    }

    #[test]
    fn infinities_bound_every_tuple(v in local()) {
        prop_assume!(v.as_tuple().is_some());
        prop_assert_ne!(LocalValue::Num(f64::INFINITY).try_cmp(&v).unwrap(), Ordering::Less);
        prop_assert_ne!(LocalValue::Num(f64::NEG_INFINITY).try_cmp(&v).unwrap(), Ordering::Greater);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gradient_settles_to_shortest_paths(
        pts in prop::collection::vec((0.0f64..50.0, 0.0f64..50.0), 2..10)
            .prop_filter("connected", |pts| dijkstra(pts, 25.0).iter().all(|d| d.is_finite())),
        seed in any::<u64>(),
    ) {
        let s = gradient_scenario(&pts, seed);
        let p = blocks::program("G_distanceTo(mux(source(), 0, infinity))").unwrap();
        let v = empirical_selfstab(&p, &s, 2, 2, 400).unwrap();
        prop_assert!(v.self_stabilising());
        for (i, want) in dijkstra(&pts, 25.0).into_iter().enumerate() {
            let got = v.stable_field[&(i as DeviceId)].as_num().unwrap();
            prop_assert!((got - want).abs() < 1e-9, "device {}: {} vs {}", i, got, want);
        }
    }

    #[test]
    fn closed_neighbourhood_minimum_settles(
        pts in prop::collection::vec((0.0f64..60.0, 0.0f64..60.0), 2..10),
        seed in any::<u64>(),
    ) {
        let s = gradient_scenario(&pts, seed);
        let p = parse("minHood+(nbr{snsNum()})").unwrap();
        let v = empirical_selfstab(&p, &s, 1, 2, 50).unwrap();
        prop_assert!(v.self_stabilising());
        let d = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let want: BTreeMap<DeviceId, LocalValue> = (0..pts.len())
            .map(|i| {
                let m = (0..pts.len()).filter(|j| d(pts[i], pts[*j]) <= 25.0).min().unwrap();
                (i as DeviceId, LocalValue::Num(m as f64))
            })
            .collect();
        prop_assert_eq!(v.stable_field, want);
    }

    #[test]
    fn traces_are_reproducible(
        pts in prop::collection::vec((0.0f64..60.0, 0.0f64..60.0), 2..8),
        seed in any::<u64>(),
    ) {
        let mut s = gradient_scenario(&pts, seed);
        s.duration = 15.0;
        let p = blocks::program("C_sum(G_distanceTo(mux(source(), 0, infinity)), 1)").unwrap();
        let a = net::run(&s, &p).unwrap().to_csv_string();
        prop_assert_eq!(a, net::run(&s, &p).unwrap().to_csv_string());
    }
}
