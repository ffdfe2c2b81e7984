mod common;

use std::collections::BTreeMap;

use common::{congress_db, congress_trio, shape_of, small_fixtures, stats_of, Shape};
use proptest::prelude::*;
use pvd_core::cost::{interaction_latency, structure_costs};
use pvd_core::deploy::{DeployError, Link, Site};
use pvd_core::optimizer::{enumerate_candidates, OptimizerConfig};
use pvd_core::physical::Strategy;
use pvd_core::samples;
use pvd_core::{assess, Calibration, DeploymentModel, SiteId};

const CLIENT: SiteId = SiteId::Client;
const SERVER: SiteId = SiteId::Server;
const CLOUD: SiteId = SiteId::Cloud;

#[test]
fn empty_transfer_costs_the_link_latency() {
    let dm = DeploymentModel::with_links(5.0, 1e3, 10.0, 1e3);
    assert_eq!(dm.transfer_cost(CLIENT, SERVER, 0), 5.0);
    assert_eq!(dm.transfer_cost(SERVER, CLIENT, 0), 5.0);
    assert_eq!(dm.transfer_cost(SERVER, SERVER, 1 << 30), 0.0);
}

#[test]
fn megabyte_over_a_slow_link() {
    let dm = DeploymentModel::with_links(5.0, 1e3, 10.0, 1e3);
    assert_eq!(dm.transfer_cost(CLIENT, SERVER, 1_000_000), 1005.0);
}

#[test]
fn client_to_cloud_routes_through_the_server() {
    for dm in [DeploymentModel::lan(), DeploymentModel::wan()] {
        for bytes in [0, 1, 12_345, 1 << 24] {
            let direct = dm.transfer_cost(CLIENT, CLOUD, bytes);
            let hops = dm.transfer_cost(CLIENT, SERVER, bytes) + dm.transfer_cost(SERVER, CLOUD, bytes);
            assert_eq!(direct, hops);
            assert_eq!(direct, dm.transfer_cost(CLOUD, CLIENT, bytes));
        }
    }
}

#[test]
fn fits_checks_each_budget() {
    let mut dm = DeploymentModel::lan();
    assert!(dm.fits(&BTreeMap::new()).values().all(|ok| *ok));
    dm.site_mut(CLIENT).memory_budget_bytes = Some(1_000_000);
    let placed = BTreeMap::from([(CLIENT, 2_000_000), (SERVER, 2_000_000), (CLOUD, u64::MAX)]);
    let fits = dm.fits(&placed);
    assert!(!fits[&CLIENT]);
    assert!(fits[&SERVER]);
    assert!(fits[&CLOUD]);
}

#[test]
fn deployment_validation() {
    let site = |id, b| Site {
        id,
        memory_budget_bytes: b,
        compute_scale: 1.0,
    };
    let link = |a, b| Link {
        endpoints: (a, b),
        latency_ms: 1.0,
        bandwidth_bytes_per_ms: 1.0,
    };
    let ok = DeploymentModel::new(
        [site(CLIENT, Some(1)), site(SERVER, Some(1)), site(CLOUD, None)],
        link(CLIENT, SERVER),
        link(SERVER, CLOUD),
    );
    assert!(ok.is_ok());
    let dup = DeploymentModel::new(
        [site(CLIENT, Some(1)), site(CLIENT, Some(1)), site(CLOUD, None)],
        link(CLIENT, SERVER),
        link(SERVER, CLOUD),
    );
    assert_eq!(dup, Err(DeployError::DuplicateSite(CLIENT)));
    let unlimited = DeploymentModel::new(
        [site(CLIENT, None), site(SERVER, Some(1)), site(CLOUD, None)],
        link(CLIENT, SERVER),
        link(SERVER, CLOUD),
    );
    assert_eq!(unlimited, Err(DeployError::UnlimitedSite(CLIENT)));
    let mut bad = link(CLIENT, SERVER);
    bad.bandwidth_bytes_per_ms = 0.0;
    let bad = DeploymentModel::new(
        [site(CLIENT, Some(1)), site(SERVER, Some(1)), site(CLOUD, None)],
        bad,
        link(SERVER, CLOUD),
    );
    assert_eq!(bad, Err(DeployError::BadLink(CLIENT, SERVER)));
    assert!(DeploymentModel::lan().validate().is_ok());
    assert!(DeploymentModel::wan().validate().is_ok());
}

#[test]
fn compute_scale_two_doubles_every_constant() {
    let cal = Calibration::default();
    let mut dm = DeploymentModel::lan();
    dm.site_mut(CLIENT).compute_scale = 2.0;
    let c = cal.for_site(&dm, CLIENT);
    assert_eq!(c.c_scan, 2.0 * cal.c_scan);
    assert_eq!(c.c_hash, 2.0 * cal.c_hash);
    assert_eq!(c.c_probe, 2.0 * cal.c_probe);
    assert_eq!(c.c_sort, 2.0 * cal.c_sort);
    assert_eq!(c.c_cell, 2.0 * cal.c_cell);
    assert_eq!(cal.for_site(&dm, SERVER), cal);
    assert!(cal.is_valid() && c.is_valid());
}

fn congress_setup() -> (pvd_core::InterfaceSpec, pvd_core::stats::DatabaseStats, Vec<pvd_core::PhysicalPlan>) {
    let spec = samples::congress();
    let stats = stats_of(&congress_db(20, 3));
    let plans = enumerate_candidates(&spec, &OptimizerConfig::default()).plans;
    (spec, stats, plans)
}

#[test]
fn three_congress_plans_under_the_default_deployment() {
    let (spec, stats, plans) = congress_setup();
    let (c, d, e) = congress_trio(&plans);
    let dm = DeploymentModel::lan();
    let cal = Calibration::default();
    let rc = assess(&c, &spec, &dm, &cal, &stats).unwrap();
    let rd = assess(&d, &spec, &dm, &cal, &stats).unwrap();
    let re = assess(&e, &spec, &dm, &cal, &stats).unwrap();

    assert!(!rc.feasible);
    assert!(rc.violated.iter().any(|v| v.interaction == "date_slider"));
    assert!(rd.feasible, "{rd:?}");
    assert!(re.feasible, "{re:?}");
    assert!(re.client_bytes() > rd.client_bytes());
    assert_eq!(rd.client_bytes(), 0);
    assert!(rd.server_bytes() > 0);
}

#[test]
fn baseline_slider_pays_the_round_trip() {
    let (spec, stats, plans) = congress_setup();
    let (c, _, _) = congress_trio(&plans);
    for dm in [DeploymentModel::lan(), DeploymentModel::wan()] {
        let floor = 2.0 * (dm.link(CLIENT, SERVER).unwrap().latency_ms + dm.link(SERVER, CLOUD).unwrap().latency_ms);
        let l = interaction_latency(&c, spec.interaction("date_slider").unwrap(), &dm, &Calibration::default(), &stats).unwrap();
        assert!(l.total_ms >= floor, "{} < {floor}", l.total_ms);
    }
}

#[test]
fn client_cube_slider_is_eval_only() {
    let (spec, stats, plans) = congress_setup();
    let (_, _, e) = congress_trio(&plans);
    let cal = Calibration::default();
    let l = interaction_latency(&e, spec.interaction("date_slider").unwrap(), &DeploymentModel::lan(), &cal, &stats).unwrap();
    assert_eq!(l.build_ms, 0.0);
    assert_eq!(l.ship_ms, 0.0);
    assert!(l.total_ms < 20.0 / 10.0, "{l:?}");
    // Prefix sums span the name and date dims: 2^2 corners for each of 100 members.
    let Strategy::Structured(s) = e.views[0].strategy().unwrap() else { panic!() };
    let costs = structure_costs(s.kind, s.build_input, s.build_site, s.eval_site, &DeploymentModel::lan(), &cal, &stats).unwrap();
    assert!((costs.eval.eval_cost_ms - 100.0 * 4.0 * cal.c_cell).abs() < 1e-12);
}

#[test]
fn server_cube_rebuilds_on_chamber_change_only() {
    let (spec, stats, plans) = congress_setup();
    let (_, d, _) = congress_trio(&plans);
    let dm = DeploymentModel::lan();
    let cal = Calibration::default();
    let chamber = interaction_latency(&d, spec.interaction("chamber_dropdown").unwrap(), &dm, &cal, &stats).unwrap();
    let slider = interaction_latency(&d, spec.interaction("date_slider").unwrap(), &dm, &cal, &stats).unwrap();
    assert!(chamber.build_ms > 0.0);
    assert_eq!(slider.build_ms, 0.0);
    assert!(chamber.total_ms > slider.total_ms);
}

#[test]
fn choice_free_spec_without_interactions_is_free() {
    let mut spec = samples::filter();
    spec.interactions.clear();
    spec.views[0].plan = pvd_core::PlanNode::scan("flights").project(&["dest"]);
    let stats = stats_of(&common::flights_db(50, 1));
    let plans = enumerate_candidates(&spec, &OptimizerConfig::default()).plans;
    let r = assess(&plans[0], &spec, &DeploymentModel::lan(), &Calibration::default(), &stats).unwrap();
    assert!(r.feasible);
    assert!(r.site_bytes.values().all(|b| *b == 0));
    assert!(r.per_interaction_latency_ms.is_empty());
}

#[test]
fn over_budget_client_is_reported() {
    let (spec, stats, plans) = congress_setup();
    let (_, _, e) = congress_trio(&plans);
    let mut dm = DeploymentModel::lan();
    dm.site_mut(CLIENT).memory_budget_bytes = Some(1);
    let r = assess(&e, &spec, &dm, &Calibration::default(), &stats).unwrap();
    assert!(!r.feasible);
    assert_eq!(r.over_budget, vec![CLIENT]);
    assert!(r.violated.is_empty());
}

#[test]
fn footprint_is_the_resident_structure_size() {
    let (spec, stats, plans) = congress_setup();
    let dm = DeploymentModel::lan();
    let cal = Calibration::default();
    for p in &plans {
        let r = assess(p, &spec, &dm, &cal, &stats).unwrap();
        let expect = match p.views[0].strategy().unwrap() {
            Strategy::Baseline { .. } => BTreeMap::new(),
            Strategy::Structured(s) => {
                let costs = structure_costs(s.kind, s.build_input, s.build_site, s.eval_site, &dm, &cal, &stats).unwrap();
                let copies = if s.replicate { pvd_core::cost::replica_count(&spec, s.keyed_by) } else { 1 };
                BTreeMap::from([(s.eval_site, costs.eval.size_bytes * copies)])
            }
        };
        for site in SiteId::ALL {
            assert_eq!(r.site_bytes[&site], expect.get(&site).copied().unwrap_or(0), "{}", p.summary());
        }
    }
}

#[test]
fn caches_untouched_by_an_interaction_cost_no_build() {
    let dm = DeploymentModel::lan();
    let cal = Calibration::default();
    for (name, spec, db) in small_fixtures() {
        let stats = stats_of(&db);
        for p in enumerate_candidates(&spec, &OptimizerConfig::default()).plans {
            let Strategy::Structured(s) = p.views[0].strategy().unwrap() else { continue };
            for i in &spec.interactions {
                let l = interaction_latency(&p, i, &dm, &cal, &stats).unwrap();
                if s.replicate || s.keyed_by.is_disjoint(&i.bound_choices) {
                    assert_eq!(l.build_ms, 0.0, "{name} {} {}", i.name, p.summary());
                } else {
                    assert!(l.build_ms > 0.0, "{name} {} {}", i.name, p.summary());
                }
            }
        }
    }
}

#[test]
fn shapes_cover_every_site_assignment() {
    let (_, _, plans) = congress_setup();
    for p in &plans {
        if let Shape::Structured { build, eval, residual, .. } = shape_of(p) {
            assert!(build.upstream_or_equal(eval) && eval.upstream_or_equal(residual));
        }
    }
}

proptest! {
    #[test]
    fn transfer_is_monotone_in_bytes(a in 0u64..1 << 40, b in 0u64..1 << 40, from in 0usize..3, to in 0usize..3) {
        let dm = DeploymentModel::wan();
        let (lo, hi) = (a.min(b), a.max(b));
        let (f, t) = (SiteId::ALL[from], SiteId::ALL[to]);
        prop_assert!(dm.transfer_cost(f, t, lo) <= dm.transfer_cost(f, t, hi));
    }

    #[test]
    fn shrinking_a_placement_keeps_it_fitting(c in 0u64..1 << 32, s in 0u64..1 << 34, shrink in 0.0f64..1.0) {
        let dm = DeploymentModel::lan();
        let big = BTreeMap::from([(CLIENT, c), (SERVER, s)]);
        let small = BTreeMap::from([(CLIENT, (c as f64 * shrink) as u64), (SERVER, (s as f64 * shrink) as u64)]);
        let (fb, fs) = (dm.fits(&big), dm.fits(&small));
        for site in SiteId::ALL {
            prop_assert!(!fb[&site] || fs[&site]);
        }
    }

    #[test]
    fn relaxing_bounds_preserves_feasibility(factor in 1.0f64..50.0, idx in 0usize..1000) {
        let (spec, stats, plans) = congress_setup();
        let p = &plans[idx % plans.len()];
        let dm = DeploymentModel::lan();
        let cal = Calibration::default();
        let before = assess(p, &spec, &dm, &cal, &stats).unwrap();
        let after = assess(p, &spec.with_scaled_bounds(factor), &dm, &cal, &stats).unwrap();
        prop_assert!(!before.feasible || after.feasible);
        prop_assert!(after.violated.len() <= before.violated.len());
    }
}
