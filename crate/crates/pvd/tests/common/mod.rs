#![allow(dead_code)]

use pvd_core::deploy::SiteId;
use pvd_core::optimizer::{enumerate_candidates, OptimizerConfig};
use pvd_core::physical::{PhysicalPlan, Strategy};
use pvd_core::relation::Database;
use pvd_core::stats::{database_stats, DatabaseStats};
use pvd_core::structures::StructureFamily;
use pvd_core::InterfaceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Baseline(SiteId),
    Structured {
        family: StructureFamily,
        build: SiteId,
        eval: SiteId,
        replicate: bool,
        residual: SiteId,
    },
}

pub fn shape_of(plan: &PhysicalPlan) -> Shape {
    match plan.views[0].strategy().unwrap() {
        Strategy::Baseline { site, .. } => Shape::Baseline(site),
        Strategy::Structured(s) => Shape::Structured {
            family: s.kind.family(),
            build: s.build_site,
            eval: s.eval_site,
            replicate: s.replicate,
            residual: s.residual_site,
        },
    }
}

pub fn candidates(spec: &InterfaceSpec) -> Vec<PhysicalPlan> {
    enumerate_candidates(spec, &OptimizerConfig::default()).plans
}

pub fn find(plans: &[PhysicalPlan], want: Shape) -> PhysicalPlan {
    plans
        .iter()
        .find(|p| shape_of(p) == want)
        .unwrap_or_else(|| panic!("no candidate shaped {want:?}"))
        .clone()
}

pub fn cube(build: SiteId, eval: SiteId, replicate: bool, residual: SiteId) -> Shape {
    Shape::Structured {
        family: StructureFamily::PrefixSumCube,
        build,
        eval,
        replicate,
        residual,
    }
}

/// Cloud baseline, server cube, and client cube replicated per chamber.
pub fn congress_trio(spec: &InterfaceSpec) -> (PhysicalPlan, PhysicalPlan, PhysicalPlan) {
    let plans = candidates(spec);
    (
        find(&plans, Shape::Baseline(SiteId::Cloud)),
        find(&plans, cube(SiteId::Server, SiteId::Server, false, SiteId::Server)),
        find(&plans, cube(SiteId::Server, SiteId::Client, true, SiteId::Client)),
    )
}

pub fn stats_of(db: &Database) -> DatabaseStats {
    database_stats(db.values())
}
