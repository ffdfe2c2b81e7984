//! Latency sweeps over seeded bindings.

use std::io;

use pvd_core::InterfaceSpec;
use serde::{Deserialize, Serialize};

use crate::executor::{bindings_for, ExecError, Sampling, Session, TraceEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub interaction: String,
    pub kind: String,
    pub bound_ms: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
    pub violations: usize,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(spec: &InterfaceSpec, interaction: &str, events: &[TraceEvent]) -> BenchRow {
    let inter = spec.interaction(interaction);
    let bound = inter.map_or(f64::INFINITY, |i| i.latency_bound_ms);
    let mut lat: Vec<f64> = events.iter().map(TraceEvent::total_ms).collect();
    lat.sort_by(f64::total_cmp);
    BenchRow {
        interaction: interaction.to_string(),
        kind: inter.map_or("", |i| i.kind.name()).to_string(),
        bound_ms: bound,
        p50: percentile(&lat, 50.0),
        p95: percentile(&lat, 95.0),
        max: lat.last().copied().unwrap_or(0.0),
        violations: lat.iter().filter(|l| **l > bound).count(),
    }
}

/// Warms the session, then times every interaction over its bindings.
/// Events are returned alongside the summary rows.
pub fn bench(session: &mut Session<'_>, spec: &InterfaceSpec, sampling: Sampling) -> Result<(Vec<BenchRow>, Vec<TraceEvent>), ExecError> {
    session.warm()?;
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for inter in &spec.interactions {
        let (bindings, _) = bindings_for(spec, &inter.name, sampling)?;
        let mut events = Vec::with_capacity(bindings.len());
        for b in &bindings {
            events.push(session.interact(&inter.name, b)?.1);
        }
        rows.push(summarize(spec, &inter.name, &events));
        all.extend(events);
    }
    Ok((rows, all))
}

pub fn write_bench_csv<W: io::Write>(out: W, rows: &[BenchRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
