//! Runs physical plans over loaded data and checks them against the oracle.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use pvd_core::binding::{default_binding, enumerate_assignments, satisfies_range_pairs, BindError, EnumerateError};
use pvd_core::codec::{encode_relation, relation_digest};
use pvd_core::oracle::{evaluate, EvalError};
use pvd_core::physical::{PlanShapeError, Strategy};
use pvd_core::relation::{Database, Relation};
use pvd_core::structures::{build, BuildOptions, BuiltStructure, StructureError, DEFAULT_CELL_CAP};
use pvd_core::{bind, enumerate_bindings, Binding, DeploymentModel, InterfaceSpec, PhysicalPlan, SiteId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Relative tolerance for float cells when comparing against the oracle.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

const ORACLE_MEMO_LIMIT: usize = 4096;
const MAX_LISTED_FAILURES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetMode {
    Simulated,
    None,
}

impl FromStr for NetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simulated" => Ok(NetMode::Simulated),
            "none" => Ok(NetMode::None),
            other => Err(format!("unknown net mode `{other}` (simulated|none)")),
        }
    }
}

impl fmt::Display for NetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetMode::Simulated => "simulated",
            NetMode::None => "none",
        })
    }
}

/// Test hook that corrupts structures as they are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Doubles every row-count cell of a cube.
    DoubleCubeCounts,
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("unknown interaction `{0}`")]
    UnknownInteraction(String),
    #[error("plan has no view `{0}`")]
    MissingView(String),
    #[error(transparent)]
    Shape(#[from] PlanShapeError),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("internal error, cached structure is stale: {0}")]
    Stale(StructureError),
    #[error(transparent)]
    Enumerate(#[from] EnumerateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub interaction: String,
    pub binding: Binding,
    /// Wall-clock compute time.
    pub measured_ms: f64,
    pub simulated_net_ms: f64,
    pub output_digest: u64,
    /// `None` when the session does not check the oracle.
    pub matches_oracle: Option<bool>,
    pub rebuilds: u32,
    /// Prefix-sum cells read by cube evaluation.
    pub cells_read: u64,
}

impl TraceEvent {
    pub fn total_ms(&self) -> f64 {
        self.measured_ms + self.simulated_net_ms
    }
}

/// One line of an input trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceInput {
    pub interaction: String,
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CacheKey {
    pub view: String,
    pub site: SiteId,
    pub key: Binding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Exhaustive,
    Sample { n: usize, seed: u64 },
    /// Exhaustive up to `cap` bindings, otherwise a seeded sample of `n`.
    Auto { cap: u64, n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub binding: Binding,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionVerdict {
    pub interaction: String,
    pub exhaustive: bool,
    pub checked: usize,
    pub passed: usize,
    pub failed: usize,
    pub max_measured_ms: f64,
    pub max_total_ms: f64,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub interactions: Vec<InteractionVerdict>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.interactions.iter().all(|v| v.failed == 0)
    }

    pub fn checked(&self) -> usize {
        self.interactions.iter().map(|v| v.checked).sum()
    }
}

struct Timer(f64);

impl Timer {
    fn run<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0 += t.elapsed().as_secs_f64() * 1e3;
        out
    }
}

pub struct Session<'a> {
    spec: &'a InterfaceSpec,
    plan: PhysicalPlan,
    db: &'a Database,
    dm: DeploymentModel,
    net: NetMode,
    cell_cap: u64,
    state: Binding,
    cache: BTreeMap<CacheKey, BuiltStructure>,
    fault: Option<Fault>,
    check_oracle: bool,
    oracle_memo: HashMap<(String, Binding), Relation>,
    builds: u64,
}

impl<'a> Session<'a> {
    pub fn new(
        spec: &'a InterfaceSpec,
        plan: PhysicalPlan,
        db: &'a Database,
        dm: DeploymentModel,
        net: NetMode,
    ) -> Result<Self, ExecError> {
        plan.validate()?;
        for i in &spec.interactions {
            plan.view(&i.view).ok_or_else(|| ExecError::MissingView(i.view.clone()))?.strategy()?;
        }
        Ok(Session {
            spec,
            plan,
            db,
            dm,
            net,
            cell_cap: DEFAULT_CELL_CAP,
            state: default_binding(spec),
            cache: BTreeMap::new(),
            fault: None,
            check_oracle: false,
            oracle_memo: HashMap::new(),
            builds: 0,
        })
    }

    pub fn with_oracle(mut self, on: bool) -> Self {
        self.check_oracle = on;
        self
    }

    pub fn with_cell_cap(mut self, cap: u64) -> Self {
        self.cell_cap = cap;
        self
    }

    pub fn inject(&mut self, fault: Fault) {
        self.fault = Some(fault);
        self.cache.clear();
    }

    pub fn plan(&self) -> &PhysicalPlan {
        &self.plan
    }

    pub fn state(&self) -> &Binding {
        &self.state
    }

    /// Structures built so far, including those later evicted.
    pub fn builds(&self) -> u64 {
        self.builds
    }

    pub fn cached(&self) -> impl Iterator<Item = (&CacheKey, &BuiltStructure)> {
        self.cache.iter()
    }

    /// Builds every structure that does not wait on an interaction: all
    /// replicas of replicated caches and the current entry of the others.
    /// Returns the number of structures built.
    pub fn warm(&mut self) -> Result<usize, ExecError> {
        let before = self.builds;
        for vi in 0..self.plan.views.len() {
            let (keyed_by, replicate) = match self.plan.views[vi].strategy()? {
                Strategy::Baseline { .. } => continue,
                Strategy::Structured(s) => (s.keyed_by.clone(), s.replicate),
            };
            let keys: Vec<Binding> = if replicate {
                enumerate_assignments(self.spec, &keyed_by, &Binding::new(), u64::MAX)?
                    .map(|b| b.restrict(&keyed_by))
                    .collect()
            } else {
                vec![self.state.restrict(&keyed_by)]
            };
            for key in keys {
                self.ensure_built(vi, key, replicate)?;
            }
        }
        Ok((self.builds - before) as usize)
    }

    /// Builds the structure for `key` unless it is cached. Returns the
    /// compute milliseconds and the simulated shipping cost.
    fn ensure_built(&mut self, vi: usize, key: Binding, replicate: bool) -> Result<Option<(f64, f64)>, ExecError> {
        let view = &self.plan.views[vi];
        let Strategy::Structured(s) = view.strategy()? else {
            return Ok(None);
        };
        let ck = CacheKey {
            view: view.view.clone(),
            site: s.eval_site,
            key,
        };
        if self.cache.contains_key(&ck) {
            return Ok(None);
        }
        let mut timer = Timer(0.0);
        let input_plan = bind(s.build_input, &ck.key)?;
        let input = timer.run(|| evaluate(&input_plan, self.db, None))?;
        let opts = BuildOptions {
            baked: ck.key.clone(),
            cell_cap: self.cell_cap,
        };
        let mut built = timer.run(|| build(s.kind, &input, &opts))?;
        if let (Some(Fault::DoubleCubeCounts), Some(range)) = (self.fault, built.count_array_range()) {
            built = built.with_mutated_payload(|bytes| {
                for cell in bytes[range].chunks_exact_mut(8) {
                    let v = u64::from_le_bytes(cell.try_into().expect("8-byte cell"));
                    cell.copy_from_slice(&v.wrapping_mul(2).to_le_bytes());
                }
            })?;
        }
        let ship = self.dm.transfer_cost(SiteId::Cloud, s.build_site, encode_relation(&input).len() as u64)
            + self.dm.transfer_cost(s.build_site, s.eval_site, built.size_bytes());
        if !replicate {
            let name = ck.view.clone();
            self.cache.retain(|k, _| k.view != name);
        }
        self.cache.insert(ck, built);
        self.builds += 1;
        Ok(Some((timer.0, ship)))
    }

    /// Applies the interaction's choices from `binding` and refreshes its
    /// view. Values for other choices are ignored.
    pub fn interact(&mut self, interaction: &str, binding: &Binding) -> Result<(Relation, TraceEvent), ExecError> {
        let spec = self.spec;
        let inter = spec
            .interaction(interaction)
            .ok_or_else(|| ExecError::UnknownInteraction(interaction.to_string()))?;
        let logical = &spec.view(&inter.view).ok_or_else(|| ExecError::MissingView(inter.view.clone()))?.plan;
        if let Some(missing) = inter.bound_choices.iter().find(|c| binding.get(c).is_none()) {
            return Err(BindError::UnboundChoice(missing.clone()).into());
        }
        let mut next = self.state.clone();
        next.merge(&binding.restrict(&inter.bound_choices));
        let concrete = bind(logical, &next)?;
        self.state = next;

        let vi = self
            .plan
            .views
            .iter()
            .position(|v| v.view == inter.view)
            .ok_or_else(|| ExecError::MissingView(inter.view.clone()))?;
        let mut timer = Timer(0.0);
        let mut net = 0.0;
        let mut rebuilds = 0;
        let mut cells_read = 0;
        let (keyed_by, replicate) = match self.plan.views[vi].strategy()? {
            Strategy::Baseline { .. } => (BTreeSet::new(), false),
            Strategy::Structured(s) => (s.keyed_by.clone(), s.replicate),
        };
        let rebuilt = self.ensure_built(vi, self.state.restrict(&keyed_by), replicate)?;
        let out = match self.plan.views[vi].strategy()? {
            Strategy::Baseline { site, plan } => {
                let p = bind(plan, &self.state)?;
                let out = timer.run(|| evaluate(&p, self.db, None))?;
                net += self.dm.transfer_cost(SiteId::Client, site, 0);
                net += self.dm.transfer_cost(site, SiteId::Client, encode_relation(&out).len() as u64);
                out
            }
            Strategy::Structured(s) => {
                match rebuilt {
                    Some((ms, ship)) => {
                        rebuilds = 1;
                        timer.0 += ms;
                        net += self.dm.transfer_cost(SiteId::Client, SiteId::Cloud, 0) + ship;
                    }
                    None => net += self.dm.transfer_cost(SiteId::Client, s.eval_site, 0),
                }
                let ck = CacheKey {
                    view: inter.view.clone(),
                    site: s.eval_site,
                    key: self.state.restrict(s.keyed_by),
                };
                let structure = &self.cache[&ck];
                let state = &self.state;
                let (evaled, cells) = timer.run(|| structure.eval_counting(state)).map_err(|e| match e {
                    StructureError::StaleStructure { .. } => ExecError::Stale(e),
                    other => ExecError::Structure(other),
                })?;
                cells_read = cells;
                net += self.dm.transfer_cost(s.eval_site, s.residual_site, encode_relation(&evaled).len() as u64);
                let residual = bind(s.residual, &self.state)?;
                let out = timer.run(|| evaluate(&residual, self.db, Some(&evaled)))?;
                net += self.dm.transfer_cost(s.residual_site, SiteId::Client, encode_relation(&out).len() as u64);
                out
            }
        };

        let view_choices = logical.choice_ids();
        let shown = self.state.restrict(&view_choices);
        let matches_oracle = if self.check_oracle {
            let memo_key = (inter.view.clone(), shown.clone());
            if !self.oracle_memo.contains_key(&memo_key) {
                if self.oracle_memo.len() >= ORACLE_MEMO_LIMIT {
                    self.oracle_memo.clear();
                }
                let expect = evaluate(&concrete, self.db, None)?.canonicalize();
                self.oracle_memo.insert(memo_key.clone(), expect);
            }
            Some(out.canonicalize().same_contents(&self.oracle_memo[&memo_key], FLOAT_TOLERANCE))
        } else {
            None
        };
        let event = TraceEvent {
            interaction: interaction.to_string(),
            binding: shown,
            measured_ms: timer.0,
            simulated_net_ms: match self.net {
                NetMode::Simulated => net,
                NetMode::None => 0.0,
            },
            output_digest: relation_digest(&out),
            matches_oracle,
            rebuilds,
            cells_read,
        };
        Ok((out, event))
    }

    /// Runs a recorded sequence of interactions.
    pub fn replay(&mut self, inputs: &[TraceInput]) -> Result<Vec<TraceEvent>, ExecError> {
        inputs.iter().map(|t| self.interact(&t.interaction, &t.binding).map(|(_, e)| e)).collect()
    }

    /// Checks every interaction against the oracle over the chosen bindings.
    pub fn verify(&mut self, sampling: Sampling) -> Result<VerifyReport, ExecError> {
        let was = self.check_oracle;
        self.check_oracle = true;
        let result = self.verify_inner(sampling);
        self.check_oracle = was;
        result
    }

    fn verify_inner(&mut self, sampling: Sampling) -> Result<VerifyReport, ExecError> {
        let spec = self.spec;
        self.warm()?;
        let mut interactions = Vec::new();
        for inter in &spec.interactions {
            let (bindings, exhaustive) = bindings_for(spec, &inter.name, sampling)?;
            let mut v = InteractionVerdict {
                interaction: inter.name.clone(),
                exhaustive,
                checked: 0,
                passed: 0,
                failed: 0,
                max_measured_ms: 0.0,
                max_total_ms: 0.0,
                failures: Vec::new(),
            };
            for b in bindings {
                v.checked += 1;
                let reason = match self.interact(&inter.name, &b) {
                    Ok((_, e)) => {
                        v.max_measured_ms = v.max_measured_ms.max(e.measured_ms);
                        v.max_total_ms = v.max_total_ms.max(e.total_ms());
                        if e.matches_oracle == Some(true) {
                            None
                        } else {
                            Some("output differs from the oracle".to_string())
                        }
                    }
                    Err(e) => Some(e.to_string()),
                };
                match reason {
                    None => v.passed += 1,
                    Some(reason) => {
                        v.failed += 1;
                        if v.failures.len() < MAX_LISTED_FAILURES {
                            v.failures.push(Failure {
                                binding: b.restrict(&inter.bound_choices),
                                reason,
                            });
                        }
                    }
                }
            }
            interactions.push(v);
        }
        Ok(VerifyReport { interactions })
    }
}

/// Bindings of one interaction under a sampling policy, and whether they
/// cover its whole domain.
pub fn bindings_for(spec: &InterfaceSpec, interaction: &str, sampling: Sampling) -> Result<(Vec<Binding>, bool), ExecError> {
    let inter = spec
        .interaction(interaction)
        .ok_or_else(|| ExecError::UnknownInteraction(interaction.to_string()))?;
    match sampling {
        Sampling::Exhaustive => Ok((enumerate_bindings(spec, inter, u64::MAX)?.collect(), true)),
        Sampling::Sample { n, seed } => Ok((sample_bindings(spec, interaction, n, seed)?, false)),
        Sampling::Auto { cap, n, seed } => match enumerate_bindings(spec, inter, cap) {
            Ok(all) => Ok((all.collect(), true)),
            Err(EnumerateError::DomainExplosion { .. }) => Ok((sample_bindings(spec, interaction, n, seed)?, false)),
            Err(e) => Err(e.into()),
        },
    }
}

/// `n` bindings drawn uniformly (with replacement) from the interaction's
/// valid assignments, other choices held at their defaults.
pub fn sample_bindings(spec: &InterfaceSpec, interaction: &str, n: usize, seed: u64) -> Result<Vec<Binding>, ExecError> {
    let inter = spec
        .interaction(interaction)
        .ok_or_else(|| ExecError::UnknownInteraction(interaction.to_string()))?;
    let mut axes = Vec::new();
    for id in &inter.bound_choices {
        let c = spec.choice(id).ok_or_else(|| EnumerateError::UnknownChoice(id.clone()))?;
        if c.domain.is_empty() {
            return Ok(Vec::new());
        }
        axes.push((id.clone(), &c.domain));
    }
    let pairs = spec.range_pairs();
    let base = default_binding(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n && attempts < n.saturating_mul(1000).max(1000) {
        attempts += 1;
        let mut b = base.clone();
        for (id, dom) in &axes {
            let i = rng.random_range(0..dom.len());
            b.set(id.clone(), dom.value_at(i).expect("index below domain size"));
        }
        if satisfies_range_pairs(&b, &pairs) {
            out.push(b);
        }
    }
    Ok(out)
}
