//! Sites, memory budgets and the two network links.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Execution sites, ordered from the user outwards: `Client < Server < Cloud`.
/// A site is upstream of another when it compares greater.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteId {
    Client,
    Server,
    Cloud,
}

impl SiteId {
    pub const ALL: [SiteId; 3] = [SiteId::Client, SiteId::Server, SiteId::Cloud];

    pub fn name(self) -> &'static str {
        match self {
            SiteId::Client => "client",
            SiteId::Server => "server",
            SiteId::Cloud => "cloud",
        }
    }

    /// True if `self` is `other` or further from the client.
    pub fn upstream_or_equal(self, other: SiteId) -> bool {
        self >= other
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: SiteId,
    /// `None` means unlimited.
    pub memory_budget_bytes: Option<u64>,
    pub compute_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub endpoints: (SiteId, SiteId),
    pub latency_ms: f64,
    pub bandwidth_bytes_per_ms: f64,
}

impl Link {
    pub fn transfer_time(&self, bytes: u64) -> f64 {
        self.latency_ms + bytes as f64 / self.bandwidth_bytes_per_ms
    }

    fn joins(&self, a: SiteId, b: SiteId) -> bool {
        self.endpoints == (a, b) || self.endpoints == (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeployError {
    #[error("site {0} is missing")]
    MissingSite(SiteId),
    #[error("site {0} appears more than once")]
    DuplicateSite(SiteId),
    #[error("site {0} has a non-positive compute scale")]
    BadScale(SiteId),
    #[error("only the cloud may have an unlimited budget, not {0}")]
    UnlimitedSite(SiteId),
    #[error("expected exactly the client-server and server-cloud links")]
    BadLinks,
    #[error("link {0}-{1} needs latency >= 0 and bandwidth > 0")]
    BadLink(SiteId, SiteId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentModel {
    pub sites: Vec<Site>,
    pub links: Vec<Link>,
}

const MIB: u64 = 1 << 20;

impl Default for DeploymentModel {
    fn default() -> Self {
        DeploymentModel::lan()
    }
}

impl DeploymentModel {
    pub fn new(sites: [Site; 3], client_server: Link, server_cloud: Link) -> Result<Self, DeployError> {
        let dm = DeploymentModel {
            sites: sites.to_vec(),
            links: alloc::vec![client_server, server_cloud],
        };
        dm.validate()?;
        Ok(dm)
    }

    /// 64 MiB client and 1 GiB server on a fast local link; a slower link
    /// to an unlimited cloud.
    pub fn lan() -> Self {
        DeploymentModel::with_links(1.0, 1.0e5, 10.0, 1.0e4)
    }

    /// Same budgets with wide-area latencies.
    pub fn wan() -> Self {
        DeploymentModel::with_links(40.0, 1.0e4, 80.0, 1.0e3)
    }

    pub fn with_links(cs_latency: f64, cs_bandwidth: f64, sc_latency: f64, sc_bandwidth: f64) -> Self {
        DeploymentModel {
            sites: alloc::vec![
                Site {
                    id: SiteId::Client,
                    memory_budget_bytes: Some(64 * MIB),
                    compute_scale: 1.0,
                },
                Site {
                    id: SiteId::Server,
                    memory_budget_bytes: Some(1024 * MIB),
                    compute_scale: 1.0,
                },
                Site {
                    id: SiteId::Cloud,
                    memory_budget_bytes: None,
                    compute_scale: 1.0,
                },
            ],
            links: alloc::vec![
                Link {
                    endpoints: (SiteId::Client, SiteId::Server),
                    latency_ms: cs_latency,
                    bandwidth_bytes_per_ms: cs_bandwidth,
                },
                Link {
                    endpoints: (SiteId::Server, SiteId::Cloud),
                    latency_ms: sc_latency,
                    bandwidth_bytes_per_ms: sc_bandwidth,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), DeployError> {
        for id in SiteId::ALL {
            match self.sites.iter().filter(|s| s.id == id).count() {
                0 => return Err(DeployError::MissingSite(id)),
                1 => {}
                _ => return Err(DeployError::DuplicateSite(id)),
            }
        }
        if self.sites.len() != 3 {
            return Err(DeployError::BadLinks);
        }
        for s in &self.sites {
            if !(s.compute_scale > 0.0 && s.compute_scale.is_finite()) {
                return Err(DeployError::BadScale(s.id));
            }
            if s.memory_budget_bytes.is_none() && s.id != SiteId::Cloud {
                return Err(DeployError::UnlimitedSite(s.id));
            }
        }
        let cs = self.links.iter().filter(|l| l.joins(SiteId::Client, SiteId::Server)).count();
        let sc = self.links.iter().filter(|l| l.joins(SiteId::Server, SiteId::Cloud)).count();
        if self.links.len() != 2 || cs != 1 || sc != 1 {
            return Err(DeployError::BadLinks);
        }
        for l in &self.links {
            if !(l.latency_ms >= 0.0 && l.bandwidth_bytes_per_ms > 0.0) {
                return Err(DeployError::BadLink(l.endpoints.0, l.endpoints.1));
            }
        }
        Ok(())
    }

    pub fn site(&self, id: SiteId) -> &Site {
        self.sites.iter().find(|s| s.id == id).expect("validated deployment has every site")
    }

    pub fn site_mut(&mut self, id: SiteId) -> &mut Site {
        self.sites.iter_mut().find(|s| s.id == id).expect("validated deployment has every site")
    }

    /// The link between two adjacent sites.
    pub fn link(&self, a: SiteId, b: SiteId) -> Option<&Link> {
        self.links.iter().find(|l| l.joins(a, b))
    }

    /// Milliseconds to move `bytes` from one site to another, summed over
    /// every hop of the path. Zero when the sites coincide.
    pub fn transfer_cost(&self, from: SiteId, to: SiteId, bytes: u64) -> f64 {
        let (lo, hi) = if from <= to { (from, to) } else { (to, from) };
        let mut total = 0.0;
        let mut cur = lo;
        while cur < hi {
            let next = match cur {
                SiteId::Client => SiteId::Server,
                _ => SiteId::Cloud,
            };
            total += self.link(cur, next).map_or(0.0, |l| l.transfer_time(bytes));
            cur = next;
        }
        total
    }

    /// Per-site check that the placed bytes fit the budget.
    pub fn fits(&self, placements: &BTreeMap<SiteId, u64>) -> BTreeMap<SiteId, bool> {
        SiteId::ALL
            .iter()
            .map(|&id| {
                let placed = placements.get(&id).copied().unwrap_or(0);
                let ok = self.site(id).memory_budget_bytes.is_none_or(|b| placed <= b);
                (id, ok)
            })
            .collect()
    }

    /// Copy with every finite budget multiplied by `factor`.
    pub fn with_scaled_budgets(&self, factor: f64) -> Self {
        let mut dm = self.clone();
        for s in &mut dm.sites {
            if let Some(b) = s.memory_budget_bytes {
                let scaled = b as f64 * factor;
                s.memory_budget_bytes = Some(if scaled >= u64::MAX as f64 { u64::MAX } else { scaled as u64 });
            }
        }
        dm
    }
}
