use serde::{Deserialize, Serialize};
use thiserror::Error;

/// SplitMix64: 64-bit state advanced by a fixed odd constant and mixed by
/// two xor-shift-multiply rounds. The output sequence depends only on the
/// seed, on every platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub state: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) from the top 53 bits of one draw.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DelayKind {
    VnfInstantiate,
    VnfTeardown,
    VmMigrate,
    RouteUpdate,
}

impl DelayKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DelayKind::VnfInstantiate => "vnf_instantiate",
            DelayKind::VnfTeardown => "vnf_teardown",
            DelayKind::VmMigrate => "vm_migrate",
            DelayKind::RouteUpdate => "route_update",
        }
    }
}

/// Enactment delay ranges in seconds, `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    #[serde(default = "defaults::instantiate")]
    pub vnf_instantiate: [f64; 2],
    #[serde(default = "defaults::teardown")]
    pub vnf_teardown: [f64; 2],
    #[serde(default = "defaults::migrate")]
    pub vm_migrate: [f64; 2],
    #[serde(default = "defaults::route")]
    pub route_update: [f64; 2],
}

mod defaults {
    pub fn instantiate() -> [f64; 2] {
        [20.0, 60.0]
    }
    pub fn teardown() -> [f64; 2] {
        [5.0, 15.0]
    }
    pub fn migrate() -> [f64; 2] {
        [50.0, 270.0]
    }
    pub fn route() -> [f64; 2] {
        [1.0, 5.0]
    }
}

impl Default for DelayConfig {
    fn default() -> Self {
        DelayConfig {
            vnf_instantiate: defaults::instantiate(),
            vnf_teardown: defaults::teardown(),
            vm_migrate: defaults::migrate(),
            route_update: defaults::route(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("delay range {kind} = [{lo}, {hi}] must satisfy 0 <= lo <= hi")]
pub struct InvalidDelayRange {
    pub kind: &'static str,
    pub lo: f64,
    pub hi: f64,
}

impl DelayConfig {
    pub fn range(&self, kind: DelayKind) -> [f64; 2] {
        match kind {
            DelayKind::VnfInstantiate => self.vnf_instantiate,
            DelayKind::VnfTeardown => self.vnf_teardown,
            DelayKind::VmMigrate => self.vm_migrate,
            DelayKind::RouteUpdate => self.route_update,
        }
    }

    pub fn validate(&self) -> Result<(), InvalidDelayRange> {
        for kind in [DelayKind::VnfInstantiate, DelayKind::VnfTeardown, DelayKind::VmMigrate, DelayKind::RouteUpdate] {
            let [lo, hi] = self.range(kind);
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(InvalidDelayRange { kind: kind.as_str(), lo, hi });
            }
        }
        Ok(())
    }
}

/// Uniform draw in seconds from the configured range; advances `rng` once.
pub fn sample_delay(kind: DelayKind, config: &DelayConfig, rng: &mut RngState) -> f64 {
    let [lo, hi] = config.range(kind);
    let u = rng.next_f64();
    (lo + u * (hi - lo)).min(hi)
}
