//! Deterministic deliberation cost model, in ticks.

use crate::error::{Error, Result};

/// Tick charges for policy generation and envelope alteration.
///
/// A policy-iteration round on a domain of `m` states costs `c_pg * m^3`;
/// path search costs `c_fp` per expanded node; robustify and prune cost
/// `c_alt * |E|` per analysis plus `c_add` per state changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostModel {
    pub c_pg: u64,
    pub c_fp: u64,
    pub c_alt: u64,
    pub c_add: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            c_pg: 1,
            c_fp: 1,
            c_alt: 10,
            c_add: 1,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if self.c_pg == 0 || self.c_fp == 0 || self.c_alt == 0 || self.c_add == 0 {
            return Err(Error::InvalidConfig("cost constants must be positive".into()));
        }
        Ok(())
    }

    pub fn pg_round(&self, domain: usize) -> u64 {
        let m = domain.max(1) as u64;
        self.c_pg.saturating_mul(m.saturating_mul(m).saturating_mul(m))
    }

    pub fn find_path(&self, expanded: usize) -> u64 {
        self.c_fp.saturating_mul(expanded.max(1) as u64)
    }

    pub fn alteration(&self, envelope: usize, changed: usize) -> u64 {
        self.c_alt
            .saturating_mul(envelope.max(1) as u64)
            .saturating_add(self.c_add.saturating_mul(changed as u64))
    }
}
