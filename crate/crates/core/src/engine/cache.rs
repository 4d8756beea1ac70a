//! Memoized network evaluation per ON/OFF mask.
//!
//! Association, power and rent depend only on which SBSs are ON, so each
//! mask is evaluated once per topology and reused across slots and, in the
//! offline search, across candidate schedules.

use std::collections::HashMap;
use std::rc::Rc;

use crate::energy::bs_power;
use crate::network::{associate, bs_delay, NetworkState, Topology};
use crate::pricing::{rent_price, CostWeights};

use super::EngineError;

/// Masks up to this many SBSs use a flat table.
const DENSE_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceParams {
    pub weights: CostWeights,
    pub q: f64,
    pub file_bits: f64,
}

/// Everything the engine needs about one ON/OFF configuration.
#[derive(Debug, Clone)]
pub struct MaskEval {
    pub state: NetworkState,
    /// Power draw per BS index; zero when OFF.
    pub power: Vec<f64>,
    /// Live rent per BS index; zero for the MBS and OFF SBSs.
    pub rent: Vec<f64>,
    /// Sum of the delays of every ON BS, MBS included.
    pub total_delay: f64,
}

/// Bit `j` of a mask is SBS `j + 1`; the MBS is implicitly ON.
pub fn sigma_of(mask: u64, n_sbs: usize) -> Vec<bool> {
    std::iter::once(true)
        .chain((0..n_sbs).map(|j| mask >> j & 1 == 1))
        .collect()
}

pub fn evaluate(mask: u64, topo: &Topology, p: &PriceParams) -> Result<MaskEval, EngineError> {
    let n_bs = topo.n_bs();
    let sigma = sigma_of(mask, n_bs - 1);
    let state = associate(&sigma, topo)?;
    state
        .check_partition()
        .map_err(|e| EngineError::Invariant(format!("association for mask {mask:#b}: {e}")))?;
    let mut power = vec![0.0; n_bs];
    let mut rent = vec![0.0; n_bs];
    let mut total_delay = 0.0;
    for bs in (0..n_bs).filter(|&b| sigma[b]) {
        power[bs] = bs_power(topo.bs(bs), state.load(bs), p.q);
        total_delay += bs_delay(bs, &state, topo, p.file_bits);
        if bs > 0 {
            rent[bs] = rent_price(bs, &state, topo, &p.weights, p.q, p.file_bits)?;
        }
    }
    Ok(MaskEval {
        state,
        power,
        rent,
        total_delay,
    })
}

#[derive(Debug)]
pub struct NetworkCache {
    dense: Vec<Option<Rc<MaskEval>>>,
    sparse: HashMap<u64, Rc<MaskEval>>,
}

impl NetworkCache {
    pub fn new(n_sbs: usize) -> Self {
        let dense = if n_sbs <= DENSE_LIMIT {
            vec![None; 1 << n_sbs]
        } else {
            Vec::new()
        };
        Self {
            dense,
            sparse: HashMap::new(),
        }
    }

    pub fn get(
        &mut self,
        mask: u64,
        topo: &Topology,
        p: &PriceParams,
    ) -> Result<Rc<MaskEval>, EngineError> {
        if self.dense.is_empty() {
            if let Some(e) = self.sparse.get(&mask) {
                return Ok(Rc::clone(e));
            }
            let e = Rc::new(evaluate(mask, topo, p)?);
            self.sparse.insert(mask, Rc::clone(&e));
            Ok(e)
        } else {
            let slot = &mut self.dense[mask as usize];
            if let Some(e) = slot {
                return Ok(Rc::clone(e));
            }
            let e = Rc::new(evaluate(mask, topo, p)?);
            *slot = Some(Rc::clone(&e));
            Ok(e)
        }
    }

    pub fn len(&self) -> usize {
        self.dense.iter().filter(|e| e.is_some()).count() + self.sparse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{place_nodes, PlacementParams};
    use crate::rng::stream;

    fn params() -> PriceParams {
        PriceParams {
            weights: CostWeights::default(),
            q: 0.9,
            file_bits: 1e5,
        }
    }

    #[test]
    fn sigma_layout() {
        assert_eq!(sigma_of(0b101, 3), vec![true, true, false, true]);
        assert_eq!(sigma_of(0, 0), vec![true]);
    }

    #[test]
    fn cached_equals_fresh() {
        let topo = place_nodes(&PlacementParams::default(), &mut stream(4, &[])).unwrap();
        let p = params();
        let mut cache = NetworkCache::new(topo.n_sbs());
        for mask in [0u64, 0b111111, 0b010101, 0b111111] {
            let a = cache.get(mask, &topo, &p).unwrap();
            let b = evaluate(mask, &topo, &p).unwrap();
            assert_eq!(a.state, b.state);
            assert_eq!(a.rent, b.rent);
            assert_eq!(a.power, b.power);
        }
        assert_eq!(cache.len(), 3);
    }

    #[test]
    fn sparse_table_for_many_sbs() {
        let placement = PlacementParams {
            n_sbs: 20,
            ..PlacementParams::default()
        };
        let topo = place_nodes(&placement, &mut stream(4, &[])).unwrap();
        let mut cache = NetworkCache::new(20);
        let full = (1u64 << 20) - 1;
        let a = cache.get(full, &topo, &params()).unwrap();
        assert_eq!(a.state.sigma().len(), 21);
        assert_eq!(cache.len(), 1);
    }
}
