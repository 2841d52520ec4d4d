//! Reshape-plan cache shared by dense permutations and block repartitions.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::dense::PermutationPlan;
use crate::symmetric::RepartitionPlan;

pub const DEFAULT_CACHE_CAPACITY: usize = 256;

/// FIFO-evicting map of immutable plans.
struct PlanStore<K, V> {
    map: HashMap<K, Arc<V>>,
    order: VecDeque<K>,
}

impl<K: Eq + Hash + Clone, V> PlanStore<K, V> {
    fn new() -> Self {
        Self { map: HashMap::new(), order: VecDeque::new() }
    }

    fn get(&self, key: &K) -> Option<Arc<V>> {
        self.map.get(key).cloned()
    }

    fn insert(&mut self, key: K, plan: Arc<V>, cap: usize) {
        if cap == 0 || self.map.contains_key(&key) {
            return;
        }
        while self.map.len() >= cap {
            match self.order.pop_front() {
                Some(old) => {
                    self.map.remove(&old);
                }
                None => break,
            }
        }
        self.order.push_back(key.clone());
        self.map.insert(key, plan);
    }

    fn len(&self) -> usize {
        self.map.len()
    }
}

pub(crate) type PermKey = (Vec<usize>, Vec<usize>);

#[derive(Clone, PartialEq, Eq, Hash)]
pub(crate) struct SectorKey {
    pub fingerprint: u64,
    pub src_rows: Vec<usize>,
    pub src_cols: Vec<usize>,
    pub dst_rows: Vec<usize>,
    pub dst_cols: Vec<usize>,
}

/// Thread-safe store of precomputed reshape information.
///
/// Dense plans are keyed by `(dims, permutation)`; block plans by the charge
/// structure fingerprint plus source and target row/column partitions.
pub struct ReshapeCache {
    capacity: usize,
    perms: Mutex<PlanStore<PermKey, PermutationPlan>>,
    sectors: Mutex<PlanStore<SectorKey, RepartitionPlan>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Default for ReshapeCache {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_CACHE_CAPACITY)
    }
}

impl std::fmt::Debug for ReshapeCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReshapeCache")
            .field("capacity", &self.capacity)
            .field("entries", &self.len())
            .field("hits", &self.hits())
            .field("misses", &self.misses())
            .finish()
    }
}

impl ReshapeCache {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            capacity,
            perms: Mutex::new(PlanStore::new()),
            sectors: Mutex::new(PlanStore::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.perms.lock().unwrap().len() + self.sectors.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub(crate) fn permutation(
        &self,
        key: PermKey,
        build: impl FnOnce() -> PermutationPlan,
    ) -> Arc<PermutationPlan> {
        if let Some(plan) = self.perms.lock().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return plan;
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let plan = Arc::new(build());
        self.perms.lock().unwrap().insert(key, plan.clone(), self.capacity);
        plan
    }

    pub(crate) fn repartition(
        &self,
        key: SectorKey,
        build: impl FnOnce() -> RepartitionPlan,
    ) -> Arc<RepartitionPlan> {
        if let Some(plan) = self.sectors.lock().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return plan;
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let plan = Arc::new(build());
        self.sectors.lock().unwrap().insert(key, plan.clone(), self.capacity);
        plan
    }
}
