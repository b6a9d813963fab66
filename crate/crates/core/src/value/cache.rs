use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Mutex;

use indexmap::IndexMap;

use crate::energy::EnergySpec;
use crate::space::SpaceSpec;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    energy: u64,
    space: u64,
    options: u64,
    eps: u64,
    x: Vec<i64>,
}

/// Quantization step for cache keys.
const X_RESOLUTION: f64 = 1e-12;

impl CacheKey {
    pub fn new(energy: &EnergySpec, space: &SpaceSpec, options: u64, eps: f64, x: &[f64]) -> Self {
        Self {
            energy: hash_json(energy),
            space: hash_json(space),
            options,
            eps: eps.to_bits(),
            x: x.iter().map(|v| (v / X_RESOLUTION).round() as i64).collect(),
        }
    }
}

pub(crate) fn hash_json<T: serde::Serialize>(v: &T) -> u64 {
    let mut h = DefaultHasher::new();
    serde_json::to_string(v).unwrap_or_default().hash(&mut h);
    h.finish()
}

/// Values `(V, φ)` cached per key, evicting the least recently used entry.
/// Concurrent inserts of the same key keep the first value.
#[derive(Debug)]
pub struct ValueCache {
    capacity: usize,
    inner: Mutex<IndexMap<CacheKey, (f64, f64)>>,
}

impl ValueCache {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, inner: Mutex::new(IndexMap::new()) }
    }

    pub fn get(&self, key: &CacheKey) -> Option<(f64, f64)> {
        let mut map = self.inner.lock().expect("cache lock");
        let idx = map.get_index_of(key)?;
        let last = map.len() - 1;
        map.move_index(idx, last);
        map.get_index(last).map(|(_, v)| *v)
    }

    /// Inserts if absent and returns the stored value.
    pub fn insert(&self, key: CacheKey, value: (f64, f64)) -> (f64, f64) {
        if self.capacity == 0 {
            return value;
        }
        let mut map = self.inner.lock().expect("cache lock");
        if let Some(v) = map.get(&key) {
            return *v;
        }
        if map.len() >= self.capacity {
            map.shift_remove_index(0);
        }
        map.insert(key, value);
        value
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
