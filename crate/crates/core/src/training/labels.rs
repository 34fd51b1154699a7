use std::collections::{BTreeMap, HashMap};

use crate::datagen::{build_likelihood_map, ScanRecord};
use crate::filter::GridState;

/// Least-recently-used cache of label maps keyed by `(scene, query)`.
#[derive(Debug, Default)]
pub struct LabelCache {
    capacity: usize,
    tick: u64,
    entries: HashMap<(usize, usize), (u64, Vec<u8>)>,
    order: BTreeMap<u64, (usize, usize)>,
    hits: u64,
    misses: u64,
}

impl LabelCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> (u64, u64) {
        (self.hits, self.misses)
    }

    /// Class labels for `query` in scene `scene`, computed on a miss.
    pub fn get(&mut self, scene: usize, record: &ScanRecord, query: GridState) -> &[u8] {
        let key = (scene, query.index(record.width));
        self.tick += 1;
        let tick = self.tick;
        if let Some((old, _)) = self.entries.get(&key) {
            self.hits += 1;
            self.order.remove(old);
        } else {
            self.misses += 1;
            if self.entries.len() >= self.capacity {
                if let Some((_, victim)) = self.order.pop_first() {
                    self.entries.remove(&victim);
                }
            }
            let labels = build_likelihood_map(record, query).classes;
            self.entries.insert(key, (tick, labels));
        }
        self.order.insert(tick, key);
        let entry = self.entries.get_mut(&key).expect("just inserted");
        entry.0 = tick;
        &entry.1
    }
}
