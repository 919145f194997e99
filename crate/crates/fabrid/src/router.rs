//! Thread-safe border router around the core packet pipeline.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex, RwLock};

use fabrid_core::data_plane::{
    router_process, DropCounters, DupCheck, DuplicateWindow, ForwardingTable, Packet, ReplayGuard,
    ReplayKey, RouterAction, RouterCtx,
};

/// Duplicate suppression sharded by source, so unrelated sources never
/// contend on the same lock.
#[derive(Debug)]
pub struct ShardedReplayGuard {
    shards: Vec<Mutex<DuplicateWindow>>,
}

impl ShardedReplayGuard {
    pub fn new(shards: usize, window: u64) -> Self {
        assert!(shards > 0);
        ShardedReplayGuard { shards: (0..shards).map(|_| Mutex::new(DuplicateWindow::new(window))).collect() }
    }

    fn shard(&self, key: &ReplayKey) -> &Mutex<DuplicateWindow> {
        let mut h = DefaultHasher::new();
        (key.src_as, key.src_host).hash(&mut h);
        &self.shards[(h.finish() % self.shards.len() as u64) as usize]
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.lock().expect("shard lock").len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ShardedReplayGuard {
    fn default() -> Self {
        Self::new(16, DuplicateWindow::DEFAULT_WINDOW)
    }
}

impl ReplayGuard for ShardedReplayGuard {
    fn check(&self, key: ReplayKey, now: u64) -> DupCheck {
        self.shard(&key).lock().expect("shard lock").check(key, now)
    }
}

/// A router whose table can be replaced wholesale while packets are in
/// flight; each packet sees either the old or the new table.
#[derive(Debug)]
pub struct BorderRouter {
    pub ctx: RouterCtx,
    table: RwLock<Arc<ForwardingTable>>,
    pub guard: ShardedReplayGuard,
    pub counters: DropCounters,
}

impl BorderRouter {
    pub fn new(ctx: RouterCtx, table: ForwardingTable) -> Self {
        BorderRouter {
            ctx,
            table: RwLock::new(Arc::new(table)),
            guard: ShardedReplayGuard::default(),
            counters: DropCounters::default(),
        }
    }

    pub fn table(&self) -> Arc<ForwardingTable> {
        self.table.read().expect("table lock").clone()
    }

    pub fn swap_table(&self, table: ForwardingTable) -> Arc<ForwardingTable> {
        std::mem::replace(&mut *self.table.write().expect("table lock"), Arc::new(table))
    }

    pub fn process(&self, pkt: &mut Packet, now: u64) -> RouterAction {
        let table = self.table();
        router_process(&self.ctx, &table, &self.guard, &self.counters, pkt, now)
    }
}
