use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use clickseg::{BinaryMask, InteractionState};
use tokio::sync::Mutex;

pub const MAX_SESSIONS_ENV: &str = "CLICKSEG_MAX_SESSIONS";
pub const DEFAULT_MAX_SESSIONS: usize = 256;

#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub session_id: String,
    pub state: InteractionState,
    pub predictor: String,
    /// Ground truth for demo sessions; enables IoU in click replies.
    pub gt: Option<BinaryMask>,
    /// Store clock ticks; `updated` strictly increases with each mutation.
    pub created: u64,
    pub updated: u64,
}

struct Entry {
    record: Arc<Mutex<SessionRecord>>,
    last_used: AtomicU64,
}

/// In-memory sessions. The map takes a read lock for lookups; each session
/// has its own async mutex, held for the whole of a request on it.
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Entry>>,
    max_sessions: usize,
    clock: AtomicU64,
}

impl SessionStore {
    pub fn new(max_sessions: usize) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            max_sessions: max_sessions.max(1),
            clock: AtomicU64::new(0),
        }
    }

    pub fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds a session, evicting the least recently used ones beyond the cap.
    pub fn insert(&self, state: InteractionState, predictor: String, gt: Option<BinaryMask>) -> String {
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let now = self.tick();
        let record = SessionRecord {
            session_id: session_id.clone(),
            state,
            predictor,
            gt,
            created: now,
            updated: now,
        };
        let mut map = self.sessions.write().expect("session map poisoned");
        while map.len() >= self.max_sessions {
            let oldest = map
                .iter()
                .min_by_key(|(_, e)| e.last_used.load(Ordering::Relaxed))
                .map(|(k, _)| k.clone())
                .expect("map is nonempty");
            log::debug!("evicting session {oldest}");
            map.remove(&oldest);
        }
        map.insert(
            session_id.clone(),
            Entry {
                record: Arc::new(Mutex::new(record)),
                last_used: AtomicU64::new(now),
            },
        );
        session_id
    }

    pub fn get(&self, session_id: &str) -> Option<Arc<Mutex<SessionRecord>>> {
        let map = self.sessions.read().expect("session map poisoned");
        let entry = map.get(session_id)?;
        entry.last_used.store(self.tick(), Ordering::Relaxed);
        Some(entry.record.clone())
    }

    pub fn contains(&self, session_id: &str) -> bool {
        self.sessions.read().expect("session map poisoned").contains_key(session_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clickseg::ColorImage;

    fn state() -> InteractionState {
        InteractionState::new(Arc::new(ColorImage::new(2, 2, [0, 0, 0])), None).unwrap()
    }

    #[test]
    fn evicts_least_recently_used() {
        let store = SessionStore::new(2);
        let a = store.insert(state(), "g".into(), None);
        let b = store.insert(state(), "g".into(), None);
        assert!(store.get(&a).is_some());
        let c = store.insert(state(), "g".into(), None);
        assert!(store.contains(&a) && store.contains(&c));
        assert!(!store.contains(&b));
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn ids_are_unique_and_clock_monotonic() {
        let store = SessionStore::new(100);
        let ids: std::collections::HashSet<_> = (0..50).map(|_| store.insert(state(), "g".into(), None)).collect();
        assert_eq!(ids.len(), 50);
        let t1 = store.tick();
        assert!(store.tick() > t1);
    }
}
