use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::{Error, Result};

struct Entry<T> {
    value: Arc<Mutex<T>>,
    seq: u64,
    touched: Instant,
}

/// Live sessions keyed by id with an idle TTL and a capacity cap.
///
/// When full, inserting evicts the oldest session; its id is remembered so a
/// late peer gets a clear error instead of "unknown session".
pub struct SessionStore<T> {
    ttl: Duration,
    capacity: usize,
    entries: HashMap<String, Entry<T>>,
    next_seq: u64,
    gone: VecDeque<(String, &'static str)>,
}

impl<T> SessionStore<T> {
    pub fn new(ttl: Duration, capacity: usize) -> Self {
        assert!(capacity > 0, "session store capacity must be positive");
        SessionStore {
            ttl,
            capacity,
            entries: HashMap::new(),
            next_seq: 0,
            gone: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn remember(&mut self, id: String, why: &'static str) {
        if self.gone.len() >= self.capacity {
            self.gone.pop_front();
        }
        self.gone.push_back((id, why));
    }

    pub fn purge_expired(&mut self, now: Instant) -> usize {
        let ttl = self.ttl;
        let expired: Vec<String> = self
            .entries
            .iter()
            .filter(|(_, e)| now.saturating_duration_since(e.touched) > ttl)
            .map(|(k, _)| k.clone())
            .collect();
        for id in &expired {
            self.entries.remove(id);
            self.remember(id.clone(), "expired");
        }
        expired.len()
    }

    /// Inserts a session; returns the id evicted to make room, if any.
    pub fn insert(&mut self, id: String, value: T, now: Instant) -> Result<Option<String>> {
        self.purge_expired(now);
        if self.entries.contains_key(&id) {
            return Err(Error::protocol(format!("session {id} already exists")));
        }
        let mut evicted = None;
        if self.entries.len() >= self.capacity {
            let oldest = self
                .entries
                .iter()
                .min_by_key(|(_, e)| e.seq)
                .map(|(k, _)| k.clone())
                .expect("store is full so not empty");
            self.entries.remove(&oldest);
            log::info!("session store full; evicted {oldest}");
            self.remember(oldest.clone(), "evicted");
            evicted = Some(oldest);
        }
        self.entries.insert(
            id,
            Entry {
                value: Arc::new(Mutex::new(value)),
                seq: self.next_seq,
                touched: now,
            },
        );
        self.next_seq += 1;
        Ok(evicted)
    }

    pub fn get(&mut self, id: &str, now: Instant) -> Result<Arc<Mutex<T>>> {
        self.purge_expired(now);
        if let Some(e) = self.entries.get_mut(id) {
            e.touched = now;
            return Ok(Arc::clone(&e.value));
        }
        match self.gone.iter().rev().find(|(g, _)| g == id) {
            Some((_, why)) => Err(Error::protocol(format!("session {id} {why}"))),
            None => Err(Error::protocol(format!("unknown session {id}"))),
        }
    }

    pub fn remove(&mut self, id: &str) -> bool {
        self.entries.remove(id).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_evicts_oldest() {
        let t0 = Instant::now();
        let mut s = SessionStore::new(Duration::from_secs(60), 2);
        assert_eq!(s.insert("a".into(), 1, t0).unwrap(), None);
        assert_eq!(s.insert("b".into(), 2, t0).unwrap(), None);
        s.get("a", t0).unwrap();
        assert_eq!(s.insert("c".into(), 3, t0).unwrap(), Some("a".into()));
        let err = s.get("a", t0).unwrap_err().to_string();
        assert!(err.contains("evicted"), "{err}");
        assert_eq!(*s.get("c", t0).unwrap().lock().unwrap(), 3);
        assert!(s.insert("c".into(), 4, t0).is_err());
    }

    #[test]
    fn idle_sessions_expire() {
        let t0 = Instant::now();
        let mut s = SessionStore::new(Duration::from_secs(60), 8);
        s.insert("a".into(), (), t0).unwrap();
        s.insert("b".into(), (), t0).unwrap();
        s.get("b", t0 + Duration::from_secs(50)).unwrap();
        let later = t0 + Duration::from_secs(61);
        assert!(s.get("a", later).unwrap_err().to_string().contains("expired"));
        assert!(s.get("b", later).is_ok());
        assert_eq!(s.len(), 1);
        assert!(s.get("zzz", later).unwrap_err().to_string().contains("unknown"));
    }
}
