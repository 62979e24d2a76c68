use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Mutex;

use crate::mac::Nonce;

pub const DEFAULT_WINDOW: usize = 1024;

#[derive(Debug, Default)]
struct ClientNonces {
    order: VecDeque<Nonce>,
    seen: HashSet<Nonce>,
}

/// Remembers the last `window` accepted nonces of every client, in memory.
#[derive(Debug)]
pub struct ReplayWindow {
    window: usize,
    clients: Mutex<HashMap<String, ClientNonces>>,
}

impl ReplayWindow {
    pub fn new(window: usize) -> Self {
        ReplayWindow { window, clients: Mutex::new(HashMap::new()) }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn seen(&self, client_id: &str, nonce: &Nonce) -> bool {
        let clients = self.clients.lock().unwrap();
        clients.get(client_id).is_some_and(|c| c.seen.contains(nonce))
    }

    /// Records `nonce`; false if it was already within the window.
    pub fn claim(&self, client_id: &str, nonce: Nonce) -> bool {
        if self.window == 0 {
            return true;
        }
        let mut clients = self.clients.lock().unwrap();
        let entry = clients.entry(client_id.to_string()).or_default();
        if !entry.seen.insert(nonce) {
            return false;
        }
        entry.order.push_back(nonce);
        if entry.order.len() > self.window {
            let evicted = entry.order.pop_front().expect("non-empty");
            entry.seen.remove(&evicted);
        }
        true
    }
}

impl Default for ReplayWindow {
    fn default() -> Self {
        ReplayWindow::new(DEFAULT_WINDOW)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nonce(i: u32) -> Nonce {
        let mut n = [0u8; 16];
        n[..4].copy_from_slice(&i.to_be_bytes());
        n
    }

    #[test]
    fn claims_once_per_client() {
        let w = ReplayWindow::new(4);
        assert!(w.claim("a", nonce(1)));
        assert!(w.seen("a", &nonce(1)));
        assert!(!w.claim("a", nonce(1)));
        assert!(w.claim("b", nonce(1)));
    }

    #[test]
    fn evicts_oldest() {
        let w = ReplayWindow::new(3);
        for i in 0..4 {
            assert!(w.claim("a", nonce(i)));
        }
        assert!(!w.seen("a", &nonce(0)));
        assert!(w.seen("a", &nonce(1)));
        assert!(w.seen("a", &nonce(3)));
        assert!(w.claim("a", nonce(0)));
    }
}
