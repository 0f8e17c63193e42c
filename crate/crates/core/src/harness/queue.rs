use crate::{Error, Result};
use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

/// What a producer does when the queue is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullPolicy {
    Block,
    DropOldest,
}

/// An item with the parameter version that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Versioned<T> {
    pub version: u64,
    pub item: T,
}

struct Inner<T> {
    items: VecDeque<Versioned<T>>,
    closed: bool,
    dropped: u64,
}

/// Bounded multi-producer queue with a single consumer.
pub struct TrajectoryQueue<T> {
    inner: Mutex<Inner<T>>,
    not_empty: Condvar,
    not_full: Condvar,
    capacity: usize,
    policy: FullPolicy,
}

impl<T> TrajectoryQueue<T> {
    pub fn new(capacity: usize, policy: FullPolicy) -> Self {
        TrajectoryQueue {
            inner: Mutex::new(Inner { items: VecDeque::new(), closed: false, dropped: 0 }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
            capacity: capacity.max(1),
            policy,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Items discarded by the drop-oldest policy.
    pub fn dropped(&self) -> u64 {
        self.inner.lock().expect("queue lock").dropped
    }

    /// Fails once the queue is closed.
    pub fn push(&self, version: u64, item: T) -> Result<()> {
        let mut g = self.inner.lock().expect("queue lock");
        loop {
            if g.closed {
                return Err(Error::Usage("queue closed".into()));
            }
            if g.items.len() < self.capacity {
                break;
            }
            match self.policy {
                FullPolicy::DropOldest => {
                    g.items.pop_front();
                    g.dropped += 1;
                }
                FullPolicy::Block => g = self.not_full.wait(g).expect("queue lock"),
            }
        }
        g.items.push_back(Versioned { version, item });
        self.not_empty.notify_one();
        Ok(())
    }

    /// Waits up to `timeout` for an item. `Ok(None)` means the wait timed
    /// out; an error means the queue is closed and drained.
    pub fn pop_timeout(&self, timeout: Duration) -> Result<Option<Versioned<T>>> {
        let mut g = self.inner.lock().expect("queue lock");
        loop {
            if let Some(v) = g.items.pop_front() {
                self.not_full.notify_one();
                return Ok(Some(v));
            }
            if g.closed {
                return Err(Error::Usage("queue closed".into()));
            }
            let (ng, res) = self.not_empty.wait_timeout(g, timeout).expect("queue lock");
            g = ng;
            if res.timed_out() && g.items.is_empty() {
                return if g.closed { Err(Error::Usage("queue closed".into())) } else { Ok(None) };
            }
        }
    }

    /// Wakes every waiter; pushes fail from now on, pops drain what is left.
    pub fn close(&self) {
        let mut g = self.inner.lock().expect("queue lock");
        g.closed = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().expect("queue lock").closed
    }
}
