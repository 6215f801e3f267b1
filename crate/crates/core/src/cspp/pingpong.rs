use std::sync::{Condvar, Mutex, MutexGuard};

use crate::error::{FadeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotState {
    Empty,
    Filling,
    Full,
    Draining,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub slot: usize,
    pub from: SlotState,
    pub to: SlotState,
}

struct Shared<T> {
    states: [SlotState; 2],
    payloads: [Option<Box<T>>; 2],
    closed: bool,
    aborted: bool,
    log: Option<Vec<Transition>>,
}

/// Two-slot handoff between one producer and one consumer.
///
/// Payloads are boxed and moved in and out of the slots, so a handoff moves a
/// pointer and the buffers are recycled rather than reallocated. Both sides
/// visit slots in the order 0, 1, 0, 1, ...
pub struct PingPong<T> {
    shared: Mutex<Shared<T>>,
    changed: Condvar,
}

impl<T> PingPong<T> {
    pub fn new(a: T, b: T, record: bool) -> Self {
        PingPong {
            shared: Mutex::new(Shared {
                states: [SlotState::Empty; 2],
                payloads: [Some(Box::new(a)), Some(Box::new(b))],
                closed: false,
                aborted: false,
                log: record.then(Vec::new),
            }),
            changed: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Shared<T>> {
        self.shared.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn set(g: &mut Shared<T>, slot: usize, from: SlotState, to: SlotState) -> Result<()> {
        if g.states[slot] != from {
            return Err(FadeError::Protocol(format!(
                "slot {slot} is {:?}, expected {from:?} before {to:?}",
                g.states[slot]
            )));
        }
        g.states[slot] = to;
        if let Some(log) = g.log.as_mut() {
            log.push(Transition { slot, from, to });
        }
        Ok(())
    }

    /// Waits for `slot` to be empty and hands its buffer to the producer.
    /// Returns `None` if the consumer has aborted.
    pub fn begin_fill(&self, slot: usize) -> Result<Option<Box<T>>> {
        let mut g = self.lock();
        while g.states[slot] != SlotState::Empty && !g.aborted {
            g = self.changed.wait(g).unwrap_or_else(|p| p.into_inner());
        }
        if g.aborted {
            return Ok(None);
        }
        Self::set(&mut g, slot, SlotState::Empty, SlotState::Filling)?;
        Ok(g.payloads[slot].take())
    }

    pub fn end_fill(&self, slot: usize, payload: Box<T>) -> Result<()> {
        let mut g = self.lock();
        Self::set(&mut g, slot, SlotState::Filling, SlotState::Full)?;
        g.payloads[slot] = Some(payload);
        self.changed.notify_all();
        Ok(())
    }

    /// Waits for `slot` to be full. Returns `None` once the producer has
    /// closed the buffer and nothing is left in this slot.
    pub fn begin_drain(&self, slot: usize) -> Result<Option<Box<T>>> {
        let mut g = self.lock();
        while g.states[slot] != SlotState::Full && !g.closed && !g.aborted {
            g = self.changed.wait(g).unwrap_or_else(|p| p.into_inner());
        }
        if g.aborted || g.states[slot] != SlotState::Full {
            return Ok(None);
        }
        Self::set(&mut g, slot, SlotState::Full, SlotState::Draining)?;
        Ok(g.payloads[slot].take())
    }

    pub fn end_drain(&self, slot: usize, payload: Box<T>) -> Result<()> {
        let mut g = self.lock();
        Self::set(&mut g, slot, SlotState::Draining, SlotState::Empty)?;
        g.payloads[slot] = Some(payload);
        self.changed.notify_all();
        Ok(())
    }

    /// Producer is done; the consumer drains what is full and stops.
    pub fn close(&self) {
        self.lock().closed = true;
        self.changed.notify_all();
    }

    /// Either side failed; wakes and stops the other.
    pub fn abort(&self) {
        let mut g = self.lock();
        g.aborted = true;
        g.closed = true;
        self.changed.notify_all();
    }

    pub fn transitions(&self) -> Vec<Transition> {
        self.lock().log.clone().unwrap_or_default()
    }
}
