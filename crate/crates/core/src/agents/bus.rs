//! In-process message bus carrying signed envelope text.
//!
//! Delivery order is by priority class, then by send order, so a burst of
//! rejections preempts pending work and replies overtake new requests.

use std::collections::BTreeMap;

use crate::protocol::{AgentId, Performative};

/// Lower is delivered first: REJECT, CONFIRM/INFORM, REQUEST/QUERY, PROPOSE, UPDATE.
pub fn priority_class(p: Performative) -> u8 {
    match p {
        Performative::Reject => 0,
        Performative::Confirm | Performative::Inform => 1,
        Performative::Request | Performative::Query => 2,
        Performative::Propose => 3,
        Performative::Update => 4,
    }
}

/// Class for raw text; unreadable text goes last.
fn class_of(text: &str) -> u8 {
    text.lines().find_map(|l| l.strip_prefix("PERFORMATIVE: ")).and_then(|p| p.parse::<Performative>().ok()).map_or(5, priority_class)
}

#[derive(Clone, Debug, Default)]
pub struct Bus {
    queue: BTreeMap<(u8, u64), (AgentId, String)>,
    sent: u64,
}

impl Bus {
    pub fn send(&mut self, receiver: AgentId, text: String) {
        self.sent += 1;
        self.queue.insert((class_of(&text), self.sent), (receiver, text));
    }

    pub fn pop(&mut self) -> Option<(AgentId, String)> {
        self.queue.pop_first().map(|(_, v)| v)
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }
}
