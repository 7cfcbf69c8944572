//! Network-layer output queues: a bounded tail-drop FIFO and a strict
//! priority scheduler built from one FIFO per class.

use std::collections::VecDeque;

use crate::node::NodeId;

/// Number of priority classes; class 0 is served first.
pub const PRIORITY_CLASSES: usize = 3;
pub const DEFAULT_CAPACITY: usize = 50;

/// Class used for protocol control traffic (discovery, routing updates).
pub const CONTROL_CLASS: u8 = 0;
/// Class used for application payload.
pub const DATA_CLASS: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Packet<B = ()> {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub priority_class: u8,
    pub size: u32,
    pub body: B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Accepted,
    Dropped,
}

/// `queued` counts every packet offered, so at any moment
/// `queued == dequeued + dropped + resident`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueueCounters {
    pub queued: u64,
    pub dequeued: u64,
    pub dropped: u64,
    pub peak_size: usize,
}

#[derive(Debug, Clone)]
pub struct FifoQueue<B = ()> {
    capacity: usize,
    contents: VecDeque<Packet<B>>,
    counters: QueueCounters,
}

impl<B> FifoQueue<B> {
    pub fn new(capacity: usize) -> Self {
        FifoQueue {
            capacity,
            contents: VecDeque::new(),
            counters: QueueCounters::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn counters(&self) -> QueueCounters {
        self.counters
    }

    pub fn enqueue(&mut self, packet: Packet<B>) -> EnqueueOutcome {
        self.counters.queued += 1;
        if self.contents.len() >= self.capacity {
            self.counters.dropped += 1;
            return EnqueueOutcome::Dropped;
        }
        self.contents.push_back(packet);
        self.counters.peak_size = self.counters.peak_size.max(self.contents.len());
        EnqueueOutcome::Accepted
    }

    pub fn dequeue(&mut self) -> Option<Packet<B>> {
        let packet = self.contents.pop_front()?;
        self.counters.dequeued += 1;
        Some(packet)
    }
}

/// Strict priority over [`PRIORITY_CLASSES`] FIFOs. Class numbers above the
/// last class are folded into it.
#[derive(Debug, Clone)]
pub struct StrictPriorityQueue<B = ()> {
    classes: [FifoQueue<B>; PRIORITY_CLASSES],
    peak_total: usize,
}

impl<B> StrictPriorityQueue<B> {
    /// `capacity` applies to each class separately.
    pub fn new(capacity: usize) -> Self {
        StrictPriorityQueue {
            classes: std::array::from_fn(|_| FifoQueue::new(capacity)),
            peak_total: 0,
        }
    }

    fn class_index(class: u8) -> usize {
        (class as usize).min(PRIORITY_CLASSES - 1)
    }

    pub fn class(&self, class: u8) -> &FifoQueue<B> {
        &self.classes[Self::class_index(class)]
    }

    pub fn len(&self) -> usize {
        self.classes.iter().map(FifoQueue::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.iter().all(FifoQueue::is_empty)
    }

    pub fn enqueue(&mut self, packet: Packet<B>) -> EnqueueOutcome {
        let idx = Self::class_index(packet.priority_class);
        let outcome = self.classes[idx].enqueue(packet);
        self.peak_total = self.peak_total.max(self.len());
        outcome
    }

    pub fn dequeue(&mut self) -> Option<Packet<B>> {
        self.classes.iter_mut().find_map(FifoQueue::dequeue)
    }

    /// Aggregate counters; `peak_size` is the largest total backlog seen.
    pub fn counters(&self) -> QueueCounters {
        let mut total = self.classes.iter().fold(QueueCounters::default(), |acc, q| {
            let c = q.counters();
            QueueCounters {
                queued: acc.queued + c.queued,
                dequeued: acc.dequeued + c.dequeued,
                dropped: acc.dropped + c.dropped,
                peak_size: 0,
            }
        });
        total.peak_size = self.peak_total;
        total
    }
}
