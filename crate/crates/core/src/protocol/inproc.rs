//! Deterministic in-process network.
//!
//! A discrete-event scheduler over virtual milliseconds. The endpoint
//! handles one request at a time (`service_ms` each); replies are delayed by
//! a seeded uniform latency draw; parties spend `hash_cost_ms` of virtual
//! time per proof-of-work attempt. Simultaneous events are delivered in
//! FIFO order, so with zero latency two parties strictly alternate.

use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::codec;
use super::transport::{handle_frame, inject_latency, Action, ConnId, Endpoint, Party, TransportConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub latency_ms_max: u64,
    pub seed: u64,
    pub service_ms: u64,
    pub hash_cost_ms: f64,
    pub backoff_ms: u64,
    /// Hard stop for runaway scenarios.
    pub max_time_ms: u64,
    pub record_transcript: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            latency_ms_max: 0,
            seed: 0,
            service_ms: 1,
            hash_cost_ms: 0.001,
            backoff_ms: 1,
            max_time_ms: 10_000_000,
            record_transcript: false,
        }
    }
}

impl SimConfig {
    fn transport(&self) -> TransportConfig {
        TransportConfig {
            latency_ms_max: self.latency_ms_max,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ToBroker,
    ToParty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub time_ms: u64,
    pub party: usize,
    pub direction: Direction,
    pub frame: Vec<u8>,
}

enum EventKind {
    Request(Vec<u8>),
    Reply(Vec<u8>),
    Wake,
}

struct Event {
    time: u64,
    seq: u64,
    party: usize,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed: BinaryHeap is a max-heap and we want the earliest event
    fn cmp(&self, other: &Self) -> CmpOrdering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimReport {
    pub end_time_ms: u64,
    pub requests: u64,
    pub parties_done: usize,
    pub timed_out: bool,
}

pub struct Simulation<E> {
    endpoint: E,
    cfg: SimConfig,
    latency_rng: ChaCha8Rng,
    broker_free_at: u64,
    queue: BinaryHeap<Event>,
    seq: u64,
    transcript: Vec<TranscriptEntry>,
}

impl<E: Endpoint> Simulation<E> {
    pub fn new(endpoint: E, cfg: SimConfig) -> Self {
        let latency_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self {
            endpoint,
            cfg,
            latency_rng,
            broker_free_at: 0,
            queue: BinaryHeap::new(),
            seq: 0,
            transcript: Vec::new(),
        }
    }

    pub fn endpoint(&self) -> &E {
        &self.endpoint
    }

    pub fn endpoint_mut(&mut self) -> &mut E {
        &mut self.endpoint
    }

    pub fn into_endpoint(self) -> E {
        self.endpoint
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// Sends one request outside of any party (e.g. a curator) and returns
    /// the reply. Uses the current virtual time and does not advance it.
    pub fn call(&mut self, conn: ConnId, msg: &super::Message) -> super::Message {
        let reply = handle_frame(&mut self.endpoint, conn, &codec::encode(msg), self.broker_free_at);
        codec::decode(&reply, None).expect("endpoint replies are well-formed")
    }

    fn push(&mut self, time: u64, party: usize, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Event { time, seq, party, kind });
    }

    fn schedule(&mut self, now: u64, party: usize, action: Action, done: &mut [bool]) {
        match action {
            Action::Send { msg, work } => {
                let cost = (work as f64 * self.cfg.hash_cost_ms).round() as u64;
                self.push(now + cost, party, EventKind::Request(codec::encode(&msg)));
            }
            Action::Backoff => self.push(now + self.cfg.backoff_ms.max(1), party, EventKind::Wake),
            Action::Done => done[party] = true,
        }
    }

    /// Runs until every party is done, nothing is scheduled, or the time
    /// limit is hit. `observer` is called after each handled request.
    pub fn run(&mut self, parties: &mut [&mut dyn Party], mut observer: impl FnMut(&E, u64)) -> SimReport {
        let transport = self.cfg.transport();
        let mut done = vec![false; parties.len()];
        let start = self.broker_free_at;
        for (i, p) in parties.iter_mut().enumerate() {
            let action = p.start();
            self.schedule(start, i, action, &mut done);
        }
        let mut report = SimReport::default();
        while let Some(ev) = self.queue.pop() {
            if ev.time > self.cfg.max_time_ms {
                report.timed_out = true;
                self.queue.clear();
                break;
            }
            report.end_time_ms = ev.time;
            match ev.kind {
                EventKind::Request(frame) => {
                    if self.broker_free_at > ev.time {
                        // broker busy: requeue keeping the original arrival order
                        self.queue.push(Event {
                            time: self.broker_free_at,
                            seq: ev.seq,
                            party: ev.party,
                            kind: EventKind::Request(frame),
                        });
                        continue;
                    }
                    if self.cfg.record_transcript {
                        self.transcript.push(TranscriptEntry {
                            time_ms: ev.time,
                            party: ev.party,
                            direction: Direction::ToBroker,
                            frame: frame.clone(),
                        });
                    }
                    let reply = handle_frame(&mut self.endpoint, ev.party as ConnId, &frame, ev.time);
                    report.requests += 1;
                    observer(&self.endpoint, ev.time);
                    self.broker_free_at = ev.time + self.cfg.service_ms;
                    let delay = inject_latency(&mut self.latency_rng, &transport);
                    self.push(self.broker_free_at + delay, ev.party, EventKind::Reply(reply));
                }
                EventKind::Reply(frame) => {
                    if self.cfg.record_transcript {
                        self.transcript.push(TranscriptEntry {
                            time_ms: ev.time,
                            party: ev.party,
                            direction: Direction::ToParty,
                            frame: frame.clone(),
                        });
                    }
                    let msg = codec::decode(&frame, None).expect("endpoint replies are well-formed");
                    let action = parties[ev.party].on_reply(msg);
                    self.schedule(ev.time, ev.party, action, &mut done);
                }
                EventKind::Wake => {
                    let action = parties[ev.party].on_wake();
                    self.schedule(ev.time, ev.party, action, &mut done);
                }
            }
        }
        report.parties_done = done.iter().filter(|d| **d).count();
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{ErrorCode, Message};

    /// Echo-style endpoint that records the order it saw parties in.
    #[derive(Default)]
    struct Recorder {
        order: Vec<(ConnId, u64)>,
    }

    impl Endpoint for Recorder {
        fn dim(&self) -> Option<usize> {
            None
        }
        fn handle(&mut self, conn: ConnId, _msg: Message, now_ms: u64) -> Message {
            self.order.push((conn, now_ms));
            Message::error(ErrorCode::NotStarted, "")
        }
    }

    struct Pinger {
        left: u32,
    }

    impl Party for Pinger {
        fn start(&mut self) -> Action {
            Action::send(Message::Join { model_id: "m".into() })
        }
        fn on_reply(&mut self, _reply: Message) -> Action {
            self.left -= 1;
            if self.left == 0 {
                Action::Done
            } else {
                self.start()
            }
        }
        fn on_wake(&mut self) -> Action {
            self.start()
        }
    }

    #[test]
    fn zero_latency_alternates_parties() {
        let mut sim = Simulation::new(Recorder::default(), SimConfig::default());
        let (mut a, mut b) = (Pinger { left: 5 }, Pinger { left: 5 });
        let report = sim.run(&mut [&mut a, &mut b], |_, _| {});
        assert_eq!(report.parties_done, 2);
        let order: Vec<_> = sim.endpoint().order.iter().map(|(c, _)| *c).collect();
        assert_eq!(order, [0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let times: Vec<_> = sim.endpoint().order.iter().map(|(_, t)| *t).collect();
        assert!(times.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn latency_runs_are_reproducible() {
        let run = |seed| {
            let cfg = SimConfig {
                latency_ms_max: 50,
                seed,
                ..Default::default()
            };
            let mut sim = Simulation::new(Recorder::default(), cfg);
            let (mut a, mut b, mut c) = (Pinger { left: 20 }, Pinger { left: 20 }, Pinger { left: 20 });
            sim.run(&mut [&mut a, &mut b, &mut c], |_, _| {});
            sim.into_endpoint().order
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn time_limit_stops_the_run() {
        let cfg = SimConfig {
            max_time_ms: 10,
            ..Default::default()
        };
        let mut sim = Simulation::new(Recorder::default(), cfg);
        let mut a = Pinger { left: u32::MAX };
        let report = sim.run(&mut [&mut a], |_, _| {});
        assert!(report.timed_out);
        assert!(sim.endpoint().order.len() <= 11);
    }
}
