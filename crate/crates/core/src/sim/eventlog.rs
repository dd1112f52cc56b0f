//! Per-slot, per-user event log and metric replay.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::UserTraffic;
use crate::error::Error;
use crate::sim::env::SlotRecord;
use crate::sim::metrics::{EpochCounters, EpochMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub epoch: usize,
    pub episode: usize,
    pub slot: u64,
    pub user: usize,
    pub backlog: usize,
    pub head_deadline: u32,
    pub pilot: usize,
    pub power: f64,
    pub arrival: u8,
    pub success: u8,
    pub drop: u8,
}

pub struct EventWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> EventWriter<W> {
    pub fn new(w: W) -> Self {
        EventWriter {
            inner: csv::Writer::from_writer(w),
        }
    }

    pub fn write_slot(&mut self, epoch: usize, episode: usize, rec: &SlotRecord) -> Result<(), Error> {
        for user in 0..rec.assignment.len() {
            self.inner.serialize(Event {
                epoch,
                episode,
                slot: rec.slot,
                user,
                backlog: rec.backlog[user],
                head_deadline: rec.head_deadline[user],
                pilot: rec.assignment[user],
                power: rec.rho[user],
                arrival: rec.arrival[user] as u8,
                success: rec.success[user] as u8,
                drop: rec.drop[user] as u8,
            })?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), Error> {
        self.inner.flush().map_err(|source| Error::Io {
            context: "flushing event log".into(),
            source,
        })
    }
}

/// Recomputes the per-epoch metrics from an event log.
pub fn replay<R: Read>(r: R, users: &[UserTraffic]) -> Result<Vec<EpochMetrics>, Error> {
    let n = users.len();
    let mut per_epoch: BTreeMap<usize, EpochCounters> = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(r);
    for ev in rdr.deserialize() {
        let ev: Event = ev?;
        let c = per_epoch.entry(ev.epoch).or_insert_with(|| EpochCounters::new(n));
        if ev.user == 0 {
            c.slots += 1;
        }
        c.arrivals[ev.user] += ev.arrival as u64;
        c.successes[ev.user] += ev.success as u64;
        c.drops[ev.user] += ev.drop as u64;
    }
    Ok(per_epoch
        .iter()
        .map(|(&e, c)| EpochMetrics::from_counters(e, c, users))
        .collect())
}
