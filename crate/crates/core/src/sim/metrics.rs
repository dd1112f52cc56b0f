//! Per-epoch counters and the two headline metrics.

use std::io::{Read, Write};

use crate::config::UserTraffic;
use crate::error::Error;
use crate::sim::env::SlotRecord;

/// Raw counts accumulated over one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochCounters {
    /// Slots simulated per user.
    pub slots: u64,
    pub arrivals: Vec<u64>,
    pub successes: Vec<u64>,
    pub drops: Vec<u64>,
    pub collided_pilots: u64,
}

impl EpochCounters {
    pub fn new(n_users: usize) -> Self {
        EpochCounters {
            slots: 0,
            arrivals: vec![0; n_users],
            successes: vec![0; n_users],
            drops: vec![0; n_users],
            collided_pilots: 0,
        }
    }

    pub fn record(&mut self, rec: &SlotRecord) {
        self.slots += 1;
        for i in 0..self.arrivals.len() {
            self.arrivals[i] += rec.arrival[i] as u64;
            self.successes[i] += rec.success[i] as u64;
            self.drops[i] += rec.drop[i] as u64;
        }
        self.collided_pilots += rec.collided_pilots as u64;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// `max_i drop_rate_i / D_i^th`.
    pub max_ncpdr: f64,
    /// `sum_i (lambda_i - drop_rate_i)`, packets per slot.
    pub sum_throughput: f64,
    pub drop_rate: Vec<f64>,
}

impl EpochMetrics {
    pub fn from_counters(epoch: usize, c: &EpochCounters, users: &[UserTraffic]) -> Self {
        let slots = c.slots.max(1) as f64;
        let drop_rate: Vec<f64> = c.drops.iter().map(|&d| d as f64 / slots).collect();
        let max_ncpdr = drop_rate
            .iter()
            .zip(users)
            .map(|(r, u)| r / u.drop_threshold)
            .fold(0.0, f64::max);
        let sum_throughput = drop_rate.iter().zip(users).map(|(r, u)| u.arrival_rate - r).sum();
        EpochMetrics {
            epoch,
            max_ncpdr,
            sum_throughput,
            drop_rate,
        }
    }
}

pub fn csv_header(n_users: usize) -> Vec<String> {
    let mut h = vec!["epoch".to_string(), "max_ncpdr".into(), "sum_throughput".into()];
    h.extend((1..=n_users).map(|i| format!("drop_rate_{i}")));
    h
}

pub fn write_metrics_csv<W: Write>(w: W, rows: &[EpochMetrics], n_users: usize) -> Result<(), Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(csv_header(n_users))?;
    for r in rows {
        let mut rec = vec![
            r.epoch.to_string(),
            r.max_ncpdr.to_string(),
            r.sum_throughput.to_string(),
        ];
        rec.extend(r.drop_rate.iter().map(f64::to_string));
        out.write_record(rec)?;
    }
    out.flush().map_err(|source| Error::Io {
        context: "flushing metrics".into(),
        source,
    })?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<EpochMetrics>, Error> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64, Error> {
            rec.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Io {
                context: "parsing metrics".into(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad field {k}")),
            })
        };
        rows.push(EpochMetrics {
            epoch: num(0)? as usize,
            max_ncpdr: num(1)?,
            sum_throughput: num(2)?,
            drop_rate: (3..rec.len()).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}

/// Trailing moving average with window `w` (shorter at the start).
pub fn moving_average(xs: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    (0..xs.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(w);
            xs[lo..=t].iter().sum::<f64>() / (t + 1 - lo) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn users() -> Vec<UserTraffic> {
        vec![
            UserTraffic {
                arrival_rate: 0.2,
                drop_threshold: 0.05,
                rate_threshold: 1.0,
                max_deadline: 2,
            },
            UserTraffic {
                arrival_rate: 0.65,
                drop_threshold: 0.2,
                rate_threshold: 2.0,
                max_deadline: 5,
            },
        ]
    }

    #[test]
    fn zero_traffic_gives_zero_metrics() {
        let mut u = users();
        u.iter_mut().for_each(|u| u.arrival_rate = 0.0);
        let c = EpochCounters {
            slots: 100,
            ..EpochCounters::new(2)
        };
        let m = EpochMetrics::from_counters(0, &c, &u);
        assert_eq!(m.max_ncpdr, 0.0);
        assert_eq!(m.sum_throughput, 0.0);
    }

    #[test]
    fn metric_definitions() {
        let c = EpochCounters {
            slots: 1000,
            arrivals: vec![200, 650],
            successes: vec![190, 550],
            drops: vec![10, 100],
            collided_pilots: 0,
        };
        let m = EpochMetrics::from_counters(3, &c, &users());
        assert_eq!(m.drop_rate, vec![0.01, 0.1]);
        assert!((m.max_ncpdr - 0.5).abs() < 1e-12);
        assert!((m.sum_throughput - (0.19 + 0.55)).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![EpochMetrics {
            epoch: 0,
            max_ncpdr: 0.1 + 0.2,
            sum_throughput: 1.0 / 3.0,
            drop_rate: vec![1e-17, 0.123456789012345],
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows, 2).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("epoch,max_ncpdr,sum_throughput,drop_rate_1,drop_rate_2\n"));
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.0, 1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&[5.0], 10), vec![5.0]);
    }
}
