//! The record of one run.

use std::collections::BTreeMap;
use std::io::Write;

use crate::config::SimConfig;
use crate::grid::Round;
use crate::model::RequestId;
use crate::scalar::{Rate, Scalar};
use crate::trace::{write_metrics, write_trace, LoggedEvent, MetricRow};
use crate::world::{EpochRecord, RequestRecord, Status};

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics<S> {
    pub w_prime: Rate<S>,
    /// Absent until the first passenger is served.
    pub w: Option<S>,
    pub total_cost: S,
    pub revenue: S,
    pub served_demand: u64,
    pub served_count: u64,
    pub rejected_count: u64,
    pub expired_count: u64,
    pub generated: u64,
    /// Rounds executed, drain included.
    pub rounds_run: Round,
}

impl<S: Scalar> Metrics<S> {
    pub fn service_rate(&self) -> Option<f64> {
        (self.generated > 0).then(|| self.served_count as f64 / self.generated as f64)
    }
}

#[derive(Clone, Debug)]
pub struct SimTrace<S> {
    pub config: SimConfig,
    pub events: Vec<LoggedEvent<S>>,
    pub rows: Vec<MetricRow<S>>,
    pub summary: Metrics<S>,
    pub records: BTreeMap<RequestId, RequestRecord<S>>,
    pub epochs: Vec<EpochRecord<S>>,
    /// Wall-clock per round; hardware dependent and never written to traces.
    pub round_ms: Vec<f64>,
    pub runtime_ms: f64,
}

impl<S: Scalar> SimTrace<S> {
    pub fn write_trace<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write_trace(out, &self.config, &self.events)
    }

    pub fn write_metrics<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write_metrics(out, &self.config, &self.rows)
    }

    pub fn trace_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_trace(&mut buf).expect("writing to memory");
        buf
    }

    pub fn metrics_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_metrics(&mut buf).expect("writing to memory");
        buf
    }

    /// Requests that were carried to their destination.
    pub fn served(&self) -> impl Iterator<Item = &RequestRecord<S>> {
        self.records.values().filter(|r| r.status == Status::Delivered)
    }

    pub fn record(&self, id: RequestId) -> Option<&RequestRecord<S>> {
        self.records.get(&id)
    }
}
