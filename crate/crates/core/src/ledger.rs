//! Bit-exact accounting of simulated traffic.
//!
//! Uplink counters are kept per device; the server's broadcast of the
//! aggregated estimator is counted separately as downlink. Diagnostic
//! evaluations made by the simulator are never charged.

use std::io::Write;

use crate::compressor::{CompressorSpec, FLOAT_BITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        }
    }
}

/// One transmission. `device` is `None` for the server broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommEvent {
    pub epoch: usize,
    pub inner_iter: usize,
    pub direction: Direction,
    pub device: Option<usize>,
    pub bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommLedger {
    per_device_uplink_bits: Vec<u64>,
    server_downlink_bits: u64,
    // `None` when event logging is off; long runs emit millions of events.
    events: Option<Vec<CommEvent>>,
}

impl CommLedger {
    /// Ledger with a full event log.
    pub fn new(n: usize) -> Self {
        Self {
            per_device_uplink_bits: vec![0; n],
            server_downlink_bits: 0,
            events: Some(Vec::new()),
        }
    }

    /// Ledger that keeps only the counters.
    pub fn counters_only(n: usize) -> Self {
        Self {
            events: None,
            ..Self::new(n)
        }
    }

    pub fn n(&self) -> usize {
        self.per_device_uplink_bits.len()
    }

    pub fn per_device_uplink_bits(&self) -> &[u64] {
        &self.per_device_uplink_bits
    }

    pub fn server_downlink_bits(&self) -> u64 {
        self.server_downlink_bits
    }

    pub fn total_uplink_bits(&self) -> u64 {
        self.per_device_uplink_bits.iter().sum()
    }

    pub fn events(&self) -> Option<&[CommEvent]> {
        self.events.as_deref()
    }

    /// Largest per-device uplink counter; the x-axis of the residual traces.
    pub fn max_device_uplink_bits(&self) -> u64 {
        self.per_device_uplink_bits
            .iter()
            .copied()
            .max()
            .unwrap_or(0)
    }

    fn push(&mut self, event: CommEvent) {
        match event.device {
            Some(i) => self.per_device_uplink_bits[i] += event.bits,
            None => self.server_downlink_bits += event.bits,
        }
        if let Some(events) = self.events.as_mut() {
            events.push(event);
        }
    }

    pub fn record_uplink(&mut self, epoch: usize, inner_iter: usize, device: usize, bits: u64) {
        self.push(CommEvent {
            epoch,
            inner_iter,
            direction: Direction::Uplink,
            device: Some(device),
            bits,
        });
    }

    pub fn record_downlink(&mut self, epoch: usize, inner_iter: usize, bits: u64) {
        self.push(CommEvent {
            epoch,
            inner_iter,
            direction: Direction::Downlink,
            device: None,
            bits,
        });
    }

    /// Full-precision synchronization at the start of an epoch: every device
    /// uploads its whole local operator value, `32·d` bits.
    pub fn record_epoch_start(&mut self, epoch: usize, d: usize) {
        let bits = FLOAT_BITS * d as u64;
        for i in 0..self.n() {
            self.record_uplink(epoch, 0, i, bits);
        }
    }

    /// One compressed round: every device uploads one message of
    /// `payload_bits(spec)` and the server broadcasts `32·d` bits.
    pub fn record_inner_round(&mut self, epoch: usize, inner_iter: usize, spec: &CompressorSpec) {
        let bits = spec.payload_bits();
        for i in 0..self.n() {
            self.record_uplink(epoch, inner_iter, i, bits);
        }
        self.record_downlink(epoch, inner_iter, FLOAT_BITS * spec.d() as u64);
    }

    /// Rebuilds `(per-device uplink, downlink)` counters from the event log.
    pub fn replay(&self) -> Option<(Vec<u64>, u64)> {
        let events = self.events.as_ref()?;
        let mut up = vec![0u64; self.n()];
        let mut down = 0u64;
        for e in events {
            match (e.direction, e.device) {
                (Direction::Uplink, Some(i)) => up[i] += e.bits,
                _ => down += e.bits,
            }
        }
        Some((up, down))
    }

    /// Writes the event log as CSV: `epoch,inner_iter,direction,device,bits`.
    /// The server appears as device `server`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,inner_iter,direction,device,bits")?;
        for e in self.events.iter().flatten() {
            let device = e
                .device
                .map_or_else(|| "server".to_string(), |i| i.to_string());
            writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch,
                e.inner_iter,
                e.direction.as_str(),
                device,
                e.bits
            )?;
        }
        Ok(())
    }
}

/// Per-device, per-epoch cost in full-gradient units: one full send plus
/// `K − 1` compressed sends carrying a `δ` fraction each.
pub fn gradient_equivalents(spec: &CompressorSpec, inner_iters: usize) -> f64 {
    1.0 + spec.delta() * (inner_iters.saturating_sub(1)) as f64
}
