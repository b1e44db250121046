//! Per-run statistics: average travel time (ATT), average queue length
//! (AQL) and average waiting time (AWT), plus per-step traces.
//!
//! AQL is the time-mean number of queued vehicles in the whole network.
//! ATT and AWT are per-vehicle means over exited vehicles; vehicles still
//! on the network when the run ends are excluded but reported via
//! `n_entered - n_exited`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::Vehicle;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("expected {expected} per-intersection values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("vehicle {0} has no exit_time")]
    NotExited(u64),
}

#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    k: usize,
    /// Per-step network mean queue length (Q-bar).
    q_trace: Vec<f64>,
    /// Per-step network mean waiting accrual (W-bar).
    w_trace: Vec<f64>,
    travel_times: Vec<f64>,
    waiting_totals: Vec<f64>,
}

impl MetricsAccumulator {
    pub fn new(intersections: usize) -> Self {
        MetricsAccumulator {
            k: intersections,
            q_trace: Vec::new(),
            w_trace: Vec::new(),
            travel_times: Vec::new(),
            waiting_totals: Vec::new(),
        }
    }

    pub fn steps_recorded(&self) -> usize {
        self.q_trace.len()
    }

    /// Record one decision step: Q_i and W_i per intersection.
    pub fn record_step(&mut self, queues: &[u32], waits: &[u32]) -> Result<(), MetricsError> {
        for values in [queues, waits] {
            if values.len() != self.k {
                return Err(MetricsError::LengthMismatch { expected: self.k, got: values.len() });
            }
        }
        let k = self.k as f64;
        self.q_trace.push(queues.iter().map(|&q| q as f64).sum::<f64>() / k);
        self.w_trace.push(waits.iter().map(|&w| w as f64).sum::<f64>() / k);
        Ok(())
    }

    pub fn record_exit(&mut self, vehicle: &Vehicle) -> Result<(), MetricsError> {
        let t = vehicle.travel_time().ok_or(MetricsError::NotExited(vehicle.id.0))?;
        self.travel_times.push(t as f64);
        self.waiting_totals.push(vehicle.waiting_seconds as f64);
        Ok(())
    }

    pub fn finalize(&self, n_entered: u64) -> MetricsReport {
        let n_exited = self.travel_times.len() as u64;
        let t_total: f64 = self.travel_times.iter().sum();
        let att = (n_exited > 0).then(|| t_total / n_exited as f64);
        let awt = (n_exited > 0)
            .then(|| self.waiting_totals.iter().sum::<f64>() / n_exited as f64);
        // Network total queue is K * Q-bar; AQL averages it over steps.
        let aql = if self.q_trace.is_empty() {
            0.0
        } else {
            self.q_trace.iter().map(|q| q * self.k as f64).sum::<f64>() / self.q_trace.len() as f64
        };
        MetricsReport {
            att,
            aql,
            awt,
            t_total,
            n_entered,
            n_exited,
            q_trace: self.q_trace.clone(),
            w_trace: self.w_trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean origin-to-destination travel time over exited vehicles.
    /// `None` when no vehicle exited.
    pub att: Option<f64>,
    /// Time-mean number of queued vehicles in the network.
    pub aql: f64,
    /// Mean per-vehicle total queued time over exited vehicles.
    pub awt: Option<f64>,
    /// Sum of travel times of exited vehicles.
    pub t_total: f64,
    pub n_entered: u64,
    pub n_exited: u64,
    /// Per-step mean queue length per intersection (Q-bar).
    pub q_trace: Vec<f64>,
    /// Per-step mean waiting accrual per intersection (W-bar).
    pub w_trace: Vec<f64>,
}

impl MetricsReport {
    pub fn att_display(&self) -> String {
        self.att.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
    }

    pub fn awt_display(&self) -> String {
        self.awt.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
    }
}
