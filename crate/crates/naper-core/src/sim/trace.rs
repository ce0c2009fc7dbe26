//! Simulation output: one JSON record per frame plus a summary CSV row.
//! Serialization is a pure function of the trace, so identical configs
//! produce byte-identical files.

use serde::Serialize;

use super::config::SimConfig;

#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    Fault {
        t_us: u64,
        store: String,
        flips: usize,
    },
    Selection {
        t_us: u64,
        chosen: Vec<usize>,
        feasible: bool,
    },
    Recovery {
        t_us: u64,
        layers: usize,
        remaining: usize,
    },
    Rejoin {
        t_us: u64,
        model: usize,
        recovery_latency_us: u64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub arrival_us: u64,
    pub output_us: Option<u64>,
    pub deadline_met: bool,
    pub models_used: Vec<usize>,
    pub accuracy_proxy: f64,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub strategy: String,
    pub frames: usize,
    pub fault_events: usize,
    pub deadline_met_pct: f64,
    pub mean_accuracy_proxy: f64,
    pub max_recovery_us: u64,
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub records: Vec<FrameRecord>,
    pub summary: SimSummary,
}

impl SimTrace {
    /// One JSON object per line, one line per frame.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace serializes"));
            out.push('\n');
        }
        out
    }

    pub fn summary_csv_header() -> &'static str {
        "strategy,deadline_met_pct,mean_acc_proxy,max_recovery_ms"
    }

    pub fn summary_csv_row(&self) -> String {
        format!(
            "{},{:.1},{:.4},{:.3}",
            self.summary.strategy,
            self.summary.deadline_met_pct,
            self.summary.mean_accuracy_proxy,
            self.summary.max_recovery_us as f64 / 1000.0
        )
    }

    /// Conservation of time: every met deadline saw its output within
    /// the window, and recovery chunks never spill past the next
    /// arrival.
    pub fn check_time_conservation(&self, cfg: &SimConfig, deadline_us: u64) -> Result<(), String> {
        for r in &self.records {
            if r.deadline_met {
                let out = r.output_us.ok_or(format!("frame {}: met without output", r.frame))?;
                if out > r.arrival_us + deadline_us {
                    return Err(format!("frame {}: output after deadline yet marked met", r.frame));
                }
            }
            let next_arrival = (r.frame as u64 + 1) * cfg.frame_period_us;
            for ev in &r.events {
                if let SimEvent::Recovery { t_us, .. } = ev {
                    if *t_us > next_arrival {
                        return Err(format!(
                            "frame {}: recovery chunk at {t_us} past next arrival {next_arrival}",
                            r.frame
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Monotone recovery: between consecutive recovery events with no
    /// fault in between, the remaining faulted-layer count never grows.
    pub fn check_monotone_recovery(&self) -> Result<(), String> {
        let mut last_remaining: Option<usize> = None;
        for r in &self.records {
            for ev in &r.events {
                match ev {
                    SimEvent::Fault { .. } => last_remaining = None,
                    SimEvent::Recovery { remaining, .. } => {
                        if let Some(prev) = last_remaining {
                            if *remaining > prev {
                                return Err(format!(
                                    "frame {}: remaining rose {prev} -> {remaining}",
                                    r.frame
                                ));
                            }
                        }
                        last_remaining = Some(*remaining);
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
