//! Transition records and their CSV form.

use std::io::Write;

use super::NetError;
use crate::value::DeviceId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Fire,
    Env,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Fire => "fire",
            Action::Env => "env",
        }
    }
}

/// One transition: a firing with the device's new root, or an environment change with a description.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub action: Action,
    pub device: Option<DeviceId>,
    pub value: String,
    pub metrics: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub metric_names: Vec<String>,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, r: TraceRecord) {
        debug_assert!(self.records.last().map_or(true, |l| l.time <= r.time));
        self.records.push(r);
    }

    pub fn firings(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.action == Action::Fire)
    }

    /// Columns `time, action, deviceId, value`, then one per metric.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), NetError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string(), "action".into(), "deviceId".into(), "value".into()];
        header.extend(self.metric_names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![
                r.time.to_string(),
                r.action.as_str().to_string(),
                r.device.map(|d| d.to_string()).unwrap_or_default(),
                r.value.clone(),
            ];
            row.extend(r.metrics.iter().map(|m| m.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| NetError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

fn csv_err(e: csv::Error) -> NetError {
    NetError::Io(e.to_string())
}
