//! Error and stability measures over sampled fields.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::net::Environment;
use crate::stability::path_weight_oracle;
use crate::value::{DeviceId, LocalValue};

/// Values on the reporting grid, one per sample time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricSeries {
    pub name: String,
    pub samples: Vec<(f64, f64)>,
}

impl MetricSeries {
    pub fn new(name: &str) -> Self {
        MetricSeries {
            name: name.to_string(),
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        self.samples.push((t, v));
    }

    /// Mean of the samples with `from <= t < to`, or `None` when there are none.
    pub fn mean_between(&self, from: f64, to: f64) -> Option<f64> {
        let xs: Vec<f64> = self
            .samples
            .iter()
            .filter(|(t, _)| *t >= from && *t < to)
            .map(|(_, v)| *v)
            .collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }

    pub fn mean(&self) -> Option<f64> {
        self.mean_between(f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// Mean over devices of `|v_t - v_{t-1}|` between consecutive snapshots.
///
/// Devices missing from either snapshot are skipped; equal values, infinite ones
/// included, count as no change.
pub fn metric_value_stability(name: &str, snapshots: &[(f64, BTreeMap<DeviceId, f64>)]) -> MetricSeries {
    let mut out = MetricSeries::new(name);
    for w in snapshots.windows(2) {
        let (prev, (t, cur)) = (&w[0].1, &w[1]);
        let deltas: Vec<f64> = cur
            .iter()
            .filter_map(|(d, v)| prev.get(d).map(|p| if p == v { 0.0 } else { (v - p).abs() }))
            .collect();
        let mean = if deltas.is_empty() {
            0.0
        } else {
            deltas.iter().sum::<f64>() / deltas.len() as f64
        };
        out.push(*t, mean);
    }
    out
}

/// Time after `from` from which the series stays within 5% of the peak-to-final
/// drop above the final level, over samples in `[from, to)`.
///
/// The final level is the mean of the last tenth of the window.
pub fn settle_time(series: &MetricSeries, from: f64, to: f64) -> Option<f64> {
    let window: Vec<(f64, f64)> = series.samples.iter().copied().filter(|(t, _)| *t >= from && *t < to).collect();
    if window.is_empty() {
        return None;
    }
    let tail = (window.len() / 10).max(1);
    let last = &window[window.len() - tail..];
    let final_level = last.iter().map(|(_, v)| v).sum::<f64>() / tail as f64;
    let peak = window.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let threshold = final_level + 0.05 * (peak - final_level);
    let mut settled_at = window[window.len() - 1].0;
    for (t, v) in window.iter().rev() {
        if *v > threshold {
            break;
        }
        settled_at = *t;
    }
    Some(settled_at - from)
}

/// Shortest-path distances from `sources` over the current links.
pub fn dijkstra(env: &Environment, sources: &BTreeSet<DeviceId>) -> BTreeMap<DeviceId, f64> {
    let local = env
        .devices()
        .map(|d| (d, LocalValue::num(if sources.contains(&d) { 0.0 } else { f64::INFINITY })))
        .collect();
    let add = |w: &LocalValue, r: f64| LocalValue::num(w.as_num().unwrap_or(f64::INFINITY) + r);
    path_weight_oracle(env, &add, &local)
        .expect("edge lengths are positive")
        .into_iter()
        .map(|(d, v)| (d, v.as_num().unwrap_or(f64::INFINITY)))
        .collect()
}

/// Devices reachable from `d`, itself included.
pub fn component(env: &Environment, d: DeviceId) -> BTreeSet<DeviceId> {
    let mut seen = BTreeSet::from([d]);
    let mut queue = VecDeque::from([d]);
    while let Some(x) = queue.pop_front() {
        for n in env.neighbours(x) {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}
