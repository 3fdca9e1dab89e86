//! Minimal path weights, the stable outcome of a minimising `rep`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use super::properties::is_top;
use super::StabilityError;
use crate::net::Environment;
use crate::value::{DeviceId, LocalValue};

/// For every device, the least weight of a path ending there.
///
/// A path starting at `δ₀` weighs `local[δ₀]`, and each edge `δ → δ'` maps the
/// weight `w` so far to `fmp(w, range(δ, δ'))`. With `fmp` monotonic and progressive
/// a settled device can never be improved later, so devices are settled cheapest first.
pub fn path_weight_oracle(
    env: &Environment,
    fmp: &dyn Fn(&LocalValue, f64) -> LocalValue,
    local: &BTreeMap<DeviceId, LocalValue>,
) -> Result<BTreeMap<DeviceId, LocalValue>, StabilityError> {
    let mut best: BTreeMap<DeviceId, LocalValue> = BTreeMap::new();
    for d in env.devices() {
        let v = local
            .get(&d)
            .ok_or_else(|| StabilityError::NonTermination(format!("no local value for device {d}")))?;
        best.insert(d, v.clone());
    }
    let less = |a: &LocalValue, b: &LocalValue| -> Result<bool, StabilityError> {
        a.try_cmp(b)
            .map(|o| o == Ordering::Less)
            .map_err(|e| StabilityError::NonTermination(e.to_string()))
    };
    let mut settled: BTreeSet<DeviceId> = BTreeSet::new();
    while settled.len() < best.len() {
        let mut next: Option<DeviceId> = None;
        for (d, v) in &best {
            if settled.contains(d) {
                continue;
            }
            match next {
                Some(n) if !less(v, &best[&n])? => {}
                _ => next = Some(*d),
            }
        }
        let d = next.expect("an unsettled device remains");
        settled.insert(d);
        let w = best[&d].clone();
        for n in env.neighbours(d) {
            let cand = fmp(&w, env.range(d, n));
            if !less(&w, &cand)? && !is_top(&cand) {
                return Err(StabilityError::NonTermination(format!(
                    "edge {d}→{n} maps {w} to {cand}, which is not larger"
                )));
            }
            if settled.contains(&n) {
                continue;
            }
            if less(&cand, &best[&n])? {
                best.insert(n, cand);
            }
        }
    }
    Ok(best)
}
