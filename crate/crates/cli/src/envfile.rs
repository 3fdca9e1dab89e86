//! Value-tree environment files: one `label: tree` line per neighbour.
//!
//! ```text
//! # neighbours of δB
//! δA: 1⟨(δA↦1)⟨1⟩⟩
//! δC: 3⟨(δC↦3)⟨3⟩⟩
//! ```

use std::sync::Arc;

use fieldcalc::eval::{parse_tree, ValueTreeEnv};
use fieldcalc::value::{DeviceId, DeviceNaming};

/// A device label, with or without the leading `δ`.
pub fn parse_device(label: &str) -> Option<(DeviceId, DeviceNaming)> {
    let label = label.trim();
    DeviceNaming::parse_label(label.strip_prefix('δ').unwrap_or(label))
}

/// The environment plus the naming its labels use, if any label was alphabetic.
pub fn parse_env(text: &str) -> Result<(ValueTreeEnv, Option<DeviceNaming>), String> {
    let mut env = ValueTreeEnv::new();
    let mut naming = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, tree) = line
            .split_once(':')
            .ok_or_else(|| format!("line {}: expected `label: tree`", i + 1))?;
        let (d, n) = parse_device(label).ok_or_else(|| format!("line {}: bad device label `{}`", i + 1, label.trim()))?;
        let tree = parse_tree(tree.trim()).map_err(|e| format!("line {}: {e}", i + 1))?;
        if env.insert(d, Arc::new(tree)).is_some() {
            return Err(format!("line {}: device `{}` listed twice", i + 1, label.trim()));
        }
        if naming != Some(DeviceNaming::Alpha) {
            naming = Some(n);
        }
    }
    Ok((env, naming))
}
