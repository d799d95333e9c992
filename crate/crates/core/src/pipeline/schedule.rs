//! Mapping of the requested step values onto the steps of an input.

use super::xml::StepValueDefinition;
use crate::error::{Error, Result};

/// Relative tolerance (in units of `delta`) for matching step values.
pub const MATCH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEntry {
    /// Position of the matched step in the input's step list.
    pub position: usize,
    /// Requested step value.
    pub requested: f64,
    /// Value written to the outputs: the matched input value, or
    /// `(startStep + j + 1) * delta` with `deleteOffset`.
    pub output_value: f64,
}

/// Resolves every schedule entry against the strictly increasing `available` values.
pub fn resolve_schedule(def: &StepValueDefinition, available: &[f64]) -> Result<Vec<ScheduleEntry>> {
    if available.is_empty() {
        return Err(Error::validation("the input has no steps"));
    }
    let tol = MATCH_TOL * def.delta;
    (0..def.num_steps)
        .map(|j| {
            let k = (def.start_step + j) as f64;
            let requested = def.start_time + k * def.delta;
            let at = available.partition_point(|&v| v < requested);
            let nearest = [at.checked_sub(1), (at < available.len()).then_some(at)]
                .into_iter()
                .flatten()
                .min_by(|&a, &b| {
                    (available[a] - requested)
                        .abs()
                        .total_cmp(&(available[b] - requested).abs())
                        .then(a.cmp(&b))
                })
                .expect("non-empty");
            if (available[nearest] - requested).abs() > tol {
                return Err(Error::validation(format!(
                    "no input step matches requested value {requested:e} (schedule entry {j}); nearest available is {:e}",
                    available[nearest]
                )));
            }
            let output_value = if def.delete_offset { (k + 1.0) * def.delta } else { available[nearest] };
            Ok(ScheduleEntry {
                position: nearest,
                requested,
                output_value,
            })
        })
        .collect()
}
