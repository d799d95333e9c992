//! Smooth noise-robust first time derivative over a five-step window.

use std::collections::VecDeque;
use std::sync::Arc;

use super::{find_stream, require_time_domain, Filter, PlanContext, Stream};
use crate::error::{Error, Result};
use crate::mesh::{FieldQuantity, FieldStep, RegionValues};

pub const WINDOW: usize = 5;

/// Relative tolerance on step-size uniformity inside the window.
pub const DT_TOL: f64 = 1e-9;

/// `(2 (q1 - q-1) + q2 - q-2) / (8 dt)` with `q = [q-2, q-1, q0, q1, q2]`.
pub fn smooth_derivative(q: [f64; 5], dt: f64) -> f64 {
    (2.0 * (q[3] - q[1]) + q[4] - q[0]) / (8.0 * dt)
}

/// Uniform step size of a window of step values.
pub fn window_dt(values: &[f64]) -> Result<f64> {
    let dt = values[1] - values[0];
    for w in values.windows(2) {
        let d = w[1] - w[0];
        if (d - dt).abs() > DT_TOL * dt.abs() {
            return Err(Error::Numeric(format!(
                "time derivative requires a uniform step size (found {dt:e} and {d:e})"
            )));
        }
    }
    if !(dt > 0.0) {
        return Err(Error::Numeric(format!("time derivative: non-increasing step values (dt = {dt:e})")));
    }
    Ok(dt)
}

/// Pipeline node `timeDeriv1`; output lags the input by two entries.
#[derive(Debug)]
pub struct TimeDerivFilter {
    id: String,
    input: String,
    output: String,
    out_quantity: Option<FieldQuantity>,
    window: VecDeque<Arc<FieldStep>>,
}

impl TimeDerivFilter {
    pub fn new(id: impl Into<String>, input: impl Into<String>, output: impl Into<String>) -> Self {
        TimeDerivFilter {
            id: id.into(),
            input: input.into(),
            output: output.into(),
            out_quantity: None,
            window: VecDeque::with_capacity(WINDOW),
        }
    }
}

impl Filter for TimeDerivFilter {
    fn id(&self) -> &str {
        &self.id
    }

    fn latency(&self) -> usize {
        2
    }

    fn plan(&mut self, ctx: &PlanContext, inputs: &[Stream]) -> Result<Vec<Stream>> {
        if ctx.num_entries < WINDOW {
            return Err(Error::validation(format!(
                "filter '{}': timeDeriv1 requires at least 5 steps (schedule has {})",
                self.id, ctx.num_entries
            )));
        }
        let src = find_stream(inputs, &self.input)?;
        require_time_domain(&self.id, &src.quantity)?;
        let q = src.quantity.with_name(&self.output);
        log::info!(
            "filter '{}': the first two and last two of {} steps have no time derivative and are dropped",
            self.id,
            ctx.num_entries
        );
        self.out_quantity = Some(q.clone());
        self.window.clear();
        Ok(vec![Stream {
            quantity: q,
            mesh: src.mesh.clone(),
        }])
    }

    fn consumes(&self) -> Vec<String> {
        vec![self.input.clone()]
    }

    fn process(&mut self, _entry: usize, inputs: &[Arc<FieldStep>]) -> Result<Vec<FieldStep>> {
        let Some(step) = inputs.iter().find(|s| s.quantity.name == self.input) else {
            return Ok(Vec::new());
        };
        if let Some(last) = self.window.back() {
            if step.step_index != last.step_index + 1 {
                self.window.clear();
            }
        }
        self.window.push_back(step.clone());
        if self.window.len() < WINDOW {
            return Ok(Vec::new());
        }
        let values: Vec<f64> = self.window.iter().map(|s| s.step_value).collect();
        let dt = window_dt(&values)?;
        let center = &self.window[2];
        let q = self.out_quantity.as_ref().expect("planned");
        let mut out = Vec::with_capacity(center.values.len());
        for (ri, rv) in center.values.iter().enumerate() {
            let arrays: Vec<&[f64]> = self.window.iter().map(|s| s.values[ri].data.as_slice()).collect();
            let data = (0..rv.data.len())
                .map(|i| smooth_derivative([arrays[0][i], arrays[1][i], arrays[2][i], arrays[3][i], arrays[4][i]], dt))
                .collect();
            out.push(RegionValues {
                region: rv.region.clone(),
                data,
            });
        }
        let result = FieldStep {
            quantity: q.clone(),
            step_index: center.step_index,
            step_value: center.step_value,
            values: out,
        };
        self.window.pop_front();
        Ok(vec![result])
    }
}
