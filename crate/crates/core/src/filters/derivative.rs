//! Meshless spatial derivatives (gradient, divergence, curl) from local
//! Gaussian RBF interpolants with constant and linear augmentation.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::interp::active_axes;
use super::{
    find_step, find_stream, make_step, require_components, require_time_domain,
    resolve_source_regions, resolve_target_regions, Binding, Filter, PlanContext, SourceSet, Stream,
    TargetSet,
};
use crate::error::{Error, Result};
use crate::geom::{self, Point3};
use crate::linalg::solve_regularized;
use crate::mesh::{EntityKind, FieldQuantity, FieldStep, Mesh};
use crate::spatial::PointIndex;

pub const DEFAULT_EPSILON_SCALING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RbfFdSettings {
    /// Shape parameter relative to the stencil radius: `eps = epsilon_scaling / d_max`.
    pub epsilon_scaling: f64,
    /// Scale of the linear augmentation columns; `None` means 1, `Some(0)` drops them.
    pub beta_scaling: Option<f64>,
    /// Scale of the constant augmentation column; `None` means 1, `Some(0)` drops it.
    pub k_scaling: Option<f64>,
    pub log_eps: bool,
    /// Points per stencil; `None` selects 32 in 3D and 12 in 2D.
    pub stencil_size: Option<usize>,
}

impl Default for RbfFdSettings {
    fn default() -> Self {
        RbfFdSettings {
            epsilon_scaling: DEFAULT_EPSILON_SCALING,
            beta_scaling: None,
            k_scaling: None,
            log_eps: false,
            stencil_size: None,
        }
    }
}

impl RbfFdSettings {
    pub fn stencil_size_for(&self, dimension: usize) -> usize {
        self.stencil_size
            .unwrap_or(if dimension <= 2 { 12 } else { 32 })
    }

    pub fn check(&self, id: &str) -> Result<()> {
        if !(self.epsilon_scaling > 0.0) || !self.epsilon_scaling.is_finite() {
            return Err(Error::validation(format!(
                "filter '{id}': epsilonScaling must be positive"
            )));
        }
        for (name, v) in [("betaScaling", self.beta_scaling), ("kScaling", self.k_scaling)] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(Error::validation(format!("filter '{id}': {name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Weights turning stencil samples into the value and the three partial
/// derivatives at one target point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeStencil {
    pub target: Point3,
    pub indices: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: [Vec<f64>; 3],
    pub min_distance: f64,
    pub max_distance: f64,
    pub epsilon: f64,
}

impl DerivativeStencil {
    fn dot(w: &[f64], idx: &[usize], f: &[f64], width: usize, lane: usize) -> f64 {
        w.iter().zip(idx).map(|(w, &i)| w * f[i * width + lane]).sum()
    }

    pub fn apply_value(&self, f: &[f64], width: usize, lane: usize) -> f64 {
        Self::dot(&self.value, &self.indices, f, width, lane)
    }

    pub fn apply_partial(&self, axis: usize, f: &[f64], width: usize, lane: usize) -> f64 {
        Self::dot(&self.grad[axis], &self.indices, f, width, lane)
    }
}

/// Relative distance tolerance under which sources count as equidistant.
pub const TIE_TOL: f64 = 1e-10;

/// The `size` nearest sources plus every further source at the same distance
/// as the last one, as long as that at most doubles the stencil.
pub fn stencil_neighbours(index: &PointIndex, t: &Point3, size: usize) -> Result<Vec<(usize, f64)>> {
    let size = size.min(index.len());
    let cap = (2 * size).min(index.len());
    let mut nb = index.knn(t, cap)?;
    if size == 0 || nb.len() <= size {
        return Ok(nb);
    }
    let cut = nb[size - 1].1 * (1.0 + TIE_TOL);
    let keep = size + nb[size..].iter().take_while(|&&(_, d)| d <= cut).count();
    if keep == nb.len() && nb.len() < index.len() {
        // The tie extends past the cap; fall back to index order.
        nb.truncate(size);
    } else {
        nb.truncate(keep);
    }
    Ok(nb)
}

/// Builds the derivative stencil for target `t` over the `size` nearest
/// sources (extended to complete a shell of equidistant sources).
pub fn build_stencil(index: &PointIndex, t: &Point3, settings: &RbfFdSettings, size: usize) -> Result<DerivativeStencil> {
    let nb = stencil_neighbours(index, t, size)?;
    let n = nb.len();
    let xs: Vec<Point3> = nb.iter().map(|&(i, _)| index.points()[i]).collect();
    let indices: Vec<usize> = nb.iter().map(|&(i, _)| i).collect();
    let d_max = nb.last().expect("non-empty").1;
    let d_min = nb[0].1;
    if !(d_max > 0.0) {
        return Err(Error::Numeric(format!(
            "RBF stencil at ({}, {}, {}) has no extent",
            t[0], t[1], t[2]
        )));
    }
    let eps = settings.epsilon_scaling / d_max;
    let k = settings.k_scaling.unwrap_or(1.0);
    let beta = settings.beta_scaling.unwrap_or(1.0);
    let axes = if beta != 0.0 { active_axes(&xs, t, d_max) } else { Vec::new() };
    let has_const = k != 0.0;
    let m = usize::from(has_const) + axes.len();
    let size = n + m;

    let phi = |r: f64| (-(eps * r) * (eps * r)).exp();
    let mut a = DMatrix::zeros(size, size);
    for i in 0..n {
        for j in i..n {
            let v = phi(geom::dist(&xs[i], &xs[j]));
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        let mut c = n;
        if has_const {
            a[(i, c)] = k;
            a[(c, i)] = k;
            c += 1;
        }
        for &ax in &axes {
            let v = beta * (xs[i][ax] - t[ax]) / d_max;
            a[(i, c)] = v;
            a[(c, i)] = v;
            c += 1;
        }
    }
    // columns: value, d/dx, d/dy, d/dz
    let mut rhs = DMatrix::zeros(size, 4);
    for j in 0..n {
        let r = geom::dist(t, &xs[j]);
        let p = phi(r);
        rhs[(j, 0)] = p;
        for ax in 0..3 {
            rhs[(j, 1 + ax)] = -2.0 * eps * eps * (t[ax] - xs[j][ax]) * p;
        }
    }
    let mut c = n;
    if has_const {
        rhs[(c, 0)] = k;
        c += 1;
    }
    for &ax in &axes {
        rhs[(c, 1 + ax)] = beta / d_max;
        c += 1;
    }
    let w = solve_regularized(&a, n, &rhs).ok_or_else(|| {
        Error::Numeric(format!(
            "singular RBF system at target ({}, {}, {}); try a smaller epsilonScaling",
            t[0], t[1], t[2]
        ))
    })?;
    let col = |c: usize| (0..n).map(|j| w[(j, c)]).collect::<Vec<f64>>();
    let value = if d_min < 1e-12 * d_max {
        (0..n).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect()
    } else {
        col(0)
    };
    Ok(DerivativeStencil {
        target: *t,
        indices,
        value,
        grad: [col(1), col(2), col(3)],
        min_distance: d_min,
        max_distance: d_max,
        epsilon: eps,
    })
}

/// Derivative stencils for a set of targets over one source cloud.
#[derive(Debug, Clone)]
pub struct DerivativeOperator {
    stencils: Vec<DerivativeStencil>,
}

impl DerivativeOperator {
    pub fn new(sources: &PointIndex, targets: &[Point3], settings: &RbfFdSettings, dimension: usize) -> Result<Self> {
        let size = settings.stencil_size_for(dimension);
        if sources.len() < dimension + 2 || size < dimension + 2 {
            return Err(Error::Numeric(format!(
                "RBF differentiation needs at least {} source points per stencil ({} available, stencil size {size})",
                dimension + 2,
                sources.len()
            )));
        }
        let stencils: Vec<DerivativeStencil> = targets
            .par_iter()
            .map(|t| build_stencil(sources, t, settings, size))
            .collect::<Result<_>>()?;
        if settings.log_eps && !stencils.is_empty() {
            let dmin = stencils.iter().map(|s| s.min_distance).fold(f64::INFINITY, f64::min);
            let dmax = stencils.iter().map(|s| s.max_distance).fold(0.0, f64::max);
            let emin = stencils.iter().map(|s| s.epsilon).fold(f64::INFINITY, f64::min);
            let emax = stencils.iter().map(|s| s.epsilon).fold(0.0, f64::max);
            log::info!("[{dmin:e}, {dmax:e}, {emin:e}..{emax:e}] (minimal distance, maximal distance, epsilon)");
        }
        Ok(DerivativeOperator { stencils })
    }

    pub fn stencils(&self) -> &[DerivativeStencil] {
        &self.stencils
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    /// Values of an `width`-lane field at the targets.
    pub fn value(&self, f: &[f64], width: usize) -> Vec<f64> {
        self.stencils
            .par_iter()
            .flat_map_iter(|s| (0..width).map(move |l| s.apply_value(f, width, l)))
            .collect()
    }

    /// Gradient of a scalar field (3 values per target).
    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        self.stencils
            .par_iter()
            .flat_map_iter(|s| (0..3).map(move |ax| s.apply_partial(ax, f, 1, 0)))
            .collect()
    }

    /// Divergence of a 3-vector field.
    pub fn divergence(&self, u: &[f64]) -> Vec<f64> {
        self.stencils
            .par_iter()
            .map(|s| (0..3).map(|ax| s.apply_partial(ax, u, 3, ax)).sum())
            .collect()
    }

    /// Curl of a 3-vector field (3 values per target).
    pub fn curl(&self, u: &[f64]) -> Vec<f64> {
        self.stencils
            .par_iter()
            .flat_map_iter(|s| {
                let d = |ax: usize, lane: usize| s.apply_partial(ax, u, 3, lane);
                [d(1, 2) - d(2, 1), d(2, 0) - d(0, 2), d(0, 1) - d(1, 0)]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    Gradient,
    Divergence,
    Curl,
}

impl DiffOp {
    pub fn type_name(self) -> &'static str {
        match self {
            DiffOp::Gradient => "SpaceDifferentiation_Gradient",
            DiffOp::Divergence => "SpaceDifferentiation_Divergence",
            DiffOp::Curl => "SpaceDifferentiation_Curl",
        }
    }

    fn components(self) -> (usize, usize) {
        match self {
            DiffOp::Gradient => (1, 3),
            DiffOp::Divergence => (3, 1),
            DiffOp::Curl => (3, 3),
        }
    }
}

/// Source cloud and target layout shared by the differentiating filters.
#[derive(Debug)]
pub(crate) struct PointGeometry {
    pub source_mesh: Arc<Mesh>,
    pub source_regions: Vec<String>,
    pub source_kind: EntityKind,
    pub target_mesh: Arc<Mesh>,
    pub target_regions: Vec<String>,
    pub target_kind: EntityKind,
}

impl PointGeometry {
    pub fn plan(id: &str, binding: &Binding, src: &Stream) -> Result<Self> {
        let target_mesh = binding.target_or(&src.mesh).clone();
        Ok(PointGeometry {
            source_regions: resolve_source_regions(id, &src.quantity, &binding.source_regions)?,
            source_mesh: src.mesh.clone(),
            source_kind: src.quantity.defined_on,
            target_regions: resolve_target_regions(id, &target_mesh, &binding.target_regions)?,
            target_kind: src.quantity.defined_on,
            target_mesh,
        })
    }

    pub fn sources(&self) -> Result<SourceSet> {
        SourceSet::new(&self.source_mesh, &self.source_regions, self.source_kind)
    }

    pub fn targets(&self) -> Result<TargetSet> {
        TargetSet::new(&self.target_mesh, &self.target_regions, self.target_kind)
    }

    pub fn dimension(&self) -> usize {
        let dim = self
            .source_regions
            .iter()
            .filter_map(|r| self.source_mesh.region(r).ok())
            .map(|r| r.dimension())
            .max()
            .unwrap_or(3);
        dim.max(2)
    }
}

/// Pipeline node for gradient, divergence and curl.
#[derive(Debug)]
pub struct DiffFilter {
    id: String,
    op: DiffOp,
    settings: RbfFdSettings,
    binding: Binding,
    geometry: Option<PointGeometry>,
    output: Option<FieldQuantity>,
    cache: Option<(SourceSet, DerivativeOperator, TargetSet)>,
}

impl DiffFilter {
    pub fn new(id: impl Into<String>, op: DiffOp, settings: RbfFdSettings, binding: Binding) -> Self {
        DiffFilter {
            id: id.into(),
            op,
            settings,
            binding,
            geometry: None,
            output: None,
            cache: None,
        }
    }
}

impl Filter for DiffFilter {
    fn id(&self) -> &str {
        &self.id
    }

    fn plan(&mut self, _ctx: &PlanContext, inputs: &[Stream]) -> Result<Vec<Stream>> {
        let src = find_stream(inputs, &self.binding.input)?;
        self.settings.check(&self.id)?;
        require_time_domain(&self.id, &src.quantity)?;
        let (cin, cout) = self.op.components();
        require_components(&self.id, &src.quantity, cin)?;
        let geometry = PointGeometry::plan(&self.id, &self.binding, src)?;
        let mut output = src.quantity.with_name(&self.binding.output);
        output.components = cout;
        output.regions = geometry.target_regions.clone();
        let mesh = geometry.target_mesh.clone();
        self.geometry = Some(geometry);
        self.output = Some(output.clone());
        self.cache = None;
        Ok(vec![Stream { quantity: output, mesh }])
    }

    fn consumes(&self) -> Vec<String> {
        vec![self.binding.input.clone()]
    }

    fn process(&mut self, _entry: usize, inputs: &[Arc<FieldStep>]) -> Result<Vec<FieldStep>> {
        let Some(step) = find_step(inputs, &self.binding.input) else {
            return Ok(Vec::new());
        };
        if self.cache.is_none() {
            let g = self.geometry.as_ref().expect("planned");
            let build = || -> Result<_> {
                let sources = g.sources()?;
                let targets = g.targets()?;
                let index = PointIndex::new(sources.points.clone());
                let op = DerivativeOperator::new(&index, &targets.points, &self.settings, g.dimension())?;
                Ok((sources, op, targets))
            };
            self.cache = Some(build().map_err(|e| e.in_filter(&self.id))?);
        }
        let (sources, op, targets) = self.cache.as_ref().expect("built");
        let f = sources.gather(step)?;
        let flat = match self.op {
            DiffOp::Gradient => op.gradient(&f),
            DiffOp::Divergence => op.divergence(&f),
            DiffOp::Curl => op.curl(&f),
        };
        let output = self.output.as_ref().expect("planned");
        Ok(vec![make_step(output, step, targets.scatter(&flat, output.components))])
    }
}
