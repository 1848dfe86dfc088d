//! Independent Subspace Analysis layers and the two-layer stacked network.
//!
//! A layer holds `k` orthonormal filters over whitened `n`-dimensional input,
//! partitioned into contiguous groups of `g` filters. The pooled response of
//! group `i` is `sqrt(Σ_{j∈i} (w_jᵀx)² + ε)`. Training minimises the mean
//! summed response over a batch by projected gradient descent, projecting
//! back onto row-orthonormal matrices after every step.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{chunked_sum, columns, orthonormality_error};
use crate::patch_sampling::{
    contrast_normalize_values, sample_random_blocks, BlockGeometry, Origin, Patch,
};
use crate::rng::{derive_seed, seeded};
use crate::video_io::VideoClip;
use crate::whitening::{fit_pca_whitening, WhiteningTransform};

/// Maximum number of step halvings tried in one iteration before training stops.
pub const MAX_STEP_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct IsaLayer {
    /// `k × n`, one filter per row.
    pub filters: DMatrix<f64>,
    pub group_size: usize,
    pub eps: f64,
}

impl IsaLayer {
    pub fn new(filters: DMatrix<f64>, group_size: usize, eps: f64) -> Result<Self> {
        if group_size == 0 || filters.nrows() % group_size != 0 {
            return Err(Error::InvalidConfig(format!(
                "{} filters cannot be split into groups of {group_size}",
                filters.nrows()
            )));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidConfig(format!("pooling eps {eps} must be >= 0")));
        }
        Ok(IsaLayer {
            filters,
            group_size,
            eps,
        })
    }

    pub fn num_filters(&self) -> usize {
        self.filters.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.filters.ncols()
    }

    pub fn num_groups(&self) -> usize {
        self.num_filters() / self.group_size
    }

    pub fn activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let pooled = self.pool(&(&self.filters * DMatrix::from_column_slice(x.len(), 1, x)));
        Ok(pooled.iter().copied().collect())
    }

    /// Pooled responses of every column of `samples` (`m × N`).
    pub fn activations_columns(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(samples)?;
        Ok(self.pool(&(&self.filters * samples)))
    }

    fn check_rows(&self, samples: &DMatrix<f64>) -> Result<()> {
        if samples.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: samples.nrows(),
            });
        }
        Ok(())
    }

    /// `responses` is `k × N`; returns `m × N`.
    fn pool(&self, responses: &DMatrix<f64>) -> DMatrix<f64> {
        let g = self.group_size;
        DMatrix::from_fn(self.num_groups(), responses.ncols(), |i, t| {
            let energy: f64 = (i * g..(i + 1) * g).map(|j| responses[(j, t)].powi(2)).sum();
            (energy + self.eps).sqrt()
        })
    }

    fn batch_terms(&self, samples: &DMatrix<f64>, with_gradient: bool) -> (f64, Option<DMatrix<f64>>) {
        let (k, n) = self.filters.shape();
        let g = self.group_size;
        let zero = Terms {
            objective: 0.0,
            gradient: with_gradient.then(|| DMatrix::zeros(k, n)),
        };
        let total = chunked_sum(samples.ncols(), zero, |range| {
            let block = samples.columns(range.start, range.len());
            let responses = &self.filters * block;
            let pooled = self.pool(&responses);
            let objective = pooled.sum();
            let gradient = with_gradient.then(|| {
                let scaled = DMatrix::from_fn(k, range.len(), |j, t| {
                    responses[(j, t)] / pooled[(j / g, t)]
                });
                scaled * block.transpose()
            });
            Terms {
                objective,
                gradient,
            }
        });
        let count = samples.ncols() as f64;
        (total.objective / count, total.gradient.map(|gr| gr / count))
    }
}

#[derive(Clone)]
struct Terms {
    objective: f64,
    gradient: Option<DMatrix<f64>>,
}

impl std::ops::AddAssign for Terms {
    fn add_assign(&mut self, rhs: Terms) {
        self.objective += rhs.objective;
        if let (Some(a), Some(b)) = (self.gradient.as_mut(), rhs.gradient) {
            *a += b;
        }
    }
}

/// Mean over samples (columns) of the summed pooled responses.
pub fn objective(layer: &IsaLayer, samples: &DMatrix<f64>) -> Result<f64> {
    if samples.ncols() == 0 {
        return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
    }
    layer.check_rows(samples)?;
    Ok(layer.batch_terms(samples, false).0)
}

/// Analytic gradient of [`objective`] with respect to the filter matrix.
pub fn gradient(layer: &IsaLayer, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if samples.ncols() == 0 {
        return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
    }
    if !(layer.eps > 0.0) {
        return Err(Error::InvalidConfig(
            "the gradient needs a strictly positive pooling eps".into(),
        ));
    }
    layer.check_rows(samples)?;
    Ok(layer.batch_terms(samples, true).1.expect("gradient requested"))
}

/// Symmetric orthogonalisation `(W·Wᵀ)^{-1/2}·W`.
///
/// Computed from the thin SVD `W = U·S·Vᵀ` as `U·Vᵀ`, which is the same
/// matrix without forming `W·Wᵀ`.
pub fn project_orthonormal(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (k, n) = w.shape();
    if k > n {
        return Err(Error::InvalidConfig(format!(
            "cannot orthonormalise {k} rows in {n} dimensions"
        )));
    }
    let svd = w.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    let (min_eig, max_eig) = (s_min * s_min, s_max * s_max);
    if !(min_eig > 1e-12 * max_eig) || !min_eig.is_finite() {
        return Err(Error::DegenerateFilters {
            min_eigenvalue: min_eig,
        });
    }
    let u = svd.u.expect("requested u");
    let v_t = svd.v_t.expect("requested v_t");
    Ok(u * v_t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsaTrainConfig {
    pub step_size: f64,
    pub step_decay: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub eps: f64,
}

impl Default for IsaTrainConfig {
    fn default() -> Self {
        IsaTrainConfig {
            step_size: 1.0,
            step_decay: 0.999,
            max_iters: 1000,
            rel_tol: 1e-6,
            seed: 0,
            eps: 1e-4,
        }
    }
}

impl IsaTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidConfig("isa step_size must be > 0".into()));
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(Error::InvalidConfig("isa step_decay must be in (0, 1]".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("isa max_iters must be >= 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidConfig("isa rel_tol must be >= 0".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig("isa eps must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedLayer {
    pub layer: IsaLayer,
    /// Objective of the initial iterate followed by every accepted step.
    pub objective_trace: Vec<f64>,
    /// Largest `max |W·Wᵀ − I|` seen across all projections, including
    /// rejected trial steps.
    pub max_projection_error: f64,
    /// Number of projections performed.
    pub projections: usize,
}

/// Trains one layer on whitened samples stored as columns.
pub fn train_layer(
    samples: &DMatrix<f64>,
    num_filters: usize,
    group_size: usize,
    cfg: &IsaTrainConfig,
) -> Result<TrainedLayer> {
    cfg.validate()?;
    let n = samples.nrows();
    if samples.ncols() < num_filters {
        return Err(Error::NotEnoughSamples {
            needed: num_filters,
            got: samples.ncols(),
        });
    }
    if num_filters == 0 || group_size == 0 || num_filters % group_size != 0 {
        return Err(Error::InvalidConfig(format!(
            "{num_filters} filters cannot be split into groups of {group_size}"
        )));
    }

    let mut rng = seeded(cfg.seed);
    let init = DMatrix::from_fn(num_filters, n, |_, _| StandardNormal.sample(&mut rng));
    let mut max_projection_error = 0.0f64;
    let mut projections = 0usize;
    let mut project = |w: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let r = project_orthonormal(w)?;
        max_projection_error = max_projection_error.max(orthonormality_error(&r));
        projections += 1;
        Ok(r)
    };

    let mut layer = IsaLayer::new(project(&init)?, group_size, cfg.eps)?;
    let mut current = objective(&layer, samples)?;
    let mut trace = vec![current];

    for iter in 0..cfg.max_iters {
        let grad = gradient(&layer, samples)?;
        let mut step = cfg.step_size * cfg.step_decay.powi(iter as i32);
        let mut accepted = None;
        for _ in 0..=MAX_STEP_HALVINGS {
            let candidate = IsaLayer {
                filters: project(&(&layer.filters - &grad * step))?,
                ..layer.clone()
            };
            let value = objective(&candidate, samples)?;
            if value <= current {
                accepted = Some((candidate, value));
                break;
            }
            step *= 0.5;
        }
        let Some((next, value)) = accepted else {
            break;
        };
        let rel_change = (current - value).abs() / current;
        layer = next;
        current = value;
        trace.push(current);
        if rel_change < cfg.rel_tol {
            break;
        }
    }

    Ok(TrainedLayer {
        layer,
        objective_trace: trace,
        max_projection_error,
        projections,
    })
}

/// Block geometry of both layers plus the grid of layer-1 sub-blocks inside
/// a layer-2 block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackGeometry {
    pub layer1: BlockGeometry,
    pub layer2: BlockGeometry,
    /// Sub-block placements along x, y, t.
    pub grid: [usize; 3],
    /// Offset between neighbouring placements along x, y, t.
    pub sub_stride: [usize; 3],
}

impl StackGeometry {
    pub fn validate(&self) -> Result<()> {
        self.layer1.validate()?;
        self.layer2.validate()?;
        let l1 = [self.layer1.sx, self.layer1.sy, self.layer1.st];
        let l2 = [self.layer2.sx, self.layer2.sy, self.layer2.st];
        for axis in 0..3 {
            if self.grid[axis] == 0 || self.sub_stride[axis] == 0 {
                return Err(Error::InvalidConfig("placement grid values must be >= 1".into()));
            }
            let span = l1[axis] + (self.grid[axis] - 1) * self.sub_stride[axis];
            if span != l2[axis] {
                return Err(Error::InvalidConfig(format!(
                    "layer-2 block extent {} along axis {axis} does not match {} sub-blocks of {} at stride {} (= {span})",
                    l2[axis], self.grid[axis], l1[axis], self.sub_stride[axis]
                )));
            }
        }
        Ok(())
    }

    /// Sub-block origins relative to the layer-2 block, t-major then y then x.
    pub fn placements(&self) -> Vec<Origin> {
        let mut out = Vec::with_capacity(self.grid.iter().product());
        for it in 0..self.grid[2] {
            for iy in 0..self.grid[1] {
                for ix in 0..self.grid[0] {
                    out.push(Origin {
                        x: ix * self.sub_stride[0],
                        y: iy * self.sub_stride[1],
                        t: it * self.sub_stride[2],
                    });
                }
            }
        }
        out
    }

    /// Copies the flattened layer-1 sub-block at `at` out of a flattened
    /// layer-2 block.
    fn sub_block(&self, values: &[f64], at: Origin) -> Vec<f64> {
        let (l1, l2) = (&self.layer1, &self.layer2);
        let mut out = Vec::with_capacity(l1.len());
        for t in at.t..at.t + l1.st {
            for y in at.y..at.y + l1.sy {
                let start = t * l2.frame_len() + y * l2.sx + at.x;
                out.extend_from_slice(&values[start..start + l1.sx]);
            }
        }
        out
    }
}

/// The learned two-layer feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct IsaNetwork {
    pub whiten1: WhiteningTransform,
    pub layer1: IsaLayer,
    pub whiten2: WhiteningTransform,
    pub layer2: IsaLayer,
    pub geometry: StackGeometry,
}

impl IsaNetwork {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let checks = [
            (self.geometry.layer1.len(), self.whiten1.in_dim()),
            (self.whiten1.out_dim(), self.layer1.input_dim()),
            (
                self.geometry.placements().len() * self.layer1.num_groups(),
                self.whiten2.in_dim(),
            ),
            (self.whiten2.out_dim(), self.layer2.input_dim()),
        ];
        for (expected, got) in checks {
            if expected != got {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        Ok(())
    }

    pub fn layer1_dim(&self) -> usize {
        self.layer1.num_groups()
    }

    pub fn feature_dim(&self) -> usize {
        self.layer2.num_groups()
    }

    pub fn extract_layer1(&self, patch: &Patch) -> Result<Vec<f64>> {
        self.layer1_features(&patch.values)
    }

    /// Layer-1 features of a raw flattened layer-1 block.
    pub fn layer1_features(&self, values: &[f64]) -> Result<Vec<f64>> {
        layer1_features(&self.whiten1, &self.layer1, &self.geometry, values)
    }

    pub fn extract_stacked(&self, patch: &Patch) -> Result<Vec<f64>> {
        self.stacked_features(&patch.values)
    }

    pub fn stacked_features(&self, values: &[f64]) -> Result<Vec<f64>> {
        let concatenated = concatenated_layer1(&self.whiten1, &self.layer1, &self.geometry, values)?;
        let whitened = self.whiten2.apply(&concatenated)?;
        self.layer2.activations(&whitened)
    }

    /// Stacked features of many layer-2 patches, in input order.
    pub fn extract_stacked_batch(&self, patches: &[Patch]) -> Result<Vec<Vec<f64>>> {
        patches.par_iter().map(|p| self.extract_stacked(p)).collect()
    }
}

fn layer1_features(
    whiten: &WhiteningTransform,
    layer: &IsaLayer,
    geometry: &StackGeometry,
    values: &[f64],
) -> Result<Vec<f64>> {
    if values.len() != geometry.layer1.len() {
        return Err(Error::DimensionMismatch {
            expected: geometry.layer1.len(),
            got: values.len(),
        });
    }
    layer.activations(&whiten.apply(&contrast_normalize_values(values))?)
}

fn concatenated_layer1(
    whiten: &WhiteningTransform,
    layer: &IsaLayer,
    geometry: &StackGeometry,
    values: &[f64],
) -> Result<Vec<f64>> {
    if values.len() != geometry.layer2.len() {
        return Err(Error::DimensionMismatch {
            expected: geometry.layer2.len(),
            got: values.len(),
        });
    }
    let mut out = Vec::with_capacity(geometry.placements().len() * layer.num_groups());
    for at in geometry.placements() {
        out.extend(layer1_features(whiten, layer, geometry, &geometry.sub_block(values, at))?);
    }
    Ok(out)
}

/// Everything needed to pretrain one network.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub geometry: StackGeometry,
    pub whiten1_dim: usize,
    pub whiten2_dim: usize,
    pub whiten_eps: f64,
    pub layer1_filters: usize,
    pub layer1_group: usize,
    pub layer2_filters: usize,
    pub layer2_group: usize,
    pub layer1_samples: usize,
    pub layer2_samples: usize,
    pub sample_seed: u64,
    pub layer1_train: IsaTrainConfig,
    pub layer2_train: IsaTrainConfig,
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub network: IsaNetwork,
    pub layer1_trace: Vec<f64>,
    pub layer2_trace: Vec<f64>,
}

/// Draws `total` blocks spread evenly over the clips, deterministically.
fn sample_across(
    clips: &[&VideoClip],
    geom: &BlockGeometry,
    total: usize,
    seed: u64,
) -> Result<Vec<Patch>> {
    let per = total / clips.len();
    let extra = total % clips.len();
    let batches: Vec<Vec<Patch>> = clips
        .par_iter()
        .enumerate()
        .map(|(i, clip)| {
            let n = per + usize::from(i < extra);
            sample_random_blocks(clip, geom, n, derive_seed(seed, i as u64))
        })
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Learns a network from unlabeled clips: layer 1 on random layer-1 blocks,
/// then layer 2 on concatenated layer-1 responses of random layer-2 blocks
/// with layer 1 frozen.
pub fn pretrain_network(clips: &[&VideoClip], cfg: &PretrainConfig) -> Result<PretrainOutput> {
    cfg.geometry.validate()?;
    if clips.is_empty() {
        return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
    }

    let raw1 = sample_across(clips, &cfg.geometry.layer1, cfg.layer1_samples, derive_seed(cfg.sample_seed, 1))?;
    let normalized: Vec<Vec<f64>> = raw1
        .par_iter()
        .map(|p| contrast_normalize_values(&p.values))
        .collect();
    drop(raw1);
    let whiten1 = fit_pca_whitening(&normalized, cfg.whiten1_dim, cfg.whiten_eps)?;
    let white1 = whiten1.apply_columns(&columns(&normalized))?;
    drop(normalized);
    let trained1 = train_layer(&white1, cfg.layer1_filters, cfg.layer1_group, &cfg.layer1_train)?;
    drop(white1);
    let layer1 = trained1.layer;

    let raw2 = sample_across(clips, &cfg.geometry.layer2, cfg.layer2_samples, derive_seed(cfg.sample_seed, 2))?;
    let stacked_inputs: Vec<Vec<f64>> = raw2
        .par_iter()
        .map(|p| concatenated_layer1(&whiten1, &layer1, &cfg.geometry, &p.values))
        .collect::<Result<_>>()?;
    drop(raw2);
    let whiten2 = fit_pca_whitening(&stacked_inputs, cfg.whiten2_dim, cfg.whiten_eps)?;
    let white2 = whiten2.apply_columns(&columns(&stacked_inputs))?;
    drop(stacked_inputs);
    let trained2 = train_layer(&white2, cfg.layer2_filters, cfg.layer2_group, &cfg.layer2_train)?;

    let network = IsaNetwork {
        whiten1,
        layer1,
        whiten2,
        layer2: trained2.layer,
        geometry: cfg.geometry,
    };
    network.validate()?;
    Ok(PretrainOutput {
        network,
        layer1_trace: trained1.objective_trace,
        layer2_trace: trained2.objective_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::principal_angles;
    use crate::video_io::Modality;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seeded(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn activation_examples() {
        let layer = IsaLayer::new(DMatrix::identity(2, 2), 2, 0.0).unwrap();
        assert_eq!(layer.activations(&[3.0, 4.0]).unwrap(), vec![5.0]);

        let layer = IsaLayer::new(random_matrix(6, 4, 1), 2, 1e-4).unwrap();
        let p = layer.activations(&[0.0; 4]).unwrap();
        assert!(p.iter().all(|v| (v - 1e-2).abs() < 1e-15));
        assert!(matches!(layer.activations(&[0.0; 3]), Err(Error::DimensionMismatch { .. })));

        let mut rng = seeded(2);
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            assert_eq!(layer.activations(&x).unwrap(), layer.activations(&neg).unwrap());
        }
        assert!(IsaLayer::new(random_matrix(5, 4, 1), 2, 0.1).is_err());
    }

    #[test]
    fn objective_examples() {
        let layer = IsaLayer::new(DMatrix::identity(2, 2), 2, 0.0).unwrap();
        let x = DMatrix::from_column_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        assert_eq!(objective(&layer, &x).unwrap(), 2.5);

        let layer = IsaLayer::new(random_matrix(4, 3, 3), 2, 1e-4).unwrap();
        let single = DMatrix::from_column_slice(3, 1, &[0.2, -1.0, 0.7]);
        let sum: f64 = layer.activations(&[0.2, -1.0, 0.7]).unwrap().iter().sum();
        assert!((objective(&layer, &single).unwrap() - sum).abs() < 1e-15);
        let twice = DMatrix::from_column_slice(3, 2, &[0.2, -1.0, 0.7, 0.2, -1.0, 0.7]);
        assert!((objective(&layer, &twice).unwrap() - sum).abs() < 1e-15);
        assert!(objective(&layer, &DMatrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn gradient_of_zero_batch_is_zero() {
        let layer = IsaLayer::new(random_matrix(4, 5, 4), 2, 1e-4).unwrap();
        let g = gradient(&layer, &DMatrix::zeros(5, 1)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let no_eps = IsaLayer::new(random_matrix(4, 5, 4), 2, 0.0).unwrap();
        assert!(gradient(&no_eps, &DMatrix::zeros(5, 1)).is_err());
    }

    #[test]
    fn gradient_scales_with_input() {
        let w = project_orthonormal(&random_matrix(4, 6, 5)).unwrap();
        let layer = IsaLayer::new(w, 2, 1e-12).unwrap();
        let mut x = random_matrix(6, 10, 6);
        for mut col in x.column_iter_mut() {
            col.normalize_mut();
        }
        let g1 = gradient(&layer, &x).unwrap();
        let g2 = gradient(&layer, &(&x * 2.0)).unwrap();
        assert!((g2 - g1 * 2.0).abs().max() < 1e-6);
    }

    #[test]
    fn projection_examples() {
        assert!((project_orthonormal(&DMatrix::identity(3, 3)).unwrap() - DMatrix::identity(3, 3)).abs().max() < 1e-15);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0]));
        assert!((project_orthonormal(&d).unwrap() - DMatrix::identity(2, 2)).abs().max() < 1e-15);

        let w = random_matrix(4, 8, 7);
        let r = project_orthonormal(&w).unwrap();
        assert!(orthonormality_error(&r) <= 1e-10);
        let q = crate::linalg::orthonormal_rows(&w);
        assert!(principal_angles(&r, &q).iter().all(|&a| a <= 1e-8));

        // symmetric route on a well-conditioned input
        let gram = &w * w.transpose();
        let (vals, vecs) = crate::linalg::sorted_symmetric_eigen(gram);
        let inv_sqrt = &vecs
            * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()))
            * vecs.transpose();
        assert!((inv_sqrt * &w - &r).abs().max() < 1e-10);

        let mut dup = random_matrix(3, 5, 8);
        let row = dup.row(0).into_owned();
        dup.row_mut(2).copy_from(&(row * 2.0));
        assert!(matches!(project_orthonormal(&dup), Err(Error::DegenerateFilters { .. })));
        assert!(project_orthonormal(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let x = random_matrix(8, 200, 9);
        let cfg = IsaTrainConfig {
            max_iters: 50,
            seed: 3,
            ..Default::default()
        };
        let a = train_layer(&x, 6, 2, &cfg).unwrap();
        let b = train_layer(&x, 6, 2, &cfg).unwrap();
        assert_eq!(a.layer.filters, b.layer.filters);
        assert!(a.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.objective_trace.last() <= a.objective_trace.first());
        assert!(orthonormality_error(&a.layer.filters) <= 1e-6);
        assert!(a.max_projection_error <= 1e-10);
        assert!(train_layer(&x.columns(0, 4).into_owned(), 6, 2, &cfg).is_err());
        assert!(train_layer(&x, 6, 4, &cfg).is_err());
    }

    fn tiny_geometry() -> StackGeometry {
        StackGeometry {
            layer1: BlockGeometry::new(4, 4, 2, 2, 2, 1).unwrap(),
            layer2: BlockGeometry::new(6, 6, 3, 3, 3, 2).unwrap(),
            grid: [2, 2, 2],
            sub_stride: [2, 2, 1],
        }
    }

    fn moving_clip(id: &str, width: usize, height: usize, frames: usize, velocity: f64) -> VideoClip {
        let frames = (0..frames)
            .map(|t| {
                let mut frame = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        let phase = (x as f64 + 0.3 * y as f64 - velocity * t as f64) * 0.9;
                        frame.push(0.5 + 0.4 * phase.sin());
                    }
                }
                frame
            })
            .collect();
        VideoClip::new(id, Modality::Grayscale, width, height, frames).unwrap()
    }

    fn tiny_config() -> PretrainConfig {
        PretrainConfig {
            geometry: tiny_geometry(),
            whiten1_dim: 12,
            whiten2_dim: 10,
            whiten_eps: 0.1,
            layer1_filters: 8,
            layer1_group: 2,
            layer2_filters: 6,
            layer2_group: 2,
            layer1_samples: 300,
            layer2_samples: 200,
            sample_seed: 11,
            layer1_train: IsaTrainConfig { max_iters: 30, seed: 1, ..Default::default() },
            layer2_train: IsaTrainConfig { max_iters: 30, seed: 2, ..Default::default() },
        }
    }

    #[test]
    fn geometry_validation_and_placements() {
        let g = tiny_geometry();
        g.validate().unwrap();
        let p = g.placements();
        assert_eq!(p.len(), 8);
        assert_eq!(p[0], Origin { x: 0, y: 0, t: 0 });
        assert_eq!(p[1], Origin { x: 2, y: 0, t: 0 });
        assert_eq!(p[2], Origin { x: 0, y: 2, t: 0 });
        assert_eq!(p[4], Origin { x: 0, y: 0, t: 1 });
        let mut bad = g;
        bad.sub_stride = [3, 2, 1];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pretrain_and_extract() {
        let a = moving_clip("a", 12, 10, 6, 1.0);
        let b = moving_clip("b", 12, 10, 6, -1.0);
        let cfg = tiny_config();
        let out = pretrain_network(&[&a, &b], &cfg).unwrap();
        let net = &out.network;
        net.validate().unwrap();
        assert_eq!(net.layer1_dim(), 4);
        assert_eq!(net.feature_dim(), 3);
        assert!(out.layer1_trace.windows(2).all(|w| w[1] <= w[0]));

        let again = pretrain_network(&[&a, &b], &cfg).unwrap();
        assert_eq!(&again.network, net);

        let g = cfg.geometry;
        let patch = crate::patch_sampling::extract_block(&a, &g.layer2, Origin { x: 1, y: 2, t: 0 });
        let f = net.extract_stacked(&patch).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f, net.extract_stacked(&patch).unwrap());

        // swapping two frames inside the patch changes the feature
        let mut swapped = patch.clone();
        let fl = g.layer2.frame_len();
        for i in 0..fl {
            swapped.values.swap(i, fl + i);
        }
        let fs = net.extract_stacked(&swapped).unwrap();
        let diff: f64 = f.iter().zip(&fs).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(diff > 0.0);

        let small = crate::patch_sampling::extract_block(&a, &g.layer1, Origin { x: 0, y: 0, t: 0 });
        assert_eq!(net.extract_layer1(&small).unwrap().len(), 4);
        assert!(net.extract_stacked(&small).is_err());
        assert!(net.extract_layer1(&patch).is_err());

        // the zero patch composes: contrast(0) = 0, whitening gives -B·mean
        let zero = vec![0.0; g.layer1.len()];
        let expected = net.layer1.activations(&net.whiten1.apply(&zero).unwrap()).unwrap();
        assert_eq!(net.layer1_features(&zero).unwrap(), expected);
    }
}
