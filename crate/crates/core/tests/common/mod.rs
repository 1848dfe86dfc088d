#![allow(dead_code)]

use std::path::Path;

use isarec::config::{ModalitySelection, PipelineConfig};
use isarec::isa::{objective, IsaLayer};
use isarec::rng::seeded;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

/// Desk-scale settings for end-to-end runs on the synthetic bar dataset.
pub fn reduced_config(root: &Path, modality: ModalitySelection) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.dataset_root = root.to_path_buf();
    cfg.modality = modality;
    let overrides = [
        ("patch_sampling.layer1_block", "8, 8, 4"),
        ("patch_sampling.layer1_stride", "4, 4, 2"),
        ("patch_sampling.layer2_block", "12, 12, 6"),
        ("patch_sampling.layer2_stride", "6, 6, 3"),
        ("patch_sampling.grid", "2, 2, 2"),
        ("patch_sampling.sub_stride", "4, 4, 2"),
        ("patch_sampling.layer1_samples", "4000"),
        ("patch_sampling.layer2_samples", "3000"),
        ("whitening.layer1_dim", "64"),
        ("whitening.layer2_dim", "64"),
        ("isa.layer1_filters", "64"),
        ("isa.layer2_filters", "64"),
        ("isa.max_iters", "150"),
        ("vocabulary.words", "50"),
    ];
    for (k, v) in overrides {
        cfg.set(k, v).unwrap();
    }
    cfg
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Gram-Schmidt on the rows, written out so tests do not lean on the
/// library's own factorisations.
pub fn gram_schmidt_rows(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = a.clone();
    for i in 0..q.nrows() {
        for j in 0..i {
            let d = q.row(i).dot(&q.row(j));
            let rj = q.row(j).into_owned();
            let mut ri = q.row_mut(i);
            ri -= rj * d;
        }
        let norm = q.row(i).norm();
        let mut ri = q.row_mut(i);
        ri /= norm;
    }
    q
}

/// Two orthogonal 2-D subspaces of R^4 and samples that each live in one of
/// them, with heavy-tailed amplitude and uniform phase. The covariance is
/// close to the identity.
pub fn planted_subspace_data(n: usize, seed: u64) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let q = gram_schmidt_rows(&gaussian_matrix(4, 4, seed));
    let planted = vec![q.rows(0, 2).into_owned(), q.rows(2, 2).into_owned()];
    let mut rng = seeded(seed.wrapping_add(1));
    let amplitude = Exp::new(1.0 / 2f64.sqrt()).unwrap();
    let mut x = DMatrix::zeros(4, n);
    for t in 0..n {
        let which = rng.random_range(0..2);
        let r: f64 = amplitude.sample(&mut rng);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let basis = &planted[which];
        for d in 0..4 {
            x[(d, t)] = r * (phi.cos() * basis[(0, d)] + phi.sin() * basis[(1, d)]);
        }
    }
    (x, planted)
}

/// Principal angles in degrees between two row-orthonormal 2×n bases, from
/// the closed-form singular values of the 2×2 cross-Gram matrix.
pub fn principal_angles_2d(a: &DMatrix<f64>, b: &DMatrix<f64>) -> [f64; 2] {
    let m = a * b.transpose();
    let (p, q, r) = (
        m[(0, 0)].powi(2) + m[(1, 0)].powi(2),
        m[(0, 0)] * m[(0, 1)] + m[(1, 0)] * m[(1, 1)],
        m[(0, 1)].powi(2) + m[(1, 1)].powi(2),
    );
    let mean = (p + r) / 2.0;
    let spread = (((p - r) / 2.0).powi(2) + q * q).sqrt();
    let angle = |s2: f64| s2.max(0.0).sqrt().min(1.0).acos().to_degrees();
    [angle(mean + spread), angle(mean - spread)]
}

/// Largest principal angle under the best pairing of learned groups with
/// planted subspaces (two of each).
pub fn best_pairing_max_angle(filters: &DMatrix<f64>, planted: &[DMatrix<f64>]) -> f64 {
    let groups = [filters.rows(0, 2).into_owned(), filters.rows(2, 2).into_owned()];
    let worst = |g: &DMatrix<f64>, p: &DMatrix<f64>| principal_angles_2d(g, p)[1];
    let straight = worst(&groups[0], &planted[0]).max(worst(&groups[1], &planted[1]));
    let crossed = worst(&groups[0], &planted[1]).max(worst(&groups[1], &planted[0]));
    straight.min(crossed)
}

/// Central differences of the objective with respect to every filter entry.
pub fn finite_difference_gradient(layer: &IsaLayer, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(layer.filters.nrows(), layer.filters.ncols());
    for r in 0..g.nrows() {
        for c in 0..g.ncols() {
            let shifted = |delta: f64| {
                let mut l = layer.clone();
                l.filters[(r, c)] += delta;
                objective(&l, x).unwrap()
            };
            g[(r, c)] = (shifted(h) - shifted(-h)) / (2.0 * h);
        }
    }
    g
}

use isarec::isa::{train_layer, IsaTrainConfig, TrainedLayer};
use isarec::linalg::columns;
use isarec::patch_sampling::{contrast_normalize_values, extract_block, sample_random_blocks, BlockGeometry, Origin};
use isarec::synthetic::{BarScene, Direction};
use isarec::video_io::Modality;
use isarec::whitening::{fit_pca_whitening, WhiteningTransform};

/// Noise-free bar scene with random appearance, small enough for 24×16.
pub fn random_bar_scene(rng: &mut impl Rng) -> BarScene {
    BarScene {
        direction: if rng.random_bool(0.5) { Direction::Left } else { Direction::Right },
        start: rng.random_range(4.0..20.0),
        speed: rng.random_range(0.5..1.5),
        half_width: rng.random_range(1.0..3.0),
        softness: 0.8,
        foreground: rng.random_range(0.6..1.0),
        background: rng.random_range(0.0..0.4),
        noise: 0.0,
    }
}

pub struct TranslationFixture {
    pub whitening: WhiteningTransform,
    pub trained: TrainedLayer,
    pub geometry: BlockGeometry,
}

/// Whitening plus one layer trained on 8×8×4 blocks of translating bars.
pub fn translation_fixture() -> TranslationFixture {
    let geometry = BlockGeometry::new(8, 8, 4, 4, 4, 2).unwrap();
    let mut rng = seeded(7);
    let mut train = Vec::new();
    for i in 0..60 {
        let clip = random_bar_scene(&mut rng)
            .render("bar", Modality::Grayscale, 24, 16, 8, i)
            .unwrap();
        for p in sample_random_blocks(&clip, &geometry, 50, i).unwrap() {
            train.push(contrast_normalize_values(&p.values));
        }
    }
    let whitening = fit_pca_whitening(&train, 32, 0.1).unwrap();
    let z: Vec<Vec<f64>> = train.iter().map(|x| whitening.apply(x).unwrap()).collect();
    let cfg = IsaTrainConfig {
        max_iters: 300,
        ..IsaTrainConfig::default()
    };
    let trained = train_layer(&columns(&z), 32, 2, &cfg).unwrap();
    TranslationFixture {
        whitening,
        trained,
        geometry,
    }
}

fn relative_change(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let base: f64 = a.iter().map(|x| x * x).sum();
    (diff / base).sqrt()
}

/// Mean relative change of pooled activations and of individual filter
/// magnitudes when the scene moves by one pixel, over `count` patches.
pub fn translation_changes(fx: &TranslationFixture, count: usize) -> (f64, f64) {
    let layer = &fx.trained.layer;
    let mut rng = seeded(99);
    let (mut pooled, mut single, mut n) = (0.0, 0.0, 0);
    while n < count {
        let scene = random_bar_scene(&mut rng);
        let mut shifted = scene.clone();
        shifted.start += 1.0;
        let a = scene.render("a", Modality::Grayscale, 24, 16, 8, 0).unwrap();
        let b = shifted.render("b", Modality::Grayscale, 24, 16, 8, 0).unwrap();
        let origin = Origin {
            x: rng.random_range(0..16),
            y: rng.random_range(0..8),
            t: rng.random_range(0..4),
        };
        let va = contrast_normalize_values(&extract_block(&a, &fx.geometry, origin).values);
        let vb = contrast_normalize_values(&extract_block(&b, &fx.geometry, origin).values);
        // flat patches carry no bar edge
        if va.iter().map(|v| v * v).sum::<f64>() < 1e-3 {
            continue;
        }
        let za = fx.whitening.apply(&va).unwrap();
        let zb = fx.whitening.apply(&vb).unwrap();
        let magnitudes = |z: &[f64]| -> Vec<f64> {
            (0..layer.filters.nrows())
                .map(|j| layer.filters.row(j).iter().zip(z).map(|(w, x)| w * x).sum::<f64>().abs())
                .collect()
        };
        pooled += relative_change(&layer.activations(&za).unwrap(), &layer.activations(&zb).unwrap());
        single += relative_change(&magnitudes(&za), &magnitudes(&zb));
        n += 1;
    }
    (pooled / count as f64, single / count as f64)
}

/// Relative Frobenius error of the analytic gradient against central
/// differences, worst case over 20 seeded instances with n ≤ 12, k ≤ 8,
/// |X| ≤ 30 and ε = 1e-4.
pub fn worst_gradient_error() -> f64 {
    let mut worst = 0.0f64;
    for inst in 0..20u64 {
        let mut rng = seeded(1000 + inst);
        let g = rng.random_range(1..=2usize);
        let k = g * rng.random_range(1..=8 / g);
        let n = rng.random_range(k.max(2)..=12);
        let count = rng.random_range(5..=30);
        let filters = gaussian_matrix(k, n, 2000 + inst);
        let layer = IsaLayer::new(filters, g, 1e-4).unwrap();
        let x = gaussian_matrix(n, count, 3000 + inst);
        let analytic = isarec::isa::gradient(&layer, &x).unwrap();
        let numeric = finite_difference_gradient(&layer, &x, 1e-5);
        worst = worst.max((&analytic - &numeric).norm() / numeric.norm());
    }
    worst
}

/// Laplacian-like sparse samples in `n` dimensions, samples as columns.
pub fn sparse_samples(n: usize, count: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    let exp = Exp::new(1.0).unwrap();
    DMatrix::from_fn(n, count, |_, _| {
        let m: f64 = exp.sample(&mut rng);
        if rng.random_bool(0.5) { m } else { -m }
    })
}

/// Exact optimum of the SVM dual `max Σα − ½αᵀQα, yᵀα = 0, 0 ≤ α ≤ C` by
/// enumerating which multipliers sit at 0, at C or strictly inside, and
/// solving the stationarity system of the free ones.
pub fn brute_force_dual(kernel: &[Vec<f64>], y: &[f64], c: f64) -> (f64, Vec<f64>) {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i][j];
    let objective = |a: &[f64]| {
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * a[j] * q(i, j);
            }
        }
        a.iter().sum::<f64>() - 0.5 * quad
    };
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if !free.is_empty() {
            // [Q_FF y_F; y_Fᵀ 0] [α_F; ν] = [1 − Q_FB α_B; −y_Bᵀ α_B]
            let f = free.len();
            let mut m = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = nalgebra::DVector::zeros(f + 1);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    m[(a, b)] = q(i, j);
                }
                m[(a, f)] = y[i];
                m[(f, a)] = y[i];
                rhs[a] = 1.0 - (0..n).filter(|j| state[*j] != 2).map(|j| q(i, j) * alpha[j]).sum::<f64>();
            }
            rhs[f] = -(0..n).filter(|j| state[*j] != 2).map(|j| y[j] * alpha[j]).sum::<f64>();
            let Some(sol) = m.lu().solve(&rhs) else { continue };
            for (a, &i) in free.iter().enumerate() {
                alpha[i] = sol[a];
            }
        }
        let feasible = alpha.iter().all(|&a| (-1e-12..=c + 1e-12).contains(&a))
            && alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs() < 1e-9;
        if feasible {
            let value = objective(&alpha);
            if value > best.0 {
                best = (value, alpha);
            }
        }
    }
    best
}

/// Small 1-D and 2-D problems with at most six points.
pub fn small_svm_fixtures() -> Vec<(Vec<Vec<f64>>, Vec<f64>, f64, f64)> {
    let mut out = vec![
        (vec![vec![0.0], vec![1.0]], vec![1.0, -1.0], 10.0, 1.0),
        (vec![vec![0.0], vec![1.0], vec![2.0]], vec![1.0, -1.0, 1.0], 1.0, 0.5),
        (vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 1.0, -1.0, -1.0], 5.0, 1.0),
    ];
    for seed in 0..12u64 {
        let mut rng = seeded(500 + seed);
        let n = rng.random_range(2..=6);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let c = [0.1, 1.0, 10.0, 100.0][seed as usize % 4];
        let gamma = [0.5, 2.0, 8.0][seed as usize % 3];
        out.push((x, y, c, gamma));
    }
    out
}

/// Two well separated Gaussian blobs, ten points each.
pub fn separable_fixture() -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = seeded(77);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..20 {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        let cx = 2.0 * label;
        x.push(vec![cx + rng.random_range(-0.8..0.8), rng.random_range(-1.0..1.0)]);
        y.push(label);
    }
    (x, y)
}

/// Largest violation of the KKT bands `y f ≥ 1 − τ` at α = 0,
/// `y f ≤ 1 + τ` at α = C and `|y f − 1| ≤ τ` in between, τ = tol·(1+C).
/// Non-positive means every band holds.
pub fn kkt_violation(kernel: &[Vec<f64>], y: &[f64], c: f64, alpha: &[f64], bias: f64, tol: f64) -> f64 {
    let tau = tol * (1.0 + c);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..y.len() {
        let f: f64 = (0..y.len()).map(|j| alpha[j] * y[j] * kernel[i][j]).sum::<f64>() + bias;
        let margin = y[i] * f;
        let v = if alpha[i] <= 0.0 {
            (1.0 - tau) - margin
        } else if alpha[i] >= c {
            margin - (1.0 + tau)
        } else {
            (margin - 1.0).abs() - tau
        };
        worst = worst.max(v);
    }
    worst
}

/// Seeded Gaussian blobs around `centers`, `per` points each.
pub fn blobs(centers: &[Vec<f64>], per: usize, spread: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    centers
        .iter()
        .flat_map(|c| {
            (0..per)
                .map(|_| {
                    c.iter()
                        .map(|v| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            v + spread * z
                        })
                        .collect()
                })
                .collect::<Vec<Vec<f64>>>()
        })
        .collect()
}

pub fn brute_force_nearest(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn tiny_settings() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    for (k, v) in [
        ("patch_sampling.layer1_block", "4, 4, 2"),
        ("patch_sampling.layer1_stride", "2, 2, 1"),
        ("patch_sampling.layer2_block", "6, 6, 3"),
        ("patch_sampling.layer2_stride", "3, 3, 1"),
        ("patch_sampling.sub_stride", "2, 2, 1"),
        ("patch_sampling.layer1_samples", "400"),
        ("patch_sampling.layer2_samples", "300"),
        ("whitening.layer1_dim", "16"),
        ("whitening.layer2_dim", "16"),
        ("isa.layer1_filters", "16"),
        ("isa.layer2_filters", "16"),
        ("isa.max_iters", "20"),
        ("vocabulary.words", "8"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg
}

pub fn bar_clip(direction: Direction, modality: Modality, seed: u64) -> isarec::video_io::VideoClip {
    BarScene {
        direction,
        start: if direction == Direction::Right { 3.0 } else { 13.0 },
        speed: 1.0,
        half_width: 2.0,
        softness: 0.8,
        foreground: 0.9,
        background: 0.2,
        noise: 0.05,
    }
    .render(&format!("{direction:?}{seed}"), modality, 16, 12, 8, seed)
    .unwrap()
}

pub fn tiny_network() -> isarec::isa::IsaNetwork {
    let clips = [bar_clip(Direction::Left, Modality::Grayscale, 0), bar_clip(Direction::Right, Modality::Grayscale, 1)];
    let refs: Vec<_> = clips.iter().collect();
    isarec::isa::pretrain_network(&refs, &tiny_settings().pretrain_config())
        .unwrap()
        .network
}
