//! Synthetic curvature world: a mixture-of-Gaussians log-density over a
//! latent space. Machine candidates sit (almost) at local maxima, human
//! candidates are displaced down the bump, and perturbations are isotropic
//! Gaussian neighbors. The whole detection pipeline runs against this world
//! with no external services and bit-reproducible results per seed.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::GpError;
use crate::types::{derive_seed, Label, Provenance, TextSample};

/// Parameters of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub dim: usize,
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
    #[serde(default = "default_weights")]
    pub weights: Option<Vec<f64>>,
    /// Human candidates are displaced from a mode center by this many widths.
    pub human_offset: f64,
    /// Std of the isotropic neighbor sampler, in absolute latent units.
    pub perturb_scale: f64,
    /// Length scale of the RBF latent similarity.
    pub similarity_length_scale: f64,
    /// Mode indices machine/human samples are drawn around; `None` means
    /// all modes. Lets broad low-curvature "background" components shape
    /// the density without ever being sampled directly.
    #[serde(default)]
    pub sampling_modes: Option<Vec<usize>>,
    pub seed: u64,
}

fn default_weights() -> Option<Vec<f64>> {
    None
}

impl WorldSpec {
    /// A world with `n_modes` seeded-random well-separated unit-width modes.
    pub fn generate(dim: usize, n_modes: usize, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 0x51, 0));
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
        // rejection-place centers at least 8 widths apart
        while centers.len() < n_modes {
            let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let ok = centers.iter().all(|o| dist(o, &c) >= 8.0);
            if ok {
                centers.push(c);
            }
        }
        WorldSpec {
            dim,
            centers,
            widths: vec![1.0; n_modes],
            weights: None,
            human_offset: 2.0,
            perturb_scale: 0.5,
            similarity_length_scale: 1.0,
            sampling_modes: None,
            seed,
        }
    }

    /// A detection benchmark world: `n_modes` sharp unit-width modes plus a
    /// broad background component over the whole region. Samples are drawn
    /// around the sharp modes only; displaced human candidates land where
    /// the background dominates and the log-density is nearly flat, so
    /// machine candidates (at sharp maxima) carry much higher curvature.
    /// A pure Gaussian mixture without the background is locally quadratic
    /// everywhere — identical curvature for both classes — and is useless
    /// as a curvature-detection benchmark.
    pub fn benchmark(dim: usize, n_modes: usize, seed: u64) -> Self {
        let mut world = Self::generate(dim, n_modes, seed);
        let centroid: Vec<f64> = (0..dim)
            .map(|k| world.centers.iter().map(|c| c[k]).sum::<f64>() / n_modes as f64)
            .collect();
        world.centers.push(centroid);
        world.widths.push(10.0);
        // heavy background weight so it dominates ~2 widths from any mode
        let mut weights = vec![1.0; n_modes];
        weights.push(15.0 * n_modes as f64);
        world.weights = Some(weights);
        world.sampling_modes = Some((0..n_modes).collect());
        world
    }

    pub fn n_modes(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dim < 1 {
            return Err("dim must be >= 1".into());
        }
        if self.centers.is_empty() {
            return Err("world needs at least one mode".into());
        }
        if self.centers.len() != self.widths.len() {
            return Err("centers and widths must have equal length".into());
        }
        if self.centers.iter().any(|c| c.len() != self.dim) {
            return Err("every center must have `dim` coordinates".into());
        }
        if self
            .centers
            .iter()
            .flatten()
            .any(|x| !x.is_finite())
        {
            return Err("mode centers must be finite".into());
        }
        if self.widths.iter().any(|w| !(*w > 0.0)) {
            return Err("widths must be > 0".into());
        }
        if let Some(w) = &self.weights {
            if w.len() != self.centers.len() || w.iter().any(|x| !(*x > 0.0)) {
                return Err("weights must be positive, one per mode".into());
            }
        }
        if let Some(modes) = &self.sampling_modes {
            if modes.is_empty() || modes.iter().any(|&j| j >= self.centers.len()) {
                return Err("sampling_modes must be non-empty valid mode indices".into());
            }
        }
        if !(self.human_offset > 0.0) {
            return Err("human_offset must be > 0".into());
        }
        if !(self.perturb_scale > 0.0) {
            return Err("perturb_scale must be > 0".into());
        }
        if !(self.similarity_length_scale > 0.0) {
            return Err("similarity_length_scale must be > 0".into());
        }
        Ok(())
    }

    fn weight(&self, j: usize) -> f64 {
        match &self.weights {
            Some(w) => w[j] / w.iter().sum::<f64>(),
            None => 1.0 / self.centers.len() as f64,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Log mixture-of-Gaussians density, max-shifted for stability.
pub fn log_density(world: &WorldSpec, v: &[f64]) -> Result<f64, GpError> {
    if v.len() != world.dim {
        return Err(GpError::DimensionMismatch {
            context: format!("vector has {} coords, world dim {}", v.len(), world.dim),
        });
    }
    let terms: Vec<f64> = (0..world.n_modes())
        .map(|j| {
            let s2 = world.widths[j] * world.widths[j];
            let d2: f64 = v
                .iter()
                .zip(&world.centers[j])
                .map(|(x, c)| (x - c) * (x - c))
                .sum();
            world.weight(j).ln()
                - 0.5 * world.dim as f64 * (2.0 * std::f64::consts::PI * s2).ln()
                - 0.5 * d2 / s2
        })
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
}

/// Draws labeled machine and human candidates from the world.
///
/// Machine samples get tiny isotropic noise (0.05 widths) around a mode
/// center; human samples are displaced by `human_offset` widths in a random
/// direction. Deterministic per world seed.
pub fn sample_world(world: &WorldSpec, n_machine: usize, n_human: usize) -> Vec<TextSample> {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(world.seed, 0x5a, 0));
    let all_modes: Vec<usize> = (0..world.n_modes()).collect();
    let modes: &[usize] = world.sampling_modes.as_deref().unwrap_or(&all_modes);
    let mut out = Vec::with_capacity(n_machine + n_human);
    for i in 0..n_machine {
        let j = modes[rng.gen_range(0..modes.len())];
        let w = world.widths[j];
        let v: Vec<f64> = world.centers[j]
            .iter()
            .map(|c| c + 0.05 * w * standard_normal(&mut rng))
            .collect();
        let mut s = TextSample::from_latent(format!("m{i:04}"), v);
        s.label = Some(Label::Machine);
        out.push(s);
    }
    for i in 0..n_human {
        let j = modes[rng.gen_range(0..modes.len())];
        let w = world.widths[j];
        let dir = random_unit(&mut rng, world.dim);
        let v: Vec<f64> = world.centers[j]
            .iter()
            .zip(&dir)
            .map(|(c, d)| c + world.human_offset * w * d)
            .collect();
        let mut s = TextSample::from_latent(format!("h{i:04}"), v);
        s.label = Some(Label::Human);
        out.push(s);
    }
    out
}

/// `n` isotropic Gaussian neighbors of `v` with std `perturb_scale`.
pub fn perturb_latent(world: &WorldSpec, v: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            v.iter()
                .map(|x| x + world.perturb_scale * standard_normal(&mut rng))
                .collect()
        })
        .collect()
}

/// RBF similarity `exp(-|a - b|^2 / (2 l^2))`, the latent stand-in for an
/// embedding similarity: symmetric, unit diagonal, smooth in distance.
pub fn latent_similarity(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / (2.0 * length_scale * length_scale)).exp()
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Attaches perturbation provenance ids; used by the simulation perturber.
pub fn perturbation_sample(parent: &TextSample, k: usize, v: Vec<f64>) -> TextSample {
    let mut s = TextSample::from_latent(format!("{}-p{k:04}", parent.id), v);
    s.source_model = parent.source_model.clone();
    let _ = Provenance::PerturbationOf(parent.id.clone());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_mode_world() -> WorldSpec {
        WorldSpec {
            dim: 2,
            centers: vec![vec![1.0, -2.0]],
            widths: vec![0.7],
            weights: None,
            human_offset: 2.0,
            perturb_scale: 0.35,
            similarity_length_scale: 1.0,
            sampling_modes: None,
            seed: 5,
        }
    }

    #[test]
    fn log_density_closed_form_at_single_mode_center() {
        let w = single_mode_world();
        let got = log_density(&w, &[1.0, -2.0]).unwrap();
        let s2 = 0.7f64 * 0.7;
        let expected = 0.0f64.max(0.0) /* log weight = log 1 */
            - 0.5 * 2.0 * (2.0 * std::f64::consts::PI * s2).ln();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn density_decreases_away_from_mode() {
        let w = single_mode_world();
        let at_center = log_density(&w, &[1.0, -2.0]).unwrap();
        let away = log_density(&w, &[1.0 + 3.0 * 0.7, -2.0]).unwrap();
        assert!(at_center > away);
    }

    #[test]
    fn log_density_matches_naive_sum_oracle() {
        let w = WorldSpec::generate(2, 3, 99);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..200 {
            let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-22.0..22.0)).collect();
            let got = log_density(&w, &v).unwrap();
            // naive unshifted summation
            let naive: f64 = (0..w.n_modes())
                .map(|j| {
                    let s2 = w.widths[j] * w.widths[j];
                    let d2: f64 = v
                        .iter()
                        .zip(&w.centers[j])
                        .map(|(x, c)| (x - c) * (x - c))
                        .sum();
                    w.weight(j)
                        * (2.0 * std::f64::consts::PI * s2).powf(-(w.dim as f64) / 2.0)
                        * (-0.5 * d2 / s2).exp()
                })
                .sum();
            if naive > 0.0 && naive.ln().is_finite() {
                assert!((got - naive.ln()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn log_density_rejects_dimension_mismatch() {
        let w = single_mode_world();
        assert!(log_density(&w, &[0.0]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let w = single_mode_world();
        assert_eq!(sample_world(&w, 5, 5), sample_world(&w, 5, 5));
    }

    #[test]
    fn humans_sit_below_their_modes() {
        let mut w = single_mode_world();
        w.human_offset = 3.0;
        let samples = sample_world(&w, 0, 20);
        let center_density = log_density(&w, &[1.0, -2.0]).unwrap();
        for s in samples {
            let d = log_density(&w, s.latent.as_ref().unwrap()).unwrap();
            assert!(d < center_density);
        }
    }

    #[test]
    fn machine_density_exceeds_human_density_on_average() {
        let mut acc = 0.0;
        for seed in 0..10u64 {
            let mut w = WorldSpec::generate(2, 3, seed);
            w.human_offset = 1.0;
            let samples = sample_world(&w, 30, 30);
            let mut m = 0.0;
            let mut h = 0.0;
            for s in &samples {
                let d = log_density(&w, s.latent.as_ref().unwrap()).unwrap();
                match s.label.unwrap() {
                    Label::Machine => m += d,
                    Label::Human => h += d,
                }
            }
            acc += m / 30.0 - h / 30.0;
        }
        assert!(acc / 10.0 > 0.0);
    }

    #[test]
    fn perturb_latent_small_scale_limit() {
        let mut w = single_mode_world();
        w.perturb_scale = 1e-12;
        let v = vec![0.3, 0.4];
        for nb in perturb_latent(&w, &v, 5, 3) {
            for (a, b) in nb.iter().zip(&v) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn perturb_latent_mean_concentrates_on_origin_point() {
        let w = single_mode_world();
        let v = vec![2.0, -1.0];
        let neighbors = perturb_latent(&w, &v, 10_000, 7);
        for coord in 0..2 {
            let mean: f64 =
                neighbors.iter().map(|n| n[coord]).sum::<f64>() / neighbors.len() as f64;
            assert!((mean - v[coord]).abs() < 4.0 * w.perturb_scale / 100.0);
        }
    }

    #[test]
    fn perturb_latent_single_draw_reproducible() {
        let w = single_mode_world();
        let a = perturb_latent(&w, &[0.0, 0.0], 1, 11);
        let b = perturb_latent(&w, &[0.0, 0.0], 1, 11);
        assert_eq!(a, b);
    }

    #[test]
    fn latent_similarity_closed_forms() {
        assert_eq!(latent_similarity(&[0.5, 1.0], &[0.5, 1.0], 2.0), 1.0);
        let l = 0.8;
        // |a-b| = l * sqrt(2)  ->  e^{-1}
        let b = [l * 2.0f64.sqrt(), 0.0];
        let got = latent_similarity(&[0.0, 0.0], &b, l);
        assert!((got - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn latent_similarity_matches_formula_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let l = rng.gen_range(0.2..2.0);
            let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            let oracle = (-d2 / (2.0 * l * l)).exp();
            assert!((latent_similarity(&a, &b, l) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn density_gradient_vanishes_at_separated_mode_centers() {
        let w = WorldSpec::generate(2, 3, 123); // separation >= 8 widths
        for c in &w.centers {
            let h = 1e-5;
            for coord in 0..2 {
                let mut up = c.clone();
                up[coord] += h;
                let mut dn = c.clone();
                dn[coord] -= h;
                let g = (log_density(&w, &up).unwrap() - log_density(&w, &dn).unwrap()) / (2.0 * h);
                assert!(g.abs() < 1e-4, "gradient {g} at coord {coord}");
            }
        }
    }
}
