//! Covariance matrix adaptation evolution strategy (maximizing).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CmaError {
    #[error("problem dimension must be positive")]
    ZeroDimension,
    #[error("initial step size must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid bounds: {0}")]
    BadBounds(String),
    #[error("no candidates have been told yet")]
    NoObservations,
}

/// Per-generation summary, written as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best: f64,
    pub mean_fitness: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct CmaState {
    n: usize,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    /// Eigenbasis of `cov` and square roots of its eigenvalues.
    basis: DMatrix<f64>,
    diag: DVector<f64>,
    pc: DVector<f64>,
    ps: DVector<f64>,
    lambda: usize,
    weights: Vec<f64>,
    mueff: f64,
    cc: f64,
    cs: f64,
    c1: f64,
    cmu: f64,
    damps: f64,
    chi_n: f64,
    generation: usize,
    evaluations: usize,
    rng: ChaCha8Rng,
    bounds: Option<Vec<(f64, f64)>>,
    pending: Option<Vec<DVector<f64>>>,
    best: Option<(Vec<f64>, f64)>,
    history: Vec<GenerationRecord>,
}

/// `4 + floor(3 ln n)`.
pub fn default_population(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

impl CmaState {
    pub fn new(mean0: &[f64], sigma0: f64, bounds: Option<Vec<(f64, f64)>>, seed: u64) -> Result<Self, CmaError> {
        Self::with_population(mean0, sigma0, bounds, seed, None)
    }

    pub fn with_population(
        mean0: &[f64],
        sigma0: f64,
        bounds: Option<Vec<(f64, f64)>>,
        seed: u64,
        population: Option<usize>,
    ) -> Result<Self, CmaError> {
        let n = mean0.len();
        if n == 0 {
            return Err(CmaError::ZeroDimension);
        }
        if !(sigma0 > 0.0) || !sigma0.is_finite() {
            return Err(CmaError::BadSigma(sigma0));
        }
        if let Some(b) = &bounds {
            if b.len() != n {
                return Err(CmaError::LengthMismatch { expected: n, got: b.len() });
            }
            if let Some((i, _)) = b.iter().enumerate().find(|(_, (lo, hi))| !(lo <= hi)) {
                return Err(CmaError::BadBounds(format!("coordinate {i} has lo > hi")));
            }
        }
        let lambda = population.unwrap_or_else(|| default_population(n)).max(2);
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let nf = n as f64;
        let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
        let cs = (mueff + 2.0) / (nf + mueff + 5.0);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Ok(Self {
            n,
            mean: DVector::from_column_slice(mean0),
            sigma: sigma0,
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            diag: DVector::from_element(n, 1.0),
            pc: DVector::zeros(n),
            ps: DVector::zeros(n),
            lambda,
            weights,
            mueff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
            generation: 0,
            evaluations: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bounds,
            pending: None,
            best: None,
            history: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn population(&self) -> usize {
        self.lambda
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn step_size(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn history(&self) -> &[GenerationRecord] {
        &self.history
    }

    /// The per-generation records as line-delimited JSON.
    pub fn history_jsonl(&self) -> String {
        self.history
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain record serializes") + "\n")
            .collect()
    }

    fn clip(&self, x: &DVector<f64>) -> Vec<f64> {
        match &self.bounds {
            Some(b) => x.iter().zip(b).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect(),
            None => x.iter().copied().collect(),
        }
    }

    /// Draws a generation. Returned candidates are clipped to the bounds;
    /// the unclipped samples are kept for the update.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        let mut raw = Vec::with_capacity(self.lambda);
        for _ in 0..self.lambda {
            let z = DVector::from_fn(self.n, |_, _| StandardNormal.sample(&mut self.rng));
            let y = &self.basis * z.component_mul(&self.diag);
            raw.push(&self.mean + y * self.sigma);
        }
        let out = raw.iter().map(|x| self.clip(x)).collect();
        self.pending = Some(raw);
        out
    }

    /// Ranks the generation by fitness (larger is better, NaN worst) and
    /// updates mean, paths, covariance and step size.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64]) -> Result<(), CmaError> {
        if candidates.len() != self.lambda {
            return Err(CmaError::LengthMismatch { expected: self.lambda, got: candidates.len() });
        }
        if fitness.len() != self.lambda {
            return Err(CmaError::LengthMismatch { expected: self.lambda, got: fitness.len() });
        }
        if let Some(c) = candidates.iter().find(|c| c.len() != self.n) {
            return Err(CmaError::LengthMismatch { expected: self.n, got: c.len() });
        }
        let samples: Vec<DVector<f64>> = match self.pending.take() {
            Some(p) => p,
            None => candidates.iter().map(|c| DVector::from_column_slice(c)).collect(),
        };
        self.evaluations += fitness.len();

        let key = |f: f64| if f.is_nan() { f64::NEG_INFINITY } else { f };
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| key(fitness[b]).total_cmp(&key(fitness[a])).then(a.cmp(&b)));

        let top = order[0];
        if !fitness[top].is_nan() && self.best.as_ref().is_none_or(|(_, f)| fitness[top] > *f) {
            self.best = Some((candidates[top].clone(), fitness[top]));
        }
        if self.best.is_none() {
            self.best = Some((candidates[top].clone(), f64::NAN));
        }

        let old = self.mean.clone();
        let ys: Vec<DVector<f64>> = order[..self.weights.len()].iter().map(|&i| (&samples[i] - &old) / self.sigma).collect();
        let mut yw = DVector::zeros(self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            yw += y * *w;
        }
        self.mean = &old + &yw * self.sigma;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_sqrt_yw = &self.basis * (self.basis.transpose() * &yw).component_div(&self.diag);
        self.ps = &self.ps * (1.0 - self.cs) + inv_sqrt_yw * (self.cs * (2.0 - self.cs) * self.mueff).sqrt();
        let g = (self.generation + 1) as f64;
        let ps_norm = self.ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - self.cs).powf(2.0 * g)).sqrt() / self.chi_n < 1.4 + 2.0 / (self.n as f64 + 1.0);
        let hs = if hsig { 1.0 } else { 0.0 };
        self.pc = &self.pc * (1.0 - self.cc) + &yw * (hs * (self.cc * (2.0 - self.cc) * self.mueff).sqrt());

        let mut rank_mu = DMatrix::zeros(self.n, self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            rank_mu += y * y.transpose() * *w;
        }
        let decay = 1.0 - self.c1 - self.cmu + (1.0 - hs) * self.c1 * self.cc * (2.0 - self.cc);
        self.cov = &self.cov * decay + &self.pc * self.pc.transpose() * self.c1 + rank_mu * self.cmu;
        self.sigma *= ((self.cs / self.damps) * (ps_norm / self.chi_n - 1.0)).exp();
        if !self.sigma.is_finite() || self.sigma > 1e300 {
            self.sigma = 1e300;
        }
        self.refresh_eigen();

        self.generation += 1;
        let finite: Vec<f64> = fitness.iter().copied().filter(|f| !f.is_nan()).collect();
        let mean_fitness = if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 };
        self.history.push(GenerationRecord {
            generation: self.generation,
            best: self.best.as_ref().map_or(f64::NAN, |b| b.1),
            mean_fitness,
            step_size: self.sigma,
        });
        Ok(())
    }

    fn refresh_eigen(&mut self) {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut floored = false;
        let vals: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&v| {
                if v.is_finite() && v >= 1e-14 {
                    v
                } else {
                    floored = true;
                    1e-14
                }
            })
            .collect();
        if floored {
            log::warn!("covariance repaired: eigenvalues floored at 1e-14");
        }
        let d = DVector::from_vec(vals);
        self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        self.diag = d.map(f64::sqrt);
        self.basis = eig.eigenvectors;
    }

    /// Best told candidate and its fitness.
    pub fn best(&self) -> Result<(Vec<f64>, f64), CmaError> {
        self.best.clone().ok_or(CmaError::NoObservations)
    }

    /// Sequential ask/tell loop until `max_evals` evaluations are spent.
    pub fn run(&mut self, max_evals: usize, mut f: impl FnMut(&[f64]) -> f64) -> Result<(Vec<f64>, f64), CmaError> {
        while self.evaluations + self.lambda <= max_evals {
            let xs = self.ask();
            let fs: Vec<f64> = xs.iter().map(|x| f(x)).collect();
            self.tell(&xs, &fs)?;
        }
        self.best()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_sizes() {
        assert_eq!(default_population(10), 10);
        assert_eq!(default_population(2), 6);
        assert_eq!(CmaState::new(&[0.0; 10], 1.0, None, 0).unwrap().population(), 10);
        assert_eq!(CmaState::new(&[], 1.0, None, 0).unwrap_err(), CmaError::ZeroDimension);
        assert!(CmaState::new(&[0.0], 0.0, None, 0).is_err());
    }

    #[test]
    fn same_seed_same_ask() {
        let mut a = CmaState::new(&[0.5; 4], 0.3, None, 11).unwrap();
        let mut b = CmaState::new(&[0.5; 4], 0.3, None, 11).unwrap();
        assert_eq!(a.ask(), b.ask());
    }

    #[test]
    fn tiny_sigma_collapses_to_mean() {
        let mut s = CmaState::new(&[0.2, -0.4, 1.0], 1e-12, None, 1).unwrap();
        for c in s.ask() {
            for (a, b) in c.iter().zip(s.mean()) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn sample_mean_clt() {
        let mut s = CmaState::with_population(&[1.0, -2.0], 0.5, None, 3, Some(10_000)).unwrap();
        let xs = s.ask();
        for j in 0..2 {
            let m = xs.iter().map(|x| x[j]).sum::<f64>() / xs.len() as f64;
            assert!((m - s.mean()[j]).abs() <= 3.0 * 0.5 / 100.0);
        }
    }

    #[test]
    fn bounds_respected() {
        let mut s = CmaState::new(&[0.5; 5], 2.0, Some(vec![(0.0, 1.0); 5]), 4).unwrap();
        for _ in 0..20 {
            let xs = s.ask();
            assert!(xs.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
            let fs: Vec<f64> = xs.iter().map(|x| -x.iter().map(|v| (v - 2.0).powi(2)).sum::<f64>()).collect();
            s.tell(&xs, &fs).unwrap();
        }
    }

    #[test]
    fn equal_fitness_small_shift() {
        let mut s = CmaState::new(&[0.0; 6], 0.1, None, 5).unwrap();
        let m0 = s.mean().to_vec();
        let xs = s.ask();
        s.tell(&xs, &vec![1.0; xs.len()]).unwrap();
        let shift: f64 = m0.iter().zip(s.mean()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(shift <= 0.1 * 6f64.sqrt());
    }

    #[test]
    fn nan_ranked_worst_and_best_tracks_argmax() {
        let mut s = CmaState::new(&[0.0; 3], 1.0, None, 6).unwrap();
        assert_eq!(s.best().unwrap_err(), CmaError::NoObservations);
        let mut log = Vec::new();
        let mut prev = f64::NEG_INFINITY;
        for g in 0..30 {
            let xs = s.ask();
            let fs: Vec<f64> = xs
                .iter()
                .enumerate()
                .map(|(i, x)| if (i + g) % 4 == 0 { f64::NAN } else { -x.iter().map(|v| v * v).sum::<f64>() })
                .collect();
            log.extend(xs.iter().cloned().zip(fs.iter().copied()));
            s.tell(&xs, &fs).unwrap();
            let (_, b) = s.best().unwrap();
            assert!(b >= prev);
            prev = b;
        }
        let brute = log.iter().filter(|(_, f)| !f.is_nan()).max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(s.best().unwrap(), brute.clone());
        assert_eq!(s.history().len(), 30);
        assert_eq!(s.history_jsonl().lines().count(), 30);
    }

    #[test]
    fn covariance_stays_positive_definite() {
        let mut s = CmaState::new(&[0.0; 4], 1.0, None, 8).unwrap();
        let mut r = 1u64;
        for _ in 0..1000 {
            let xs = s.ask();
            let fs: Vec<f64> = xs
                .iter()
                .map(|_| {
                    r = crate::seed::splitmix64(r);
                    (r >> 11) as f64 / (1u64 << 53) as f64
                })
                .collect();
            s.tell(&xs, &fs).unwrap();
            let c = s.covariance();
            assert!((c - c.transpose()).abs().max() <= 1e-10 * c.abs().max().max(1.0));
            let eig = SymmetricEigen::new(c.clone());
            assert!(eig.eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut s = CmaState::new(&[0.0; 2], 1.0, None, 0).unwrap();
        let xs = s.ask();
        assert!(s.tell(&xs[..2], &[0.0, 0.0]).is_err());
    }
}
