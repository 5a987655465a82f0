//! Seeded synthetic datasets.

use rand::Rng;
use rand_distr::{Distribution as _, Normal, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    /// Independent coordinates uniform on `[0, 1)`.
    Uniform,
    /// Independent standard normal coordinates.
    Gaussian,
    /// Gaussian mixture: `centers` centers uniform on `[0, 1)^d`, point `i`
    /// drawn around center `i % centers` with standard deviation `spread`.
    Clustered { centers: usize, spread: f32 },
}

impl Distribution {
    pub fn clustered(centers: usize) -> Self {
        Distribution::Clustered {
            centers,
            spread: 0.05,
        }
    }
}

/// `n` points in `d` dimensions. Equal arguments give bit-identical datasets.
pub fn gen_synthetic(n: usize, d: usize, dist: Distribution, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::arg("n and d must be at least 1"));
    }
    let mut rng = seed::rng(seed, &[seed::SYNTH]);
    let data: Vec<f32> = match dist {
        Distribution::Uniform => (0..n * d).map(|_| rng.random::<f32>()).collect(),
        Distribution::Gaussian => (0..n * d)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
        Distribution::Clustered { centers, spread } => {
            if centers == 0 || !(spread.is_finite() && spread >= 0.0) {
                return Err(Error::arg(
                    "clustered data needs centers >= 1 and a finite spread",
                ));
            }
            let means: Vec<f32> = (0..centers * d).map(|_| rng.random::<f32>()).collect();
            let noise = Normal::new(0.0f32, spread).map_err(|e| Error::arg(e.to_string()))?;
            let mut data = Vec::with_capacity(n * d);
            for i in 0..n {
                let c = &means[(i % centers) * d..(i % centers + 1) * d];
                data.extend(c.iter().map(|m| m + noise.sample(&mut rng)));
            }
            data
        }
    };
    Dataset::new(d, data)
}
