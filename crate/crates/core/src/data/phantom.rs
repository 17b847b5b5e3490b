use super::Volume;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Parameters of a synthetic lobed-ellipsoid phantom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    /// Cube edge in voxels.
    pub extent: usize,
    pub n_blobs: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_sigma: f64,
    pub intensity_fg: f64,
    pub intensity_bg: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            extent: 32,
            n_blobs: 3,
            noise_sigma: 0.3,
            intensity_fg: 1.0,
            intensity_bg: 0.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.extent < 16 || !self.extent.is_multiple_of(4) {
            return Err(Error::invalid(format!(
                "phantom extent must be >= 16 and divisible by 4, got {}",
                self.extent
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be nonnegative"));
        }
        if self.n_blobs == 0 {
            return Err(Error::invalid("n_blobs must be positive"));
        }
        Ok(())
    }
}

struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2)).sum::<f64>() <= 1.0
    }
}

/// Union of `n_blobs` axis-aligned ellipsoids on a noisy two-level background.
///
/// Every lobe after the first is centred inside the first, so the label is a
/// single connected body. Output depends only on `spec`.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Volume> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let e = spec.extent as f64;
    let first = Ellipsoid {
        center: [0; 3].map(|_| rng.gen_range(0.35..0.65) * e),
        radii: [0; 3].map(|_| rng.gen_range(0.18..0.28) * e),
    };
    let mut lobes = vec![first];
    for _ in 1..spec.n_blobs {
        let u = loop {
            let u: [f64; 3] = [0; 3].map(|_| rng.gen_range(-1.0..1.0));
            if u.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                break u;
            }
        };
        let f = &lobes[0];
        let center = [0, 1, 2].map(|a| f.center[a] + 0.7 * u[a] * f.radii[a]);
        let radii = [0; 3].map(|_| rng.gen_range(0.10..0.20) * e);
        lobes.push(Ellipsoid { center, radii });
    }

    let n = spec.extent;
    let mut label = vec![0.0; n * n * n];
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let p = [x as f64, y as f64, z as f64];
                if lobes.iter().any(|l| l.contains(p)) {
                    label[(x * n + y) * n + z] = 1.0;
                }
            }
        }
    }
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
    let image = label
        .iter()
        .map(|&l| {
            let base = if l == 1.0 { spec.intensity_fg } else { spec.intensity_bg };
            if spec.noise_sigma > 0.0 {
                base + noise.sample(&mut rng)
            } else {
                base
            }
        })
        .collect();
    let dims = [n, n, n];
    Volume::new(
        format!("phantom-{:04}", spec.seed),
        Tensor::new(&dims, image)?,
        Some(Tensor::new(&dims, label)?),
        [1.0; 3],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_is_two_valued() {
        let v = generate_phantom(&PhantomSpec {
            noise_sigma: 0.0,
            ..PhantomSpec::default()
        })
        .unwrap();
        assert!(v.image.data().iter().all(|&x| x == 0.0 || x == 1.0));
        assert_eq!(v.image.data(), v.label.as_ref().unwrap().data());
    }

    #[test]
    fn deterministic_per_seed() {
        let s = PhantomSpec { seed: 7, ..PhantomSpec::default() };
        assert_eq!(generate_phantom(&s).unwrap(), generate_phantom(&s).unwrap());
        let t = PhantomSpec { seed: 8, ..PhantomSpec::default() };
        assert_ne!(generate_phantom(&s).unwrap(), generate_phantom(&t).unwrap());
    }

    #[test]
    fn foreground_fraction_over_seeds() {
        for seed in 0..100 {
            let v = generate_phantom(&PhantomSpec { seed, ..PhantomSpec::default() }).unwrap();
            let l = v.label.unwrap();
            let frac = l.data().iter().sum::<f64>() / l.numel() as f64;
            assert!((0.02..=0.30).contains(&frac), "seed {seed}: {frac}");
        }
    }

    #[test]
    fn invalid_specs() {
        for bad in [
            PhantomSpec { extent: 12, ..PhantomSpec::default() },
            PhantomSpec { extent: 18, ..PhantomSpec::default() },
            PhantomSpec { noise_sigma: -1.0, ..PhantomSpec::default() },
        ] {
            assert!(generate_phantom(&bad).is_err());
        }
    }
}
