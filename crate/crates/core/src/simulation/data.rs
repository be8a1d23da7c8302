//! Non-i.i.d. regression data: user `u` (1-based) draws `x` uniformly from
//! its own slot `[(u-1) w, u w)` and observes `y = x^2 + noise`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{config, Result};
use crate::learning::Dataset;

/// Default noise variance of the generator.
pub const DEFAULT_NOISE_VARIANCE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub users: usize,
    pub samples_per_user: usize,
    /// Width `w` of each user's x-interval.
    pub interval_width: f64,
    pub noise_variance: f64,
}

impl DatasetSpec {
    pub fn new(users: usize, samples_per_user: usize) -> Self {
        Self { users, samples_per_user, interval_width: 1.0, noise_variance: DEFAULT_NOISE_VARIANCE }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return config("at least one user is required");
        }
        if self.samples_per_user == 0 {
            return config("each user needs at least one sample");
        }
        if !self.interval_width.is_finite() || self.interval_width <= 0.0 {
            return config(format!("interval width must be positive, got {}", self.interval_width));
        }
        if !self.noise_variance.is_finite() || self.noise_variance < 0.0 {
            return config(format!("noise variance must be nonnegative, got {}", self.noise_variance));
        }
        Ok(())
    }

    /// Span `[0, U w)` of all users' inputs.
    pub fn x_range(&self) -> (f64, f64) {
        (0.0, self.users as f64 * self.interval_width)
    }

    /// User `u`'s interval, `u` counted from 0.
    pub fn interval(&self, user: usize) -> (f64, f64) {
        let lo = user as f64 * self.interval_width;
        (lo, lo + self.interval_width)
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Dataset>> {
        self.validate()?;
        let noise = Normal::new(0.0, self.noise_variance.sqrt())
            .map_err(|e| crate::Error::Config(format!("noise distribution: {e}")))?;
        (0..self.users)
            .map(|user| {
                let (lo, hi) = self.interval(user);
                let samples = (0..self.samples_per_user)
                    .map(|_| {
                        let r: f64 = rng.random();
                        let mut x = lo + self.interval_width * r;
                        if x >= hi {
                            x = hi.next_down();
                        }
                        let y = x * x + noise.sample(rng);
                        (x, y)
                    })
                    .collect();
                Dataset::new(samples)
            })
            .collect()
    }
}

/// Unit-width intervals with noise variance 5.
pub fn generate_noniid_datasets<R: Rng + ?Sized>(
    users: usize,
    samples_per_user: usize,
    rng: &mut R,
) -> Result<Vec<Dataset>> {
    DatasetSpec::new(users, samples_per_user).generate(rng)
}
