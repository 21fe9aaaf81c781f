//! Mergeable central-moment accumulator.
//!
//! Pairwise update formulas for the second through fourth central moments, so
//! partial accumulators built on separate workers combine into the same result
//! as long as they are merged in a fixed order.

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.merge(&Moments {
            count: 1,
            mean: x,
            ..Default::default()
        });
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d_n = delta / n;
        let d2 = delta * delta;

        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d_n * (na * other.m3 - nb * self.m3);
        let m3 = self.m3
            + other.m3
            + d2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * d_n * (na * other.m2 - nb * self.m2);
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;

        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance with the `R − 1` denominator; 0 for fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error_of_mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// Large-sample standard error of the variance estimate, `√((μ₄ − μ₂²)/R)`.
    pub fn std_error_of_variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let r = self.count as f64;
        let mu2 = self.m2 / r;
        let mu4 = self.m4 / r;
        ((mu4 - mu2 * mu2).max(0.0) / r).sqrt()
    }
}
