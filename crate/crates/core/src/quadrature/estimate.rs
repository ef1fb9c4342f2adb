use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A quadrature value with its standard error and the number of samples used.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T = f64> {
    pub value: T,
    pub stderr: f64,
    pub samples: usize,
}

impl<T> Estimate<T> {
    pub fn new(value: T, stderr: f64, samples: usize) -> Self {
        Self { value, stderr, samples }
    }

    pub fn exact(value: T) -> Self {
        Self::new(value, 0.0, 0)
    }
}

impl Estimate<f64> {
    /// `|value - target| <= k * stderr + abs_tol`.
    pub fn within(&self, target: f64, k: f64, abs_tol: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr + abs_tol
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.value * s, self.stderr * s.abs(), self.samples)
    }
}

impl Estimate<Complex64> {
    pub fn within(&self, target: Complex64, k: f64, abs_tol: f64) -> bool {
        (self.value - target).norm() <= k * self.stderr + abs_tol
    }

    pub fn re(&self) -> Estimate<f64> {
        Estimate::new(self.value.re, self.stderr, self.samples)
    }

    pub fn norm(&self) -> Estimate<f64> {
        Estimate::new(self.value.norm(), self.stderr, self.samples)
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.value * s, self.stderr * s.abs(), self.samples)
    }
}

/// Streaming mean and variance of complex samples (Welford, merged with Chan's rule).
///
/// `m2` is `Σ |xᵢ - mean|²`, so a constant stream keeps `m2 = 0` exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accum {
    pub count: u64,
    pub mean: Complex64,
    pub m2: f64,
    pub non_finite: u64,
}

impl Accum {
    #[inline]
    pub fn push(&mut self, x: Complex64) {
        if !(x.re.is_finite() && x.im.is_finite()) {
            self.non_finite += 1;
            return;
        }
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        let delta2 = x - self.mean;
        self.m2 += delta.re * delta2.re + delta.im * delta2.im;
    }

    #[inline]
    pub fn push_re(&mut self, x: f64) {
        self.push(Complex64::new(x, 0.0));
    }

    pub fn merge(a: Accum, b: Accum) -> Accum {
        let non_finite = a.non_finite + b.non_finite;
        if a.count == 0 {
            return Accum { non_finite, ..b };
        }
        if b.count == 0 {
            return Accum { non_finite, ..a };
        }
        let count = a.count + b.count;
        let (na, nb, n) = (a.count as f64, b.count as f64, count as f64);
        let delta = b.mean - a.mean;
        let mean = if delta == Complex64::new(0.0, 0.0) {
            a.mean
        } else {
            a.mean + delta * (nb / n)
        };
        Accum {
            count,
            mean,
            m2: a.m2 + b.m2 + delta.norm_sqr() * na * nb / n,
            non_finite,
        }
    }

    /// Fixed-shape pairwise reduction; the result depends only on the order of `parts`.
    pub fn reduce(mut parts: Vec<Accum>) -> Accum {
        if parts.is_empty() {
            return Accum::default();
        }
        while parts.len() > 1 {
            let mut next = Vec::with_capacity(parts.len().div_ceil(2));
            let mut it = parts.chunks(2);
            for pair in &mut it {
                next.push(match pair {
                    [a, b] => Accum::merge(*a, *b),
                    [a] => *a,
                    _ => unreachable!(),
                });
            }
            parts = next;
        }
        parts[0]
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        (self.m2.max(0.0) / (n - 1.0) / n).sqrt()
    }

    pub fn estimate(&self) -> Estimate<Complex64> {
        Estimate::new(self.mean, self.stderr(), self.count as usize)
    }

    pub fn estimate_re(&self) -> Estimate<f64> {
        Estimate::new(self.mean.re, self.stderr(), self.count as usize)
    }

    pub fn total(&self) -> u64 {
        self.count + self.non_finite
    }
}
