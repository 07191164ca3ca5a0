//! Multi-dimensional complex FFT on a periodic `N^d` grid.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Row-major `N^d` grid with the last axis contiguous.
pub struct Grid {
    d: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("d", &self.d).field("n", &self.n).finish()
    }
}

impl Clone for Grid {
    fn clone(&self) -> Self {
        Grid::new(self.d, self.n)
    }
}

impl Grid {
    pub fn new(d: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            d,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..self.d {
            let stride = n.pow((self.d - 1 - axis) as u32);
            let block = stride * n;
            for start in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    if stride == 1 {
                        plan.process_with_scratch(&mut data[base..base + n], &mut scratch);
                        continue;
                    }
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[base + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// Unnormalised forward transform `sum_x f(x) e^{-i k x}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the `1/N^d` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut c);
        c
    }

    pub fn inverse_real(&self, data: &[Complex64]) -> Vec<f64> {
        let mut c = data.to_vec();
        self.inverse(&mut c);
        c.iter().map(|v| v.re).collect()
    }

    /// Integer lattice coordinates of a flat index (each in `0..N`).
    pub fn coords(&self, mut index: usize) -> [usize; 3] {
        let mut c = [0; 3];
        for axis in (0..self.d).rev() {
            c[axis] = index % self.n;
            index /= self.n;
        }
        c
    }

    /// Signed frequency index in FFT order.
    pub fn signed_frequency(&self, j: usize) -> i64 {
        if j < self.n.div_ceil(2) {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Signed lattice displacement, with the minimal image in `[-N/2, N/2)`.
    pub fn signed_offset(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// `|k|^2` for every mode on a torus of side `side`.
    pub fn laplacian_symbol(&self, side: f64) -> Vec<f64> {
        let w = 2.0 * PI / side;
        (0..self.len())
            .map(|i| {
                let c = self.coords(i);
                c[..self.d]
                    .iter()
                    .map(|&j| {
                        let k = w * self.signed_frequency(j) as f64;
                        k * k
                    })
                    .sum()
            })
            .collect()
    }
}
