//! Parabolic scaling, space-time points and scaled norms.
//!
//! Points are stored with a fixed three-slot spatial array; for `d = 2`
//! the third slot is ignored. The scaled norm is the max-form
//! `max_i |z_i|^{1/s_i}`, which is exactly homogeneous under the scaling.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scaling {
    time: u32,
    spatial: Vec<u32>,
}

impl Scaling {
    pub fn new(time: u32, spatial: Vec<u32>) -> Result<Self> {
        if spatial.is_empty() || spatial.len() > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "spatial dimension must be in 1..={MAX_DIM}, got {}",
                spatial.len()
            )));
        }
        if time == 0 || spatial.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter(
                "scaling exponents must be >= 1".into(),
            ));
        }
        Ok(Self { time, spatial })
    }

    /// `(2, 1, ..., 1)` in `d` spatial dimensions.
    pub fn parabolic(d: usize) -> Self {
        Self::new(2, vec![1; d]).expect("parabolic scaling needs 1 <= d <= 3")
    }

    pub fn time_exponent(&self) -> u32 {
        self.time
    }

    pub fn spatial_exponents(&self) -> &[u32] {
        &self.spatial
    }

    pub fn dim(&self) -> usize {
        self.spatial.len()
    }

    /// `|s| = s_0 + sum_i s_i`.
    pub fn total_degree(&self) -> u32 {
        self.time + self.spatial.iter().sum::<u32>()
    }

    pub fn is_parabolic(&self) -> bool {
        self.time == 2 && self.spatial.iter().all(|&s| s == 1)
    }

    /// Scaled dilation `(lambda^{s_0} t, lambda^{s_i} x_i)`.
    pub fn dilate(&self, z: &SpacetimePoint, lambda: f64) -> SpacetimePoint {
        let mut out = *z;
        out.t = lambda.powi(self.time as i32) * z.t;
        for (i, &s) in self.spatial.iter().enumerate() {
            out.x[i] = lambda.powi(s as i32) * z.x[i];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: [f64; MAX_DIM],
}

impl SpacetimePoint {
    pub const ORIGIN: SpacetimePoint = SpacetimePoint {
        t: 0.0,
        x: [0.0; MAX_DIM],
    };

    pub fn new(t: f64, x: &[f64]) -> Self {
        let mut slots = [0.0; MAX_DIM];
        slots[..x.len()].copy_from_slice(x);
        Self { t, x: slots }
    }

    pub fn sub(&self, other: &SpacetimePoint) -> SpacetimePoint {
        let mut x = self.x;
        for (xi, oi) in x.iter_mut().zip(other.x.iter()) {
            *xi -= oi;
        }
        SpacetimePoint { t: self.t - other.t, x }
    }

    pub fn add(&self, other: &SpacetimePoint) -> SpacetimePoint {
        let mut x = self.x;
        for (xi, oi) in x.iter_mut().zip(other.x.iter()) {
            *xi += oi;
        }
        SpacetimePoint { t: self.t + other.t, x }
    }

    /// Euclidean norm of the spatial part over the first `d` slots.
    pub fn spatial_radius(&self, d: usize) -> f64 {
        self.x[..d].iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Multiindex {
    pub time: u32,
    pub spatial: Vec<u32>,
}

impl Multiindex {
    pub fn new(time: u32, spatial: &[u32]) -> Self {
        Self {
            time,
            spatial: spatial.to_vec(),
        }
    }

    pub fn zero(d: usize) -> Self {
        Self::new(0, &vec![0; d])
    }

    /// All multiindices of scaled degree `<= max_degree`.
    pub fn up_to_degree(s: &Scaling, max_degree: u32) -> Vec<Multiindex> {
        let d = s.dim();
        let mut out = Vec::new();
        let mut spatial = vec![0u32; d];
        fn rec(
            s: &Scaling,
            max_degree: u32,
            i: usize,
            spatial: &mut Vec<u32>,
            out: &mut Vec<Multiindex>,
        ) {
            if i == spatial.len() {
                let used: u32 = spatial
                    .iter()
                    .zip(s.spatial_exponents())
                    .map(|(k, e)| k * e)
                    .sum();
                let mut k0 = 0;
                while used + k0 * s.time_exponent() <= max_degree {
                    out.push(Multiindex::new(k0, spatial));
                    k0 += 1;
                }
                return;
            }
            let e = s.spatial_exponents()[i];
            let mut k = 0;
            while k * e <= max_degree {
                spatial[i] = k;
                rec(s, max_degree, i + 1, spatial, out);
                k += 1;
            }
            spatial[i] = 0;
        }
        rec(s, max_degree, 0, &mut spatial, &mut out);
        out.sort_by_key(|k| (multiindex_degree(k, s), k.time, k.spatial.clone()));
        out
    }
}

impl std::fmt::Display for Multiindex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({};", self.time)?;
        for (i, k) in self.spatial.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// Max-form scaled norm `max(|t|^{1/s_0}, |x_i|^{1/s_i})`.
pub fn parabolic_norm(z: &SpacetimePoint, s: &Scaling) -> f64 {
    let mut norm = z.t.abs().powf(1.0 / s.time_exponent() as f64);
    for (i, &e) in s.spatial_exponents().iter().enumerate() {
        let v = if e == 1 {
            z.x[i].abs()
        } else {
            z.x[i].abs().powf(1.0 / e as f64)
        };
        norm = norm.max(v);
    }
    norm
}

/// Scaled norm of the minimal-image difference on a torus of side `side`.
/// Time is not wrapped.
pub fn torus_parabolic_distance(
    z1: &SpacetimePoint,
    z2: &SpacetimePoint,
    side: f64,
    s: &Scaling,
) -> Result<f64> {
    if !(side > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "torus side must be positive, got {side}"
        )));
    }
    let mut diff = z1.sub(z2);
    for xi in diff.x.iter_mut().take(s.dim()) {
        *xi = minimal_image(*xi, side);
    }
    Ok(parabolic_norm(&diff, s))
}

/// Reduce a coordinate difference to `[-side/2, side/2)`.
pub fn minimal_image(dx: f64, side: f64) -> f64 {
    let r = dx - side * (dx / side).floor();
    if r >= 0.5 * side {
        r - side
    } else {
        r
    }
}

pub fn multiindex_degree(k: &Multiindex, s: &Scaling) -> u32 {
    s.time_exponent() * k.time
        + k.spatial
            .iter()
            .zip(s.spatial_exponents())
            .map(|(a, b)| a * b)
            .sum::<u32>()
}
