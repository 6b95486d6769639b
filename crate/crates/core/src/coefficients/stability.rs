use nalgebra::{Complex, DMatrix};

use super::PeerCoefficients;
use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// `|1 - z gamma|` below this counts as the pole of `(I - z R)^{-1}`.
const POLE_TOL: f64 = 1e-14;

/// Rectangle `[re_min, re_max] x [im_min, im_max]` sampled on an `n_re x n_im` lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl ComplexGrid {
    pub fn points(&self) -> impl Iterator<Item = C64> + '_ {
        let axis = |lo: f64, hi: f64, n: usize, k: usize| {
            if n == 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        };
        (0..self.n_im).flat_map(move |b| {
            (0..self.n_re).map(move |a| {
                C64::new(
                    axis(self.re_min, self.re_max, self.n_re, a),
                    axis(self.im_min, self.im_max, self.n_im, b),
                )
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amplification {
    Radius(f64),
    Pole,
}

impl Amplification {
    pub fn radius(self) -> Option<f64> {
        match self {
            Amplification::Radius(r) => Some(r),
            Amplification::Pole => None,
        }
    }
}

/// Spectral radii on a grid, stored row by row (imaginary part outer).
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityField {
    pub grid: ComplexGrid,
    pub values: Vec<(C64, Amplification)>,
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

fn spectral_radius(m: DMatrix<C64>) -> f64 {
    // The complex Schur form is upper triangular; its diagonal carries the eigenvalues.
    let t = m.schur().unpack().1;
    t.diagonal().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

impl PeerCoefficients {
    /// Spectral radius of `(I - z0 Rhat - z1 R)^{-1} (P + z0 Qhat + z1 Q)`, the stage
    /// transfer for `u' = lambda0 u + lambda1 u` with `z_k = lambda_k dt`.
    pub fn imex_amplification(&self, z0: C64, z1: C64) -> Amplification {
        let s = self.stages();
        if (C64::new(1.0, 0.0) - z1 * self.gamma()).norm() < POLE_TOL {
            return Amplification::Pole;
        }
        let lhs = DMatrix::<C64>::identity(s, s)
            - to_complex(self.rhat()) * z0
            - to_complex(self.r()) * z1;
        let rhs = to_complex(self.p()) + to_complex(self.qhat()) * z0 + to_complex(self.q()) * z1;
        match lhs.lu().solve(&rhs) {
            Some(m) => Amplification::Radius(spectral_radius(m)),
            None => Amplification::Pole,
        }
    }

    /// Implicit part only: `(I - z R)^{-1} (P + z Q)`.
    pub fn implicit_amplification(&self, z: C64) -> Amplification {
        self.imex_amplification(C64::new(0.0, 0.0), z)
    }
}

/// Implicit-part spectral radius over every grid point.
pub fn stability_scan(coeffs: &PeerCoefficients, grid: &ComplexGrid) -> Result<StabilityField> {
    if grid.n_re == 0 || grid.n_im == 0 {
        return Err(Error::InvalidArgument("stability grid is empty".into()));
    }
    let values = grid
        .points()
        .map(|z| (z, coeffs.implicit_amplification(z)))
        .collect();
    Ok(StabilityField {
        grid: *grid,
        values,
    })
}
