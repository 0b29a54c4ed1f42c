use rand_chacha::ChaCha8Rng;

use crate::rng::{normal, stream, Purpose};
use crate::sde::{is_power_of_two, BrownianLattice};
use crate::{Error, Result};

/// Checks that `n` is a usable coarse level of an `n_fine`-step lattice:
/// a power of two dividing `n_fine` and at most `n_fine / min_ratio`.
pub(crate) fn check_level(n: usize, n_fine: usize, min_ratio: usize) -> Result<()> {
    if n == 0 || !is_power_of_two(n) || !n_fine.is_multiple_of(n) {
        return Err(Error::Config(format!("level {n} does not divide n_fine = {n_fine}")));
    }
    if n * min_ratio > n_fine {
        return Err(Error::Config(format!(
            "level {n} exceeds n_fine / {min_ratio} = {}",
            n_fine / min_ratio
        )));
    }
    Ok(())
}

/// Iterated integral `∫∫_{s<t} dZ^j_s dZ^i_t` over one fine step of length
/// `h`, given the step increments.
///
/// On the diagonal this is the Itô value `½(Δᵢ² − h)`. Off the diagonal it is
/// `½ΔᵢΔⱼ` plus the Lévy area, which the increments do not determine; the area
/// is replaced by a centered Gaussian with its exact conditional variance
/// `(h² + h(Δᵢ² + Δⱼ²)) / 12`, so that all second moments are exact.
#[inline]
pub(crate) fn within_step(same: bool, di: f64, dj: f64, h: f64, rng: &mut Option<ChaCha8Rng>) -> f64 {
    if same {
        return 0.5 * (di * di - h);
    }
    let sd = ((h * h + h * (di * di + dj * dj)) / 12.0).sqrt();
    let area = rng.as_mut().map_or(0.0, |r| sd * normal(r));
    0.5 * di * dj + area
}

/// Increments of one coordinate of a lattice noise.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Driver<'a> {
    inc: &'a [f64],
    dim: usize,
    coord: usize,
}

impl<'a> Driver<'a> {
    pub(crate) fn w(lattice: &'a BrownianLattice, coord: usize) -> Result<Self> {
        Self::new(&lattice.dw, lattice.d, coord, "W")
    }

    pub(crate) fn b(lattice: &'a BrownianLattice, coord: usize) -> Result<Self> {
        Self::new(&lattice.db, lattice.e, coord, "B")
    }

    fn new(inc: &'a [f64], dim: usize, coord: usize, name: &str) -> Result<Self> {
        if coord >= dim {
            return Err(Error::Dimension(format!("{name} coordinate {coord} of a {dim}-dimensional noise")));
        }
        Ok(Self { inc, dim, coord })
    }

    #[inline]
    pub(crate) fn at(&self, m: usize) -> f64 {
        self.inc[m * self.dim + self.coord]
    }

    fn same_as(&self, other: &Driver<'_>) -> bool {
        std::ptr::eq(self.inc, other.inc) && self.coord == other.coord
    }
}

/// `√n Σ_blocks ∫ λ_s ∫_{η(s)}^s θ_r dZ^j_r dZ^i_s` on the fine grid, with
/// `θ` and `λ` sampled at the left end of each fine step. The inner integral
/// restarts at every coarse grid time. No level restriction is applied.
pub(crate) fn iterated_sum(
    outer_noise: Driver<'_>,
    inner_noise: Driver<'_>,
    inner: &[f64],
    outer: &[f64],
    n_fine: usize,
    n: usize,
    area_rng: &mut Option<ChaCha8Rng>,
) -> f64 {
    let stride = n_fine / n;
    let h = 1.0 / n_fine as f64;
    let same = outer_noise.same_as(&inner_noise);
    let mut acc = 0.0;
    for block in 0..n {
        let mut running = 0.0;
        for m in block * stride..(block + 1) * stride {
            let di = outer_noise.at(m);
            let dj = inner_noise.at(m);
            let local = within_step(same, di, dj, h, area_rng);
            acc += outer[m] * (running * di + inner[m] * local);
            running += inner[m] * dj;
        }
    }
    (n as f64).sqrt() * acc
}

fn area_stream(lattice: &BrownianLattice, needed: bool) -> Option<ChaCha8Rng> {
    needed.then(|| stream(lattice.seed, Purpose::LevyArea, lattice.path_index))
}

/// `√n ∫₀¹ λ_s ∫_{η_n(s)}^s θ_r dW^j_r dW^i_s` for integrands sampled on the
/// fine grid (`θ`, `λ` of length `n_fine`).
pub fn double_integral_weighted(
    lattice: &BrownianLattice,
    theta: &[f64],
    lambda: &[f64],
    n: usize,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_level(n, lattice.n_fine, 8)?;
    if theta.len() != lattice.n_fine || lambda.len() != lattice.n_fine {
        return Err(Error::Dimension(format!(
            "integrands of length {} and {} on a {}-step lattice",
            theta.len(),
            lambda.len(),
            lattice.n_fine
        )));
    }
    let outer = Driver::w(lattice, i)?;
    let inner = Driver::w(lattice, j)?;
    let mut rng = area_stream(lattice, i != j);
    Ok(iterated_sum(outer, inner, theta, lambda, lattice.n_fine, n, &mut rng))
}

/// `√n ∫₀¹∫_{η_n(s)}^s θ_r dW^j_r dW^i_s`.
pub fn double_integral(lattice: &BrownianLattice, theta: &[f64], n: usize, i: usize, j: usize) -> Result<f64> {
    double_integral_weighted(lattice, theta, &vec![1.0; lattice.n_fine], n, i, j)
}

/// Iterated integral over two arbitrary lattice noises, used by the
/// zero-limit cases where both integrators may be signal noise.
pub(crate) fn noise_double_integral(
    lattice: &BrownianLattice,
    outer: Driver<'_>,
    inner: Driver<'_>,
    n: usize,
) -> f64 {
    let ones = vec![1.0; lattice.n_fine];
    let mut rng = area_stream(lattice, !outer.same_as(&inner));
    iterated_sum(outer, inner, &ones, &ones, lattice.n_fine, n, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::sample_lattice;

    #[test]
    fn unit_integrand_matches_block_chi_square() {
        let lat = sample_lattice(1, 1, 512, 11, 3).unwrap();
        let n = 32;
        let got = double_integral(&lat, &vec![1.0; 512], n, 0, 0).unwrap();
        let coarse = lat.coarse_dw(n).unwrap();
        let want = (n as f64).sqrt() * coarse.iter().map(|x| 0.5 * (x * x - 1.0 / n as f64)).sum::<f64>();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn zero_integrand_is_zero() {
        let lat = sample_lattice(1, 2, 256, 1, 0).unwrap();
        assert_eq!(double_integral(&lat, &vec![0.0; 256], 16, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn levels_are_validated() {
        let lat = sample_lattice(1, 1, 256, 1, 0).unwrap();
        let ones = vec![1.0; 256];
        assert!(double_integral(&lat, &ones, 64, 0, 0).is_err());
        assert!(double_integral(&lat, &ones, 24, 0, 0).is_err());
        assert!(double_integral(&lat, &ones, 16, 0, 1).is_err());
        assert!(double_integral(&lat, &ones[..10], 16, 0, 0).is_err());
    }

    #[test]
    fn off_diagonal_is_deterministic_per_lattice() {
        let lat = sample_lattice(1, 2, 256, 5, 9).unwrap();
        let ones = vec![1.0; 256];
        let a = double_integral(&lat, &ones, 16, 0, 1).unwrap();
        let b = double_integral(&lat, &ones, 16, 0, 1).unwrap();
        assert_eq!(a, b);
    }
}
