//! Variation-of-constants representation of a driven linear SDE, used as
//! a numerical self-check of the flow/inverse machinery.

use crate::linalg::SmallMat;
use crate::sde::BrownianLattice;

/// `dφ = a⁰(t) φ dt + a¹(t) φ dB + dG` in two dimensions with
/// `G_t = c0 t + c1 B_t + c2 W'_t`, `W'` independent of `B`.
#[derive(Debug, Clone)]
pub struct DrivenLinearSystem {
    pub c0: [f64; 2],
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    /// Scales both coefficient matrices; zero switches off the feedback.
    pub feedback: f64,
}

impl Default for DrivenLinearSystem {
    fn default() -> Self {
        Self { c0: [0.5, -0.3], c1: [1.0, 0.4], c2: [0.2, 0.7], feedback: 1.0 }
    }
}

impl DrivenLinearSystem {
    fn a0(&self, t: f64) -> SmallMat {
        let f = self.feedback;
        SmallMat::from_rows(&[
            &[-0.5 * f, f * (2.0 * t).sin()],
            &[0.3 * f * t.cos(), -0.2 * f],
        ])
    }

    fn a1(&self, t: f64) -> SmallMat {
        let f = self.feedback;
        SmallMat::from_rows(&[&[0.4 * f, 0.2 * f * t], &[-0.3 * f, 0.5 * f * (3.0 * t).cos()]])
    }
}

/// `|φ₁ − φ̂₁|` between the directly integrated solution and the
/// variation-of-constants formula evaluated with the same increments.
/// Uses the first coordinate of the lattice's signal and observation
/// noises as `B` and `W'`.
pub fn variation_of_constants_check(sys: &DrivenLinearSystem, lattice: &BrownianLattice) -> f64 {
    let n = lattice.n_fine;
    let dt = 1.0 / n as f64;
    let mut phi = [0.0; 2];
    let mut psi = SmallMat::identity(2);
    let mut acc = [0.0; 2];
    let mut tmp = [0.0; 2];
    for k in 0..n {
        let t = k as f64 * dt;
        let db = lattice.db[k * lattice.e];
        let dw = lattice.dw[k * lattice.d];
        let dg = [
            sys.c0[0] * dt + sys.c1[0] * db + sys.c2[0] * dw,
            sys.c0[1] * dt + sys.c1[1] * db + sys.c2[1] * dw,
        ];
        let a0 = sys.a0(t);
        let a1 = sys.a1(t);
        let step = a0.scale(dt).add(&a1.scale(db));

        let psi_inv = psi.inverse().expect("flow of a bounded system stays invertible");
        // ψ⁻¹ ΔG − ψ⁻¹ a¹ c1 dt
        let mut drive = [0.0; 2];
        let mut corr = [0.0; 2];
        a1.mul_vec(&sys.c1, &mut corr);
        for i in 0..2 {
            drive[i] = dg[i] - corr[i] * dt;
        }
        psi_inv.mul_vec(&drive, &mut tmp);
        acc[0] += tmp[0];
        acc[1] += tmp[1];

        step.mul_vec(&phi, &mut tmp);
        phi = [phi[0] + tmp[0] + dg[0], phi[1] + tmp[1] + dg[1]];
        psi = psi.add(&step.mul(&psi));
    }
    let mut rep = [0.0; 2];
    psi.mul_vec(&acc, &mut rep);
    ((phi[0] - rep[0]).powi(2) + (phi[1] - rep[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::sample_lattice;

    #[test]
    fn homogeneous_system_has_zero_residual() {
        let sys = DrivenLinearSystem { c0: [0.0; 2], c1: [0.0; 2], c2: [0.0; 2], feedback: 1.0 };
        let l = sample_lattice(1, 1, 256, 1, 0).unwrap();
        assert_eq!(variation_of_constants_check(&sys, &l), 0.0);
    }

    #[test]
    fn no_feedback_is_exact() {
        let sys = DrivenLinearSystem { feedback: 0.0, ..Default::default() };
        let l = sample_lattice(1, 1, 256, 1, 0).unwrap();
        assert_eq!(variation_of_constants_check(&sys, &l), 0.0);
    }
}
