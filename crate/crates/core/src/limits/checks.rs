use serde::Serialize;

use super::cases::{FubiniCase, ZeroCase};
use super::double::check_level;
use super::{Adapted, LatticeStream};
use crate::rng::{fill_normal, stream, Purpose};
use crate::stats::{mean, mean_se, Estimate};
use crate::{Error, Result};

/// One statistic at one level of a ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub case_id: String,
    pub n: usize,
    pub statistic: String,
    pub value: f64,
    pub std_error: f64,
    pub predicted: f64,
}

fn check_ladder(ladder: &[usize], n_fine: usize) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::Config("empty ladder".into()));
    }
    ladder.iter().try_for_each(|&n| check_level(n, n_fine, 8))
}

/// Columns of per-lattice values, one per ladder level.
fn by_level(rows: Vec<Vec<f64>>, levels: usize) -> Vec<Vec<f64>> {
    (0..levels).map(|l| rows.iter().map(|r| r[l]).collect()).collect()
}

/// `n ∫₀¹ (∫_{η(s)}^s a dW^i)(∫_{η(s)}^s b dW^j) ds` per level, against
/// `δᵢⱼ/2 ∫₀¹ a_s b_s ds` averaged over the same lattices.
pub fn qv_limit_check(
    lattices: &LatticeStream,
    a: Adapted,
    b: Adapted,
    i: usize,
    j: usize,
    ladder: &[usize],
) -> Result<Vec<LevelRow>> {
    check_ladder(ladder, lattices.n_fine)?;
    if i >= lattices.d || j >= lattices.d {
        return Err(Error::Dimension(format!("coordinates ({i}, {j}) with d = {}", lattices.d)));
    }
    let n_fine = lattices.n_fine;
    let h = 1.0 / n_fine as f64;
    let per_lattice = lattices.map(|lat| {
        let (av, bv) = (a.sample(lat)?, b.sample(lat)?);
        let d = lat.d;
        let mut row: Vec<f64> = ladder
            .iter()
            .map(|&n| {
                let stride = n_fine / n;
                let mut total = 0.0;
                let (mut x, mut y) = (0.0, 0.0);
                for m in 0..n_fine {
                    if m % stride == 0 {
                        (x, y) = (0.0, 0.0);
                    }
                    let before = x * y;
                    x += av[m] * lat.dw[m * d + i];
                    y += bv[m] * lat.dw[m * d + j];
                    total += 0.5 * h * (before + x * y);
                }
                n as f64 * total
            })
            .collect();
        let limit = if i == j { 0.5 * h * av.iter().zip(&bv).map(|(p, q)| p * q).sum::<f64>() } else { 0.0 };
        row.push(limit);
        Ok(row)
    })?;
    let cols = by_level(per_lattice, ladder.len() + 1);
    let predicted = mean(&cols[ladder.len()]);
    Ok(ladder
        .iter()
        .zip(&cols)
        .map(|(&n, col)| {
            let (value, std_error) = mean_se(col);
            LevelRow { case_id: format!("qv-{i}{j}"), n, statistic: "mean".into(), value, std_error, predicted }
        })
        .collect())
}

/// Size of a vanishing conditional projection per level. Random projections
/// report the mean absolute value; constant projections report the Monte
/// Carlo estimate of the constant.
pub fn zero_limit_check(lattices: &LatticeStream, case: ZeroCase, ladder: &[usize]) -> Result<Vec<LevelRow>> {
    check_ladder(ladder, lattices.n_fine)?;
    if lattices.e < case.signal_dim() || lattices.d < 1 {
        return Err(Error::Dimension(format!(
            "case {} needs e >= {} and d >= 1, got e = {}, d = {}",
            case.id(),
            case.signal_dim(),
            lattices.e,
            lattices.d
        )));
    }
    let per_lattice =
        lattices.map(|lat| ladder.iter().map(|&n| case.sample(lat, n)).collect::<Result<Vec<f64>>>())?;
    let cols = by_level(per_lattice, ladder.len());
    Ok(ladder
        .iter()
        .zip(cols)
        .map(|(&n, col)| {
            let (statistic, sample) = if case.is_constant() {
                ("constant", col)
            } else {
                ("l1", col.iter().map(|v| v.abs()).collect())
            };
            let (value, std_error) = mean_se(&sample);
            LevelRow {
                case_id: case.id().into(),
                n,
                statistic: statistic.into(),
                value,
                std_error,
                predicted: case.predicted_l1(n),
            }
        })
        .collect())
}

/// Which factor of the lagged product carries the increment since the last
/// grid time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagForm {
    /// `√n ∫(A_s − A_{η(s)}) dM_s`.
    DriftLagged,
    /// `√n ∫(M_s − M_{η(s)}) dA_s`.
    MartingaleLagged,
}

/// Root-mean-square size of `√n ∫(A − A_η) dM` or `√n ∫(M − M_η) dA`, with
/// `A = ∫a ds` and `M = ∫b dW¹`, per level. Bounded integrands give an
/// `n^{-1/2}` decay; the predicted column is 0.
pub fn lag_integral_check(
    lattices: &LatticeStream,
    a: Adapted,
    b: Adapted,
    form: LagForm,
    ladder: &[usize],
) -> Result<Vec<LevelRow>> {
    check_ladder(ladder, lattices.n_fine)?;
    let n_fine = lattices.n_fine;
    let h = 1.0 / n_fine as f64;
    let per_lattice = lattices.map(|lat| {
        let (av, bv) = (a.sample(lat)?, b.sample(lat)?);
        let d = lat.d;
        Ok(ladder
            .iter()
            .map(|&n| {
                let stride = n_fine / n;
                let (mut lag_a, mut lag_m, mut acc) = (0.0, 0.0, 0.0);
                for m in 0..n_fine {
                    if m % stride == 0 {
                        (lag_a, lag_m) = (0.0, 0.0);
                    }
                    let dm = bv[m] * lat.dw[m * d];
                    let da = av[m] * h;
                    acc += match form {
                        LagForm::DriftLagged => lag_a * dm,
                        LagForm::MartingaleLagged => lag_m * da,
                    };
                    lag_a += da;
                    lag_m += dm;
                }
                let v = (n as f64).sqrt() * acc;
                v * v
            })
            .collect())
    })?;
    let id = match form {
        LagForm::DriftLagged => "lag-drift",
        LagForm::MartingaleLagged => "lag-martingale",
    };
    Ok(ladder
        .iter()
        .zip(by_level(per_lattice, ladder.len()))
        .map(|(&n, squares)| {
            let (ms, se) = mean_se(&squares);
            let value = ms.sqrt();
            let std_error = if value > 0.0 { se / (2.0 * value) } else { 0.0 };
            LevelRow { case_id: id.into(), n, statistic: "l2".into(), value, std_error, predicted: 0.0 }
        })
        .collect())
}

/// Outcome of a projection-exchange check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FubiniResult {
    pub case: FubiniCase,
    pub outer: usize,
    pub inner: usize,
    /// Mean of nested-minus-projected over outer paths, with a standard
    /// error that includes the inner sampling noise.
    pub discrepancy: Estimate,
    /// Mean over paths of `disc² − se²`, the squared per-path discrepancy
    /// less its squared inner standard error. Under the identity each term
    /// has conditional mean zero whatever the law of the inner samples, so
    /// this catches per-path mismatches that cancel in the mean.
    pub excess_square: Estimate,
    /// Paths whose nested side has zero inner variance; their discrepancy
    /// must then be exactly zero.
    pub exact_paths: usize,
    pub exact_mismatches: usize,
}

impl FubiniResult {
    /// Both the mean discrepancy and the per-path scaled discrepancies agree
    /// with the identity within `sigmas` standard errors.
    pub fn within(&self, sigmas: f64) -> bool {
        let mean_ok = self.discrepancy.value.abs() <= sigmas * self.discrepancy.std_error;
        let scaled = self.exact_paths == self.outer
            || self.excess_square.value.abs() <= sigmas * self.excess_square.std_error;
        mean_ok && scaled && self.exact_mismatches == 0
    }
}

/// Compares `E[∫f dW | W]` by nested Monte Carlo over the signal noise with
/// `∫E[f | W] dW` from the closed-form projector, on every lattice of the
/// stream. Integrands are taken at left points.
pub fn fubini_check(case: FubiniCase, lattices: &LatticeStream, inner: usize) -> Result<FubiniResult> {
    if inner < 4 || lattices.count < 2 {
        return Err(Error::Config("nested check needs at least 2 outer and 4 inner samples".into()));
    }
    let n_fine = lattices.n_fine;
    let h = 1.0 / n_fine as f64;
    let per_path = lattices.map(|lat| {
        let d = lat.d;
        let dw: Vec<f64> = (0..n_fine).map(|m| lat.dw[m * d]).collect();
        let w_left = Adapted::W(0).sample(lat)?;
        let projected: f64 = (0..n_fine).map(|m| case.projector(m as f64 * h, w_left[m]) * dw[m]).sum();
        let mut rng = stream(lat.seed, Purpose::InnerSample, lat.path_index);
        let mut db = vec![0.0; n_fine];
        let nested: Vec<f64> = (0..inner)
            .map(|_| {
                fill_normal(&mut rng, &mut db, h.sqrt());
                let mut b = 0.0;
                let mut total = 0.0;
                for m in 0..n_fine {
                    total += case.value(m as f64 * h, w_left[m], b) * dw[m];
                    b += db[m];
                }
                total
            })
            .collect();
        let (m, se) = mean_se(&nested);
        // Identical inner samples leave only rounding in the spread.
        let se = if se <= 1e-12 * (1.0 + m.abs()) { 0.0 } else { se };
        Ok((m - projected, se))
    })?;
    let diffs: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let (value, std_error) = mean_se(&diffs);
    let exact: Vec<&(f64, f64)> = per_path.iter().filter(|p| p.1 == 0.0).collect();
    let exact_mismatches = exact.iter().filter(|p| p.0.abs() > 1e-12).count();
    let excess: Vec<f64> = per_path.iter().map(|p| p.0 * p.0 - p.1 * p.1).collect();
    let (v, se) = mean_se(&excess);
    Ok(FubiniResult {
        case,
        outer: lattices.count,
        inner,
        discrepancy: Estimate { value, std_error },
        excess_square: Estimate { value: v, std_error: se },
        exact_paths: exact.len(),
        exact_mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qv_of_unit_integrand_is_half() {
        let s = LatticeStream::new(1, 1, 512, 7, 400);
        let rows = qv_limit_check(&s, Adapted::Const(1.0), Adapted::Const(1.0), 0, 0, &[8, 32]).unwrap();
        for r in rows {
            assert!((r.predicted - 0.5).abs() < 1e-12);
            assert!((r.value - 0.5).abs() < 4.0 * r.std_error, "{r:?}");
        }
    }

    #[test]
    fn qv_with_time_integrand_is_quarter() {
        let s = LatticeStream::new(1, 1, 512, 8, 400);
        let rows = qv_limit_check(&s, Adapted::Time, Adapted::Const(1.0), 0, 0, &[32]).unwrap();
        assert!((rows[0].predicted - 0.25).abs() < 1e-3);
        assert!((rows[0].value - rows[0].predicted).abs() < 4.0 * rows[0].std_error, "{:?}", rows[0]);
    }

    #[test]
    fn lagged_integrals_decay_like_inverse_root() {
        let s = LatticeStream::new(1, 1, 1024, 2, 400);
        for form in [LagForm::DriftLagged, LagForm::MartingaleLagged] {
            let rows = lag_integral_check(&s, Adapted::Const(1.0), Adapted::Const(1.0), form, &[8, 32, 128]).unwrap();
            let ratio = rows[0].value / rows[2].value;
            assert!((ratio - 4.0).abs() < 0.8, "{form:?}: {rows:?}");
        }
    }

    #[test]
    fn cross_qv_vanishes() {
        let s = LatticeStream::new(1, 2, 256, 7, 300);
        let rows = qv_limit_check(&s, Adapted::Const(1.0), Adapted::Const(1.0), 0, 1, &[16]).unwrap();
        assert_eq!(rows[0].predicted, 0.0);
        assert!(rows[0].value.abs() < 4.0 * rows[0].std_error);
    }

    #[test]
    fn observation_path_exchange_is_exact() {
        let s = LatticeStream::new(1, 1, 4, 3, 10);
        let r = fubini_check(FubiniCase::ObservationPath, &s, 5).unwrap();
        assert!(r.discrepancy.value.abs() < 1e-15);
        assert_eq!(r.exact_paths, 10);
        assert!(r.within(3.0));
    }

    #[test]
    fn signal_cases_agree_with_projectors() {
        let s = LatticeStream::new(1, 1, 4, 3, 300);
        let ok = fubini_check(FubiniCase::SignalSquare, &s, 100).unwrap();
        assert!(ok.within(3.0), "{ok:?}");
        let r = fubini_check(FubiniCase::SignalPath, &s, 100).unwrap();
        assert!(r.within(3.0), "{r:?}");
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let s = LatticeStream::new(1, 1, 256, 3, 10);
        assert!(zero_limit_check(&s, ZeroCase::ProductCross, &[16]).is_err());
        assert!(zero_limit_check(&s, ZeroCase::TerminalB, &[]).is_err());
        assert!(qv_limit_check(&s, Adapted::Time, Adapted::Time, 0, 1, &[16]).is_err());
    }
}
