//! Isolated P1 electron-nuclear levels: effective hyperfine shifts and ESR lines.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dipolar::nv_frame;
use super::ops::{cartesian, identity, kron, CMatrix};
use super::params::{
    projections, rad_per_ms_to_mhz, FieldConfig, HyperfineModel, HyperfineTable, P1Params, PhysicalConstants,
};
use crate::error::{invalid, Result};

/// One P1 electron-spin-flip line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Line {
    pub frequency_mhz: f64,
    pub nuclear_m: f64,
    pub axis: usize,
    /// Fraction of all P1 centers (over nuclear projections and Jahn-Teller
    /// axes) whose line coincides with this one.
    pub fraction: f64,
}

/// Effective shift table at field `field` with the field along `field_axis`.
///
/// For a tensor model the isolated electron-nuclear Hamiltonian is
/// diagonalized exactly; each electron-flip transition is labelled by
/// frequency order (m = +I highest) and the shift is its offset from the bare
/// electron Zeeman frequency. At zero field the first-order value is used.
pub fn hyperfine_table(
    p1: &P1Params,
    field: &FieldConfig,
    field_axis: &Vector3<f64>,
    constants: &PhysicalConstants,
) -> Result<HyperfineTable> {
    let (parallel, perpendicular) = match &p1.hyperfine {
        HyperfineModel::Table(t) => return Ok(t.clone()),
        HyperfineModel::Tensor { parallel, perpendicular } => (*parallel, *perpendicular),
    };
    let ms = projections(p1.nuclear_spin);
    let frame = nv_frame(field_axis);
    let n = field_axis.normalize();
    let omega = -constants.gamma_e * field.b_z;
    let mut shifts = vec![[0.0; 4]; ms.len()];
    for (axis, jt) in p1.jt_axes.iter().enumerate() {
        let col = if field.b_z == 0.0 {
            let c = jt.dot(&n);
            let eff = (parallel * parallel * c * c + perpendicular * perpendicular * (1.0 - c * c)).sqrt();
            ms.iter().map(|m| m * eff).collect::<Vec<_>>()
        } else {
            let a = perpendicular * Matrix3::identity() + (parallel - perpendicular) * jt * jt.transpose();
            let a_nv = frame * a * frame.transpose();
            exact_shifts(omega, &a_nv, p1.nuclear_spin)?
        };
        for (k, s) in col.into_iter().enumerate() {
            shifts[k][axis] = s;
        }
    }
    Ok(HyperfineTable { projections: ms, shifts })
}

fn exact_shifts(omega: f64, a: &Matrix3<f64>, nuclear_spin: f64) -> Result<Vec<f64>> {
    let s = cartesian(0.5);
    let i = cartesian(nuclear_spin);
    let ni = i[2].nrows();
    let c = |x: f64| Complex64::new(x, 0.0);
    let mut h = kron(&s[2], &identity(ni)) * c(omega);
    for p in 0..3 {
        for q in 0..3 {
            if a[(p, q)] != 0.0 {
                h += kron(&s[p], &i[q]) * c(a[(p, q)]);
            }
        }
    }
    let sz = kron(&s[2], &identity(ni));
    let splus = kron(&(&s[0] + &s[1] * Complex64::new(0.0, 1.0)), &identity(ni));
    let eig = h.symmetric_eigen();
    let dim = 2 * ni;
    let vec = |k: usize| eig.eigenvectors.column(k).into_owned();
    let expect = |op: &CMatrix, k: usize| (vec(k).adjoint() * op * vec(k))[(0, 0)].re;

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| expect(&sz, y).total_cmp(&expect(&sz, x)));
    let (upper, lower) = order.split_at(ni);
    if expect(&sz, upper[ni - 1]) <= 0.0 || expect(&sz, lower[0]) >= 0.0 {
        return Err(invalid("field too low to separate P1 electron manifolds"));
    }

    let mut weight = vec![vec![0.0; ni]; ni];
    for (a_idx, &u) in upper.iter().enumerate() {
        for (b_idx, &l) in lower.iter().enumerate() {
            weight[a_idx][b_idx] = (vec(u).adjoint() * &splus * vec(l))[(0, 0)].norm_sqr();
        }
    }
    let mut used_u = vec![false; ni];
    let mut used_l = vec![false; ni];
    let mut freqs = Vec::with_capacity(ni);
    for _ in 0..ni {
        let mut best = (0, 0, -1.0);
        for a_idx in 0..ni {
            for b_idx in 0..ni {
                if !used_u[a_idx] && !used_l[b_idx] && weight[a_idx][b_idx] > best.2 {
                    best = (a_idx, b_idx, weight[a_idx][b_idx]);
                }
            }
        }
        used_u[best.0] = true;
        used_l[best.1] = true;
        freqs.push(eig.eigenvalues[upper[best.0]] - eig.eigenvalues[lower[best.1]]);
    }
    freqs.sort_by(f64::total_cmp);
    Ok(freqs.into_iter().map(|f| f - omega).collect())
}

/// ESR lines of an isolated P1 for every (nuclear projection, axis).
pub fn p1_transition_frequencies(
    field: &FieldConfig,
    p1: &P1Params,
    field_axis: &Vector3<f64>,
    constants: &PhysicalConstants,
) -> Result<Vec<P1Line>> {
    let table = hyperfine_table(p1, field, field_axis, constants)?;
    let omega = -constants.gamma_e * field.b_z;
    let per_center = 1.0 / (4 * table.projections.len()) as f64;
    let mut lines = Vec::new();
    for (k, &m) in table.projections.iter().enumerate() {
        let freqs: Vec<f64> = (0..4).map(|axis| rad_per_ms_to_mhz((omega + table.shifts[k][axis]).abs())).collect();
        for (axis, &f) in freqs.iter().enumerate() {
            let same = freqs.iter().filter(|&&g| (g - f).abs() < 1e-6).count();
            lines.push(P1Line { frequency_mhz: f, nuclear_m: m, axis, fraction: same as f64 * per_center });
        }
    }
    Ok(lines)
}

/// Distinct lines with their multiplicities merged (within `tol_mhz`).
pub fn distinct_lines(lines: &[P1Line], tol_mhz: f64) -> Vec<P1Line> {
    let mut out: Vec<P1Line> = Vec::new();
    for l in lines {
        let seen = out
            .iter()
            .any(|o| (o.frequency_mhz - l.frequency_mhz).abs() < tol_mhz && o.nuclear_m == l.nuclear_m);
        if !seen {
            out.push(l.clone());
        }
    }
    out.sort_by(|a, b| a.frequency_mhz.total_cmp(&b.frequency_mhz));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_model::params::{mhz_to_rad_per_ms, Isotope, ParameterSet};

    fn setup(isotope: Isotope) -> (P1Params, PhysicalConstants, Vector3<f64>) {
        let set = ParameterSet::default();
        let axis = set.central().unwrap().quantization_axis;
        (set.p1(isotope), set.constants(), axis)
    }

    #[test]
    fn zero_table_gives_bare_zeeman_line() {
        let (_, c, axis) = setup(Isotope::N15);
        let p1 = P1Params::with_table(Isotope::N15, HyperfineTable::zeros(0.5));
        let field = FieldConfig::new(311.0).unwrap();
        let lines = p1_transition_frequencies(&field, &p1, &axis, &c).unwrap();
        let bare = rad_per_ms_to_mhz(c.gamma_e.abs() * 311.0);
        assert_eq!(lines.len(), 8);
        for l in &lines {
            assert!((l.frequency_mhz - bare).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_field_gives_pure_hyperfine() {
        let (p1, c, axis) = setup(Isotope::N14);
        let field = FieldConfig::new(0.0).unwrap();
        let table = hyperfine_table(&p1, &field, &axis, &c).unwrap();
        let lines = p1_transition_frequencies(&field, &p1, &axis, &c).unwrap();
        for l in &lines {
            let a = table.shift(l.nuclear_m, l.axis).unwrap();
            assert!((l.frequency_mhz - rad_per_ms_to_mhz(a.abs())).abs() < 1e-9);
        }
        // on-axis center at first order: |a| = A_parallel
        assert!((table.shift(1.0, 0).unwrap() - mhz_to_rad_per_ms(114.03)).abs() < 1e-6);
    }

    #[test]
    fn high_field_limit_approaches_first_order() {
        let (p1, c, axis) = setup(Isotope::N15);
        let field = FieldConfig::new(1.0e5).unwrap();
        let table = hyperfine_table(&p1, &field, &axis, &c).unwrap();
        let first = hyperfine_table(&p1, &FieldConfig::new(0.0).unwrap(), &axis, &c).unwrap();
        for k in 0..2 {
            for a in 0..4 {
                let d = rad_per_ms_to_mhz(table.shifts[k][a] - first.shifts[k][a]);
                assert!(d.abs() < 0.2, "{d}");
            }
        }
    }

    #[test]
    fn axis_multiplicity_is_one_to_three() {
        let (p1, c, axis) = setup(Isotope::N15);
        let field = FieldConfig::new(311.0).unwrap();
        let lines = p1_transition_frequencies(&field, &p1, &axis, &c).unwrap();
        let up: Vec<_> = lines.iter().filter(|l| l.nuclear_m == 0.5).collect();
        assert!((up[0].fraction - 1.0 / 8.0).abs() < 1e-12);
        for l in &up[1..] {
            assert!((l.fraction - 3.0 / 8.0).abs() < 1e-12);
            assert!((l.frequency_mhz - up[1].frequency_mhz).abs() < 1e-6);
        }
        assert!(up[0].frequency_mhz > up[1].frequency_mhz);
        let total: f64 = distinct_lines(&lines, 1e-3)
            .iter()
            .map(|l| l.fraction)
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_levels_match_independent_breit_rabi() {
        // On-axis center: the I=1/2 problem reduces to 2x2 blocks with closed form.
        let (p1, c, axis) = setup(Isotope::N15);
        let b = 311.0;
        let table = hyperfine_table(&p1, &FieldConfig::new(b).unwrap(), &axis, &c).unwrap();
        let w = -c.gamma_e * b;
        let (ap, at) = (mhz_to_rad_per_ms(159.73), mhz_to_rad_per_ms(113.83));
        let top = w / 2.0 + ap / 4.0;
        let mid_hi = -ap / 4.0 + ((w / 2.0).powi(2) + (at / 2.0).powi(2)).sqrt();
        let mid_lo = -ap / 4.0 - ((w / 2.0).powi(2) + (at / 2.0).powi(2)).sqrt();
        let bottom = -w / 2.0 + ap / 4.0;
        let f_hi = top - mid_lo;
        let f_lo = mid_hi - bottom;
        assert!((table.shift(0.5, 0).unwrap() - (f_hi - w)).abs() < 1e-6);
        assert!((table.shift(-0.5, 0).unwrap() - (f_lo - w)).abs() < 1e-6);
    }
}
