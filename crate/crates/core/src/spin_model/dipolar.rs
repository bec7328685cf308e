//! Point-dipole couplings.

use nalgebra::{Matrix3, Vector3};

use super::params::PhysicalConstants;
use crate::error::{Error, Result};

/// Orthonormal frame with z along `axis`. Rows are x', y', z' in crystal
/// coordinates. For the [111] axis x' is [1,-1,0]/sqrt(2).
pub fn nv_frame(axis: &Vector3<f64>) -> Matrix3<f64> {
    let z = axis.normalize();
    let mut x = z.cross(&Vector3::z());
    if x.norm() < 1e-8 {
        x = Vector3::x();
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

/// Dipolar tensor `prefactor/r^3 (I - 3 r r^T)` in rad/ms, with prefactor
/// `hbar mu0/4pi * gamma_1 * gamma_2`. Expressed in whatever frame `r` is in.
pub fn dipolar_tensor(
    r: &Vector3<f64>,
    gamma_1: f64,
    gamma_2: f64,
    constants: &PhysicalConstants,
) -> Result<Matrix3<f64>> {
    let d = r.norm();
    if !(d > 0.0) {
        return Err(Error::CoincidentSpins);
    }
    let u = r / d;
    let scale = constants.hbar_mu0_over_4pi * gamma_1 * gamma_2 / (d * d * d);
    Ok((Matrix3::identity() - 3.0 * u * u.transpose()) * scale)
}

/// Electron-electron zz coupling along `axis`: `prefactor/r^3 (1 - 3 cos^2 theta)`.
pub fn electron_zz(r: &Vector3<f64>, axis: &Vector3<f64>, constants: &PhysicalConstants) -> Result<f64> {
    let d = r.norm();
    if !(d > 0.0) {
        return Err(Error::CoincidentSpins);
    }
    let c = r.dot(axis) / (d * axis.norm());
    Ok(constants.dipolar_prefactor / (d * d * d) * (1.0 - 3.0 * c * c))
}

/// Difference of a bath spin's frequency shift between the two qubit levels,
/// `(m1 - m0) * T_zz`, rad/ms.
pub fn secular_azz(
    central_pos: &Vector3<f64>,
    bath_pos: &Vector3<f64>,
    axis: &Vector3<f64>,
    qubit_levels: (i8, i8),
    constants: &PhysicalConstants,
) -> Result<f64> {
    let t_zz = electron_zz(&(bath_pos - central_pos), axis, constants)?;
    Ok(f64::from(qubit_levels.1 - qubit_levels.0) * t_zz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_model::params::{mhz_to_rad_per_ms, rad_per_ms_to_mhz};
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn constants() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn axis111() -> Vector3<f64> {
        Vector3::new(1.0, 1.0, 1.0).normalize()
    }

    #[test]
    fn on_axis_electron_pair_at_one_nm() {
        let c = constants();
        let t = dipolar_tensor(&Vector3::new(0.0, 0.0, 1.0), c.gamma_e, c.gamma_e, &c).unwrap();
        // mu0/4pi * hbar * gamma_e^2 from CODATA values, computed in SI:
        let mu0_4pi = 1e-7;
        let hbar = 1.054_571_817e-34;
        let gamma_si = 1.760_859_63e11; // rad/s/T
        let pref_hz = mu0_4pi * hbar * gamma_si * gamma_si / 1e-27 / (2.0 * std::f64::consts::PI);
        let azz_mhz = rad_per_ms_to_mhz(t[(2, 2)].abs());
        assert!((azz_mhz - 2.0 * pref_hz / 1e6).abs() < 0.05, "{azz_mhz}");
        assert!((azz_mhz - 104.0).abs() < 0.2);
    }

    #[test]
    fn perpendicular_is_minus_half() {
        let c = constants();
        let z = dipolar_tensor(&Vector3::new(0.0, 0.0, 1.0), c.gamma_e, c.gamma_e, &c).unwrap();
        let x = dipolar_tensor(&Vector3::new(1.0, 0.0, 0.0), c.gamma_e, c.gamma_e, &c).unwrap();
        assert!((x[(2, 2)] + z[(2, 2)] / 2.0).abs() < 1e-9 * z[(2, 2)].abs());
    }

    #[test]
    fn zero_displacement_is_an_error() {
        let c = constants();
        let err = dipolar_tensor(&Vector3::zeros(), c.gamma_e, c.gamma_e, &c).unwrap_err();
        assert_eq!(err.to_string(), "coincident spins");
        assert!(secular_azz(&Vector3::zeros(), &Vector3::zeros(), &axis111(), (0, -1), &c).is_err());
    }

    #[test]
    fn secular_coupling_on_axis_at_two_nm() {
        let c = constants();
        let n = axis111();
        let a = secular_azz(&Vector3::zeros(), &(2.0 * n), &n, (0, -1), &c).unwrap();
        let expected = mhz_to_rad_per_ms(104.08 / 8.0);
        assert!((a.abs() - expected).abs() < 0.01 * expected, "{}", rad_per_ms_to_mhz(a));
        assert_eq!(secular_azz(&Vector3::zeros(), &(2.0 * n), &n, (0, 0), &c).unwrap(), 0.0);
    }

    #[test]
    fn magic_angle_vanishes() {
        let c = constants();
        let z = Vector3::z();
        let theta = (1.0f64 / 3f64.sqrt()).acos();
        let r = Vector3::new(theta.sin(), 0.0, theta.cos()) * 2.0;
        let a = secular_azz(&Vector3::zeros(), &r, &z, (0, -1), &c).unwrap();
        let a0 = secular_azz(&Vector3::zeros(), &(2.0 * z), &z, (0, -1), &c).unwrap();
        assert!(a.abs() < 1e-6 * a0.abs());
    }

    #[test]
    fn frame_for_111_axis() {
        let f = nv_frame(&axis111());
        let x = f.row(0).transpose();
        assert!((x - Vector3::new(1.0, -1.0, 0.0).normalize()).norm() < 1e-15);
        assert!((f * f.transpose() - Matrix3::identity()).norm() < 1e-14);
        assert!((f.determinant() - 1.0).abs() < 1e-14);
        let g = nv_frame(&Vector3::z());
        assert!((g * g.transpose() - Matrix3::identity()).norm() < 1e-14);
    }

    #[test]
    fn angular_average_vanishes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            // uniform cos(theta) is uniform on the sphere
            let c: f64 = rng.random_range(-1.0..1.0);
            sum += 1.0 - 3.0 * c * c;
        }
        assert!((sum / n as f64).abs() < 1e-2);
    }

    fn vec3() -> impl Strategy<Value = Vector3<f64>> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64)
            .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 0.01)
            .prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn traceless_and_symmetric(r in vec3()) {
            let c = constants();
            let t = dipolar_tensor(&r, c.gamma_e, c.gamma_e, &c).unwrap();
            let scale = t.norm();
            prop_assert!(t.trace().abs() < 1e-12 * scale);
            prop_assert!((t - t.transpose()).norm() < 1e-12 * scale);
        }

        #[test]
        fn inverse_cube_scaling(r in vec3()) {
            let c = constants();
            let t1 = dipolar_tensor(&r, c.gamma_e, c.gamma_e, &c).unwrap();
            let t2 = dipolar_tensor(&(2.0 * r), c.gamma_e, c.gamma_e, &c).unwrap();
            prop_assert!((t2 - t1 / 8.0).norm() < 1e-12 * t1.norm());
        }

        #[test]
        fn rotation_leaves_secular_coupling_unchanged(
            r in vec3(), ax in -3.0..3.0f64, ay in -3.0..3.0f64, az in -3.0..3.0f64
        ) {
            let c = constants();
            let n = axis111();
            let rot = Rotation3::from_euler_angles(ax, ay, az);
            let a = secular_azz(&Vector3::zeros(), &r, &n, (0, -1), &c).unwrap();
            let b = secular_azz(&Vector3::zeros(), &(rot * r), &(rot * n), (0, -1), &c).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-3));
        }
    }
}
