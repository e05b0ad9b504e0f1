//! Laplace kernels. Permittivities never appear here; they only scale
//! assembled rows.

use std::f64::consts::PI;

use thiserror::Error;

use crate::Vec3;

/// Below this separation a kernel evaluation is treated as singular.
pub const MIN_SEPARATION: f64 = 1e-14;

const INV_4PI: f64 = 1.0 / (4.0 * PI);

#[derive(Debug, Error, PartialEq)]
#[error("singular kernel evaluation: |x - y| = {distance:e}")]
pub struct KernelError {
    pub distance: f64,
}

#[inline]
fn separation(x: &Vec3, y: &Vec3) -> Result<(Vec3, f64), KernelError> {
    let d = x - y;
    let r = d.norm();
    if r < MIN_SEPARATION {
        Err(KernelError { distance: r })
    } else {
        Ok((d, r))
    }
}

/// Single-layer kernel `1 / (4π|x − y|)`.
pub fn sl_kernel(x: &Vec3, y: &Vec3) -> Result<f64, KernelError> {
    let (_, r) = separation(x, y)?;
    Ok(INV_4PI / r)
}

/// Adjoint double-layer kernel `(x − y)·n_x / (4π|x − y|³)`.
pub fn adl_kernel(x: &Vec3, n_x: &Vec3, y: &Vec3) -> Result<f64, KernelError> {
    let (d, r) = separation(x, y)?;
    Ok(INV_4PI * d.dot(n_x) / (r * r * r))
}

/// Field kernel `(x − y) / (4π|x − y|³)`, the negative gradient of
/// [`sl_kernel`] in `x`.
pub fn efield_kernel(x: &Vec3, y: &Vec3) -> Result<Vec3, KernelError> {
    let (d, r) = separation(x, y)?;
    Ok(d * (INV_4PI / (r * r * r)))
}

// Unchecked variants for quadrature loops, where nodes never coincide with
// the evaluation point.

#[inline(always)]
pub(crate) fn sl(x: &Vec3, y: &Vec3) -> f64 {
    INV_4PI / (x - y).norm()
}

#[inline(always)]
pub(crate) fn adl(x: &Vec3, n_x: &Vec3, y: &Vec3) -> f64 {
    let d = x - y;
    let r2 = d.norm_squared();
    INV_4PI * d.dot(n_x) / (r2 * r2.sqrt())
}

#[inline(always)]
pub(crate) fn efield(x: &Vec3, y: &Vec3) -> Vec3 {
    let d = x - y;
    let r2 = d.norm_squared();
    d * (INV_4PI / (r2 * r2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn single_layer_values() {
        let o = Vec3::zeros();
        assert_relative_eq!(sl_kernel(&Vec3::z(), &o).unwrap(), 0.079_577_471_5, epsilon = 1e-10);
        assert_relative_eq!(sl_kernel(&(Vec3::x() * 2.0), &o).unwrap(), 1.0 / (8.0 * PI), epsilon = 1e-16);
        assert!(sl_kernel(&o, &o).is_err());
        assert!(adl_kernel(&o, &Vec3::z(), &o).is_err());
        assert!(efield_kernel(&o, &o).is_err());
    }

    #[test]
    fn adjoint_double_layer_values() {
        let o = Vec3::zeros();
        assert_eq!(adl_kernel(&Vec3::x(), &Vec3::z(), &o).unwrap(), 0.0);
        assert_relative_eq!(adl_kernel(&Vec3::z(), &Vec3::z(), &o).unwrap(), INV_4PI, epsilon = 1e-16);
    }

    #[test]
    fn field_kernel_values() {
        let e = efield_kernel(&Vec3::z(), &Vec3::zeros()).unwrap();
        assert_relative_eq!(e, Vec3::new(0.0, 0.0, INV_4PI), epsilon = 1e-16);
    }

    fn point() -> impl Strategy<Value = Vec3> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn field_is_negative_gradient_of_single_layer(x in point(), y in point()) {
            prop_assume!((x - y).norm() > 0.3);
            let h = 1e-5;
            let e = efield_kernel(&x, &y).unwrap();
            for k in 0..3 {
                let mut dx = Vec3::zeros();
                dx[k] = h;
                let fd = -(sl_kernel(&(x + dx), &y).unwrap() - sl_kernel(&(x - dx), &y).unwrap()) / (2.0 * h);
                prop_assert!((fd - e[k]).abs() <= 1e-6 * e.norm().max(1e-3));
            }
        }

        #[test]
        fn kernel_identities(x in point(), y in point(), n in point(), s in 0.1..10.0f64) {
            prop_assume!((x - y).norm() > 1e-3 && n.norm() > 1e-3);
            let n = n.normalize();
            let e = efield_kernel(&x, &y).unwrap();
            prop_assert!((adl_kernel(&x, &n, &y).unwrap() - e.dot(&n)).abs() <= 1e-15 * e.norm());
            let scaled = sl_kernel(&(x * s), &(y * s)).unwrap();
            prop_assert!((scaled * s - sl_kernel(&x, &y).unwrap()).abs() <= 1e-14 * scaled * s);
            prop_assert!((e + efield_kernel(&y, &x).unwrap()).norm() <= 1e-15 * e.norm());
        }
    }
}
