//! The free Carnot group `G_N(R^d)` in exponential coordinates of the
//! first kind.
//!
//! Points are coordinate vectors over a [`HallBasis`]; the group law is
//! evaluated through the tensor chart, `u * v = log(exp(u) ⊗ exp(v))`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::ser::{Serialize, SerializeSeq, Serializer};

use crate::error::{Error, Result};
use crate::free_lie::{log_coords_to_tensor, tensor_to_log_coords, HallBasis, LogCoordinates};
use crate::tensor::TruncatedTensor;

/// Central-difference step used by [`right_translation_jacobian`].
pub const JACOBIAN_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    coords: LogCoordinates,
}

impl Serialize for GroupElement {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let c = self.coords.coords();
        let mut seq = serializer.serialize_seq(Some(c.len()))?;
        for x in c {
            seq.serialize_element(x)?;
        }
        seq.end()
    }
}

impl GroupElement {
    pub fn new(basis: Arc<HallBasis>, coords: Vec<f64>) -> Result<Self> {
        Ok(Self {
            coords: LogCoordinates::new(basis, coords)?,
        })
    }

    pub fn identity(basis: Arc<HallBasis>) -> Self {
        Self {
            coords: LogCoordinates::zero(basis),
        }
    }

    pub fn from_log_coords(coords: LogCoordinates) -> Self {
        Self { coords }
    }

    pub fn basis(&self) -> &Arc<HallBasis> {
        self.coords.basis()
    }

    pub fn coords(&self) -> &[f64] {
        self.coords.coords()
    }

    pub fn log_coords(&self) -> &LogCoordinates {
        &self.coords
    }

    /// Layer index (degree) of each coordinate.
    pub fn layers(&self) -> &[usize] {
        self.basis().degrees()
    }

    pub fn len(&self) -> usize {
        self.coords().len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords().is_empty()
    }

    fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        Self::new(self.basis().clone(), coords)
    }

    fn check_basis(&self, other: &Self) -> Result<()> {
        if self.basis() != other.basis() {
            return Err(Error::Shape(format!(
                "group elements over (d={}, N={}) and (d={}, N={})",
                self.basis().dim(),
                self.basis().depth(),
                other.basis().dim(),
                other.basis().depth()
            )));
        }
        Ok(())
    }

    /// Group law `u * v`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_basis(other)?;
        let x = group_to_tensor(self).mul(&group_to_tensor(other))?;
        group_from_tensor(&x, self.basis())
    }

    /// Inverse in first-kind coordinates is negation.
    pub fn inverse(&self) -> Self {
        self.with_coords(self.coords().iter().map(|c| -c).collect())
            .expect("negation keeps coordinates valid")
    }

    /// Dilation `Δ_λ`: coordinate `i` is scaled by `λ^{k_i}`.
    pub fn dilate(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dilation factor {lambda} must be >= 0"
            )));
        }
        Ok(self.with_coords(dilate_coords(self.coords(), self.layers(), lambda))?)
    }

    /// Homogeneous norm `max_i |u_i|^{1/k_i}`.
    pub fn homogeneous_norm(&self) -> f64 {
        homogeneous_norm(self.coords(), self.layers())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Dilation on raw coordinate slices.
pub fn dilate_coords(coords: &[f64], layers: &[usize], lambda: f64) -> Vec<f64> {
    coords
        .iter()
        .zip(layers)
        .map(|(c, &k)| c * lambda.powi(k as i32))
        .collect()
}

/// Homogeneous norm on raw coordinate slices.
pub fn homogeneous_norm(coords: &[f64], layers: &[usize]) -> f64 {
    coords
        .iter()
        .zip(layers)
        .map(|(c, &k)| c.abs().powf(1.0 / k as f64))
        .fold(0.0, f64::max)
}

pub fn group_to_tensor(u: &GroupElement) -> TruncatedTensor {
    log_coords_to_tensor(&u.coords)
        .exp()
        .expect("Lie elements have zero scalar part")
}

/// Chart map from grouplike tensors to exponential coordinates.
pub fn group_from_tensor(x: &TruncatedTensor, basis: &Arc<HallBasis>) -> Result<GroupElement> {
    let l = x.log()?;
    Ok(GroupElement {
        coords: tensor_to_log_coords(&l, basis)?,
    })
}

/// Jacobian of `x ↦ x * u` at `x`, by central differences.
pub fn right_translation_jacobian(x: &GroupElement, u: &GroupElement) -> Result<DMatrix<f64>> {
    x.check_basis(u)?;
    let n = x.len();
    let right = group_to_tensor(u);
    let eval = |c: Vec<f64>| -> Result<Vec<f64>> {
        let p = GroupElement::new(x.basis().clone(), c)?;
        let t = group_to_tensor(&p).mul(&right)?;
        Ok(group_from_tensor(&t, x.basis())?.coords().to_vec())
    };
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut plus = x.coords().to_vec();
        let mut minus = x.coords().to_vec();
        plus[j] += JACOBIAN_STEP;
        minus[j] -= JACOBIAN_STEP;
        let fp = eval(plus)?;
        let fm = eval(minus)?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * JACOBIAN_STEP);
        }
    }
    Ok(jac)
}
