use crate::error::{Error, Result};
use crate::fields::grid::Grid;
use serde::{Deserialize, Serialize};

/// Scalar values on the nodes of a [`Grid`], x index fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        ScalarField {
            grid: grid.clone(),
            data: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            data: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let mut data = vec![0.0; grid.len()];
        for k in 0..grid.dims[2] {
            for j in 0..grid.dims[1] {
                for i in 0..grid.dims[0] {
                    let p = grid.position(i, j, k);
                    data[grid.idx(i, j, k)] = f(p[0], p[1], p[2]);
                }
            }
        }
        ScalarField {
            grid: grid.clone(),
            data,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.idx(i, j, k)]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Domain integral with the h^3 quadrature weight.
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }
}

/// Three-component vector values on the nodes of a [`Grid`].
///
/// Stored component-major: `comps[d]` holds component d on the whole grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub grid: Grid,
    pub comps: [Vec<f64>; 3],
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            grid: grid.clone(),
            comps: [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]],
        }
    }

    pub fn constant(grid: &Grid, value: [f64; 3]) -> Self {
        VectorField {
            grid: grid.clone(),
            comps: [
                vec![value[0]; grid.len()],
                vec![value[1]; grid.len()],
                vec![value[2]; grid.len()],
            ],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64, f64) -> [f64; 3]) -> Self {
        let mut out = VectorField::zeros(grid);
        for k in 0..grid.dims[2] {
            for j in 0..grid.dims[1] {
                for i in 0..grid.dims[0] {
                    let p = grid.position(i, j, k);
                    let v = f(p[0], p[1], p[2]);
                    let idx = grid.idx(i, j, k);
                    for d in 0..3 {
                        out.comps[d][idx] = v[d];
                    }
                }
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let idx = self.grid.idx(i, j, k);
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]]
    }

    pub fn mean(&self) -> [f64; 3] {
        let n = self.grid.len() as f64;
        [
            self.comps[0].iter().sum::<f64>() / n,
            self.comps[1].iter().sum::<f64>() / n,
            self.comps[2].iter().sum::<f64>() / n,
        ]
    }

    /// Pointwise maximum Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        let mut m = 0.0_f64;
        for idx in 0..self.grid.len() {
            let v = self.comps[0][idx] * self.comps[0][idx]
                + self.comps[1][idx] * self.comps[1][idx]
                + self.comps[2][idx] * self.comps[2][idx];
            m = m.max(v);
        }
        m.sqrt()
    }

    /// L2 norm with the h^3 quadrature weight.
    pub fn l2_norm(&self) -> f64 {
        let mut s = 0.0;
        for d in 0..3 {
            s += self.comps[d].iter().map(|v| v * v).sum::<f64>();
        }
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        for d in 0..3 {
            if !self.comps[d].iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(context.to_string()));
            }
        }
        Ok(())
    }
}

/// The micro-porosity field, clamped to `[eps0, 1]` at all times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorosityField {
    pub eps: ScalarField,
    /// Residual porosity of the unresolved solid matrix.
    pub eps0: f64,
}

impl PorosityField {
    pub const DEFAULT_EPS0: f64 = 0.05;

    pub fn new(mut eps: ScalarField, eps0: f64) -> Result<Self> {
        if !(eps0 > 0.0 && eps0 < 1.0) {
            return Err(Error::Parameter(format!("eps0 = {eps0} must lie in (0, 1)")));
        }
        for v in &mut eps.data {
            *v = v.clamp(eps0, 1.0);
        }
        Ok(PorosityField { eps, eps0 })
    }

    pub fn uniform(grid: &Grid, value: f64, eps0: f64) -> Result<Self> {
        Self::new(ScalarField::constant(grid, value), eps0)
    }

    pub fn grid(&self) -> &Grid {
        &self.eps.grid
    }

    /// Mean porosity over the whole domain.
    pub fn mean(&self) -> f64 {
        self.eps.mean()
    }

    /// Re-apply the clamp after an in-place mutation of `eps`.
    pub fn clamp_in_place(&mut self) {
        let eps0 = self.eps0;
        for v in &mut self.eps.data {
            *v = v.clamp(eps0, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn porosity_clamps_on_construction() {
        let g = Grid::new([4, 4, 4], 1.0).unwrap();
        let mut raw = ScalarField::constant(&g, 0.5);
        raw.data[0] = -1.0;
        raw.data[1] = 2.0;
        let p = PorosityField::new(raw, 0.05).unwrap();
        assert_eq!(p.eps.data[0], 0.05);
        assert_eq!(p.eps.data[1], 1.0);
        assert_eq!(p.eps.data[2], 0.5);
    }

    #[test]
    fn porosity_rejects_bad_eps0() {
        let g = Grid::new([4, 4, 4], 1.0).unwrap();
        assert!(PorosityField::uniform(&g, 0.5, 0.0).is_err());
        assert!(PorosityField::uniform(&g, 0.5, 1.0).is_err());
    }

    #[test]
    fn integral_constant_field() {
        let g = Grid::new([4, 4, 4], 0.5).unwrap();
        let f = ScalarField::constant(&g, 2.0);
        let expected = 2.0 * 64.0 * 0.125;
        assert!((f.integral() - expected).abs() < 1e-12);
    }
}
