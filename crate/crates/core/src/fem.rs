//! P1 finite element operators on a [`Mesh`] and the discrete integrals built on them.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::sparse::{dot, CsrMatrix};

/// Nodal coefficients of a P1 function, tied to the mesh it was built on.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
    mesh_id: u64,
}

impl NodalField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        Self::with_mesh_id(mesh.id(), mesh.n_vertices(), values)
    }

    pub(crate) fn with_mesh_id(mesh_id: u64, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n {
            return Err(Error::DimensionMismatch { context: "nodal field", expected: n, actual: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("nodal field value at vertex {i}")));
        }
        Ok(NodalField { values, mesh_id })
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        NodalField { values: vec![c; mesh.n_vertices()], mesh_id: mesh.id() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_same_mesh(&self, other: &NodalField) -> Result<()> {
        if self.mesh_id != other.mesh_id {
            return Err(Error::MeshMismatch { left: self.mesh_id, right: other.mesh_id });
        }
        Ok(())
    }

    pub fn sub(&self, other: &NodalField) -> Result<NodalField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &NodalField) -> Result<NodalField> {
        self.zip_with(other, |a, b| a + b)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &NodalField) -> Result<NodalField> {
        self.zip_with(other, |a, b| a + s * b)
    }

    pub fn scale(&self, s: f64) -> NodalField {
        NodalField { values: self.values.iter().map(|v| s * v).collect(), mesh_id: self.mesh_id }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn zip_with(&self, other: &NodalField, op: impl Fn(f64, f64) -> f64) -> Result<NodalField> {
        self.check_same_mesh(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect();
        Ok(NodalField { values, mesh_id: self.mesh_id })
    }
}

fn gradients(p: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [(p[j][1] - p[k][1]) / area2, (p[k][0] - p[j][0]) / area2];
    }
    (g, 0.5 * area2)
}

fn assemble(mesh: &Mesh, local: impl Fn([Point; 3]) -> [[f64; 3]; 3]) -> Result<CsrMatrix> {
    let n = mesh.n_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for tri in mesh.triangles() {
        let p = tri.map(|v| mesh.vertices()[v]);
        let ke = local(p);
        for a in 0..3 {
            for b in 0..3 {
                triplets.push((tri[a], tri[b], ke[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Element mass matrix of a P1 triangle: `A/6` on the diagonal, `A/12` off it.
pub fn local_mass(p: [Point; 3]) -> [[f64; 3]; 3] {
    let (_, area) = gradients(p);
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

pub fn local_stiffness(p: [Point; 3]) -> [[f64; 3]; 3] {
    let (g, area) = gradients(p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

/// Consistent P1 mass matrix.
pub fn assemble_mass(mesh: &Mesh) -> Result<CsrMatrix> {
    assemble(mesh, local_mass)
}

/// P1 stiffness matrix with natural (homogeneous Neumann) boundary conditions.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<CsrMatrix> {
    assemble(mesh, local_stiffness)
}

pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Result<NodalField> {
    let values: Vec<f64> = mesh.vertices().iter().map(|&p| f(p)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("interpolated function at vertex {i}")));
    }
    Ok(NodalField { values, mesh_id: mesh.id() })
}

fn check_operator(op: &CsrMatrix, a: &NodalField) -> Result<()> {
    if op.n_rows() != a.len() || op.n_cols() != a.len() {
        return Err(Error::DimensionMismatch { context: "operator vs field", expected: op.n_rows(), actual: a.len() });
    }
    Ok(())
}

/// `a^T M b`, the discrete `\int a b`.
pub fn integral_product(mass: &CsrMatrix, a: &NodalField, b: &NodalField) -> Result<f64> {
    a.check_same_mesh(b)?;
    check_operator(mass, a)?;
    let mb = mass.spmv(b.values())?;
    Ok(dot(a.values(), &mb))
}

fn quadratic_form(op: &CsrMatrix, a: &NodalField) -> Result<f64> {
    check_operator(op, a)?;
    // Clamp roundoff below zero for fields near the kernel.
    Ok(op.bilinear(a.values(), a.values())?.max(0.0))
}

pub fn l2_norm(mass: &CsrMatrix, a: &NodalField) -> Result<f64> {
    Ok(quadratic_form(mass, a)?.sqrt())
}

pub fn h1_seminorm(stiffness: &CsrMatrix, a: &NodalField) -> Result<f64> {
    Ok(quadratic_form(stiffness, a)?.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn mass_entry_sum_is_area() {
        for n in [1, 2, 3, 8, 25] {
            let mesh = build_mesh(n).unwrap();
            let m = assemble_mass(&mesh).unwrap();
            let sum: f64 = m.values().iter().sum();
            assert!((sum - 4.0).abs() <= 4e-12, "n={n} sum={sum}");
            assert!(m.is_symmetric(1e-12));
        }
    }

    #[test]
    fn reference_triangle_mass() {
        let p = [[0.0, 0.0], [3.0, 0.0], [0.0, 2.0]];
        let area = 3.0;
        let m = local_mass(p);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { area / 6.0 } else { area / 12.0 };
                assert!((m[i][j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_kernel_and_linear_energy() {
        for n in [1, 2, 4, 17] {
            let mesh = build_mesh(n).unwrap();
            let k = assemble_stiffness(&mesh).unwrap();
            let k1 = k.spmv(&vec![1.0; mesh.n_vertices()]).unwrap();
            assert!(k1.iter().all(|v| v.abs() <= 1e-12));
            let x1 = interpolate(&mesh, |p| p[0]).unwrap();
            let e = k.bilinear(x1.values(), x1.values()).unwrap();
            assert!((e - 4.0).abs() < 1e-12, "n={n} e={e}");
        }
    }

    #[test]
    fn stiffness_psd_on_smallest_mesh() {
        let mesh = build_mesh(1).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        assert!(k.is_symmetric(1e-12));
        let eig = symmetric_eigenvalues(k.to_dense());
        assert!(eig.iter().all(|&l| l >= -1e-12), "{eig:?}");
    }

    // Cyclic Jacobi rotations; fine for 4x4.
    fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).collect()
    }

    #[test]
    fn interpolation_examples() {
        let mesh = build_mesh(100).unwrap();
        assert!(interpolate(&mesh, |_| 0.0).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(interpolate(&mesh, |_| 2.5).unwrap().values().iter().all(|&v| v == 2.5));

        let r = 0.125;
        let ch = 32.0 / std::f64::consts::PI;
        let f = interpolate(&mesh, |p| if p[0].hypot(p[1]) <= r { ch } else { 0.0 }).unwrap();
        for (v, &val) in mesh.vertices().iter().zip(f.values()) {
            let inside = v[0] * v[0] + v[1] * v[1] <= r * r + 1e-12;
            assert_eq!(val != 0.0, inside, "vertex {v:?}");
        }
        assert!(interpolate(&mesh, |_| f64::NAN).is_err());
    }

    #[test]
    fn integral_examples() {
        let mesh = build_mesh(2).unwrap();
        let m = assemble_mass(&mesh).unwrap();
        let one = NodalField::constant(&mesh, 1.0);
        let zero = NodalField::zeros(&mesh);
        let x1 = interpolate(&mesh, |p| p[0]).unwrap();
        assert!((integral_product(&m, &one, &one).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(integral_product(&m, &x1, &zero).unwrap(), 0.0);
        let h = mesh.h();
        let v = integral_product(&m, &x1, &x1).unwrap();
        assert!((v - 4.0 / 3.0).abs() <= h * h, "{v}");
    }

    #[test]
    fn norms() {
        let mesh = build_mesh(16).unwrap();
        let m = assemble_mass(&mesh).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        assert_eq!(l2_norm(&m, &NodalField::zeros(&mesh)).unwrap(), 0.0);
        assert!((l2_norm(&m, &NodalField::constant(&mesh, 1.0)).unwrap() - 2.0).abs() < 1e-13);
        let x1 = interpolate(&mesh, |p| p[0]).unwrap();
        let h = mesh.h();
        assert!((l2_norm(&m, &x1).unwrap() - (4.0f64 / 3.0).sqrt()).abs() <= h * h);
        assert!(h1_seminorm(&k, &NodalField::constant(&mesh, -3.0)).unwrap() < 1e-6);
        assert!((h1_seminorm(&k, &x1).unwrap() - 2.0).abs() < 1e-12);
        let xy = interpolate(&mesh, |p| p[0] + p[1]).unwrap();
        assert!((h1_seminorm(&k, &xy).unwrap() - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mesh_mismatch_rejected() {
        let a = build_mesh(2).unwrap();
        let b = build_mesh(2).unwrap();
        let m = assemble_mass(&a).unwrap();
        let fa = NodalField::constant(&a, 1.0);
        let fb = NodalField::constant(&b, 1.0);
        assert!(matches!(integral_product(&m, &fa, &fb), Err(Error::MeshMismatch { .. })));
        let big = NodalField::constant(&build_mesh(3).unwrap(), 1.0);
        assert!(matches!(l2_norm(&m, &big), Err(Error::DimensionMismatch { .. })));
    }
}
