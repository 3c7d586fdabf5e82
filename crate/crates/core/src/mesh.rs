//! Structured triangulation of the square `(-1, 1) x (-1, 1)`.
//!
//! Vertices are numbered row-major with `x1` running fastest. Every grid cell
//! is split along its lower-left to upper-right diagonal, and both triangles
//! are stored counterclockwise.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone)]
pub struct Mesh {
    id: u64,
    n_div: usize,
    side: f64,
    origin: Point,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

/// Uniform mesh of `[-1, 1]^2` with `n_div` cells per side.
pub fn build_mesh(n_div: usize) -> Result<Mesh> {
    Mesh::square(n_div, 2.0, [-1.0, -1.0])
}

impl Mesh {
    pub fn square(n_div: usize, side: f64, origin: Point) -> Result<Self> {
        if n_div == 0 {
            return Err(Error::InvalidMesh("n_div must be at least 1".into()));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidMesh(format!("side must be positive, got {side}")));
        }
        let np = n_div + 1;
        let h = side / n_div as f64;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                // Pin the last row/column to the exact boundary.
                let x = if i == n_div { origin[0] + side } else { origin[0] + i as f64 * h };
                let y = if j == n_div { origin[1] + side } else { origin[1] + j as f64 * h };
                vertices.push([x, y]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n_div * n_div);
        for j in 0..n_div {
            for i in 0..n_div {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Ok(Mesh {
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            n_div,
            side,
            origin,
            vertices,
            triangles,
        })
    }

    /// Process-unique identifier; fields carry it to detect cross-mesh mixing.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_div(&self) -> usize {
        self.n_div
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    /// Spatial step `side / n_div`.
    pub fn h(&self) -> f64 {
        self.side / self.n_div as f64
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_coordinates(&self, index: usize) -> Result<Point> {
        self.vertices.get(index).copied().ok_or(Error::IndexOutOfRange {
            index,
            len: self.vertices.len(),
        })
    }

    /// Vertex index of grid node `(i, j)`, `i` along `x1`.
    pub fn grid_index(&self, i: usize, j: usize) -> usize {
        j * (self.n_div + 1) + i
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Undirected edges with the number of triangles sharing each one.
    pub fn edges(&self) -> Vec<([usize; 2], usize)> {
        let mut all: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .map(|[p, q]| if p < q { [p, q] } else { [q, p] })
            .collect();
        all.sort_unstable();
        let mut out: Vec<([usize; 2], usize)> = Vec::new();
        for e in all {
            match out.last_mut() {
                Some((last, count)) if *last == e => *count += 1,
                _ => out.push((e, 1)),
            }
        }
        out
    }

    /// Permutation mapping vertex `(i, j)` to `(j, i)` (reflection across `x1 = x2`).
    pub fn transpose_permutation(&self) -> Vec<usize> {
        let np = self.n_div + 1;
        (0..np * np).map(|v| self.grid_index(v / np, v % np)).collect()
    }
}
