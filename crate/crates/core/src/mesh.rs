//! Two-region 1D grid with a shared interface node at x' = 0.
//!
//! Nodes are vertex-centered. The semiconductor occupies x' < 0, the
//! electrolyte x' > 0, and the interface node belongs to both regions:
//! the potential is single-valued there while density fields are
//! region-local. Each region is geometrically graded so the smallest cell
//! abuts the interface; `grading_ratio` is the max/min cell-width ratio
//! within a region (consecutive cells grow by grading_ratio^(1/(n-1))).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Semiconductor,
    Interface,
    Electrolyte,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingMode {
    Arithmetic,
    Harmonic,
}

#[derive(Debug, Clone)]
pub struct Mesh1D {
    nodes: Vec<f64>,
    /// Face widths h_{i+1/2}; spacings[k] = nodes[k+1] - nodes[k].
    spacings: Vec<f64>,
    interface_index: usize,
}

impl Mesh1D {
    /// Build the graded two-region mesh. Each region gets `n_per_region`
    /// cells (n_per_region + 1 nodes, sharing the interface node).
    pub fn build(
        x_left: f64,
        x_right: f64,
        n_per_region: usize,
        grading_ratio: f64,
    ) -> Result<Self> {
        if !(x_left < 0.0 && 0.0 < x_right) {
            return Err(Error::Config(format!(
                "mesh requires x_left < 0 < x_right, got ({x_left}, {x_right})"
            )));
        }
        if n_per_region < 4 {
            return Err(Error::Config(format!(
                "n_per_region must be at least 4, got {n_per_region}"
            )));
        }
        if !(grading_ratio >= 1.0) {
            return Err(Error::Config(format!(
                "grading_ratio must be >= 1, got {grading_ratio}"
            )));
        }

        let widths_from_interface = |length: f64| -> Vec<f64> {
            let n = n_per_region;
            if grading_ratio == 1.0 {
                return vec![length / n as f64; n];
            }
            let r = grading_ratio.powf(1.0 / (n as f64 - 1.0));
            let h0 = length * (r - 1.0) / (r.powi(n as i32) - 1.0);
            (0..n).map(|k| h0 * r.powi(k as i32)).collect()
        };

        let mut nodes = Vec::with_capacity(2 * n_per_region + 1);
        // Semiconductor: widths grow from the interface toward the contact,
        // so laid out left-to-right they shrink toward x' = 0.
        let mut sw = widths_from_interface(-x_left);
        sw.reverse();
        let mut x = x_left;
        nodes.push(x_left);
        for (k, h) in sw.iter().enumerate() {
            x += h;
            if k + 1 == n_per_region {
                nodes.push(0.0);
            } else {
                nodes.push(x);
            }
        }
        let interface_index = n_per_region;
        let ew = widths_from_interface(x_right);
        let mut x = 0.0;
        for (k, h) in ew.iter().enumerate() {
            x += h;
            if k + 1 == n_per_region {
                nodes.push(x_right);
            } else {
                nodes.push(x);
            }
        }

        let spacings: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        if spacings.iter().any(|&h| h <= 0.0) {
            return Err(Error::Config("degenerate region: nonpositive cell width".into()));
        }
        Ok(Mesh1D { nodes, spacings, interface_index })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of faces between consecutive nodes.
    pub fn num_faces(&self) -> usize {
        self.spacings.len()
    }

    pub fn interface_index(&self) -> usize {
        self.interface_index
    }

    pub fn x_left(&self) -> f64 {
        self.nodes[0]
    }

    pub fn x_right(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Width of face k (between nodes k and k+1).
    pub fn spacing(&self, face: usize) -> f64 {
        self.spacings[face]
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn region(&self, node: usize) -> Region {
        use std::cmp::Ordering::*;
        match node.cmp(&self.interface_index) {
            Less => Region::Semiconductor,
            Equal => Region::Interface,
            Greater => Region::Electrolyte,
        }
    }

    /// Control volume of a node: half the adjacent cell widths, one-sided
    /// at the domain endpoints.
    pub fn control_volume(&self, node: usize) -> f64 {
        let m = self.num_faces();
        if node == 0 {
            0.5 * self.spacings[0]
        } else if node == m {
            0.5 * self.spacings[m - 1]
        } else {
            0.5 * (self.spacings[node - 1] + self.spacings[node])
        }
    }

    /// Semiconductor node range (inclusive of the interface node).
    pub fn semiconductor_nodes(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.interface_index
    }

    /// Electrolyte node range (inclusive of the interface node).
    pub fn electrolyte_nodes(&self) -> std::ops::RangeInclusive<usize> {
        self.interface_index..=self.num_nodes() - 1
    }

    /// Average a nodal field onto face k.
    pub fn face_average(&self, field: &[f64], face: usize, mode: AveragingMode) -> Result<f64> {
        if face >= self.num_faces() {
            return Err(Error::Contract(format!(
                "face {face} out of range ({} interior faces)",
                self.num_faces()
            )));
        }
        let (a, b) = (field[face], field[face + 1]);
        Ok(match mode {
            AveragingMode::Arithmetic => 0.5 * (a + b),
            AveragingMode::Harmonic => 2.0 * a * b / (a + b),
        })
    }

    /// Linear interpolation of a nodal field to an arbitrary coordinate.
    pub fn interpolate(&self, field: &[f64], x: f64) -> f64 {
        debug_assert_eq!(field.len(), self.num_nodes());
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return field[0];
        }
        if x >= self.nodes[n - 1] {
            return field[n - 1];
        }
        let k = match self.nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return field[i],
            Err(i) => i - 1,
        };
        let t = (x - self.nodes[k]) / self.spacings[k];
        field[k] * (1.0 - t) + field[k + 1] * t
    }
}

/// Nodal field bound to a mesh size; values must stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(mesh: &Mesh1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::Contract(format!(
                "field length {} does not match node count {}",
                values.len(),
                mesh.num_nodes()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("field contains non-finite values".into()));
        }
        Ok(Field { values })
    }

    pub fn zeros(mesh: &Mesh1D) -> Self {
        Field { values: vec![0.0; mesh.num_nodes()] }
    }

    pub(crate) fn from_values(values: Vec<f64>) -> Self {
        Field { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl std::ops::Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}
