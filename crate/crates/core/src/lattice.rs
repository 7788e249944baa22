//! Triangular spin lattices.
//!
//! Sites live on a triangular Bravais lattice with unit lattice constant. A
//! hexagon-shaped patch with `n_shells` rings around a central site holds
//! `1 + 3 n (n + 1)` sites. Sites are indexed row by row from the top row
//! (largest `y`) downward, left to right inside a row, so the centre of the
//! 19-site patch is site 9.
//!
//! Every bond points along one of the three global directions `+x`, `+60°`
//! or `+120°`, and carries the Néel-type DMI axis `ẑ × r̂`.
//!
//! Periodic patches are wrapped onto a torus spanned by `T1 = (n+1) a1 + n a2`
//! and its 60° rotation, which tiles the plane with copies of the hexagon and
//! gives every site coordination six.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Axial steps for the three bond orientations: +x, +60°, +120°.
const BOND_STEPS: [(i32, i32); 3] = [(1, 0), (0, 1), (-1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    #[serde(rename = "PBC", alias = "pbc")]
    Periodic,
    #[serde(rename = "OBC", alias = "obc")]
    Open,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => write!(f, "PBC"),
            Boundary::Open => write!(f, "OBC"),
        }
    }
}

/// An oriented nearest-neighbour bond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    /// Unit vector from `i` to `j`.
    #[serde(rename = "dir")]
    pub direction: [f64; 2],
    /// Unit DMI axis, in plane and perpendicular to `direction`.
    pub dmi: [f64; 3],
}

impl Bond {
    pub fn new(i: usize, j: usize, direction: [f64; 2]) -> Self {
        Bond {
            i,
            j,
            direction,
            dmi: dmi_vector(direction),
        }
    }

    /// Same physical bond stored with the opposite orientation.
    pub fn reversed(&self) -> Self {
        Bond {
            i: self.j,
            j: self.i,
            direction: [-self.direction[0], -self.direction[1]],
            dmi: [-self.dmi[0], -self.dmi[1], -self.dmi[2]],
        }
    }
}

/// Néel-type DMI axis `ẑ × r̂` for an in-plane bond direction.
pub fn dmi_vector(direction: [f64; 2]) -> [f64; 3] {
    [-direction[1], direction[0], 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinLattice {
    positions: Vec<[f64; 2]>,
    bonds: Vec<Bond>,
    triangles: Vec<[usize; 3]>,
    boundary: Boundary,
    center_index: usize,
    /// Shell count for hexagonal patches, `None` for other shapes.
    n_shells: Option<usize>,
}

impl SpinLattice {
    /// Assemble a lattice from explicit parts. Bonds and triangles are
    /// checked for index range and duplicates.
    pub fn from_parts(
        positions: Vec<[f64; 2]>,
        bonds: Vec<Bond>,
        triangles: Vec<[usize; 3]>,
        boundary: Boundary,
    ) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(contract("lattice needs at least one site"));
        }
        if n > 30 {
            return Err(contract(format!("{n} sites exceed the 30-site limit")));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &bonds {
            if b.i >= n || b.j >= n {
                return Err(contract(format!("bond ({}, {}) out of range", b.i, b.j)));
            }
            if b.i == b.j {
                return Err(contract(format!("self bond on site {}", b.i)));
            }
            if !seen.insert((b.i.min(b.j), b.i.max(b.j))) {
                return Err(contract(format!("duplicate bond ({}, {})", b.i, b.j)));
            }
        }
        if triangles.iter().flatten().any(|&s| s >= n) {
            return Err(contract("triangle site out of range"));
        }
        let center_index = nearest_to_centroid(&positions);
        Ok(SpinLattice {
            positions,
            bonds,
            triangles,
            boundary,
            center_index,
            n_shells: None,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.positions.len()
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_sites()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// Counter-clockwise elementary triangles `(i, j, k)`.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn center_index(&self) -> usize {
        self.center_index
    }

    pub fn n_shells(&self) -> Option<usize> {
        self.n_shells
    }

    pub fn coordination(&self, site: usize) -> usize {
        self.bonds
            .iter()
            .filter(|b| b.i == site || b.j == site)
            .count()
    }

    /// Copy of the lattice with every bond stored in the opposite orientation.
    pub fn with_reversed_bonds(&self) -> Self {
        let mut out = self.clone();
        out.bonds = self.bonds.iter().map(Bond::reversed).collect();
        out
    }

    /// Edge-to-edge path through the centre. On the 19-site patch this is
    /// `1 - 4 - 9 - 14 - 18`.
    pub fn diagonal_path(&self) -> Vec<usize> {
        let Some(n) = self.n_shells else {
            return self.fallback_path();
        };
        if n == 0 {
            return vec![0];
        }
        let lookup: HashMap<(i32, i32), usize> = hex_sites(n)
            .into_iter()
            .enumerate()
            .map(|(idx, p)| (p, idx))
            .collect();
        let n = n as i32;
        // up-left n-1 times, then one up-right step, then reverse
        let mut upper = Vec::new();
        let mut p = (0, 0);
        for _ in 0..n - 1 {
            p = (p.0 - 1, p.1 + 1);
            upper.push(p);
        }
        upper.push((p.0, p.1 + 1));
        upper.reverse();
        let mut path: Vec<usize> = upper.iter().map(|p| lookup[p]).collect();
        path.push(lookup[&(0, 0)]);
        for step in 1..=n {
            path.push(lookup[&(step, -step)]);
        }
        path
    }

    fn fallback_path(&self) -> Vec<usize> {
        // sites along the line through the centre at -60°, ordered top to bottom
        let c = self.positions[self.center_index];
        let axis = [0.5, -SQRT3_2];
        let mut on_line: Vec<(f64, usize)> = self
            .positions
            .iter()
            .enumerate()
            .filter_map(|(idx, p)| {
                let d = [p[0] - c[0], p[1] - c[1]];
                let cross = d[0] * axis[1] - d[1] * axis[0];
                (cross.abs() < 1e-9).then(|| (d[0] * axis[0] + d[1] * axis[1], idx))
            })
            .collect();
        on_line.sort_by(|a, b| a.0.total_cmp(&b.0));
        on_line.into_iter().map(|(_, idx)| idx).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sites": self.positions,
            "bonds": self.bonds,
            "boundary": self.boundary,
        })
    }
}

fn nearest_to_centroid(positions: &[[f64; 2]]) -> usize {
    let n = positions.len() as f64;
    let cx = positions.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = positions.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (idx, p) in positions.iter().enumerate() {
        let d = (p[0] - cx).powi(2) + (p[1] - cy).powi(2);
        if d < best_d - 1e-12 {
            best = idx;
            best_d = d;
        }
    }
    best
}

fn axial_to_cartesian((q, r): (i32, i32)) -> [f64; 2] {
    [q as f64 + 0.5 * r as f64, SQRT3_2 * r as f64]
}

fn step_direction(step: (i32, i32)) -> [f64; 2] {
    axial_to_cartesian(step)
}

/// Axial coordinates of the hexagonal patch in row-major order.
fn hex_sites(n_shells: usize) -> Vec<(i32, i32)> {
    let n = n_shells as i32;
    let mut sites = Vec::with_capacity(1 + 3 * n_shells * (n_shells + 1));
    for r in (-n..=n).rev() {
        for q in -n..=n {
            if (q + r).abs() <= n {
                sites.push((q, r));
            }
        }
    }
    sites
}

/// Hexagon-shaped triangular patch with `n_shells` rings around the centre.
pub fn build_triangular(n_shells: usize, boundary: Boundary) -> SpinLattice {
    let sites = hex_sites(n_shells);
    let lookup: HashMap<(i32, i32), usize> =
        sites.iter().enumerate().map(|(idx, &p)| (p, idx)).collect();
    let n = n_shells as i32;
    let t1 = (n + 1, n);
    let t2 = (-t1.1, t1.0 + t1.1);

    let resolve = |p: (i32, i32)| -> Option<usize> {
        if let Some(&idx) = lookup.get(&p) {
            return Some(idx);
        }
        if boundary == Boundary::Open {
            return None;
        }
        for k1 in -2..=2 {
            for k2 in -2..=2 {
                let w = (p.0 + k1 * t1.0 + k2 * t2.0, p.1 + k1 * t1.1 + k2 * t2.1);
                if let Some(&idx) = lookup.get(&w) {
                    return Some(idx);
                }
            }
        }
        None
    };

    let mut bonds = Vec::new();
    for (i, &p) in sites.iter().enumerate() {
        for &step in &BOND_STEPS {
            if let Some(j) = resolve((p.0 + step.0, p.1 + step.1)) {
                if j != i {
                    bonds.push(Bond::new(i, j, step_direction(step)));
                }
            }
        }
    }

    let mut triangles = Vec::new();
    for (i, &p) in sites.iter().enumerate() {
        // up triangle (p, p+a1, p+a2) and down triangle (p, p+a2, p+a2-a1)
        for (s1, s2) in [((1, 0), (0, 1)), ((0, 1), (-1, 1))] {
            let j = resolve((p.0 + s1.0, p.1 + s1.1));
            let k = resolve((p.0 + s2.0, p.1 + s2.1));
            if let (Some(j), Some(k)) = (j, k) {
                if i != j && j != k && i != k {
                    triangles.push([i, j, k]);
                }
            }
        }
    }

    SpinLattice {
        positions: sites.iter().map(|&p| axial_to_cartesian(p)).collect(),
        bonds,
        triangles,
        boundary,
        center_index: lookup[&(0, 0)],
        n_shells: Some(n_shells),
    }
}

/// Open parallelogram patch of `rows × cols` sites spanned by `+x` and `+60°`.
/// Used for cluster sizes the hexagon family does not reach (2, 8, 10, 12, ...).
pub fn build_parallelogram(rows: usize, cols: usize) -> Result<SpinLattice> {
    if rows == 0 || cols == 0 {
        return Err(contract("parallelogram needs at least one row and column"));
    }
    let mut coords = Vec::with_capacity(rows * cols);
    for r in (0..rows as i32).rev() {
        for q in 0..cols as i32 {
            coords.push((q, r));
        }
    }
    let lookup: HashMap<(i32, i32), usize> =
        coords.iter().enumerate().map(|(idx, &p)| (p, idx)).collect();
    let mut bonds = Vec::new();
    for (i, &p) in coords.iter().enumerate() {
        for &step in &BOND_STEPS {
            if let Some(&j) = lookup.get(&(p.0 + step.0, p.1 + step.1)) {
                bonds.push(Bond::new(i, j, step_direction(step)));
            }
        }
    }
    let mut triangles = Vec::new();
    for (i, &p) in coords.iter().enumerate() {
        for (s1, s2) in [((1, 0), (0, 1)), ((0, 1), (-1, 1))] {
            let j = lookup.get(&(p.0 + s1.0, p.1 + s1.1));
            let k = lookup.get(&(p.0 + s2.0, p.1 + s2.1));
            if let (Some(&j), Some(&k)) = (j, k) {
                triangles.push([i, j, k]);
            }
        }
    }
    SpinLattice::from_parts(
        coords.iter().map(|&p| axial_to_cartesian(p)).collect(),
        bonds,
        triangles,
        Boundary::Open,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// Unit-distance pairs by exhaustive search, with periodic images when
    /// wrap vectors are given.
    fn brute_force_bonds(pos: &[[f64; 2]], wraps: &[[f64; 2]]) -> usize {
        let mut count = 0;
        for a in 0..pos.len() {
            for b in a + 1..pos.len() {
                let mut hit = (dist(pos[a], pos[b]) - 1.0).abs() < 1e-9;
                for k1 in -2i32..=2 {
                    for k2 in -2i32..=2 {
                        if wraps.is_empty() {
                            continue;
                        }
                        let shift = [
                            k1 as f64 * wraps[0][0] + k2 as f64 * wraps[1][0],
                            k1 as f64 * wraps[0][1] + k2 as f64 * wraps[1][1],
                        ];
                        let img = [pos[b][0] + shift[0], pos[b][1] + shift[1]];
                        hit |= (dist(pos[a], img) - 1.0).abs() < 1e-9;
                    }
                }
                if hit {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn single_site_has_no_bonds() {
        let lat = build_triangular(0, Boundary::Open);
        assert_eq!(lat.n_sites(), 1);
        assert!(lat.bonds().is_empty());
        let lat = build_triangular(0, Boundary::Periodic);
        assert!(lat.bonds().is_empty());
    }

    #[test]
    fn nineteen_site_obc_matches_brute_force() {
        let lat = build_triangular(2, Boundary::Open);
        assert_eq!(lat.n_sites(), 19);
        assert_eq!(lat.bonds().len(), 42);
        assert_eq!(brute_force_bonds(lat.positions(), &[]), 42);
        assert_eq!(lat.center_index(), 9);
        assert!(lat.coordination(0) < lat.coordination(9));
    }

    #[test]
    fn nineteen_site_pbc_matches_brute_force() {
        let lat = build_triangular(2, Boundary::Periodic);
        assert_eq!(lat.bonds().len(), 57);
        let t1 = axial_to_cartesian((3, 2));
        let t2 = axial_to_cartesian((-2, 5));
        assert_eq!(brute_force_bonds(lat.positions(), &[t1, t2]), 57);
        for s in 0..19 {
            assert_eq!(lat.coordination(s), 6);
        }
        assert_eq!(lat.triangles().len(), 38);
    }

    #[test]
    fn site_counts_follow_hexagon_formula() {
        for n in 0..4 {
            for bc in [Boundary::Open, Boundary::Periodic] {
                let lat = build_triangular(n, bc);
                assert_eq!(lat.n_sites(), 1 + 3 * n * (n + 1));
                if bc == Boundary::Periodic && n > 0 {
                    assert_eq!(lat.bonds().len(), 3 * lat.n_sites());
                }
            }
        }
    }

    #[test]
    fn bonds_are_unique_unit_and_neel() {
        for bc in [Boundary::Open, Boundary::Periodic] {
            let lat = build_triangular(2, bc);
            let mut pairs = std::collections::HashSet::new();
            for b in lat.bonds() {
                assert_ne!(b.i, b.j);
                assert!(pairs.insert((b.i.min(b.j), b.i.max(b.j))));
                let dn = (b.direction[0].powi(2) + b.direction[1].powi(2)).sqrt();
                let mn = b.dmi.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((dn - 1.0).abs() < 1e-12 && (mn - 1.0).abs() < 1e-12);
                assert_eq!(b.dmi[2], 0.0);
                let dot = b.dmi[0] * b.direction[0] + b.dmi[1] * b.direction[1];
                assert!(dot.abs() < 1e-12);
                if bc == Boundary::Open {
                    let d = dist(lat.positions()[b.i], lat.positions()[b.j]);
                    assert!((d - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dmi_vector_examples() {
        assert_eq!(dmi_vector([1.0, 0.0]), [0.0, 1.0, 0.0]);
        assert_eq!(dmi_vector([0.0, 1.0]), [-1.0, 0.0, 0.0]);
        let (s, c) = 60f64.to_radians().sin_cos();
        let d = dmi_vector([c, s]);
        assert!((d[0] + s).abs() < 1e-15 && (d[1] - c).abs() < 1e-15 && d[2] == 0.0);
    }

    #[test]
    fn diagonal_paths() {
        assert_eq!(
            build_triangular(2, Boundary::Open).diagonal_path(),
            vec![1, 4, 9, 14, 18]
        );
        assert_eq!(build_triangular(1, Boundary::Open).diagonal_path(), vec![1, 3, 6]);
        let lat = build_triangular(2, Boundary::Open);
        let path = lat.diagonal_path();
        for w in path.windows(2) {
            let d = dist(lat.positions()[w[0]], lat.positions()[w[1]]);
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parallelogram_counts() {
        let lat = build_parallelogram(2, 4).unwrap();
        assert_eq!(lat.n_sites(), 8);
        assert_eq!(lat.bonds().len(), brute_force_bonds(lat.positions(), &[]));
        assert_eq!(lat.triangles().len(), 6);
        let lat = build_parallelogram(1, 2).unwrap();
        assert_eq!(lat.bonds().len(), 1);
        assert_eq!(lat.bonds()[0].direction, [1.0, 0.0]);
    }

    #[test]
    fn json_export_shape() {
        let v = build_triangular(1, Boundary::Periodic).to_json();
        assert_eq!(v["boundary"], "PBC");
        assert_eq!(v["sites"].as_array().unwrap().len(), 7);
        assert_eq!(v["bonds"].as_array().unwrap().len(), 21);
        assert!(v["bonds"][0]["dir"].is_array());
    }
}
