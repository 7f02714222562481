//! Distance-d triangular color codes cut from the square-octagon (4.8.8) tiling.
//!
//! Tiling coordinates: octagons are centred at `(4i, 4j)` and coloured red when `i + j`
//! is even, green otherwise; squares are centred at `(4i + 2, 4j + 2)` and are blue.
//! Vertices of the tiling are the candidate qubit sites.
//!
//! For `d = 2m + 1` the patch keeps the faces with `x >= 0`, `y >= -4(m - 1)` and
//! `x + y <= 8`, dropping green octagons on `x = 0`, red octagons on the bottom row and
//! squares on the diagonal `x + y = 8`. A site becomes a qubit when at least two kept
//! faces share it. The three faces left with odd weight are the corners; each receives
//! one private site to even it out.
//!
//! Qubits and faces are numbered row-major: top row first (largest `y`), left to right.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gf2::{BitMatrix, BitVec, SolverHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Color {
    R,
    G,
    B,
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Color::R => "R",
            Color::G => "G",
            Color::B => "B",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Face {
    pub id: usize,
    pub color: Color,
    pub qubits: Vec<usize>,
}

impl Face {
    pub fn size(&self) -> usize {
        self.qubits.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorCodeLattice {
    pub distance: usize,
    pub num_qubits: usize,
    pub faces: Vec<Face>,
    /// Qubits on the side of the triangle that touches no blue face.
    pub logical_support: Vec<usize>,
    /// Tiling coordinates of each qubit, for export and plotting.
    pub qubit_coords: Vec<(i32, i32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("code distance must be odd and at least 3, got {0}")]
    InvalidDistance(usize),
}

const OCTAGON: [(i32, i32); 8] = [(2, -1), (2, 1), (1, 2), (-1, 2), (-2, 1), (-2, -1), (-1, -2), (1, -2)];
const SQUARE: [(i32, i32); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

fn tile_color(x: i32, y: i32) -> Option<Color> {
    let (rx, ry) = (x.rem_euclid(4), y.rem_euclid(4));
    match (rx, ry) {
        (0, 0) => Some(if ((x + y) / 4).rem_euclid(2) == 0 { Color::R } else { Color::G }),
        (2, 2) => Some(Color::B),
        _ => None,
    }
}

fn tile_vertices(x: i32, y: i32, color: Color) -> Vec<(i32, i32)> {
    let offsets: &[(i32, i32)] = if color == Color::B { &SQUARE } else { &OCTAGON };
    offsets.iter().map(|&(dx, dy)| (x + dx, y + dy)).collect()
}

fn row_major(a: &(i32, i32), b: &(i32, i32)) -> std::cmp::Ordering {
    (-a.1, a.0).cmp(&(-b.1, b.0))
}

pub fn build_488_triangular(d: usize) -> Result<ColorCodeLattice, LatticeError> {
    if d < 3 || d % 2 == 0 {
        return Err(LatticeError::InvalidDistance(d));
    }
    let m = ((d - 1) / 2) as i32;
    let bottom = -4 * (m - 1);

    let mut tiles: Vec<((i32, i32), Color)> = Vec::new();
    for y in (bottom..=8).rev() {
        for x in 0..=(8 - bottom) {
            let Some(color) = tile_color(x, y) else { continue };
            let keep = x + y <= 8
                && !(x + y == 8 && color == Color::B)
                && !(x == 0 && color == Color::G)
                && !(y == bottom && color == Color::R);
            if keep {
                tiles.push(((x, y), color));
            }
        }
    }

    let mut multiplicity: BTreeMap<(i32, i32), usize> = BTreeMap::new();
    for &((x, y), c) in &tiles {
        for v in tile_vertices(x, y, c) {
            *multiplicity.entry(v).or_default() += 1;
        }
    }
    let mut sites: Vec<(i32, i32)> =
        multiplicity.iter().filter(|(_, &n)| n >= 2).map(|(&v, _)| v).collect();
    for &((x, y), c) in &tiles {
        let verts = tile_vertices(x, y, c);
        let weight = verts.iter().filter(|v| multiplicity[v] >= 2).count();
        if weight % 2 == 1 {
            let corner = verts.into_iter().find(|v| multiplicity[v] == 1).expect("corner site");
            sites.push(corner);
        }
    }
    sites.sort_by(row_major);
    let index: BTreeMap<(i32, i32), usize> = sites.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let mut faces = Vec::new();
    for &((x, y), color) in &tiles {
        let qubits: Vec<usize> =
            tile_vertices(x, y, color).iter().filter_map(|v| index.get(v).copied()).collect();
        if !qubits.is_empty() {
            faces.push(Face { id: faces.len(), color, qubits });
        }
    }

    let num_qubits = sites.len();
    let mut touches_blue = vec![false; num_qubits];
    for f in faces.iter().filter(|f| f.color == Color::B) {
        for &q in &f.qubits {
            touches_blue[q] = true;
        }
    }
    let logical_support = (0..num_qubits).filter(|&q| !touches_blue[q]).collect();

    Ok(ColorCodeLattice { distance: d, num_qubits, faces, logical_support, qubit_coords: sites })
}

impl ColorCodeLattice {
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Face–qubit incidence matrix (faces × qubits).
    pub fn incidence(&self) -> BitMatrix {
        let supports: Vec<Vec<usize>> = self.faces.iter().map(|f| f.qubits.clone()).collect();
        BitMatrix::from_row_supports(self.num_qubits, &supports)
    }

    /// Faces containing each qubit, in ascending face order.
    pub fn qubit_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_qubits];
        for f in &self.faces {
            for &q in &f.qubits {
                out[q].push(f.id);
            }
        }
        out
    }

    pub fn logical_vector(&self) -> BitVec {
        BitVec::from_indices(self.num_qubits, self.logical_support.iter().copied())
    }

    pub fn face_vector(&self, face: usize) -> BitVec {
        BitVec::from_indices(self.num_qubits, self.faces[face].qubits.iter().copied())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "distance": self.distance,
            "num_qubits": self.num_qubits,
            "faces": self.faces.iter().map(|f| serde_json::json!({
                "id": f.id,
                "color": f.color.to_string(),
                "qubits": f.qubits,
            })).collect::<Vec<_>>(),
            "logical_support": self.logical_support,
            "qubit_coords": self.qubit_coords.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn status(&self, name: &str) -> Option<CheckStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }

    fn push(&mut self, name: &'static str, ok: bool, detail: String) {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        self.checks.push(Check { name, status, detail });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{:<22} {:?}  {}", c.name, c.status, c.detail)?;
        }
        Ok(())
    }
}

/// Largest face count for which `validate` brute-forces the code distance.
pub const DISTANCE_CHECK_MAX_FACES: usize = 20;

pub fn validate(lattice: &ColorCodeLattice) -> ValidationReport {
    let mut report = ValidationReport { checks: Vec::new() };
    let n = lattice.num_qubits;
    let d = lattice.distance;

    let expected_n = (d * d + 2 * d - 1) / 2;
    report.push(
        "counts",
        n == expected_n && lattice.num_faces() == (n.saturating_sub(1)) / 2,
        format!("N={n} (expect {expected_n}), faces={}", lattice.num_faces()),
    );

    let in_range = lattice.faces.iter().all(|f| f.qubits.iter().all(|&q| q < n));
    let dup_free = lattice.faces.iter().all(|f| {
        let mut q = f.qubits.clone();
        q.sort_unstable();
        q.dedup();
        q.len() == f.qubits.len()
    });
    report.push("faces_well_formed", in_range && dup_free, "qubit indices in range and distinct".into());

    let qubit_faces = if in_range { lattice.qubit_faces() } else { vec![Vec::new(); n] };
    let max_deg = qubit_faces.iter().map(Vec::len).max().unwrap_or(0);
    report.push("qubit_degree", max_deg <= 3, format!("max faces per qubit = {max_deg}"));

    let even = lattice.faces.iter().all(|f| f.size() > 0 && f.size() % 2 == 0);
    let interior_ok = lattice
        .faces
        .iter()
        .filter(|f| f.qubits.iter().all(|&q| qubit_faces[q].len() == 3))
        .all(|f| f.size() == 4 || f.size() == 8);
    report.push("face_sizes", even && interior_ok, "even sizes; interior faces of size 4 or 8".into());

    let vectors: Vec<BitVec> = lattice
        .faces
        .iter()
        .map(|f| BitVec::from_indices(n, f.qubits.iter().copied().filter(|&q| q < n)))
        .collect();
    let mut bad_overlap = None;
    let mut bad_color = None;
    for i in 0..vectors.len() {
        for j in 0..i {
            let shared = vectors[i].and_count(&vectors[j]);
            if shared != 0 && shared != 2 && bad_overlap.is_none() {
                bad_overlap = Some((j, i, shared));
            }
            if shared != 0 && lattice.faces[i].color == lattice.faces[j].color && bad_color.is_none() {
                bad_color = Some((j, i));
            }
        }
    }
    report.push(
        "overlaps",
        bad_overlap.is_none(),
        match bad_overlap {
            None => "every pair shares 0 or 2 qubits".into(),
            Some((a, b, s)) => format!("faces {a} and {b} share {s} qubits"),
        },
    );
    report.push(
        "coloring",
        bad_color.is_none(),
        match bad_color {
            None => "adjacent faces have distinct colors".into(),
            Some((a, b)) => format!("faces {a} and {b} share qubits and a color"),
        },
    );

    let rank = SolverHandle::new(&BitMatrix::from_rows(n, &vectors)).rank();
    report.push(
        "rank",
        n % 2 == 1 && rank == (n - 1) / 2,
        format!("rank {rank}, expect (N-1)/2 = {}", n.saturating_sub(1) / 2),
    );

    let logical = BitVec::from_indices(n, lattice.logical_support.iter().copied().filter(|&q| q < n));
    let commutes = vectors.iter().all(|v| !v.dot(&logical));
    report.push(
        "logical_commutes",
        commutes && logical.count_ones() % 2 == 1,
        format!("|support|={}, even overlap with every face", logical.count_ones()),
    );

    if lattice.num_faces() <= DISTANCE_CHECK_MAX_FACES && n <= 64 {
        let w = min_logical_weight(&vectors, &logical);
        report.push("distance", w == d, format!("minimum logical weight {w}, expect {d}"));
    } else {
        report.checks.push(Check {
            name: "distance",
            status: CheckStatus::Skipped,
            detail: format!("{} faces exceeds brute-force limit", lattice.num_faces()),
        });
    }
    report
}

/// Minimum weight over `logical + span(faces)` by Gray-code enumeration.
/// Requires at most 64 qubits.
pub fn min_logical_weight(faces: &[BitVec], logical: &BitVec) -> usize {
    let to_mask = |v: &BitVec| v.words().first().copied().unwrap_or(0);
    let masks: Vec<u64> = faces.iter().map(to_mask).collect();
    let mut cur = to_mask(logical);
    let mut best = cur.count_ones();
    for i in 1u64..(1u64 << masks.len()) {
        cur ^= masks[i.trailing_zeros() as usize];
        best = best.min(cur.count_ones());
    }
    best as usize
}
