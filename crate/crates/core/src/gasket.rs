//! Level-n graph approximations of the Sierpinski gasket.
//!
//! Vertices live on the triangular lattice with basis `a1 - a0` and
//! `a2 - a0`, scaled by `2^-n`, so identity is exact integer equality. The
//! three contractions act on level-n coordinates `(a, b)` as
//!
//! ```text
//! f0: (a, b) -> (a, b)
//! f1: (a, b) -> (a + 2^n, b)
//! f2: (a, b) -> (a, b + 2^n)
//! ```
//!
//! producing level-(n+1) coordinates. A level-m cell is the image of the
//! whole gasket under m contractions; its lower-left corner `(alpha, beta)`
//! (in level-m units) has disjoint binary digits, and there are `3^m` of them.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

/// Largest level `build_gasket` accepts.
pub const MAX_GRAPH_LEVEL: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    /// Steps along `a1 - a0`.
    pub a: u32,
    /// Steps along `a2 - a0`.
    pub b: u32,
    pub level: u32,
}

impl Vertex {
    pub fn new(a: u32, b: u32, level: u32) -> Self {
        Self { a, b, level }
    }

    /// Euclidean embedding `((a + b/2), b*sqrt(3)/2) / 2^n`.
    pub fn embed(&self) -> (f64, f64) {
        let scale = (self.level as f64).exp2().recip();
        let (a, b) = (self.a as f64, self.b as f64);
        ((a + 0.5 * b) * scale, b * 3f64.sqrt() * 0.5 * scale)
    }

    /// Euclidean distance, computed from the exact squared lattice norm.
    pub fn distance(&self, other: &Vertex) -> f64 {
        debug_assert_eq!(self.level, other.level);
        let da = self.a as i64 - other.a as i64;
        let db = self.b as i64 - other.b as i64;
        let norm2 = (da * da + da * db + db * db) as f64;
        norm2.sqrt() * (self.level as f64).exp2().recip()
    }
}

/// A cell of side `2^-level`: the image of the gasket under `level`
/// contractions. Corners are `(alpha, beta)`, `(alpha+1, beta)` and
/// `(alpha, beta+1)` in level units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub level: u32,
    pub alpha: u32,
    pub beta: u32,
}

impl Cell {
    /// Corners in the coordinates of a finer level `n >= self.level`.
    pub fn corners_at(&self, n: u32) -> [(u32, u32); 3] {
        let s = 1u32 << (n - self.level);
        let (a, b) = (self.alpha * s, self.beta * s);
        [(a, b), (a + s, b), (a, b + s)]
    }

    fn contains(&self, n: u32, a: u32, b: u32) -> bool {
        let s = 1u32 << (n - self.level);
        let (a0, b0) = (self.alpha * s, self.beta * s);
        a >= a0 && b >= b0 && (a - a0) + (b - b0) <= s
    }

    fn is_valid(&self) -> bool {
        self.alpha & self.beta == 0 && (self.alpha + self.beta) < (1u32 << self.level)
    }
}

/// All `3^m` cells of level `m`, in recursive construction order.
pub fn cells(m: u32) -> Vec<Cell> {
    let mut corners = vec![(0u32, 0u32)];
    for j in 0..m {
        let shift = 1u32 << j;
        let mut next = Vec::with_capacity(corners.len() * 3);
        for &(a, b) in &corners {
            next.push((a, b));
            next.push((a + shift, b));
            next.push((a, b + shift));
        }
        corners = next;
    }
    corners
        .into_iter()
        .map(|(alpha, beta)| Cell { level: m, alpha, beta })
        .collect()
}

/// Vertex coordinates of `V_n`, sorted by `(b, a)`.
fn vertex_coords(n: u32) -> Vec<(u32, u32)> {
    let mut current = vec![(0u32, 0u32), (1, 0), (0, 1)];
    for m in 0..n {
        let shift = 1u32 << m;
        let mut next = Vec::with_capacity(current.len() * 3);
        for &(a, b) in &current {
            next.push((a, b));
            next.push((a + shift, b));
            next.push((a, b + shift));
        }
        next.sort_unstable_by_key(|&(a, b)| (b, a));
        next.dedup();
        current = next;
    }
    current.sort_unstable_by_key(|&(a, b)| (b, a));
    current
}

#[derive(Clone, Debug)]
pub struct GasketGraph {
    level: u32,
    vertices: Vec<Vertex>,
    index: HashMap<(u32, u32), usize>,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

/// Builds `Γ_n`, the level-n gasket graph.
pub fn build_gasket(n: u32) -> Result<GasketGraph> {
    if n > MAX_GRAPH_LEVEL {
        return Err(Error::Capacity {
            what: "gasket graph",
            level: n,
            cap: MAX_GRAPH_LEVEL,
        });
    }
    let coords = vertex_coords(n);
    let index: HashMap<(u32, u32), usize> =
        coords.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let vertices: Vec<Vertex> = coords.iter().map(|&(a, b)| Vertex::new(a, b, n)).collect();

    let mut edges = Vec::with_capacity(3 * 3usize.pow(n));
    for cell in cells(n) {
        let [p, q, r] = cell.corners_at(n).map(|c| index[&c]);
        for (x, y) in [(p, q), (p, r), (q, r)] {
            edges.push((x.min(y), x.max(y)));
        }
    }
    edges.sort_unstable();

    let mut degree = vec![0usize; vertices.len()];
    for &(x, y) in &edges {
        degree[x] += 1;
        degree[y] += 1;
    }
    let mut offsets = Vec::with_capacity(vertices.len() + 1);
    offsets.push(0);
    for d in &degree {
        offsets.push(offsets.last().unwrap() + d);
    }
    let mut fill = offsets.clone();
    let mut neighbors = vec![0usize; offsets[vertices.len()]];
    for &(x, y) in &edges {
        neighbors[fill[x]] = y;
        fill[x] += 1;
        neighbors[fill[y]] = x;
        fill[y] += 1;
    }
    for x in 0..vertices.len() {
        neighbors[offsets[x]..offsets[x + 1]].sort_unstable();
    }

    Ok(GasketGraph {
        level: n,
        vertices,
        index,
        edges,
        offsets,
        neighbors,
    })
}

impl GasketGraph {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Vertex {
        self.vertices[i]
    }

    /// Unordered edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.neighbors[self.offsets[x]..self.offsets[x + 1]]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.offsets[x + 1] - self.offsets[x]
    }

    pub fn index_of(&self, a: u32, b: u32) -> Option<usize> {
        self.index.get(&(a, b)).copied()
    }

    /// Indices of the corners `a0`, `a1`, `a2`.
    pub fn corners(&self) -> [usize; 3] {
        let s = 1u32 << self.level;
        [(0, 0), (s, 0), (0, s)].map(|(a, b)| self.index[&(a, b)])
    }

    /// `3^n`, the inverse of the mass `μ_n` puts on each vertex.
    pub fn mass_denominator(&self) -> u64 {
        3u64.pow(self.level)
    }

    /// `3^-n`.
    pub fn mass_per_vertex<T: Scalar>(&self) -> T {
        T::one() / T::from_u64_exact(self.mass_denominator())
    }

    /// `|V_n| 3^-n`, which tends to 3/2.
    pub fn total_mass<T: Scalar>(&self) -> T {
        T::from_u64_exact(self.len() as u64) / T::from_u64_exact(self.mass_denominator())
    }

    /// The level-(n-k) cell `Δ_n^k(x)` assigned to vertex `x`.
    ///
    /// A vertex of `V_{n-k}` other than the three outer corners lies in two
    /// cells; the one whose lower-left corner is smallest in `(b, a)` order
    /// wins.
    pub fn block_cell(&self, x: usize, k: u32) -> Result<Cell> {
        if k > self.level {
            return Err(domain(format!(
                "block scale k={k} exceeds graph level {}",
                self.level
            )));
        }
        let n = self.level;
        let m = n - k;
        let s = 1u32 << k;
        let Vertex { a, b, .. } = self.vertices[x];
        let (fa, fb) = (a / s, b / s);
        let mut best: Option<Cell> = None;
        for beta in fb.saturating_sub(1)..=fb {
            for alpha in fa.saturating_sub(1)..=fa {
                let cell = Cell { level: m, alpha, beta };
                if cell.is_valid() && cell.contains(n, a, b) {
                    let better = match best {
                        None => true,
                        Some(c) => (cell.beta, cell.alpha) < (c.beta, c.alpha),
                    };
                    if better {
                        best = Some(cell);
                    }
                }
            }
        }
        Ok(best.expect("every gasket vertex lies in some cell"))
    }

    /// Vertex indices of the gasket points inside `cell`, in vertex order.
    pub fn cell_vertices(&self, cell: Cell) -> Vec<usize> {
        let n = self.level;
        let k = n - cell.level;
        let s = 1u32 << k;
        let (a0, b0) = (cell.alpha * s, cell.beta * s);
        let mut out: Vec<usize> = vertex_coords(k)
            .into_iter()
            .map(|(a, b)| self.index[&(a0 + a, b0 + b)])
            .collect();
        out.sort_unstable();
        out
    }

    /// `Δ_n^k(x)`: the `3(3^k+1)/2` vertices of the level-(n-k) cell
    /// containing `x`.
    pub fn block_triangle(&self, x: usize, k: u32) -> Result<Vec<usize>> {
        let cell = self.block_cell(x, k)?;
        Ok(self.cell_vertices(cell))
    }

    /// One representative per level-(n-k) cell: the first vertex (in vertex
    /// order) assigned to that cell. Returns `3^(n-k)` vertex indices.
    pub fn block_representatives(&self, k: u32) -> Result<Vec<usize>> {
        if k > self.level {
            return Err(domain(format!(
                "block scale k={k} exceeds graph level {}",
                self.level
            )));
        }
        let mut seen = HashMap::new();
        let mut reps = Vec::new();
        for x in 0..self.len() {
            let cell = self.block_cell(x, k)?;
            if seen.insert(cell, x).is_none() {
                reps.push(x);
            }
        }
        Ok(reps)
    }

    /// Vertex permutation induced by a symmetry of the triangle.
    pub fn symmetry_permutation(&self, op: Symmetry) -> Vec<usize> {
        let s = 1u32 << self.level;
        self.vertices
            .iter()
            .map(|v| {
                let (a, b) = match op {
                    Symmetry::Reflect => (v.b, v.a),
                    Symmetry::Rotate => (s - v.a - v.b, v.a),
                };
                self.index[&(a, b)]
            })
            .collect()
    }

    /// Line-oriented export: a JSON header line, then `vertex <id> <a> <b>`
    /// and `edge <id1> <id2>` records.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let header = GraphHeader {
            format: GRAPH_FORMAT.to_string(),
            version: GRAPH_FORMAT_VERSION,
            level: self.level,
            vertices: self.len(),
            edges: self.edges.len(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        let mut buf = String::new();
        for (i, v) in self.vertices.iter().enumerate() {
            buf.clear();
            writeln!(buf, "vertex {i} {} {}", v.a, v.b).unwrap();
            out.write_all(buf.as_bytes())?;
        }
        for &(x, y) in &self.edges {
            writeln!(out, "edge {x} {y}")?;
        }
        Ok(())
    }

    /// Reads the format produced by [`write_text`](Self::write_text) and
    /// checks it against a freshly built graph of the same level.
    pub fn read_text<R: BufRead>(input: R) -> Result<GasketGraph> {
        let bad = |reason: String| Error::Format {
            what: "gasket graph",
            reason,
        };
        let mut lines = input.lines();
        let header_line = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let header: GraphHeader = serde_json::from_str(&header_line)?;
        if header.format != GRAPH_FORMAT || header.version != GRAPH_FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let graph = build_gasket(header.level)?;
        let mut nv = 0;
        let mut edges = Vec::new();
        for line in lines {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("{line:?}: {e}")));
            match fields.as_slice() {
                ["vertex", id, a, b] => {
                    let (id, a, b) = (num(id)? as usize, num(a)? as u32, num(b)? as u32);
                    if graph.vertices.get(id) != Some(&Vertex::new(a, b, header.level)) {
                        return Err(bad(format!("vertex {id} does not match level {}", header.level)));
                    }
                    nv += 1;
                }
                ["edge", x, y] => edges.push((num(x)? as usize, num(y)? as usize)),
                [] => {}
                _ => return Err(bad(format!("unrecognized record {line:?}"))),
            }
        }
        edges.sort_unstable();
        if nv != graph.len() || edges != graph.edges {
            return Err(bad("vertex or edge list differs from the level's gasket".into()));
        }
        Ok(graph)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    /// Reflection fixing `a0`, swapping `a1` and `a2`.
    Reflect,
    /// Rotation `a0 -> a1 -> a2 -> a0`.
    Rotate,
}

const GRAPH_FORMAT: &str = "gasket-graph";
const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct GraphHeader {
    format: String,
    version: u32,
    level: u32,
    vertices: usize,
    edges: usize,
}

/// `b_k = 3(3^k + 1)/2`, the number of vertices in a cell of `k` refinements.
pub fn block_size(k: u32) -> usize {
    3 * (3usize.pow(k) + 1) / 2
}
