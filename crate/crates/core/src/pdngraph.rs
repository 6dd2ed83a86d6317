//! Uniform tiling of the layout and construction of the directed PDN
//! graph: one node per tile, power features summed per tile, and
//! horizontal edge directions chosen so edges point away from the
//! nearest high-layer strip (the current-flow approximation). Vertical
//! neighbors are always connected both ways.

use crate::layout::Layout;
use crate::{Error, Result};

/// Uniform tile grid over a layout. `n_w = ceil(W/dx)`, `n_h = ceil(H/dy)`;
/// a cell belongs to the tile containing its origin point.
#[derive(Debug, Clone)]
pub struct TileGrid {
    pub dx_um: f64,
    pub dy_um: f64,
    pub n_w: usize,
    pub n_h: usize,
    /// Row-major tile index -> indices into `layout.cells`.
    pub tile_cells: Vec<Vec<usize>>,
}

impl TileGrid {
    /// Flat node index of tile (row i, col j), row-major.
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i * self.n_w + j
    }

    pub fn n_tiles(&self) -> usize {
        self.n_w * self.n_h
    }

    /// Tile (row, col) containing point (x, y), clamped at the die edge.
    pub fn tile_of(&self, x_um: f64, y_um: f64) -> (usize, usize) {
        let col = ((x_um / self.dx_um).floor() as usize).min(self.n_w - 1);
        let row = ((y_um / self.dy_um).floor() as usize).min(self.n_h - 1);
        (row, col)
    }

    /// A grid with the same dimensions but no cell assignment, for
    /// samples reloaded from disk where only the node lattice matters.
    pub fn bare(n_h: usize, n_w: usize) -> Self {
        TileGrid {
            dx_um: 1.0,
            dy_um: 1.0,
            n_w,
            n_h,
            tile_cells: vec![Vec::new(); n_w * n_h],
        }
    }
}

/// Directed lattice graph over the tile grid with per-node power
/// features. Edges join one-hop horizontal/vertical neighbors only and
/// are kept sorted by (src, dst).
#[derive(Debug, Clone, PartialEq)]
pub struct PdnGraph {
    pub n_h: usize,
    pub n_w: usize,
    /// Row-major N x C feature matrix.
    pub features: Vec<f64>,
    pub n_channels: usize,
    pub feature_channel_names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl PdnGraph {
    pub fn n_nodes(&self) -> usize {
        self.n_h * self.n_w
    }

    /// (row, col) of a flat node index.
    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node / self.n_w, node % self.n_w)
    }
}

/// Signed distance from a node center to its chosen strip, in tile units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripOffset(pub f64);

/// Build the uniform tile grid for a layout.
pub fn tile_grid(layout: &Layout, dx_um: f64, dy_um: f64) -> Result<TileGrid> {
    if !(dx_um > 0.0) || !(dy_um > 0.0) {
        return Err(Error::invalid("tile dimensions must be positive"));
    }
    let n_w = ceil_div(layout.width_um, dx_um);
    let n_h = ceil_div(layout.height_um, dy_um);
    if n_w == 1 && n_h == 1 && dx_um >= layout.width_um && dy_um >= layout.height_um
        && layout.cells.is_empty()
    {
        return Err(Error::invalid("degenerate grid: single tile covering an empty die"));
    }
    let mut grid = TileGrid {
        dx_um,
        dy_um,
        n_w,
        n_h,
        tile_cells: vec![Vec::new(); n_w * n_h],
    };
    for (idx, cell) in layout.cells.iter().enumerate() {
        let (row, col) = grid.tile_of(cell.x_um, cell.y_um);
        let tile = grid.node_index(row, col);
        grid.tile_cells[tile].push(idx);
    }
    Ok(grid)
}

fn ceil_div(len: f64, step: f64) -> usize {
    // Tolerate float fuzz from quantized inputs: 16/4 must give 4, not 5.
    (((len / step) - 1e-9).ceil() as usize).max(1)
}

/// Per-node feature matrix: [leakage_sum, internal_sum, switching_sum,
/// trace_sum[0..t_sim)] summed over the cells of each tile. Empty tiles
/// get zero rows. Returns (features, channel names).
pub fn node_features(grid: &TileGrid, layout: &Layout) -> (Vec<f64>, Vec<String>) {
    let t_sim = layout.t_sim();
    let n_channels = 3 + t_sim;
    let n = grid.n_tiles();
    let mut features = vec![0.0; n * n_channels];
    for (tile, cell_indices) in grid.tile_cells.iter().enumerate() {
        let row = &mut features[tile * n_channels..(tile + 1) * n_channels];
        for &ci in cell_indices {
            let cell = &layout.cells[ci];
            row[0] += cell.leakage_w;
            row[1] += cell.internal_w;
            row[2] += cell.switching_w;
            for (t, &f) in cell.trace.frames.iter().enumerate() {
                row[3 + t] += f;
            }
        }
    }
    let mut names = vec!["leakage".to_string(), "internal".to_string(), "switching".to_string()];
    for t in 0..t_sim {
        names.push(format!("trace{t}"));
    }
    (features, names)
}

/// Offset from node column `j`'s center to the nearest strip, in tile
/// units. Node abscissa is the tile center (j + 0.5) * dx; ties between
/// equidistant strips break toward the left (negative) offset.
pub fn nearest_strip_offset(j: usize, grid: &TileGrid, strips: &[f64]) -> StripOffset {
    debug_assert!(!strips.is_empty());
    let v_x = (j as f64 + 0.5) * grid.dx_um;
    let mut best_s = f64::INFINITY;
    let mut best_abs = f64::INFINITY;
    for &x in strips {
        let s = (x - v_x) / grid.dx_um;
        let a = s.abs();
        if a < best_abs || (a == best_abs && s < best_s) {
            best_abs = a;
            best_s = s;
        }
    }
    StripOffset(best_s)
}

/// Horizontal edge cases between columns j and j+1, decided by the
/// offset `s` at column j.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizontalCase {
    /// Strip at or left of the node center: edge j -> j+1.
    LeftToRight,
    /// Strip strictly between the two centers: both directions.
    Bidirectional,
    /// Strip right of the neighbor center: edge j+1 -> j.
    RightToLeft,
}

/// Classify the offset: s <= 0, 0 < s <= 1, s > 1.
pub fn horizontal_case(s: StripOffset) -> HorizontalCase {
    if s.0 <= 0.0 {
        HorizontalCase::LeftToRight
    } else if s.0 <= 1.0 {
        HorizontalCase::Bidirectional
    } else {
        HorizontalCase::RightToLeft
    }
}

/// Build the directed PDN graph for a layout on `grid`.
pub fn build_graph(grid: &TileGrid, layout: &Layout) -> PdnGraph {
    let (features, feature_channel_names) = node_features(grid, layout);
    let strips = &layout.pdn.vstrip_x_um;
    let mut edges = Vec::new();
    for i in 0..grid.n_h {
        for j in 0..grid.n_w {
            let node = grid.node_index(i, j);
            if j + 1 < grid.n_w {
                let right = grid.node_index(i, j + 1);
                match horizontal_case(nearest_strip_offset(j, grid, strips)) {
                    HorizontalCase::LeftToRight => edges.push((node, right)),
                    HorizontalCase::Bidirectional => {
                        edges.push((node, right));
                        edges.push((right, node));
                    }
                    HorizontalCase::RightToLeft => edges.push((right, node)),
                }
            }
            if i + 1 < grid.n_h {
                let down = grid.node_index(i + 1, j);
                edges.push((node, down));
                edges.push((down, node));
            }
        }
    }
    edges.sort_unstable();
    PdnGraph {
        n_h: grid.n_h,
        n_w: grid.n_w,
        features,
        n_channels: feature_channel_names.len(),
        feature_channel_names,
        edges,
    }
}

/// Close the edge set under reversal, preserving features. Idempotent.
pub fn to_bidirected(graph: &PdnGraph) -> PdnGraph {
    let mut edges: Vec<(usize, usize)> = graph
        .edges
        .iter()
        .flat_map(|&(s, d)| [(s, d), (d, s)])
        .collect();
    edges.sort_unstable();
    edges.dedup();
    PdnGraph {
        edges,
        ..graph.clone()
    }
}
