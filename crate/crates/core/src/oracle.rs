//! Ground-truth dynamic IR drop: builds the resistive PDN network for a
//! tiled layout, stamps the conductance system GV = J, and solves one
//! DC system per trace frame. The peak-over-frames drop map is the
//! training label for the predictor.

use crate::layout::Layout;
use crate::pdngraph::TileGrid;
use crate::solver::{cg_solve, SparseSym};
use crate::{Error, Result};
use rayon::prelude::*;

/// Dirichlet stamp conductance tying pad nodes to the supply voltage.
pub const G_PAD_S: f64 = 1e9;

/// Default relative-residual tolerance for the frame solves.
pub const SOLVE_TOL: f64 = 1e-10;

/// Network node kinds. A pad is a strip node that a power pad lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    TileTap { row: usize, col: usize },
    StripNode { strip: usize, row: usize },
    Pad { strip: usize, row: usize },
}

/// Resistive PDN model: tile taps on the low layer, per-row strip nodes
/// on the high layer, vias joining them, and pad nodes held at vdd.
#[derive(Debug, Clone)]
pub struct ResistorNetwork {
    pub nodes: Vec<NodeKind>,
    /// Undirected conductance edges (node_a, node_b, siemens).
    pub edges: Vec<(usize, usize, f64)>,
    /// Indices of nodes held at `vdd_v`.
    pub pads: Vec<usize>,
    pub vdd_v: f64,
    pub n_taps: usize,
    n_w: usize,
}

impl ResistorNetwork {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Flat tap index of tile (row, col).
    pub fn tap_index(&self, row: usize, col: usize) -> usize {
        row * self.n_w + col
    }

    pub fn is_pad(&self, node: usize) -> bool {
        matches!(self.nodes[node], NodeKind::Pad { .. })
    }
}

/// Tap currents (amps) for one timestep, indexed like tile taps.
#[derive(Debug, Clone)]
pub struct CurrentLoads {
    pub tap_current_a: Vec<f64>,
}

/// One voltage-drop field over the tile grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IrDropMap {
    pub n_h: usize,
    pub n_w: usize,
    /// Row-major drops in volts, row 0 at y = 0.
    pub drop_v: Vec<f64>,
    pub frame: FrameTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameTag {
    Frame(usize),
    Peak,
}

impl IrDropMap {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.drop_v[row * self.n_w + col]
    }
}

/// Build the resistor network for `layout` on `grid`.
///
/// Taps of neighboring tiles are joined with 1/r_lrl, strip nodes of
/// neighboring rows with 1/r_hpr, and each strip node reaches the tap
/// of its tile through 1/r_via. Each pad marks the strip node nearest
/// to the pad position; the vdd tie itself is stamped during assembly.
pub fn build_resistor_network(layout: &Layout, grid: &TileGrid) -> Result<ResistorNetwork> {
    let (n_h, n_w) = (grid.n_h, grid.n_w);
    let n_taps = n_h * n_w;
    let strips = &layout.pdn.vstrip_x_um;

    let mut nodes: Vec<NodeKind> = Vec::with_capacity(n_taps + strips.len() * n_h);
    for row in 0..n_h {
        for col in 0..n_w {
            nodes.push(NodeKind::TileTap { row, col });
        }
    }
    let strip_node = |strip: usize, row: usize| n_taps + strip * n_h + row;
    for strip in 0..strips.len() {
        for row in 0..n_h {
            nodes.push(NodeKind::StripNode { strip, row });
        }
    }

    let g_lrl = 1.0 / layout.pdn.r_lrl_ohm_per_tile;
    let g_hpr = 1.0 / layout.pdn.r_hpr_ohm_per_tile;
    let g_via = 1.0 / layout.pdn.r_via_ohm;
    if !(g_lrl > 0.0 && g_hpr > 0.0 && g_via > 0.0) {
        return Err(Error::invalid("conductances must be positive"));
    }

    let mut edges = Vec::new();
    for row in 0..n_h {
        for col in 0..n_w {
            let tap = row * n_w + col;
            if col + 1 < n_w {
                edges.push((tap, tap + 1, g_lrl));
            }
            if row + 1 < n_h {
                edges.push((tap, tap + n_w, g_lrl));
            }
        }
    }
    for (strip, &sx) in strips.iter().enumerate() {
        let col = ((sx / grid.dx_um).floor() as usize).min(n_w - 1);
        for row in 0..n_h {
            if row + 1 < n_h {
                edges.push((strip_node(strip, row), strip_node(strip, row + 1), g_hpr));
            }
            edges.push((strip_node(strip, row), row * n_w + col, g_via));
        }
    }

    let mut pads = Vec::new();
    for &(px, py) in &layout.pdn.pad_xy_um {
        let strip = strips
            .iter()
            .position(|&sx| sx == px)
            .ok_or_else(|| Error::invalid(format!("pad at x={px} is off-strip")))?;
        let row = ((py / grid.dy_um).floor() as usize).min(n_h - 1);
        let node = strip_node(strip, row);
        if !pads.contains(&node) {
            pads.push(node);
        }
        nodes[node] = NodeKind::Pad { strip, row };
    }
    pads.sort_unstable();
    if pads.is_empty() {
        return Err(Error::invalid("network has no pads"));
    }

    let net = ResistorNetwork {
        nodes,
        edges,
        pads,
        vdd_v: layout.pdn.vdd_v,
        n_taps,
        n_w,
    };
    check_connected(&net)?;
    Ok(net)
}

fn check_connected(net: &ResistorNetwork) -> Result<()> {
    let n = net.n_nodes();
    let mut adj = vec![Vec::new(); n];
    for &(a, b, _) in &net.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![net.pads[0]];
    seen[net.pads[0]] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    if seen.iter().all(|&s| s) {
        Ok(())
    } else {
        Err(Error::invalid("resistor network is disconnected"))
    }
}

/// Tap currents for frame `t`: tile current = sum over the tile's cells
/// of (leakage + trace[t]), divided by vdd.
pub fn tile_loads(layout: &Layout, grid: &TileGrid, frame: usize) -> CurrentLoads {
    let vdd = layout.pdn.vdd_v;
    let mut tap_current_a = vec![0.0; grid.n_tiles()];
    for (tile, cell_indices) in grid.tile_cells.iter().enumerate() {
        let mut power = 0.0;
        for &ci in cell_indices {
            let cell = &layout.cells[ci];
            power += cell.leakage_w + cell.trace.frames[frame];
        }
        tap_current_a[tile] = power / vdd;
    }
    CurrentLoads { tap_current_a }
}

/// Stamp the conductance system: G is the weighted graph Laplacian plus
/// a large diagonal stamp at every pad; J carries -load at taps and
/// g_pad * vdd at pads. G stays symmetric positive definite.
pub fn assemble_system(net: &ResistorNetwork, loads: &CurrentLoads) -> Result<(SparseSym, Vec<f64>)> {
    if loads.tap_current_a.len() != net.n_taps {
        return Err(Error::shape(format!(
            "loads cover {} taps, network has {}",
            loads.tap_current_a.len(),
            net.n_taps
        )));
    }
    let n = net.n_nodes();
    let mut triplets = Vec::with_capacity(net.edges.len() * 4 + n);
    for &(a, b, g) in &net.edges {
        if !(g > 0.0) {
            return Err(Error::invalid(format!("nonpositive conductance on edge {a}-{b}")));
        }
        triplets.push((a, a, g));
        triplets.push((b, b, g));
        triplets.push((a, b, -g));
        triplets.push((b, a, -g));
    }
    let mut j = vec![0.0; n];
    for (tap, &load) in loads.tap_current_a.iter().enumerate() {
        j[tap] -= load;
    }
    for &pad in &net.pads {
        triplets.push((pad, pad, G_PAD_S));
        j[pad] += G_PAD_S * net.vdd_v;
    }
    Ok((SparseSym::from_triplets(n, &triplets), j))
}

/// Solve GV = J to the given relative residual (default [`SOLVE_TOL`]).
/// Deterministic; warm-starts from a flat voltage estimate.
pub fn solve(g: &SparseSym, j: &[f64], tol: f64) -> Result<Vec<f64>> {
    let diag = g.diagonal();
    let v_est = j
        .iter()
        .zip(&diag)
        .map(|(&ji, &di)| (ji / di).abs())
        .fold(0.0f64, f64::max);
    let x0 = vec![v_est; j.len()];
    let sol = cg_solve(g, j, Some(&x0), tol, 20 * j.len().max(50))?;
    Ok(sol.x)
}

/// Max |net current| at non-pad nodes given node voltages: branch
/// inflow minus the drawn load must vanish by conservation.
pub fn kirchhoff_max_residual(net: &ResistorNetwork, loads: &CurrentLoads, v: &[f64]) -> f64 {
    let mut inflow = vec![0.0; net.n_nodes()];
    for &(a, b, g) in &net.edges {
        let i_ab = g * (v[a] - v[b]);
        inflow[a] -= i_ab;
        inflow[b] += i_ab;
    }
    let mut worst: f64 = 0.0;
    for node in 0..net.n_nodes() {
        if net.is_pad(node) {
            continue;
        }
        let load = if node < net.n_taps {
            loads.tap_current_a[node]
        } else {
            0.0
        };
        worst = worst.max((inflow[node] - load).abs());
    }
    worst
}

fn drop_map_from_solution(net: &ResistorNetwork, grid: &TileGrid, v: &[f64], frame: FrameTag) -> IrDropMap {
    let vdd = net.vdd_v;
    let drop_v = (0..net.n_taps)
        .map(|tap| (vdd - v[tap]).clamp(0.0, vdd))
        .collect();
    IrDropMap {
        n_h: grid.n_h,
        n_w: grid.n_w,
        drop_v,
        frame,
    }
}

/// Solve one DC system per frame and reduce to the peak map. Frames are
/// independent and solved in parallel; results merge in frame order.
pub fn simulate_dynamic(layout: &Layout, grid: &TileGrid) -> Result<(Vec<IrDropMap>, IrDropMap)> {
    let net = build_resistor_network(layout, grid)?;
    let t_sim = layout.t_sim();
    if t_sim == 0 {
        return Err(Error::invalid("layout has no cells, nothing to simulate"));
    }
    let frames: Vec<IrDropMap> = (0..t_sim)
        .into_par_iter()
        .map(|t| -> Result<IrDropMap> {
            let loads = tile_loads(layout, grid, t);
            if loads.tap_current_a.iter().all(|&c| c == 0.0) {
                return Ok(IrDropMap {
                    n_h: grid.n_h,
                    n_w: grid.n_w,
                    drop_v: vec![0.0; net.n_taps],
                    frame: FrameTag::Frame(t),
                });
            }
            let (g, j) = assemble_system(&net, &loads)?;
            let v = solve(&g, &j, SOLVE_TOL)?;
            Ok(drop_map_from_solution(&net, grid, &v, FrameTag::Frame(t)))
        })
        .collect::<Result<_>>()?;

    let mut peak = vec![0.0f64; net.n_taps];
    for map in &frames {
        for (p, &d) in peak.iter_mut().zip(&map.drop_v) {
            *p = p.max(d);
        }
    }
    Ok((
        frames,
        IrDropMap {
            n_h: grid.n_h,
            n_w: grid.n_w,
            drop_v: peak,
            frame: FrameTag::Peak,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{generate_synthetic, parse_layout, GenSpec, StripLayout};
    use crate::pdngraph::tile_grid;

    fn small_layout(w: f64, h: f64, strips: Vec<f64>, seed: u64) -> Layout {
        generate_synthetic(&GenSpec {
            width_um: w,
            height_um: h,
            n_cells: 8,
            strips: StripLayout::Explicit(strips),
            power_scale_w: 0.02,
            t_sim: 3,
            rng_seed: seed,
        })
        .unwrap()
    }

    #[test]
    fn one_by_two_network_shape() {
        let layout = small_layout(2.0, 1.0, vec![0.5], 1);
        let grid = tile_grid(&layout, 1.0, 1.0).unwrap();
        let net = build_resistor_network(&layout, &grid).unwrap();
        assert_eq!(net.n_nodes(), 3);
        assert_eq!(net.edges.len(), 2);
        assert_eq!(net.pads, vec![2]);
        assert!(matches!(net.nodes[2], NodeKind::Pad { strip: 0, row: 0 }));
    }

    #[test]
    fn three_by_three_network_counts() {
        let layout = small_layout(3.0, 3.0, vec![1.5], 2);
        let grid = tile_grid(&layout, 1.0, 1.0).unwrap();
        let net = build_resistor_network(&layout, &grid).unwrap();
        assert_eq!(net.n_taps, 9);
        assert_eq!(net.n_nodes(), 12);
        let g_lrl = 1.0 / layout.pdn.r_lrl_ohm_per_tile;
        let tap_tap = net
            .edges
            .iter()
            .filter(|&&(a, b, g)| a < 9 && b < 9 && g == g_lrl)
            .count();
        assert_eq!(tap_tap, 12); // 2*3*3 - 3 - 3
    }

    #[test]
    fn assembled_stamp_matches_hand_computation() {
        // Two nodes, one 1-ohm edge, node 0 padded.
        let net = ResistorNetwork {
            nodes: vec![
                NodeKind::Pad { strip: 0, row: 0 },
                NodeKind::TileTap { row: 0, col: 0 },
            ],
            edges: vec![(0, 1, 1.0)],
            pads: vec![0],
            vdd_v: 1.0,
            n_taps: 0,
            n_w: 1,
        };
        let loads = CurrentLoads { tap_current_a: vec![] };
        let (g, j) = assemble_system(&net, &loads).unwrap();
        let dense = g.to_dense();
        assert_eq!(dense[0][0], 1.0 + G_PAD_S);
        assert_eq!(dense[0][1], -1.0);
        assert_eq!(dense[1][0], -1.0);
        assert_eq!(dense[1][1], 1.0);
        assert_eq!(j, vec![G_PAD_S * 1.0, 0.0]);
    }

    #[test]
    fn zero_loads_leave_only_pad_entries() {
        let layout = small_layout(4.0, 2.0, vec![1.5], 3);
        let grid = tile_grid(&layout, 1.0, 1.0).unwrap();
        let net = build_resistor_network(&layout, &grid).unwrap();
        let loads = CurrentLoads {
            tap_current_a: vec![0.0; net.n_taps],
        };
        let (_, j) = assemble_system(&net, &loads).unwrap();
        for (idx, &ji) in j.iter().enumerate() {
            if net.pads.contains(&idx) {
                assert!(ji > 0.0);
            } else {
                assert_eq!(ji, 0.0);
            }
        }
    }

    #[test]
    fn assembled_matrix_is_symmetric() {
        for seed in 0..5 {
            let layout = small_layout(5.0, 4.0, vec![0.5, 3.5], seed);
            let grid = tile_grid(&layout, 1.0, 1.0).unwrap();
            let net = build_resistor_network(&layout, &grid).unwrap();
            let loads = tile_loads(&layout, &grid, 0);
            let (g, _) = assemble_system(&net, &loads).unwrap();
            assert_eq!(g.asymmetry(), 0.0);
        }
    }

    #[test]
    fn ohms_law_single_edge() {
        let net = ResistorNetwork {
            nodes: vec![
                NodeKind::Pad { strip: 0, row: 0 },
                NodeKind::TileTap { row: 0, col: 0 },
            ],
            edges: vec![(0, 1, 1.0)],
            pads: vec![0],
            vdd_v: 1.0,
            n_taps: 2, // treat both as load-addressable for the test
            n_w: 2,
        };
        let loads = CurrentLoads {
            tap_current_a: vec![0.0, 0.1],
        };
        let (g, j) = assemble_system(&net, &loads).unwrap();
        let v = solve(&g, &j, 1e-12).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-9);
        assert!((v[1] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn zero_loads_give_zero_drop_exactly() {
        let mut layout = small_layout(4.0, 4.0, vec![2.0], 4);
        for cell in &mut layout.cells {
            cell.leakage_w = 0.0;
            for f in &mut cell.trace.frames {
                *f = 0.0;
            }
        }
        let grid = tile_grid(&layout, 1.0, 1.0).unwrap();
        let (frames, peak) = simulate_dynamic(&layout, &grid).unwrap();
        for map in frames.iter().chain(std::iter::once(&peak)) {
            assert!(map.drop_v.iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn single_frame_equals_static_solve() {
        let mut layout = small_layout(4.0, 4.0, vec![2.0], 5);
        for cell in &mut layout.cells {
            cell.trace.frames.truncate(1);
        }
        let grid = tile_grid(&layout, 1.0, 1.0).unwrap();
        let (frames, peak) = simulate_dynamic(&layout, &grid).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].drop_v, peak.drop_v);

        let net = build_resistor_network(&layout, &grid).unwrap();
        let loads = tile_loads(&layout, &grid, 0);
        let (g, j) = assemble_system(&net, &loads).unwrap();
        let v = solve(&g, &j, SOLVE_TOL).unwrap();
        for tap in 0..net.n_taps {
            assert!((layout.pdn.vdd_v - v[tap] - frames[0].drop_v[tap]).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_power_doubles_drop() {
        let layout = small_layout(6.0, 4.0, vec![1.0, 5.0], 6);
        let grid = tile_grid(&layout, 1.0, 1.0).unwrap();
        let (_, peak1) = simulate_dynamic(&layout, &grid).unwrap();
        let mut doubled = layout.clone();
        for cell in &mut doubled.cells {
            cell.leakage_w *= 2.0;
            cell.internal_w *= 2.0;
            cell.switching_w *= 2.0;
            for f in &mut cell.trace.frames {
                *f *= 2.0;
            }
        }
        let (_, peak2) = simulate_dynamic(&doubled, &grid).unwrap();
        let scale = peak1.drop_v.iter().cloned().fold(0.0f64, f64::max);
        assert!(scale > 0.0);
        for (a, b) in peak1.drop_v.iter().zip(&peak2.drop_v) {
            assert!((2.0 * a - b).abs() <= 1e-9 * scale.max(1.0), "2*{a} vs {b}");
        }
    }

    #[test]
    fn peak_dominates_every_frame() {
        let layout = small_layout(5.0, 5.0, vec![2.5], 7);
        let grid = tile_grid(&layout, 1.0, 1.0).unwrap();
        let (frames, peak) = simulate_dynamic(&layout, &grid).unwrap();
        for map in &frames {
            for (f, p) in map.drop_v.iter().zip(&peak.drop_v) {
                assert!(p >= f);
            }
        }
        assert_eq!(peak.frame, FrameTag::Peak);
    }

    #[test]
    fn drops_stay_within_supply_bounds() {
        let layout = small_layout(6.0, 6.0, vec![0.5, 3.0], 8);
        let grid = tile_grid(&layout, 1.0, 1.0).unwrap();
        let (frames, _) = simulate_dynamic(&layout, &grid).unwrap();
        for map in &frames {
            for &d in &map.drop_v {
                assert!((0.0..=layout.pdn.vdd_v).contains(&d));
            }
        }
    }

    #[test]
    fn kirchhoff_holds_at_non_pad_nodes() {
        let layout = small_layout(5.0, 3.0, vec![2.0], 9);
        let grid = tile_grid(&layout, 1.0, 1.0).unwrap();
        let net = build_resistor_network(&layout, &grid).unwrap();
        let loads = tile_loads(&layout, &grid, 1);
        let (g, j) = assemble_system(&net, &loads).unwrap();
        let v = solve(&g, &j, SOLVE_TOL).unwrap();
        let j_inf = j.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        assert!(kirchhoff_max_residual(&net, &loads, &v) < 1e-8 * j_inf);
    }

    #[test]
    fn fixture_layout_simulates() {
        let layout =
            parse_layout(include_str!("../tests/data/three_cell_layout.txt")).unwrap();
        let grid = tile_grid(&layout, 2.0, 2.0).unwrap();
        let (frames, peak) = simulate_dynamic(&layout, &grid).unwrap();
        assert_eq!(frames.len(), 2);
        assert!(peak.drop_v.iter().any(|&d| d > 0.0));
    }
}
