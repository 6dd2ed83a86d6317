//! Layout data model, line-oriented layout files, and the synthetic
//! generator that stands in for a real placement database.
//!
//! A layout is a die with placed cells (each carrying static power
//! numbers and a per-frame dynamic power trace) plus the PDN
//! description: vertical high-layer strips, power pads sitting on those
//! strips, and the three segment resistances of the supply mesh.

use crate::numfmt::{g9, q9};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;

/// A placed design plus its power-delivery network.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub width_um: f64,
    pub height_um: f64,
    pub cells: Vec<CellInstance>,
    pub pdn: PdnSpec,
}

/// One placed cell with its power attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct CellInstance {
    pub id: String,
    pub x_um: f64,
    pub y_um: f64,
    pub leakage_w: f64,
    pub internal_w: f64,
    pub switching_w: f64,
    pub trace: PowerTrace,
}

/// Per-frame total dynamic power of one cell, watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub frames: Vec<f64>,
}

/// Power-delivery network description: vertical high-layer strips,
/// pads on those strips, and per-segment resistances.
#[derive(Debug, Clone, PartialEq)]
pub struct PdnSpec {
    pub vdd_v: f64,
    pub vstrip_x_um: Vec<f64>,
    pub pad_xy_um: Vec<(f64, f64)>,
    pub r_lrl_ohm_per_tile: f64,
    pub r_hpr_ohm_per_tile: f64,
    pub r_via_ohm: f64,
}

/// Strip placement request for the generator: a regular pitch or an
/// explicit (possibly irregular) list of x positions.
#[derive(Debug, Clone, PartialEq)]
pub enum StripLayout {
    Pitch(f64),
    Explicit(Vec<f64>),
}

/// Parameters of the synthetic layout generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub width_um: f64,
    pub height_um: f64,
    pub n_cells: usize,
    pub strips: StripLayout,
    pub power_scale_w: f64,
    pub t_sim: usize,
    pub rng_seed: u64,
}

/// Electrical defaults used by the generator (GenSpec carries only the
/// geometric/statistical knobs). r_hpr is kept well below r_lrl so the
/// strips behave as the stiff layer.
pub const GEN_VDD_V: f64 = 1.0;
pub const GEN_R_LRL_OHM: f64 = 1.0;
pub const GEN_R_HPR_OHM: f64 = 0.05;
pub const GEN_R_VIA_OHM: f64 = 0.2;

/// A single validation failure, naming the entity and the broken rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

impl Layout {
    /// Frame count of the dynamic power traces (0 for a cell-less layout).
    pub fn t_sim(&self) -> usize {
        self.cells.first().map_or(0, |c| c.trace.frames.len())
    }
}

/// Check every data-model invariant. An empty list means the layout is
/// well formed; violations are data, not errors.
pub fn validate(layout: &Layout) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |entity: &str, rule: String| {
        out.push(Violation {
            entity: entity.to_string(),
            rule,
        })
    };

    if !(layout.width_um > 0.0) || !(layout.height_um > 0.0) {
        v("die", "die dimensions must be positive".into());
    }
    let pdn = &layout.pdn;
    if !(pdn.vdd_v > 0.0) {
        v("vdd", "supply voltage must be positive".into());
    }
    for (name, r) in [
        ("r_lrl", pdn.r_lrl_ohm_per_tile),
        ("r_hpr", pdn.r_hpr_ohm_per_tile),
        ("r_via", pdn.r_via_ohm),
    ] {
        if !(r > 0.0) {
            v(name, "resistance must be positive".into());
        }
    }
    if pdn.vstrip_x_um.is_empty() {
        v("pdn", "at least one strip required".into());
    }
    for w in pdn.vstrip_x_um.windows(2) {
        if !(w[0] < w[1]) {
            v("pdn", format!("strips not strictly increasing at x={}", g9(w[1])));
        }
    }
    for &x in &pdn.vstrip_x_um {
        if !(0.0..=layout.width_um).contains(&x) {
            v("pdn", format!("strip at x={} outside die", g9(x)));
        }
    }
    if pdn.pad_xy_um.is_empty() {
        v("pdn", "at least one pad required".into());
    }
    for &(x, y) in &pdn.pad_xy_um {
        if !pdn.vstrip_x_um.contains(&x) {
            v(&format!("pad ({}, {})", g9(x), g9(y)), "pad off-strip".into());
        }
        if !(0.0..=layout.height_um).contains(&y) {
            v(&format!("pad ({}, {})", g9(x), g9(y)), "pad outside die".into());
        }
    }

    let t_sim = layout.t_sim();
    let mut seen = std::collections::HashSet::new();
    for cell in &layout.cells {
        let ent = format!("cell {}", cell.id);
        if !seen.insert(cell.id.as_str()) {
            v(&ent, "duplicate cell id".into());
        }
        if !(0.0..=layout.width_um).contains(&cell.x_um)
            || !(0.0..=layout.height_um).contains(&cell.y_um)
        {
            v(&ent, "cell outside die".into());
        }
        for (name, p) in [
            ("leakage_w", cell.leakage_w),
            ("internal_w", cell.internal_w),
            ("switching_w", cell.switching_w),
        ] {
            if !(p >= 0.0) {
                v(&ent, format!("{name} must be nonnegative"));
            }
        }
        if cell.trace.frames.is_empty() {
            v(&ent, "trace must have at least one frame".into());
        }
        if cell.trace.frames.len() != t_sim {
            v(&ent, format!("trace length {} != layout t_sim {}", cell.trace.frames.len(), t_sim));
        }
        if cell.trace.frames.iter().any(|&f| !(f >= 0.0)) {
            v(&ent, "trace frames must be nonnegative".into());
        }
    }
    out
}

/// Render a layout in the canonical directive order. The output parses
/// back to an identical `Layout`.
pub fn serialize(layout: &Layout) -> String {
    let mut s = String::new();
    s.push_str(&format!("die {} {}\n", g9(layout.width_um), g9(layout.height_um)));
    s.push_str(&format!("vdd {}\n", g9(layout.pdn.vdd_v)));
    s.push_str(&format!(
        "res {} {} {}\n",
        g9(layout.pdn.r_lrl_ohm_per_tile),
        g9(layout.pdn.r_hpr_ohm_per_tile),
        g9(layout.pdn.r_via_ohm)
    ));
    for &x in &layout.pdn.vstrip_x_um {
        s.push_str(&format!("strip {}\n", g9(x)));
    }
    for &(x, y) in &layout.pdn.pad_xy_um {
        s.push_str(&format!("pad {} {}\n", g9(x), g9(y)));
    }
    for cell in &layout.cells {
        s.push_str(&format!(
            "cell {} {} {} {} {} {}",
            cell.id,
            g9(cell.x_um),
            g9(cell.y_um),
            g9(cell.leakage_w),
            g9(cell.internal_w),
            g9(cell.switching_w)
        ));
        for &f in &cell.trace.frames {
            s.push(' ');
            s.push_str(&g9(f));
        }
        s.push('\n');
    }
    s
}

/// Parse the line-oriented layout format. Returns the layout only if it
/// passes [`validate`]; unknown directives are an error.
pub fn parse_layout(text: &str) -> Result<Layout> {
    let mut die: Option<(f64, f64)> = None;
    let mut vdd: Option<f64> = None;
    let mut res: Option<(f64, f64, f64)> = None;
    let mut strips = Vec::new();
    let mut pads = Vec::new();
    let mut cells: Vec<CellInstance> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let mut tok = line.split_whitespace();
        let Some(directive) = tok.next() else { continue };
        let rest: Vec<&str> = tok.collect();
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map(q9)
                .map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid number '{s}' for {what}"),
                })
        };
        match directive {
            "die" => {
                if die.is_some() {
                    return Err(err("duplicate die directive".into()));
                }
                if rest.len() != 2 {
                    return Err(err("die expects <W_um> <H_um>".into()));
                }
                die = Some((num(rest[0], "die width")?, num(rest[1], "die height")?));
            }
            "vdd" => {
                if vdd.is_some() {
                    return Err(err("duplicate vdd directive".into()));
                }
                if rest.len() != 1 {
                    return Err(err("vdd expects <volts>".into()));
                }
                vdd = Some(num(rest[0], "vdd")?);
            }
            "res" => {
                if res.is_some() {
                    return Err(err("duplicate res directive".into()));
                }
                if rest.len() != 3 {
                    return Err(err("res expects <r_lrl> <r_hpr> <r_via>".into()));
                }
                res = Some((
                    num(rest[0], "r_lrl")?,
                    num(rest[1], "r_hpr")?,
                    num(rest[2], "r_via")?,
                ));
            }
            "strip" => {
                if rest.len() != 1 {
                    return Err(err("strip expects <x_um>".into()));
                }
                strips.push(num(rest[0], "strip x")?);
            }
            "pad" => {
                if rest.len() != 2 {
                    return Err(err("pad expects <x_um> <y_um>".into()));
                }
                pads.push((num(rest[0], "pad x")?, num(rest[1], "pad y")?));
            }
            "cell" => {
                if rest.len() < 7 {
                    return Err(err(
                        "cell expects <id> <x> <y> <leakage> <internal> <switching> <f1> ...".into(),
                    ));
                }
                let id = rest[0].to_string();
                let x = num(rest[1], "cell x")?;
                let y = num(rest[2], "cell y")?;
                let leak = num(rest[3], "leakage")?;
                let internal = num(rest[4], "internal")?;
                let switching = num(rest[5], "switching")?;
                let frames = rest[6..]
                    .iter()
                    .map(|s| num(s, "trace frame"))
                    .collect::<Result<Vec<_>>>()?;
                cells.push(CellInstance {
                    id,
                    x_um: x,
                    y_um: y,
                    leakage_w: leak,
                    internal_w: internal,
                    switching_w: switching,
                    trace: PowerTrace { frames },
                });
            }
            other => return Err(err(format!("unknown directive '{other}'"))),
        }
    }

    let (width_um, height_um) = die.ok_or_else(|| Error::invalid("missing die directive"))?;
    let vdd_v = vdd.ok_or_else(|| Error::invalid("missing vdd directive"))?;
    let (r_lrl, r_hpr, r_via) = res.ok_or_else(|| Error::invalid("missing res directive"))?;

    let layout = Layout {
        width_um,
        height_um,
        cells,
        pdn: PdnSpec {
            vdd_v,
            vstrip_x_um: strips,
            pad_xy_um: pads,
            r_lrl_ohm_per_tile: r_lrl,
            r_hpr_ohm_per_tile: r_hpr,
            r_via_ohm: r_via,
        },
    };
    let violations = validate(&layout);
    if let Some(first) = violations.first() {
        return Err(Error::Invalid(first.to_string()));
    }
    Ok(layout)
}

/// Strip x positions implied by a [`StripLayout`] on a die of width `w`.
/// Regular pitch places strips at pitch/2 + k*pitch while inside the die.
pub fn strip_positions(strips: &StripLayout, width_um: f64) -> Result<Vec<f64>> {
    match strips {
        StripLayout::Pitch(pitch) => {
            if !(*pitch > 0.0) {
                return Err(Error::invalid("strip pitch must be positive"));
            }
            let mut xs = Vec::new();
            let mut x = pitch / 2.0;
            while x < width_um {
                xs.push(q9(x));
                x += pitch;
            }
            if xs.is_empty() {
                return Err(Error::invalid(format!(
                    "pitch {} larger than die width {}",
                    g9(*pitch),
                    g9(width_um)
                )));
            }
            Ok(xs)
        }
        StripLayout::Explicit(xs) => {
            if xs.is_empty() {
                return Err(Error::invalid("explicit strip list is empty"));
            }
            let mut xs: Vec<f64> = xs.iter().map(|&x| q9(x)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(xs)
        }
    }
}

/// Generate a layout deterministically from `spec`. Cells are placed
/// uniformly; power values are |N(0,1)| scaled by `power_scale_w`; one
/// pad is placed per strip at die mid-height.
pub fn generate_synthetic(spec: &GenSpec) -> Result<Layout> {
    if !(spec.width_um > 0.0) || !(spec.height_um > 0.0) {
        return Err(Error::invalid("zero-area die"));
    }
    if spec.n_cells == 0 {
        return Err(Error::invalid("n_cells must be at least 1"));
    }
    if spec.t_sim == 0 {
        return Err(Error::invalid("t_sim must be at least 1"));
    }
    if !(spec.power_scale_w > 0.0) {
        return Err(Error::invalid("power_scale_w must be positive"));
    }
    let strips = strip_positions(&spec.strips, spec.width_um)?;
    for &x in &strips {
        if !(0.0..=spec.width_um).contains(&x) {
            return Err(Error::invalid(format!("strip at x={} outside die", g9(x))));
        }
    }
    let pad_y = q9(spec.height_um / 2.0);
    let pads: Vec<(f64, f64)> = strips.iter().map(|&x| (x, pad_y)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let normal = Normal::<f64>::new(0.0, 1.0).expect("unit normal");
    let half_normal = |rng: &mut ChaCha8Rng| q9(normal.sample(rng).abs() * spec.power_scale_w);

    let mut cells = Vec::with_capacity(spec.n_cells);
    for i in 0..spec.n_cells {
        let x = q9(rng.random_range(0.0..spec.width_um));
        let y = q9(rng.random_range(0.0..spec.height_um));
        let leakage = half_normal(&mut rng);
        let internal = half_normal(&mut rng);
        let switching = half_normal(&mut rng);
        let frames = (0..spec.t_sim).map(|_| half_normal(&mut rng)).collect();
        cells.push(CellInstance {
            id: format!("c{i}"),
            x_um: x,
            y_um: y,
            leakage_w: leakage,
            internal_w: internal,
            switching_w: switching,
            trace: PowerTrace { frames },
        });
    }

    let layout = Layout {
        width_um: q9(spec.width_um),
        height_um: q9(spec.height_um),
        cells,
        pdn: PdnSpec {
            vdd_v: GEN_VDD_V,
            vstrip_x_um: strips,
            pad_xy_um: pads,
            r_lrl_ohm_per_tile: GEN_R_LRL_OHM,
            r_hpr_ohm_per_tile: GEN_R_HPR_OHM,
            r_via_ohm: GEN_R_VIA_OHM,
        },
    };
    // explicit strip lists can smuggle in duplicates or off-die taps
    if let Some(first) = validate(&layout).first() {
        return Err(Error::Invalid(first.to_string()));
    }
    Ok(layout)
}
