//! Deterministic SVG rendering. Composition runs left to right, products
//! stack vertically behind dashed separators, every axis becomes a wire,
//! reindexings draw as hexagons, elements as left-pointing pentagons,
//! learned operations in bold, blocks as backdrops. Equal terms produce
//! byte-identical output.

use std::fmt::Write as _;

use crate::arraybr::{ArrayObject, BaseOp, Datatype, RootOp};
use crate::error::Result;
use crate::term::{ProductObject, Term};

#[derive(Clone, Copy, Debug, Default)]
pub struct Options {
    /// Draw the arrowed datatype wire even for implicit real arrays.
    pub show_dtypes: bool,
}

const COL: f64 = 130.0;
const REARRANGE_COL: f64 = 70.0;
const WIRE: f64 = 16.0;
const ARRAY_GAP: f64 = 14.0;
const PART_GAP: f64 = 26.0;
const BLOCK_PAD: f64 = 14.0;
const MARGIN: f64 = 40.0;

fn px(v: f64) -> String {
    format!("{v:.1}")
}

/// Wires drawn for one array: one per axis plus the datatype wire when it
/// is explicit (non-real) or requested.
fn wires(o: &ArrayObject, opt: &Options) -> usize {
    let dtype_wire = usize::from(opt.show_dtypes || o.dtype != Datatype::Real);
    o.shape.rank() + dtype_wire
}

fn object_height(o: &ArrayObject, opt: &Options) -> f64 {
    wires(o, opt).max(1) as f64 * WIRE
}

fn interface_height(objs: &[ArrayObject], opt: &Options) -> f64 {
    if objs.is_empty() {
        return WIRE;
    }
    let body: f64 = objs.iter().map(|o| object_height(o, opt)).sum();
    body + ARRAY_GAP * (objs.len() - 1) as f64
}

/// Anchor y per wire, grouped by array, top-aligned at `y`.
fn anchors(objs: &[ArrayObject], y: f64, opt: &Options) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(objs.len());
    let mut cursor = y;
    for o in objs {
        let n = wires(o, opt);
        out.push((0..n).map(|i| cursor + (i as f64 + 0.5) * WIRE).collect());
        cursor += object_height(o, opt) + ARRAY_GAP;
    }
    out
}

pub fn term_width(t: &Term) -> f64 {
    match t {
        Term::Root { .. } | Term::Element { .. } => COL,
        Term::Rearrangement { .. } => REARRANGE_COL,
        Term::Composed(parts) => parts.iter().map(term_width).sum(),
        Term::Product(parts) => parts.iter().map(term_width).fold(0.0, f64::max),
        Term::Block { body, .. } => term_width(body) + 2.0 * BLOCK_PAD,
    }
}

fn term_height(t: &Term, opt: &Options) -> f64 {
    let iface = |objs: &ProductObject| interface_height(objs, opt);
    match t {
        Term::Root { .. } | Term::Rearrangement { .. } | Term::Element { .. } => {
            let d = t.dom().map(|o| iface(&o)).unwrap_or(WIRE);
            let c = t.cod().map(|o| iface(&o)).unwrap_or(WIRE);
            d.max(c)
        }
        Term::Composed(parts) => {
            parts.iter().map(|p| term_height(p, opt)).fold(WIRE, f64::max)
        }
        Term::Product(parts) => {
            let body: f64 = parts.iter().map(|p| term_height(p, opt)).sum();
            body + PART_GAP * (parts.len().saturating_sub(1)) as f64
        }
        Term::Block { body, .. } => term_height(body, opt) + 2.0 * BLOCK_PAD,
    }
}

fn curve(out: &mut String, x0: f64, y0: f64, x1: f64, y1: f64, class: &str) {
    let mid = (x0 + x1) / 2.0;
    let _ = writeln!(
        out,
        "<path class=\"{class}\" d=\"M {} {} C {} {} {} {} {} {}\"/>",
        px(x0),
        px(y0),
        px(mid),
        px(y0),
        px(mid),
        px(y1),
        px(x1),
        px(y1)
    );
}

fn hline(out: &mut String, x0: f64, x1: f64, y: f64, class: &str) {
    let _ = writeln!(
        out,
        "<path class=\"{class}\" d=\"M {} {} L {} {}\"/>",
        px(x0),
        px(y),
        px(x1),
        px(y)
    );
}

fn label(out: &mut String, x: f64, y: f64, class: &str, text: &str, anchor: &str) {
    let escaped = text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    let _ = writeln!(
        out,
        "<text class=\"{class}\" x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{escaped}</text>",
        px(x),
        px(y)
    );
}

struct Renderer<'a> {
    opt: &'a Options,
    svg: String,
}

impl Renderer<'_> {
    /// Draws `t` in the band starting at (x, y); incoming wires arrive at
    /// `left`, the returned anchors are where outgoing wires leave x+width.
    fn render(&mut self, t: &Term, x: f64, y: f64, left: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match t {
            Term::Composed(parts) => {
                let mut cur = left.to_vec();
                let mut cx = x;
                for p in parts {
                    cur = self.render(p, cx, y, &cur)?;
                    cx += term_width(p);
                }
                Ok(cur)
            }
            Term::Product(parts) => {
                let width = term_width(t);
                let mut out = Vec::new();
                let mut cy = y;
                let mut off = 0;
                for (k, p) in parts.iter().enumerate() {
                    if k > 0 {
                        let sep_y = cy - PART_GAP / 2.0;
                        let _ = writeln!(
                            self.svg,
                            "<path class=\"separator\" d=\"M {} {} L {} {}\"/>",
                            px(x),
                            px(sep_y),
                            px(x + width),
                            px(sep_y)
                        );
                    }
                    let n = p.dom()?.len();
                    let rights = self.render(p, x, cy, &left[off..off + n])?;
                    // equalize column widths inside the stack
                    let w = term_width(p);
                    for group in &rights {
                        for &wy in group {
                            if w < width {
                                hline(&mut self.svg, x + w, x + width, wy, "wire");
                            }
                        }
                    }
                    out.extend(rights);
                    off += n;
                    cy += term_height(p, self.opt) + PART_GAP;
                }
                Ok(out)
            }
            Term::Block { tag, repeat, body } => {
                let w = term_width(t);
                let h = term_height(t, self.opt);
                let _ = writeln!(
                    self.svg,
                    "<rect class=\"backdrop\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" rx=\"6\"/>",
                    px(x + 2.0),
                    px(y - BLOCK_PAD + 2.0),
                    px(w - 4.0),
                    px(h - 4.0)
                );
                let title = match repeat {
                    Some(r) => format!("{tag} ({r}x)"),
                    None => tag.clone(),
                };
                label(&mut self.svg, x + w / 2.0, y - BLOCK_PAD + 14.0, "blocklabel", &title, "middle");
                // route wires through the padding
                let inner_left = anchors(&body.dom()?, y, self.opt);
                for (a, b) in left.iter().zip(&inner_left) {
                    for (&y0, &y1) in a.iter().zip(b) {
                        curve(&mut self.svg, x, y0, x + BLOCK_PAD, y1, "wire");
                    }
                }
                let inner_right = self.render(body, x + BLOCK_PAD, y, &inner_left)?;
                let mut outer = Vec::new();
                for group in &inner_right {
                    let mut g = Vec::new();
                    for &wy in group {
                        hline(&mut self.svg, x + w - BLOCK_PAD, x + w, wy, "wire");
                        g.push(wy);
                    }
                    outer.push(g);
                }
                Ok(outer)
            }
            Term::Rearrangement { mapping, dom_family } => {
                let w = term_width(t);
                let cod = t.cod()?;
                let right = anchors(&cod, y, self.opt);
                let lengths: Vec<usize> =
                    dom_family.iter().map(|o| wires(o, self.opt).max(1)).collect();
                let wiremap = mapping.flatten(&lengths)?;
                let flat_left: Vec<f64> = left.iter().flatten().copied().collect();
                let flat_right: Vec<f64> = right.iter().flatten().copied().collect();
                for (j, &src) in wiremap.targets().iter().enumerate() {
                    if src < flat_left.len() && j < flat_right.len() {
                        curve(&mut self.svg, x, flat_left[src], x + w, flat_right[j], "wire");
                    }
                }
                // dropped wires end in a stub
                for (i, &y0) in flat_left.iter().enumerate() {
                    if !wiremap.targets().contains(&i) {
                        hline(&mut self.svg, x, x + w / 3.0, y0, "wire");
                    }
                }
                Ok(right)
            }
            Term::Element { values: _, cod } => {
                let w = term_width(t);
                let right = anchors(cod, y, self.opt);
                let h = interface_height(cod, self.opt);
                let (bx0, bx1) = (x + 18.0, x + w - 24.0);
                let (by0, by1) = (y + 1.0, y + h - 1.0);
                let ym = (by0 + by1) / 2.0;
                let _ = writeln!(
                    self.svg,
                    "<polygon class=\"pentagon\" points=\"{},{} {},{} {},{} {},{} {},{}\"/>",
                    px(bx0),
                    px(ym),
                    px(bx0 + 14.0),
                    px(by0),
                    px(bx1),
                    px(by0),
                    px(bx1),
                    px(by1),
                    px(bx0 + 14.0),
                    px(by1)
                );
                label(&mut self.svg, (bx0 + bx1) / 2.0 + 7.0, ym + 4.0, "label", "elem", "middle");
                for group in &right {
                    for &wy in group {
                        hline(&mut self.svg, bx1, x + w, wy, "wire");
                    }
                }
                Ok(right)
            }
            Term::Root { op, .. } => {
                let w = term_width(t);
                let dom = t.dom()?;
                let cod = t.cod()?;
                let dh = interface_height(&dom, self.opt);
                let ch = interface_height(&cod, self.opt);
                let own_left = anchors(&dom, y, self.opt);
                let right = anchors(&cod, y, self.opt);
                let (bx0, bx1) = (x + 26.0, x + w - 26.0);
                let (by0, by1) = (y + 1.0, y + dh.max(ch) - 1.0);
                for (a, b) in left.iter().zip(&own_left) {
                    for (&y0, &y1) in a.iter().zip(b) {
                        curve(&mut self.svg, x, y0, bx0, y1, "wire");
                    }
                }
                for group in &right {
                    for &wy in group {
                        hline(&mut self.svg, bx1, x + w, wy, "wire");
                    }
                }
                let ym = (by0 + by1) / 2.0;
                match op {
                    RootOp::Reindexing { .. } => {
                        let _ = writeln!(
                            self.svg,
                            "<polygon class=\"hexagon\" points=\"{},{} {},{} {},{} {},{} {},{} {},{}\"/>",
                            px(bx0),
                            px(ym),
                            px(bx0 + 12.0),
                            px(by0),
                            px(bx1 - 12.0),
                            px(by0),
                            px(bx1),
                            px(ym),
                            px(bx1 - 12.0),
                            px(by1),
                            px(bx0 + 12.0),
                            px(by1)
                        );
                        label(&mut self.svg, (bx0 + bx1) / 2.0, ym + 4.0, "label", "reindex", "middle");
                    }
                    RootOp::Broadcast(b) => {
                        let learned = matches!(
                            b.base,
                            BaseOp::Linear { .. } | BaseOp::RmsNorm { .. } | BaseOp::Embedding { .. }
                        );
                        let class = if learned { "root learned" } else { "root" };
                        let _ = writeln!(
                            self.svg,
                            "<rect class=\"{class}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" rx=\"4\"/>",
                            px(bx0),
                            px(by0),
                            px(bx1 - bx0),
                            px(by1 - by0)
                        );
                        let lclass = if learned { "label learned" } else { "label" };
                        label(&mut self.svg, (bx0 + bx1) / 2.0, ym + 4.0, lclass, b.base.name(), "middle");
                    }
                }
                Ok(right)
            }
        }
    }
}

pub fn render_svg(t: &Term, opt: &Options) -> Result<String> {
    let width = term_width(t) + 2.0 * MARGIN;
    let height = term_height(t, opt) + 2.0 * MARGIN;
    let dom = t.dom()?;
    let cod = t.cod()?;

    let mut r = Renderer { opt, svg: String::new() };
    let left = anchors(&dom, MARGIN, opt);
    for (o, group) in dom.iter().zip(&left) {
        let names: Vec<String> = o.shape.0.iter().map(|a| a.name.clone()).collect();
        let dtype_wire = wires(o, opt) > o.shape.rank();
        for (i, &wy) in group.iter().enumerate() {
            let text = if dtype_wire && i == group.len() - 1 {
                o.dtype.describe()
            } else if i < names.len() {
                names[i].clone()
            } else {
                continue;
            };
            label(&mut r.svg, MARGIN - 4.0, wy - 3.0, "axislabel", &text, "end");
            if dtype_wire && i == group.len() - 1 {
                let _ = writeln!(
                    r.svg,
                    "<path class=\"dtype\" d=\"M {} {} L {} {}\" marker-end=\"url(#arrow)\"/>",
                    px(MARGIN - 22.0),
                    px(wy),
                    px(MARGIN - 6.0),
                    px(wy)
                );
            }
        }
    }
    let right = r.render(t, MARGIN, MARGIN, &left)?;
    for (o, group) in cod.iter().zip(&right) {
        for (i, &wy) in group.iter().enumerate() {
            if i < o.shape.rank() {
                label(&mut r.svg, width - MARGIN + 4.0, wy - 3.0, "axislabel", &o.shape.0[i].name, "start");
            }
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" font-family=\"monospace\" font-size=\"11\">",
        px(width),
        px(height)
    );
    out.push_str(concat!(
        "<defs>",
        "<marker id=\"arrow\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" orient=\"auto\">",
        "<path d=\"M 0 0 L 6 3 L 0 6 z\"/>",
        "</marker>",
        "<style>",
        ".wire{fill:none;stroke:#333;stroke-width:1}",
        ".dtype{fill:none;stroke:#333;stroke-width:1}",
        ".separator{fill:none;stroke:#888;stroke-width:1;stroke-dasharray:6 4}",
        ".root{fill:#fff;stroke:#000;stroke-width:1.2}",
        ".root.learned{stroke-width:2.4}",
        ".hexagon{fill:#eef;stroke:#000;stroke-width:1.2}",
        ".pentagon{fill:#efe;stroke:#000;stroke-width:1.2}",
        ".backdrop{fill:#f6f6f6;stroke:#aaa;stroke-width:1;stroke-dasharray:2 3}",
        ".label{fill:#000}",
        ".label.learned{font-weight:bold}",
        ".blocklabel{fill:#666;font-size:9px}",
        ".axislabel{fill:#444;font-size:9px}",
        "</style>",
        "</defs>\n",
    ));
    out.push_str(&r.svg);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Structural element counts used by the golden audits.
pub fn expected_counts(t: &Term) -> (usize, usize, usize, usize, usize) {
    // (broadcast roots, hexagons, pentagons, separators, backdrops)
    match t {
        Term::Root { op: RootOp::Broadcast(_), .. } => (1, 0, 0, 0, 0),
        Term::Root { op: RootOp::Reindexing { .. }, .. } => (0, 1, 0, 0, 0),
        Term::Element { .. } => (0, 0, 1, 0, 0),
        Term::Rearrangement { .. } => (0, 0, 0, 0, 0),
        Term::Composed(parts) => parts.iter().map(expected_counts).fold(
            (0, 0, 0, 0, 0),
            |(a, b, c, d, e), (f, g, h, i, j)| (a + f, b + g, c + h, d + i, e + j),
        ),
        Term::Product(parts) => {
            let mut acc = parts.iter().map(expected_counts).fold(
                (0, 0, 0, 0, 0),
                |(a, b, c, d, e), (f, g, h, i, j)| (a + f, b + g, c + h, d + i, e + j),
            );
            acc.3 += parts.len().saturating_sub(1);
            acc
        }
        Term::Block { body, .. } => {
            let mut acc = expected_counts(body);
            acc.4 += 1;
            acc
        }
    }
}

pub fn count_class(svg: &str, class: &str) -> usize {
    svg.matches(&format!("class=\"{class}\"")).count()
}
