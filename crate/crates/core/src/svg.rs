//! Static SVG drawings of an instance and a solution.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GeoGraph;
use crate::model::{Instance, Solution, Status};

const PALETTE: [&str; 8] = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#9a6324"];
const SIZE: f64 = 800.0;
const MARGIN: f64 = 20.0;

/// Boxes per node (one color per tree node), optional grid edges beneath,
/// then solution segments and node markers. The y axis points up.
pub fn render_svg(inst: &Instance, sol: Option<&Solution>, grid: Option<&GeoGraph>) -> Result<String> {
    if inst.dimension != 2 {
        return Err(Error::Unsupported(format!("drawing needs dimension 2, got {}", inst.dimension)));
    }
    let mut ext = inst.extent();
    if let Some(s) = sol {
        for p in s.positions.values() {
            ext = ext.hull(&crate::model::AxisBox::point(p));
        }
    }
    let w = (ext.hi.0[0] - ext.lo.0[0]).max(ext.hi.0[1] - ext.lo.0[1]).max(1e-9);
    let scale = (SIZE - 2.0 * MARGIN) / w;
    let tx = |x: f64| MARGIN + (x - ext.lo.0[0]) * scale;
    let ty = |y: f64| SIZE - MARGIN - (y - ext.lo.0[1]) * scale;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#).unwrap();
    writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#).unwrap();
    if let Some(g) = grid {
        writeln!(s, r##"<g class="grid" stroke="#888888" stroke-opacity="0.25" stroke-width="0.5">"##).unwrap();
        for e in &g.edges {
            let (a, b) = (&g.nodes[e.a].0, &g.nodes[e.b].0);
            writeln!(s, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#, tx(a[0]), ty(a[1]), tx(b[0]), ty(b[1])).unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }
    for (v, nb) in inst.neighborhoods.iter().enumerate() {
        let color = PALETTE[v % PALETTE.len()];
        for b in &nb.components {
            writeln!(
                s,
                r#"<rect class="region" data-node="{v}" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{color}" fill-opacity="0.2" stroke="{color}"/>"#,
                tx(b.lo.0[0]),
                ty(b.hi.0[1]),
                (b.hi.0[0] - b.lo.0[0]) * scale,
                (b.hi.0[1] - b.lo.0[1]) * scale
            )
            .unwrap();
        }
    }
    if let Some(sol) = sol.filter(|s| s.status != Status::Infeasible) {
        for seg in &sol.edges {
            writeln!(
                s,
                r#"<line class="segment" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="black" stroke-width="2"/>"#,
                tx(seg.from.0[0]),
                ty(seg.from.0[1]),
                tx(seg.to.0[0]),
                ty(seg.to.0[1])
            )
            .unwrap();
        }
        for (&id, p) in &sol.positions {
            let (fill, r) = if id < inst.node_count() { (PALETTE[id % PALETTE.len()], 5.0) } else { ("black", 3.0) };
            writeln!(
                s,
                r#"<circle class="node" data-node="{id}" cx="{:.3}" cy="{:.3}" r="{r}" fill="{fill}"/>"#,
                tx(p.0[0]),
                ty(p.0[1])
            )
            .unwrap();
        }
    }
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}

pub fn write_svg(inst: &Instance, sol: Option<&Solution>, grid: Option<&GeoGraph>, path: &Path) -> Result<()> {
    let text = render_svg(inst, sol, grid)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::{solve_continuous, ContinuousOptions};
    use crate::grid::{build_grid, GridKind};
    use crate::model::{AxisBox, Metric, Neighborhood, RootedTopology};

    fn toy() -> Instance {
        Instance::new(
            RootedTopology::from_parents(&[0, 0]).unwrap(),
            vec![
                Neighborhood::single(AxisBox::new([0., 0.], [1., 1.])),
                Neighborhood::single(AxisBox::new([-1., -3.], [0., -2.])),
                Neighborhood::single(AxisBox::new([1., -3.], [2., -2.])),
            ],
            Metric::L2,
        )
        .unwrap()
    }

    #[test]
    fn counts_elements() {
        let inst = toy();
        let sol = solve_continuous(&inst, &ContinuousOptions::default()).unwrap();
        let svg = render_svg(&inst, Some(&sol), None).unwrap();
        assert_eq!(svg.matches(r#"class="region""#).count(), 3);
        assert_eq!(svg.matches(r#"class="segment""#).count(), 3);
        assert_eq!(svg, render_svg(&inst, Some(&sol), None).unwrap());

        let empty = render_svg(&inst, Some(&Solution::infeasible(0.0)), None).unwrap();
        assert_eq!(empty.matches(r#"class="region""#).count(), 3);
        assert_eq!(empty.matches(r#"class="segment""#).count(), 0);
    }

    #[test]
    fn grid_beneath_tree() {
        let inst = toy().with_metric(Metric::L1);
        let g = build_grid(&inst, GridKind::Hanan, 0.0, &[]).unwrap();
        let svg = render_svg(&inst, None, Some(&g)).unwrap();
        let grid_at = svg.find(r#"class="grid""#).unwrap();
        assert!(grid_at < svg.find(r#"class="region""#).unwrap());
        assert!(svg.contains(r#"stroke-opacity="0.25""#));
    }

    #[test]
    fn rejects_3d() {
        let inst = Instance::new(
            RootedTopology::from_parents(&[0]).unwrap(),
            vec![Neighborhood::single(AxisBox::new([0., 0., 0.], [1., 1., 1.])); 2],
            Metric::L2,
        )
        .unwrap();
        assert!(matches!(render_svg(&inst, None, None), Err(Error::Unsupported(_))));
    }
}
