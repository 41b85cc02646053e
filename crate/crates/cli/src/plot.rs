//! SVG figures rendered from a finished report.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use plotters::prelude::*;
use unduloid::chsolver::CHSolution;

use crate::cache::write_atomic;
use crate::report::VerificationReport;

pub const KINDS: [&str; 5] = ["curves", "discriminants", "profile", "heatmap", "bands"];

const SIZE: (u32, u32) = (800, 520);
const HEATMAP_CELLS: usize = 120;

fn palette(i: usize) -> RGBColor {
    const C: [RGBColor; 6] = [
        RGBColor(31, 119, 180),
        RGBColor(214, 39, 40),
        RGBColor(44, 160, 44),
        RGBColor(148, 103, 189),
        RGBColor(255, 127, 14),
        RGBColor(23, 190, 207),
    ];
    C[i % C.len()]
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(v), a.1.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = 0.05 * (hi - lo).max(1e-12);
    (lo - pad, hi + pad)
}

fn plot_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("rendering failed: {e:?}")
}

fn save(out: &Path, name: &str, svg: String) -> Result<PathBuf> {
    let path = out.join(name);
    write_atomic(&path, svg.as_bytes())?;
    Ok(path)
}

/// Render `kind` for every block of the report into `out`.
pub fn emit_plots(report: &VerificationReport, kind: &str, data_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    match kind {
        "curves" => curves(report, out).map(|p| vec![p]),
        "discriminants" => discriminants(report, out),
        "profile" => profile(report, out).map(|p| vec![p]),
        "heatmap" => heatmap(report, data_dir, out),
        "bands" => bands(report, out),
        other => bail!("unknown plot kind '{other}'; valid kinds: {}", KINDS.join(", ")),
    }
}

fn curves(report: &VerificationReport, out: &Path) -> Result<PathBuf> {
    if report.geometry.is_empty() {
        bail!("report has no geometry blocks");
    }
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let (z0, z1) = span(report.geometry.iter().flat_map(|b| b.curve.iter().map(|p| p[1])));
        let (_, r1) = span(report.geometry.iter().flat_map(|b| b.curve.iter().map(|p| p[0])));
        let mut chart = ChartBuilder::on(&root)
            .caption("Generating curves over one period", ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(z0..z1, 0.0..r1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("z")
            .y_desc("r")
            .draw()
            .map_err(plot_err)?;
        for (i, b) in report.geometry.iter().enumerate() {
            let c = palette(i);
            chart
                .draw_series(LineSeries::new(b.curve.iter().map(|p| (p[1], p[0])), &c))
                .map_err(plot_err)?
                .label(format!("tau = {}", b.tau))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE)
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    save(out, "curves.svg", svg)
}

fn discriminants(report: &VerificationReport, out: &Path) -> Result<Vec<PathBuf>> {
    if report.hill.is_empty() {
        bail!("report has no Hill tables");
    }
    let mut files = Vec::new();
    for b in &report.hill {
        let mut svg = String::new();
        {
            let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
            root.fill(&WHITE).map_err(plot_err)?;
            let n_max = b.table.len() as f64;
            let top = b.table.iter().map(|r| r.hill.discriminant.abs()).fold(2.0f64, f64::max) * 2.0;
            let mut chart = ChartBuilder::on(&root)
                .caption(format!("Hill discriminants, tau = {}", b.tau), ("sans-serif", 20))
                .margin(12)
                .x_label_area_size(40)
                .y_label_area_size(60)
                .build_cartesian_2d(-0.5..n_max - 0.5, (1.0..top).log_scale())
                .map_err(plot_err)?;
            chart
                .configure_mesh()
                .x_desc("angular mode n")
                .y_desc("|Delta_n|")
                .draw()
                .map_err(plot_err)?;
            chart
                .draw_series(b.table.iter().map(|r| {
                    let n = r.hill.mode_n as f64;
                    let d = r.hill.discriminant.abs().max(1.0);
                    Rectangle::new([(n - 0.3, 1.0), (n + 0.3, d)], palette(0).filled())
                }))
                .map_err(plot_err)?;
            chart
                .draw_series(LineSeries::new(
                    vec![(-0.5, 2.0), (n_max - 0.5, 2.0)],
                    RED.stroke_width(2),
                ))
                .map_err(plot_err)?
                .label("|Delta| = 2")
                .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
            chart
                .configure_series_labels()
                .background_style(WHITE)
                .border_style(BLACK)
                .draw()
                .map_err(plot_err)?;
            root.present().map_err(plot_err)?;
        }
        files.push(save(out, &format!("discriminants_tau{}.svg", b.tau), svg)?);
    }
    Ok(files)
}

fn profile(report: &VerificationReport, out: &Path) -> Result<PathBuf> {
    if report.profile.is_empty() {
        bail!("report has no profile blocks");
    }
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let (t0, t1) = span(report.profile[0].samples.iter().map(|s| s[0]));
        let mut chart = ChartBuilder::on(&root)
            .caption("Interface profile U against tanh(t / sqrt 2)", ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(t0..t1, -1.1..1.1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("t")
            .y_desc("U")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(
                report.profile[0].samples.iter().map(|s| (s[0], s[2])),
                BLACK.stroke_width(2),
            ))
            .map_err(plot_err)?
            .label("Theta")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK));
        for (i, b) in report.profile.iter().enumerate() {
            let c = palette(i + 1);
            chart
                .draw_series(LineSeries::new(b.samples.iter().map(|s| (s[0], s[1])), &c))
                .map_err(plot_err)?
                .label(format!("U, epsilon = {}", b.epsilon))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
        }
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::LowerRight)
            .background_style(WHITE)
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    save(out, "profile.svg", svg)
}

/// Diverging blue-white-red map of `u ∈ [-1, 1]`.
fn diverging(u: f64) -> RGBColor {
    let x = u.clamp(-1.0, 1.0);
    let lerp = |a: f64, b: f64, t: f64| (a + (b - a) * t).round() as u8;
    if x < 0.0 {
        let t = 1.0 + x;
        RGBColor(lerp(33.0, 247.0, t), lerp(102.0, 247.0, t), lerp(172.0, 247.0, t))
    } else {
        RGBColor(lerp(247.0, 178.0, x), lerp(247.0, 24.0, x), lerp(247.0, 43.0, x))
    }
}

fn heatmap(report: &VerificationReport, data_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for b in &report.blocks {
        let Some(sd) = &b.solve else { continue };
        let path = data_dir.join(&sd.solution_file);
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let sol = CHSolution::decode_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        let g = sol.grid;
        let zmax = if g.half_cell { 0.5 * g.t_period } else { g.t_period };
        let (nr, nz) = (HEATMAP_CELLS.min(g.nr), HEATMAP_CELLS.min(g.nz));
        let (dr, dz) = (g.rmax / nr as f64, zmax / nz as f64);
        let mut svg = String::new();
        {
            let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
            root.fill(&WHITE).map_err(plot_err)?;
            let mut chart = ChartBuilder::on(&root)
                .caption(
                    format!("u on the cell, tau = {}, epsilon = {}", b.tau, b.epsilon),
                    ("sans-serif", 20),
                )
                .margin(12)
                .x_label_area_size(40)
                .y_label_area_size(50)
                .build_cartesian_2d(0.0..zmax, 0.0..g.rmax)
                .map_err(plot_err)?;
            chart
                .configure_mesh()
                .disable_mesh()
                .x_desc("z")
                .y_desc("r")
                .draw()
                .map_err(plot_err)?;
            let mut cells = Vec::with_capacity(nr * nz);
            for j in 0..nz {
                for i in 0..nr {
                    let (r, z) = ((i as f64 + 0.5) * dr, (j as f64 + 0.5) * dz);
                    let u = sol.interpolate(r, z);
                    cells.push(Rectangle::new(
                        [
                            (j as f64 * dz, i as f64 * dr),
                            ((j + 1) as f64 * dz, (i + 1) as f64 * dr),
                        ],
                        diverging(u).filled(),
                    ));
                }
            }
            chart.draw_series(cells).map_err(plot_err)?;
            root.present().map_err(plot_err)?;
        }
        files.push(save(out, &format!("heatmap_tau{}_eps{}.svg", b.tau, b.epsilon), svg)?);
    }
    if files.is_empty() {
        bail!("report has no solved blocks");
    }
    Ok(files)
}

fn bands(report: &VerificationReport, out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for b in &report.blocks {
        let Some(bl) = &b.bloch else { continue };
        let entries = &bl.spectrum.entries;
        let mut ms: Vec<usize> = entries.iter().map(|e| e.m).collect();
        ms.sort_unstable();
        ms.dedup();
        let (l0, l1) = span(entries.iter().filter_map(|e| e.eigenvalues.first().copied()));
        let mut svg = String::new();
        {
            let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
            root.fill(&WHITE).map_err(plot_err)?;
            let mut chart = ChartBuilder::on(&root)
                .caption(
                    format!(
                        "Bloch eigenvalue nearest zero, tau = {}, epsilon = {}",
                        b.tau, b.epsilon
                    ),
                    ("sans-serif", 20),
                )
                .margin(12)
                .x_label_area_size(40)
                .y_label_area_size(70)
                .build_cartesian_2d(0.0..2.0 * std::f64::consts::PI, l0.min(0.0)..l1.max(0.0))
                .map_err(plot_err)?;
            chart
                .configure_mesh()
                .x_desc("zeta")
                .y_desc("lambda")
                .draw()
                .map_err(plot_err)?;
            for (i, &m) in ms.iter().enumerate() {
                let mut pts: Vec<(f64, f64)> = entries
                    .iter()
                    .filter(|e| e.m == m)
                    .filter_map(|e| e.eigenvalues.first().map(|&l| (e.zeta, l)))
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let c = palette(i);
                chart
                    .draw_series(LineSeries::new(pts.clone(), &c))
                    .map_err(plot_err)?
                    .label(format!("m = {m}"))
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
                chart
                    .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, c.filled())))
                    .map_err(plot_err)?;
            }
            chart
                .configure_series_labels()
                .position(SeriesLabelPosition::LowerRight)
                .background_style(WHITE)
                .border_style(BLACK)
                .draw()
                .map_err(plot_err)?;
            root.present().map_err(plot_err)?;
        }
        files.push(save(out, &format!("bands_tau{}_eps{}.svg", b.tau, b.epsilon), svg)?);
    }
    if files.is_empty() {
        bail!("report has no Bloch blocks");
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn unknown_kind_lists_valid_kinds() {
        let r = VerificationReport::empty(RunConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let e = emit_plots(&r, "pie", dir.path(), dir.path()).unwrap_err().to_string();
        for k in KINDS {
            assert!(e.contains(k));
        }
    }

    #[test]
    fn colour_map_ends() {
        assert_eq!(diverging(-1.0), RGBColor(33, 102, 172));
        assert_eq!(diverging(0.0), RGBColor(247, 247, 247));
        assert_eq!(diverging(1.0), RGBColor(178, 24, 43));
    }
}
