use std::fmt::Write;

use culture_bridge::metrics::DensitySeries;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn polyline(xs: &[f64], ys: &[f64], x_range: (f64, f64), y_max: f64, colour: &str) -> String {
    let sx = |x: f64| MARGIN + (x - x_range.0) / (x_range.1 - x_range.0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - y / y_max * (HEIGHT - 2.0 * MARGIN);
    let points: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        points.join(" ")
    )
}

/// Line plot of the reference and candidate densities of one variable.
pub fn density_svg(variable: &str, unit: &str, series: &DensitySeries) -> String {
    let (lo, hi) = match (series.grid.first(), series.grid.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => (lo, hi),
        _ => (0.0, 1.0),
    };
    let peak = series
        .density
        .iter()
        .chain(&series.reference)
        .copied()
        .fold(0.0, f64::max);
    let y_max = if peak > 0.0 { peak * 1.05 } else { 1.0 };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{x0}\" y=\"{}\" text-anchor=\"middle\">{lo:.3}</text>",
        y0 + 16.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{x1}\" y=\"{}\" text-anchor=\"middle\">{hi:.3}</text>",
        y0 + 16.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{variable} ({unit})</text>",
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y_max:.3}</text>",
        x0 - 4.0,
        y1 + 4.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">0</text>",
        x0 - 4.0,
        y0 + 4.0
    );
    svg.push_str(&polyline(&series.grid, &series.reference, (lo, hi), y_max, "#1f77b4"));
    svg.push_str(&polyline(&series.grid, &series.density, (lo, hi), y_max, "#ff7f0e"));
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" fill=\"#1f77b4\">reference</text>",
        x1 - 110.0,
        y1 + 4.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" fill=\"#ff7f0e\">candidate</text>",
        x1 - 110.0,
        y1 + 20.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_lines_inside_the_canvas() {
        let series = DensitySeries {
            grid: vec![-1.0, 0.0, 1.0],
            density: vec![0.1, 0.5, 0.1],
            reference: vec![0.2, 0.4, 0.2],
            bandwidth: 0.3,
            reference_bandwidth: 0.3,
        };
        let svg = density_svg("ax", "m/s^2", &series);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let coords: Vec<f64> = svg
            .split("points=\"")
            .skip(1)
            .flat_map(|s| {
                s.split('"')
                    .next()
                    .unwrap()
                    .split([' ', ','])
                    .map(|v| v.parse::<f64>().unwrap())
                    .collect::<Vec<_>>()
            })
            .collect();
        assert!(coords.iter().all(|&c| (0.0..=WIDTH).contains(&c)));
    }
}
