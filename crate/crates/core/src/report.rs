//! CSV and SVG emitters for annotated trajectories.
//!
//! CSV values use 17 significant digits so a reader recovers the exact f64
//! bits. The SVG output is a self-contained static log-log line chart with no
//! scripting, sized for quick inspection in a browser.

use std::io::{self, Write};

use crate::diagnostics::TrajectorySample;

pub const CSV_HEADER: &str = "t,beta,f_gap,grad_norm_sq,dist_center_sq,dist_minnorm_sq,energy";

fn write_row<W: Write>(w: &mut W, prefix: Option<&str>, s: &TrajectorySample) -> io::Result<()> {
    if let Some(label) = prefix {
        write!(w, "{label},")?;
    }
    writeln!(
        w,
        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        s.t, s.beta, s.f_gap, s.grad_norm_sq, s.dist_center_sq, s.dist_minnorm_sq, s.energy
    )
}

pub fn write_csv<W: Write>(w: &mut W, samples: &[TrajectorySample]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for s in samples {
        write_row(w, None, s)?;
    }
    Ok(())
}

/// Long-format CSV for multi-system comparisons: one label column in front of
/// the usual schema, groups concatenated in the order given.
pub fn write_combined_csv<W: Write>(
    w: &mut W,
    groups: &[(String, Vec<TrajectorySample>)],
) -> io::Result<()> {
    writeln!(w, "system,{CSV_HEADER}")?;
    for (label, samples) in groups {
        for s in samples {
            write_row(w, Some(label), s)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 600.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Decade tick positions covering [lo, hi] in log10 space, thinned so at most
/// twelve labels appear.
fn decade_ticks(lo: f64, hi: f64) -> Vec<i32> {
    let first = lo.floor() as i32;
    let last = hi.ceil() as i32;
    let span = (last - first).max(1);
    let stride = (span as usize).div_ceil(12).max(1) as i32;
    (first..=last).step_by(stride as usize).collect()
}

/// Render series as a log-log line chart. Points with a nonpositive or
/// non-finite coordinate cannot be placed on log axes and are dropped; a
/// series that loses every point still appears in the legend.
pub fn line_chart_loglog(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> String {
    let cleaned: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| {
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && *x > 0.0 && *y > 0.0)
                .map(|(x, y)| (x.log10(), y.log10()))
                .collect();
            (s.label.clone(), pts)
        })
        .collect();

    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for (_, pts) in &cleaned {
        for &(x, y) in pts {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    let empty = !x_lo.is_finite();
    if empty {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_hi - x_lo < 1e-9 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if y_hi - y_lo < 1e-9 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut out = String::with_capacity(16 * 1024);
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"17\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));

    for k in decade_ticks(x_lo, x_hi) {
        let x = sx(k as f64);
        if !(MARGIN_L - 1.0..=WIDTH - MARGIN_R + 1.0).contains(&x) {
            continue;
        }
        out.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{MARGIN_T}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
             stroke=\"#dddddd\"/>\n",
            HEIGHT - MARGIN_B
        ));
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">1e{k}</text>\n",
            HEIGHT - MARGIN_B + 20.0
        ));
    }
    for k in decade_ticks(y_lo, y_hi) {
        let y = sy(k as f64);
        if !(MARGIN_T - 1.0..=HEIGHT - MARGIN_B + 1.0).contains(&y) {
            continue;
        }
        out.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#dddddd\"/>\n",
            WIDTH - MARGIN_R
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{k}</text>\n",
            MARGIN_L - 8.0,
            y + 4.0
        ));
    }
    out.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333333\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    ));

    for (i, (_, pts)) in cleaned.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            coords.join(" ")
        ));
    }
    if empty {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#777777\">no positive data \
             to plot</text>\n",
            WIDTH / 2.0,
            HEIGHT / 2.0
        ));
    }

    let legend_x = MARGIN_L + 14.0;
    let mut legend_y = MARGIN_T + 18.0;
    for (i, (label, _)) in cleaned.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        out.push_str(&format!(
            "<line x1=\"{legend_x}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" \
             stroke=\"{color}\" stroke-width=\"2.5\"/>\n",
            legend_y - 4.0,
            legend_x + 26.0,
            legend_y - 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{legend_y:.1}\">{}</text>\n",
            legend_x + 34.0,
            escape(label)
        ));
        legend_y += 18.0;
    }

    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64) -> TrajectorySample {
        TrajectorySample {
            t,
            beta: 2.0 * t * t,
            f_gap: 1.0 / t,
            grad_norm_sq: 0.5 / (t * t),
            dist_center_sq: 0.1 / t,
            dist_minnorm_sq: 0.2 / t,
            energy: 3.0 / t,
        }
    }

    #[test]
    fn csv_round_trips_every_bit() {
        let rows = vec![sample(1.0), sample(std::f64::consts::PI * 1e7)];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        for (line, row) in lines.zip(&rows) {
            let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            assert_eq!(vals[0], row.t);
            assert_eq!(vals[1], row.beta);
            assert_eq!(vals[2], row.f_gap);
            assert_eq!(vals[6], row.energy);
        }
    }

    #[test]
    fn combined_csv_prepends_the_system_label() {
        let groups = vec![
            ("tral".to_string(), vec![sample(1.0)]),
            ("trae".to_string(), vec![sample(2.0)]),
        ];
        let mut buf = Vec::new();
        write_combined_csv(&mut buf, &groups).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("system,{CSV_HEADER}"));
        assert!(lines[1].starts_with("tral,"));
        assert!(lines[2].starts_with("trae,"));
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn chart_draws_one_polyline_per_nonempty_series() {
        let s1 = Series {
            label: "a".into(),
            points: (1..50).map(|i| (i as f64, 1.0 / i as f64)).collect(),
        };
        let s2 = Series {
            label: "b & c".into(),
            points: (1..50).map(|i| (i as f64, 2.0 / i as f64)).collect(),
        };
        let svg = line_chart_loglog("title <x>", "t", "gap", &[s1, s2]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b &amp; c"));
        assert!(svg.contains("title &lt;x&gt;"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn chart_drops_points_a_log_axis_cannot_place() {
        let s = Series {
            label: "mixed".into(),
            points: vec![(1.0, 1.0), (2.0, 0.0), (3.0, -5.0), (4.0, f64::NAN), (5.0, 2.0)],
        };
        let svg = line_chart_loglog("t", "x", "y", &[s]);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains("NaN"));

        let none = Series { label: "flat".into(), points: vec![(1.0, 0.0)] };
        let svg = line_chart_loglog("t", "x", "y", &[none]);
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert!(svg.contains("no positive data"));
        assert!(svg.contains("flat"));
    }
}
