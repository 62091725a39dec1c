use wfw_cli::plot::{emit_plot, read_series, Frame, PlotSpec, Series};

fn attr<'a>(line: &'a str, name: &str) -> &'a str {
    let key = format!("{name}=\"");
    let start = line.find(&key).unwrap() + key.len();
    let end = start + line[start..].find('"').unwrap();
    &line[start..end]
}

#[test]
fn empty_trace_draws_axes_without_points() {
    let s = read_series("iter,J\n".as_bytes(), "iter", "J", "empty").unwrap();
    assert!(s.points.is_empty());
    let svg = emit_plot(&[s], &PlotSpec::default());
    assert_eq!(svg.matches(r#"class="axis""#).count(), 2);
    let poly: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
    assert_eq!(poly.len(), 1);
    assert_eq!(attr(poly[0], "points"), "");
}

#[test]
fn polyline_follows_the_affine_frame() {
    let csv = "iter,J,s\n1,4.0,0\n2,1.0,0\n3,2.5,0\n";
    let s = read_series(csv.as_bytes(), "iter", "J", "run").unwrap();
    let spec = PlotSpec::default();
    let svg = emit_plot(std::slice::from_ref(&s), &spec);
    let (left, top) = (70.0, 30.0);
    let (w, h) = (spec.width - 90.0, spec.height - 75.0);
    let expect: Vec<String> = s
        .points
        .iter()
        .map(|&(x, y)| {
            let px = left + (x - 1.0) / 2.0 * w;
            let py = top + h - (y - 1.0) / 3.0 * h;
            format!("{px:.3},{py:.3}")
        })
        .collect();
    let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
    assert_eq!(attr(line, "points"), expect.join(" "));
    let frame = Frame::new(&[s], &spec);
    assert_eq!((frame.x_min, frame.x_max, frame.y_min, frame.y_max), (1.0, 3.0, 1.0, 4.0));
}

#[test]
fn overlays_keep_legend_order() {
    let a = Series {
        label: "fw".into(),
        points: vec![(0.0, 1.0), (1.0, 0.5)],
    };
    let b = Series {
        label: "flow".into(),
        points: vec![(0.0, 1.0), (2.0, 0.1)],
    };
    let svg = emit_plot(&[a.clone(), b.clone()], &PlotSpec::default());
    let legend: Vec<&str> = svg
        .lines()
        .filter(|l| l.contains(r#"class="legend""#))
        .map(|l| &l[l.find('>').unwrap() + 1..l.rfind('<').unwrap()])
        .collect();
    assert_eq!(legend, ["fw", "flow"]);
    assert_eq!(svg.matches("<polyline").count(), 2);
    let swapped = emit_plot(&[b, a], &PlotSpec::default());
    assert_ne!(svg, swapped);
    assert_eq!(svg, emit_plot(&[
        Series { label: "fw".into(), points: vec![(0.0, 1.0), (1.0, 0.5)] },
        Series { label: "flow".into(), points: vec![(0.0, 1.0), (2.0, 0.1)] },
    ], &PlotSpec::default()));
}

#[test]
fn log_axis_skips_nonpositive_values() {
    let s = Series {
        label: "x".into(),
        points: vec![(0.0, 0.0), (1.0, 10.0), (2.0, 100.0)],
    };
    let spec = PlotSpec {
        log_y: true,
        ..PlotSpec::default()
    };
    let svg = emit_plot(&[s], &spec);
    let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
    assert_eq!(attr(line, "points").split(' ').count(), 2);
}
