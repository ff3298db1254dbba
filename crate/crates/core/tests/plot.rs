//! Structure of emitted SVG plots.

use specrecon::cli::{emit_plot, render_svg, PlotKind, Series};
use specrecon::Error;

#[test]
fn three_points_parse_as_xml() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.svg");
    emit_plot(&[Series::new("s", vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0])], PlotKind::DensityOverlay, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}

#[test]
fn overlay_has_one_polyline_per_series() {
    let p = 200;
    let truth: Vec<f64> = (0..p).map(|k| 10.0 - 9.0 * k as f64 / (p - 1) as f64).collect();
    let sample: Vec<f64> = truth.iter().map(|v| v * 1.1).collect();
    let recon: Vec<f64> = truth.iter().map(|v| v * 1.01).collect();
    let names = ["truth", "sample", "reconstructed"];
    let series: Vec<Series> = names
        .iter()
        .zip([&truth, &sample, &recon])
        .map(|(n, y)| Series::indexed(*n, y))
        .collect();
    let svg = render_svg(&series, PlotKind::SpectrumOverlay).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
    assert_eq!(lines.len(), 3);
    let legend: Vec<&str> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("legend"))
        .filter_map(|n| n.text())
        .collect();
    assert_eq!(legend, names);
    for (l, n) in lines.iter().zip(names) {
        assert_eq!(l.attribute("data-name"), Some(n));
        assert_eq!(l.attribute("points").unwrap().split(' ').count(), p);
    }
}

#[test]
fn byte_deterministic_and_errors() {
    let s = [Series::new("e", vec![2.0, 4.0, 8.0, 16.0], vec![1.0, 0.5, 0.26, 0.12])];
    assert_eq!(render_svg(&s, PlotKind::ErrorVsC).unwrap(), render_svg(&s, PlotKind::ErrorVsC).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let err = emit_plot(&[], PlotKind::ErrorVsC, &dir.path().join("x.svg")).unwrap_err();
    assert!(matches!(err, Error::EmptySeries(_)));
    let err = emit_plot(&s, PlotKind::ErrorVsC, &dir.path().join("missing/x.svg")).unwrap_err();
    assert!(matches!(err, Error::Io(_)));
}
