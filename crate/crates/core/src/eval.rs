//! Uniform-grid comparison of predicted fields against the closed-form solution.

use std::io::Write;

use serde::Serialize;

use crate::collocation::{csv_err, DomainSpec};
use crate::error::{Error, Result};
use crate::loss::{FieldSource, Scaling};
use crate::network::FieldBundle;
use crate::oracle::ExactFields;

/// Physical field values of `bundle` at `points`, one vector per field.
pub fn predict(bundle: &FieldBundle, scaling: &Scaling, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let normalized: Vec<[f64; 2]> = points.iter().map(|p| scaling.normalize(*p)).collect();
    bundle
        .nets()
        .iter()
        .enumerate()
        .map(|(f, net)| net.forward_batch(&normalized).into_iter().map(|v| scaling.to_physical(f, v)).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub max_abs_error: f64,
    /// Maximum absolute error divided by the field's characteristic scale.
    pub max_scaled_error: f64,
    pub relative_l2: f64,
}

/// `‖pred - exact‖₂ / ‖exact‖₂`; a field whose oracle vanishes on the grid is measured
/// against `scale · √N` instead.
pub fn relative_l2(pred: &[f64], exact: &[f64], scale: f64) -> f64 {
    let num: f64 = pred.iter().zip(exact).map(|(p, e)| (p - e) * (p - e)).sum();
    let den: f64 = exact.iter().map(|e| e * e).sum();
    let floor = 1e-12 * scale * scale * exact.len() as f64;
    if den > floor {
        (num / den).sqrt()
    } else {
        (num / (scale * scale * exact.len() as f64)).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct GridEvaluation {
    pub resolution: usize,
    pub field_names: Vec<String>,
    pub points: Vec<[f64; 2]>,
    pub predicted: Vec<Vec<f64>>,
    pub exact: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
}

impl GridEvaluation {
    pub fn errors(&self) -> Vec<FieldError> {
        (0..self.field_names.len())
            .map(|f| {
                let max_abs =
                    self.predicted[f].iter().zip(&self.exact[f]).map(|(p, e)| (p - e).abs()).fold(0.0, f64::max);
                FieldError {
                    field: self.field_names[f].clone(),
                    max_abs_error: max_abs,
                    max_scaled_error: max_abs / self.scales[f],
                    relative_l2: relative_l2(&self.predicted[f], &self.exact[f], self.scales[f]),
                }
            })
            .collect()
    }

    /// `x,y` then `<f>` for every field, `<f>_exact` for every field, `<f>_abs_error` for every field.
    pub fn write_fields_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["x".to_string(), "y".to_string()];
        header.extend(self.field_names.iter().cloned());
        header.extend(self.field_names.iter().map(|n| format!("{n}_exact")));
        header.extend(self.field_names.iter().map(|n| format!("{n}_abs_error")));
        w.write_record(&header).map_err(csv_err)?;
        let nf = self.field_names.len();
        for (i, p) in self.points.iter().enumerate() {
            let mut row = Vec::with_capacity(2 + 3 * nf);
            row.push(format!("{:e}", p[0]));
            row.push(format!("{:e}", p[1]));
            row.extend((0..nf).map(|f| format!("{:e}", self.predicted[f][i])));
            row.extend((0..nf).map(|f| format!("{:e}", self.exact[f][i])));
            row.extend((0..nf).map(|f| format!("{:e}", (self.predicted[f][i] - self.exact[f][i]).abs())));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_errors_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in self.errors() {
            w.serialize(e).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `resolution²` points covering the domain, including its edges; `x` varies slowest.
pub fn grid_points(domain: &DomainSpec, resolution: usize) -> Result<Vec<[f64; 2]>> {
    if resolution < 2 {
        return Err(Error::invalid(format!("grid resolution must be at least 2, got {resolution}")));
    }
    let step = |lo: f64, len: f64, i: usize| lo + len * i as f64 / (resolution - 1) as f64;
    let mut pts = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            pts.push([step(domain.x_min, domain.width(), i), step(domain.y_min, domain.height(), j)]);
        }
    }
    Ok(pts)
}

pub fn evaluate_on_grid(
    source: FieldSource<'_>,
    exact: &dyn ExactFields,
    domain: &DomainSpec,
    scaling: &Scaling,
    resolution: usize,
) -> Result<GridEvaluation> {
    let points = grid_points(domain, resolution)?;
    let n_fields = exact.field_names().len();
    let mut exact_vals = vec![Vec::with_capacity(points.len()); n_fields];
    for p in &points {
        for (col, v) in exact_vals.iter_mut().zip(exact.values(*p)) {
            col.push(v);
        }
    }
    let predicted = match source {
        FieldSource::Networks(bundle) => {
            if bundle.len() != n_fields {
                return Err(Error::ShapeMismatch(format!("expected {n_fields} networks, got {}", bundle.len())));
            }
            predict(bundle, scaling, &points)
        }
        FieldSource::Exact(other) => {
            let mut cols = vec![Vec::with_capacity(points.len()); n_fields];
            for p in &points {
                for (col, v) in cols.iter_mut().zip(other.values(*p)) {
                    col.push(v);
                }
            }
            cols
        }
    };
    Ok(GridEvaluation {
        resolution,
        field_names: exact.field_names().iter().map(|s| s.to_string()).collect(),
        points,
        predicted,
        exact: exact_vals,
        scales: scaling.fields.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::BeamSpec;
    use crate::loss::beam_scaling;

    #[test]
    fn oracle_against_itself_has_no_error() {
        let spec = BeamSpec::default();
        let s = beam_scaling(&spec).unwrap();
        let g = evaluate_on_grid(FieldSource::Exact(&spec), &spec, &spec.domain(), &s, 7).unwrap();
        assert_eq!(g.points.len(), 49);
        for e in g.errors() {
            assert!(e.max_scaled_error <= 1e-10 && e.relative_l2 == 0.0, "{e:?}");
        }
    }

    #[test]
    fn ten_percent_offset_reports_one_tenth() {
        let exact: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin() + 2.0).collect();
        let pred: Vec<f64> = exact.iter().map(|e| e * 1.1).collect();
        assert!((relative_l2(&pred, &exact, 3.0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_field_uses_scale() {
        let exact = vec![0.0; 4];
        let pred = vec![0.5; 4];
        assert!((relative_l2(&pred, &exact, 5.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn fields_csv_has_one_row_per_grid_point() {
        let spec = BeamSpec::default();
        let s = beam_scaling(&spec).unwrap();
        let g = evaluate_on_grid(FieldSource::Exact(&spec), &spec, &spec.domain(), &s, 5).unwrap();
        let mut buf = Vec::new();
        g.write_fields_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 2 + 3 * 8);
        assert_eq!(lines.count(), 25);
    }
}
