use std::io::Write;

use crate::basis::variable_names;
use crate::error::Result;
use crate::report::{fmt_sci, KvReport};
use crate::scalar::Real;

use super::{average_over_domain, AverageRule, FieldSolution, NodeKind, Problem};

/// Columnar text: header `x,y[,z],value`, one row per non-exterior node.
pub fn write_csv<T: Real, W: Write>(field: &FieldSolution<T>, mut out: W) -> Result<()> {
    let grid = &field.grid;
    let names = variable_names(grid.dim());
    writeln!(out, "{},value", names.join(","))?;
    for node in 0..grid.node_count() {
        if grid.kind(node) == NodeKind::Exterior {
            continue;
        }
        let mut line = grid
            .coords(node)
            .iter()
            .map(|c| fmt_sci(c.to_f64_lossy(), 10))
            .collect::<Vec<_>>()
            .join(",");
        line.push(',');
        line.push_str(&fmt_sci(field.values[node].to_f64_lossy(), 12));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Legacy VTK structured-points file with the field and an inside mask.
/// Exterior nodes carry value 0 and mask 0.
pub fn write_vtk<T: Real, W: Write>(field: &FieldSolution<T>, mut out: W) -> Result<()> {
    let grid = &field.grid;
    let pad = |v: &[String], fill: &str| {
        let mut v = v.to_vec();
        v.resize(3, fill.to_string());
        v.join(" ")
    };
    let dims: Vec<String> = grid.dims().iter().map(|d| d.to_string()).collect();
    let origin: Vec<String> = grid
        .lower()
        .iter()
        .map(|v| fmt_sci(v.to_f64_lossy(), 12))
        .collect();
    let spacing: Vec<String> = grid
        .spacing()
        .iter()
        .map(|v| fmt_sci(v.to_f64_lossy(), 12))
        .collect();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{}", field.tag())?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET STRUCTURED_POINTS")?;
    writeln!(out, "DIMENSIONS {}", pad(&dims, "1"))?;
    writeln!(out, "ORIGIN {}", pad(&origin, "0"))?;
    writeln!(out, "SPACING {}", pad(&spacing, "1"))?;
    writeln!(out, "POINT_DATA {}", grid.node_count())?;
    writeln!(out, "SCALARS value double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in &field.values {
        let v = if v.is_nan() { 0.0 } else { v.to_f64_lossy() };
        writeln!(out, "{}", fmt_sci(v, 12))?;
    }
    writeln!(out, "SCALARS mask int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for node in 0..grid.node_count() {
        writeln!(out, "{}", u8::from(grid.kind(node) != NodeKind::Exterior))?;
    }
    Ok(())
}

/// Key-value summary of a solve.
pub fn solution_report<T: Real>(field: &FieldSolution<T>) -> KvReport {
    let mut r = KvReport::new();
    r.push("problem", field.tag());
    r.push("unknowns", field.grid.unknown_count());
    r.push(
        "resolution",
        field
            .grid
            .dims()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x"),
    );
    r.push_f64("h_max", field.grid.h_max().to_f64_lossy());
    r.push_f64("residual", field.residual.to_f64_lossy());
    r.push("iterations", field.iterations);
    r.push("upwind_axes", field.assembly.upwind);
    r.push("degenerate_axes", field.assembly.degenerate);
    r.push_f64("max_peclet", field.assembly.max_peclet.to_f64_lossy());
    r.push("m_matrix", field.assembly.m_matrix);
    r.push_f64("max", field.max_value().to_f64_lossy());
    r.push_f64("min", field.min_value().to_f64_lossy());
    r.push_f64("min_interior", field.min_interior().to_f64_lossy());
    if let Problem::Escape(_) = field.problem {
        r.push_f64(
            "average",
            average_over_domain(field, AverageRule::Cell).to_f64_lossy(),
        );
        r.push_f64(
            "average_nodal",
            average_over_domain(field, AverageRule::Nodal).to_f64_lossy(),
        );
    }
    if let Some(c) = &field.ellipticity {
        r.push("ellipticity.pass", c.pass);
        r.push_f64(
            "ellipticity.min_eigenvalue",
            c.min_eigenvalue.to_f64_lossy(),
        );
        r.push_f64("ellipticity.threshold", c.threshold.to_f64_lossy());
        r.push("ellipticity.samples", c.samples);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{build_grid, mean_residence_time, Domain, SolverOptions};
    use crate::sde::{DiffusionSpec, Drift, PolynomialDrift, SdeModel};

    #[test]
    fn csv_and_vtk_layout() {
        let grid = build_grid(Domain::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), 5).unwrap();
        let m = SdeModel::new(
            Drift::Polynomial(PolynomialDrift::zero(2)),
            DiffusionSpec::additive(vec![1.0; 2]),
            "d",
        )
        .unwrap();
        let f = mean_residence_time(&m, grid, SolverOptions::default()).unwrap();
        let mut csv = Vec::new();
        write_csv(&f, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "x,y,value");
        assert_eq!(csv.lines().count(), 26);
        let mut vtk = Vec::new();
        write_vtk(&f, &mut vtk).unwrap();
        let vtk = String::from_utf8(vtk).unwrap();
        assert!(vtk.contains("DIMENSIONS 5 5 1"));
        assert!(vtk.contains("POINT_DATA 25"));
        let report = solution_report(&f);
        assert_eq!(report.get("problem"), Some("mrt"));
        assert_eq!(report.get("m_matrix"), Some("true"));
    }
}
