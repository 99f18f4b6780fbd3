//! Artifact writers: CSV tables, pretty JSON and the plain-text report.
//! Layouts are described in `docs/formats.md`.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::bound::BoundReport;
use crate::pde::{MeanExitField, NodeKind};
use crate::sde::CoupledPairOutcome;

fn create(path: &Path) -> io::Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::other)?;
    w.write_all(b"\n")?;
    w.flush()
}

/// Node table of a field: coordinates, value, gradient and node kind.
/// Exterior nodes are skipped.
pub fn write_field_csv(path: &Path, field: &MeanExitField) -> io::Result<()> {
    let grid = field.grid();
    let n = grid.dim();
    let mut w = create(path)?;
    let mut header = String::new();
    for j in 1..=n {
        write!(header, "y{j},").unwrap();
    }
    header.push('v');
    for j in 1..=n {
        write!(header, ",g{j}").unwrap();
    }
    header.push_str(",kind\n");
    w.write_all(header.as_bytes())?;

    let mut coord = vec![0.0; n];
    let mut line = String::new();
    for node in 0..grid.n_nodes() {
        let kind = match grid.kind(node) {
            NodeKind::Interior => "interior",
            NodeKind::Boundary => "boundary",
            NodeKind::Exterior => continue,
        };
        grid.coord_into(node, &mut coord);
        line.clear();
        for c in &coord {
            write!(line, "{c},").unwrap();
        }
        write!(line, "{}", field.values()[node]).unwrap();
        for g in field.gradient(node) {
            write!(line, ",{g}").unwrap();
        }
        writeln!(line, ",{kind}").unwrap();
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

/// One row per replicate.
pub fn write_outcomes_csv(path: &Path, outcomes: &[CoupledPairOutcome]) -> io::Result<()> {
    let mut w = create(path)?;
    w.write_all(b"replicate,t1,t2,t_tilde,e1,e2,displacement,censored1,censored2\n")?;
    let mut line = String::new();
    for o in outcomes {
        line.clear();
        writeln!(
            line,
            "{},{},{},{},{},{},{},{},{}",
            o.replicate,
            o.t1,
            o.t2,
            o.t_tilde,
            o.e1,
            o.e2,
            o.displacement(),
            o.censored1 as u8,
            o.censored2 as u8
        )
        .unwrap();
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "ok"
    } else {
        "FAIL"
    }
}

/// Human-readable summary of a [`BoundReport`].
pub fn render_report(name: &str, r: &BoundReport) -> String {
    let mut s = String::new();
    let rows: Vec<(String, String)> = vec![
        ("E|T1-T2|".into(), format!("{:.6} +- {:.6}", r.lhs_mean, r.lhs_se)),
        ("sup|dv1/dy|".into(), format!("{:.6}", r.sup_grad_norm_1)),
        ("sup|dv2/dy|".into(), format!("{:.6}", r.sup_grad_norm_2)),
        (
            "E|y1(T~)-y2(T~)|".into(),
            format!("{:.6} +- {:.6}", r.displacement_mean, r.displacement_se),
        ),
        ("rhs".into(), format!("{:.6} +- {:.6}", r.rhs_mean, r.rhs_se)),
        ("margin".into(), format!("{:.6}", r.margin)),
        (
            "decomposition".into(),
            format!("{:.3e} [{}]", r.decomposition_residual, verdict(r.decomposition.pass)),
        ),
        (
            "dynkin 1".into(),
            format!(
                "{:.3e} (3se {:.1e}, slack {:.1e}) [{}]",
                r.dynkin_1.residual,
                3.0 * r.dynkin_1.se,
                r.dynkin_1.allowance,
                verdict(r.dynkin_1.pass)
            ),
        ),
        (
            "dynkin 2".into(),
            format!(
                "{:.3e} (3se {:.1e}, slack {:.1e}) [{}]",
                r.dynkin_2.residual,
                3.0 * r.dynkin_2.se,
                r.dynkin_2.allowance,
                verdict(r.dynkin_2.pass)
            ),
        ),
    ];
    let mut rows = rows;
    for (i, p) in r.dynkin_point_checks.iter().enumerate() {
        rows.push((
            format!("E T{} vs v{}(a{})", i + 1, i + 1, i + 1),
            format!(
                "{:.6} +- {:.6} vs {:.6} [{}]",
                p.mc_mean,
                p.mc_se,
                p.pde_value,
                verdict(p.pass)
            ),
        ));
    }
    rows.push((
        "replicates".into(),
        format!("{} ({} censored)", r.n_replicates, r.n_censored),
    ));
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    writeln!(s, "scenario {name}").unwrap();
    for (k, v) in &rows {
        writeln!(s, "  {k:<width$}  {v}").unwrap();
    }
    writeln!(
        s,
        "  {:<width$}  {}",
        "bound",
        if r.holds { "PASS" } else { "VIOLATED" }
    )
    .unwrap();
    s
}

pub fn write_text(path: &Path, text: &str) -> io::Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()
}
