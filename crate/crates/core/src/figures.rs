//! Plain-text data files for the comparison figures plus a gnuplot script
//! that draws them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{LogRow, Num, SimLog};

/// Names of the data files, in figure order.
pub const FIGURE_FILES: [&str; 7] = [
    "fig5-pcm-power.dat",
    "fig6-pgm-power.dat",
    "fig7-power-tracking.dat",
    "fig8-pgm-ramp.dat",
    "fig9-soc.dat",
    "fig10-pcm-ramp.dat",
    "fig11-capacity-loss.dat",
];

pub const GNUPLOT_SCRIPT: &str = "figures.gp";

fn check_complete(logs: &[SimLog]) -> Result<()> {
    let first = logs
        .first()
        .ok_or_else(|| Error::Export("no logs to export".into()))?;
    for log in logs {
        if log.rows.is_empty() {
            return Err(Error::Export(format!(
                "{}: series rows is missing",
                log.name
            )));
        }
        if log.solves.is_empty() {
            return Err(Error::Export(format!(
                "{}: series solves is missing",
                log.name
            )));
        }
        let end = log.rows.last().map_or(0.0, |r| r.t);
        if (end - log.t_final).abs() > 1e-9 * log.t_final.max(1.0) {
            return Err(Error::Export(format!(
                "{}: series rows ends at t = {end} s before t_final = {} s",
                log.name, log.t_final
            )));
        }
        if log.rows.len() != first.rows.len()
            || log.rows.iter().zip(&first.rows).any(|(a, b)| a.t != b.t)
        {
            return Err(Error::Export(format!(
                "{}: series rows is not sampled like {}",
                log.name, first.name
            )));
        }
        if log.solves.len() != first.solves.len() {
            return Err(Error::Export(format!(
                "{}: series solves has {} entries, {} has {}",
                log.name,
                log.solves.len(),
                first.name,
                first.solves.len()
            )));
        }
    }
    Ok(())
}

fn header(title: &str, columns: &[String]) -> String {
    format!("# {title}\n# {}\n", columns.join(" "))
}

type RowFn = fn(&LogRow) -> f64;

fn row_table(
    logs: &[SimLog],
    title: &str,
    extra: Option<(&str, RowFn)>,
    f: fn(&LogRow) -> f64,
) -> String {
    let mut cols = vec!["t".to_string()];
    if let Some((name, _)) = extra {
        cols.push(name.to_string());
    }
    cols.extend(logs.iter().map(|l| l.name.clone()));
    let mut out = header(title, &cols);
    for (i, r) in logs[0].rows.iter().enumerate() {
        let _ = write!(out, "{}", Num(r.t));
        if let Some((_, g)) = extra {
            let _ = write!(out, " {}", Num(g(r)));
        }
        for log in logs {
            let _ = write!(out, " {}", Num(f(&log.rows[i])));
        }
        out.push('\n');
    }
    out
}

/// Per-solve change of the applied command, relative to the command
/// held before the solve.
fn ramp_table(logs: &[SimLog], title: &str, pg: bool) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend(logs.iter().map(|l| l.name.clone()));
    let mut out = header(title, &cols);
    for (i, s) in logs[0].solves.iter().enumerate() {
        let _ = write!(out, "{}", Num(s.t));
        for log in logs {
            let s = &log.solves[i];
            let d = if pg {
                s.cmd_pg - s.prev_pg
            } else {
                s.cmd_pb - s.prev_pb
            };
            let _ = write!(out, " {}", Num(d));
        }
        out.push('\n');
    }
    out
}

/// Builds every data file in memory as `(file name, contents)`.
pub fn figure_data(logs: &[SimLog]) -> Result<Vec<(String, String)>> {
    check_complete(logs)?;
    let files = vec![
        row_table(logs, "PCM power [W]", None, |r| r.p_b),
        row_table(logs, "PGM power [W]", None, |r| r.p_g),
        row_table(
            logs,
            "load demand and supplied power p_g + p_b [W]",
            Some(("p_load", |r| r.p_load)),
            |r| r.p_g + r.p_b,
        ),
        ramp_table(logs, "PGM command change per controller step [W]", true),
        row_table(logs, "state of charge [-]", None, |r| r.soc),
        ramp_table(logs, "PCM command change per controller step [W]", false),
        row_table(logs, "capacity loss Q_L / Q_b [%]", None, |r| r.loss_pct),
    ];
    let mut out: Vec<(String, String)> = FIGURE_FILES
        .iter()
        .map(|n| n.to_string())
        .zip(files)
        .collect();
    out.push((GNUPLOT_SCRIPT.to_string(), gnuplot_script(logs)));
    Ok(out)
}

fn gnuplot_script(logs: &[SimLog]) -> String {
    let ylabels = [
        "PCM power [W]",
        "PGM power [W]",
        "power [W]",
        "PGM step [W]",
        "SoC",
        "PCM step [W]",
        "capacity loss [%]",
    ];
    let mut s =
        String::from("set terminal pngcairo size 900,540\nset xlabel 't [s]'\nset key outside\n");
    for (file, ylabel) in FIGURE_FILES.iter().zip(ylabels) {
        let stem = file.trim_end_matches(".dat");
        let _ = writeln!(s, "\nset output '{stem}.png'\nset ylabel '{ylabel}'");
        let tracking = *file == "fig7-power-tracking.dat";
        let mut plots = Vec::new();
        if tracking {
            plots.push(format!("'{file}' using 1:2 with lines title 'p_load'"));
        }
        let offset = if tracking { 3 } else { 2 };
        for (i, log) in logs.iter().enumerate() {
            let style = if file.contains("ramp") {
                "steps"
            } else {
                "lines"
            };
            plots.push(format!(
                "'{file}' using 1:{} with {style} title '{}'",
                i + offset,
                log.name
            ));
        }
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    }
    s
}

/// Writes the data files and the gnuplot script into `dir`.
pub fn export_figures(logs: &[SimLog], dir: &Path) -> Result<Vec<PathBuf>> {
    let files = figure_data(logs)?;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
    }
    Ok(written)
}
