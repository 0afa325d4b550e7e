//! CSV tables with a one-line `#` header, and the observation-record file
//! format read back by `replay`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::filter::{FilterTrajectory, Innovations, ResidualPath};
use crate::girsanov::LikelihoodPath;
use crate::mollify::{EnergyPath, MollifierField};
use crate::oracle::KalmanPath;
use crate::simulate::{node, ObservationRecord, PathRecord, TimeGrid};
use crate::{Error, Result};

/// Write `# comment`, a column header and rows.
pub fn write_table<P: AsRef<Path>>(path: P, comment: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "# {comment}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn cols(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (0..k).map(move |i| format!("{prefix}{i}"))
}

fn header(fixed: &[&str], more: impl IntoIterator<Item = String>) -> Vec<String> {
    fixed.iter().map(|s| s.to_string()).chain(more).collect()
}

pub fn write_path_csv<P: AsRef<Path>>(path: P, rec: &PathRecord) -> Result<()> {
    let comment = format!(
        "levy-filter path v1 n={} m={} nb={} dt={} horizon={} seed={} measure={:?}",
        rec.n,
        rec.m,
        rec.nb,
        rec.grid.dt(),
        rec.grid.t1 - rec.grid.t0,
        rec.seed,
        rec.measure
    );
    let head = header(&["t", "flag"], cols("x_left", rec.n).chain(cols("x", rec.n)).chain(cols("y_left", rec.m)).chain(cols("y", rec.m)));
    let rows = (0..rec.nodes()).map(|j| {
        let mut r = vec![num(rec.times[j]), rec.flags[j].to_string()];
        r.extend(rec.x_left_at(j).iter().chain(rec.x_at(j)).chain(rec.y_left_at(j)).chain(rec.y_at(j)).map(|v| num(*v)));
        r
    });
    write_table(path, &comment, &head, rows)
}

/// Every simulated jump event of both channels.
pub fn write_events_csv<P: AsRef<Path>>(path: P, rec: &PathRecord) -> Result<()> {
    let k = rec.signal_jumps.events.first().or(rec.observation_jumps.events.first()).map_or(1, |e| e.mark.len());
    let head = header(&["t", "channel", "accepted"], cols("u", k));
    let rows = rec.signal_jumps.events.iter().chain(&rec.observation_jumps.events).map(|e| {
        let mut r = vec![num(e.t), e.channel.as_str().to_string(), e.accepted.to_string()];
        r.extend(e.mark.iter().map(|v| num(*v)));
        r
    });
    write_table(path, &format!("levy-filter events v1 seed={}", rec.seed), &head, rows)
}

pub fn write_observation_csv<P: AsRef<Path>>(path: P, obs: &ObservationRecord) -> Result<()> {
    let k = obs.jumps.first().map_or(0, |j| j.mark.len());
    let comment = format!(
        "levy-filter observation v1 m={} t0={} t1={} steps={} marks={k}",
        obs.m, obs.grid.t0, obs.grid.t1, obs.grid.steps
    );
    let head = header(&["t", "flag"], cols("y_left", obs.m).chain(cols("y", obs.m)).chain(cols("u", k)));
    let rows = (0..obs.nodes()).map(|j| {
        let mut r = vec![num(obs.times[j]), obs.flags[j].to_string()];
        r.extend(obs.y_left_at(j).iter().chain(obs.y_at(j)).map(|v| num(*v)));
        match obs.jump_at(j) {
            Some(ev) => r.extend(ev.mark.iter().map(|v| num(*v))),
            None => r.extend(std::iter::repeat_n(String::new(), k)),
        }
        r
    });
    write_table(path, &comment, &head, rows)
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), detail: detail.into() }
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split_whitespace().find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

/// Read a file written by [`write_observation_csv`].
pub fn read_observation_csv<P: AsRef<Path>>(path: P) -> Result<ObservationRecord> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default();
    if !first.starts_with("# levy-filter observation v1") {
        return Err(format_err(path, "missing 'levy-filter observation v1' header"));
    }
    let field = |key: &str| -> Result<f64> {
        header_value(first, key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format_err(path, format!("header lacks {key}=")))
    };
    let (m, steps, k) = (field("m")? as usize, field("steps")? as usize, field("marks")? as usize);
    let grid = TimeGrid::new(field("t0")?, field("t1")?, steps)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let (mut times, mut y, mut y_left, mut jumps) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 + 2 * m + k {
            return Err(format_err(path, format!("row {row} has {} fields, expected {}", rec.len(), 2 + 2 * m + k)));
        }
        let parse = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| format_err(path, format!("row {row} column {i}: '{}' is not a number", &rec[i])))
        };
        times.push(parse(0)?);
        let flag: u8 = rec[1].parse().map_err(|_| format_err(path, format!("row {row}: bad flag")))?;
        for i in 0..m {
            y_left.push(parse(2 + i)?);
            y.push(parse(2 + m + i)?);
        }
        if flag & node::OBSERVED_JUMP != 0 {
            let mark = (0..k).map(|i| parse(2 + 2 * m + i)).collect::<Result<Vec<_>>>()?;
            jumps.push((row, mark));
        }
    }
    let mut obs = ObservationRecord::from_parts(grid, m, times, y, y_left, jumps)?;
    // from_parts marks jump nodes as non-grid; restore the stored flags
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    for (j, rec) in reader.records().enumerate() {
        obs.flags[j] = rec?[1].parse().map_err(|_| format_err(path, format!("row {j}: bad flag")))?;
    }
    Ok(obs)
}

pub fn write_likelihood_csv<P: AsRef<Path>>(path: P, l: &LikelihoodPath) -> Result<()> {
    let head = header(&["t", "log_lambda_inv", "brownian", "jump", "compensator"], []);
    let rows = (0..l.times.len()).map(|j| [l.times[j], l.total[j], l.brownian[j], l.jump[j], l.compensator[j]].iter().map(|v| num(*v)).collect());
    write_table(path, "levy-filter likelihood v1", &head, rows)
}

/// Per-node filter summary: time, mass, ESS, posterior moments and tests.
pub fn write_summary_csv<P: AsRef<Path>>(path: P, traj: &FilterTrajectory) -> Result<()> {
    let n = traj.nodes.first().map_or(0, |s| s.mean.len());
    let head = header(
        &["t", "mass", "log_mass", "ess", "resampled"],
        cols("mean", n)
            .chain(cols("second", n))
            .chain(traj.test_names.iter().map(|s| format!("pi[{s}]")))
            .chain(traj.test_names.iter().map(|s| format!("zakai[{s}]"))),
    );
    let rows = traj.nodes.iter().map(|s| {
        let mut r = vec![num(s.t), num(s.mass), num(s.log_mass), num(s.ess), u8::from(s.resampled).to_string()];
        r.extend(s.mean.iter().chain(&s.second).chain(&s.tests).chain(&s.zakai_tests).map(|v| num(*v)));
        r
    });
    let comment = format!("levy-filter summary v1 particles={} seed={}", traj.particles, traj.seed);
    write_table(path, &comment, &head, rows)
}

/// Residual paths sharing one time axis, one column per path.
pub fn write_residual_csv<P: AsRef<Path>>(path: P, kind: &str, paths: &[ResidualPath]) -> Result<()> {
    let Some(first) = paths.first() else {
        return write_table(path, &format!("levy-filter {kind} residual v1"), &["t".to_string()], []);
    };
    let head = header(&["t"], paths.iter().map(|p| p.test.clone()));
    let rows = (0..first.times.len()).map(|j| std::iter::once(first.times[j]).chain(paths.iter().map(|p| p.values[j])).map(num).collect());
    write_table(path, &format!("levy-filter {kind} residual v1"), &head, rows)
}

pub fn write_innovation_csv<P: AsRef<Path>>(path: P, inn: &Innovations) -> Result<()> {
    let head = header(&["t", "dt"], cols("dw_bar", inn.m).chain(["count".to_string(), "compensator".to_string()]));
    let rows = (0..inn.steps()).map(|j| {
        let mut r = vec![num(inn.times[j]), num(inn.dt[j])];
        r.extend(inn.dw_bar[j * inn.m..(j + 1) * inn.m].iter().map(|v| num(*v)));
        r.push(num(inn.counts[j]));
        r.push(num(inn.compensator[j]));
        r
    });
    write_table(path, "levy-filter innovation v1", &head, rows)
}

pub fn write_energy_csv<P: AsRef<Path>>(path: P, e: &EnergyPath) -> Result<()> {
    let rows = e.times.iter().zip(&e.energy).map(|(t, v)| vec![num(*t), num(*v)]);
    write_table(path, &format!("levy-filter energy v1 eps={}", e.eps), &header(&["t", "energy"], []), rows)
}

pub fn write_field_csv<P: AsRef<Path>>(path: P, field: &MollifierField) -> Result<()> {
    let head = header(&[], cols("x", field.grid.n).chain(["value".to_string()]));
    let rows = field.rows().map(|(x, v)| x.into_iter().chain([v]).map(num).collect());
    write_table(path, &format!("levy-filter field v1 eps={}", field.eps), &head, rows)
}

/// Kalman mean and variance next to the filter's posterior mean.
pub fn write_kalman_csv<P: AsRef<Path>>(path: P, kb: &KalmanPath, traj: &FilterTrajectory) -> Result<()> {
    let n = kb.n;
    let head = header(&["t"], cols("kalman_mean", n).chain(cols("kalman_var", n)).chain(cols("filter_mean", n)));
    let rows = (0..kb.times.len()).map(|j| {
        let mut r = vec![num(kb.times[j])];
        r.extend(kb.mean_at(j).iter().map(|v| num(*v)));
        r.extend((0..n).map(|i| num(kb.cov_at(j)[i * n + i])));
        r.extend(traj.nodes[j].mean.iter().map(|v| num(*v)));
        r
    });
    write_table(path, "levy-filter kalman v1", &head, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LevyMeasure, MarkLaw, Prior, SystemSpec};
    use crate::simulate::{project_observation, simulate_path};

    #[test]
    fn observation_round_trip() {
        let spec = SystemSpec::builder("io", 1, 1, 1)
            .b2(|_, x, _, o| o[0] = x[0])
            .nu2(LevyMeasure::new(5.0, MarkLaw::Gaussian { mean: vec![0.0], std: vec![1.0] }).unwrap())
            .f2(|_, _, u, o| o[0] = u[0])
            .build()
            .unwrap();
        let path = simulate_path(&spec, TimeGrid::new(0.0, 1.0, 50).unwrap(), &Prior::Point(vec![0.0]), &[0.0], 4).unwrap();
        let obs = project_observation(&path);
        assert!(!obs.jumps.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("obs.csv");
        write_observation_csv(&file, &obs).unwrap();
        let back = read_observation_csv(&file).unwrap();
        assert_eq!(back, obs);
    }

    #[test]
    fn malformed_header_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("bad.csv");
        std::fs::write(&file, "t,flag\n0,1\n").unwrap();
        assert!(matches!(read_observation_csv(&file), Err(Error::Format { .. })));
    }
}
