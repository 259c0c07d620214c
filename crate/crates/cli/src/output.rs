//! CSV tables and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use postopt_core::io::fmt_f64;
use postopt_core::uq::{ConvergenceReport, SampleStudy, SensitivityRow, Statistic};

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .context("output path has no file name")?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn row(out: &mut Vec<u8>, fields: &[String]) {
    out.extend_from_slice(fields.join(",").as_bytes());
    out.push(b'\n');
}

/// One row per sample: parameters, the marched state and status for every
/// step count, then the reference minimizer.
pub fn samples_csv(study: &SampleStudy) -> Vec<u8> {
    let d = study.nominal.minimizer.len();
    let p = study.parameter_box.dim();
    let mut header = vec!["sample_index".to_string()];
    header.extend((1..=p).map(|k| format!("theta_{k}")));
    for n in study.step_counts() {
        header.extend((1..=d).map(|i| format!("N{n}_m_{i}")));
        header.push(format!("N{n}_status"));
    }
    if study.config.with_oracle {
        header.extend((1..=d).map(|i| format!("oracle_m_{i}")));
        header.push("oracle_converged".into());
    }
    let mut out = Vec::new();
    row(&mut out, &header);
    for s in &study.samples {
        let mut fields = vec![s.index.to_string()];
        fields.extend(s.theta.iter().map(|v| fmt_f64(*v)));
        for m in &s.marches {
            fields.extend(m.state.iter().map(|v| fmt_f64(*v)));
            fields.push(m.status.as_str().into());
        }
        if study.config.with_oracle {
            match &s.oracle {
                Some(o) => {
                    fields.extend(o.minimizer.iter().map(|v| fmt_f64(*v)));
                    fields.push(o.converged.to_string());
                }
                None => {
                    fields.extend((0..d).map(|_| fmt_f64(f64::NAN)));
                    fields.push("false".into());
                }
            }
        }
        row(&mut out, &fields);
    }
    out
}

/// Reference solves: parameters, minimizer, convergence and iteration
/// count per sample.
pub fn oracle_csv(study: &SampleStudy) -> Vec<u8> {
    let d = study.nominal.minimizer.len();
    let p = study.parameter_box.dim();
    let mut header = vec!["sample_index".to_string()];
    header.extend((1..=p).map(|k| format!("theta_{k}")));
    header.extend((1..=d).map(|i| format!("m_{i}")));
    header.extend(["converged", "iterations", "grad_norm"].map(String::from));
    let mut out = Vec::new();
    row(&mut out, &header);
    for s in &study.samples {
        let Some(o) = &s.oracle else { continue };
        let mut fields = vec![s.index.to_string()];
        fields.extend(s.theta.iter().map(|v| fmt_f64(*v)));
        fields.extend(o.minimizer.iter().map(|v| fmt_f64(*v)));
        fields.push(o.converged.to_string());
        fields.push(o.iterations.to_string());
        fields.push(fmt_f64(o.grad_norm.unwrap_or(f64::NAN)));
        row(&mut out, &fields);
    }
    out
}

/// `N, h, mean_err_1..d, std_err_1..d, per_sample_err`.
pub fn errors_csv(reports: &[ConvergenceReport]) -> Vec<u8> {
    let find = |s: Statistic| {
        reports
            .iter()
            .find(|r| r.statistic == s)
            .expect("all statistics reported")
    };
    let (mean, std, per_sample) = (
        find(Statistic::Mean),
        find(Statistic::StdDev),
        find(Statistic::PerSampleError),
    );
    let d = mean.errors.first().map_or(0, Vec::len);
    let mut header = vec!["N".to_string(), "h".to_string()];
    header.extend((1..=d).map(|i| format!("mean_err_{i}")));
    header.extend((1..=d).map(|i| format!("std_err_{i}")));
    header.push("per_sample_err".into());
    let mut out = Vec::new();
    row(&mut out, &header);
    for k in 0..mean.step_counts.len() {
        let mut fields = vec![mean.step_counts[k].to_string(), fmt_f64(mean.step_sizes[k])];
        fields.extend(mean.errors[k].iter().map(|v| fmt_f64(*v)));
        fields.extend(std.errors[k].iter().map(|v| fmt_f64(*v)));
        fields.push(fmt_f64(per_sample.errors[k][0]));
        row(&mut out, &fields);
    }
    out
}

/// `sample_index, N, step, t, norm, f_1..f_d`.
pub fn sensitivity_csv(rows: &[SensitivityRow], d: usize) -> Vec<u8> {
    let mut header: Vec<String> = ["sample_index", "N", "step", "t", "norm"].map(String::from).to_vec();
    header.extend((1..=d).map(|i| format!("f_{i}")));
    let mut out = Vec::new();
    row(&mut out, &header);
    for r in rows {
        let mut fields = vec![
            r.sample.to_string(),
            r.num_steps.to_string(),
            r.step.to_string(),
            fmt_f64(r.t),
            fmt_f64(r.norm),
        ];
        fields.extend(r.components.iter().map(|v| fmt_f64(*v)));
        row(&mut out, &fields);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_atomic(&path, b"one\n").unwrap();
        write_atomic(&path, b"two\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
