//! Post-hoc quality reports over an archive.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::binary::{extract_text, Compressor, ElfError};
use crate::build::CrashRecord;
use crate::fitness::{read_meta, FitnessError};

pub const CSV_HEADER: &str = "program_id,content_hash,ncd_o0,ncd_o3";
pub const CDF_HEADER: &str = "program_id,baseline,score,cumulative_pct";
/// CDF granularity.
pub const CDF_STEP: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Elf { path: PathBuf, source: ElfError },
    #[error(transparent)]
    Fitness(#[from] FitnessError),
}

/// Baseline binaries: a default applying to every program plus per-program overrides.
#[derive(Debug, Clone, Default)]
pub struct Baselines {
    pub default_o0: Option<PathBuf>,
    pub default_o3: Option<PathBuf>,
    pub o0: HashMap<String, PathBuf>,
    pub o3: HashMap<String, PathBuf>,
}

impl Baselines {
    /// Parses `path` or `program=path` arguments.
    pub fn from_args(o0: &[String], o3: &[String]) -> Self {
        let mut b = Self::default();
        for (args, default, map) in [(o0, &mut b.default_o0, &mut b.o0), (o3, &mut b.default_o3, &mut b.o3)] {
            for a in args {
                match a.split_once('=') {
                    Some((p, path)) if !p.is_empty() && !p.contains('/') => {
                        map.insert(p.to_string(), PathBuf::from(path));
                    }
                    _ => *default = Some(PathBuf::from(a)),
                }
            }
        }
        b
    }

    fn o0_for(&self, program: &str) -> Option<&Path> {
        self.o0.get(program).or(self.default_o0.as_ref()).map(PathBuf::as_path)
    }

    fn o3_for(&self, program: &str) -> Option<&Path> {
        self.o3.get(program).or(self.default_o3.as_ref()).map(PathBuf::as_path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRow {
    pub content_hash: String,
    pub ncd_o0: f64,
    pub ncd_o3: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub avg: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Some(Self {
            avg: values.iter().sum::<f64>() / n as f64,
            median,
            max: sorted[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramReport {
    pub program_id: String,
    pub rows: Vec<VariantRow>,
    /// Set when the program could not be reported.
    pub error: Option<String>,
}

impl ProgramReport {
    pub fn o0_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ncd_o0).collect()
    }

    pub fn o3_values(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.ncd_o3).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub programs: Vec<ProgramReport>,
}

fn read(path: &Path) -> Result<Vec<u8>, ReportError> {
    fs::read(path).map_err(|source| ReportError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn text_of(path: &Path) -> Result<Vec<u8>, ReportError> {
    let bytes = read(path)?;
    extract_text(&bytes).map(|t| t.bytes).map_err(|source| ReportError::Elf {
        path: path.to_path_buf(),
        source,
    })
}

/// Programs with a `meta.jsonl` under `archive_root`, sorted.
pub fn archived_programs(archive_root: &Path) -> Result<Vec<String>, ReportError> {
    let entries = match fs::read_dir(archive_root) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(ReportError::Read {
                path: archive_root.to_path_buf(),
                source,
            })
        }
    };
    let mut out: Vec<String> = entries
        .filter_map(Result::ok)
        .filter(|e| e.path().join("meta.jsonl").is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    out.sort();
    Ok(out)
}

fn program_report(
    archive_root: &Path,
    program: &str,
    baselines: &Baselines,
    compressor: &Compressor,
) -> Result<ProgramReport, ReportError> {
    let Some(o0_path) = baselines.o0_for(program) else {
        return Ok(ProgramReport {
            program_id: program.to_string(),
            rows: Vec::new(),
            error: Some("no O0 baseline supplied".into()),
        });
    };
    let o0 = text_of(o0_path)?;
    let o3 = baselines.o3_for(program).map(text_of).transpose()?;
    let (c0, c3) = (compressor.compressed_len(&o0), o3.as_ref().map(|t| compressor.compressed_len(t)));
    let dir = archive_root.join(program);
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for record in read_meta(&dir.join("meta.jsonl"))? {
        if record.baseline || !seen.insert(record.text_hash) {
            continue;
        }
        let text = text_of(&dir.join("bin").join(record.content_hash.to_hex()))?;
        let ct = compressor.compressed_len(&text);
        rows.push(VariantRow {
            content_hash: record.content_hash.to_hex(),
            ncd_o0: compressor.ncd_with(&text, ct, &o0, c0),
            ncd_o3: o3.as_ref().zip(c3).map(|(t, c)| compressor.ncd_with(&text, ct, t, c)),
        });
    }
    Ok(ProgramReport {
        program_id: program.to_string(),
        rows,
        error: None,
    })
}

/// Computes NCD of every archived variant against the program's baselines.
pub fn build_report(
    archive_root: &Path,
    program: Option<&str>,
    baselines: &Baselines,
    compressor: &Compressor,
) -> Result<Report, ReportError> {
    let programs = match program {
        Some(p) => vec![p.to_string()],
        None => archived_programs(archive_root)?,
    };
    let mut report = Report::default();
    for p in programs {
        report.programs.push(program_report(archive_root, &p, baselines, compressor)?);
    }
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Share of `values` at or below each CDF step, as percentages.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let steps = (1.0 / CDF_STEP).round() as usize;
    (0..=steps)
        .map(|i| {
            let x = i as f64 * CDF_STEP;
            let below = values.iter().filter(|&&v| v <= x + 1e-12).count();
            (x, 100.0 * below as f64 / values.len() as f64)
        })
        .collect()
}

impl Report {
    pub fn has_errors(&self) -> bool {
        self.programs.iter().any(|p| p.error.is_some())
    }

    /// Detail rows, then `avg`/`median`/`max` per program, then (after a blank
    /// line) the CDF table. Numbers use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for p in &self.programs {
            if let Some(e) = &p.error {
                let _ = writeln!(out, "{},error,,", p.program_id);
                log::error!("{}: {e}", p.program_id);
                continue;
            }
            for r in &p.rows {
                let _ = writeln!(out, "{},{},{},{}", p.program_id, r.content_hash, r.ncd_o0, opt(r.ncd_o3));
            }
            let s0 = Summary::of(&p.o0_values());
            let s3 = p.o3_values().and_then(|v| Summary::of(&v));
            if let Some(s0) = s0 {
                for (label, a, b) in [
                    ("avg", s0.avg, s3.map(|s| s.avg)),
                    ("median", s0.median, s3.map(|s| s.median)),
                    ("max", s0.max, s3.map(|s| s.max)),
                ] {
                    let _ = writeln!(out, "{},{label},{a},{}", p.program_id, opt(b));
                }
            }
        }
        let mut tables: Vec<(String, &str, Vec<f64>)> = Vec::new();
        for p in self.programs.iter().filter(|p| p.error.is_none() && !p.rows.is_empty()) {
            tables.push((p.program_id.clone(), "o0", p.o0_values()));
            if let Some(v) = p.o3_values() {
                tables.push((p.program_id.clone(), "o3", v));
            }
        }
        if !tables.is_empty() {
            out.push('\n');
            out.push_str(CDF_HEADER);
            out.push('\n');
            for (id, which, values) in tables {
                for (x, pct) in cdf(&values) {
                    let _ = writeln!(out, "{id},{which},{x:.2},{pct}");
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashGroup {
    pub signal: Option<i32>,
    pub headline: String,
    pub count: usize,
    pub exemplar_flags: Vec<String>,
}

/// Groups crashes by signal and first stderr line; largest groups first.
pub fn crash_groups(records: &[CrashRecord]) -> Vec<CrashGroup> {
    let mut groups: BTreeMap<(Option<i32>, String), CrashGroup> = BTreeMap::new();
    for r in records {
        let key = (r.signal, r.headline().to_string());
        groups
            .entry(key)
            .or_insert_with(|| CrashGroup {
                signal: r.signal,
                headline: r.headline().to_string(),
                count: 0,
                exemplar_flags: r.flags.clone(),
            })
            .count += 1;
    }
    let mut out: Vec<CrashGroup> = groups.into_values().collect();
    out.sort_by_key(|g| std::cmp::Reverse(g.count));
    out
}

pub fn format_crash_table(groups: &[CrashGroup]) -> String {
    if groups.is_empty() {
        return "no crashes recorded\n".into();
    }
    let mut out = String::from("count\tsignal\tsignature\texample_flags\n");
    for g in groups {
        let signal = g.signal.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "{}\t{signal}\t{}\t{}", g.count, g.headline, g.exemplar_flags.join(" "));
    }
    out
}
