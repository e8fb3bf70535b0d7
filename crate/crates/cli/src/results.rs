//! CSV layouts for run and sweep results, with a reader for each.
//!
//! Every file has a single header line. The first column, `kind`, tells
//! per-iteration or per-cell rows apart from the summary rows that follow
//! them. Floats are written in shortest round-trip form; absent values are
//! empty fields.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{HarnessError, Result};

pub const RUN_HEADER: [&str; 9] = [
    "kind",
    "t",
    "frob_error",
    "rel_error",
    "precision",
    "recall",
    "atee_set_size",
    "delta",
    "success",
];

pub const SWEEP_BK_HEADER: [&str; 8] = [
    "kind",
    "big_k",
    "b",
    "effective_b",
    "successes",
    "runs",
    "success_rate",
    "mean_rel_error",
];

pub const SWEEP_MP_HEADER: [&str; 7] = [
    "kind",
    "p",
    "m",
    "successes",
    "runs",
    "success_rate",
    "mean_rel_error",
];

pub const TIMING_HEADER: [&str; 3] = ["t", "wall_ms", "peak_rss_kb"];

#[derive(Clone, Debug, PartialEq)]
pub struct IterRow {
    pub t: usize,
    pub frob_error: f64,
    pub rel_error: f64,
    pub precision: f64,
    pub recall: f64,
    pub atee_set_size: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub t: usize,
    pub frob_error: f64,
    pub rel_error: f64,
    pub precision: f64,
    pub recall: f64,
    /// Exact support recovery and relative error below tolerance.
    pub success: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTable {
    pub iters: Vec<IterRow>,
    pub summary: Option<SummaryRow>,
}

/// One grid cell of a sweep: `(row_key, col_key)` is `(K, b)` or `(p, m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub row_key: usize,
    pub col_key: usize,
    pub effective_b: Option<usize>,
    pub successes: usize,
    pub runs: usize,
    pub mean_rel_error: f64,
}

impl Cell {
    pub fn success_rate(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.successes as f64 / self.runs as f64
        }
    }
}

/// Grid results plus the smallest passing column value per row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub cells: Vec<Cell>,
    pub minimal: Vec<(usize, Option<usize>)>,
}

impl SweepTable {
    pub fn minimal_for(&self, row_key: usize) -> Option<usize> {
        self.minimal
            .iter()
            .find(|(r, _)| *r == row_key)
            .and_then(|(_, v)| *v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    /// Rows keyed by `K`, columns by `b`.
    Bk,
    /// Rows keyed by `p`, columns by `m`.
    Mp,
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

pub fn write_run<W: Write>(out: W, table: &RunTable) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_HEADER).map_err(csv_err)?;
    for r in &table.iters {
        w.write_record([
            "iter".to_string(),
            r.t.to_string(),
            f(r.frob_error),
            f(r.rel_error),
            f(r.precision),
            f(r.recall),
            r.atee_set_size.to_string(),
            f(r.delta),
            String::new(),
        ])
        .map_err(csv_err)?;
    }
    if let Some(s) = &table.summary {
        w.write_record([
            "summary".to_string(),
            s.t.to_string(),
            f(s.frob_error),
            f(s.rel_error),
            f(s.precision),
            f(s.recall),
            String::new(),
            String::new(),
            s.success.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_sweep<W: Write>(out: W, kind: SweepKind, table: &SweepTable) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match kind {
        SweepKind::Bk => w.write_record(SWEEP_BK_HEADER),
        SweepKind::Mp => w.write_record(SWEEP_MP_HEADER),
    }
    .map_err(csv_err)?;
    for c in &table.cells {
        let mut rec = vec!["cell".to_string(), c.row_key.to_string(), c.col_key.to_string()];
        if kind == SweepKind::Bk {
            rec.push(opt(c.effective_b));
        }
        rec.extend([
            c.successes.to_string(),
            c.runs.to_string(),
            f(c.success_rate()),
            f(c.mean_rel_error),
        ]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    for (row, min) in &table.minimal {
        let (label, width) = match kind {
            SweepKind::Bk => ("min_b", SWEEP_BK_HEADER.len()),
            SweepKind::Mp => ("min_m", SWEEP_MP_HEADER.len()),
        };
        let mut rec = vec![label.to_string(), row.to_string(), opt(*min)];
        if kind == SweepKind::Bk {
            let eff = min.map(|b| b.next_power_of_two());
            rec.push(opt(eff));
        }
        rec.resize(width, String::new());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_timing<W: Write>(out: W, rows: &[(usize, f64, Option<u64>)]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMING_HEADER).map_err(csv_err)?;
    for (t, ms, rss) in rows {
        w.write_record([t.to_string(), f(*ms), opt(*rss)])
            .map_err(csv_err)?;
    }
    w.flush()
}

struct Fields<'a> {
    path: &'a Path,
    line: u64,
    rec: csv::StringRecord,
}

impl Fields<'_> {
    fn raw(&self, i: usize) -> &str {
        self.rec.get(i).unwrap_or("")
    }

    fn err(&self, msg: String) -> HarnessError {
        HarnessError::format(self.path, format!("line {}: {msg}", self.line))
    }

    fn num<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        self.raw(i)
            .parse()
            .map_err(|_| self.err(format!("bad value '{}' in column {}", self.raw(i), i + 1)))
    }

    fn opt_num<T: std::str::FromStr>(&self, i: usize) -> Result<Option<T>> {
        if self.raw(i).is_empty() {
            Ok(None)
        } else {
            self.num(i).map(Some)
        }
    }
}

fn records<'a, R: Read>(input: R, path: &'a Path, header: &[&str]) -> Result<Vec<Fields<'a>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let got = rdr
        .headers()
        .map_err(|e| HarnessError::format(path, e.to_string()))?
        .clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(HarnessError::format(
            path,
            format!("header {:?} does not match {:?}", got.iter().collect::<Vec<_>>(), header),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| HarnessError::format(path, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(Fields { path, line, rec });
    }
    Ok(out)
}

pub fn read_run<R: Read>(input: R, path: &Path) -> Result<RunTable> {
    let mut table = RunTable::default();
    for r in records(input, path, &RUN_HEADER)? {
        match r.raw(0) {
            "iter" => table.iters.push(IterRow {
                t: r.num(1)?,
                frob_error: r.num(2)?,
                rel_error: r.num(3)?,
                precision: r.num(4)?,
                recall: r.num(5)?,
                atee_set_size: r.num(6)?,
                delta: r.num(7)?,
            }),
            "summary" => {
                if table.summary.is_some() {
                    return Err(r.err("second summary row".into()));
                }
                table.summary = Some(SummaryRow {
                    t: r.num(1)?,
                    frob_error: r.num(2)?,
                    rel_error: r.num(3)?,
                    precision: r.num(4)?,
                    recall: r.num(5)?,
                    success: r.num(8)?,
                });
            }
            other => return Err(r.err(format!("unknown row kind '{other}'"))),
        }
    }
    Ok(table)
}

pub fn read_sweep<R: Read>(input: R, path: &Path, kind: SweepKind) -> Result<SweepTable> {
    let (header, min_label): (&[&str], &str) = match kind {
        SweepKind::Bk => (&SWEEP_BK_HEADER, "min_b"),
        SweepKind::Mp => (&SWEEP_MP_HEADER, "min_m"),
    };
    // column offset past the optional effective_b column
    let o = usize::from(kind == SweepKind::Bk);
    let mut table = SweepTable::default();
    for r in records(input, path, header)? {
        match r.raw(0) {
            "cell" => {
                let cell = Cell {
                    row_key: r.num(1)?,
                    col_key: r.num(2)?,
                    effective_b: if o == 1 { r.opt_num(3)? } else { None },
                    successes: r.num(3 + o)?,
                    runs: r.num(4 + o)?,
                    mean_rel_error: r.num(6 + o)?,
                };
                let rate: f64 = r.num(5 + o)?;
                if rate != cell.success_rate() {
                    return Err(r.err(format!("success rate {rate} disagrees with counts")));
                }
                table.cells.push(cell);
            }
            l if l == min_label => table.minimal.push((r.num(1)?, r.opt_num(2)?)),
            other => return Err(r.err(format!("unknown row kind '{other}'"))),
        }
    }
    Ok(table)
}

pub fn read_run_file(path: &Path) -> Result<RunTable> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_run(file, path)
}

pub fn read_sweep_file(path: &Path, kind: SweepKind) -> Result<SweepTable> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_sweep(file, path, kind)
}
