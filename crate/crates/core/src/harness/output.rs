use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::Method;
use super::pipeline::{Hyper, ResultRow};
use crate::eval::{aggregate, AggregateStats};
use crate::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// Which output a summary line aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ArrayTag {
    Index(usize),
    Fused,
    /// Every array of a bf-only condition pooled.
    All,
}

impl ArrayTag {
    pub fn label(self) -> String {
        match self {
            ArrayTag::Index(a) => a.to_string(),
            ArrayTag::Fused => "fused".into(),
            ArrayTag::All => "all".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub condition_index: usize,
    pub condition: String,
    pub method: Method,
    pub arrays: usize,
    pub t60: Option<f64>,
    pub k: Option<usize>,
    pub hyper: Option<Hyper>,
    pub array: ArrayTag,
    pub filtered: Option<AggregateStats>,
    pub si: Option<AggregateStats>,
    pub ok: usize,
    pub failed: usize,
}

fn hyper_cmp(a: Option<Hyper>, b: Option<Hyper>) -> Ordering {
    let key = |h: Option<Hyper>| h.map(|h| (h.kind(), h.value()));
    match (key(a), key(b)) {
        (Some((ka, va)), Some((kb, vb))) => ka.cmp(kb).then(va.total_cmp(&vb)),
        (x, y) => x.is_some().cmp(&y.is_some()),
    }
}

fn tag(row: &ResultRow) -> ArrayTag {
    row.array.map_or(ArrayTag::Fused, ArrayTag::Index)
}

pub fn row_order(a: &ResultRow, b: &ResultRow) -> Ordering {
    a.condition_index
        .cmp(&b.condition_index)
        .then(a.method.cmp(&b.method))
        .then(a.k.cmp(&b.k))
        .then(hyper_cmp(a.hyper, b.hyper))
        .then(a.seed.cmp(&b.seed))
        .then(tag(a).cmp(&tag(b)))
}

pub fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

fn hyper_fields(h: Option<Hyper>) -> [String; 2] {
    match h {
        Some(h) => [h.kind().to_string(), fmt_f(h.value())],
        None => [String::new(), String::new()],
    }
}

/// Groups rows by everything except the seed; bf-only also gets a pooled
/// line over its arrays.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| row_order(a, b));
    let mut groups: Vec<(SummaryRow, Vec<&ResultRow>)> = Vec::new();
    let same = |s: &SummaryRow, r: &ResultRow, t: ArrayTag| {
        s.condition_index == r.condition_index
            && s.method == r.method
            && s.k == r.k
            && hyper_cmp(s.hyper, r.hyper) == Ordering::Equal
            && s.array == t
    };
    for r in sorted {
        let mut tags = vec![tag(r)];
        if r.method == Method::BfOnly {
            tags.push(ArrayTag::All);
        }
        for t in tags {
            match groups.iter_mut().find(|(s, _)| same(s, r, t)) {
                Some((_, members)) => members.push(r),
                None => groups.push((
                    SummaryRow {
                        condition_index: r.condition_index,
                        condition: r.condition.clone(),
                        method: r.method,
                        arrays: r.arrays,
                        t60: r.t60,
                        k: r.k,
                        hyper: r.hyper,
                        array: t,
                        filtered: None,
                        si: None,
                        ok: 0,
                        failed: 0,
                    },
                    vec![r],
                )),
            }
        }
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|(mut s, members)| {
            let filtered: Vec<f64> = members.iter().filter_map(|r| r.outcome.filtered()).collect();
            let si: Vec<f64> = members.iter().filter_map(|r| r.outcome.si()).collect();
            s.ok = filtered.len();
            s.failed = members.len() - filtered.len();
            s.filtered = aggregate(&filtered).ok();
            s.si = aggregate(&si).ok();
            s
        })
        .collect();
    out.sort_by(|a, b| {
        a.condition_index
            .cmp(&b.condition_index)
            .then(a.method.cmp(&b.method))
            .then(a.k.cmp(&b.k))
            .then(hyper_cmp(a.hyper, b.hyper))
            .then(a.array.cmp(&b.array))
    });
    out
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "schema_version",
        "condition",
        "method",
        "arrays",
        "t60",
        "k",
        "hyper_kind",
        "tau_or_mu",
        "seed",
        "stream_seed",
        "array",
        "status",
        "sdr_filtered_db",
        "sdr_si_db",
        "reason",
    ])?;
    for r in rows {
        let [hk, hv] = hyper_fields(r.hyper);
        let (status, f, s, reason) = match &r.outcome {
            super::Outcome::Ok { sdr_filtered_db, sdr_si_db } => {
                ("ok", fmt_f(*sdr_filtered_db), fmt_f(*sdr_si_db), String::new())
            }
            super::Outcome::Failed { reason } => ("failed", String::new(), String::new(), reason.clone()),
        };
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.condition.clone(),
            r.method.to_string(),
            r.arrays.to_string(),
            opt(r.t60.map(fmt_f)),
            opt(r.k),
            hk,
            hv,
            r.seed.to_string(),
            opt(r.stream_seed),
            r.array.map_or("fused".into(), |a| a.to_string()),
            status.into(),
            f,
            s,
            reason,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock times live apart from results.csv so that file stays byte-stable.
pub fn write_timings(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["schema_version", "condition", "method", "k", "hyper_kind", "tau_or_mu", "seed", "array", "runtime_ms"])?;
    for r in rows {
        let [hk, hv] = hyper_fields(r.hyper);
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.condition.clone(),
            r.method.to_string(),
            opt(r.k),
            hk,
            hv,
            r.seed.to_string(),
            r.array.map_or("fused".into(), |a| a.to_string()),
            format!("{:.3}", r.runtime_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn stat_fields(s: Option<AggregateStats>) -> [String; 2] {
    match s {
        Some(s) => [fmt_f(s.mean_db), fmt_f(s.std_db)],
        None => [String::new(), String::new()],
    }
}

pub fn write_summary(path: &Path, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "schema_version",
        "condition",
        "method",
        "arrays",
        "t60",
        "k",
        "hyper_kind",
        "tau_or_mu",
        "array",
        "n_ok",
        "n_failed",
        "sdr_filtered_mean_db",
        "sdr_filtered_std_db",
        "sdr_si_mean_db",
        "sdr_si_std_db",
    ])?;
    for s in summary {
        let [hk, hv] = hyper_fields(s.hyper);
        let [fm, fs] = stat_fields(s.filtered);
        let [sm, ss] = stat_fields(s.si);
        w.write_record([
            SCHEMA_VERSION.to_string(),
            s.condition.clone(),
            s.method.to_string(),
            s.arrays.to_string(),
            opt(s.t60.map(fmt_f)),
            opt(s.k),
            hk,
            hv,
            s.array.label(),
            s.ok.to_string(),
            s.failed.to_string(),
            fm,
            fs,
            sm,
            ss,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Best three thresholds by mean filtered SDR for each NMF `(condition, K)`.
pub fn top_taus(summary: &[SummaryRow]) -> Vec<(&SummaryRow, usize)> {
    let mut groups: BTreeMap<(usize, Option<usize>), Vec<&SummaryRow>> = BTreeMap::new();
    for s in summary.iter().filter(|s| s.method == Method::Nmf && s.filtered.is_some()) {
        groups.entry((s.condition_index, s.k)).or_default().push(s);
    }
    let mut out = Vec::new();
    for (_, mut members) in groups {
        members.sort_by(|a, b| {
            b.filtered.unwrap().mean_db.total_cmp(&a.filtered.unwrap().mean_db).then(hyper_cmp(a.hyper, b.hyper))
        });
        out.extend(members.into_iter().take(3).enumerate().map(|(i, s)| (s, i + 1)));
    }
    out
}

pub fn write_top_taus(path: &Path, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["schema_version", "condition", "k", "rank", "hyper_kind", "tau", "sdr_filtered_mean_db", "sdr_filtered_std_db"])?;
    for (s, rank) in top_taus(summary) {
        let [hk, hv] = hyper_fields(s.hyper);
        let [m, sd] = stat_fields(s.filtered);
        w.write_record([SCHEMA_VERSION.to_string(), s.condition.clone(), opt(s.k), rank.to_string(), hk, hv, m, sd])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one series file per condition with `(K, mean, std)` lines for each
/// `(method, hyper)` plus the pooled bf-only baseline; groups with no
/// successful run are omitted and listed in `plots/manifest.csv`.
pub fn emit_plots(dir: &Path, summary: &[SummaryRow]) -> Result<Vec<PathBuf>> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots)?;
    let mut by_condition: BTreeMap<usize, Vec<&SummaryRow>> = BTreeMap::new();
    for s in summary.iter().filter(|s| !matches!(s.array, ArrayTag::Index(_))) {
        by_condition.entry(s.condition_index).or_default().push(s);
    }
    let mut files = Vec::new();
    let mut manifest = csv::Writer::from_path(plots.join("manifest.csv"))?;
    manifest.write_record(["schema_version", "file", "method", "hyper_kind", "tau_or_mu", "k", "status"])?;
    for members in by_condition.values() {
        let file = plots.join(format!("{}.csv", members[0].condition));
        let name = file.file_name().unwrap().to_string_lossy().into_owned();
        let mut w = csv::Writer::from_path(&file)?;
        w.write_record(["schema_version", "method", "hyper_kind", "tau_or_mu", "k", "n", "mean_db", "std_db"])?;
        for s in members {
            let [hk, hv] = hyper_fields(s.hyper);
            let status = match s.filtered {
                Some(st) => {
                    let [m, sd] = stat_fields(Some(st));
                    w.write_record([
                        SCHEMA_VERSION.to_string(),
                        s.method.to_string(),
                        hk.clone(),
                        hv.clone(),
                        opt(s.k),
                        st.count.to_string(),
                        m,
                        sd,
                    ])?;
                    "written"
                }
                None => "omitted: no successful runs",
            };
            manifest.write_record([SCHEMA_VERSION.to_string(), name.clone(), s.method.to_string(), hk, hv, opt(s.k), status.into()])?;
        }
        w.flush()?;
        files.push(file);
    }
    manifest.flush()?;
    files.push(plots.join("manifest.csv"));
    Ok(files)
}
