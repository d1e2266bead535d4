use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::run::{RunEntry, RunManifest, RunStatus};
use super::write_atomic;
use crate::data::ForgetMode;
use crate::error::{Error, Result};
use crate::eval::{average_of, metric_gap, GapMode, MetricsRecord};
use crate::unlearn::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Input(format!("unknown report format `{s}`"))),
        }
    }
}

/// One report line. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: String,
    pub policy: String,
    pub forget_mode: String,
    pub forget_param: f64,
    pub seed: u64,
    #[serde(rename = "UA")]
    pub ua: f64,
    #[serde(rename = "RA")]
    pub ra: f64,
    #[serde(rename = "TA")]
    pub ta: f64,
    #[serde(rename = "MIA")]
    pub mia: f64,
    #[serde(rename = "RTE")]
    pub rte: f64,
    #[serde(rename = "gap_UA")]
    pub gap_ua: f64,
    #[serde(rename = "gap_RA")]
    pub gap_ra: f64,
    #[serde(rename = "gap_TA")]
    pub gap_ta: f64,
    #[serde(rename = "gap_MIA")]
    pub gap_mia: f64,
    #[serde(rename = "AG")]
    pub ag: f64,
    pub gap_mode: String,
}

pub const REPORT_COLUMNS: [&str; 17] = [
    "dataset",
    "method",
    "policy",
    "forget_mode",
    "forget_param",
    "seed",
    "UA",
    "RA",
    "TA",
    "MIA",
    "RTE",
    "gap_UA",
    "gap_RA",
    "gap_TA",
    "gap_MIA",
    "AG",
    "gap_mode",
];

/// Mean ± sample standard deviation per (dataset, method, policy, forget) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub method: String,
    pub policy: String,
    pub forget_mode: String,
    pub forget_param: f64,
    pub runs: usize,
    #[serde(rename = "UA_mean")]
    pub ua_mean: f64,
    #[serde(rename = "UA_std")]
    pub ua_std: f64,
    #[serde(rename = "RA_mean")]
    pub ra_mean: f64,
    #[serde(rename = "RA_std")]
    pub ra_std: f64,
    #[serde(rename = "TA_mean")]
    pub ta_mean: f64,
    #[serde(rename = "TA_std")]
    pub ta_std: f64,
    #[serde(rename = "MIA_mean")]
    pub mia_mean: f64,
    #[serde(rename = "MIA_std")]
    pub mia_std: f64,
    #[serde(rename = "RTE_mean")]
    pub rte_mean: f64,
    #[serde(rename = "RTE_std")]
    pub rte_std: f64,
    #[serde(rename = "gap_UA")]
    pub gap_ua: f64,
    #[serde(rename = "gap_RA")]
    pub gap_ra: f64,
    #[serde(rename = "gap_TA")]
    pub gap_ta: f64,
    #[serde(rename = "gap_MIA")]
    pub gap_mia: f64,
    #[serde(rename = "AG")]
    pub ag: f64,
    pub gap_mode: String,
    #[serde(rename = "AG_per_seed")]
    pub ag_per_seed: f64,
    #[serde(rename = "AG_of_means")]
    pub ag_of_means: f64,
    /// Test accuracy without the forgotten class, class-wise forgetting only.
    #[serde(rename = "TA_retained_mean")]
    pub ta_retained_mean: Option<f64>,
    /// `"mean ± std"` at two decimals, in UA, RA, TA, MIA order.
    #[serde(rename = "UA_fmt")]
    pub ua_fmt: String,
    #[serde(rename = "RA_fmt")]
    pub ra_fmt: String,
    #[serde(rename = "TA_fmt")]
    pub ta_fmt: String,
    #[serde(rename = "MIA_fmt")]
    pub mia_fmt: String,
}

/// Arithmetic mean and sample (n - 1) standard deviation; 0 for one value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn forget_cols(mode: ForgetMode) -> (String, f64) {
    (mode.tag().to_string(), mode.parameter())
}

type GroupKey = (String, Method, String, String, u64);

fn group_key(e: &RunEntry) -> GroupKey {
    let (fm, fp) = forget_cols(e.forget);
    (
        e.dataset.clone(),
        e.method,
        e.policy.name().to_string(),
        fm,
        fp.to_bits(),
    )
}

fn completed(entries: &[RunEntry]) -> impl Iterator<Item = (&RunEntry, &MetricsRecord)> {
    entries
        .iter()
        .filter(|e| e.status == RunStatus::Ok)
        .filter_map(|e| e.metrics.as_ref().map(|m| (e, m)))
}

fn sort_key(
    dataset: &str,
    method: &str,
    policy: &str,
    forget_mode: &str,
    forget_param: f64,
    seed: u64,
) -> (String, String, String, String, u64, u64) {
    // forget parameters are non-negative, so their bit patterns order like the values
    (
        dataset.to_string(),
        method.to_string(),
        policy.to_string(),
        forget_mode.to_string(),
        forget_param.to_bits(),
        seed,
    )
}

/// Per-run report rows. Gaps compare each run to the retrain run of the
/// same dataset, policy and forget spec: the same seed in per-seed mode,
/// the mean over seeds in of-means mode. Missing retrain runs give NaN gaps.
pub fn report_rows(entries: &[RunEntry], mode: GapMode) -> Vec<ReportRow> {
    let mut retrain: BTreeMap<(String, String, String, u64), Vec<(u64, [f64; 4])>> =
        BTreeMap::new();
    for (e, m) in completed(entries).filter(|(e, _)| e.method == Method::Retrain) {
        let (d, _, p, fm, fp) = group_key(e);
        retrain
            .entry((d, p, fm, fp))
            .or_default()
            .push((e.seed, [m.ua, m.ra, m.ta, m.mia]));
    }
    let mut rows: Vec<ReportRow> = completed(entries)
        .map(|(e, m)| {
            let (d, _, p, fm, fp) = group_key(e);
            let vals = [m.ua, m.ra, m.ta, m.mia];
            let reference: Option<[f64; 4]> =
                retrain.get(&(d, p, fm, fp)).and_then(|runs| match mode {
                    GapMode::PerSeed => runs.iter().find(|(s, _)| *s == e.seed).map(|(_, v)| *v),
                    GapMode::OfMeans => {
                        let n = runs.len() as f64;
                        Some(std::array::from_fn(|k| {
                            runs.iter().map(|(_, v)| v[k]).sum::<f64>() / n
                        }))
                    }
                });
            let gaps: [f64; 4] = match reference {
                Some(r) => std::array::from_fn(|k| (vals[k] - r[k]).abs()),
                None => [f64::NAN; 4],
            };
            let (forget_mode, forget_param) = forget_cols(e.forget);
            ReportRow {
                dataset: e.dataset.clone(),
                method: e.method.name().to_string(),
                policy: e.policy.name().to_string(),
                forget_mode,
                forget_param,
                seed: e.seed,
                ua: m.ua,
                ra: m.ra,
                ta: m.ta,
                mia: m.mia,
                rte: m.rte,
                gap_ua: gaps[0],
                gap_ra: gaps[1],
                gap_ta: gaps[2],
                gap_mia: gaps[3],
                ag: average_of(gaps),
                gap_mode: mode.name().to_string(),
            }
        })
        .collect();
    rows.sort_by_key(|r| {
        sort_key(
            &r.dataset,
            &r.method,
            &r.policy,
            &r.forget_mode,
            r.forget_param,
            r.seed,
        )
    });
    rows
}

fn pm(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

pub fn aggregate_rows(entries: &[RunEntry], mode: GapMode) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&MetricsRecord>> = BTreeMap::new();
    for (e, m) in completed(entries) {
        groups.entry(group_key(e)).or_default().push(m);
    }
    let mut rows: Vec<AggregateRow> = groups
        .iter()
        .map(|(key, recs)| {
            let (d, method, p, fm, fp) = key;
            let col = |f: fn(&MetricsRecord) -> f64| {
                mean_std(&recs.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let (ua, ra, ta, mia, rte) = (
                col(|r| r.ua),
                col(|r| r.ra),
                col(|r| r.ta),
                col(|r| r.mia),
                col(|r| r.rte),
            );
            let retrain: Vec<MetricsRecord> = groups
                .get(&(d.clone(), Method::Retrain, p.clone(), fm.clone(), *fp))
                .map(|v| v.iter().map(|r| (*r).clone()).collect())
                .unwrap_or_default();
            let mine: Vec<MetricsRecord> = recs.iter().map(|r| (*r).clone()).collect();
            let gap = |m: GapMode| metric_gap(&mine, &retrain, m).ok();
            let (per_seed, of_means) = (gap(GapMode::PerSeed), gap(GapMode::OfMeans));
            let primary = match mode {
                GapMode::PerSeed => per_seed,
                GapMode::OfMeans => of_means,
            };
            let nan = f64::NAN;
            let retained: Vec<f64> = recs.iter().filter_map(|r| r.ta_retained_classes).collect();
            AggregateRow {
                dataset: d.clone(),
                method: method.name().to_string(),
                policy: p.clone(),
                forget_mode: fm.clone(),
                forget_param: f64::from_bits(*fp),
                runs: recs.len(),
                ua_mean: ua.0,
                ua_std: ua.1,
                ra_mean: ra.0,
                ra_std: ra.1,
                ta_mean: ta.0,
                ta_std: ta.1,
                mia_mean: mia.0,
                mia_std: mia.1,
                rte_mean: rte.0,
                rte_std: rte.1,
                gap_ua: primary.map_or(nan, |g| g.ua),
                gap_ra: primary.map_or(nan, |g| g.ra),
                gap_ta: primary.map_or(nan, |g| g.ta),
                gap_mia: primary.map_or(nan, |g| g.mia),
                ag: primary.map_or(nan, |g| g.ag),
                gap_mode: mode.name().to_string(),
                ag_per_seed: per_seed.map_or(nan, |g| g.ag),
                ag_of_means: of_means.map_or(nan, |g| g.ag),
                ta_retained_mean: (!retained.is_empty()).then(|| mean_std(&retained).0),
                ua_fmt: pm(ua.0, ua.1),
                ra_fmt: pm(ra.0, ra.1),
                ta_fmt: pm(ta.0, ta.1),
                mia_fmt: pm(mia.0, mia.1),
            }
        })
        .collect();
    rows.sort_by_key(|r| {
        sort_key(
            &r.dataset,
            &r.method,
            &r.policy,
            &r.forget_mode,
            r.forget_param,
            0,
        )
    });
    rows
}

fn render<T: Serialize>(rows: &[T], format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
            }
            w.into_inner().map_err(|e| Error::Serde(e.to_string()))
        }
        ReportFormat::Json => {
            let mut text =
                serde_json::to_vec_pretty(rows).map_err(|e| Error::Serde(e.to_string()))?;
            text.push(b'\n');
            Ok(text)
        }
    }
}

/// Writes `rows` to `path` in `format`. Refuses an empty row list.
pub fn emit_report<T: Serialize>(rows: &[T], format: ReportFormat, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Input("no records to report".into()));
    }
    write_atomic(path, &render(rows, format)?)
}

/// Writes `report.<ext>` and `aggregate.<ext>` for every format into `dir`.
/// Returns the written file names; nothing is written if no run completed.
pub fn write_reports(
    manifest: &RunManifest,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    let mode = manifest.config.gap_mode;
    let rows = report_rows(&manifest.runs, mode);
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let agg = aggregate_rows(&manifest.runs, mode);
    let mut written = Vec::new();
    for &f in formats {
        let report = PathBuf::from(format!("report.{}", f.extension()));
        let aggregate = PathBuf::from(format!("aggregate.{}", f.extension()));
        emit_report(&rows, f, &dir.join(&report))?;
        emit_report(&agg, f, &dir.join(&aggregate))?;
        written.push(report);
        written.push(aggregate);
    }
    Ok(written)
}

/// Parses a CSV report back into rows.
pub fn read_csv_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format {
        file: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let header = r
        .headers()
        .map_err(|e| Error::Format {
            file: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .clone();
    if header.iter().ne(REPORT_COLUMNS.iter().copied()) {
        return Err(Error::Format {
            file: path.to_path_buf(),
            reason: format!("unexpected columns {header:?}"),
        });
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<ReportRow>, _>>()
        .map_err(|e| Error::Format {
            file: path.to_path_buf(),
            reason: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn csv_header_matches_columns() {
        let row = ReportRow {
            dataset: "synthetic".into(),
            method: "ft".into(),
            policy: "default".into(),
            forget_mode: "random".into(),
            forget_param: 0.1,
            seed: 0,
            ua: 1.0,
            ra: 2.0,
            ta: 3.0,
            mia: 4.0,
            rte: 0.5,
            gap_ua: 0.0,
            gap_ra: 0.0,
            gap_ta: 0.0,
            gap_mia: 0.0,
            ag: 0.0,
            gap_mode: "per-seed".into(),
        };
        let text = String::from_utf8(render(&[row], ReportFormat::Csv).unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), REPORT_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 2);
    }
}
