//! Cooperation metrics over an archived population and the tables behind
//! the scatter, symmetry and weight-distribution plots.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::f64::consts::FRAC_2_PI;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Dyad, DyadId, Role, SwitchPolicy, FEATURE_COUNT, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::evolution::checkpoint::write_json_atomic;
use crate::evolution::{ArchivedDyad, HallOfFame};
use crate::objectives::{score, AgentSlot, ObjectiveVector};
use crate::rng;
use crate::simulator::{InitSpec, Simulator};
use crate::trajectory::Reference;

/// Dyads at or above either bound did no better than standing still or
/// broke the object on every step.
pub const PARETO_TRACKING_MAX: f64 = 1.0;
pub const PARETO_STABILIZATION_MAX: f64 = 1.0;
pub const TOP_TRACKING_MAX: f64 = 0.7;
pub const TOP_STABILIZATION_MAX: f64 = 0.3;

/// Fraction of steps the two agents hold different roles.
pub fn anti_synchrony(roles1: &[Role], roles2: &[Role]) -> Result<f64> {
    if roles1.len() != roles2.len() {
        return Err(Error::LengthMismatch(roles1.len(), roles2.len()));
    }
    if roles1.is_empty() {
        return Ok(0.0);
    }
    let differ: u32 = roles1
        .iter()
        .zip(roles2)
        .map(|(a, b)| (a.as_u8() as i32 - b.as_u8() as i32).unsigned_abs())
        .sum();
    Ok(differ as f64 / roles1.len() as f64)
}

/// `min(E1/E2, E2/E1)`; 0 when exactly one effort is zero, undefined when both are.
pub fn load_sharing(e1: f64, e2: f64) -> Option<f64> {
    match (e1 == 0.0, e2 == 0.0) {
        (true, true) => None,
        (true, false) | (false, true) => Some(0.0),
        _ => Some((e1 / e2).min(e2 / e1)),
    }
}

/// Shifted angular similarity: 1 for parallel, 0 for orthogonal, −1 for opposite.
pub fn symmetry(w1: &[f64], w2: &[f64]) -> Result<f64> {
    if w1.len() != w2.len() {
        return Err(Error::LengthMismatch(w1.len(), w2.len()));
    }
    let n1 = w1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = w2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = w1.iter().zip(w2).map(|(a, b)| a * b).sum();
    let cos = (dot / (n1 * n2)).clamp(-1.0, 1.0);
    Ok(1.0 - FRAC_2_PI * cos.acos())
}

fn policy_symmetry(a: &SwitchPolicy, b: &SwitchPolicy) -> f64 {
    symmetry(a.weights(), b.weights()).expect("policies are unit norm")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Symmetries {
    pub sym_st: f64,
    pub sym_ts: f64,
    /// Mean of `C(W1_ST, W2_TS)` and `C(W1_TS, W2_ST)`.
    pub sym_cross: f64,
}

pub fn dyad_symmetries(d: &Dyad) -> Symmetries {
    let (a, b) = (&d.agent1, &d.agent2);
    Symmetries {
        sym_st: policy_symmetry(&a.w_st, &b.w_st),
        sym_ts: policy_symmetry(&a.w_ts, &b.w_ts),
        sym_cross: 0.5 * (policy_symmetry(&a.w_st, &b.w_ts) + policy_symmetry(&a.w_ts, &b.w_st)),
    }
}

/// One analysed dyad; losses come from its held-out re-simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dyad_id: DyadId,
    pub tracking: f64,
    pub stabilization: f64,
    pub effort1: f64,
    pub effort2: f64,
    pub jerk: f64,
    pub anti_synchrony: f64,
    pub load_sharing: Option<f64>,
    pub sym_st: f64,
    pub sym_ts: f64,
    pub sym_cross: f64,
}

/// Anything carrying tracking and stabilization losses.
pub trait Losses {
    fn tracking(&self) -> f64;
    fn stabilization(&self) -> f64;
}

impl Losses for MetricRow {
    fn tracking(&self) -> f64 {
        self.tracking
    }
    fn stabilization(&self) -> f64 {
        self.stabilization
    }
}

impl Losses for ArchivedDyad {
    fn tracking(&self) -> f64 {
        self.objectives.tracking
    }
    fn stabilization(&self) -> f64 {
        self.objectives.stabilization
    }
}

impl Losses for ObjectiveVector {
    fn tracking(&self) -> f64 {
        self.tracking
    }
    fn stabilization(&self) -> f64 {
        self.stabilization
    }
}

/// Drops members with tracking ≥ 1 or stabilization ≥ 1.
pub fn filter_pareto_population<T: Losses + Clone>(members: &[T]) -> Vec<T> {
    members
        .iter()
        .filter(|m| m.tracking() < PARETO_TRACKING_MAX && m.stabilization() < PARETO_STABILIZATION_MAX)
        .cloned()
        .collect()
}

/// Strictly below 0.7 tracking and 0.3 stabilization.
pub fn top_performer_set<T: Losses + Clone>(rows: &[T]) -> Vec<T> {
    rows.iter()
        .filter(|r| r.tracking() < TOP_TRACKING_MAX && r.stabilization() < TOP_STABILIZATION_MAX)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AntiSynchrony,
    LoadSharing,
}

impl Metric {
    /// Undefined load-sharing sorts below every defined value.
    fn value(self, row: &MetricRow) -> f64 {
        match self {
            Metric::AntiSynchrony => row.anti_synchrony,
            Metric::LoadSharing => row.load_sharing.unwrap_or(f64::NEG_INFINITY),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub size: usize,
    pub mean_sym_st: f64,
    pub mean_sym_ts: f64,
    pub mean_sym_cross: f64,
}

impl GroupSummary {
    pub fn of(rows: &[&MetricRow]) -> Self {
        let mean = |f: fn(&MetricRow) -> f64| {
            if rows.is_empty() {
                f64::NAN
            } else {
                rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
            }
        };
        Self {
            size: rows.len(),
            mean_sym_st: mean(|r| r.sym_st),
            mean_sym_ts: mean(|r| r.sym_ts),
            mean_sym_cross: mean(|r| r.sym_cross),
        }
    }
}

/// Top and bottom 10% by a metric and an equally sized seeded random sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deciles {
    pub metric: Metric,
    pub top: Vec<DyadId>,
    pub bottom: Vec<DyadId>,
    pub random: Vec<DyadId>,
    pub top_summary: GroupSummary,
    pub bottom_summary: GroupSummary,
    pub random_summary: GroupSummary,
}

/// Groups hold `⌊n/10⌋` rows. Ties on the metric go to the smaller dyad id,
/// and the random sample is drawn from rows in dyad-id order, so the result
/// does not depend on input order.
pub fn decile_groups(rows: &[MetricRow], metric: Metric, seed: u64) -> Result<Deciles> {
    if rows.len() < 10 {
        return Err(Error::TooFewRows {
            needed: 10,
            got: rows.len(),
        });
    }
    let k = rows.len() / 10;
    let mut by_id: Vec<&MetricRow> = rows.iter().collect();
    by_id.sort_by(|a, b| a.dyad_id.cmp(&b.dyad_id));

    let mut desc = by_id.clone();
    desc.sort_by(|a, b| metric.value(b).total_cmp(&metric.value(a)));
    let mut asc = by_id.clone();
    asc.sort_by(|a, b| metric.value(a).total_cmp(&metric.value(b)));

    let mut r = rng::stream(seed, &[rng::STREAM_SAMPLE, metric as u64]);
    let mut picks = sample(&mut r, by_id.len(), k).into_vec();
    picks.sort_unstable();
    let random: Vec<&MetricRow> = picks.into_iter().map(|i| by_id[i]).collect();

    let ids = |v: &[&MetricRow]| v.iter().map(|r| r.dyad_id.clone()).collect::<Vec<_>>();
    Ok(Deciles {
        metric,
        top: ids(&desc[..k]),
        bottom: ids(&asc[..k]),
        random: ids(&random),
        top_summary: GroupSummary::of(&desc[..k]),
        bottom_summary: GroupSummary::of(&asc[..k]),
        random_summary: GroupSummary::of(&random),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[lo, hi]`; the last bin is closed. Values outside
/// the range are clamped into the end bins.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if bins == 0 || !(hi > lo) {
        return Err(Error::Config("histogram needs bins >= 1 and hi > lo".into()));
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let i = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Per-feature weight histograms of S→T and T→S policies; every dyad
/// contributes both agents' policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyHistograms {
    pub features: Vec<String>,
    pub st: Vec<Histogram>,
    pub ts: Vec<Histogram>,
    pub dyads: usize,
}

pub fn policy_histograms<'a, I>(dyads: I, bins: usize) -> Result<PolicyHistograms>
where
    I: IntoIterator<Item = &'a Dyad>,
{
    let mut st: Vec<Vec<f64>> = vec![Vec::new(); FEATURE_COUNT];
    let mut ts: Vec<Vec<f64>> = vec![Vec::new(); FEATURE_COUNT];
    let mut n = 0;
    for d in dyads {
        n += 1;
        for a in d.agents() {
            for f in 0..FEATURE_COUNT {
                st[f].push(a.w_st.weights()[f]);
                ts[f].push(a.w_ts.weights()[f]);
            }
        }
    }
    let build = |vals: &[Vec<f64>]| {
        vals.iter()
            .map(|v| histogram(v, bins, -1.0, 1.0))
            .collect::<Result<Vec<_>>>()
    };
    Ok(PolicyHistograms {
        features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        st: build(&st)?,
        ts: build(&ts)?,
        dyads: n,
    })
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation with average ranks for ties; 0 if either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Ok(0.0);
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Re-simulates one dyad and computes its metrics.
pub fn metric_row<R: Reference + ?Sized>(
    sim: &Simulator,
    dyad: &Dyad,
    traj: &R,
    slope: f64,
) -> Result<MetricRow> {
    let rec = sim.simulate_trial(dyad, traj, &InitSpec::standard(&sim.egg))?;
    let o = score(&rec, &sim.egg, slope);
    let sym = dyad_symmetries(dyad);
    let anti_synchrony = if rec.valid {
        anti_synchrony(&rec.role1, &rec.role2)?
    } else {
        0.0
    };
    let (e1, e2) = (
        crate::objectives::effort(&rec, AgentSlot::First),
        crate::objectives::effort(&rec, AgentSlot::Second),
    );
    Ok(MetricRow {
        dyad_id: dyad.id.clone(),
        tracking: o.tracking,
        stabilization: o.stabilization,
        effort1: o.effort1,
        effort2: o.effort2,
        jerk: o.jerk,
        anti_synchrony,
        load_sharing: if rec.valid { load_sharing(e1, e2) } else { None },
        sym_st: sym.sym_st,
        sym_ts: sym.sym_ts,
        sym_cross: sym.sym_cross,
    })
}

pub const HISTOGRAM_BINS: usize = 40;

/// Population-level statistics behind the scatter and decile comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub archive_size: usize,
    pub analysed: usize,
    pub top_performers: usize,
    pub median_anti_synchrony: f64,
    /// Median anti-synchrony of rows with stabilization loss under the top-performer bound.
    pub median_anti_synchrony_stable: f64,
    pub stable: usize,
    pub load_sharing_above_075: f64,
    pub spearman_anti_synchrony_stabilization: f64,
    pub spearman_load_sharing_stabilization: f64,
    pub spearman_anti_synchrony_tracking: f64,
    pub spearman_load_sharing_tracking: f64,
}

impl Summary {
    pub fn of(rows: &[MetricRow], archive_size: usize) -> Result<Self> {
        let anti: Vec<f64> = rows.iter().map(|r| r.anti_synchrony).collect();
        // Undefined load-sharing counts as no sharing.
        let ls: Vec<f64> = rows.iter().map(|r| r.load_sharing.unwrap_or(0.0)).collect();
        let stab: Vec<f64> = rows.iter().map(|r| r.stabilization).collect();
        let track: Vec<f64> = rows.iter().map(|r| r.tracking).collect();
        let stable: Vec<f64> = rows
            .iter()
            .filter(|r| r.stabilization < TOP_STABILIZATION_MAX)
            .map(|r| r.anti_synchrony)
            .collect();
        let above = ls.iter().filter(|v| **v > 0.75).count();
        Ok(Self {
            archive_size,
            analysed: rows.len(),
            top_performers: top_performer_set(rows).len(),
            median_anti_synchrony: median(&anti),
            median_anti_synchrony_stable: median(&stable),
            stable: stable.len(),
            load_sharing_above_075: if rows.is_empty() { f64::NAN } else { above as f64 / rows.len() as f64 },
            spearman_anti_synchrony_stabilization: spearman(&anti, &stab)?,
            spearman_load_sharing_stabilization: spearman(&ls, &stab)?,
            spearman_anti_synchrony_tracking: spearman(&anti, &track)?,
            spearman_load_sharing_tracking: spearman(&ls, &track)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    /// Filtered population, ordered by dyad id.
    pub rows: Vec<MetricRow>,
    pub summary: Summary,
    pub histograms: PolicyHistograms,
    /// Absent when fewer than ten dyads survive the filter.
    pub anti_synchrony_deciles: Option<Deciles>,
    pub load_sharing_deciles: Option<Deciles>,
}

impl Analysis {
    pub fn top_performers(&self) -> Vec<MetricRow> {
        top_performer_set(&self.rows)
    }
}

/// Re-simulates archived dyads on `holdout` and keeps those under the
/// Pareto-population thresholds, ordered by dyad id.
pub fn archive_rows<R: Reference + ?Sized>(
    members: &[&Dyad],
    sim: &Simulator,
    holdout: &R,
    slope: f64,
) -> Result<Vec<MetricRow>> {
    let mut rows = members
        .par_iter()
        .map(|d| metric_row(sim, d, holdout, slope))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.dyad_id.cmp(&b.dyad_id));
    Ok(filter_pareto_population(&rows))
}

/// Builds the tables for a (possibly pooled) set of rows. `dyads` must hold
/// the genome of every top performer; histograms cover that set.
pub fn build_analysis(
    mut rows: Vec<MetricRow>,
    dyads: &[&Dyad],
    archive_size: usize,
    seed: u64,
) -> Result<Analysis> {
    rows.sort_by(|a, b| a.dyad_id.cmp(&b.dyad_id));
    let top_ids: HashSet<DyadId> = top_performer_set(&rows).into_iter().map(|r| r.dyad_id).collect();
    let mut top: Vec<&Dyad> = dyads.iter().copied().filter(|d| top_ids.contains(&d.id)).collect();
    top.sort_by(|a, b| a.id.cmp(&b.id));
    top.dedup_by(|a, b| a.id == b.id);
    if top.len() != top_ids.len() {
        return Err(Error::Config("top performer without a genome".into()));
    }
    let histograms = policy_histograms(top, HISTOGRAM_BINS)?;
    let deciles = |m| match decile_groups(&rows, m, seed) {
        Ok(d) => Ok(Some(d)),
        Err(Error::TooFewRows { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(Analysis {
        summary: Summary::of(&rows, archive_size)?,
        anti_synchrony_deciles: deciles(Metric::AntiSynchrony)?,
        load_sharing_deciles: deciles(Metric::LoadSharing)?,
        histograms,
        rows,
    })
}

pub fn analyze<R: Reference + ?Sized>(
    hof: &HallOfFame,
    sim: &Simulator,
    holdout: &R,
    slope: f64,
) -> Result<Analysis> {
    let members: Vec<&Dyad> = hof.members().iter().map(|m| &m.dyad).collect();
    let rows = archive_rows(&members, sim, holdout, slope)?;
    build_analysis(rows, &members, members.len(), hof.seed)
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const HISTOGRAMS_FILE: &str = "histograms.json";
pub const DECILES_FILE: &str = "deciles.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Serialize)]
struct DecilesFile<'a> {
    anti_synchrony: Option<&'a Deciles>,
    load_sharing: Option<&'a Deciles>,
}

/// Writes `metrics.csv`, `histograms.json`, `deciles.json` and `summary.json` into `dir`.
pub fn write_analysis(analysis: &Analysis, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = std::io::BufWriter::new(std::fs::File::create(dir.join(METRICS_FILE))?);
    write_metrics_csv(&analysis.rows, file)?;
    write_json_atomic(&dir.join(HISTOGRAMS_FILE), &analysis.histograms)?;
    write_json_atomic(
        &dir.join(DECILES_FILE),
        &DecilesFile {
            anti_synchrony: analysis.anti_synchrony_deciles.as_ref(),
            load_sharing: analysis.load_sharing_deciles.as_ref(),
        },
    )?;
    write_json_atomic(&dir.join(SUMMARY_FILE), &analysis.summary)
}

/// `metrics.csv`: one row per analysed dyad; undefined load-sharing is an empty field.
pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record([
        "dyad_id",
        "tracking",
        "stabilization",
        "effort1",
        "effort2",
        "jerk",
        "anti_synchrony",
        "load_sharing",
        "sym_st",
        "sym_ts",
        "sym_cross",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(reader: R) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Orders rows by a metric, descending, used by callers that need ranks.
pub fn sort_desc_by(rows: &mut [MetricRow], metric: Metric) {
    rows.sort_by(|a, b| match metric.value(b).total_cmp(&metric.value(a)) {
        Ordering::Equal => a.dyad_id.cmp(&b.dyad_id),
        o => o,
    });
}
