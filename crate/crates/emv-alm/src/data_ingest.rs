//! Price-series ingestion, bull/bear labelling and parameter estimation.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::market::{Convention, MarketConfig, MarketModel, Regime, ReturnSpec};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Daily,
    Monthly,
}

impl Frequency {
    pub fn periods_per_year(self) -> usize {
        match self {
            Frequency::Daily => 252,
            Frequency::Monthly => 12,
        }
    }
}

impl std::str::FromStr for Frequency {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daily" => Ok(Frequency::Daily),
            "monthly" => Ok(Frequency::Monthly),
            _ => invalid(format!("unknown frequency {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub dates: Vec<String>,
    pub closes: Vec<f64>,
    pub frequency: Frequency,
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    close: f64,
}

fn check_date(d: &str) -> Result<()> {
    let parts: Vec<&str> = d.split('-').collect();
    let ok = parts.len() == 3
        && parts[0].len() == 4
        && parts[1].len() == 2
        && parts[2].len() == 2
        && parts.iter().all(|p| p.bytes().all(|b| b.is_ascii_digit()));
    if !ok {
        return invalid(format!("date {d:?} is not YYYY-MM-DD"));
    }
    Ok(())
}

impl PriceSeries {
    pub fn new(dates: Vec<String>, closes: Vec<f64>, frequency: Frequency) -> Result<Self> {
        if dates.len() != closes.len() {
            return invalid("dates and closes differ in length");
        }
        for d in &dates {
            check_date(d)?;
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return invalid(format!("dates not strictly increasing at row {}", i + 2));
        }
        if let Some(i) = closes.iter().position(|c| !(*c > 0.0) || !c.is_finite()) {
            return invalid(format!("close at row {} must be positive", i + 1));
        }
        Ok(PriceSeries { dates, closes, frequency })
    }

    /// Synthetic series with generated dates, for prices without a calendar.
    pub fn from_closes(closes: Vec<f64>, frequency: Frequency) -> Result<Self> {
        let dates = (0..closes.len()).map(synthetic_date).collect();
        Self::new(dates, closes, frequency)
    }

    /// Reads `date,close` CSV.
    pub fn from_reader<R: Read>(reader: R, frequency: Frequency) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut dates = Vec::new();
        let mut closes = Vec::new();
        for row in rdr.deserialize() {
            let row: PriceRow = row?;
            dates.push(row.date);
            closes.push(row.close);
        }
        Self::new(dates, closes, frequency)
    }

    pub fn from_csv(path: &Path, frequency: Frequency) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, frequency)
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    /// Simple returns `c_t / c_{t−1} − 1`, one per observation after the first.
    pub fn returns(&self) -> Vec<f64> {
        self.closes.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    }
}

/// Day `i` counted from 2000-01-01 on a 12×28-day calendar; only the ordering matters.
fn synthetic_date(i: usize) -> String {
    let year = 2000 + i / 336;
    let month = (i % 336) / 28 + 1;
    let day = i % 28 + 1;
    format!("{year:04}-{month:02}-{day:02}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Bull,
    Bear,
}

impl Phase {
    pub fn regime(self) -> Regime {
        match self {
            Phase::Bull => Regime::One,
            Phase::Bear => Regime::Two,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    /// One past the last observation.
    pub end: usize,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabels {
    /// Phase in force from each observation onward.
    pub labels: Vec<Phase>,
    pub segments: Vec<Segment>,
}

impl RegimeLabels {
    /// Phase of each return: the return from `t−1` to `t` takes the label of `t−1`.
    pub fn return_labels(&self) -> Vec<Phase> {
        self.labels[..self.labels.len().saturating_sub(1)].to_vec()
    }
}

/// Peak/trough segmentation. A rise of `gamma1` from the running trough
/// starts a bull phase at that trough; a fall of `gamma2` from the running
/// peak starts a bear phase at that peak. Observations before the first
/// turning point take the first confirmed phase; with no confirmation at all
/// the whole series is one bull segment.
pub fn label_regimes(closes: &[f64], gamma1: f64, gamma2: f64) -> Result<RegimeLabels> {
    if closes.len() < 2 {
        return invalid("need at least two prices to label phases");
    }
    if !(gamma1 > 0.0) || !(gamma2 > 0.0 && gamma2 < 1.0) {
        return invalid("thresholds must satisfy gamma1 > 0 and 0 < gamma2 < 1");
    }
    let mut turns: Vec<(usize, Phase)> = Vec::new();
    let mut state: Option<Phase> = None;
    let (mut hi, mut ihi) = (closes[0], 0);
    let (mut lo, mut ilo) = (closes[0], 0);
    for (t, &p) in closes.iter().enumerate().skip(1) {
        match state {
            None => {
                if p > hi {
                    hi = p;
                    ihi = t;
                }
                if p < lo {
                    lo = p;
                    ilo = t;
                }
                if p >= lo * (1.0 + gamma1) {
                    turns.push((ilo, Phase::Bull));
                    state = Some(Phase::Bull);
                    hi = p;
                    ihi = t;
                } else if p <= hi * (1.0 - gamma2) {
                    turns.push((ihi, Phase::Bear));
                    state = Some(Phase::Bear);
                    lo = p;
                    ilo = t;
                }
            }
            Some(Phase::Bull) => {
                if p > hi {
                    hi = p;
                    ihi = t;
                } else if p <= hi * (1.0 - gamma2) {
                    turns.push((ihi, Phase::Bear));
                    state = Some(Phase::Bear);
                    lo = p;
                    ilo = t;
                }
            }
            Some(Phase::Bear) => {
                if p < lo {
                    lo = p;
                    ilo = t;
                } else if p >= lo * (1.0 + gamma1) {
                    turns.push((ilo, Phase::Bull));
                    state = Some(Phase::Bull);
                    hi = p;
                    ihi = t;
                }
            }
        }
    }
    if turns.is_empty() {
        turns.push((0, Phase::Bull));
    }
    turns[0].0 = 0;
    let n = closes.len();
    let mut segments = Vec::with_capacity(turns.len());
    for (k, &(start, phase)) in turns.iter().enumerate() {
        let end = turns.get(k + 1).map_or(n, |t| t.0);
        if end > start {
            segments.push(Segment { start, end, phase });
        }
    }
    let mut labels = Vec::with_capacity(n);
    for s in &segments {
        labels.extend(std::iter::repeat_n(s.phase, s.end - s.start));
    }
    Ok(RegimeLabels { labels, segments })
}

/// Per-regime statistics, annualised; index 0 is the bull regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeEstimate {
    pub annual_mean: [f64; 2],
    pub annual_variance: [f64; 2],
    /// Mean run length of each regime, in periods.
    pub mean_sojourn: [f64; 2],
    pub p12: f64,
    pub p21: f64,
    pub counts: [usize; 2],
}

impl RegimeEstimate {
    /// A market configuration with these risky-asset laws and chain; the
    /// risk-free asset, liability and initial filter come from `base`.
    pub fn to_market_config(&self, base: &MarketConfig) -> MarketConfig {
        let mut cfg = base.clone();
        cfg.p11 = 1.0 - self.p12;
        cfg.p12 = self.p12;
        cfg.p21 = self.p21;
        cfg.p22 = 1.0 - self.p21;
        for i in 0..2 {
            cfg.e1[i] = ReturnSpec::normal(self.annual_mean[i], self.annual_variance[i].sqrt(), Convention::Net);
        }
        cfg
    }

    pub fn to_model(&self, base: &MarketConfig) -> Result<MarketModel> {
        MarketModel::new(self.to_market_config(base))
    }
}

/// Annualised mean/variance of returns per phase and sojourn-based transition
/// probabilities `P12 = 1/(mean bull run)`, `P21 = 1/(mean bear run)`.
pub fn estimate_params(returns: &[f64], labels: &[Phase], periods_per_year: f64) -> Result<RegimeEstimate> {
    if returns.len() != labels.len() {
        return invalid("one label per return is required");
    }
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for (r, l) in returns.iter().zip(labels) {
        let i = l.regime().index();
        sums[i] += r;
        counts[i] += 1;
    }
    if let Some(i) = counts.iter().position(|c| *c == 0) {
        let name = if i == 0 { "bull" } else { "bear" };
        return invalid(format!("no {name} observations; use a longer window"));
    }
    let means = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64];
    let mut sq = [0.0; 2];
    for (r, l) in returns.iter().zip(labels) {
        let i = l.regime().index();
        sq[i] += (r - means[i]).powi(2);
    }
    let var = |i: usize| if counts[i] > 1 { sq[i] / (counts[i] - 1) as f64 } else { 0.0 };
    let mut runs: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut k = 0;
    while k < labels.len() {
        let mut j = k;
        while j < labels.len() && labels[j] == labels[k] {
            j += 1;
        }
        runs[labels[k].regime().index()].push(j - k);
        k = j;
    }
    let sojourn = |i: usize| runs[i].iter().sum::<usize>() as f64 / runs[i].len() as f64;
    let mean_sojourn = [sojourn(0), sojourn(1)];
    Ok(RegimeEstimate {
        annual_mean: [means[0] * periods_per_year, means[1] * periods_per_year],
        annual_variance: [var(0) * periods_per_year, var(1) * periods_per_year],
        mean_sojourn,
        p12: 1.0 / mean_sojourn[0],
        p21: 1.0 / mean_sojourn[1],
        counts,
    })
}

/// `(1 − 2/N) old + (2/N) new`.
pub fn exp_average_update(old: f64, new: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return invalid("N must be at least 2");
    }
    let k = 2.0 / n as f64;
    Ok((1.0 - k) * old + k * new)
}

/// Number of overlapping blocks: `((window − horizon)·ppy + 1) · series`.
pub fn block_count(n_series: usize, window_years: usize, horizon_years: usize, periods_per_year: usize) -> usize {
    if horizon_years > window_years {
        return 0;
    }
    ((window_years - horizon_years) * periods_per_year + 1) * n_series
}

/// A window `[start, start + len)` of returns from one series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub series: usize,
    pub start: usize,
    pub len: usize,
}

/// Draw a block uniformly over all `(series, start)` pairs.
pub fn block_sampler(lengths: &[usize], horizon: usize, rng: &mut Stream) -> Result<Block> {
    let counts: Vec<usize> = lengths.iter().map(|&n| (n + 1).saturating_sub(horizon)).collect();
    let total: usize = counts.iter().sum();
    if horizon == 0 || counts.contains(&0) {
        return invalid("every series must span the horizon");
    }
    let mut k = rng.gen_range(0..total);
    for (series, &c) in counts.iter().enumerate() {
        if k < c {
            return Ok(Block { series, start: k, len: horizon });
        }
        k -= c;
    }
    unreachable!("draw below the total count")
}

/// OLS slope of stock returns on index returns over common dates.
pub fn estimate_beta(stock: &PriceSeries, index: &PriceSeries) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut prev: Option<(f64, f64)> = None;
    while i < stock.len() && j < index.len() {
        match stock.dates[i].cmp(&index.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let (s, m) = (stock.closes[i], index.closes[j]);
                if let Some((ps, pm)) = prev {
                    ys.push(s / ps - 1.0);
                    xs.push(m / pm - 1.0);
                }
                prev = Some((s, m));
                i += 1;
                j += 1;
            }
        }
    }
    if xs.len() < 30 {
        return invalid(format!("only {} overlapping returns; need 30", xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return invalid("index returns have no variation");
    }
    Ok(sxy / sxx)
}

/// A price path driven by the risky asset of `model`, with its true regimes.
/// `closes[t+1] = closes[t] · e1_t` and `regimes[t]` is the regime of that return.
pub fn synthetic_prices(model: &MarketModel, periods: usize, start_price: f64, rng: &mut Stream) -> (Vec<f64>, Vec<Regime>) {
    let mut regime = model.chain.initial(rng);
    let mut closes = Vec::with_capacity(periods + 1);
    let mut regimes = Vec::with_capacity(periods);
    closes.push(start_price);
    for _ in 0..periods {
        let e1 = model.laws(regime)[1].sample(rng);
        let last = *closes.last().expect("nonempty");
        closes.push(last * e1);
        regimes.push(regime);
        regime = crate::market::step_regime(regime, &model.chain, rng);
    }
    (closes, regimes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn three_point_series() {
        let l = label_regimes(&[100.0, 130.0, 100.0], 0.24, 0.19).unwrap();
        assert_eq!(l.segments.len(), 2);
        assert_eq!(l.segments[0].phase, Phase::Bull);
        assert_eq!(l.segments[1].phase, Phase::Bear);
        assert_eq!(l.return_labels(), vec![Phase::Bull, Phase::Bear]);
    }

    #[test]
    fn monotone_and_flat() {
        let up: Vec<f64> = (100..=200).map(|v| v as f64).collect();
        let l = label_regimes(&up, 0.24, 0.19).unwrap();
        assert_eq!(l.segments, vec![Segment { start: 0, end: 101, phase: Phase::Bull }]);
        let flat = vec![50.0; 20];
        let l = label_regimes(&flat, 0.24, 0.19).unwrap();
        assert_eq!(l.segments.len(), 1);
        assert_eq!(l.labels.len(), 20);
        assert!(label_regimes(&[1.0], 0.24, 0.19).is_err());
    }

    #[test]
    fn labels_ignore_price_scale() {
        let mut rng = stream(3, 0);
        let mut p = vec![100.0];
        for _ in 0..2000 {
            let r: f64 = rng.gen_range(-0.03..0.031);
            p.push(p.last().unwrap() * (1.0 + r));
        }
        let scaled: Vec<f64> = p.iter().map(|v| v * 37.5).collect();
        assert_eq!(label_regimes(&p, 0.24, 0.19).unwrap(), label_regimes(&scaled, 0.24, 0.19).unwrap());
    }

    #[test]
    fn sojourn_arithmetic() {
        let labels: Vec<Phase> = (0..1000).map(|i| if (i / 100) % 2 == 0 { Phase::Bull } else { Phase::Bear }).collect();
        let r: Vec<f64> = labels.iter().map(|l| if *l == Phase::Bull { 0.001 } else { -0.001 }).collect();
        let e = estimate_params(&r, &labels, 252.0).unwrap();
        assert!((e.p12 - 0.01).abs() < 1e-15 && (e.p21 - 0.01).abs() < 1e-15);
        assert!(e.annual_variance.iter().all(|v| *v < 1e-30));
        assert!((e.annual_mean[0] - 0.252).abs() < 1e-12);
        let mut labels = vec![Phase::Bear; 50];
        labels[10] = Phase::Bull;
        labels[11] = Phase::Bull;
        let e = estimate_params(&vec![0.0; 50], &labels, 252.0).unwrap();
        assert_eq!(e.p12, 0.5);
        assert!(estimate_params(&[0.0; 3], &[Phase::Bull; 3], 252.0).unwrap_err().to_string().contains("bear"));
    }

    #[test]
    fn exp_average() {
        assert!((exp_average_update(0.3, 0.6, 6).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(exp_average_update(0.7, 0.7, 6).unwrap(), 0.7);
        assert_eq!(exp_average_update(0.1, 0.9, 2).unwrap(), 0.9);
        assert!(exp_average_update(0.1, 0.9, 1).is_err());
    }

    #[test]
    fn block_counts() {
        assert_eq!(block_count(35, 20, 10, 252), 88_235);
        assert_eq!(block_count(35, 20, 10, 12), 4_235);
        assert_eq!(block_count(1, 10, 10, 252), 1);
    }

    #[test]
    fn sampler_covers_all_offsets() {
        let mut rng = stream(8, 0);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..2000 {
            let b = block_sampler(&[12, 11], 10, &mut rng).unwrap();
            assert!(b.start + b.len <= [12, 11][b.series]);
            seen.insert((b.series, b.start));
        }
        assert_eq!(seen.len(), 3 + 2);
        assert!(block_sampler(&[5], 10, &mut rng).is_err());
    }

    #[test]
    fn beta_cases() {
        let mut rng = stream(4, 0);
        let mut idx = vec![100.0];
        let mut dbl = vec![100.0];
        for _ in 0..300 {
            let r: f64 = rng.gen_range(-0.02..0.02);
            idx.push(idx.last().unwrap() * (1.0 + r));
            dbl.push(dbl.last().unwrap() * (1.0 + 2.0 * r));
        }
        let i = PriceSeries::from_closes(idx, Frequency::Daily).unwrap();
        let d = PriceSeries::from_closes(dbl, Frequency::Daily).unwrap();
        assert!((estimate_beta(&i, &i).unwrap() - 1.0).abs() < 1e-12);
        assert!((estimate_beta(&d, &i).unwrap() - 2.0).abs() < 1e-10);
        let short = PriceSeries::from_closes(vec![1.0; 10], Frequency::Daily).unwrap();
        assert!(estimate_beta(&short, &short).is_err());
    }

    #[test]
    fn noisy_beta_within_three_standard_errors() {
        let mut rng = stream(5, 0);
        let n = 2000;
        let (mut idx, mut stk) = (vec![100.0], vec![100.0]);
        let mut xs = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.gen_range(-0.02..0.02);
            let e: f64 = rng.gen_range(-0.01..0.01);
            xs.push(x);
            idx.push(idx.last().unwrap() * (1.0 + x));
            stk.push(stk.last().unwrap() * (1.0 + 1.05 * x + e));
        }
        let b = estimate_beta(
            &PriceSeries::from_closes(stk, Frequency::Daily).unwrap(),
            &PriceSeries::from_closes(idx, Frequency::Daily).unwrap(),
        )
        .unwrap();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        // uniform(−0.01, 0.01) noise has standard deviation 0.02/√12
        let se = 0.02 / 12f64.sqrt() / sxx.sqrt();
        assert!((b - 1.05).abs() < 3.0 * se, "{b} vs se {se}");
    }

    #[test]
    fn csv_parsing_and_validation() {
        let text = "date,close\n2020-01-02,10\n2020-01-03,11\n";
        let s = PriceSeries::from_reader(text.as_bytes(), Frequency::Daily).unwrap();
        assert_eq!(s.closes, vec![10.0, 11.0]);
        assert!((s.returns()[0] - 0.1).abs() < 1e-15);
        let bad = "date,close\n2020-01-03,10\n2020-01-02,11\n";
        assert!(PriceSeries::from_reader(bad.as_bytes(), Frequency::Daily).is_err());
        let neg = "date,close\n2020-01-02,-1\n";
        assert!(PriceSeries::from_reader(neg.as_bytes(), Frequency::Daily).is_err());
    }

    #[test]
    fn synthetic_dates_increase() {
        let s = PriceSeries::from_closes(vec![1.0; 1000], Frequency::Daily).unwrap();
        assert!(s.dates.windows(2).all(|w| w[0] < w[1]));
    }
}
