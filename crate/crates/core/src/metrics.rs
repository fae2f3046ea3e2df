//! Performance measures and the ranking statistics reported per checkpoint.

use thiserror::Error;

use crate::model::{Firm, StrategyTag};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("relative difference undefined: RBV reference value is zero")]
    ZeroDenominator,
}

/// Instant ROA `profit / asset_value`; zero when the firm has no assets.
pub fn instant_roa(profit: f64, asset_value: f64) -> f64 {
    if asset_value > 0.0 {
        profit / asset_value
    } else {
        0.0
    }
}

/// Total performance: sum of the ROA series, each term weighted by
/// `discount^(t-1)`. With `discount = 1` this is the plain sum.
pub fn total_performance(roa_series: &[f64], discount: f64) -> f64 {
    if discount == 1.0 {
        return roa_series.iter().sum();
    }
    let mut weight = 1.0;
    let mut total = 0.0;
    for &r in roa_series {
        total += weight * r;
        weight *= discount;
    }
    total
}

/// `(io - rbv) / rbv`.
pub fn relative_diff(io_value: f64, rbv_value: f64) -> Result<f64, MetricsError> {
    if rbv_value == 0.0 {
        return Err(MetricsError::ZeroDenominator);
    }
    Ok((io_value - rbv_value) / rbv_value)
}

/// Ranking statistics of one strategy at a checkpoint. Averages over fewer
/// than 5 (or 10) firms use what is available; NaN when there are none.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrategyStats {
    pub count_in_top: u32,
    pub best: f64,
    pub avg_top5: f64,
    pub avg_top10: f64,
    pub avg_all: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySnapshot {
    pub cycle: u32,
    pub k: usize,
    pub io: StrategyStats,
    pub rbv: StrategyStats,
    /// Strategy of the single best firm, if any firm exists.
    pub leader: Option<StrategyTag>,
}

impl StrategySnapshot {
    pub fn stats(&self, tag: StrategyTag) -> &StrategyStats {
        match tag {
            StrategyTag::Io => &self.io,
            StrategyTag::Rbv => &self.rbv,
        }
    }

    /// The four relative differences: best, top-5 average, top-10 average,
    /// population average. `None` where the RBV value is zero or missing.
    pub fn relative_diffs(&self) -> [Option<f64>; 4] {
        let pairs = [
            (self.io.best, self.rbv.best),
            (self.io.avg_top5, self.rbv.avg_top5),
            (self.io.avg_top10, self.rbv.avg_top10),
            (self.io.avg_all, self.rbv.avg_all),
        ];
        pairs.map(|(io, rbv)| relative_diff(io, rbv).ok().filter(|d| d.is_finite()))
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Ranks every firm (dead ones at their frozen performance) by total
/// performance, descending, ties by firm id, and summarizes per strategy.
pub fn top_k_snapshot(firms: &[Firm], k: usize, cycle: u32) -> StrategySnapshot {
    assert!(k >= 1, "k must be >= 1");
    let mut ranked: Vec<&Firm> = firms.iter().collect();
    ranked.sort_by(|a, b| b.total_perf.total_cmp(&a.total_perf).then(a.id.cmp(&b.id)));

    let stats_for = |tag: StrategyTag| {
        let perfs: Vec<f64> = ranked
            .iter()
            .filter(|f| f.strategy() == tag)
            .map(|f| f.total_perf)
            .collect();
        StrategyStats {
            count_in_top: ranked
                .iter()
                .take(k)
                .filter(|f| f.strategy() == tag)
                .count() as u32,
            best: perfs.first().copied().unwrap_or(f64::NAN),
            avg_top5: mean(&perfs[..perfs.len().min(5)]),
            avg_top10: mean(&perfs[..perfs.len().min(10)]),
            avg_all: mean(&perfs),
        }
    };
    StrategySnapshot {
        cycle,
        k,
        io: stats_for(StrategyTag::Io),
        rbv: stats_for(StrategyTag::Rbv),
        leader: ranked.first().map(|f| f.strategy()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RbvProfile {
    Wallflower,
    ConvenienceMarriage,
    SoulMate,
}

impl RbvProfile {
    pub const ALL: [RbvProfile; 3] = [
        RbvProfile::Wallflower,
        RbvProfile::ConvenienceMarriage,
        RbvProfile::SoulMate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RbvProfile::Wallflower => "wallflower",
            RbvProfile::ConvenienceMarriage => "convenience",
            RbvProfile::SoulMate => "soulmate",
        }
    }
}

/// Profile of an RBV firm given the whole population.
///
/// Unattached firms are wallflowers. Attached firms are soul mates when
/// their market has alive IO occupants and they beat those occupants'
/// mean total performance; every other attached firm is a convenience
/// marriage.
pub fn classify_rbv(firm: &Firm, firms: &[Firm]) -> RbvProfile {
    debug_assert!(firm.is_rbv());
    let Some(j) = firm.market else {
        return RbvProfile::Wallflower;
    };
    let (n, sum) = firms
        .iter()
        .filter(|f| f.alive && f.is_io() && f.market == Some(j))
        .fold((0usize, 0.0), |(n, s), f| (n + 1, s + f.total_perf));
    if n > 0 && firm.total_perf > sum / n as f64 {
        RbvProfile::SoulMate
    } else {
        RbvProfile::ConvenienceMarriage
    }
}

/// Count and mean total performance of one RBV profile.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProfileStats {
    pub count: u32,
    pub mean_perf: f64,
}

/// Per-profile counts and mean performance, in [`RbvProfile::ALL`] order.
pub fn profile_summary(firms: &[Firm]) -> [ProfileStats; 3] {
    let mut sums = [(0u32, 0.0f64); 3];
    for f in firms.iter().filter(|f| f.is_rbv()) {
        let idx = classify_rbv(f, firms) as usize;
        sums[idx].0 += 1;
        sums[idx].1 += f.total_perf;
    }
    sums.map(|(count, sum)| ProfileStats {
        count,
        mean_perf: if count > 0 {
            sum / count as f64
        } else {
            f64::NAN
        },
    })
}
