//! Entry-strategy decision rules.
//!
//! IO firms pick the market promising the highest per-firm profit
//! `NP_j * v_j(t-1) / max(NF_j(t-1), 1)` and may re-choose every cycle.
//! RBV firms pick the market whose entry barrier is closest to their own
//! resource bundle, then weigh entering it against selling resources or
//! selling output off-market. Once attached, an RBV firm never leaves.
//!
//! The choosers are pure: the engine draws the imperfect-information noise
//! and passes the multiplicative factors in.

use crate::model::{
    bundle_value, pos, Firm, Market, MarketId, ResourceBundle, ResourceKind, SfmState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Enter,
    SellResource,
    SellOutput,
    Stay,
    None,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Enter => "ENTER",
            Action::SellResource => "SELL_RESOURCE",
            Action::SellOutput => "SELL_OUTPUT",
            Action::Stay => "STAY",
            Action::None => "NONE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketChoice {
    /// Chosen market; for the RBV sale actions this is the evaluated candidate.
    pub market: Option<MarketId>,
    /// IO: expected per-firm profit of the chosen market. RBV: shortfall distance.
    pub score: f64,
    pub action: Action,
    /// One-cycle value estimate of the chosen action.
    pub value: f64,
}

impl MarketChoice {
    pub fn none() -> Self {
        Self {
            market: None,
            score: 0.0,
            action: Action::None,
            value: 0.0,
        }
    }
}

/// Expected per-firm profit of a market as seen by an IO firm.
#[inline]
pub fn io_expected_profit(market: &Market) -> f64 {
    market.shares as f64 * market.share_value / market.occupants.max(1) as f64
}

/// IO chooser. `noise`, when given, holds one multiplicative factor per
/// market (same order as `markets`) applied to each estimate.
pub fn io_choose_market(firm: &Firm, markets: &[Market], noise: Option<&[f64]>) -> MarketChoice {
    debug_assert!(firm.is_io());
    if let Some(n) = noise {
        assert_eq!(n.len(), markets.len(), "one noise factor per market");
    }
    let mut best: Option<(MarketId, f64)> = None;
    for (k, m) in markets.iter().enumerate() {
        let mut score = io_expected_profit(m);
        if let Some(n) = noise {
            score *= n[k];
        }
        let better = match best {
            None => true,
            Some((id, s)) => score > s || (score == s && m.id < id),
        };
        if better {
            best = Some((m.id, score));
        }
    }
    match best {
        Some((id, score)) => MarketChoice {
            market: Some(id),
            score,
            action: Action::Enter,
            value: score,
        },
        None => MarketChoice::none(),
    }
}

/// Euclidean norm of the component-wise shortfall of `resources` against `barrier`.
pub fn shortfall_distance(resources: &ResourceBundle, barrier: &ResourceBundle) -> f64 {
    let m = resources.missing_to(barrier);
    (m.red * m.red + m.green * m.green + m.blue * m.blue).sqrt()
}

/// How far the firm's bundle is from meeting the market's entry barrier.
pub fn resource_shortfall(firm: &Firm, market: &Market) -> f64 {
    shortfall_distance(&firm.resources, &market.barrier)
}

/// Minimum-shortfall market, lowest id on ties.
pub fn rbv_candidate(firm: &Firm, markets: &[Market]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, m) in markets.iter().enumerate() {
        let d = resource_shortfall(firm, m);
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && m.id < markets[b].id),
        };
        if better {
            best = Some((k, d));
        }
    }
    best
}

/// Expected per-firm profit of joining `market`, counting the entrant.
#[inline]
pub fn entry_expected_profit(market: &Market) -> f64 {
    market.shares as f64 * market.share_value / (market.occupants as f64 + 1.0)
}

/// Share of the barrier's value the bundle already holds, in `[0, 1]`.
pub fn barrier_coverage(
    resources: &ResourceBundle,
    barrier: &ResourceBundle,
    sfm: &SfmState,
) -> f64 {
    let required = bundle_value(barrier, sfm);
    if required <= 0.0 {
        return 1.0;
    }
    bundle_value(&resources.min(barrier), sfm) / required
}

/// Units of the firm's most abundant resource held beyond the barrier.
pub fn surplus_of_most_abundant(
    resources: &ResourceBundle,
    barrier: &ResourceBundle,
) -> (ResourceKind, f64) {
    let kind = resources.most_abundant();
    (kind, pos(resources.get(kind) - barrier.get(kind)))
}

/// Revenue from selling output off-market next to `candidate`.
pub fn off_market_output(
    resources: &ResourceBundle,
    candidate: &Market,
    sfm: &SfmState,
    output_fraction: f64,
) -> f64 {
    output_fraction
        * entry_expected_profit(candidate)
        * barrier_coverage(resources, &candidate.barrier, sfm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbvParams {
    pub output_fraction: f64,
}

/// RBV chooser. `noise` multiplies the candidate's expected-profit estimate.
///
/// One-cycle values of the three actions on the minimum-shortfall candidate:
/// entering earns the expected per-firm profit minus the outlay for the
/// missing resources (only when cash covers it); selling resources yields
/// the SFM value of the most abundant type's surplus over the barrier;
/// selling output off-market earns `output_fraction` of the expected
/// profit, scaled by the share of the barrier already held. The best
/// positive option wins; when none is positive the firm does nothing.
pub fn rbv_choose_market(
    firm: &Firm,
    markets: &[Market],
    sfm: &SfmState,
    params: &RbvParams,
    noise: f64,
) -> MarketChoice {
    debug_assert!(firm.is_rbv());
    if let Some(j) = firm.market {
        let score = markets
            .iter()
            .find(|m| m.id == j)
            .map_or(0.0, |m| resource_shortfall(firm, m));
        return MarketChoice {
            market: Some(j),
            score,
            action: Action::Stay,
            value: 0.0,
        };
    }
    let Some((k, distance)) = rbv_candidate(firm, markets) else {
        return MarketChoice::none();
    };
    let candidate = &markets[k];
    let expected = entry_expected_profit(candidate) * noise;
    let outlay = bundle_value(&firm.resources.missing_to(&candidate.barrier), sfm);
    let (kind, surplus) = surplus_of_most_abundant(&firm.resources, &candidate.barrier);
    let coverage = barrier_coverage(&firm.resources, &candidate.barrier, sfm);

    // Preference order on equal values: enter, sell output, sell resource.
    let mut options = Vec::with_capacity(3);
    if outlay <= firm.cash {
        options.push((Action::Enter, expected - outlay));
    }
    options.push((
        Action::SellOutput,
        params.output_fraction * expected * coverage,
    ));
    options.push((Action::SellResource, surplus * sfm.price_of(kind)));
    let (action, value) = options
        .into_iter()
        .fold(None, |best: Option<(Action, f64)>, (a, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((a, v)),
        })
        .expect("at least two options");

    if value <= 0.0 {
        return MarketChoice {
            market: Some(candidate.id),
            score: distance,
            action: Action::None,
            value: 0.0,
        };
    }
    MarketChoice {
        market: Some(candidate.id),
        score: distance,
        action,
        value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FirmId, ResourceBundle, StrategyTag};

    fn market(id: u32, shares: u32, v: f64, nf: u32, barrier: ResourceBundle) -> Market {
        let mut m = Market::new(MarketId(id), shares, v, barrier);
        m.occupants = nf;
        m
    }

    fn firm(strategy: StrategyTag, cash: f64, r: ResourceBundle) -> Firm {
        Firm::new(FirmId(0), strategy, cash, r)
    }

    fn sfm() -> SfmState {
        SfmState::new(ResourceBundle::uniform(1e6), [1.0; 3])
    }

    #[test]
    fn io_picks_higher_per_firm_profit() {
        let ms = [
            market(0, 10, 2.0, 4, ResourceBundle::ZERO),
            market(1, 100, 1.0, 50, ResourceBundle::ZERO),
        ];
        let c = io_choose_market(&firm(StrategyTag::Io, 0.0, ResourceBundle::ZERO), &ms, None);
        assert_eq!(c.market, Some(MarketId(0)));
        assert_eq!(c.score, 5.0);
        assert_eq!(c.action, Action::Enter);
    }

    #[test]
    fn io_empty_market_uses_unit_divisor() {
        let ms = [market(0, 10, 1.0, 0, ResourceBundle::ZERO)];
        let c = io_choose_market(&firm(StrategyTag::Io, 0.0, ResourceBundle::ZERO), &ms, None);
        assert_eq!(c.market, Some(MarketId(0)));
        assert_eq!(c.score, 10.0);
    }

    #[test]
    fn io_ties_go_to_lowest_id() {
        let ms = [
            market(3, 10, 1.0, 1, ResourceBundle::ZERO),
            market(1, 20, 1.0, 2, ResourceBundle::ZERO),
            market(2, 10, 1.0, 0, ResourceBundle::ZERO),
        ];
        let c = io_choose_market(&firm(StrategyTag::Io, 0.0, ResourceBundle::ZERO), &ms, None);
        assert_eq!(c.market, Some(MarketId(1)));
    }

    #[test]
    fn io_noise_can_flip_choice() {
        let ms = [
            market(0, 100, 1.0, 0, ResourceBundle::ZERO),
            market(1, 100, 0.9, 0, ResourceBundle::ZERO),
        ];
        let f = firm(StrategyTag::Io, 0.0, ResourceBundle::ZERO);
        let c = io_choose_market(&f, &ms, Some(&[0.8, 1.2]));
        assert_eq!(c.market, Some(MarketId(1)));
        assert!((c.score - 108.0).abs() < 1e-12);
    }

    #[test]
    fn shortfall_examples() {
        let f = |r| firm(StrategyTag::Rbv, 0.0, r);
        let m = |b| market(0, 10, 1.0, 0, b);
        assert_eq!(
            resource_shortfall(
                &f(ResourceBundle::uniform(5.0)),
                &m(ResourceBundle::uniform(3.0))
            ),
            0.0
        );
        let d = resource_shortfall(
            &f(ResourceBundle::new(5.0, 2.0, 0.0)),
            &m(ResourceBundle::new(3.0, 4.0, 2.0)),
        );
        assert!((d - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            resource_shortfall(&f(ResourceBundle::ZERO), &m(ResourceBundle::ZERO)),
            0.0
        );
    }

    #[test]
    fn rbv_lock_in_stays() {
        let mut f = firm(StrategyTag::Rbv, 100.0, ResourceBundle::uniform(5.0));
        f.market = Some(MarketId(7));
        let ms: Vec<_> = (0..10)
            .map(|i| market(i, 1000, 2.0, 0, ResourceBundle::ZERO))
            .collect();
        let c = rbv_choose_market(
            &f,
            &ms,
            &sfm(),
            &RbvParams {
                output_fraction: 0.5,
            },
            1.0,
        );
        assert_eq!(c.action, Action::Stay);
        assert_eq!(c.market, Some(MarketId(7)));
    }

    #[test]
    fn rbv_enters_exact_match() {
        let f = firm(
            StrategyTag::Rbv,
            100.0,
            ResourceBundle::new(10.0, 20.0, 30.0),
        );
        let ms = [
            market(0, 1000, 1.0, 0, ResourceBundle::new(11.0, 20.0, 30.0)),
            market(1, 1000, 1.0, 0, ResourceBundle::new(10.0, 20.0, 30.0)),
            market(2, 1000, 1.0, 0, ResourceBundle::new(40.0, 0.0, 0.0)),
        ];
        let c = rbv_choose_market(
            &f,
            &ms,
            &sfm(),
            &RbvParams {
                output_fraction: 0.5,
            },
            1.0,
        );
        assert_eq!(c.market, Some(MarketId(1)));
        assert_eq!(c.score, 0.0);
        assert_eq!(c.action, Action::Enter);
        assert_eq!(c.value, 1000.0);
    }

    #[test]
    fn rbv_unaffordable_falls_back_to_sales() {
        // Shortfall on red costs 30, cash is 10; half the barrier is held.
        let f = firm(StrategyTag::Rbv, 10.0, ResourceBundle::new(30.0, 0.0, 4.0));
        let ms = [market(0, 100, 1.0, 0, ResourceBundle::new(60.0, 0.0, 0.0))];
        let p = RbvParams {
            output_fraction: 0.5,
        };
        let c = rbv_choose_market(&f, &ms, &sfm(), &p, 1.0);
        assert_eq!(c.action, Action::SellOutput);
        assert_eq!(c.value, 25.0);

        let rich = firm(StrategyTag::Rbv, 10.0, ResourceBundle::new(0.0, 0.0, 80.0));
        let c = rbv_choose_market(&rich, &ms, &sfm(), &p, 1.0);
        assert_eq!(c.action, Action::SellResource);
        assert_eq!(c.value, 80.0);

        let broke = firm(StrategyTag::Rbv, 10.0, ResourceBundle::ZERO);
        let c = rbv_choose_market(&broke, &ms, &sfm(), &p, 1.0);
        assert_eq!(c.action, Action::None);
    }

    #[test]
    fn rbv_entry_must_pay_back_within_a_cycle() {
        // Entry earns 10 but costs 40 in purchases: selling output wins.
        let f = firm(
            StrategyTag::Rbv,
            1000.0,
            ResourceBundle::new(40.0, 0.0, 0.0),
        );
        let ms = [market(0, 10, 1.0, 0, ResourceBundle::new(40.0, 40.0, 0.0))];
        let c = rbv_choose_market(
            &f,
            &ms,
            &sfm(),
            &RbvParams {
                output_fraction: 0.5,
            },
            1.0,
        );
        assert_eq!(c.action, Action::SellOutput);
        assert_eq!(c.value, 2.5);
        let c = rbv_choose_market(
            &f,
            &ms,
            &sfm(),
            &RbvParams {
                output_fraction: 0.0,
            },
            1.0,
        );
        assert_eq!(c.action, Action::None);
    }

    #[test]
    fn rbv_surplus_is_measured_against_the_candidate() {
        let f = firm(StrategyTag::Rbv, 0.0, ResourceBundle::new(70.0, 10.0, 0.0));
        let b = ResourceBundle::new(50.0, 10.0, 0.0);
        assert_eq!(
            surplus_of_most_abundant(&f.resources, &b),
            (ResourceKind::Red, 20.0)
        );
        assert_eq!(barrier_coverage(&f.resources, &b, &sfm()), 1.0);
        assert_eq!(
            barrier_coverage(&ResourceBundle::ZERO, &ResourceBundle::ZERO, &sfm()),
            1.0
        );
    }
}
