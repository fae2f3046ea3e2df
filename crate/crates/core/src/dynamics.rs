//! Per-cycle engine: entry decisions, SFM trading, revenue allocation,
//! costs, share-value and price formation, performance and survival.
//!
//! One [`World`] is strictly single-threaded and fully determined by its
//! [`SimConfig`] (seed included).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::SimConfig;
use crate::metrics::instant_roa;
use crate::model::{
    bundle_value, total_asset_value, Firm, FirmId, Market, MarketId, ProfitBreakdown,
    ResourceBundle, ResourceKind, SfmState, StrategyTag,
};
use crate::strategy::{self, Action, MarketChoice, RbvParams};

#[derive(Debug, Error, PartialEq)]
pub enum TradeError {
    #[error("firm {firm} offered {offered:?} but holds only {held:?}")]
    ExceedsHoldings {
        firm: FirmId,
        offered: ResourceBundle,
        held: ResourceBundle,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeSide {
    Buy,
    Sell,
}

/// One SFM transaction with before/after snapshots for auditing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade {
    pub firm: FirmId,
    pub side: TradeSide,
    pub quantity: ResourceBundle,
    /// Cash paid (buy) or received (sell).
    pub amount: f64,
    pub firm_before: ResourceBundle,
    pub firm_after: ResourceBundle,
    pub stock_before: ResourceBundle,
    pub stock_after: ResourceBundle,
    pub cash_before: f64,
    pub cash_after: f64,
}

/// Revenue each occupant of a market receives this cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub revenue_per_occupant: f64,
    pub quantity_per_occupant: f64,
}

/// Equal split of `NP_j * v_j` among the occupants. Empty markets allocate nothing.
pub fn allocate_market_profit(market: &Market) -> Option<Allocation> {
    if market.occupants == 0 {
        return None;
    }
    let nf = market.occupants as f64;
    let quantity = market.shares as f64 / nf;
    Some(Allocation {
        revenue_per_occupant: market.total_value() / nf,
        quantity_per_occupant: quantity,
    })
}

/// Share value after crowding: `v_j(0) / (1 + crowding * NF_j) * noise`, floored.
pub fn update_share_value(market: &Market, crowding: f64, noise: f64, floor: f64) -> f64 {
    let v = market.base_share_value / (1.0 + crowding * market.occupants as f64) * noise;
    v.max(floor)
}

/// Books one cycle of revenue and costs. `revenue` is the quantity sold at
/// price 1; `purchases` is what the firm already paid on the SFM this cycle,
/// so cash only moves by revenue minus maintenance here.
pub fn charge_costs(
    firm: &mut Firm,
    sfm: &SfmState,
    revenue: f64,
    purchases: f64,
    maintenance_rate: f64,
) -> ProfitBreakdown {
    let maintenance = maintenance_rate * total_asset_value(firm, sfm);
    let breakdown = ProfitBreakdown::new(revenue / ProfitBreakdown::PRICE, maintenance + purchases);
    firm.cash += breakdown.total_revenue - maintenance;
    breakdown
}

/// Buys `min(wanted, stock)` at current prices, or the largest affordable
/// uniform fraction of it. Never drives cash below zero.
pub fn sfm_buy(firm: &mut Firm, wanted: &ResourceBundle, sfm: &mut SfmState) -> Trade {
    debug_assert!(wanted.is_non_negative());
    let firm_before = firm.resources;
    let stock_before = sfm.stock;
    let cash_before = firm.cash;

    let mut quantity = wanted.min(&sfm.stock);
    if firm.cash <= 0.0 {
        quantity = ResourceBundle::ZERO;
    }
    let mut cost = bundle_value(&quantity, sfm);
    if cost > firm.cash {
        let fraction = firm.cash / cost;
        quantity = quantity.scale(fraction);
        cost = bundle_value(&quantity, sfm).min(firm.cash);
    }
    if !quantity.is_zero() {
        for kind in ResourceKind::ALL {
            let q = quantity.get(kind);
            firm.resources.set(kind, firm.resources.get(kind) + q);
            sfm.stock.set(kind, (sfm.stock.get(kind) - q).max(0.0));
        }
        firm.cash = (firm.cash - cost).max(0.0);
    }
    Trade {
        firm: firm.id,
        side: TradeSide::Buy,
        quantity,
        amount: cash_before - firm.cash,
        firm_before,
        firm_after: firm.resources,
        stock_before,
        stock_after: sfm.stock,
        cash_before,
        cash_after: firm.cash,
    }
}

/// Sells `offered` back to the SFM at current prices.
pub fn sfm_sell(
    firm: &mut Firm,
    offered: &ResourceBundle,
    sfm: &mut SfmState,
) -> Result<Trade, TradeError> {
    if !offered.is_non_negative() || !firm.resources.covers(offered) {
        return Err(TradeError::ExceedsHoldings {
            firm: firm.id,
            offered: *offered,
            held: firm.resources,
        });
    }
    let firm_before = firm.resources;
    let stock_before = sfm.stock;
    let cash_before = firm.cash;
    let proceeds = bundle_value(offered, sfm);
    for kind in ResourceKind::ALL {
        let q = offered.get(kind);
        firm.resources.set(kind, firm.resources.get(kind) - q);
        sfm.stock.set(kind, sfm.stock.get(kind) + q);
    }
    firm.cash += proceeds;
    Ok(Trade {
        firm: firm.id,
        side: TradeSide::Sell,
        quantity: *offered,
        amount: proceeds,
        firm_before,
        firm_after: firm.resources,
        stock_before,
        stock_after: sfm.stock,
        cash_before,
        cash_after: firm.cash,
    })
}

/// Supply-and-demand price update per resource type:
/// `p * (1 + sensitivity * (d - s) / (d + s + 1)) * noise`, floored.
pub fn update_sfm_prices(
    sfm: &SfmState,
    demand: [f64; 3],
    supply: [f64; 3],
    sensitivity: f64,
    noise: [f64; 3],
    floor: f64,
) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        let (d, s) = (demand[k], supply[k]);
        let p = sfm.price[k] * (1.0 + sensitivity * (d - s) / (d + s + 1.0)) * noise[k];
        out[k] = p.max(floor);
    }
    out
}

/// Updates the firm's bankruptcy streak and returns whether it survives:
/// a firm dies with non-positive assets, or after `grace` consecutive
/// cycles with non-positive cash.
pub fn survival_check(firm: &mut Firm, sfm: &SfmState, grace: u32) -> bool {
    if !firm.alive {
        return false;
    }
    if firm.cash <= 0.0 {
        firm.cash_deficit_streak += 1;
    } else {
        firm.cash_deficit_streak = 0;
    }
    if total_asset_value(firm, sfm) <= 0.0 || firm.cash_deficit_streak >= grace {
        firm.alive = false;
    }
    firm.alive
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirmRecord {
    pub id: FirmId,
    pub strategy: StrategyTag,
    pub action: Action,
    pub market: Option<MarketId>,
    pub cash: f64,
    pub resources: ResourceBundle,
    pub breakdown: ProfitBreakdown,
    /// `RES_i` the ROA was computed against.
    pub asset_value: f64,
    pub roa: f64,
    pub total_perf: f64,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketRecord {
    pub id: MarketId,
    pub shares: u32,
    pub occupants: u32,
    /// Share value revenue was allocated at this cycle.
    pub share_value: f64,
    /// Sum of the revenue actually paid to occupants.
    pub revenue_paid: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub cycle: u32,
    /// One record per firm alive at the start of the cycle.
    pub firms: Vec<FirmRecord>,
    pub markets: Vec<MarketRecord>,
    pub sfm_price: [f64; 3],
    pub sfm_stock: ResourceBundle,
    pub trades: Vec<Trade>,
}

/// Full simulation state of one run.
#[derive(Debug, Clone)]
pub struct World {
    pub config: SimConfig,
    pub cycle: u32,
    pub firms: Vec<Firm>,
    pub markets: Vec<Market>,
    pub sfm: SfmState,
    rng: ChaCha8Rng,
    noise_buf: Vec<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Factor in `[1 - eps, 1 + eps]`; always consumes one draw.
fn noise_factor(rng: &mut ChaCha8Rng, eps: f64) -> f64 {
    let u: f64 = rng.gen();
    1.0 + eps * (2.0 * u - 1.0)
}

impl World {
    /// Builds the initial world from `config.rng_seed`. Draw order: markets
    /// (size, initial share value, barrier), strategy shuffle, firm bundles.
    pub fn new(config: SimConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let range = config.resource_init_range;
        let markets = (0..config.n_markets)
            .map(|j| {
                let shares =
                    config.market_size_choices[rng.gen_range(0..config.market_size_choices.len())];
                let v0 = uniform(&mut rng, config.share_value_range);
                let barrier = ResourceBundle::new(
                    uniform(&mut rng, range),
                    uniform(&mut rng, range),
                    uniform(&mut rng, range),
                );
                Market::new(MarketId(j), shares, v0, barrier)
            })
            .collect();

        let n = config.n_firms as usize;
        let mut tags: Vec<StrategyTag> = (0..n)
            .map(|i| {
                if i < n / 2 {
                    StrategyTag::Io
                } else {
                    StrategyTag::Rbv
                }
            })
            .collect();
        rand::seq::SliceRandom::shuffle(tags.as_mut_slice(), &mut rng);
        let firms = tags
            .into_iter()
            .enumerate()
            .map(|(i, tag)| {
                let bundle = ResourceBundle::new(
                    uniform(&mut rng, range),
                    uniform(&mut rng, range),
                    uniform(&mut rng, range),
                );
                Firm::new(FirmId(i as u32), tag, config.initial_cash, bundle)
            })
            .collect();

        let sfm = SfmState::new(
            ResourceBundle::uniform(config.initial_stock),
            [config.initial_price; 3],
        );
        Self::from_parts_with_rng(config, firms, markets, sfm, rng)
    }

    /// Builds a world from hand-made parts; noise is drawn from `config.rng_seed`.
    pub fn from_parts(
        config: SimConfig,
        firms: Vec<Firm>,
        markets: Vec<Market>,
        sfm: SfmState,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Self::from_parts_with_rng(config, firms, markets, sfm, rng)
    }

    fn from_parts_with_rng(
        config: SimConfig,
        firms: Vec<Firm>,
        markets: Vec<Market>,
        sfm: SfmState,
        rng: ChaCha8Rng,
    ) -> Self {
        let mut world = Self {
            config,
            cycle: 0,
            firms,
            markets,
            sfm,
            rng,
            noise_buf: Vec::new(),
        };
        world.recount_occupants();
        world
    }

    pub fn market_index(&self, id: MarketId) -> Option<usize> {
        self.markets.iter().position(|m| m.id == id)
    }

    /// Recomputes `NF_j` from the firms' attachments.
    pub fn recount_occupants(&mut self) {
        for m in &mut self.markets {
            m.occupants = 0;
        }
        for f in self.firms.iter().filter(|f| f.alive) {
            if let Some(j) = f.market {
                if let Some(k) = self.markets.iter().position(|m| m.id == j) {
                    self.markets[k].occupants += 1;
                }
            }
        }
    }

    fn age_noise(&self, age: u32) -> f64 {
        self.config.noise_amplitude / (1.0 + age as f64 / self.config.noise_horizon)
    }

    /// Report of the current state without advancing (cycle 0 rows of a trace).
    pub fn snapshot_report(&self) -> CycleReport {
        CycleReport {
            cycle: self.cycle,
            firms: self
                .firms
                .iter()
                .filter(|f| f.alive)
                .map(|f| FirmRecord {
                    id: f.id,
                    strategy: f.strategy(),
                    action: Action::None,
                    market: f.market,
                    cash: f.cash,
                    resources: f.resources,
                    breakdown: ProfitBreakdown::default(),
                    asset_value: total_asset_value(f, &self.sfm),
                    roa: f.instant_perf,
                    total_perf: f.total_perf,
                    alive: f.alive,
                })
                .collect(),
            markets: self
                .markets
                .iter()
                .map(|m| MarketRecord {
                    id: m.id,
                    shares: m.shares,
                    occupants: m.occupants,
                    share_value: m.share_value,
                    revenue_paid: 0.0,
                })
                .collect(),
            sfm_price: self.sfm.price,
            sfm_stock: self.sfm.stock,
            trades: Vec::new(),
        }
    }

    /// Advances one cycle and reports it.
    // Index loops: the firm table is mutated while the RNG and markets are borrowed.
    #[allow(clippy::needless_range_loop)]
    pub fn step_cycle(&mut self) -> CycleReport {
        self.cycle += 1;
        let cfg = self.config.clone();
        let n_firms = self.firms.len();
        let n_markets = self.markets.len();
        let rbv_params = RbvParams {
            output_fraction: cfg.output_fraction,
        };

        // Decisions against the previous cycle's markets and prices.
        let mut choices: Vec<Option<MarketChoice>> = vec![None; n_firms];
        let mut noise = std::mem::take(&mut self.noise_buf);
        for i in 0..n_firms {
            let firm = &self.firms[i];
            if !firm.alive {
                continue;
            }
            let eps = self.age_noise(firm.age);
            let choice = match firm.strategy() {
                StrategyTag::Io
                    if firm.market.is_some() && !self.rng.gen_bool(cfg.io_revision_rate) =>
                {
                    MarketChoice {
                        market: firm.market,
                        score: 0.0,
                        action: Action::Stay,
                        value: 0.0,
                    }
                }
                StrategyTag::Io => {
                    noise.clear();
                    for _ in 0..n_markets {
                        noise.push(noise_factor(&mut self.rng, eps));
                    }
                    strategy::io_choose_market(firm, &self.markets, Some(&noise))
                }
                StrategyTag::Rbv => {
                    let factor = if firm.market.is_none() {
                        noise_factor(&mut self.rng, eps)
                    } else {
                        1.0
                    };
                    strategy::rbv_choose_market(firm, &self.markets, &self.sfm, &rbv_params, factor)
                }
            };
            choices[i] = Some(choice);
        }
        self.noise_buf = noise;

        // SFM trades, then entry through the barrier gate.
        let mut trades = Vec::new();
        let mut purchases = vec![0.0; n_firms];
        let mut demand = [0.0; 3];
        let mut supply = [0.0; 3];
        let mut demand_eps = [0.0; 3];
        for i in 0..n_firms {
            let Some(choice) = choices[i] else { continue };
            let eps = self.age_noise(self.firms[i].age);
            match choice.action {
                Action::Enter => {
                    let target = choice.market.expect("enter names a market");
                    if self.firms[i].market == Some(target) {
                        continue;
                    }
                    // IO firms leave their current market when re-choosing.
                    self.firms[i].market = None;
                    let k = self.market_index(target).expect("chosen market exists");
                    let barrier = self.markets[k].barrier;
                    let missing = self.firms[i].resources.missing_to(&barrier);
                    if !missing.is_zero() {
                        if bundle_value(&missing, &self.sfm) > self.firms[i].cash {
                            continue;
                        }
                        let trade = sfm_buy(&mut self.firms[i], &missing, &mut self.sfm);
                        if trade.quantity == missing {
                            // `r + (b - r)` can land one ulp short of `b`.
                            self.firms[i].resources = self.firms[i].resources.max(&barrier);
                        }
                        purchases[i] += trade.amount;
                        for kind in ResourceKind::ALL {
                            let q = trade.quantity.get(kind);
                            demand[kind.index()] += q;
                            demand_eps[kind.index()] += q * eps;
                        }
                        trades.push(trade);
                    }
                    if self.firms[i].resources.covers(&barrier) {
                        self.firms[i].market = Some(target);
                    }
                }
                Action::SellResource => {
                    let Some(j) = choice.market else { continue };
                    let barrier =
                        self.markets[self.market_index(j).expect("candidate exists")].barrier;
                    let (kind, surplus) =
                        strategy::surplus_of_most_abundant(&self.firms[i].resources, &barrier);
                    let mut offered = ResourceBundle::ZERO;
                    offered.set(kind, surplus);
                    if offered.is_zero() {
                        continue;
                    }
                    let trade = sfm_sell(&mut self.firms[i], &offered, &mut self.sfm)
                        .expect("offer is within holdings");
                    supply[kind.index()] += offered.get(kind);
                    trades.push(trade);
                }
                Action::SellOutput | Action::Stay | Action::None => {}
            }
        }
        self.recount_occupants();

        // Revenue allocation at the current share values.
        let mut revenue = vec![0.0; n_firms];
        let mut market_records: Vec<MarketRecord> = self
            .markets
            .iter()
            .map(|m| MarketRecord {
                id: m.id,
                shares: m.shares,
                occupants: m.occupants,
                share_value: m.share_value,
                revenue_paid: 0.0,
            })
            .collect();
        let allocations: Vec<Option<Allocation>> =
            self.markets.iter().map(allocate_market_profit).collect();
        for (i, firm) in self.firms.iter().enumerate() {
            if !firm.alive {
                continue;
            }
            if let Some(j) = firm.market {
                let k = self
                    .markets
                    .iter()
                    .position(|m| m.id == j)
                    .expect("attached market exists");
                if let Some(a) = allocations[k] {
                    revenue[i] = a.revenue_per_occupant;
                    market_records[k].revenue_paid += a.revenue_per_occupant;
                }
            } else if let Some(MarketChoice {
                action: Action::SellOutput,
                market: Some(j),
                ..
            }) = choices[i]
            {
                let m = &self.markets[self.market_index(j).expect("candidate exists")];
                revenue[i] = strategy::off_market_output(
                    &self.firms[i].resources,
                    m,
                    &self.sfm,
                    cfg.output_fraction,
                );
            }
        }

        // Costs, profits, ROA and total performance.
        let mut firm_records = Vec::with_capacity(n_firms);
        let weight = cfg.discount.powi(self.cycle as i32 - 1);
        for i in 0..n_firms {
            let Some(choice) = choices[i] else { continue };
            let firm = &mut self.firms[i];
            let asset_value = total_asset_value(firm, &self.sfm);
            let breakdown = charge_costs(
                firm,
                &self.sfm,
                revenue[i],
                purchases[i],
                cfg.maintenance_rate,
            );
            let roa = instant_roa(breakdown.profit, asset_value);
            firm.instant_perf = roa;
            firm.total_perf += if cfg.discount == 1.0 {
                roa
            } else {
                weight * roa
            };
            firm_records.push(FirmRecord {
                id: firm.id,
                strategy: firm.strategy(),
                action: choice.action,
                market: firm.market,
                cash: firm.cash,
                resources: firm.resources,
                breakdown,
                asset_value,
                roa,
                total_perf: firm.total_perf,
                alive: true,
            });
        }

        // Share values and SFM prices.
        for m in &mut self.markets {
            let factor = noise_factor(&mut self.rng, cfg.share_value_noise);
            m.share_value = update_share_value(m, cfg.crowding, factor, cfg.share_value_floor);
        }
        let mut price_noise = [1.0; 3];
        for k in 0..3 {
            let eps = if demand[k] > 0.0 {
                demand_eps[k] / demand[k]
            } else {
                0.0
            };
            price_noise[k] = noise_factor(&mut self.rng, eps);
        }
        self.sfm.price = update_sfm_prices(
            &self.sfm,
            demand,
            supply,
            cfg.price_sensitivity,
            price_noise,
            cfg.price_floor,
        );

        // Survival and ageing.
        for rec in &mut firm_records {
            let firm = &mut self.firms[rec.id.0 as usize];
            debug_assert_eq!(firm.id, rec.id);
            if rec.asset_value <= 0.0 {
                firm.alive = false;
            }
            rec.alive = survival_check(firm, &self.sfm, cfg.bankruptcy_grace);
            firm.age += 1;
        }
        self.recount_occupants();

        CycleReport {
            cycle: self.cycle,
            firms: firm_records,
            markets: market_records,
            sfm_price: self.sfm.price,
            sfm_stock: self.sfm.stock,
            trades,
        }
    }
}
