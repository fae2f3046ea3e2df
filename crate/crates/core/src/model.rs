//! Domain types shared by every other module: resource bundles, firms,
//! markets and the strategic factor market (SFM).

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Identifier of a firm. Firms act in ascending id order every cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FirmId(pub u32);

/// Identifier of a market. Lowest id wins every chooser tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MarketId(pub u32);

impl fmt::Display for FirmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for MarketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One of the three colored resource types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResourceKind {
    Red,
    Green,
    Blue,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 3] = [ResourceKind::Red, ResourceKind::Green, ResourceKind::Blue];

    pub fn index(self) -> usize {
        match self {
            ResourceKind::Red => 0,
            ResourceKind::Green => 1,
            ResourceKind::Blue => 2,
        }
    }
}

/// Quantities of red, green and blue resources. Components are never negative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceBundle {
    pub red: f64,
    pub green: f64,
    pub blue: f64,
}

impl ResourceBundle {
    pub const ZERO: ResourceBundle = ResourceBundle {
        red: 0.0,
        green: 0.0,
        blue: 0.0,
    };

    pub fn new(red: f64, green: f64, blue: f64) -> Self {
        debug_assert!(red >= 0.0 && green >= 0.0 && blue >= 0.0);
        Self { red, green, blue }
    }

    pub fn uniform(q: f64) -> Self {
        Self::new(q, q, q)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            red: a[0],
            green: a[1],
            blue: a[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.red, self.green, self.blue]
    }

    pub fn get(&self, kind: ResourceKind) -> f64 {
        self.to_array()[kind.index()]
    }

    pub fn set(&mut self, kind: ResourceKind, q: f64) {
        match kind {
            ResourceKind::Red => self.red = q,
            ResourceKind::Green => self.green = q,
            ResourceKind::Blue => self.blue = q,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.red == 0.0 && self.green == 0.0 && self.blue == 0.0
    }

    pub fn is_non_negative(&self) -> bool {
        self.red >= 0.0 && self.green >= 0.0 && self.blue >= 0.0
    }

    /// Component-wise `self >= other`.
    pub fn covers(&self, other: &ResourceBundle) -> bool {
        self.red >= other.red && self.green >= other.green && self.blue >= other.blue
    }

    /// Component-wise `max(other - self, 0)`: what is missing to reach `other`.
    pub fn missing_to(&self, other: &ResourceBundle) -> ResourceBundle {
        ResourceBundle {
            red: pos(other.red - self.red),
            green: pos(other.green - self.green),
            blue: pos(other.blue - self.blue),
        }
    }

    pub fn min(&self, other: &ResourceBundle) -> ResourceBundle {
        ResourceBundle {
            red: self.red.min(other.red),
            green: self.green.min(other.green),
            blue: self.blue.min(other.blue),
        }
    }

    /// Component-wise maximum.
    pub fn max(&self, other: &ResourceBundle) -> ResourceBundle {
        ResourceBundle::new(
            self.red.max(other.red),
            self.green.max(other.green),
            self.blue.max(other.blue),
        )
    }

    pub fn scale(&self, k: f64) -> ResourceBundle {
        ResourceBundle {
            red: self.red * k,
            green: self.green * k,
            blue: self.blue * k,
        }
    }

    /// The most abundant resource kind; ties go to the earlier kind (red, green, blue).
    pub fn most_abundant(&self) -> ResourceKind {
        let mut best = ResourceKind::Red;
        for kind in ResourceKind::ALL {
            if self.get(kind) > self.get(best) {
                best = kind;
            }
        }
        best
    }
}

impl Add for ResourceBundle {
    type Output = ResourceBundle;

    fn add(self, rhs: ResourceBundle) -> ResourceBundle {
        ResourceBundle {
            red: self.red + rhs.red,
            green: self.green + rhs.green,
            blue: self.blue + rhs.blue,
        }
    }
}

/// Component-wise subtraction, clamped at zero so bundles stay non-negative.
impl Sub for ResourceBundle {
    type Output = ResourceBundle;

    fn sub(self, rhs: ResourceBundle) -> ResourceBundle {
        ResourceBundle {
            red: pos(self.red - rhs.red),
            green: pos(self.green - rhs.green),
            blue: pos(self.blue - rhs.blue),
        }
    }
}

/// `x` if `x >= 0`, else 0.
#[inline]
pub fn pos(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyTag {
    #[serde(rename = "IO")]
    Io,
    #[serde(rename = "RBV")]
    Rbv,
}

impl StrategyTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyTag::Io => "IO",
            StrategyTag::Rbv => "RBV",
        }
    }
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Firm {
    pub id: FirmId,
    strategy: StrategyTag,
    pub cash: f64,
    pub resources: ResourceBundle,
    pub market: Option<MarketId>,
    pub instant_perf: f64,
    pub total_perf: f64,
    pub age: u32,
    pub alive: bool,
    /// Consecutive cycles ended with `cash <= 0`.
    pub cash_deficit_streak: u32,
}

impl Firm {
    pub fn new(id: FirmId, strategy: StrategyTag, cash: f64, resources: ResourceBundle) -> Self {
        Self {
            id,
            strategy,
            cash,
            resources,
            market: None,
            instant_perf: 0.0,
            total_perf: 0.0,
            age: 0,
            alive: true,
            cash_deficit_streak: 0,
        }
    }

    /// The strategy is fixed at creation; there is no setter.
    pub fn strategy(&self) -> StrategyTag {
        self.strategy
    }

    pub fn is_io(&self) -> bool {
        self.strategy == StrategyTag::Io
    }

    pub fn is_rbv(&self) -> bool {
        self.strategy == StrategyTag::Rbv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub id: MarketId,
    /// Number of shares `NP_j`, fixed for the run.
    pub shares: u32,
    /// Current value of one share `v_j(t)`; always positive.
    pub share_value: f64,
    /// Share value at initialization, the mean-reversion target.
    pub base_share_value: f64,
    /// Minimal resource levels required to operate on the market.
    pub barrier: ResourceBundle,
    /// Alive firms currently attached, `NF_j(t)`.
    pub occupants: u32,
}

impl Market {
    pub fn new(id: MarketId, shares: u32, share_value: f64, barrier: ResourceBundle) -> Self {
        Self {
            id,
            shares,
            share_value,
            base_share_value: share_value,
            barrier,
            occupants: 0,
        }
    }

    /// Total revenue distributed on this market per cycle: `NP_j * v_j`.
    pub fn total_value(&self) -> f64 {
        self.shares as f64 * self.share_value
    }
}

/// Stocks and per-unit prices on the strategic factor market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfmState {
    pub stock: ResourceBundle,
    pub price: [f64; 3],
}

impl SfmState {
    pub fn new(stock: ResourceBundle, price: [f64; 3]) -> Self {
        debug_assert!(price.iter().all(|&p| p > 0.0));
        Self { stock, price }
    }

    pub fn price_of(&self, kind: ResourceKind) -> f64 {
        self.price[kind.index()]
    }
}

/// Revenue/cost breakdown of one firm over one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProfitBreakdown {
    pub total_revenue: f64,
    pub total_cost: f64,
    pub profit: f64,
    pub quantity_sold: f64,
}

impl ProfitBreakdown {
    /// Output price on every market; firms are price takers.
    pub const PRICE: f64 = 1.0;

    pub fn new(quantity_sold: f64, total_cost: f64) -> Self {
        let total_revenue = Self::PRICE * quantity_sold;
        Self {
            total_revenue,
            total_cost,
            profit: total_revenue - total_cost,
            quantity_sold,
        }
    }
}

/// Monetary value of a bundle at current SFM prices.
pub fn bundle_value(b: &ResourceBundle, sfm: &SfmState) -> f64 {
    b.red * sfm.price[0] + b.green * sfm.price[1] + b.blue * sfm.price[2]
}

/// Cash plus the SFM value of the firm's bundle (`RES_i`).
pub fn total_asset_value(firm: &Firm, sfm: &SfmState) -> f64 {
    firm.cash + bundle_value(&firm.resources, sfm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sfm(p: [f64; 3]) -> SfmState {
        SfmState::new(ResourceBundle::uniform(1e6), p)
    }

    #[test]
    fn bundle_value_examples() {
        assert_eq!(
            bundle_value(&ResourceBundle::ZERO, &sfm([3.0, 7.0, 0.5])),
            0.0
        );
        assert_eq!(
            bundle_value(&ResourceBundle::uniform(1.0), &sfm([1.0; 3])),
            3.0
        );
        // 2*1.5 + 0*9 + 5*0.2
        let v = bundle_value(&ResourceBundle::new(2.0, 0.0, 5.0), &sfm([1.5, 9.0, 0.2]));
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn total_asset_value_examples() {
        let mut f = Firm::new(FirmId(0), StrategyTag::Io, 10.0, ResourceBundle::ZERO);
        assert_eq!(total_asset_value(&f, &sfm([1.0; 3])), 10.0);
        f.cash = 0.0;
        f.resources = ResourceBundle::uniform(1.0);
        assert_eq!(total_asset_value(&f, &sfm([1.0; 3])), 3.0);
        f.cash = 5.0;
        f.resources = ResourceBundle::new(2.0, 0.0, 5.0);
        assert!((total_asset_value(&f, &sfm([1.5, 9.0, 0.2])) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn profit_breakdown_identity() {
        let p = ProfitBreakdown::new(25.0, 10.0);
        assert_eq!(p.total_revenue, 25.0);
        assert_eq!(p.profit, p.total_revenue - p.total_cost);
    }

    #[test]
    fn bundle_helpers() {
        let a = ResourceBundle::new(5.0, 2.0, 0.0);
        let b = ResourceBundle::new(3.0, 4.0, 2.0);
        assert_eq!(a.missing_to(&b), ResourceBundle::new(0.0, 2.0, 2.0));
        assert!(!a.covers(&b));
        assert!((a + a.missing_to(&b)).covers(&b));
        assert_eq!(a - b, ResourceBundle::new(2.0, 0.0, 0.0));
        assert_eq!(a.most_abundant(), ResourceKind::Red);
        assert_eq!(
            ResourceBundle::uniform(1.0).most_abundant(),
            ResourceKind::Red
        );
        assert_eq!(
            ResourceBundle::new(0.0, 0.0, 1.0).most_abundant(),
            ResourceKind::Blue
        );
    }
}
