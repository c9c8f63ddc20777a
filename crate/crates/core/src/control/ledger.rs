use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Each round sends only the next chunk.
    Progressive,
    /// Each round resends the whole prefix.
    NonProgressive,
}

/// Bytes sent per round under one scheme with equal chunk cost `b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostLedger {
    scheme: Scheme,
    chunk_cost: u64,
    steps: Vec<u64>,
    cumulative: u64,
}

impl CostLedger {
    pub fn new(scheme: Scheme, chunk_cost: u64) -> Self {
        CostLedger {
            scheme,
            chunk_cost,
            steps: Vec::new(),
            cumulative: 0,
        }
    }

    /// Ledger after transmitting up to `levels`.
    pub fn simulate(scheme: Scheme, chunk_cost: u64, levels: usize) -> Self {
        let mut ledger = CostLedger::new(scheme, chunk_cost);
        for _ in 0..levels {
            ledger.advance();
        }
        ledger
    }

    /// Records the round that raises the receiver by one level; returns its cost.
    pub fn advance(&mut self) -> u64 {
        let level = self.steps.len() as u64 + 1;
        let cost = match self.scheme {
            Scheme::Progressive => self.chunk_cost,
            Scheme::NonProgressive => level * self.chunk_cost,
        };
        self.steps.push(cost);
        self.cumulative += cost;
        cost
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn level(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn cumulative(&self) -> u64 {
        self.cumulative
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LedgerComparison {
    pub progressive_total: u64,
    pub non_progressive_total: u64,
}

/// Total cost of reaching level `K` under both schemes.
///
/// # Panics
/// If `K = 0`, `b = 0`, or the simulated totals disagree with `Kb` and
/// `K(K+1)/2·b`.
pub fn ledger_compare(k_levels: usize, chunk_cost: u64) -> LedgerComparison {
    assert!(k_levels >= 1 && chunk_cost > 0, "need K >= 1 and b > 0");
    let progressive_total = CostLedger::simulate(Scheme::Progressive, chunk_cost, k_levels).cumulative();
    let non_progressive_total = CostLedger::simulate(Scheme::NonProgressive, chunk_cost, k_levels).cumulative();
    let k = k_levels as u64;
    assert_eq!(progressive_total, k * chunk_cost);
    assert_eq!(non_progressive_total, k * (k + 1) / 2 * chunk_cost);
    if k_levels > 1 {
        assert!(progressive_total < non_progressive_total);
    }
    LedgerComparison {
        progressive_total,
        non_progressive_total,
    }
}
