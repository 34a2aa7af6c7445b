use crate::pow::Puzzle;

/// Broker-side registry entry for one admitted client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRecord {
    pub token: String,
    /// Required trailing zero hex digits for this client's next update.
    pub difficulty: u32,
    /// Accumulated RONI since the last penalty.
    pub roni_total: f64,
    pub k: u32,
    pub last_seen: u64,
    pub outstanding_puzzle: Option<Puzzle>,
    pub admitted: bool,
    pub blacklisted: bool,
}

impl ClientRecord {
    pub fn admitted(token: String, k: u32, difficulty: u32, now_ms: u64) -> Self {
        Self {
            token,
            difficulty,
            roni_total: 0.0,
            k,
            last_seen: now_ms,
            outstanding_puzzle: None,
            admitted: true,
            blacklisted: false,
        }
    }

    pub fn counts_toward_gating(&self) -> bool {
        self.admitted && !self.blacklisted
    }
}
