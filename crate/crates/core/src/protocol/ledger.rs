use super::{CompressedResidual, ResidualPacket};

/// Bits for one sparse entry: the value at full precision plus its index.
fn sparse_entry_bits(dim: usize) -> u64 {
    let index_bits = usize::BITS - dim.saturating_sub(1).leading_zeros();
    64 + index_bits.max(1) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEntry {
    pub t: usize,
    pub agent: usize,
    pub coeff_bits: u64,
    pub interval_bits: u64,
    pub payload_bits: u64,
    pub residual_transmitted: bool,
    /// Scalars sent: coefficients plus residual elements.
    pub channel_uses: u64,
}

impl LedgerEntry {
    pub fn total_bits(&self) -> u64 {
        self.coeff_bits + self.interval_bits + self.payload_bits
    }
}

/// Uplink cost of a run. The broadcast downlink is not counted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitLedger {
    pub entries: Vec<LedgerEntry>,
    pub total_bits: u64,
    pub channel_uses: u64,
    pub transmissions: u64,
}

impl BitLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Recomputes the totals from the entries.
    pub fn recount(&self) -> (u64, u64, u64) {
        self.entries.iter().fold((0, 0, 0), |(b, c, n), e| {
            (b + e.total_bits(), c + e.channel_uses, n + e.residual_transmitted as u64)
        })
    }

    pub fn agent_bits(&self, agent: usize) -> u64 {
        self.entries.iter().filter(|e| e.agent == agent).map(LedgerEntry::total_bits).sum()
    }
}

/// Charges one packet: `s * coeff_bits` whenever coefficients are sent, plus
/// payload and interval bits when a residual is.
pub fn account_bits(ledger: &mut BitLedger, pkt: &ResidualPacket) -> LedgerEntry {
    let (coeff_bits, coeff_uses) = pkt
        .coefficients
        .as_ref()
        .map_or((0, 0), |a| (a.wire_bits(), a.len() as u64));
    let (interval_bits, payload_bits) = match &pkt.residual {
        None => (0, 0),
        Some(CompressedResidual::Quantized { precision, payload, .. }) => (precision.bits(), payload.bits),
        Some(CompressedResidual::Sparse(s)) => (0, s.nnz() as u64 * sparse_entry_bits(s.dim)),
        Some(CompressedResidual::Raw(v)) => (0, 64 * v.len() as u64),
    };
    let entry = LedgerEntry {
        t: pkt.t,
        agent: pkt.agent,
        coeff_bits,
        interval_bits,
        payload_bits,
        residual_transmitted: pkt.residual.is_some(),
        channel_uses: coeff_uses + pkt.residual.as_ref().map_or(0, CompressedResidual::elements),
    };
    ledger.total_bits += entry.total_bits();
    ledger.channel_uses += entry.channel_uses;
    ledger.transmissions += entry.residual_transmitted as u64;
    ledger.entries.push(entry);
    entry
}
