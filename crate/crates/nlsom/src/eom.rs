//! Economy of Minds: accounts, rent and taxes, bankruptcy, validated
//! service contracts, spawning, and bucket-brigade reward chains.
//!
//! Currency is exact rational arithmetic — never binary floating point —
//! so credit conservation holds exactly: sum(accounts) + treasury minus
//! external inflows is invariant across every operation, and no balance
//! ever goes negative.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, Conversation};
use crate::message::AgentId;

/// Exact currency amount.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Money(BigRational);

/// Derived flows (taxes, spawn endowments, brigade hops) are rounded to
/// this many decimal places before they move. What moves is exact, so
/// conservation is unaffected, and balances stay on a bounded decimal grid
/// instead of compounding precision tick over tick.
pub const MONEY_SCALE: u32 = 6;

impl Money {
    pub fn zero() -> Self {
        Money(BigRational::zero())
    }

    /// Nearest multiple of 10^-MONEY_SCALE, ties away from zero.
    pub fn quantized(&self) -> Money {
        let grid = BigInt::from(10u32).pow(MONEY_SCALE);
        let scaled = (&self.0 * BigRational::from_integer(grid.clone())).round();
        Money(scaled / BigRational::from_integer(grid))
    }

    pub fn from_units(n: i64) -> Self {
        Money(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn min(self, other: Money) -> Money {
        if self.0 <= other.0 {
            self
        } else {
            other
        }
    }

    pub fn to_f64_lossy(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl std::ops::Add for &Money {
    type Output = Money;
    fn add(self, rhs: &Money) -> Money {
        Money(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub for &Money {
    type Output = Money;
    fn sub(self, rhs: &Money) -> Money {
        Money(&self.0 - &rhs.0)
    }
}

impl std::ops::Mul for &Money {
    type Output = Money;
    fn mul(self, rhs: &Money) -> Money {
        Money(&self.0 * &rhs.0)
    }
}

impl std::ops::AddAssign<&Money> for Money {
    fn add_assign(&mut self, rhs: &Money) {
        self.0 += &rhs.0;
    }
}

impl std::ops::SubAssign<&Money> for Money {
    fn sub_assign(&mut self, rhs: &Money) {
        self.0 -= &rhs.0;
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse amount: {0}")]
pub struct MoneyParseError(String);

impl FromStr for Money {
    type Err = MoneyParseError;

    /// Accepts decimal text ("100", "-3.25") or an exact fraction ("1/3").
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || MoneyParseError(s.to_string());
        if let Some((p, q)) = s.split_once('/') {
            let numer = BigInt::from_str(p.trim()).map_err(|_| bad())?;
            let denom = BigInt::from_str(q.trim()).map_err(|_| bad())?;
            if denom.is_zero() {
                return Err(bad());
            }
            return Ok(Money(BigRational::new(numer, denom)));
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if frac_part.contains(['+', '-']) {
            return Err(bad());
        }
        let negative = int_part.starts_with('-');
        let int_digits = int_part.trim_start_matches(['+', '-']);
        if int_digits.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        let digits = format!(
            "{}{}",
            if int_digits.is_empty() { "0" } else { int_digits },
            frac_part
        );
        let numer = BigInt::from_str(&digits).map_err(|_| bad())?;
        let numer = if negative { -numer } else { numer };
        let denom = BigInt::from(10u32).pow(frac_part.len() as u32);
        Ok(Money(BigRational::new(numer, denom)))
    }
}

impl fmt::Display for Money {
    /// Decimal when the denominator is a 10-power divisor, else `p/q`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let numer = self.0.numer();
        let denom = self.0.denom();
        let mut d = denom.clone();
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let mut twos = 0u32;
        let mut fives = 0u32;
        while (&d % &two).is_zero() {
            d /= &two;
            twos += 1;
        }
        while (&d % &five).is_zero() {
            d /= &five;
            fives += 1;
        }
        if d != BigInt::from(1) {
            return write!(f, "{}/{}", numer, denom);
        }
        let scale = twos.max(fives);
        let scaled = numer * BigInt::from(10u32).pow(scale) / denom;
        let negative = scaled.is_negative();
        let digits = scaled.magnitude().to_string();
        let sign = if negative { "-" } else { "" };
        if scale == 0 {
            return write!(f, "{sign}{digits}");
        }
        let scale = scale as usize;
        let padded = format!("{digits:0>width$}", width = scale + 1);
        let (int_part, frac_part) = padded.split_at(padded.len() - scale);
        write!(f, "{sign}{int_part}.{frac_part}")
    }
}

impl Serialize for Money {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A party to a money flow.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "party", content = "agent", rename_all = "lowercase")]
pub enum Party {
    Agent(AgentId),
    Treasury,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Endow,
    Transfer,
    Rent,
    Tax,
    Reward,
    Spawn,
    ContractSettle,
    BrigadeHop,
}

/// One irreversible money flow; entries are append-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub tick: u64,
    pub kind: EntryKind,
    pub from: Party,
    pub to: Party,
    pub amount: Money,
}

/// Journal record: an entry or an account-lifecycle event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum JournalRecord {
    Entry(LedgerEntry),
    Removed { tick: u64, agent: AgentId },
}

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("insufficient funds: {agent} holds {balance}, needs {requested}")]
    InsufficientFunds {
        agent: String,
        balance: String,
        requested: String,
    },
    #[error("negative amount")]
    NegativeAmount,
    #[error("unknown account: {0}")]
    UnknownAccount(String),
    #[error("account already exists: {0}")]
    DuplicateAccount(String),
    #[error("fraction must lie strictly between 0 and 1")]
    FractionOutOfRange,
    #[error("parent {0} is bankrupt")]
    BankruptParent(String),
}

/// The economy's single serialized timeline of accounts and flows.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    accounts: BTreeMap<AgentId, Money>,
    treasury: Money,
    records: Vec<JournalRecord>,
    tick: u64,
    inflows: Money,
    spawn_counter: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomyConfig {
    pub rent_per_tick: Money,
    /// Fraction of the post-rent balance, in [0, 1].
    pub tax_rate: Money,
    /// Endowment fraction handed to spawned children, in (0, 1).
    pub spawn_fraction: Money,
    /// Backward payment fraction along brigade chains, in (0, 1).
    pub brigade_gamma: Money,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn balance(&self, agent: &AgentId) -> Option<&Money> {
        self.accounts.get(agent)
    }

    pub fn treasury(&self) -> &Money {
        &self.treasury
    }

    pub fn accounts(&self) -> &BTreeMap<AgentId, Money> {
        &self.accounts
    }

    pub fn records(&self) -> &[JournalRecord] {
        &self.records
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn contains(&self, agent: &AgentId) -> bool {
        self.accounts.contains_key(agent)
    }

    fn log(&mut self, kind: EntryKind, from: Party, to: Party, amount: Money) {
        debug_assert!(!amount.is_negative());
        self.records.push(JournalRecord::Entry(LedgerEntry {
            tick: self.tick,
            kind,
            from,
            to,
            amount,
        }));
    }

    /// Opens an account with an external endowment (an inflow).
    pub fn endow(&mut self, agent: AgentId, amount: Money) -> Result<(), LedgerError> {
        if amount.is_negative() {
            return Err(LedgerError::NegativeAmount);
        }
        if self.accounts.contains_key(&agent) {
            return Err(LedgerError::DuplicateAccount(agent.id));
        }
        self.inflows += &amount;
        self.accounts.insert(agent.clone(), amount.clone());
        self.log(EntryKind::Endow, Party::External, Party::Agent(agent), amount);
        Ok(())
    }

    /// Moves `amount` between accounts; rejected whole when funds are
    /// short, so no partial transfer can exist.
    pub fn transfer(
        &mut self,
        from: &AgentId,
        to: &AgentId,
        amount: Money,
    ) -> Result<(), LedgerError> {
        self.move_between(EntryKind::Transfer, from, to, amount)
    }

    fn move_between(
        &mut self,
        kind: EntryKind,
        from: &AgentId,
        to: &AgentId,
        amount: Money,
    ) -> Result<(), LedgerError> {
        if amount.is_negative() {
            return Err(LedgerError::NegativeAmount);
        }
        let from_balance = self
            .accounts
            .get(from)
            .ok_or_else(|| LedgerError::UnknownAccount(from.id.clone()))?;
        if *from_balance < amount {
            return Err(LedgerError::InsufficientFunds {
                agent: from.id.clone(),
                balance: from_balance.to_string(),
                requested: amount.to_string(),
            });
        }
        if !self.accounts.contains_key(to) {
            return Err(LedgerError::UnknownAccount(to.id.clone()));
        }
        *self.accounts.get_mut(from).expect("checked") -= &amount;
        *self.accounts.get_mut(to).expect("checked") += &amount;
        self.log(kind, Party::Agent(from.clone()), Party::Agent(to.clone()), amount);
        Ok(())
    }

    /// Rent then tax for every account; shortfalls drain the balance, flag
    /// the agent insolvent, and the agent is removed with any residue swept
    /// to the treasury. Returns the removed agents.
    pub fn tick_economy(&mut self, cfg: &EconomyConfig) -> Vec<AgentId> {
        self.tick += 1;
        let agents: Vec<AgentId> = self.accounts.keys().cloned().collect();
        let mut removed = Vec::new();
        for agent in agents {
            let balance = self.accounts[&agent].clone();
            let insolvent = balance < cfg.rent_per_tick;
            let rent_paid = balance.clone().min(cfg.rent_per_tick.clone());
            *self.accounts.get_mut(&agent).expect("present") -= &rent_paid;
            self.treasury += &rent_paid;
            self.log(
                EntryKind::Rent,
                Party::Agent(agent.clone()),
                Party::Treasury,
                rent_paid,
            );
            if insolvent {
                let residue = self.accounts.remove(&agent).expect("present");
                if !residue.is_zero() {
                    self.treasury += &residue;
                    self.log(
                        EntryKind::Tax,
                        Party::Agent(agent.clone()),
                        Party::Treasury,
                        residue,
                    );
                }
                self.records.push(JournalRecord::Removed {
                    tick: self.tick,
                    agent: agent.clone(),
                });
                removed.push(agent);
                continue;
            }
            let post_rent = self.accounts[&agent].clone();
            let tax = if post_rent.is_negative() {
                Money::zero()
            } else {
                (&post_rent * &cfg.tax_rate).quantized().min(post_rent)
            };
            *self.accounts.get_mut(&agent).expect("present") -= &tax;
            self.treasury += &tax;
            self.log(EntryKind::Tax, Party::Agent(agent.clone()), Party::Treasury, tax);
        }
        removed
    }

    /// Creates a child endowed with `fraction` of the parent's balance;
    /// the total is unchanged.
    pub fn spawn(
        &mut self,
        parent: &AgentId,
        fraction: &Money,
    ) -> Result<AgentId, LedgerError> {
        let zero = Money::zero();
        let one = Money::from_units(1);
        if !(fraction > &zero && fraction < &one) {
            return Err(LedgerError::FractionOutOfRange);
        }
        let parent_balance = self
            .accounts
            .get(parent)
            .ok_or_else(|| LedgerError::BankruptParent(parent.id.clone()))?
            .clone();
        let endowment = (&parent_balance * fraction)
            .quantized()
            .min(parent_balance.clone());
        self.spawn_counter += 1;
        let child = AgentId::new(
            format!("{}-child-{}", parent.id, self.spawn_counter),
            format!("{} child {}", parent.name, self.spawn_counter),
        );
        *self.accounts.get_mut(parent).expect("present") -= &endowment;
        self.accounts.insert(child.clone(), endowment.clone());
        self.log(
            EntryKind::Spawn,
            Party::Agent(parent.clone()),
            Party::Agent(child.clone()),
            endowment,
        );
        Ok(child)
    }

    /// Injects `reward` at the chain's tail, then each agent pays fraction
    /// `gamma` of what it just received to its predecessor; the head keeps
    /// its full receipt. Net gains always sum to the injected reward.
    pub fn brigade_distribute(
        &mut self,
        chain: &[AgentId],
        reward: Money,
        gamma: &Money,
    ) -> Result<(), LedgerError> {
        assert!(!chain.is_empty(), "chain must be non-empty");
        if reward.is_negative() {
            return Err(LedgerError::NegativeAmount);
        }
        for agent in chain {
            if !self.accounts.contains_key(agent) {
                return Err(LedgerError::UnknownAccount(agent.id.clone()));
            }
        }
        let tail = chain.last().expect("non-empty");
        self.inflows += &reward;
        *self.accounts.get_mut(tail).expect("checked") += &reward;
        self.log(
            EntryKind::Reward,
            Party::External,
            Party::Agent(tail.clone()),
            reward.clone(),
        );
        let mut received = reward;
        for pair in chain.windows(2).rev() {
            let (upstream, downstream) = (&pair[0], &pair[1]);
            let payment = (gamma * &received).quantized().min(received.clone());
            *self.accounts.get_mut(downstream).expect("checked") -= &payment;
            *self.accounts.get_mut(upstream).expect("checked") += &payment;
            self.log(
                EntryKind::BrigadeHop,
                Party::Agent(downstream.clone()),
                Party::Agent(upstream.clone()),
                payment.clone(),
            );
            received = payment;
        }
        Ok(())
    }

    /// sum(accounts) + treasury − external inflows; zero iff credit is
    /// conserved.
    pub fn conservation_defect(&self) -> Money {
        let mut total = self.treasury.clone();
        for balance in self.accounts.values() {
            total += balance;
        }
        &total - &self.inflows
    }

    pub fn any_negative_balance(&self) -> bool {
        self.accounts.values().any(|b| b.is_negative()) || self.treasury.is_negative()
    }
}

/// Replays journal records onto a fresh state; returns (accounts, treasury).
/// Must reproduce the live ledger's final balances exactly.
pub fn replay_journal(
    records: &[JournalRecord],
) -> Result<(BTreeMap<AgentId, Money>, Money), LedgerError> {
    let mut accounts: BTreeMap<AgentId, Money> = BTreeMap::new();
    let mut treasury = Money::zero();
    for record in records {
        match record {
            JournalRecord::Entry(entry) => {
                match &entry.from {
                    Party::Agent(a) => {
                        let balance = accounts
                            .get_mut(a)
                            .ok_or_else(|| LedgerError::UnknownAccount(a.id.clone()))?;
                        *balance -= &entry.amount;
                    }
                    Party::Treasury => treasury -= &entry.amount,
                    Party::External => {}
                }
                match &entry.to {
                    Party::Agent(a) => {
                        *accounts.entry(a.clone()).or_insert_with(Money::zero) += &entry.amount;
                    }
                    Party::Treasury => treasury += &entry.amount,
                    Party::External => {}
                }
            }
            JournalRecord::Removed { agent, .. } => {
                accounts.remove(agent);
            }
        }
    }
    Ok((accounts, treasury))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractStatus {
    Proposed,
    Accepted,
    Delivered,
    Settled,
    Rejected,
    Disputed,
}

/// A service offer between two agents. Status only moves along
/// Proposed→{Accepted, Rejected}, Accepted→Delivered→Settled, any→Disputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub id: u64,
    pub proposer: AgentId,
    pub acceptor: AgentId,
    pub service: String,
    pub price: Money,
    pub status: ContractStatus,
}

impl Contract {
    pub fn propose(
        id: u64,
        proposer: AgentId,
        acceptor: AgentId,
        service: impl Into<String>,
        price: Money,
    ) -> Self {
        Self {
            id,
            proposer,
            acceptor,
            service: service.into(),
            price,
            status: ContractStatus::Proposed,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ContractError {
    #[error("illegal transition: {from:?} -> {to:?}")]
    IllegalTransition {
        from: ContractStatus,
        to: ContractStatus,
    },
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
}

/// The authority's judgment on enforceability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContractVerdict {
    Valid,
    Invalid(String),
    /// The authority could not be consulted; the contract stays proposed.
    Unavailable(String),
}

/// Puts the contract text before the authority backend and parses its
/// verdict. Backend failure leaves the contract proposed.
pub fn validate_contract(contract: &Contract, authority: &dyn Backend) -> ContractVerdict {
    let conversation = Conversation::new(
        "You judge whether a proposed contract is binding. Reply `valid` or `invalid: <reason>`.",
    )
    .with_user(format!(
        "proposer: {}\nacceptor: {}\nservice: {}\nprice: {}",
        contract.proposer.id, contract.acceptor.id, contract.service, contract.price
    ));
    match authority.respond(&conversation) {
        Ok(text) => {
            let lower = text.trim().to_lowercase();
            if lower.starts_with("valid") {
                ContractVerdict::Valid
            } else if let Some(reason) = lower.strip_prefix("invalid") {
                ContractVerdict::Invalid(reason.trim_start_matches(':').trim().to_string())
            } else {
                ContractVerdict::Invalid(format!("unintelligible verdict: {text}"))
            }
        }
        Err(err) => ContractVerdict::Unavailable(err.to_string()),
    }
}

/// Acceptance is gated on the authority's verdict: valid → accepted,
/// invalid → rejected, authority unavailable → still proposed.
pub fn accept_contract(
    contract: &mut Contract,
    authority: &dyn Backend,
) -> Result<ContractVerdict, ContractError> {
    require_status(contract, ContractStatus::Proposed, ContractStatus::Accepted)?;
    let verdict = validate_contract(contract, authority);
    match &verdict {
        ContractVerdict::Valid => contract.status = ContractStatus::Accepted,
        ContractVerdict::Invalid(_) => contract.status = ContractStatus::Rejected,
        ContractVerdict::Unavailable(_) => {}
    }
    Ok(verdict)
}

pub fn reject_contract(contract: &mut Contract) -> Result<(), ContractError> {
    require_status(contract, ContractStatus::Proposed, ContractStatus::Rejected)?;
    contract.status = ContractStatus::Rejected;
    Ok(())
}

pub fn deliver(contract: &mut Contract) -> Result<(), ContractError> {
    require_status(contract, ContractStatus::Accepted, ContractStatus::Delivered)?;
    contract.status = ContractStatus::Delivered;
    Ok(())
}

/// Pays the acceptor atomically with the status change; insufficient funds
/// dispute the contract and move no money.
pub fn settle(ledger: &mut Ledger, contract: &mut Contract) -> Result<(), ContractError> {
    require_status(contract, ContractStatus::Delivered, ContractStatus::Settled)?;
    match ledger.move_between(
        EntryKind::ContractSettle,
        &contract.proposer,
        &contract.acceptor,
        contract.price.clone(),
    ) {
        Ok(()) => {
            contract.status = ContractStatus::Settled;
            Ok(())
        }
        Err(LedgerError::InsufficientFunds { .. }) => {
            contract.status = ContractStatus::Disputed;
            Ok(())
        }
        Err(other) => Err(ContractError::Ledger(other)),
    }
}

pub fn dispute(contract: &mut Contract) {
    contract.status = ContractStatus::Disputed;
}

fn require_status(
    contract: &Contract,
    expected: ContractStatus,
    attempted: ContractStatus,
) -> Result<(), ContractError> {
    if contract.status != expected {
        return Err(ContractError::IllegalTransition {
            from: contract.status,
            to: attempted,
        });
    }
    Ok(())
}

/// Default scripted authority: approves any contract with a non-empty
/// service description and a positive price.
pub struct DefaultAuthority;

impl Backend for DefaultAuthority {
    fn respond(&self, conversation: &Conversation) -> Result<String, BackendError> {
        let text = conversation.last_incoming().unwrap_or("");
        let field = |name: &str| {
            text.lines()
                .find_map(|l| l.strip_prefix(&format!("{name}: ")))
                .unwrap_or("")
        };
        if field("service").trim().is_empty() {
            return Ok("invalid: no consideration".to_string());
        }
        let price: Money = field("price").parse().unwrap_or_else(|_| Money::zero());
        if price <= Money::zero() {
            return Ok("invalid: no price".to_string());
        }
        Ok("valid".to_string())
    }

    fn deterministic(&self) -> bool {
        true
    }
}

/// Seeded random-activity economy used by the simulator command: transfers,
/// ticks, spawns, full contract cycles, and brigade chains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub initial_agents: usize,
    pub endowment: Money,
    pub economy: EconomyConfig,
    /// How often (in steps) the economy ticks; 0 disables ticking.
    pub tick_every: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            initial_agents: 8,
            endowment: "100".parse().expect("literal"),
            economy: EconomyConfig {
                rent_per_tick: "1".parse().expect("literal"),
                tax_rate: "0.05".parse().expect("literal"),
                spawn_fraction: "0.25".parse().expect("literal"),
                brigade_gamma: "0.5".parse().expect("literal"),
            },
            tick_every: 100,
        }
    }
}

#[derive(Debug)]
pub struct SimOutcome {
    pub ledger: Ledger,
    pub steps: u64,
    pub removed: Vec<AgentId>,
    pub contracts_settled: u64,
    pub contracts_disputed: u64,
}

pub fn run_simulation(cfg: &SimConfig, steps: u64, seed: u64) -> SimOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = Ledger::new();
    let mut population: Vec<AgentId> = (0..cfg.initial_agents)
        .map(|i| AgentId::new(format!("agent-{i:02}"), format!("Agent {i:02}")))
        .collect();
    for agent in &population {
        ledger
            .endow(agent.clone(), cfg.endowment.clone())
            .expect("fresh account");
    }
    let authority = DefaultAuthority;
    let mut removed_all = Vec::new();
    let mut contracts_settled = 0;
    let mut contracts_disputed = 0;
    let mut next_contract_id = 0;

    const MAX_POPULATION: usize = 64;
    for step in 1..=steps {
        if population.is_empty() {
            break;
        }
        match rng.gen_range(0..100) {
            // transfer between a random pair, sometimes deliberately too
            // large (rejected whole)
            0..=39 => {
                let from = population[rng.gen_range(0..population.len())].clone();
                let to = population[rng.gen_range(0..population.len())].clone();
                if from != to {
                    let amount = Money::from_units(rng.gen_range(0..150));
                    let _ = ledger.transfer(&from, &to, amount);
                }
            }
            // full contract cycle
            40..=59 => {
                let proposer = population[rng.gen_range(0..population.len())].clone();
                let acceptor = population[rng.gen_range(0..population.len())].clone();
                next_contract_id += 1;
                let price = Money::from_units(rng.gen_range(1..30));
                let service = if rng.gen_bool(0.9) { "answers" } else { "" };
                if proposer != acceptor {
                    let mut contract = Contract::propose(
                        next_contract_id,
                        proposer,
                        acceptor,
                        service,
                        price,
                    );
                    let verdict = accept_contract(&mut contract, &authority).expect("proposed");
                    if verdict == ContractVerdict::Valid {
                        deliver(&mut contract).expect("accepted");
                        settle(&mut ledger, &mut contract).expect("delivered");
                        match contract.status {
                            ContractStatus::Settled => contracts_settled += 1,
                            ContractStatus::Disputed => contracts_disputed += 1,
                            _ => unreachable!("settle leaves settled or disputed"),
                        }
                    }
                }
            }
            // spawn a child from a random parent
            60..=69 => {
                if population.len() < MAX_POPULATION {
                    let parent = population[rng.gen_range(0..population.len())].clone();
                    if let Ok(child) = ledger.spawn(&parent, &cfg.economy.spawn_fraction) {
                        population.push(child);
                    }
                }
            }
            // brigade chain over a random prefix of the population
            70..=97 => {
                let len = rng.gen_range(1..=population.len().min(20));
                let chain: Vec<AgentId> = population[..len].to_vec();
                let reward = Money::from_units(rng.gen_range(0..100));
                ledger
                    .brigade_distribute(&chain, reward, &cfg.economy.brigade_gamma)
                    .expect("population accounts exist");
            }
            // an occasional tick beyond the schedule
            _ => {
                let removed = ledger.tick_economy(&cfg.economy);
                population.retain(|a| !removed.contains(a));
                removed_all.extend(removed);
            }
        }
        if cfg.tick_every > 0 && step % cfg.tick_every == 0 {
            let removed = ledger.tick_economy(&cfg.economy);
            population.retain(|a| !removed.contains(a));
            removed_all.extend(removed);
        }
    }
    debug_assert!(ledger.conservation_defect().is_zero());

    SimOutcome {
        ledger,
        steps,
        removed: removed_all,
        contracts_settled,
        contracts_disputed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(id: &str) -> AgentId {
        AgentId::new(id, id)
    }

    fn money(s: &str) -> Money {
        s.parse().expect("test literal")
    }

    #[test]
    fn money_parses_and_displays() {
        assert_eq!(money("100").to_string(), "100");
        assert_eq!(money("0.25").to_string(), "0.25");
        assert_eq!(money("-3.5").to_string(), "-3.5");
        assert_eq!(money("1/3").to_string(), "1/3");
        assert_eq!((&money("1/4") + &money("1/4")).to_string(), "0.5");
        assert!("abc".parse::<Money>().is_err());
        assert!("1/0".parse::<Money>().is_err());
        assert!("1.2.3".parse::<Money>().is_err());
    }

    #[test]
    fn transfer_conserves_total() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("m"), money("100")).unwrap();
        ledger.endow(agent("n"), money("50")).unwrap();
        ledger.transfer(&agent("m"), &agent("n"), money("30")).unwrap();
        assert_eq!(ledger.balance(&agent("m")).unwrap(), &money("70"));
        assert_eq!(ledger.balance(&agent("n")).unwrap(), &money("80"));
        assert!(ledger.conservation_defect().is_zero());
    }

    #[test]
    fn zero_transfer_logs_but_changes_nothing() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("m"), money("10")).unwrap();
        ledger.endow(agent("n"), money("0")).unwrap();
        let entries_before = ledger.records().len();
        ledger.transfer(&agent("m"), &agent("n"), money("0")).unwrap();
        assert_eq!(ledger.records().len(), entries_before + 1);
        assert_eq!(ledger.balance(&agent("m")).unwrap(), &money("10"));
    }

    #[test]
    fn insufficient_funds_rejects_whole_transfer() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("m"), money("10")).unwrap();
        ledger.endow(agent("n"), money("0")).unwrap();
        let err = ledger
            .transfer(&agent("m"), &agent("n"), money("30"))
            .unwrap_err();
        assert!(matches!(err, LedgerError::InsufficientFunds { .. }));
        assert_eq!(ledger.balance(&agent("m")).unwrap(), &money("10"));
        assert_eq!(ledger.balance(&agent("n")).unwrap(), &money("0"));
    }

    #[test]
    fn negative_amount_is_rejected() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("m"), money("10")).unwrap();
        ledger.endow(agent("n"), money("1")).unwrap();
        assert_eq!(
            ledger.transfer(&agent("m"), &agent("n"), money("-1")),
            Err(LedgerError::NegativeAmount)
        );
    }

    #[test]
    fn tick_rent_shortfall_bankrupts_and_sweeps() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("poor"), money("5")).unwrap();
        let cfg = EconomyConfig {
            rent_per_tick: money("10"),
            tax_rate: money("0"),
            spawn_fraction: money("0.5"),
            brigade_gamma: money("0.5"),
        };
        let removed = ledger.tick_economy(&cfg);
        assert_eq!(removed, vec![agent("poor")]);
        assert!(!ledger.contains(&agent("poor")));
        assert_eq!(ledger.treasury(), &money("5"));
        assert!(ledger.conservation_defect().is_zero());
    }

    #[test]
    fn tick_applies_rent_then_tax() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("m"), money("100")).unwrap();
        let cfg = EconomyConfig {
            rent_per_tick: money("10"),
            tax_rate: money("0.1"),
            spawn_fraction: money("0.5"),
            brigade_gamma: money("0.5"),
        };
        let removed = ledger.tick_economy(&cfg);
        assert!(removed.is_empty());
        // 100 - 10 rent - 9 tax (10% of the post-rent 90)
        assert_eq!(ledger.balance(&agent("m")).unwrap(), &money("81"));
        assert_eq!(ledger.treasury(), &money("19"));
    }

    #[test]
    fn zero_rent_zero_tax_changes_no_balance() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("m"), money("100")).unwrap();
        let cfg = EconomyConfig {
            rent_per_tick: money("0"),
            tax_rate: money("0"),
            spawn_fraction: money("0.5"),
            brigade_gamma: money("0.5"),
        };
        let entries_before = ledger.records().len();
        let removed = ledger.tick_economy(&cfg);
        assert!(removed.is_empty());
        assert_eq!(ledger.balance(&agent("m")).unwrap(), &money("100"));
        // tick entries are still journaled
        assert!(ledger.records().len() > entries_before);
    }

    #[test]
    fn spawn_conserves_and_respects_bounds() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("parent"), money("100")).unwrap();
        let child = ledger.spawn(&agent("parent"), &money("0.25")).unwrap();
        assert_eq!(ledger.balance(&agent("parent")).unwrap(), &money("75"));
        assert_eq!(ledger.balance(&child).unwrap(), &money("25"));
        assert!(ledger.conservation_defect().is_zero());

        let mut small = Ledger::new();
        small.endow(agent("p"), money("1")).unwrap();
        let c = small.spawn(&agent("p"), &money("0.5")).unwrap();
        assert_eq!(small.balance(&c).unwrap(), &money("0.5"));
        assert_eq!(small.balance(&agent("p")).unwrap(), &money("0.5"));

        assert_eq!(
            small.spawn(&agent("p"), &money("1")),
            Err(LedgerError::FractionOutOfRange)
        );
        assert_eq!(
            small.spawn(&agent("gone"), &money("0.5")),
            Err(LedgerError::BankruptParent("gone".to_string()))
        );
    }

    #[test]
    fn brigade_worked_example() {
        let mut ledger = Ledger::new();
        for a in ["a", "b", "c"] {
            ledger.endow(agent(a), money("0")).unwrap();
        }
        let chain = vec![agent("a"), agent("b"), agent("c")];
        ledger
            .brigade_distribute(&chain, money("100"), &money("0.5"))
            .unwrap();
        assert_eq!(ledger.balance(&agent("c")).unwrap(), &money("50"));
        assert_eq!(ledger.balance(&agent("b")).unwrap(), &money("25"));
        assert_eq!(ledger.balance(&agent("a")).unwrap(), &money("25"));
        assert!(ledger.conservation_defect().is_zero());
    }

    #[test]
    fn brigade_singleton_and_small_gamma() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("only"), money("0")).unwrap();
        ledger
            .brigade_distribute(&[agent("only")], money("100"), &money("0.5"))
            .unwrap();
        assert_eq!(ledger.balance(&agent("only")).unwrap(), &money("100"));

        let mut ledger = Ledger::new();
        for a in ["x", "y"] {
            ledger.endow(agent(a), money("0")).unwrap();
        }
        ledger
            .brigade_distribute(&[agent("x"), agent("y")], money("100"), &money("0.001"))
            .unwrap();
        // near-zero gamma: the tail keeps almost everything
        assert_eq!(ledger.balance(&agent("y")).unwrap(), &money("99.9"));
        assert_eq!(ledger.balance(&agent("x")).unwrap(), &money("0.1"));
    }

    #[test]
    fn brigade_net_gains_sum_exactly_for_long_chains() {
        for gamma in ["0.1", "0.5", "0.9"] {
            for len in [1usize, 2, 7, 20] {
                let mut ledger = Ledger::new();
                let chain: Vec<AgentId> =
                    (0..len).map(|i| agent(&format!("k{i}"))).collect();
                for a in &chain {
                    ledger.endow(a.clone(), money("3")).unwrap();
                }
                let before: Vec<Money> = chain
                    .iter()
                    .map(|a| ledger.balance(a).unwrap().clone())
                    .collect();
                ledger
                    .brigade_distribute(&chain, money("97"), &money(gamma))
                    .unwrap();
                let mut gains = Money::zero();
                for (a, b) in chain.iter().zip(before) {
                    gains += &(ledger.balance(a).unwrap() - &b);
                }
                assert_eq!(gains, money("97"), "gamma {gamma} len {len}");
                assert!(ledger.conservation_defect().is_zero());
                assert!(!ledger.any_negative_balance());
            }
        }
    }

    #[test]
    fn contract_happy_path_moves_exactly_price() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("m"), money("50")).unwrap();
        ledger.endow(agent("n"), money("0")).unwrap();
        let mut c = Contract::propose(1, agent("m"), agent("n"), "answer questions", money("20"));
        let verdict = accept_contract(&mut c, &DefaultAuthority).unwrap();
        assert_eq!(verdict, ContractVerdict::Valid);
        assert_eq!(c.status, ContractStatus::Accepted);
        deliver(&mut c).unwrap();
        settle(&mut ledger, &mut c).unwrap();
        assert_eq!(c.status, ContractStatus::Settled);
        assert_eq!(ledger.balance(&agent("m")).unwrap(), &money("30"));
        assert_eq!(ledger.balance(&agent("n")).unwrap(), &money("20"));
    }

    #[test]
    fn settle_before_deliver_is_illegal() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("m"), money("50")).unwrap();
        ledger.endow(agent("n"), money("0")).unwrap();
        let mut c = Contract::propose(1, agent("m"), agent("n"), "svc", money("20"));
        let err = settle(&mut ledger, &mut c).unwrap_err();
        assert!(matches!(err, ContractError::IllegalTransition { .. }));
    }

    #[test]
    fn settle_without_funds_disputes_and_moves_nothing() {
        let mut ledger = Ledger::new();
        ledger.endow(agent("m"), money("5")).unwrap();
        ledger.endow(agent("n"), money("0")).unwrap();
        let mut c = Contract::propose(1, agent("m"), agent("n"), "svc", money("20"));
        accept_contract(&mut c, &DefaultAuthority).unwrap();
        deliver(&mut c).unwrap();
        settle(&mut ledger, &mut c).unwrap();
        assert_eq!(c.status, ContractStatus::Disputed);
        assert_eq!(ledger.balance(&agent("m")).unwrap(), &money("5"));
        assert_eq!(ledger.balance(&agent("n")).unwrap(), &money("0"));
    }

    #[test]
    fn empty_service_is_invalid() {
        let mut c = Contract::propose(1, agent("m"), agent("n"), "", money("20"));
        let verdict = accept_contract(&mut c, &DefaultAuthority).unwrap();
        assert_eq!(verdict, ContractVerdict::Invalid("no consideration".to_string()));
        assert_eq!(c.status, ContractStatus::Rejected);
    }

    #[test]
    fn authority_refusal_keeps_contract_proposed() {
        let refusing = crate::backend::ScriptedBackend::new(
            crate::backend::ScriptedBehavior::with_default("Sorry, I am an AI language model."),
        );
        let mut c = Contract::propose(1, agent("m"), agent("n"), "svc", money("20"));
        let verdict = accept_contract(&mut c, &refusing).unwrap();
        assert!(matches!(verdict, ContractVerdict::Unavailable(_)));
        assert_eq!(c.status, ContractStatus::Proposed);
    }

    #[test]
    fn state_machine_rejects_every_undeclared_transition() {
        use ContractStatus::*;
        let all = [Proposed, Accepted, Delivered, Settled, Rejected, Disputed];
        for from in all {
            let make = || {
                let mut c =
                    Contract::propose(1, agent("m"), agent("n"), "svc", money("1"));
                c.status = from;
                c
            };
            // accept: only from Proposed
            {
                let mut c = make();
                let ok = accept_contract(&mut c, &DefaultAuthority).is_ok();
                assert_eq!(ok, from == Proposed, "accept from {from:?}");
            }
            // reject: only from Proposed
            {
                let mut c = make();
                assert_eq!(reject_contract(&mut c).is_ok(), from == Proposed);
            }
            // deliver: only from Accepted
            {
                let mut c = make();
                assert_eq!(deliver(&mut c).is_ok(), from == Accepted);
            }
            // settle: only from Delivered
            {
                let mut ledger = Ledger::new();
                ledger.endow(agent("m"), money("10")).unwrap();
                ledger.endow(agent("n"), money("0")).unwrap();
                let mut c = make();
                assert_eq!(settle(&mut ledger, &mut c).is_ok(), from == Delivered);
            }
            // dispute: from anywhere
            {
                let mut c = make();
                dispute(&mut c);
                assert_eq!(c.status, Disputed);
            }
        }
    }

    #[test]
    fn journal_replay_reproduces_balances() {
        let cfg = SimConfig::default();
        let outcome = run_simulation(&cfg, 500, 42);
        let (accounts, treasury) = replay_journal(outcome.ledger.records()).unwrap();
        assert_eq!(&accounts, outcome.ledger.accounts());
        assert_eq!(&treasury, outcome.ledger.treasury());
    }

    #[test]
    fn zero_step_simulation_leaves_endowments() {
        let cfg = SimConfig::default();
        let outcome = run_simulation(&cfg, 0, 99);
        assert_eq!(outcome.ledger.accounts().len(), cfg.initial_agents);
        assert!(outcome
            .ledger
            .accounts()
            .values()
            .all(|b| b == &cfg.endowment));
        assert!(outcome.ledger.treasury().is_zero());
    }

    #[test]
    fn simulation_conserves_over_many_steps() {
        let cfg = SimConfig::default();
        let outcome = run_simulation(&cfg, 2_000, 7);
        assert!(outcome.ledger.conservation_defect().is_zero());
        assert!(!outcome.ledger.any_negative_balance());
    }

    #[test]
    fn crushing_rent_bankrupts_everyone_on_schedule() {
        // endowment 100, rent 40: tick 1 leaves 60, tick 2 leaves 20,
        // tick 3 is short — everyone is removed on tick 3
        let mut ledger = Ledger::new();
        for i in 0..4 {
            ledger
                .endow(agent(&format!("a{i}")), money("100"))
                .unwrap();
        }
        let cfg = EconomyConfig {
            rent_per_tick: money("40"),
            tax_rate: money("0"),
            spawn_fraction: money("0.5"),
            brigade_gamma: money("0.5"),
        };
        for tick in 1..=2 {
            assert!(ledger.tick_economy(&cfg).is_empty(), "tick {tick}");
        }
        let removed = ledger.tick_economy(&cfg);
        assert_eq!(removed.len(), 4);
        assert!(ledger.accounts().is_empty());
        assert_eq!(ledger.treasury(), &money("400"));
        assert!(ledger.conservation_defect().is_zero());
    }
}
