//! Ground truth by exhaustive enumeration.
//!
//! A strategy assigns, for every decision, one action per complete
//! observation state. This module enumerates all possible worlds once into
//! a table, evaluates strategies exactly against it, maximizes over every
//! strategy, and checks explanation sets (soundness, covering,
//! exclusivity) by brute force. It shares no algorithmic machinery with
//! the policy solver, so agreement between the two is meaningful evidence.

use crate::abduction::ExplanationSet;
use crate::engine::{self, eval_formula, least_model_of_choices, Formula};
use crate::model::{AtomId, BlockRef, Theory};
use std::collections::BTreeSet;
use std::collections::HashMap;
use std::fmt;

pub const DEFAULT_MAX_STRATEGIES: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    /// Enumeration would exceed the configured bound.
    TooLarge { what: &'static str, count: u128, bound: u128 },
    /// A world violated utility or observation discipline while building
    /// the table; the message carries the engine diagnosis.
    BadWorld(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::TooLarge { what, count, bound } => {
                write!(f, "{count} {what} exceed the bound of {bound}")
            }
            OracleError::BadWorld(msg) => write!(f, "world enumeration failed: {msg}"),
        }
    }
}

impl std::error::Error for OracleError {}

struct WorldRow {
    nature_prob: f64,
    utility: f64,
    /// Per decision: index into `WorldTable::states` for that decision.
    state: Vec<u32>,
    /// Per decision: position of the world's chosen atom within the block.
    action: Vec<u8>,
}

/// Every possible world, precomputed: its nature probability, utility,
/// and per-decision observation state.
pub struct WorldTable<'t> {
    theory: &'t Theory,
    /// Alternative indices of the decisions, in declaration order.
    decisions: Vec<usize>,
    /// Per decision: distinct observation states, in first-seen order;
    /// each state is the tuple of true atoms of the observed blocks.
    states: Vec<Vec<Vec<AtomId>>>,
    rows: Vec<WorldRow>,
}

impl<'t> WorldTable<'t> {
    pub fn build(theory: &'t Theory, max_worlds: u128) -> Result<Self, OracleError> {
        let count = theory.world_count();
        if count > max_worlds {
            return Err(OracleError::TooLarge { what: "worlds", count, bound: max_worlds });
        }
        let decisions: Vec<usize> = theory.decisions().map(|(i, _)| i).collect();
        let observed: Vec<Vec<BlockRef>> = decisions
            .iter()
            .map(|&d| theory.observed_blocks(d).map_err(|e| OracleError::BadWorld(e.to_string())))
            .collect::<Result<_, _>>()?;

        let mut states: Vec<Vec<Vec<AtomId>>> = vec![Vec::new(); decisions.len()];
        let mut state_index: Vec<HashMap<Vec<AtomId>, u32>> =
            vec![HashMap::new(); decisions.len()];
        let mut rows = Vec::with_capacity(count as usize);

        for selector in engine::enumerate_worlds(theory) {
            let chosen = selector.chosen_atoms(theory);
            let model = least_model_of_choices(theory, &chosen);
            let describe = || {
                let names: Vec<String> = chosen.iter().map(|&a| theory.atom_text(a)).collect();
                format!("{{{}}}", names.join(", "))
            };
            let utility = crate::engine::utility_of_model(theory, &model, describe)
                .map_err(|e| OracleError::BadWorld(e.to_string()))?;

            let mut nature_prob = 1.0;
            for (alt_idx, alt) in theory.alternatives().iter().enumerate() {
                if !alt.is_decision() {
                    let pos = selector.chosen_position(alt_idx) as usize;
                    if let crate::model::AlternativeKind::Nature { probs } = &alt.kind {
                        nature_prob *= probs[pos];
                    }
                }
            }

            let mut state = Vec::with_capacity(decisions.len());
            let mut action = Vec::with_capacity(decisions.len());
            for (di, &d) in decisions.iter().enumerate() {
                let mut key = Vec::with_capacity(observed[di].len());
                for &block in &observed[di] {
                    let true_atoms: Vec<AtomId> = theory
                        .block_atoms(block)
                        .iter()
                        .copied()
                        .filter(|a| model[a.index()])
                        .collect();
                    match true_atoms.as_slice() {
                        [one] => key.push(*one),
                        _ => {
                            return Err(OracleError::BadWorld(format!(
                                "block '{}' has {} true atoms in world {}",
                                theory.block_id(block),
                                true_atoms.len(),
                                describe()
                            )))
                        }
                    }
                }
                let idx = match state_index[di].get(&key) {
                    Some(&i) => i,
                    None => {
                        let i = states[di].len() as u32;
                        states[di].push(key.clone());
                        state_index[di].insert(key, i);
                        i
                    }
                };
                state.push(idx);
                action.push(selector.chosen_position(d) as u8);
            }
            rows.push(WorldRow { nature_prob, utility, state, action });
        }
        Ok(WorldTable { theory, decisions, states, rows })
    }

    pub fn theory(&self) -> &'t Theory {
        self.theory
    }

    pub fn world_count(&self) -> usize {
        self.rows.len()
    }

    /// Observation states reachable for the decision at `decision_slot`
    /// (slots follow declaration order of decisions).
    pub fn states(&self, decision_slot: usize) -> &[Vec<AtomId>] {
        &self.states[decision_slot]
    }

    pub fn decision_slots(&self) -> usize {
        self.decisions.len()
    }

    pub fn decision_alternative(&self, decision_slot: usize) -> usize {
        self.decisions[decision_slot]
    }

    /// Number of pure strategies, saturating at `u128::MAX`.
    pub fn strategy_count(&self) -> u128 {
        let mut total: u128 = 1;
        for (di, &d) in self.decisions.iter().enumerate() {
            let actions = self.theory.alternatives()[d].atoms.len() as u128;
            for _ in 0..self.states[di].len() {
                total = match total.checked_mul(actions) {
                    Some(t) => t,
                    None => return u128::MAX,
                };
            }
        }
        total
    }
}

/// A pure strategy: per decision slot, one action position per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    pub tables: Vec<Vec<u8>>,
}

impl Strategy {
    /// The strategy choosing action position `pos` everywhere.
    pub fn constant(table: &WorldTable, pos: &[u8]) -> Strategy {
        Strategy {
            tables: (0..table.decision_slots())
                .map(|di| vec![pos[di]; table.states(di).len()])
                .collect(),
        }
    }

    fn matches(&self, row: &WorldRow) -> bool {
        row.state
            .iter()
            .zip(&row.action)
            .enumerate()
            .all(|(di, (&s, &a))| self.tables[di][s as usize] == a)
    }

    /// Render as strategy-file lines: one line per observation state plus
    /// a default line per decision.
    pub fn render(&self, table: &WorldTable) -> String {
        let theory = table.theory();
        let mut out = String::new();
        for di in 0..table.decision_slots() {
            let alt = &theory.alternatives()[table.decision_alternative(di)];
            for (si, key) in table.states(di).iter().enumerate() {
                let obs: Vec<String> = key.iter().map(|&a| theory.atom_text(a)).collect();
                let action = theory.atom_text(alt.atoms[self.tables[di][si] as usize]);
                if obs.is_empty() {
                    out.push_str(&format!("{}: default -> {}\n", alt.id, action));
                } else {
                    out.push_str(&format!("{}: {} -> {}\n", alt.id, obs.join(", "), action));
                }
            }
            if !table.states(di).is_empty() && !table.states(di)[0].is_empty() {
                let action = theory.atom_text(alt.atoms[0]);
                out.push_str(&format!("{}: default -> {}\n", alt.id, action));
            }
        }
        out
    }
}

/// Exact expected utility of `sigma`: sum over worlds consistent with the
/// strategy of nature probability times utility.
pub fn expected_utility(table: &WorldTable, sigma: &Strategy) -> f64 {
    let mut total = 0.0;
    for row in &table.rows {
        if sigma.matches(row) {
            total += row.nature_prob * row.utility;
        }
    }
    total
}

/// Total probability mass of worlds consistent with the strategy; equals 1
/// for every strategy on a well-formed theory.
pub fn probability_mass(table: &WorldTable, sigma: &Strategy) -> f64 {
    let mut total = 0.0;
    for row in &table.rows {
        if sigma.matches(row) {
            total += row.nature_prob;
        }
    }
    total
}

/// Exhaustive maximization over all pure strategies. Ties keep the
/// lexicographically first strategy table.
pub fn optimal_strategy(
    table: &WorldTable,
    max_strategies: u128,
) -> Result<(Strategy, f64), OracleError> {
    let count = table.strategy_count();
    if count > max_strategies {
        return Err(OracleError::TooLarge {
            what: "strategies",
            count,
            bound: max_strategies,
        });
    }

    // Flatten the (decision, state) cells; enumerate action assignments in
    // lexicographic order with the last cell cycling fastest.
    let mut cell_actions: Vec<u8> = Vec::new();
    let mut cell_decision: Vec<usize> = Vec::new();
    for di in 0..table.decision_slots() {
        let actions =
            table.theory.alternatives()[table.decision_alternative(di)].atoms.len() as u8;
        for _ in 0..table.states(di).len() {
            cell_actions.push(actions);
            cell_decision.push(di);
        }
    }
    let mut current = Strategy {
        tables: (0..table.decision_slots())
            .map(|di| vec![0u8; table.states(di).len()])
            .collect(),
    };
    let mut offsets = Vec::new();
    {
        let mut off = 0;
        for di in 0..table.decision_slots() {
            offsets.push(off);
            off += table.states(di).len();
        }
    }

    let mut best = current.clone();
    let mut best_value = expected_utility(table, &current);
    'outer: loop {
        // Advance the odometer.
        let mut pos = cell_actions.len();
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            let di = cell_decision[pos];
            let si = pos - offsets[di];
            if current.tables[di][si] + 1 < cell_actions[pos] {
                current.tables[di][si] += 1;
                for later in pos + 1..cell_actions.len() {
                    let dl = cell_decision[later];
                    current.tables[dl][later - offsets[dl]] = 0;
                }
                break;
            }
        }
        let value = expected_utility(table, &current);
        if value > best_value {
            best_value = value;
            best = current.clone();
        }
    }
    Ok((best, best_value))
}

/// Outcome of checking an explanation set against exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// Worlds containing some member whose formula is nevertheless false.
    pub soundness_failures: Vec<String>,
    /// Worlds where the formula holds but no member applies.
    pub covering_failures: Vec<String>,
    /// Worlds where two distinct members apply at once (only checked when
    /// the set claims exclusivity).
    pub exclusivity_failures: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.soundness_failures.is_empty()
            && self.covering_failures.is_empty()
            && self.exclusivity_failures.is_empty()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return write!(f, "sound, covering, exclusive where claimed");
        }
        for w in &self.soundness_failures {
            writeln!(f, "not sound: formula false in {w}")?;
        }
        for w in &self.covering_failures {
            writeln!(f, "not covering: no member applies in {w}")?;
        }
        for w in &self.exclusivity_failures {
            writeln!(f, "not exclusive: several members apply in {w}")?;
        }
        Ok(())
    }
}

/// Check soundness, covering, and (when claimed) exclusivity of `k` as
/// explanations of `g`, by enumerating every world.
pub fn verify_explanations(
    theory: &Theory,
    g: &Formula,
    k: &ExplanationSet,
    max_worlds: u128,
) -> Result<VerifyReport, OracleError> {
    let count = theory.world_count();
    if count > max_worlds {
        return Err(OracleError::TooLarge { what: "worlds", count, bound: max_worlds });
    }
    let mut report = VerifyReport {
        soundness_failures: Vec::new(),
        covering_failures: Vec::new(),
        exclusivity_failures: Vec::new(),
    };
    for selector in engine::enumerate_worlds(theory) {
        let chosen: BTreeSet<AtomId> = selector.chosen_atoms(theory).into_iter().collect();
        let model = least_model_of_choices(
            theory,
            &chosen.iter().copied().collect::<Vec<_>>(),
        );
        let holds = eval_formula(theory, &model, g);
        let applying =
            k.members().iter().filter(|kappa| kappa.is_subset(&chosen)).count();
        let describe = || {
            let names: Vec<String> = chosen.iter().map(|&a| theory.atom_text(a)).collect();
            format!("{{{}}}", names.join(", "))
        };
        if applying > 0 && !holds {
            report.soundness_failures.push(describe());
        }
        if holds && applying == 0 {
            report.covering_failures.push(describe());
        }
        if k.exclusive() && applying > 1 {
            report.exclusivity_failures.push(describe());
        }
    }
    Ok(report)
}
