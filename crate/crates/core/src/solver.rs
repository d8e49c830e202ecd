//! Policy derivation that exploits rule structure instead of tabulating
//! every observation state.
//!
//! For the last undecided alternative the pipeline runs five stages:
//! observation explanations (alpha), initial pre-policies from the utility
//! rules, expansion until every tuple is observation full, conditional
//! expectation by explanation probabilities, and pruning of dominated
//! entries with value-guided splitting. The winning entries are refined
//! into exclusive, exhaustive rules that replace the decision, and the
//! procedure recurses on the remaining decisions. Regions whose utility
//! explanations mention no action atom are reported as indifferent: any
//! action is optimal there.
//!
//! Every nondeterministic "pick a tuple / pick a block" step resolves to
//! the lowest candidate in declaration order, so runs are reproducible.

use crate::abduction::{
    self, Abductor, AbductionError, CompositeChoice, ExplanationSet,
};
use crate::model::{AtomId, BlockRef, Rule, RuleHead, Theory};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Expected values within this distance count as ties.
pub const VALUE_TIE_TOLERANCE: f64 = 1e-12;
/// Groups whose condition probability falls below this are dropped.
pub const ZERO_PROBABILITY: f64 = 1e-15;

/// An observation condition: observed block (keyed by declaration
/// position) to the atom required true.
pub type Condition = BTreeMap<u32, AtomId>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveError {
    /// The decisions cannot be put in a total order compatible with their
    /// observations.
    NoTotalOrder(String),
    /// Nothing to optimize: the theory derives no utility at all.
    NoUtilityRules,
    /// A probability computation failed; on a validated theory this
    /// indicates a bug, so the message is preserved verbatim.
    Probability(String),
    /// A supplied strategy does not fit the theory.
    BadStrategy(String),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::NoTotalOrder(msg) => write!(f, "{msg}"),
            SolveError::NoUtilityRules => {
                write!(f, "theory has no utility rules; nothing to optimize")
            }
            SolveError::Probability(msg) => write!(f, "probability computation failed: {msg}"),
            SolveError::BadStrategy(msg) => write!(f, "bad strategy: {msg}"),
        }
    }
}

impl std::error::Error for SolveError {}

impl From<AbductionError> for SolveError {
    fn from(e: AbductionError) -> Self {
        SolveError::Probability(e.to_string())
    }
}

/// True iff the two sets mention disjoint sets of alternatives, making the
/// events they describe probabilistically independent.
pub fn autonomous(theory: &Theory, k1: &ExplanationSet, k2: &ExplanationSet) -> bool {
    k1.alternatives_mentioned(theory)
        .is_disjoint(&k2.alternatives_mentioned(theory))
}

/// One observation atom of an observed block, with exclusive explanations.
#[derive(Debug, Clone)]
pub struct AlphaEntry {
    pub observation: AtomId,
    pub explanations: ExplanationSet,
}

/// A partially conditioned statement: taking `action` when `condition`
/// holds yields `utility` in the worlds covered by `explanations`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrePolicy {
    pub action: AtomId,
    pub condition: Condition,
    pub explanations: ExplanationSet,
    pub utility: f64,
}

/// A candidate policy entry with its conditional expected value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedTuple {
    pub action: AtomId,
    pub condition: Condition,
    pub value: f64,
}

/// The solved policy of one decision.
#[derive(Debug, Clone)]
pub struct CompactPolicy {
    pub decision: String,
    pub entries: Vec<ExpectedTuple>,
    /// Utility explanations mentioning no action atom: any action is
    /// optimal in these regions.
    pub indifferent: Vec<(CompositeChoice, f64)>,
    pub default_action: AtomId,
    /// Exclusive, exhaustive condition-to-action rules realizing the
    /// entries (first match wins) with the default filling the gaps.
    pub rules: Vec<Rule>,
}

/// Work measurements of one stage, kept around because the whole point of
/// the pipeline is doing less work than per-state tabulation.
#[derive(Debug, Clone)]
pub struct StageStats {
    pub decision: String,
    pub initial_tuples: usize,
    pub expanded_tuples: usize,
    /// (action, condition) groups entering the pruning stage; compare with
    /// actions x observation states for the naive tabulation cost.
    pub expectation_groups: usize,
    pub entries: usize,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Policies in solving order: the last decision first.
    pub policies: Vec<CompactPolicy>,
    pub value: f64,
    pub stats: Vec<StageStats>,
    pub warnings: Vec<String>,
}

fn float_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn cond_key(c: &Condition) -> Vec<(u32, AtomId)> {
    c.iter().map(|(&p, &a)| (p, a)).collect()
}

fn prepolicy_key(p: &PrePolicy) -> (AtomId, Vec<(u32, AtomId)>, u64, Vec<CompositeChoice>) {
    (
        p.action,
        cond_key(&p.condition),
        float_key(p.utility),
        p.explanations.members().iter().cloned().collect(),
    )
}

fn tuple_key(t: &ExpectedTuple) -> (Vec<(u32, AtomId)>, AtomId, u64) {
    (cond_key(&t.condition), t.action, float_key(t.value))
}

/// Two conditions agree wherever they share a block.
fn conditions_consistent(a: &Condition, b: &Condition) -> bool {
    a.iter().all(|(p, atom)| b.get(p).map_or(true, |other| other == atom))
}

fn condition_subset(a: &Condition, b: &Condition) -> bool {
    a.iter().all(|(p, atom)| b.get(p) == Some(atom))
}

fn leq(a: f64, b: f64) -> bool {
    a <= b + VALUE_TIE_TOLERANCE
}

/// The solving context for one decision of one theory.
pub struct Stage<'t> {
    theory: &'t Theory,
    decision: usize,
    observed: Vec<BlockRef>,
    alpha: BTreeMap<u32, Vec<AlphaEntry>>,
    abductor: Abductor<'t>,
}

impl<'t> Stage<'t> {
    /// Prepare the stage for `decision` (an alternative index): computes
    /// and stores the observation explanations once.
    pub fn new(theory: &'t Theory, decision: usize) -> Result<Stage<'t>, SolveError> {
        let observed = theory
            .observed_blocks(decision)
            .map_err(|e| SolveError::NoTotalOrder(e.to_string()))?;
        let mut abductor = Abductor::new(theory);
        let mut alpha = BTreeMap::new();
        for &block in &observed {
            let entries: Vec<AlphaEntry> = theory
                .block_atoms(block)
                .iter()
                .map(|&o| AlphaEntry {
                    observation: o,
                    explanations: abduction::make_exclusive(theory, &abductor.atom(o)),
                })
                .collect();
            alpha.insert(theory.block_pos(block), entries);
        }
        Ok(Stage { theory, decision, observed, alpha, abductor })
    }

    pub fn theory(&self) -> &'t Theory {
        self.theory
    }

    pub fn decision_atoms(&self) -> &[AtomId] {
        &self.theory.alternatives()[self.decision].atoms
    }

    pub fn observed_blocks(&self) -> &[BlockRef] {
        &self.observed
    }

    /// Observation explanations per observed block (keyed by the block's
    /// declaration position).
    pub fn alpha(&self) -> &BTreeMap<u32, Vec<AlphaEntry>> {
        &self.alpha
    }

    /// Initial pre-policies: one tuple per utility value and action whose
    /// exclusive explanations mention that action; explanations mentioning
    /// no action atom become indifferent regions.
    pub fn initial(&mut self) -> (Vec<PrePolicy>, Vec<(CompositeChoice, f64)>) {
        let mut tuples = Vec::new();
        let mut indifferent = Vec::new();
        let action_atoms: BTreeSet<AtomId> =
            self.decision_atoms().iter().copied().collect();
        for u in self.theory.utility_values() {
            let k = abduction::make_exclusive(self.theory, &self.abductor.utility(u));
            let mut by_action: BTreeMap<AtomId, BTreeSet<CompositeChoice>> = BTreeMap::new();
            for kappa in k.members() {
                match kappa.iter().find(|a| action_atoms.contains(a)) {
                    Some(&action) => {
                        by_action.entry(action).or_default().insert(kappa.clone());
                    }
                    None => indifferent.push((kappa.clone(), u)),
                }
            }
            for (action, members) in by_action {
                tuples.push(PrePolicy {
                    action,
                    condition: Condition::new(),
                    explanations: ExplanationSet::new(self.theory, members),
                    utility: u,
                });
            }
        }
        tuples.sort_by(|a, b| prepolicy_key(a).cmp(&prepolicy_key(b)));
        (tuples, indifferent)
    }

    /// Whether every observed block either appears in the tuple's
    /// condition or has all its observation explanations autonomous from
    /// the tuple's explanations.
    pub fn observation_full(&self, p: &PrePolicy) -> bool {
        self.alpha.iter().all(|(pos, entries)| {
            p.condition.contains_key(pos)
                || entries
                    .iter()
                    .all(|e| autonomous(self.theory, &e.explanations, &p.explanations))
        })
    }

    /// The refinements of `p` across all observation atoms of the block at
    /// `pos`: condition extended, explanations combined, empty results
    /// dropped.
    fn split_on_block(&self, p: &PrePolicy, pos: u32) -> Vec<PrePolicy> {
        self.alpha[&pos]
            .iter()
            .filter_map(|entry| {
                let k =
                    abduction::combine(self.theory, &p.explanations, &entry.explanations);
                if k.is_empty() {
                    return None;
                }
                let mut condition = p.condition.clone();
                condition.insert(pos, entry.observation);
                Some(PrePolicy {
                    action: p.action,
                    condition,
                    explanations: k,
                    utility: p.utility,
                })
            })
            .collect()
    }

    /// Expand tuples until all are observation full: repeatedly take the
    /// first tuple and the first observed block it has not conditioned on
    /// whose explanations are not autonomous, and refine across that block.
    pub fn expand(&self, tuples: Vec<PrePolicy>) -> Vec<PrePolicy> {
        let mut work = tuples;
        work.sort_by(|a, b| prepolicy_key(a).cmp(&prepolicy_key(b)));
        loop {
            let mut replacement = None;
            'scan: for (i, p) in work.iter().enumerate() {
                for (&pos, entries) in &self.alpha {
                    if p.condition.contains_key(&pos) {
                        continue;
                    }
                    let relevant = entries.iter().any(|e| {
                        !autonomous(self.theory, &e.explanations, &p.explanations)
                    });
                    if relevant {
                        replacement = Some((i, self.split_on_block(p, pos)));
                        break 'scan;
                    }
                }
            }
            match replacement {
                Some((i, pieces)) => {
                    work.remove(i);
                    work.extend(pieces);
                    work.sort_by(|a, b| prepolicy_key(a).cmp(&prepolicy_key(b)));
                }
                None => return work,
            }
        }
    }

    /// Align same-action conditions by splitting, then group by (action,
    /// condition) and compute each group's conditional expected value.
    /// Returns the tuples, the group count entering pruning, and warnings
    /// for dropped zero-probability groups.
    pub fn expectation(
        &self,
        tuples: Vec<PrePolicy>,
    ) -> Result<(Vec<ExpectedTuple>, usize, Vec<String>), SolveError> {
        let mut work = tuples;
        work.sort_by(|a, b| prepolicy_key(a).cmp(&prepolicy_key(b)));
        // Alignment: two tuples for one action whose conditions are
        // consistent but not nested describe overlapping regions; refine
        // the second until conditions per action are equal or inconsistent.
        loop {
            let mut refinement = None;
            'scan: for i in 0..work.len() {
                for j in 0..work.len() {
                    if i == j || work[i].action != work[j].action {
                        continue;
                    }
                    if !conditions_consistent(&work[i].condition, &work[j].condition)
                        || condition_subset(&work[i].condition, &work[j].condition)
                    {
                        continue;
                    }
                    // Some block of tuple i is missing from tuple j; split
                    // tuple j on the earliest such block.
                    let &pos = work[i]
                        .condition
                        .keys()
                        .find(|p| !work[j].condition.contains_key(*p))
                        .expect("non-subset condition has an extra block");
                    refinement = Some((j, self.split_on_block(&work[j], pos)));
                    break 'scan;
                }
            }
            match refinement {
                Some((j, pieces)) => {
                    work.remove(j);
                    work.extend(pieces);
                    work.sort_by(|a, b| prepolicy_key(a).cmp(&prepolicy_key(b)));
                }
                None => break,
            }
        }

        // Group by (action, condition); members carry distinct utility
        // values whose explanation sets are pairwise incompatible, so
        // probabilities add.
        let mut groups: BTreeMap<(AtomId, Vec<(u32, AtomId)>), Vec<&PrePolicy>> =
            BTreeMap::new();
        for p in &work {
            groups.entry((p.action, cond_key(&p.condition))).or_default().push(p);
        }
        let group_count = groups.len();
        let mut out = Vec::new();
        let mut warnings = Vec::new();
        for ((action, cond), members) in groups {
            let mut conditioning: BTreeSet<AtomId> =
                cond.iter().map(|&(_, a)| a).collect();
            conditioning.insert(action);
            let mut numerator = 0.0;
            let mut denominator = 0.0;
            for p in members {
                let mass =
                    abduction::prob_set(self.theory, &p.explanations, &conditioning)?;
                numerator += mass * p.utility;
                denominator += mass;
            }
            let condition: Condition = cond.iter().copied().collect();
            if denominator < ZERO_PROBABILITY {
                warnings.push(format!(
                    "dropped zero-probability condition {} for action {}",
                    render_condition(self.theory, &condition),
                    self.theory.atom_text(action)
                ));
                continue;
            }
            out.push(ExpectedTuple { action, condition, value: numerator / denominator });
        }
        out.sort_by(|a, b| tuple_key(a).cmp(&tuple_key(b)));
        Ok((out, group_count, warnings))
    }

    /// Prune dominated tuples and split overlapping regions whose actions
    /// disagree in value, until the surviving entries are the optimal
    /// compact policy.
    pub fn optimize(&self, tuples: Vec<ExpectedTuple>) -> Vec<ExpectedTuple> {
        let mut work = tuples;
        work.sort_by(|a, b| tuple_key(a).cmp(&tuple_key(b)));
        loop {
            // Dominance: a tuple whose condition is at least as strong as
            // another's yet pays no more is never chosen. Exact ties keep
            // the earlier tuple.
            loop {
                let removable = (0..work.len()).find(|&i| {
                    (0..work.len()).any(|j| {
                        j != i
                            && condition_subset(&work[j].condition, &work[i].condition)
                            && leq(work[i].value, work[j].value)
                            && (!(work[i].condition == work[j].condition
                                && leq(work[j].value, work[i].value))
                                || j < i)
                    })
                });
                match removable {
                    Some(i) => {
                        work.remove(i);
                    }
                    None => break,
                }
            }
            // Split: overlapping conditions with different actions and a
            // real value gap get the lower-valued tuple refined on a block
            // only the better one mentions.
            let mut split = None;
            'scan: for i in 0..work.len() {
                for j in 0..work.len() {
                    if i == j || work[i].action == work[j].action {
                        continue;
                    }
                    if !conditions_consistent(&work[i].condition, &work[j].condition) {
                        continue;
                    }
                    if work[i].value < work[j].value - VALUE_TIE_TOLERANCE {
                        let &pos = work[j]
                            .condition
                            .keys()
                            .find(|p| !work[i].condition.contains_key(*p))
                            .expect("dominance left a block the better tuple conditions on");
                        split = Some((i, pos));
                        break 'scan;
                    }
                }
            }
            match split {
                Some((i, pos)) => {
                    let base = work.remove(i);
                    let block = self
                        .observed
                        .iter()
                        .copied()
                        .find(|&b| self.theory.block_pos(b) == pos)
                        .expect("condition blocks are observed blocks");
                    for &atom in self.theory.block_atoms(block) {
                        let mut condition = base.condition.clone();
                        condition.insert(pos, atom);
                        work.push(ExpectedTuple {
                            action: base.action,
                            condition,
                            value: base.value,
                        });
                    }
                    work.sort_by(|a, b| tuple_key(a).cmp(&tuple_key(b)));
                }
                None => return work,
            }
        }
    }

    /// Run the whole pipeline for this decision.
    pub fn run(&mut self) -> Result<(CompactPolicy, StageStats, Vec<String>), SolveError> {
        let (initial, indifferent) = self.initial();
        let initial_count = initial.len();
        let expanded = self.expand(initial);
        let expanded_count = expanded.len();
        let (tuples, groups, warnings) = self.expectation(expanded)?;
        let entries = self.optimize(tuples);

        let default_action = entries
            .iter()
            .find(|t| t.condition.is_empty())
            .map(|t| t.action)
            .unwrap_or(self.decision_atoms()[0]);
        let listed: Vec<(Condition, AtomId)> = entries
            .iter()
            .filter(|t| !t.condition.is_empty())
            .map(|t| (t.condition.clone(), t.action))
            .collect();
        let rules = refine_to_rules(
            self.theory,
            self.decision_atoms(),
            &self.observed,
            &listed,
            default_action,
        )
        .map_err(SolveError::BadStrategy)?;

        let decision_id = self.theory.alternatives()[self.decision].id.clone();
        let stats = StageStats {
            decision: decision_id.clone(),
            initial_tuples: initial_count,
            expanded_tuples: expanded_count,
            expectation_groups: groups,
            entries: entries.len(),
        };
        Ok((
            CompactPolicy {
                decision: decision_id,
                entries,
                indifferent,
                default_action,
                rules,
            },
            stats,
            warnings,
        ))
    }
}

/// Render a condition as `{atom, atom}` in observed-block order.
pub fn render_condition(theory: &Theory, c: &Condition) -> String {
    let names: Vec<String> = c.values().map(|&a| theory.atom_text(a)).collect();
    format!("{{{}}}", names.join(", "))
}

/// Turn ordered (condition, action) entries plus a default action into an
/// exclusive and exhaustive set of defining rules for the decision, by
/// carving observation-state regions out of a worklist (first entry wins
/// overlaps). Errors are reported as strings naming the offending entry.
pub fn refine_to_rules(
    theory: &Theory,
    decision_atoms: &[AtomId],
    observed: &[BlockRef],
    entries: &[(Condition, AtomId)],
    default_action: AtomId,
) -> Result<Vec<Rule>, String> {
    let block_at: BTreeMap<u32, BlockRef> =
        observed.iter().map(|&b| (theory.block_pos(b), b)).collect();
    let decision_set: BTreeSet<AtomId> = decision_atoms.iter().copied().collect();
    if !decision_set.contains(&default_action) {
        return Err(format!(
            "default action '{}' is not an atom of the decision",
            theory.atom_text(default_action)
        ));
    }

    let mut remaining: BTreeSet<CompositeChoice> = BTreeSet::new();
    remaining.insert(CompositeChoice::new());
    let mut rules = Vec::new();
    let mut push = |action: AtomId, region: &CompositeChoice| {
        rules.push(Rule {
            head: RuleHead::Derived(action),
            body: region.iter().copied().collect(),
        });
    };

    for (condition, action) in entries {
        if !decision_set.contains(action) {
            return Err(format!(
                "action '{}' is not an atom of the decision",
                theory.atom_text(*action)
            ));
        }
        for pos in condition.keys() {
            if !block_at.contains_key(pos) {
                return Err(format!(
                    "condition {} mentions a block the decision does not observe",
                    render_condition(theory, condition)
                ));
            }
        }
        let mut still: BTreeSet<CompositeChoice> = BTreeSet::new();
        let mut matched: Vec<CompositeChoice> = Vec::new();
        for region in remaining {
            let mut pieces = vec![region];
            for (&pos, &want) in condition {
                let block_atoms = theory.block_atoms(block_at[&pos]);
                let mut next = Vec::new();
                for piece in pieces {
                    match piece.iter().copied().find(|a| block_atoms.contains(a)) {
                        Some(present) => {
                            if present == want {
                                next.push(piece);
                            } else {
                                still.insert(piece);
                            }
                        }
                        None => {
                            for &c in block_atoms {
                                let mut refined = piece.clone();
                                refined.insert(c);
                                if c == want {
                                    next.push(refined);
                                } else {
                                    still.insert(refined);
                                }
                            }
                        }
                    }
                }
                pieces = next;
            }
            matched.extend(pieces);
        }
        matched.sort();
        for region in &matched {
            push(*action, region);
        }
        remaining = still;
    }
    for region in &remaining {
        push(default_action, region);
    }
    Ok(rules)
}

/// Expected utility of a theory with no remaining decisions: the sum over
/// utility values of value times the probability of its exclusive
/// explanations. Summation follows the order utility values first appear
/// in the rule base, so results are reproducible bit for bit.
pub fn expected_value(theory: &Theory) -> Result<f64, SolveError> {
    if theory.utility_rule_indices().is_empty() {
        return Err(SolveError::NoUtilityRules);
    }
    let mut abductor = Abductor::new(theory);
    let empty = BTreeSet::new();
    let mut total = 0.0;
    for u in theory.utility_values() {
        let k = abduction::make_exclusive(theory, &abductor.utility(u));
        total += u * abduction::prob_set(theory, &k, &empty)?;
    }
    Ok(total)
}

/// Solve every decision from last to first, substituting each winning
/// policy into the rule base before moving on, and report the value of
/// the fully substituted theory.
pub fn solve(theory: &Theory) -> Result<SolveResult, SolveError> {
    if theory.utility_rule_indices().is_empty() {
        return Err(SolveError::NoUtilityRules);
    }
    let order = theory.decision_order().map_err(|e| SolveError::NoTotalOrder(e.to_string()))?;
    let ids: Vec<String> = order
        .iter()
        .rev()
        .map(|&i| theory.alternatives()[i].id.clone())
        .collect();

    let mut current = theory.clone();
    let mut policies = Vec::new();
    let mut stats = Vec::new();
    let mut warnings = Vec::new();
    for id in &ids {
        let decision = current
            .alternatives()
            .iter()
            .position(|a| a.id == *id)
            .expect("decision ids persist across substitution");
        let mut stage = Stage::new(&current, decision)?;
        let (policy, stage_stats, stage_warnings) = stage.run()?;
        let rules = policy.rules.clone();
        policies.push(policy);
        stats.push(stage_stats);
        warnings.extend(stage_warnings);
        current = current.substitute_decision(decision, rules);
    }
    let value = expected_value(&current)?;
    Ok(SolveResult { policies, value, stats, warnings })
}

/// A strategy for one decision, as ordered entries plus a default.
#[derive(Debug, Clone)]
pub struct DecisionStrategy {
    pub decision: String,
    pub entries: Vec<(Condition, AtomId)>,
    pub default_action: AtomId,
}

/// Expected utility of explicitly given strategies: substitutes them in
/// reverse decision order through the same refinement used by `solve`, so
/// evaluating a strategy emitted by `solve` reproduces its value exactly.
pub fn evaluate(theory: &Theory, strategies: &[DecisionStrategy]) -> Result<f64, SolveError> {
    if theory.utility_rule_indices().is_empty() {
        return Err(SolveError::NoUtilityRules);
    }
    let order = theory.decision_order().map_err(|e| SolveError::NoTotalOrder(e.to_string()))?;
    let mut current = theory.clone();
    for &idx in order.iter().rev() {
        let id = theory.alternatives()[idx].id.clone();
        let strategy = strategies
            .iter()
            .find(|s| s.decision == id)
            .ok_or_else(|| SolveError::BadStrategy(format!("no strategy for decision '{id}'")))?;
        let decision = current
            .alternatives()
            .iter()
            .position(|a| a.id == id)
            .expect("decision ids persist across substitution");
        let observed = current
            .observed_blocks(decision)
            .map_err(|e| SolveError::NoTotalOrder(e.to_string()))?;
        let atoms = current.alternatives()[decision].atoms.clone();
        let rules = refine_to_rules(
            &current,
            &atoms,
            &observed,
            &strategy.entries,
            strategy.default_action,
        )
        .map_err(SolveError::BadStrategy)?;
        current = current.substitute_decision(decision, rules);
    }
    expected_value(&current)
}
