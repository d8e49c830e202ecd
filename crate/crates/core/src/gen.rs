//! Random small theories for property testing.
//!
//! Theories are emitted as source text (so the parser is exercised too)
//! and are valid by construction: probabilities come from exact decimal
//! menus summing to 1, rule bodies only reference earlier-declared atoms,
//! sensors derive exactly one reading per world, utility rules partition
//! the worlds via a randomized block tree, and a second decision always
//! observes everything the first one did plus the first decision itself.
//! Drawing retries until the theory fits the enumeration budget, so
//! brute-force oracles stay cheap.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Enumeration budget a generated theory must fit.
#[derive(Debug, Clone, Copy)]
pub struct GenBudget {
    pub max_worlds: u128,
    pub max_strategies: u128,
    /// Bound on worlds x strategies, the oracle's total work.
    pub max_product: u128,
    pub max_rules: usize,
}

impl Default for GenBudget {
    fn default() -> Self {
        GenBudget {
            max_worlds: 2_000,
            max_strategies: 20_000,
            max_product: 500_000,
            max_rules: 12,
        }
    }
}

const TWO_WAY_PROBS: &[[&str; 2]] =
    &[["0.5", "0.5"], ["0.3", "0.7"], ["0.25", "0.75"], ["0.2", "0.8"], ["0.1", "0.9"], ["0.4", "0.6"]];
const THREE_WAY_PROBS: &[[&str; 3]] = &[
    ["0.2", "0.3", "0.5"],
    ["0.25", "0.25", "0.5"],
    ["0.1", "0.4", "0.5"],
    ["0.2", "0.2", "0.6"],
    ["0.1", "0.2", "0.7"],
    ["0.3", "0.3", "0.4"],
];

struct Block {
    id: String,
    atoms: Vec<String>,
}

/// A generated theory, with the counts used for budgeting.
struct Draft {
    text: String,
    worlds: u128,
    strategy_bound: u128,
    rules: usize,
}

/// Generate the source text of a random small theory that fits the
/// default budget. Deterministic in the seed.
pub fn random_theory_text(seed: u64) -> String {
    random_theory_text_with(seed, GenBudget::default())
}

pub fn random_theory_text_with(seed: u64, budget: GenBudget) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let draft = draw(&mut rng);
        if draft.worlds <= budget.max_worlds
            && draft.strategy_bound <= budget.max_strategies
            && draft.worlds.saturating_mul(draft.strategy_bound) <= budget.max_product
            && draft.rules <= budget.max_rules
        {
            return draft.text;
        }
    }
}

fn draw(rng: &mut ChaCha8Rng) -> Draft {
    let mut text = String::new();
    let mut rules = 0usize;
    let mut worlds: u128 = 1;

    // Nature blocks.
    let n_nature = rng.gen_range(1..=3);
    let mut nature: Vec<Block> = Vec::new();
    for i in 0..n_nature {
        let arity = rng.gen_range(2..=3);
        let id = format!("n{}", i + 1);
        let atoms: Vec<String> = (0..arity).map(|v| format!("{id}({v})")).collect();
        let probs: Vec<&str> = if arity == 2 {
            TWO_WAY_PROBS.choose(rng).unwrap().to_vec()
        } else {
            THREE_WAY_PROBS.choose(rng).unwrap().to_vec()
        };
        let entries: Vec<String> =
            atoms.iter().zip(&probs).map(|(a, p)| format!("{a}: {p}")).collect();
        text.push_str(&format!("nature {id} {{ {} }}.\n", entries.join(", ")));
        worlds *= arity as u128;
        nature.push(Block { id, atoms });
    }

    // Sensors: observable blocks derived from one nature block, either an
    // exact reading or one flipped by a two-way noise block.
    let n_sensors = rng.gen_range(0..=2);
    let mut sensors: Vec<Block> = Vec::new();
    let mut sensor_rules = String::new();
    for i in 0..n_sensors {
        let id = format!("s{}", i + 1);
        let atoms: Vec<String> = (0..2).map(|v| format!("{id}({v})")).collect();
        text.push_str(&format!("observable {id} {{ {} }}.\n", atoms.join(", ")));
        let driver = nature.choose(rng).unwrap();
        let noise = nature
            .iter()
            .filter(|b| b.id != driver.id && b.atoms.len() == 2)
            .collect::<Vec<_>>()
            .choose(rng)
            .copied()
            .filter(|_| rng.gen_bool(0.5));
        // Intended reading per driver atom; both readings must be derivable
        // so an exact sensor needs the map onto {0, 1} to be surjective.
        let mut reading: Vec<usize> = (0..driver.atoms.len()).map(|_| rng.gen_range(0..2)).collect();
        if noise.is_none() && !reading.contains(&0) {
            reading[0] = 0;
        }
        if noise.is_none() && !reading.contains(&1) {
            reading[0] = 1;
        }
        for (di, &r) in reading.iter().enumerate() {
            match noise {
                None => {
                    sensor_rules
                        .push_str(&format!("{} <- {}.\n", atoms[r], driver.atoms[di]));
                    rules += 1;
                }
                Some(noise_block) => {
                    sensor_rules.push_str(&format!(
                        "{} <- {} & {}.\n",
                        atoms[r], driver.atoms[di], noise_block.atoms[0]
                    ));
                    sensor_rules.push_str(&format!(
                        "{} <- {} & {}.\n",
                        atoms[1 - r], driver.atoms[di], noise_block.atoms[1]
                    ));
                    rules += 2;
                }
            }
        }
        sensors.push(Block { id, atoms });
    }

    // Decisions. The second one re-observes everything the first saw,
    // plus the first decision itself.
    let n_decisions = rng.gen_range(1..=2);
    let mut decisions: Vec<Block> = Vec::new();
    let mut strategy_bound: u128 = 1;
    let mut observed_first: Vec<String> = Vec::new();
    for i in 0..n_decisions {
        let arity = rng.gen_range(2..=3);
        let id = format!("d{}", i + 1);
        let atoms: Vec<String> = (0..arity).map(|v| format!("{id}({v})")).collect();
        let mut observes: Vec<String> = if i == 0 {
            let mut obs = Vec::new();
            for b in nature.iter().chain(&sensors) {
                if rng.gen_bool(0.4) {
                    obs.push(b.id.clone());
                }
            }
            obs
        } else {
            let mut obs = observed_first.clone();
            obs.push(decisions[0].id.clone());
            for b in nature.iter().chain(&sensors) {
                if !obs.contains(&b.id) && rng.gen_bool(0.3) {
                    obs.push(b.id.clone());
                }
            }
            obs
        };
        if i == 0 {
            observed_first = observes.clone();
        }
        // Conservative bound: reachable states never exceed the product of
        // observed block sizes.
        let mut states: u128 = 1;
        for id in &observes {
            let size = nature
                .iter()
                .chain(&sensors)
                .chain(&decisions)
                .find(|b| b.id == *id)
                .unwrap()
                .atoms
                .len();
            states = states.saturating_mul(size as u128);
        }
        for _ in 0..states.min(64) {
            strategy_bound = strategy_bound.saturating_mul(arity as u128);
        }
        if states > 64 {
            strategy_bound = u128::MAX;
        }
        observes.sort();
        text.push_str(&format!(
            "decision {id} {{ {} }} observes {{ {} }}.\n",
            atoms.join(", "),
            observes.join(", ")
        ));
        worlds *= arity as u128;
        decisions.push(Block { id, atoms });
    }

    text.push_str(&sensor_rules);

    // Occasionally, auxiliary derived atoms over nature choices.
    let mut derived_pool: Vec<String> = Vec::new();
    for i in 0..rng.gen_range(0..=2) {
        let name = format!("p{}", i + 1);
        for _ in 0..rng.gen_range(1..=2) {
            let len = rng.gen_range(1..=2);
            let mut body: Vec<String> = Vec::new();
            for _ in 0..len {
                let pick = if !derived_pool.is_empty() && rng.gen_bool(0.3) {
                    derived_pool.choose(rng).unwrap().clone()
                } else {
                    let b = nature.choose(rng).unwrap();
                    b.atoms.choose(rng).unwrap().clone()
                };
                if !body.contains(&pick) {
                    body.push(pick);
                }
            }
            text.push_str(&format!("{name} <- {}.\n", body.join(" & ")));
            rules += 1;
        }
        derived_pool.push(name);
    }

    // Utility rules: a randomized decision tree over a few blocks, whose
    // leaves partition the worlds, so every world derives exactly one value.
    let mut branch_pool: Vec<&Block> =
        decisions.iter().chain(&nature).chain(&sensors).collect();
    // Bias toward branching on the last decision first.
    branch_pool.rotate_right(0);
    let keep = rng.gen_range(1..=branch_pool.len().min(3));
    let mut branch: Vec<&Block> = Vec::new();
    while branch.len() < keep {
        let pick = branch_pool.remove(rng.gen_range(0..branch_pool.len()));
        branch.push(pick);
    }
    let mut leaves: Vec<(Vec<String>, String)> = Vec::new();
    grow_tree(rng, &branch, Vec::new(), &mut leaves);
    for (path, value) in &leaves {
        if path.is_empty() {
            text.push_str(&format!("utility({value}).\n"));
        } else {
            text.push_str(&format!("utility({value}) <- {}.\n", path.join(" & ")));
        }
        rules += 1;
    }

    Draft { text, worlds, strategy_bound, rules }
}

fn grow_tree(
    rng: &mut ChaCha8Rng,
    blocks: &[&Block],
    path: Vec<String>,
    leaves: &mut Vec<(Vec<String>, String)>,
) {
    let stop = if path.is_empty() { rng.gen_bool(0.1) } else { rng.gen_bool(0.35) };
    if blocks.is_empty() || stop {
        let value = rng.gen_range(0..=20) as f64 * 0.5;
        leaves.push((path, crate::parse::fmt_number(value)));
        return;
    }
    let (first, rest) = blocks.split_first().unwrap();
    for atom in &first.atoms {
        let mut deeper = path.clone();
        deeper.push(atom.clone());
        grow_tree(rng, rest, deeper, leaves);
    }
}
