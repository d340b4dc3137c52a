use rand::seq::SliceRandom;
use rand::Rng as _;

use super::Dag;
use crate::error::{param, Result};
use crate::rng::rng_from_seed;

/// Erdős–Rényi DAG: every unordered pair is an edge with probability
/// `expected_degree / (p - 1)`, oriented from the earlier to the later node
/// of a uniformly random permutation. Weights are left unset.
pub fn generate_er_dag(p: usize, expected_degree: f64, rng_seed: u64) -> Result<Dag> {
    if p < 2 {
        return Err(param(format!("p must be at least 2, got {p}")));
    }
    if !(expected_degree > 0.0 && expected_degree <= (p - 1) as f64) {
        return Err(param(format!(
            "expected degree must lie in (0, {}], got {expected_degree}",
            p - 1
        )));
    }
    let prob = expected_degree / (p - 1) as f64;
    let mut rng = rng_from_seed(rng_seed);
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut edges = Vec::new();
    for a in 0..p {
        for b in a + 1..p {
            if rng.random::<f64>() < prob {
                edges.push((order[a], order[b]));
            }
        }
    }
    Dag::with_order(p, edges, order)
}

/// Barabási–Albert DAG with `m = expected_degree / 2` edges per arriving node.
///
/// Starts from a star on nodes `0..=m` centred at node 0; each later node
/// attaches to `m` distinct existing nodes drawn with probability proportional
/// to their current degree. Edges point from the earlier node to the newcomer,
/// so node index order is a causal order.
pub fn generate_powerlaw_dag(p: usize, expected_degree: f64, rng_seed: u64) -> Result<Dag> {
    if p < 2 {
        return Err(param(format!("p must be at least 2, got {p}")));
    }
    if !(expected_degree >= 2.0 && expected_degree.fract() == 0.0 && (expected_degree as u64).is_multiple_of(2))
    {
        return Err(param(format!(
            "power-law expected degree must be an even integer >= 2, got {expected_degree}"
        )));
    }
    let m = (expected_degree / 2.0) as usize;
    if m >= p {
        return Err(param(format!("attachment count m = {m} must be below p = {p}")));
    }
    let mut rng = rng_from_seed(rng_seed);
    let mut edges = Vec::new();
    // Each endpoint occurrence gives one ticket, so sampling a ticket is
    // sampling proportionally to degree.
    let mut tickets: Vec<usize> = Vec::new();
    for leaf in 1..=m {
        edges.push((0, leaf));
        tickets.push(0);
        tickets.push(leaf);
    }
    let mut targets: Vec<usize> = Vec::with_capacity(m);
    for new in m + 1..p {
        targets.clear();
        while targets.len() < m {
            let t = tickets[rng.random_range(0..tickets.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        targets.sort_unstable();
        for &t in &targets {
            edges.push((t, new));
            tickets.push(t);
            tickets.push(new);
        }
    }
    Dag::with_order(p, edges, (0..p).collect())
}


/// Random graph families used by the simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFamily {
    Er,
    Powerlaw,
}

impl GraphFamily {
    pub fn generate(self, p: usize, expected_degree: f64, rng_seed: u64) -> Result<Dag> {
        match self {
            GraphFamily::Er => generate_er_dag(p, expected_degree, rng_seed),
            GraphFamily::Powerlaw => generate_powerlaw_dag(p, expected_degree, rng_seed),
        }
    }
}

impl std::fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphFamily::Er => "er",
            GraphFamily::Powerlaw => "powerlaw",
        })
    }
}

impl std::str::FromStr for GraphFamily {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "er" | "erdos-renyi" => Ok(Self::Er),
            "powerlaw" | "power-law" | "pl" => Ok(Self::Powerlaw),
            other => Err(param(format!("unknown graph family '{other}'"))),
        }
    }
}
