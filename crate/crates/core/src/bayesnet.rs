//! Binary Bayes nets with a role map, used to simulate discrete two-domain data.
//!
//! Text format, one record per line (`#` starts a comment):
//!
//! ```text
//! smoking | anxiety=0 | 0.40
//! smoking | anxiety=1 | 0.85
//! anxiety |           | 0.50
//! role smoking = cause
//! role anxiety = domain
//! ```
//!
//! A CPT row gives `p(node = 1)` for one assignment of the node's parents.
//! Nodes are ordered by the first line that declares them; cause and effect
//! bit vectors follow that order.

use std::collections::HashMap;

use rand::Rng;

use crate::data::{DomainDataset, LabelledRow, Task};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Cause,
    Label,
    Effect,
    Domain,
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cause" => Ok(Role::Cause),
            "label" => Ok(Role::Label),
            "effect" => Ok(Role::Effect),
            "domain" => Ok(Role::Domain),
            other => Err(Error::BayesNet(format!("unknown role `{other}`"))),
        }
    }
}

/// Unvalidated description of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub parents: Vec<String>,
    /// `p(node = 1)` indexed by the parent assignment, parent `i` being bit `i`.
    pub cpt: Vec<f64>,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    name: String,
    parents: Vec<usize>,
    cpt: Vec<f64>,
    role: Role,
}

/// A validated binary Bayes net.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesNetConfig {
    nodes: Vec<Node>,
    topo: Vec<usize>,
    domain: usize,
    label: usize,
    causes: Vec<usize>,
    effects: Vec<usize>,
}

impl BayesNetConfig {
    pub fn from_specs(specs: Vec<NodeSpec>) -> Result<Self> {
        let index: HashMap<&str, usize> =
            specs.iter().enumerate().map(|(i, s)| (s.name.as_str(), i)).collect();
        if index.len() != specs.len() {
            return Err(Error::BayesNet("duplicate node name".into()));
        }
        let mut nodes = Vec::with_capacity(specs.len());
        for s in &specs {
            let parents = s
                .parents
                .iter()
                .map(|p| {
                    index
                        .get(p.as_str())
                        .copied()
                        .ok_or_else(|| Error::BayesNet(format!("`{}` has undeclared parent `{p}`", s.name)))
                })
                .collect::<Result<Vec<_>>>()?;
            if s.cpt.len() != 1usize << parents.len() {
                return Err(Error::BayesNet(format!(
                    "`{}` needs {} CPT entries, got {}",
                    s.name,
                    1usize << parents.len(),
                    s.cpt.len()
                )));
            }
            if let Some(p) = s.cpt.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::BayesNet(format!("`{}` has probability {p} outside [0,1]", s.name)));
            }
            nodes.push(Node { name: s.name.clone(), parents, cpt: s.cpt.clone(), role: s.role });
        }

        let with_role = |r: Role| nodes.iter().enumerate().filter(move |(_, n)| n.role == r).map(|(i, _)| i);
        let labels: Vec<usize> = with_role(Role::Label).collect();
        let domains: Vec<usize> = with_role(Role::Domain).collect();
        if labels.len() != 1 {
            return Err(Error::BayesNet(format!("need exactly one label node, found {}", labels.len())));
        }
        if domains.len() != 1 {
            return Err(Error::BayesNet(format!("need exactly one domain node, found {}", domains.len())));
        }
        let domain = domains[0];
        if let Some(n) = nodes.iter().find(|n| n.role == Role::Effect && n.parents.contains(&domain)) {
            return Err(Error::BayesNet(format!("domain node may not be a parent of effect `{}`", n.name)));
        }
        let causes = with_role(Role::Cause).collect();
        let effects = with_role(Role::Effect).collect();
        let topo = topological_order(&nodes)?;
        Ok(Self { nodes, topo, domain, label: labels[0], causes, effects })
    }

    pub fn parse(text: &str) -> Result<Self> {
        struct Pending {
            parents: Vec<String>,
            rows: HashMap<usize, f64>,
        }
        let mut order: Vec<String> = Vec::new();
        let mut pending: HashMap<String, Pending> = HashMap::new();
        let mut roles: HashMap<String, Role> = HashMap::new();

        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            if let Some(rest) = line.strip_prefix("role ") {
                let (name, role) = rest
                    .split_once('=')
                    .ok_or_else(|| perr("expected `role <node> = <role>`".into()))?;
                let name = name.trim().to_string();
                let role: Role = role.parse().map_err(|e: Error| perr(e.to_string()))?;
                if roles.insert(name.clone(), role).is_some() {
                    return Err(perr(format!("role for `{name}` given twice")));
                }
                continue;
            }
            let fields: Vec<&str> = line.split('|').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(perr("expected `node | parent=bit,... | probability`".into()));
            }
            let name = fields[0].to_string();
            if name.is_empty() {
                return Err(perr("empty node name".into()));
            }
            let mut assignment = Vec::new();
            for part in fields[1].split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (p, v) = part.split_once('=').ok_or_else(|| perr(format!("bad assignment `{part}`")))?;
                let bit = match v.trim() {
                    "0" => false,
                    "1" => true,
                    other => return Err(perr(format!("parent value must be 0 or 1, got `{other}`"))),
                };
                assignment.push((p.trim().to_string(), bit));
            }
            let prob: f64 = fields[2].parse().map_err(|_| perr(format!("bad probability `{}`", fields[2])))?;

            let entry = pending.entry(name.clone()).or_insert_with(|| {
                order.push(name.clone());
                Pending { parents: assignment.iter().map(|(p, _)| p.clone()).collect(), rows: HashMap::new() }
            });
            if assignment.len() != entry.parents.len() {
                return Err(perr(format!("`{name}` rows disagree on the parent set")));
            }
            let mut idx = 0usize;
            let mut seen = vec![false; entry.parents.len()];
            for (p, bit) in &assignment {
                let pos = entry
                    .parents
                    .iter()
                    .position(|q| q == p)
                    .ok_or_else(|| perr(format!("`{name}` rows disagree on the parent set")))?;
                if seen[pos] {
                    return Err(perr(format!("parent `{p}` repeated")));
                }
                seen[pos] = true;
                if *bit {
                    idx |= 1 << pos;
                }
            }
            if entry.rows.insert(idx, prob).is_some() {
                return Err(perr(format!("duplicate CPT entry for `{name}`")));
            }
        }

        for name in roles.keys() {
            if !pending.contains_key(name) {
                return Err(Error::BayesNet(format!("role given for unknown node `{name}`")));
            }
        }
        let mut specs = Vec::with_capacity(order.len());
        for name in order {
            let p = pending.remove(&name).expect("declared");
            let size = 1usize << p.parents.len();
            let cpt = (0..size)
                .map(|i| {
                    p.rows
                        .get(&i)
                        .copied()
                        .ok_or_else(|| Error::BayesNet(format!("missing CPT entry {i:#b} for `{name}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let role = *roles
                .get(&name)
                .ok_or_else(|| Error::BayesNet(format!("node `{name}` has no role")))?;
            specs.push(NodeSpec { name, parents: p.parents, cpt, role });
        }
        Self::from_specs(specs)
    }

    pub fn node_names(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.name.as_str()).collect()
    }

    pub fn n_causes(&self) -> usize {
        self.causes.len()
    }

    pub fn n_effects(&self) -> usize {
        self.effects.len()
    }

    /// `p(node = 1 | parent assignment)` where `assignment` holds every node's value.
    pub fn prob_one(&self, node: usize, assignment: &[bool]) -> f64 {
        let n = &self.nodes[node];
        let idx = n
            .parents
            .iter()
            .enumerate()
            .fold(0usize, |acc, (bit, &p)| if assignment[p] { acc | (1 << bit) } else { acc });
        n.cpt[idx]
    }

    /// One ancestral draw of every node (declaration order) with the domain node clamped.
    pub fn sample_nodes<R: Rng>(&self, domain_value: bool, rng: &mut R) -> Vec<bool> {
        let mut values = vec![false; self.nodes.len()];
        for &i in &self.topo {
            values[i] = if i == self.domain {
                domain_value
            } else {
                let p = self.prob_one(i, &values);
                rng.random::<f64>() < p
            };
        }
        values
    }

    fn to_row(&self, values: &[bool]) -> LabelledRow {
        let bit = |i: &usize| if values[*i] { 1.0 } else { 0.0 };
        LabelledRow::new(
            self.causes.iter().map(bit).collect(),
            bit(&self.label),
            self.effects.iter().map(bit).collect(),
        )
    }

    fn draw_rows(&self, domain_value: bool, n: usize, rng: &mut StreamRng) -> Vec<LabelledRow> {
        (0..n).map(|_| self.to_row(&self.sample_nodes(domain_value, rng))).collect()
    }
}

fn topological_order(nodes: &[Node]) -> Result<Vec<usize>> {
    let mut indegree: Vec<usize> = nodes.iter().map(|n| n.parents.len()).collect();
    let mut children = vec![Vec::new(); nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        for &p in &n.parents {
            children[p].push(i);
        }
    }
    let mut ready: Vec<usize> = (0..nodes.len()).rev().filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(i) = ready.pop() {
        order.push(i);
        for &c in children[i].iter().rev() {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(c);
            }
        }
    }
    if order.len() != nodes.len() {
        return Err(Error::BayesNet("graph contains a cycle".into()));
    }
    Ok(order)
}

/// Ancestral sampling of `n` rows with the domain node clamped to `domain_value`.
pub fn gen_bayesnet(cfg: &BayesNetConfig, domain_value: bool, n: usize, seed: u64) -> Vec<LabelledRow> {
    let mut rng = stream(seed);
    cfg.draw_rows(domain_value, n, &mut rng)
}

/// Source (`D=0`), unlabelled target and labelled target-test samples from one stream.
pub fn gen_bayesnet_dataset(
    cfg: &BayesNetConfig,
    n_s: usize,
    n_t: usize,
    n_test: usize,
    seed: u64,
) -> Result<(DomainDataset, Vec<LabelledRow>)> {
    if n_s == 0 {
        return Err(Error::EmptySample("n_S must be at least 1"));
    }
    let mut rng = stream(seed);
    let source = cfg.draw_rows(false, n_s, &mut rng);
    let target = cfg.draw_rows(true, n_t, &mut rng).iter().map(LabelledRow::features).collect();
    let test = cfg.draw_rows(true, n_test, &mut rng);
    Ok((DomainDataset::new(source, target, Task::Classification)?, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = "
        d | | 0.5
        c | d=0 | 0.5
        c | d=1 | 0.5
        y | c=0 | 0.5
        y | c=1 | 0.5
        e | y=0 | 0.5
        e | y=1 | 0.5
        role d = domain
        role c = cause
        role y = label
        role e = effect
    ";

    #[test]
    fn uniform_chain_marginals() {
        let cfg = BayesNetConfig::parse(CHAIN).unwrap();
        let rows = gen_bayesnet(&cfg, true, 200_000, 3);
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&LabelledRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        for m in [mean(&|r| r.x_c[0]), mean(&|r| r.y), mean(&|r| r.x_e[0])] {
            assert!((m - 0.5).abs() < 0.005, "{m}");
        }
    }

    #[test]
    fn degenerate_label_table() {
        let text = CHAIN.replace("y | c=0 | 0.5", "y | c=0 | 1").replace("y | c=1 | 0.5", "y | c=1 | 1.0");
        let cfg = BayesNetConfig::parse(&text).unwrap();
        assert!(gen_bayesnet(&cfg, false, 1000, 1).iter().all(|r| r.y == 1.0));
    }

    #[test]
    fn parent_order_in_rows_may_vary() {
        let text = "
            a | | 0.3
            b | | 0.6
            y | a=0,b=0 | 0.1
            y | b=0,a=1 | 0.2
            y | a=0,b=1 | 0.3
            y | b=1,a=1 | 0.4
            d | | 0.5
            e | y=0 | 0.2
            e | y=1 | 0.7
            role a = cause
            role b = cause
            role y = label
            role d = domain
            role e = effect
        ";
        let cfg = BayesNetConfig::parse(text).unwrap();
        assert_eq!(cfg.node_names(), vec!["a", "b", "y", "d", "e"]);
        // a is bit 0, b is bit 1
        let mut v = vec![false; 5];
        v[0] = true;
        assert_eq!(cfg.prob_one(2, &v), 0.2);
        v[1] = true;
        assert_eq!(cfg.prob_one(2, &v), 0.4);
    }

    #[test]
    fn validation_errors() {
        let missing = CHAIN.replace("y | c=1 | 0.5", "");
        assert!(BayesNetConfig::parse(&missing).unwrap_err().to_string().contains("missing CPT"));

        let dup = format!("{CHAIN}\n y | c=1 | 0.2");
        assert!(BayesNetConfig::parse(&dup).is_err());

        let bad_p = CHAIN.replace("e | y=1 | 0.5", "e | y=1 | 1.5");
        assert!(BayesNetConfig::parse(&bad_p).is_err());

        let domain_to_effect = CHAIN.replace("e | y=0 | 0.5", "e | y=0,d=0 | 0.5\ne | y=0,d=1 | 0.5")
            .replace("e | y=1 | 0.5", "e | y=1,d=0 | 0.5\ne | y=1,d=1 | 0.5");
        assert!(BayesNetConfig::parse(&domain_to_effect).unwrap_err().to_string().contains("domain node"));

        let no_role = CHAIN.replace("role e = effect", "");
        assert!(BayesNetConfig::parse(&no_role).is_err());

        let two_labels = CHAIN.replace("role e = effect", "role e = label");
        assert!(BayesNetConfig::parse(&two_labels).is_err());
    }

    #[test]
    fn cycle_is_rejected() {
        let specs = vec![
            NodeSpec { name: "d".into(), parents: vec![], cpt: vec![0.5], role: Role::Domain },
            NodeSpec { name: "c".into(), parents: vec!["y".into()], cpt: vec![0.5, 0.5], role: Role::Cause },
            NodeSpec { name: "y".into(), parents: vec!["c".into()], cpt: vec![0.5, 0.5], role: Role::Label },
        ];
        let err = BayesNetConfig::from_specs(specs).unwrap_err();
        assert!(err.to_string().contains("cycle"));
    }

    #[test]
    fn domain_is_clamped_and_deterministic() {
        let cfg = BayesNetConfig::parse(CHAIN).unwrap();
        let mut rng = stream(5);
        for _ in 0..100 {
            assert!(cfg.sample_nodes(true, &mut rng)[0]);
        }
        assert_eq!(gen_bayesnet(&cfg, false, 50, 8), gen_bayesnet(&cfg, false, 50, 8));
    }
}
