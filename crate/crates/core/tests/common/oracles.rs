//! Reference implementations the library is checked against. Written
//! without calling the code under test.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use convkg_core::arbiter::{Stump, FEATURE_DIM};
use convkg_core::kb::{Datatype, Entity};
use convkg_core::query::{Aggregate, Term, TriplePattern};
use convkg_core::{EntityId, FeatureVector, GraphQuery, KnowledgeBase, Triple, Value};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn id(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

fn var(s: &str) -> Term {
    Term::var(s)
}

/// Stationary vector of the PageRank chain by Gaussian elimination on
/// `(I - G) x = 0` with one equation replaced by `sum x = 1`.
pub fn pagerank_linear_solve(n: usize, edges: &[(usize, usize)], d: f64) -> Vec<f64> {
    let mut out = vec![0usize; n];
    for &(a, _) in edges {
        out[a] += 1;
    }
    let nf = n as f64;
    // g[i][j]: probability of moving j -> i.
    let mut g = vec![vec![(1.0 - d) / nf; n]; n];
    for j in 0..n {
        if out[j] == 0 {
            for row in g.iter_mut() {
                row[j] += d / nf;
            }
        }
    }
    for &(a, b) in edges {
        g[b][a] += d / out[a] as f64;
    }
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - g[i][j]).chain([0.0]).collect()).collect();
    m[n - 1] = vec![1.0; n + 1];
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
        m.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                let pivot_row = m[col].clone();
                for (x, p) in m[r].iter_mut().zip(&pivot_row).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

pub fn random_kb(rng: &mut ChaCha8Rng) -> KnowledgeBase {
    let n_entities = rng.gen_range(2..=8);
    let n_preds = rng.gen_range(1..=3);
    let mut entities: Vec<Entity> = (0..n_entities).map(|i| Entity::new(id(&format!("Q{i}")), "en", &format!("e{i}"))).collect();
    entities.extend((0..n_preds).map(|i| Entity::new(id(&format!("P{i}")), "en", &format!("p{i}"))));
    let n = rng.gen_range(0..=100);
    let triples = (0..n)
        .map(|_| {
            let o = if rng.gen_bool(0.85) {
                Value::entity(&id(&format!("Q{}", rng.gen_range(0..n_entities))))
            } else {
                Value::literal(rng.gen_range(0..3).to_string(), Datatype::Number)
            };
            Triple::new(id(&format!("Q{}", rng.gen_range(0..n_entities))), id(&format!("P{}", rng.gen_range(0..n_preds))), o)
        })
        .collect();
    KnowledgeBase::from_parts(entities, triples, "en").unwrap()
}

fn random_term(rng: &mut ChaCha8Rng, consts: &[Value], vars: &[&str]) -> Term {
    if rng.gen_bool(0.6) {
        var(vars.choose(rng).unwrap())
    } else {
        Term::Const(consts.choose(rng).unwrap().clone())
    }
}

/// A random query that passes validation.
pub fn random_query(rng: &mut ChaCha8Rng, kb: &KnowledgeBase) -> GraphQuery {
    let subjects: Vec<Value> = kb.entities().filter(|e| e.id.as_str().starts_with('Q')).map(|e| Value::entity(&e.id)).collect();
    let preds: Vec<Value> = kb.entities().filter(|e| e.id.as_str().starts_with('P')).map(|e| Value::entity(&e.id)).collect();
    let mut objects = subjects.clone();
    objects.push(Value::literal("1", Datatype::Number));
    let vars = ["?a", "?b", "?c"];
    loop {
        let k = rng.gen_range(1..=3);
        let patterns: Vec<TriplePattern> = (0..k)
            .map(|_| TriplePattern::new(random_term(rng, &subjects, &vars), random_term(rng, &preds, &vars), random_term(rng, &objects, &vars)))
            .collect();
        let used: Vec<String> = patterns.iter().flat_map(|p| p.variables().into_iter().map(str::to_owned).collect::<Vec<_>>()).collect();
        let Some(project) = used.choose(rng) else { continue };
        let aggregate = if rng.gen_bool(0.3) { Aggregate::Count } else { Aggregate::List };
        let q = GraphQuery::new(patterns, project, aggregate);
        if q.validate().is_ok() {
            return q;
        }
    }
}

/// Brute force: try every assignment of KB values to the query variables
/// and keep those under which every pattern is a stored triple.
pub fn brute_force(q: &GraphQuery, kb: &KnowledgeBase) -> BTreeSet<Value> {
    let stored: HashSet<(Value, Value, Value)> =
        kb.triples().iter().map(|t| (Value::entity(&t.subject), Value::entity(&t.predicate), t.object.clone())).collect();
    let mut domain: BTreeSet<Value> = kb.entities().map(|e| Value::entity(&e.id)).collect();
    domain.extend(kb.triples().iter().map(|t| t.object.clone()));
    let domain: Vec<Value> = domain.into_iter().collect();
    let vars: Vec<String> = q.patterns.iter().flat_map(|p| p.variables()).map(str::to_owned).collect::<BTreeSet<_>>().into_iter().collect();

    let mut out = BTreeSet::new();
    let mut counter = vec![0usize; vars.len()];
    loop {
        let assignment: BTreeMap<&str, &Value> = vars.iter().map(String::as_str).zip(counter.iter().map(|&i| &domain[i])).collect();
        let ground = |t: &Term| match t {
            Term::Var(v) => assignment[v.as_str()].clone(),
            Term::Const(c) => c.clone(),
        };
        if q.patterns.iter().all(|p| stored.contains(&(ground(&p.s), ground(&p.p), ground(&p.o)))) {
            out.insert(assignment[q.project.as_str()].clone());
        }
        // Odometer increment.
        let mut i = 0;
        loop {
            if i == counter.len() {
                return out;
            }
            counter[i] += 1;
            if counter[i] < domain.len() {
                break;
            }
            counter[i] = 0;
            i += 1;
        }
    }
}

// Reference weak learner, written independently of the library's.
pub fn h(s: &Stump, x: &FeatureVector) -> f64 {
    let raw = if x.0[s.feature] > s.threshold { 1.0 } else { -1.0 };
    raw * f64::from(s.polarity)
}

/// Exponential loss of the first `r` stumps.
pub fn exp_loss(stumps: &[Stump], samples: &[(FeatureVector, i8)]) -> f64 {
    samples.iter().map(|(x, y)| (-f64::from(*y) * stumps.iter().map(|s| s.alpha * h(s, x)).sum::<f64>()).exp()).sum()
}

pub fn random_dataset(rng: &mut ChaCha8Rng) -> Vec<(FeatureVector, i8)> {
    let n = rng.gen_range(10..60);
    let dims = rng.gen_range(1..=4);
    let noise = rng.gen_range(0.0..0.4);
    (0..n)
        .map(|_| {
            let mut x = [0.0; FEATURE_DIM];
            for v in x.iter_mut().take(dims) {
                *v = (rng.gen_range(0.0..10.0f64) * 4.0).round() / 4.0;
            }
            let clean = if x[0] + x.get(1).copied().unwrap_or(0.0) > 8.0 { 1 } else { -1 };
            let y = if rng.gen_bool(noise) { -clean } else { clean };
            (FeatureVector(x), y)
        })
        .collect()
}
