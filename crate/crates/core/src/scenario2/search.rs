//! Random search for base/auxiliary pairs with a small `a_min`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conditions::{a_min_term, check_conditions, ConditionReport};
use super::{AggregateView, MfpiError, PairSet, PointPair};
use crate::par::{self, Execution};

pub type SearchStream = ChaCha8Rng;

/// Stream used by [`super::attack_aggregate`]; kept apart from the dataset
/// sample streams, which use the low stream ids.
pub fn search_stream(seed: u64) -> SearchStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub pairs: PairSet,
    pub report: ConditionReport,
    /// Random draws consumed.
    pub evaluated: usize,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    term: f64,
    delta_pagg: f64,
    base: usize,
    aux: usize,
}

impl Candidate {
    /// Lower bound first, then larger ΔP_A, then draw order.
    fn better_than(&self, other: &Candidate) -> bool {
        self.term < other.term || (self.term == other.term && self.delta_pagg > other.delta_pagg)
    }
}

/// Draws `budget` random point pairs, orients each so that `ΔP_A > 0`, and
/// keeps for every generator the candidates satisfying conditions 1–2. Each
/// generator then takes its lowest-`a_min` candidate not already taken by an
/// earlier generator (falling back to a shared one only if nothing else
/// qualified).
pub fn search_point_pairs<R: Rng>(
    view: &AggregateView,
    a_max: f64,
    budget: usize,
    stream: &mut R,
    exec: Execution,
) -> Result<SearchOutcome, MfpiError> {
    let n = view.n_generators();
    let m = view.points.len();
    if n == 0 {
        return Err(MfpiError::Parameter("dataset has no in-service generator".into()));
    }
    let exhausted = |generator| MfpiError::SearchExhausted { generator, budget };
    if m < 2 || budget == 0 {
        return Err(exhausted(0));
    }

    let draws: Vec<(usize, usize)> = (0..budget)
        .map(|_| (stream.gen_range(0..m), stream.gen_range(0..m)))
        .collect();

    let scored: Vec<Vec<Option<Candidate>>> = par::map_slice(&draws, exec, |&(j, k)| {
        let (pj, pk) = (&view.points[j], &view.points[k]);
        if j == k || pj.p_agg == pk.p_agg {
            return vec![None; n];
        }
        let (base, aux) = if pj.p_agg > pk.p_agg { (j, k) } else { (k, j) };
        (0..n)
            .map(|i| {
                let pair = PointPair::new(i, view.points[base].clone(), view.points[aux].clone());
                if pair.delta_lmp() <= 0.0 || pair.delta_pagg() <= 0.0 {
                    return None;
                }
                let term = a_min_term(&pair, a_max).ok()?;
                Some(Candidate {
                    term,
                    delta_pagg: pair.delta_pagg(),
                    base,
                    aux,
                })
            })
            .collect()
    });

    let mut per_gen: Vec<Vec<Candidate>> = vec![Vec::new(); n];
    for row in &scored {
        for (i, c) in row.iter().enumerate() {
            if let Some(c) = c {
                per_gen[i].push(*c);
            }
        }
    }

    let mut used: Vec<(usize, usize)> = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    for (i, cands) in per_gen.iter().enumerate() {
        let pick = |allow_used: bool| {
            cands
                .iter()
                .filter(|c| allow_used || !used.contains(&(c.base, c.aux)))
                .fold(None::<&Candidate>, |best, c| match best {
                    Some(b) if !c.better_than(b) => Some(b),
                    _ => Some(c),
                })
        };
        let c = *pick(false).or_else(|| pick(true)).ok_or_else(|| exhausted(i))?;
        used.push((c.base, c.aux));
        pairs.push(PointPair::new(i, view.points[c.base].clone(), view.points[c.aux].clone()));
    }

    let pairs = PairSet::new(pairs)?;
    let report = check_conditions(&pairs, a_max);
    Ok(SearchOutcome {
        pairs,
        report,
        evaluated: budget,
    })
}
