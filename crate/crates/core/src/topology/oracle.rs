//! Brute-force reference for sublevel H0 of a columnized slice.
//!
//! Nothing here uses the sparse graph or union-find of the parent module: the
//! oracle evaluates the descriptor function on every vertex pair, sweeps all
//! critical values, recomputes connected components from scratch at each one
//! by breadth-first search and reads births and deaths off component
//! containment between consecutive thresholds.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    build_filtration, eval_f, persistence_h0, persistence_h0_mutant, slice_vertices, PersistenceDiagram,
    PersistencePair,
};
use crate::cloud::Point3;
use crate::slicing::{columnize, ColumnizedSlice, Slice, SliceParams};

/// Finite diagram and essential births computed by exhaustive search.
pub fn brute_force_h0(cs: &ColumnizedSlice, params: &SliceParams) -> PersistenceDiagram {
    let vertices = slice_vertices(cs, params);
    let n = vertices.len();
    let mut weight = vec![f64::INFINITY; n * n];
    for a in 0..n {
        for b in 0..n {
            weight[a * n + b] = eval_f(&vertices[a], &vertices[b], params);
        }
    }

    let mut critical: Vec<f64> = weight.iter().copied().filter(|w| w.is_finite()).collect();
    critical.sort_by(f64::total_cmp);
    critical.dedup();

    // Component id of every vertex at the previous threshold.
    let mut previous: Vec<Option<usize>> = vec![None; n];
    // Birth value of each previous component.
    let mut previous_births: Vec<f64> = Vec::new();
    let mut points = Vec::new();

    for &t in &critical {
        let active: Vec<bool> = (0..n).map(|v| weight[v * n + v] <= t).collect();
        let mut component: Vec<Option<usize>> = vec![None; n];
        let mut births: Vec<f64> = Vec::new();

        for start in 0..n {
            if !active[start] || component[start].is_some() {
                continue;
            }
            let id = births.len();
            let mut members = Vec::new();
            let mut queue = VecDeque::from([start]);
            component[start] = Some(id);
            while let Some(v) = queue.pop_front() {
                members.push(v);
                for w in 0..n {
                    if active[w] && component[w].is_none() && weight[v * n + w] <= t {
                        component[w] = Some(id);
                        queue.push_back(w);
                    }
                }
            }

            let mut merged: Vec<usize> = members.iter().filter_map(|&v| previous[v]).collect();
            merged.sort_unstable();
            merged.dedup();
            let newcomers = members.iter().filter(|&&v| previous[v].is_none()).count();

            let birth = if merged.is_empty() {
                // Every newcomer is born at t; all but one die immediately.
                for _ in 1..newcomers {
                    points.push(PersistencePair::new(t, t));
                }
                t
            } else {
                let mut older: Vec<f64> = merged.iter().map(|&c| previous_births[c]).collect();
                older.sort_by(f64::total_cmp);
                for &b in &older[1..] {
                    points.push(PersistencePair::new(b, t));
                }
                for _ in 0..newcomers {
                    points.push(PersistencePair::new(t, t));
                }
                older[0]
            };
            births.push(birth);
        }

        previous = component;
        previous_births = births;
    }

    let mut diagram = PersistenceDiagram::from_points(points);
    let mut essential = previous_births;
    essential.sort_by(f64::total_cmp);
    diagram.essential = essential;
    diagram.max_value = critical.last().copied().unwrap_or(0.0).max(0.0);
    diagram
}

/// A random columnized slice with at most `max_points` points and random
/// slice thickness and column width. Half of the draws place y on a coarse
/// grid so that ties between filtration values are common.
pub fn random_columnized_slice<R: Rng>(rng: &mut R, max_points: usize) -> (SliceParams, ColumnizedSlice) {
    let sigma1 = rng.random_range(0.02..0.5);
    let sigma2 = rng.random_range(0.005..0.1);
    let params = SliceParams::new(sigma1, sigma2).expect("sampled parameters are valid");
    let n = rng.random_range(1..=max_points.max(1));
    let width = sigma2 * rng.random_range(0.5..6.0);
    let tied = rng.random_bool(0.5);
    let index = rng.random_range(0..6usize);
    let points = (0..n)
        .map(|_| {
            let y = if tied {
                rng.random_range(0..8) as f64 * 0.125
            } else {
                rng.random_range(-1.0..1.0)
            };
            Point3::new(rng.random_range(0.0..width), y, params.slice_z(index))
        })
        .collect();
    let slice = Slice { index, points };
    let cs = columnize(&slice, &params).expect("slice has at least one point");
    (params, cs)
}

/// A trial on which the union-find result differs from the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMismatch {
    /// Seed that regenerates this trial on its own.
    pub trial_seed: u64,
    pub params: SliceParams,
    pub slice: ColumnizedSlice,
    pub fast: PersistenceDiagram,
    pub slow: PersistenceDiagram,
}

/// Trial `i` of a run seeded with `seed` uses `seed + i`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed.wrapping_add(trial)
}

/// Draws one random slice from `trial_seed` and compares the union-find
/// diagram (or the broken variant when `mutate`) against the oracle.
pub fn run_trial(trial_seed: u64, max_points: usize, mutate: bool) -> Option<OracleMismatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let (params, cs) = random_columnized_slice(&mut rng, max_points);
    let graph = build_filtration(&cs, &params);
    let fast = if mutate {
        persistence_h0_mutant(&graph)
    } else {
        persistence_h0(&graph)
    };
    let slow = brute_force_h0(&cs, &params);
    (fast.points != slow.points || fast.essential != slow.essential).then_some(OracleMismatch {
        trial_seed,
        params,
        slice: cs,
        fast,
        slow,
    })
}

/// Runs `n_trials` trials and stops at the first mismatch.
pub fn run_oracle(n_trials: u64, max_points: usize, seed: u64, mutate: bool) -> Result<u64, Box<OracleMismatch>> {
    for t in 0..n_trials {
        if let Some(m) = run_trial(trial_seed(seed, t), max_points, mutate) {
            return Err(Box::new(m));
        }
    }
    Ok(n_trials)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_computed_column() {
        let params = SliceParams::new(0.1, 0.025).unwrap();
        let slice = Slice {
            index: 0,
            points: vec![Point3::new(0.01, 0.0, 0.0), Point3::new(0.02, 1.0, 0.0)],
        };
        let cs = columnize(&slice, &params).unwrap();
        let pd = brute_force_h0(&cs, &params);
        assert_eq!(pd.essential, vec![0.0]);
        assert_eq!(
            pd.points,
            vec![
                PersistencePair::new(0.025, 0.025),
                PersistencePair::new(0.025, 1.025),
                PersistencePair::new(0.025, 1.025),
            ]
        );
    }

    #[test]
    fn union_find_agrees_with_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let (params, cs) = random_columnized_slice(&mut rng, 12);
            let fast = persistence_h0(&build_filtration(&cs, &params));
            let slow = brute_force_h0(&cs, &params);
            assert_eq!(fast.points, slow.points);
            assert_eq!(fast.essential, slow.essential);
        }
    }

    #[test]
    fn oracle_catches_broken_elder_rule() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mismatches = (0..50)
            .filter(|_| {
                let (params, cs) = random_columnized_slice(&mut rng, 12);
                persistence_h0_mutant(&build_filtration(&cs, &params)).points
                    != brute_force_h0(&cs, &params).points
            })
            .count();
        assert!(mismatches > 0);
    }

    #[test]
    fn run_reports_reproducible_seed() {
        assert_eq!(run_oracle(200, 12, 5, false).unwrap(), 200);
        let m = run_oracle(200, 12, 5, true).unwrap_err();
        assert!(run_trial(m.trial_seed, 12, true).is_some());
        assert!(run_trial(m.trial_seed, 12, false).is_none());
        assert_eq!(run_oracle(100, 1, 9, false).unwrap(), 100);
    }
}
