//! Slack-time model selection. Candidates from the waiting set are
//! ranked by marginal accuracy gain per unit cost and added while the
//! timing budget holds and each addition strictly improves the table
//! accuracy; the result is feasible when the final set clears the
//! accuracy threshold.

use super::profile::CostProfile;
use super::AccuracyTable;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub running: Vec<usize>,
    pub waiting: Vec<usize>,
    /// Additions in the order they were accepted.
    pub chosen: Vec<usize>,
    pub feasible: bool,
}

impl Selection {
    pub fn final_set(&self) -> Vec<usize> {
        let mut set = self.running.clone();
        set.extend(&self.chosen);
        set.sort_unstable();
        set
    }
}

/// Greedy selection under the three constraints: the added models'
/// detection+inference cost fits in `tau_us`, every addition strictly
/// increases table accuracy, and the final set meets `a_threshold`.
/// Ties in gain-per-cost break toward the lower model id; candidates
/// that do not fit the remaining budget are skipped, not terminal.
pub fn select_models(
    running: &[usize],
    waiting: &[usize],
    tau_us: u64,
    costs: &CostProfile,
    table: &AccuracyTable,
    a_threshold: f64,
) -> Selection {
    let base_mask = AccuracyTable::mask_of(running);
    let base_acc = table.get_mask(base_mask).unwrap_or(0.0);

    let mut candidates: Vec<(usize, f64)> = waiting
        .iter()
        .map(|&id| {
            let gain = table
                .get_mask(base_mask | (1 << id))
                .unwrap_or(0.0)
                - base_acc;
            let cost = costs.model_cost_us(id).max(1) as f64;
            (id, gain / cost)
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });

    let mut budget = tau_us;
    let mut mask = base_mask;
    let mut acc = base_acc;
    let mut chosen = Vec::new();
    for (id, _) in candidates {
        let cost = costs.model_cost_us(id);
        if cost > budget {
            continue;
        }
        let with = match table.get_mask(mask | (1 << id)) {
            Some(a) => a,
            None => continue,
        };
        if with > acc {
            chosen.push(id);
            mask |= 1 << id;
            acc = with;
            budget -= cost;
        }
    }

    Selection {
        running: running.to_vec(),
        waiting: waiting.to_vec(),
        chosen,
        feasible: acc >= a_threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn costs_uniform(ids: &[usize], dt: u64, inf: u64) -> CostProfile {
        CostProfile::virtual_table(ids, dt, inf, 1, 1.0)
    }

    #[test]
    fn slack_budget_accepts_the_improving_model() {
        // I={0}, J={1}: plenty of budget, pair beats single, threshold
        // below the single-model accuracy.
        let table = AccuracyTable::from_entries(2, &[(0b01, 0.7), (0b10, 0.68), (0b11, 0.8)]);
        let costs = costs_uniform(&[0, 1], 10_000, 40_000);
        let sel = select_models(&[0], &[1], 100_000, &costs, &table, 0.6);
        assert_eq!(sel.chosen, vec![1]);
        assert!(sel.feasible);
    }

    #[test]
    fn zero_budget_keeps_running_set() {
        let table = AccuracyTable::from_entries(2, &[(0b01, 0.7), (0b10, 0.68), (0b11, 0.8)]);
        let costs = costs_uniform(&[0, 1], 10_000, 40_000);
        let sel = select_models(&[0], &[1], 0, &costs, &table, 0.6);
        assert!(sel.chosen.is_empty());
        assert!(sel.feasible);
        let strict = select_models(&[0], &[1], 0, &costs, &table, 0.75);
        assert!(!strict.feasible);
    }

    #[test]
    fn anti_diverse_pair_is_rejected_despite_budget() {
        let table = AccuracyTable::from_entries(2, &[(0b01, 0.7), (0b10, 0.6), (0b11, 0.65)]);
        let costs = costs_uniform(&[0, 1], 10_000, 40_000);
        let sel = select_models(&[0], &[1], 1_000_000, &costs, &table, 0.5);
        assert!(sel.chosen.is_empty());
        assert!(sel.feasible);
    }

    #[test]
    fn ties_break_toward_lower_id() {
        let table = AccuracyTable::from_entries(
            3,
            &[
                (0b001, 0.5),
                (0b010, 0.6),
                (0b100, 0.6),
                (0b011, 0.6),
                (0b101, 0.6),
                (0b110, 0.7),
                (0b111, 0.7),
            ],
        );
        let costs = costs_uniform(&[0, 1, 2], 10_000, 40_000);
        // Budget fits exactly one addition; models 1 and 2 tie on gain.
        let sel = select_models(&[0], &[1, 2], 50_000, &costs, &table, 0.0);
        assert_eq!(sel.chosen, vec![1]);
    }

    #[test]
    fn over_budget_candidate_is_skipped_not_terminal() {
        let mut costs = costs_uniform(&[0, 1, 2], 10_000, 40_000);
        costs.set_model_cost(1, 80_000, 200_000); // 280k total, best gain
        let table = AccuracyTable::from_entries(
            3,
            &[
                (0b001, 0.5),
                (0b010, 0.9),
                (0b100, 0.6),
                (0b011, 0.9),
                (0b101, 0.62),
                (0b110, 0.95),
                (0b111, 0.95),
            ],
        );
        let sel = select_models(&[0], &[1, 2], 60_000, &costs, &table, 0.0);
        assert_eq!(sel.chosen, vec![2]);
    }
}
