//! Published robustness results for two transformer trackers on the
//! VOT2022 short-term benchmark, as printed: per (tracker, stack, attack,
//! metric), the clean score, the attacked score, and the printed drop
//! percentage. The reporting layer re-derives drops from the (clean,
//! attacked) pairs; one printed cell is internally inconsistent and is
//! flagged below rather than silently corrected.

/// One printed (Clean, Attack, Drop) cell.
#[derive(Clone, Copy, Debug)]
pub struct ReferenceRow {
    /// Source tracker the published table evaluated.
    pub tracker: &'static str,
    /// Benchmark stack: bounding-box ("STB") or mask ("STS") annotations.
    pub stack: &'static str,
    pub attack: &'static str,
    pub metric: &'static str,
    pub clean: f64,
    pub attacked: f64,
    /// Drop percentage exactly as printed.
    pub printed_drop: f64,
}

const fn row(
    tracker: &'static str,
    stack: &'static str,
    attack: &'static str,
    metric: &'static str,
    clean: f64,
    attacked: f64,
    printed_drop: f64,
) -> ReferenceRow {
    ReferenceRow {
        tracker,
        stack,
        attack,
        metric,
        clean,
        attacked,
        printed_drop,
    }
}

/// The two published tables, flattened: 24 rows for the first tracker
/// (four attacks), 12 for the second (the label-manipulation attacks are
/// not applicable to it — no candidate list to twist).
pub const REFERENCE_ROWS: [ReferenceRow; 36] = [
    row("transt-seg", "STB", "CSA", "EAO", 0.299, 0.285, 4.68),
    row("transt-seg", "STB", "CSA", "Accuracy", 0.472, 0.477, -1.06),
    row("transt-seg", "STB", "CSA", "Robustness", 0.772, 0.744, 3.63),
    row("transt-seg", "STB", "IoU", "EAO", 0.299, 0.231, 22.74),
    row("transt-seg", "STB", "IoU", "Accuracy", 0.472, 0.495, -4.87),
    row("transt-seg", "STB", "IoU", "Robustness", 0.772, 0.569, 26.29),
    row("transt-seg", "STB", "RTAA", "EAO", 0.299, 0.058, 83.28),
    row("transt-seg", "STB", "RTAA", "Accuracy", 0.472, 0.431, 8.69),
    row("transt-seg", "STB", "RTAA", "Robustness", 0.772, 0.157, 79.66),
    row("transt-seg", "STB", "SPARK", "EAO", 0.299, 0.012, 95.99),
    row("transt-seg", "STB", "SPARK", "Accuracy", 0.472, 0.244, 48.30),
    row("transt-seg", "STB", "SPARK", "Robustness", 0.772, 0.051, 93.39),
    row("transt-seg", "STS", "CSA", "EAO", 0.500, 0.458, 8.40),
    row("transt-seg", "STS", "CSA", "Accuracy", 0.749, 0.736, 1.73),
    row("transt-seg", "STS", "CSA", "Robustness", 0.815, 0.779, 4.42),
    row("transt-seg", "STS", "IoU", "EAO", 0.500, 0.334, 33.20),
    row("transt-seg", "STS", "IoU", "Accuracy", 0.749, 0.710, 5.21),
    row("transt-seg", "STS", "IoU", "Robustness", 0.815, 0.588, 27.85),
    row("transt-seg", "STS", "RTAA", "EAO", 0.500, 0.067, 86.60),
    row("transt-seg", "STS", "RTAA", "Accuracy", 0.749, 0.533, 28.84),
    row("transt-seg", "STS", "RTAA", "Robustness", 0.815, 0.146, 82.08),
    row("transt-seg", "STS", "SPARK", "EAO", 0.500, 0.011, 97.80),
    row("transt-seg", "STS", "SPARK", "Accuracy", 0.749, 0.266, 64.48),
    row("transt-seg", "STS", "SPARK", "Robustness", 0.815, 0.042, 94.84),
    row("mixformerm", "STB", "CSA", "EAO", 0.303, 0.308, -1.65),
    row("mixformerm", "STB", "CSA", "Accuracy", 0.479, 0.478, 0.21),
    row("mixformerm", "STB", "CSA", "Robustness", 0.780, 0.791, -1.41),
    row("mixformerm", "STB", "IoU", "EAO", 0.303, 0.246, 18.81),
    row("mixformerm", "STB", "IoU", "Accuracy", 0.479, 0.458, 4.38),
    row("mixformerm", "STB", "IoU", "Robustness", 0.780, 0.665, 14.74),
    row("mixformerm", "STS", "CSA", "EAO", 0.589, 0.562, 4.58),
    row("mixformerm", "STS", "CSA", "Accuracy", 0.798, 0.803, -0.63),
    row("mixformerm", "STS", "CSA", "Robustness", 0.880, 0.857, 2.61),
    row("mixformerm", "STS", "IoU", "EAO", 0.589, 0.359, 39.05),
    row("mixformerm", "STS", "IoU", "Accuracy", 0.798, 0.660, 17.30),
    row("mixformerm", "STS", "IoU", "Robustness", 0.880, 0.677, 23.07),
];

/// The one printed cell whose drop is inconsistent with its own (clean,
/// attacked) pair: recomputing gives 80.60%, the table prints 83.28%
/// (consistent with an attacked score of 0.050, so the 0.058 is almost
/// surely the misprint). Identified by index into [`REFERENCE_ROWS`].
pub const INCONSISTENT_ROW: usize = 6;

/// Attacked score the printed 83.28% drop implies for that row's clean score.
pub const INCONSISTENT_ROW_IMPLIED_ATTACKED: f64 = 0.050;

#[cfg(test)]
mod tests {
    use super::*;
    use advtrack_core::eval::drop_percentage;

    #[test]
    fn all_rows_but_the_flagged_one_recompute_their_printed_drop() {
        for (i, r) in REFERENCE_ROWS.iter().enumerate() {
            let recomputed = drop_percentage(r.clean, r.attacked).unwrap();
            let dev = (recomputed - r.printed_drop).abs();
            if i == INCONSISTENT_ROW {
                assert!(dev > 2.0, "flagged row unexpectedly consistent: {dev}");
            } else {
                assert!(
                    dev <= 0.02,
                    "row {i} ({}/{}/{}/{}) deviates {dev:.4}pp",
                    r.tracker,
                    r.stack,
                    r.attack,
                    r.metric
                );
            }
        }
    }

    #[test]
    fn flagged_row_is_consistent_with_the_implied_attacked_score() {
        let r = &REFERENCE_ROWS[INCONSISTENT_ROW];
        let implied = drop_percentage(r.clean, INCONSISTENT_ROW_IMPLIED_ATTACKED).unwrap();
        assert!((implied - r.printed_drop).abs() <= 0.02);
    }

    #[test]
    fn table_shape_is_as_published() {
        assert_eq!(REFERENCE_ROWS.len(), 36);
        let first = REFERENCE_ROWS.iter().filter(|r| r.tracker == "transt-seg").count();
        let second = REFERENCE_ROWS.iter().filter(|r| r.tracker == "mixformerm").count();
        assert_eq!((first, second), (24, 12));
        assert!(REFERENCE_ROWS
            .iter()
            .all(|r| matches!(r.stack, "STB" | "STS")
                && matches!(r.metric, "EAO" | "Accuracy" | "Robustness")));
    }
}
