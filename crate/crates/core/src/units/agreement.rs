use std::collections::HashMap;

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
///
/// Returns 1.0 when both partitions are trivial in the same way.
pub fn adjusted_rand_index(a: &[u64], b: &[u64]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let mut table: HashMap<(u64, u64), u64> = HashMap::new();
    let mut rows: HashMap<u64, u64> = HashMap::new();
    let mut cols: HashMap<u64, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len() as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_up_to_relabeling() {
        assert!((adjusted_rand_index(&[0, 0, 1, 1, 2], &[5, 5, 9, 9, 7]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_value() {
        // contingency [[1,1,0],[1,2,1],[0,0,4]]
        let a = [0, 0, 1, 1, 1, 1, 2, 2, 2, 2];
        let b = [0, 1, 0, 1, 1, 2, 2, 2, 2, 2];
        let index = 1.0 + 6.0;
        let sa = 1.0 + 6.0 + 6.0;
        let sb = 1.0 + 3.0 + 10.0;
        let expected = sa * sb / 45.0;
        let want = (index - expected) / (0.5 * (sa + sb) - expected);
        assert!((adjusted_rand_index(&a, &b) - want).abs() < 1e-12);
    }
}
