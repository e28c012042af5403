/// Compensated (Kahan) accumulator for long sums of doubles.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(self) -> f64 {
        self.sum
    }
}

pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(items: I) -> f64 {
    let mut acc = KahanSum::new();
    for x in items {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensates_small_terms() {
        // 1 + 1e-16 repeated: naive summation loses every small term.
        let mut acc = KahanSum::new();
        acc.add(1.0);
        for _ in 0..10_000 {
            acc.add(1e-16);
        }
        assert!((acc.value() - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn empty_sum_is_zero() {
        assert_eq!(kahan_sum(std::iter::empty()), 0.0);
    }
}
