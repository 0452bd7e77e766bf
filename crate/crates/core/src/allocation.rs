//! Beacon assignment machinery: relaxed distributions over per-candidate
//! choices, the temperature and regularization schedules, hardening to
//! arg-max assignments, and the beacon-count regularizer.
//!
//! Assignment index convention: 0 means "no beacon", index `c+1` means a
//! beacon on channel `c`.

use rand::Rng;
use thiserror::Error;

use crate::geometry::EnvironmentMap;
use crate::tape::{Tape, VarId};
use crate::tensor::{softmax_rows_scaled, Tensor};

#[derive(Debug, Error)]
pub enum AllocationError {
    #[error("assignment {index} at candidate {candidate} exceeds channel count {channels}")]
    IndexOutOfRange {
        candidate: usize,
        index: usize,
        channels: usize,
    },
}

/// One-hot assignments: one index in `{0, ..., C}` per candidate site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HardAllocation {
    assignment: Vec<usize>,
    channels: usize,
}

impl HardAllocation {
    pub fn new(assignment: Vec<usize>, channels: usize) -> Result<Self, AllocationError> {
        for (candidate, &a) in assignment.iter().enumerate() {
            if a > channels {
                return Err(AllocationError::IndexOutOfRange {
                    candidate,
                    index: a,
                    channels,
                });
            }
        }
        Ok(HardAllocation {
            assignment,
            channels,
        })
    }

    /// All sites empty.
    pub fn empty(candidates: usize, channels: usize) -> Self {
        HardAllocation {
            assignment: vec![0; candidates],
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Number of sites with a beacon.
    pub fn beacon_count(&self) -> usize {
        self.assignment.iter().filter(|&&a| a > 0).count()
    }

    /// Text form: one `l x y assignment` line per candidate.
    pub fn serialize(&self, map: &EnvironmentMap) -> String {
        assert_eq!(map.candidates().len(), self.assignment.len());
        let mut out = String::new();
        for (l, (site, &a)) in map.candidates().iter().zip(&self.assignment).enumerate() {
            out.push_str(&format!("{l} {} {} {a}\n", site.x, site.y));
        }
        out
    }
}

/// Softmax relaxation of the per-candidate assignment: trainable weights, a
/// temperature, and the derived probability rows.
#[derive(Clone, Debug)]
pub struct RelaxedAllocation {
    weights: Tensor,
    alpha: f64,
    rows: Tensor,
}

impl RelaxedAllocation {
    /// Derives probability rows as the row-wise softmax of `alpha * weights`.
    pub fn from_weights(weights: Tensor, alpha: f64) -> Self {
        assert!(alpha > 0.0, "alpha must be positive, got {alpha}");
        assert!(
            weights.cols() >= 2,
            "weights need at least 2 columns (no-beacon plus one channel)"
        );
        let rows = softmax_rows_scaled(&weights, alpha);
        RelaxedAllocation {
            weights,
            alpha,
            rows,
        }
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    pub fn candidates(&self) -> usize {
        self.weights.rows()
    }

    pub fn channels(&self) -> usize {
        self.weights.cols() - 1
    }

    /// Expected number of beacons under the relaxation: the total probability
    /// mass placed on non-empty assignments.
    pub fn expected_beacon_count(&self) -> f64 {
        expected_beacon_count_of_rows(&self.rows)
    }

    /// Arg-max of each weight row, ties broken toward the lowest index.
    pub fn harden(&self) -> HardAllocation {
        let mut assignment = Vec::with_capacity(self.weights.rows());
        for r in 0..self.weights.rows() {
            assignment.push(argmax_first(self.weights.row(r)));
        }
        HardAllocation {
            assignment,
            channels: self.channels(),
        }
    }
}

pub(crate) fn expected_beacon_count_of_rows(rows: &Tensor) -> f64 {
    (0..rows.rows()).map(|r| 1.0 - rows.get(r, 0)).sum()
}

fn argmax_first(row: &[f64]) -> usize {
    let mut arg = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[arg] {
            arg = i;
        }
    }
    arg
}

/// Quadratic temperature schedule `alpha(t) = alpha0 * (1 + gamma t^2)`,
/// with the iteration at which the softmax is swapped for an arg-max.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaSchedule {
    pub alpha0: f64,
    pub gamma: f64,
    pub switch_iter: u64,
}

impl AlphaSchedule {
    /// Full-scale defaults: `alpha0 = 1`, `gamma = 1.25e-9`, switch at 900k.
    pub fn full_scale() -> Self {
        AlphaSchedule {
            alpha0: 1.0,
            gamma: 1.25e-9,
            switch_iter: 900_000,
        }
    }

    pub fn alpha_at(&self, t: u64) -> f64 {
        let tf = t as f64;
        self.alpha0 * (1.0 + self.gamma * (tf * tf))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LambdaMode {
    Fixed,
    Annealed,
}

/// Regularization weight schedule: fixed, or decayed by `eta` every `period`
/// iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaSchedule {
    pub lambda0: f64,
    pub eta: f64,
    pub period: u64,
    pub mode: LambdaMode,
}

impl LambdaSchedule {
    /// Full-scale defaults: 0.2 decayed by 0.25 every 100k iterations.
    pub fn full_scale_annealed() -> Self {
        LambdaSchedule {
            lambda0: 0.2,
            eta: 0.25,
            period: 100_000,
            mode: LambdaMode::Annealed,
        }
    }

    pub fn fixed(lambda0: f64) -> Self {
        LambdaSchedule {
            lambda0,
            eta: 1.0,
            period: 1,
            mode: LambdaMode::Fixed,
        }
    }

    pub fn lambda_at(&self, t: u64) -> f64 {
        match self.mode {
            LambdaMode::Fixed => self.lambda0,
            LambdaMode::Annealed => {
                let k = (t / self.period) as i32;
                self.lambda0 * self.eta.powi(k)
            }
        }
    }
}

/// Which reading of the beacon-count regularizer to optimize.
///
/// `PaperVerbatim` adds `lambda * sum_l rows[l][0]` (the no-beacon mass) to
/// the loss exactly as written, which a minimizer satisfies by *placing*
/// beacons. `BeaconPenalty` charges the placed-beacon mass,
/// `lambda * sum_l (1 - rows[l][0])`, which is the reading under which larger
/// `lambda` yields fewer beacons; it is the default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegSign {
    PaperVerbatim,
    BeaconPenalty,
}

impl Default for RegSign {
    fn default() -> Self {
        RegSign::BeaconPenalty
    }
}

/// Taped row-wise softmax of `alpha * weights`; gradients flow to `weights`.
pub fn relax(tape: &mut Tape, weights: VarId, alpha: f64) -> VarId {
    tape.softmax_scaled(weights, alpha)
}

/// Taped regularizer over relaxation rows (see [`RegSign`]).
pub fn regularizer(tape: &mut Tape, rows: VarId, lambda: f64, sign: RegSign) -> VarId {
    assert!(lambda >= 0.0, "lambda must be nonnegative, got {lambda}");
    let no_beacon = tape.slice_cols(rows, 0, 1);
    let mass = tape.sum(no_beacon);
    match sign {
        RegSign::PaperVerbatim => tape.scale(mass, lambda),
        RegSign::BeaconPenalty => {
            let l = tape.value(rows).rows() as f64;
            let total = tape.constant(Tensor::scalar(l));
            let placed = tape.sub(total, mass);
            tape.scale(placed, lambda)
        }
    }
}

/// Untaped regularizer value, for logging.
pub fn regularizer_value(rows: &Tensor, lambda: f64, sign: RegSign) -> f64 {
    let mass: f64 = (0..rows.rows()).map(|r| rows.get(r, 0)).sum();
    match sign {
        RegSign::PaperVerbatim => lambda * mass,
        RegSign::BeaconPenalty => lambda * (rows.rows() as f64 - mass),
    }
}

/// Initial assignment weights: i.i.d. Gaussian with mean 0 and std 0.01, so
/// the initial relaxation is near-uniform (maximal exploration).
pub fn init_weights(candidates: usize, channels: usize, rng: &mut impl Rng) -> Tensor {
    use rand_distr::{Distribution, StandardNormal};
    let data = (0..candidates * (channels + 1))
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            0.01 * z
        })
        .collect();
    Tensor::from_vec(candidates, channels + 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::finite_diff_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_weights_relax_to_uniform_rows() {
        let relaxed = RelaxedAllocation::from_weights(Tensor::zeros(1, 5), 1.0);
        for c in 0..5 {
            assert!((relaxed.rows().get(0, c) - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn high_alpha_approaches_arg_max() {
        let relaxed = RelaxedAllocation::from_weights(
            Tensor::from_vec(1, 3, vec![1.0, 0.0, 0.0]),
            1000.0,
        );
        assert!((relaxed.rows().get(0, 0) - 1.0).abs() < 1e-9);
        assert!(relaxed.rows().get(0, 1).abs() < 1e-9);
        assert!(relaxed.rows().get(0, 2).abs() < 1e-9);
    }

    #[test]
    fn softmax_hand_example() {
        let relaxed = RelaxedAllocation::from_weights(
            Tensor::from_vec(1, 2, vec![2.0_f64.ln(), 0.0]),
            1.0,
        );
        assert!((relaxed.rows().get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((relaxed.rows().get(0, 1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_schedule_values() {
        let s = AlphaSchedule::full_scale();
        assert_eq!(s.alpha_at(0), 1.0);
        assert_eq!(s.alpha_at(900_000), 1013.5);
        let flat = AlphaSchedule {
            alpha0: 3.0,
            gamma: 0.0,
            switch_iter: 10,
        };
        for t in [0, 5, 1_000_000] {
            assert_eq!(flat.alpha_at(t), 3.0);
        }
    }

    #[test]
    fn lambda_schedule_values() {
        let s = LambdaSchedule::full_scale_annealed();
        assert_eq!(s.lambda_at(0), 0.2);
        assert_eq!(s.lambda_at(100_000), 0.05);
        assert_eq!(s.lambda_at(200_000), 0.0125);
        assert_eq!(s.lambda_at(99_999), 0.2);
        let f = LambdaSchedule::fixed(0.07);
        assert_eq!(f.lambda_at(0), 0.07);
        assert_eq!(f.lambda_at(10_000_000), 0.07);
    }

    #[test]
    fn harden_takes_arg_max_with_low_index_ties() {
        // Probabilities (0.1, 0.7, 0.2) correspond to weights in that order.
        let relaxed = RelaxedAllocation::from_weights(
            Tensor::from_vec(1, 3, vec![0.1_f64.ln(), 0.7_f64.ln(), 0.2_f64.ln()]),
            1.0,
        );
        assert_eq!(relaxed.harden().assignment(), &[1]);
        let uniform = RelaxedAllocation::from_weights(Tensor::zeros(1, 4), 1.0);
        assert_eq!(uniform.harden().assignment(), &[0]);
    }

    #[test]
    fn harden_then_relax_at_high_alpha_is_one_hot() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let weights = init_weights(20, 3, &mut rng);
        let hard = RelaxedAllocation::from_weights(weights.clone(), 1.0).harden();
        // Re-relax one-hot-scaled weights at extreme alpha.
        let mut spiked = Tensor::zeros(20, 4);
        for (r, &a) in hard.assignment().iter().enumerate() {
            spiked.set(r, a, 1.0);
        }
        let relaxed = RelaxedAllocation::from_weights(spiked, 1e6);
        for (r, &a) in hard.assignment().iter().enumerate() {
            for c in 0..4 {
                let want = if c == a { 1.0 } else { 0.0 };
                assert!((relaxed.rows().get(r, c) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn harden_is_independent_of_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let weights = init_weights(50, 4, &mut rng);
        let reference = RelaxedAllocation::from_weights(weights.clone(), 0.1).harden();
        for alpha in [1.0, 10.0, 100.0] {
            let h = RelaxedAllocation::from_weights(weights.clone(), alpha).harden();
            assert_eq!(h, reference);
        }
    }

    #[test]
    fn regularizer_paper_verbatim_values() {
        // All mass on "no beacon" across 625 sites at lambda = 0.2 -> 125.
        let mut rows = Tensor::zeros(625, 5);
        for r in 0..625 {
            rows.set(r, 0, 1.0);
        }
        assert_eq!(regularizer_value(&rows, 0.2, RegSign::PaperVerbatim), 125.0);
        assert_eq!(regularizer_value(&rows, 0.0, RegSign::PaperVerbatim), 0.0);

        let mut two = Tensor::zeros(2, 3);
        two.set(0, 0, 0.3);
        two.set(1, 0, 0.5);
        let got = regularizer_value(&two, 1.0, RegSign::PaperVerbatim);
        assert!((got - 0.8).abs() < 1e-15);
    }

    #[test]
    fn taped_regularizer_matches_untaped_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let weights = init_weights(10, 4, &mut rng);
        let relaxed = RelaxedAllocation::from_weights(weights.clone(), 2.0);
        for sign in [RegSign::PaperVerbatim, RegSign::BeaconPenalty] {
            let mut tape = Tape::new();
            let w = tape.leaf(weights.clone());
            let rows = relax(&mut tape, w, 2.0);
            let r = regularizer(&mut tape, rows, 0.37, sign);
            let want = regularizer_value(relaxed.rows(), 0.37, sign);
            assert!((tape.value(r).scalar_value() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn beacon_counts() {
        let hard = HardAllocation::new(vec![0, 0, 3, 1], 4).unwrap();
        assert_eq!(hard.beacon_count(), 2);

        // Uniform rows over 5 entries: expected count 10 * (1 - 0.2) = 8.
        let relaxed = RelaxedAllocation::from_weights(Tensor::zeros(10, 5), 1.0);
        assert!((relaxed.expected_beacon_count() - 8.0).abs() < 1e-12);

        // One-hot rows: expected equals hard exactly.
        let mut weights = Tensor::zeros(4, 5);
        for (r, &a) in [0usize, 2, 0, 4].iter().enumerate() {
            weights.set(r, a, 30.0);
        }
        let relaxed = RelaxedAllocation::from_weights(weights, 100.0);
        let hard = relaxed.harden();
        assert_eq!(relaxed.expected_beacon_count(), hard.beacon_count() as f64);
    }

    #[test]
    fn assignment_index_out_of_range_is_rejected() {
        let err = HardAllocation::new(vec![0, 5], 4).unwrap_err();
        assert!(err.to_string().contains("exceeds channel count"), "{err}");
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let w = init_weights(6, 3, &mut rng);
            let c: f64 = rand::Rng::gen_range(&mut rng, -5.0..5.0);
            let shifted = w.map(|x| x + c);
            let a = RelaxedAllocation::from_weights(w, 2.0);
            let b = RelaxedAllocation::from_weights(shifted, 2.0);
            for (x, y) in a.rows().as_slice().iter().zip(b.rows().as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn row_entropy_is_non_increasing_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let weights = init_weights(12, 4, &mut rng);
        let entropy = |rows: &Tensor, r: usize| -> f64 {
            rows.row(r).iter().map(|&p| -p * p.ln()).sum()
        };
        let alphas = [0.1, 1.0, 10.0, 100.0];
        for r in 0..12 {
            let mut last = f64::INFINITY;
            for &alpha in &alphas {
                let rows = softmax_rows_scaled(&weights, alpha);
                let h = entropy(&rows, r);
                assert!(h <= last + 1e-12, "entropy rose at alpha {alpha}");
                last = h;
            }
        }
    }

    #[test]
    fn rows_are_valid_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let relaxed = RelaxedAllocation::from_weights(init_weights(40, 6, &mut rng), 3.0);
        for r in 0..40 {
            let total: f64 = relaxed.rows().row(r).iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(relaxed.rows().row(r).iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn regularizer_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let l = 6;
        let c = 3;
        let w0: Vec<f64> = (0..l * (c + 1))
            .map(|_| rand::Rng::gen_range(&mut rng, -0.5..0.5))
            .collect();
        for sign in [RegSign::PaperVerbatim, RegSign::BeaconPenalty] {
            let err = finite_diff_check(
                move |t, flat| {
                    let w = t.reshape(flat, l, c + 1);
                    let rows = relax(t, w, 2.0);
                    regularizer(t, rows, 0.8, sign)
                },
                &w0,
                1e-5,
            );
            assert!(err < 1e-6, "relative error {err}");
        }
    }

    #[test]
    fn hard_allocation_serializes_per_candidate() {
        let map = EnvironmentMap::with_grid(1.0, 0.7, vec![], 2, 2).unwrap();
        let alloc = HardAllocation::new(vec![0, 2, 1, 0], 4).unwrap();
        let text = alloc.serialize(&map);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "0 0.25 0.175 0");
        assert_eq!(lines[1], "1 0.75 0.175 2");
    }
}
