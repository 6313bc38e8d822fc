//! Nadaraya-Watson machinery: Gaussian kernel weights, generalized
//! counts, transition-expectation and -variance estimators, and the
//! representative-point transition buffer.
//!
//! For a query pair `(s, a)` and stored samples `l` the smoother uses
//! raw weights `w_l = g(rho((s,a), (s_l,a_l)) / sigma)`, a generalized
//! count `C = beta + sum_l w_l`, and normalized weights
//! `w~_l = w_l / C`. The normalized weights define a deficit
//! distribution over observed next states: `sum_l w~_l = 1 - beta / C`.

use crate::error::{Error, Result};
use crate::metric::{ActionId, ProductMetric, StatePoint};
use std::io::{BufRead, Write};

/// Raw weights below this cutoff are treated as exactly zero; Gaussian
/// tails underflow long before the cutoff changes any result above
/// test tolerances.
pub const RAW_WEIGHT_CUTOFF: f64 = 1e-12;

/// The Gaussian kernel `g(z) = exp(-z^2 / 2)` together with the
/// constants the theory-constant family needs: `C1` bounds `g`, `C2`
/// bounds `|g'|`, and `g(4) > 0`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianKernel;

impl GaussianKernel {
    /// Supremum of `g`.
    pub const C1: f64 = 1.0;

    /// Supremum of `|g'|`, attained at `z = 1`: `e^{-1/2}`.
    pub fn c2(&self) -> f64 {
        (-0.5f64).exp()
    }

    /// `g(4) = e^{-8}`.
    pub fn g4(&self) -> f64 {
        (-8.0f64).exp()
    }

    /// Evaluate `g(z)` for `z >= 0`.
    pub fn eval(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(Error::input(format!("kernel argument must be >= 0, got {z}")));
        }
        Ok(self.eval_unchecked(z))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, z: f64) -> f64 {
        (-0.5 * z * z).exp()
    }
}

/// Bandwidth and regularization of the smoother.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmootherParams {
    pub sigma: f64,
    pub beta: f64,
}

impl SmootherParams {
    pub fn new(sigma: f64, beta: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::input(format!("bandwidth sigma must be positive, got {sigma}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::input(format!("beta must lie in (0, 1], got {beta}")));
        }
        Ok(SmootherParams { sigma, beta })
    }
}

/// A state-action pair used as a smoother query or stored sample
/// location.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryPoint {
    pub state: StatePoint,
    pub action: ActionId,
}

impl QueryPoint {
    pub fn new(state: impl Into<StatePoint>, action: ActionId) -> Self {
        QueryPoint { state: state.into(), action }
    }

    pub fn as_pair(&self) -> (&StatePoint, ActionId) {
        (&self.state, self.action)
    }
}

/// `z^2` beyond which the Gaussian weight is certainly below
/// [`RAW_WEIGHT_CUTOFF`]; lets the hot loops skip the exponential from
/// the squared distance alone.
const Z_SQ_CUTOFF: f64 = 56.0;

/// Raw kernel weight of a stored sample location for a query pair:
/// `g(rho(query, sample) / sigma)`, zeroed below [`RAW_WEIGHT_CUTOFF`].
pub fn raw_weight(
    query: &QueryPoint,
    sample: &QueryPoint,
    params: &SmootherParams,
    metric: &ProductMetric,
) -> f64 {
    let action_gap = match metric.action_metric {
        crate::metric::ActionMetric::Gap(gap) => {
            if query.action == sample.action {
                0.0
            } else {
                gap
            }
        }
        crate::metric::ActionMetric::Disjoint => {
            if query.action == sample.action {
                0.0
            } else {
                return 0.0;
            }
        }
    };
    let state_sq = query.state.distance_sq(&sample.state);
    let z_sq = if action_gap == 0.0 {
        state_sq / (params.sigma * params.sigma)
    } else {
        let z = (state_sq.sqrt() + action_gap) / params.sigma;
        z * z
    };
    if z_sq > Z_SQ_CUTOFF {
        return 0.0;
    }
    let w = (-0.5 * z_sq).exp();
    if w < RAW_WEIGHT_CUTOFF {
        0.0
    } else {
        w
    }
}

/// One stored transition: a representative index, the raw observed next
/// state, and how many identical observations it stands for.
#[derive(Clone, Debug)]
pub struct TransitionSample {
    pub rep: usize,
    pub next_state: StatePoint,
    pub multiplicity: u32,
}

/// Transition samples collected at one step index.
///
/// Query locations within `merge_threshold` of an existing
/// representative are snapped onto it; next states are never merged, so
/// the estimate at a representative remains the weighted empirical
/// distribution of every transition observed near it.
#[derive(Clone, Debug, Default)]
pub struct StepBuffer {
    reps: Vec<QueryPoint>,
    samples: Vec<TransitionSample>,
}

impl StepBuffer {
    pub fn reps(&self) -> &[QueryPoint] {
        &self.reps
    }

    pub fn samples(&self) -> &[TransitionSample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of stored observations, counting multiplicities.
    pub fn sample_count(&self) -> u64 {
        self.samples.iter().map(|s| u64::from(s.multiplicity)).sum()
    }

    /// Insert an observation, snapping the query location onto the
    /// nearest representative within `merge_threshold` (new
    /// representative otherwise). Returns the representative index.
    pub fn merge_or_insert(
        &mut self,
        point: QueryPoint,
        next_state: StatePoint,
        merge_threshold: f64,
        metric: &ProductMetric,
    ) -> usize {
        let mut nearest: Option<(usize, f64)> = None;
        for (idx, rep) in self.reps.iter().enumerate() {
            let d = metric.distance_unchecked(point.as_pair(), rep.as_pair());
            if nearest.map_or(true, |(_, best)| d < best) {
                nearest = Some((idx, d));
            }
        }
        let rep = match nearest {
            Some((idx, d)) if d <= merge_threshold => idx,
            _ => {
                self.reps.push(point);
                self.reps.len() - 1
            }
        };
        if let Some(existing) = self
            .samples
            .iter_mut()
            .find(|s| s.rep == rep && s.next_state == next_state)
        {
            existing.multiplicity += 1;
        } else {
            self.samples.push(TransitionSample { rep, next_state, multiplicity: 1 });
        }
        rep
    }

    /// Generalized count `C = beta + sum_l w_l` of a query pair,
    /// counting multiplicities.
    pub fn generalized_count(
        &self,
        query: &QueryPoint,
        params: &SmootherParams,
        metric: &ProductMetric,
    ) -> f64 {
        params.beta + self.raw_mass(query, params, metric).iter().sum::<f64>()
    }

    /// Normalized weight mass per stored sample entry (an entry of
    /// multiplicity `m` carries the mass of `m` identical samples).
    /// Entries align with [`StepBuffer::samples`]; the empty buffer
    /// yields an empty vector. For a non-empty buffer the masses sum to
    /// `1 - beta / C`.
    pub fn normalized_weights(
        &self,
        query: &QueryPoint,
        params: &SmootherParams,
        metric: &ProductMetric,
    ) -> Vec<f64> {
        let mut mass = self.raw_mass(query, params, metric);
        let count = params.beta + mass.iter().sum::<f64>();
        for m in &mut mass {
            *m /= count;
        }
        mass
    }

    fn raw_mass(
        &self,
        query: &QueryPoint,
        params: &SmootherParams,
        metric: &ProductMetric,
    ) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| f64::from(s.multiplicity) * raw_weight(query, &self.reps[s.rep], params, metric))
            .collect()
    }

    /// Generalized count together with the deficit expectation and
    /// variance of per-sample `values` at `query`, in one allocation-free
    /// sweep. Agrees with composing [`StepBuffer::generalized_count`],
    /// [`StepBuffer::normalized_weights`], [`estimate_expectation`] and
    /// [`estimate_variance`] up to rounding.
    pub fn smoothed_moments(
        &self,
        query: &QueryPoint,
        values: &[f64],
        params: &SmootherParams,
        metric: &ProductMetric,
    ) -> (f64, f64, f64) {
        debug_assert_eq!(values.len(), self.samples.len());
        let mut count = params.beta;
        let mut weighted = 0.0;
        for (sample, value) in self.samples.iter().zip(values) {
            let w = f64::from(sample.multiplicity)
                * raw_weight(query, &self.reps[sample.rep], params, metric);
            if w > 0.0 {
                count += w;
                weighted += w * value;
            }
        }
        let mean = weighted / count;
        let mut variance = 0.0;
        for (sample, value) in self.samples.iter().zip(values) {
            let w = f64::from(sample.multiplicity)
                * raw_weight(query, &self.reps[sample.rep], params, metric);
            if w > 0.0 {
                variance += w * (value - mean) * (value - mean);
            }
        }
        (count, mean, variance / count)
    }
}

/// Deficit expectation `sum_l w~_l f_l` of per-sample values under
/// normalized weights. The empty buffer estimates 0.
pub fn estimate_expectation(f_values: &[f64], weights: &[f64]) -> Result<f64> {
    if f_values.len() != weights.len() {
        return Err(Error::input(format!(
            "{} function values vs {} weights",
            f_values.len(),
            weights.len()
        )));
    }
    Ok(f_values.iter().zip(weights).map(|(f, w)| f * w).sum())
}

/// Deficit variance `sum_l w~_l (f_l - P^f)^2` around the deficit
/// expectation. Non-negative by construction; 0 for empty input.
pub fn estimate_variance(f_values: &[f64], weights: &[f64]) -> Result<f64> {
    let mean = estimate_expectation(f_values, weights)?;
    Ok(f_values
        .iter()
        .zip(weights)
        .map(|(f, w)| w * (f - mean) * (f - mean))
        .sum())
}

/// Per-step transition buffers for a whole horizon.
#[derive(Clone, Debug)]
pub struct TransitionBuffer {
    steps: Vec<StepBuffer>,
    merge_threshold: f64,
}

impl TransitionBuffer {
    pub fn new(horizon: usize, merge_threshold: f64) -> Self {
        TransitionBuffer { steps: vec![StepBuffer::default(); horizon], merge_threshold }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn merge_threshold(&self) -> f64 {
        self.merge_threshold
    }

    /// Buffer at a 1-based step index.
    pub fn step(&self, step: usize) -> &StepBuffer {
        &self.steps[step - 1]
    }

    pub fn insert(
        &mut self,
        step: usize,
        point: QueryPoint,
        next_state: StatePoint,
        metric: &ProductMetric,
    ) -> usize {
        let threshold = self.merge_threshold;
        self.steps[step - 1].merge_or_insert(point, next_state, threshold, metric)
    }

    pub fn total_samples(&self) -> u64 {
        self.steps.iter().map(|s| s.sample_count()).sum()
    }

    /// Dump as CSV rows `step,action,q...,n...`, one row per
    /// observation (multiplicities expanded).
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        for (idx, buf) in self.steps.iter().enumerate() {
            let step = idx + 1;
            for sample in &buf.samples {
                let rep = &buf.reps[sample.rep];
                for _ in 0..sample.multiplicity {
                    write!(out, "{step},{}", rep.action.0)?;
                    for c in rep.state.coords() {
                        write!(out, ",{c}")?;
                    }
                    for c in sample.next_state.coords() {
                        write!(out, ",{c}")?;
                    }
                    writeln!(out)?;
                }
            }
        }
        Ok(())
    }

    /// Rebuild a buffer from [`TransitionBuffer::write_csv`] output.
    /// Rows carry already-snapped query locations, so re-inserting them
    /// reproduces the original representatives.
    pub fn read_csv(
        input: &mut impl BufRead,
        horizon: usize,
        merge_threshold: f64,
        metric: &ProductMetric,
    ) -> Result<Self> {
        let mut buffer = TransitionBuffer::new(horizon, merge_threshold);
        for (line_no, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 4 || fields.len() % 2 != 0 {
                return Err(Error::input(format!(
                    "buffer csv line {}: expected step,action,q...,n..., got {} fields",
                    line_no + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::input(format!("buffer csv line {}: {e}", line_no + 1)))
            };
            let step: usize = fields[0]
                .parse()
                .map_err(|e| Error::input(format!("buffer csv line {}: {e}", line_no + 1)))?;
            if step == 0 || step > horizon {
                return Err(Error::input(format!(
                    "buffer csv line {}: step {step} outside 1..={horizon}",
                    line_no + 1
                )));
            }
            let action: usize = fields[1]
                .parse()
                .map_err(|e| Error::input(format!("buffer csv line {}: {e}", line_no + 1)))?;
            let dim = (fields.len() - 2) / 2;
            let mut query = Vec::with_capacity(dim);
            let mut next = Vec::with_capacity(dim);
            for f in &fields[2..2 + dim] {
                query.push(parse(f)?);
            }
            for f in &fields[2 + dim..] {
                next.push(parse(f)?);
            }
            buffer.insert(
                step,
                QueryPoint::new(query, ActionId(action)),
                StatePoint::new(next),
                metric,
            );
        }
        Ok(buffer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(sigma: f64, beta: f64) -> SmootherParams {
        SmootherParams::new(sigma, beta).unwrap()
    }

    fn qp(coords: &[f64], action: usize) -> QueryPoint {
        QueryPoint::new(coords.to_vec(), ActionId(action))
    }

    #[test]
    fn kernel_values() {
        let k = GaussianKernel;
        assert_eq!(k.eval(0.0).unwrap(), 1.0);
        assert_relative_eq!(k.eval(1.0).unwrap(), 0.6065306597126334, max_relative = 1e-12);
        assert_relative_eq!(k.eval(4.0).unwrap(), 3.3546262790251185e-4, max_relative = 1e-12);
        assert!(k.eval(-0.1).is_err());
        assert!(k.g4() > 0.0);
        assert_relative_eq!(k.c2(), 0.6065306597126334, max_relative = 1e-12);
    }

    #[test]
    fn kernel_non_increasing() {
        let k = GaussianKernel;
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let v = k.eval(i as f64 * 0.1).unwrap();
            assert!(v <= prev);
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn raw_weight_examples() {
        let p = params(0.1, 0.05);
        let m = ProductMetric::default();
        let q = qp(&[0.0, 0.0], 0);
        assert_eq!(raw_weight(&q, &q, &p, &m), 1.0);
        let at_sigma = qp(&[0.1, 0.0], 0);
        assert_relative_eq!(raw_weight(&q, &at_sigma, &p, &m), (-0.5f64).exp(), max_relative = 1e-12);
        // 10 bandwidths out: exp(-50) underflows the cutoff.
        let far = qp(&[1.0, 0.0], 0);
        assert_eq!(raw_weight(&q, &far, &p, &m), 0.0);
    }

    #[test]
    fn generalized_count_examples() {
        let m = ProductMetric::default();
        let mut buf = StepBuffer::default();
        let q = qp(&[0.0, 0.0], 0);
        assert_relative_eq!(buf.generalized_count(&q, &params(0.1, 0.05), &m), 0.05);

        buf.merge_or_insert(q.clone(), StatePoint::new(vec![0.5, 0.5]), 0.0, &m);
        assert_relative_eq!(buf.generalized_count(&q, &params(0.1, 0.05), &m), 1.05);

        let mut two = StepBuffer::default();
        two.merge_or_insert(qp(&[0.1, 0.0], 0), StatePoint::new(vec![0.0, 0.0]), 0.0, &m);
        two.merge_or_insert(qp(&[-0.1, 0.0], 0), StatePoint::new(vec![1.0, 0.0]), 0.0, &m);
        let c = two.generalized_count(&q, &params(0.1, 0.01), &m);
        assert_relative_eq!(c, 0.01 + 2.0 * (-0.5f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn normalized_weight_examples() {
        let m = ProductMetric::default();
        let empty = StepBuffer::default();
        let q = qp(&[0.0], 0);
        assert!(empty.normalized_weights(&q, &params(0.1, 0.5), &m).is_empty());

        let mut one = StepBuffer::default();
        one.merge_or_insert(q.clone(), StatePoint::new(vec![1.0]), 0.0, &m);
        let w = one.normalized_weights(&q, &params(0.1, 1.0), &m);
        assert_eq!(w.len(), 1);
        assert_relative_eq!(w[0], 0.5, max_relative = 1e-12);

        let mut two = StepBuffer::default();
        two.merge_or_insert(qp(&[0.2], 0), StatePoint::new(vec![0.0]), 0.0, &m);
        two.merge_or_insert(qp(&[-0.2], 0), StatePoint::new(vec![1.0]), 0.0, &m);
        let w = two.normalized_weights(&q, &params(0.1, 0.3), &m);
        assert_relative_eq!(w[0], w[1], max_relative = 1e-12);
    }

    #[test]
    fn expectation_examples() {
        // Two samples of raw weight 1 each, beta = 0.01.
        let m = ProductMetric::default();
        let mut buf = StepBuffer::default();
        buf.merge_or_insert(qp(&[0.0], 0), StatePoint::new(vec![0.0]), 0.0, &m);
        buf.merge_or_insert(qp(&[0.0], 0), StatePoint::new(vec![1.0]), 0.0, &m);
        let w = buf.normalized_weights(&qp(&[0.0], 0), &params(0.1, 0.01), &m);
        let est = estimate_expectation(&[0.0, 1.0], &w).unwrap();
        assert_relative_eq!(est, 1.0 / 2.01, max_relative = 1e-12);

        // Constant function shrinks toward zero by the deficit mass.
        let est = estimate_expectation(&[3.0, 3.0], &w).unwrap();
        let mass: f64 = w.iter().sum();
        assert_relative_eq!(est, 3.0 * mass, max_relative = 1e-12);

        assert_eq!(estimate_expectation(&[], &[]).unwrap(), 0.0);
        assert!(estimate_expectation(&[1.0], &[]).is_err());
    }

    #[test]
    fn variance_examples() {
        let m = ProductMetric::default();
        let mut buf = StepBuffer::default();
        buf.merge_or_insert(qp(&[0.0], 0), StatePoint::new(vec![7.0]), 0.0, &m);
        let w = buf.normalized_weights(&qp(&[0.0], 0), &params(0.1, 0.01), &m);
        // Single sample, f = 1: w~ (1 - w~)^2 with w~ = 100/101.
        let v = estimate_variance(&[1.0], &w).unwrap();
        assert_relative_eq!(v, 100.0 / 101.0f64.powi(3), max_relative = 1e-10);

        assert_eq!(estimate_variance(&[], &[]).unwrap(), 0.0);

        // Constant f: variance shrinks to 0 as beta -> 0.
        let mut prev = f64::INFINITY;
        for beta in [0.5, 0.1, 0.01, 1e-6] {
            let w = buf.normalized_weights(&qp(&[0.0], 0), &params(0.1, beta), &m);
            let v = estimate_variance(&[2.0], &w).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn merge_snaps_queries_and_keeps_next_states() {
        let m = ProductMetric::default();
        let mut buf = StepBuffer::default();
        buf.merge_or_insert(qp(&[0.0, 0.0], 0), StatePoint::new(vec![0.5, 0.0]), 0.02, &m);
        assert_eq!(buf.reps().len(), 1);

        // Within threshold: snapped; gains a sample at the representative.
        buf.merge_or_insert(qp(&[0.01, 0.0], 0), StatePoint::new(vec![0.6, 0.0]), 0.02, &m);
        assert_eq!(buf.reps().len(), 1);
        assert_eq!(buf.samples().len(), 2);
        assert_eq!(buf.sample_count(), 2);

        // Outside threshold: new representative.
        buf.merge_or_insert(qp(&[0.03, 0.0], 0), StatePoint::new(vec![0.7, 0.0]), 0.02, &m);
        assert_eq!(buf.reps().len(), 2);

        // Identical observation: multiplicity bump, not a new entry.
        buf.merge_or_insert(qp(&[0.0, 0.0], 0), StatePoint::new(vec![0.5, 0.0]), 0.02, &m);
        assert_eq!(buf.samples().len(), 3);
        assert_eq!(buf.sample_count(), 4);
    }

    #[test]
    fn merge_respects_disjoint_actions() {
        let m = ProductMetric::disjoint();
        let mut buf = StepBuffer::default();
        buf.merge_or_insert(qp(&[0.0], 0), StatePoint::new(vec![0.0]), 0.5, &m);
        buf.merge_or_insert(qp(&[0.0], 1), StatePoint::new(vec![0.0]), 0.5, &m);
        assert_eq!(buf.reps().len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let m = ProductMetric::disjoint();
        let mut buf = TransitionBuffer::new(2, 0.02);
        buf.insert(1, qp(&[0.0, 0.0], 0), StatePoint::new(vec![0.1, 0.0]), &m);
        buf.insert(1, qp(&[0.005, 0.0], 0), StatePoint::new(vec![0.11, 0.0]), &m);
        buf.insert(2, qp(&[0.1, 0.0], 3), StatePoint::new(vec![0.1, -0.1]), &m);
        buf.insert(2, qp(&[0.1, 0.0], 3), StatePoint::new(vec![0.1, -0.1]), &m);

        let mut bytes = Vec::new();
        buf.write_csv(&mut bytes).unwrap();
        let restored =
            TransitionBuffer::read_csv(&mut bytes.as_slice(), 2, 0.02, &m).unwrap();

        assert_eq!(restored.step(1).reps().len(), buf.step(1).reps().len());
        assert_eq!(restored.step(2).sample_count(), 2);
        let mut again = Vec::new();
        restored.write_csv(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn csv_rejects_malformed_rows() {
        let m = ProductMetric::default();
        let mut bad = "1,0,0.0".as_bytes();
        assert!(TransitionBuffer::read_csv(&mut bad, 2, 0.0, &m).is_err());
        let mut bad_step = "9,0,0.0,0.0".as_bytes();
        assert!(TransitionBuffer::read_csv(&mut bad_step, 2, 0.0, &m).is_err());
    }

    #[test]
    fn smoother_params_validation() {
        assert!(SmootherParams::new(0.0, 0.5).is_err());
        assert!(SmootherParams::new(0.1, 0.0).is_err());
        assert!(SmootherParams::new(0.1, 1.5).is_err());
        assert!(SmootherParams::new(0.1, 1.0).is_ok());
    }

    /// Random small buffers plus a random query, for the invariants below.
    fn arb_buffer_and_query() -> impl Strategy<Value = (StepBuffer, QueryPoint, SmootherParams)> {
        let coord = -1.0f64..1.0;
        let sample = (coord.clone(), coord.clone(), 0usize..3, coord.clone(), coord.clone());
        (
            proptest::collection::vec(sample, 1..20),
            (-1.0f64..1.0, -1.0f64..1.0, 0usize..3),
            0.01f64..0.2,
            0.001f64..1.0,
        )
            .prop_map(|(samples, (qx, qy, qa), sigma, beta)| {
                let metric = ProductMetric::default();
                let mut buf = StepBuffer::default();
                for (x, y, a, nx, ny) in samples {
                    buf.merge_or_insert(
                        QueryPoint::new(vec![x, y], ActionId(a)),
                        StatePoint::new(vec![nx, ny]),
                        0.02,
                        &metric,
                    );
                }
                (
                    buf,
                    QueryPoint::new(vec![qx, qy], ActionId(qa)),
                    SmootherParams::new(sigma, beta).unwrap(),
                )
            })
    }

    proptest! {
        #[test]
        fn weight_mass_identity((buf, query, p) in arb_buffer_and_query()) {
            let metric = ProductMetric::default();
            let w = buf.normalized_weights(&query, &p, &metric);
            let count = buf.generalized_count(&query, &p, &metric);
            let total: f64 = w.iter().sum();
            prop_assert!((total + p.beta / count - 1.0).abs() < 1e-12);
            for &wi in &w {
                prop_assert!((0.0..1.0).contains(&wi));
            }
        }

        #[test]
        fn variance_identity_and_sign((buf, query, p) in arb_buffer_and_query()) {
            let metric = ProductMetric::default();
            let w = buf.normalized_weights(&query, &p, &metric);
            let f: Vec<f64> = buf
                .samples()
                .iter()
                .map(|s| s.next_state.coords()[0] * 10.0 + s.next_state.coords()[1])
                .collect();
            let var = estimate_variance(&f, &w).unwrap();
            prop_assert!(var >= 0.0);
            let mean = estimate_expectation(&f, &w).unwrap();
            let mass: f64 = w.iter().sum();
            let sq: f64 = f.iter().zip(&w).map(|(fi, wi)| wi * fi * fi).sum();
            let expanded = sq - 2.0 * mean * mean + mass * mean * mean;
            prop_assert!((var - expanded).abs() < 1e-10 * (1.0 + var.abs()));
        }

        #[test]
        fn count_monotone_under_growth((mut buf, query, p) in arb_buffer_and_query()) {
            let metric = ProductMetric::default();
            let before = buf.generalized_count(&query, &p, &metric);
            buf.merge_or_insert(
                QueryPoint::new(vec![0.3, -0.3], ActionId(1)),
                StatePoint::new(vec![0.0, 0.0]),
                0.02,
                &metric,
            );
            let after = buf.generalized_count(&query, &p, &metric);
            prop_assert!(after >= before - 1e-15);
        }

        #[test]
        fn weighted_distance_bound((buf, query, p) in arb_buffer_and_query()) {
            // sum_l w~_l rho(query, sample_l) <= 2 sigma (1 + sqrt(log(k / beta + e)))
            let metric = ProductMetric::default();
            let w = buf.normalized_weights(&query, &p, &metric);
            let weighted: f64 = buf
                .samples()
                .iter()
                .zip(&w)
                .map(|(s, wi)| {
                    wi * metric
                        .distance_unchecked(query.as_pair(), buf.reps()[s.rep].as_pair())
                })
                .sum();
            let k = buf.sample_count() as f64 + 1.0;
            let bound = 2.0 * p.sigma * (1.0 + (k / p.beta + std::f64::consts::E).ln().sqrt());
            prop_assert!(weighted <= bound + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn fused_moments_agree_with_reference((buf, query, p) in arb_buffer_and_query()) {
            let metric = ProductMetric::default();
            let values: Vec<f64> = buf
                .samples()
                .iter()
                .map(|s| 3.0 * s.next_state.coords()[0] - s.next_state.coords()[1])
                .collect();
            let (count, mean, var) = buf.smoothed_moments(&query, &values, &p, &metric);
            let ref_count = buf.generalized_count(&query, &p, &metric);
            let w = buf.normalized_weights(&query, &p, &metric);
            let ref_mean = estimate_expectation(&values, &w).unwrap();
            let ref_var = estimate_variance(&values, &w).unwrap();
            prop_assert!((count - ref_count).abs() <= 1e-12 * ref_count.max(1.0));
            prop_assert!((mean - ref_mean).abs() <= 1e-12 * (1.0 + ref_mean.abs()));
            prop_assert!((var - ref_var).abs() <= 1e-12 * (1.0 + ref_var.abs()));
        }
    }

    #[test]
    fn tabular_limit_matches_exact_match_average() {
        // Grid spacing 1, sigma = spacing / 100, beta ~ 0: cross weights
        // are exp(-5000) and the estimate reduces to the empirical mean
        // over exact-match samples.
        let metric = ProductMetric::default();
        let p = params(0.01, 1e-8);
        let mut buf = StepBuffer::default();
        let query = qp(&[0.0, 0.0], 0);
        buf.merge_or_insert(query.clone(), StatePoint::new(vec![2.0, 0.0]), 0.0, &metric);
        buf.merge_or_insert(query.clone(), StatePoint::new(vec![4.0, 0.0]), 0.0, &metric);
        buf.merge_or_insert(qp(&[1.0, 0.0], 0), StatePoint::new(vec![100.0, 0.0]), 0.0, &metric);
        let w = buf.normalized_weights(&query, &p, &metric);
        let f: Vec<f64> = buf.samples().iter().map(|s| s.next_state.coords()[0]).collect();
        let est = estimate_expectation(&f, &w).unwrap();
        assert!((est - 3.0).abs() < 1e-6, "estimate {est} should match exact-match mean 3");
    }
}
