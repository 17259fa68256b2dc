//! Training objective: cross-entropy on the true labels plus a distillation
//! term for every past class group, optionally regularized by the student's
//! entropy (maximum-entropy distillation).
//!
//! For a past group with teacher soft labels `p` and student probabilities `q`
//! (both restricted to that group's classes) the regularized distillation term
//! is
//!
//! ```text
//! L_D(p, q) = CE(p, q) - H(q) = sum_j (q_j - p_j) ln q_j
//! ```
//!
//! and the batch objective is `CE(y, q) + alpha * sum_groups L_D`, every term
//! averaged over the batch.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::softmax::{log_softmax_unchecked, softmax_unchecked};
use crate::scalar::Scalar;

/// Nonnegative values over a class set that sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityDistribution<T> {
    values: Vec<T>,
}

impl<T: Scalar> ProbabilityDistribution<T> {
    /// Validates entries in `[0, 1]` and a unit sum (to `sqrt(eps)` of `T`).
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("empty probability distribution"));
        }
        let tol = T::epsilon().sqrt();
        if values
            .iter()
            .any(|&v| !v.is_finite() || v < T::zero() || v > T::one() + tol)
        {
            return Err(Error::input("probability entries must lie in [0, 1]"));
        }
        let sum: T = values.iter().copied().sum();
        if (sum - T::one()).abs() > tol {
            return Err(Error::input(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_raw(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("uniform distribution over zero classes"));
        }
        let v = T::one() / T::of(n as f64);
        Ok(Self { values: vec![v; n] })
    }

    /// Point mass on `index` over `n` classes.
    pub fn one_hot(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::input(format!("one-hot index {index} out of {n}")));
        }
        let mut values = vec![T::zero(); n];
        values[index] = T::one();
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn clamped_ln<T: Scalar>(p: T) -> T {
    p.max(T::log_floor()).ln()
}

fn same_dim<T>(a: &ProbabilityDistribution<T>, b: &ProbabilityDistribution<T>) -> Result<()> {
    if a.values.len() != b.values.len() {
        return Err(Error::input(format!(
            "distribution dimensions differ: {} vs {}",
            a.values.len(),
            b.values.len()
        )));
    }
    Ok(())
}

/// `-sum_j target_j ln predicted_j`, with predicted probabilities floored at
/// [`Scalar::log_floor`].
pub fn cross_entropy<T: Scalar>(
    target: &ProbabilityDistribution<T>,
    predicted: &ProbabilityDistribution<T>,
) -> Result<T> {
    same_dim(target, predicted)?;
    Ok(-target
        .values
        .iter()
        .zip(&predicted.values)
        .map(|(&p, &q)| p * clamped_ln(q))
        .sum::<T>())
}

/// Shannon entropy in nats; `0 ln 0 = 0`.
pub fn entropy<T: Scalar>(dist: &ProbabilityDistribution<T>) -> T {
    -dist.values.iter().map(|&q| q * clamped_ln(q)).sum::<T>()
}

/// Entropy-regularized distillation `sum_j (student_j - teacher_j) ln student_j`,
/// which equals `cross_entropy(teacher, student) - entropy(student)`.
pub fn mer_distill<T: Scalar>(
    teacher: &ProbabilityDistribution<T>,
    student: &ProbabilityDistribution<T>,
) -> Result<T> {
    same_dim(teacher, student)?;
    Ok(teacher
        .values
        .iter()
        .zip(&student.values)
        .map(|(&p, &q)| (q - p) * clamped_ln(q))
        .sum())
}

/// Batch mean of [`mer_distill`] over aligned teacher/student rows.
pub fn mer_distill_batch<T: Scalar>(
    teachers: &[ProbabilityDistribution<T>],
    students: &[ProbabilityDistribution<T>],
) -> Result<T> {
    if teachers.len() != students.len() || teachers.is_empty() {
        return Err(Error::input(format!(
            "batch sizes must match and be non-empty: {} teachers, {} students",
            teachers.len(),
            students.len()
        )));
    }
    let mut acc = T::zero();
    for (p, q) in teachers.iter().zip(students) {
        acc += mer_distill(p, q)?;
    }
    Ok(acc / T::of(teachers.len() as f64))
}

fn check_group(group: &[usize], n: usize) -> Result<()> {
    if group.is_empty() {
        return Err(Error::input("empty class group"));
    }
    if let Some(&bad) = group.iter().find(|&&c| c >= n) {
        return Err(Error::input(format!(
            "class index {bad} outside {n} logits"
        )));
    }
    Ok(())
}

/// Softmax over the logits of `group` only.
pub fn group_softmax<T: Scalar>(logits: &[T], group: &[usize]) -> Result<ProbabilityDistribution<T>> {
    check_group(group, logits.len())?;
    let restricted: Vec<T> = group.iter().map(|&c| logits[c]).collect();
    crate::nncore::softmax(&restricted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar"))]
pub struct ObjectiveConfig<T> {
    /// Weight of the transfer (distillation) terms.
    pub alpha: T,
    /// Teacher logits are divided by this before the group softmax.
    pub temperature: T,
    /// Subtract the student entropy from each distillation term.
    pub mer_enabled: bool,
}

impl<T: Scalar> Default for ObjectiveConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::one(),
            temperature: T::one(),
            mer_enabled: true,
        }
    }
}

impl<T: Scalar> ObjectiveConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= T::zero()) {
            return Err(Error::config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.temperature.is_finite() && self.temperature > T::zero()) {
            return Err(Error::config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Objective value split into its components (all batch means).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub total: T,
    pub learn_term: T,
    /// One distillation value per past group, in schedule order.
    pub transfer_terms: Vec<T>,
    /// Student entropy restricted to each past group.
    pub entropy_values: Vec<T>,
}

/// Inputs of [`total_objective`] for one mini-batch.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveInputs<'a, T> {
    /// Output-unit index of each sample's true class.
    pub labels: &'a [usize],
    pub student_logits: ArrayView2<'a, T>,
    /// Frozen-model logits over the classes it knew (at least every past group).
    pub teacher_logits: Option<ArrayView2<'a, T>>,
    /// Output-unit indices of each past class group.
    pub past_groups: &'a [Vec<usize>],
}

/// Objective value for one batch.
pub fn total_objective<T: Scalar>(
    inputs: ObjectiveInputs<'_, T>,
    cfg: &ObjectiveConfig<T>,
) -> Result<LossBreakdown<T>> {
    evaluate(inputs, cfg, false).map(|(b, _)| b)
}

/// Objective value and its exact gradient with respect to the student logits.
pub fn objective_with_gradient<T: Scalar>(
    inputs: ObjectiveInputs<'_, T>,
    cfg: &ObjectiveConfig<T>,
) -> Result<(LossBreakdown<T>, Array2<T>)> {
    evaluate(inputs, cfg, true).map(|(b, g)| (b, g.expect("gradient requested")))
}

fn evaluate<T: Scalar>(
    inputs: ObjectiveInputs<'_, T>,
    cfg: &ObjectiveConfig<T>,
    want_grad: bool,
) -> Result<(LossBreakdown<T>, Option<Array2<T>>)> {
    cfg.validate()?;
    let ObjectiveInputs {
        labels,
        student_logits,
        teacher_logits,
        past_groups,
    } = inputs;
    let (n, n_classes) = student_logits.dim();
    if n == 0 {
        return Err(Error::input("empty mini-batch"));
    }
    if labels.len() != n {
        return Err(Error::input(format!(
            "{} labels for {n} logit rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::input(format!("label {bad} outside {n_classes} outputs")));
    }
    if student_logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite student logits"));
    }
    let teacher = match (teacher_logits, past_groups.is_empty()) {
        (None, false) => {
            return Err(Error::config(
                "past class groups exist but no teacher was provided",
            ))
        }
        (Some(t), false) => {
            if t.nrows() != n {
                return Err(Error::input(format!(
                    "teacher has {} rows for a batch of {n}",
                    t.nrows()
                )));
            }
            for g in past_groups {
                check_group(g, t.ncols().min(n_classes))?;
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::input("non-finite teacher logits"));
            }
            Some(t)
        }
        (_, true) => None,
    };

    let inv_n = T::one() / T::of(n as f64);
    let mut grad = want_grad.then(|| Array2::<T>::zeros((n, n_classes)));
    let mut learn = T::zero();
    let mut transfer = vec![T::zero(); past_groups.len()];
    let mut entropies = vec![T::zero(); past_groups.len()];

    for i in 0..n {
        let row: Vec<T> = student_logits.row(i).to_vec();
        let log_q = log_softmax_unchecked(&row);
        learn -= log_q[labels[i]];
        if let Some(g) = grad.as_mut() {
            for (c, lq) in log_q.iter().enumerate() {
                let target = if c == labels[i] { T::one() } else { T::zero() };
                g[[i, c]] += (lq.exp() - target) * inv_n;
            }
        }

        let Some(t) = teacher else { continue };
        for (k, group) in past_groups.iter().enumerate() {
            let zs: Vec<T> = group.iter().map(|&c| row[c]).collect();
            let zt: Vec<T> = group
                .iter()
                .map(|&c| t[[i, c]] / cfg.temperature)
                .collect();
            let p = softmax_unchecked(&zt);
            let lq = log_softmax_unchecked(&zs);
            let q: Vec<T> = lq.iter().map(|v| v.exp()).collect();
            let h = -q.iter().zip(&lq).map(|(&a, &b)| a * b).sum::<T>();
            entropies[k] += h;
            let value = if cfg.mer_enabled {
                q.iter()
                    .zip(&p)
                    .zip(&lq)
                    .map(|((&qj, &pj), &l)| (qj - pj) * l)
                    .sum::<T>()
            } else {
                -p.iter().zip(&lq).map(|(&pj, &l)| pj * l).sum::<T>()
            };
            transfer[k] += value;

            if let Some(g) = grad.as_mut() {
                let scale = cfg.alpha * inv_n;
                for (j, &c) in group.iter().enumerate() {
                    // d CE(p,q)/dz = q - p ; d(-H(q))/dz = q * (ln q + H)
                    let mut d = q[j] - p[j];
                    if cfg.mer_enabled {
                        d += q[j] * (lq[j] + h);
                    }
                    g[[i, c]] += scale * d;
                }
            }
        }
    }

    let learn_term = learn * inv_n;
    for v in transfer.iter_mut().chain(entropies.iter_mut()) {
        *v *= inv_n;
    }
    let total = learn_term + cfg.alpha * transfer.iter().copied().sum::<T>();
    Ok((
        LossBreakdown {
            total,
            learn_term,
            transfer_terms: transfer,
            entropy_values: entropies,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pd(v: &[f64]) -> ProbabilityDistribution<f64> {
        ProbabilityDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cross_entropy_examples() {
        let perfect = cross_entropy(&pd(&[1.0, 0.0]), &pd(&[1.0, 0.0])).unwrap();
        assert!(perfect.abs() < 1e-12);
        let half = pd(&[0.5, 0.5]);
        assert!((cross_entropy(&half, &half).unwrap() - 2f64.ln()).abs() < 1e-15);
        let ce = cross_entropy(&pd(&[1.0, 0.0, 0.0]), &pd(&[0.7, 0.2, 0.1])).unwrap();
        assert!((ce + 0.7f64.ln()).abs() < 1e-15);
        assert!((ce - 0.3567).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_dimension_mismatch() {
        assert!(matches!(
            cross_entropy(&pd(&[1.0]), &pd(&[0.5, 0.5])),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn cross_entropy_floor_keeps_result_finite() {
        let ce = cross_entropy(&pd(&[0.0, 1.0]), &pd(&[1.0, 0.0])).unwrap();
        assert!((ce - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&pd(&[0.0, 1.0, 0.0])), 0.0);
        assert!((entropy(&pd(&[0.25; 4])) - 4f64.ln()).abs() < 1e-15);
        assert!((entropy(&pd(&[0.5, 0.5])) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mer_distill_examples() {
        let p = pd(&[0.2, 0.3, 0.5]);
        assert!(mer_distill(&p, &p).unwrap().abs() < 1e-15);
        // termwise: (0.7-1) ln 0.7 + (0.3-0) ln 0.3
        let oracle = -0.3 * 0.7f64.ln() + 0.3 * 0.3f64.ln();
        let v = mer_distill(&pd(&[1.0, 0.0]), &pd(&[0.7, 0.3])).unwrap();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v + 0.2542).abs() < 1e-4);
    }

    #[test]
    fn group_softmax_examples() {
        let p = group_softmax(&[5.0, 0.0, 0.0], &[1, 2]).unwrap();
        assert_eq!(p.values(), &[0.5, 0.5]);
        assert_eq!(group_softmax(&[5.0, 1.0], &[1]).unwrap().values(), &[1.0]);
        let full = group_softmax(&[0.1, 0.4, -2.0], &[0, 1, 2]).unwrap();
        let plain = crate::nncore::softmax(&[0.1, 0.4, -2.0]).unwrap();
        assert_eq!(full, plain);
        assert!(matches!(group_softmax(&[1.0], &[]), Err(Error::Input(_))));
    }

    fn inputs<'a>(
        labels: &'a [usize],
        s: &'a Array2<f64>,
        t: Option<&'a Array2<f64>>,
        groups: &'a [Vec<usize>],
    ) -> ObjectiveInputs<'a, f64> {
        ObjectiveInputs {
            labels,
            student_logits: s.view(),
            teacher_logits: t.map(|t| t.view()),
            past_groups: groups,
        }
    }

    #[test]
    fn task_one_total_is_learn_term() {
        let s = array![[0.2, -0.4, 1.0], [1.5, 0.0, -1.0]];
        let b = total_objective(inputs(&[2, 0], &s, None, &[]), &ObjectiveConfig::default()).unwrap();
        assert_eq!(b.total, b.learn_term);
        assert!(b.transfer_terms.is_empty());
    }

    #[test]
    fn alpha_zero_ignores_teacher() {
        let s = array![[0.2, -0.4, 1.0, 0.3], [1.5, 0.0, -1.0, 2.0]];
        let t = array![[3.0, -1.0, 0.0], [0.0, 2.0, 1.0]];
        let groups = vec![vec![0, 1], vec![2]];
        let cfg = ObjectiveConfig {
            alpha: 0.0,
            ..Default::default()
        };
        let b = total_objective(inputs(&[3, 2], &s, Some(&t), &groups), &cfg).unwrap();
        assert_eq!(b.total, b.learn_term);
    }

    #[test]
    fn matched_teacher_gives_zero_transfer() {
        // group {1,2}: student logits differ from teacher only by a shift
        let s = array![[9.0, 1.0, 3.0, 0.0]];
        let t = array![[-4.0, 2.0, 4.0]];
        let groups = vec![vec![1, 2]];
        let b = total_objective(inputs(&[3], &s, Some(&t), &groups), &ObjectiveConfig::default())
            .unwrap();
        assert!(b.transfer_terms[0].abs() < 1e-15);
    }

    #[test]
    fn missing_teacher_is_a_configuration_error() {
        let s = array![[0.0, 1.0]];
        let groups = vec![vec![0]];
        let r = total_objective(inputs(&[1], &s, None, &groups), &ObjectiveConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn breakdown_total_matches_components() {
        let s = array![[0.2, -0.4, 1.0, 0.3], [1.5, 0.0, -1.0, 2.0]];
        let t = array![[3.0, -1.0, 0.0], [0.0, 2.0, 1.0]];
        let groups = vec![vec![0, 1], vec![2]];
        let cfg = ObjectiveConfig {
            alpha: 0.7,
            ..Default::default()
        };
        let b = total_objective(inputs(&[3, 2], &s, Some(&t), &groups), &cfg).unwrap();
        let recomposed = b.learn_term + 0.7 * b.transfer_terms.iter().sum::<f64>();
        assert!((b.total - recomposed).abs() < 1e-10);
    }

    #[test]
    fn logit_level_terms_agree_with_distribution_functions() {
        let s = array![[0.2, -0.4, 1.0, 0.3]];
        let t = array![[3.0, -1.0, 0.5]];
        let groups = vec![vec![0, 1, 2]];
        let cfg = ObjectiveConfig {
            alpha: 1.0,
            temperature: 2.0,
            mer_enabled: true,
        };
        let b = total_objective(inputs(&[3], &s, Some(&t), &groups), &cfg).unwrap();
        let q = group_softmax(&[0.2, -0.4, 1.0, 0.3], &[0, 1, 2]).unwrap();
        let p = group_softmax(&[1.5, -0.5, 0.25], &[0, 1, 2]).unwrap();
        assert!((b.transfer_terms[0] - mer_distill(&p, &q).unwrap()).abs() < 1e-14);
        assert!((b.entropy_values[0] - entropy(&q)).abs() < 1e-14);
        let cfg_plain = ObjectiveConfig {
            mer_enabled: false,
            ..cfg
        };
        let b = total_objective(inputs(&[3], &s, Some(&t), &groups), &cfg_plain).unwrap();
        assert!((b.transfer_terms[0] - cross_entropy(&p, &q).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = ObjectiveConfig {
            alpha: -1.0,
            temperature: 1.0,
            mer_enabled: true,
        };
        assert!(bad.validate().is_err());
        let bad = ObjectiveConfig {
            alpha: 1.0,
            temperature: 0.0,
            mer_enabled: true,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(ProbabilityDistribution::new(vec![0.5f64, 0.6]).is_err());
        assert!(ProbabilityDistribution::new(vec![-0.1f64, 1.1]).is_err());
        assert!(ProbabilityDistribution::<f64>::new(vec![]).is_err());
        assert!(ProbabilityDistribution::new(vec![0.7f64, 0.2, 0.1]).is_ok());
    }
}
