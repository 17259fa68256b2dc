#![allow(dead_code)]

use medic::metrics::{LogEntry, PredictionLog};
use medic::nncore::{init_model, mlp_arch, ClassifierModel, MiniBatch, TeacherSnapshot};
use medic::losses::ObjectiveConfig;
use medic::tasks::TaskConfiguration;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Writes straight to the process stderr so the line survives test capture.
pub fn announce(line: &str) {
    use std::io::Write;
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

/// Triples `(sample_id, true_label, predicted_label)` for one step.
pub type Triples = Vec<(u64, usize, usize)>;

pub fn to_log(step: usize, triples: &Triples) -> PredictionLog {
    PredictionLog::new(
        step,
        triples
            .iter()
            .map(|&(sample_id, true_label, predicted_label)| LogEntry {
                sample_id,
                true_label,
                predicted_label,
            })
            .collect(),
    )
}

/// A random task configuration with its incremental and reference logs.
pub struct SyntheticRun {
    pub groups: Vec<Vec<usize>>,
    pub incremental: Vec<Triples>,
    pub reference: Vec<Triples>,
}

impl SyntheticRun {
    pub fn tasks(&self) -> TaskConfiguration {
        TaskConfiguration::new(self.groups.clone(), self.groups[0].len()).unwrap()
    }

    pub fn incremental_logs(&self) -> Vec<PredictionLog> {
        self.incremental.iter().enumerate().map(|(i, t)| to_log(i + 1, t)).collect()
    }

    pub fn reference_logs(&self) -> Vec<PredictionLog> {
        self.reference.iter().enumerate().map(|(i, t)| to_log(i + 1, t)).collect()
    }
}

/// Up to 5 steps, at most 10 classes and at most 200 test samples. Every class
/// has at least one sample. Predictions are correct with probability
/// `p_correct` and otherwise uniform over the seen classes.
pub fn synthetic_run(r: &mut impl Rng) -> SyntheticRun {
    let steps = r.random_range(2..=5usize);
    let group_size = r.random_range(1..=(10 / steps).min(3));
    let n_classes = steps * group_size;
    let mut classes: Vec<usize> = (0..n_classes).collect();
    rand::seq::SliceRandom::shuffle(&mut classes[..], r);
    let groups: Vec<Vec<usize>> = classes.chunks(group_size).map(<[usize]>::to_vec).collect();

    let n_samples = r.random_range(n_classes..=200);
    let labels: Vec<usize> = (0..n_samples)
        .map(|i| if i < n_classes { i } else { r.random_range(0..n_classes) })
        .collect();
    let ids: Vec<u64> = {
        let mut ids: Vec<u64> = (0..n_samples as u64).map(|i| i * 7 + 3).collect();
        rand::seq::SliceRandom::shuffle(&mut ids[..], r);
        ids
    };

    let make = |r: &mut dyn rand::RngCore| -> Vec<Triples> {
        let p_correct: f64 = r.random_range(0.2..0.95);
        (1..=steps)
            .map(|k| {
                let seen: Vec<usize> = groups[..k].iter().flatten().copied().collect();
                ids.iter()
                    .zip(&labels)
                    .filter(|(_, y)| seen.contains(y))
                    .map(|(&id, &y)| {
                        let pred = if r.random_bool(p_correct) {
                            y
                        } else {
                            seen[r.random_range(0..seen.len())]
                        };
                        (id, y, pred)
                    })
                    .collect()
            })
            .collect()
    };
    let incremental = make(r);
    let reference = make(r);
    SyntheticRun {
        groups,
        incremental,
        reference,
    }
}

/// Plain-loop re-implementation of every metric, used as an oracle.
pub mod brute {
    use super::Triples;

    pub struct Expected {
        pub a: Vec<Vec<f64>>,
        pub accuracy_per_step: Vec<f64>,
        pub accuracy: f64,
        pub big_a: Vec<f64>,
        pub big_f: Vec<Option<f64>>,
        pub big_i: Vec<f64>,
        pub f_terms: Vec<Vec<f64>>,
        pub i_terms: Vec<Vec<f64>>,
        pub sdf: Vec<Option<f64>>,
        pub sdi: Vec<Option<f64>>,
        pub sdf_avg: f64,
        pub sdi_avg: f64,
    }

    fn group_index(groups: &[Vec<usize>], class: usize) -> usize {
        for (g, members) in groups.iter().enumerate() {
            for &c in members {
                if c == class {
                    return g + 1;
                }
            }
        }
        panic!("class {class} in no group");
    }

    fn acc_on_group(log: &Triples, groups: &[Vec<usize>], j: usize) -> f64 {
        let mut hit = 0.0;
        let mut n = 0.0;
        for &(_, y, p) in log {
            if group_index(groups, y) == j {
                n += 1.0;
                if p == y {
                    hit += 1.0;
                }
            }
        }
        hit / n
    }

    fn reference_prediction(reference: &Triples, id: u64) -> usize {
        for &(rid, _, rp) in reference {
            if rid == id {
                return rp;
            }
        }
        panic!("id {id} missing from reference");
    }

    /// `forgetting = true` counts old -> new moves at boundary `j`; otherwise
    /// new -> old.
    fn sd_term(m: &Triples, r: &Triples, groups: &[Vec<usize>], j: usize, forgetting: bool) -> f64 {
        let mut num = 0u32;
        let mut den = 0u32;
        for &(id, y, p) in m {
            let gy = group_index(groups, y);
            let gr = group_index(groups, reference_prediction(r, id));
            let gm = group_index(groups, p);
            let (in_source, lands) = if forgetting {
                (gy < j && gr < j, gm == j)
            } else {
                (gy == j && gr == j, gm < j)
            };
            if in_source {
                den += 1;
                if lands {
                    num += 1;
                }
            }
        }
        if den == 0 {
            0.0
        } else {
            f64::from(num) / f64::from(den)
        }
    }

    pub fn expected(groups: &[Vec<usize>], inc: &[Triples], refs: &[Triples]) -> Expected {
        let t = inc.len();
        let mut a = Vec::new();
        for l in 1..=t {
            let mut row = Vec::new();
            for j in 1..=l {
                row.push(acc_on_group(&inc[l - 1], groups, j));
            }
            a.push(row);
        }
        let accuracy_per_step: Vec<f64> = inc
            .iter()
            .map(|log| {
                let hits = log.iter().filter(|&&(_, y, p)| y == p).count();
                hits as f64 / log.len() as f64
            })
            .collect();
        let accuracy = accuracy_per_step.iter().sum::<f64>() / t as f64;

        let mut big_a = Vec::new();
        let mut big_f = Vec::new();
        let mut big_i = Vec::new();
        let mut f_terms = Vec::new();
        let mut i_terms = Vec::new();
        let mut sdf = Vec::new();
        let mut sdi = Vec::new();
        for k in 1..=t {
            let mut s = 0.0;
            for j in 1..=k {
                s += a[k - 1][j - 1];
            }
            big_a.push(s / k as f64);

            if k >= 2 {
                let mut total = 0.0;
                for j in 1..k {
                    let mut best = f64::MIN;
                    for l in j..k {
                        if a[l - 1][j - 1] > best {
                            best = a[l - 1][j - 1];
                        }
                    }
                    total += best - a[k - 1][j - 1];
                }
                big_f.push(Some(total / (k - 1) as f64));
            } else {
                big_f.push(None);
            }

            let ref_acc = acc_on_group(&refs[k - 1], groups, k);
            big_i.push(ref_acc - a[k - 1][k - 1]);

            let fs: Vec<f64> = (2..=k)
                .map(|j| sd_term(&inc[k - 1], &refs[k - 1], groups, j, true))
                .collect();
            let is: Vec<f64> = (2..=k)
                .map(|j| sd_term(&inc[k - 1], &refs[k - 1], groups, j, false))
                .collect();
            if k >= 2 {
                sdf.push(Some(fs.iter().sum::<f64>() / k as f64));
                sdi.push(Some(is.iter().sum::<f64>() / k as f64));
            } else {
                sdf.push(None);
                sdi.push(None);
            }
            f_terms.push(fs);
            i_terms.push(is);
        }
        let sdf_avg = sdf.iter().flatten().sum::<f64>() / (t - 1) as f64;
        let sdi_avg = sdi.iter().flatten().sum::<f64>() / (t - 1) as f64;
        Expected {
            a,
            accuracy_per_step,
            accuracy,
            big_a,
            big_f,
            big_i,
            f_terms,
            i_terms,
            sdf,
            sdi,
            sdf_avg,
            sdi_avg,
        }
    }
}

/// A student with `n_old + n_new` outputs, a teacher over the `n_old` old
/// units, and a random batch.
pub struct GradProblem {
    pub student: ClassifierModel<f64>,
    pub teacher: TeacherSnapshot<f64>,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub past_groups: Vec<Vec<usize>>,
}

impl GradProblem {
    pub fn random(seed: u64) -> Self {
        let mut r = rng(seed);
        let input = r.random_range(2..=5usize);
        let hidden: Vec<usize> = (0..r.random_range(1..=2)).map(|_| r.random_range(3..=6)).collect();
        let group_size = r.random_range(1..=3usize);
        let n_past = r.random_range(1..=2usize);
        let n_old = group_size * n_past;
        let n_total = n_old + group_size;
        let mut teacher_model: ClassifierModel<f64> =
            init_model(&mlp_arch(input, &hidden, n_old), r.random()).unwrap();
        let mut student = init_model::<f64>(&mlp_arch(input, &hidden, n_old), r.random())
            .unwrap()
            .expand_head(group_size, r.random())
            .unwrap();
        // Fresh models have zero biases, which can put a ReLU input exactly on
        // its kink; jitter every parameter as training would.
        for p in teacher_model.parameters_mut().chain(student.parameters_mut()) {
            *p += r.random_range(-0.3..0.3);
        }
        let batch = r.random_range(1..=8usize);
        let features = Array2::from_shape_fn((batch, input), |_| r.random_range(-2.0..2.0));
        let labels = (0..batch).map(|_| r.random_range(0..n_total)).collect();
        let past_groups = (0..n_past)
            .map(|g| (g * group_size..(g + 1) * group_size).collect())
            .collect();
        Self {
            student,
            teacher: teacher_model.snapshot(1),
            features,
            labels,
            past_groups,
        }
    }

    pub fn batch(&self) -> MiniBatch<'_, f64> {
        MiniBatch {
            features: self.features.view(),
            labels: &self.labels,
        }
    }

    pub fn loss_at(&self, model: &ClassifierModel<f64>, cfg: &ObjectiveConfig<f64>) -> f64 {
        model
            .loss(&self.batch(), cfg, Some(&self.teacher), &self.past_groups)
            .unwrap()
            .total
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error between backprop and central differences over
/// every parameter of the student.
pub fn max_gradient_error(p: &GradProblem, cfg: &ObjectiveConfig<f64>, h: f64, floor: f64) -> f64 {
    let (_, grads) = p
        .student
        .gradients(&p.batch(), cfg, Some(&p.teacher), &p.past_groups)
        .unwrap();
    let analytic = grads.flatten();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = p.student.clone();
        *plus.parameters_mut().nth(i).unwrap() += h;
        let mut minus = p.student.clone();
        *minus.parameters_mut().nth(i).unwrap() -= h;
        let numeric = (p.loss_at(&plus, cfg) - p.loss_at(&minus, cfg)) / (2.0 * h);
        worst = worst.max(relative_error(a, numeric, floor));
    }
    worst
}

pub fn blob_config_toml(samples_per_class: usize, dim: usize, separation: f64, epochs: usize) -> String {
    format!(
        r#"variants = ["full", "no_mer", "no_dos", "no_mer_no_dos"]

[data]
source = "blobs"
n_classes = 10
samples_per_class = {samples_per_class}
dim = {dim}
separation = {separation:?}

[tasks]
mode = "random"
group_size = 2

[memory]
budget = 50

[training]
epochs = {epochs}
"#
    )
}
