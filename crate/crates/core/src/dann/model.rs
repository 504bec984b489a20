use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    binary_logistic_loss, entropy_from_logits, sigmoid, softmax, softmax_cross_entropy,
    Activation, AdamConfig, AdamState, DenseStack, Init, Matrix, StackGradients,
};

/// Lower/upper clamp applied to discriminator probabilities.
pub const DOMAIN_PROB_CLAMP: f64 = 1e-6;

/// Domain label of source rows (and, by default, of every labeled row).
pub const SOURCE_DOMAIN: u8 = 1;
pub const TARGET_DOMAIN: u8 = 0;

/// Hidden widths of the three heads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub feature_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub class_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            feature_hidden: vec![32],
            feature_dim: 16,
            class_hidden: Vec::new(),
            discriminator_hidden: vec![16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DannConfig {
    pub input_dim: usize,
    pub num_classes: usize,
    pub dims: ModelDims,
    pub lambda_adv: f64,
    pub lambda_ent: f64,
}

impl DannConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.dims.feature_dim == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if !(self.lambda_adv >= 0.0 && self.lambda_adv.is_finite()) {
            return Err(Error::InvalidArgument("lambda_adv must be finite and >= 0".into()));
        }
        if !(self.lambda_ent >= 0.0 && self.lambda_ent.is_finite()) {
            return Err(Error::InvalidArgument("lambda_ent must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Rows with class labels plus the domain label each row carries for the
/// discriminator.
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    pub features: Matrix,
    pub class_labels: Vec<usize>,
    pub domain_labels: Vec<u8>,
}

impl LabeledBatch {
    pub fn new(features: Matrix, class_labels: Vec<usize>, domain_labels: Vec<u8>) -> Result<Self> {
        if class_labels.len() != features.rows() {
            return Err(Error::dims("labeled batch class labels", features.rows(), class_labels.len()));
        }
        if domain_labels.len() != features.rows() {
            return Err(Error::dims("labeled batch domain labels", features.rows(), domain_labels.len()));
        }
        if domain_labels.iter().any(|&d| d > 1) {
            return Err(Error::InvalidArgument("domain labels must be 0 or 1".into()));
        }
        Ok(LabeledBatch {
            features,
            class_labels,
            domain_labels,
        })
    }

    /// All rows tagged with the source domain label.
    pub fn source(features: Matrix, class_labels: Vec<usize>) -> Result<Self> {
        let n = features.rows();
        LabeledBatch::new(features, class_labels, vec![SOURCE_DOMAIN; n])
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

#[derive(Debug, Clone)]
pub struct UnlabeledBatch {
    pub features: Matrix,
    pub domain_labels: Vec<u8>,
}

impl UnlabeledBatch {
    /// Unlabeled target rows, domain label 0.
    pub fn target(features: Matrix) -> Self {
        let n = features.rows();
        UnlabeledBatch {
            features,
            domain_labels: vec![TARGET_DOMAIN; n],
        }
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub class_loss: f64,
    pub domain_loss: Option<f64>,
    pub entropy_loss: Option<f64>,
}

/// What a non-adversarial step updates besides the class loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOptions {
    pub entropy_regularizer: bool,
    pub train_discriminator: bool,
}

/// Per-head gradients of one batch.
#[derive(Debug, Clone)]
pub struct HeadGradients {
    pub class_predictor: StackGradients,
    pub discriminator: StackGradients,
    /// Feature-extractor gradient of the class and entropy losses.
    pub feature_task: StackGradients,
    /// Feature-extractor gradient of the domain loss, before reversal.
    pub feature_domain: StackGradients,
    pub report: LossReport,
}

/// Gradients an adversarial step applies.
#[derive(Debug, Clone)]
pub struct AdversarialGradients {
    pub feature_extractor: StackGradients,
    /// The domain-loss share of `feature_extractor`: `-λ · feature_domain`.
    pub feature_domain_reversed: StackGradients,
    pub class_predictor: StackGradients,
    pub discriminator: StackGradients,
    pub report: LossReport,
}

/// Output of a single pass through all three heads.
#[derive(Debug, Clone)]
pub struct Predictions {
    pub features: Matrix,
    pub class_probs: Matrix,
    pub domain_probs: Vec<f64>,
}

/// Feature extractor, class predictor and domain discriminator with their
/// optimizer states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DannModel {
    pub feature_extractor: DenseStack,
    pub class_predictor: DenseStack,
    pub discriminator: DenseStack,
    pub(crate) feature_opt: AdamState,
    pub(crate) class_opt: AdamState,
    pub(crate) discriminator_opt: AdamState,
    pub lambda_adv: f64,
    pub lambda_ent: f64,
    pub num_classes: usize,
    /// Drives minibatch sampling during training.
    pub(crate) rng: ChaCha8Rng,
}

fn head_spec(hidden: &[usize], out: usize, out_act: Activation) -> Vec<(usize, Activation)> {
    hidden
        .iter()
        .map(|&w| (w, Activation::Relu))
        .chain(std::iter::once((out, out_act)))
        .collect()
}

impl DannModel {
    /// Fresh Glorot-initialized model. Parameters and the sampling stream are
    /// both derived from `seed`.
    pub fn new(config: &DannConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = &config.dims;
        let feature_extractor = DenseStack::new(
            config.input_dim,
            &head_spec(&dims.feature_hidden, dims.feature_dim, Activation::Relu),
            Init::GlorotUniform,
            &mut init_rng,
        )?;
        let class_predictor = DenseStack::new(
            dims.feature_dim,
            &head_spec(&dims.class_hidden, config.num_classes, Activation::Identity),
            Init::GlorotUniform,
            &mut init_rng,
        )?;
        let discriminator = DenseStack::new(
            dims.feature_dim,
            &head_spec(&dims.discriminator_hidden, 1, Activation::Identity),
            Init::GlorotUniform,
            &mut init_rng,
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        DannModel::from_parts(
            feature_extractor,
            class_predictor,
            discriminator,
            config.lambda_adv,
            config.lambda_ent,
            rng,
        )
    }

    /// Assembles a model from explicit heads; optimizers start fresh.
    pub fn from_parts(
        feature_extractor: DenseStack,
        class_predictor: DenseStack,
        discriminator: DenseStack,
        lambda_adv: f64,
        lambda_ent: f64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let adam = AdamConfig::default();
        let model = DannModel {
            feature_opt: AdamState::for_stack(&feature_extractor, adam),
            class_opt: AdamState::for_stack(&class_predictor, adam),
            discriminator_opt: AdamState::for_stack(&discriminator, adam),
            num_classes: class_predictor.output_dim(),
            feature_extractor,
            class_predictor,
            discriminator,
            lambda_adv,
            lambda_ent,
            rng,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let fdim = self.feature_extractor.output_dim();
        if self.class_predictor.input_dim() != fdim {
            return Err(Error::dims("class predictor input", fdim, self.class_predictor.input_dim()));
        }
        if self.discriminator.input_dim() != fdim {
            return Err(Error::dims("discriminator input", fdim, self.discriminator.input_dim()));
        }
        if self.discriminator.output_dim() != 1 {
            return Err(Error::dims("discriminator output", 1, self.discriminator.output_dim()));
        }
        if self.class_predictor.output_dim() != self.num_classes || self.num_classes < 2 {
            return Err(Error::dims(
                "class predictor output",
                self.num_classes,
                self.class_predictor.output_dim(),
            ));
        }
        if !(self.lambda_adv >= 0.0 && self.lambda_ent >= 0.0) {
            return Err(Error::InvalidArgument("loss weights must be >= 0".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.feature_extractor.input_dim()
    }

    /// Sets the learning rate of all three optimizers.
    pub fn set_learning_rate(&mut self, lr: f64) {
        self.feature_opt.set_learning_rate(lr);
        self.class_opt.set_learning_rate(lr);
        self.discriminator_opt.set_learning_rate(lr);
    }

    /// Restarts the feature and class optimizers (used when fine-tuning).
    pub fn reset_task_optimizers(&mut self, lr: f64) {
        let adam = AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        };
        self.feature_opt = AdamState::for_stack(&self.feature_extractor, adam);
        self.class_opt = AdamState::for_stack(&self.class_predictor, adam);
    }

    pub fn optimizer_steps(&self) -> (u64, u64, u64) {
        (
            self.feature_opt.step_count(),
            self.class_opt.step_count(),
            self.discriminator_opt.step_count(),
        )
    }

    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.feature_extractor.infer(x)
    }

    pub fn predict_class_probs(&self, x: &Matrix) -> Result<Matrix> {
        let logits = self.class_predictor.infer(&self.features(x)?)?;
        Ok(softmax(&logits))
    }

    /// `G_d(G_f(x))`, clamped to `[1e-6, 1 - 1e-6]`.
    pub fn predict_domain_prob(&self, x: &Matrix) -> Result<Vec<f64>> {
        let logits = self.discriminator.infer(&self.features(x)?)?;
        Ok(domain_probs_from_logits(&logits))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Predictions> {
        let features = self.features(x)?;
        let class_probs = softmax(&self.class_predictor.infer(&features)?);
        let domain_probs = domain_probs_from_logits(&self.discriminator.infer(&features)?);
        Ok(Predictions {
            features,
            class_probs,
            domain_probs,
        })
    }

    /// Predicted class per row; ties go to the lowest class index.
    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.class_predictor.infer(&self.features(x)?)?.argmax_rows())
    }

    /// Gradients of every loss term for one batch, without touching the model.
    ///
    /// Class loss is taken over the labeled rows, the entropy regularizer over
    /// the unlabeled rows (weighted by `entropy_weight`), and the domain loss
    /// over all rows using each row's domain label. Everything shares one
    /// feature-extractor forward pass over `[labeled; unlabeled]`.
    pub fn head_gradients(
        &self,
        labeled: &LabeledBatch,
        unlabeled: Option<&UnlabeledBatch>,
        entropy_weight: f64,
        with_domain: bool,
    ) -> Result<HeadGradients> {
        if labeled.is_empty() {
            return Err(Error::Empty("labeled batch"));
        }
        let n_lab = labeled.len();
        let unlabeled = unlabeled.filter(|u| !u.is_empty());
        let inputs = match unlabeled {
            Some(u) => labeled.features.vstack(&u.features)?,
            None => labeled.features.clone(),
        };
        let n_all = inputs.rows();

        let (features, f_cache) = self.feature_extractor.forward(&inputs)?;
        let (logits, y_cache) = self.class_predictor.forward(&features)?;

        let (class_loss, lab_grad) =
            softmax_cross_entropy(&logits.slice_rows(0, n_lab), &labeled.class_labels)?;
        let mut logit_grad = Matrix::zeros(n_all, self.num_classes);
        logit_grad.as_mut_slice()[..lab_grad.as_slice().len()].copy_from_slice(lab_grad.as_slice());

        let mut entropy_loss = None;
        if let Some(u) = unlabeled {
            if entropy_weight > 0.0 {
                let (h, h_grad) = entropy_from_logits(&logits.slice_rows(n_lab, n_all));
                entropy_loss = Some(h);
                let dst = &mut logit_grad.as_mut_slice()[n_lab * self.num_classes..];
                for (d, g) in dst.iter_mut().zip(h_grad.as_slice()) {
                    *d = entropy_weight * g;
                }
                debug_assert_eq!(u.len(), n_all - n_lab);
            }
        }
        let (class_predictor, feature_grad_task) = self.class_predictor.backward(&y_cache, &logit_grad)?;
        let (feature_task, _) = self.feature_extractor.backward(&f_cache, &feature_grad_task)?;

        let (discriminator, feature_domain, domain_loss) = if with_domain {
            let labels = domain_targets(labeled, unlabeled);
            let (grads, feature_grad, loss) = self.discriminator_backward(&features, &labels)?;
            let (feature_domain, _) = self.feature_extractor.backward(&f_cache, &feature_grad)?;
            (grads, feature_domain, Some(loss))
        } else {
            (
                StackGradients::zeros_like(&self.discriminator),
                StackGradients::zeros_like(&self.feature_extractor),
                None,
            )
        };

        Ok(HeadGradients {
            class_predictor,
            discriminator,
            feature_task,
            feature_domain,
            report: LossReport {
                class_loss,
                domain_loss,
                entropy_loss,
            },
        })
    }

    /// Discriminator gradients and the (unreversed) gradient it sends back into
    /// the features.
    fn discriminator_backward(
        &self,
        features: &Matrix,
        labels: &[f64],
    ) -> Result<(StackGradients, Matrix, f64)> {
        let (d_logits, d_cache) = self.discriminator.forward(features)?;
        let (loss, grad) = binary_logistic_loss(d_logits.as_slice(), labels)?;
        let grad = Matrix::from_vec(grad.len(), 1, grad)?;
        let (grads, feature_grad) = self.discriminator.backward(&d_cache, &grad)?;
        Ok((grads, feature_grad, loss))
    }

    /// Feature-extractor gradient of the domain loss alone, computed on its
    /// own forward/backward path with no reversal.
    pub fn domain_feature_gradient(
        &self,
        labeled: &LabeledBatch,
        unlabeled: Option<&UnlabeledBatch>,
    ) -> Result<StackGradients> {
        let unlabeled = unlabeled.filter(|u| !u.is_empty());
        let inputs = match unlabeled {
            Some(u) => labeled.features.vstack(&u.features)?,
            None => labeled.features.clone(),
        };
        if inputs.is_empty() {
            return Err(Error::Empty("domain batch"));
        }
        let (features, f_cache) = self.feature_extractor.forward(&inputs)?;
        let labels = domain_targets(labeled, unlabeled);
        let (_, feature_grad, _) = self.discriminator_backward(&features, &labels)?;
        Ok(self.feature_extractor.backward(&f_cache, &feature_grad)?.0)
    }

    /// The gradients an adversarial step applies.
    ///
    /// Gradient reversal is applied to the feature-extractor parameter
    /// gradient of the domain loss: backpropagation is linear in its upstream
    /// gradient, so scaling after the backward pass equals scaling at the
    /// reversal layer, and it keeps the `-λ` factor exact.
    pub fn adversarial_gradients(
        &self,
        labeled: &LabeledBatch,
        unlabeled: &UnlabeledBatch,
    ) -> Result<AdversarialGradients> {
        let g = self.head_gradients(labeled, Some(unlabeled), self.lambda_ent, true)?;
        let feature_domain_reversed = g.feature_domain.scaled(-self.lambda_adv);
        let feature_extractor = if self.lambda_adv != 0.0 {
            g.feature_task.plus(&feature_domain_reversed)
        } else {
            g.feature_task
        };
        Ok(AdversarialGradients {
            feature_extractor,
            feature_domain_reversed,
            class_predictor: g.class_predictor,
            discriminator: g.discriminator,
            report: g.report,
        })
    }

    /// One simultaneous min-max update: the discriminator descends the domain
    /// loss, the feature extractor receives `-λ` times its domain gradient, and
    /// feature extractor plus class predictor descend the class loss and the
    /// `λ_ent`-weighted entropy of the unlabeled rows.
    pub fn adversarial_step(
        &mut self,
        labeled: &LabeledBatch,
        unlabeled: &UnlabeledBatch,
    ) -> Result<LossReport> {
        let g = self.adversarial_gradients(labeled, unlabeled)?;
        self.feature_opt.apply(&mut self.feature_extractor, &g.feature_extractor)?;
        self.class_opt.apply(&mut self.class_predictor, &g.class_predictor)?;
        self.discriminator_opt.apply(&mut self.discriminator, &g.discriminator)?;
        Ok(g.report)
    }

    /// Class-loss descent for the feature extractor and class predictor. The
    /// discriminator, when trained, only sees detached features.
    pub fn supervised_step(
        &mut self,
        labeled: &LabeledBatch,
        unlabeled: Option<&UnlabeledBatch>,
        options: StepOptions,
    ) -> Result<LossReport> {
        let weight = if options.entropy_regularizer {
            self.lambda_ent
        } else {
            0.0
        };
        let g = self.head_gradients(labeled, unlabeled, weight, options.train_discriminator)?;
        self.feature_opt.apply(&mut self.feature_extractor, &g.feature_task)?;
        self.class_opt.apply(&mut self.class_predictor, &g.class_predictor)?;
        if options.train_discriminator {
            self.discriminator_opt.apply(&mut self.discriminator, &g.discriminator)?;
        }
        Ok(g.report)
    }

    /// Trains only the discriminator on precomputed features.
    pub fn discriminator_step(&mut self, features: &Matrix, domain_labels: &[u8]) -> Result<f64> {
        let labels: Vec<f64> = domain_labels.iter().map(|&d| f64::from(d)).collect();
        let (grads, _, loss) = self.discriminator_backward(features, &labels)?;
        self.discriminator_opt.apply(&mut self.discriminator, &grads)?;
        Ok(loss)
    }
}

fn domain_targets(labeled: &LabeledBatch, unlabeled: Option<&UnlabeledBatch>) -> Vec<f64> {
    labeled
        .domain_labels
        .iter()
        .chain(unlabeled.map(|u| u.domain_labels.as_slice()).unwrap_or(&[]))
        .map(|&d| f64::from(d))
        .collect()
}

fn domain_probs_from_logits(logits: &Matrix) -> Vec<f64> {
    logits
        .as_slice()
        .iter()
        .map(|&z| sigmoid(z).clamp(DOMAIN_PROB_CLAMP, 1.0 - DOMAIN_PROB_CLAMP))
        .collect()
}
