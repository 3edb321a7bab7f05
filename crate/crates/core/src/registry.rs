//! Training algorithms registered by name.
//!
//! The CLI and experiment code never match on variant strings; they look the
//! algorithm up here and run it through the [`Algorithm`] trait.

use std::collections::BTreeMap;

use crate::baselines::{train_exact_em_with, HybridEstimator, MfpcdEstimator};
use crate::error::{invalid, ApcdError, Result};
use crate::exact::Enumerator;
use crate::model::{Configuration, PairwiseModel, VariablePartition};
use crate::trainer::{check_schedules, ApcdEstimator, Checkpoint, EStepEstimator, MetricsRecord, TrainConfig, TrainObserver, Trainer};

/// Inputs shared by every algorithm.
pub struct TrainProblem<'a> {
    pub model0: PairwiseModel,
    pub part: &'a VariablePartition,
    pub data: &'a [Configuration],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PairwiseModel,
    pub trace: Vec<MetricsRecord>,
    /// Set when a lenient algorithm ran with schedules that fail the
    /// two-time-scale conditions.
    pub schedule_warning: Option<String>,
}

pub trait Algorithm: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    /// Whether invalid schedule pairs are refused (under strict config).
    fn requires_valid_schedules(&self) -> bool;

    fn supports_resume(&self) -> bool {
        true
    }

    fn train(
        &self,
        problem: TrainProblem<'_>,
        config: &TrainConfig,
        observer: &mut dyn TrainObserver,
        resume: Option<Checkpoint>,
    ) -> Result<TrainOutcome>;
}

/// Shared driver for the persistent-chain algorithms.
fn run_persistent(
    algorithm: &dyn Algorithm,
    estimator: Box<dyn EStepEstimator>,
    problem: TrainProblem<'_>,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    let mut config = config.clone();
    config.variant = algorithm.name().to_string();
    let strict = config.strict_schedules && algorithm.requires_valid_schedules();
    let schedule_warning = check_schedules(&config, strict)?;
    let mut trainer = match resume {
        Some(checkpoint) => Trainer::resume(checkpoint, problem.part, problem.data, config, estimator)?,
        None => Trainer::new(problem.model0, problem.part, problem.data, config, estimator)?,
    };
    let trace = trainer.run(observer)?;
    Ok(TrainOutcome {
        model: trainer.into_model(),
        trace,
        schedule_warning,
    })
}

pub struct Apcd;

impl Algorithm for Apcd {
    fn name(&self) -> &'static str {
        "apcd"
    }

    fn description(&self) -> &'static str {
        "persistent clamped chains with a moving-average E step"
    }

    fn requires_valid_schedules(&self) -> bool {
        true
    }

    fn train(
        &self,
        problem: TrainProblem<'_>,
        config: &TrainConfig,
        observer: &mut dyn TrainObserver,
        resume: Option<Checkpoint>,
    ) -> Result<TrainOutcome> {
        run_persistent(self, Box::new(ApcdEstimator), problem, config, observer, resume)
    }
}

pub struct Mfpcd;

impl Algorithm for Mfpcd {
    fn name(&self) -> &'static str {
        "mfpcd"
    }

    fn description(&self) -> &'static str {
        "mean-field E step with persistent free chains in the M step"
    }

    fn requires_valid_schedules(&self) -> bool {
        false
    }

    fn train(
        &self,
        problem: TrainProblem<'_>,
        config: &TrainConfig,
        observer: &mut dyn TrainObserver,
        resume: Option<Checkpoint>,
    ) -> Result<TrainOutcome> {
        run_persistent(self, Box::new(MfpcdEstimator), problem, config, observer, resume)
    }
}

pub struct Hapcd;

impl Algorithm for Hapcd {
    fn name(&self) -> &'static str {
        "hapcd"
    }

    fn description(&self) -> &'static str {
        "mean-field and sampled E-step means fused with a ramping weight"
    }

    fn requires_valid_schedules(&self) -> bool {
        false
    }

    fn train(
        &self,
        problem: TrainProblem<'_>,
        config: &TrainConfig,
        observer: &mut dyn TrainObserver,
        resume: Option<Checkpoint>,
    ) -> Result<TrainOutcome> {
        let estimator = HybridEstimator { ramp: config.hybrid };
        run_persistent(self, Box::new(estimator), problem, config, observer, resume)
    }
}

pub struct ExactEm;

impl Algorithm for ExactEm {
    fn name(&self) -> &'static str {
        "exact-em"
    }

    fn description(&self) -> &'static str {
        "enumeration-based EM for small graphs"
    }

    fn requires_valid_schedules(&self) -> bool {
        false
    }

    fn supports_resume(&self) -> bool {
        false
    }

    fn train(
        &self,
        problem: TrainProblem<'_>,
        config: &TrainConfig,
        observer: &mut dyn TrainObserver,
        resume: Option<Checkpoint>,
    ) -> Result<TrainOutcome> {
        if resume.is_some() {
            return invalid("exact-em runs cannot be resumed from a checkpoint");
        }
        let enumerator = Enumerator::with_limit(config.exact_limit.max(crate::exact::DEFAULT_ENUMERATION_LIMIT));
        let (model, trace) = train_exact_em_with(problem.model0, problem.part, problem.data, &config.em, &enumerator)?;
        for record in &trace {
            observer.on_record(record)?;
        }
        Ok(TrainOutcome {
            model,
            trace,
            schedule_warning: None,
        })
    }
}

pub struct AlgorithmRegistry {
    entries: BTreeMap<&'static str, Box<dyn Algorithm>>,
}

impl AlgorithmRegistry {
    pub fn empty() -> Self {
        AlgorithmRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Apcd));
        r.register(Box::new(Mfpcd));
        r.register(Box::new(Hapcd));
        r.register(Box::new(ExactEm));
        r
    }

    /// Adds an algorithm, replacing any previous one with the same name.
    pub fn register(&mut self, algorithm: Box<dyn Algorithm>) {
        self.entries.insert(algorithm.name(), algorithm);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Algorithm> {
        self.entries.get(name).map(|a| a.as_ref()).ok_or_else(|| {
            ApcdError::InvalidInput(format!(
                "unknown variant {name:?}; available: {}",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

impl Default for AlgorithmRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
