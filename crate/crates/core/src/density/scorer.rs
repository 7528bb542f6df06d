use super::{GaussianModel, ScoreFunction};
use crate::encoder::Encoder;
use crate::error::{Error, Result};

/// Anything that assigns a quality score to a response in context.
/// Higher means better.
pub trait ResponseScorer {
    fn score(&self, context: &[&str], response: &str) -> Result<f64>;

    fn score_batch(&self, items: &[(Vec<&str>, &str)]) -> Result<Vec<f64>> {
        items.iter().map(|(c, r)| self.score(c, r)).collect()
    }
}

impl<F> ResponseScorer for F
where
    F: Fn(&[&str], &str) -> f64,
{
    fn score(&self, context: &[&str], response: &str) -> Result<f64> {
        Ok(self(context, response))
    }
}

/// Trained encoder plus fitted Gaussian.
#[derive(Debug, Clone)]
pub struct DensityScorer {
    pub encoder: Encoder,
    pub model: GaussianModel,
    pub function: ScoreFunction,
}

impl DensityScorer {
    pub fn new(encoder: Encoder, model: GaussianModel, function: ScoreFunction) -> Result<Self> {
        if encoder.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                actual: encoder.dim(),
            });
        }
        Ok(DensityScorer {
            encoder,
            model,
            function,
        })
    }

    pub fn with_function(&self, function: ScoreFunction) -> Self {
        DensityScorer {
            function,
            ..self.clone()
        }
    }
}

impl ResponseScorer for DensityScorer {
    fn score(&self, context: &[&str], response: &str) -> Result<f64> {
        let seq = self.encoder.tokens(context.iter().copied(), response);
        let f = self.encoder.params.forward(seq.as_slice())?;
        self.model.score(&f.h, self.function, Some(f.logit))
    }

    fn score_batch(&self, items: &[(Vec<&str>, &str)]) -> Result<Vec<f64>> {
        let (features, logits) = self.encoder.encode_many(items)?;
        features
            .iter_rows()
            .zip(logits)
            .map(|(h, l)| self.model.score(h, self.function, Some(l)))
            .collect()
    }
}
