use crate::encoder::{batch_loss, ForwardMode, ModelParams};
use crate::error::Result;
use crate::numcore::{Differentiable, Tape, Tensor};
use crate::tamatrix::TargetAwarenessConfig;
use crate::textdata::TokenizedExample;

/// Eval-mode batch loss as a function of every parameter, flattened in
/// layout order. Lets [`gradcheck`](crate::numcore::gradcheck) probe the
/// whole model.
pub struct ParamLoss<'a> {
    pub params: &'a ModelParams<f64>,
    pub batch: &'a [TokenizedExample],
    pub ta: &'a TargetAwarenessConfig,
}

impl ParamLoss<'_> {
    pub fn point(&self) -> Tensor<f64> {
        let flat = self.params.flatten();
        Tensor::new(vec![flat.len()], flat).expect("non-empty parameters")
    }

    fn at(&self, x: &Tensor<f64>) -> Result<ModelParams<f64>> {
        let mut p = self.params.clone();
        p.load_flat(x.data())?;
        Ok(p)
    }
}

impl Differentiable for ParamLoss<'_> {
    fn value(&self, x: &Tensor<f64>) -> Result<f64> {
        let p = self.at(x)?;
        let mut tape = Tape::new();
        let vars = p.register(&mut tape, false);
        let loss = batch_loss(&mut tape, &p, &vars, self.batch, self.ta, &mut ForwardMode::Eval)?;
        Ok(tape.value(loss).data()[0])
    }

    fn gradient(&self, x: &Tensor<f64>) -> Result<Vec<f64>> {
        let mut p = self.at(x)?;
        let mut tape = Tape::new();
        let vars = p.register(&mut tape, true);
        let loss = batch_loss(&mut tape, &p, &vars, self.batch, self.ta, &mut ForwardMode::Eval)?;
        tape.backward(loss)?;
        p.collect_grads(&tape, &vars)?;
        Ok(p.tensors().iter().flat_map(|t| t.grad().unwrap_or_default().to_vec()).collect())
    }
}
