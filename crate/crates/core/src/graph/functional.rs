//! Nodes whose values are generated from a list of operators and parameters.

use std::cell::OnceCell;
use std::sync::Arc;

use ndarray::Array2;

use crate::dense::{DenseTensor, C64};
use crate::error::{invalid, Result};
use crate::linalg::matrix_exponential;
use crate::symmetric::{impose_symmetry, ChargedIndex};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalForm {
    /// `exp(Σ p_i o_i)`
    Exponential,
    /// `Σ p_i o_i`
    Linear,
}

impl FunctionalForm {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "exp" => Some(FunctionalForm::Exponential),
            "linear" | "lin" => Some(FunctionalForm::Linear),
            _ => None,
        }
    }
}

/// Operators, form and leg dimensions of a functional node.
#[derive(Debug, Clone)]
pub struct FunctionalDef {
    pub operators: Vec<Array2<C64>>,
    pub form: FunctionalForm,
    pub dims: Vec<usize>,
    /// Charges of the realized legs; the realized values are made block-sparse.
    pub indices: Option<Vec<ChargedIndex>>,
}

impl FunctionalDef {
    pub fn new(operators: Vec<Array2<C64>>, form: FunctionalForm, dims: &[usize]) -> Result<Self> {
        let n = operators.first().ok_or_else(|| invalid("a functional node needs at least one operator"))?.nrows();
        for o in &operators {
            if o.nrows() != n || o.ncols() != n {
                return Err(invalid(format!("operators must all be {n}x{n}, got {}x{}", o.nrows(), o.ncols())));
            }
        }
        let total: usize = dims.iter().product();
        let mut rows = 1;
        let mut k = 0;
        while k < dims.len() && rows < n {
            rows *= dims[k];
            k += 1;
        }
        if rows != n || total != n * n {
            return Err(invalid(format!("dimensions {dims:?} do not factor a {n}x{n} operator")));
        }
        Ok(FunctionalDef { operators, form, dims: dims.to_vec(), indices: None })
    }

    pub fn with_indices(mut self, indices: Vec<ChargedIndex>) -> Result<Self> {
        if indices.len() != self.dims.len() || indices.iter().zip(&self.dims).any(|(i, &d)| i.dim() != d) {
            return Err(invalid("charges do not match the functional node dimensions"));
        }
        self.indices = Some(indices);
        Ok(self)
    }

    /// Matrix `Σ p_i o_i` or its exponential.
    pub fn matrix(&self, params: &[C64]) -> Result<Array2<C64>> {
        let n = self.operators[0].nrows();
        let mut m = Array2::<C64>::zeros((n, n));
        for (o, &p) in self.operators.iter().zip(params) {
            if p != C64::new(0.0, 0.0) {
                m.scaled_add(p, o);
            }
        }
        match self.form {
            FunctionalForm::Exponential => matrix_exponential(&m),
            FunctionalForm::Linear => Ok(m),
        }
    }

    pub fn realize(&self, params: &[C64]) -> Result<Tensor> {
        let m = self.matrix(params)?;
        let d = DenseTensor::new(m.as_standard_layout().iter().copied().collect(), self.dims.clone())?;
        match &self.indices {
            None => Ok(Tensor::Dense(d)),
            Some(idx) => Ok(Tensor::Block(impose_symmetry(&d, idx.clone())?.0)),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Functional {
    pub def: Arc<FunctionalDef>,
    pub params: Vec<C64>,
    realized: OnceCell<Arc<Tensor>>,
}

impl Functional {
    pub fn new(def: Arc<FunctionalDef>) -> Self {
        let params = vec![C64::new(0.0, 0.0); def.operators.len()];
        Functional { def, params, realized: OnceCell::new() }
    }

    pub fn set(&mut self, index: usize, value: C64) -> Result<()> {
        let n = self.params.len();
        let p = self.params.get_mut(index).ok_or_else(|| invalid(format!("parameter {index} out of range for {n} operators")))?;
        *p = value;
        self.realized = OnceCell::new();
        Ok(())
    }

    pub fn realize(&self) -> Result<Arc<Tensor>> {
        if let Some(t) = self.realized.get() {
            return Ok(t.clone());
        }
        let t = Arc::new(self.def.realize(&self.params)?);
        let _ = self.realized.set(t.clone());
        Ok(t)
    }
}
