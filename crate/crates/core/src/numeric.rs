//! Small numeric kernels shared across modules.

use nalgebra::DVector;

/// Compensated (Neumaier) accumulator for vectors of fixed dimension.
#[derive(Debug, Clone)]
pub struct CompensatedSum {
    sum: DVector<f64>,
    carry: DVector<f64>,
}

impl CompensatedSum {
    pub fn zeros(dim: usize) -> Self {
        Self {
            sum: DVector::zeros(dim),
            carry: DVector::zeros(dim),
        }
    }

    pub fn add(&mut self, v: &DVector<f64>) {
        for ((s, c), &x) in self.sum.iter_mut().zip(self.carry.iter_mut()).zip(v.iter()) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
    }

    pub fn total(&self) -> DVector<f64> {
        &self.sum + &self.carry
    }
}

/// Compensated scalar sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Compensated mean of equally sized vectors, summed in slice order.
pub fn compensated_mean(vectors: &[DVector<f64>]) -> DVector<f64> {
    assert!(!vectors.is_empty(), "mean of an empty collection");
    let mut acc = CompensatedSum::zeros(vectors[0].len());
    for v in vectors {
        acc.add(v);
    }
    acc.total() / vectors.len() as f64
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
