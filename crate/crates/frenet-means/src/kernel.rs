//! Compactly supported smoothing kernels.

/// Weight kernel on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// `3/4 (1 - u^2)` on `[-1, 1]`; the default everywhere.
    #[default]
    Epanechnikov,
    /// `3/4 (1 - |u|)^2` on `[-1, 1]`. Kept as a switchable variant for
    /// comparison runs; note it integrates to 1/2, not 1, which rescales the
    /// fit weights by a common factor without changing any minimizer.
    SquaredForm,
}

impl Kernel {
    pub fn eval(&self, u: f64) -> f64 {
        let a = u.abs();
        if a >= 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
            Kernel::SquaredForm => 0.75 * (1.0 - a) * (1.0 - a),
        }
    }

    /// Bandwidth-scaled evaluation `K(u / h) / h`.
    pub fn scaled(&self, u: f64, h: f64) -> f64 {
        self.eval(u / h) / h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{trapezoid, uniform_grid};

    #[test]
    fn epanechnikov_frozen_values() {
        let k = Kernel::Epanechnikov;
        assert_eq!(k.eval(0.0), 0.75);
        assert_eq!(k.eval(0.5), 0.5625);
        assert_eq!(k.eval(-0.5), 0.5625);
        assert_eq!(k.eval(1.0), 0.0);
        assert_eq!(k.eval(-1.3), 0.0);
        assert!((k.scaled(0.05, 0.1) - 5.625).abs() < 1e-15);
    }

    #[test]
    fn squared_form_frozen_values() {
        let k = Kernel::SquaredForm;
        assert_eq!(k.eval(0.0), 0.75);
        assert_eq!(k.eval(0.5), 0.1875);
        assert_eq!(k.eval(-0.5), 0.1875);
        assert_eq!(k.eval(1.0), 0.0);
    }

    #[test]
    fn kernel_masses() {
        let g = uniform_grid(-1.0, 1.0, 20001);
        let epa: Vec<f64> = g.iter().map(|&u| Kernel::Epanechnikov.eval(u)).collect();
        let sq: Vec<f64> = g.iter().map(|&u| Kernel::SquaredForm.eval(u)).collect();
        assert!((trapezoid(&g, &epa) - 1.0).abs() < 1e-8);
        assert!((trapezoid(&g, &sq) - 0.5).abs() < 1e-8);
    }
}
