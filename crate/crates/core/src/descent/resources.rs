//! Asymptotic resource counts evaluated with all hidden constants set to 1.

use super::Method;

pub const RESOURCE_CAVEAT: &str = "asymptotic, unit constants";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceParams {
    pub p: usize,
    pub s_a: usize,
    pub lambda_d: f64,
    pub lambda_h: f64,
    /// Dimension `N`; gate counts carry a `log₂ N` factor.
    pub n_dim: usize,
    pub tau: f64,
    /// Simulation accuracy for `e^{−iDτ}`.
    pub epsilon: f64,
    pub epsilon_d: f64,
    pub epsilon_nwt: f64,
    pub t_steps: u32,
    pub delta: f64,
    pub method: Method,
}

impl ResourceParams {
    /// Same `Λ` for `D` and `H`, unit everything else.
    pub fn uniform(p: usize, lambda: f64, delta: f64, t_steps: u32, method: Method) -> Self {
        Self {
            p,
            s_a: 1,
            lambda_d: lambda,
            lambda_h: lambda,
            n_dim: 2,
            tau: 1.0,
            epsilon: delta,
            epsilon_d: delta,
            epsilon_nwt: delta,
            t_steps,
            delta,
            method,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceEstimate {
    pub sim_d_copies: f64,
    pub sim_d_queries: f64,
    pub sim_d_gates: f64,
    pub gradient_step_copies: f64,
    pub gradient_step_queries: f64,
    pub gradient_step_gates: f64,
    pub newton_step_copies: f64,
    pub newton_step_queries: f64,
    pub newton_step_gates: f64,
    /// Copies of `x⁰` for `T` steps of the selected method.
    pub multi_step_copies: f64,
    pub multi_step_gates: f64,
    pub caveat: &'static str,
}

impl ResourceEstimate {
    /// `(name, value)` pairs in a fixed order.
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("sim_d_copies", self.sim_d_copies),
            ("sim_d_queries", self.sim_d_queries),
            ("sim_d_gates", self.sim_d_gates),
            ("gradient_step_copies", self.gradient_step_copies),
            ("gradient_step_queries", self.gradient_step_queries),
            ("gradient_step_gates", self.gradient_step_gates),
            ("newton_step_copies", self.newton_step_copies),
            ("newton_step_queries", self.newton_step_queries),
            ("newton_step_gates", self.newton_step_gates),
            ("multi_step_copies", self.multi_step_copies),
            ("multi_step_gates", self.multi_step_gates),
        ]
    }
}

pub fn estimate_resources(q: &ResourceParams) -> ResourceEstimate {
    let p = q.p as f64;
    let s = q.s_a as f64;
    let log_n = (q.n_dim.max(2) as f64).log2();
    let ld = q.lambda_d;
    let lam = q.lambda_d.max(q.lambda_h);
    let t = q.t_steps as i32;
    let tau2 = q.tau * q.tau;
    // reciprocals first: 1/0.1 is exactly 10, 0.1⁴ is not 1e−4
    let inv_e2 = q.epsilon.recip().powi(2);
    let inv_ed4 = q.epsilon_d.recip().powi(4);
    let inv_en4 = q.epsilon_nwt.recip().powi(4);
    let inv_d4 = q.delta.recip().powi(4);

    let (per_step_copies, per_step_gates) = match q.method {
        Method::Gradient => (p.powi(5) * ld * ld * inv_d4, p.powi(5) * ld.powi(3) * s * inv_d4),
        Method::Newton | Method::NewtonSaddleFree => {
            (p.powi(9) * lam * lam * inv_d4, p.powi(10) * lam.powi(3) * s * inv_d4)
        }
    };
    ResourceEstimate {
        sim_d_copies: p.powi(5) * ld * ld * tau2 * inv_e2,
        sim_d_queries: p.powi(4) * ld.powi(3) * tau2 * s * inv_e2,
        sim_d_gates: p.powi(5) * ld.powi(3) * tau2 * s * log_n * inv_e2,
        gradient_step_copies: p.powi(5) * ld * ld * inv_ed4,
        gradient_step_queries: p.powi(4) * ld.powi(3) * s * inv_ed4,
        gradient_step_gates: p.powi(5) * ld.powi(3) * s * log_n * inv_ed4,
        newton_step_copies: p.powi(9) * lam * lam * inv_en4,
        newton_step_queries: p.powi(8) * lam.powi(3) * s * inv_en4,
        newton_step_gates: p.powi(10) * lam.powi(3) * s * log_n * inv_en4,
        multi_step_copies: per_step_copies.powi(t),
        multi_step_gates: if t == 0 { 0.0 } else { per_step_gates.powi(t) * log_n },
        caveat: RESOURCE_CAVEAT,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_need_one_copy() {
        for m in [Method::Gradient, Method::Newton] {
            let r = estimate_resources(&ResourceParams::uniform(3, 5.0, 0.01, 0, m));
            assert_eq!(r.multi_step_copies, 1.0);
        }
    }

    #[test]
    fn unit_inputs_give_one_copy() {
        for m in [Method::Gradient, Method::Newton] {
            let r = estimate_resources(&ResourceParams::uniform(1, 1.0, 1.0, 3, m));
            assert_eq!(r.multi_step_copies, 1.0);
        }
    }

    #[test]
    fn gradient_two_steps() {
        let r = estimate_resources(&ResourceParams::uniform(2, 2.0, 0.1, 2, Method::Gradient));
        let per = 32.0 * 4.0 / 1e-4;
        assert!((r.multi_step_copies / (per * per) - 1.0).abs() < 1e-12);
        assert_eq!(r.multi_step_copies, 1.6384e12);
    }

    #[test]
    fn newton_exponentiation() {
        let r = estimate_resources(&ResourceParams::uniform(2, 3.0, 0.5, 3, Method::Newton));
        let per: f64 = 512.0 * 9.0 / 0.0625;
        assert!((r.multi_step_copies / per.powi(3) - 1.0).abs() < 1e-12);
        assert!((r.newton_step_copies - per).abs() < 1e-6);
    }

    #[test]
    fn single_step_and_simulation_counts() {
        let q = ResourceParams {
            p: 2,
            s_a: 3,
            lambda_d: 2.0,
            lambda_h: 5.0,
            n_dim: 8,
            tau: 2.0,
            epsilon: 0.5,
            epsilon_d: 0.5,
            epsilon_nwt: 0.5,
            t_steps: 1,
            delta: 0.5,
            method: Method::Gradient,
        };
        let r = estimate_resources(&q);
        assert_eq!(r.sim_d_copies, 32.0 * 4.0 * 4.0 / 0.25);
        assert_eq!(r.sim_d_queries, 16.0 * 8.0 * 4.0 * 3.0 / 0.25);
        assert_eq!(r.sim_d_gates, 32.0 * 8.0 * 4.0 * 3.0 * 3.0 / 0.25);
        assert_eq!(r.gradient_step_copies, 32.0 * 4.0 * 16.0);
        assert_eq!(r.gradient_step_queries, 16.0 * 8.0 * 3.0 * 16.0);
        assert_eq!(r.newton_step_copies, 512.0 * 25.0 * 16.0);
        assert_eq!(r.newton_step_queries, 256.0 * 125.0 * 3.0 * 16.0);
        assert_eq!(r.newton_step_gates, 1024.0 * 125.0 * 3.0 * 3.0 * 16.0);
        assert_eq!(r.multi_step_gates, 32.0 * 8.0 * 3.0 * 16.0 * 3.0);
        assert_eq!(r.caveat, RESOURCE_CAVEAT);
    }
}
