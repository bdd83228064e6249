//! Classical fixed-step fourth-order Runge-Kutta.

/// Scratch buffers for [`Rk4::step`], sized once per system.
#[derive(Clone, Debug)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            stage: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.k1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k1.is_empty()
    }

    /// Advances `x` from `t` to `t + dt` in place. `rate(t, x, dx)` writes the
    /// derivative of `x` into `dx`.
    pub fn step<E, F>(&mut self, mut rate: F, t: f64, x: &mut [f64], dt: f64) -> Result<(), E>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    {
        let half = 0.5 * dt;
        rate(t, x, &mut self.k1)?;
        for ((s, xi), k) in self.stage.iter_mut().zip(x.iter()).zip(&self.k1) {
            *s = xi + half * k;
        }
        rate(t + half, &self.stage, &mut self.k2)?;
        for ((s, xi), k) in self.stage.iter_mut().zip(x.iter()).zip(&self.k2) {
            *s = xi + half * k;
        }
        rate(t + half, &self.stage, &mut self.k3)?;
        for ((s, xi), k) in self.stage.iter_mut().zip(x.iter()).zip(&self.k3) {
            *s = xi + dt * k;
        }
        rate(t + dt, &self.stage, &mut self.k4)?;
        let sixth = dt / 6.0;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// One step with freshly allocated scratch space.
pub fn rk4_step<E, F>(rate: F, x: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, E>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
{
    let mut out = x.to_vec();
    Rk4::new(x.len()).step(rate, t, &mut out, dt)?;
    Ok(out)
}

/// Index of the first non-finite entry.
pub fn first_non_finite(x: &[f64]) -> Option<usize> {
    x.iter().position(|v| !v.is_finite())
}
