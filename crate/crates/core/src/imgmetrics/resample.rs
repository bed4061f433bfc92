use super::Plane;

#[derive(Clone, Copy, Debug)]
struct Tap {
    lo: usize,
    hi: usize,
    t: f64,
}

fn axis_taps(n_in: usize, n_out: usize) -> Vec<Tap> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            Tap { lo, hi, t: src - lo as f64 }
        })
        .collect()
}

/// Separable bilinear resampler with pixel-center alignment. The map is
/// linear, so it also provides its transpose for back-propagating
/// gradients from the output grid to the input grid.
#[derive(Clone, Debug)]
pub struct Resampler {
    in_dims: (usize, usize),
    out_dims: (usize, usize),
    xs: Vec<Tap>,
    ys: Vec<Tap>,
}

impl Resampler {
    pub fn new(in_dims: (usize, usize), out_dims: (usize, usize)) -> Self {
        Resampler {
            in_dims,
            out_dims,
            xs: axis_taps(in_dims.0, out_dims.0),
            ys: axis_taps(in_dims.1, out_dims.1),
        }
    }

    pub fn in_dims(&self) -> (usize, usize) {
        self.in_dims
    }

    pub fn out_dims(&self) -> (usize, usize) {
        self.out_dims
    }

    pub fn apply(&self, p: &Plane) -> Plane {
        debug_assert_eq!(p.dims(), self.in_dims);
        let (ow, oh) = self.out_dims;
        let mut data = Vec::with_capacity(ow * oh);
        for ty in &self.ys {
            for tx in &self.xs {
                let top = p.at(tx.lo, ty.lo) * (1.0 - tx.t) + p.at(tx.hi, ty.lo) * tx.t;
                let bottom = p.at(tx.lo, ty.hi) * (1.0 - tx.t) + p.at(tx.hi, ty.hi) * tx.t;
                data.push(top * (1.0 - ty.t) + bottom * ty.t);
            }
        }
        Plane { width: ow, height: oh, data }
    }

    /// Adjoint of [`apply`](Self::apply): spreads output-grid values back
    /// onto the input grid with the same bilinear weights.
    pub fn transpose(&self, g: &Plane) -> Plane {
        debug_assert_eq!(g.dims(), self.out_dims);
        let (iw, ih) = self.in_dims;
        let mut out = Plane::filled(iw, ih, 0.0);
        for (oy, ty) in self.ys.iter().enumerate() {
            for (ox, tx) in self.xs.iter().enumerate() {
                let v = g.at(ox, oy);
                let w = [
                    (tx.lo, ty.lo, (1.0 - tx.t) * (1.0 - ty.t)),
                    (tx.hi, ty.lo, tx.t * (1.0 - ty.t)),
                    (tx.lo, ty.hi, (1.0 - tx.t) * ty.t),
                    (tx.hi, ty.hi, tx.t * ty.t),
                ];
                for (x, y, wt) in w {
                    out.data[y * iw + x] += v * wt;
                }
            }
        }
        out
    }
}
