use crate::autodiff::{kernels, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::geometry::SpherePoint;

/// Directions shorter than this have no usable normal.
pub const DEGENERATE_DIRECTION: f64 = 1e-12;

const INPUT_DIM: usize = 3;
const OUTPUT_DIM: usize = 6;

/// Layer sizes of the mapping network: 3 inputs, ReLU hidden layers,
/// 6 linear outputs `[p v]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MappingNetSpec {
    pub hidden_dims: Vec<usize>,
}

impl Default for MappingNetSpec {
    /// Three fully connected layers: 3→128→128→6.
    fn default() -> Self {
        Self {
            hidden_dims: vec![128, 128],
        }
    }
}

impl MappingNetSpec {
    pub fn new(hidden_dims: Vec<usize>) -> Result<Self> {
        if hidden_dims.contains(&0) {
            return Err(Error::domain(format!("hidden widths {hidden_dims:?} must be positive")));
        }
        Ok(Self { hidden_dims })
    }

    pub fn input_dim(&self) -> usize {
        INPUT_DIM
    }

    pub fn output_dim(&self) -> usize {
        OUTPUT_DIM
    }

    /// `[3, hidden..., 6]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_dims.len() + 2);
        d.push(INPUT_DIM);
        d.extend_from_slice(&self.hidden_dims);
        d.push(OUTPUT_DIM);
        d
    }

    /// `(inputs, outputs)` of each affine layer in order.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        self.layer_dims().windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Σ (in·out + out) over layers.
    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Flat parameter vector of a mapping network.
///
/// Packing order: for each layer in sequence, the `in×out` weight matrix in
/// row-major order (row = input unit) followed by the `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    pub values: Vec<f64>,
}

impl WeightVector {
    pub fn new(spec: &MappingNetSpec, values: Vec<f64>) -> Result<Self> {
        check_len(spec, values.len())?;
        Ok(Self { values })
    }

    pub fn zeros(spec: &MappingNetSpec) -> Self {
        Self {
            values: vec![0.0; spec.param_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_len(spec: &MappingNetSpec, len: usize) -> Result<()> {
    if len != spec.param_count() {
        return Err(Error::contract(format!(
            "weight vector has {len} values but the mapping network needs {}",
            spec.param_count()
        )));
    }
    Ok(())
}

/// Weights of one affine layer: `y = x·W + b` with `W` stored `in×out`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn pack(spec: &MappingNetSpec, layers: &[LayerWeights]) -> Result<WeightVector> {
    let expected = spec.layers();
    if layers.len() != expected.len() {
        return Err(Error::contract(format!(
            "{} layers given, spec has {}",
            layers.len(),
            expected.len()
        )));
    }
    let mut values = Vec::with_capacity(spec.param_count());
    for (l, &(i, o)) in layers.iter().zip(&expected) {
        if (l.inputs, l.outputs) != (i, o) || l.weight.len() != i * o || l.bias.len() != o {
            return Err(Error::contract(format!(
                "layer {}x{} (weight {}, bias {}) does not match spec {i}x{o}",
                l.inputs,
                l.outputs,
                l.weight.len(),
                l.bias.len()
            )));
        }
        values.extend_from_slice(&l.weight);
        values.extend_from_slice(&l.bias);
    }
    Ok(WeightVector { values })
}

pub fn unpack(spec: &MappingNetSpec, theta: &WeightVector) -> Result<Vec<LayerWeights>> {
    check_len(spec, theta.len())?;
    let mut offset = 0;
    let mut out = Vec::new();
    for (i, o) in spec.layers() {
        let weight = theta.values[offset..offset + i * o].to_vec();
        offset += i * o;
        let bias = theta.values[offset..offset + o].to_vec();
        offset += o;
        out.push(LayerWeights {
            inputs: i,
            outputs: o,
            weight,
            bias,
        });
    }
    Ok(out)
}

/// One output of the mapping network: surface point `p` and raw
/// direction `v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentPlane {
    pub p: Vec3,
    pub v: Vec3,
}

impl TangentPlane {
    pub fn is_degenerate(&self) -> bool {
        vec3::norm(self.v) < DEGENERATE_DIRECTION
    }

    /// `v / |v|`.
    pub fn normal(&self) -> Result<Vec3> {
        vec3::normalized(self.v, DEGENERATE_DIRECTION)
            .ok_or_else(|| Error::domain(format!("degenerate tangent direction {:?}", self.v)))
    }
}

/// A mapping network with unpacked weights, evaluated without a tape.
#[derive(Clone, Debug)]
pub struct MappingNet {
    layers: Vec<LayerWeights>,
}

impl MappingNet {
    pub fn new(spec: &MappingNetSpec, theta: &WeightVector) -> Result<Self> {
        Ok(Self {
            layers: unpack(spec, theta)?,
        })
    }

    /// Forward pass over a batch of `N×3` inputs, returning `N×6` rows.
    ///
    /// Rows are computed independently, so a batch and its single-row
    /// evaluations agree bit for bit.
    pub fn forward_rows(&self, inputs: &[Vec3]) -> Vec<[f64; 6]> {
        let n = inputs.len();
        let mut h: Vec<f64> = inputs.iter().flat_map(|p| p.iter().copied()).collect();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut y = kernels::matmul(&h, &l.weight, n, l.inputs, l.outputs);
            for row in y.chunks_exact_mut(l.outputs) {
                row.iter_mut().zip(&l.bias).for_each(|(x, b)| *x += b);
                if li != last {
                    row.iter_mut().for_each(|x| *x = x.max(0.0));
                }
            }
            h = y;
        }
        h.chunks_exact(OUTPUT_DIM)
            .map(|r| [r[0], r[1], r[2], r[3], r[4], r[5]])
            .collect()
    }

    pub fn planes(&self, xs: &[SpherePoint]) -> Vec<TangentPlane> {
        let inputs: Vec<Vec3> = xs.iter().map(|x| x.coords()).collect();
        self.forward_rows(&inputs)
            .into_iter()
            .map(|r| TangentPlane {
                p: [r[0], r[1], r[2]],
                v: [r[3], r[4], r[5]],
            })
            .collect()
    }
}

/// Maps sphere samples through `f_θ`. Degenerate planes are returned as is;
/// check [`TangentPlane::is_degenerate`].
pub fn mapping_forward(spec: &MappingNetSpec, theta: &WeightVector, xs: &[SpherePoint]) -> Result<Vec<TangentPlane>> {
    Ok(MappingNet::new(spec, theta)?.planes(xs))
}

/// Tape nodes produced by [`mapping_forward_tape`].
#[derive(Clone, Copy, Debug)]
pub struct MappingOutput {
    /// `N×6` raw outputs.
    pub out: Var,
    /// `N×3` positions `p`.
    pub positions: Var,
    /// `N×3` directions `v`.
    pub directions: Var,
}

/// Records the mapping network on `tape` with weights sliced out of the
/// 1-D `theta` node, so gradients reach whatever produced `theta`.
pub fn mapping_forward_tape(tape: &mut Tape, spec: &MappingNetSpec, theta: Var, x: Var) -> Result<MappingOutput> {
    check_len(spec, tape.value(theta).len())?;
    match tape.value(x).shape() {
        [_, 3] => {}
        s => {
            return Err(Error::Shape {
                op: "mapping_forward",
                lhs: s.to_vec(),
                rhs: vec![0, 3],
            })
        }
    }
    let layers = spec.layers();
    let mut h = x;
    let mut offset = 0;
    for (li, &(i, o)) in layers.iter().enumerate() {
        let w = tape.slice(theta, offset, i * o)?;
        let w = tape.reshape(w, vec![i, o])?;
        offset += i * o;
        let b = tape.slice(theta, offset, o)?;
        offset += o;
        let y = tape.matmul(h, w)?;
        h = tape.add_bias(y, b)?;
        if li + 1 != layers.len() {
            h = tape.relu(h)?;
        }
    }
    let positions = tape.columns(h, 0, 3)?;
    let directions = tape.columns(h, 3, 3)?;
    Ok(MappingOutput {
        out: h,
        positions,
        directions,
    })
}

/// `N×3` tensor of sphere coordinates.
pub(crate) fn sphere_tensor(xs: &[SpherePoint]) -> Result<Tensor> {
    let pts: Vec<Vec3> = xs.iter().map(|x| x.coords()).collect();
    Tensor::from_points(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_sphere_uniform;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_theta(spec: &MappingNetSpec, seed: u64) -> WeightVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        WeightVector {
            values: (0..spec.param_count()).map(|_| rng.random_range(-0.3..0.3)).collect(),
        }
    }

    #[test]
    fn default_spec_has_17798_parameters() {
        assert_eq!(MappingNetSpec::default().param_count(), 17798);
    }

    #[test]
    fn small_spec_count() {
        let spec = MappingNetSpec::new(vec![2]).unwrap();
        assert_eq!(spec.param_count(), 3 * 2 + 2 + 2 * 6 + 6);
        assert_eq!(spec.param_count(), 26);
    }

    #[test]
    fn pack_unpack_round_trip_is_exact() {
        let spec = MappingNetSpec::default();
        let theta = random_theta(&spec, 1);
        let layers = unpack(&spec, &theta).unwrap();
        assert_eq!(pack(&spec, &layers).unwrap(), theta);
    }

    #[test]
    fn one_packed_entry_maps_to_one_coefficient() {
        let spec = MappingNetSpec::new(vec![4, 5]).unwrap();
        let base = random_theta(&spec, 2);
        let before = unpack(&spec, &base).unwrap();
        for k in 0..spec.param_count() {
            let mut t = base.clone();
            t.values[k] += 1.0;
            let after = unpack(&spec, &t).unwrap();
            let changed: usize = before
                .iter()
                .zip(&after)
                .map(|(a, b)| {
                    a.weight.iter().zip(&b.weight).filter(|(x, y)| x != y).count()
                        + a.bias.iter().zip(&b.bias).filter(|(x, y)| x != y).count()
                })
                .sum();
            assert_eq!(changed, 1, "entry {k}");
        }
    }

    #[test]
    fn wrong_length_is_a_contract_error() {
        let spec = MappingNetSpec::default();
        assert!(matches!(WeightVector::new(&spec, vec![0.0; 10]), Err(Error::Contract(_))));
        let bad = WeightVector { values: vec![0.0; 17797] };
        assert!(unpack(&spec, &bad).is_err());
        let xs = sample_sphere_uniform(3, 0).unwrap();
        assert!(mapping_forward(&spec, &bad, &xs).is_err());
    }

    #[test]
    fn zero_network_outputs_zero_and_is_degenerate() {
        let spec = MappingNetSpec::default();
        let xs = sample_sphere_uniform(50, 3).unwrap();
        let planes = mapping_forward(&spec, &WeightVector::zeros(&spec), &xs).unwrap();
        for p in &planes {
            assert_eq!((p.p, p.v), ([0.0; 3], [0.0; 3]));
            assert!(p.is_degenerate());
            assert!(p.normal().is_err());
        }
    }

    #[test]
    fn bias_passes_through_zeroed_trunk() {
        let spec = MappingNetSpec::default();
        let mut layers = unpack(&spec, &WeightVector::zeros(&spec)).unwrap();
        let last = layers.last_mut().unwrap();
        // Identity-like block on the last layer; the zero trunk makes it inert.
        for k in 0..6 {
            last.weight[k * 6 + k] = 1.0;
        }
        last.bias = vec![1.0, 2.0, 3.0, 0.0, 0.0, 1.0];
        let theta = pack(&spec, &layers).unwrap();
        let xs = sample_sphere_uniform(20, 4).unwrap();
        for p in mapping_forward(&spec, &theta, &xs).unwrap() {
            assert_eq!(p.p, [1.0, 2.0, 3.0]);
            assert_eq!(p.normal().unwrap(), [0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn batch_equals_one_at_a_time() {
        let spec = MappingNetSpec::default();
        let theta = random_theta(&spec, 5);
        let xs = sample_sphere_uniform(1000, 6).unwrap();
        let batch = mapping_forward(&spec, &theta, &xs).unwrap();
        for (x, b) in xs.iter().zip(&batch) {
            let single = mapping_forward(&spec, &theta, std::slice::from_ref(x)).unwrap();
            assert_eq!(single[0], *b);
        }
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let spec = MappingNetSpec::new(vec![16, 16]).unwrap();
        let theta = random_theta(&spec, 7);
        let xs = sample_sphere_uniform(40, 8).unwrap();
        let plain = mapping_forward(&spec, &theta, &xs).unwrap();
        let mut tape = Tape::new();
        let th = tape.leaf(Tensor::vector(theta.values.clone()).unwrap());
        let x = tape.constant(sphere_tensor(&xs).unwrap());
        let out = mapping_forward_tape(&mut tape, &spec, th, x).unwrap();
        let p = tape.value(out.positions).rows3().unwrap();
        let v = tape.value(out.directions).rows3().unwrap();
        for i in 0..xs.len() {
            assert_eq!(p[i], plain[i].p);
            assert_eq!(v[i], plain[i].v);
        }
    }

    proptest! {
        #[test]
        fn param_count_formula(hidden in prop::collection::vec(1usize..40, 0..5)) {
            let spec = MappingNetSpec::new(hidden.clone()).unwrap();
            let mut dims = vec![3];
            dims.extend(&hidden);
            dims.push(6);
            let expect: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
            prop_assert_eq!(spec.param_count(), expect);
            prop_assert_eq!(WeightVector::zeros(&spec).len(), expect);
        }
    }
}
