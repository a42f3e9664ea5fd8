use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::autodiff::{Array, Tape, Var};
use crate::error::{Error, Result};
use crate::interchange::RelationLabel;

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"CDCLCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Positions of each named parameter inside a [`ParameterStore`].
#[derive(Debug, Clone)]
pub struct ParamLayout {
    /// `proj[layer - 1][relation][head]`: projection `W` of shape `d_out × d_in_layer`.
    pub proj: [Vec<Vec<usize>>; 2],
    /// `attn[layer - 1][relation][head]`: `2 × d_out`, row 0 scores the attending
    /// node and row 1 the neighbor.
    pub attn: [Vec<Vec<usize>>; 2],
    /// One scalar per relation label (`19 × 1`), shared by both layers.
    pub relation_weight: usize,
    /// Layer-1 residual projection, `d_hidden × d_in`.
    pub residual: usize,
    pub cls_w1: usize,
    pub cls_b1: usize,
    pub cls_w2: usize,
    pub cls_b2: usize,
    /// Hypothesis projection into the graph width, `d_hidden × d_in`.
    pub hyp_proj: usize,
    /// Classifier hidden state to graph width, `d_hidden × mlp_hidden`.
    pub triplet_proj: usize,
    pub exp_w1: usize,
    pub exp_b1: usize,
    pub exp_w2: usize,
    pub exp_b2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Xavier,
    Zero,
}

fn shapes(cfg: &ModelConfig) -> (ParamLayout, Vec<(String, usize, usize, Init)>) {
    let mut specs: Vec<(String, usize, usize, Init)> = Vec::new();
    let mut push = |name: String, rows: usize, cols: usize, init: Init| {
        specs.push((name, rows, cols, init));
        specs.len() - 1
    };
    let mut proj: [Vec<Vec<usize>>; 2] = [Vec::new(), Vec::new()];
    let mut attn: [Vec<Vec<usize>>; 2] = [Vec::new(), Vec::new()];
    for layer in 1..=2 {
        let d_in = if layer == 1 { cfg.d_in } else { cfg.d_hidden };
        for r in RelationLabel::ALL {
            let mut p = Vec::new();
            let mut a = Vec::new();
            for k in 0..cfg.heads(layer) {
                let base = format!("layer{layer}.{}.head{k}", r.name());
                p.push(push(format!("{base}.W"), cfg.d_hidden, d_in, Init::Xavier));
                a.push(push(format!("{base}.a"), 2, cfg.d_hidden, Init::Xavier));
            }
            proj[layer - 1].push(p);
            attn[layer - 1].push(a);
        }
    }
    let relation_weight = push("relation_weight".into(), RelationLabel::COUNT, 1, Init::Zero);
    let residual = push("layer1.residual".into(), cfg.d_hidden, cfg.d_in, Init::Xavier);
    let cls_in = cfg.d_hidden + cfg.d_in;
    let cls_w1 = push("cls.w1".into(), cfg.mlp_hidden, cls_in, Init::Xavier);
    let cls_b1 = push("cls.b1".into(), 1, cfg.mlp_hidden, Init::Zero);
    let cls_w2 = push("cls.w2".into(), 3, cfg.mlp_hidden, Init::Xavier);
    let cls_b2 = push("cls.b2".into(), 1, 3, Init::Zero);
    let hyp_proj = push("hyp_proj".into(), cfg.d_hidden, cfg.d_in, Init::Xavier);
    let triplet_proj = push("triplet_proj".into(), cfg.d_hidden, cfg.mlp_hidden, Init::Xavier);
    let exp_w1 = push("exp.w1".into(), cfg.mlp_hidden, 2 * cfg.d_hidden, Init::Xavier);
    let exp_b1 = push("exp.b1".into(), 1, cfg.mlp_hidden, Init::Zero);
    let exp_w2 = push("exp.w2".into(), 1, cfg.mlp_hidden, Init::Xavier);
    let exp_b2 = push("exp.b2".into(), 1, 1, Init::Zero);
    let layout = ParamLayout {
        proj,
        attn,
        relation_weight,
        residual,
        cls_w1,
        cls_b1,
        cls_w2,
        cls_b2,
        hyp_proj,
        triplet_proj,
        exp_w1,
        exp_b1,
        exp_w2,
        exp_b2,
    };
    (layout, specs)
}

/// Rounds every entry to the nearest `f32` so checkpoints round-trip exactly.
pub fn round_to_f32(a: &mut Array) {
    for v in a.data_mut() {
        *v = *v as f32 as f64;
    }
}

/// All trainable arrays of the model, in a fixed named order.
#[derive(Debug, Clone)]
pub struct ParameterStore {
    config: ModelConfig,
    layout: ParamLayout,
    names: Vec<String>,
    arrays: Vec<Array>,
}

impl ParameterStore {
    /// Glorot-uniform weights, zero biases and zero relation weights.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = shapes(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::with_capacity(specs.len());
        let mut arrays = Vec::with_capacity(specs.len());
        for (name, rows, cols, init) in specs {
            let mut a = Array::zeros(rows, cols);
            if init == Init::Xavier {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                for v in a.data_mut() {
                    *v = rng.gen_range(-limit..limit);
                }
                round_to_f32(&mut a);
            }
            names.push(name);
            arrays.push(a);
        }
        Ok(Self {
            config: config.clone(),
            layout,
            names,
            arrays,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arrays(&self) -> &[Array] {
        &self.arrays
    }

    pub fn arrays_mut(&mut self) -> &mut [Array] {
        &mut self.arrays
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.names.iter().position(|n| n == name).map(|i| &self.arrays[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.arrays[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.arrays.iter().map(Array::len).sum()
    }

    /// Registers every array as a tape parameter.
    pub fn bind(&self, tape: &mut Tape) -> Result<BoundParams> {
        self.bind_where(tape, |_| true)
    }

    /// Registers only the arrays a forward pass over graphs carrying `relations`
    /// can reach; projections of other relations stay unbound.
    pub fn bind_for(&self, tape: &mut Tape, relations: &BTreeSet<RelationLabel>) -> Result<BoundParams> {
        let mut used = vec![true; self.arrays.len()];
        for layer in 0..2 {
            for r in RelationLabel::ALL {
                if !relations.contains(&r) {
                    for &i in self.layout.proj[layer][r.index()].iter().chain(&self.layout.attn[layer][r.index()]) {
                        used[i] = false;
                    }
                }
            }
        }
        self.bind_where(tape, |i| used[i])
    }

    fn bind_where(&self, tape: &mut Tape, keep: impl Fn(usize) -> bool) -> Result<BoundParams> {
        let mut vars = Vec::with_capacity(self.arrays.len());
        for (i, a) in self.arrays.iter().enumerate() {
            vars.push(if keep(i) { Some(tape.param(a.clone())?) } else { None });
        }
        Ok(BoundParams::new(&self.config, &self.layout, vars))
    }

    /// Replaces all arrays, checking count and shapes.
    pub fn set_arrays(&mut self, arrays: Vec<Array>) -> Result<()> {
        if arrays.len() != self.arrays.len() {
            return Err(Error::Dimension {
                name: "parameter count".into(),
                expected: self.arrays.len(),
                found: arrays.len(),
            });
        }
        for (i, a) in arrays.iter().enumerate() {
            check_shape(&self.names[i], self.arrays[i].shape(), a.shape())?;
        }
        self.arrays = arrays;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let cfg = serde_json::to_vec(&self.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        buf.extend_from_slice(&cfg);
        buf.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, a) in self.names.iter().zip(&self.arrays) {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(a.rows() as u32).to_le_bytes());
            buf.extend_from_slice(&(a.cols() as u32).to_le_bytes());
            for &v in a.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out.write_all(&buf)
            .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
    }

    /// Loads a checkpoint. With `expected`, widths must agree with it.
    pub fn load(path: &Path, expected: Option<&ModelConfig>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, expected)
    }

    pub fn from_bytes(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic: not a model checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let cfg_len = r.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(cfg_len)?)
            .map_err(|e| Error::Checkpoint(format!("config block: {e}")))?;
        if let Some(exp) = expected {
            exp.check_compatible(&config)?;
        }
        let mut store = Self::init(&config, 0)?;
        let count = r.u32()? as usize;
        if count != store.arrays.len() {
            return Err(Error::Dimension {
                name: "parameter count".into(),
                expected: store.arrays.len(),
                found: count,
            });
        }
        let index: HashMap<String, usize> =
            store.names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut seen = vec![false; count];
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let i = *index
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
            if seen[i] {
                return Err(Error::Checkpoint(format!("duplicate parameter {name}")));
            }
            seen[i] = true;
            check_shape(&name, store.arrays[i].shape(), (rows, cols))?;
            let raw = r.take(rows * cols * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            store.arrays[i] = Array::from_vec(rows, cols, data)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after last parameter",
                bytes.len() - r.pos
            )));
        }
        Ok(store)
    }
}

fn check_shape(name: &str, expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected.0 != found.0 {
        return Err(Error::Dimension {
            name: format!("{name} rows"),
            expected: expected.0,
            found: found.0,
        });
    }
    if expected.1 != found.1 {
        return Err(Error::Dimension {
            name: format!("{name} cols"),
            expected: expected.1,
            found: found.1,
        });
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parameters registered on one tape. Unbound entries were not needed by the pass.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub vars: Vec<Option<Var>>,
}

impl BoundParams {
    pub fn new(config: &ModelConfig, layout: &ParamLayout, vars: Vec<Option<Var>>) -> Self {
        Self {
            config: config.clone(),
            layout: layout.clone(),
            vars,
        }
    }

    /// Wraps fully bound variables, e.g. those handed out by a gradient check.
    pub fn from_vars(config: &ModelConfig, layout: &ParamLayout, vars: &[Var]) -> Self {
        Self::new(config, layout, vars.iter().copied().map(Some).collect())
    }

    pub fn var(&self, index: usize) -> Var {
        self.vars[index].unwrap_or_else(|| panic!("parameter {index} was not bound on this tape"))
    }

    pub fn proj(&self, layer: usize, relation: RelationLabel, head: usize) -> Var {
        self.var(self.layout.proj[layer - 1][relation.index()][head])
    }

    pub fn attn(&self, layer: usize, relation: RelationLabel, head: usize) -> Var {
        self.var(self.layout.attn[layer - 1][relation.index()][head])
    }

    /// Gradient of every parameter, zeros for unbound or disconnected ones.
    pub fn gradients(&self, grads: &crate::autodiff::Gradients, shapes: &[Array]) -> Vec<Array> {
        self.vars
            .iter()
            .zip(shapes)
            .map(|(v, a)| match v.and_then(|v| grads.get(v)) {
                Some(g) => g.clone(),
                None => Array::zeros(a.rows(), a.cols()),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig::with_widths(6, 4, 5)
    }

    #[test]
    fn layout_counts() {
        let cfg = small();
        let store = ParameterStore::init(&cfg, 1).unwrap();
        // per relation: (W + a) per head, heads 4 then 1
        let expected = 19 * 2 * (4 + 1) + 1 + 1 + 4 + 2 + 4;
        assert_eq!(store.len(), expected);
        assert_eq!(store.get("layer1.Elaboration.head3.W").unwrap().shape(), (4, 6));
        assert_eq!(store.get("layer2.Lexical.head0.W").unwrap().shape(), (4, 4));
        assert_eq!(store.get("cls.w1").unwrap().shape(), (5, 10));
        assert!(store.get("relation_weight").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_seeded_and_f32_exact() {
        let a = ParameterStore::init(&small(), 3).unwrap();
        let b = ParameterStore::init(&small(), 3).unwrap();
        let c = ParameterStore::init(&small(), 4).unwrap();
        assert_eq!(a.arrays(), b.arrays());
        assert_ne!(a.arrays(), c.arrays());
        for arr in a.arrays() {
            assert!(arr.data().iter().all(|&v| v == v as f32 as f64));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let a = ParameterStore::init(&small(), 5).unwrap();
        let mut bytes = Vec::new();
        a.write_to(&mut bytes).unwrap();
        let b = ParameterStore::from_bytes(&bytes, Some(&small())).unwrap();
        assert_eq!(a.arrays(), b.arrays());
        assert_eq!(a.config(), b.config());
    }

    #[test]
    fn checkpoint_errors() {
        let a = ParameterStore::init(&small(), 5).unwrap();
        let mut bytes = Vec::new();
        a.write_to(&mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ParameterStore::from_bytes(&bad, None).unwrap_err().to_string().contains("magic"));

        let mut bad = bytes.clone();
        bad[9] = 7;
        assert!(ParameterStore::from_bytes(&bad, None).unwrap_err().to_string().contains("version"));

        let err = ParameterStore::from_bytes(&bytes[..bytes.len() - 3], None).unwrap_err();
        assert!(err.to_string().contains("truncated"));

        let other = ModelConfig::with_widths(6, 8, 5);
        let err = ParameterStore::from_bytes(&bytes, Some(&other)).unwrap_err().to_string();
        assert!(err.contains("d_hidden") && err.contains('8') && err.contains('4'), "{err}");
    }
}
