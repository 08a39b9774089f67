//! Differentiable bag-of-tokens text encoder.
//!
//! Forward pass: mean-pool token embeddings, affine projection, tanh, second
//! affine projection, optional L2 normalization. [`encode_backward`] carries
//! exact reverse-mode gradients for every parameter tensor, including through
//! the normalization. Encoders are role-tagged (query / passage / teacher /
//! student) and the tag travels with checkpoints so experiment code cannot
//! silently swap a teacher for a student.
//!
//! Checkpoint layout: magic `SQE1`, five little-endian u32s
//! (vocab_size, d_emb, d_hidden, d_out, flags), the five tensors as row-major
//! little-endian f64 in declaration order, then the role tag as
//! length-prefixed UTF-8. Flag bit 0 is `normalize_output`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{dot, l2_norm, Matrix};
use crate::rng::SplitMix64;

const MAGIC: &[u8; 4] = b"SQE1";
const FLAG_NORMALIZE: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    Query,
    Passage,
    TeacherQuery,
    StudentQuery,
}

impl RoleTag {
    fn as_str(self) -> &'static str {
        match self {
            RoleTag::Query => "query",
            RoleTag::Passage => "passage",
            RoleTag::TeacherQuery => "teacher_query",
            RoleTag::StudentQuery => "student_query",
        }
    }

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "query" => Ok(RoleTag::Query),
            "passage" => Ok(RoleTag::Passage),
            "teacher_query" => Ok(RoleTag::TeacherQuery),
            "student_query" => Ok(RoleTag::StudentQuery),
            other => Err(Error::Serialization(format!("unknown role_tag '{other}'"))),
        }
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All trainable weights of one encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_embeddings: Matrix, // [vocab_size x d_emb]
    pub proj1_weights: Matrix,    // [d_emb x d_hidden]
    pub proj1_bias: Vec<f64>,
    pub proj2_weights: Matrix, // [d_hidden x d_out]
    pub proj2_bias: Vec<f64>,
    pub normalize_output: bool,
    pub role_tag: RoleTag,
}

/// Output vector of an encoder plus the role that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub source_role: RoleTag,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub token_embeddings: Matrix,
    pub proj1_weights: Matrix,
    pub proj1_bias: Vec<f64>,
    pub proj2_weights: Matrix,
    pub proj2_bias: Vec<f64>,
}

impl EncoderParams {
    pub fn vocab_size(&self) -> u32 {
        self.token_embeddings.rows() as u32
    }

    pub fn d_emb(&self) -> usize {
        self.token_embeddings.cols()
    }

    pub fn d_hidden(&self) -> usize {
        self.proj1_weights.cols()
    }

    pub fn d_out(&self) -> usize {
        self.proj2_weights.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.token_embeddings.is_finite()
            && self.proj1_weights.is_finite()
            && self.proj2_weights.is_finite()
            && self.proj1_bias.iter().all(|x| x.is_finite())
            && self.proj2_bias.iter().all(|x| x.is_finite())
    }

    /// Tensors in declaration order, for optimizers and serialization.
    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.token_embeddings.data_mut(),
            self.proj1_weights.data_mut(),
            &mut self.proj1_bias,
            self.proj2_weights.data_mut(),
            &mut self.proj2_bias,
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.token_embeddings.data(),
            self.proj1_weights.data(),
            &self.proj1_bias,
            self.proj2_weights.data(),
            &self.proj2_bias,
        ]
    }

    /// SHA-256 of the serialized checkpoint, hex encoded.
    pub fn checksum(&self) -> String {
        let mut bytes = Vec::new();
        write_params(self, &mut bytes).expect("in-memory write cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl GradientSet {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Self {
            token_embeddings: Matrix::zeros(
                params.token_embeddings.rows(),
                params.token_embeddings.cols(),
            ),
            proj1_weights: Matrix::zeros(params.proj1_weights.rows(), params.proj1_weights.cols()),
            proj1_bias: vec![0.0; params.proj1_bias.len()],
            proj2_weights: Matrix::zeros(params.proj2_weights.rows(), params.proj2_weights.cols()),
            proj2_bias: vec![0.0; params.proj2_bias.len()],
        }
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.token_embeddings.data_mut(),
            self.proj1_weights.data_mut(),
            &mut self.proj1_bias,
            self.proj2_weights.data_mut(),
            &mut self.proj2_bias,
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.token_embeddings.data(),
            self.proj1_weights.data(),
            &self.proj1_bias,
            self.proj2_weights.data(),
            &self.proj2_bias,
        ]
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (mine, theirs) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (m, t) in mine.iter_mut().zip(theirs) {
                *m += t;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for tensor in self.tensors_mut() {
            for g in tensor.iter_mut() {
                *g *= a;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .into_iter()
            .map(|t| dot(t, t))
            .sum()
    }
}

/// Xavier-uniform initialization: weights uniform in [-s, s] with
/// s = sqrt(6 / (fan_in + fan_out)) per tensor, biases zero. Deterministic
/// per seed.
pub fn init_params(
    seed: u64,
    vocab_size: u32,
    d_emb: usize,
    d_hidden: usize,
    d_out: usize,
    normalize_output: bool,
    role_tag: RoleTag,
) -> Result<EncoderParams> {
    if vocab_size == 0 || d_emb == 0 || d_hidden == 0 || d_out == 0 {
        return Err(Error::Config(
            "all encoder dimensions must be >= 1".into(),
        ));
    }
    let fill = |stream: u64, rows: usize, cols: usize| -> Matrix {
        let mut rng = SplitMix64::for_stream(seed, stream);
        let s = (6.0 / (rows + cols) as f64).sqrt();
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = (rng.next_f64() * 2.0 - 1.0) * s;
        }
        m
    };
    Ok(EncoderParams {
        token_embeddings: fill(0, vocab_size as usize, d_emb),
        proj1_weights: fill(1, d_emb, d_hidden),
        proj1_bias: vec![0.0; d_hidden],
        proj2_weights: fill(2, d_hidden, d_out),
        proj2_bias: vec![0.0; d_out],
        normalize_output,
        role_tag,
    })
}

fn check_tokens(params: &EncoderParams, tokens: &[u32]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::Input("cannot encode an empty token list".into()));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= params.vocab_size()) {
        return Err(Error::Input(format!(
            "token id {bad} out of range (vocab_size {})",
            params.vocab_size()
        )));
    }
    Ok(())
}

struct Forward {
    pooled: Vec<f64>,
    hidden: Vec<f64>,
    norm: f64,
    out: Vec<f64>,
}

fn forward(params: &EncoderParams, tokens: &[u32]) -> Forward {
    let d_emb = params.d_emb();
    // Pool in sorted token order so the mean is bit-identical under
    // permutation of the input.
    let mut sorted = tokens.to_vec();
    sorted.sort_unstable();
    let mut pooled = vec![0.0; d_emb];
    for &t in &sorted {
        let row = params.token_embeddings.row(t as usize);
        for (p, &e) in pooled.iter_mut().zip(row) {
            *p += e;
        }
    }
    let inv_n = 1.0 / tokens.len() as f64;
    for p in pooled.iter_mut() {
        *p *= inv_n;
    }

    let mut hidden = params.proj1_weights.vecmat(&pooled);
    for (h, b) in hidden.iter_mut().zip(&params.proj1_bias) {
        *h = (*h + b).tanh();
    }

    let mut raw_out = params.proj2_weights.vecmat(&hidden);
    for (o, b) in raw_out.iter_mut().zip(&params.proj2_bias) {
        *o += b;
    }

    let (norm, out) = if params.normalize_output {
        let n = l2_norm(&raw_out);
        (n, raw_out.iter().map(|x| x / n).collect())
    } else {
        (1.0, raw_out)
    };
    Forward {
        pooled,
        hidden,
        norm,
        out,
    }
}

/// Embed a token sequence. Pure function of (params, tokens).
pub fn encode(params: &EncoderParams, tokens: &[u32]) -> Result<Embedding> {
    check_tokens(params, tokens)?;
    let fwd = forward(params, tokens);
    if params.normalize_output && fwd.norm == 0.0 {
        return Err(Error::Input(
            "zero-norm output cannot be L2-normalized".into(),
        ));
    }
    Ok(Embedding {
        values: fwd.out,
        source_role: params.role_tag,
    })
}

/// Exact gradients of `upstream_grad . encode(params, tokens)` with respect
/// to every parameter tensor.
pub fn encode_backward(
    params: &EncoderParams,
    tokens: &[u32],
    upstream_grad: &[f64],
) -> Result<GradientSet> {
    let mut grads = GradientSet::zeros_like(params);
    encode_backward_into(params, tokens, upstream_grad, &mut grads)?;
    Ok(grads)
}

/// [`encode_backward`] accumulating into an existing gradient set, so batch
/// loops avoid one dense allocation per call.
pub fn encode_backward_into(
    params: &EncoderParams,
    tokens: &[u32],
    upstream_grad: &[f64],
    grads: &mut GradientSet,
) -> Result<()> {
    check_tokens(params, tokens)?;
    if upstream_grad.len() != params.d_out() {
        return Err(Error::Input(format!(
            "upstream gradient has dimension {}, expected {}",
            upstream_grad.len(),
            params.d_out()
        )));
    }
    let fwd = forward(params, tokens);

    // Through the optional normalization y = o / |o|:
    // dL/do = (g - y (y . g)) / |o|.
    let d_raw: Vec<f64> = if params.normalize_output {
        if fwd.norm == 0.0 {
            return Err(Error::Input(
                "zero-norm output cannot be L2-normalized".into(),
            ));
        }
        let y_dot_g = dot(&fwd.out, upstream_grad);
        fwd.out
            .iter()
            .zip(upstream_grad)
            .map(|(y, g)| (g - y * y_dot_g) / fwd.norm)
            .collect()
    } else {
        upstream_grad.to_vec()
    };

    // Second affine layer.
    grads.proj2_weights.add_outer(&fwd.hidden, &d_raw, 1.0);
    for (g, d) in grads.proj2_bias.iter_mut().zip(&d_raw) {
        *g += d;
    }
    let d_hidden = params.proj2_weights.matvec(&d_raw);

    // tanh and first affine layer.
    let d_pre1: Vec<f64> = d_hidden
        .iter()
        .zip(&fwd.hidden)
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    grads.proj1_weights.add_outer(&fwd.pooled, &d_pre1, 1.0);
    for (g, d) in grads.proj1_bias.iter_mut().zip(&d_pre1) {
        *g += d;
    }
    let d_pooled = params.proj1_weights.matvec(&d_pre1);

    // Mean pooling: each occurrence of a token receives d_pooled / n.
    let inv_n = 1.0 / tokens.len() as f64;
    for &t in tokens {
        let row = grads.token_embeddings.row_mut(t as usize);
        for (g, &d) in row.iter_mut().zip(&d_pooled) {
            *g += d * inv_n;
        }
    }
    Ok(())
}

pub fn write_params<W: Write>(params: &EncoderParams, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    let flags = if params.normalize_output {
        FLAG_NORMALIZE
    } else {
        0
    };
    for dim in [
        params.vocab_size(),
        params.d_emb() as u32,
        params.d_hidden() as u32,
        params.d_out() as u32,
        flags,
    ] {
        w.write_all(&dim.to_le_bytes())?;
    }
    for tensor in params.tensors() {
        for v in tensor {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    let role = params.role_tag.as_str().as_bytes();
    w.write_all(&(role.len() as u32).to_le_bytes())?;
    w.write_all(role)?;
    Ok(())
}

pub fn read_params<R: Read>(mut r: R) -> Result<EncoderParams> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Serialization(format!(
            "bad magic bytes {magic:02x?}, expected {MAGIC:02x?}"
        )));
    }
    let mut dims = [0u32; 5];
    for d in dims.iter_mut() {
        let mut buf = [0u8; 4];
        read_exact(&mut r, &mut buf)?;
        *d = u32::from_le_bytes(buf);
    }
    let [vocab_size, d_emb, d_hidden, d_out, flags] = dims;
    if vocab_size == 0 || d_emb == 0 || d_hidden == 0 || d_out == 0 {
        return Err(Error::Serialization("zero dimension in header".into()));
    }
    if flags & !FLAG_NORMALIZE != 0 {
        return Err(Error::Serialization(format!("unknown flags {flags:#x}")));
    }
    let mut read_tensor = |len: usize| -> Result<Vec<f64>> {
        let mut data = vec![0.0; len];
        for v in data.iter_mut() {
            let mut buf = [0u8; 8];
            read_exact(&mut r, &mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(data)
    };
    let token_embeddings = Matrix::from_vec(
        vocab_size as usize,
        d_emb as usize,
        read_tensor(vocab_size as usize * d_emb as usize)?,
    );
    let proj1_weights = Matrix::from_vec(
        d_emb as usize,
        d_hidden as usize,
        read_tensor(d_emb as usize * d_hidden as usize)?,
    );
    let proj1_bias = read_tensor(d_hidden as usize)?;
    let proj2_weights = Matrix::from_vec(
        d_hidden as usize,
        d_out as usize,
        read_tensor(d_hidden as usize * d_out as usize)?,
    );
    let proj2_bias = read_tensor(d_out as usize)?;

    let mut len_buf = [0u8; 4];
    read_exact(&mut r, &mut len_buf)?;
    let role_len = u32::from_le_bytes(len_buf) as usize;
    if role_len > 64 {
        return Err(Error::Serialization(format!(
            "implausible role_tag length {role_len}"
        )));
    }
    let mut role_buf = vec![0u8; role_len];
    read_exact(&mut r, &mut role_buf)?;
    let role_str = std::str::from_utf8(&role_buf)
        .map_err(|_| Error::Serialization("role_tag is not UTF-8".into()))?;
    let params = EncoderParams {
        token_embeddings,
        proj1_weights,
        proj1_bias,
        proj2_weights,
        proj2_bias,
        normalize_output: flags & FLAG_NORMALIZE != 0,
        role_tag: RoleTag::from_str(role_str)?,
    };
    if !params.is_finite() {
        return Err(Error::Serialization(
            "checkpoint contains non-finite values".into(),
        ));
    }
    Ok(params)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Serialization("truncated checkpoint".into()))
}

pub fn save_params(params: &EncoderParams, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_params(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<EncoderParams> {
    let file = File::open(path)?;
    read_params(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params(seed: u64, normalize: bool) -> EncoderParams {
        init_params(seed, 20, 6, 5, 4, normalize, RoleTag::Query).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = small_params(3, false);
        let b = small_params(3, false);
        assert_eq!(a, b);
        assert!(a.proj1_bias.iter().all(|&x| x == 0.0));
        assert!(a.proj2_bias.iter().all(|&x| x == 0.0));
        let c = small_params(4, false);
        assert_ne!(a, c);
    }

    #[test]
    fn init_variance_matches_uniform_law() {
        // Uniform on [-s, s] has variance s^2/3; check the big tensor.
        let params = init_params(11, 400, 64, 8, 8, false, RoleTag::Passage).unwrap();
        let data = params.token_embeddings.data();
        let s = (6.0f64 / (400.0 + 64.0)).sqrt();
        let mean: f64 = data.iter().sum::<f64>() / data.len() as f64;
        let var: f64 = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / data.len() as f64;
        let expected = s * s / 3.0;
        assert!(
            (var - expected).abs() < 0.1 * expected,
            "var {var} vs expected {expected}"
        );
    }

    #[test]
    fn zero_dims_are_config_errors() {
        assert!(init_params(1, 0, 4, 4, 4, false, RoleTag::Query).is_err());
        assert!(init_params(1, 8, 4, 0, 4, false, RoleTag::Query).is_err());
    }

    #[test]
    fn mean_pooling_is_order_invariant() {
        let params = small_params(5, false);
        let a = encode(&params, &[1, 7, 3, 3]).unwrap();
        let b = encode(&params, &[3, 1, 3, 7]).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut params = small_params(5, false);
        for tensor in params.tensors_mut() {
            tensor.fill(0.0);
        }
        let emb = encode(&params, &[2, 9]).unwrap();
        assert!(emb.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn encode_matches_straight_line_recomputation() {
        // Independent re-implementation of the forward formula.
        let params = small_params(17, true);
        let tokens = [4u32, 9, 9, 15, 0];
        let emb = encode(&params, &tokens).unwrap();

        let d_emb = params.d_emb();
        let mut pooled = vec![0.0; d_emb];
        for &t in &tokens {
            for e in 0..d_emb {
                pooled[e] += params.token_embeddings.get(t as usize, e);
            }
        }
        for p in pooled.iter_mut() {
            *p /= tokens.len() as f64;
        }
        let mut hidden = vec![0.0; params.d_hidden()];
        for j in 0..params.d_hidden() {
            let mut acc = params.proj1_bias[j];
            for e in 0..d_emb {
                acc += pooled[e] * params.proj1_weights.get(e, j);
            }
            hidden[j] = acc.tanh();
        }
        let mut out = vec![0.0; params.d_out()];
        for k in 0..params.d_out() {
            let mut acc = params.proj2_bias[k];
            for j in 0..params.d_hidden() {
                acc += hidden[j] * params.proj2_weights.get(j, k);
            }
            out[k] = acc;
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        for o in out.iter_mut() {
            *o /= norm;
        }
        for (got, want) in emb.values.iter().zip(&out) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_outputs_sit_on_the_unit_sphere() {
        let params = small_params(23, true);
        for seed in 0..10u64 {
            let mut rng = SplitMix64::new(seed);
            let tokens: Vec<u32> = (0..6).map(|_| rng.next_below(20) as u32).collect();
            let emb = encode(&params, &tokens).unwrap();
            let norm = l2_norm(&emb.values);
            assert!((norm - 1.0).abs() < 1e-6, "norm {norm}");
        }
    }

    #[test]
    fn input_errors() {
        let params = small_params(2, false);
        assert!(matches!(encode(&params, &[]), Err(Error::Input(_))));
        assert!(matches!(encode(&params, &[99]), Err(Error::Input(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let params = small_params(31, true);
        let grads = encode_backward(&params, &[1, 2, 3], &[0.0; 4]).unwrap();
        assert_eq!(grads.squared_norm(), 0.0);
    }

    #[test]
    fn untouched_embedding_rows_have_zero_gradient() {
        let params = small_params(31, false);
        let grads = encode_backward(&params, &[1, 5], &[1.0, -0.5, 0.25, 2.0]).unwrap();
        for row in 0..20 {
            let row_norm: f64 = grads
                .token_embeddings
                .row(row)
                .iter()
                .map(|x| x * x)
                .sum();
            if row == 1 || row == 5 {
                assert!(row_norm > 0.0, "touched row {row} has zero grad");
            } else {
                assert_eq!(row_norm, 0.0, "untouched row {row} has nonzero grad");
            }
        }
    }

    /// Central finite differences over every parameter of a small encoder.
    fn finite_diff_check(normalize: bool, seed: u64) {
        let params = small_params(seed, normalize);
        let mut rng = SplitMix64::for_stream(seed, 77);
        let tokens: Vec<u32> = (0..5).map(|_| rng.next_below(20) as u32).collect();
        let upstream: Vec<f64> = (0..4).map(|_| rng.next_gaussian()).collect();

        let grads = encode_backward(&params, &tokens, &upstream).unwrap();
        let eps = 1e-4;
        let objective = |p: &EncoderParams| -> f64 {
            let emb = encode(p, &tokens).unwrap();
            dot(&emb.values, &upstream)
        };
        for tensor_idx in 0..5 {
            let len = params.tensors()[tensor_idx].len();
            for i in 0..len {
                let mut plus = params.clone();
                plus.tensors_mut()[tensor_idx][i] += eps;
                let mut minus = params.clone();
                minus.tensors_mut()[tensor_idx][i] -= eps;
                let numeric = (objective(&plus) - objective(&minus)) / (2.0 * eps);
                let analytic = grads.tensors()[tensor_idx][i];
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-4,
                    "tensor {tensor_idx} elem {i}: numeric {numeric} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_diff_check(false, 101);
        finite_diff_check(true, 202);
    }

    #[test]
    fn checkpoint_round_trips_bit_identically() {
        let params = small_params(41, true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.ckpt");
        save_params(&params, &path).unwrap();
        let loaded = load_params(&path).unwrap();
        assert_eq!(params, loaded);
        assert_eq!(params.checksum(), loaded.checksum());
    }

    #[test]
    fn checkpoint_preserves_role_tag() {
        let params = init_params(1, 10, 3, 3, 2, false, RoleTag::TeacherQuery).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("teacher.ckpt");
        save_params(&params, &path).unwrap();
        assert_eq!(load_params(&path).unwrap().role_tag, RoleTag::TeacherQuery);
    }

    #[test]
    fn bad_magic_and_truncation_are_serialization_errors() {
        let params = small_params(1, false);
        let mut bytes = Vec::new();
        write_params(&params, &mut bytes).unwrap();

        let mut corrupted = bytes.clone();
        corrupted[0] = b'X';
        assert!(matches!(
            read_params(&corrupted[..]),
            Err(Error::Serialization(_))
        ));

        let truncated = &bytes[..bytes.len() / 2];
        assert!(matches!(
            read_params(truncated),
            Err(Error::Serialization(_))
        ));
    }
}
