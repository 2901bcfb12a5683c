//! Disentangled mediation VAE: three variational encoders over the proxies,
//! generative decoders for T, M, Y and X with standard-normal priors, the
//! evidence lower bound, and the training loss with auxiliary likelihood
//! terms. The single-latent variant shares the same assembly: it has one
//! block and all three roles point at it.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::ForwardCache;
use crate::nn::{
    bernoulli_nll, categorical_nll, gaussian_nll, log_sum_exp, logistic, softmax, Activation, Mlp,
};
use crate::scm::{Dataset, VarKind};

const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentBlock {
    pub name: String,
    pub dim: usize,
    /// X -> (mu, log-variance), output width 2 * dim.
    pub encoder: Mlp,
}

/// Which latent block serves each confounder role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub tm: usize,
    pub ty: usize,
    pub my: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmavaeModel {
    pub d_x: usize,
    pub m_kind: VarKind,
    pub y_kind: VarKind,
    pub blocks: Vec<LatentBlock>,
    pub roles: Roles,
    /// (z_tm, z_ty) -> logit
    pub dec_t: Mlp,
    /// per-arm heads selected by t: (z_tm, z_my) -> M params
    pub dec_m: [Mlp; 2],
    /// per-arm heads selected by t: (m, z_ty, z_my) -> Y params
    pub dec_y: [Mlp; 2],
    /// (z_tm, z_ty, z_my) -> per-coordinate (mu, log-variance)
    pub dec_x: Mlp,
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub d_x: usize,
    pub m_kind: VarKind,
    pub y_kind: VarKind,
    pub d_tm: usize,
    pub d_ty: usize,
    pub d_my: usize,
    /// Latent dimension of the single-block variant.
    pub d_z: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_x: 6,
            m_kind: VarKind::Continuous,
            y_kind: VarKind::Continuous,
            d_tm: 2,
            d_ty: 2,
            d_my: 2,
            d_z: 2,
            hidden: vec![64, 64],
            activation: Activation::Elu,
            seed: 0,
        }
    }
}

fn head_width(kind: VarKind) -> usize {
    match kind {
        VarKind::Continuous => 2,
        VarKind::Binary => 1,
        VarKind::Categorical(k) => k,
    }
}

fn m_input_width(kind: VarKind) -> usize {
    match kind {
        VarKind::Categorical(k) => k,
        _ => 1,
    }
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

/// Gaussian posterior parameters for one latent block.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// The three per-role posteriors (aliases of one block in the single-latent
/// variant).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTriple {
    pub tm: Posterior,
    pub ty: Posterior,
    pub my: Posterior,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistParams {
    Gaussian { mu: f64, sigma: f64 },
    Bernoulli { logit: f64 },
    Categorical { logits: Vec<f64> },
}

impl DistParams {
    /// Mean of the distribution (success probability for Bernoulli).
    pub fn mean(&self) -> f64 {
        match self {
            DistParams::Gaussian { mu, .. } => *mu,
            DistParams::Bernoulli { logit } => logistic(*logit),
            DistParams::Categorical { logits } => {
                let p = softmax(logits);
                p.iter().enumerate().map(|(k, pk)| k as f64 * pk).sum()
            }
        }
    }
}

/// View over a subset of dataset records.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub data: &'a Dataset,
    pub idx: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn full(data: &'a Dataset, idx: &'a [usize]) -> Self {
        Batch { data, idx }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }
}

/// One standard-normal draw per record per latent coordinate, concatenated
/// over blocks. Fixed draws make the loss a deterministic function of the
/// parameters.
#[derive(Debug, Clone)]
pub struct EpsDraws(pub Vec<Vec<f64>>);

/// Batch-mean loss terms.
#[derive(Debug, Clone)]
pub struct LossParts {
    pub loss: f64,
    pub elbo: f64,
    pub recon_x: f64,
    /// KL per block, in block order.
    pub kl: Vec<f64>,
    pub nll_t: f64,
    pub nll_m: f64,
    pub nll_y: f64,
}

pub fn make_dmavae(cfg: &ModelConfig) -> Result<DmavaeModel> {
    if cfg.d_tm < 1 || cfg.d_ty < 1 || cfg.d_my < 1 {
        return Err(Error::Model("latent dims must be >= 1".into()));
    }
    let blocks = vec![("z_tm", cfg.d_tm), ("z_ty", cfg.d_ty), ("z_my", cfg.d_my)];
    build_model(
        cfg,
        &blocks,
        Roles {
            tm: 0,
            ty: 1,
            my: 2,
        },
    )
}

/// Single-latent variant: one encoder q(Z|X) serving all three roles.
pub fn make_cmavae(cfg: &ModelConfig) -> Result<DmavaeModel> {
    if cfg.d_z < 1 {
        return Err(Error::Model("latent dim must be >= 1".into()));
    }
    build_model(
        cfg,
        &[("z", cfg.d_z)],
        Roles {
            tm: 0,
            ty: 0,
            my: 0,
        },
    )
}

fn build_model(cfg: &ModelConfig, blocks: &[(&str, usize)], roles: Roles) -> Result<DmavaeModel> {
    use rand::SeedableRng;
    if cfg.y_kind.is_categorical() {
        return Err(Error::Model("categorical Y is not supported".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let act = cfg.activation;
    let blocks: Vec<LatentBlock> = blocks
        .iter()
        .map(|(name, dim)| LatentBlock {
            name: name.to_string(),
            dim: *dim,
            encoder: Mlp::init(&dims(cfg.d_x, &cfg.hidden, 2 * dim), act, &mut rng),
        })
        .collect();
    let z_dim = |r: &[usize]| -> usize { distinct(r).iter().map(|&b| blocks[b].dim).sum() };
    let t_in = z_dim(&[roles.tm, roles.ty]);
    let m_in = z_dim(&[roles.tm, roles.my]);
    let y_in = m_input_width(cfg.m_kind) + z_dim(&[roles.ty, roles.my]);
    let x_in = z_dim(&[roles.tm, roles.ty, roles.my]);
    let model = DmavaeModel {
        d_x: cfg.d_x,
        m_kind: cfg.m_kind,
        y_kind: cfg.y_kind,
        dec_t: Mlp::init(&dims(t_in, &cfg.hidden, 1), act, &mut rng),
        dec_m: [
            Mlp::init(
                &dims(m_in, &cfg.hidden, head_width(cfg.m_kind)),
                act,
                &mut rng,
            ),
            Mlp::init(
                &dims(m_in, &cfg.hidden, head_width(cfg.m_kind)),
                act,
                &mut rng,
            ),
        ],
        dec_y: [
            Mlp::init(
                &dims(y_in, &cfg.hidden, head_width(cfg.y_kind)),
                act,
                &mut rng,
            ),
            Mlp::init(
                &dims(y_in, &cfg.hidden, head_width(cfg.y_kind)),
                act,
                &mut rng,
            ),
        ],
        dec_x: Mlp::init(&dims(x_in, &cfg.hidden, 2 * cfg.d_x), act, &mut rng),
        blocks,
        roles,
    };
    Ok(model)
}

fn distinct(roles: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for &r in roles {
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

fn clamp_lv(v: f64) -> f64 {
    v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
}

fn in_clamp(v: f64) -> f64 {
    if (-LOGVAR_CLAMP..=LOGVAR_CLAMP).contains(&v) {
        1.0
    } else {
        0.0
    }
}

struct BlockState {
    mu: Vec<f64>,
    lv_raw: Vec<f64>,
    sigma: Vec<f64>,
    z: Vec<f64>,
    cache: ForwardCache,
    kl: f64,
}

impl DmavaeModel {
    pub fn latent_dim_total(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    pub fn is_single_block(&self) -> bool {
        self.blocks.len() == 1
    }

    fn arm(&self, t: f64) -> Result<usize> {
        if t == 0.0 {
            Ok(0)
        } else if t == 1.0 {
            Ok(1)
        } else {
            Err(Error::Model(format!("t must be 0 or 1, got {t}")))
        }
    }

    fn encode_m_value(&self, m: f64) -> Result<Vec<f64>> {
        match self.m_kind {
            VarKind::Categorical(levels) => {
                let k = m as usize;
                if m.fract() != 0.0 || k >= levels {
                    return Err(Error::Model(format!(
                        "categorical m must be an integer in [0, {levels}), got {m}"
                    )));
                }
                let mut v = vec![0.0; levels];
                v[k] = 1.0;
                Ok(v)
            }
            _ => Ok(vec![m]),
        }
    }

    fn assemble(roles: &[usize], zs: &[&[f64]]) -> Vec<f64> {
        debug_assert_eq!(roles.len(), zs.len());
        let mut seen = Vec::new();
        let mut out = Vec::new();
        for (&r, z) in roles.iter().zip(zs) {
            if !seen.contains(&r) {
                seen.push(r);
                out.extend_from_slice(z);
            }
        }
        out
    }

    /// Per-block diagonal Gaussian posteriors for one proxy vector.
    pub fn encode_blocks(&self, x: &[f64]) -> Result<Vec<Posterior>> {
        self.blocks
            .iter()
            .map(|b| {
                let out = b.encoder.forward(x)?;
                let mu = out[..b.dim].to_vec();
                let sigma = out[b.dim..]
                    .iter()
                    .map(|&lv| (0.5 * clamp_lv(lv)).exp())
                    .collect();
                Ok(Posterior { mu, sigma })
            })
            .collect()
    }

    /// The three per-role posteriors q(Z_TM|x), q(Z_TY|x), q(Z_MY|x).
    pub fn encode(&self, x: &[f64]) -> Result<PosteriorTriple> {
        let posts = self.encode_blocks(x)?;
        Ok(PosteriorTriple {
            tm: posts[self.roles.tm].clone(),
            ty: posts[self.roles.ty].clone(),
            my: posts[self.roles.my].clone(),
        })
    }

    /// p(T = 1 | z_tm, z_ty)
    pub fn decode_t(&self, z_tm: &[f64], z_ty: &[f64]) -> Result<f64> {
        let input = Self::assemble(&[self.roles.tm, self.roles.ty], &[z_tm, z_ty]);
        Ok(logistic(self.dec_t.forward(&input)?[0]))
    }

    pub fn decode_m(&self, t: f64, z_tm: &[f64], z_my: &[f64]) -> Result<DistParams> {
        let arm = self.arm(t)?;
        let input = Self::assemble(&[self.roles.tm, self.roles.my], &[z_tm, z_my]);
        let out = self.dec_m[arm].forward(&input)?;
        Ok(self.head_params(self.m_kind, &out))
    }

    pub fn decode_y(&self, t: f64, m: f64, z_ty: &[f64], z_my: &[f64]) -> Result<DistParams> {
        let arm = self.arm(t)?;
        let mut input = self.encode_m_value(m)?;
        input.extend(Self::assemble(
            &[self.roles.ty, self.roles.my],
            &[z_ty, z_my],
        ));
        let out = self.dec_y[arm].forward(&input)?;
        Ok(self.head_params(self.y_kind, &out))
    }

    /// Coordinate-wise (mu, sigma) for each proxy.
    pub fn decode_x(&self, z_tm: &[f64], z_ty: &[f64], z_my: &[f64]) -> Result<Vec<(f64, f64)>> {
        let input = Self::assemble(
            &[self.roles.tm, self.roles.ty, self.roles.my],
            &[z_tm, z_ty, z_my],
        );
        let out = self.dec_x.forward(&input)?;
        Ok((0..self.d_x)
            .map(|j| (out[2 * j], (0.5 * clamp_lv(out[2 * j + 1])).exp()))
            .collect())
    }

    fn head_params(&self, kind: VarKind, out: &[f64]) -> DistParams {
        match kind {
            VarKind::Continuous => DistParams::Gaussian {
                mu: out[0],
                sigma: (0.5 * clamp_lv(out[1])).exp(),
            },
            VarKind::Binary => DistParams::Bernoulli { logit: out[0] },
            VarKind::Categorical(_) => DistParams::Categorical {
                logits: out.to_vec(),
            },
        }
    }

    /// Standard-normal draws for every record in a batch.
    pub fn draw_eps<R: Rng>(&self, batch_len: usize, rng: &mut R) -> EpsDraws {
        let total = self.latent_dim_total();
        EpsDraws(
            (0..batch_len)
                .map(|_| (0..total).map(|_| rng.sample(StandardNormal)).collect())
                .collect(),
        )
    }

    fn check_batch(&self, batch: &Batch, eps: &EpsDraws) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Model("empty batch".into()));
        }
        if batch.data.d_x() != self.d_x {
            return Err(Error::Shape(format!(
                "model expects D_X = {}, dataset has {}",
                self.d_x,
                batch.data.d_x()
            )));
        }
        if batch.data.m_kind != self.m_kind || batch.data.y_kind != self.y_kind {
            return Err(Error::Model(format!(
                "variable kind mismatch: model (m {:?}, y {:?}) vs dataset (m {:?}, y {:?})",
                self.m_kind, self.y_kind, batch.data.m_kind, batch.data.y_kind
            )));
        }
        if eps.0.len() != batch.len() || eps.0.iter().any(|e| e.len() != self.latent_dim_total()) {
            return Err(Error::Shape("eps draws do not match batch".into()));
        }
        Ok(())
    }

    /// ELBO of the proxy reconstruction (mean over the batch).
    pub fn elbo(&self, batch: &Batch, eps: &EpsDraws) -> Result<f64> {
        Ok(self.loss_parts(batch, eps)?.elbo)
    }

    /// Full training loss: -ELBO plus the T, M and Y negative log-likelihood
    /// penalties (mean over the batch).
    pub fn loss(&self, batch: &Batch, eps: &EpsDraws) -> Result<f64> {
        Ok(self.loss_parts(batch, eps)?.loss)
    }

    pub fn loss_parts(&self, batch: &Batch, eps: &EpsDraws) -> Result<LossParts> {
        self.pass(batch, eps, None)
    }

    /// Loss terms together with parameter gradients of the loss.
    pub fn loss_and_grad(&self, batch: &Batch, eps: &EpsDraws) -> Result<(LossParts, DmavaeModel)> {
        let mut grads = self.zeros_like();
        let parts = self.pass(batch, eps, Some(&mut grads))?;
        Ok((parts, grads))
    }

    fn pass(
        &self,
        batch: &Batch,
        eps: &EpsDraws,
        mut grads: Option<&mut DmavaeModel>,
    ) -> Result<LossParts> {
        self.check_batch(batch, eps)?;
        let scale = 1.0 / batch.len() as f64;
        let mut parts = LossParts {
            loss: 0.0,
            elbo: 0.0,
            recon_x: 0.0,
            kl: vec![0.0; self.blocks.len()],
            nll_t: 0.0,
            nll_m: 0.0,
            nll_y: 0.0,
        };
        for (pos, &rec) in batch.idx.iter().enumerate() {
            self.record_pass(batch.data, rec, &eps.0[pos], scale, &mut parts, &mut grads)?;
        }
        if !parts.loss.is_finite() {
            return Err(Error::Training("non-finite loss".into()));
        }
        Ok(parts)
    }

    fn record_pass(
        &self,
        data: &Dataset,
        rec: usize,
        eps: &[f64],
        scale: f64,
        parts: &mut LossParts,
        grads: &mut Option<&mut DmavaeModel>,
    ) -> Result<()> {
        let x = data.x.row(rec);
        let (t, m, y) = (data.t[rec], data.m[rec], data.y[rec]);
        let arm = self.arm(t)?;

        // encoders and reparameterized samples
        let mut states = Vec::with_capacity(self.blocks.len());
        let mut off = 0;
        for (bi, block) in self.blocks.iter().enumerate() {
            let (out, cache) = block.encoder.forward_cached(x)?;
            let mu = out[..block.dim].to_vec();
            let lv_raw = out[block.dim..].to_vec();
            let e = &eps[off..off + block.dim];
            off += block.dim;
            let mut sigma = Vec::with_capacity(block.dim);
            let mut z = Vec::with_capacity(block.dim);
            let mut kl = 0.0;
            for j in 0..block.dim {
                let lv = clamp_lv(lv_raw[j]);
                let s = (0.5 * lv).exp();
                sigma.push(s);
                z.push(mu[j] + s * e[j]);
                kl += 0.5 * (mu[j] * mu[j] + lv.exp() - 1.0 - lv);
            }
            parts.kl[bi] += scale * kl;
            states.push(BlockState {
                mu,
                lv_raw,
                sigma,
                z,
                cache,
                kl,
            });
        }

        let z_of = |r: usize| states[r].z.as_slice();

        // decoder forwards
        let x_roles = distinct(&[self.roles.tm, self.roles.ty, self.roles.my]);
        let t_roles = distinct(&[self.roles.tm, self.roles.ty]);
        let m_roles = distinct(&[self.roles.tm, self.roles.my]);
        let y_roles = distinct(&[self.roles.ty, self.roles.my]);

        let concat = |roles: &[usize]| -> Vec<f64> {
            roles
                .iter()
                .flat_map(|&r| z_of(r).iter().copied())
                .collect()
        };

        let x_in = concat(&x_roles);
        let (x_out, x_cache) = self.dec_x.forward_cached(&x_in)?;
        let mut recon = 0.0;
        for j in 0..self.d_x {
            let mu = x_out[2 * j];
            let sigma = (0.5 * clamp_lv(x_out[2 * j + 1])).exp();
            recon += gaussian_nll(mu, sigma, x[j])?;
        }

        let t_in = concat(&t_roles);
        let (t_out, t_cache) = self.dec_t.forward_cached(&t_in)?;
        let nll_t = bernoulli_nll(t_out[0], t);

        let m_in = concat(&m_roles);
        let (m_out, m_cache) = self.dec_m[arm].forward_cached(&m_in)?;
        let nll_m = self.head_nll(self.m_kind, &m_out, m)?;

        let mut y_in = self.encode_m_value(m)?;
        let m_enc_len = y_in.len();
        y_in.extend(concat(&y_roles));
        let (y_out, y_cache) = self.dec_y[arm].forward_cached(&y_in)?;
        let nll_y = self.head_nll(self.y_kind, &y_out, y)?;

        let kl_sum: f64 = states.iter().map(|s| s.kl).sum();
        parts.recon_x += scale * recon;
        parts.nll_t += scale * nll_t;
        parts.nll_m += scale * nll_m;
        parts.nll_y += scale * nll_y;
        parts.elbo += scale * (-recon - kl_sum);
        parts.loss += scale * (recon + kl_sum + nll_t + nll_m + nll_y);

        let Some(grads) = grads.as_deref_mut() else {
            return Ok(());
        };

        // gradient accumulators for each block's z
        let mut dz: Vec<Vec<f64>> = states.iter().map(|s| vec![0.0; s.z.len()]).collect();
        let scatter = |roles: &[usize], gin: &[f64], dz: &mut Vec<Vec<f64>>, skip: usize| {
            let mut off = skip;
            for &r in roles {
                for g in dz[r].iter_mut() {
                    *g += gin[off];
                    off += 1;
                }
            }
        };

        // dec_x: Gaussian heads on every proxy coordinate
        let mut gx = vec![0.0; 2 * self.d_x];
        for j in 0..self.d_x {
            let mu = x_out[2 * j];
            let lv = clamp_lv(x_out[2 * j + 1]);
            let var = lv.exp();
            let r = x[j] - mu;
            gx[2 * j] = scale * (-r / var);
            gx[2 * j + 1] = scale * (0.5 - r * r / (2.0 * var)) * in_clamp(x_out[2 * j + 1]);
        }
        let gin = self.dec_x.backward(&x_cache, &gx, &mut grads.dec_x)?;
        scatter(&x_roles, &gin, &mut dz, 0);

        // dec_t: Bernoulli head
        let gt = [scale * (logistic(t_out[0]) - t)];
        let gin = self.dec_t.backward(&t_cache, &gt, &mut grads.dec_t)?;
        scatter(&t_roles, &gin, &mut dz, 0);

        // dec_m (selected arm only)
        let gm = self.head_grad(self.m_kind, &m_out, m, scale);
        let gin = self.dec_m[arm].backward(&m_cache, &gm, &mut grads.dec_m[arm])?;
        scatter(&m_roles, &gin, &mut dz, 0);

        // dec_y (selected arm only); the observed-m slot gets no gradient
        let gy = self.head_grad(self.y_kind, &y_out, y, scale);
        let gin = self.dec_y[arm].backward(&y_cache, &gy, &mut grads.dec_y[arm])?;
        scatter(&y_roles, &gin, &mut dz, m_enc_len);

        // through the reparameterization and KL into each encoder
        for (bi, state) in states.iter().enumerate() {
            let d = self.blocks[bi].dim;
            let mut genc = vec![0.0; 2 * d];
            let e = {
                let mut off = 0;
                for b in &self.blocks[..bi] {
                    off += b.dim;
                }
                &eps[off..off + d]
            };
            for j in 0..d {
                let lv = clamp_lv(state.lv_raw[j]);
                // d kl / d mu + d z / d mu
                genc[j] = scale * state.mu[j] + dz[bi][j];
                // d kl / d lv + d z / d lv, masked by the clamp
                let glv = scale * 0.5 * (lv.exp() - 1.0) + dz[bi][j] * 0.5 * state.sigma[j] * e[j];
                genc[d + j] = glv * in_clamp(state.lv_raw[j]);
            }
            self.blocks[bi]
                .encoder
                .backward(&state.cache, &genc, &mut grads.blocks[bi].encoder)?;
        }
        Ok(())
    }

    fn head_nll(&self, kind: VarKind, out: &[f64], target: f64) -> Result<f64> {
        match kind {
            VarKind::Continuous => {
                let sigma = (0.5 * clamp_lv(out[1])).exp();
                gaussian_nll(out[0], sigma, target)
            }
            VarKind::Binary => {
                if target != 0.0 && target != 1.0 {
                    return Err(Error::Model(format!(
                        "binary target must be 0/1, got {target}"
                    )));
                }
                Ok(bernoulli_nll(out[0], target))
            }
            VarKind::Categorical(_) => categorical_nll(out, target as usize),
        }
    }

    fn head_grad(&self, kind: VarKind, out: &[f64], target: f64, scale: f64) -> Vec<f64> {
        match kind {
            VarKind::Continuous => {
                let lv = clamp_lv(out[1]);
                let var = lv.exp();
                let r = target - out[0];
                vec![
                    scale * (-r / var),
                    scale * (0.5 - r * r / (2.0 * var)) * in_clamp(out[1]),
                ]
            }
            VarKind::Binary => vec![scale * (logistic(out[0]) - target)],
            VarKind::Categorical(_) => {
                let lse = log_sum_exp(out);
                out.iter()
                    .enumerate()
                    .map(|(k, &l)| {
                        let p = (l - lse).exp();
                        scale * (p - if k == target as usize { 1.0 } else { 0.0 })
                    })
                    .collect()
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.nets().iter().map(|n| n.param_count()).sum()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for n in self.nets() {
            n.write_flat(out);
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.write_flat(&mut out);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut off = 0;
        for n in self.nets_mut() {
            n.read_flat(flat, &mut off);
        }
        debug_assert_eq!(off, flat.len());
    }

    pub fn zeros_like(&self) -> DmavaeModel {
        let mut g = self.clone();
        for n in g.nets_mut() {
            *n = n.zeros_like();
        }
        g
    }

    pub fn all_finite(&self) -> bool {
        self.nets().iter().all(|n| n.all_finite())
    }

    /// Copies the non-final layers of each arm-0 decoder into arm 1 so the
    /// arms share one trunk and differ only in their output layer. Called at
    /// the start of training; [`tie_arm_trunk_grads`](Self::tie_arm_trunk_grads)
    /// keeps the trunks identical thereafter.
    pub fn sync_arm_trunks(&mut self) {
        for pair in [&mut self.dec_m, &mut self.dec_y] {
            let last = pair[0].layers.len() - 1;
            for li in 0..last {
                pair[1].layers[li] = pair[0].layers[li].clone();
            }
        }
    }

    /// On a gradient accumulator, replaces each arm's non-final decoder layer
    /// gradients with the sum over both arms. With trunks synced and identical
    /// optimizer state, this makes the shared trunk receive updates from every
    /// record regardless of arm while the output heads stay arm-specific.
    pub fn tie_arm_trunk_grads(&mut self) {
        for pair in [&mut self.dec_m, &mut self.dec_y] {
            let last = pair[0].layers.len() - 1;
            let (g0, g1) = pair.split_at_mut(1);
            for li in 0..last {
                let l0 = &mut g0[0].layers[li];
                let l1 = &mut g1[0].layers[li];
                for (a, b) in l0.weight.data_mut().iter_mut().zip(l1.weight.data_mut()) {
                    let s = *a + *b;
                    *a = s;
                    *b = s;
                }
                for (a, b) in l0.bias.iter_mut().zip(l1.bias.iter_mut()) {
                    let s = *a + *b;
                    *a = s;
                    *b = s;
                }
            }
        }
    }

    fn nets(&self) -> Vec<&Mlp> {
        let mut v: Vec<&Mlp> = self.blocks.iter().map(|b| &b.encoder).collect();
        v.push(&self.dec_t);
        v.extend(self.dec_m.iter());
        v.extend(self.dec_y.iter());
        v.push(&self.dec_x);
        v
    }

    fn nets_mut(&mut self) -> Vec<&mut Mlp> {
        let mut v: Vec<&mut Mlp> = self.blocks.iter_mut().map(|b| &mut b.encoder).collect();
        v.push(&mut self.dec_t);
        v.extend(self.dec_m.iter_mut());
        v.extend(self.dec_y.iter_mut());
        v.push(&mut self.dec_x);
        v
    }
}
