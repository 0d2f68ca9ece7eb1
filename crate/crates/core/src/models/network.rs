use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVocab, ItemFeat, IuEntryFeat, TargetInput, UserInput, STAT_FIELDS};
use crate::numeric::{
    attend, attention_backward, mlp_backward, mlp_forward, project_history, sigmoid, Activation,
    AttentionCache, AttentionGradBufs, AttentionParams, DenseMatrix, Gradients, LayerRef, MlpCache,
    ModelParams, ParamId, ParamKind, ProjectedHistory,
};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dnn,
    Din,
    IuBoosted,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Dnn, ModelKind::Din, ModelKind::IuBoosted];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dnn => "dnn",
            ModelKind::Din => "din",
            ModelKind::IuBoosted => "iu_boosted",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(c: u32) -> Result<Self> {
        ModelKind::ALL
            .get(c as usize)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("unknown model kind code {c}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub item_id_dim: usize,
    pub side_dim: usize,
    pub user_dim: usize,
    pub iu_id_dim: usize,
    pub iu_side_dim: usize,
    pub stat_dim: usize,
    pub cross_dim: usize,
    pub attention_hidden: usize,
    pub heads: usize,
    pub hidden: Vec<usize>,
    pub embedding_init_std: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            item_id_dim: 8,
            side_dim: 4,
            user_dim: 8,
            iu_id_dim: 8,
            iu_side_dim: 4,
            stat_dim: 4,
            cross_dim: 4,
            attention_hidden: 32,
            heads: 2,
            hidden: vec![64, 32, 16],
            embedding_init_std: 0.05,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.item_id_dim,
            self.side_dim,
            self.user_dim,
            self.iu_id_dim,
            self.iu_side_dim,
            self.stat_dim,
            self.cross_dim,
            self.attention_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("model widths must be positive".into()));
        }
        if self.heads == 0 || !self.attention_hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "{} heads do not divide attention width {}",
                self.heads, self.attention_hidden
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("mlp hidden widths must be positive".into()));
        }
        if !(self.embedding_init_std >= 0.0) {
            return Err(Error::Config(
                "embedding_init_std must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn item_width(&self) -> usize {
        self.item_id_dim + 2 * self.side_dim
    }

    pub fn iu_width(&self) -> usize {
        self.iu_id_dim + 2 * self.iu_side_dim + self.item_width()
    }

    pub fn mlp_input(&self, kind: ModelKind) -> usize {
        let base = self.user_dim + self.item_width();
        match kind {
            ModelKind::Dnn => base + self.item_width(),
            ModelKind::Din => base + self.attention_hidden,
            ModelKind::IuBoosted => {
                base + self.attention_hidden
                    + self.iu_width()
                    + STAT_FIELDS * self.stat_dim
                    + 2 * self.cross_dim
                    + self.attention_hidden
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct AttnIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
}

#[derive(Clone, Debug)]
struct IuIds {
    iu: ParamId,
    iu_type: ParamId,
    iu_category: ParamId,
    stats: [ParamId; STAT_FIELDS],
    cross: [ParamId; 2],
    attn: AttnIds,
}

#[derive(Clone, Debug)]
struct Ids {
    user: ParamId,
    item: ParamId,
    category: ParamId,
    brand: ParamId,
    item_attn: Option<AttnIds>,
    iu: Option<IuIds>,
    mlp: Vec<(ParamId, ParamId)>,
}

/// Parameter array names and shapes for `kind`, in creation order.
pub fn param_layout(
    kind: ModelKind,
    cfg: &NetworkConfig,
    v: &FeatureVocab,
) -> Vec<(String, ParamKind, usize, usize)> {
    let e = ParamKind::Embedding;
    let d = ParamKind::Dense;
    let mut out = vec![
        ("emb.user".to_string(), e, v.users, cfg.user_dim),
        ("emb.item".to_string(), e, v.items, cfg.item_id_dim),
        ("emb.category".to_string(), e, v.categories, cfg.side_dim),
        ("emb.brand".to_string(), e, v.brands, cfg.side_dim),
    ];
    if kind != ModelKind::Dnn {
        for w in ["wq", "wk", "wv"] {
            out.push((
                format!("attn.item.{w}"),
                d,
                cfg.attention_hidden,
                cfg.item_width(),
            ));
        }
    }
    if kind == ModelKind::IuBoosted {
        out.push(("emb.iu".into(), e, v.ius, cfg.iu_id_dim));
        out.push(("emb.iu_type".into(), e, v.iu_types, cfg.iu_side_dim));
        out.push(("emb.iu_category".into(), e, v.categories, cfg.iu_side_dim));
        for (i, &n) in v.stats.iter().enumerate() {
            out.push((format!("emb.stat.{i}"), e, n, cfg.stat_dim));
        }
        out.push(("emb.cross.count".into(), e, v.cross[0], cfg.cross_dim));
        out.push(("emb.cross.recency".into(), e, v.cross[1], cfg.cross_dim));
        let (q_in, kv_in) = (cfg.iu_width(), cfg.iu_width());
        out.push(("attn.iu.wq".into(), d, cfg.attention_hidden, q_in));
        out.push(("attn.iu.wk".into(), d, cfg.attention_hidden, kv_in));
        out.push(("attn.iu.wv".into(), d, cfg.attention_hidden, kv_in));
    }
    let mut width = cfg.mlp_input(kind);
    for (i, &h) in cfg.hidden.iter().chain(std::iter::once(&1)).enumerate() {
        out.push((format!("mlp.{i}.w"), d, h, width));
        out.push((format!("mlp.{i}.b"), d, 1, h));
        width = h;
    }
    out
}

/// One of the three rankers with its parameters.
#[derive(Clone, Debug)]
pub struct Network {
    pub kind: ModelKind,
    pub cfg: NetworkConfig,
    pub vocab: FeatureVocab,
    pub params: ModelParams,
    ids: Ids,
}

impl Network {
    /// Embeddings ~ N(0, std²) with a zero padding row; dense arrays Glorot
    /// uniform; biases zero.
    pub fn new(
        kind: ModelKind,
        cfg: &NetworkConfig,
        vocab: &FeatureVocab,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded(seed);
        let normal =
            Normal::new(0.0, cfg.embedding_init_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut params = ModelParams::new();
        for (name, pk, rows, cols) in param_layout(kind, cfg, vocab) {
            let mut m = DenseMatrix::zeros(rows, cols);
            if pk == ParamKind::Embedding {
                for r in 1..rows {
                    for x in m.row_mut(r) {
                        *x = rng.sample(normal);
                    }
                }
            } else if !name.ends_with(".b") {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                for x in m.data_mut() {
                    *x = rng.gen_range(-limit..limit);
                }
            }
            params.add(name, pk, m)?;
        }
        Self::from_params(kind, cfg, vocab, params)
    }

    /// Wraps existing arrays after checking names and shapes.
    pub fn from_params(
        kind: ModelKind,
        cfg: &NetworkConfig,
        vocab: &FeatureVocab,
        params: ModelParams,
    ) -> Result<Self> {
        cfg.validate()?;
        let layout = param_layout(kind, cfg, vocab);
        if layout.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "{} model expects {} arrays, found {}",
                kind.name(),
                layout.len(),
                params.len()
            )));
        }
        for (name, pk, rows, cols) in &layout {
            let id = params
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter array {name}")))?;
            let a = params.array(id);
            if a.kind != *pk || a.value.rows() != *rows || a.value.cols() != *cols {
                return Err(Error::shape(
                    format!("parameter {name}"),
                    format!("{rows}x{cols}"),
                    format!("{}x{}", a.value.rows(), a.value.cols()),
                ));
            }
        }
        let id = |n: &str| params.id(n).expect("checked above");
        let attn = |p: &str| AttnIds {
            wq: id(&format!("attn.{p}.wq")),
            wk: id(&format!("attn.{p}.wk")),
            wv: id(&format!("attn.{p}.wv")),
        };
        let ids = Ids {
            user: id("emb.user"),
            item: id("emb.item"),
            category: id("emb.category"),
            brand: id("emb.brand"),
            item_attn: (kind != ModelKind::Dnn).then(|| attn("item")),
            iu: (kind == ModelKind::IuBoosted).then(|| IuIds {
                iu: id("emb.iu"),
                iu_type: id("emb.iu_type"),
                iu_category: id("emb.iu_category"),
                stats: std::array::from_fn(|i| id(&format!("emb.stat.{i}"))),
                cross: [id("emb.cross.count"), id("emb.cross.recency")],
                attn: attn("iu"),
            }),
            mlp: (0..=cfg.hidden.len())
                .map(|i| (id(&format!("mlp.{i}.w")), id(&format!("mlp.{i}.b"))))
                .collect(),
        };
        Ok(Network {
            kind,
            cfg: cfg.clone(),
            vocab: vocab.clone(),
            params,
            ids,
        })
    }

    fn lookup_into(&self, table: ParamId, row: u32, out: &mut [f64]) -> Result<()> {
        if row == 0 {
            out.fill(0.0);
        } else {
            out.copy_from_slice(self.params.lookup(table, row)?);
        }
        Ok(())
    }

    fn embed_item_into(&self, f: &ItemFeat, out: &mut [f64]) -> Result<()> {
        let (a, rest) = out.split_at_mut(self.cfg.item_id_dim);
        let (b, c) = rest.split_at_mut(self.cfg.side_dim);
        self.lookup_into(self.ids.item, f.id, a)?;
        self.lookup_into(self.ids.category, f.side[0], b)?;
        self.lookup_into(self.ids.brand, f.side[1], c)
    }

    /// `[E(item id), E(category), E(brand)]`; padding ids give zero blocks.
    pub fn embed_item(&self, f: &ItemFeat) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.cfg.item_width()];
        self.embed_item_into(f, &mut out)?;
        Ok(out)
    }

    /// `[E(iu id), E(iu type), E(iu category), mean_k embed_item(inner_k)]`.
    pub fn embed_iu_entry(
        &self,
        iu_id: u32,
        side: [u32; 2],
        inner: &[ItemFeat],
    ) -> Result<Vec<f64>> {
        let iu = self.ids.iu.as_ref().ok_or_else(|| {
            Error::Config(format!("{} model has no unit embeddings", self.kind.name()))
        })?;
        let c = &self.cfg;
        let mut out = vec![0.0; c.iu_width()];
        let (a, rest) = out.split_at_mut(c.iu_id_dim);
        let (b, rest) = rest.split_at_mut(c.iu_side_dim);
        let (d, pooled) = rest.split_at_mut(c.iu_side_dim);
        self.lookup_into(iu.iu, iu_id, a)?;
        self.lookup_into(iu.iu_type, side[0], b)?;
        self.lookup_into(iu.iu_category, side[1], d)?;
        let real: Vec<&ItemFeat> = inner.iter().filter(|f| f.id != 0).collect();
        if !real.is_empty() {
            let mut tmp = vec![0.0; c.item_width()];
            let w = 1.0 / real.len() as f64;
            for f in real {
                self.embed_item_into(f, &mut tmp)?;
                for (p, t) in pooled.iter_mut().zip(&tmp) {
                    *p += w * t;
                }
            }
        }
        Ok(out)
    }

    fn layers(&self) -> Vec<LayerRef<'_>> {
        let n = self.ids.mlp.len();
        self.ids
            .mlp
            .iter()
            .enumerate()
            .map(|(i, &(w, b))| LayerRef {
                weights: self.params.get(w),
                bias: self.params.get(b).data(),
                activation: if i + 1 == n {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            })
            .collect()
    }

    fn attn_params(&self, a: AttnIds) -> AttentionParams<'_> {
        AttentionParams {
            wq: self.params.get(a.wq),
            wk: self.params.get(a.wk),
            wv: self.params.get(a.wv),
        }
    }

    /// Target-independent part of the forward pass.
    pub fn encode_user<'a>(&self, u: UserInput<'a>) -> Result<UserEncoding<'a>> {
        u.validate(&self.vocab)?;
        let mut user = vec![0.0; self.cfg.user_dim];
        self.lookup_into(self.ids.user, u.user_id, &mut user)?;
        let items: Vec<&'a ItemFeat> = u.item_seq.iter().filter(|f| f.id != 0).collect();
        let mut hist = DenseMatrix::zeros(items.len(), self.cfg.item_width());
        for (j, f) in items.iter().enumerate() {
            self.embed_item_into(f, hist.row_mut(j))?;
        }
        let mut item_proj = None;
        let mut mean = Vec::new();
        match self.ids.item_attn {
            Some(a) if !items.is_empty() => {
                item_proj = Some(project_history(&hist, self.attn_params(a)))
            }
            Some(_) => {}
            None => {
                mean = vec![0.0; self.cfg.item_width()];
                if !items.is_empty() {
                    let w = 1.0 / items.len() as f64;
                    for j in 0..items.len() {
                        for (m, x) in mean.iter_mut().zip(hist.row(j)) {
                            *m += w * x;
                        }
                    }
                }
            }
        }
        let mut entries = Vec::new();
        let mut iu_hist = DenseMatrix::zeros(0, 0);
        let mut iu_proj = None;
        if let Some(iu) = &self.ids.iu {
            entries = u.iu_seq.iter().filter(|e| e.iu_id != 0).collect();
            iu_hist = DenseMatrix::zeros(entries.len(), self.cfg.iu_width());
            for (j, e) in entries.iter().enumerate() {
                let row = self.embed_iu_entry(e.iu_id, e.side, &e.inner)?;
                iu_hist.row_mut(j).copy_from_slice(&row);
            }
            if !entries.is_empty() {
                iu_proj = Some(project_history(&iu_hist, self.attn_params(iu.attn)));
            }
        }
        Ok(UserEncoding {
            user_id: u.user_id,
            user,
            items,
            hist,
            item_proj,
            mean,
            entries,
            iu_hist,
            iu_proj,
        })
    }

    fn forward_target(&self, enc: &UserEncoding<'_>, t: &TargetInput<'_>) -> Result<TargetCache> {
        t.validate(&self.vocab)?;
        let c = &self.cfg;
        let target = self.embed_item(&t.item)?;
        let mut x = Vec::with_capacity(c.mlp_input(self.kind));
        x.extend_from_slice(&enc.user);
        x.extend_from_slice(&target);
        let mut item_cache = None;
        match self.ids.item_attn {
            None => x.extend_from_slice(&enc.mean),
            Some(a) => match &enc.item_proj {
                Some(p) => {
                    let (out, cache) = attend(&target, p, self.params.get(a.wq), c.heads)?;
                    x.extend_from_slice(&out);
                    item_cache = Some(cache);
                }
                None => x.extend(std::iter::repeat_n(0.0, c.attention_hidden)),
            },
        }
        let mut query = Vec::new();
        let mut iu_cache = None;
        if let Some(iu) = &self.ids.iu {
            query = self.embed_iu_entry(t.iu_id, t.iu_side, t.iu_inner)?;
            x.extend_from_slice(&query);
            let mut buf = vec![0.0; c.stat_dim.max(c.cross_dim)];
            for (k, &id) in t.stats.iter().enumerate() {
                self.lookup_into(iu.stats[k], id, &mut buf[..c.stat_dim])?;
                x.extend_from_slice(&buf[..c.stat_dim]);
            }
            for (k, &id) in t.cross.iter().enumerate() {
                self.lookup_into(iu.cross[k], id, &mut buf[..c.cross_dim])?;
                x.extend_from_slice(&buf[..c.cross_dim]);
            }
            match &enc.iu_proj {
                Some(p) => {
                    let (out, cache) = attend(&query, p, self.params.get(iu.attn.wq), c.heads)?;
                    x.extend_from_slice(&out);
                    iu_cache = Some(cache);
                }
                None => x.extend(std::iter::repeat_n(0.0, c.attention_hidden)),
            }
        }
        let (logit, mlp) = mlp_forward(&x, &self.layers())?;
        Ok(TargetCache {
            target,
            item_cache,
            query,
            iu_cache,
            mlp,
            logit,
        })
    }

    pub fn logit(&self, enc: &UserEncoding<'_>, t: &TargetInput<'_>) -> Result<f64> {
        Ok(self.forward_target(enc, t)?.logit)
    }

    /// Click probability for one candidate.
    pub fn predict(&self, enc: &UserEncoding<'_>, t: &TargetInput<'_>) -> Result<f64> {
        Ok(sigmoid(self.logit(enc, t)?))
    }

    pub fn predict_ctr(&self, u: UserInput<'_>, t: TargetInput<'_>) -> Result<f64> {
        let enc = self.encode_user(u)?;
        self.predict(&enc, &t)
    }

    fn scatter_item(&self, grads: &mut Gradients, f: &ItemFeat, d: &[f64], scale: f64) {
        let c = &self.cfg;
        let parts = [
            (self.ids.item, f.id, &d[..c.item_id_dim]),
            (
                self.ids.category,
                f.side[0],
                &d[c.item_id_dim..c.item_id_dim + c.side_dim],
            ),
            (self.ids.brand, f.side[1], &d[c.item_id_dim + c.side_dim..]),
        ];
        for (table, row, g) in parts {
            if row != 0 {
                for (a, b) in grads.get_mut(table).row_mut(row).iter_mut().zip(g) {
                    *a += scale * b;
                }
            }
        }
    }

    fn scatter_row(grads: &mut Gradients, table: ParamId, row: u32, d: &[f64]) {
        if row != 0 {
            for (a, b) in grads.get_mut(table).row_mut(row).iter_mut().zip(d) {
                *a += b;
            }
        }
    }

    fn scatter_iu_entry(
        &self,
        grads: &mut Gradients,
        iu_id: u32,
        side: [u32; 2],
        inner: &[ItemFeat],
        d: &[f64],
    ) {
        let iu = self.ids.iu.as_ref().expect("unit ids present");
        let c = &self.cfg;
        let (a, rest) = d.split_at(c.iu_id_dim);
        let (b, rest) = rest.split_at(c.iu_side_dim);
        let (e, pooled) = rest.split_at(c.iu_side_dim);
        Self::scatter_row(grads, iu.iu, iu_id, a);
        Self::scatter_row(grads, iu.iu_type, side[0], b);
        Self::scatter_row(grads, iu.iu_category, side[1], e);
        let real: Vec<&ItemFeat> = inner.iter().filter(|f| f.id != 0).collect();
        if !real.is_empty() {
            let w = 1.0 / real.len() as f64;
            for f in real {
                self.scatter_item(grads, f, pooled, w);
            }
        }
    }

    /// Accumulates `d_logit`-scaled gradients of one sample into `grads`.
    fn backward(
        &self,
        enc: &UserEncoding<'_>,
        t: &TargetInput<'_>,
        cache: &TargetCache,
        d_logit: f64,
        grads: &mut Gradients,
    ) {
        let c = &self.cfg;
        let layers = self.layers();
        let flat: Vec<ParamId> = self.ids.mlp.iter().flat_map(|&(w, b)| [w, b]).collect();
        let d_x = {
            let mut bufs = grads.many_mut_vec(&flat);
            let mut pairs: Vec<(&mut [f64], &mut [f64])> = Vec::with_capacity(layers.len());
            let mut it = bufs.drain(..);
            while let (Some(w), Some(b)) = (it.next(), it.next()) {
                pairs.push((w, b));
            }
            mlp_backward(&layers, &cache.mlp, d_logit, &mut pairs)
        };

        let mut rest: &[f64] = &d_x;
        let mut take = |n: usize| -> &[f64] {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head
        };
        Self::scatter_row(grads, self.ids.user, enc.user_id, take(c.user_dim));
        let mut d_target = take(c.item_width()).to_vec();

        match self.ids.item_attn {
            None => {
                let d_mean = take(c.item_width());
                if !enc.items.is_empty() {
                    let w = 1.0 / enc.items.len() as f64;
                    for f in &enc.items {
                        self.scatter_item(grads, f, d_mean, w);
                    }
                }
            }
            Some(a) => {
                let d_out = take(c.attention_hidden);
                if let (Some(p), Some(ac)) = (&enc.item_proj, &cache.item_cache) {
                    let [gq, gk, gv] = grads.many_mut([a.wq, a.wk, a.wv]);
                    let (dt, dh) = attention_backward(
                        &cache.target,
                        &enc.hist,
                        self.attn_params(a),
                        p,
                        ac,
                        d_out,
                        c.heads,
                        AttentionGradBufs {
                            wq: gq,
                            wk: gk,
                            wv: gv,
                        },
                    );
                    for (x, y) in d_target.iter_mut().zip(&dt) {
                        *x += y;
                    }
                    for (j, f) in enc.items.iter().enumerate() {
                        self.scatter_item(grads, f, dh.row(j), 1.0);
                    }
                }
            }
        }

        if let Some(iu) = &self.ids.iu {
            let mut d_query = take(c.iu_width()).to_vec();
            for (k, &id) in t.stats.iter().enumerate() {
                Self::scatter_row(grads, iu.stats[k], id, take(c.stat_dim));
            }
            for (k, &id) in t.cross.iter().enumerate() {
                Self::scatter_row(grads, iu.cross[k], id, take(c.cross_dim));
            }
            let d_out = take(c.attention_hidden);
            if let (Some(p), Some(ac)) = (&enc.iu_proj, &cache.iu_cache) {
                let [gq, gk, gv] = grads.many_mut([iu.attn.wq, iu.attn.wk, iu.attn.wv]);
                let (dq, dh) = attention_backward(
                    &cache.query,
                    &enc.iu_hist,
                    self.attn_params(iu.attn),
                    p,
                    ac,
                    d_out,
                    c.heads,
                    AttentionGradBufs {
                        wq: gq,
                        wk: gk,
                        wv: gv,
                    },
                );
                for (x, y) in d_query.iter_mut().zip(&dq) {
                    *x += y;
                }
                for (j, e) in enc.entries.iter().enumerate() {
                    self.scatter_iu_entry(grads, e.iu_id, e.side, &e.inner, dh.row(j));
                }
            }
            self.scatter_iu_entry(grads, t.iu_id, t.iu_side, t.iu_inner, &d_query);
        }
        self.scatter_item(grads, &t.item, &d_target, 1.0);
    }

    /// Adds `weight · ∂NLL/∂θ` for one labeled sample and returns its loss.
    pub fn accumulate(
        &self,
        u: UserInput<'_>,
        t: TargetInput<'_>,
        label: u8,
        weight: f64,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let enc = self.encode_user(u)?;
        let cache = self.forward_target(&enc, &t)?;
        let (loss, d_logit) = nll_from_logit(cache.logit, label);
        self.backward(&enc, &t, &cache, weight * d_logit, grads);
        Ok(loss)
    }
}

pub const PROB_CLAMP: f64 = 1e-7;

/// Per-sample NLL of a probability and its derivative with respect to the logit.
pub fn nll_term(p: f64, label: u8) -> (f64, f64) {
    let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let loss = if label == 1 {
        -pc.ln()
    } else {
        -(1.0 - pc).ln()
    };
    let clamped = !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p);
    let d = if clamped { 0.0 } else { p - label as f64 };
    (loss, d)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Same value as [`nll_term`] on `sigmoid(z)`, evaluated from the logit so the
/// result keeps full relative precision when the prediction is confident.
pub fn nll_from_logit(z: f64, label: u8) -> (f64, f64) {
    let bound = ((1.0 - PROB_CLAMP) / PROB_CLAMP).ln();
    let zc = z.clamp(-bound, bound);
    let loss = if label == 1 {
        softplus(-zc)
    } else {
        softplus(zc)
    };
    let d = if z.abs() > bound {
        0.0
    } else {
        sigmoid(z) - label as f64
    };
    (loss, d)
}

/// Mean negative log-likelihood with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn nll_loss(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if predictions.len() != labels.len() {
        return Err(Error::shape(
            "nll_loss labels",
            predictions.len(),
            labels.len(),
        ));
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| nll_term(p, y).0)
        .sum();
    Ok(total / predictions.len() as f64)
}

/// User-side activations reused across candidates.
pub struct UserEncoding<'a> {
    user_id: u32,
    user: Vec<f64>,
    items: Vec<&'a ItemFeat>,
    hist: DenseMatrix,
    item_proj: Option<ProjectedHistory>,
    mean: Vec<f64>,
    entries: Vec<&'a IuEntryFeat>,
    iu_hist: DenseMatrix,
    iu_proj: Option<ProjectedHistory>,
}

struct TargetCache {
    target: Vec<f64>,
    item_cache: Option<AttentionCache>,
    query: Vec<f64>,
    iu_cache: Option<AttentionCache>,
    mlp: MlpCache,
    logit: f64,
}
