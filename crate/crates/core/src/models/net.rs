//! The neural models: FFNN and LSTM-RNN baselines, MA (convolution plus
//! stock-conditioned attention over the market cube) and MA-RNN (MA fused
//! with an LSTM over the target stock's own history).

use rand::Rng;

use crate::autodiff::{
    additive_attention, lstm_step, uniform, AttentionVars, Checkpoint, Dense, Lstm, ParamId, ParamStore, Tape, Var,
};
use crate::marketdata::MarketCube;
use crate::models::{ModelError, ModelKind, Result};

/// Layer sizes for every neural model. Only the fields used by `kind` matter.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub kind: ModelKind,
    /// Lookback window (days per cube).
    pub t: usize,
    /// Stocks per image.
    pub m: usize,
    /// Indicators per stock.
    pub n: usize,
    pub kernels: usize,
    pub embedding: usize,
    pub attention: usize,
    pub market: usize,
    pub ma_hidden: usize,
    pub lstm: usize,
    pub stock: usize,
    pub fused: usize,
    pub fused_hidden: usize,
    pub ffnn_hidden: usize,
    pub lstm_rnn_cell: usize,
    pub init_bound: f64,
    /// Subtracted from every input value before it enters a network.
    pub input_offset: f64,
}

impl NetConfig {
    pub fn new(kind: ModelKind, t: usize, m: usize, n: usize) -> Self {
        Self {
            kind,
            t,
            m,
            n,
            kernels: 192,
            embedding: 100,
            attention: 32,
            market: 40,
            ma_hidden: 50,
            lstm: 32,
            stock: 40,
            fused: 100,
            fused_hidden: 50,
            ffnn_hidden: 50,
            lstm_rnn_cell: 25,
            init_bound: 0.1,
            input_offset: 0.5,
        }
    }

    fn sizes(&self) -> [(&'static str, usize); 14] {
        [
            ("t", self.t),
            ("m", self.m),
            ("n", self.n),
            ("kernels", self.kernels),
            ("embedding", self.embedding),
            ("attention", self.attention),
            ("market", self.market),
            ("ma_hidden", self.ma_hidden),
            ("lstm", self.lstm),
            ("stock", self.stock),
            ("fused", self.fused),
            ("fused_hidden", self.fused_hidden),
            ("ffnn_hidden", self.ffnn_hidden),
            ("lstm_rnn_cell", self.lstm_rnn_cell),
        ]
    }

    pub fn to_meta(&self) -> Vec<(String, String)> {
        let mut out = vec![("model".to_string(), self.kind.to_string())];
        out.extend(self.sizes().iter().map(|(k, v)| (format!("net.{k}"), v.to_string())));
        out.push(("net.init_bound".into(), self.init_bound.to_string()));
        out.push(("net.input_offset".into(), self.input_offset.to_string()));
        out
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |key: &str| -> Result<&str> {
            ck.meta(key)
                .ok_or_else(|| ModelError::Config(format!("checkpoint lacks {key}")))
        };
        let num = |key: &str| -> Result<usize> {
            let v = get(&format!("net.{key}"))?;
            v.parse()
                .map_err(|_| ModelError::Config(format!("checkpoint net.{key} = {v:?}")))
        };
        let kind: ModelKind = get("model")?.parse()?;
        let mut cfg = Self::new(kind, num("t")?, num("m")?, num("n")?);
        cfg.kernels = num("kernels")?;
        cfg.embedding = num("embedding")?;
        cfg.attention = num("attention")?;
        cfg.market = num("market")?;
        cfg.ma_hidden = num("ma_hidden")?;
        cfg.lstm = num("lstm")?;
        cfg.stock = num("stock")?;
        cfg.fused = num("fused")?;
        cfg.fused_hidden = num("fused_hidden")?;
        cfg.ffnn_hidden = num("ffnn_hidden")?;
        cfg.lstm_rnn_cell = num("lstm_rnn_cell")?;
        let offset = get("net.input_offset")?;
        cfg.input_offset = offset
            .parse()
            .map_err(|_| ModelError::Config(format!("checkpoint net.input_offset = {offset:?}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParts {
    pub kernels: ParamId,
    pub bias: ParamId,
    pub embedding: ParamId,
    pub w_stock: ParamId,
    pub w_feature: ParamId,
    pub score: ParamId,
    /// Projects the conditioned market embedding (`t -> market`).
    pub phi1: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parts {
    Ffnn { hidden1: Dense, hidden2: Dense, out: Dense },
    LstmRnn { lstm: Lstm, out: Dense },
    Ma { market: MarketParts, hidden: Dense, out: Dense },
    MaRnn { market: MarketParts, lstm: Lstm, phi2: Dense, fused: Dense, fused_hidden: Dense, out: Dense },
}

/// One prediction request. `key` identifies the cube so the convolution is
/// computed once for examples sharing it; `cube` may be empty for
/// market-free models.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub key: usize,
    pub cube: &'a [f64],
    pub history: &'a [f64],
    pub stock: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNet {
    pub config: NetConfig,
    pub store: ParamStore<f64>,
    pub parts: Parts,
    pub stock_order: Vec<String>,
}

#[derive(Clone, Copy)]
struct BoundMarket {
    kernels: Var,
    bias: Var,
    embedding: Var,
    att: AttentionVars,
    phi1: (Var, Var),
}

enum Bound {
    Ffnn([(Var, Var); 3]),
    LstmRnn { w: Var, b: Var, out: (Var, Var) },
    Ma { market: BoundMarket, hidden: (Var, Var), out: (Var, Var) },
    MaRnn { market: BoundMarket, w: Var, b: Var, layers: [(Var, Var); 4] },
}

fn bind(tape: &mut Tape<f64>, store: &ParamStore<f64>, d: &Dense) -> (Var, Var) {
    (tape.param(store, d.weight), tape.param(store, d.bias))
}

fn dense_relu(tape: &mut Tape<f64>, (w, b): (Var, Var), x: Var) -> Result<Var> {
    let y = crate::autodiff::linear(tape, w, b, x)?;
    Ok(tape.relu(y))
}

impl NeuralNet {
    pub fn new<R: Rng + ?Sized>(config: NetConfig, stock_order: Vec<String>, rng: &mut R) -> Result<Self> {
        let c = &config;
        if c.t == 0 || c.m == 0 || c.n == 0 {
            return Err(ModelError::Config("t, m and n must be positive".into()));
        }
        if stock_order.len() != c.m {
            return Err(ModelError::StockCount {
                expected: c.m,
                got: stock_order.len(),
            });
        }
        let b = c.init_bound;
        let mut s = ParamStore::new();
        let market = |s: &mut ParamStore<f64>, rng: &mut R| MarketParts {
            kernels: s.add("conv.kernels", uniform(rng, &[c.kernels, c.n, c.m], b)),
            bias: s.add("conv.bias", uniform(rng, &[c.kernels], b)),
            embedding: s.add("stock_embedding", uniform(rng, &[c.m, c.embedding], b)),
            w_stock: s.add("attention.w_sz", uniform(rng, &[c.attention, c.embedding], b)),
            w_feature: s.add("attention.w_cz", uniform(rng, &[c.attention, c.t], b)),
            score: s.add("attention.v", uniform(rng, &[c.attention], b)),
            phi1: Dense::register(s, rng, "phi1", c.t, c.market, b),
        };
        let parts = match c.kind {
            ModelKind::Ffnn => Parts::Ffnn {
                hidden1: Dense::register(&mut s, rng, "ffnn.h1", c.t * c.n, c.ffnn_hidden, b),
                hidden2: Dense::register(&mut s, rng, "ffnn.h2", c.ffnn_hidden, c.ffnn_hidden, b),
                out: Dense::register(&mut s, rng, "ffnn.out", c.ffnn_hidden, 1, b),
            },
            ModelKind::LstmRnn => Parts::LstmRnn {
                lstm: Lstm::register(&mut s, rng, "lstm", c.n, c.lstm_rnn_cell, b),
                out: Dense::register(&mut s, rng, "out", c.lstm_rnn_cell, 1, b),
            },
            ModelKind::Ma => Parts::Ma {
                market: market(&mut s, rng),
                hidden: Dense::register(&mut s, rng, "head.h1", c.market, c.ma_hidden, b),
                out: Dense::register(&mut s, rng, "head.out", c.ma_hidden, 1, b),
            },
            ModelKind::MaRnn => Parts::MaRnn {
                market: market(&mut s, rng),
                lstm: Lstm::register(&mut s, rng, "lstm", c.n, c.lstm, b),
                phi2: Dense::register(&mut s, rng, "phi2", c.lstm, c.stock, b),
                fused: Dense::register(&mut s, rng, "head.h1", c.market + c.stock, c.fused, b),
                fused_hidden: Dense::register(&mut s, rng, "head.h2", c.fused, c.fused_hidden, b),
                out: Dense::register(&mut s, rng, "head.out", c.fused_hidden, 1, b),
            },
            ModelKind::Lr | ModelKind::Svr => {
                return Err(ModelError::Config(format!("{} is not a neural model", c.kind)))
            }
        };
        Ok(Self {
            config,
            store: s,
            parts,
            stock_order,
        })
    }

    /// Rebuilds a network from a checkpoint written by [`NeuralNet::checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = NetConfig::from_checkpoint(ck)?;
        let order: Vec<String> = ck
            .meta("stock_order")
            .ok_or_else(|| ModelError::Config("checkpoint lacks stock_order".into()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rng = crate::seeds::stream(0, "restore");
        let mut net = Self::new(config, order, &mut rng)?;
        ck.restore_into(&mut net.store)?;
        Ok(net)
    }

    pub fn checkpoint(&self, optimizer: Option<&crate::autodiff::Adam<f64>>) -> Checkpoint {
        let mut ck = Checkpoint::from_store(&self.store, optimizer);
        ck.metadata.extend(self.config.to_meta());
        ck.with_meta("stock_order", self.stock_order.join(","))
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    fn bind_market(&self, tape: &mut Tape<f64>, p: &MarketParts) -> BoundMarket {
        let s = &self.store;
        BoundMarket {
            kernels: tape.param(s, p.kernels),
            bias: tape.param(s, p.bias),
            embedding: tape.param(s, p.embedding),
            att: AttentionVars {
                w_stock: tape.param(s, p.w_stock),
                w_feature: tape.param(s, p.w_feature),
                score: tape.param(s, p.score),
            },
            phi1: bind(tape, s, &p.phi1),
        }
    }

    fn bind(&self, tape: &mut Tape<f64>) -> Bound {
        let s = &self.store;
        match &self.parts {
            Parts::Ffnn { hidden1, hidden2, out } => {
                Bound::Ffnn([bind(tape, s, hidden1), bind(tape, s, hidden2), bind(tape, s, out)])
            }
            Parts::LstmRnn { lstm, out } => Bound::LstmRnn {
                w: tape.param(s, lstm.weight),
                b: tape.param(s, lstm.bias),
                out: bind(tape, s, out),
            },
            Parts::Ma { market, hidden, out } => Bound::Ma {
                market: self.bind_market(tape, market),
                hidden: bind(tape, s, hidden),
                out: bind(tape, s, out),
            },
            Parts::MaRnn { market, lstm, phi2, fused, fused_hidden, out } => Bound::MaRnn {
                market: self.bind_market(tape, market),
                w: tape.param(s, lstm.weight),
                b: tape.param(s, lstm.bias),
                layers: [
                    bind(tape, s, phi2),
                    bind(tape, s, fused),
                    bind(tape, s, fused_hidden),
                    bind(tape, s, out),
                ],
            },
        }
    }

    fn check(&self, ex: &Example) -> Result<()> {
        let c = &self.config;
        if ex.stock >= c.m {
            return Err(ModelError::StockIndex { index: ex.stock, m: c.m });
        }
        if c.kind.uses_market() && ex.cube.len() != c.t * c.m * c.n {
            return Err(ModelError::StockCount {
                expected: c.m,
                got: ex.cube.len() / (c.t * c.n).max(1),
            });
        }
        if c.kind != ModelKind::Ma && ex.history.len() != c.t * c.n {
            return Err(ModelError::HistoryLength {
                expected: c.t * c.n,
                got: ex.history.len(),
            });
        }
        Ok(())
    }

    fn shift(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v - self.config.input_offset).collect()
    }

    /// `[J, t]` feature maps of a cube.
    fn features(&self, tape: &mut Tape<f64>, bm: &BoundMarket, cube: &[f64]) -> Result<Var> {
        let c = &self.config;
        let x = tape.constant(&[c.t, c.m, c.n], self.shift(cube))?;
        let maps = tape.conv_day(x, bm.kernels, bm.bias)?;
        Ok(tape.transpose(maps)?)
    }

    /// Returns `(phi1(p), attention weights)` for one stock.
    fn market_vector(&self, tape: &mut Tape<f64>, bm: &BoundMarket, features: Var, stock: usize) -> Result<(Var, Var)> {
        let emb = tape.row(bm.embedding, stock)?;
        let att = additive_attention(tape, emb, features, &bm.att)?;
        Ok((dense_relu(tape, bm.phi1, att.pooled)?, att.weights))
    }

    fn last_hidden(&self, tape: &mut Tape<f64>, w: Var, b: Var, hidden: usize, history: &[f64]) -> Result<Var> {
        let zeros = vec![0.0; hidden];
        let mut h = tape.vector(&zeros);
        let mut c = tape.vector(&zeros);
        for row in history.chunks_exact(self.config.n) {
            let x = tape.vector(&self.shift(row));
            (h, c) = lstm_step(tape, x, h, c, w, Some(b))?;
        }
        Ok(h)
    }

    /// Records `[1]` predictions for every example on `tape`. Attention
    /// weights are returned for market models.
    pub fn forward(&self, tape: &mut Tape<f64>, examples: &[Example]) -> Result<(Vec<Var>, Vec<Option<Var>>)> {
        for ex in examples {
            self.check(ex)?;
        }
        let bound = self.bind(tape);
        let mut cache: Vec<(usize, Var)> = Vec::new();
        let mut features = |tape: &mut Tape<f64>, bm: &BoundMarket, ex: &Example| -> Result<Var> {
            if let Some(&(_, v)) = cache.iter().find(|(k, _)| *k == ex.key) {
                return Ok(v);
            }
            let v = self.features(tape, bm, ex.cube)?;
            cache.push((ex.key, v));
            Ok(v)
        };
        let mut preds = Vec::with_capacity(examples.len());
        let mut weights = Vec::with_capacity(examples.len());
        for ex in examples {
            let (pred, w) = match &bound {
                Bound::Ffnn([h1, h2, out]) => {
                    let x = tape.vector(&self.shift(ex.history));
                    let a = crate::autodiff::linear(tape, h1.0, h1.1, x)?;
                    let a = tape.sigmoid(a);
                    let a = crate::autodiff::linear(tape, h2.0, h2.1, a)?;
                    let a = tape.sigmoid(a);
                    (crate::autodiff::linear(tape, out.0, out.1, a)?, None)
                }
                Bound::LstmRnn { w, b, out } => {
                    let h = self.last_hidden(tape, *w, *b, self.config.lstm_rnn_cell, ex.history)?;
                    (crate::autodiff::linear(tape, out.0, out.1, h)?, None)
                }
                Bound::Ma { market, hidden, out } => {
                    let f = features(tape, market, ex)?;
                    let (p, w) = self.market_vector(tape, market, f, ex.stock)?;
                    let a = dense_relu(tape, *hidden, p)?;
                    (crate::autodiff::linear(tape, out.0, out.1, a)?, Some(w))
                }
                Bound::MaRnn { market, w, b, layers } => {
                    let f = features(tape, market, ex)?;
                    let (p, att) = self.market_vector(tape, market, f, ex.stock)?;
                    let q = self.last_hidden(tape, *w, *b, self.config.lstm, ex.history)?;
                    let q = dense_relu(tape, layers[0], q)?;
                    let joined = tape.concat(&[p, q])?;
                    let a = dense_relu(tape, layers[1], joined)?;
                    let a = dense_relu(tape, layers[2], a)?;
                    (crate::autodiff::linear(tape, layers[3].0, layers[3].1, a)?, Some(att))
                }
            };
            preds.push(pred);
            weights.push(w);
        }
        Ok((preds, weights))
    }

    /// Predictions without recording gradients for later use.
    pub fn predict(&self, examples: &[Example]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(64) {
            let mut tape = Tape::new();
            let (preds, _) = self.forward(&mut tape, chunk)?;
            out.extend(preds.iter().map(|&p| tape.item(p)));
        }
        Ok(out)
    }

    /// Attention weights over the feature maps for one stock (market models).
    pub fn attention(&self, cube: &[f64], history: &[f64], stock: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let ex = Example { key: 0, cube, history, stock };
        let (_, w) = self.forward(&mut tape, &[ex])?;
        let w = w[0].ok_or_else(|| ModelError::Config(format!("{} has no attention", self.kind())))?;
        Ok(tape.value(w).to_vec())
    }

    /// Prediction for `stock` from a market cube, checking its row order
    /// against the embedding table.
    pub fn predict_cube(&self, cube: &MarketCube, history: &[f64], stock: usize) -> Result<f64> {
        if cube.stock_order != self.stock_order {
            return Err(if cube.m() != self.config.m {
                ModelError::StockCount {
                    expected: self.config.m,
                    got: cube.m(),
                }
            } else {
                ModelError::StockOrder
            });
        }
        let ex = Example {
            key: 0,
            cube: &cube.values,
            history,
            stock,
        };
        Ok(self.predict(&[ex])?[0])
    }
}
