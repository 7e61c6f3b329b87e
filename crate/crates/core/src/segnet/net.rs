//! Encoder: `stages x (conv1d along the stock axis -> ReLU -> max-pool)`,
//! adaptive average pooling to a fixed row grid, linear bottleneck.
//! Decoder: linear expansion, adaptive pooling back to the deepest row
//! count, then per stage `unpool with the encoder's indices -> conv1d`.

use std::rc::Rc;

use rand::Rng;

use crate::autodiff::{uniform, Checkpoint, Dense, ParamId, ParamStore, PoolIndices, Tape, Var};
use crate::segnet::{Result, SegNetError};

#[derive(Debug, Clone, PartialEq)]
pub struct SegNetConfig {
    /// Output channels of each encoder stage.
    pub channels: Vec<usize>,
    /// Odd kernel extent along the stock axis.
    pub kernel: usize,
    pub window: usize,
    /// Rows of the fixed grid in front of the bottleneck.
    pub grid: usize,
    pub embedding_dim: usize,
    pub init_bound: f64,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        Self {
            channels: vec![16, 32, 64],
            kernel: 3,
            window: 2,
            grid: 32,
            embedding_dim: 32,
            init_bound: 0.1,
        }
    }
}

impl SegNetConfig {
    pub fn reduction(&self) -> usize {
        self.window.pow(self.channels.len() as u32)
    }

    fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(SegNetError::Config("at least one stage with positive channels".into()));
        }
        if self.kernel % 2 == 0 || self.window == 0 || self.grid == 0 || self.embedding_dim == 0 {
            return Err(SegNetError::Config(
                "kernel must be odd; window, grid and embedding_dim positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

/// Result of [`SegNet::encode`]: the embedding and the pool indices of each
/// encoder stage, first stage first.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub embedding: Vec<f64>,
    pub records: Vec<PoolIndices>,
    pub rows: usize,
}

impl Encoded {
    /// The same embedding with every argmax moved to its window's first slot.
    pub fn ablated(&self) -> Self {
        Self {
            records: self.records.iter().map(PoolIndices::ablated).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegNet {
    pub config: SegNetConfig,
    /// Indicators per stock (image columns).
    pub n: usize,
    pub store: ParamStore<f64>,
    encoder: Vec<Conv>,
    bottleneck: Dense,
    expand: Dense,
    decoder: Vec<Conv>,
}

struct Bound {
    encoder: Vec<(Var, Var)>,
    bottleneck: (Var, Var),
    expand: (Var, Var),
    decoder: Vec<(Var, Var)>,
}

impl SegNet {
    pub fn new<R: Rng + ?Sized>(config: SegNetConfig, n: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if n == 0 {
            return Err(SegNetError::Config("images need at least one column".into()));
        }
        let (k, b) = (config.kernel, config.init_bound);
        let mut store = ParamStore::new();
        let mut conv = |store: &mut ParamStore<f64>, name: String, cin: usize, cout: usize| Conv {
            w: store.add(format!("{name}.w"), uniform(rng, &[cout, cin, k], b)),
            b: store.add(format!("{name}.b"), uniform(rng, &[cout], b)),
        };
        let mut encoder = Vec::new();
        let mut cin = n;
        for (i, &c) in config.channels.iter().enumerate() {
            encoder.push(conv(&mut store, format!("enc{i}"), cin, c));
            cin = c;
        }
        // decoder stage i undoes encoder stage (stages - 1 - i)
        let mut decoder = Vec::new();
        for i in (0..config.channels.len()).rev() {
            let cout = if i == 0 { n } else { config.channels[i - 1] };
            decoder.push(conv(&mut store, format!("dec{i}"), config.channels[i], cout));
        }
        let flat = config.grid * cin;
        let bottleneck = Dense::register(&mut store, rng, "bottleneck", flat, config.embedding_dim, b);
        let expand = Dense::register(&mut store, rng, "expand", config.embedding_dim, flat, b);
        Ok(Self {
            config,
            n,
            store,
            encoder,
            bottleneck,
            expand,
            decoder,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let chans: Vec<String> = self.config.channels.iter().map(usize::to_string).collect();
        Checkpoint::from_store(&self.store, None)
            .with_meta("model", "segnet")
            .with_meta("segnet.channels", chans.join(","))
            .with_meta("segnet.kernel", self.config.kernel.to_string())
            .with_meta("segnet.window", self.config.window.to_string())
            .with_meta("segnet.grid", self.config.grid.to_string())
            .with_meta("segnet.embedding_dim", self.config.embedding_dim.to_string())
            .with_meta("segnet.n", self.n.to_string())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            ck.meta(k)
                .ok_or_else(|| SegNetError::Config(format!("checkpoint lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            let v = get(k)?;
            v.parse()
                .map_err(|_| SegNetError::Config(format!("checkpoint {k} = {v:?}")))
        };
        let channels = get("segnet.channels")?
            .split(',')
            .map(|c| {
                c.parse()
                    .map_err(|_| SegNetError::Config(format!("checkpoint channel {c:?}")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let config = SegNetConfig {
            channels,
            kernel: num("segnet.kernel")?,
            window: num("segnet.window")?,
            grid: num("segnet.grid")?,
            embedding_dim: num("segnet.embedding_dim")?,
            init_bound: 0.1,
        };
        let mut rng = crate::seeds::stream(0, "restore");
        let mut net = Self::new(config, num("segnet.n")?, &mut rng)?;
        ck.restore_into(&mut net.store)?;
        Ok(net)
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    fn bind(&self, tape: &mut Tape<f64>) -> Bound {
        let s = &self.store;
        let pair = |tape: &mut Tape<f64>, w: ParamId, b: ParamId| (tape.param(s, w), tape.param(s, b));
        Bound {
            encoder: self.encoder.iter().map(|c| pair(tape, c.w, c.b)).collect(),
            bottleneck: pair(tape, self.bottleneck.weight, self.bottleneck.bias),
            expand: pair(tape, self.expand.weight, self.expand.bias),
            decoder: self.decoder.iter().map(|c| pair(tape, c.w, c.b)).collect(),
        }
    }

    fn check_image(&self, image: &[f64], m: usize) -> Result<()> {
        if image.len() != m * self.n {
            return Err(SegNetError::ImageShape {
                m,
                n: self.n,
                got: image.len(),
            });
        }
        if m < self.config.reduction() {
            return Err(SegNetError::TooFewStocks {
                m,
                reduction: self.config.reduction(),
            });
        }
        Ok(())
    }

    fn encode_on(&self, tape: &mut Tape<f64>, b: &Bound, x: Var) -> Result<(Var, Vec<Rc<PoolIndices>>)> {
        let mut h = x;
        let mut records = Vec::with_capacity(self.encoder.len());
        for &(w, bias) in &b.encoder {
            let c = tape.conv1d(h, w, bias)?;
            let a = tape.relu(c);
            let (p, idx) = tape.maxpool(a, self.config.window, 0)?;
            records.push(idx);
            h = p;
        }
        let grid = tape.adaptive_avg_pool(h, self.config.grid)?;
        let flat = tape.reshape(grid, &[self.config.grid * self.config.channels[self.encoder.len() - 1]])?;
        let emb = crate::autodiff::linear(tape, b.bottleneck.0, b.bottleneck.1, flat)?;
        Ok((emb, records))
    }

    fn decode_on(&self, tape: &mut Tape<f64>, b: &Bound, emb: Var, records: &[Rc<PoolIndices>]) -> Result<Var> {
        if records.len() != self.decoder.len() {
            return Err(SegNetError::RecordCount {
                expected: self.decoder.len(),
                got: records.len(),
            });
        }
        let last = *self.config.channels.last().expect("validated");
        let flat = crate::autodiff::linear(tape, b.expand.0, b.expand.1, emb)?;
        let grid = tape.reshape(flat, &[self.config.grid, last])?;
        let deepest = records.last().expect("non-empty").output_shape[0];
        let mut h = tape.adaptive_avg_pool(grid, deepest)?;
        for (i, &(w, bias)) in b.decoder.iter().enumerate() {
            let idx = &records[records.len() - 1 - i];
            let up = tape.unpool(h, idx, idx.input_len())?;
            let c = tape.conv1d(up, w, bias)?;
            h = if i + 1 == b.decoder.len() { c } else { tape.relu(c) };
        }
        Ok(h)
    }

    /// Records `image -> reconstruction` on a tape; returns
    /// `(embedding, reconstruction [m, n])`.
    pub fn autoencode_on(&self, tape: &mut Tape<f64>, image: &[f64], m: usize) -> Result<(Var, Var)> {
        self.check_image(image, m)?;
        let b = self.bind(tape);
        let x = tape.constant(&[m, self.n], image.to_vec())?;
        let (emb, records) = self.encode_on(tape, &b, x)?;
        let out = self.decode_on(tape, &b, emb, &records)?;
        Ok((emb, out))
    }

    /// Mean per-pixel squared error of a batch, recorded on `tape`.
    pub fn batch_loss(&self, tape: &mut Tape<f64>, images: &[&[f64]], m: usize) -> Result<Var> {
        let b = self.bind(tape);
        let mut losses = Vec::with_capacity(images.len());
        for img in images {
            self.check_image(img, m)?;
            let x = tape.constant(&[m, self.n], img.to_vec())?;
            let (emb, records) = self.encode_on(tape, &b, x)?;
            let out = self.decode_on(tape, &b, emb, &records)?;
            losses.push(tape.mse(out, img)?);
        }
        let all = tape.concat(&losses)?;
        Ok(tape.mean(all))
    }

    pub fn encode(&self, image: &[f64], m: usize) -> Result<Encoded> {
        self.check_image(image, m)?;
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let x = tape.constant(&[m, self.n], image.to_vec())?;
        let (emb, records) = self.encode_on(&mut tape, &b, x)?;
        Ok(Encoded {
            embedding: tape.value(emb).to_vec(),
            records: records.iter().map(|r| (**r).clone()).collect(),
            rows: m,
        })
    }

    /// Reconstructs a row-major `[rows, n]` image from an encoding.
    pub fn decode(&self, embedding: &[f64], records: &[PoolIndices]) -> Result<Vec<f64>> {
        if embedding.len() != self.config.embedding_dim {
            return Err(SegNetError::EmbeddingLength {
                expected: self.config.embedding_dim,
                got: embedding.len(),
            });
        }
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let emb = tape.vector(embedding);
        let records: Vec<Rc<PoolIndices>> = records.iter().cloned().map(Rc::new).collect();
        let out = self.decode_on(&mut tape, &b, emb, &records)?;
        Ok(tape.value(out).to_vec())
    }

    pub fn reconstruct(&self, image: &[f64], m: usize) -> Result<Vec<f64>> {
        let e = self.encode(image, m)?;
        self.decode(&e.embedding, &e.records)
    }
}
