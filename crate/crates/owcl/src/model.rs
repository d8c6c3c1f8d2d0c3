//! Multimodal encoder-fusion-classifier with per-modality heads.
//!
//! Each modality runs through its own small encoder; the fused embedding
//! (concatenation + dense) feeds the main classifier, while every modality
//! also keeps a linear head over its own embedding. One forward pass yields
//! the main logits and all modality logits. The class dimension only ever
//! grows.

use crate::datagen::MultimodalSample;
use crate::error::{Error, Result};
use crate::numcore::{Activation, DenseLayer, LayerGrads, Matrix, Rng};
use crate::textio::{parse_floats, write_floats};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub modality_dims: Vec<usize>,
    pub encoder_hidden: usize,
    pub embed_dim: usize,
    pub fusion_dim: usize,
    pub initial_classes: usize,
}

impl NetConfig {
    pub fn for_stream(modality_dims: Vec<usize>, initial_classes: usize) -> Self {
        NetConfig {
            modality_dims,
            encoder_hidden: 32,
            embed_dim: 16,
            fusion_dim: 32,
            initial_classes,
        }
    }
}

/// Per-modality encoder: a relu hidden layer and a linear projection.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct MultimodalNet {
    config: NetConfig,
    pub encoders: Vec<Encoder>,
    pub fusion: DenseLayer,
    pub classifier: DenseLayer,
    pub heads: Vec<DenseLayer>,
    current_classes: usize,
}

/// Everything a single forward pass produces.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub embeddings: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
    pub main_logits: Vec<f64>,
    pub modality_logits: Vec<Vec<f64>>,
}

/// Intermediate values backward needs beyond [`ForwardOutput`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    features: Vec<Vec<f64>>,
    enc_hidden_pre: Vec<Vec<f64>>,
    enc_hidden_out: Vec<Vec<f64>>,
    enc_out_pre: Vec<Vec<f64>>,
    concat: Vec<f64>,
    fusion_pre: Vec<f64>,
}

/// Which component a parameter buffer belongs to; decides its optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder(usize),
    Fusion,
    Classifier,
    Head(usize),
}

impl MultimodalNet {
    /// Initialization order (encoders, fusion, classifier, heads) is fixed;
    /// it defines both the rng consumption and the canonical buffer order.
    pub fn new(config: NetConfig, rng: &mut Rng) -> Result<Self> {
        if config.modality_dims.is_empty() {
            return Err(Error::Input("need at least one modality".into()));
        }
        if config.initial_classes == 0 {
            return Err(Error::Input("need at least one class".into()));
        }
        let encoders: Vec<Encoder> = config
            .modality_dims
            .iter()
            .map(|&dim| Encoder {
                hidden: DenseLayer::new(dim, config.encoder_hidden, Activation::Relu, rng),
                output: DenseLayer::new(config.encoder_hidden, config.embed_dim, Activation::Identity, rng),
            })
            .collect();
        let concat_dim = config.embed_dim * config.modality_dims.len();
        let fusion = DenseLayer::new(concat_dim, config.fusion_dim, Activation::Relu, rng);
        let classifier = DenseLayer::new(config.fusion_dim, config.initial_classes, Activation::Identity, rng);
        let heads = (0..config.modality_dims.len())
            .map(|_| DenseLayer::new(config.embed_dim, config.initial_classes, Activation::Identity, rng))
            .collect();
        let current_classes = config.initial_classes;
        Ok(MultimodalNet {
            config,
            encoders,
            fusion,
            classifier,
            heads,
            current_classes,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn modality_count(&self) -> usize {
        self.encoders.len()
    }

    pub fn current_classes(&self) -> usize {
        self.current_classes
    }

    fn check_features(&self, sample: &MultimodalSample) -> Result<()> {
        if sample.features.len() != self.modality_count() {
            return Err(Error::Input(format!(
                "sample {} has {} modalities, net expects {}",
                sample.id,
                sample.features.len(),
                self.modality_count()
            )));
        }
        for (m, feat) in sample.features.iter().enumerate() {
            if feat.len() != self.config.modality_dims[m] {
                return Err(Error::shape(
                    "forward",
                    format!("m{m} dim {}", self.config.modality_dims[m]),
                    format!("sample m{m} len {}", feat.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn forward(&self, sample: &MultimodalSample) -> Result<ForwardOutput> {
        Ok(self.forward_traced(sample)?.0)
    }

    pub fn forward_traced(&self, sample: &MultimodalSample) -> Result<(ForwardOutput, ForwardTrace)> {
        self.check_features(sample)?;
        let m_count = self.modality_count();
        let mut embeddings = Vec::with_capacity(m_count);
        let mut enc_hidden_pre = Vec::with_capacity(m_count);
        let mut enc_hidden_out = Vec::with_capacity(m_count);
        let mut enc_out_pre = Vec::with_capacity(m_count);
        for (enc, feat) in self.encoders.iter().zip(&sample.features) {
            let (h_pre, h_out) = enc.hidden.forward_traced(feat)?;
            let (o_pre, o_out) = enc.output.forward_traced(&h_out)?;
            enc_hidden_pre.push(h_pre);
            enc_hidden_out.push(h_out);
            enc_out_pre.push(o_pre);
            embeddings.push(o_out);
        }
        let mut concat = Vec::with_capacity(self.config.embed_dim * m_count);
        for e in &embeddings {
            concat.extend_from_slice(e);
        }
        let (fusion_pre, fused) = self.fusion.forward_traced(&concat)?;
        let main_logits = self.classifier.forward(&fused)?;
        let modality_logits = self
            .heads
            .iter()
            .zip(&embeddings)
            .map(|(head, embed)| head.forward(embed))
            .collect::<Result<Vec<_>>>()?;
        Ok((
            ForwardOutput {
                embeddings,
                fused,
                main_logits,
                modality_logits,
            },
            ForwardTrace {
                features: sample.features.clone(),
                enc_hidden_pre,
                enc_hidden_out,
                enc_out_pre,
                concat,
                fusion_pre,
            },
        ))
    }

    /// Accumulates parameter gradients for one sample into `grads`.
    ///
    /// `d_main` is the loss gradient on the main logits; `d_heads`, when
    /// given, the per-modality gradients on the modality logits. Encoder
    /// gradients accumulate both the fused-path and head-path contributions.
    pub fn backward(
        &self,
        output: &ForwardOutput,
        trace: &ForwardTrace,
        d_main: &[f64],
        d_heads: Option<&[Vec<f64>]>,
        grads: &mut NetGrads,
    ) -> Result<()> {
        if d_main.len() != self.current_classes {
            return Err(Error::shape(
                "backward",
                format!("classes {}", self.current_classes),
                format!("d_main len {}", d_main.len()),
            ));
        }
        if let Some(dh) = d_heads {
            if dh.len() != self.modality_count() {
                return Err(Error::shape(
                    "backward",
                    format!("modalities {}", self.modality_count()),
                    format!("d_heads len {}", dh.len()),
                ));
            }
            for (m, d) in dh.iter().enumerate() {
                if d.len() != self.current_classes {
                    return Err(Error::shape(
                        "backward",
                        format!("classes {}", self.current_classes),
                        format!("d_heads[{m}] len {}", d.len()),
                    ));
                }
            }
        }

        // Main path: classifier -> fusion -> concat split.
        let mut d_fused = vec![0.0; self.config.fusion_dim];
        self.classifier.backward(
            &output.fused,
            &output.main_logits, // identity activation: pre == logits
            d_main,
            &mut grads.classifier,
            Some(&mut d_fused),
        )?;
        let mut d_concat = vec![0.0; trace.concat.len()];
        self.fusion.backward(
            &trace.concat,
            &trace.fusion_pre,
            &d_fused,
            &mut grads.fusion,
            Some(&mut d_concat),
        )?;

        let embed_dim = self.config.embed_dim;
        for m in 0..self.modality_count() {
            let mut d_embed = d_concat[m * embed_dim..(m + 1) * embed_dim].to_vec();
            if let Some(dh) = d_heads {
                self.heads[m].backward(
                    &output.embeddings[m],
                    &output.modality_logits[m],
                    &dh[m],
                    &mut grads.heads[m],
                    Some(&mut d_embed),
                )?;
            }
            let mut d_hidden = vec![0.0; self.config.encoder_hidden];
            self.encoders[m].output.backward(
                &trace.enc_hidden_out[m],
                &trace.enc_out_pre[m],
                &d_embed,
                &mut grads.encoders[m].output,
                Some(&mut d_hidden),
            )?;
            self.encoders[m].hidden.backward(
                &trace.features[m],
                &trace.enc_hidden_pre[m],
                &d_hidden,
                &mut grads.encoders[m].hidden,
                None,
            )?;
        }
        Ok(())
    }

    /// Grows the classifier and every head to `new_total` classes. Existing
    /// rows stay bitwise identical, so predictions on old classes do not
    /// move at the moment of expansion.
    pub fn expand_classes(&mut self, new_total: usize, rng: &mut Rng) -> Result<()> {
        if new_total < self.current_classes {
            return Err(Error::Domain(format!(
                "cannot shrink classes from {} to {new_total}",
                self.current_classes
            )));
        }
        if new_total == self.current_classes {
            return Ok(());
        }
        self.classifier.expand_out(new_total, rng)?;
        for head in &mut self.heads {
            head.expand_out(new_total, rng)?;
        }
        self.current_classes = new_total;
        Ok(())
    }

    /// Parameter buffers in canonical order; parallel to
    /// [`MultimodalNet::buffer_groups`] and [`NetGrads::buffers`].
    pub fn param_buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut bufs = Vec::new();
        for enc in &mut self.encoders {
            bufs.push(enc.hidden.weights.data_mut());
            bufs.push(&mut enc.hidden.bias);
            bufs.push(enc.output.weights.data_mut());
            bufs.push(&mut enc.output.bias);
        }
        bufs.push(self.fusion.weights.data_mut());
        bufs.push(&mut self.fusion.bias);
        bufs.push(self.classifier.weights.data_mut());
        bufs.push(&mut self.classifier.bias);
        for head in &mut self.heads {
            bufs.push(head.weights.data_mut());
            bufs.push(&mut head.bias);
        }
        bufs
    }

    pub fn buffer_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::new();
        for m in 0..self.modality_count() {
            groups.extend([ParamGroup::Encoder(m); 4]);
        }
        groups.extend([ParamGroup::Fusion; 2]);
        groups.extend([ParamGroup::Classifier; 2]);
        for m in 0..self.modality_count() {
            groups.extend([ParamGroup::Head(m); 2]);
        }
        groups
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for enc in &self.encoders {
            flat.extend_from_slice(enc.hidden.weights.data());
            flat.extend_from_slice(&enc.hidden.bias);
            flat.extend_from_slice(enc.output.weights.data());
            flat.extend_from_slice(&enc.output.bias);
        }
        flat.extend_from_slice(self.fusion.weights.data());
        flat.extend_from_slice(&self.fusion.bias);
        flat.extend_from_slice(self.classifier.weights.data());
        flat.extend_from_slice(&self.classifier.bias);
        for head in &self.heads {
            flat.extend_from_slice(head.weights.data());
            flat.extend_from_slice(&head.bias);
        }
        flat
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let mut offset = 0;
        for buf in self.param_buffers_mut() {
            let next = offset + buf.len();
            if next > flat.len() {
                return Err(Error::shape(
                    "set_flat_params",
                    format!("need > {next}"),
                    format!("flat len {}", flat.len()),
                ));
            }
            buf.copy_from_slice(&flat[offset..next]);
            offset = next;
        }
        if offset != flat.len() {
            return Err(Error::shape(
                "set_flat_params",
                format!("params {offset}"),
                format!("flat len {}", flat.len()),
            ));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("OWCLNET v1\n");
        let dims: Vec<String> = self.config.modality_dims.iter().map(|d| d.to_string()).collect();
        writeln!(
            out,
            "dims={} hidden={} embed={} fusion={} classes={}",
            dims.join(","),
            self.config.encoder_hidden,
            self.config.embed_dim,
            self.config.fusion_dim,
            self.current_classes
        )
        .unwrap();
        let mut dump = |name: String, layer: &DenseLayer| {
            writeln!(
                out,
                "layer={name} act={} rows={} cols={}",
                layer.activation.name(),
                layer.out_dim(),
                layer.in_dim()
            )
            .unwrap();
            for r in 0..layer.out_dim() {
                write_floats(&mut out, layer.weights.row(r));
            }
            write_floats(&mut out, &layer.bias);
        };
        for (m, enc) in self.encoders.iter().enumerate() {
            dump(format!("enc{m}.hidden"), &enc.hidden);
            dump(format!("enc{m}.output"), &enc.output);
        }
        dump("fusion".into(), &self.fusion);
        dump("classifier".into(), &self.classifier);
        for (m, head) in self.heads.iter().enumerate() {
            dump(format!("head{m}"), head);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, version) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty checkpoint".into(),
        })?;
        if version.trim() != "OWCLNET v1" {
            return Err(Error::Version {
                expected: "OWCLNET v1".into(),
                found: version.trim().into(),
            });
        }
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 2,
            msg: "missing architecture line".into(),
        })?;
        let mut dims = None;
        let mut hidden = None;
        let mut embed = None;
        let mut fusion_dim = None;
        let mut classes = None;
        for token in header.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or(Error::Parse {
                line: 2,
                msg: format!("malformed token `{token}`"),
            })?;
            match key {
                "dims" => {
                    dims = Some(
                        value
                            .split(',')
                            .map(|d| {
                                d.parse::<usize>().map_err(|_| Error::Parse {
                                    line: 2,
                                    msg: format!("invalid dim `{d}`"),
                                })
                            })
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "hidden" => hidden = value.parse().ok(),
                "embed" => embed = value.parse().ok(),
                "fusion" => fusion_dim = value.parse().ok(),
                "classes" => classes = value.parse().ok(),
                other => {
                    return Err(Error::Parse {
                        line: 2,
                        msg: format!("unknown architecture key `{other}`"),
                    })
                }
            }
        }
        let config = NetConfig {
            modality_dims: dims.ok_or(Error::Parse { line: 2, msg: "missing dims".into() })?,
            encoder_hidden: hidden.ok_or(Error::Parse { line: 2, msg: "missing hidden".into() })?,
            embed_dim: embed.ok_or(Error::Parse { line: 2, msg: "missing embed".into() })?,
            fusion_dim: fusion_dim.ok_or(Error::Parse { line: 2, msg: "missing fusion".into() })?,
            initial_classes: classes.ok_or(Error::Parse { line: 2, msg: "missing classes".into() })?,
        };
        let classes = config.initial_classes;

        let mut read_layer = |expect_name: &str| -> Result<DenseLayer> {
            let (no, head) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("checkpoint truncated before layer {expect_name}"),
            })?;
            let line = no + 1;
            let mut name = None;
            let mut act = None;
            let mut rows = None;
            let mut cols = None;
            for token in head.split_whitespace() {
                let (key, value) = token.split_once('=').ok_or(Error::Parse {
                    line,
                    msg: format!("malformed token `{token}`"),
                })?;
                match key {
                    "layer" => name = Some(value.to_string()),
                    "act" => act = Some(Activation::from_name(value)?),
                    "rows" => rows = value.parse().ok(),
                    "cols" => cols = value.parse().ok(),
                    other => {
                        return Err(Error::Parse {
                            line,
                            msg: format!("unknown layer key `{other}`"),
                        })
                    }
                }
            }
            let name = name.unwrap_or_default();
            if name != expect_name {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected layer {expect_name}, found {name}"),
                });
            }
            let rows: usize = rows.ok_or(Error::Parse { line, msg: "missing rows".into() })?;
            let cols: usize = cols.ok_or(Error::Parse { line, msg: "missing cols".into() })?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (no, text) = lines.next().ok_or(Error::Parse {
                    line: 0,
                    msg: format!("truncated weights in {expect_name}"),
                })?;
                data.extend(parse_floats(text, no + 1, cols)?);
            }
            let (no, text) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("truncated bias in {expect_name}"),
            })?;
            let bias = parse_floats(text, no + 1, rows)?;
            Ok(DenseLayer {
                weights: Matrix::from_vec(rows, cols, data)?,
                bias,
                activation: act.ok_or(Error::Parse { line, msg: "missing act".into() })?,
            })
        };

        let mut encoders = Vec::new();
        for m in 0..config.modality_dims.len() {
            encoders.push(Encoder {
                hidden: read_layer(&format!("enc{m}.hidden"))?,
                output: read_layer(&format!("enc{m}.output"))?,
            });
        }
        let fusion = read_layer("fusion")?;
        let classifier = read_layer("classifier")?;
        let mut heads = Vec::new();
        for m in 0..config.modality_dims.len() {
            heads.push(read_layer(&format!("head{m}"))?);
        }
        Ok(MultimodalNet {
            config,
            encoders,
            fusion,
            classifier,
            heads,
            current_classes: classes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub hidden: LayerGrads,
    pub output: LayerGrads,
}

/// Gradient buffers mirroring a net's parameters.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub encoders: Vec<EncoderGrads>,
    pub fusion: LayerGrads,
    pub classifier: LayerGrads,
    pub heads: Vec<LayerGrads>,
}

impl NetGrads {
    pub fn zeros_like(net: &MultimodalNet) -> Self {
        NetGrads {
            encoders: net
                .encoders
                .iter()
                .map(|e| EncoderGrads {
                    hidden: LayerGrads::zeros_like(&e.hidden),
                    output: LayerGrads::zeros_like(&e.output),
                })
                .collect(),
            fusion: LayerGrads::zeros_like(&net.fusion),
            classifier: LayerGrads::zeros_like(&net.classifier),
            heads: net.heads.iter().map(LayerGrads::zeros_like).collect(),
        }
    }

    pub fn zero(&mut self) {
        for e in &mut self.encoders {
            e.hidden.zero();
            e.output.zero();
        }
        self.fusion.zero();
        self.classifier.zero();
        for h in &mut self.heads {
            h.zero();
        }
    }

    /// Buffers in the same canonical order as the net's parameters.
    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut bufs: Vec<&[f64]> = Vec::new();
        for e in &self.encoders {
            bufs.push(e.hidden.d_weights.data());
            bufs.push(&e.hidden.d_bias);
            bufs.push(e.output.d_weights.data());
            bufs.push(&e.output.d_bias);
        }
        bufs.push(self.fusion.d_weights.data());
        bufs.push(&self.fusion.d_bias);
        bufs.push(self.classifier.d_weights.data());
        bufs.push(&self.classifier.d_bias);
        for h in &self.heads {
            bufs.push(h.d_weights.data());
            bufs.push(&h.d_bias);
        }
        bufs
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for buf in self.buffers() {
            flat.extend_from_slice(buf);
        }
        flat
    }
}
