"""Genome-parameterized seq2seq architectures for grapheme-to-phoneme conversion.

Two families, each fully determined by a small gene vector:

* a convolutional encoder/decoder over one-hot inputs (no embeddings, no
  residual connections), bridged by dot-product attention, with a
  "decoder output" stack of causal convolutions whose widths descend from
  gene G6 by halving with a floor of 32;
* a post-norm transformer with learned token + position embeddings.

Construction is deterministic: the same (genome, vocabularies, max_len, seed)
always yields identical parameter bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ConfigError, LengthError
from .lexicon import EOS_ID, PAD_ID, SOS_ID, UNK_ID, Vocab, grapheme_clusters

CONV_KERNEL_WIDTH = 3
OUT_WIDTH_FLOOR = 32
DEFAULT_MAX_LEN = 64

CNN_GENE_DOMAINS: dict[str, tuple] = {
    "G1": (2, 3, 4),
    "G2": (32, 64, 128, 256),
    "G3": (2, 3, 4),
    "G4": (32, 64, 128, 256),
    "G5": (2, 3, 4),
    "G6": (32, 64, 128),
    "G7": ("relu", "linear"),
    "G8": ("adam", "rmsprop"),
    "G9": (32, 64, 128, 256, 512),
}

TRANSFORMER_GENE_DOMAINS: dict[str, tuple] = {
    "G1": (2, 3, 4),
    "G2": (2, 3, 4),
    "G3": (32, 64, 128),
    "G4": (2, 4),
    "G5": (0.01, 0.05, 0.1, 0.15),
    "G6": (32, 64, 128, 256, 512, 1024),
    "G7": (32, 64, 128, 256, 512),
}


def gene_domains(architecture: str) -> dict[str, tuple]:
    if architecture == "cnn":
        return CNN_GENE_DOMAINS
    if architecture == "transformer":
        return TRANSFORMER_GENE_DOMAINS
    raise ConfigError(f"unknown architecture {architecture!r}")


@dataclass(frozen=True)
class CnnGenome:
    g1_enc_layers: int
    g2_enc_dim: int
    g3_dec_layers: int
    g4_dec_dim: int
    g5_out_layers: int
    g6_out_dim: int
    g7_activation: str
    g8_optimizer: str
    g9_batch: int

    architecture = "cnn"

    def __post_init__(self):
        for gene_id, value in self.as_genes().items():
            if value not in CNN_GENE_DOMAINS[gene_id]:
                raise ConfigError(
                    f"CNN gene {gene_id} value {value!r} outside its domain "
                    f"{CNN_GENE_DOMAINS[gene_id]}"
                )

    def as_genes(self) -> dict:
        return {
            "G1": self.g1_enc_layers,
            "G2": self.g2_enc_dim,
            "G3": self.g3_dec_layers,
            "G4": self.g4_dec_dim,
            "G5": self.g5_out_layers,
            "G6": self.g6_out_dim,
            "G7": self.g7_activation,
            "G8": self.g8_optimizer,
            "G9": self.g9_batch,
        }

    @classmethod
    def from_genes(cls, genes: dict) -> "CnnGenome":
        return cls(
            g1_enc_layers=genes["G1"],
            g2_enc_dim=genes["G2"],
            g3_dec_layers=genes["G3"],
            g4_dec_dim=genes["G4"],
            g5_out_layers=genes["G5"],
            g6_out_dim=genes["G6"],
            g7_activation=str(genes["G7"]).lower(),
            g8_optimizer=str(genes["G8"]).lower(),
            g9_batch=genes["G9"],
        )

    @property
    def batch_size(self) -> int:
        return self.g9_batch

    @property
    def optimizer(self) -> str:
        return self.g8_optimizer

    def output_stack_widths(self) -> list[int]:
        """Widths of the decoder-output conv stack: halve per layer, floor 32."""
        return [max(OUT_WIDTH_FLOOR, self.g6_out_dim >> i)
                for i in range(self.g5_out_layers)]


@dataclass(frozen=True)
class TransformerGenome:
    g1_enc_layers: int
    g2_dec_layers: int
    g3_embed_dim: int
    g4_heads: int
    g5_dropout: float
    g6_ff_dim: int
    g7_batch: int

    architecture = "transformer"

    def __post_init__(self):
        for gene_id, value in self.as_genes().items():
            if value not in TRANSFORMER_GENE_DOMAINS[gene_id]:
                raise ConfigError(
                    f"transformer gene {gene_id} value {value!r} outside its "
                    f"domain {TRANSFORMER_GENE_DOMAINS[gene_id]}"
                )
        if self.g3_embed_dim % self.g4_heads != 0:
            raise ConfigError(
                f"embedding dim {self.g3_embed_dim} not divisible by "
                f"{self.g4_heads} heads"
            )

    def as_genes(self) -> dict:
        return {
            "G1": self.g1_enc_layers,
            "G2": self.g2_dec_layers,
            "G3": self.g3_embed_dim,
            "G4": self.g4_heads,
            "G5": self.g5_dropout,
            "G6": self.g6_ff_dim,
            "G7": self.g7_batch,
        }

    @classmethod
    def from_genes(cls, genes: dict) -> "TransformerGenome":
        return cls(
            g1_enc_layers=genes["G1"],
            g2_dec_layers=genes["G2"],
            g3_embed_dim=genes["G3"],
            g4_heads=genes["G4"],
            g5_dropout=genes["G5"],
            g6_ff_dim=genes["G6"],
            g7_batch=genes["G7"],
        )

    @property
    def batch_size(self) -> int:
        return self.g7_batch

    @property
    def optimizer(self) -> str:
        return "adam"


Genome = CnnGenome | TransformerGenome


def genome_to_dict(genome: Genome) -> dict:
    d: dict = {"architecture": genome.architecture}
    d.update(genome.as_genes())
    return d


def genome_from_dict(d: dict) -> Genome:
    arch = d.get("architecture")
    if arch == "cnn":
        return CnnGenome.from_genes(d)
    if arch == "transformer":
        return TransformerGenome.from_genes(d)
    raise ConfigError(f"unknown architecture {arch!r} in genome")


def one_hot(ids: np.ndarray, depth: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    out = np.zeros(ids.shape + (depth,))
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


class Seq2SeqModel:
    """A built model: named parameters plus the forward pass they define."""

    architecture: str

    def __init__(self, genome, g_vocab: Vocab, p_vocab: Vocab, max_len: int, seed: int):
        if max_len < 4:
            raise ConfigError(f"max_len {max_len} is too small")
        self.genome = genome
        self.g_vocab = g_vocab
        self.p_vocab = p_vocab
        self.max_len = max_len
        self.seed = seed
        self.params: dict[str, Tensor] = {}
        self.structure: list[str] = []

    def _param(self, rng, name: str, shape, init: str = "glorot") -> Tensor:
        if init in ("glorot", "head"):
            if len(shape) == 2:
                data = ad.glorot_uniform(rng, shape, shape[0], shape[1])
            else:  # conv kernel [k, c_in, c_out]
                k, ci, co = shape
                data = ad.glorot_uniform(rng, shape, k * ci, k * co)
            if init == "head":
                # small-scale classifier head keeps the initial softmax
                # near-uniform (untrained loss ~ ln C)
                data *= 0.3
        elif init == "embedding":
            data = ad.embedding_init(rng, shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            raise ValueError(init)
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def logits(self, tape: Tape | None, src_ids: np.ndarray, tgt_in_ids: np.ndarray,
               rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
        raise NotImplementedError

    def _check_lengths(self, *lengths: int) -> None:
        for n in lengths:
            if n > self.max_len:
                raise LengthError(f"sequence of length {n} exceeds max_len {self.max_len}")


class CnnSeq2Seq(Seq2SeqModel):
    """Conv blocks over one-hot inputs; attention bridges encoder to decoder.

    Structurally embedding-free and residual-free. All decoder-side
    convolutions (decoder and output stacks) use causal padding so that
    teacher-forced logits at position t never see targets at positions >= t.
    """

    architecture = "cnn"

    def __init__(self, genome: CnnGenome, g_vocab, p_vocab, max_len, seed):
        super().__init__(genome, g_vocab, p_vocab, max_len, seed)
        rng = np.random.default_rng(seed)
        g = genome
        k = CONV_KERNEL_WIDTH

        def conv_block(prefix: str, c_in: int, c_out: int, padding: str):
            self._param(rng, f"{prefix}.conv.kernel", (k, c_in, c_out))
            self._param(rng, f"{prefix}.conv.bias", (c_out,), "zeros")
            self._param(rng, f"{prefix}.ln.gain", (c_out,), "ones")
            self._param(rng, f"{prefix}.ln.shift", (c_out,), "zeros")
            self.structure += [f"conv1d[{padding}]", g.g7_activation, "layer_norm"]

        self.structure.append("one_hot_graphemes")
        w_in = len(g_vocab)
        for i in range(g.g1_enc_layers):
            conv_block(f"enc.{i}", w_in, g.g2_enc_dim, "same_zero")
            w_in = g.g2_enc_dim

        self.structure.append("one_hot_phonemes")
        w_in = len(p_vocab)
        for i in range(g.g3_dec_layers):
            conv_block(f"dec.{i}", w_in, g.g4_dec_dim, "causal")
            w_in = g.g4_dec_dim

        self._param(rng, "bridge.weight", (g.g2_enc_dim, g.g4_dec_dim))
        self._param(rng, "bridge.bias", (g.g4_dec_dim,), "zeros")
        self.structure += ["encoder_projection", "dot_product_attention", "concat"]

        w_in = 2 * g.g4_dec_dim
        for i, width in enumerate(g.output_stack_widths()):
            conv_block(f"out.{i}", w_in, width, "causal")
            w_in = width

        self._param(rng, "proj.weight", (w_in, len(p_vocab)), "head")
        self._param(rng, "proj.bias", (len(p_vocab),), "zeros")
        self.structure.append("dense_softmax")
        self.structure = list(self.structure)

    def _block(self, tape, x: Tensor, prefix: str, padding: str) -> Tensor:
        p = self.params
        x = ad.conv1d(tape, x, p[f"{prefix}.conv.kernel"], p[f"{prefix}.conv.bias"],
                      padding=padding)
        if self.genome.g7_activation == "relu":
            x = ad.relu(tape, x)
        return ad.layer_norm(tape, x, p[f"{prefix}.ln.gain"], p[f"{prefix}.ln.shift"])

    def logits(self, tape, src_ids, tgt_in_ids, rng=None, training=False):
        g = self.genome
        p = self.params
        self._check_lengths(src_ids.shape[1], tgt_in_ids.shape[1])

        enc = Tensor(one_hot(src_ids, len(self.g_vocab)))
        for i in range(g.g1_enc_layers):
            enc = self._block(tape, enc, f"enc.{i}", "same_zero")

        dec = Tensor(one_hot(tgt_in_ids, len(self.p_vocab)))
        for i in range(g.g3_dec_layers):
            dec = self._block(tape, dec, f"dec.{i}", "causal")

        kv = ad.dense(tape, enc, p["bridge.weight"], p["bridge.bias"])
        ctx = ad.scaled_dot_product_attention(tape, dec, kv, kv)
        h = ad.concat(tape, [ctx, dec], axis=-1)
        for i in range(g.g5_out_layers):
            h = self._block(tape, h, f"out.{i}", "causal")
        return ad.dense(tape, h, p["proj.weight"], p["proj.bias"])


class TransformerSeq2Seq(Seq2SeqModel):
    """Post-norm transformer with learned token and position embeddings."""

    architecture = "transformer"

    def __init__(self, genome: TransformerGenome, g_vocab, p_vocab, max_len, seed):
        super().__init__(genome, g_vocab, p_vocab, max_len, seed)
        rng = np.random.default_rng(seed)
        g = genome
        d = g.g3_embed_dim

        self._param(rng, "src.tok_embed", (len(g_vocab), d), "embedding")
        self._param(rng, "src.pos_embed", (max_len, d), "embedding")
        self._param(rng, "tgt.tok_embed", (len(p_vocab), d), "embedding")
        self._param(rng, "tgt.pos_embed", (max_len, d), "embedding")
        self.structure += ["token_embedding", "position_embedding", "dropout"]

        def attn(prefix: str) -> None:
            for part in ("q", "k", "v", "o"):
                self._param(rng, f"{prefix}.w{part}", (d, d))
                self._param(rng, f"{prefix}.b{part}", (d,), "zeros")

        def ln(prefix: str) -> None:
            self._param(rng, f"{prefix}.gain", (d,), "ones")
            self._param(rng, f"{prefix}.shift", (d,), "zeros")

        def ff(prefix: str) -> None:
            self._param(rng, f"{prefix}.w1", (d, g.g6_ff_dim))
            self._param(rng, f"{prefix}.b1", (g.g6_ff_dim,), "zeros")
            self._param(rng, f"{prefix}.w2", (g.g6_ff_dim, d))
            self._param(rng, f"{prefix}.b2", (d,), "zeros")

        for i in range(g.g1_enc_layers):
            attn(f"enc.{i}.attn")
            ln(f"enc.{i}.ln1")
            ff(f"enc.{i}.ff")
            ln(f"enc.{i}.ln2")
            self.structure += ["self_attention", "residual_add", "layer_norm",
                               "feed_forward", "residual_add", "layer_norm"]
        for i in range(g.g2_dec_layers):
            attn(f"dec.{i}.self_attn")
            ln(f"dec.{i}.ln1")
            attn(f"dec.{i}.cross_attn")
            ln(f"dec.{i}.ln2")
            ff(f"dec.{i}.ff")
            ln(f"dec.{i}.ln3")
            self.structure += ["causal_self_attention", "residual_add", "layer_norm",
                               "cross_attention", "residual_add", "layer_norm",
                               "feed_forward", "residual_add", "layer_norm"]

        self._param(rng, "proj.weight", (d, len(p_vocab)), "head")
        self._param(rng, "proj.bias", (len(p_vocab),), "zeros")
        self.structure.append("dense_softmax")

    def _mha_params(self, prefix: str) -> dict[str, Tensor]:
        p = self.params
        return {
            "wq": p[f"{prefix}.wq"], "bq": p[f"{prefix}.bq"],
            "wk": p[f"{prefix}.wk"], "bk": p[f"{prefix}.bk"],
            "wv": p[f"{prefix}.wv"], "bv": p[f"{prefix}.bv"],
            "wo": p[f"{prefix}.wo"], "bo": p[f"{prefix}.bo"],
        }

    def _embed(self, tape, table_prefix: str, ids, rng, training) -> Tensor:
        p = self.params
        t = ids.shape[1]
        tok = ad.embedding(tape, p[f"{table_prefix}.tok_embed"], ids)
        pos = ad.embedding(tape, p[f"{table_prefix}.pos_embed"], np.arange(t))
        x = ad.add(tape, tok, pos)
        return ad.dropout(tape, x, self.genome.g5_dropout, rng, training)

    def _add_norm(self, tape, x: Tensor, sub: Tensor, ln_prefix: str,
                  rng, training) -> Tensor:
        sub = ad.dropout(tape, sub, self.genome.g5_dropout, rng, training)
        p = self.params
        return ad.layer_norm(tape, ad.add(tape, x, sub),
                             p[f"{ln_prefix}.gain"], p[f"{ln_prefix}.shift"])

    def _ff(self, tape, x: Tensor, prefix: str) -> Tensor:
        p = self.params
        h = ad.relu(tape, ad.dense(tape, x, p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
        return ad.dense(tape, h, p[f"{prefix}.w2"], p[f"{prefix}.b2"])

    def logits(self, tape, src_ids, tgt_in_ids, rng=None, training=False):
        g = self.genome
        self._check_lengths(src_ids.shape[1], tgt_in_ids.shape[1])
        if training and rng is None:
            rng = np.random.default_rng(0)

        x = self._embed(tape, "src", src_ids, rng, training)
        for i in range(g.g1_enc_layers):
            a = ad.multi_head_attention(tape, x, x, g.g4_heads,
                                        self._mha_params(f"enc.{i}.attn"))
            x = self._add_norm(tape, x, a, f"enc.{i}.ln1", rng, training)
            f = self._ff(tape, x, f"enc.{i}.ff")
            x = self._add_norm(tape, x, f, f"enc.{i}.ln2", rng, training)
        enc_out = x

        y = self._embed(tape, "tgt", tgt_in_ids, rng, training)
        for i in range(g.g2_dec_layers):
            a = ad.multi_head_attention(tape, y, y, g.g4_heads,
                                        self._mha_params(f"dec.{i}.self_attn"),
                                        causal=True)
            y = self._add_norm(tape, y, a, f"dec.{i}.ln1", rng, training)
            c = ad.multi_head_attention(tape, y, enc_out, g.g4_heads,
                                        self._mha_params(f"dec.{i}.cross_attn"))
            y = self._add_norm(tape, y, c, f"dec.{i}.ln2", rng, training)
            f = self._ff(tape, y, f"dec.{i}.ff")
            y = self._add_norm(tape, y, f, f"dec.{i}.ln3", rng, training)

        p = self.params
        return ad.dense(tape, y, p["proj.weight"], p["proj.bias"])


def build_cnn(genome: CnnGenome, g_vocab: Vocab, p_vocab: Vocab,
              max_len: int = DEFAULT_MAX_LEN, seed: int = 0) -> CnnSeq2Seq:
    if not isinstance(genome, CnnGenome):
        raise ConfigError("build_cnn needs a CnnGenome")
    return CnnSeq2Seq(genome, g_vocab, p_vocab, max_len, seed)


def build_transformer(genome: TransformerGenome, g_vocab: Vocab, p_vocab: Vocab,
                      max_len: int = DEFAULT_MAX_LEN, seed: int = 0) -> TransformerSeq2Seq:
    if not isinstance(genome, TransformerGenome):
        raise ConfigError("build_transformer needs a TransformerGenome")
    return TransformerSeq2Seq(genome, g_vocab, p_vocab, max_len, seed)


def build_model(genome: Genome, g_vocab, p_vocab,
                max_len: int = DEFAULT_MAX_LEN, seed: int = 0) -> Seq2SeqModel:
    if genome.architecture == "cnn":
        return build_cnn(genome, g_vocab, p_vocab, max_len, seed)
    return build_transformer(genome, g_vocab, p_vocab, max_len, seed)


def encode_batch(model: Seq2SeqModel,
                 word_batch: Sequence[Sequence[int]],
                 target_batch: Sequence[Sequence[int]],
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad grapheme ids and SOS/EOS-wrap phoneme ids into dense id arrays.

    The encoder side always pads to the model's fixed max_len so the
    attention key set is identical between training batches and single-word
    decoding; the decoder side pads to the batch maximum (causality makes
    trailing positions inert, and pad targets are masked out of the loss).
    """
    if len(word_batch) != len(target_batch):
        raise ConfigError("word/target batch size mismatch")
    b = len(word_batch)
    ts = max(len(w) for w in word_batch) + 1  # room for the EOS end marker
    tt = max(len(t) for t in target_batch) + 1  # room for SOS or EOS
    model._check_lengths(ts, tt)
    src = np.full((b, model.max_len), PAD_ID, dtype=np.int64)
    tgt_in = np.full((b, tt), PAD_ID, dtype=np.int64)
    tgt_out = np.full((b, tt), PAD_ID, dtype=np.int64)
    for i, (w, t) in enumerate(zip(word_batch, target_batch)):
        src[i, :len(w)] = w
        src[i, len(w)] = EOS_ID
        tgt_in[i, 0] = SOS_ID
        tgt_in[i, 1:len(t) + 1] = t
        tgt_out[i, :len(t)] = t
        tgt_out[i, len(t)] = EOS_ID
    return src, tgt_in, tgt_out


def forward_teacher_forced(model: Seq2SeqModel,
                           word_batch: Sequence[Sequence[int]],
                           target_batch: Sequence[Sequence[int]],
                           tape: Tape | None = None,
                           rng: np.random.Generator | None = None,
                           training: bool = False) -> Tensor:
    """Mean cross-entropy over non-pad target positions.

    The decoder consumes the target shifted right by one (SOS-prefixed);
    the loss is computed against the target with EOS appended.
    """
    src, tgt_in, tgt_out = encode_batch(model, word_batch, target_batch)
    logits = model.logits(tape, src, tgt_in, rng=rng, training=training)
    b, tt, n_ph = logits.shape
    flat = ad.reshape(tape, logits, (b * tt, n_ph))
    return ad.softmax_cross_entropy(tape, flat, tgt_out.reshape(-1), PAD_ID)


def encode_word(model: Seq2SeqModel, word: str) -> list[int]:
    return model.g_vocab.encode(grapheme_clusters(word))


def greedy_decode(model: Seq2SeqModel, word: str) -> list[str]:
    """Argmax autoregressive decoding; deterministic, always terminates.

    Returns phoneme tokens with all specials removed; unknown graphemes map
    to UNK on the input side.
    """
    if not word:
        raise ConfigError("cannot decode an empty word")
    src_ids = encode_word(model, word)
    model._check_lengths(len(src_ids) + 1)
    cap = 2 * len(src_ids) + 5
    cap = min(cap, model.max_len - 1)
    src = np.full((1, model.max_len), PAD_ID, dtype=np.int64)
    src[0, :len(src_ids)] = src_ids
    src[0, len(src_ids)] = EOS_ID
    out_ids: list[int] = [SOS_ID]
    for _ in range(cap):
        tgt_in = np.asarray([out_ids], dtype=np.int64)
        logits = model.logits(None, src, tgt_in)
        next_id = int(np.argmax(logits.data[0, -1]))
        if next_id == EOS_ID:
            break
        out_ids.append(next_id)
    specials = {PAD_ID, SOS_ID, EOS_ID, UNK_ID}
    return [model.p_vocab.tokens[i] for i in out_ids if i not in specials]


def param_count(model: Seq2SeqModel) -> int:
    """Exact number of trainable scalars."""
    return sum(p.size for p in model.params.values())


def param_breakdown(model: Seq2SeqModel) -> list[tuple[str, tuple[int, ...], int]]:
    """Per-tensor (name, shape, count) rows, in construction order."""
    return [(name, p.shape, p.size) for name, p in model.params.items()]


# --- checkpoint container ---

CHECKPOINT_FORMAT = "g2pstudio-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: Seq2SeqModel, path: str | Path) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": model.architecture,
        "genome": genome_to_dict(model.genome),
        "grapheme_vocab": list(model.g_vocab.tokens),
        "phoneme_vocab": list(model.p_vocab.tokens),
        "max_len": model.max_len,
        "seed": model.seed,
    }
    ad.save_container(path, header, {n: p.data for n, p in model.params.items()})


def load_checkpoint(path: str | Path) -> Seq2SeqModel:
    header, tensors = ad.load_container(path)
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a model checkpoint")
    genome = genome_from_dict(header["genome"])
    g_vocab = Vocab(tokens=tuple(header["grapheme_vocab"]))
    p_vocab = Vocab(tokens=tuple(header["phoneme_vocab"]))
    model = build_model(genome, g_vocab, p_vocab,
                        max_len=header["max_len"], seed=header.get("seed", 0))
    for name, param in model.params.items():
        if name not in tensors:
            raise ConfigError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != param.shape:
            raise ConfigError(
                f"{path}: tensor {name!r} has shape {tensors[name].shape}, "
                f"expected {param.shape}"
            )
        param.data = np.ascontiguousarray(tensors[name])
    return model
