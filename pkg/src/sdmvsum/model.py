"""The script-driven multimodal summarization network.

frames X, script Y, expanded transcripts T
  -> Z_v = WCA(X; Y), Z_t = WCA(T; Y)
  -> concat (N x 2D) -> linear 2D->D -> dropout -> layer norm
  -> post-norm Transformer encoder -> linear D->1 -> sigmoid

``use_transcript_branch=False`` drops Z_t (reduce becomes D->D) and
``use_similarity_scaling=False`` swaps the cosine weighting for the usual
``1/sqrt(D/H)`` divisor in both cross-attention blocks.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from . import wca
from .corpus_io import read_tensor, write_tensor
from .numerics import DimensionError, Graph

XAVIER_GAIN = np.sqrt(2.0)
BIAS_INIT = 0.1


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 512
    heads: int = 8
    use_transcript_branch: bool = True
    use_similarity_scaling: bool = True
    dropout_rate: float = 0.5
    scorer_layers: int = 1
    scorer_heads: int | None = None
    scorer_ffn_dim: int | None = None

    def __post_init__(self):
        if self.dim % self.heads:
            raise DimensionError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.dim % 2:
            raise DimensionError(f"dim {self.dim} must be even for the positional encoding")
        if self.dim % self.n_scorer_heads:
            raise DimensionError(
                f"dim {self.dim} is not divisible by scorer heads {self.n_scorer_heads}"
            )

    @property
    def n_scorer_heads(self):
        return self.scorer_heads or self.heads

    @property
    def ffn_dim(self):
        return self.scorer_ffn_dim or 4 * self.dim

    @classmethod
    def variant(cls, name, **kw):
        """Config for ``full``, ``no-transcript`` (Variant #1) or ``no-scaling`` (Variant #2)."""
        flags = {
            "full": {},
            "no-transcript": {"use_transcript_branch": False},
            "no-scaling": {"use_similarity_scaling": False},
        }
        if name not in flags:
            raise ValueError(f"unknown variant {name!r}; expected one of {sorted(flags)}")
        return cls(**{**kw, **flags[name]})


@dataclass
class SdMvSumParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self):
        return SdMvSumParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def wca_block(self, prefix):
        h = self.config.heads
        t = self.tensors
        return wca.WcaParams(
            [t[f"{prefix}.q{i}"] for i in range(h)],
            [t[f"{prefix}.k{i}"] for i in range(h)],
            [t[f"{prefix}.v{i}"] for i in range(h)],
            t[f"{prefix}.out"],
        )


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, int]]:
    """Every learnable tensor with its shape, in canonical (init) order."""
    d, f = config.dim, config.ffn_dim
    shapes = dict(wca.param_shapes("wca_visual", d, config.heads))
    if config.use_transcript_branch:
        shapes.update(wca.param_shapes("wca_transcript", d, config.heads))
    d_in = 2 * d if config.use_transcript_branch else d
    shapes["reduce.weight"] = (d_in, d)
    shapes["reduce.bias"] = (1, d)
    shapes["norm.gain"] = (1, d)
    shapes["norm.bias"] = (1, d)
    for layer in range(config.scorer_layers):
        p = f"scorer.{layer}"
        # no q/k/v biases: a key bias has an identically zero gradient under softmax
        shapes.update(wca.param_shapes(f"{p}.attn", d, config.n_scorer_heads))
        shapes[f"{p}.attn.out_bias"] = (1, d)
        shapes[f"{p}.norm1.gain"] = (1, d)
        shapes[f"{p}.norm1.bias"] = (1, d)
        shapes[f"{p}.ffn1.weight"] = (d, f)
        shapes[f"{p}.ffn1.bias"] = (1, f)
        shapes[f"{p}.ffn2.weight"] = (f, d)
        shapes[f"{p}.ffn2.bias"] = (1, d)
        shapes[f"{p}.norm2.gain"] = (1, d)
        shapes[f"{p}.norm2.bias"] = (1, d)
    shapes["head.weight"] = (d, 1)
    shapes["head.bias"] = (1, 1)
    return shapes


def xavier_bound(fan_in, fan_out, gain=XAVIER_GAIN):
    return gain * np.sqrt(6.0 / (fan_in + fan_out))


def init_params(config: ModelConfig, seed=0) -> SdMvSumParams:
    """Xavier-uniform weights (gain sqrt 2), biases 0.1, layer norms (1, 0)."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(config).items():
        owner, kind = name.rsplit(".", 1)
        if owner.rsplit(".", 1)[-1].startswith("norm"):
            value = np.ones(shape) if kind == "gain" else np.zeros(shape)
        elif kind.endswith("bias"):
            value = np.full(shape, BIAS_INIT)
        else:
            a = xavier_bound(*shape)
            value = rng.uniform(-a, a, size=shape)
        tensors[name] = value.astype(np.float32)
    return SdMvSumParams(config, tensors)


def count_params(params) -> int:
    tensors = params.tensors if isinstance(params, SdMvSumParams) else params
    return int(sum(np.asarray(v).size for v in tensors.values()))


def _encoder_layer(x, t, prefix, config):
    blk = wca.collect(t, f"{prefix}.attn", config.n_scorer_heads)
    d_head = config.dim // config.n_scorer_heads
    a = wca.attention(x, x, blk, scale=1.0 / np.sqrt(d_head))
    a = nx.add_broadcast(a, t[f"{prefix}.attn.out_bias"])
    h = nx.layer_norm_rows(nx.add(x, a), t[f"{prefix}.norm1.gain"], t[f"{prefix}.norm1.bias"])
    f = nx.relu(nx.add_broadcast(nx.matmul(h, t[f"{prefix}.ffn1.weight"]), t[f"{prefix}.ffn1.bias"]))
    f = nx.add_broadcast(nx.matmul(f, t[f"{prefix}.ffn2.weight"]), t[f"{prefix}.ffn2.bias"])
    return nx.layer_norm_rows(nx.add(h, f), t[f"{prefix}.norm2.gain"], t[f"{prefix}.norm2.bias"])


def check_inputs(config, frames, script, transcripts):
    frames, script = np.asarray(frames), np.asarray(script)
    if frames.ndim != 2 or frames.shape[1] != config.dim:
        raise DimensionError(f"frames {frames.shape} do not match model dim {config.dim}")
    if script.ndim != 2 or script.shape[1] != config.dim or script.shape[0] < 1:
        raise DimensionError(f"script {script.shape} does not match model dim {config.dim}")
    if config.use_transcript_branch:
        if transcripts is None:
            raise DimensionError("the transcript branch needs an expanded transcript matrix")
        if np.shape(transcripts) != frames.shape:
            raise DimensionError(
                f"expanded transcripts {np.shape(transcripts)} must match frames {frames.shape}"
            )


def forward_graph(graph: Graph, t, config: ModelConfig, frames, script, transcripts=None,
                  training=False, rng=None):
    """Build the forward pass on ``graph`` from the name -> Tensor map ``t``.

    Returns the ``N x 1`` score tensor.
    """
    check_inputs(config, frames, script, transcripts)
    n, d = np.shape(frames)
    x = graph.constant(frames)
    y = graph.constant(script)
    pe = graph.constant(wca.sinusoidal_pe(n, d))
    scaled = config.use_similarity_scaling

    z = wca.wca_forward(wca.collect(t, "wca_visual", config.heads), x, y, pe, scaled)
    if config.use_transcript_branch:
        tr = graph.constant(transcripts)
        z_t = wca.wca_forward(wca.collect(t, "wca_transcript", config.heads), tr, y, pe, scaled)
        z = nx.concat_cols(z, z_t)
    z = nx.add_broadcast(nx.matmul(z, t["reduce.weight"]), t["reduce.bias"])
    z = nx.dropout(z, config.dropout_rate, rng, training)
    z = nx.layer_norm_rows(z, t["norm.gain"], t["norm.bias"])
    for layer in range(config.scorer_layers):
        z = _encoder_layer(z, t, f"scorer.{layer}", config)
    logits = nx.add_broadcast(nx.matmul(z, t["head.weight"]), t["head.bias"])
    return nx.sigmoid(logits)


def forward(params: SdMvSumParams, frames, script, transcripts=None, training=False, rng=None,
            dtype=np.float32) -> np.ndarray:
    """Frame importance scores (length N, each in (0, 1))."""
    if training and rng is None:
        raise ValueError("training mode needs an rng for dropout")
    g = Graph(dtype)
    t = {k: g.constant(v) for k, v in params.tensors.items()}
    return forward_graph(g, t, params.config, frames, script, transcripts, training, rng).value.ravel()


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: SdMvSumParams, seed=None, epoch=None, metric=None, extra=None):
    """Directory checkpoint: ``checkpoint.json`` plus one SDMV file per tensor."""
    path = Path(path)
    (path / "params").mkdir(parents=True, exist_ok=True)
    files = {}
    for name, value in params.tensors.items():
        rel = f"params/{name}.sdmv"
        write_tensor(path / rel, value)
        files[name] = rel
    doc = {
        "format": "sdmvsum-checkpoint",
        "version": 1,
        "config": asdict(params.config),
        "seed": seed,
        "epoch": epoch,
        "metric": metric,
        "params": files,
    }
    if extra:
        doc["extra"] = extra
    (path / "checkpoint.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path):
    """Return ``(params, manifest_dict)``."""
    path = Path(path)
    manifest = path / "checkpoint.json"
    if not manifest.is_file():
        raise FileNotFoundError(f"checkpoint manifest not found: {manifest}")
    doc = json.loads(manifest.read_text())
    config = ModelConfig(**doc["config"])
    tensors = {name: read_tensor(path / rel) for name, rel in doc["params"].items()}
    expected = param_shapes(config)
    if set(tensors) != set(expected):
        raise ValueError(f"{path}: parameter names do not match the stored config")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise DimensionError(f"{path}: {name} has shape {tensors[name].shape}, expected {shape}")
    # keep canonical ordering
    return SdMvSumParams(config, {k: tensors[k] for k in expected}), doc
