"""Multi-head graph attention with manual reverse-mode gradients.

Everything is plain numpy in float64. The batched core stacks documents
(leading B axis) and graphs (M axis) so the same code drives both the
single-graph and the averaged multi-graph model, with projections
flattened into single GEMMs. Heads project with per-head matrices,
attention logits are LeakyReLU(a^T [z_i || z_j]) restricted to the
adjacency, rows are softmax-normalised, and head outputs are
concatenated feature-wise. Multi-graph outputs are averaged elementwise.
The classifier is a single affine map per token.

Gradients are exact; the only subgradient choice is LeakyReLU at 0,
where the negative-side slope is used.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, ContractError, FormatError, ParameterError
from .features import FeatureMatrix
from .graphs import AdjacencyMatrix, GraphBundle

CKPT_MAGIC = b"LGCK"
CKPT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 5e-5
    batch_size: int = 8
    epochs: int = 50
    heads: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0
    leaky_slope: float = 0.2
    num_layers: int = 1
    dropout: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if self.heads < 1:
            raise ParameterError(f"heads must be >= 1, got {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class GatParams:
    """One GAT: per-head projections (H, d_in, d_head) and attention
    vectors (H, 2*d_head)."""

    w: np.ndarray
    a: np.ndarray
    leaky_slope: float = 0.2

    @property
    def heads(self) -> int:
        return self.w.shape[0]

    @property
    def d_in(self) -> int:
        return self.w.shape[1]

    @property
    def d_out(self) -> int:
        return self.w.shape[0] * self.w.shape[2]


@dataclass
class MultiGatParams:
    """M independent GATs with shared shapes: w (M, H, d_in, d_head),
    a (M, H, 2*d_head)."""

    w: np.ndarray
    a: np.ndarray
    leaky_slope: float = 0.2

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def gats(self) -> list[GatParams]:
        return [GatParams(self.w[i], self.a[i], self.leaky_slope) for i in range(self.m)]

    @classmethod
    def stack(cls, gats: list[GatParams]) -> MultiGatParams:
        return cls(
            np.stack([g.w for g in gats]),
            np.stack([g.a for g in gats]),
            gats[0].leaky_slope,
        )


@dataclass
class ClassifierParams:
    weight: np.ndarray  # (d, num_tags)
    bias: np.ndarray  # (num_tags,)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_multi_gat(
    rng: np.random.Generator, m: int, heads: int, d_in: int, leaky_slope: float
) -> MultiGatParams:
    """Xavier-uniform projections, zero attention vectors."""
    if d_in % heads != 0:
        raise ParameterError(f"heads ({heads}) must divide feature dim ({d_in})")
    d_head = d_in // heads
    w = _xavier(rng, d_in, d_head, (m, heads, d_in, d_head))
    a = np.zeros((m, heads, 2 * d_head))
    return MultiGatParams(w, a, leaky_slope)


def _check_adjacency(adj: np.ndarray) -> None:
    if not adj.any(axis=-1).all():
        raise ContractError("node with empty neighborhood; add self-loops first")


def _gat_forward_core(x, adj, w, a, slope):
    """x (B,n,d), adj (B,M,n,n) bool, w (M,H,d,dh), a (M,H,2dh).
    Returns (hp, cache): hp (B,n,H*dh) is the mean over M of the
    per-graph concatenated head outputs. Projections run as one GEMM
    over a flattened (M*H) axis; attention stays batched."""
    _check_adjacency(adj)
    b, n, d = x.shape
    m, heads, _, d_head = w.shape
    a_src, a_dst = a[..., :d_head], a[..., d_head:]
    w_flat = w.transpose(2, 0, 1, 3).reshape(d, m * heads * d_head)
    z = (x.reshape(b * n, d) @ w_flat).reshape(b, n, m, heads, d_head)
    z = np.ascontiguousarray(z.transpose(0, 2, 3, 1, 4))  # (B,M,H,n,dh)
    s = (z * a_src[None, :, :, None, :]).sum(axis=-1)
    t = (z * a_dst[None, :, :, None, :]).sum(axis=-1)
    e_raw = s[..., :, None] + t[..., None, :]
    e_act = np.maximum(e_raw, slope * e_raw)  # LeakyReLU, slope < 1
    mask = adj[:, :, None, :, :]
    # Row max over all entries is a safe upper bound for the masked max.
    e_max = e_act.max(axis=-1, keepdims=True)
    ex = np.exp(e_act - e_max)
    ex *= mask
    denom = ex.sum(axis=-1, keepdims=True)
    alpha = ex / denom
    out_heads = alpha @ z  # (B,M,H,n,dh)
    out = out_heads.transpose(0, 1, 3, 2, 4).reshape(b, m, n, heads * d_head)
    hp = out.mean(axis=1)
    cache = (x, adj, w, a, slope, z, e_raw, alpha)
    return hp, cache


def _gat_backward_core(g_hp, cache):
    """Gradient of a scalar loss wrt inputs and parameters given
    g_hp = dL/d hp (B,n,H*dh). Returns (dx, dw, da)."""
    x, adj, w, a, slope, z, e_raw, alpha = cache
    b, m, heads, n, d_head = z.shape
    d = x.shape[-1]
    a_src, a_dst = a[..., :d_head], a[..., d_head:]
    gh = np.broadcast_to(g_hp[:, None], (b, m, n, heads * d_head))
    gh = gh.reshape(b, m, n, heads, d_head).transpose(0, 1, 3, 2, 4) / m
    d_alpha = gh @ z.swapaxes(-1, -2)
    dz = alpha.swapaxes(-1, -2) @ gh
    row_dot = (d_alpha * alpha).sum(axis=-1, keepdims=True)
    d_e = alpha * (d_alpha - row_dot)
    d_e_raw = d_e * np.where(e_raw > 0, 1.0, slope)
    ds = d_e_raw.sum(axis=-1)
    dt = d_e_raw.sum(axis=-2)
    dz = dz + ds[..., None] * a_src[None, :, :, None, :]
    dz += dt[..., None] * a_dst[None, :, :, None, :]
    da_src = (ds[..., None] * z).sum(axis=(0, 3))
    da_dst = (dt[..., None] * z).sum(axis=(0, 3))
    da = np.concatenate([da_src, da_dst], axis=-1)
    w_flat = w.transpose(2, 0, 1, 3).reshape(d, m * heads * d_head)
    dz_flat = np.ascontiguousarray(dz.transpose(0, 3, 1, 2, 4)).reshape(b * n, m * heads * d_head)
    dw = (x.reshape(b * n, d).T @ dz_flat).reshape(d, m, heads, d_head).transpose(1, 2, 0, 3)
    dx = (dz_flat @ w_flat.T).reshape(b, n, d)
    return dx, dw, da


def _stack_adjacency(matrices) -> np.ndarray:
    return np.stack([m.edges for m in matrices])


def gat_forward(
    h: FeatureMatrix, a: AdjacencyMatrix, p: GatParams, return_attention: bool = False
):
    """Single-graph forward pass; ``a`` must already carry self-loops."""
    if a.n != h.n:
        raise AlignmentError(f"adjacency n={a.n} vs features n={h.n}")
    x = h.values[None]
    adj = a.edges[None, None]
    hp, cache = _gat_forward_core(x, adj, p.w[None], p.a[None], p.leaky_slope)
    out = FeatureMatrix(h.n, p.d_out, hp[0].copy())
    if return_attention:
        return out, cache[7][0, 0]  # (H, n, n)
    return out


def multi_gat_forward(h: FeatureMatrix, bundle: GraphBundle, p: MultiGatParams) -> FeatureMatrix:
    """Mean of the per-graph GAT outputs, one parameter set per graph."""
    if bundle.m != p.m:
        raise AlignmentError(f"bundle has {bundle.m} graphs, params expect {p.m}")
    for mat in bundle.matrices:
        if mat.n != h.n:
            raise AlignmentError(f"adjacency n={mat.n} vs features n={h.n}")
    x = h.values[None]
    adj = _stack_adjacency(bundle.matrices)[None]
    hp, _ = _gat_forward_core(x, adj, p.w, p.a, p.leaky_slope)
    d_out = p.w.shape[1] * p.w.shape[3]
    return FeatureMatrix(h.n, d_out, hp[0].copy())


def classify(hp: FeatureMatrix | np.ndarray, c: ClassifierParams) -> np.ndarray:
    values = hp.values if isinstance(hp, FeatureMatrix) else hp
    return values @ c.weight + c.bias


def cross_entropy(logits: np.ndarray, gold: np.ndarray):
    """Mean token-level negative log-likelihood and its logit gradient."""
    n, t = logits.shape
    if gold.shape != (n,):
        raise AlignmentError(f"gold shape {gold.shape} vs logits {logits.shape}")
    if n == 0:
        return 0.0, np.zeros_like(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = -log_probs[np.arange(n), gold].mean()
    grad = np.exp(log_probs)
    grad[np.arange(n), gold] -= 1.0
    grad /= n
    return float(loss), grad


class SequenceTagger:
    """Variant-aware token tagger: features -> (GAT layers) -> classifier.

    ``vanilla`` feeds features straight to the classifier; the graph
    variants run ``num_layers`` rounds of (multi-)graph attention first.
    Feature dim is preserved through layers (d_head = d_in / heads).
    """

    def __init__(self, variant: str, d_in: int, num_tags: int, m_graphs: int, cfg: TrainConfig):
        if variant not in ("vanilla", "lager_nearest", "lager_angles"):
            raise ParameterError(f"unknown variant {variant!r}")
        self.variant = variant
        self.d_in = d_in
        self.num_tags = num_tags
        self.m_graphs = 0 if variant == "vanilla" else m_graphs
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.layers: list[MultiGatParams] = []
        if variant != "vanilla":
            for _ in range(cfg.num_layers):
                self.layers.append(
                    init_multi_gat(rng, m_graphs, cfg.heads, d_in, cfg.leaky_slope)
                )
        self.clf = ClassifierParams(
            _xavier(rng, d_in, num_tags, (d_in, num_tags)), np.zeros(num_tags)
        )

    @property
    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            out[f"layer{i}.w"] = layer.w
            out[f"layer{i}.a"] = layer.a
        out["clf.weight"] = self.clf.weight
        out["clf.bias"] = self.clf.bias
        return out

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        for i, layer in enumerate(self.layers):
            layer.w = values[f"layer{i}.w"]
            layer.a = values[f"layer{i}.a"]
        self.clf.weight = values["clf.weight"]
        self.clf.bias = values["clf.bias"]

    def forward_batch(self, x: np.ndarray, adj: np.ndarray | None, dropout_rng=None):
        """x (B,n,d), adj (B,M,n,n) or None for vanilla. Returns logits
        (B,n,T) and the caches needed for the backward pass."""
        caches = []
        drop_masks = []
        h = x
        for layer in self.layers:
            h, cache = _gat_forward_core(h, adj, layer.w, layer.a, layer.leaky_slope)
            caches.append(cache)
            if dropout_rng is not None and self.cfg.dropout > 0.0:
                keep = 1.0 - self.cfg.dropout
                mask = (dropout_rng.random(h.shape) < keep) / keep
                h = h * mask
                drop_masks.append(mask)
            else:
                drop_masks.append(None)
        logits = h @ self.clf.weight + self.clf.bias
        return logits, (x, h, caches, drop_masks)

    def loss_and_gradients(self, x: np.ndarray, adj: np.ndarray | None, gold: np.ndarray,
                           dropout_rng=None):
        """Mean cross-entropy over all tokens in the batch plus exact
        gradients for every parameter."""
        logits, (x0, h_final, caches, drop_masks) = self.forward_batch(x, adj, dropout_rng)
        b, n, t = logits.shape
        loss, d_flat = cross_entropy(logits.reshape(b * n, t), gold.reshape(b * n))
        d_logits = d_flat.reshape(b, n, t)
        grads: dict[str, np.ndarray] = {
            "clf.weight": np.einsum("bnd,bnt->dt", h_final, d_logits, optimize=True),
            "clf.bias": d_logits.sum(axis=(0, 1)),
        }
        dh = np.einsum("bnt,dt->bnd", d_logits, self.clf.weight, optimize=True)
        for i in range(len(self.layers) - 1, -1, -1):
            if drop_masks[i] is not None:
                dh = dh * drop_masks[i]
            dh, dw, da = _gat_backward_core(dh, caches[i])
            grads[f"layer{i}.w"] = dw
            grads[f"layer{i}.a"] = da
        return loss, grads

    def predict(self, x: np.ndarray, adj: np.ndarray | None) -> np.ndarray:
        logits, _ = self.forward_batch(x, adj)
        return logits.argmax(axis=-1)


@dataclass
class AdamWState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> AdamWState:
        return cls(
            0,
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    cfg: TrainConfig,
) -> dict[str, np.ndarray]:
    """One decoupled-weight-decay Adam update, in place on the params."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p -= cfg.lr * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p)
    return params


def save_checkpoint(path, tagger: SequenceTagger, opt_state: AdamWState | None = None,
                    extra_config: dict | None = None) -> None:
    """Versioned binary checkpoint; see README for the exact layout."""
    tensors = dict(tagger.params)
    if opt_state is not None:
        for name in tagger.params:
            tensors[f"opt.m.{name}"] = opt_state.m[name]
            tensors[f"opt.v.{name}"] = opt_state.v[name]
    header = {
        "model": {
            "variant": tagger.variant,
            "d_in": tagger.d_in,
            "num_tags": tagger.num_tags,
            "m_graphs": tagger.m_graphs,
            "heads": tagger.cfg.heads,
            "num_layers": tagger.cfg.num_layers,
            "leaky_slope": tagger.cfg.leaky_slope,
            "dropout": tagger.cfg.dropout,
            "seed": tagger.cfg.seed,
        },
        "opt_step": None if opt_state is None else opt_state.step,
        "extra": extra_config or {},
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        for _, tensor in tensors.items():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (tagger, opt_state-or-None, extra config dict)."""
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    offset = 12 + header_len
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[entry["name"]] = arr.copy()
        offset += count * 8
    if offset != len(blob):
        raise FormatError(f"{path}: trailing bytes in checkpoint")
    spec = header["model"]
    cfg = TrainConfig(
        heads=spec["heads"],
        num_layers=spec["num_layers"],
        leaky_slope=spec["leaky_slope"],
        dropout=spec["dropout"],
        seed=spec["seed"],
    )
    tagger = SequenceTagger(spec["variant"], spec["d_in"], spec["num_tags"], spec["m_graphs"], cfg)
    tagger.set_params({k: v for k, v in tensors.items() if not k.startswith("opt.")})
    opt_state = None
    if header["opt_step"] is not None:
        opt_state = AdamWState(
            header["opt_step"],
            {k: tensors[f"opt.m.{k}"] for k in tagger.params},
            {k: tensors[f"opt.v.{k}"] for k in tagger.params},
        )
    return tagger, opt_state, header.get("extra", {})
