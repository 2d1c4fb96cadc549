"""Point transformer with segmentation and articulation decoders."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint

N_ATTENTION_LAYERS = 4
FIELDS_PER_JOINT = 8  # dir(3) dist(1) pdir(3) state(1)


@dataclass
class ModelConfig:
    n: int = 1024
    d: int = 3
    d_e: int = 64
    n_links: int = 2
    n_joints: int = 1
    attention_layers: int = N_ATTENTION_LAYERS
    k_neighbors: int = 16
    hidden: tuple = (256, 128)
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if self.attention_layers != N_ATTENTION_LAYERS:
            raise ValueError("the encoder has exactly four self-attention layers")
        if self.d != 3:
            raise ValueError("only xyz input (d=3) is supported")
        if self.d_e % 4:
            raise ValueError("d_e must be divisible by 4")

    @property
    def feature_width(self):
        return N_ATTENTION_LAYERS * self.d_e

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


class Module:
    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, T.Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class Linear(Module):
    def __init__(self, d_in, d_out, rng, dtype, bias=True):
        bound = 1.0 / np.sqrt(d_in)
        self.weight = T.parameter(rng.uniform(-bound, bound, size=(d_in, d_out)), dtype)
        self.bias = T.parameter(rng.uniform(-bound, bound, size=d_out), dtype) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        return y if self.bias is None else T.add(y, self.bias)


class LayerNorm(Module):
    def __init__(self, dim, dtype, eps=1e-5):
        self.gamma = T.parameter(np.ones(dim), dtype)
        self.beta = T.parameter(np.zeros(dim), dtype)
        self.eps = eps

    def __call__(self, x):
        mu = T.mean(x, axis=-1, keepdims=True)
        xc = T.sub(x, mu)
        var = T.mean(T.mul(xc, xc), axis=-1, keepdims=True)
        return T.add(T.mul(T.div(xc, T.sqrt(T.add(var, self.eps))), self.gamma), self.beta)


def knn_indices(points, k):
    """Indices of the ``k`` nearest points (self included), shape (..., n, k)."""
    sq = (points ** 2).sum(-1)
    d2 = sq[..., :, None] + sq[..., None, :] - 2 * points @ np.swapaxes(points, -1, -2)
    idx = np.argpartition(d2, k - 1, axis=-1)[..., :k]
    return np.sort(idx, axis=-1)


class Embedding(Module):
    """Pointwise position features plus max-pooled neighbour-offset features."""

    def __init__(self, cfg, rng, dtype):
        self.k = cfg.k_neighbors
        self.point = Linear(3, cfg.d_e, rng, dtype)
        self.local1 = Linear(3, cfg.d_e, rng, dtype)
        self.local2 = Linear(cfg.d_e, cfg.d_e, rng, dtype)

    def neighbor_offsets(self, points):
        n = points.shape[-2]
        if n < self.k:
            raise ValueError(f"need at least {self.k} points for the neighbourhood embedding")
        idx = knn_indices(points, self.k)
        if points.ndim == 2:
            return points[idx] - points[:, None, :]
        batch = np.arange(points.shape[0])[:, None, None]
        return points[batch, idx] - points[:, :, None, :]

    def parts(self, points):
        """``(pointwise, neighbor)`` feature tensors for points (B, n, 3)."""
        pointwise = self.point(T.tensor(points))
        rel = T.tensor(self.neighbor_offsets(points))
        h = self.local2(T.relu(self.local1(rel)))
        return pointwise, T.max(h, axis=-2)

    def __call__(self, points):
        pointwise, neighbor = self.parts(points)
        return T.relu(T.add(pointwise, neighbor))


class OffsetAttention(Module):
    """Self-attention whose residual branch transforms ``x - attention(x)``."""

    def __init__(self, d, rng, dtype):
        self.q = Linear(d, d // 4, rng, dtype, bias=False)
        self.k = Linear(d, d // 4, rng, dtype, bias=False)
        self.v = Linear(d, d, rng, dtype)
        self.trans = Linear(d, d, rng, dtype)
        self.norm = LayerNorm(d, dtype)
        self.scale = 1.0 / np.sqrt(d // 4)
        self.last_attention = None

    def __call__(self, x):
        energy = T.mul(T.matmul(self.q(x), T.transpose(self.k(x))), self.scale)
        attn = T.softmax(energy, axis=-1)
        self.last_attention = attn.data
        y = T.matmul(attn, self.v(x))
        return T.add(x, T.relu(self.norm(self.trans(T.sub(x, y)))))


class Encoder(Module):
    def __init__(self, cfg, rng, dtype):
        self.layers = [OffsetAttention(cfg.d_e, rng, dtype) for _ in range(N_ATTENTION_LAYERS)]

    def __call__(self, x):
        outs = []
        for layer in self.layers:
            x = layer(x)
            outs.append(x)
        return T.concat(outs, axis=-1)


class Head(Module):
    """Per-point MLP that also sees max- and mean-pooled global features."""

    def __init__(self, d_in, hidden, d_out, rng, dtype):
        self.local = Linear(d_in, hidden[0], rng, dtype)
        self.gmax = Linear(d_in, hidden[0], rng, dtype, bias=False)
        self.gmean = Linear(d_in, hidden[0], rng, dtype, bias=False)
        widths = list(hidden) + [d_out]
        self.mlp = [Linear(a, b, rng, dtype) for a, b in zip(widths[:-1], widths[1:])]

    def __call__(self, F):
        g = T.add(self.gmax(T.max(F, axis=-2, keepdims=True)),
                  self.gmean(T.mean(F, axis=-2, keepdims=True)))
        h = T.relu(T.add(self.local(F), g))
        for i, layer in enumerate(self.mlp):
            h = layer(h)
            if i < len(self.mlp) - 1:
                h = T.relu(h)
        return h


@dataclass
class PerPointPrediction:
    """Per-point fields; tensors during training, arrays after :meth:`detach`.

    ``seg_logits (.., n, L)``, ``dir (.., n, J, 3)``, ``dist (.., n, J)``,
    ``pdir (.., n, J, 3)``, ``state (.., n, J)``; ``points`` are the inputs.
    """

    seg_logits: object
    dir: object
    dist: object
    pdir: object
    state: object
    points: np.ndarray = field(default=None, repr=False)

    def detach(self):
        def arr(x):
            return np.asarray(x.data if isinstance(x, T.Tensor) else x, dtype=np.float64)
        return PerPointPrediction(arr(self.seg_logits), arr(self.dir), arr(self.dist),
                                  arr(self.pdir), arr(self.state),
                                  None if self.points is None else np.asarray(self.points, np.float64))

    def labels(self):
        return np.argmax(self.detach().seg_logits, axis=-1)

    def pivots(self):
        p = self.detach()
        return p.points[..., :, None, :] + p.dist[..., None] * p.pdir

    def take(self, i):
        """Sample ``i`` of a batched, detached prediction."""
        p = self.detach()
        return PerPointPrediction(p.seg_logits[i], p.dir[i], p.dist[i], p.pdir[i], p.state[i],
                                  p.points[i])


def _unit(v):
    return T.div(v, T.l2norm(v, axis=-1, keepdims=True))


class CAPTModel(Module):
    def __init__(self, cfg):
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype)
        self.dtype = dtype
        rng = np.random.default_rng(cfg.seed)
        self.embedding = Embedding(cfg, rng, dtype)
        self.encoder = Encoder(cfg, rng, dtype)
        self.seg_head = Head(cfg.feature_width, cfg.hidden, cfg.n_links, rng, dtype)
        self.arti_head = Head(cfg.feature_width, cfg.hidden, cfg.n_joints * FIELDS_PER_JOINT, rng, dtype)

    # individual stages, batched inputs (B, n, ...)
    def embed(self, points):
        return self.embedding(np.asarray(points, dtype=self.dtype))

    def encode(self, features):
        return self.encoder(features)

    def decode_seg(self, F):
        return self.seg_head(F)

    def decode_arti(self, F, scale=1.0):
        raw = self.arti_head(F)
        lead = raw.shape[:-1]
        raw = T.reshape(raw, lead + (self.cfg.n_joints, FIELDS_PER_JOINT))
        direction = _unit(raw[..., 0:3])
        dist = T.mul(T.softplus(raw[..., 3]), scale)
        pdir = _unit(raw[..., 4:7])
        state = raw[..., 7]
        return direction, dist, pdir, state

    @staticmethod
    def normalize_points(points):
        """Centre each cloud and scale it to unit RMS radius."""
        center = points.mean(axis=-2, keepdims=True)
        centered = points - center
        scale = np.sqrt((centered ** 2).sum(-1).mean(-1))[..., None, None]
        return centered / np.maximum(scale, 1e-12), scale

    def forward(self, points):
        points = np.asarray(points, dtype=self.dtype)
        single = points.ndim == 2
        batch = points[None] if single else points
        x, scale = self.normalize_points(batch)
        F = self.encode(self.embed(x))
        logits = self.decode_seg(F)
        direction, dist, pdir, state = self.decode_arti(F, scale.astype(self.dtype))
        if single:
            logits, direction, dist, pdir, state = (T.getitem(t, 0) for t in
                                                    (logits, direction, dist, pdir, state))
        return PerPointPrediction(logits, direction, dist, pdir, state, points)

    __call__ = forward

    def predict(self, points):
        with T.no_grad():
            return self.forward(points).detach()

    def attention_maps(self):
        return [layer.last_attention for layer in self.encoder.layers]

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, params):
        own = dict(self.named_parameters())
        missing = set(own) - set(params)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for name, p in own.items():
            value = np.asarray(params[name])
            if value.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {value.shape} vs {p.data.shape}")
            p.data = value.astype(self.dtype)

    def save(self, path):
        save_checkpoint(path, self.state_dict())
        with open(str(path) + ".json", "w") as fh:
            fh.write(self.cfg.to_json() + "\n")

    @classmethod
    def load(cls, path, dtype=None):
        with open(str(path) + ".json") as fh:
            cfg = ModelConfig.from_json(fh.read())
        if dtype is not None:
            cfg.dtype = dtype
        model = cls(cfg)
        model.load_state_dict(load_checkpoint(path))
        return model
