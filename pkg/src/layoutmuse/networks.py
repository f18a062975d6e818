"""Encoder, generator, and the two Wasserstein critics.

All architecture dimensions live in ArchConfig; the checkpoint sidecar
records its hash so any dimension change invalidates old weights.  The
critics contain no normalization layers.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, ops
from .errors import AnchorOutOfRange, ShapeMismatch


@dataclass(frozen=True)
class ArchConfig:
    feature_dim: int = 512
    encoder_hidden: int = 256
    code_dim: int = 128
    noise_dim: int = 128
    max_anchors: int = 13
    grid: int = 32
    gen_hidden: int = 512
    gen_bottleneck_channels: int = 128
    gen_ct_channels: tuple[int, int] = (64, 32)
    disc_l_channels: tuple[int, int, int] = (32, 64, 128)
    disc_l_hidden: int = 128
    canvas: int = 128
    pyramid_stages: int = 3
    disc_c_channels: tuple[int, int, int] = (16, 32, 64)
    disc_c_hidden: int = 128
    leaky_slope: float = 0.2
    bn_momentum: float = 0.9

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        kwargs = {
            k: tuple(v) if isinstance(v, list) else v
            for k, v in d.items()
            if k in cls.__dataclass_fields__
        }
        return cls(**kwargs)


class Linear:
    def __init__(self, name, din, dout):
        self.name = name
        self.w = Tensor(np.zeros((din, dout), np.float32), requires_grad=True, name=f"{name}.w")
        self.b = Tensor(np.zeros(dout, np.float32), requires_grad=True, name=f"{name}.b")

    def __call__(self, x):
        return ops.linear(x, self.w, self.b)

    def params(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}


class Conv:
    def __init__(self, name, cin, cout, k, stride, pad):
        self.name, self.stride, self.pad = name, stride, pad
        self.w = Tensor(np.zeros((cout, cin, k, k), np.float32), requires_grad=True, name=f"{name}.w")
        self.b = Tensor(np.zeros(cout, np.float32), requires_grad=True, name=f"{name}.b")

    def __call__(self, x):
        return ops.conv2d(x, self.w, self.b, self.stride, self.pad)

    def params(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}


class ConvTranspose:
    def __init__(self, name, cin, cout, k, stride, pad):
        self.name, self.stride, self.pad = name, stride, pad
        self.w = Tensor(np.zeros((cin, cout, k, k), np.float32), requires_grad=True, name=f"{name}.w")
        self.b = Tensor(np.zeros(cout, np.float32), requires_grad=True, name=f"{name}.b")

    def __call__(self, x):
        return ops.conv_transpose2d(x, self.w, self.b, self.stride, self.pad)

    def params(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}


class BatchNorm:
    def __init__(self, name, c, momentum=0.9):
        self.name, self.momentum = name, momentum
        self.gamma = Tensor(np.ones(c, np.float32), requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(c, np.float32), requires_grad=True, name=f"{name}.beta")
        self.running_mean = np.zeros(c, np.float32)
        self.running_var = np.ones(c, np.float32)

    def __call__(self, x, training):
        return ops.batchnorm(
            x, self.gamma, self.beta, self.running_mean, self.running_var, training, self.momentum
        )

    def params(self):
        return {f"{self.name}.gamma": self.gamma, f"{self.name}.beta": self.beta}

    def buffers(self):
        return {
            f"{self.name}.running_mean": self.running_mean,
            f"{self.name}.running_var": self.running_var,
        }


class _Net:
    """Parameter/bookkeeping base for the four networks."""

    def __init__(self):
        self._modules = []

    def _reg(self, module):
        self._modules.append(module)
        return module

    def params(self) -> dict[str, Tensor]:
        out = {}
        for m in self._modules:
            out.update(m.params())
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for m in self._modules:
            if hasattr(m, "buffers"):
                out.update(m.buffers())
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.params().items():
            p.data = np.asarray(state[name], dtype=np.float32).reshape(p.shape)
        for name, buf in self.buffers().items():
            buf[...] = np.asarray(state[name], dtype=np.float32).reshape(buf.shape)

    def state(self) -> dict[str, np.ndarray]:
        out = {name: p.data.copy() for name, p in self.params().items()}
        out.update({name: b.copy() for name, b in self.buffers().items()})
        return out

    def has_normalization(self) -> bool:
        return any(isinstance(m, BatchNorm) for m in self._modules)


class Encoder(_Net):
    """512 -> 256 -> 128 -> 128 linear stack with Leaky ReLU between layers."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        self.l1 = self._reg(Linear("enc.l1", cfg.feature_dim, cfg.encoder_hidden))
        self.l2 = self._reg(Linear("enc.l2", cfg.encoder_hidden, cfg.code_dim))
        self.l3 = self._reg(Linear("enc.l3", cfg.code_dim, cfg.code_dim))

    def forward(self, f: Tensor) -> Tensor:
        if f.data.ndim != 2 or f.shape[1] != self.cfg.feature_dim:
            raise ShapeMismatch(f"encoder input {f.shape}")
        s = self.cfg.leaky_slope
        h = ad.leaky_relu(self.l1(f), s)
        h = ad.leaky_relu(self.l2(h), s)
        return self.l3(h)


class Generator(_Net):
    """z' = [f', z] -> linear stages -> 8x8 bottleneck (+ anchor-count
    one-hot channels) -> two stride-2 transposed convs -> tanh -> [0,1]."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        zin = cfg.code_dim + cfg.noise_dim
        c = cfg.gen_bottleneck_channels
        c1, c2 = cfg.gen_ct_channels
        self.l1 = self._reg(Linear("gen.l1", zin, cfg.gen_hidden))
        self.bn1 = self._reg(BatchNorm("gen.bn1", cfg.gen_hidden, cfg.bn_momentum))
        self.l2 = self._reg(Linear("gen.l2", cfg.gen_hidden, c * 8 * 8))
        self.bn2 = self._reg(BatchNorm("gen.bn2", c * 8 * 8, cfg.bn_momentum))
        self.ct1 = self._reg(ConvTranspose("gen.ct1", c + cfg.max_anchors, c1, 4, 2, 1))
        self.bn3 = self._reg(BatchNorm("gen.bn3", c1, cfg.bn_momentum))
        self.ct2 = self._reg(ConvTranspose("gen.ct2", c1, c2, 4, 2, 1))
        self.bn4 = self._reg(BatchNorm("gen.bn4", c2, cfg.bn_momentum))
        self.ct3 = self._reg(ConvTranspose("gen.ct3", c2, 1, 3, 1, 1))

    def forward(self, fprime: Tensor, z: Tensor, n_anchors, training: bool = False) -> Tensor:
        cfg = self.cfg
        n_anchors = np.atleast_1d(np.asarray(n_anchors, dtype=np.int64))
        if np.any(n_anchors < 1) or np.any(n_anchors > cfg.max_anchors):
            raise AnchorOutOfRange(f"anchor counts {n_anchors}")
        b = fprime.shape[0]
        s = cfg.leaky_slope
        h = ad.concat([fprime, z], axis=1)
        h = ad.leaky_relu(self.bn1(self.l1(h), training), s)
        h = ad.leaky_relu(self.bn2(self.l2(h), training), s)
        h = ad.reshape(h, (b, cfg.gen_bottleneck_channels, 8, 8))
        onehot = np.zeros((b, cfg.max_anchors, 8, 8), dtype=h.data.dtype)
        onehot[np.arange(b), n_anchors - 1] = 1.0
        h = ad.concat([h, Tensor(onehot)], axis=1)
        h = ad.leaky_relu(self.bn3(self.ct1(h), training), s)
        h = ad.leaky_relu(self.bn4(self.ct2(h), training), s)
        out = ad.tanh(self.ct3(h))
        return ad.mul(ad.add(out, 1.0), 0.5)  # map tanh range into [0,1]


class DiscriminatorL(_Net):
    """Wireframe critic: three 4x4 stride-2 convs, then Linear-LReLU-Linear."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        c1, c2, c3 = cfg.disc_l_channels
        self.c1 = self._reg(Conv("dl.c1", 1, c1, 4, 2, 1))
        self.c2 = self._reg(Conv("dl.c2", c1, c2, 4, 2, 1))
        self.c3 = self._reg(Conv("dl.c3", c2, c3, 4, 2, 1))
        side = cfg.grid // 8
        self.l1 = self._reg(Linear("dl.l1", c3 * side * side, cfg.disc_l_hidden))
        self.l2 = self._reg(Linear("dl.l2", cfg.disc_l_hidden, 1))

    def forward(self, grid: Tensor) -> Tensor:
        cfg = self.cfg
        if grid.data.ndim != 4 or grid.shape[1:] != (1, cfg.grid, cfg.grid):
            raise ShapeMismatch(f"disc_l input {grid.shape}")
        s = cfg.leaky_slope
        h = ad.leaky_relu(self.c1(grid), s)
        h = ad.leaky_relu(self.c2(h), s)
        h = ad.leaky_relu(self.c3(h), s)
        h = ad.reshape(h, (grid.shape[0], -1))
        h = ad.leaky_relu(self.l1(h), s)
        return ad.reshape(self.l2(h), (grid.shape[0],))


binomial_downsample = ops.binomial_downsample


class DiscriminatorC(_Net):
    """Composite-image critic with a parallel fixed blur-pyramid track.

    Each learned stage consumes the channel-concat of the previous learned
    activations and the fixed pyramid level, so gradients reach the input
    image through both tracks.
    """

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        c1, c2, c3 = cfg.disc_c_channels
        self.c1 = self._reg(Conv("dc.c1", 3, c1, 4, 2, 1))
        self.c2 = self._reg(Conv("dc.c2", c1 + 3, c2, 4, 2, 1))
        self.c3 = self._reg(Conv("dc.c3", c2 + 3, c3, 4, 2, 1))
        side = cfg.canvas // 2**cfg.pyramid_stages
        self.l1 = self._reg(Linear("dc.l1", (c3 + 3) * side * side, cfg.disc_c_hidden))
        self.l2 = self._reg(Linear("dc.l2", cfg.disc_c_hidden, 1))

    def forward(self, image: Tensor) -> Tensor:
        cfg = self.cfg
        if image.data.ndim != 4 or image.shape[1:] != (3, cfg.canvas, cfg.canvas):
            raise ShapeMismatch(f"disc_c input {image.shape}")
        s = cfg.leaky_slope
        fk = binomial_downsample(image)
        fd = ad.leaky_relu(self.c1(image), s)
        fd = ad.leaky_relu(self.c2(ad.concat([fk, fd], axis=1)), s)
        fk = binomial_downsample(fk)
        fd = ad.leaky_relu(self.c3(ad.concat([fk, fd], axis=1)), s)
        fk = binomial_downsample(fk)
        h = ad.reshape(ad.concat([fk, fd], axis=1), (image.shape[0], -1))
        h = ad.leaky_relu(self.l1(h), s)
        return ad.reshape(self.l2(h), (image.shape[0],))


def init_weights(net: _Net, seed: int, std: float = 0.02) -> None:
    """N(0, std^2) weights, zero biases, deterministic per seed.

    BatchNorm scales are centered at 1 (N(1, std^2)) so activations are not
    zeroed at the start of training; shifts start at 0.
    """
    rng = np.random.default_rng(seed)
    for name in sorted(net.params()):
        p = net.params()[name]
        if name.endswith(".gamma"):
            p.data = (1.0 + rng.normal(0.0, std, size=p.shape)).astype(np.float32)
        elif name.endswith((".b", ".beta")):
            p.data = np.zeros(p.shape, np.float32)
        else:
            p.data = rng.normal(0.0, std, size=p.shape).astype(np.float32)


def build_all(cfg: ArchConfig, seed: int = 0):
    """Construct and initialize E, G, D_L, D_C with per-network seeds."""
    enc, gen = Encoder(cfg), Generator(cfg)
    dl, dc = DiscriminatorL(cfg), DiscriminatorC(cfg)
    for i, net in enumerate((enc, gen, dl, dc)):
        init_weights(net, seed * 4 + i)
    return enc, gen, dl, dc
