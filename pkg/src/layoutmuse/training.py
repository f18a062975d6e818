"""Joint WGAN-GP training of encoder, generator, and the two critics.

Losses:
  L_G    = -l1 * E[D_L(Lg)] - l2 * E[D_C(Cg)]
  L_DL   =  l3 * (E[D_L(Lg)] - E[D_L(Lr)] + gp_weight * GP_L)
  L_DC   =  l4 * (E[D_C(Cg)] - E[D_C(Cr)] + gp_weight * GP_C)
with GP the mean squared deviation of the interpolate gradient norm from 1,
built through a differentiable gradient so it trains the critics.

Every step logs its loss components to JSON-lines; the logged totals are
recomputable from the components (tested as an invariant).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import autodiff as ad
from . import compositor, features, imaging, layout_codec
from .autodiff import Tensor, checkpoint as ckpt_io
from .compositor import Sprite, SpriteSet
from .errors import EmptyCorpus, ShapeMismatch
from .graph_analysis import read_manifest
from .networks import ArchConfig, build_all

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epochs: int = 400
    batch: int = 16
    gp_weight: float = 10.0  # lambda
    l1: float = 0.2
    l2: float = 0.2
    l3: float = 0.2
    l4: float = 0.2
    critic_ratio: int = 1
    seed: int = 0
    checkpoint_every: int = 25
    arch: ArchConfig = field(default_factory=ArchConfig)

    def __post_init__(self):
        if self.critic_ratio < 1:
            raise ValueError("critic_ratio must be >= 1")


@dataclass(frozen=True)
class TrainingItem:
    """One drawing prepared for training."""

    id: str
    features: np.ndarray  # (512,) summed region descriptors
    n: int
    grid: np.ndarray  # (32, 32) ground-truth wireframe
    sprites: tuple[Sprite, ...]
    background: tuple[float, float, float]

    def sprite_set(self, canvas: int) -> SpriteSet:
        return SpriteSet(self.sprites, (canvas, canvas), self.background)


class Adam:
    def __init__(self, params: dict[str, Tensor], lr, beta1, beta2, eps=1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self):
        self.t += 1
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.data.astype(p.data.dtype)
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1**self.t)
            vhat = self.v[k] / (1 - self.b2**self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}.t": np.array([self.t], dtype=np.float32)}
        for k in self.params:
            out[f"{prefix}.m.{k}"] = self.m[k]
            out[f"{prefix}.v.{k}"] = self.v[k]
        return out

    def load_state(self, state: dict[str, np.ndarray], prefix: str) -> None:
        self.t = int(state[f"{prefix}.t"][0])
        for k in self.params:
            self.m[k] = np.asarray(state[f"{prefix}.m.{k}"]).reshape(self.m[k].shape).copy()
            self.v[k] = np.asarray(state[f"{prefix}.v.{k}"]).reshape(self.v[k].shape).copy()


def gradient_penalty(d_forward, real: Tensor, fake: Tensor, rng: np.random.Generator) -> Tensor:
    """Mean over the batch of (||grad_x D(x_hat)||_2 - 1)^2 at random
    interpolates x_hat between real and fake, differentiable w.r.t. D."""
    if real.shape != fake.shape:
        raise ShapeMismatch(f"{real.shape} vs {fake.shape}")
    b = real.shape[0]
    eps_shape = (b,) + (1,) * (real.data.ndim - 1)
    eps = rng.uniform(size=eps_shape).astype(real.data.dtype)
    x_hat = Tensor(eps * real.data + (1 - eps) * fake.data, requires_grad=True)
    score = ad.tsum(d_forward(x_hat))
    g = ad.grad_graph(score, x_hat)
    flat = ad.reshape(g, (b, -1))
    norms = ad.l2_norm(flat, axis=1, eps=1e-12)
    dev = ad.add(norms, -1.0)
    return ad.tmean(ad.mul(dev, dev))


class Trainer:
    def __init__(self, items: list[TrainingItem], cfg: TrainConfig):
        if not items:
            raise EmptyCorpus("no training items")
        self.items = items
        self.cfg = cfg
        self.enc, self.gen, self.dl, self.dc = build_all(cfg.arch, seed=cfg.seed)
        self.rng = np.random.default_rng(cfg.seed + 1)
        self.opt_g = Adam(
            {**self.enc.params(), **self.gen.params()}, cfg.lr, cfg.beta1, cfg.beta2
        )
        self.opt_dl = Adam(self.dl.params(), cfg.lr, cfg.beta1, cfg.beta2)
        self.opt_dc = Adam(self.dc.params(), cfg.lr, cfg.beta1, cfg.beta2)
        self.epoch = 0
        self.step_log: list[dict] = []

    # ---- batch assembly -------------------------------------------------

    def _batch_tensors(self, batch: list[TrainingItem]):
        f = Tensor(np.stack([it.features for it in batch]).astype(np.float32))
        n = np.array([it.n for it in batch])
        real_l = Tensor(np.stack([it.grid for it in batch])[:, None, :, :].astype(np.float32))
        return f, n, real_l

    def _composites(self, batch, grids: np.ndarray) -> Tensor:
        """Stack non-differentiable composites for critic input."""
        canvas = self.cfg.arch.canvas
        imgs = []
        with ad.no_grad():
            for item, grid in zip(batch, grids):
                out, _ = compositor.soft_composite_t(
                    item.sprite_set(canvas), Tensor(grid.astype(np.float32)), item.n
                )
                imgs.append(np.transpose(out.data, (2, 0, 1)))
        return Tensor(np.stack(imgs))

    def _composites_diff(self, batch, grid_batch: Tensor) -> Tensor:
        """Differentiable composites from a generated grid batch (b,1,32,32)."""
        canvas = self.cfg.arch.canvas
        imgs = []
        for i, item in enumerate(batch):
            g2d = ad.reshape(ad.slice_axis(grid_batch, 0, i, i + 1), (32, 32))
            out, _ = compositor.soft_composite_t(item.sprite_set(canvas), g2d, item.n)
            imgs.append(ad.reshape(ad.permute(out, (2, 0, 1)), (1, 3, canvas, canvas)))
        return ad.concat(imgs, axis=0)

    def _generate(self, f: Tensor, n: np.ndarray, training=True) -> Tensor:
        z = Tensor(self.rng.standard_normal((f.shape[0], self.cfg.arch.noise_dim)).astype(np.float32))
        fp = self.enc.forward(f)
        return self.gen.forward(fp, z, n, training=training)

    # ---- steps ----------------------------------------------------------

    def d_step(self, batch: list[TrainingItem]) -> dict:
        cfg = self.cfg
        f, n, real_l = self._batch_tensors(batch)
        with ad.no_grad():
            fake_l = self._generate(f, n, training=True)
        fake_l = fake_l.detach()

        # wireframe critic
        e_fake_l = ad.tmean(self.dl.forward(fake_l))
        e_real_l = ad.tmean(self.dl.forward(real_l))
        gp_l = gradient_penalty(self.dl.forward, real_l, fake_l, self.rng)
        loss_dl = ad.mul(cfg.l3, ad.add(ad.add(e_fake_l, ad.neg(e_real_l)), ad.mul(cfg.gp_weight, gp_l)))
        ad.zero_grads(self.dl.params().values())
        ad.backward(loss_dl)
        if cfg.l3 != 0:
            self.opt_dl.step()

        # composite critic
        real_c = self._composites(batch, np.stack([it.grid for it in batch]))
        fake_c = self._composites(batch, fake_l.data[:, 0])
        e_fake_c = ad.tmean(self.dc.forward(fake_c))
        e_real_c = ad.tmean(self.dc.forward(real_c))
        gp_c = gradient_penalty(self.dc.forward, real_c, fake_c, self.rng)
        loss_dc = ad.mul(cfg.l4, ad.add(ad.add(e_fake_c, ad.neg(e_real_c)), ad.mul(cfg.gp_weight, gp_c)))
        ad.zero_grads(self.dc.params().values())
        ad.backward(loss_dc)
        if cfg.l4 != 0:
            self.opt_dc.step()

        return {
            "L_DL": loss_dl.item(),
            "L_DC": loss_dc.item(),
            "E_DL_fake": e_fake_l.item(),
            "E_DL_real": e_real_l.item(),
            "E_DC_fake": e_fake_c.item(),
            "E_DC_real": e_real_c.item(),
            "GP_L": gp_l.item(),
            "GP_C": gp_c.item(),
        }

    def g_step(self, batch: list[TrainingItem]) -> dict:
        cfg = self.cfg
        f, n, _ = self._batch_tensors(batch)
        fake_l = self._generate(f, n, training=True)
        e_fake_l = ad.tmean(self.dl.forward(fake_l))
        fake_c = self._composites_diff(batch, fake_l)
        e_fake_c = ad.tmean(self.dc.forward(fake_c))
        loss_g = ad.add(ad.mul(-cfg.l1, e_fake_l), ad.mul(-cfg.l2, e_fake_c))
        gen_params = {**self.enc.params(), **self.gen.params()}
        ad.zero_grads(gen_params.values())
        ad.backward(loss_g)
        if cfg.l1 != 0 or cfg.l2 != 0:
            self.opt_g.step()
        return {
            "L_G": loss_g.item(),
            "E_DL_gen": e_fake_l.item(),
            "E_DC_gen": e_fake_c.item(),
        }

    # ---- loop -----------------------------------------------------------

    def train(self, out_dir=None, log_file=None) -> None:
        cfg = self.cfg
        out_dir = Path(out_dir) if out_dir else None
        if out_dir:
            out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(log_file, "a") if log_file else None
        step = 0
        try:
            for epoch in range(self.epoch, cfg.epochs):
                order = self.rng.permutation(len(self.items))
                for start in range(0, len(order), cfg.batch):
                    batch = [self.items[i] for i in order[start : start + cfg.batch]]
                    for _ in range(cfg.critic_ratio):
                        d_losses = self.d_step(batch)
                        step += 1
                        rec = {"epoch": epoch, "step": step, "kind": "d", **d_losses}
                        self.step_log.append(rec)
                        if log_fh:
                            log_fh.write(json.dumps(rec) + "\n")
                    g_losses = self.g_step(batch)
                    step += 1
                    rec = {"epoch": epoch, "step": step, "kind": "g", **g_losses}
                    self.step_log.append(rec)
                    if log_fh:
                        log_fh.write(json.dumps(rec) + "\n")
                self.epoch = epoch + 1
                if out_dir and (self.epoch % cfg.checkpoint_every == 0 or self.epoch == cfg.epochs):
                    self.save(out_dir / f"epoch_{self.epoch:04d}.ckpt")
                    self.save_generator(out_dir / "generator.ckpt")
        finally:
            if log_fh:
                log_fh.close()

    # ---- checkpoints ----------------------------------------------------

    def _full_state(self) -> dict[str, np.ndarray]:
        state = {}
        for prefix, net in (("enc", self.enc), ("gen", self.gen), ("dl", self.dl), ("dc", self.dc)):
            for k, v in net.state().items():
                state[k] = v
        state.update(self.opt_g.state("opt_g"))
        state.update(self.opt_dl.state("opt_dl"))
        state.update(self.opt_dc.state("opt_dc"))
        state["epoch"] = np.array([self.epoch], dtype=np.float32)
        return state

    def save(self, path) -> None:
        ckpt_io.save(
            path,
            self._full_state(),
            config_hash=self.cfg.arch.hash(),
            extra={"train_config": asdict(self.cfg)},
        )

    def save_generator(self, path) -> None:
        state = {**self.enc.state(), **self.gen.state()}
        ckpt_io.save(
            path, state, config_hash=self.cfg.arch.hash(), extra={"arch": asdict(self.cfg.arch)}
        )

    def load(self, path) -> None:
        state, sidecar = ckpt_io.load(path)
        if sidecar.get("config_hash") and sidecar["config_hash"] != self.cfg.arch.hash():
            raise ShapeMismatch("checkpoint architecture hash does not match config")
        for net in (self.enc, self.gen, self.dl, self.dc):
            net.load_state(state)
        self.opt_g.load_state(state, "opt_g")
        self.opt_dl.load_state(state, "opt_dl")
        self.opt_dc.load_state(state, "opt_dc")
        self.epoch = int(state["epoch"][0])


# ---------------------------------------------------------------------------
# corpus preparation
# ---------------------------------------------------------------------------


def _resize_rgba(rgba: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    im = Image.fromarray((np.clip(rgba, 0, 1) * 255).astype(np.uint8), "RGBA")
    im = im.resize(size, Image.BILINEAR)
    return np.asarray(im, dtype=np.float32) / 255.0


def item_from_pair(
    pair: imaging.SaliencyPair, canvas: int, bag: features.FeatureBag | None = None
) -> TrainingItem:
    """Segment, describe, and encode one drawing into a TrainingItem.

    Sprites are the region patches rescaled so their share of the original
    canvas carries over to the training canvas.
    """
    regions = imaging.watershed_segment(pair.saliency)
    regions = imaging.extract_patches(pair, regions)
    if bag is None:
        bag = features.bag_from_regions(pair.id, regions.regions)
    f = features.sum_features(bag)
    grid = layout_codec.encode_ground_truth(regions)
    bg = imaging.background_color(pair, regions)
    sprites = []
    for r in regions.regions:
        x0, y0, x1, y1 = r.bbox
        sw = max(1, round((x1 - x0) / pair.image.width * canvas))
        sh = max(1, round((y1 - y0) / pair.image.height * canvas))
        sprites.append(Sprite(_resize_rgba(r.patch.data, (sw, sh)), 1.0, r.rank))
    return TrainingItem(pair.id, f, regions.n, grid.cells, tuple(sprites), bg)


def items_from_manifest(manifest_path, canvas: int, feature_file=None) -> list[TrainingItem]:
    bags = None
    if feature_file:
        bags = {b.drawing_id: b for b in features.import_features(feature_file)}
    items = []
    for rec in read_manifest(manifest_path):
        pair_id = rec.get("id") or rec["image"]
        try:
            pair = imaging.load_pair(rec["image"], rec["saliency"], pair_id)
            bag = bags.get(pair_id) if bags else None
            items.append(item_from_pair(pair, canvas, bag))
        except Exception as exc:
            log.warning("skipping %s: %s", pair_id, exc)
    if not items:
        raise EmptyCorpus("manifest yielded no usable drawings")
    return items


def train(manifest_path, cfg: TrainConfig, out_dir, feature_file=None) -> Trainer:
    items = items_from_manifest(manifest_path, cfg.arch.canvas, feature_file)
    trainer = Trainer(items, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trainer.train(out_dir=out, log_file=out / "train_log.jsonl")
    return trainer
