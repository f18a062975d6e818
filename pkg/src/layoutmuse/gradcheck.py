"""Finite-difference verification suites for every differentiable op.

Each check builds a scalar loss through one op (projected against a fixed
random direction), computes analytic gradients, and compares them with
central finite differences.  Run in float64; the CLI `gradcheck` command
exits nonzero if any suite fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import compositor
from .autodiff import Tensor, ops


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    ok: bool


def _fd_check(name, make_loss, leaves, eps=1e-5, tol=1e-6, samples=30, rng=None) -> CheckResult:
    """Compare analytic grads of make_loss() against central differences."""
    rng = rng or np.random.default_rng(0)
    loss = make_loss()
    ad.zero_grads(leaves)
    ad.backward(loss)
    worst = 0.0
    for leaf in leaves:
        grad = leaf.grad.data if leaf.grad is not None else np.zeros_like(leaf.data)
        flat = leaf.data.reshape(-1)
        idxs = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            fp = make_loss().item()
            flat[i] = orig - eps
            fm = make_loss().item()
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            ana = grad.reshape(-1)[i]
            denom = max(abs(num), abs(ana), 1e-3)
            worst = max(worst, abs(num - ana) / denom)
    return CheckResult(name, worst, worst <= tol)


def _leaf(rng, shape, scale=1.0):
    return Tensor(rng.normal(scale=scale, size=shape).astype(np.float64), requires_grad=True)


def op_checks(seed: int = 0, tol: float = 1e-6) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    proj_cache = {}

    def proj(t):
        key = t.shape
        if key not in proj_cache:
            proj_cache[key] = Tensor(rng.normal(size=t.shape))
        return ad.tsum(ad.mul(t, proj_cache[key]))

    results = []

    a, b = _leaf(rng, (3, 4)), _leaf(rng, (3, 4))
    results.append(_fd_check("add", lambda: proj(ad.add(a, b)), [a, b], tol=tol))
    results.append(_fd_check("mul", lambda: proj(ad.mul(a, b)), [a, b], tol=tol))
    bb = Tensor(rng.normal(size=(3, 4)) + 3.0, requires_grad=True)
    results.append(_fd_check("div", lambda: proj(ad.div(a, bb)), [a, bb], tol=tol))
    bcast = _leaf(rng, (1, 4))
    results.append(_fd_check("add_broadcast", lambda: proj(ad.add(a, bcast)), [a, bcast], tol=tol))

    m1, m2 = _leaf(rng, (3, 5)), _leaf(rng, (5, 2))
    results.append(_fd_check("matmul", lambda: proj(ad.matmul(m1, m2)), [m1, m2], tol=tol))

    x = _leaf(rng, (2, 3, 6, 6))
    results.append(_fd_check("reshape", lambda: proj(ad.reshape(x, (2, 108))), [x], tol=tol))
    results.append(_fd_check("permute", lambda: proj(ad.permute(x, (0, 2, 3, 1))), [x], tol=tol))
    results.append(_fd_check("sum_axis", lambda: proj(ad.tsum(x, axis=(2, 3))), [x], tol=tol))
    results.append(_fd_check("mean", lambda: ad.tmean(ad.mul(x, x)), [x], tol=tol))
    results.append(
        _fd_check("concat_slice", lambda: proj(ad.slice_axis(ad.concat([x, x], 1), 1, 2, 5)), [x], tol=tol)
    )

    pos = Tensor(np.abs(rng.normal(size=(3, 3))) + 0.5, requires_grad=True)
    results.append(_fd_check("sqrt", lambda: proj(ad.tsqrt(pos)), [pos], tol=tol))
    results.append(_fd_check("l2_norm", lambda: ad.l2_norm(a), [a], tol=tol))
    results.append(_fd_check("tanh", lambda: proj(ad.tanh(a)), [a], tol=tol))
    away = Tensor(rng.normal(size=(4, 4)) + np.where(rng.normal(size=(4, 4)) > 0, 2.0, -2.0), requires_grad=True)
    results.append(_fd_check("leaky_relu", lambda: proj(ad.leaky_relu(away, 0.2)), [away], tol=tol))

    cw = _leaf(rng, (4, 3, 3, 3), scale=0.3)
    cb = _leaf(rng, (4,), scale=0.1)
    results.append(
        _fd_check("conv2d", lambda: proj(ops.conv2d(x, cw, cb, stride=2, pad=1)), [x, cw, cb], tol=tol)
    )
    tw = _leaf(rng, (3, 2, 4, 4), scale=0.3)
    results.append(
        _fd_check(
            "conv_transpose2d",
            lambda: proj(ops.conv_transpose2d(x, tw, None, stride=2, pad=1)),
            [x, tw],
            tol=tol,
        )
    )

    gamma, beta = _leaf(rng, (3,), scale=0.5), _leaf(rng, (3,), scale=0.5)
    rm, rv = np.zeros(3), np.ones(3)
    results.append(
        _fd_check(
            "batchnorm_train",
            lambda: proj(ops.batchnorm(x, gamma, beta, rm.copy(), rv.copy(), training=True)),
            [x, gamma, beta],
            tol=max(tol, 1e-5),
        )
    )
    results.append(
        _fd_check(
            "batchnorm_eval",
            lambda: proj(ops.batchnorm(x, gamma, beta, rm, rv, training=False)),
            [x, gamma, beta],
            tol=tol,
        )
    )

    img = Tensor(rng.random((1, 3, 16, 16)), requires_grad=True)
    results.append(_fd_check("pyramid_downsample", lambda: proj(ops.binomial_downsample(img)), [img], tol=tol))

    grid_t = Tensor(rng.random((5, 5)), requires_grad=True)
    idx = np.array([3, 7, 12])
    results.append(_fd_check("gather_flat", lambda: proj(ops.gather_flat(grid_t, idx)), [grid_t], tol=tol))

    sprite = Tensor(rng.random((6, 6, 4)), requires_grad=True)
    results.append(
        _fd_check(
            "bilinear_place",
            lambda: proj(compositor.place_sprite(sprite, (12, 12), (5.3, 6.7), 1.4)),
            [sprite],
            tol=tol,
        )
    )

    return results


def second_order_check(tol: float = 1e-6) -> list[CheckResult]:
    """Closed-form WGAN-GP check with a linear critic D(x) = w.x:
    penalty = (||w|| - 1)^2, d(penalty)/dw = 2 (||w|| - 1) w / ||w||."""
    w = Tensor(np.array([3.0, 4.0, 12.0]), requires_grad=True)
    x = Tensor(np.array([[0.5, -1.0, 2.0]]), requires_grad=True)
    score = ad.tsum(ad.mul(x, ad.reshape(w, (1, 3))))
    g = ad.grad_graph(score, x)
    norm = ad.l2_norm(g)
    pen = ad.pow_const(ad.add(norm, -1.0), 2)
    ad.zero_grads([w])
    ad.backward(pen)
    wn = np.linalg.norm(w.data)
    expect_pen = (wn - 1) ** 2
    expect_grad = 2 * (wn - 1) * w.data / wn
    err = max(
        abs(pen.item() - expect_pen),
        float(np.abs(w.grad.data - expect_grad).max()),
    )
    return [CheckResult("gp_linear_closed_form", err, err <= tol)]


def soft_composite_checks(seed: int = 1, tol: float = 1e-6) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    sprites = tuple(
        compositor.Sprite(rng.random((6, 6, 4)), 1.0, r) for r in range(2)
    )
    ss = compositor.SpriteSet(sprites, (16, 16), (0.3, 0.4, 0.5))
    grid = np.zeros((32, 32))
    grid[4, 9], grid[20, 25] = 0.9, 0.6
    gt = Tensor(grid, requires_grad=True)
    sprite_ts = [Tensor(s.rgba, requires_grad=True) for s in sprites]

    def loss():
        out, _ = compositor.soft_composite_t(ss, gt, 2, sprite_tensors=sprite_ts)
        return ad.tmean(ad.mul(out, out))

    return [_fd_check("soft_composite", loss, [gt, *sprite_ts], tol=tol)]


def run_all(tol: float = 1e-6) -> list[CheckResult]:
    return op_checks(tol=tol) + second_order_check(tol=tol) + soft_composite_checks(tol=tol)
