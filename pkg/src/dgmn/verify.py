"""Property suites behind ``dgmn verify`` and the acceptance tests.

Three suites: "oracles" compares every vectorized primitive and composed
module against its brute-force reference on randomized configurations,
"grads" checks reverse-mode gradients against central finite differences,
and "invariants" asserts the structural properties (normalization, impulse
responses, equivariances, determinism). Each check returns a record with a
pass flag and a measured detail so reports stay machine-readable.
"""

from __future__ import annotations

import time
from typing import Callable, Dict, List, Optional

import numpy as np

from . import oracle
from . import tensor as T
from .dgmn import DgmnConfig, DgmnModule, KernelPredictor, dmc, predict_dynamic_kernel
from .dgmn2 import Dgmn2Attention, Dgmn2Block, Dgmn2Config
from .nn import Module, randomize_parameters
from .rng import SplitMix
from .sampler import SamplingField, WalkPredictor, bilinear_sample, predict_walks, uniform_grid
from .tensor import Tensor

FORWARD_TOL = 1e-10
BACKWARD_TOL = 1e-6
GRAD_REL_TOL = 1e-4
NORM_TOL = 1e-12


def _record(name: str, passed: bool, detail: str) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def max_abs_diff(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if np.size(a) else 0.0


def max_rel_err(ad, fd, floor: float = 1e-5) -> float:
    """Guarded relative error. The floor sits at the resolution limit of
    central differences at step 1e-5 in float64 (absolute noise around
    |loss| * 1e-11): gradients smaller than it cannot be meaningfully
    ratio-compared, while any formula or sign bug shows up orders of
    magnitude above the thresholds used here."""
    ad = np.asarray(ad)
    fd = np.asarray(fd)
    denom = np.maximum(np.maximum(np.abs(ad), np.abs(fd)), floor)
    return float(np.max(np.abs(ad - fd) / denom))


def _fd_loss_grad(loss_fn: Callable[[], float], arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of a closure over an array perturbed in place."""
    out = np.zeros_like(arr)
    flat = arr.reshape(-1)
    oflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = loss_fn()
        flat[i] = orig - eps
        fm = loss_fn()
        flat[i] = orig
        oflat[i] = (fp - fm) / (2.0 * eps)
    return out


# ------------------------------------------------------------ random configs


def _conv_case(rng: SplitMix, big_ok: bool):
    groups = int(rng.integers(1, 3))
    cg = int(rng.integers(1, 4))
    cout = groups * int(rng.integers(1, 4))
    cin = groups * cg
    n = int(rng.integers(1, 3))
    hw_hi = 16 if big_ok else 8
    h = int(rng.integers(3, hw_hi + 1))
    w = int(rng.integers(3, hw_hi + 1))
    kernel = 3 if rng.uniform() < 0.8 else 1
    stride = int(rng.integers(1, 3))
    dilation = int(rng.integers(1, 3)) if kernel == 3 else 1
    padding = int(rng.integers(0, 3))
    if (min(h, w) + 2 * padding - dilation * (kernel - 1) - 1) < 0:
        padding = dilation
    x = rng.normal((n, cin, h, w))
    wgt = rng.normal((cout, cg, kernel, kernel))
    b = rng.normal((cout,)) if rng.uniform() < 0.5 else None
    return x, wgt, b, stride, padding, dilation, groups


def _coords_case(rng: SplitMix, n: int, p: int, h: int, w: int, off_lattice: bool = False) -> np.ndarray:
    base = rng.uniform((n, p, 2)) * np.array([h + 4.0, w + 4.0]) - 2.0
    if off_lattice:
        frac = 0.25 + 0.5 * rng.uniform((n, p, 2))
        base = np.floor(base) + frac
    return base


def _random_field(rng: SplitMix, n: int, h: int, w: int, rate: int, k: int, walk_scale: float) -> SamplingField:
    base = uniform_grid(h, w, rate, k)[:, :, None, :, :]
    walk_np = rng.normal((n, h * w * k, 2)) * walk_scale + 0.3
    walks = [Tensor(walk_np)]
    flat = base[:, :, 0].reshape(1, h * w * k, 2).astype(np.float64)
    resolved = [T.add(walks[0], Tensor(flat))]
    return SamplingField(rates=[rate], k=k, height=h, width=w, base=base, walks=walks, resolved=resolved)


# ------------------------------------------------------- oracle equivalence


def check_conv2d_oracle(cases: int, seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(101)
    worst = 0.0
    for i in range(cases):
        x, w, b, s, p, d, g = _conv_case(rng, big_ok=(i % 10 == 0))
        got = T.conv2d(Tensor(x), Tensor(w), None if b is None else Tensor(b), s, p, d, g)
        ref = oracle.conv2d_reference(x, w, b, s, p, d, g)
        worst = max(worst, max_abs_diff(got.data, ref))
    return _record("conv2d-vs-oracle", worst <= FORWARD_TOL, f"max|diff|={worst:.3e} over {cases} cases")


def check_bilinear_oracle(cases: int, seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(102)
    worst = 0.0
    for i in range(cases):
        n = int(rng.integers(1, 3))
        c = int(rng.integers(1, 5))
        h = int(rng.integers(2, 16 if i % 10 == 0 else 8))
        w = int(rng.integers(2, 16 if i % 10 == 0 else 8))
        p = int(rng.integers(1, 12))
        fmap = rng.normal((n, c, h, w))
        coords = _coords_case(rng, n, p, h, w)
        got = bilinear_sample(Tensor(fmap), Tensor(coords))
        ref = oracle.bilinear_reference(fmap, coords)
        worst = max(worst, max_abs_diff(got.data, ref))
    return _record("bilinear-vs-oracle", worst <= FORWARD_TOL, f"max|diff|={worst:.3e} over {cases} cases")


def check_softmax_oracle(cases: int, seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(103)
    worst = 0.0
    for _ in range(cases):
        nd = int(rng.integers(1, 4))
        shape = tuple(int(rng.integers(1, 7)) for _ in range(nd))
        axis = int(rng.integers(0, nd))
        x = rng.normal(shape) * 3.0
        got = T.softmax(Tensor(x), axis=axis)
        ref = oracle.softmax_reference(x, axis=axis)
        worst = max(worst, max_abs_diff(got.data, ref))
    return _record("softmax-vs-oracle", worst <= FORWARD_TOL, f"max|diff|={worst:.3e} over {cases} cases")


def check_dmc_oracle(cases: int, seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(104)
    worst = 0.0
    for _ in range(cases):
        groups = int(rng.integers(1, 3))
        c = groups * int(rng.integers(1, 4))
        n = int(rng.integers(1, 3))
        h = int(rng.integers(3, 7))
        w = int(rng.integers(3, 7))
        k = 9
        rate = int(rng.integers(1, 3))
        feat = rng.normal((n, c, h, w))
        field_ = _random_field(rng, n, h, w, rate, k, walk_scale=0.7)
        weights = rng.normal((n, h, w, k, groups))
        aff = oracle.softmax_reference(rng.normal((n, h, w, k)), axis=-1)
        from .dgmn import DynamicKernel

        kern = DynamicKernel(weights=Tensor(weights), affinities=Tensor(aff))
        got = dmc(Tensor(feat), field_, kern, 0, groups)
        coords = field_.resolved[0].data.reshape(n, h, w, k, 2)
        ref = oracle.dmc_reference(feat, coords, weights, aff, groups)
        worst = max(worst, max_abs_diff(got.data, ref))
    return _record("dmc-vs-oracle", worst <= FORWARD_TOL, f"max|diff|={worst:.3e} over {cases} cases")


def dgmn_forward_oracle(module: DgmnModule, x: np.ndarray) -> np.ndarray:
    """Loop-composed reference for the whole module, oracle pieces only."""
    cfg = module.cfg
    n, c, h, w = x.shape
    obs = x
    state = x
    for _ in range(cfg.iters):
        total = np.zeros_like(x)
        for i, rate in enumerate(cfg.rates):
            wconv = module.walks.convs[i]
            raw_walk = oracle.conv2d_reference(
                state, wconv.weight.data, wconv.bias.data, 1, rate, rate, 1
            )
            walks = raw_walk.reshape(n, cfg.k, 2, h, w).transpose(0, 3, 4, 1, 2)
            coords = uniform_grid(h, w, rate, cfg.k)[None].astype(np.float64) + walks
            kconv = module.kernels[i].conv
            raw = oracle.conv2d_reference(state, kconv.weight.data, kconv.bias.data, 1, rate, rate, 1)
            kg = cfg.k * cfg.groups
            weights = raw[:, :kg].reshape(n, cfg.k, cfg.groups, h, w).transpose(0, 3, 4, 1, 2)
            aff = oracle.softmax_reference(raw[:, kg:].transpose(0, 2, 3, 1), axis=-1)
            total = total + module.beta.data[i] * oracle.dmc_reference(state, coords, weights, aff, cfg.groups)
        state = np.maximum(obs + module.alpha.data[None, :, None, None] * total, 0.0)
    return state


def check_dgmn_forward_oracle(cases: int, seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(105)
    worst = 0.0
    for i in range(cases):
        groups = int(rng.integers(1, 3))
        c = groups * int(rng.integers(1, 3))
        cfg = DgmnConfig(channels=c, rates=[1, 2] if i % 3 == 0 else [1], groups=groups, iters=1)
        module = DgmnModule(cfg, rng.spawn(i))
        randomize_parameters(module, rng.spawn(1000 + i), scale=0.4)
        h = int(rng.integers(3, 7))
        w = int(rng.integers(3, 7))
        x = rng.normal((1, c, h, w))
        got = module(Tensor(x))
        ref = dgmn_forward_oracle(module, x)
        worst = max(worst, max_abs_diff(got.data, ref))
    return _record("dgmn-forward-vs-oracle", worst <= FORWARD_TOL, f"max|diff|={worst:.3e} over {cases} cases")


def dgmn2_attention_oracle(attn: Dgmn2Attention, x: np.ndarray, counter: Optional[oracle.MacCounter] = None) -> np.ndarray:
    """Reference for the sampled-attention op (single rate), oracle pieces only."""
    cfg = attn.cfg
    n, d, h, w = x.shape
    rate = cfg.rates[0]
    wconv = attn.walks.convs[0]
    raw_walk = oracle.conv2d_reference(x, wconv.weight.data, wconv.bias.data, 1, rate, rate, 1, counter)
    walks = raw_walk.reshape(n, cfg.k, 2, h, w).transpose(0, 3, 4, 1, 2)
    coords = uniform_grid(h, w, rate, cfg.k)[None].astype(np.float64) + walks
    table = attn.relpos[0]
    return oracle.sampled_attention_reference(
        x,
        coords,
        attn.wq.weight.data[:, :, 0, 0],
        attn.wq.bias.data,
        attn.wk.weight.data[:, :, 0, 0],
        attn.wk.bias.data,
        attn.wv.weight.data[:, :, 0, 0],
        attn.wv.bias.data,
        attn.wo.weight.data[:, :, 0, 0],
        attn.wo.bias.data,
        table.table_y.data,
        table.table_x.data,
        cfg.heads,
        counter,
    )


def check_dgmn2_attention_oracle(cases: int, seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(106)
    worst = 0.0
    for i in range(cases):
        heads = int(rng.integers(1, 3))
        d = heads * int(rng.integers(1, 4))
        cfg = Dgmn2Config(dim=d, heads=heads, rates=[int(rng.integers(1, 3))], pos_grid=8)
        attn = Dgmn2Attention(cfg, rng.spawn(i))
        randomize_parameters(attn, rng.spawn(2000 + i), scale=0.4)
        h = int(rng.integers(3, 8))
        w = int(rng.integers(3, 8))
        x = rng.normal((1, d, h, w))
        got = attn(Tensor(x))
        ref = dgmn2_attention_oracle(attn, x)
        worst = max(worst, max_abs_diff(got.data, ref))
    return _record("dgmn2-attention-vs-oracle", worst <= FORWARD_TOL, f"max|diff|={worst:.3e} over {cases} cases")


def suite_oracles(cases: int = 200, seed: int = 0) -> dict:
    t0 = time.monotonic()
    checks = [
        check_conv2d_oracle(cases, seed),
        check_bilinear_oracle(cases, seed),
        check_softmax_oracle(cases, seed),
        check_dmc_oracle(cases, seed),
        check_dgmn_forward_oracle(cases, seed),
        check_dgmn2_attention_oracle(cases, seed),
    ]
    return {
        "suite": "oracles",
        "passed": all(c["passed"] for c in checks),
        "elapsed_s": time.monotonic() - t0,
        "checks": checks,
    }


# ------------------------------------------------------------------ gradients


def check_primitive_grads(shapes: int = 200, seed: int = 0) -> List[dict]:
    """Backward of each primitive against central differences on small shapes."""
    rng = SplitMix(seed).spawn(201)
    results = []

    def run_case(name, make_case, count):
        worst = 0.0
        for i in range(count):
            params, build = make_case(rng.spawn(i))
            loss = build()
            loss.backward()
            for p in params:
                ad = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                fd = _fd_loss_grad(lambda: build().item(), p.data)
                worst = max(worst, max_rel_err(ad, fd))
        results.append(_record(name, worst <= BACKWARD_TOL, f"max rel err={worst:.3e} over {count} shapes"))

    def conv_case(crng):
        groups = int(crng.integers(1, 3))
        cg = int(crng.integers(1, 3))
        cin, cout = groups * cg, groups * int(crng.integers(1, 3))
        kernel = 3 if crng.uniform() < 0.7 else 1
        s = int(crng.integers(1, 3))
        d = int(crng.integers(1, 3)) if kernel == 3 else 1
        p = d if kernel == 3 else 0
        h = int(crng.integers(3, 6))
        w = int(crng.integers(3, 6))
        xt = Tensor(crng.normal((1, cin, h, w)), requires_grad=True)
        wt = Tensor(crng.normal((cout, cg, kernel, kernel)), requires_grad=True)
        bt = Tensor(crng.normal((cout,)), requires_grad=True) if crng.uniform() < 0.5 else None
        r = crng.normal(T.conv2d(xt, wt, bt, s, p, d, groups).shape)

        def build():
            out = T.conv2d(xt, wt, bt, s, p, d, groups)
            return T.tsum(T.mul(out, Tensor(r)))

        params = [xt, wt] + ([bt] if bt is not None else [])
        return params, build

    def bilinear_case(crng):
        n, c, h, w = 1, int(crng.integers(1, 3)), 4, 4
        p = int(crng.integers(1, 6))
        fmap = Tensor(crng.normal((n, c, h, w)), requires_grad=True)
        coords = Tensor(_coords_case(crng, n, p, h, w, off_lattice=True), requires_grad=True)
        r = crng.normal((n, p, c))

        def build():
            return T.tsum(T.mul(bilinear_sample(fmap, coords), Tensor(r)))

        return [fmap, coords], build

    def softmax_case(crng):
        shape = (int(crng.integers(1, 4)), int(crng.integers(2, 6)))
        x = Tensor(crng.normal(shape), requires_grad=True)
        r = crng.normal(shape)

        def build():
            return T.tsum(T.mul(T.softmax(x, axis=-1), Tensor(r)))

        return [x], build

    def layer_norm_case(crng):
        shape = (int(crng.integers(1, 4)), int(crng.integers(2, 6)))
        x = Tensor(crng.normal(shape), requires_grad=True)
        g = Tensor(1.0 + 0.3 * crng.normal((shape[-1],)), requires_grad=True)
        b = Tensor(0.3 * crng.normal((shape[-1],)), requires_grad=True)
        r = crng.normal(shape)

        def build():
            return T.tsum(T.mul(T.layer_norm(x, g, b), Tensor(r)))

        return [x, g, b], build

    def matmul_case(crng):
        m, k, n = (int(crng.integers(1, 5)) for _ in range(3))
        a = Tensor(crng.normal((m, k)), requires_grad=True)
        b = Tensor(crng.normal((k, n)), requires_grad=True)
        r = crng.normal((m, n))

        def build():
            return T.tsum(T.mul(T.matmul(a, b), Tensor(r)))

        return [a, b], build

    def relu_case(crng):
        shape = (int(crng.integers(1, 4)), int(crng.integers(1, 6)))
        raw = crng.normal(shape)
        raw = raw + 0.25 * np.sign(raw)  # margin from the kink for FD
        x = Tensor(raw, requires_grad=True)
        r = crng.normal(shape)

        def build():
            return T.tsum(T.mul(T.relu(x), Tensor(r)))

        return [x], build

    def gelu_case(crng):
        shape = (int(crng.integers(1, 4)), int(crng.integers(1, 6)))
        x = Tensor(crng.normal(shape), requires_grad=True)
        r = crng.normal(shape)

        def build():
            return T.tsum(T.mul(T.gelu(x), Tensor(r)))

        return [x], build

    def batch_norm_case(crng):
        shape = (2, int(crng.integers(1, 3)), 3, 3)
        x = Tensor(crng.normal(shape), requires_grad=True)
        g = Tensor(1.0 + 0.3 * crng.normal((shape[1],)), requires_grad=True)
        b = Tensor(0.3 * crng.normal((shape[1],)), requires_grad=True)
        r = crng.normal(shape)
        rm = np.zeros(shape[1])
        rv = np.ones(shape[1])

        def build():
            return T.tsum(T.mul(T.batch_norm(x, g, b, rm.copy(), rv.copy(), training=True), Tensor(r)))

        return [x, g, b], build

    def ce_case(crng):
        n, k = int(crng.integers(2, 5)), int(crng.integers(2, 5))
        x = Tensor(crng.normal((n, k)), requires_grad=True)
        labels = crng.integers(0, k, (n,))

        def build():
            return T.cross_entropy_loss(x, labels)

        return [x], build

    heavy = max(10, shapes // 4)
    run_case("grad-conv2d", conv_case, heavy)
    run_case("grad-bilinear", bilinear_case, heavy)
    run_case("grad-softmax", softmax_case, shapes)
    run_case("grad-layer-norm", layer_norm_case, shapes)
    run_case("grad-matmul", matmul_case, shapes)
    run_case("grad-relu", relu_case, shapes)
    run_case("grad-gelu", gelu_case, shapes)
    run_case("grad-batch-norm", batch_norm_case, heavy)
    run_case("grad-cross-entropy", ce_case, shapes)
    return results


def module_grad_check(module: Module, x: np.ndarray, seed: int = 0, eps: float = 1e-5) -> float:
    """Max relative error between autodiff and FD over every parameter."""
    rng = SplitMix(seed).spawn(301)
    xt = Tensor(x)
    params = list(module.named_parameters())
    out_shape = module(xt).shape
    r = rng.normal(out_shape)

    def loss_tensor():
        return T.tsum(T.mul(module(xt), Tensor(r)))

    loss = loss_tensor()
    loss.backward()
    ad = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params}
    worst = 0.0
    for name, p in params:
        fd = _fd_loss_grad(lambda: loss_tensor().item(), p.data, eps)
        worst = max(worst, max_rel_err(ad[name], fd))
    module.zero_grad()
    return worst


def check_dgmn_module_grads(seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(302)
    cfg = DgmnConfig(channels=8, rates=[1, 4], groups=4, k=9)
    module = DgmnModule(cfg, rng)
    randomize_parameters(module, rng.spawn(1), scale=0.3)
    x = rng.normal((1, 8, 6, 6))
    worst = module_grad_check(module, x, seed=seed)
    return _record("grad-dgmn-module", worst < GRAD_REL_TOL, f"max rel err={worst:.3e}")


class _TwoBlockStack(Module):
    def __init__(self, cfg: Dgmn2Config, rng: SplitMix):
        self.blocks = [Dgmn2Block(cfg, rng.spawn(i)) for i in range(2)]

    def forward(self, x):
        for b in self.blocks:
            x = b(x)
        return x

    __call__ = forward


def check_dgmn2_stack_grads(seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(303)
    cfg = Dgmn2Config(dim=8, heads=2, ffn_ratio=2, pos_grid=8)
    stack = _TwoBlockStack(cfg, rng)
    randomize_parameters(stack, rng.spawn(1), scale=0.3)
    x = rng.normal((1, 8, 5, 5))
    worst = module_grad_check(stack, x, seed=seed)
    return _record("grad-dgmn2-stack", worst < GRAD_REL_TOL, f"max rel err={worst:.3e}")


def check_walk_coordinate_grads(seed: int = 0) -> dict:
    """Coordinate gradients of the sampler away from the integer lattice."""
    rng = SplitMix(seed).spawn(304)
    worst = 0.0
    for i in range(20):
        n, c, h, w = 1, int(rng.integers(1, 4)), 5, 5
        p = int(rng.integers(1, 8))
        fmap = Tensor(rng.normal((n, c, h, w)))
        coords = Tensor(_coords_case(rng, n, p, h, w, off_lattice=True), requires_grad=True)
        r = rng.normal((n, p, c))

        def build():
            return T.tsum(T.mul(bilinear_sample(fmap, coords), Tensor(r)))

        loss = build()
        loss.backward()
        fd = _fd_loss_grad(lambda: build().item(), coords.data)
        worst = max(worst, max_rel_err(coords.grad, fd))
        coords.grad = None
    return _record("grad-walk-coordinates", worst <= BACKWARD_TOL, f"max rel err={worst:.3e}")


def suite_grads(seed: int = 0, shapes: int = 200) -> dict:
    t0 = time.monotonic()
    checks = check_primitive_grads(shapes=shapes, seed=seed)
    checks.append(check_walk_coordinate_grads(seed))
    checks.append(check_dgmn_module_grads(seed))
    checks.append(check_dgmn2_stack_grads(seed))
    return {
        "suite": "grads",
        "passed": all(c["passed"] for c in checks),
        "elapsed_s": time.monotonic() - t0,
        "checks": checks,
    }


# ----------------------------------------------------------------- invariants


def check_softmax_normalization(forwards: int = 100, seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(401)
    worst = 0.0
    for _ in range(forwards):
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 9)))
        y = T.softmax(Tensor(rng.normal(shape) * 5.0), axis=-1)
        worst = max(worst, float(np.max(np.abs(y.data.sum(axis=-1) - 1.0))))
    return _record("softmax-rows-sum-to-one", worst <= NORM_TOL, f"max|sum-1|={worst:.3e}")


def check_affinity_normalization(forwards: int = 100, seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(402)
    worst = 0.0
    for i in range(forwards):
        cfg = DgmnConfig(channels=4, rates=[int(rng.integers(1, 3))], groups=2)
        pred = KernelPredictor(cfg, cfg.rates[0], rng.spawn(i))
        randomize_parameters(pred, rng.spawn(500 + i), scale=0.5)
        kern = predict_dynamic_kernel(Tensor(rng.normal((1, 4, 5, 5))), pred)
        worst = max(worst, float(np.max(np.abs(kern.affinities.data.sum(axis=-1) - 1.0))))
    return _record("affinity-rows-sum-to-one", worst <= NORM_TOL, f"max|sum-1|={worst:.3e}")


def check_attention_normalization(forwards: int = 100, seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(403)
    worst = 0.0
    for i in range(forwards):
        cfg = Dgmn2Config(dim=4, heads=2, pos_grid=8)
        attn = Dgmn2Attention(cfg, rng.spawn(i))
        randomize_parameters(attn, rng.spawn(900 + i), scale=0.4)
        cap: dict = {}
        attn(Tensor(rng.normal((1, 4, 4, 4))), capture=cap)
        for snap in cap["attention"]:
            worst = max(worst, float(np.max(np.abs(snap.sum(axis=-1) - 1.0))))
    return _record("attention-rows-sum-to-one", worst <= NORM_TOL, f"max|sum-1|={worst:.3e}")


def check_dilation_impulse(seed: int = 0) -> dict:
    ok = True
    detail = []
    for d in (1, 2, 3):
        h = w = 4 * d + 1
        x = np.zeros((1, 1, h, w))
        x[0, 0, h // 2, w // 2] = 1.0
        wgt = np.ones((1, 1, 3, 3))
        y = T.conv2d(Tensor(x), Tensor(wgt), stride=1, padding=d, dilation=d).data[0, 0]
        hits = set(zip(*np.nonzero(y)))
        want = {(h // 2 + a * d, w // 2 + b * d) for a in (-1, 0, 1) for b in (-1, 0, 1)}
        ok = ok and hits == want
        detail.append(f"d={d}:{'ok' if hits == want else 'BAD'}")
    return _record("conv-dilation-impulse-offsets", ok, ",".join(detail))


def check_zero_walk_gather(seed: int = 0) -> dict:
    """Zero walks over a uniform grid must equal integer gathering bit-for-bit."""
    rng = SplitMix(seed).spawn(404)
    ok = True
    for rate in (1, 2):
        n, c, h, w = 2, 3, 7, 7
        fmap = rng.normal((n, c, h, w))
        grid = uniform_grid(h, w, rate, 9)
        coords = np.broadcast_to(
            grid.reshape(1, h * w * 9, 2).astype(np.float64), (n, h * w * 9, 2)
        ).copy()
        got = bilinear_sample(Tensor(fmap), Tensor(coords)).data
        flat = grid.reshape(-1, 2)
        gathered = np.zeros((n, flat.shape[0], c))
        for bi in range(n):
            for i, (yy, xx) in enumerate(flat):
                if 0 <= yy < h and 0 <= xx < w:
                    gathered[bi, i] = fmap[bi, :, yy, xx]
        ok = ok and np.array_equal(got, gathered)
    return _record("zero-walk-equals-gather", ok, "bit-equal" if ok else "mismatch")


def check_translation_equivariance(seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(405)
    n, c, h, w = 1, 2, 12, 12
    fmap = rng.normal((n, c, h, w))
    shift = (2, 3)
    shifted = np.roll(np.roll(fmap, shift[0], axis=2), shift[1], axis=3)
    coords = _coords_case(rng, n, 20, 4, 4, off_lattice=True) + 4.0  # interior queries
    moved = coords + np.array(shift, dtype=np.float64)
    a = bilinear_sample(Tensor(fmap), Tensor(coords)).data
    b = bilinear_sample(Tensor(shifted), Tensor(moved)).data
    ok = np.array_equal(a, b)
    return _record("sampling-translation-equivariance", ok, "bit-equal" if ok else "mismatch")


def check_determinism(seed: int = 0) -> dict:
    def run():
        rng = SplitMix(seed).spawn(406)
        cfg = DgmnConfig(channels=4, rates=[1, 2], groups=2)
        module = DgmnModule(cfg, rng)
        randomize_parameters(module, rng.spawn(1), scale=0.3)
        x = rng.normal((2, 4, 6, 6))
        return module(Tensor(x)).data

    ok = np.array_equal(run(), run())
    return _record("same-seed-bit-identical", ok, "bit-equal" if ok else "mismatch")


def check_batch_permutation(seed: int = 0) -> dict:
    rng = SplitMix(seed).spawn(407)
    cfg = Dgmn2Config(dim=4, heads=2, pos_grid=8)
    block = Dgmn2Block(cfg, rng)
    randomize_parameters(block, rng.spawn(1), scale=0.3)
    x = rng.normal((3, 4, 5, 5))
    perm = np.array([2, 0, 1])
    a = block(Tensor(x)).data[perm]
    b = block(Tensor(x[perm])).data
    ok = np.array_equal(a, b)
    return _record("batch-permutation-consistency", ok, "bit-equal" if ok else "mismatch")


def check_node_order_invariance(seed: int = 0) -> dict:
    """With zero walks and zero relpos, node numbering must not matter."""
    rng = SplitMix(seed).spawn(408)
    cfg = Dgmn2Config(dim=4, heads=2, pos_grid=8)
    attn = Dgmn2Attention(cfg, rng)
    randomize_parameters(attn, rng.spawn(1), scale=0.3)
    attn.relpos[0].table_y.data[...] = 0.0
    attn.relpos[0].table_x.data[...] = 0.0
    n, h, w = 1, 5, 5
    x = rng.normal((n, 4, h, w))
    base = uniform_grid(h, w, 1, 9)

    def field_with_order(order):
        grid = base[:, :, order, :]
        b5 = grid[:, :, None, :, :]
        flat = grid.reshape(1, h * w * 9, 2).astype(np.float64)
        return SamplingField(
            rates=[1], k=9, height=h, width=w, base=b5,
            walks=[Tensor(np.zeros((n, h * w * 9, 2)))],
            resolved=[Tensor(np.broadcast_to(flat, (n, h * w * 9, 2)).copy())],
        )

    a = attn(Tensor(x), field_=field_with_order(np.arange(9))).data
    order = SplitMix(seed).spawn(409).permutation(9)
    b = attn(Tensor(x), field_=field_with_order(order)).data
    diff = max_abs_diff(a, b)
    return _record("node-order-invariance", diff <= NORM_TOL, f"max|diff|={diff:.3e}")


def check_gradient_flow(seed: int = 0) -> dict:
    """Every learnable gets a nonzero gradient under random init."""
    rng = SplitMix(seed).spawn(410)
    dead = []
    cfg = DgmnConfig(channels=8, rates=[1, 4], groups=4)
    module = DgmnModule(cfg, rng)
    randomize_parameters(module, rng.spawn(1), scale=0.3)
    x = rng.normal((1, 8, 6, 6))
    r = rng.normal((1, 8, 6, 6))
    loss = T.tsum(T.mul(module(Tensor(x)), Tensor(r)))
    loss.backward()
    for name, p in module.named_parameters():
        if p.grad is None or np.max(np.abs(p.grad)) == 0.0:
            dead.append(f"dgmn.{name}")
    cfg2 = Dgmn2Config(dim=8, heads=2, ffn_ratio=2, pos_grid=8)
    block = Dgmn2Block(cfg2, rng.spawn(2))
    randomize_parameters(block, rng.spawn(3), scale=0.3)
    loss = T.tsum(T.mul(block(Tensor(x)), Tensor(r)))
    loss.backward()
    for name, p in block.named_parameters():
        if p.grad is None or np.max(np.abs(p.grad)) == 0.0:
            dead.append(f"dgmn2.{name}")
    return _record("gradient-flow-no-dead-params", not dead, "all alive" if not dead else f"dead: {dead}")


def check_depthwise_degeneration(seed: int = 0) -> dict:
    """Zero walks, rate 1, G=C, constant filters, uniform affinities: the
    message calculation collapses to a 3x3 depthwise convolution."""
    rng = SplitMix(seed).spawn(411)
    from .dgmn import DynamicKernel

    n, c, h, w = 1, 4, 6, 6
    k = 9
    feat = rng.normal((n, c, h, w))
    kernel_const = rng.normal((k, c))  # one scalar per node per channel
    field_ = _random_field(rng, n, h, w, 1, k, walk_scale=0.0)
    field_.walks[0].data[...] = 0.0
    field_.resolved[0].data[...] = field_.base[:, :, 0].reshape(1, -1, 2)
    weights = np.broadcast_to(kernel_const[None, None, None], (n, h, w, k, c)).copy()
    aff = np.full((n, h, w, k), 1.0 / k)
    kern = DynamicKernel(weights=Tensor(weights), affinities=Tensor(aff))
    got = dmc(Tensor(feat), field_, kern, 0, c).data
    wconv = np.zeros((c, 1, 3, 3))
    for j in range(k):
        wconv[:, 0, j // 3, j % 3] = kernel_const[j] / k
    ref = T.conv2d(Tensor(feat), Tensor(wconv), stride=1, padding=1, dilation=1, groups=c).data
    diff = max_abs_diff(got, ref)
    return _record("dmc-depthwise-degeneration", diff <= FORWARD_TOL, f"max|diff|={diff:.3e}")


def suite_invariants(seed: int = 0, forwards: int = 100) -> dict:
    t0 = time.monotonic()
    checks = [
        check_softmax_normalization(forwards, seed),
        check_affinity_normalization(forwards, seed),
        check_attention_normalization(forwards, seed),
        check_dilation_impulse(seed),
        check_zero_walk_gather(seed),
        check_translation_equivariance(seed),
        check_determinism(seed),
        check_batch_permutation(seed),
        check_node_order_invariance(seed),
        check_gradient_flow(seed),
        check_depthwise_degeneration(seed),
    ]
    return {
        "suite": "invariants",
        "passed": all(c["passed"] for c in checks),
        "elapsed_s": time.monotonic() - t0,
        "checks": checks,
    }


SUITES: Dict[str, Callable[..., dict]] = {
    "oracles": suite_oracles,
    "grads": suite_grads,
    "invariants": suite_invariants,
}


def run_suites(names: List[str], seed: int = 0, cases: int = 200) -> dict:
    reports = []
    for name in names:
        if name == "oracles":
            reports.append(suite_oracles(cases=cases, seed=seed))
        elif name == "grads":
            reports.append(suite_grads(seed=seed, shapes=max(20, cases // 4)))
        elif name == "invariants":
            reports.append(suite_invariants(seed=seed))
    return {"passed": all(r["passed"] for r in reports), "suites": reports}
