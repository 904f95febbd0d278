"""Minimal trainable-layer toolkit with exact reverse-mode gradients.

No autodiff graph: every layer implements forward() and a matching
backward() that consumes the cache the forward left behind.  Parameters
live in per-layer dicts of numpy arrays and are updated in place by the
Adam optimizer, so references handed out by named_parameters() stay
valid across steps.

Training runs at float32; gradient checks build float64 layers because
finite-difference tolerances are meaningless at single precision.
"""

import numpy as np

from .errors import ContractError, ShapeError

LEAKY_SLOPE = 0.2


def kaiming_uniform(shape, fan_in, rng, dtype, gain=None):
    if gain is None:
        gain = np.sqrt(2.0 / (1.0 + LEAKY_SLOPE ** 2))
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base: owns params/grads dicts and optional child layers."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._children = {}
        self._cache = None

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise ContractError(f"{type(self).__name__}.backward called without a "
                                "matching forward")
        return self._cache

    def named_parameters(self, prefix=""):
        for k, v in self.params.items():
            yield prefix + k, v
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def named_grads(self, prefix=""):
        for k in self.params:
            yield prefix + k, self.grads[k]
        for cname, child in self._children.items():
            yield from child.named_grads(f"{prefix}{cname}.")

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0
        for child in self._children.values():
            child.zero_grad()

    def n_parameters(self):
        return sum(p.size for _, p in self.named_parameters())


class Conv1d(Layer):
    """Stride-1 dilated convolution, same-length output (odd kernels)."""

    def __init__(self, in_ch, out_ch, kernel, dilation=1, rng=None,
                 dtype=np.float32, gain=None):
        super().__init__()
        if kernel % 2 != 1:
            raise ShapeError("Conv1d expects an odd kernel")
        rng = rng or np.random.default_rng(0)
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.dilation = kernel, dilation
        self.params["weight"] = kaiming_uniform((out_ch, in_ch, kernel),
                                                in_ch * kernel, rng, dtype, gain)
        self.params["bias"] = np.zeros(out_ch, dtype=dtype)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x, train=False, rng=None):
        if x.ndim != 3 or x.shape[1] != self.in_ch:
            raise ShapeError(f"Conv1d expected (N, {self.in_ch}, T), got {x.shape}")
        k, d = self.kernel, self.dilation
        pad = d * (k - 1) // 2
        n, _, t = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        span = d * (k - 1) + 1
        view = np.lib.stride_tricks.sliding_window_view(xp, span, axis=2)[..., ::d]
        cols = np.ascontiguousarray(view.transpose(0, 2, 1, 3)).reshape(n * t, -1)
        w = self.params["weight"].reshape(self.out_ch, -1)
        y = (cols @ w.T).reshape(n, t, self.out_ch).transpose(0, 2, 1)
        y = y + self.params["bias"][None, :, None]
        self._cache = (cols, (n, t, xp.shape[2]))
        return y

    def backward(self, grad_out):
        cols, (n, t, padded_t) = self._need_cache()
        k, d = self.kernel, self.dilation
        pad = d * (k - 1) // 2
        g2 = np.ascontiguousarray(grad_out.transpose(0, 2, 1)).reshape(n * t, self.out_ch)
        self.grads["weight"] += (g2.T @ cols).reshape(self.params["weight"].shape)
        self.grads["bias"] += g2.sum(axis=0)
        gcols = (g2 @ self.params["weight"].reshape(self.out_ch, -1))
        gview = gcols.reshape(n, t, self.in_ch, k).transpose(0, 2, 1, 3)
        gxp = np.zeros((n, self.in_ch, padded_t), dtype=grad_out.dtype)
        for j in range(k):
            gxp[:, :, j * d:j * d + t] += gview[..., j]
        return gxp[:, :, pad:pad + t]


class ConvTranspose1d(Layer):
    """Upsampling transposed convolution with out_len = stride * in_len.

    Kernel is fixed at 2*stride with padding stride//2 + stride%2, the
    combination that makes the length contract exact.
    """

    def __init__(self, in_ch, out_ch, stride, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_ch, self.out_ch, self.stride = in_ch, out_ch, stride
        self.kernel = 2 * stride
        self.pad = stride // 2 + stride % 2
        self.params["weight"] = kaiming_uniform((in_ch, out_ch, self.kernel),
                                                in_ch * self.kernel, rng, dtype)
        self.params["bias"] = np.zeros(out_ch, dtype=dtype)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _full_len(self, t):
        return max((t - 1) * self.stride + self.kernel, self.pad + self.stride * t)

    def forward(self, x, train=False, rng=None):
        if x.ndim != 3 or x.shape[1] != self.in_ch:
            raise ShapeError(f"ConvTranspose1d expected (N, {self.in_ch}, T), got {x.shape}")
        n, _, t = x.shape
        s, k = self.stride, self.kernel
        w = self.params["weight"]
        z = (np.ascontiguousarray(x.transpose(0, 2, 1)).reshape(n * t, self.in_ch)
             @ w.reshape(self.in_ch, -1)).reshape(n, t, self.out_ch, k)
        y_full = np.zeros((n, self.out_ch, self._full_len(t)), dtype=x.dtype)
        for j in range(k):
            y_full[:, :, j:j + (t - 1) * s + 1:s] += z[:, :, :, j].transpose(0, 2, 1)
        out = y_full[:, :, self.pad:self.pad + s * t]
        out = out + self.params["bias"][None, :, None]
        self._cache = (x, (n, t))
        return out

    def backward(self, grad_out):
        x, (n, t) = self._need_cache()
        s, k = self.stride, self.kernel
        g_full = np.zeros((n, self.out_ch, self._full_len(t)), dtype=grad_out.dtype)
        g_full[:, :, self.pad:self.pad + s * t] = grad_out
        gz = np.empty((n, t, self.out_ch, k), dtype=grad_out.dtype)
        for j in range(k):
            gz[:, :, :, j] = g_full[:, :, j:j + (t - 1) * s + 1:s].transpose(0, 2, 1)
        gz2 = gz.reshape(n * t, -1)
        x2 = np.ascontiguousarray(x.transpose(0, 2, 1)).reshape(n * t, self.in_ch)
        self.grads["weight"] += (x2.T @ gz2).reshape(self.params["weight"].shape)
        self.grads["bias"] += grad_out.sum(axis=(0, 2))
        grad_x = (gz2 @ self.params["weight"].reshape(self.in_ch, -1).T)
        return grad_x.reshape(n, t, self.in_ch).transpose(0, 2, 1)


class Conv2d(Layer):
    """3x3-style convolution on (N, C, H, W) maps with per-axis stride."""

    def __init__(self, in_ch, out_ch, kernel=3, stride=(1, 1), rng=None,
                 dtype=np.float32):
        super().__init__()
        if kernel % 2 != 1:
            raise ShapeError("Conv2d expects an odd kernel")
        rng = rng or np.random.default_rng(0)
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel = kernel
        self.stride = stride
        self.params["weight"] = kaiming_uniform((out_ch, in_ch, kernel, kernel),
                                                in_ch * kernel * kernel, rng, dtype)
        self.params["bias"] = np.zeros(out_ch, dtype=dtype)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(f"Conv2d expected (N, {self.in_ch}, H, W), got {x.shape}")
        k = self.kernel
        sh, sw = self.stride
        pad = (k - 1) // 2
        n, _, h, w_in = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        ho = (h + 2 * pad - k) // sh + 1
        wo = (w_in + 2 * pad - k) // sw + 1
        # channel-major im2col: each (i, j) tap copies with a contiguous
        # inner row, which is what makes this layer affordable
        cols = np.empty((self.in_ch, k, k, n, ho, wo), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, i, j] = xp[:, :, i:i + sh * ho:sh,
                                   j:j + sw * wo:sw].transpose(1, 0, 2, 3)
        cols2 = cols.reshape(self.in_ch * k * k, n * ho * wo)
        wr = self.params["weight"].reshape(self.out_ch, -1)
        y = wr @ cols2
        y += self.params["bias"][:, None]
        self._cache = (cols2, (n, h, w_in, ho, wo, xp.shape))
        return y.reshape(self.out_ch, n, ho, wo).transpose(1, 0, 2, 3)

    def backward(self, grad_out):
        cols2, (n, h, w_in, ho, wo, xp_shape) = self._need_cache()
        k = self.kernel
        sh, sw = self.stride
        pad = (k - 1) // 2
        g2 = grad_out.transpose(1, 0, 2, 3).reshape(self.out_ch, n * ho * wo)
        self.grads["weight"] += (g2 @ cols2.T).reshape(self.params["weight"].shape)
        self.grads["bias"] += g2.sum(axis=1)
        gcols = (self.params["weight"].reshape(self.out_ch, -1).T @ g2).reshape(
            self.in_ch, k, k, n, ho, wo)
        _, _, hp, wp = xp_shape
        gxp = np.zeros((self.in_ch, n, hp, wp), dtype=grad_out.dtype)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += gcols[:, i, j]
        return gxp.transpose(1, 0, 2, 3)[:, :, pad:pad + h, pad:pad + w_in]


class LeakyReLU(Layer):
    def __init__(self, slope=LEAKY_SLOPE):
        super().__init__()
        self.slope = slope

    def forward(self, x, train=False, rng=None):
        self._cache = x > 0
        return np.where(self._cache, x, self.slope * x)

    def backward(self, grad_out):
        mask = self._need_cache()
        return np.where(mask, grad_out, self.slope * grad_out)


class Tanh(Layer):
    def forward(self, x, train=False, rng=None):
        y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, grad_out):
        y = self._need_cache()
        return grad_out * (1.0 - y * y)


class Dropout(Layer):
    """Inverted dropout: identity at inference, mask/(1-rate) in training."""

    def __init__(self, rate=0.5):
        super().__init__()
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._cache = None
            return x
        if rng is None:
            raise ContractError("Dropout in train mode needs an rng")
        mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, grad_out):
        if self._cache is None:
            return grad_out
        return grad_out * self._cache


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)
        self._children = {str(i): l for i, l in enumerate(self.layers)}

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        self._cache = True
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out


class ResidualBlock(Layer):
    """x + Conv1x1(LReLU(DilatedConv3(LReLU(x))))."""

    def __init__(self, channels, dilation, rng=None, dtype=np.float32):
        super().__init__()
        self.act1 = LeakyReLU()
        self.conv1 = Conv1d(channels, channels, 3, dilation=dilation, rng=rng, dtype=dtype)
        self.act2 = LeakyReLU()
        self.conv2 = Conv1d(channels, channels, 1, rng=rng, dtype=dtype)
        self._children = {"conv1": self.conv1, "conv2": self.conv2}

    def forward(self, x, train=False, rng=None):
        h = self.act1.forward(x, train, rng)
        h = self.conv1.forward(h, train, rng)
        h = self.act2.forward(h, train, rng)
        h = self.conv2.forward(h, train, rng)
        self._cache = True
        return x + h

    def backward(self, grad_out):
        g = self.conv2.backward(grad_out)
        g = self.act2.backward(g)
        g = self.conv1.backward(g)
        g = self.act1.backward(g)
        return grad_out + g


class ResidualStack(Sequential):
    """Serial residual blocks with growing dilations."""

    def __init__(self, channels, dilations=(1, 3, 9), rng=None, dtype=np.float32):
        super().__init__([ResidualBlock(channels, d, rng=rng, dtype=dtype)
                          for d in dilations])


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment slots plus the shared step counter."""

    def __init__(self, params: dict, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}


def adam_step(params: dict, grads: dict, state: AdamState):
    """Bias-corrected Adam update, in place (parameter references survive)."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"grad/param shape mismatch for {name}: "
                             f"{g.shape} vs {p.shape}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


class Adam:
    """Convenience wrapper binding a layer's parameters to an AdamState."""

    def __init__(self, layer: Layer, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(layer.named_parameters())
        self._layer = layer
        self.state = AdamState(self.params, lr, beta1, beta2, eps)

    def step(self):
        grads = dict(self._layer.named_grads())
        adam_step(self.params, grads, self.state)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def _select_entries(total, max_entries, rng):
    if total <= max_entries:
        return np.arange(total)
    return rng.choice(total, size=max_entries, replace=False)


def grad_check(layer: Layer, x: np.ndarray, eps: float = 1e-5, train: bool = False,
               seed: int = 0, max_entries: int = 200) -> float:
    """Max relative error of backward() against central finite differences.

    Checks the gradient with respect to every parameter entry and every
    input entry (or a seeded random subset for large layers).  The layer
    is re-run with an identically seeded rng for every probe, so
    stochastic layers see a frozen mask.
    """
    def run():
        return layer.forward(x, train=train, rng=np.random.default_rng(seed))

    sel_rng = np.random.default_rng(seed + 9999)
    y0 = run()
    proj = np.asarray(sel_rng.standard_normal(y0.shape), dtype=y0.dtype)
    layer.zero_grad()
    grad_in = layer.backward(proj)

    targets = [(x, grad_in)]
    analytic = dict(layer.named_grads())
    for name, p in layer.named_parameters():
        targets.append((p, analytic[name]))

    worst = 0.0
    for arr, grad in targets:
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in _select_entries(flat.size, max_entries, sel_rng):
            orig = flat[i]
            flat[i] = orig + eps
            lp = float(np.sum(run() * proj))
            flat[i] = orig - eps
            lm = float(np.sum(run() * proj))
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            a = float(gflat[i])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, rel)
    # restore caches consistent with the unperturbed input
    run()
    return worst
