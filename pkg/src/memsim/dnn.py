"""Crossbar-backed feed-forward networks with mixed-precision training.

Forward and backward passes run through the analog arrays (one MVM per
layer per direction); weight updates are accumulated digitally in the
high-precision buffer chi and flushed to the devices as programming
pulses whenever an entry crosses the granularity threshold epsilon.
A plain float network of identical topology serves as the training
oracle for comparisons.
"""

from dataclasses import dataclass, field

import numpy as np

from . import crossbar, devices
from .crossbar import TiledMatrix
from .devices import DeviceParams


def relu(z):
    return np.maximum(z, 0.0)


def relu_grad(z):
    return (z > 0).astype(float)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def softmax(z):
    e = np.exp(z - np.max(z))
    return e / e.sum()


ACTIVATIONS = {
    "relu": (relu, relu_grad),
    "sigmoid": (sigmoid, lambda z: sigmoid(z) * (1.0 - sigmoid(z))),
    "softmax_out": (lambda z: z, lambda z: np.ones_like(z)),  # softmax folded into the loss
}


@dataclass
class TrainConfig:
    lr: float = 0.1
    epochs: int = 10
    batch_size: int = 16
    loss: str = "cross_entropy"
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.loss not in ("cross_entropy", "mse"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class Layer:
    weights: TiledMatrix
    chi: np.ndarray
    bias: np.ndarray
    activation: str


class MixedPrecisionNet:
    """Layered network: analog weights plus high-precision accumulators."""

    def __init__(self, layers, epsilon):
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.layers = layers
        self.epsilon = float(epsilon)
        self.pulse_count = 0
        self.clamp_count = 0
        self.refresh_count = 0

    @classmethod
    def build(cls, sizes, rng, epsilon=None, params=None, w_max=3.0,
              tile_dim=crossbar.MAX_DIM, activations=None, init_scale=None,
              prog_tol=None, prog_max_iter=200):
        """Random init (scaled-normal, clipped to w_max) programmed onto tiles."""
        n_layers = len(sizes) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["softmax_out"]
        if epsilon is None:
            epsilon = 0.001 * w_max
        layers = []
        for l in range(n_layers):
            fan_in, fan_out = sizes[l], sizes[l + 1]
            scale = init_scale if init_scale is not None else np.sqrt(2.0 / fan_in)
            W = np.clip(rng.standard_normal((fan_out, fan_in)) * scale, -w_max, w_max)
            tiled = TiledMatrix.from_matrix(
                W, rng, tile_dim=tile_dim, params=params, w_max=w_max,
                tol=prog_tol, max_iter=prog_max_iter,
            )
            layers.append(Layer(
                weights=tiled,
                chi=np.zeros((fan_out, fan_in)),
                bias=np.zeros(fan_out),
                activation=activations[l],
            ))
        return cls(layers, epsilon)

    @classmethod
    def from_float(cls, weights, biases, rng, params=None, w_max=3.0,
                   epsilon=None, tile_dim=crossbar.MAX_DIM, activations=None,
                   prog_tol=None, prog_max_iter=200):
        """Program trained float weights onto analog tiles (deployment path)."""
        n_layers = len(weights)
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["softmax_out"]
        if epsilon is None:
            epsilon = 0.001 * w_max
        layers = []
        for W, b, act in zip(weights, biases, activations):
            W = np.clip(np.asarray(W, dtype=float), -w_max, w_max)
            tiled = TiledMatrix.from_matrix(
                W, rng, tile_dim=tile_dim, params=params, w_max=w_max,
                tol=prog_tol, max_iter=prog_max_iter,
            )
            layers.append(Layer(
                weights=tiled,
                chi=np.zeros(W.shape),
                bias=np.asarray(b, dtype=float).copy(),
                activation=act,
            ))
        return cls(layers, epsilon)

    def forward(self, x, rng):
        """Analog forward pass; returns (logits, cache for backward)."""
        a = np.asarray(x, dtype=float)
        if a.shape != (self.layers[0].weights.shape[1],):
            raise ValueError(
                f"input length {a.shape} does not match first layer width "
                f"{self.layers[0].weights.shape[1]}"
            )
        cache = {"activations": [a], "pre": []}
        for layer in self.layers:
            z = crossbar.scaled_mvm(layer.weights, a, rng) + layer.bias
            act, _ = ACTIVATIONS[layer.activation]
            a = act(z)
            cache["pre"].append(z)
            cache["activations"].append(a)
        return a, cache

    def backward(self, cache, grad_out, rng):
        """Error backpropagation through the same (noisy) arrays.

        Returns per-layer (delta_W, delta_b); outer products and
        activation derivatives are computed digitally.
        """
        if len(cache["pre"]) != len(self.layers):
            raise ValueError("cache does not match network depth")
        grads = [None] * len(self.layers)
        grad_a = np.asarray(grad_out, dtype=float)
        for l in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[l]
            _, dact = ACTIVATIONS[layer.activation]
            grad_z = grad_a * dact(cache["pre"][l])
            a_in = cache["activations"][l]
            grads[l] = (np.outer(grad_z, a_in), grad_z.copy())
            if l > 0:
                grad_a = crossbar.scaled_mvm_transpose(layer.weights, grad_z, rng)
        return grads

    def apply_update(self, grads, lr, rng):
        """Accumulate into chi and flush whole-epsilon quanta as pulses."""
        for layer, (dW, db) in zip(self.layers, grads):
            layer.chi -= lr * dW
            layer.bias -= lr * db
            self._flush(layer, rng)
        return self

    def _flush(self, layer, rng):
        eps = self.epsilon
        p = layer.weights.params
        eps_g = eps * (p.g_max - p.g_min) / layer.weights.w_max
        d = layer.weights.tile_dim
        for i, row in enumerate(layer.weights.tiles):
            for j, tile in enumerate(row):
                chi = layer.chi[i * d: i * d + tile.rows, j * d: j * d + tile.cols]
                n = np.floor(np.abs(chi) / eps).astype(int)
                if not n.any():
                    continue
                pos = (chi > 0) & (n > 0)
                neg = (chi < 0) & (n > 0)
                for mask, g_arr, t_arr in (
                    (pos, tile.g_plus, tile.t_plus),
                    (neg, tile.g_minus, tile.t_minus),
                ):
                    if not mask.any():
                        continue
                    before = g_arr[mask]
                    after = devices.set_pulse_aggregate(
                        before, n[mask], eps_g, p, rng
                    )
                    self.clamp_count += int(np.sum(after >= p.g_max - 1e-12))
                    g_arr[mask] = after
                    t_arr[mask] = tile.now
                self.pulse_count += int(n.sum())
                chi -= np.sign(chi) * n * eps
                self._refresh_saturated(tile, chi, rng)

    def _refresh_saturated(self, tile, chi_block, rng):
        """Reprogram pairs whose devices hit the ceiling.

        A saturated device can no longer move the weight in its
        direction; re-encoding the decoded weight onto the pair restores
        headroom.
        """
        p = tile.params
        sat = (tile.g_plus >= p.g_max - 1e-12) | (tile.g_minus >= p.g_max - 1e-12)
        if not sat.any():
            return
        w = np.clip(tile.decode(tile.g_plus, tile.g_minus), -tile.w_max, tile.w_max)
        tp, tm = tile.weight_targets(w)
        tol = 0.005 * (p.g_max - p.g_min)
        idx = np.where(sat)
        gp, _, _ = devices.program_iterative_array(
            tile.g_plus[idx], tp[idx], tol, 50, p, rng
        )
        gm, _, _ = devices.program_iterative_array(
            tile.g_minus[idx], tm[idx], tol, 50, p, rng
        )
        tile.g_plus[idx] = gp
        tile.g_minus[idx] = gm
        tile.t_plus[idx] = tile.now
        tile.t_minus[idx] = tile.now
        self.refresh_count += len(idx[0])

    def advance_time(self, dt):
        for layer in self.layers:
            layer.weights.advance_time(dt)
        return self

    def decoded_weights(self):
        return [layer.weights.decode_programmed() for layer in self.layers]


# ---------------------------------------------------------------------------
# Float oracle network (identical topology, exact arithmetic)
# ---------------------------------------------------------------------------

class FloatNet:
    def __init__(self, weights, biases, activations):
        self.W = [w.copy() for w in weights]
        self.b = [b.copy() for b in biases]
        self.activations = list(activations)

    @classmethod
    def like(cls, net):
        """Float copy of a mixed-precision net's programmed weights."""
        return cls(
            net.decoded_weights(),
            [l.bias for l in net.layers],
            [l.activation for l in net.layers],
        )

    @classmethod
    def build(cls, sizes, rng, activations=None, init_scale=None):
        n_layers = len(sizes) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["softmax_out"]
        weights, biases = [], []
        for l in range(n_layers):
            fan_in, fan_out = sizes[l], sizes[l + 1]
            scale = init_scale if init_scale is not None else np.sqrt(2.0 / fan_in)
            weights.append(rng.standard_normal((fan_out, fan_in)) * scale)
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, activations)

    def forward(self, x):
        a = np.asarray(x, dtype=float)
        cache = {"activations": [a], "pre": []}
        for W, b, name in zip(self.W, self.b, self.activations):
            z = W @ a + b
            act, _ = ACTIVATIONS[name]
            a = act(z)
            cache["pre"].append(z)
            cache["activations"].append(a)
        return a, cache

    def backward(self, cache, grad_out):
        grads = [None] * len(self.W)
        grad_a = np.asarray(grad_out, dtype=float)
        for l in range(len(self.W) - 1, -1, -1):
            _, dact = ACTIVATIONS[self.activations[l]]
            grad_z = grad_a * dact(cache["pre"][l])
            grads[l] = (np.outer(grad_z, cache["activations"][l]), grad_z.copy())
            if l > 0:
                grad_a = self.W[l].T @ grad_z
        return grads

    def apply_update(self, grads, lr):
        for l, (dW, db) in enumerate(grads):
            self.W[l] -= lr * dW
            self.b[l] -= lr * db


# ---------------------------------------------------------------------------
# Loss, training loop, drift evaluation
# ---------------------------------------------------------------------------

def loss_and_grad(logits, label, kind, n_classes):
    if kind == "cross_entropy":
        probs = softmax(logits)
        loss = -np.log(max(probs[label], 1e-300))
        grad = probs.copy()
        grad[label] -= 1.0
    else:
        target = np.zeros(n_classes)
        target[label] = 1.0
        diff = logits - target
        loss = float(diff @ diff)
        grad = 2.0 * diff
    return loss, grad


def evaluate(predict_fn, X, y):
    correct = sum(int(np.argmax(predict_fn(x)) == t) for x, t in zip(X, y))
    return correct / len(y)


def train(net, data, cfg, rng, oracle=None, eval_rng_seed=None):
    """Mini-batch SGD over the analog network.

    `data` is (X_train, y_train, X_test, y_test). When `oracle` (a
    FloatNet) is given, it is trained on the identical batch schedule
    for paired comparison. Returns a report dict with per-epoch loss,
    accuracy, and pulse/clamp counters.
    """
    X_train, y_train, X_test, y_test = data
    if len(X_train) == 0:
        raise ValueError("empty dataset")
    n_classes = net.layers[-1].weights.shape[0]
    report = {"epochs": []}
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X_train))
        total_loss = 0.0
        pulses_before = net.pulse_count
        clamps_before = net.clamp_count
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start: start + cfg.batch_size]
            grads_acc = None
            oracle_acc = None
            for s in batch:
                logits, cache = net.forward(X_train[s], rng)
                loss, gout = loss_and_grad(logits, y_train[s], cfg.loss, n_classes)
                total_loss += loss
                grads = net.backward(cache, gout, rng)
                grads_acc = _accumulate(grads_acc, grads, 1.0 / len(batch))
                if oracle is not None:
                    o_logits, o_cache = oracle.forward(X_train[s])
                    _, o_gout = loss_and_grad(o_logits, y_train[s], cfg.loss, n_classes)
                    o_grads = oracle.backward(o_cache, o_gout)
                    oracle_acc = _accumulate(oracle_acc, o_grads, 1.0 / len(batch))
            net.apply_update(grads_acc, cfg.lr, rng)
            if oracle is not None:
                oracle.apply_update(oracle_acc, cfg.lr)
        acc = evaluate(lambda x: net.forward(x, rng)[0], X_test, y_test)
        entry = {
            "loss": total_loss / len(order),
            "acc": acc,
            "pulses": net.pulse_count - pulses_before,
            "clamps": net.clamp_count - clamps_before,
        }
        if oracle is not None:
            entry["oracle_acc"] = evaluate(lambda x: oracle.forward(x)[0], X_test, y_test)
        report["epochs"].append(entry)
    return report


def train_float(net, data, cfg, rng):
    """Plain float SGD (used to pre-train nets for deployment studies)."""
    X_train, y_train, X_test, y_test = data
    if len(X_train) == 0:
        raise ValueError("empty dataset")
    n_classes = net.W[-1].shape[0]
    report = {"epochs": []}
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X_train))
        total_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start: start + cfg.batch_size]
            acc = None
            for s in batch:
                logits, cache = net.forward(X_train[s])
                loss, gout = loss_and_grad(logits, y_train[s], cfg.loss, n_classes)
                total_loss += loss
                acc = _accumulate(acc, net.backward(cache, gout), 1.0 / len(batch))
            net.apply_update(acc, cfg.lr)
        report["epochs"].append({
            "loss": total_loss / len(order),
            "acc": evaluate(lambda x: net.forward(x)[0], X_test, y_test),
        })
    return report


def _accumulate(acc, grads, weight):
    if acc is None:
        return [(dW * weight, db * weight) for dW, db in grads]
    return [(a0 + dW * weight, a1 + db * weight)
            for (a0, a1), (dW, db) in zip(acc, grads)]


def infer_with_drift(net, X_test, y_test, time_points, rng, common_noise_seed=None):
    """Accuracy-vs-time curve: advance the drift clock, then evaluate.

    With `common_noise_seed` set, every time point is evaluated with the
    identical read-noise draws (common random numbers), so differences
    between points isolate the drift effect instead of sampling jitter.
    """
    from .rng import substream

    tp = list(time_points)
    if any(b <= a for a, b in zip(tp, tp[1:])):
        raise ValueError("time_points must be strictly increasing")
    curve = []
    prev = 0.0
    for t in tp:
        net.advance_time(t - prev)
        prev = t
        eval_rng = rng if common_noise_seed is None else substream(common_noise_seed, "drift-eval")
        acc = evaluate(lambda x: net.forward(x, eval_rng)[0], X_test, y_test)
        curve.append({"t": t, "acc": acc})
    return curve
