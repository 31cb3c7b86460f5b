"""Small neural-network engine shared by the forecaster and the Q-learner.

Provides dense multilayer perceptrons and a single-layer LSTM with
hand-derived backpropagation, Adam and Rprop optimizers, soft parameter
blending for target networks, a central-finite-difference gradient
checker, and a JSON checkpoint format.

All arithmetic is float64; the gradient checks need the headroom.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Parameter or input dimensions disagree."""


class NumericError(RuntimeError):
    """A non-finite value entered a parameter update."""


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    # Uniform in +/- sqrt(6 / (fan_in + fan_out)): keeps initial outputs small.
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _check_finite_grads(grads: list[np.ndarray]) -> None:
    for k, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            bad = np.argwhere(~np.isfinite(g))[0]
            raise NumericError(
                f"non-finite gradient in array {k} at index {tuple(int(i) for i in bad)}"
            )


# ---------------------------------------------------------------------------
# Dense network
# ---------------------------------------------------------------------------

@dataclass
class Mlp:
    """Fully connected network.

    ``weights[k]`` has shape (out_k, in_k); adjacent layers must chain.
    ``activations[k]`` is "relu" or "linear"; the default stack uses ReLU
    hidden layers and a linear output so predictions are unbounded.
    ``forward`` returns the final pre-activation (the output layer is
    linear, so that *is* the output).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ShapeError("need one (weight, bias) pair per layer")
        if len(self.activations) != len(self.weights):
            raise ShapeError("need one activation tag per layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(
                    f"layer {k} expects {w.shape[1]} inputs, got {self.weights[k - 1].shape[0]}"
                )
            if self.activations[k] not in ("relu", "linear"):
                raise ShapeError(f"unknown activation {self.activations[k]!r}")

    # -- construction -------------------------------------------------------

    @classmethod
    def random(cls, layer_sizes: list[int], seed: int, activations: list[str] | None = None) -> "Mlp":
        """Seeded init: Glorot-uniform weights, zero biases. Deterministic."""
        if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
            raise ShapeError(f"need >= 2 positive layer sizes, got {layer_sizes}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            weights.append(_glorot(rng, fan_out, fan_in))
            biases.append(np.zeros(fan_out))
        if activations is None:
            activations = ["relu"] * (len(weights) - 1) + ["linear"]
        return cls(weights, biases, activations)

    @classmethod
    def zeros(cls, layer_sizes: list[int], activations: list[str] | None = None) -> "Mlp":
        if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
            raise ShapeError(f"need >= 2 positive layer sizes, got {layer_sizes}")
        weights = [np.zeros((o, i)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])]
        biases = [np.zeros(o) for o in layer_sizes[1:]]
        if activations is None:
            activations = ["relu"] * (len(weights) - 1) + ["linear"]
        return cls(weights, biases, activations)

    # -- introspection ------------------------------------------------------

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def params(self) -> list[np.ndarray]:
        """Live parameter arrays in a fixed order (W1, b1, W2, b2, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights],
                   [b.copy() for b in self.biases],
                   list(self.activations))

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the network; accepts a single vector or a (batch, in) array."""
        out, _ = self._forward_cache(np.asarray(x, dtype=float))
        return out

    def _forward_cache(self, x: np.ndarray):
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[-1] != self.in_dim:
            raise ShapeError(f"input has {a.shape[-1]} features, network expects {self.in_dim}")
        layer_inputs = []
        preacts = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            layer_inputs.append(a)
            z = a @ w.T + b
            preacts.append(z)
            # ReLU subgradient at exactly 0 is 0, so the mask is z > 0.
            a = np.maximum(z, 0.0) if act == "relu" else z
        out = preacts[-1] if self.activations[-1] == "linear" else a
        if single:
            out = out[0]
        return out, (layer_inputs, preacts, single)

    def backward(self, x: np.ndarray, output_gradient: np.ndarray) -> list[np.ndarray]:
        """Gradients of <output, output_gradient> w.r.t. every parameter.

        For batched inputs the per-sample inner products are summed.
        Returns arrays in ``params()`` order.
        """
        _, cache = self._forward_cache(np.asarray(x, dtype=float))
        g = np.asarray(output_gradient, dtype=float)
        if cache[2]:  # single vector
            g = g[None, :]
        if g.shape[-1] != self.out_dim:
            raise ShapeError(f"output gradient has {g.shape[-1]} entries, expected {self.out_dim}")
        return self._backward_from_cache(cache, g)

    def _backward_from_cache(self, cache, g: np.ndarray) -> list[np.ndarray]:
        layer_inputs, preacts, _ = cache
        grads: list[np.ndarray] = [np.empty(0)] * (2 * len(self.weights))
        d = g
        for k in range(len(self.weights) - 1, -1, -1):
            if self.activations[k] == "relu":
                d = d * (preacts[k] > 0.0)
            grads[2 * k] = d.T @ layer_inputs[k]
            grads[2 * k + 1] = d.sum(axis=0)
            if k > 0:
                d = d @ self.weights[k]
        return grads


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class Lstm:
    """Single-layer LSTM with a dense scalar head.

    Gate recursion per step (zero initial hidden and cell state):
        forget  f = sigmoid(W_f x + U_f h + b_f)
        input   i = sigmoid(W_i x + U_i h + b_i)
        cand    g = tanh   (W_g x + U_g h + b_g)
        output  o = sigmoid(W_o x + U_o h + b_o)
        cell    c = f * c_prev + i * g
        hidden  h = o * tanh(c)
    The prediction is w_out . h_last + b_out.
    """

    w_in_f: np.ndarray
    w_rec_f: np.ndarray
    b_f: np.ndarray
    w_in_i: np.ndarray
    w_rec_i: np.ndarray
    b_i: np.ndarray
    w_in_g: np.ndarray
    w_rec_g: np.ndarray
    b_g: np.ndarray
    w_in_o: np.ndarray
    w_rec_o: np.ndarray
    b_o: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    @classmethod
    def random(cls, input_dim: int, units: int, seed: int) -> "Lstm":
        if input_dim < 1 or units < 1:
            raise ShapeError(f"input_dim and units must be >= 1, got {input_dim}, {units}")
        rng = np.random.default_rng(seed)
        def gate():
            return (_glorot(rng, units, input_dim),
                    _glorot(rng, units, units),
                    np.zeros(units))
        wf, uf, bf = gate()
        wi, ui, bi = gate()
        wg, ug, bg = gate()
        wo, uo, bo = gate()
        w_out = _glorot(rng, 1, units)[0]
        return cls(wf, uf, bf, wi, ui, bi, wg, ug, bg, wo, uo, bo, w_out, np.zeros(1))

    @classmethod
    def zeros(cls, input_dim: int, units: int) -> "Lstm":
        z = lambda *s: np.zeros(s)
        return cls(z(units, input_dim), z(units, units), z(units),
                   z(units, input_dim), z(units, units), z(units),
                   z(units, input_dim), z(units, units), z(units),
                   z(units, input_dim), z(units, units), z(units),
                   z(units), z(1))

    @property
    def units(self) -> int:
        return self.w_rec_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_in_f.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.w_in_f, self.w_rec_f, self.b_f,
                self.w_in_i, self.w_rec_i, self.b_i,
                self.w_in_g, self.w_rec_g, self.b_g,
                self.w_in_o, self.w_rec_o, self.b_o,
                self.w_out, self.b_out]

    def copy(self) -> "Lstm":
        return Lstm(*[p.copy() for p in self.params()])

    # -- forward ------------------------------------------------------------

    def _coerce_batch(self, sequences: np.ndarray) -> np.ndarray:
        x = np.asarray(sequences, dtype=float)
        if x.ndim == 2 and self.input_dim == 1:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(f"expected sequences of {self.input_dim}-dim inputs, got {x.shape}")
        if x.shape[1] == 0:
            raise ShapeError("empty sequence")
        return x

    def forward(self, sequence: np.ndarray) -> tuple[np.ndarray, float]:
        """Run one sequence; returns (final hidden state, scalar prediction)."""
        seq = np.asarray(sequence, dtype=float)
        if seq.ndim == 1:
            seq = seq[:, None]
        preds, cache = self._forward_batch_cache(seq[None, :, :])
        return cache["h"][-1][0], float(preds[0])

    def forward_batch(self, sequences: np.ndarray) -> np.ndarray:
        """Predictions for a (batch, steps[, input_dim]) array of sequences."""
        preds, _ = self._forward_batch_cache(self._coerce_batch(sequences))
        return preds

    def _forward_batch_cache(self, x: np.ndarray):
        x = self._coerce_batch(x)
        n, steps, _ = x.shape
        units = self.units
        h = np.zeros((n, units))
        c = np.zeros((n, units))
        cache = {"x": x, "f": [], "i": [], "g": [], "o": [],
                 "c": [], "h": [], "h_prev": [], "c_prev": [], "tanh_c": []}
        for t in range(steps):
            xt = x[:, t, :]
            cache["h_prev"].append(h)
            cache["c_prev"].append(c)
            f = _sigmoid(xt @ self.w_in_f.T + h @ self.w_rec_f.T + self.b_f)
            i = _sigmoid(xt @ self.w_in_i.T + h @ self.w_rec_i.T + self.b_i)
            g = np.tanh(xt @ self.w_in_g.T + h @ self.w_rec_g.T + self.b_g)
            o = _sigmoid(xt @ self.w_in_o.T + h @ self.w_rec_o.T + self.b_o)
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            for key, val in (("f", f), ("i", i), ("g", g), ("o", o),
                             ("c", c), ("h", h), ("tanh_c", tc)):
                cache[key].append(val)
        preds = h @ self.w_out + self.b_out[0]
        return preds, cache

    # -- backward -----------------------------------------------------------

    def backward(self, sequence: np.ndarray, loss_gradient: float) -> list[np.ndarray]:
        """Backpropagation through time of prediction * loss_gradient."""
        seq = np.asarray(sequence, dtype=float)
        if seq.ndim == 1:
            seq = seq[:, None]
        _, cache = self._forward_batch_cache(seq[None, :, :])
        return self._backward_from_cache(cache, np.array([float(loss_gradient)]))

    def _backward_from_cache(self, cache, dy: np.ndarray) -> list[np.ndarray]:
        x = cache["x"]
        steps = x.shape[1]
        grads = [np.zeros_like(p) for p in self.params()]
        (dwf, duf, dbf, dwi, dui, dbi, dwg, dug, dbg,
         dwo, duo, dbo, dw_out, db_out) = grads

        h_last = cache["h"][-1]
        dw_out += dy @ h_last
        db_out += dy.sum(keepdims=True)
        dh = dy[:, None] * self.w_out[None, :]
        dc = np.zeros_like(dh)
        for t in range(steps - 1, -1, -1):
            f, i, g, o = cache["f"][t], cache["i"][t], cache["g"][t], cache["o"][t]
            tc = cache["tanh_c"][t]
            h_prev, c_prev = cache["h_prev"][t], cache["c_prev"][t]
            xt = x[:, t, :]

            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            df = dc * c_prev
            di = dc * g
            dg = dc * i

            df_pre = df * f * (1.0 - f)
            di_pre = di * i * (1.0 - i)
            dg_pre = dg * (1.0 - g * g)
            do_pre = do * o * (1.0 - o)

            dwf += df_pre.T @ xt
            duf += df_pre.T @ h_prev
            dbf += df_pre.sum(axis=0)
            dwi += di_pre.T @ xt
            dui += di_pre.T @ h_prev
            dbi += di_pre.sum(axis=0)
            dwg += dg_pre.T @ xt
            dug += dg_pre.T @ h_prev
            dbg += dg_pre.sum(axis=0)
            dwo += do_pre.T @ xt
            duo += do_pre.T @ h_prev
            dbo += do_pre.sum(axis=0)

            dh = (df_pre @ self.w_rec_f + di_pre @ self.w_rec_i
                  + dg_pre @ self.w_rec_g + do_pre @ self.w_rec_o)
            dc = dc * f
        return grads


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam with bias-corrected moments. Updates parameters in place."""

    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, net, grads: list[np.ndarray]) -> None:
        params = net.params()
        if len(params) != len(grads):
            raise ShapeError(f"{len(grads)} gradient arrays for {len(params)} parameter arrays")
        _check_finite_grads(grads)
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            if p.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Rprop:
    """Resilient backpropagation: sign-based per-parameter step adaptation.

    Classic constants: grow 1.2 on a stable gradient sign, shrink 0.5 on a
    sign flip (skipping that update), steps clamped to [step_min, step_max].
    """

    def __init__(self, step_init: float = 0.1, grow: float = 1.2, shrink: float = 0.5,
                 step_min: float = 1e-6, step_max: float = 50.0):
        self.step_init = step_init
        self.grow = grow
        self.shrink = shrink
        self.step_min = step_min
        self.step_max = step_max
        self._steps: list[np.ndarray] | None = None
        self._prev: list[np.ndarray] | None = None

    def step(self, net, grads: list[np.ndarray]) -> None:
        params = net.params()
        if len(params) != len(grads):
            raise ShapeError(f"{len(grads)} gradient arrays for {len(params)} parameter arrays")
        _check_finite_grads(grads)
        if self._steps is None:
            self._steps = [np.full_like(p, self.step_init) for p in params]
            self._prev = [np.zeros_like(p) for p in params]
        for k, (p, g) in enumerate(zip(params, grads)):
            if p.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            prod = self._prev[k] * g
            steps = self._steps[k]
            steps[prod > 0] = np.minimum(steps[prod > 0] * self.grow, self.step_max)
            steps[prod < 0] = np.maximum(steps[prod < 0] * self.shrink, self.step_min)
            g_eff = np.where(prod < 0, 0.0, g)
            p -= np.sign(g_eff) * steps
            self._prev[k] = g_eff


def soft_update(target, local, tau: float):
    """Blend target parameters toward local: new = (1 - tau) * target + tau * local."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    if type(target) is not type(local):
        raise ShapeError("target and local networks have different kinds")
    blended = target.copy()
    for pt, pl in zip(blended.params(), local.params()):
        if pt.shape != pl.shape:
            raise ShapeError(f"parameter shapes differ: {pt.shape} vs {pl.shape}")
        pt *= 1.0 - tau
        pt += tau * pl
    return blended


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(net, inputs: np.ndarray, epsilon: float = 1e-5,
               probe: np.ndarray | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    For an ``Mlp`` the checked scalar is <probe, forward(inputs)> (probe
    defaults to all ones); for an ``Lstm`` it is the scalar prediction.
    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if isinstance(net, Mlp):
        if probe is None:
            probe = np.ones(net.out_dim)
        evaluate = lambda: float(np.dot(probe, net.forward(inputs)))
        analytic = net.backward(inputs, probe)
    elif isinstance(net, Lstm):
        evaluate = lambda: net.forward(inputs)[1]
        analytic = net.backward(inputs, 1.0)
    else:
        raise TypeError(f"cannot gradient-check {type(net).__name__}")

    worst = 0.0
    for p, g in zip(net.params(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            f_plus = evaluate()
            flat[idx] = orig - epsilon
            f_minus = evaluate()
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            denom = max(abs(gflat[idx]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[idx] - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_network(net, path: str) -> None:
    """Write a network as JSON: shape header plus row-major parameter arrays."""
    if isinstance(net, Mlp):
        blob = {"kind": "mlp", "layer_sizes": net.layer_sizes, "activations": net.activations}
    elif isinstance(net, Lstm):
        blob = {"kind": "lstm", "input_dim": net.input_dim, "units": net.units}
    else:
        raise TypeError(f"cannot serialize {type(net).__name__}")
    blob["arrays"] = [p.reshape(-1).tolist() for p in net.params()]
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_network(path: str):
    with open(path) as fh:
        blob = json.load(fh)
    kind = blob.get("kind")
    if kind == "mlp":
        net = Mlp.zeros(blob["layer_sizes"], activations=blob["activations"])
    elif kind == "lstm":
        net = Lstm.zeros(blob["input_dim"], blob["units"])
    else:
        raise ValueError(f"unknown network kind {kind!r} in {path}")
    arrays = blob["arrays"]
    params = net.params()
    if len(arrays) != len(params):
        raise ShapeError(f"checkpoint has {len(arrays)} arrays, expected {len(params)}")
    for p, flat in zip(params, arrays):
        vals = np.asarray(flat, dtype=float)
        if vals.size != p.size:
            raise ShapeError(f"array size {vals.size} != expected {p.size}")
        p[...] = vals.reshape(p.shape)
    return net
