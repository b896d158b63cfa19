"""nncontroller/mlp.py"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit

from core.exceptions import DimensionMismatch, NonFiniteEntry, ScenarioError
from core.jsonio import read_json, write_json

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "sigmoid", "linear")


def activate(act, z):
    if act == "tanh":
        return np.tanh(z)
    if act == "sigmoid":
        return expit(z)
    return z


def activate_prime(act, z):
    if act == "tanh":
        return 1.0 - np.tanh(z) ** 2
    if act == "sigmoid":
        s = expit(z)
        return s * (1.0 - s)
    return np.ones_like(z)


@dataclass(frozen=True, eq=False)
class Layer:
    W: np.ndarray
    b: np.ndarray
    act: str

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.act not in ACTIVATIONS:
            raise ScenarioError(f"Unsupported activation '{self.act}', expected one of {ACTIVATIONS}")
        if b.shape != (W.shape[0],):
            raise DimensionMismatch(f"bias has shape {b.shape}, weights {W.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise NonFiniteEntry("layer weights must be finite")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)


class MlpController:
    """Feedforward network ``u = pi(y)`` built from affine layers and activations."""

    def __init__(self, layers):
        layers = [layer if isinstance(layer, Layer) else Layer(**layer) for layer in layers]
        if not layers:
            raise DimensionMismatch("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.W.shape[1] != prev.W.shape[0]:
                raise DimensionMismatch(
                    f"layer expects {nxt.W.shape[1]} inputs, previous layer gives {prev.W.shape[0]}"
                )
        self.layers = tuple(layers)

    @property
    def input_dim(self):
        return self.layers[0].W.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].W.shape[0]

    @property
    def is_linear(self):
        return all(layer.act == "linear" for layer in self.layers)

    def __repr__(self):
        widths = [self.input_dim] + [layer.W.shape[0] for layer in self.layers]
        acts = "/".join(layer.act for layer in self.layers)
        return f"MlpController({'-'.join(map(str, widths))}, {acts})"

    def pre_activations(self, y):
        """Pre-activation values of every layer for a batch ``y`` (N x n)."""
        zs = []
        a = y
        for layer in self.layers:
            z = a @ layer.W.T + layer.b
            zs.append(z)
            a = activate(layer.act, z)
        return zs, a

    def to_dict(self):
        return {
            "layers": [
                {"W": layer.W.tolist(), "b": layer.b.tolist(), "act": layer.act}
                for layer in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                [Layer(np.asarray(item["W"]), np.asarray(item["b"]), item["act"]) for item in data["layers"]]
            )
        except KeyError as e:
            raise ScenarioError(f"Weights document is missing key {e}") from e

    @classmethod
    def block_stack(cls, nets, input_groups):
        """Run ``nets`` side by side, net k reading inputs ``input_groups[k]``.

        The stacked network has block-diagonal hidden layers, so its Jacobian is
        exactly zero between a net's output and the inputs it does not read.
        """
        if len(nets) != len(input_groups):
            raise DimensionMismatch("one input group per network is required")
        depth = len(nets[0].layers)
        if any(len(net.layers) != depth for net in nets):
            raise DimensionMismatch("stacked networks must have the same depth")
        n_inputs = max(max(group) for group in input_groups) + 1

        layers = []
        for k in range(depth):
            acts = {net.layers[k].act for net in nets}
            if len(acts) != 1:
                raise DimensionMismatch(f"layer {k} mixes activations {sorted(acts)}")
            if k == 0:
                rows = []
                for net, group in zip(nets, input_groups):
                    if net.input_dim != len(group):
                        raise DimensionMismatch("input group size differs from net input size")
                    W = np.zeros((net.layers[0].W.shape[0], n_inputs))
                    W[:, list(group)] = net.layers[0].W
                    rows.append(W)
                W = np.vstack(rows)
            else:
                W = scipy.linalg.block_diag(*[net.layers[k].W for net in nets])
            b = np.concatenate([net.layers[k].b for net in nets])
            layers.append(Layer(W, b, acts.pop()))
        return cls(layers)

    def restrict(self, inputs, outputs):
        """The network seen through ``inputs`` with every other input held at zero.

        For a block-stacked network this recovers one block exactly.
        """
        inputs, outputs = list(inputs), list(outputs)
        first, last = self.layers[0], self.layers[-1]
        layers = [Layer(first.W[:, inputs], first.b, first.act)] + list(self.layers[1:])
        if len(layers) == 1:
            layers[0] = Layer(first.W[np.ix_(outputs, inputs)], first.b[outputs], first.act)
        else:
            layers[-1] = Layer(last.W[outputs], last.b[outputs], last.act)
        return MlpController(layers)


def _batch(net, y):
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = y[None, :] if single else y
    if Y.ndim != 2 or Y.shape[1] != net.input_dim:
        raise DimensionMismatch(f"controller expects {net.input_dim} inputs, got shape {y.shape}")
    return Y, single


def forward(net, y):
    """Evaluate the network at a point (n,) or a batch (N, n)."""
    Y, single = _batch(net, y)
    _, out = net.pre_activations(Y)
    return out[0] if single else out


def jacobian(net, y):
    """Exact chain-rule Jacobian ``d pi / d y`` at a point or for each row of a batch."""
    Y, single = _batch(net, y)
    zs, _ = net.pre_activations(Y)
    # J has shape (N, width, n)
    J = np.broadcast_to(np.eye(net.input_dim), (Y.shape[0], net.input_dim, net.input_dim))
    for layer, z in zip(net.layers, zs):
        J = np.einsum("ij,njk->nik", layer.W, J)
        J = activate_prime(layer.act, z)[:, :, None] * J
    return J[0] if single else J


def load_weights(path):
    net = MlpController.from_dict(read_json(path))
    logger.info("Loaded %r from %s", net, path)
    return net


def save_weights(net, path):
    write_json(net.to_dict(), path)
