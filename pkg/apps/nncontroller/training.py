"""nncontroller/training.py"""

import logging
import math

import numpy as np
import torch
from django.conf import settings
from torch import nn

from core.exceptions import DimensionMismatch, Diverged
from nncontroller.epsilon import evaluate_ideal
from nncontroller.mlp import ACTIVATIONS, Layer, MlpController, activate, forward

logger = logging.getLogger(__name__)

TORCH_ACTIVATIONS = {"tanh": nn.Tanh, "sigmoid": nn.Sigmoid}


def parse_arch(arch):
    """Normalize ``[(width, act), ...]`` or ``["8:tanh", ...]`` into pairs."""
    pairs = []
    for item in arch:
        if isinstance(item, str):
            width, _, act = item.partition(":")
            item = (int(width), act or "tanh")
        width, act = int(item[0]), str(item[1])
        if width < 1 or act not in ACTIVATIONS:
            raise DimensionMismatch(f"invalid hidden layer spec {item!r}")
        pairs.append((width, act))
    return pairs


def build_module(n_in, hidden, n_out, generator=None):
    """``nn.Sequential`` of Linear layers and the hidden activations, float64, Xavier-initialised."""
    modules = []
    width = n_in
    for size, act in list(hidden) + [(n_out, "linear")]:
        linear = nn.Linear(width, size, dtype=torch.float64)
        nn.init.xavier_normal_(linear.weight, generator=generator)
        nn.init.zeros_(linear.bias)
        modules.append(linear)
        if act in TORCH_ACTIVATIONS:
            modules.append(TORCH_ACTIVATIONS[act]())
        width = size
    return nn.Sequential(*modules)


def export_layers(module, hidden):
    """``(W, b, act)`` triples of a module built by :func:`build_module`."""
    acts = [act for _, act in hidden] + ["linear"]
    linears = [m for m in module if isinstance(m, nn.Linear)]
    return [
        (m.weight.detach().cpu().numpy().copy(), m.bias.detach().cpu().numpy().copy(), act)
        for m, act in zip(linears, acts)
    ]


def _scale(values):
    values = np.where(values > 0.0, values, 1.0)
    return values


def fit_to_teacher(
    ideal,
    box,
    arch,
    seed,
    *,
    train_density=None,
    max_iter=3000,
    lr=1e-2,
    patience=500,
    anchor=None,
):
    """Least-squares fit of a network to the ideal controller on samples of ``box``.

    ``arch`` lists the hidden layers; the output layer is always linear. Boxes
    whose tensor grid would exceed ``KEEPCLOSE_TRAIN_SAMPLES`` points are sampled
    with a scrambled Sobol sequence. The result is deterministic for a given seed.
    """
    hidden = parse_arch(arch)
    density = train_density or max(11, int(2000 ** (1.0 / box.dim)))
    Y = box.points(density, settings.KEEPCLOSE_TRAIN_SAMPLES, seed=seed)
    T = evaluate_ideal(ideal, Y)
    n_out = T.shape[1]

    x_mu, x_s = box.center, _scale(box.half_width)
    t_mu, t_s = T.mean(axis=0), _scale(T.std(axis=0))
    Xn = (Y - x_mu) / x_s
    Tn = (T - t_mu) / t_s

    if not hidden:
        layers = [_linear_fit(Xn, Tn)]
        iterations = 0
    else:
        layers, iterations = _adam(Xn, Tn, hidden, n_out, seed, max_iter, lr, patience)
        layers[-1] = _polish(Xn, Tn, layers)

    net = _fold_scaling(layers, x_mu, x_s, t_mu, t_s)
    if anchor is not None:
        anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
        offset = np.atleast_1d(ideal(anchor)) - forward(net, anchor)
        last = net.layers[-1]
        net = MlpController(list(net.layers[:-1]) + [Layer(last.W, last.b + offset, last.act)])

    rms = float(np.sqrt(np.mean((forward(net, Y) - T) ** 2)))
    logger.info("Fitted %r after %d iterations (rms error %.3g, seed %d)", net, iterations, rms, seed)
    return net


def _linear_fit(Xn, Tn):
    design = np.hstack([Xn, np.ones((Xn.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(design, Tn, rcond=None)
    return (coef[:-1].T, coef[-1])


def _adam(Xn, Tn, hidden, n_out, seed, max_iter, lr, patience):
    generator = torch.Generator().manual_seed(int(seed))
    module = build_module(Xn.shape[1], hidden, n_out, generator=generator)
    optimizer = torch.optim.Adam(module.parameters(), lr=lr)
    X = torch.from_numpy(np.ascontiguousarray(Xn, dtype=np.float64))
    target = torch.from_numpy(np.ascontiguousarray(Tn, dtype=np.float64))

    first_loss = best_loss = None
    best = {key: value.clone() for key, value in module.state_dict().items()}
    stale = 0
    it = 0
    for it in range(1, max_iter + 1):
        optimizer.zero_grad()
        loss = 0.5 * ((module(X) - target) ** 2).sum(dim=1).mean()
        value = float(loss.item())
        if not math.isfinite(value):
            raise Diverged(f"training loss became non-finite at iteration {it}")
        if first_loss is None:
            first_loss = value

        if best_loss is None or value < best_loss:
            best_loss = value
            best = {key: tensor.detach().clone() for key, tensor in module.state_dict().items()}
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
        if it == patience and best_loss >= first_loss:
            raise Diverged(f"no progress in the first {patience} iterations (loss {value:.3g})")

        loss.backward()
        optimizer.step()

    module.load_state_dict(best)
    logger.debug("Adam stopped at iteration %d, loss %.3g -> %.3g", it, first_loss, best_loss)
    return export_layers(module, hidden), it


def _polish(Xn, Tn, layers):
    """Refit the linear output layer exactly on the trained hidden features."""
    features = Xn
    for W, b, act in layers[:-1]:
        features = activate(act, features @ W.T + b)
    W, b = _linear_fit(features, Tn)
    return (W, b, "linear")


def _fold_scaling(layers, x_mu, x_s, t_mu, t_s):
    layers = [item if len(item) == 3 else (item[0], item[1], "linear") for item in layers]
    W, b, act = layers[0]
    W0 = W / x_s
    b0 = b - W0 @ x_mu
    layers[0] = (W0, b0, act)
    W, b, act = layers[-1]
    layers[-1] = (t_s[:, None] * W, t_s * b + t_mu, act)
    return MlpController([Layer(W, b, act) for W, b, act in layers])
