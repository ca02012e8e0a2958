"""Class-imbalance detection and TVAE-based minority oversampling.

Each minority class gets its own variational autoencoder trained on its
standardized rows; synthetic rows are decoder means of prior draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import ClassDistribution, EncodedDataset, class_distribution
from .errors import ConfigError, DataError, TrainingError
from .parallel import ordered_map

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MinorityClass:
    class_id: int
    count: int
    deficit: int


@dataclass(frozen=True)
class ImbalanceReport:
    minority_classes: list[MinorityClass]
    target: int


@dataclass(frozen=True)
class TvaeConfig:
    latent_dim: int = 16
    hidden_sizes: tuple[int, ...] = (64, 32)
    epochs: int = 300
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 < self.learning_rate < 1.0:
            raise ConfigError("learning_rate must lie in (0, 1)")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))


@dataclass
class TvaeModel:
    params: dict[str, np.ndarray]
    mean: np.ndarray
    std: np.ndarray
    modeled: np.ndarray  # boolean mask of columns with positive variance
    config: TvaeConfig
    latent_dim: int
    loss_history: list[float] = field(default_factory=list)
    rng: np.random.Generator | None = None


# ---------------------------------------------------------------------------
# imbalance detection
# ---------------------------------------------------------------------------

def imbalance_target(dist: ClassDistribution, target: str = "half") -> int:
    """Samples each minority class is raised to: ceil(avg/2) or ceil(avg)."""
    if target == "half":
        return math.ceil(dist.threshold)
    if target == "average":
        return math.ceil(dist.average)
    raise ConfigError(f"unknown balance target {target!r}")


def detect_imbalance(dist: ClassDistribution, target: str = "half") -> ImbalanceReport:
    """Classes strictly below half the average count, with their deficits."""
    goal = imbalance_target(dist, target)
    minority = [
        MinorityClass(c, int(n), goal - int(n))
        for c, n in enumerate(dist.counts)
        if n < dist.threshold and goal - int(n) >= 1
    ]
    return ImbalanceReport(minority, goal)


# ---------------------------------------------------------------------------
# evidence lower bound
# ---------------------------------------------------------------------------

def elbo_terms(x, reconstruction, mu, logvar) -> tuple[float, float]:
    """Batch-mean Gaussian reconstruction NLL (unit variance) and KL to N(0, I).

    The training loss ``rec + kl`` is the negated ELBO up to a constant.
    """
    x = np.asarray(x, dtype=np.float64)
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if x.shape != reconstruction.shape or mu.shape != logvar.shape:
        raise DataError("elbo_terms: shape mismatch")
    if x.ndim == 1:
        x, reconstruction = x[None, :], reconstruction[None, :]
    if mu.ndim == 1:
        mu, logvar = mu[None, :], logvar[None, :]
    if mu.shape[0] != x.shape[0]:
        raise DataError("elbo_terms: batch sizes differ")
    rec = 0.5 * np.sum((x - reconstruction) ** 2, axis=1).mean()
    kl = (-0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar), axis=1)).mean()
    return float(rec), float(kl)


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------

def _layer_sizes(d: int, hidden: tuple[int, ...], latent: int):
    enc = [d, *hidden]
    dec = [latent, *reversed(hidden), d]
    return enc, dec


def init_params(d: int, hidden: tuple[int, ...], latent: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    enc, dec = _layer_sizes(d, hidden, latent)
    params = {}

    def dense(name, fan_in, fan_out):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params[f"{name}.W"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"{name}.b"] = np.zeros(fan_out)

    for i in range(len(enc) - 1):
        dense(f"enc{i}", enc[i], enc[i + 1])
    dense("mu", enc[-1], latent)
    dense("logvar", enc[-1], latent)
    for i in range(len(dec) - 1):
        dense(f"dec{i}", dec[i], dec[i + 1])
    return params


def _n_layers(params, prefix):
    return sum(1 for k in params if k.startswith(prefix) and k.endswith(".W"))


def encode(params, x):
    a = x
    for i in range(_n_layers(params, "enc")):
        a = np.maximum(a @ params[f"enc{i}.W"] + params[f"enc{i}.b"], 0.0)
    return a @ params["mu.W"] + params["mu.b"], a @ params["logvar.W"] + params["logvar.b"]


def decode(params, z):
    a = z
    n = _n_layers(params, "dec")
    for i in range(n):
        a = a @ params[f"dec{i}.W"] + params[f"dec{i}.b"]
        if i < n - 1:
            a = np.maximum(a, 0.0)
    return a


def loss_and_grads(params: dict[str, np.ndarray], x: np.ndarray, eps: np.ndarray):
    """Negated-ELBO loss and analytic gradients for a fixed noise draw ``eps``."""
    B = x.shape[0]
    grads = {}
    n_enc = _n_layers(params, "enc")
    n_dec = _n_layers(params, "dec")

    acts = [x]
    a = x
    for i in range(n_enc):
        a = np.maximum(a @ params[f"enc{i}.W"] + params[f"enc{i}.b"], 0.0)
        acts.append(a)
    h = acts[-1]
    mu = h @ params["mu.W"] + params["mu.b"]
    lv = h @ params["logvar.W"] + params["logvar.b"]
    std = np.exp(0.5 * lv)
    z = mu + std * eps

    dacts = [z]
    a = z
    for i in range(n_dec):
        a = a @ params[f"dec{i}.W"] + params[f"dec{i}.b"]
        if i < n_dec - 1:
            a = np.maximum(a, 0.0)
        dacts.append(a)
    xhat = dacts[-1]

    rec, kl = elbo_terms(x, xhat, mu, lv)
    loss = rec + kl

    delta = (xhat - x) / B
    for i in reversed(range(n_dec)):
        if i < n_dec - 1:
            delta = delta * (dacts[i + 1] > 0.0)
        grads[f"dec{i}.W"] = dacts[i].T @ delta
        grads[f"dec{i}.b"] = delta.sum(axis=0)
        delta = delta @ params[f"dec{i}.W"].T
    dz = delta
    dmu = dz + mu / B
    dlv = dz * eps * 0.5 * std + 0.5 * (np.exp(lv) - 1.0) / B
    grads["mu.W"] = h.T @ dmu
    grads["mu.b"] = dmu.sum(axis=0)
    grads["logvar.W"] = h.T @ dlv
    grads["logvar.b"] = dlv.sum(axis=0)
    delta = dmu @ params["mu.W"].T + dlv @ params["logvar.W"].T
    for i in reversed(range(n_enc)):
        delta = delta * (acts[i + 1] > 0.0)
        grads[f"enc{i}.W"] = acts[i].T @ delta
        grads[f"enc{i}.b"] = delta.sum(axis=0)
        delta = delta @ params[f"enc{i}.W"].T
    return loss, grads


# ---------------------------------------------------------------------------
# training and sampling
# ---------------------------------------------------------------------------

def train_tvae(rows, cfg: TvaeConfig) -> TvaeModel:
    """Fit a VAE to the rows of one class; zero-variance columns pass through."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2 or rows.shape[1] < 1:
        raise DataError(f"train_tvae needs >= 2 rows and >= 1 column, got shape {rows.shape}")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    modeled = std > 0.0
    rng = np.random.default_rng([int(cfg.seed), 0])
    d = int(modeled.sum())
    if d == 0:
        return TvaeModel({}, mean, std, modeled, cfg, 0, [], np.random.default_rng([int(cfg.seed), 1]))

    x_all = (rows[:, modeled] - mean[modeled]) / std[modeled]
    latent = min(cfg.latent_dim, d)
    params = init_params(d, cfg.hidden_sizes, latent, rng)
    m1 = {k: np.zeros_like(v) for k, v in params.items()}
    m2 = {k: np.zeros_like(v) for k, v in params.items()}
    n = x_all.shape[0]
    step = 0
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            batch = x_all[order[s:s + cfg.batch_size]]
            eps = rng.standard_normal((batch.shape[0], latent))
            loss, grads = loss_and_grads(params, batch, eps)
            if not math.isfinite(loss):
                raise TrainingError(f"TVAE loss became non-finite in epoch {epoch}")
            total += loss * batch.shape[0]
            step += 1
            c1 = 1.0 - ADAM_BETA1 ** step
            c2 = 1.0 - ADAM_BETA2 ** step
            for k, gk in grads.items():
                m1[k] = ADAM_BETA1 * m1[k] + (1.0 - ADAM_BETA1) * gk
                m2[k] = ADAM_BETA2 * m2[k] + (1.0 - ADAM_BETA2) * gk * gk
                params[k] -= cfg.learning_rate * (m1[k] / c1) / (np.sqrt(m2[k] / c2) + ADAM_EPS)
        history.append(total / n)
    return TvaeModel(params, mean, std, modeled, cfg, latent, history, np.random.default_rng([int(cfg.seed), 1]))


def sample_synthetic(model: TvaeModel, n: int, seed: int | None = None) -> np.ndarray:
    """Draw ``n`` rows in the original feature units.

    Without ``seed`` the model's own stream is advanced, so a fixed model
    seed and call sequence reproduce the same rows.
    """
    if n < 1:
        raise ConfigError("sample_synthetic needs n >= 1")
    rng = model.rng if seed is None else np.random.default_rng(seed)
    out = np.tile(model.mean, (n, 1))
    if model.latent_dim:
        z = rng.standard_normal((n, model.latent_dim))
        xhat = decode(model.params, z)
        out[:, model.modeled] = xhat * model.std[model.modeled] + model.mean[model.modeled]
    if not np.isfinite(out).all():
        raise TrainingError("TVAE produced non-finite samples")
    return out


# ---------------------------------------------------------------------------
# balancing
# ---------------------------------------------------------------------------

@dataclass
class BalancedView:
    """Training rows after oversampling; ``source`` is -1 for synthetic rows."""

    features: np.ndarray
    labels: np.ndarray
    source: np.ndarray
    summary: dict


def balance(ds: EncodedDataset, train_idx, cfg: TvaeConfig, target: str = "half") -> BalancedView:
    """Raise every class below half the average count to the target count.

    Original rows come first, in ``train_idx`` order, then synthetic rows
    grouped by class id.
    """
    train_idx = np.asarray(train_idx, dtype=np.intp)
    if train_idx.size == 0:
        raise DataError("balance needs a non-empty training index")
    dist = class_distribution(ds, train_idx)
    report = detect_imbalance(dist, target)
    X = ds.features[train_idx]
    y = ds.labels[train_idx]
    col_std = X.std(axis=0)

    def synthesize(mc: MinorityClass):
        rows = X[y == mc.class_id]
        if rows.shape[0] == 0:
            return np.empty((0, X.shape[1])), "empty"
        if rows.shape[0] == 1:
            rng = np.random.default_rng([int(cfg.seed), mc.class_id, 1])
            noise = rng.standard_normal((mc.deficit, X.shape[1])) * (1e-6 * col_std)
            return rows[0] + noise, "jitter"
        sub = TvaeConfig(cfg.latent_dim, cfg.hidden_sizes, cfg.epochs, cfg.batch_size,
                         cfg.learning_rate, int(np.random.SeedSequence([int(cfg.seed), mc.class_id]).generate_state(1)[0]))
        model = train_tvae(rows, sub)
        return sample_synthetic(model, mc.deficit), "tvae"

    produced = ordered_map(synthesize, report.minority_classes)
    blocks_X = [X]
    blocks_y = [y]
    per_class = []
    for mc, (rows, method) in zip(report.minority_classes, produced):
        blocks_X.append(rows)
        blocks_y.append(np.full(rows.shape[0], mc.class_id, dtype=np.intp))
        per_class.append({"class_id": mc.class_id, "before": mc.count, "synthesized": int(rows.shape[0]),
                          "after": mc.count + int(rows.shape[0]), "method": method})
    feats = np.vstack(blocks_X)
    labels = np.concatenate(blocks_y)
    n_syn = feats.shape[0] - X.shape[0]
    source = np.concatenate([train_idx, np.full(n_syn, -1, dtype=np.intp)])
    summary = {
        "target_rule": target,
        "average": dist.average,
        "threshold": dist.threshold,
        "target_count": report.target,
        "counts_before": [int(c) for c in dist.counts],
        "counts_after": [int(c) for c in np.bincount(labels, minlength=ds.n_classes)],
        "minority_classes": per_class,
        "fallbacks": [p["class_id"] for p in per_class if p["method"] != "tvae"],
    }
    return BalancedView(feats, labels, source, summary)
