"""Class-conditional denoising diffusion on feature vectors scaled to [-1, 1]."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import NetSpec, Network, load_tensors, mse, one_hot, save_tensors
from .base import check_class, check_finite, config_dict, config_from, minibatches, table_arrays


@dataclass(frozen=True)
class CddpmConfig:
    steps: int = 200
    beta_start: float = 1e-4
    # None scales the classic 1000-step endpoint 0.02 by 1000/steps
    beta_end: float | None = None
    hidden: tuple = (256, 256)
    time_dim: int = 32
    epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0

    @property
    def resolved_beta_end(self) -> float:
        return self.beta_end if self.beta_end is not None else 0.02 * 1000.0 / self.steps


@dataclass(frozen=True)
class Schedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @classmethod
    def linear(cls, steps, beta_start, beta_end) -> "Schedule":
        if not 0.0 < beta_start < beta_end < 1.0:
            raise ValueError("need 0 < beta_start < beta_end < 1")
        betas = np.linspace(beta_start, beta_end, steps)
        alphas = 1.0 - betas
        return cls(betas, alphas, np.cumprod(alphas))

    @property
    def steps(self):
        return self.betas.size

    def at(self, t):
        """Values for 1-based step(s) ``t``."""
        i = np.asarray(t) - 1
        return self.betas[i], self.alphas[i], self.alpha_bars[i]

    def q_sample(self, x0, t, noise):
        """Closed-form forward marginal ``x_t = sqrt(abar) x0 + sqrt(1 - abar) noise``."""
        ab = self.alpha_bars[np.asarray(t) - 1]
        ab = ab[:, None] if np.ndim(ab) else ab
        return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise

    def q_step(self, x_prev, t, noise):
        """One forward transition ``q(x_t | x_{t-1})``."""
        beta = self.betas[t - 1]
        return np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * noise

    def posterior_variance(self, t):
        beta, _, ab = self.at(t)
        ab_prev = self.alpha_bars[t - 2] if t > 1 else 1.0
        return beta * (1.0 - ab_prev) / (1.0 - ab)


def time_embedding(t, dim):
    """Sinusoidal embedding of integer steps, shape ``(len(t), dim)``."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    args = t * freqs[None, :]
    emb = np.hstack([np.sin(args), np.cos(args)])
    if dim % 2:
        emb = np.hstack([emb, np.zeros((emb.shape[0], 1))])
    return emb


@dataclass
class CddpmModel:
    config: CddpmConfig
    n_features: int
    n_classes: int
    denoiser: Network
    schedule: Schedule
    loss_trace: list = field(default_factory=list)

    kind = "CDDPM"

    @classmethod
    def build(cls, config: CddpmConfig, n_features: int, n_classes: int) -> "CddpmModel":
        net = Network(NetSpec.mlp(n_features + config.time_dim + n_classes, config.hidden,
                                  n_features, seed=config.seed))
        sched = Schedule.linear(config.steps, config.beta_start, config.resolved_beta_end)
        return cls(config, n_features, n_classes, net, sched)

    def _inputs(self, x_t, t, y_onehot):
        return np.hstack([x_t, time_embedding(t, self.config.time_dim), y_onehot])

    def predict_noise(self, x_t, t, y_onehot):
        return self.denoiser(self._inputs(x_t, t, y_onehot))

    def generate(self, class_id, count, seed=0):
        """Ancestral sampling from ``x_T ~ N(0, I)``; no noise is added at the last step."""
        check_class(class_id, self.n_classes)
        if count == 0:
            return np.empty((0, self.n_features))
        rng = np.random.default_rng(seed)
        y = np.zeros((count, self.n_classes))
        y[:, class_id] = 1.0
        x = rng.standard_normal((count, self.n_features))
        sched = self.schedule
        for t in range(sched.steps, 0, -1):
            beta, alpha, ab = sched.at(t)
            eps = self.predict_noise(x, np.full(count, t), y)
            x = (x - beta / np.sqrt(1.0 - ab) * eps) / np.sqrt(alpha)
            if t > 1:
                x = x + np.sqrt(sched.posterior_variance(t)) * rng.standard_normal(x.shape)
        return (np.clip(x, -1.0, 1.0) + 1.0) / 2.0

    def save(self, path):
        save_tensors(path, self.denoiser.store.tensors("denoiser."),
                     {"kind": self.kind, "config": config_dict(self.config),
                      "n_features": self.n_features, "n_classes": self.n_classes})

    @classmethod
    def load(cls, path) -> "CddpmModel":
        tensors, meta = load_tensors(path)
        model = cls.build(config_from(CddpmConfig, meta["config"]), meta["n_features"], meta["n_classes"])
        model.denoiser.store.load(tensors, "denoiser.")
        return model


def train_cddpm(train, cfg: CddpmConfig | None = None) -> CddpmModel:
    """Fit the denoiser on the noise-prediction objective with uniform step sampling."""
    cfg = cfg or CddpmConfig()
    X, y, K = table_arrays(train)
    model = CddpmModel.build(cfg, X.shape[1], K)
    net, sched = model.denoiser, model.schedule
    X = 2.0 * X - 1.0
    Y = one_hot(y, K)
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        total, seen = 0.0, 0
        for idx in minibatches(X.shape[0], cfg.batch_size, rng):
            x0, yb = X[idx], Y[idx]
            n = x0.shape[0]
            t = rng.integers(1, sched.steps + 1, n)
            noise = rng.standard_normal(x0.shape)
            x_t = sched.q_sample(x0, t, noise)
            net.store.zero_grad()
            pred, cache = net.forward(model._inputs(x_t, t, yb))
            loss, grad = mse(pred, noise)
            check_finite(loss, "C-DDPM", epoch)
            net.backward(cache, grad)
            net.store.adam_step(cfg.lr)
            total += loss * n
            seen += n
        model.loss_trace.append(total / seen)
    return model
