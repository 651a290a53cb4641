"""Conditional Wasserstein GAN with gradient penalty."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import NetSpec, Network, load_tensors, one_hot, save_tensors
from .base import check_class, check_finite, config_dict, config_from, minibatches, table_arrays


@dataclass(frozen=True)
class CwganConfig:
    noise_dim: int = 32
    hidden: tuple = (128, 128)
    epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-3
    n_critic: int = 5
    gp_weight: float = 10.0
    beta1: float = 0.5
    beta2: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.gp_weight <= 0:
            raise ValueError("gp_weight must be positive")
        if self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")


def gradient_penalty(critic: Network, inputs, n_features, weight):
    """Penalty ``weight * mean((||dD/dx|| - 1)^2)`` over the first ``n_features`` inputs.

    Returns ``(value, adjoint)`` where ``adjoint`` is the derivative of the
    penalty w.r.t. the critic's full input gradient (zero on condition
    columns), ready for :meth:`Network.penalty_backward`.  The forward cache
    is returned as third element.
    """
    out, cache = critic.forward(inputs)
    g = critic.input_gradient(cache, np.ones_like(out))
    gx = g[:, :n_features]
    norm = np.sqrt(np.sum(gx * gx, axis=1))
    n = inputs.shape[0]
    value = weight * float(np.mean((norm - 1.0) ** 2))
    scale = np.divide(2.0 * weight * (norm - 1.0) / n, norm, out=np.zeros_like(norm), where=norm > 0)
    adj = np.zeros_like(g)
    adj[:, :n_features] = gx * scale[:, None]
    return value, adj, cache


@dataclass
class CwganModel:
    config: CwganConfig
    n_features: int
    n_classes: int
    generator: Network
    critic: Network
    loss_trace: list = field(default_factory=list)

    kind = "CWGAN"

    @classmethod
    def build(cls, config: CwganConfig, n_features: int, n_classes: int) -> "CwganModel":
        gen = Network(NetSpec.mlp(config.noise_dim + n_classes, config.hidden, n_features,
                                  out_act="sigmoid", seed=config.seed))
        crit = Network(NetSpec.mlp(n_features + n_classes, config.hidden, 1, seed=config.seed + 1))
        return cls(config, n_features, n_classes, gen, crit)

    def generate(self, class_id, count, seed=0):
        check_class(class_id, self.n_classes)
        if count == 0:
            return np.empty((0, self.n_features))
        z = np.random.default_rng(seed).standard_normal((count, self.config.noise_dim))
        y = np.zeros((count, self.n_classes))
        y[:, class_id] = 1.0
        return np.clip(self.generator(np.hstack([z, y])), 0.0, 1.0)

    def save(self, path):
        tensors = {**self.generator.store.tensors("generator."), **self.critic.store.tensors("critic.")}
        save_tensors(path, tensors, {"kind": self.kind, "config": config_dict(self.config),
                                     "n_features": self.n_features, "n_classes": self.n_classes})

    @classmethod
    def load(cls, path) -> "CwganModel":
        tensors, meta = load_tensors(path)
        model = cls.build(config_from(CwganConfig, meta["config"]), meta["n_features"], meta["n_classes"])
        model.generator.store.load(tensors, "generator.")
        model.critic.store.load(tensors, "critic.")
        return model


def train_cwgan(train, cfg: CwganConfig | None = None) -> CwganModel:
    """Alternate ``n_critic`` critic updates with one generator update per minibatch.

    The loss trace records the critic loss (negative Wasserstein estimate plus
    penalty) averaged per epoch.
    """
    cfg = cfg or CwganConfig()
    X, y, K = table_arrays(train)
    d = X.shape[1]
    model = CwganModel.build(cfg, d, K)
    gen, crit = model.generator, model.critic
    Y = one_hot(y, K)
    rng = np.random.default_rng(cfg.seed)
    adam = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    for epoch in range(cfg.epochs):
        total, steps = 0.0, 0
        for idx in minibatches(X.shape[0], cfg.batch_size, rng):
            xb, yb = X[idx], Y[idx]
            n = xb.shape[0]
            for _ in range(cfg.n_critic):
                z = rng.standard_normal((n, cfg.noise_dim))
                fake = gen(np.hstack([z, yb]))
                u = rng.random((n, 1))
                x_hat = u * xb + (1.0 - u) * fake
                crit.store.zero_grad()
                d_real, c_real = crit.forward(np.hstack([xb, yb]))
                d_fake, c_fake = crit.forward(np.hstack([fake, yb]))
                gp, adj, c_hat = gradient_penalty(crit, np.hstack([x_hat, yb]), d, cfg.gp_weight)
                loss = float(d_fake.mean() - d_real.mean()) + gp
                check_finite(loss, "C-WGAN critic", epoch)
                crit.backward(c_real, np.full_like(d_real, -1.0 / n))
                crit.backward(c_fake, np.full_like(d_fake, 1.0 / n))
                crit.penalty_backward(c_hat, adj)
                crit.store.adam_step(**adam)
                total += loss
                steps += 1
            z = rng.standard_normal((n, cfg.noise_dim))
            gen.store.zero_grad()
            fake, g_cache = gen.forward(np.hstack([z, yb]))
            d_fake, c_fake = crit.forward(np.hstack([fake, yb]))
            g_loss = -float(d_fake.mean())
            check_finite(g_loss, "C-WGAN generator", epoch)
            dx = crit.backward(c_fake, np.full_like(d_fake, -1.0 / n), accumulate_params=False)
            gen.backward(g_cache, dx[:, :d])
            gen.store.adam_step(**adam)
        model.loss_trace.append(total / steps)
    return model
