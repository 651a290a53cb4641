"""Conditional variational autoencoder oversampler."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import NetSpec, Network, ParamStore, gaussian_kl, load_tensors, one_hot, save_tensors
from .base import check_class, check_finite, config_dict, config_from, minibatches, table_arrays


@dataclass(frozen=True)
class CvaeConfig:
    latent_dim: int = 16
    hidden: tuple = (128, 128)
    epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0


@dataclass
class CvaeModel:
    config: CvaeConfig
    n_features: int
    n_classes: int
    encoder: Network
    decoder: Network
    loss_trace: list = field(default_factory=list)

    kind = "CVAE"

    @classmethod
    def build(cls, config: CvaeConfig, n_features: int, n_classes: int) -> "CvaeModel":
        L = config.latent_dim
        enc = Network(NetSpec.mlp(n_features + n_classes, config.hidden, 2 * L, seed=config.seed))
        dec = Network(NetSpec.mlp(L + n_classes, config.hidden, n_features,
                                  out_act="sigmoid", seed=config.seed + 1))
        return cls(config, n_features, n_classes, enc, dec)

    def encode(self, x, y_onehot):
        out = self.encoder(np.hstack([x, y_onehot]))
        L = self.config.latent_dim
        return out[:, :L], out[:, L:]

    def decode(self, z, class_id):
        check_class(class_id, self.n_classes)
        y = np.zeros((z.shape[0], self.n_classes))
        y[:, class_id] = 1.0
        return self.decoder(np.hstack([z, y]))

    def generate(self, class_id, count, seed=0):
        check_class(class_id, self.n_classes)
        if count == 0:
            return np.empty((0, self.n_features))
        z = np.random.default_rng(seed).standard_normal((count, self.config.latent_dim))
        return np.clip(self.decode(z, class_id), 0.0, 1.0)

    def save(self, path):
        tensors = {**self.encoder.store.tensors("encoder."), **self.decoder.store.tensors("decoder.")}
        save_tensors(path, tensors, {"kind": self.kind, "config": config_dict(self.config),
                                     "n_features": self.n_features, "n_classes": self.n_classes})

    @classmethod
    def load(cls, path) -> "CvaeModel":
        tensors, meta = load_tensors(path)
        model = cls.build(config_from(CvaeConfig, meta["config"]), meta["n_features"], meta["n_classes"])
        model.encoder.store.load(tensors, "encoder.")
        model.decoder.store.load(tensors, "decoder.")
        return model


def train_cvae(train, cfg: CvaeConfig | None = None) -> CvaeModel:
    """Fit ``q(z|x,y)`` and ``p(x|z,y)`` on squared reconstruction error plus KL."""
    cfg = cfg or CvaeConfig()
    X, y, K = table_arrays(train)
    d, L = X.shape[1], cfg.latent_dim
    model = CvaeModel.build(cfg, d, K)
    enc, dec = model.encoder, model.decoder
    Y = one_hot(y, K)
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        total, seen = 0.0, 0
        for idx in minibatches(X.shape[0], cfg.batch_size, rng):
            xb, yb = X[idx], Y[idx]
            n = xb.shape[0]
            enc.store.zero_grad()
            dec.store.zero_grad()
            stats, ecache = enc.forward(np.hstack([xb, yb]))
            mu, logvar = stats[:, :L], stats[:, L:]
            eps = rng.standard_normal(mu.shape)
            std = np.exp(0.5 * logvar)
            z = mu + std * eps
            xr, dcache = dec.forward(np.hstack([z, yb]))
            diff = xr - xb
            recon = float(np.sum(diff * diff) / n)
            kl, dmu_kl, dlv_kl = gaussian_kl(mu, logvar)
            loss = recon + kl
            check_finite(loss, "C-VAE", epoch)
            dz = dec.backward(dcache, 2.0 * diff / n)[:, :L]
            dmu = dz + dmu_kl
            dlogvar = dz * eps * 0.5 * std + dlv_kl
            enc.backward(ecache, np.hstack([dmu, dlogvar]))
            enc.store.adam_step(cfg.lr)
            dec.store.adam_step(cfg.lr)
            total += loss * n
            seen += n
        model.loss_trace.append(total / seen)
    return model
