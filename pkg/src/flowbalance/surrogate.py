"""Synthetic NF-BoT-IoT-shaped NetFlow records for runs without the real CSV.

The frame carries every raw column of the NetFlow export (addresses, ports,
L7 protocol and the binary label included) so it exercises the same
ingestion path as the real file.  Per-class profiles are hand-set: DDoS and
DoS overlap heavily, Theft sits close to Benign, Reconnaissance is mostly
short SYN probes.
"""
from __future__ import annotations

import numpy as np
import pandas as pd

from .data import FlowTable, builtin_schema, ingest_frame, subsample

BOT_IOT_COUNTS = {
    "Benign": 13_859,
    "Theft": 1_909,
    "DDoS": 56_844,
    "DoS": 56_833,
    "Reconnaissance": 470_655,
}

# protocol mix, tcp flag values with weights, log-normal (mu, sigma) for
# bytes-per-packet in/out, packets in, and duration in ms (0 w.p. p_zero)
_PROFILES = {
    "Benign": dict(proto=([6, 17, 1], [0.55, 0.4, 0.05]), flags=([0, 24, 26, 27, 30], [0.4, 0.2, 0.2, 0.1, 0.1]),
                   bpp=(5.0, 0.9), out_bpp=(5.5, 1.2), pkts=(1.6, 1.0), reply=0.7, dur=(7.0, 2.0, 0.45)),
    "Theft": dict(proto=([6, 17], [0.85, 0.15]), flags=([24, 26, 27, 30], [0.35, 0.3, 0.2, 0.15]),
                  bpp=(5.4, 0.7), out_bpp=(6.2, 0.9), pkts=(2.4, 0.9), reply=0.9, dur=(8.0, 1.5, 0.2)),
    "DDoS": dict(proto=([6, 17, 1], [0.55, 0.42, 0.03]), flags=([0, 2, 22, 20], [0.42, 0.3, 0.18, 0.1]),
                 bpp=(4.0, 0.5), out_bpp=(3.8, 0.6), pkts=(1.0, 0.9), reply=0.35, dur=(6.5, 2.2, 0.55)),
    "DoS": dict(proto=([6, 17, 1], [0.5, 0.47, 0.03]), flags=([0, 2, 22, 20], [0.45, 0.27, 0.18, 0.1]),
                bpp=(4.1, 0.5), out_bpp=(3.8, 0.6), pkts=(1.2, 1.0), reply=0.3, dur=(6.8, 2.2, 0.5)),
    "Reconnaissance": dict(proto=([6, 17, 1], [0.8, 0.15, 0.05]), flags=([2, 20, 22, 0], [0.45, 0.3, 0.15, 0.1]),
                           bpp=(3.9, 0.3), out_bpp=(3.7, 0.4), pkts=(0.3, 0.5), reply=0.5, dur=(3.0, 2.5, 0.8)),
}


def _profile_rows(rng, name, n):
    p = _PROFILES[name]
    protocol = rng.choice(p["proto"][0], size=n, p=p["proto"][1])
    flags = rng.choice(p["flags"][0], size=n, p=p["flags"][1])
    flags = np.where(protocol == 6, flags, 0)
    in_pkts = np.maximum(1, np.round(rng.lognormal(*p["pkts"], size=n))).astype(np.int64)
    replied = rng.random(n) < p["reply"]
    out_pkts = np.where(replied, np.maximum(1, np.round(in_pkts * rng.uniform(0.5, 1.5, n))), 0).astype(np.int64)
    in_bytes = np.round(in_pkts * rng.lognormal(*p["bpp"], size=n)).astype(np.int64)
    out_bytes = np.round(out_pkts * rng.lognormal(*p["out_bpp"], size=n)).astype(np.int64)
    mu, sigma, p_zero = p["dur"]
    duration = np.where(rng.random(n) < p_zero, 0, np.round(rng.lognormal(mu, sigma, n))).astype(np.int64)
    duration = np.minimum(duration, 4_294_967)
    return {
        "IPV4_SRC_ADDR": [f"192.168.100.{v}" for v in rng.integers(1, 255, n)],
        "L4_SRC_PORT": rng.integers(1024, 65536, n),
        "IPV4_DST_ADDR": [f"192.168.100.{v}" for v in rng.integers(1, 255, n)],
        "L4_DST_PORT": rng.choice([80, 443, 53, 22, 21, 8080, 1883], size=n),
        "PROTOCOL": protocol,
        "L7_PROTO": rng.choice([0.0, 7.0, 5.0, 91.0], size=n),
        "IN_BYTES": in_bytes,
        "OUT_BYTES": out_bytes,
        "IN_PKTS": in_pkts,
        "OUT_PKTS": out_pkts,
        "TCP_FLAGS": flags,
        "FLOW_DURATION_MILLISECONDS": duration,
        "Label": np.full(n, 0 if name == "Benign" else 1),
        "Attack": [name] * n,
    }


def bot_iot_frame(seed: int = 0, counts: dict | None = None) -> pd.DataFrame:
    """Raw NetFlow frame with the given per-class counts (full published counts by default)."""
    counts = counts or BOT_IOT_COUNTS
    rng = np.random.default_rng([int(seed), 2021])
    parts = [pd.DataFrame(_profile_rows(rng, name, n)) for name, n in counts.items() if n > 0]
    frame = pd.concat(parts, ignore_index=True)
    return frame.iloc[rng.permutation(len(frame))].reset_index(drop=True)


def bot_iot_table(per_class_cap: int | None = 2000, seed: int = 0) -> tuple[FlowTable, dict[str, int]]:
    """Ingest the surrogate through the NF-BoT-IoT schema, then cap each class."""
    table, clipped = ingest_frame(bot_iot_frame(seed), builtin_schema("nf_bot_iot"))
    if per_class_cap is not None:
        table = subsample(table, per_class_cap, seed)
    return table, clipped
