"""Synthetic workload populations for desk-scale savings studies.

The default mix reproduces a large-fleet operator survey of workload
characteristics (weighted by core usage): how many workloads are
stateless, how hard their deployment-time and availability requirements
are, how preemptible and delay-tolerant they are, and whether they can
move between regions. Axes are sampled independently; cores and
utilization are drawn independently of the hint axes so core-weighted
marginals converge to the configured fractions.

Utilization is a simple truncated-normal peak model per resource with
the 95th-percentile statistics derived as a random fraction of the
peak. It is deliberately crude: it only has to land workloads in
plausible eligibility bands, not predict real traces.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from typing import Any

import numpy as np

from .accounting import REFERENCE_REGION, WorkloadProfile
from .hints import HintSet, UtilStats, validate

# (value, probability) rows; probabilities sum to 1 per axis
SCALE_MIX: tuple[tuple[str, float], ...] = (
    ("stateless", 0.455),       # scales out/in and up/down
    ("partially_stateless", 0.174),  # resizes in place only
    ("stateful", 0.371),
)
DEPLOY_TIME_MIX: tuple[tuple[int, float], ...] = (
    (0, 0.285),          # strict: must deploy immediately
    (300_000, 0.715),    # relaxed: minutes of lead time are fine
)
AVAILABILITY_MIX: tuple[tuple[int, float], ...] = (
    (5, 0.024),
    (4, 0.345),
    (3, 0.580),
    (2, 0.039),
    (1, 0.005),
    (0, 0.004),
)
# band midpoints for the preemptibility fraction
PREEMPTIBILITY_MIX: tuple[tuple[int, float], ...] = (
    (0, 0.393),
    (10, 0.411),
    (30, 0.048),
    (50, 0.065),
    (70, 0.003),
    (90, 0.018),
    (100, 0.061),
)
DELAY_TOLERANCE_MIX: tuple[tuple[int, float], ...] = (
    (60_000, 0.245),
    (0, 0.755),
)
REGION_INDEPENDENCE_MIX: tuple[tuple[bool, float], ...] = (
    (True, 0.475),    # fully region-agnostic
    (False, 0.139),   # partially agnostic: still pinned in practice
    (False, 0.386),
)

CORE_CHOICES: tuple[int, ...] = (2, 4, 8, 16)


def _draw(rng: np.random.Generator, mix: Sequence[tuple[Any, float]], n: int) -> np.ndarray:
    values = [v for v, _ in mix]
    probs = np.asarray([p for _, p in mix])
    probs = probs / probs.sum()
    idx = rng.choice(len(values), size=n, p=probs)
    return np.asarray(values, dtype=object)[idx]


def survey_population(n: int, seed: int = 0) -> list[WorkloadProfile]:
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)

    scale = _draw(rng, SCALE_MIX, n)
    deploy = _draw(rng, DEPLOY_TIME_MIX, n)
    nines = _draw(rng, AVAILABILITY_MIX, n)
    preempt = _draw(rng, PREEMPTIBILITY_MIX, n)
    delay = _draw(rng, DELAY_TOLERANCE_MIX, n)
    region_free = _draw(rng, REGION_INDEPENDENCE_MIX, n)
    cores = rng.choice(CORE_CHOICES, size=n)

    peak_cpu = np.clip(rng.normal(70.0, 15.0, n), 1.0, 100.0)
    peak_mem = np.clip(rng.normal(65.0, 15.0, n), 1.0, 100.0)
    peak_disk = np.clip(rng.normal(55.0, 20.0, n), 1.0, 100.0)
    p95_cpu = peak_cpu * rng.uniform(0.55, 0.95, n)
    p95_max_cpu = peak_cpu * rng.uniform(0.85, 1.0, n)

    out: list[WorkloadProfile] = []
    for i in range(n):
        hints = HintSet(
            scale_up_down=scale[i] in ("stateless", "partially_stateless"),
            scale_out_in=scale[i] == "stateless",
            deploy_time_ms=int(deploy[i]),
            availability_nines=int(nines[i]),
            preemptibility_pct=int(preempt[i]),
            delay_tolerance_ms=int(delay[i]),
            region_independent=bool(region_free[i]),
        )
        util = UtilStats(
            p95_cpu_pct=float(p95_cpu[i]),
            p95_max_cpu_pct=float(p95_max_cpu[i]),
            peak_pct={
                "cpu": float(peak_cpu[i]),
                "memory": float(peak_mem[i]),
                "disk": float(peak_disk[i]),
            },
        )
        out.append(
            WorkloadProfile(
                workload_id=f"wl-{i:05d}",
                cores=int(cores[i]),
                hints=hints,
                util=util,
            )
        )
    return out


# ---------------------------------------------------------------------------
# document form (CLI input/output)


def to_document(population: Iterable[WorkloadProfile]) -> list[dict[str, Any]]:
    doc = []
    for wl in population:
        doc.append(
            {
                "workload_id": wl.workload_id,
                "cores": wl.cores,
                "region_id": wl.region_id,
                "hints": wl.hints.as_dict(),
                "util": {
                    "p95_cpu_pct": wl.util.p95_cpu_pct,
                    "p95_max_cpu_pct": wl.util.p95_max_cpu_pct,
                    "peak_pct": dict(wl.util.peak_pct),
                },
            }
        )
    return doc


def from_document(doc: Iterable[Mapping[str, Any]]) -> list[WorkloadProfile]:
    out = []
    for row in doc:
        util_row = row.get("util", {})
        out.append(
            WorkloadProfile(
                workload_id=str(row["workload_id"]),
                cores=int(row["cores"]),
                hints=validate(row.get("hints")),
                util=UtilStats(
                    p95_cpu_pct=float(util_row.get("p95_cpu_pct", 100.0)),
                    p95_max_cpu_pct=float(util_row.get("p95_max_cpu_pct", 100.0)),
                    peak_pct={
                        k: float(v)
                        for k, v in util_row.get(
                            "peak_pct",
                            {"cpu": 100.0, "memory": 100.0, "disk": 100.0},
                        ).items()
                    },
                ),
                region_id=str(row.get("region_id", REFERENCE_REGION)),
            )
        )
    return out
