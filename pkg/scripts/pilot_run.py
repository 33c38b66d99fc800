"""Pilot run that fixes the Kolmogorov-distance threshold used by the CLT check.

Runs Z_{x^2}(1) under Brownian driving at n=100 with M=4000 for several pilot
seeds (disjoint from the acceptance seed) and records the distances next to
the 1% Lilliefors critical value.  Output: src/goe_fluct/data/pilot.json.
"""

import json
import math
import time
from pathlib import Path

import numpy as np

from goe_fluct import __version__, backend
from goe_fluct.experiments import LILLIEFORS_1PCT, ExperimentConfig, kolmogorov_distance, simulate

PILOT_SEEDS = [101, 202, 303, 404, 505]
THRESHOLD = 0.03
OUT = Path(__file__).resolve().parents[1] / "src" / "goe_fluct" / "data" / "pilot.json"


def main():
    runs = []
    for seed in PILOT_SEEDS:
        cfg = ExperimentConfig.from_dict(
            {"model": {"kind": "bm"}, "n": 100, "grid": [1.0], "functions": ["x^2"],
             "replicas": 4000, "seed": seed}
        )
        t0 = time.perf_counter()
        x = simulate(cfg).statistics[:, 0, 0]
        runs.append({
            "seed": seed,
            "kolmogorov": kolmogorov_distance(x),
            "variance": float(np.var(x, ddof=1)),
            "seconds": round(time.perf_counter() - t0, 2),
        })
        print(runs[-1])
    record = {
        "statistic": "Z_{x^2}(1), Brownian, n=100, M=4000",
        "package_version": __version__,
        "backend": backend,
        "runs": runs,
        "max_kolmogorov": max(r["kolmogorov"] for r in runs),
        "lilliefors_1pct": LILLIEFORS_1PCT / math.sqrt(4000),
        "threshold": THRESHOLD,
    }
    OUT.write_text(json.dumps(record, indent=2) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
