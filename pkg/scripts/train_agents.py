#!/usr/bin/env python3
"""Train the generation agents across several seeds and print the final
comparison against every baseline.

Usage: python scripts/train_agents.py [seed ...]
"""

import sys

import numpy as np

from pseudosim.harness import load_config
from pseudosim.harness.experiments import run_training_eval


if __name__ == "__main__":
    seeds = [int(s) for s in sys.argv[1:]] or [0, 1, 2]
    config = load_config(None)
    for seed in seeds:
        config.seed = seed
        records, wall_clock, _ = run_training_eval(config)
        final = {
            name: points[0][1]
            for name, points in records[1].series.items()
        }
        mappo = final["mappo"]
        print(f"seed {seed}: " + "  ".join(f"{k}={v:.1f}" for k, v in sorted(final.items())))
        print(
            f"  mappo/greedy={mappo / final['greedy']:.2f}"
            f"  mappo/random={mappo / final['random']:.2f}"
            f"  mappo/oracle={mappo / final['oracle']:.2f}"
            f"  wall clock: " + ", ".join(f"{k} {v:.0f}s" for k, v in wall_clock.items())
        )
