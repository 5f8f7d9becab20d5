#!/usr/bin/env python3
"""Run the full experiment set with default settings into ./out.

Equivalent to the CLI sequence:
    pseudosim chain-bench / protocol-sim / train / sweep / dope / newsvendor
but callable as one script.  Expect roughly half an hour end to end; the
sweeps retrain the agents at every grid point.
"""

import sys
import time
from pathlib import Path

from pseudosim.harness.cli import main as cli_main


def run(argv) -> None:
    t0 = time.perf_counter()
    code = cli_main(argv)
    print(f"  -> exit {code} in {time.perf_counter() - t0:.1f} s\n")
    if code != 0:
        sys.exit(code)


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out"
    Path(out).mkdir(parents=True, exist_ok=True)
    for command in (
        ["--out", out, "dope"],
        ["--out", out, "newsvendor"],
        ["--out", out, "chain-bench"],
        ["--out", out, "protocol-sim"],
        ["--out", out, "train"],
        ["--out", out, "eval"],
        ["--out", out, "sweep", "--sweep", "lambda"],
        ["--out", out, "sweep", "--sweep", "delta"],
    ):
        print("$ pseudosim " + " ".join(command))
        run(command)
    print(f"all experiments written to {out}/")
