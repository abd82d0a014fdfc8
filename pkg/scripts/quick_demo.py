"""Minute-scale smoke run: tiny model, tiny corpus, two step counts.

Writes everything under runs/demo and prints the final report. The numbers
are meaningless (the model barely trains); the point is to watch the whole
pipeline execute end to end.
"""

import json
import os
import sys

from maskfill.cli import main as cli_main, read_report
from maskfill.config import load_config

DEMO_CONFIG = {
    "corpus": {"n_train": 60, "n_eval": 10, "null_pad_fraction": 0.2, "seed": 0},
    "model": {
        "d_model": 32, "n_layers": 2, "n_heads": 2, "ff_dim": 64, "max_len": 256,
        "steps": 150, "batch_size": 8, "warmup_steps": 10, "lr": 1e-3,
    },
    "sweep": {"step_counts": [2, 8], "baseline_response_len": 48},
}


def main() -> int:
    out = os.path.join("runs", "demo")
    os.makedirs(out, exist_ok=True)
    config_path = os.path.join(out, "config.json")
    with open(config_path, "w", encoding="utf-8") as f:
        json.dump(DEMO_CONFIG, f, indent=2)
    for command in ("gen-data", "train", "sweep", "report"):
        code = cli_main([command, "--config", config_path, "--out", out])
        if code:
            return code
    cfg = load_config(config_path, out_dir=out)
    print()
    print(f"{'method':<10} {'steps':>5} {'sv':>6} {'fc':>6} {'sc':>6} {'f1_fuzzy':>9} {'hr':>6}")
    for r in read_report(cfg.path("report")):
        print(f"{r['method']:<10} {r['steps']:>5} {r['sv']:>6.2f} {r['fc']:>6.2f} "
              f"{r['sc']:>6.2f} {r['f1_fuzzy']:>9.2f} {r['hr']:>6.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
