"""Run the full experiment pipeline: gen-data -> train -> sweep -> report.

On completion a config fingerprint marker is written next to the artifacts
so other tooling (including the acceptance tests) can tell a finished run
from a partial one. Training resumes from the checkpoint if one exists.
"""

import argparse
import os
import sys

from maskfill.cli import main as cli_main
from maskfill.config import config_fingerprint, load_config


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="JSON config; every key is optional")
    parser.add_argument("--seed", type=int, default=None, help="override the corpus seed")
    parser.add_argument("--out", default=None, help="output directory for all artifacts")
    parser.add_argument("--plots", action="store_true", help="also render charts in the report step")
    args = parser.parse_args()

    tail = []
    if args.config is not None:
        tail += ["--config", args.config]
    if args.seed is not None:
        tail += ["--seed", str(args.seed)]
    if args.out is not None:
        tail += ["--out", args.out]
    for command in ("gen-data", "train", "sweep"):
        code = cli_main([command, *tail])
        if code:
            return code
    code = cli_main(["report", *tail, *(["--plots"] if args.plots else [])])
    if code:
        return code

    cfg = load_config(args.config, args.seed, args.out)
    marker = os.path.join(cfg.paths.out_dir, "config.fingerprint")
    with open(marker, "w", encoding="utf-8") as f:
        f.write(config_fingerprint(cfg) + "\n")
    print(f"[pipeline] complete, marker written to {marker}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
