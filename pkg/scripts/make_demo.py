"""Write the sample dataset, mock fixtures and a run config, then run every stage.

    python3 scripts/make_demo.py /tmp/llmgrade-demo

Afterwards the same commands can be replayed from the cache:

    llmgrade --config /tmp/llmgrade-demo/run.yaml --offline grade
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from llmgrade.cli import main as cli_main
from llmgrade.sample import write_mock_fixtures, write_sample_config, write_sample_dataset


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Build and run the mock demo.")
    ap.add_argument("root", type=Path)
    ap.add_argument("--setup-only", action="store_true")
    args = ap.parse_args(argv)

    root = args.root
    write_sample_dataset(root / "data")
    fixtures = write_mock_fixtures(root / "fixtures" / "mock.yaml")
    config = write_sample_config(root / "run.yaml", "data")
    print(f"dataset, fixtures and config written under {root}")
    if args.setup_only:
        return 0

    base = ["--config", str(config), "--mock", str(fixtures.parent)]
    for cmd in (["grade"], ["benchmark"], ["agreement", "--mode", "intra"], ["agreement", "--mode", "inter"],
                ["geval"], ["review"], ["report"]):
        print(f"\n$ llmgrade {' '.join(cmd)}")
        rc = cli_main(base + cmd)
        if rc:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
