"""Run the bundled synthetic map through the whole offline pipeline.

Writes the fixture tree to a temporary directory, runs the job with stub
clients and prints the evaluation summary.

    python3 demos/fixture_pipeline.py [out_dir]
"""

import json
import sys
import tempfile
from pathlib import Path

from mapdigit import cli
from mapdigit.fixtures import write_fixture


def main(out=None):
    root = write_fixture(Path(out or tempfile.mkdtemp(prefix="mapdigit-")) / "fixture")
    code = cli.main(["run", str(root / "job.yaml"), "--config", str(root / "config.yaml")])
    report = json.loads((root / "artifacts" / "fixture" / "eval" / "report.json").read_text())
    for kind, block in report.items():
        flat = {k: round(v, 4) if isinstance(v, float) else v for k, v in block.items() if not isinstance(v, dict)}
        print(f"{kind:9s} {flat}")
    return code


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
