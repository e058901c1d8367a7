"""Drive the full command-line pipeline in-process."""
import json
from pathlib import Path

from retrocode.cli import run_command

SMALL = {
    "seed": 5,
    "corpus": {"fragment_length": 64},
    "benchmark": {"num_problems": 10, "variants_per_problem": 3, "dev_problems": 5, "train_programs": 120},
    "train": {"epochs": 3, "batch_size": 16, "d": 16},
}


def run_pipeline(root: Path, config: dict = SMALL) -> Path:
    """Run every stage under ``root/out``; returns the output directory."""
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / "config.json"
    cfg.write_text(json.dumps(config))
    out = root / "out"
    bench = out / "benchmark"
    steps = [
        ["gen-benchmark"],
        ["ingest", str(bench / "train.jsonl"), "--name", "corpus"],
        ["ingest", str(bench / "pool.jsonl"), "--name", "pool"],
        ["ingest", str(bench / "dev.jsonl"), "--name", "dev"],
        ["ingest", str(bench / "completion_db.jsonl"), "--name", "db"],
        ["augment"],
        ["train"],
        ["index", "--corpus", "pool"],
        ["index", "--corpus", "dev"],
        ["index", "--corpus", "db"],
        ["alpha-sweep"],
        ["eval-clone", "--mode", "sparse"],
        ["eval-clone", "--mode", "dense"],
        ["eval-clone", "--tuned-alpha"],
        ["eval-completion", "--tuned-alpha"],
    ]
    for step in steps:
        code = run_command(step + ["--config", str(cfg), "--out", str(out)], env={})
        if code != 0:
            raise RuntimeError(f"{step} exited {code}")
    return out


def report_bytes(out: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted((out / "reports").iterdir()) if p.is_file()}
