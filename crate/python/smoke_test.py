"""Smoke test for the paintscore_py extension module.

Build and run (from the repository root):

    cargo build --release -p paintscore-py --features extension-module
    cp target/release/libpaintscore_py.so python/paintscore_py.so
    python3 python/smoke_test.py

or `maturin develop -m crates/py/Cargo.toml` followed by the last line.
"""

import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import paintscore_py as ps  # noqa: E402


def main() -> None:
    rubric = ps.Rubric(12, 15, 9, 14, 10)
    assert rubric.total() == 60
    print(rubric, "->", rubric.classify("M3"))

    r = 0.956
    lo, hi = ps.fisher_ci(r, 120)
    print(f"r = {r:.3f}, 95% CI [{lo:.4f}, {hi:.4f}]")
    assert lo < r < hi

    replay = ps.replay_tables()
    for t in replay["tables"]:
        print(f'{t["scheme"]}: recomputed {t["recomputed_accuracy_percent"]:.2f}%, '
              f'stated {t["stated_accuracy_percent"]:.2f}%', *t["flags"])

    with tempfile.TemporaryDirectory() as tmp:
        manifest = ps.generate_synthetic(tmp, count=12, side=48, seed=7)
        totals = [rec["consensus_total"] for rec in manifest["records"]]
        print(f"{len(totals)} synthetic paintings, totals {min(totals):.1f}..{max(totals):.1f}")
        first = manifest["records"][0]
        measured = ps.measure(str(Path(tmp) / first["image_path"]))
        assert abs(measured.total() - first["consensus_total"]) < 1e-9

    print("smoke test passed")


if __name__ == "__main__":
    main()
