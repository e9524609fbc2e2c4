#!/usr/bin/env python3
"""Smoke test for the cvtmle extension module.

Builds nothing itself: expects `cargo build -p cvtmle-py` (or --release) to
have produced libcvtmle.so under target/. Copies the library into a temp
directory under the importable name and exercises each exposed function.
"""

import math
import random
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_library() -> Path:
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libcvtmle.so", "cvtmle.dll", "libcvtmle.dylib")
    ]
    for path in candidates:
        if path.exists():
            return path
    sys.exit("libcvtmle not found; run `cargo build -p cvtmle-py` first")


def check(condition: bool, message: str) -> None:
    if not condition:
        sys.exit(f"FAIL: {message}")
    print(f"ok: {message}")


def main() -> None:
    library = locate_library()
    staging = Path(tempfile.mkdtemp(prefix="cvtmle-smoke-"))
    shutil.copy2(library, staging / "cvtmle.so")
    sys.path.insert(0, str(staging))
    import cvtmle

    # Exact truths under the named presets.
    check(abs(cvtmle.true_value("dgp-a", "ate") - 0.22002) < 1e-4, "dgp-a ATE truth")
    check(abs(cvtmle.true_value("dgp-a", "tsm") - 0.72002) < 1e-4, "dgp-a TSM truth")
    check(abs(cvtmle.true_value("dgp-b", "vte") - 0.05339) < 1e-4, "dgp-b VTE truth")

    # Fold construction: balanced partition, deterministic in the seed.
    folds = cvtmle.make_folds(25, 5, 7)
    check(sorted(set(folds)) == [1, 2, 3, 4, 5], "folds use labels 1..K")
    check(all(folds.count(f) == 5 for f in range(1, 6)), "folds are balanced")
    check(folds == cvtmle.make_folds(25, 5, 7), "folds are seed-deterministic")

    # In-memory estimation on a synthetic confounded sample.
    rng = random.Random(12)
    w, a, y = [], [], []
    for _ in range(300):
        wi = rng.random()
        ai = 1 if rng.random() < 0.3 + 0.4 * wi else 0
        yi = 1.0 if rng.random() < 0.2 + 0.25 * ai + 0.35 * wi else 0.0
        w.append([wi])
        a.append(ai)
        y.append(yi)
    report = cvtmle.estimate(w, a, y, "ate", seed=3)
    check(report["parameter"] == "ate", "report carries the parameter")
    check(report["ci_lo"] < report["psi"] < report["ci_hi"], "CI brackets the estimate")
    check(report["se"] > 0, "positive standard error")
    check(len(report["learner_audit"]) == report["K"], "one audit row per fold")
    check(
        report["psi"] == cvtmle.estimate(w, a, y, "ate", seed=3)["psi"],
        "estimation is seed-deterministic",
    )

    # CSV round trip through the same estimator.
    csv_path = staging / "demo.csv"
    with csv_path.open("w") as fh:
        fh.write("w1,A,Y\n")
        for wi, ai, yi in zip(w, a, y):
            fh.write(f"{wi[0]!r},{ai},{yi:.1f}\n")
    from_csv = cvtmle.estimate_csv(str(csv_path), "ate", seed=3)
    check(from_csv["psi"] == report["psi"], "CSV and in-memory estimates agree")

    # Small Monte Carlo run plus the paired variant comparison.
    mc = cvtmle.simulate("dgp-a", "ate", n=150, reps=5, seed=11)
    check(mc["aggregates"]["n_success"] == 5, "all replicates succeed")
    check(math.isfinite(mc["aggregates"]["rmse"]), "finite Monte Carlo RMSE")
    cmp_result = cvtmle.compare_variants("dgp-b", "vte", n=150, reps=4, seed=11)
    check(math.isfinite(cmp_result["rmse_ratio"]), "finite RMSE ratio")
    check(len(cmp_result["paired"]) == 4, "paired records per replicate")

    # Errors surface as ValueError.
    try:
        cvtmle.estimate(w, a, y, "nosuch")
    except ValueError:
        print("ok: bad parameter raises ValueError")
    else:
        sys.exit("FAIL: bad parameter should raise ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
