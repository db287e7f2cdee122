"""Smoke test for the fiagree_py extension.

Build and run:
    cargo build --release -p fiagree-py
    cp target/release/libfiagree_py.so python/fiagree_py.so
    python3 python/smoke_test.py
"""
import csv
import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import fiagree_py as fa


def check(name, cond):
    print(f"{'ok  ' if cond else 'FAIL'} {name}")
    if not cond:
        sys.exit(1)


a = {"a": 1, "b": 2, "c": 3, "d": 4}
check("tau self", math.isclose(fa.kendall_tau(a, a), 1.0))
check("tau reversed", math.isclose(fa.kendall_tau(a, {"a": 4, "b": 3, "c": 2, "d": 1}), -1.0))
check("w self", math.isclose(fa.kendall_w([a, a, a]), 1.0))
check("top-k overlap", math.isclose(fa.top_k_overlap([{"a": 1, "b": 2, "c": 3}, {"a": 1, "c": 2, "b": 3}], 1), 1.0))
check("interpret", fa.interpret("tau", 0.9) == "strong")
check("auc", math.isclose(fa.auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]), 1.0))
check("ifa", fa.ifa([0.9, 0.8, 0.2], [0, 1, 0]) == 2)
ranks = fa.sk_esd({"x": [5.0, 5.1, 4.9], "y": [1.0, 1.1, 0.9]})
check("sk_esd", ranks == {"x": 1, "y": 2})

try:
    fa.kendall_tau(a, {"a": 1})
    check("mismatch raises", False)
except ValueError:
    check("mismatch raises", True)

rows, labels, names = fa.generate_synthetic(200, False, 3)
check("synthetic shape", len(rows) == 200 and len(labels) == 200 and len(names) == len(rows[0]))
check("synthetic deterministic", fa.generate_synthetic(200, False, 3)[0] == rows)
check("default config", "seed" in fa.default_config())

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "data.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(names + ["y"])
        for r, y in zip(rows, labels):
            w.writerow(r + [y])
    cfg = (
        'classifiers = ["logistic"]\nbootstrap_k = 2\ntune_budget = 1\noverride_admission = true\n'
        "[interactions]\nenabled = false\n"
    )
    result = json.loads(fa.run_audit_csv(path, "y", "1", cfg))
    check("audit json", len(result["perf"]) == 2 and len(result["gates"]) == 1)

print("all checks passed")
