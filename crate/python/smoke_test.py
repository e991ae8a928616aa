"""Smoke test for the hnn extension module.

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""
import json
import math
import os
import sys
import tempfile

import hnn

TINY = """
name = "smoke"
seed = 4

[data]
path = "panel.csv"

[target]
mnemonic = "PRICE"
scale = 400.0

[features]
expansion = "single"

[[hemispheres]]
name = "lr"
include_trend = true
role = "coefficient"

[[hemispheres]]
name = "g"
mnemonics = ["ACT01", "ACT02"]

[[hemispheres]]
name = "c"
mnemonics = ["OIL"]

[model]
state = { layers = 1, neurons = 8 }
coefficient = { layers = 1, neurons = 4 }

[train]
epochs = 30
ensemble_size = 2
inference_size = 60

[forecast]
plan = { first_origin = "1990Q1", last_origin = "1990Q4", estimation_start = "1961Q3" }
"""


def expect(exc, fn, *args):
    try:
        fn(*args)
    except exc as e:
        return str(e)
    raise AssertionError(f"{fn.__name__} did not raise {exc.__name__}")


def main():
    print("hnn", hnn.version())
    assert "synthetic" in hnn.shipped_configs()
    needed = hnn.check_config(hnn.shipped_config("synthetic"))
    assert "PRICE" in needed and "GAP" in needed, needed
    expect(hnn.ConfigError, hnn.check_config, "name = 1")

    with tempfile.TemporaryDirectory() as d:
        rows = hnn.simulate(os.path.join(d, "panel.csv"), "demo", 140, 2)
        assert rows == 140
        cfg = os.path.join(d, "run.toml")
        with open(cfg, "w") as f:
            f.write(TINY)

        out = os.path.join(d, "out")
        res = hnn.estimate(cfg, threads=1, out=out)
        names = [s["name"] for s in res["series"]]
        for h in ("lr", "g", "c", "prediction"):
            assert h in names, names
        g = next(s for s in res["series"] if s["name"] == "g")
        assert len(g["mean"]) == len(res["dates"])
        ok = [(lo, m, hi) for lo, m, hi in zip(g["lower"], g["mean"], g["upper"]) if lo is not None]
        assert ok and all(lo <= hi for lo, _, hi in ok)
        with open(os.path.join(out, "manifest.json")) as f:
            manifest = json.load(f)
        assert manifest["seed"] == 4

        again = hnn.estimate(cfg, threads=1)
        assert again == res, "same seed must reproduce"

        wide = hnn.read_components(os.path.join(out, "paths.json"), 0.9)
        assert wide["dates"] == res["dates"]

        fc = hnn.forecast(cfg)
        models = {r["model"] for r in fc["summary"]}
        assert {"hnn", "ar4"} <= models, models
        assert all(math.isfinite(r["forecast"]) for r in fc["records"])

        msg = expect(hnn.ConfigError, hnn.estimate, os.path.join(d, "missing.toml"))
        print("missing config ->", msg)
        bad = os.path.join(d, "bad.toml")
        with open(bad, "w") as f:
            f.write(TINY.replace('"OIL"', '"NOPE"'))
        msg = expect(hnn.DataError, hnn.estimate, bad)
        assert "NOPE" in msg, msg

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
