"""Import the compiled extension and exercise each entry point once.

Build first, e.g. `maturin develop -m crates/py/Cargo.toml`, or point
DIFFARB_LIB_DIR at a directory holding `diffarb.so`.
"""

import json
import os
import sys

lib_dir = os.environ.get("DIFFARB_LIB_DIR")
if lib_dir:
    sys.path.insert(0, lib_dir)

import diffarb  # noqa: E402


def main():
    names = [e["name"] for e in diffarb.catalog()]
    assert "sticky_skew" in names and len(names) == 7, names

    v = diffarb.classify(catalog="sticky_skew", params={"r": 1})
    assert (v["nip"], v["nsa"], v["nupbr"]) == ("holds",) * 3, v
    v = diffarb.classify(catalog="sticky_skew", params="r=9/10")
    assert v["nip"] == "fails", v

    spec = {
        "model_id": "bm",
        "interval": {"alpha": "-inf", "beta": "inf"},
        "scale": {"type": "affine", "a": 1, "b": 0},
        "speed": {"ac": {"type": "const", "c": 1}},
        "x0": 0,
    }
    v = diffarb.classify(model_json=json.dumps(spec))
    assert v["rp"] == "holds", v

    try:
        diffarb.Model.from_catalog("squared_bessel", {"delta": 3})
    except ValueError as e:
        assert "delta" in str(e)
    else:
        raise AssertionError("bad parameter accepted")

    m = diffarb.Model.from_catalog("sticky_reflected_bm", "r=0,rho=0")
    assert "NIP ✗" in m.verdict_text()
    a = m.simulate(grid=64, paths=400, seed=5)
    b = m.simulate(grid=64, paths=400, seed=5)
    assert a == b
    assert a["flags"]["empirical_arbitrage"] is True, a["flags"]
    print(f"ok: {len(names)} catalog entries, {m!r}, K ratios {a['tradeoff']['ratios']}")


if __name__ == "__main__":
    main()
