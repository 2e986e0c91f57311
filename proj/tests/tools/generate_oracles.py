"""Regenerates the frozen reference values under tests/data.

Requires numpy, scipy, Pillow and psnr_hvsm==0.2.4 (numpy backend).
Run from the repository root: python3 tests/tools/generate_oracles.py
"""
import json
import os

import numpy as np
from PIL import Image
from scipy import stats
from psnr_hvsm.numpy.psnr_hvsm import psnr_hvs_hvsm

DATA = os.path.join(os.path.dirname(__file__), "..", "data")
rng = np.random.default_rng(20240611)


def shapiro_fixtures():
    out = []
    n20 = stats.norm.ppf((np.arange(1, 21) - 0.5) / 20)
    cubes = np.arange(1, 11, dtype=float) ** 3
    vectors = [n20, cubes, [1.0, 2.0, 4.0], [0.3, -1.2, 2.5]]
    for n in (4, 5, 6, 8, 11, 12, 15, 25, 40, 60):
        vectors.append(rng.normal(size=n))
    for n in (7, 13, 30):
        vectors.append(rng.exponential(size=n))
    for n in (9, 50, 200):
        vectors.append(rng.uniform(-1, 1, size=n))
    vectors = vectors[:20]
    for v in vectors:
        v = [float(x) for x in v]
        r = stats.shapiro(v)
        out.append({"x": v, "w": float(r.statistic), "p": float(r.pvalue)})
    return out


def ttest_fixtures():
    out = []
    cases = [([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])]
    for n in (4, 10, 30):
        a = rng.normal(size=n)
        b = a + rng.normal(0.3, 1.0, size=n)
        cases.append((list(a), list(b)))
    for a, b in cases:
        r = stats.ttest_rel(a, b)
        out.append({"a": [float(x) for x in a], "b": [float(x) for x in b],
                    "t": float(r.statistic), "p": float(r.pvalue)})
    return out


def wilcoxon_fixtures():
    out = []
    cases = [[1.0, 2.0, 3.0, 4.0, 5.0]]
    for n in (6, 10, 20, 25):
        cases.append(list(rng.normal(0.4, 1.0, size=n)))
    for d in cases:
        r = stats.wilcoxon(d, zero_method="wilcox", method="exact")
        out.append({"d": [float(x) for x in d], "p": float(r.pvalue), "method": "exact"})
    for n in (30, 60):
        d = list(np.round(rng.normal(0.3, 1.0, size=n), 1))
        r = stats.wilcoxon(d, zero_method="wilcox", correction=True, method="approx")
        out.append({"d": [float(x) for x in d], "p": float(r.pvalue), "method": "approx"})
    return out


def textured(h, w):
    y, x = np.mgrid[0:h, 0:w].astype(float)
    base = np.stack([
        128 + 60 * np.sin(x / 5.0) * np.cos(y / 7.0),
        110 + 50 * np.cos((x + y) / 9.0),
        90 + 40 * np.sin(x * y / 300.0),
    ], axis=-1)
    return base + rng.normal(0, 12, size=base.shape)


def hvs_fixtures():
    out = []
    sizes = [(64, 64)] * 6 + [(48, 80), (72, 56), (70, 52), (33, 41)]
    for k, (h, w) in enumerate(sizes):
        ref = np.clip(np.round(textured(h, w)), 0, 255).astype(np.uint8)
        sigma = [2, 5, 10, 20, 40, 3, 8, 15, 6, 25][k]
        test = np.clip(np.round(ref + rng.normal(0, sigma, size=ref.shape)), 0, 255).astype(np.uint8)
        rname, tname = f"ref_{k}.png", f"test_{k}.png"
        Image.fromarray(ref, "RGB").save(os.path.join(DATA, "hvs", rname))
        Image.fromarray(test, "RGB").save(os.path.join(DATA, "hvs", tname))
        wts = np.array([0.299, 0.587, 0.114])
        ly = (ref.astype(float) @ wts) / 255.0
        lt = (test.astype(float) @ wts) / 255.0
        ch, cw = (h // 8) * 8, (w // 8) * 8
        hvs, hvsm = psnr_hvs_hvsm(ly[:ch, :cw], lt[:ch, :cw])
        out.append({"ref": rname, "test": tname, "psnr_hvs": float(hvs), "psnr_hvs_m": float(hvsm)})
    return out


def main():
    oracles = {
        "generator": "scipy " + __import__("scipy").__version__ + ", psnr_hvsm 0.2.4",
        "shapiro": shapiro_fixtures(),
        "ttest": ttest_fixtures(),
        "wilcoxon": wilcoxon_fixtures(),
    }
    with open(os.path.join(DATA, "stats_oracles.json"), "w") as f:
        json.dump(oracles, f, indent=1)
    with open(os.path.join(DATA, "hvs_oracles.json"), "w") as f:
        json.dump({"generator": "psnr_hvsm 0.2.4 (numpy)", "fixtures": hvs_fixtures()}, f, indent=1)


if __name__ == "__main__":
    main()
