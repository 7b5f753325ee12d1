"""Regenerate the default 7-region tank scenario (src/hemap/data/tank7.json).

Layout, rows counted from the bottom (y up), 64 x 40 cells at RESOLUTION:
corridor 6 along the bottom; four rooms 0-3 around a central plaza where all
four meet; an east wing split into 4 (lower) and 5 (upper) with a one-way
hatch from 5 down into 4, and a doorway between 3 and 5.
"""

import argparse
import json
from pathlib import Path

from hemap.world import rle_encode

H, W = 40, 64
RESOLUTION = 0.25
OUT = Path(__file__).resolve().parents[1] / "src" / "hemap" / "data" / "tank7.json"


def build():
    g = [["#"] * W for _ in range(H)]

    def fill(r0, r1, c0, c1, ch):
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                g[r][c] = ch

    fill(1, 5, 1, 62, "6")
    fill(6, 6, 8, 10, "2")
    fill(6, 6, 55, 57, "4")
    fill(7, 21, 1, 18, "2")
    fill(7, 21, 20, 38, "1")
    fill(23, 38, 1, 18, "0")
    fill(23, 38, 20, 38, "3")
    # plaza: labelled by quadrant so every pair of rooms 0-3 shares a boundary
    for r in range(20, 25):
        for c in range(17, 22):
            g[r][c] = ("0" if c < 19 else "3") if r >= 22 else ("2" if c < 19 else "1")
    fill(7, 21, 40, 62, "4")
    fill(23, 38, 40, 62, "5")
    fill(22, 22, 50, 52, "5")   # hatch, passable only from 5 into 4
    fill(29, 31, 39, 39, "5")   # doorway 3 <-> 5
    for r, c in ((30, 8), (14, 28), (14, 48), (31, 55), (12, 9), (33, 28)):
        fill(r, r + 1, c, c + 1, "#")
    return ["".join(row) for row in g]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolution", type=float, default=RESOLUTION)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    rows = build()
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (3, 5), (2, 6), (4, 6)]
    edges = sorted({e for i, j in pairs for e in ((i, j), (j, i))} | {(5, 4)})
    free = [sum(row.count(str(k)) for row in rows) for k in range(7)]
    total = sum(free)
    doc = {
        "name": "tank7",
        "resolution": args.resolution,
        "rows": [rle_encode(r) for r in rows],
        "graph": {
            "n": 7,
            "edges": [list(e) for e in edges],
            "names": ["room-nw", "room-se", "room-sw", "room-ne", "wing-low", "wing-high", "corridor"],
        },
        "sensor": {"fov_deg": 69.0, "min_depth": 0.2, "max_depth": 3.0,
                   "range_noise_sigma": 0.01, "rays": 64},
        "fods": {"count": [4, 6], "radius": [0.05, 0.15]},
        "start": [30, 4],
        "cloud_spacing": round(args.resolution / 5, 6),
        "pose_sigma": [0.02, 0.02, 0.01],
        "speed": 0.2,
        "targets": {
            "area": [round(f / total, 6) for f in free],
            "uniform": [1 / 7] * 7,
            "skewed": [0.05, 0.10, 0.10, 0.25, 0.05, 0.40, 0.05],
        },
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {args.out} ({total} free cells)")


if __name__ == "__main__":
    main()
