#!/usr/bin/env python3
"""Regenerates data/scenario/atlas.json + atlas.f32, the organ-probability grid
used by the bundled scenario. Patient frame in mm: x toward the patient's left,
y toward the head, z anterior."""
import json
import math
import struct
import sys
from pathlib import Path

ORIGIN = (-100.0, -140.0, -80.0)
VOXEL = 10.0
DIMS = (20, 20, 16)
# organ -> (centre, sigma mm, peak probability)
ORGANS = {
    "bowel": ((0.0, -10.0, 0.0), 45.0, 0.55),
    "uterus": ((0.0, -95.0, -30.0), 20.0, 0.8),
    "left_ovary": ((55.0, -85.0, -30.0), 14.0, 0.7),
    "right_ovary": ((-55.0, -85.0, -30.0), 14.0, 0.7),
    "endometrioma": ((58.0, -88.0, -30.0), 10.0, 0.15),
}


def main(out_dir: Path) -> None:
    values = []
    for iz in range(DIMS[2]):
        for iy in range(DIMS[1]):
            for ix in range(DIMS[0]):
                c = [ORIGIN[a] + (i + 0.5) * VOXEL for a, i in enumerate((ix, iy, iz))]
                probs = []
                for centre, sigma, peak in ORGANS.values():
                    d2 = sum((c[a] - centre[a]) ** 2 for a in range(3))
                    p = peak * math.exp(-d2 / (2 * sigma * sigma))
                    probs.append(p if p >= 1e-4 else 0.0)
                total = sum(probs)
                if total > 0.98:
                    probs = [p * 0.98 / total for p in probs]
                values.extend(probs)
    (out_dir / "atlas.f32").write_bytes(struct.pack("<%df" % len(values), *values))
    header = {
        "version": 1,
        "origin": list(ORIGIN),
        "voxel_size": VOXEL,
        "dims": list(DIMS),
        "organs": list(ORGANS),
        "covariates": {},
        "data": "atlas.f32",
    }
    (out_dir / "atlas.json").write_text(json.dumps(header, indent=2) + "\n")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "scenario")
