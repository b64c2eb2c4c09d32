"""One notch, two knobs.

The depth factor ``g`` scales the shaping term between no notch (``g = 0``)
and an exact zero (``g = 1``); the bandwidth sets the pole radius and with
it the notch width.  Run ``python3 demos/depth_and_width.py``.
"""

import numpy as np

from ykshaping.qdesign import NotchSpec, bandwidth_to_radius, build_q, scale_depth, shaping_response

FS = 8000.0
F0 = 180.0


def depth_db(q, f):
    v = abs(shaping_response(q, [f]).values[0])
    return -20 * np.log10(max(v, 1e-300))


def minus_3db_edges(q, f0, span):
    f = np.linspace(f0 - span, f0 + span, 20001)
    inside = f[np.abs(shaping_response(q, f).values) < 1 / np.sqrt(2)]
    return inside[0] - f0, inside[-1] - f0


def main():
    q = build_q([NotchSpec(F0, 30.0)], 2, FS)
    print(f"depth at {F0:g} Hz versus g (30 Hz bandwidth, fs = {FS:g} Hz)")
    for g in (0.0, 0.1, 0.5, 0.9, 0.99, 0.999, 1.0):
        d = depth_db(scale_depth(q, g), F0)
        shown = "exact zero" if d > 200 else f"{d:7.2f} dB"
        print(f"  g = {g:<6g} {shown}")

    print("\nwidth versus bandwidth (g = 1)")
    for bw in (5.0, 10.0, 20.0, 40.0):
        spec = NotchSpec(F0 * 4, bw)
        qb = build_q([spec], 2, FS)
        lo, hi = minus_3db_edges(qb, spec.freq_hz, 4 * bw)
        a = bandwidth_to_radius(2 * np.pi * bw / FS)
        print(f"  B = {bw:4.0f} Hz  radius {a:.6f}  -3 dB edges {lo:+7.2f} / {hi:+6.2f} Hz")


if __name__ == "__main__":
    main()
