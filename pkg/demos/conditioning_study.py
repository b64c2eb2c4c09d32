"""Why the notches are installed one section at a time.

Expanding every band into one high-order polynomial and storing it with a
few significant digits moves its roots; past a handful of bands they leave
the unit disc.  Installing the same bands one stage at a time keeps every
stored polynomial second order.  Run ``python3 demos/conditioning_study.py``.
"""

from ykshaping import fixture_constants as K
from ykshaping.bench_plants import make_minimum_phase_fixture
from ykshaping.conditioning import migration_sweep
from ykshaping.qdesign import NotchSpec
from ykshaping.ykloop import DesignPlan, iterate_design


def main():
    fs = K.CONDITIONING_SAMPLE_RATE
    reports = migration_sweep(digit_levels=(7, 15, 17))
    print(f"direct design, fs = {fs:g} Hz, bands from {list(K.CONDITIONING_FREQS_HZ)} Hz")
    print("  bands  digits   max |z|      displacement  stable")
    for r in reports:
        print(f"  {r.band_count:5d}  {r.sig_digits:6d}   {r.max_modulus:.7f}  "
              f"{r.max_displacement:12.3e}  {r.stable}")

    specs = [NotchSpec(f, K.CONDITIONING_BANDWIDTH_HZ) for f in K.CONDITIONING_FREQS_HZ]
    rec = iterate_design(make_minimum_phase_fixture(fs),
                         DesignPlan([[s] for s in specs], sig_digits=7))
    print("\nsame five bands, one stage each, every section stored with 7 digits")
    for r in rec[1:]:
        depths = ", ".join(f"{f:g} Hz {d:.0f} dB" for f, d in r.notch_depths_db.items())
        print(f"  stage {r.stage_index}: max |p| {r.max_pole_modulus:.6f}  {depths}")


if __name__ == "__main__":
    main()
