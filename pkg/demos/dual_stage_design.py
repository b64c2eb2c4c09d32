"""Twelve notches on the dual-stage loop, reduced and checked in time.

Runs the six-group plan at full order and at 4 and 2 states per notch,
compares the resulting sensitivities, checks the Bode integral and
confirms the attenuation by simulation.  Pass an output directory to also
write the stage CSVs through the command-line front end.

    python3 demos/dual_stage_design.py [OUT_DIR]
"""

import os
import sys

import numpy as np

from ykshaping.bench_plants import dual_stage_plan, make_dual_stage_fixture
from ykshaping.cli import main as cli_main
from ykshaping.lti import margins
from ykshaping.simulate import closed_loop_disturbance_sim
from ykshaping.ykloop import achieved_sensitivity, iterate_design

HERE = os.path.dirname(os.path.abspath(__file__))


def main(out_dir=None):
    fx = make_dual_stage_fixture()
    m = margins(fx.l_ss)
    print(f"baseline loop: fs {fx.sample_rate:g} Hz, gain margin {m.gain_margin_db:.2f} dB, "
          f"phase margin {m.phase_margin_deg:.1f} deg")

    runs = {r: iterate_design(fx.l_ss, dual_stage_plan(r)) for r in (None, 4, 2)}
    full = runs[None][-1]
    print("\nstage  controller order  max |p|    Bode integral  (full order)")
    for r in runs[None]:
        print(f"  {r.stage_index}    {r.controller_full.order:12d}    {r.max_pole_modulus:.6f}  "
              f"{r.bode_integral_value:+.2e}")

    print("\nreduction")
    s_full = np.abs(full.sensitivity_achieved.values)
    for red in (4, 2):
        last = runs[red][-1]
        diff = np.abs(20 * np.log10(np.abs(last.sensitivity_achieved.values) / s_full))
        print(f"  {red} per notch: order {last.controller_reduced.order} "
              f"(full {full.controller_reduced.order}), max |S| change {np.nanmax(diff):.2f} dB, "
              f"min notch depth {min(last.notch_depths_db.values()):.0f} dB")

    c = runs[4][-1].controller_reduced
    probes = [229.0, 1500.0, 3000.0]
    sim = closed_loop_disturbance_sim(fx.l_ss, c, probes, [1.0, 1.0, 1.0], 30000)
    s = np.abs(achieved_sensitivity(fx.l_ss, c, probes).values)
    print("\nsimulated attenuation versus |S| (4 per notch)")
    for f, a, b in zip(probes, sim.ratios, s):
        print(f"  {f:6g} Hz  simulated {a:.4e}  |S| {b:.4e}")

    if out_dir:
        code = cli_main(["design", "--config", os.path.join(HERE, "configs", "dual_stage_12.json"),
                         "--out", out_dir])
        print(f"\nCLI design written to {out_dir} (exit {code})")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
