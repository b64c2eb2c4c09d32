"""Numeric constants of the synthetic benchmark loops.

Everything here is invented for reproducible experiments.  None of it is
fitted to a real drive; treat the plants as plausible shapes, not data.
"""

# ---- minimum-phase test loop:  k z^-2 (1 - ZERO z^-1) / ((1 - z^-1)(1 - p z^-1))
MP_SAMPLE_RATE = 8000.0
MP_ZERO = 0.5                 # stable real zero, cancelled exactly by ZPETC
MP_POLE_HZ = 1000.0           # p = exp(-2 pi MP_POLE_HZ / fs)
MP_CROSSOVER_HZ = 250.0       # k chosen so |L| = 1 here

# ---- dual-stage HDD-like loop:  L = P1 C1 + P2 C2
DS_SAMPLE_RATE = 40000.0
DS_DELAY = 1                  # computation delay on both actuator paths

# VCM: double integrator times two resonances (ZOH discretised).  The first
# mode is moderately damped so the loop anti-resonance stays off the unit circle
# (a near-unit kept zero there makes |L Linv| huge near Nyquist).
VCM_GAIN = 1.0
VCM_RESONANCES_HZ = (3500.0, 6500.0)
VCM_DAMPING = (0.2, 0.05)

# position-sensing channel shared by both paths: (1 + b z^-1)/(1 + b), b > 1,
# i.e. a zero outside the unit circle that ZPETC has to keep
SENSOR_ZERO = -1.25

# Both paths sum to (k1 + k2 s)/s^2 at low frequency, which puts a slow but
# stable real zero near z = 0.9946.  Kept, it would be normalised at DC and
# blow |L Linv| up ~13x across the notch band, so this loop is inverted with a
# wider cancellation radius than the library default.
DS_CANCEL_RADIUS = 0.999

# micro-actuator: static gain with one resonance
MA_GAIN = 1.0
MA_RESONANCE_HZ = 9000.0
MA_DAMPING = 0.1

# micro-actuator path: integrator, |P2 C2| = 1 at MA_CROSSOVER_HZ
MA_CROSSOVER_HZ = 1000.0
# VCM path: lead centred on the hand-off frequency, |P1 C1| = |P2 C2| there
HANDOFF_HZ = 200.0
LEAD_RATIO = 3.0              # lead zero at HANDOFF/ratio, pole at HANDOFF*ratio

# 12 target frequencies, 6 groups of 2, all below the first resonance
DS_TARGET_GROUPS_HZ = (
    (120.0, 180.0),
    (229.0, 290.0),
    (338.0, 400.0),
    (460.0, 545.0),
    (590.0, 633.0),
    (690.0, 740.0),
)
# the same normalised width (rad/sample) as 20 Hz at 104 657 Hz, the
# reference rate of the conditioning study: about 7.64 Hz here
REFERENCE_SAMPLE_RATE = 104657.0
DS_NOTCH_BANDWIDTH_HZ = 20.0 * DS_SAMPLE_RATE / REFERENCE_SAMPLE_RATE

# conditioning study: frequency pool and notch width.  At the reference rate
# the 7-digit monomial expansion already loses stability at two bands (the
# poles sit ~1e-3 from the unit circle), so the study runs at 6 kHz.  There the
# 4-band design stays stable with 29-41 dB notches and the 5-band design has a
# pole at |z| = 1.02 and a shallow, erratic response.
CONDITIONING_FREQS_HZ = (229.0, 338.0, 545.0, 633.0, 740.0)
CONDITIONING_BANDWIDTH_HZ = 20.0
CONDITIONING_SAMPLE_RATE = 6000.0
