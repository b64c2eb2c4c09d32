"""Command-line front end.

Verbs::

    ykshaping design       --config CFG --out DIR [--grid-points N] [--mode MODE]
    ykshaping analyze      --controller FILE --plant REF [--out DIR] [--grid-points N]
    ykshaping simulate     --config CFG --controller FILE --out DIR
    ykshaping conditioning [--config CFG] --out DIR

``REF`` is ``fixture:minimum_phase``, ``fixture:dual_stage`` or the path of
a plant SOS file.  Exit codes: 0 success, 2 design destabilised (artifacts
still written, flagged ``aborted``), 3 I/O, schema or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Sequence

import jsonschema
import numpy as np

from . import __version__
from . import fixture_constants as K
from .bench_plants import make_dual_stage_fixture, make_minimum_phase_fixture
from .conditioning import (direct_multiband_shaping, migration_sweep, reports_to_csv,
                           reports_to_json, shaping_frequency_report)
from .controller_file import SOSSystem, atomic_write, config_hash, read_sos, to_sos, write_sos
from .inversion import DEFAULT_CANCEL_RADIUS
from .lti import FrequencyResponse, StateSpace, System, bode_integral, margins, unit_grid
from .qdesign import NotchSpec
from .simulate import closed_loop_disturbance_sim
from .ykloop import (MODES, DesignDestabilized, DesignPlan, _loop_response,
                     closed_loop_max_modulus, notch_depths_db, run_design, summary_dict)

__all__ = ["main", "cmd_design", "cmd_analyze", "cmd_simulate", "cmd_conditioning",
           "DESIGN_SCHEMA", "CONDITIONING_SCHEMA", "load_plant", "plan_from_config",
           "fixture_sos", "EXIT_OK", "EXIT_DESTABILIZED", "EXIT_INPUT"]

EXIT_OK, EXIT_DESTABILIZED, EXIT_INPUT = 0, 2, 3

_POS = {"type": "number", "exclusiveMinimum": 0}

DESIGN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["sample_rate_hz", "plant", "groups"],
    "properties": {
        "sample_rate_hz": _POS,
        "plant": {"type": "string", "minLength": 1},
        "groups": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["freqs_hz"],
                "properties": {
                    "freqs_hz": {"type": "array", "minItems": 1, "items": _POS},
                    "bandwidth_hz": _POS,
                    "depth_g": {"type": "number", "minimum": 0, "maximum": 1},
                    "beta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                },
            },
        },
        "reduction_order": {"type": ["integer", "null"], "minimum": 2},
        "reduction_method": {"enum": ["truncate", "residualize"]},
        "mode": {"enum": list(MODES)},
        "cancel_radius": {"type": "number", "exclusiveMinimum": 0},
        "sig_digits": {"type": ["integer", "null"], "minimum": 1},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "points": {"type": "integer", "minimum": 16},
                "spacing": {"enum": ["linear", "log"]},
                "refine": {"type": "boolean"},
            },
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["freqs_hz", "amplitudes"],
            "properties": {
                "freqs_hz": {"type": "array", "minItems": 1, "items": _POS},
                "amplitudes": {"type": "array", "minItems": 1, "items": {"type": "number"}},
                "n_samples": {"type": "integer", "minimum": 16},
                "injection": {"enum": ["output", "input"]},
            },
        },
    },
}

CONDITIONING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "sample_rate_hz": _POS,
        "freqs_hz": {"type": "array", "minItems": 1, "items": _POS},
        "bandwidth_hz": _POS,
        "digit_levels": {"type": "array", "minItems": 1,
                         "items": {"type": ["integer", "null"], "minimum": 1}},
        "max_bands": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
    },
}

CONDITIONING_DEFAULTS = {
    "sample_rate_hz": K.CONDITIONING_SAMPLE_RATE,
    "freqs_hz": list(K.CONDITIONING_FREQS_HZ),
    "bandwidth_hz": K.CONDITIONING_BANDWIDTH_HZ,
    "digit_levels": [7, 15, 17],
    "m": 2,
}

DEFAULT_SIM_SAMPLES = 30000


class InputError(Exception):
    """Bad file, schema or configuration; maps to exit code 3."""


# ------------------------------------------------------------------ inputs

def _load_json(path, schema) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from e
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as e:
        raise InputError(f"{path}: {e.message}") from e
    return doc


def _read_sos(path) -> SOSSystem:
    try:
        return read_sos(path)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e
    except (json.JSONDecodeError, jsonschema.ValidationError, ValueError) as e:
        msg = e.message if isinstance(e, jsonschema.ValidationError) else str(e)
        raise InputError(f"{path}: {msg}") from e


def _fixture(name: str, fs: float):
    if name == "minimum_phase":
        return make_minimum_phase_fixture(fs), DEFAULT_CANCEL_RADIUS
    if name == "dual_stage":
        return make_dual_stage_fixture(fs).l_ss, K.DS_CANCEL_RADIUS
    raise InputError(f"unknown fixture {name!r} (known: minimum_phase, dual_stage)")


def load_plant(ref: str, sample_rate: float | None = None):
    """Resolve ``fixture:<name>`` or a plant file to ``(loop, default_cancel_radius)``."""
    if ref.startswith("fixture:"):
        name = ref.split(":", 1)[1]
        fs = sample_rate
        if fs is None:
            fs = K.DS_SAMPLE_RATE if name == "dual_stage" else K.MP_SAMPLE_RATE
        return _fixture(name, float(fs))
    sos = _read_sos(ref)
    if sos.kind != "plant":
        raise InputError(f"{ref} holds a {sos.kind}, not a plant")
    if sample_rate is not None and sos.sample_rate != float(sample_rate):
        raise InputError(f"{ref} is sampled at {sos.sample_rate} Hz, "
                         f"config says {sample_rate} Hz")
    return sos.to_ss(), DEFAULT_CANCEL_RADIUS


def fixture_sos(name: str, sample_rate: float | None = None) -> SOSSystem:
    """A bench fixture as a plant SOS document (for export)."""
    l, _ = load_plant(f"fixture:{name}", sample_rate)
    return to_sos(l, kind="plant")


def plan_from_config(cfg: dict, default_cancel_radius: float = DEFAULT_CANCEL_RADIUS) -> DesignPlan:
    groups = []
    for g in cfg["groups"]:
        groups.append([NotchSpec(f, g.get("bandwidth_hz", 20.0), g.get("depth_g", 1.0),
                                 g.get("beta", 1.0)) for f in g["freqs_hz"]])
    grid = cfg.get("grid", {})
    return DesignPlan(
        groups=groups,
        reduction_order=cfg.get("reduction_order"),
        mode=cfg.get("mode", "iterative_eq7"),
        sig_digits=cfg.get("sig_digits"),
        cancel_radius=cfg.get("cancel_radius", default_cancel_radius),
        reduction_method=cfg.get("reduction_method", "truncate"),
        grid_points=grid.get("points", 8192),
        refine_grid=grid.get("refine", True),
        grid_spacing=grid.get("spacing", "linear"),
    )


# ------------------------------------------------------------------ outputs

def _meta(chash: str, fs: float) -> dict:
    return {"config_hash": chash, "sample_rate_hz": float(fs), "tool_version": __version__}


def _num(x):
    """JSON-safe float: non-finite values become ``None``."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _meta_lines(meta: dict) -> str:
    return "".join(f"# {k}: {meta[k]}\n" for k in ("config_hash", "sample_rate_hz", "tool_version"))


def _csv(meta: dict, header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(_meta_lines(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, (str, int)) else f"{v:.17g}" for v in r])
    return buf.getvalue()


def _response_csv(meta, s: FrequencyResponse, pred: FrequencyResponse | None = None) -> str:
    if pred is None:
        return _csv(meta, ["freq_hz", "mag_db", "phase_deg"],
                    zip(s.freqs_hz, s.mag_db, s.phase_deg))
    return _csv(meta, ["freq_hz", "mag_db", "phase_deg", "predicted_mag_db",
                       "predicted_phase_deg"],
                zip(s.freqs_hz, s.mag_db, s.phase_deg, pred.mag_db, pred.phase_deg))


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_all(out_dir, files: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files.items():
        atomic_write(os.path.join(out_dir, name), text)


# ------------------------------------------------------------------ verbs

def cmd_design(config_path, out_dir, grid_points: int | None = None,
               mode: str | None = None) -> int:
    """Run the grouped design and write stage CSVs, ``summary.json`` and ``controller.json``."""
    cfg = _load_json(config_path, DESIGN_SCHEMA)
    if grid_points is not None:
        cfg.setdefault("grid", {})["points"] = int(grid_points)
    if mode is not None:
        cfg["mode"] = mode
    jsonschema.validate(cfg, DESIGN_SCHEMA)
    fs = float(cfg["sample_rate_hz"])
    l, cancel = load_plant(cfg["plant"], fs)
    try:
        plan = plan_from_config(cfg, cancel)
    except (TypeError, ValueError) as e:
        raise InputError(f"{config_path}: {e}") from e
    meta = _meta(config_hash(cfg), fs)

    aborted, failed = False, None
    try:
        records = run_design(l, plan)
    except DesignDestabilized as e:
        aborted, records, failed = True, list(e.records), e.failed
    except ValueError as e:
        raise InputError(f"{config_path}: {e}") from e

    files = {"baseline.csv": _response_csv(meta, records[0].sensitivity_achieved)}
    for r in records[1:]:
        files[f"stage_{r.stage_index:02d}.csv"] = _response_csv(
            meta, r.sensitivity_achieved, r.sensitivity_predicted)
    if failed is not None:
        files[f"stage_{failed.stage_index:02d}_failed.csv"] = _response_csv(
            meta, failed.sensitivity_achieved, failed.sensitivity_predicted)

    final = records[-1]
    summary = summary_dict(records, plan, aborted, failed)
    summary.update(meta)
    summary["plant"] = cfg["plant"]
    summary["grid_points"] = int(final.sensitivity_achieved.freqs_hz.size)
    summary["final_notch_depths_db"] = {f"{k:g}": v for k, v in final.notch_depths_db.items()}
    files["summary.json"] = _json(_clean(summary))

    ctrl = to_sos(final.controller_reduced, "controller",
                  [s.freq_hz for s in plan.specs[:len(final.targets_hz)]],
                  notch_bandwidths_hz=[s.bandwidth_hz
                                       for s in plan.specs[:len(final.targets_hz)]],
                  aborted=aborted, **{k: meta[k] for k in ("config_hash", "tool_version")})
    files["controller.json"] = _json(ctrl.to_dict())
    _write_all(out_dir, files)
    if aborted:
        print(f"design aborted: stage {failed.stage_index} destabilised the loop "
              f"(max |p| = {failed.max_pole_modulus:.9g})", file=sys.stderr)
        return EXIT_DESTABILIZED
    return EXIT_OK


class _Product:
    # loop gain L*C evaluated factor by factor
    def __init__(self, l: System, c: SOSSystem):
        self.l, self.c, self.sample_rate = l, c, l.sample_rate

    def evaluate(self, w):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return self.l.evaluate(w) * self.c.evaluate(w)


def _pole_table(c: SOSSystem) -> list:
    rows = []
    for row in c.sections:
        a = np.trim_zeros(row[3:], "b")
        if a.size > 1:
            for p in np.roots(a):
                rows.append(p)
    rows.sort(key=lambda p: (-abs(p), abs(np.angle(p)), p.imag))
    return [{"real": float(p.real), "imag": float(p.imag), "modulus": float(abs(p)),
             "freq_hz": float(abs(np.angle(p)) * c.sample_rate / (2 * np.pi))} for p in rows]


def analyze(c: SOSSystem, plant_ref: str, grid_points: int = 8192) -> dict:
    """Analysis document for controller ``c`` closing the loop around ``plant_ref``."""
    fs = c.sample_rate
    l, _ = load_plant(plant_ref, fs)
    if l.sample_rate != fs:
        raise InputError("controller and plant sample rates differ")
    targets = list(c.notch_targets_hz)
    widths = c.meta.get("notch_bandwidths_hz") or [20.0] * len(targets)
    grid = unit_grid(fs, grid_points, targets, widths)
    w = 2 * np.pi * grid / fs
    s = FrequencyResponse(grid, _loop_response(l, c, w), fs)
    with np.errstate(divide="ignore"):
        bi = bode_integral(s)
    rho = closed_loop_max_modulus(l, c.to_ss())
    mg = margins(_Product(l, c))
    depths = notch_depths_db(l, c, targets)
    doc = {
        "plant": plant_ref,
        "controller_order": c.order,
        "controller_config_hash": c.meta.get("config_hash"),
        "closed_loop_max_pole_modulus": rho,
        "stable": bool(rho < 1.0),
        "margins": {
            "gain_margin_db": mg.gain_margin_db,
            "phase_margin_deg": mg.phase_margin_deg,
            "gain_crossover_hz": list(mg.gain_crossover_hz),
            "phase_crossover_hz": list(mg.phase_crossover_hz),
            "grid_points": mg.grid_points,
        },
        "controller_poles": _pole_table(c),
        "bode_integral": bi,
        "grid_points": int(grid.size),
        "peak_sensitivity_db": float(np.max(s.mag_db)),
        "notch_depths_db": {f"{k:g}": v for k, v in depths.items()},
    }
    return _clean(doc)


def _analysis_text(doc: dict) -> str:
    m = doc["margins"]
    gm = "inf" if m["gain_margin_db"] is None else f"{m['gain_margin_db']:.3f} dB"
    pm = "n/a" if m["phase_margin_deg"] is None else f"{m['phase_margin_deg']:.3f} deg"
    out = [
        f"plant                 {doc['plant']}",
        f"sample rate           {doc['sample_rate_hz']:g} Hz",
        f"controller order      {doc['controller_order']}",
        f"closed loop           {'stable' if doc['stable'] else 'UNSTABLE'} "
        f"(max |p| = {doc['closed_loop_max_pole_modulus']:.9f})",
        f"gain margin           {gm}",
        f"phase margin          {pm}",
        f"peak |S|              {doc['peak_sensitivity_db']:.3f} dB",
        f"Bode integral         {doc['bode_integral']:.3e} ({doc['grid_points']} points)",
        "",
        "notch depths (dB below baseline)",
    ]
    for f, d in doc["notch_depths_db"].items():
        out.append(f"  {float(f):10.3f} Hz  {d:8.2f}")
    out += ["", "controller poles (modulus, Hz)"]
    for p in doc["controller_poles"]:
        out.append(f"  {p['modulus']:.9f}  {p['freq_hz']:10.3f}")
    out.append(f"\nconfig hash {doc['config_hash']}  tool {doc['tool_version']}")
    return "\n".join(out) + "\n"


def cmd_analyze(controller_path, plant_ref, out_dir=None, grid_points: int | None = None) -> int:
    """Write ``analysis.json`` and ``analysis.txt`` (or print the text when ``out_dir`` is None)."""
    c = _read_sos(controller_path)
    if c.kind != "controller":
        raise InputError(f"{controller_path} holds a {c.kind}, not a controller")
    n = 8192 if grid_points is None else int(grid_points)
    doc = analyze(c, plant_ref, n)
    inputs = {"controller": c.to_dict(), "plant": plant_ref, "grid_points": n}
    doc.update(_meta(config_hash(inputs), c.sample_rate))
    text = _analysis_text(doc)
    if out_dir is None:
        sys.stdout.write(text)
    else:
        _write_all(out_dir, {"analysis.json": _json(doc), "analysis.txt": text})
    return EXIT_OK


def cmd_simulate(config_path, controller_path, out_dir) -> int:
    """Write ``error.csv`` (time series) and ``amplitudes.csv``/``simulation.json``."""
    cfg = _load_json(config_path, DESIGN_SCHEMA)
    if "simulation" not in cfg:
        raise InputError(f"{config_path}: no 'simulation' block")
    c = _read_sos(controller_path)
    fs = float(cfg["sample_rate_hz"])
    if c.sample_rate != fs:
        raise InputError("controller and config sample rates differ")
    l, _ = load_plant(cfg["plant"], fs)
    sim = cfg["simulation"]
    f, a = sim["freqs_hz"], sim["amplitudes"]
    if len(f) != len(a):
        raise InputError(f"{config_path}: one amplitude per frequency")
    try:
        res = closed_loop_disturbance_sim(l, c.to_ss(), f, a,
                                          sim.get("n_samples", DEFAULT_SIM_SAMPLES),
                                          sim.get("injection", "output"),
                                          plant=l if sim.get("injection") == "input" else None)
    except ValueError as e:
        raise InputError(f"{config_path}: {e}") from e
    meta = _meta(config_hash({"config": cfg, "controller": c.to_dict()}), fs)
    w = 2 * np.pi * np.asarray(f, float) / fs
    s_abs = np.abs(_loop_response(l, c, w))
    rel = np.abs(res.ratios - s_abs) / s_abs
    files = {
        "error.csv": _csv(meta, ["k", "e"], ((k, v) for k, v in enumerate(res.e))),
        "amplitudes.csv": _csv(meta, ["freq_hz", "input_amplitude", "steady_state_amplitude",
                                      "ratio", "abs_sensitivity", "relative_error"],
                               zip(f, a, res.steady_state_amplitude, res.ratios, s_abs, rel)),
    }
    doc = dict(meta)
    doc.update({
        "freqs_hz": list(f), "input_amplitudes": list(a),
        "steady_state_amplitude": list(res.steady_state_amplitude),
        "ratio": list(res.ratios), "abs_sensitivity": list(s_abs), "relative_error": list(rel),
        "transient_samples": res.transient_samples, "window_samples": res.window_samples,
        "closed_loop_max_pole_modulus": res.max_pole_modulus,
    })
    files["simulation.json"] = _json(_clean(doc))
    _write_all(out_dir, files)
    return EXIT_OK


def cmd_conditioning(config_path, out_dir) -> int:
    """Migration sweep plus shaping responses of every direct design."""
    cfg = dict(CONDITIONING_DEFAULTS)
    if config_path is not None:
        cfg.update(_load_json(config_path, CONDITIONING_SCHEMA))
    fs = float(cfg["sample_rate_hz"])
    pool = cfg["freqs_hz"]
    nb = cfg.get("max_bands", len(pool))
    meta = _meta(config_hash(cfg), fs)
    try:
        reports = migration_sweep(pool, cfg["bandwidth_hz"], cfg["digit_levels"], nb,
                                  cfg["m"], fs)
    except ValueError as e:
        raise InputError(f"{config_path}: {e}") from e
    body = reports_to_csv(reports)
    files = {"conditioning.csv": _meta_lines(meta) + body}
    doc = reports_to_json(reports)
    doc.update(meta)
    doc.update({"bandwidth_hz": cfg["bandwidth_hz"], "m": cfg["m"]})
    files["conditioning.json"] = _json(_clean(doc))

    grid = unit_grid(fs, 4096, pool[:nb], [cfg["bandwidth_hz"]] * nb)
    for k in range(1, nb + 1):
        for d in cfg["digit_levels"]:
            specs = [NotchSpec(x, cfg["bandwidth_hz"]) for x in pool[:k]]
            qf, _ = direct_multiband_shaping(specs, cfg["m"], d, fs)
            r = shaping_frequency_report(qf, grid)
            tag = "double" if d is None else f"{d}"
            files[f"shaping_{k}band_{tag}.csv"] = _response_csv(meta, r)
    _write_all(out_dir, files)
    return EXIT_OK


# ------------------------------------------------------------------ entry

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ykshaping", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)

    d = sub.add_parser("design", help="run the grouped notch design")
    d.add_argument("--config", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--grid-points", type=int)
    d.add_argument("--mode", choices=MODES)

    a = sub.add_parser("analyze", help="analyse a controller file against a plant")
    a.add_argument("--controller", required=True)
    a.add_argument("--plant", help="fixture:<name> or plant file; defaults to the config's")
    a.add_argument("--config", help="design config supplying the plant reference")
    a.add_argument("--out")
    a.add_argument("--grid-points", type=int)

    s = sub.add_parser("simulate", help="time-domain disturbance simulation")
    s.add_argument("--config", required=True)
    s.add_argument("--controller", required=True)
    s.add_argument("--out", required=True)

    c = sub.add_parser("conditioning", help="direct multi-band pole-migration sweep")
    c.add_argument("--config")
    c.add_argument("--out", required=True)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.verb == "design":
            return cmd_design(args.config, args.out, args.grid_points, args.mode)
        if args.verb == "analyze":
            plant = args.plant
            if plant is None:
                if args.config is None:
                    raise InputError("analyze needs --plant or --config")
                plant = _load_json(args.config, DESIGN_SCHEMA)["plant"]
            return cmd_analyze(args.controller, plant, args.out, args.grid_points)
        if args.verb == "simulate":
            return cmd_simulate(args.config, args.controller, args.out)
        return cmd_conditioning(args.config, args.out)
    except (InputError, jsonschema.ValidationError) as e:
        msg = e.message if isinstance(e, jsonschema.ValidationError) else str(e)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
