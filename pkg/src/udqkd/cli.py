"""Command-line front end: calibrate, simulate, estimate, keyrate, pipeline, sweep.

Exit status: 0 positive key (or success for non-keyrate commands), 1 no key,
2 input/format error, 3 numerical inconsistency.
"""

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import cvmath, formats
from .estimation import estimate_session
from .polarization import CalibrationError, CalibrationRecord
from .security import (DEFAULT_MODE, MODES, InfeasibleError, ProtocolParams, gg02_key_rate,
                       sweep_csv, sweep_transmittance, ud_key_rate)
from .simulation import (ChannelConfig, ConfigError, DetectorConfig, FrameLayout,
                         PartialFrameError, PulseBatch, SimConfig, SyncError,
                         calibrate_from_samples, frame_decode, frame_encode,
                         shot_noise_calibration_run, simulate_session)

log = logging.getLogger("udqkd")

EXIT_KEY, EXIT_NO_KEY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(Exception):
    pass


class NumericError(Exception):
    pass


_FLOAT_KEYS = {
    "channel": ("T", "eps", "V_P1", "fluctuation"),
    "detector": ("eta_e", "V_e"),
    "protocol": ("V_M", "beta", "rep_rate_hz", "key_fraction"),
    "sim": ("sigma_volts", "rep_rate_hz", "sample_rate_hz", "duty_cycle",
            "estimation_fraction", "p_monitor_fraction", "crosstalk"),
}
_INT_KEYS = {"sim": ("n_pulses", "seed", "frame_pulses", "calibration_samples", "lead_in")}
_STR_KEYS = {
    "keyrate": ("mode",),
    "sweep": ("grid", "spacing"),
    "estimate": ("detector_in_T",),
    "input": ("pulses", "samples_off", "samples_on", "calibration", "estimation"),
}
_CAL_KEYS = ("N0", "Ve_snu", "V_pi", "sigma", "eta_det", "V_LO", "kappa")


@dataclass
class RunConfig:
    """Everything a subcommand needs, assembled from a flat key=value file."""

    sim: SimConfig
    params: ProtocolParams
    calibration: CalibrationRecord
    mode: str = DEFAULT_MODE
    frame_pulses: int = 10_000
    calibration_samples: int = 1_000_000
    lead_in: int = 37
    detector_in_T: bool = False
    grid: str = "0.05:1:50"
    spacing: str = "log"
    inputs: dict = field(default_factory=dict)


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {text!r}")


def load_config(kv, seed=None, mode=None, grid=None):
    """Build a :class:`RunConfig` from parsed ``section.key=value`` pairs.

    Unset values default to the 460 m link of the reference experiment.
    """
    sections = {}
    for key, value in kv.items():
        if "." not in key:
            raise InputError(f"config key {key!r} lacks a section prefix")
        sec, name = key.split(".", 1)
        sections.setdefault(sec, {})[name] = value

    known = {s: set(v) for s, v in _FLOAT_KEYS.items()}
    for table in (_INT_KEYS, _STR_KEYS):
        for s, v in table.items():
            known.setdefault(s, set()).update(v)
    known["calibration"] = set(_CAL_KEYS)
    for sec, items in sections.items():
        bad = set(items) - known.get(sec, set())
        if bad:
            raise InputError(f"unknown config keys: {sorted(sec + '.' + b for b in bad)}")

    def num(sec, name, default, cast=float):
        raw = sections.get(sec, {}).get(name)
        if raw is None:
            return default
        try:
            return cast(raw)
        except ValueError as exc:
            raise InputError(f"{sec}.{name}: {exc}") from exc

    try:
        cal = CalibrationRecord.reference()
        if "calibration" in sections:
            cal = cal.replace(**{k: num("calibration", k, None) for k in sections["calibration"]})
        if "input" in sections and "calibration" in sections["input"]:
            cal = CalibrationRecord.from_mapping(formats.read_kv(sections["input"]["calibration"]))

        channel = ChannelConfig(T=num("channel", "T", 0.575), eps=num("channel", "eps", 0.0375),
                                V_P1=num("channel", "V_P1", 1.0),
                                fluctuation=num("channel", "fluctuation", 0.0))
        detector = DetectorConfig(eta_e=num("detector", "eta_e", cal.eta_det),
                                  V_e=num("detector", "V_e", cal.Ve_snu))
        est = num("sim", "estimation_fraction", 0.2)
        pm = num("sim", "p_monitor_fraction", 0.2)
        sim = SimConfig(
            n_pulses=num("sim", "n_pulses", 500_000, int),
            sigma_volts=num("sim", "sigma_volts", cal.sigma),
            seed=seed if seed is not None else num("sim", "seed", 0, int),
            rep_rate_hz=num("sim", "rep_rate_hz", 10_000.0),
            sample_rate_hz=num("sim", "sample_rate_hz", 1_000_000.0),
            duty_cycle=num("sim", "duty_cycle", 0.1),
            channel=channel, detector=detector, calibration=cal,
            estimation_fraction=est, p_monitor_fraction=pm,
            crosstalk=num("sim", "crosstalk", SimConfig.crosstalk))
        params = ProtocolParams(
            V_M=num("protocol", "V_M", sim.V_M), T=channel.T, eps=channel.eps,
            eta_e=detector.eta_e, V_e=detector.V_e, V_P1=channel.V_P1,
            beta=num("protocol", "beta", 0.95),
            rep_rate_hz=num("protocol", "rep_rate_hz", sim.rep_rate_hz),
            key_fraction=num("protocol", "key_fraction", 1.0 - est - pm))
    except (ValueError, ConfigError, CalibrationError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(str(exc)) from exc

    s = sections
    cfg = RunConfig(
        sim=sim, params=params, calibration=cal,
        mode=mode or s.get("keyrate", {}).get("mode", DEFAULT_MODE),
        frame_pulses=num("sim", "frame_pulses", 10_000, int),
        calibration_samples=num("sim", "calibration_samples", 1_000_000, int),
        lead_in=num("sim", "lead_in", 37, int),
        detector_in_T=_parse_bool(s.get("estimate", {}).get("detector_in_T", "false")),
        grid=grid or s.get("sweep", {}).get("grid", "0.05:1:50"),
        spacing=s.get("sweep", {}).get("spacing", "log"),
        inputs=dict(s.get("input", {})))
    if cfg.mode not in MODES:
        raise InputError(f"unknown conditioning mode {cfg.mode!r}; choose from {MODES}")
    if cfg.spacing not in ("log", "linear"):
        raise InputError("sweep.spacing must be 'log' or 'linear'")
    return cfg


def parse_grid(text, spacing="log"):
    """``a:b:n`` -> ``n`` points from ``a`` to ``b`` (inclusive)."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise InputError(f"grid must look like a:b:n, got {text!r}") from exc
    if n < 1 or not 0.0 < a <= 1.0 or not 0.0 < b <= 1.0:
        raise InputError("grid endpoints must lie in (0, 1] and n >= 1")
    if n == 1:
        return np.array([a])
    if spacing == "log":
        return np.geomspace(a, b, n)
    return np.linspace(a, b, n)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_calibrate(cfg, args):
    off_path = cfg.inputs.get("samples_off")
    on_path = cfg.inputs.get("samples_on")
    if off_path or on_path:
        if not (off_path and on_path):
            raise InputError("calibration from files needs both input.samples_off and "
                             "input.samples_on")
        try:
            off, _ = formats.read_samples(off_path)
            on, _ = formats.read_samples(on_path)
        except OSError as exc:
            raise InputError(str(exc)) from exc
        run = calibrate_from_samples(off, on)
    else:
        run = shot_noise_calibration_run(cfg.sim, n_samples=cfg.calibration_samples)
    rec = cfg.calibration.replace(N0=run.N0, Ve_snu=run.Ve_snu, kappa=cfg.calibration.kappa)
    _write(_out(args, "calibration.txt"), rec.to_text())
    print(f"N0 = {run.N0 * 1e6:.4f} mV^2, V_e = {run.Ve_snu:.5f} SNU "
          f"({run.n_samples} samples per acquisition)")
    return EXIT_KEY


def _simulate(cfg):
    batch = simulate_session(cfg.sim)
    return batch


def cmd_simulate(cfg, args):
    batch = _simulate(cfg)
    batch.to_csv(_out(args, "pulses.csv"))
    first = batch.take(slice(0, cfg.frame_pulses))
    samples = frame_encode(first, cfg.sim, lead_in=cfg.lead_in)
    formats.write_samples(_out(args, "frame.bin"), samples, cfg.sim.sample_rate_hz)
    print(f"simulated {len(batch)} pulses, V_M = {cfg.sim.V_M:.4g} SNU; "
          f"first frame of {len(first)} pulses written to frame.bin")
    return EXIT_KEY


def _estimate(cfg, batch):
    res = estimate_session(batch, cfg.params.eta_e, cfg.params.V_e,
                           detector_in_T=cfg.detector_in_T)
    return res


def _write_estimation(args, res):
    _write(_out(args, "estimation.txt"), res.to_text())
    _write(_out(args, "estimation.csv"), res.to_csv())
    print(f"T_hat = {res.T_hat:.5f}, eps_hat = {res.eps_hat:.5f}, "
          f"V_P1_hat = {res.V_P1_hat:.5f}  flags: {','.join(res.flags) or '-'}")


def cmd_estimate(cfg, args):
    path = cfg.inputs.get("pulses") or os.path.join(args.out, "pulses.csv")
    try:
        batch = PulseBatch.from_csv(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read pulses from {path}: {exc}") from exc
    res = _estimate(cfg, batch)
    _write_estimation(args, res)
    return EXIT_KEY


def _params_from_inputs(cfg):
    path = cfg.inputs.get("estimation")
    if not path:
        return cfg.params
    try:
        kv = formats.read_kv(path)
        return cfg.params.replace(T=min(float(kv["T_hat"]), 1.0),
                                  eps=max(float(kv["eps_hat"]), 0.0),
                                  V_P1=float(kv["V_P1_hat"]), V_M=float(kv["V_M"]))
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"cannot use estimation file {path}: {exc}") from exc


def _keyrate(cfg, params, args):
    try:
        report = ud_key_rate(params, cfg.mode)
    except InfeasibleError as exc:
        raise NumericError(f"keyrate: {exc}") from exc
    _write(_out(args, "keyrate.csv"), report.to_csv())
    _write(_out(args, "keyrate.txt"), report.to_text())
    sys.stdout.write(report.to_text())
    return EXIT_KEY if report.K > 0.0 else EXIT_NO_KEY


def cmd_keyrate(cfg, args):
    return _keyrate(cfg, _params_from_inputs(cfg), args)


def cmd_pipeline(cfg, args):
    batch = _simulate(cfg)
    # DAQ round trip frame by frame; Bob keeps what the decoder hands back
    decoded = []
    for start in range(0, len(batch), cfg.frame_pulses):
        chunk = batch.take(slice(start, start + cfg.frame_pulses))
        trace = frame_encode(chunk, cfg.sim, lead_in=cfg.lead_in)
        try:
            got = frame_decode(trace, cfg.sim, side_info=chunk)
        except (SyncError, PartialFrameError) as exc:
            raise NumericError(f"frame {start // cfg.frame_pulses}: {exc}") from exc
        decoded.append(got.bob_volts)
    bob = np.concatenate(decoded) if decoded else np.empty(0)
    if not np.array_equal(bob, batch.bob_volts):
        raise NumericError("frame round trip altered Bob's data")
    received = batch.with_bob_volts(bob)
    res = _estimate(cfg, received)
    _write_estimation(args, res)
    if res.degenerate:
        print("channel estimate degenerate: no key")
        return EXIT_NO_KEY
    try:
        params = res.to_params(cfg.params)
    except ValueError as exc:
        raise NumericError(str(exc)) from exc
    try:
        return _keyrate(cfg, params, args)
    except NumericError as exc:
        if isinstance(exc.__cause__, InfeasibleError):
            print(f"no key: {exc}")
            return EXIT_NO_KEY
        raise


def cmd_sweep(cfg, args):
    grid = parse_grid(cfg.grid, cfg.spacing)
    rows = sweep_transmittance(cfg.params, grid, cfg.mode)
    _write(_out(args, "sweep.csv"), sweep_csv(rows))
    empty = sum(1 for r in rows if r.K_ud is None or r.K_gg02 is None)
    msg = f"wrote {len(rows)} rows to sweep.csv"
    if empty:
        msg += f"; {empty} rows had infeasible cells (left empty)"
    print(msg)
    return EXIT_KEY


COMMANDS = {
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "keyrate": cmd_keyrate,
    "pipeline": cmd_pipeline,
    "sweep": cmd_sweep,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file (section.key=value)")
    common.add_argument("--seed", type=int, help="override sim.seed")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--mode", choices=MODES, help="conditioning mode for chi_BE")
    common.add_argument("--grid", help="transmittance grid a:b:n for sweep")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="udqkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        kv = formats.read_kv(args.config) if args.config else {}
        cfg = load_config(kv, seed=args.seed, mode=args.mode, grid=args.grid)
        return COMMANDS[args.command](cfg, args)
    except (InputError, formats.FormatError, OSError) as exc:
        print(f"udqkd {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, CalibrationError, cvmath.NumericalInstabilityError,
            cvmath.HolevoInconsistencyError) as exc:
        print(f"udqkd {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
