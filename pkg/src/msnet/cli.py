"""Command-line front end.

Every subcommand reads one JSON config and writes ``report.json`` (and, for the
sweeps, ``sweep.csv``) to the output directory.  Exit codes: 0 success,
2 invalid input, 3 mathematically infeasible request.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import secrets
import sys
import warnings
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

from . import __version__
from .analysis import LoopModel, ms_stability
from .channel import ChannelSpec, channel_stats, snr_profile
from .errors import InfeasibleError, ValidationError
from .mcsim import MASK64, SimConfig, kappa_sweep, simulate
from .ratfun import RatFn, RootSet
from .synth import stabilizability_index, stabilizability_report, synthesize

__all__ = ["main", "load_config", "KAPPA_HEADER", "TAU_HEADER"]

KAPPA_HEADER = ["kappa", "margin", "power_theory", "power_sim", "power_sim_stderr", "diverged"]
TAU_HEADER = ["tau", "index", "stabilizable"]
SIM_KEYS = ("horizon", "runs", "burn_in", "noise_std", "seed")


# --------------------------------------------------------------------------
# config


def _coeffs(obj: Any, where: str) -> list[float]:
    if not isinstance(obj, list) or not obj:
        raise ValidationError(f"{where} must be a nonempty list of numbers, got {obj!r}")
    out = []
    for i, v in enumerate(obj):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValidationError(f"{where}[{i}] = {v!r} is not a finite number")
        out.append(float(v))
    return out


def _tf(obj: Any, where: str) -> RatFn:
    if not isinstance(obj, dict):
        raise ValidationError(f"{where} must be an object with numerator and denominator")
    num = _coeffs(obj.get("numerator"), f"{where}.numerator")
    den = _coeffs(obj.get("denominator"), f"{where}.denominator")
    if not any(den):
        raise ValidationError(f"{where}.denominator is identically zero")
    return RatFn.from_z(num, den)


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path!r} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    for key in ("plant", "channel"):
        if key not in cfg:
            raise ValidationError(f"config is missing {key!r}")
    return cfg


def _spec(cfg: dict) -> ChannelSpec:
    ch = cfg["channel"]
    if not isinstance(ch, dict):
        raise ValidationError("channel must be an object with pmf and weights")
    return ChannelSpec(tuple(_coeffs(ch.get("pmf"), "channel.pmf")),
                       tuple(_coeffs(ch.get("weights"), "channel.weights")))


def _model(cfg: dict, with_controller: bool) -> LoopModel:
    P = _tf(cfg["plant"], "plant")
    K = None
    if with_controller:
        if "controller" not in cfg:
            raise ValidationError("config has no controller")
        K = _tf(cfg["controller"], "controller")
    return LoopModel(P, _spec(cfg), K)


def _sim_config(cfg: dict, args) -> SimConfig:
    raw = dict(cfg.get("sim") or {})
    unknown = set(raw) - set(SIM_KEYS)
    if unknown:
        raise ValidationError(f"unknown sim fields {sorted(unknown)}")
    if args.runs is not None:
        raw["runs"] = args.runs
    if args.horizon is not None:
        raw["horizon"] = args.horizon
    if args.seed is not None:
        raw["seed"] = args.seed
    if "seed" not in raw:
        raw["seed"] = secrets.randbits(64)
        print(f"seed: {raw['seed']}", file=sys.stderr)
    for key in ("horizon", "runs", "burn_in", "seed"):
        if key in raw and raw[key] is not None and (isinstance(raw[key], bool) or not isinstance(raw[key], int)):
            raise ValidationError(f"sim.{key} must be an integer, got {raw[key]!r}")
    if "noise_std" in raw and not isinstance(raw["noise_std"], (int, float)):
        raise ValidationError(f"sim.noise_std must be a number, got {raw['noise_std']!r}")
    return SimConfig(**raw)


# --------------------------------------------------------------------------
# serialization


def _num(x: float) -> Any:
    x = float(x)
    if math.isinf(x):
        return "unbounded"
    if math.isnan(x):
        return None
    return x


def _tf_json(f: RatFn) -> dict:
    n, d = f.to_z()
    return {"numerator": [float(c) for c in n], "denominator": [float(c) for c in d]}


def _roots_json(rs: RootSet) -> list:
    return [{"re": float(complex(r).real), "im": float(complex(r).imag), "multiplicity": int(k)}
            for r, k in zip(rs.roots, rs.multiplicities)]


def _channel_json(spec: ChannelSpec) -> dict:
    st = channel_stats(spec)
    T = spec.delay_bound
    return {
        "H": _tf_json(st.H),
        "r": [float(v) for v in st.r],
        "S": {"lags": list(range(-T, T + 1)), "coefficients": [float(v) for v in st.S]},
        "Phi": [float(v) for v in st.phi.coeffs] or [0.0],
        "W": _tf_json(st.W),
        "W_is_zero": st.W.is_zero(),
    }


def _stability_json(rep) -> dict:
    return {
        "internally_stable": rep.internally_stable,
        "ms_margin": _num(rep.ms_margin),
        "verdict": rep.verdict,
        "predicted_power_gain": _num(rep.predicted_power_gain),
        "G_norm_sq": _num(rep.g_norm_sq),
    }


def _stabilizability_json(rep) -> dict:
    return {
        "index": rep.index,
        "stabilizable": rep.stabilizable,
        "unstable_poles": _roots_json(rep.unstable_poles),
        "relative_degree_tau": rep.relative_degree_tau,
        "corollary_checks": rep.corollary_checks,
        "notes": list(rep.notes),
    }


def _sim_json(res) -> dict:
    d = asdict(res)
    d["empirical_rd"] = list(res.empirical_rd)
    return {k: (_num(v) if isinstance(v, float) else v) for k, v in d.items()}


def _write(out: Path, report: dict, rows: Optional[list] = None, header: Optional[list] = None) -> str:
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    (out / "report.json").write_text(text, encoding="utf-8")
    if rows is None:
        return text
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([("unbounded" if isinstance(v, float) and math.isinf(v) else repr(v) if isinstance(v, float) else v)
                    for v in r])
    (out / "sweep.csv").write_text(buf.getvalue(), encoding="utf-8")
    return buf.getvalue()


# --------------------------------------------------------------------------
# subcommands


def _base(cfg: dict, command: str) -> dict:
    return {"command": command, "config": cfg, "version": __version__}


def cmd_analyze(cfg, args):
    spec = _spec(cfg)
    report = _base(cfg, "analyze")
    report["channel"] = _channel_json(spec)
    report["snr_profile"] = [{"theta": t, "snr": _num(s)} for t, s in snr_profile(spec, 33)]
    return report, None, None


def cmd_check_stability(cfg, args):
    m = _model(cfg, True)
    report = _base(cfg, "check-stability")
    report["channel"] = _channel_json(m.spec)
    report["stability"] = _stability_json(ms_stability(m))
    return report, None, None


def cmd_stabilizability(cfg, args):
    m = _model(cfg, False)
    report = _base(cfg, "stabilizability")
    report["channel"] = _channel_json(m.spec)
    report["stabilizability"] = _stabilizability_json(stabilizability_report(m))
    return report, None, None


def cmd_synthesize(cfg, args):
    m = _model(cfg, False)
    res = synthesize(m)
    report = _base(cfg, "synthesize")
    report["channel"] = _channel_json(m.spec)
    report["synthesis"] = {
        "Q_opt": _tf_json(res.Q_opt),
        "K_opt": _tf_json(res.K_opt),
        "achieved_margin": res.achieved_margin,
        "Z2_norm_sq": res.Z2_norm_sq,
        "index": res.index,
        "relative_degree_tau": res.tau,
    }
    report["stability"] = _stability_json(ms_stability(m.with_controller(res.K_opt)))
    return report, None, None


def cmd_simulate(cfg, args):
    sim_cfg = _sim_config(cfg, args)
    if "controller" in cfg:
        m = _model(cfg, True)
        source = "config"
    else:
        base = _model(cfg, False)
        m = base.with_controller(synthesize(base).K_opt)
        source = "synthesized"
    echo = dict(cfg)
    echo["sim"] = {k: getattr(sim_cfg, k) for k in SIM_KEYS}
    report = _base(echo, "simulate")
    report["seed"] = sim_cfg.seed
    report["controller_source"] = source
    report["controller"] = _tf_json(m.K)
    report["stability"] = _stability_json(ms_stability(m))
    report["simulation"] = _sim_json(simulate(m, sim_cfg))
    return report, None, None


def cmd_sweep_tau(cfg, args):
    m = _model(cfg, False)
    sweep = cfg.get("sweep") or {}
    lo, hi = sweep.get("tau_range", [1, 6])
    if not (isinstance(lo, int) and isinstance(hi, int) and 1 <= lo <= hi):
        raise ValidationError(f"sweep.tau_range must be two integers 1 <= lo <= hi, got {[lo, hi]!r}")
    rep = stabilizability_report(m)
    rows = []
    for tau in range(lo, hi + 1):
        idx = stabilizability_index(rep.unstable_poles, m.stats.W, tau)
        rows.append([tau, idx, idx < 1.0])
    report = _base(cfg, "sweep-tau")
    report["rows"] = [dict(zip(TAU_HEADER, r)) for r in rows]
    return report, rows, TAU_HEADER


def cmd_sweep_kappa(cfg, args):
    m = _model(cfg, False)
    sweep = cfg.get("sweep") or {}
    kappas = _coeffs(sweep.get("kappas"), "sweep.kappas")
    Qt = _tf(sweep.get("qtilde", {"numerator": [1.0], "denominator": [1.0]}), "sweep.qtilde")
    sim_cfg = _sim_config(cfg, args)
    table = kappa_sweep(m, Qt, kappas, sim_cfg)
    rows = [[r.kappa, r.margin, r.power_theory, r.power_sim, r.power_sim_stderr, r.diverged] for r in table]
    echo = dict(cfg)
    echo["sim"] = {k: getattr(sim_cfg, k) for k in SIM_KEYS}
    report = _base(echo, "sweep-kappa")
    report["seed"] = sim_cfg.seed
    report["rows"] = [{k: (_num(v) if isinstance(v, float) else v) for k, v in zip(KAPPA_HEADER, r)} for r in rows]
    return report, rows, KAPPA_HEADER


COMMANDS = {
    "analyze": cmd_analyze,
    "check-stability": cmd_check_stability,
    "stabilizability": cmd_stabilizability,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "sweep-tau": cmd_sweep_tau,
    "sweep-kappa": cmd_sweep_kappa,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"msnet {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON job file")
        s.add_argument("--out", default=".", help="output directory (default: .)")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--format", choices=("json", "csv"), default="json",
                       help="what to print on stdout; csv only for sweeps")
        s.add_argument("--runs", type=int, default=None)
        s.add_argument("--horizon", type=int, default=None)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                cfg = load_config(args.config)
                if args.seed is not None and not 0 <= args.seed <= MASK64:
                    raise ValidationError(f"--seed must be a 64-bit unsigned integer, got {args.seed}")
                report, rows, header = COMMANDS[args.command](cfg, args)
            finally:
                for w in caught:
                    print(f"warning: {w.message}", file=sys.stderr)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    if args.format == "csv" and rows is None:
        print("error: --format csv is only available for sweep commands", file=sys.stderr)
        return 2
    text = _write(Path(args.out), report, rows, header)
    sys.stdout.write(text if args.format == "csv" else json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
