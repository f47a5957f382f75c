"""Command-line entry point: ``python -m diqkd <subcommand>``.

Every subcommand prints a JSON envelope (or CSV for sweeps).  Exit codes:
0 ok, 2 usage or input-file errors, 3 domain or root-finding errors,
4 internal errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Callable

import numpy as np

from . import __version__, keyrates, loopholes, polytope
from ._numerics import DomainError, NoRootError
from .behavior import Behavior

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_INTERNAL = 0, 2, 3, 4
SCHEMA = 1


class UsageError(Exception):
    pass


def _clean(v):
    """JSON-safe copy: numpy scalars and arrays unwrapped, non-finite floats as strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return v


def envelope(subcommand: str, inputs: dict, results: dict, status: str) -> str:
    doc = {"schema": SCHEMA, "version": __version__, "subcommand": subcommand,
           "inputs": inputs, "results": results, "status": status}
    return json.dumps(_clean(doc), indent=2, sort_keys=True)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


# ---------------------------------------------------------------- keyrate protocols


def _need(a, *names):
    missing = [n for n in names if getattr(a, n, None) is None]
    if missing:
        raise UsageError("missing required flag(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _S(a) -> float:
    if a.S_from_Q:
        _need(a, "Q")
        return keyrates.depolarized_chsh(a.Q)
    _need(a, "S")
    return a.S


def _p_dw(a):
    _need(a, "Q")
    S = _S(a)
    return {"S": S, "Q": a.Q, "chi": keyrates.holevo_chsh(S), "r": keyrates.dw_rate_chsh(S, a.Q)}, "ok"


def _p_noisy(a):
    _need(a, "Q")
    S = _S(a)
    if a.q is None:
        q, r = keyrates.optimal_noisy_preproc(S, a.Q)
    else:
        q, r = a.q, keyrates.dw_rate_noisy_preproc(S, a.Q, a.q)
    return {"S": S, "Q": a.Q, "q": q, "r": r, "r_no_preprocessing": keyrates.dw_rate_chsh(S, a.Q)}, "ok"


def _p_chain_m(a):
    _need(a, "p", "M")
    return {"p": a.p, "M": a.M, "r": keyrates.chain_m_rate(a.p, a.M)}, "ok"


def _p_ns(a):
    if a.p_nl is None:
        _need(a, "D")
        p_nl, _ = keyrates.ns_params(a.D)
    else:
        p_nl = a.p_nl
    if a.q is None:
        q, r = keyrates.ns_optimal_rate_pnl(p_nl)
    else:
        q, r = a.q, keyrates.ns_rate_pnl(p_nl, a.q)
    return {"p_NL": p_nl, "D": keyrates.disturbance_from_pnl(p_nl), "q": q, "r": r}, "ok"


def _p_chain06(a):
    _need(a, "p")
    lo, up = keyrates.chain06_bounds(a.p)
    return {"p": a.p, "r_CK_lower": lo, "I_upper": up}, "ok"


def _p_sdi(a):
    _need(a, "P_B")
    r, thr = keyrates.sdi_rate(a.P_B)
    out = {"P_B": a.P_B, "r": r, "threshold": thr}
    if a.eta is not None:
        g, m = keyrates.sdi_lossy_thresholds(a.eta)
        out.update(eta=a.eta, threshold_general=g, threshold_minimal=m)
    return out, "ok"


def _p_1sdi(a):
    _need(a, "eta_a", "Q1ps", "Q2", "q")
    return {"r": keyrates.one_sided_rate(a.eta_a, a.Q1ps, a.Q2, a.q)}, "ok"


def _p_cc_upper(a):
    _need(a, "eta")
    c = keyrates.cc_upper_bounds(a.eta)
    status = "domain-clipped" if c.status != "ok" else "ok"
    return {"eta": a.eta, "q_L": c.q_l, "r1": c.r1, "r2": c.r2, "note": c.status}, status


def _p_chsh_l(a):
    _need(a, "S", "Q", "eta")
    return {"r": keyrates.chsh_l_rate(a.S, a.Q, a.eta)}, "ok"


def _p_mabk(a):
    _need(a, "m")
    v, note = keyrates.mabk_entropy(a.m)
    return {"m": a.m, "H": v, "note": note}, "ok" if note == "ok" else "domain-clipped"


def _p_holz(a):
    _need(a, "beta_h")
    v, note = keyrates.holz_entropy(a.beta_h)
    return {"beta_H": a.beta_h, "H": v, "note": note}, "ok" if note == "ok" else "domain-clipped"


def _p_eat(a):
    _need(a, "n")
    p = keyrates.default_chsh_eat(a.n, eps=a.eps, S_anchor=a.S_anchor, S_obs=a.S)
    if a.t is not None:
        p.t = a.t
    if a.grad_inf is not None:
        p.grad_inf = a.grad_inf
    if a.p_event is not None:
        p.p_event = a.p_event
    bound = keyrates.eat_bound(p)
    return {"t": p.t, "grad_inf": p.grad_inf, "dim_o": p.dim_o, "nu": keyrates.eat_nu(p),
            "bound": bound, "per_round": bound / p.n}, "ok"


def _p_geat(a):
    _need(a, "n", "t")
    base = dict(n=a.n, t=a.t, eps=a.eps, p_event=a.p_event if a.p_event is not None else 1.0,
                d_a=a.d_a, max_f=a.max_f, min_sigma_f=a.min_f, var_f=a.var_f)
    if a.alpha is None:
        alpha, bound = keyrates.geat_best_alpha(keyrates.GeatParams(alpha=1.25, **base))
    else:
        alpha = a.alpha
        bound = keyrates.geat_bound(keyrates.GeatParams(alpha=alpha, **base))
    return {"alpha": alpha, "bound": bound, "per_round": bound / a.n}, "ok"


def _p_vv(a):
    _need(a, "Q", "tau", "tau_p")
    n = math.inf if a.n is None else a.n
    H = keyrates.vv_bound(a.Q, n, a.eps, a.tau, a.tau_p)
    return {"H": H, "r": H - keyrates.h(a.Q)}, "ok"


PROTOCOLS: dict[str, Callable] = {
    "dw": _p_dw, "noisy": _p_noisy, "chain-m": _p_chain_m, "ns": _p_ns, "chain06": _p_chain06,
    "sdi": _p_sdi, "1sdi": _p_1sdi, "cc-upper": _p_cc_upper, "chsh-l": _p_chsh_l,
    "mabk": _p_mabk, "holz": _p_holz, "eat": _p_eat, "geat": _p_geat, "vv": _p_vv,
}

INT_PARAMS = {"M", "d_a"}


def _parse_sweep(spec: str):
    try:
        name, rng = spec.split("=", 1)
        lo, hi, steps = rng.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise UsageError(f"--sweep expects param=start:stop:steps, got {spec!r}")
    if steps < 1:
        raise UsageError("--sweep needs at least one step")
    return name.replace("-", "_"), np.linspace(lo, hi, steps)


def cmd_keyrate(a) -> tuple[str, int]:
    if a.protocol not in PROTOCOLS:
        raise UsageError(f"unknown protocol {a.protocol!r}")
    fn = PROTOCOLS[a.protocol]
    inputs = {k: v for k, v in vars(a).items() if k not in ("func", "sweep") and v is not None}
    if a.sweep is None:
        out, status = fn(a)
        return envelope("keyrate", inputs, out, status), EXIT_OK
    name, grid = _parse_sweep(a.sweep)
    if not hasattr(a, name):
        raise UsageError(f"cannot sweep unknown parameter {name!r}")
    rows, header = [], None
    for v in grid:
        setattr(a, name, int(round(v)) if name in INT_PARAMS else float(v))
        out, status = fn(a)
        out = {k: x for k, x in out.items() if k != name and not isinstance(x, str)}
        if header is None:
            header = [name] + list(out) + ["status"]
        rows.append([getattr(a, name)] + [out[k] for k in header[1:-1]] + [status])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue().rstrip("\n"), EXIT_OK


# ---------------------------------------------------------------- critical values


def _root_result(root: float, f: Callable[[float], float], bracket):
    return {"root": root, "residual": f(root), "bracket": list(bracket)}


def _crit_qber_dw(a):
    f = lambda Q: keyrates.dw_rate_chsh(keyrates.depolarized_chsh(Q), Q)
    return _root_result(keyrates.dw_qber_threshold(), f, (1e-9, 0.2))


def _crit_eta_dw(a):
    f = lambda e: keyrates.dw_rate_chsh(*keyrates.chsh_c_stats(e))
    return _root_result(keyrates.dw_eta_threshold(), f, (0.85, 1.0))


def _crit_eta_noisy(a):
    r = keyrates.noisy_preproc_critical_eta(seed=a.seed)
    return {"root": r.eta_star, "theta": r.theta, "angles": r.angles, "starts": r.starts,
            "bracket": [0.5, 1.0]}


def _crit_eta_cc1(a):
    r1, _ = keyrates.cc_roots()
    return _root_result(r1, lambda e: keyrates.cc_upper_bounds(e).r1, (0.85, 0.95))


def _crit_eta_cc2(a):
    _, r2 = keyrates.cc_roots()
    return _root_result(r2, lambda e: keyrates.cc_error_rate(e) - 0.5, (keyrates.ETA_LOC, 1.0))


def _crit_eta_1sdi(a):
    f = lambda e: keyrates.one_sided_rate(e, 0.0, 0.5 * (1.0 - e), 1.0)
    return _root_result(keyrates.one_sided_root(), f, (0.5, 1.0))


def _crit_cde(a):
    root = loopholes.cde_symmetric_maxent()
    return {"root": root, "residual": root - 2.0 * (math.sqrt(2.0) - 1.0), "bracket": [0.5, 1.0]}


def _crit_eberhard(a):
    scan = loopholes.eberhard_scan(seed=a.seed)
    return {"points": [{"theta": t, "eta_star": e} for t, e in scan], "monotone": scan.monotone,
            "root": min(e for _, e in scan)}


TARGETS = {
    "qber-dw": _crit_qber_dw, "eta-dw": _crit_eta_dw, "eta-noisy": _crit_eta_noisy,
    "eta-cc1": _crit_eta_cc1, "eta-cc2": _crit_eta_cc2, "eta-1sdi": _crit_eta_1sdi,
    "cde-maxent": _crit_cde, "eberhard": _crit_eberhard,
}


def cmd_critical(a) -> tuple[str, int]:
    res = TARGETS[a.target](a)
    return envelope("critical", {"target": a.target, "seed": a.seed}, res, "ok"), EXIT_OK


# ---------------------------------------------------------------- convex-combination attack


def _load_behavior(path: str) -> Behavior:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}")
    try:
        return Behavior.from_json(text)
    except DomainError as exc:
        raise UsageError(f"{path}: {exc}")


def cmd_ccattack(a) -> tuple[str, int]:
    b = _load_behavior(a.behavior)
    nl = [_load_behavior(p) for p in a.nonlocal_files]
    for path, pt in zip([a.behavior] + a.nonlocal_files, [b] + nl):
        if pt.shape != (2, 2, 2, 2):
            raise UsageError(f"{path}: behavior must have shape (2, 2, 2, 2), got {pt.shape}")
    dec = polytope.cc_local_weight(b, nl)
    inputs = {"behavior": a.behavior, "nonlocal": a.nonlocal_files}
    if dec.status != "optimal":
        return envelope("ccattack", inputs, {"lp_status": dec.status}, "error"), EXIT_DOMAIN
    res = {"q_L": dec.q_l, "q_local": dec.q_local, "q_nonlocal": dec.q_nonlocal, "residual": dec.residual}
    return envelope("ccattack", inputs, res, "ok"), EXIT_OK


# ---------------------------------------------------------------- simulation


def cmd_simulate(a) -> tuple[str, int]:
    from .sim import SimConfig, run_protocol, write_trace

    try:
        det = loopholes.DetectionModel.delta(a.eta, n_y=3)
        cfg = SimConfig(n=a.n, gamma=a.gamma, p=a.p, detection=det, seed=a.seed,
                        eps_sec=a.eps_sec, eps_cor=a.eps_cor, f_ec=a.f_ec, abort_S=a.abort_S)
    except DomainError as exc:
        raise UsageError(str(exc))
    res = run_protocol(cfg, keep_trace=a.trace is not None)
    if a.trace is not None:
        write_trace(res, a.trace)
    status = "abort" if res.abort else "ok"
    return envelope("simulate", cfg.inputs(), res.to_dict(), status), EXIT_OK


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="diqkd", description="Device-independent QKD rates, thresholds and simulation.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("keyrate", help="evaluate a key-rate or entropy formula")
    k.add_argument("--protocol", required=True, help="one of: " + ", ".join(PROTOCOLS))
    k.add_argument("--sweep", help="param=start:stop:steps; prints CSV")
    for flag in ("--S", "--Q", "--q", "--p", "--D", "--p-nl", "--P-B", "--eta", "--eta-a",
                 "--Q1ps", "--Q2", "--m", "--beta-h", "--n", "--t", "--grad-inf", "--p-event",
                 "--alpha", "--max-f", "--min-f", "--tau", "--tau-p"):
        k.add_argument(flag, type=float, dest=flag[2:].replace("-", "_"))
    k.add_argument("--M", type=int)
    k.add_argument("--d-a", type=int, default=2)
    k.add_argument("--var-f", type=float, default=0.0)
    k.add_argument("--eps", type=float, default=1e-10)
    k.add_argument("--S-anchor", type=float, default=2.7)
    k.add_argument("--S-from-Q", action="store_true", help="use S = 2 sqrt2 (1 - 2Q)")
    k.set_defaults(func=cmd_keyrate, max_f=1.0, min_f=0.0)

    c = sub.add_parser("critical", help="solve for a critical value")
    c.add_argument("--target", required=True, choices=sorted(TARGETS))
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_critical)

    cc = sub.add_parser("ccattack", help="largest local weight of a behavior")
    cc.add_argument("behavior", help="behavior JSON file")
    cc.add_argument("nonlocal_files", nargs="*", help="nonlocal candidate behavior JSON files")
    cc.set_defaults(func=cmd_ccattack)

    s = sub.add_parser("simulate", help="Monte Carlo run of the CHSH protocol")
    s.add_argument("--p", type=float, required=True, help="Werner weight")
    s.add_argument("--eta", type=float, default=1.0)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--eps-sec", type=float, default=1e-10)
    s.add_argument("--eps-cor", type=float, default=1e-12)
    s.add_argument("--f-ec", type=float, default=1.1)
    s.add_argument("--abort-S", type=float, default=2.0)
    s.add_argument("--trace", help="CSV file for the per-round trace")
    s.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = None
    try:
        args = ap.parse_args(argv)
        text, code = args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"diqkd: error: {exc}\n")
        return EXIT_USAGE
    except (DomainError, NoRootError) as exc:
        sub = getattr(args, "command", None) or "unknown"
        sys.stdout.write(envelope(sub, {}, {"error": str(exc)}, "error") + "\n")
        sys.stderr.write(f"diqkd: {exc}\n")
        return EXIT_DOMAIN
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"diqkd: internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL
    sys.stdout.write(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
