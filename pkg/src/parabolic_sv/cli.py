"""Command-line front end: price, simulate, calibrate, diagnose.

Configuration is a flat ``key = value`` text file (``#`` starts a comment
line, blank lines ignored, duplicate or unknown keys are errors).  All numeric
output is printed with 10 significant digits; reports are deterministic given
the config, and the parallelism degree (``n_workers``) never appears in a
report so changing it leaves the bytes unchanged.

Exit codes: 0 success, 2 config/validation errors, 3 numerical singularities
or quadrature failures, 4 insufficient data.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .averaging import AveragingCache, VolFunction, effective_params, phi_residual_check
from .errors import (
    CenteringFailureError,
    ChainParseError,
    ConfigError,
    EmptyChainError,
    InputDomainError,
    InsufficientDataError,
    InvalidModelError,
    LogDomainError,
    NoInteriorMinimumError,
    NonPositiveDefiniteError,
    PricingError,
    QuadratureFailureError,
    SingularTimeError,
)
from .calibration import calibrate_effective, estimate_a, load_chain
from .monte_carlo import SimConfig, epsilon_sweep, mc_price, simulate_terminal
from .params import ModelParams, OptionSpec, build_model
from .pricer import p0_pde_residual, price_first_order
from .slow_factor import (
    l2_time_coefficient_check,
    parabolic_coefficients,
    truncation_report,
)

__all__ = ["main", "RunConfig", "load_run_config"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DATA = 4

_EXIT_BY_ERROR = (
    (
        (
            ConfigError,
            ChainParseError,
            InvalidModelError,
            NonPositiveDefiniteError,
            InputDomainError,
        ),
        EXIT_CONFIG,
    ),
    (
        (
            SingularTimeError,
            LogDomainError,
            QuadratureFailureError,
            CenteringFailureError,
            NoInteriorMinimumError,
        ),
        EXIT_NUMERICAL,
    ),
    ((EmptyChainError, InsufficientDataError), EXIT_DATA),
)


def _exit_code(exc: PricingError) -> int:
    for classes, code in _EXIT_BY_ERROR:
        if isinstance(exc, classes):
            return code
    return EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# config parsing

_MODEL_KEYS = (
    "epsilon",
    "m",
    "nu",
    "k",
    "m_prime",
    "eta",
    "rho_xy",
    "rho_xz",
    "rho_yz",
    "z0",
    "r",
    "a",
)


def _cast_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    raise ValueError(f"expected true or false, got {s!r}")


def _cast_float_list(s: str) -> tuple[float, ...]:
    return tuple(float(p) for p in s.split(",") if p.strip())


_CASTERS = {
    **{k: float for k in _MODEL_KEYS},
    "spot": float,
    "strike": float,
    "t": float,
    "maturity": float,
    "vol_kind": str,
    "vol_table": str,
    "definition": str,
    "assembly": str,
    "n_paths": int,
    "steps_per_year": int,
    "seed": int,
    "z_scheme": str,
    "antithetic": _cast_bool,
    "y0": float,
    "n_workers": int,
    "eps_sweep": _cast_float_list,
    "chain": str,
    "fit": str,
    "n_restarts": int,
}

_COMMON_KEYS = set(_MODEL_KEYS) | {"vol_kind", "vol_table", "definition"}
_OPTION_KEYS = {"spot", "strike", "t", "maturity"}
_ALLOWED = {
    "price": _COMMON_KEYS | _OPTION_KEYS | {"assembly"},
    "simulate": _COMMON_KEYS
    | _OPTION_KEYS
    | {"n_paths", "steps_per_year", "seed", "z_scheme", "antithetic", "y0", "n_workers", "eps_sweep"},
    "calibrate": _COMMON_KEYS | {"chain", "fit", "seed", "n_restarts"},
    "diagnose": _COMMON_KEYS | _OPTION_KEYS,
}
_REQUIRED = {
    "price": {"spot", "strike", "maturity"},
    "simulate": {"spot", "strike", "maturity", "n_paths"},
    "calibrate": {"chain"},
    "diagnose": {"spot", "strike", "maturity"},
}

_ENUMS = {
    "vol_kind": ("y_constant", "separable_exp", "tabulated"),
    "definition": ("rms", "mean"),
    "assembly": ("combined", "split"),
    "z_scheme": ("ou", "parabolic"),
    "fit": ("a", "effective"),
}


def _read_pairs(path: Path) -> dict[str, str]:
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    pairs: dict[str, str] = {}
    for lineno, raw_line in enumerate(lines, start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"{path}: line {lineno}: empty key or value")
        if key in pairs:
            raise ConfigError(f"{path}: line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


@dataclass(frozen=True)
class RunConfig:
    """Typed view of one command's flat config file."""

    command: str
    model: ModelParams
    vol: VolFunction
    definition: str
    option: OptionSpec | None
    extras: dict = field(default_factory=dict)
    given: frozenset = frozenset()


def load_run_config(path, command: str) -> RunConfig:
    path = Path(path)
    pairs = _read_pairs(path)

    allowed = _ALLOWED[command]
    unknown = sorted(set(pairs) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys for {command}: {', '.join(unknown)}")
    missing = sorted(_REQUIRED[command] - set(pairs))
    if missing:
        raise ConfigError(f"{path}: missing required keys for {command}: {', '.join(missing)}")

    typed: dict = {}
    for key, value in pairs.items():
        try:
            typed[key] = _CASTERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}: key {key}: {exc}") from None
        if key in _ENUMS and typed[key] not in _ENUMS[key]:
            raise ConfigError(
                f"{path}: key {key}: expected one of {', '.join(_ENUMS[key])}, got {typed[key]!r}"
            )

    model = build_model(**{k: typed[k] for k in _MODEL_KEYS if k in typed})

    vol_kind = typed.get("vol_kind", "separable_exp")
    if vol_kind == "tabulated":
        if "vol_table" not in typed:
            raise ConfigError(f"{path}: vol_kind = tabulated requires vol_table")
        vol = VolFunction.from_table_file(typed["vol_table"])
    elif vol_kind == "y_constant":
        vol = VolFunction.y_constant()
    else:
        vol = VolFunction.separable_exp()

    option = None
    if _OPTION_KEYS & _ALLOWED[command] and "spot" in typed:
        option = OptionSpec(
            spot=typed["spot"],
            strike=typed["strike"],
            t=typed.get("t", 0.0),
            maturity=typed["maturity"],
        )

    return RunConfig(
        command=command,
        model=model,
        vol=vol,
        definition=typed.get("definition", "rms"),
        option=option,
        extras=typed,
        given=frozenset(pairs),
    )


# ---------------------------------------------------------------------------
# report helpers

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


def _aligned(rows: list[tuple[str, object]]) -> str:
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {_fmt(value)}" for name, value in rows) + "\n"


def _delimited(rows: list[tuple[str, object]]) -> str:
    return "\n".join(f"{name}={_fmt(value)}" for name, value in rows) + "\n"


def _emit(rows: list[tuple[str, object]], out_path: str | None) -> None:
    sys.stdout.write(_aligned(rows))
    if out_path:
        Path(out_path).write_text(_delimited(rows))


# ---------------------------------------------------------------------------
# commands

def cmd_price(cfg: RunConfig, out_path: str | None) -> int:
    assembly = cfg.extras.get("assembly", "combined")
    bd = price_first_order(
        cfg.option, cfg.model, cfg.vol, definition=cfg.definition, assembly=assembly
    )
    rows = [
        ("command", "price"),
        ("spot", cfg.option.spot),
        ("strike", cfg.option.strike),
        ("t", cfg.option.t),
        ("maturity", cfg.option.maturity),
        ("z", bd.z),
        ("sigma_bar", bd.sigma_bar),
        ("q0", bd.q0),
        ("mod_factor", bd.mod_factor),
        ("p0", bd.p0),
        ("time_factor", bd.time_factor),
        ("v", bd.v),
        ("d1d2", bd.d1d2),
        ("correction", bd.correction),
        ("total", bd.total),
    ]
    _emit(rows, out_path)
    return EXIT_OK


def _sim_config(cfg: RunConfig) -> SimConfig:
    ex = cfg.extras
    return SimConfig(
        n_paths=ex["n_paths"],
        steps_per_year=ex.get("steps_per_year", 2000),
        seed=ex.get("seed", 0),
        z_scheme=ex.get("z_scheme", "ou"),
        antithetic=ex.get("antithetic", False),
        y0=ex.get("y0"),
        n_workers=ex.get("n_workers", 1),
    )


def cmd_simulate(cfg: RunConfig, out_path: str | None, paths_dump: str | None) -> int:
    sim = _sim_config(cfg)
    # echo only the keys that shape the numbers; n_workers stays out so the
    # report is byte-identical across parallelism degrees
    rows: list[tuple[str, object]] = [
        ("command", "simulate"),
        ("n_paths", sim.n_paths),
        ("steps_per_year", sim.steps_per_year),
        ("seed", sim.seed),
        ("z_scheme", sim.z_scheme),
        ("antithetic", sim.antithetic),
    ]
    if sim.y0 is not None:
        rows.append(("y0", sim.y0))

    eps_sweep = cfg.extras.get("eps_sweep")
    if eps_sweep:
        table = epsilon_sweep(cfg.model, cfg.option, cfg.vol, sim, eps_sweep)
        for i, row in enumerate(table):
            rows += [
                (f"epsilon_{i}", row.epsilon),
                (f"asymptotic_{i}", row.asymptotic),
                (f"mc_price_{i}", row.mc_price),
                (f"std_error_{i}", row.std_error),
                (f"abs_error_{i}", row.abs_error),
            ]
        ok = all(
            b.abs_error
            <= a.abs_error + 3.0 * math.hypot(a.std_error, b.std_error)
            for a, b in zip(table, table[1:])
        )
        rows.append(("trend", "non-increasing" if ok else "increasing"))
    else:
        est = mc_price(cfg.model, cfg.option, cfg.vol, sim)
        asym = price_first_order(cfg.option, cfg.model, cfg.vol, definition=cfg.definition).total
        rows += [
            ("price", est.price),
            ("std_error", est.std_error),
            ("n_effective", est.n_effective),
            ("asymptotic", asym),
            ("abs_gap", abs(asym - est.price)),
        ]

    if paths_dump:
        n_keep = min(8, sim.n_paths)
        sample = simulate_terminal(cfg.model, cfg.option, cfg.vol, sim, return_paths=n_keep)
        dump = sample.paths
        with open(paths_dump, "w") as fh:
            fh.write("path,time,x,y,z\n")
            for p in range(dump.x.shape[0]):
                for j, tm in enumerate(dump.times):
                    fh.write(
                        f"{p},{_fmt(tm)},{_fmt(dump.x[p, j])},{_fmt(dump.y[p, j])},{_fmt(dump.z[p, j])}\n"
                    )

    _emit(rows, out_path)
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, out_path: str | None) -> int:
    quotes = load_chain(cfg.extras["chain"])
    fit = cfg.extras.get("fit", "effective")
    rows: list[tuple[str, object]] = [("command", "calibrate"), ("fit", fit), ("n_quotes", len(quotes))]
    if fit == "a":
        r = cfg.model.r if "r" in cfg.given else None
        est = estimate_a(quotes, cfg.model.k, r)
        rows += [
            ("a_hat", est.a_hat),
            ("objective", est.objective),
            ("sigma_bar_used", est.sigma_bar_used),
        ]
        for strike, a_k in est.per_strike:
            rows.append((f"a_at_strike_{_fmt(strike)}", a_k))
    else:
        res = calibrate_effective(
            quotes,
            seed=cfg.extras.get("seed", 0),
            n_restarts=cfg.extras.get("n_restarts", 3),
        )
        rows += [
            ("a_hat", res.a_hat),
            ("k_hat", res.k_hat),
            ("v_eff_hat", res.v_eff_hat),
            ("sigma_bar_hat", res.sigma_bar_hat),
            ("objective", res.objective),
            ("iterations", res.iterations),
            ("converged", res.converged),
        ]
    _emit(rows, out_path)
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, out_path: str | None) -> int:
    """Consistency report; numerical guard trips print WARN lines, never crash."""
    model, opt, vol = cfg.model, cfg.option, cfg.vol
    arc = parabolic_coefficients(model)
    rows: list[tuple[str, object]] = [
        ("command", "diagnose"),
        ("arc_a_coef", arc.a_coef),
        ("arc_b_coef", arc.b_coef),
        ("arc_c_coef", arc.c_coef),
    ]

    # interior probe time for the time-derivative checks
    t_eval = opt.t if 0.0 < opt.t < opt.maturity else 0.25 * opt.maturity
    rows.append(("t_eval", t_eval))

    rep = truncation_report(model, opt.maturity)
    if rep.bound_applies:
        ok = rep.abs_error <= rep.bound * (1 + 1e-12) + 1e-15
        rows.append(
            (
                "truncation",
                f"{'PASS' if ok else 'FAIL'} abs_error={_fmt(rep.abs_error)} bound={_fmt(rep.bound)}",
            )
        )
    else:
        rows.append(("truncation", f"SKIP k*t={_fmt(model.k * opt.maturity)} > 1"))

    try:
        direct, gamma_form = l2_time_coefficient_check(model, t_eval)
        gap = abs(direct - gamma_form) / max(1.0, abs(direct))
        rows.append(
            (
                "time_coefficient",
                f"{'PASS' if gap <= 1e-10 else 'FAIL'} rel_gap={_fmt(gap)}",
            )
        )
    except SingularTimeError as exc:
        rows.append(("time_coefficient", f"WARN {exc}"))

    cache = AveragingCache()
    try:
        z_t = float(arc.value(opt.t))
        eff = effective_params(vol, z_t, model, definition=cfg.definition, cache=cache)
        rows += [
            ("sigma_bar", eff.sigma_bar),
            ("v", eff.v),
            (
                "quadrature",
                f"PASS nodes={eff.n_nodes} refine_delta={_fmt(eff.refine_delta)}",
            ),
        ]
        resid = phi_residual_check(vol, z_t, model.m, model.nu)
        rows.append(
            (
                "phi_residual",
                f"{'PASS' if resid <= 1e-6 else 'FAIL'} residual={_fmt(resid)}",
            )
        )
    except (QuadratureFailureError, CenteringFailureError) as exc:
        rows.append(("quadrature", f"WARN {exc}"))

    try:
        probe = OptionSpec(spot=opt.spot, strike=opt.strike, t=t_eval, maturity=opt.maturity)
        z_probe = float(arc.value(t_eval))
        eff_probe = effective_params(vol, z_probe, model, definition=cfg.definition, cache=cache)
        classical = p0_pde_residual(
            probe, model, eff_probe, force_gamma_zero=True, force_mod_one=True
        )
        rows.append(
            (
                "classical_pde_residual",
                f"{'PASS' if abs(classical) <= 1e-4 else 'FAIL'} residual={_fmt(classical)}",
            )
        )
        # the assembled leading term does not solve the modified equation
        # exactly; the magnitude of the gap is informational
        resid = p0_pde_residual(probe, model, eff_probe)
        rows.append(("p0_pde_residual", f"INFO residual={_fmt(resid)}"))
    except PricingError as exc:
        rows.append(("p0_pde_residual", f"WARN {exc}"))

    _emit(rows, out_path)
    return EXIT_OK


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parabolic-sv",
        description="European call pricing under a two-factor stochastic volatility "
        "model with a parabolic slow-factor approximation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("price", "first-order price breakdown"),
        ("simulate", "Monte Carlo estimate and asymptotic comparison"),
        ("calibrate", "fit model constants to a quote chain"),
        ("diagnose", "internal consistency checks"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--out", help="write the report as key=value lines to this file")
        if name == "simulate":
            p.add_argument(
                "--paths-dump",
                help="write the first few simulated trajectories as CSV to this file",
            )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, args.command)
        if args.command == "price":
            return cmd_price(cfg, args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.paths_dump)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, args.out)
        return cmd_diagnose(cfg, args.out)
    except PricingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
