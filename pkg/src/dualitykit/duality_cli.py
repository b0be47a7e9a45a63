"""cli.py: command line entry point for dualitykit."""

import argparse
import asyncio
import csv
import io
import json
import logging
import math
import sys

from dataclasses import asdict, is_dataclass
from typing import Any, Callable

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .duality_const import (
    DUALITYKIT_TOOL,
    DUALITYKIT_VERSION,
)
from .duality_core import (
    DualityDataError,
    DualityError,
    DualityNumericError,
    DualityPreconditionError,
    load_matrix,
)
from .duality_data import (
    DEFAULT_TOLERANCES,
    DualityDictFactory,
    DualityStatus,
    ReportFormat,
    SpinConfiguration,
    Tolerances,
    jsonable,
)
from .duality_algebra import (
    check_duality_discrete,
    check_duality_generators,
    check_measure_duality,
    sep_symmetry_check,
    siegmund_dual,
    solve_dual,
    spectrum_compare,
)
from .duality_cone import (
    cone_dual,
)
from .duality_pathsim import (
    MECHANISM_IDENTITY,
    async_mc_exchangeable_duality,
    complete_graph_rates,
    is_q_dual_mechanism,
    resolve_mechanism,
    sample_graphical_representation,
    standard_mechanisms,
    verify_strong_pathwise,
)
from .duality_runner import (
    create_runner,
)
from .duality_scaling import (
    async_mc_moment_duality,
    async_rescaling_experiment,
)

_LOGGER = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

STOCHASTIC_COMMANDS = ("simulate-ips", "verify-pathwise", "moment-duality", "rescale-experiment")


class RunConfig(BaseModel):
    """Everything a run depends on; echoed into the report"""
    model_config = ConfigDict(extra="forbid")

    command: str
    inputs: dict[str, str] = {}
    seed: int|None = Field(default=None, ge=0, lt=2**64)
    replicas: int|None = Field(default=None, ge=1)
    threads: int|None = Field(default=None, ge=1)
    tolerances: dict[str, float] = {}
    out: str|None = None
    format: ReportFormat = ReportFormat.JSON
    parameters: dict[str, Any] = {}

    @model_validator(mode="after")
    def check_seed(self):
        if self.command in STOCHASTIC_COMMANDS and self.seed is None:
            raise ValueError(f"command '{self.command}' is stochastic and needs --seed")
        return self


class IpsConfig(BaseModel):
    """Spin system on the complete graph, used by simulate-ips and verify-pathwise"""
    model_config = ConfigDict(extra="forbid")

    N: int = Field(default=4, ge=1)
    q: str = "0"
    rates: dict[str, float] = {"V": 1.0}
    forward: dict[str, str] = {"V": "R"}
    backward: dict[str, str] = {"V": "C"}
    t: float = Field(default=1.0, ge=0)
    s_grid: list[float] = [0.0, 0.25, 0.5, 0.75, 1.0]
    a: int = Field(default=1, ge=0)
    b: int = Field(default=1, ge=0)
    x0: list[str]|None = None
    y0: list[str]|None = None


class MomentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x0: float = Field(default=0.5, ge=0, le=1)
    n0: int = Field(default=3, ge=1)
    t: float = Field(default=0.5, ge=0)
    dt: float = Field(default=1e-4, gt=0)


class RescaleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    N_list: list[int] = [50, 100, 200, 400]
    q: str = "-1"
    alpha: float = 0.5
    beta: float = 0.5
    x0: float = 0.3
    n0: int = 2
    t: float = 0.5
    dt: float = Field(default=1e-4, gt=0)
    # per-N values, aligned with N_list; alpha·N, beta and t when omitted
    r_N: list[float]|None = None
    b_N: list[float]|None = None
    t_N: list[float]|None = None

    @model_validator(mode="after")
    def check_schedules(self):
        for name in ("r_N", "b_N", "t_N"):
            values = getattr(self, name)
            if values is not None and len(values) != len(self.N_list):
                raise ValueError(f"{name} has {len(values)} entries, N_list has {len(self.N_list)}")
        return self

    def schedule(self, name: str) -> Callable[[int], float]|None:
        values = getattr(self, name)
        if values is None:
            return None
        return dict(zip(self.N_list, values)).__getitem__


def _load_config(path: str|None, model: type[BaseModel]) -> BaseModel:
    if path is None:
        return model()
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as ex:
            error = f"{path}:{ex.lineno}: invalid JSON: {ex.msg}"
            _LOGGER.debug(error)
            raise DualityDataError(error)
    return model.model_validate(data)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Master seed for every random stream")
    common.add_argument("--replicas", type=int, help="Monte Carlo replica count")
    common.add_argument("--threads", type=int, help="Replica parallelism (overrides DUALITY_KIT_THREADS)")
    common.add_argument("--tol-duality", type=float, help="Tolerance on duality residuals")
    common.add_argument("--tol-row", type=float, help="Tolerance on row sums")
    common.add_argument("--out", help="Report path (stdout when omitted)")
    common.add_argument("--format", choices=[f.value for f in ReportFormat], default=ReportFormat.JSON.value)
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog=DUALITYKIT_TOOL, description="Markov duality on finite state spaces")
    parser.add_argument("--version", action="version", version=f"{DUALITYKIT_TOOL} {DUALITYKIT_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-duality", parents=[common], help="Residual of PH = HQ^T (or LX H = H LY^T)")
    p.add_argument("--p")
    p.add_argument("--q")
    p.add_argument("--lx")
    p.add_argument("--ly")
    p.add_argument("--h", required=True)

    p = sub.add_parser("solve-dual", parents=[common], help="Solve for Q given P and H")
    p.add_argument("--p", required=True)
    p.add_argument("--h", required=True)

    p = sub.add_parser("siegmund", parents=[common], help="Siegmund dual of a monotone kernel")
    p.add_argument("--p", required=True)

    p = sub.add_parser("cone-dual", parents=[common], help="Cone dual for a kernel or generator")
    p.add_argument("--p", required=True, help="Kernel or generator")
    p.add_argument("--h", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="Compare eigenvalue multisets")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)

    p = sub.add_parser("measure-duality", parents=[common], help="Duality with respect to a measure")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--mu", required=True)

    p = sub.add_parser("sep-check", parents=[common], help="Symmetric exclusion self-duality")
    p.add_argument("--sites", type=int, required=True)

    p = sub.add_parser("simulate-ips", parents=[common], help="Monte Carlo duality of an exchangeable spin system")
    p.add_argument("--config")

    p = sub.add_parser("verify-pathwise", parents=[common], help="Exact pathwise duality on one graphical representation")
    p.add_argument("--config")

    p = sub.add_parser("mechanisms", parents=[common], help="Basic mechanisms and their q-dualities")
    p.add_argument("--list", action="store_true")
    p.add_argument("--check", nargs=2, metavar=("F", "G"))
    p.add_argument("--q", default="0")

    p = sub.add_parser("moment-duality", parents=[common], help="Wright-Fisher vs Kingman moment duality")
    p.add_argument("--config")

    p = sub.add_parser("rescale-experiment", parents=[common], help="Convergence of rescaled count-chain dualities")
    p.add_argument("--config")

    return parser


def _inputs(args: argparse.Namespace) -> dict[str, str]:
    if args.command == "mechanisms":
        return {}
    keys = ("p", "q", "h", "lx", "ly", "mu", "config")
    return { k: getattr(args, k) for k in keys if isinstance(getattr(args, k, None), str) }


def _run_config(args: argparse.Namespace) -> RunConfig:
    parameters = {}
    if args.command == "sep-check":
        parameters["sites"] = args.sites
    if args.command == "mechanisms":
        parameters = {"list": args.list, "check": args.check, "q": args.q}

    return RunConfig(
        command = args.command,
        inputs = _inputs(args),
        seed = args.seed,
        replicas = args.replicas,
        threads = args.threads,
        tolerances = { k: v for k, v in (("duality", args.tol_duality), ("row", args.tol_row)) if v is not None },
        out = args.out,
        format = ReportFormat(args.format),
        parameters = parameters,
    )


def _result_dict(result: Any) -> Any:
    if is_dataclass(result):
        data = asdict(result, dict_factory=DualityDictFactory.exclude_none_values)
        data.pop("elapsed", None)
        return data
    return jsonable(result)


def build_report(config: RunConfig, tol: Tolerances, result: Any, passed: bool) -> dict:
    return {
        "tool": DUALITYKIT_TOOL,
        "version": DUALITYKIT_VERSION,
        "command": config.command,
        "config": config.model_dump(mode="json"),
        "seed": config.seed,
        "tolerances": asdict(tol),
        "passed": passed,
        "result": _result_dict(result),
    }


def _flatten(prefix: str, value: Any, out: list[tuple[str, Any]]):
    match value:
        case dict():
            for k in sorted(value):
                _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], out)
        case list():
            for i, v in enumerate(value):
                _flatten(f"{prefix}[{i}]", v, out)
        case _:
            out.append((prefix, value))


def _float_text(value: float) -> str:
    """Seventeen significant digits, always readable back as a float."""
    if not math.isfinite(value):
        return json.dumps(value)
    text = f"{value:.17g}"
    if text.lstrip("-").isdigit():
        text += ".0"
    return text


def _json_text(value: Any, depth: int = 0) -> str:
    """json.dumps layout with sorted keys and indent 2, floats through _float_text"""
    pad = "  " * (depth + 1)
    match value:
        case bool() | None:
            return json.dumps(value)
        case float():
            return _float_text(value)
        case dict():
            if not value:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {_json_text(value[k], depth + 1)}" for k in sorted(value)]
            return "{\n" + ",\n".join(items) + "\n" + "  " * depth + "}"
        case list() | tuple():
            if not value:
                return "[]"
            items = [f"{pad}{_json_text(v, depth + 1)}" for v in value]
            return "[\n" + ",\n".join(items) + "\n" + "  " * depth + "]"
        case _:
            return json.dumps(value)


def _csv_cell(value: Any) -> str:
    match value:
        case bool():
            return "true" if value else "false"
        case float():
            return _float_text(value)
        case None:
            return ""
        case _:
            return str(value)


def render_report(report: dict, fmt: ReportFormat) -> str:
    """
    JSON with sorted keys, or CSV. A result carrying table rows (the rescaling
    experiment) is written as one line per row; everything else as key,value pairs.
    """
    if fmt == ReportFormat.JSON:
        return _json_text(report) + "\n"

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    rows = report["result"].get("rows") if isinstance(report["result"], dict) else None
    if rows:
        header = list(rows[0].keys())
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(row.get(k)) for k in header])
    else:
        pairs = []
        _flatten("", report, pairs)
        writer.writerow(["key", "value"])
        for key, value in pairs:
            writer.writerow([key, _csv_cell(value)])
    return buffer.getvalue()


def emit_report(report: dict, path: str|None, fmt: ReportFormat):
    text = render_report(report, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    _LOGGER.info(f"report written to {path}")


#
# commands; each returns (result, passed)
#

def _cmd_check_duality(args, config: RunConfig, tol: Tolerances):
    H = load_matrix(args.h)
    if args.lx or args.ly:
        if not (args.lx and args.ly):
            error = f"Generator mode needs both --lx and --ly"
            _LOGGER.debug(error)
            raise DualityDataError(error)
        report = check_duality_generators(load_matrix(args.lx), load_matrix(args.ly), H, tol=tol)
        return (report, report.passed)

    if not (args.p and args.q):
        error = f"check-duality needs --p and --q, or --lx and --ly"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    residual = check_duality_discrete(load_matrix(args.p), load_matrix(args.q), H)
    return ({"residual": residual}, residual <= tol.duality)


def _cmd_solve_dual(args, config: RunConfig, tol: Tolerances):
    result = solve_dual(load_matrix(args.p), load_matrix(args.h), tol)
    return (result, result.status != DualityStatus.NONE)


def _cmd_siegmund(args, config: RunConfig, tol: Tolerances):
    result = siegmund_dual(load_matrix(args.p), tol)
    return (result, result.residual <= tol.exact)


def _cmd_cone_dual(args, config: RunConfig, tol: Tolerances):
    result = cone_dual(load_matrix(args.p), load_matrix(args.h), tol)
    return (result, result.residual is not None and result.residual <= tol.duality)


def _cmd_spectrum(args, config: RunConfig, tol: Tolerances):
    report = spectrum_compare(load_matrix(args.p), load_matrix(args.q), tol)
    return (report, report.passed)


def _cmd_measure_duality(args, config: RunConfig, tol: Tolerances):
    mu = load_matrix(args.mu).ravel()
    residual = check_measure_duality(load_matrix(args.p), load_matrix(args.q), mu)
    return ({"residual": residual}, residual <= tol.duality)


def _cmd_sep_check(args, config: RunConfig, tol: Tolerances):
    report = sep_symmetry_check(args.sites, tol)
    return (report, report.passed)


def _mechanism_table(config: IpsConfig, key: str):
    return { label: resolve_mechanism(name) for label, name in getattr(config, key).items() }


async def _cmd_simulate_ips(args, config: RunConfig, tol: Tolerances):
    ips = _load_config(args.config, IpsConfig)
    runner = create_runner(config.threads)
    try:
        report = await async_mc_exchangeable_duality(
            runner,
            N = ips.N,
            a = ips.a,
            b = ips.b,
            q = ips.q,
            rates = complete_graph_rates(ips.N, ips.rates),
            forward = _mechanism_table(ips, "forward"),
            backward = _mechanism_table(ips, "backward"),
            t = ips.t,
            s_grid = ips.s_grid,
            replicas = config.replicas or 10_000,
            seed = config.seed,
        )
    finally:
        await runner.async_close()
    return (report, report.passed)


def _cmd_verify_pathwise(args, config: RunConfig, tol: Tolerances):
    ips = _load_config(args.config, IpsConfig)
    rates = complete_graph_rates(ips.N, ips.rates)
    G = sample_graphical_representation(ips.N, rates, ips.t, config.seed)
    report = verify_strong_pathwise(
        [SpinConfiguration.create(x) for x in ips.x0] if ips.x0 is not None else None,
        [SpinConfiguration.create(y) for y in ips.y0] if ips.y0 is not None else None,
        ips.q,
        G,
        _mechanism_table(ips, "forward"),
        _mechanism_table(ips, "backward"),
    )
    return (report, report.passed)


def _cmd_mechanisms(args, config: RunConfig, tol: Tolerances):
    if args.check:
        f, g = (resolve_mechanism(name) for name in args.check)
        report = is_q_dual_mechanism(f, g, args.q)
        return (report, report.dual)

    mechanisms = standard_mechanisms()
    table = {
        name: { f"{a}{b}": "{}{}".format(*m(a, b)) for a in (0, 1) for b in (0, 1) }
        for name, m in mechanisms.items()
    }
    table[MECHANISM_IDENTITY.name] = { f"{a}{b}": f"{a}{b}" for a in (0, 1) for b in (0, 1) }
    return (table, True)


async def _cmd_moment_duality(args, config: RunConfig, tol: Tolerances):
    moment = _load_config(args.config, MomentConfig)
    runner = create_runner(config.threads)
    try:
        report = await async_mc_moment_duality(
            runner,
            x0 = moment.x0,
            n0 = moment.n0,
            t = moment.t,
            replicas = config.replicas or 100_000,
            seed = config.seed,
            dt = moment.dt,
        )
    finally:
        await runner.async_close()
    return (report, report.passed)


async def _cmd_rescale_experiment(args, config: RunConfig, tol: Tolerances):
    rescale = _load_config(args.config, RescaleConfig)
    runner = create_runner(config.threads)
    try:
        table = await async_rescaling_experiment(
            runner,
            N_list = rescale.N_list,
            q = rescale.q,
            alpha = rescale.alpha,
            beta = rescale.beta,
            x0 = rescale.x0,
            n0 = rescale.n0,
            t = rescale.t,
            replicas = config.replicas or 10_000,
            seed = config.seed,
            dt = rescale.dt,
            r_schedule = rescale.schedule("r_N"),
            b_schedule = rescale.schedule("b_N"),
            time_scale = rescale.schedule("t_N"),
        )
    finally:
        await runner.async_close()
    return (table, table.passed)


COMMANDS = {
    "check-duality": _cmd_check_duality,
    "solve-dual": _cmd_solve_dual,
    "siegmund": _cmd_siegmund,
    "cone-dual": _cmd_cone_dual,
    "spectrum": _cmd_spectrum,
    "measure-duality": _cmd_measure_duality,
    "sep-check": _cmd_sep_check,
    "simulate-ips": _cmd_simulate_ips,
    "verify-pathwise": _cmd_verify_pathwise,
    "mechanisms": _cmd_mechanisms,
    "moment-duality": _cmd_moment_duality,
    "rescale-experiment": _cmd_rescale_experiment,
}


def _print_mechanism_table():
    for name, m in standard_mechanisms().items():
        images = " ".join(f"{a}{b}->{''.join(map(str, m(a, b)))}" for a in (0, 1) for b in (0, 1))
        sys.stdout.write(f"{name:<2} {images}\n")


async def async_dispatch(argv: list[str], configure_logging: bool = False) -> int:
    """
    Parse argv, run one subcommand and write its report.
    Exit codes: 0 check passed, 1 check failed, 2 usage or input error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return ex.code if isinstance(ex.code, int) else EXIT_USAGE

    if configure_logging:
        logging.basicConfig(stream=sys.stderr, level=args.log_level, format="%(asctime)s %(levelname)s %(message)s")

    if args.command == "mechanisms" and not args.list and not args.check:
        sys.stderr.write(f"{DUALITYKIT_TOOL} mechanisms: one of --list or --check F G is required\n")
        return EXIT_USAGE

    try:
        config = _run_config(args)
        tol = DEFAULT_TOLERANCES.override(**config.tolerances)

        command = COMMANDS[args.command]
        try:
            outcome = command(args, config, tol)
            result, passed = await outcome if asyncio.iscoroutine(outcome) else outcome
        except (DualityPreconditionError, DualityNumericError) as ex:
            _LOGGER.info(f"{args.command}: {ex}")
            result = {"error": str(ex), "error_type": type(ex).__name__, "witness": jsonable(ex.witness)}
            passed = False

        if args.command == "mechanisms" and args.list:
            _print_mechanism_table()
            if config.out is None:
                return EXIT_PASS

        emit_report(build_report(config, tol, result, passed), config.out, config.format)
        return EXIT_PASS if passed else EXIT_FAIL

    except (DualityDataError, ValidationError, OSError) as ex:
        sys.stderr.write(f"{DUALITYKIT_TOOL} {args.command}: {ex}\n")
        return EXIT_USAGE
    except DualityError as ex:
        sys.stderr.write(f"{DUALITYKIT_TOOL} {args.command}: {ex}\n")
        return EXIT_FAIL


def dispatch(argv: list[str], configure_logging: bool = False) -> int:
    return asyncio.run(async_dispatch(argv, configure_logging))


def main():
    sys.exit(dispatch(sys.argv[1:], configure_logging=True))


if __name__ == "__main__":
    main()
