"""
Command-line front end.

Subcommands ``design``, ``sweep``, ``jsa``, ``analyze-tags`` and
``synth-tags`` read one YAML run configuration (see ``spdc_forge.config``),
compute everything in memory and only then write their files, so a failed
run leaves the output directory untouched.

Exit codes: 0 success, 1 configuration or input parse error, 2 computation
error.
"""

from __future__ import annotations

import argparse
import math
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .config import RunConfig, load_config
from .dispersion import FieldLabel, Role, group_velocity_mismatch, load_model, wavelength_to_omega
from .errors import (
    CoefficientSetError,
    ConfigError,
    DegenerateMismatch,
    EmptyStream,
    SpdcForgeError,
    TagFormatError,
)
from .jsa import (
    GridSpec,
    PumpModel,
    biphoton_tbp,
    correlation_time,
    evaluate_jsa,
    fwhm_bandwidth,
    marginal_idler_spectrum,
    marginal_signal_spectrum,
    ridge_angle_deg,
    temperature_sweep,
    write_jsa_csv,
    write_spectrum_csv,
    write_sweep_csv,
)
from .phasematch import (
    GvmSolution,
    ProcessSpec,
    delta_beta,
    solve_gvm_triple,
    solve_poling_period,
    zeroth_order_mismatch,
)
from .tagproc import CoincidenceReport, analyze_stream, generate_synthetic_tags, read_tag_file, write_tag_file

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_COMPUTE = 2

_INPUT_ERRORS = (ConfigError, CoefficientSetError, TagFormatError, EmptyStream)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


Writer = Callable[[Path], None]


def _text_writer(text: str) -> Writer:
    def write(path: Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    return write


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = [",".join(header)] + [",".join(r) for r in rows]
    return "\n".join(lines) + "\n"


def _commit(out_dir: Path, outputs: list[tuple[str, Writer]]) -> None:
    """Write every output into a scratch directory, then move them into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".spdc-forge-", dir=out_dir))
    moved: list[Path] = []
    try:
        for name, write in outputs:
            write(scratch / name)
        for name, _ in outputs:
            os.replace(scratch / name, out_dir / name)
            moved.append(out_dir / name)
    except BaseException:
        for path in moved:
            path.unlink(missing_ok=True)
        raise
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def _g(x: float) -> str:
    return f"{x:.9g}"


# --- model assembly ---------------------------------------------------------


@dataclass(frozen=True)
class _Design:
    spec: ProcessSpec
    solution: GvmSolution
    pump: PumpModel


def _build_design(cfg: RunConfig) -> _Design:
    mats = cfg.block("materials")
    proc = cfg.block("process")
    models = {role: load_model(mats[role]) for role in ("pump", "signal", "idler")}
    labels = {role: FieldLabel(Role(role), m.polarization) for role, m in models.items()}
    actual = FieldLabel.process_type(labels["signal"], labels["idler"], labels["pump"])
    wanted = proc.get("process_type")
    if wanted is not None and wanted != actual:
        raise ConfigError(
            f"process_type {wanted} does not match the material polarizations "
            f"(pump {models['pump'].polarization.value}, signal {models['signal'].polarization.value}, "
            f"idler {models['idler'].polarization.value} is {actual})"
        )
    pump_m, sig_m, idl_m = models["pump"], models["signal"], models["idler"]
    temp = float(proc["design_temperature_C"])
    wp = float(wavelength_to_omega(proc["pump_wavelength_nm"] * 1e-9))

    if "signal_wavelength_nm" in proc:
        ws = float(wavelength_to_omega(proc["signal_wavelength_nm"] * 1e-9))
        wi = wp - ws
        if not wi > 0:
            raise ConfigError("signal_wavelength_nm must be longer than pump_wavelength_nm")
        try:
            period, order = solve_poling_period(pump_m, sig_m, idl_m, ws, wi, temp)
        except DegenerateMismatch:
            period, order = math.inf, 1
        solution = GvmSolution(
            omega_p=wp,
            omega_s=ws,
            omega_i=wi,
            residual_gvm=float(group_velocity_mismatch(sig_m, idl_m, ws, wi, temp)),
            poling_period=period,
            grating_order=order,
            temperature=temp,
        )
    else:
        solution = solve_gvm_triple(pump_m, sig_m, idl_m, temp, omega_p=wp)

    if "poling_period_um" in proc:
        period = proc["poling_period_um"] * 1e-6
        order = proc.get("grating_order")
        if order is None:
            mismatch = zeroth_order_mismatch(pump_m, sig_m, idl_m, solution.omega_s, solution.omega_i, temp)
            order = 1 if mismatch >= 0 else -1
    else:
        period, order = solution.poling_period, solution.grating_order

    length = proc.get("effective_length_mm", proc["length_mm"]) * 1e-3
    spec = ProcessSpec(
        pump=pump_m,
        signal=sig_m,
        idler=idl_m,
        omega_s=solution.omega_s,
        omega_i=solution.omega_i,
        length=length,
        temperature=temp,
        poling_period=period,
        grating_order=int(order),
    )
    pump_block = cfg.block("pump", required=False)
    pump_kwargs = {"linewidth_fwhm": 2 * math.pi * pump_block.get("linewidth_MHz", 0.0) * 1e6}
    if "floor_MHz" in pump_block:
        pump_kwargs["linewidth_floor"] = 2 * math.pi * pump_block["floor_MHz"] * 1e6
    pump = PumpModel(center_omega=wp, **pump_kwargs)
    return _Design(spec=spec, solution=solution, pump=pump)


def _grid_spec(cfg: RunConfig) -> GridSpec:
    block = cfg.block("grid", required=False)
    half = block.get("half_span_THz")
    return GridSpec(
        points=int(block.get("points", 2048)),
        half_span=None if half is None else 2 * math.pi * half * 1e12,
        span_factor=float(block.get("span_factor", 3.0)),
    )


def _temperatures(cfg: RunConfig) -> list[float]:
    block = cfg.block("sweep")
    if "temperatures_C" in block:
        temps = [float(t) for t in block["temperatures_C"]]
    else:
        start, stop, step = block["start_C"], block["stop_C"], block["step_C"]
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        temps = [round(start + k * step, 9) for k in range(max(count, 0))]
    if not temps:
        raise ConfigError("sweep has no temperatures")
    names = [f"{t:.2f}" for t in temps]
    if len(set(names)) != len(names):
        raise ConfigError("sweep temperatures must differ at 0.01 C resolution")
    return temps


# --- commands ---------------------------------------------------------------


def cmd_design(cfg: RunConfig, args) -> int:
    design = _build_design(cfg)
    sol, spec = design.solution, design.spec
    lam_p, lam_s, lam_i = sol.wavelengths_nm
    residual_dbeta = float(delta_beta(spec, spec.omega_s, spec.omega_i))
    period_um = spec.poling_period * 1e6
    header = [
        "temperature_C", "pump_nm", "signal_nm", "idler_nm", "residual_gvm_s_per_m",
        "poling_period_um", "grating_order", "delta_beta_rad_per_m", "process_type",
    ]
    row = [
        _g(sol.temperature), _g(lam_p), _g(lam_s), _g(lam_i), _g(sol.residual_gvm),
        _g(period_um), str(spec.grating_order), _g(residual_dbeta), spec.process_type,
    ]
    _commit(args.out_dir, [("design.csv", _text_writer(_csv_text(header, [row])))])
    print(f"process        {spec.process_type} at {sol.temperature:g} C")
    print(f"pump           {lam_p:.4f} nm")
    print(f"signal         {lam_s:.4f} nm ({spec.signal.polarization.value})")
    print(f"idler          {lam_i:.4f} nm ({spec.idler.polarization.value})")
    print(f"GVM residual   {sol.residual_gvm:.3e} s/m")
    print(f"poling period  {period_um:.6g} um (order {spec.grating_order:+d})")
    print(f"delta beta     {residual_dbeta:.3e} rad/m at the centres")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    temps = _temperatures(cfg)
    design = _build_design(cfg)
    points = temperature_sweep(design.spec, design.pump, temps, grid=_grid_spec(cfg), workers=args.threads)
    outputs: list[tuple[str, Writer]] = []
    for p in points:
        outputs.append((f"spectrum_T{p.temperature:.2f}.csv", lambda path, tr=p.trace: write_spectrum_csv(tr, path)))
    outputs.append(("sweep_summary.csv", lambda path: write_sweep_csv(points, path)))
    _commit(args.out_dir, outputs)
    for p in points:
        state = "merged" if p.fwhm.merged else "split"
        print(f"T = {p.temperature:8.2f} C  FWHM = {p.fwhm.bandwidth_thz:7.3f} THz  {state}")
    return EXIT_OK


def cmd_jsa(cfg: RunConfig, args) -> int:
    design = _build_design(cfg)
    block = cfg.block("jsa", required=False)
    temp = float(block.get("temperature_C", design.spec.temperature))
    spec = design.spec.at_temperature(temp)
    jsa = evaluate_jsa(spec, design.pump, _grid_spec(cfg))
    sig = marginal_signal_spectrum(jsa)
    idl = marginal_idler_spectrum(jsa)
    width = fwhm_bandwidth(sig)
    ct = correlation_time(sig)
    linewidth_hz = cfg.block("pump", required=False).get("linewidth_MHz", 0.0) * 1e6
    bip = biphoton_tbp(ct.delta_tau_fwhm, linewidth_hz, ct.classical_tbp) if linewidth_hz > 0 else None
    angle = ridge_angle_deg(jsa)
    header = [
        "temperature_C", "fwhm_THz", "merged", "delta_tau_fs", "classical_tbp",
        "delta_tau_amplitude_fs", "biphoton_tbp", "entangled", "ridge_angle_deg",
    ]
    row = [
        _g(temp), _g(width.bandwidth_thz), "true" if width.merged else "false",
        _g(ct.delta_tau_fwhm * 1e15), _g(ct.classical_tbp), _g(ct.delta_tau_amplitude_fwhm * 1e15),
        "" if bip is None else _g(bip.value), "" if bip is None else ("true" if bip.entangled else "false"),
        _g(angle),
    ]
    points = int(block.get("export_points", 256))
    _commit(
        args.out_dir,
        [
            ("jsa.csv", lambda path: write_jsa_csv(jsa, path, points=points)),
            ("jsa_signal_spectrum.csv", lambda path: write_spectrum_csv(sig, path)),
            ("jsa_idler_spectrum.csv", lambda path: write_spectrum_csv(idl, path)),
            ("jsa_summary.csv", _text_writer(_csv_text(header, [row]))),
        ],
    )
    print(f"T = {temp:g} C  FWHM = {width.bandwidth_thz:.3f} THz  merged = {width.merged}")
    print(f"correlation time {ct.delta_tau_fwhm * 1e15:.1f} fs  TBP {ct.classical_tbp:.3f}")
    if bip is not None:
        print(f"biphoton TBP {bip.value:.3e}  entangled = {bip.entangled}")
    print(f"ridge angle {angle:.2f} deg")
    return EXIT_OK


def _stem(path: Path) -> str:
    name = path.name
    for suffix in (".csv.gz", ".gz", ".csv"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def cmd_analyze_tags(cfg: RunConfig, args) -> int:
    if not args.tag_files:
        raise ConfigError("analyze-tags needs at least one tag file")
    block = cfg.block("analysis")
    paths = [Path(p) for p in args.tag_files]
    stems = [_stem(p) for p in paths]
    if len(set(stems)) != len(stems):
        raise ConfigError("tag files must have distinct names")
    window = int(block["window_ps"])
    duration = block.get("duration_s")
    streams = [read_tag_file(p, duration=duration) for p in paths]

    def run(stream):
        return analyze_stream(
            stream,
            window,
            pump_power_mw=block.get("pump_power_mW"),
            bandwidth_ghz=block.get("bandwidth_GHz"),
            power_rel_error=block.get("power_rel_error", 0.0),
        )

    workers = args.threads or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        reports: list[CoincidenceReport] = list(pool.map(run, streams))
    rows = [[stem, *r.as_row()] for stem, r in zip(stems, reports)]
    outputs: list[tuple[str, Writer]] = [
        (f"{stem}_report.txt", _text_writer(f"file: {path.name}\n" + r.to_text()))
        for stem, path, r in zip(stems, paths, reports)
    ]
    outputs.append(("coincidence_summary.csv", _text_writer(_csv_text(["file", *CoincidenceReport.FIELDS], rows))))
    _commit(args.out_dir, outputs)
    for stem, r in zip(stems, reports):
        line = (
            f"{stem}: n_s={r.n_s} n_i={r.n_i} n_c={r.n_c} r_cA={r.r_cA:.4g} Hz "
            f"eta_s={r.eta_s:.4g} eta_i={r.eta_i:.4g} r_c={r.r_c:.4g}+-{r.sigma_r_c:.2g} Hz"
        )
        if r.brightness is not None:
            line += f" brightness={r.brightness:.4g}"
        print(line)
    return EXIT_OK


def cmd_synth_tags(cfg: RunConfig, args) -> int:
    block = cfg.block("synth")
    seed = args.seed if args.seed is not None else int(block.get("seed", 0))
    stream = generate_synthetic_tags(
        pair_rate=block["pair_rate_Hz"],
        eta_s=block["eta_signal"],
        eta_i=block["eta_idler"],
        duration=block["duration_s"],
        seed=seed,
        jitter_ps=block.get("jitter_ps", 0.0),
        dark_rate_s=block.get("dark_rate_signal_Hz", 0.0),
        dark_rate_i=block.get("dark_rate_idler_Hz", 0.0),
        dead_time_ps=int(block.get("dead_time_ps", 0)),
        idler_delay_ps=int(block.get("idler_delay_ps", 0)),
    )
    name = block.get("file_name", "tags.csv")
    _commit(args.out_dir, [(name, lambda path: write_tag_file(stream, path))])
    print(f"{name}: {len(stream.signal)} signal and {len(stream.idler)} idler events, seed {seed}")
    return EXIT_OK


_COMMANDS = {
    "design": cmd_design,
    "sweep": cmd_sweep,
    "jsa": cmd_jsa,
    "analyze-tags": cmd_analyze_tags,
    "synth-tags": cmd_synth_tags,
}


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _threads(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=_seed, help="RNG seed for synthetic data")
    common.add_argument("--threads", type=_threads, help="worker threads (default: CPU count)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key, e.g. --set process.length_mm=20",
    )
    parser = _Parser(prog="spdc-forge", description="Design and analysis of PDC photon-pair sources.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("design", parents=[common], help="solve the GVM triple and poling period")
    sub.add_parser("sweep", parents=[common], help="signal spectra and FWHM over temperature")
    sub.add_parser("jsa", parents=[common], help="export a JSA, its marginals and correlation time")
    tags = sub.add_parser("analyze-tags", parents=[common], help="coincidences, efficiencies and pair rate")
    tags.add_argument("tag_files", nargs="*", type=Path, help="tag CSV files (.csv or .csv.gz)")
    sub.add_parser("synth-tags", parents=[common], help="write a synthetic tag file")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"spdc-forge: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.overrides)
        args.out_dir = args.out if args.out is not None else cfg.output_dir
        return _COMMANDS[args.command](cfg, args)
    except _INPUT_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpdcForgeError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
