"""Command-line entry point: ``g4vspin <subcommand> [--config FILE] [overrides]``.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import sys

from .hamiltonians import species_table
from .sweep import ConfigError, config_from_mapping, emit, read_config_file, render, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SUBCOMMANDS = {
    "levels": "levels",
    "lambda-map": "lambda_map",
    "rabi-map": "rabi_map",
    "fidelity-table": "fidelity_table",
    "init-rate": "init_rate",
    "amplification": "amplification",
}

# flag -> config key
OVERRIDES = {
    "species": "species",
    "manifold": "manifold",
    "ex": "Ex",
    "exy": "eps_xy",
    "theta_dc": "theta_dc",
    "theta_ac": "theta_ac",
    "phi": "phi",
    "bdc": "bdc",
    "bac": "bac",
    "f_values": "f_values",
    "orbital_factor": "orbital_factor",
    "rho_dos": "rho_dos",
    "optimize": "optimize",
    "table_geometries": "table_geometries",
    "output": "output",
    "format": "format",
    "seed": "seed",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="g4vspin", description="Group-IV vacancy spin-control sweeps")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("params", help="print the species parameter table")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} sweep")
        sp.add_argument("--config", help="INI file with [sweep] [strain] [field] [options] sections")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default $G4V_THREADS or 1)")
        sp.add_argument("--species")
        sp.add_argument("--manifold", choices=("ground", "excited"))
        axis_help = "value or 'min,max,count'"
        sp.add_argument("--ex", help=f"Ex strain, {axis_help}")
        sp.add_argument("--exy", help=f"eps_xy strain, {axis_help}")
        sp.add_argument("--theta-dc", dest="theta_dc", help=f"dc polar angle in degrees, {axis_help}")
        sp.add_argument("--theta-ac", dest="theta_ac", help=f"ac polar angle in degrees, {axis_help}")
        sp.add_argument("--phi", help=f"phi_dc - phi_ac in degrees, {axis_help}")
        sp.add_argument("--bdc", help=f"dc field in T, {axis_help}")
        sp.add_argument("--bac", help=f"ac field amplitude in T, {axis_help}")
        sp.add_argument("--f-values", dest="f_values", help="comma-separated quenching factors (amplification)")
        sp.add_argument("--orbital-factor", dest="orbital_factor")
        sp.add_argument("--rho-dos", dest="rho_dos", help="phonon density of states in ns (init-rate)")
        sp.add_argument("--optimize", help="tune B_ac and duration in fidelity-table (true/false)")
        sp.add_argument("--table-geometries", dest="table_geometries", help="fidelity-table: paired dc/ac geometries only (true/false)")
        sp.add_argument("--output", "-o", help="output path, '-' for stdout")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--seed")
    return parser


def format_params() -> str:
    def cell(v, scale=1.0, fmt="{:g}"):
        return "n/a" if v is None else fmt.format(v * scale)

    lines = ["species manifold 2lambda_GHz upsilon_x_GHz upsilon_y_GHz f d_PHz"]
    for p in species_table():
        for m in ("ground", "excited"):
            mp = p.manifold(m)
            lines.append(
                " ".join(
                    [
                        p.species.value,
                        m,
                        cell(mp.lam, 2.0),
                        cell(mp.upsilon_x),
                        cell(mp.upsilon_y),
                        cell(mp.f),
                        cell(mp.d, 1e-6),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = build_parser().parse_args(argv)
        if args.command == "params":
            sys.stdout.write(format_params())
            return EXIT_OK
        values = read_config_file(args.config) if args.config else {}
        values["task"] = SUBCOMMANDS[args.command]
        for flag, key in OVERRIDES.items():
            v = getattr(args, flag, None)
            if v is not None:
                values[key] = v
        cfg = config_from_mapping(values)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"g4vspin: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_sweep(cfg, threads=args.threads)
        if cfg.output == "-":
            sys.stdout.write(render(result, cfg.format))
        else:
            emit(result, cfg.output, cfg.format)
    except Exception as exc:
        print(f"g4vspin: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
