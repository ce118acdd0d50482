import argparse
import logging
import os
import sys
from typing import List, Optional, Tuple

import numpy as np

import momenta
from momenta.basis_builder import (
    DEFAULT_ROBUST,
    InvariantSet,
    Mode,
    build_invariant_set,
    choose_robust,
    count_table,
    descriptor_to_csv,
    evaluate_set,
    order_counts,
    published_minimal_count,
)
from momenta.basis_cache import BasisCache, BasisKey
from momenta.catalog import (
    CATALOG,
    DISCRIMINATION_SETS,
    compare_fields,
    cubic_a,
    cubic_b,
    cubic_unit,
    get_catalog_set,
)
from momenta.config import MomentaConfig, load_config
from momenta.formula import parse_polynomial
from momenta.irreducible import decompose, decompose_moments
from momenta.moments import (
    Flavor,
    MomentSet,
    SampledField,
    check_trace_relation,
    moments_from_grid,
    spherical_moments,
    volumetric_moments,
)
from momenta.patterns import export_dot_bundle
from momenta.tensor_core import Rotation3
from momenta.utils import (
    SCHEMA,
    dump_json,
    load_json,
    non_negative_int,
    validate_part,
)

logger = logging.getLogger(__name__)

HELP_FORMULAS = """\
Polynomial fields (--expr) are written in x, y and z with the following elements:

    Arithmetic operators: +, -, * and division by a constant
    Integer powers: x^2, (x + y)^3 (exponents from 0 to 64)
    Numbers: 3, 0.5, 1e-3
    Constants: pi, sqrt(2) (sqrt only takes constants)
    Parentheses: ( )

Multiplication is always explicit: write 3*x*y^2, not 3xy^2. Use ^ for powers, **
is rejected. Errors report the position of the offending character.

Examples:
    --expr 1                                   # the indicator of the unit ball
    --expr '3*x*y^2 - 3*x*z^2 - 3*sqrt(2)*y^2*z + sqrt(2)*z^3'
    --expr '(x^2 + y^2 + z^2)^2 - x*y/2'
"""

HELP_VOXELS = """\
Voxel grids (--voxels) sample a field on [-1, 1]^3 at n^3 voxel centers:

    bytes 0-3    the magic "MOMV"
    bytes 4-7    n as a little-endian unsigned 32-bit integer (n >= 8)
    bytes 8-15   reserved, zero
    then         n^3 little-endian float32 values, x varying fastest

Voxels whose centers lie outside the unit ball are ignored (with a warning if they
are not zero). With --rescale the coordinates are divided by the largest radius of a
non-zero voxel instead, which maps the support of the field into the unit ball.

Spherical samples (--samples) are text files with one sample per line:

    theta phi value weight

where theta is the polar angle, phi the azimuth and the quadrature weights sum to 4*pi.
"""

HELP_EXIT_CODES = """\
    0  success
    1  interrupted output (broken pipe)
    2  invalid arguments, configuration, formulas or input files
    3  numeric failure: the selection did not reach its target, no robust part
       exists, a contraction exceeded the intermediate rank cap or the selection
       was unstable under the verification seed
    4  input/output error
"""

additional_help_topics = {
    "formulas": HELP_FORMULAS,
    "voxels": HELP_VOXELS,
    "exit-codes": HELP_EXIT_CODES,
}


def help(command: str, topic: Optional[str], **kwargs) -> None:
    _ = command, kwargs
    if not topic:
        print("Use 'momenta help <topic>' to get more information about a topic.")
        print("Available help topics:")
        for t in additional_help_topics:
            print(f"  {t}")
        return

    matching = [t for t in additional_help_topics if t.startswith(topic)]
    if topic in additional_help_topics:
        matching = [topic]

    if not matching:
        print(f"error: No help topic found for '{topic}'.")
        print("Available help topics:")
        for t in additional_help_topics:
            print(f"  {t}")
        return

    if len(matching) > 1:
        print(f"error: Multiple help topics match prefix '{topic}':")
        for t in matching:
            print(f"  {t}")
        return

    print(additional_help_topics[matching[0]], end="")


class CLIArgumentsError(ValueError):
    """Raised for inconsistent command line arguments."""


class UseConfig:
    """A placeholder class to indicate that the value from the config should be used.

    The only reason for its existence is to print nicer `default: use config` in the
    help message instead of `default: None`."""

    def __str__(self):
        return "use config"


def _config(
    config_file: Optional[str],
    log_level: Optional[str],
    lmax: Optional[int] = None,
    flavor: Optional[str] = None,
    mode: Optional[str] = None,
    robust: Optional[Tuple[int, int]] = None,
    seed: Optional[int] = None,
    tolerance: Optional[float] = None,
    no_cache: bool = False,
) -> MomentaConfig:
    return load_config(
        config_file,
        log_level=log_level,
        lmax=lmax,
        flavor=flavor,
        mode=mode,
        robust=None if robust is None else f"{robust[0]},{robust[1]}",
        seed=seed,
        tolerance=tolerance,
        use_cache=False if no_cache else None,
    )


def _write_output(text: str, output: Optional[str]) -> None:
    if output is None or output == "-":
        sys.stdout.write(text)
        return
    with open(output, "w") as f:
        f.write(text)
    logger.info("Wrote %s", output)


def _read_moments(
    config: MomentaConfig,
    expr: Optional[str] = None,
    voxels: Optional[str] = None,
    samples: Optional[str] = None,
    moments_file: Optional[str] = None,
    rescale: bool = False,
    radially_constant: bool = False,
) -> MomentSet:
    """Moments from whichever input was given. Polynomials follow the configured
    flavor, voxel grids are volumetric and sample files spherical."""
    lmax = config.lmax
    if moments_file is not None:
        return MomentSet.from_json(load_json(moments_file))
    if voxels is not None:
        grid = SampledField.from_voxel_file(voxels)
        return moments_from_grid(grid, lmax, rescale=rescale, max_order=config.max_order)
    if samples is not None:
        return spherical_moments(
            SampledField.from_sample_file(samples), lmax, max_order=config.max_order
        )
    if expr is None:
        raise CLIArgumentsError("No input given")
    f = parse_polynomial(expr)
    if config.flavor_value == Flavor.SPHERICAL:
        if radially_constant:
            raise CLIArgumentsError("--radially-constant only applies to volumetric moments")
        return spherical_moments(f, lmax, max_order=config.max_order)
    return volumetric_moments(
        f, lmax, max_order=config.max_order, radially_constant=radially_constant
    )


def _load_invariant_set(set_file: Optional[str], catalog: Optional[str]) -> InvariantSet:
    if catalog is not None:
        return get_catalog_set(catalog).invariant_set()
    if set_file is None:
        raise CLIArgumentsError("Either a set file or --catalog is required")
    return InvariantSet.from_json(load_json(set_file))


def dump_config(
    command: str,
    config_file: Optional[str],
    log_level: Optional[str],
    provenance: bool,
    skip_default: bool,
) -> None:
    _ = command
    config = _config(config_file, log_level)
    print(config.to_toml_string(with_provenance=provenance, skip_default=skip_default), end="")


def moments(
    command: str,
    config_file: Optional[str],
    log_level: Optional[str],
    lmax: Optional[int],
    flavor: Optional[str],
    expr: Optional[str],
    voxels: Optional[str],
    samples: Optional[str],
    rescale: bool,
    radially_constant: bool,
    check_trace: bool,
    output: Optional[str],
) -> None:
    _ = command
    config = _config(config_file, log_level, lmax=lmax, flavor=flavor)
    result = _read_moments(
        config,
        expr=expr,
        voxels=voxels,
        samples=samples,
        rescale=rescale,
        radially_constant=radially_constant,
    )
    if check_trace:
        report = check_trace_relation(result)
        verdict = "holds" if report.holds() else "does not hold"
        print(
            f"trace relation ({report.flavor}): {verdict},"
            f" max relative deviation {report.max_deviation:.3g}",
            file=sys.stderr,
        )
    _write_output(dump_json(result.to_json()), output)


def decompose_command(
    command: str,
    config_file: Optional[str],
    log_level: Optional[str],
    lmax: Optional[int],
    flavor: Optional[str],
    expr: Optional[str],
    voxels: Optional[str],
    samples: Optional[str],
    moments_file: Optional[str],
    rescale: bool,
    output: Optional[str],
) -> None:
    _ = command
    config = _config(config_file, log_level, lmax=lmax, flavor=flavor)
    source = _read_moments(
        config,
        expr=expr,
        voxels=voxels,
        samples=samples,
        moments_file=moments_file,
        rescale=rescale,
    )
    document = {
        "schema": SCHEMA,
        "kind": "decompositions",
        "flavor": str(source.flavor),
        "lmax": source.lmax,
        "orders": [
            decompose(source[order], max_order=config.max_order).to_json()
            for order in range(source.lmax + 1)
        ],
    }
    _write_output(dump_json(document), output)


def _bounds_key(config: MomentaConfig) -> str:
    return ",".join(
        str(v)
        for v in (
            config.norm_floor,
            config.max_intermediate_rank,
            config.max_exponent,
            config.max_mixed_factors,
            config.max_mixed_rank,
            int(config.escalate),
        )
    )


def basis(
    command: str,
    config_file: Optional[str],
    log_level: Optional[str],
    lmax: Optional[int],
    flavor: Optional[str],
    mode: Optional[str],
    robust: Optional[Tuple[int, int]],
    seed: Optional[int],
    tolerance: Optional[float],
    reference: Optional[str],
    trace: Optional[str],
    dot_dir: Optional[str],
    no_cache: bool,
    output: Optional[str],
) -> None:
    _ = command
    config = _config(
        config_file,
        log_level,
        lmax=lmax,
        flavor=flavor,
        mode=mode,
        robust=robust,
        seed=seed,
        tolerance=tolerance,
        no_cache=no_cache,
    )
    mode_value = config.mode_value
    flavor_value = config.flavor_value
    robust_part = config.robust_part
    parts = None
    if reference is not None:
        reference_moments = MomentSet.from_json(load_json(reference))
        if reference_moments.flavor != flavor_value:
            raise CLIArgumentsError(
                f"The reference moments are {reference_moments.flavor}, expected {flavor_value}"
            )
        lmax_used = min(config.lmax, reference_moments.lmax)
        parts = decompose_moments(reference_moments.truncated(lmax_used))
        if mode_value == Mode.SPECIFIC and robust_part is None and config.lmax >= 2:
            robust_part = choose_robust(parts, config.vanishing_threshold)

    key = BasisKey(
        config.lmax,
        str(flavor_value),
        str(mode_value),
        ""
        if mode_value != Mode.SPECIFIC or config.lmax < 2
        else "{},{}".format(*(robust_part or DEFAULT_ROBUST)),
        config.seed,
        config.tolerance,
        _bounds_key(config),
    )

    # A cached set has no selection trace to write.
    cache = BasisCache(config.cache_dir) if config.use_cache and trace is None else None
    try:
        invariant_set = cache.get(key) if cache is not None else None
        if invariant_set is None:
            invariant_set = build_invariant_set(
                config.lmax,
                flavor_value,
                mode_value,
                robust=robust_part,
                parts=parts,
                settings=config.generation_settings(trace),
                threshold=config.vanishing_threshold,
            )
            if cache is not None:
                cache.put(key, invariant_set)
    finally:
        if cache is not None:
            cache.close()

    logger.info("Generated %s invariants", len(invariant_set))
    if dot_dir is not None:
        paths = export_dot_bundle(invariant_set.patterns, dot_dir)
        print(f"Wrote {len(paths)} DOT files to {dot_dir}", file=sys.stderr)
    _write_output(dump_json(invariant_set.to_json()), output)


def eval_command(
    command: str,
    config_file: Optional[str],
    log_level: Optional[str],
    set_file: Optional[str],
    catalog: Optional[str],
    expr: Optional[str],
    voxels: Optional[str],
    samples: Optional[str],
    moments_file: Optional[str],
    rescale: bool,
    csv: bool,
    output: Optional[str],
) -> None:
    _ = command
    invariant_set = _load_invariant_set(set_file, catalog)
    # The set decides the order and the flavor of the moments.
    config = _config(
        config_file, log_level, lmax=invariant_set.lmax, flavor=str(invariant_set.flavor)
    )
    source = _read_moments(
        config,
        expr=expr,
        voxels=voxels,
        samples=samples,
        moments_file=moments_file,
        rescale=rescale,
    )
    values = evaluate_set(invariant_set, source)
    if csv:
        _write_output(descriptor_to_csv(invariant_set, values), output)
        return
    document = {
        "schema": SCHEMA,
        "kind": "descriptor",
        "mode": str(invariant_set.mode),
        "flavor": str(invariant_set.flavor),
        "lmax": invariant_set.lmax,
        "seed": invariant_set.seed,
        "values": [float(v) for v in values],
    }
    _write_output(dump_json(document), output)


def _format_scaled(value: float, unit: float, power: int) -> str:
    scaled = value / unit**power
    if abs(scaled) < 1e-9:
        return "0"
    return f"{scaled:.6g}"


def demo(
    command: str,
    config_file: Optional[str],
    log_level: Optional[str],
    flavor: Optional[str],
    rotate: Optional[int],
    output: Optional[str],
) -> None:
    _ = command
    config = _config(config_file, log_level, flavor=flavor)
    flavor_value = config.flavor_value
    unit = cubic_unit(flavor_value)
    f, g = cubic_a(), cubic_b()
    lines = [f"f1 = {f}", f"f2 = {g}", f"c = {unit!r} ({flavor_value} moments of order 3)"]

    if rotate is not None:
        rotation = Rotation3.random(np.random.default_rng(rotate))
        rotated = f.rotated(rotation)
        lines.append(f"f1 is rotated by a random rotation (seed {rotate})")
        (self_check,) = compare_fields(f, rotated, flavor_value, names=DISCRIMINATION_SETS[-1:])
        lines.append(
            "rotated f1 vs f1: "
            + ("distinguished: true" if self_check.distinguished() else "equal")
            + f", max relative difference {self_check.relative_differences().max():.3g}"
        )
        f = rotated

    for comparison in compare_fields(f, g, flavor_value):
        catalog_set = comparison.catalog_set
        lines.append("")
        lines.append(f"[{catalog_set.name}] {catalog_set.description}")
        lines.append(f"{'#':>4}  {'f1':>12}  {'f2':>12}  unit")
        for i, pattern in enumerate(catalog_set.patterns):
            power = len(pattern.factors)
            lines.append(
                f"{i + 1:>4}  {_format_scaled(comparison.values_a[i], unit, power):>12}"
                f"  {_format_scaled(comparison.values_b[i], unit, power):>12}  c^{power}"
            )
        differing = comparison.differing_members()
        if differing:
            i = differing[0]
            power = len(catalog_set.patterns[i].factors)
            lines.append(
                f"distinguished: true, member #{i + 1},"
                f" {_format_scaled(comparison.values_a[i], unit, power)} vs"
                f" {_format_scaled(comparison.values_b[i], unit, power)} (x c^{power}),"
                f" relative difference {comparison.relative_differences()[i]:.3g}"
            )
        else:
            lines.append(
                "distinguished: false, max relative difference"
                f" {comparison.relative_differences().max():.3g}"
            )
    _write_output("\n".join(lines) + "\n", output)


def export_dot(
    command: str,
    config_file: Optional[str],
    log_level: Optional[str],
    set_file: Optional[str],
    catalog: Optional[str],
    out_dir: str,
) -> None:
    _ = command
    _config(config_file, log_level)
    invariant_set = _load_invariant_set(set_file, catalog)
    for path in export_dot_bundle(invariant_set.patterns, out_dir):
        print(path)


def counts(
    command: str,
    config_file: Optional[str],
    log_level: Optional[str],
    flavor: Optional[str],
    mode: Optional[str],
    max_lmax: int,
    per_order: bool,
    published: bool,
) -> None:
    _ = command
    config = _config(config_file, log_level, flavor=flavor, mode=mode)
    if per_order:
        print(f"{'l':>4} {'pure':>6} {'mixed':>6} {'total':>6}")
        for order in range(max_lmax + 1):
            row = order_counts(order)
            print(f"{order:>4} {row.pure:>6} {row.mixed:>6} {row.total:>6}")
        return
    table = count_table(max_lmax, config.flavor_value, config.mode_value)
    if not published or config.mode_value != Mode.MINIMAL:
        print(table.format(), end="")
        return
    print(f"{'lmax':>4} {'pure':>6} {'mixed':>6} {'total':>6} {'published':>9}")
    for lmax, row in table.rows.items():
        reference = published_minimal_count(lmax, config.flavor_value)
        shown = "?" if reference is None else str(reference)
        print(f"{lmax:>4} {row.pure:>6} {row.mixed:>6} {row.total:>6} {shown:>9}")


def cache(
    command: str,
    config_file: Optional[str],
    log_level: Optional[str],
    cache_command: str,
    keep: int = 0,
) -> None:
    _ = command
    config = _config(config_file, log_level)
    basis_cache = BasisCache(config.cache_dir)
    try:
        if cache_command == "list":
            for key in basis_cache.keys():
                robust = f" robust={key.robust}" if key.robust else ""
                print(
                    f"lmax={key.lmax} flavor={key.flavor} mode={key.mode}{robust}"
                    f" seed={key.seed} tolerance={key.tolerance} bounds={key.bounds}"
                )
        elif cache_command == "purge":
            removed = basis_cache.purge(keep)
            print(f"Removed {removed} cached sets")
        elif cache_command == "status":
            print(f"Cache file: {basis_cache.database_file}")
            print(f"Cached sets: {basis_cache.count()}")
        else:
            raise CLIArgumentsError(f"Unknown cache command: {cache_command}")
    finally:
        basis_cache.close()


def _add_input_arguments(p: argparse.ArgumentParser, with_moments_file: bool) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument(
        "--expr",
        "-e",
        metavar="FORMULA",
        help="A polynomial field in x, y, z. See 'momenta help formulas'.",
    )
    group.add_argument(
        "--voxels",
        metavar="FILE",
        help="A voxel grid file. See 'momenta help voxels'.",
    )
    group.add_argument(
        "--samples",
        metavar="FILE",
        help="A text file of spherical samples 'theta phi value weight'.",
    )
    if with_moments_file:
        group.add_argument(
            "--moments",
            dest="moments_file",
            metavar="FILE",
            help="A moments JSON file written by 'momenta moments'.",
        )
    p.add_argument(
        "--rescale",
        action="store_true",
        help="Map the support of a voxel grid into the unit ball.",
    )


def _add_set_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "set_file",
        nargs="?",
        metavar="SET_FILE",
        help="An invariant set JSON file written by 'momenta basis'.",
    )
    p.add_argument(
        "--catalog",
        choices=list(CATALOG),
        help="Use a published set instead of a set file.",
    )


def main_unwrapped(argv: List[str]):
    parser = argparse.ArgumentParser(
        description="Rotation invariants of moment tensors.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    parser.add_argument(
        "-v", "--version", action="version", version="%(prog)s " + momenta.__version__
    )

    # Arguments accepted by every command.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        dest="config_file",
        metavar="FILE",
        default=UseConfig(),
        help="The config file. 'DEFAULT' means no file. Defaults to $MOMENTA_CONFIG"
        " or the user config file.",
    )
    common.add_argument(
        "--log-level",
        metavar="LEVEL",
        default=UseConfig(),
        help="Log to stderr with this level (DEBUG, INFO, WARNING...).",
    )

    # Subcommands
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add_parser(name: str, help: str) -> argparse.ArgumentParser:
        return subparsers.add_parser(
            name,
            help=help,
            parents=[common],
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )

    p_moments = add_parser("moments", "Compute the moment tensors of a field.")
    p_decompose = add_parser("decompose", "Decompose moment tensors into irreducible parts.")
    p_basis = add_parser("basis", "Generate an invariant set.")
    p_eval = add_parser("eval", "Evaluate an invariant set on a field.")
    p_demo = add_parser("demo", "Compare invariant sets on two cubics that only some tell apart.")
    p_export_dot = add_parser("export-dot", "Write one DOT graph per invariant of a set.")
    p_counts = add_parser("counts", "Print the expected sizes of invariant sets.")
    p_dump_config = add_parser("dump-config", "Dump the config state.")
    p_cache = add_parser("cache", "Manage the cache of generated invariant sets.")
    p_help = subparsers.add_parser(
        "help",
        help="Show additional help.",
    )

    # Command-specific arguments.

    # Arguments unique to help
    p_help.add_argument(
        "topic",
        nargs="?",
        type=str,
        help="The help topic to show. If not specified, show the list of topics.",
    )

    # Arguments unique to dump-config
    p_dump_config.add_argument(
        "--no-provenance",
        "-n",
        action="store_false",
        dest="provenance",
        help="Exclude the provenance of settings as comments.",
    )
    p_dump_config.add_argument(
        "--skip-default",
        "-d",
        action="store_true",
        help="Skip unchanged options (with 'default' provenance).",
    )

    # Order and flavor.
    for p in [p_moments, p_decompose, p_basis]:
        p.add_argument(
            "--lmax",
            "-l",
            type=non_negative_int,
            default=UseConfig(),
            help="The largest moment order.",
        )
    for p in [p_moments, p_decompose, p_basis, p_demo, p_counts]:
        p.add_argument(
            "--flavor",
            "-f",
            choices=["volumetric", "spherical"],
            default=UseConfig(),
            help="Moments over the unit ball (volumetric) or the unit sphere (spherical).",
        )
    for p in [p_basis, p_counts]:
        p.add_argument(
            "--mode",
            "-m",
            choices=["specific", "minimal", "langbein"],
            default=UseConfig(),
            help="The kind of invariant set: a specific basis anchored on a robust part,"
            " the minimal flexible set or independent invariants of the moment tensors.",
        )

    # Inputs.
    _add_input_arguments(p_moments, with_moments_file=False)
    _add_input_arguments(p_decompose, with_moments_file=True)
    _add_input_arguments(p_eval, with_moments_file=True)
    _add_set_arguments(p_eval)
    _add_set_arguments(p_export_dot)

    # Outputs.
    for p in [p_moments, p_decompose, p_basis, p_eval, p_demo]:
        p.add_argument(
            "--output",
            "-o",
            metavar="FILE",
            help="Write the result to this file instead of stdout.",
        )

    # Arguments unique to moments
    p_moments.add_argument(
        "--radially-constant",
        action="store_true",
        help="Compute the moments of f(x/|x|), the extension of the field that is"
        " constant along rays.",
    )
    p_moments.add_argument(
        "--check-trace",
        action="store_true",
        help="Report on stderr whether the trace relation between orders l and l-2 holds.",
    )

    # Arguments unique to basis
    p_basis.add_argument(
        "--robust",
        "-r",
        type=validate_part,
        metavar="L,P",
        default=UseConfig(),
        help="The irreducible part a specific basis is anchored on.",
    )
    p_basis.add_argument(
        "--seed",
        "-s",
        type=non_negative_int,
        default=UseConfig(),
        help="Seed of the random point the independence test is done at.",
    )
    p_basis.add_argument(
        "--tolerance",
        type=float,
        default=UseConfig(),
        help="Relative residual an invariant needs to be accepted as independent.",
    )
    p_basis.add_argument(
        "--reference",
        metavar="FILE",
        help="A moments JSON file to choose the robust part from.",
    )
    p_basis.add_argument(
        "--trace",
        metavar="FILE",
        help="Write every selection decision to this JSON-lines file.",
    )
    p_basis.add_argument(
        "--dot-dir",
        metavar="DIR",
        help="Also write one DOT graph per invariant to this directory.",
    )
    p_basis.add_argument(
        "--no-cache",
        action="store_true",
        help="Neither read nor write the basis cache.",
    )

    # Arguments unique to eval
    p_eval.add_argument(
        "--csv",
        action="store_true",
        help="Write the descriptor as CSV with one row per invariant.",
    )

    # Arguments unique to demo
    p_demo.add_argument(
        "--rotate",
        type=non_negative_int,
        metavar="SEED",
        help="Rotate the first cubic by a random rotation with this seed.",
    )

    # Arguments unique to export-dot
    p_export_dot.add_argument(
        "--out-dir",
        "-d",
        required=True,
        metavar="DIR",
        help="The directory to write the DOT files to.",
    )

    # Arguments unique to counts
    p_counts.add_argument(
        "--max-lmax",
        type=non_negative_int,
        default=6,
        help="The largest maximal order to print.",
    )
    p_counts.add_argument(
        "--per-order",
        action="store_true",
        help="Print the counts of a basis of a single moment tensor per order.",
    )
    p_counts.add_argument(
        "--published",
        action="store_true",
        help="Also print the published sizes of the minimal flexible set.",
    )

    # Arguments unique to cache
    cache_subparsers = p_cache.add_subparsers(
        dest="cache_command", metavar="CACHE_COMMAND", required=True
    )
    cache_subparsers.add_parser("list", help="List the cached sets.")
    p_cache_purge = cache_subparsers.add_parser(
        "purge", help="Remove the least recently used sets."
    )
    p_cache_purge.add_argument(
        "--keep",
        type=non_negative_int,
        default=0,
        help="The number of most recently used sets to keep.",
    )
    cache_subparsers.add_parser("status", help="Show the cache location and size.")

    if not argv:
        argv = ["--help"]

    args = parser.parse_args(argv)
    vardict = vars(args)

    # Configure logging
    logging.basicConfig(
        level=logging.CRITICAL,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%H:%M:%S",
    )

    # Replace UseConfig() with None.
    for key, value in vardict.items():
        if isinstance(value, UseConfig):
            vardict[key] = None

    # Execute the function associated with the chosen subcommand
    if args.command == "moments":
        moments(**vardict)
    elif args.command == "decompose":
        decompose_command(**vardict)
    elif args.command == "basis":
        basis(**vardict)
    elif args.command == "eval":
        eval_command(**vardict)
    elif args.command == "demo":
        demo(**vardict)
    elif args.command == "export-dot":
        export_dot(**vardict)
    elif args.command == "counts":
        counts(**vardict)
    elif args.command == "dump-config":
        dump_config(**vardict)
    elif args.command == "cache":
        cache(**vardict)
    elif args.command == "help":
        help(**vardict)
    else:
        print(f"error: Command not implemented: {args.command}", file=sys.stderr)
        sys.exit(2)


def main(argv: Optional[List[str]] = None):
    try:
        main_unwrapped(sys.argv[1:] if argv is None else argv)
        sys.stdout.flush()
    except BrokenPipeError:
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        sys.exit(1)
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(2)
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(3)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(4)


if __name__ == "__main__":
    main()
