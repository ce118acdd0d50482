import argparse
import json
import logging
from typing import Any, Iterable, Tuple

logger = logging.getLogger(__name__)

SCHEMA = "momenta/1"


class SchemaError(ValueError):
    """Raised when a JSON document is not one of ours."""


def check_schema(obj: Any, kind: str, required: Iterable[str] = ()) -> None:
    """Check the schema tag, the document kind and the presence of the required keys."""
    if not isinstance(obj, dict):
        raise SchemaError(f"Expected a JSON object, got {type(obj).__name__}")
    if obj.get("schema") != SCHEMA:
        raise SchemaError(f"Unsupported schema: {obj.get('schema')!r}, expected {SCHEMA!r}")
    if obj.get("kind") != kind:
        raise SchemaError(f"Expected a document of kind {kind!r}, got {obj.get('kind')!r}")
    missing = [key for key in required if key not in obj]
    if missing:
        raise SchemaError(f"The {kind} document is missing keys: {', '.join(missing)}")


def load_json(path: str) -> Any:
    with open(path, "r") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path} is not valid JSON: {e}")


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def validate_part(value: str) -> Tuple[int, int]:
    """Parse an irreducible part given as `L,P`."""
    split_value = value.split(",")
    if len(split_value) != 2:
        raise argparse.ArgumentTypeError(f"Part must be specified as L,P: {value}")
    try:
        order = int(split_value[0])
        rank = int(split_value[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"Part must be integer: {value}")
    if rank < 0 or rank > order or (order - rank) % 2:
        raise argparse.ArgumentTypeError(
            f"Rank must not exceed the order and have the same parity: {value}"
        )
    return (order, rank)


def positive_int(value: str) -> int:
    try:
        result = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Not an integer: {value}")
    if result < 1:
        raise argparse.ArgumentTypeError(f"Must be positive: {value}")
    return result


def non_negative_int(value: str) -> int:
    try:
        result = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Not an integer: {value}")
    if result < 0:
        raise argparse.ArgumentTypeError(f"Must be non-negative: {value}")
    return result
