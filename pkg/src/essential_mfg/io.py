"""JSON model files.

Indices in files are 1-based; diagonal rates are never written because they
are implied by the row sums.
"""

from __future__ import annotations

import json
import warnings
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .model import GameModel, ModelError, Polynomial, validate


class ModelFormatError(ModelError):
    """Model document does not match the file schema."""


class GeneratorWarning(UserWarning):
    """Loaded model fails the generator check on the validation grid."""


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("essential_mfg").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _reject_constant(token):
    raise ValueError(f"non-finite number {token} is not allowed")


def _poly_from_json(terms, S, where):
    for k, t in enumerate(terms):
        if len(t["exp"]) != S:
            raise ModelFormatError(f"{where}.poly[{k}].exp: expected {S} exponents, got {len(t['exp'])}")
    return Polynomial(S, tuple(tuple(t["exp"]) for t in terms), tuple(float(t["coef"]) for t in terms))


def _poly_to_json(p: Polynomial) -> list[dict]:
    return [{"exp": list(e), "coef": c} for e, c in p.terms]


def model_from_dict(doc: dict, check_generator: bool = True) -> GameModel:
    """Build a model from a parsed document, validating it against the schema."""
    validator = jsonschema.Draft202012Validator(load_schema("model"))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
        raise ModelFormatError("schema violations:\n  " + "\n  ".join(lines))
    S, A = doc["states"], doc["actions"]
    rates, rewards = {}, {}
    for k, entry in enumerate(doc["rates"]):
        where = f"rates[{k}]"
        i, j, a = entry["from"] - 1, entry["to"] - 1, entry["action"] - 1
        if i >= S or j >= S or a >= A:
            raise ModelFormatError(f"{where}: index out of range")
        if i == j:
            raise ModelFormatError(f"{where}: diagonal rates must be omitted")
        if (i, j, a) in rates:
            raise ModelFormatError(f"{where}: duplicate entry for ({i + 1}, {j + 1}, {a + 1})")
        rates[(i, j, a)] = _poly_from_json(entry["poly"], S, where)
    for k, entry in enumerate(doc["rewards"]):
        where = f"rewards[{k}]"
        i, a = entry["state"] - 1, entry["action"] - 1
        if i >= S or a >= A:
            raise ModelFormatError(f"{where}: index out of range")
        if (i, a) in rewards:
            raise ModelFormatError(f"{where}: duplicate entry for ({i + 1}, {a + 1})")
        rewards[(i, a)] = _poly_from_json(entry["poly"], S, where)
    model = GameModel(S, A, doc["beta"], rates, rewards)
    if check_generator:
        report = validate(model, 10)
        if not report.passed:
            warnings.warn("; ".join(report.failures), GeneratorWarning, stacklevel=3)
    return model


def model_to_dict(model: GameModel) -> dict:
    return {
        "states": model.S,
        "actions": model.A,
        "beta": model.beta,
        "rates": [
            {"from": i + 1, "to": j + 1, "action": a + 1, "poly": _poly_to_json(p)}
            for (i, j, a), p in model.rates.items()
        ],
        "rewards": [
            {"state": i + 1, "action": a + 1, "poly": _poly_to_json(p)} for (i, a), p in model.rewards.items()
        ],
    }


def load_model(data: bytes | str, check_generator: bool = True) -> GameModel:
    """Parse a model document.

    Raises:
        ModelFormatError: malformed JSON (with line and column) or schema violations.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from exc
    return model_from_dict(doc, check_generator=check_generator)


def save_model(model: GameModel) -> bytes:
    # json writes floats with repr(), which round-trips exactly
    return (json.dumps(model_to_dict(model), indent=2) + "\n").encode("utf-8")


def load_model_file(path: str | Path, check_generator: bool = True) -> GameModel:
    return load_model(Path(path).read_bytes(), check_generator=check_generator)


def save_model_file(model: GameModel, path: str | Path) -> None:
    Path(path).write_bytes(save_model(model))
