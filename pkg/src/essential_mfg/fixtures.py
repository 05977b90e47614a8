"""Bundled reference games.

=========  ===============================================================
REF-1A     one action, constant irreducible rates; unique equilibrium
REF-DOM    identical rates, action 1 strictly dominant
REF-IND    identical actions; a continuum of equilibria
REF-KNIFE  reward tie touching zero at the stationary point of a mixture
REF-2x2    affine congestion rewards; unique interior equilibrium
=========  ===============================================================
"""

from __future__ import annotations

from importlib import resources

from .io import load_model
from .model import GameModel

FIXTURES = {
    "REF-1A": "ref_1a.json",
    "REF-DOM": "ref_dom.json",
    "REF-IND": "ref_ind.json",
    "REF-KNIFE": "ref_knife.json",
    "REF-2x2": "ref_2x2.json",
}


def _lookup(name: str) -> str:
    for key, fname in FIXTURES.items():
        if key.lower() == name.lower():
            return fname
    raise KeyError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")


def fixture_text(name: str) -> str:
    return resources.files("essential_mfg").joinpath("fixtures", _lookup(name)).read_text()


def load_fixture(name: str) -> GameModel:
    """Load a bundled reference game by name (case-insensitive)."""
    return load_model(fixture_text(name))
