"""Packaged example specs (``toy1``, ``toy2``, ``countervailing``, ``null``)."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from .scm import ScmSpec, load_spec

NAMES = ("toy1", "toy2", "countervailing", "null")


@lru_cache(maxsize=None)
def _raw(name: str) -> str:
    if name not in NAMES:
        raise KeyError(f"unknown packaged spec {name!r}; choose from {', '.join(NAMES)}")
    return resources.files("pathpolicy").joinpath("data", f"{name}.json").read_text()


def packaged_dict(name: str) -> dict:
    return json.loads(_raw(name))


def packaged(name: str) -> ScmSpec:
    return load_spec(packaged_dict(name))


def toy1() -> ScmSpec:
    return packaged("toy1")


def toy2() -> ScmSpec:
    return packaged("toy2")


def countervailing() -> ScmSpec:
    return packaged("countervailing")


def null() -> ScmSpec:
    return packaged("null")
