"""Access to the bundled model and device descriptions."""

from __future__ import annotations

from importlib import resources as importlib_resources

from .model import ModelDag, parse_model


def _models_dir():
    return importlib_resources.files("sdflow") / "assets" / "models"


def bundled_model_names() -> list[str]:
    return sorted(p.name[:-5] for p in _models_dir().iterdir()
                  if p.name.endswith(".json"))


def bundled_model(name: str) -> ModelDag:
    ref = _models_dir() / f"{name}.json"
    return parse_model(ref.read_text())


def bundled_model_text(name: str) -> str:
    return (_models_dir() / f"{name}.json").read_text()
