import logging
from pathlib import Path

from pydantic import ValidationError

from data.errors import ArgumentError, ConfigError
from model.runner import StudyConfig

logger = logging.getLogger(__name__)


def _list(value):
    return [item.strip() for item in value.split(",") if item.strip()]


def _ints(value):
    return [int(item) for item in _list(value)]


def _bool(value):
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "oui", "on"):
        return True
    if lowered in ("0", "false", "no", "non", "off"):
        return False
    raise ValueError(f"booléen attendu: {value}")


def _bounds(value):
    bounds = [float(item) for item in _list(value)]
    if len(bounds) != 2:
        raise ValueError(f"deux bornes attendues: {value}")
    return tuple(bounds)


# clé du fichier -> (section, champ, conversion)
KEYS = {
    "families": ("registry", "families", _list),
    "variants": ("registry", "variants", _list),
    "dimensions": ("registry", "dimensions", _ints),
    "holdout_size": ("registry", "holdout_size", int),
    "methods": (None, "methods", _list),
    "multipliers": (None, "multipliers", _ints),
    "replicates": (None, "replicates", int),
    "master_seed": (None, "master_seed", int),
    "maximin_budget": (None, "maximin_budget", int),
    "gp_starts": ("gp", "n_starts", int),
    "gp_max_evals": ("gp", "max_evals", int),
    "gp_nugget": ("gp", "nugget", float),
    "gp_nugget_cap": ("gp", "nugget_cap", float),
    "gp_log_bounds": ("gp", "log_bounds", _bounds),
    "record_wall_time": (None, "record_wall_time", _bool),
    "debug_models": (None, "debug_models", _bool),
    "parallel": (None, "parallel", int),
    "batch_size": (None, "batch_size", int),
}


def parse_config_text(text, source="<texte>"):
    """Lit un fichier `clé = valeur` (commentaires `#`, listes séparées par des virgules)."""
    values = {"registry": {}, "gp": {}}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: ligne sans '=': {raw.strip()}")

        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{number}: clé inconnue '{key}'")
        section, name, convert = KEYS[key]
        try:
            converted = convert(value)
        except ValueError as e:
            raise ConfigError(f"{source}:{number}: valeur invalide pour '{key}': {e}")

        if section is None:
            values[name] = converted
        else:
            values[section][name] = converted
    return values


def build_config(values, **overrides):
    values = dict(values)
    for name, value in overrides.items():
        if value is not None:
            values[name] = value
    try:
        return StudyConfig(**values)
    except (ValidationError, ArgumentError) as e:
        raise ConfigError(f"Configuration invalide: {e}")


def load_config(path=None, **overrides):
    """Construit la StudyConfig depuis un fichier; les options de la ligne de commande priment."""
    values = {"registry": {}, "gp": {}}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Fichier de configuration illisible: {path} ({e})")
        values = parse_config_text(text, source=str(path))
        logger.info("Configuration lue depuis %s", path)
    return build_config(values, **overrides)
