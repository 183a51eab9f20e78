"""
Module for reading experiment settings from flat ``key = value`` files. Keys are the long command line flag
names without the leading dashes, ``-`` and ``_`` are interchangeable and ``#`` or ``;`` start comments::

    problem = nls_rosenbrock
    method = enksgd
    particles = 8
    noise-sigma = 0
"""

import configparser
from typing import Dict

_SECTION = "experiment"

def normalize_key(key: str) -> str:
    """
    Maps a config key or flag name to its canonical form, e.g. ``--noise-sigma`` to ``noise_sigma``.
    """
    return key.strip().lstrip("-").lower().replace("-", "_")

def parse_config_text(text: str, source: str = "<string>") -> Dict[str, str]:
    """
    Parses the contents of a config file.

    :param text: The file contents.
    :param source: The name reported in errors.
    :return: The raw values by normalized key.
    :raises ValueError: If the text is malformed or a key repeats.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))

    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=source)
    except configparser.Error as exc:
        raise ValueError(f"Malformed config file '{source}': {exc}") from exc

    values: Dict[str, str] = {}

    for key, value in parser.items(_SECTION):
        normalized = normalize_key(key)

        if normalized in values:
            raise ValueError(f"Config file '{source}' sets '{normalized}' more than once.")

        values[normalized] = value.strip()

    return values

def load_config_file(path: str) -> Dict[str, str]:
    """
    Reads a config file.

    :param path: The file path.
    :return: The raw values by normalized key.
    """
    try:
        with open(path, "r", encoding="utf-8") as file:
            text = file.read()
    except OSError as exc:
        raise OSError(exc.errno, f"Failed to read config file '{path}': {exc.strerror}", path) from exc

    return parse_config_text(text, source=path)
