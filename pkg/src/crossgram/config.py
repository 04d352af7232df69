"""``key = value`` run configuration with defaults < file < flags precedence."""

from __future__ import annotations


class ConfigFileError(ValueError):
    pass


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigFileError(f"{source}:{lineno}: empty key")
        values[key.replace("-", "_")] = value
    return values


def read_config_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), path)


def resolve(schema, file_values, flag_values):
    """Merge defaults, file values and flags; every key is checked against ``schema``.

    ``schema`` maps key -> (converter, default).  ``flag_values`` holds only
    flags the user actually passed.
    """
    unknown = sorted(set(file_values) - set(schema))
    if unknown:
        raise ConfigFileError(f"unknown config key(s): {', '.join(unknown)}")
    out = {key: default for key, (_, default) in schema.items()}
    for key, value in file_values.items():
        convert = schema[key][0]
        try:
            out[key] = convert(value)
        except (TypeError, ValueError) as exc:
            raise ConfigFileError(f"bad value for {key!r}: {value!r} ({exc})") from None
    for key, value in flag_values.items():
        if key not in schema:
            raise ConfigFileError(f"unknown option {key!r}")
        out[key] = value
    return out
