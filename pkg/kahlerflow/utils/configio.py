"""
YAML configuration documents: loading with line numbers, conversion of sections into dataclasses
with typed defaults, and dotted-key overrides (`model.grid.n_fibre`) for the command line and sweeps.
"""
import dataclasses
import typing
import yaml
import kahlerflow.utils as utils
from kahlerflow.utils.errors import ConfigError


class LineDict(dict):
    """A mapping that remembers the source line of each key."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.lines = {}


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    mapping = LineDict(loader.construct_mapping(node, deep=True))
    mapping.lines = {key.value: key.start_mark.line + 1 for key, _ in node.value if hasattr(key, "value")}
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_yaml(path) -> dict:
    """
    Parses a YAML document into nested `LineDict`s. Syntax errors and unreadable files raise
    `ConfigError` with the parser's line.
    """
    try:
        with open(path, "r") as handle:
            data = yaml.load(handle, Loader=_LineLoader)
    except FileNotFoundError:
        utils.logger.error(f"{__name__}: config file {path} not found")
        raise ConfigError(f"config file {path} not found")
    except yaml.YAMLError as error:
        mark = getattr(error, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        utils.logger.error(f"{__name__}: invalid YAML in {path}: {error}")
        raise ConfigError(f"invalid YAML in {path}: {getattr(error, 'problem', error)}", line=line)
    if data is None:
        return LineDict()
    if not isinstance(data, dict):
        utils.logger.error(f"{__name__}: top level of {path} must be a mapping")
        raise ConfigError(f"top level of {path} must be a mapping", line=1)
    return data


def dump_yaml(data: dict, path) -> None:
    with open(path, "w") as handle:
        yaml.safe_dump(_plain(data), handle, sort_keys=False, default_flow_style=False)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _line(data, key):
    return getattr(data, "lines", {}).get(key)


def _coerce(value, annotation, key: str, line: int):
    """Checks a scalar against a field annotation; ints are accepted for floats, and numeric strings such as `1e-12`."""
    origin = typing.get_origin(annotation)
    if origin is typing.Union:
        options = [a for a in typing.get_args(annotation) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, options[0], key, line)
    if annotation in (list, tuple) or origin in (list, tuple):
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {type(value).__name__}", key=key, line=line)
        return list(value)
    if annotation is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"expected a mapping, got {type(value).__name__}", key=key, line=line)
        return dict(value)
    if annotation is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key=key, line=line)
        return value
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key=key, line=line)
        return value
    if annotation is float:
        if isinstance(value, bool):
            raise ConfigError(f"expected a number, got {value!r}", key=key, line=line)
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"expected a number, got {value!r}", key=key, line=line)
    if annotation is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key=key, line=line)
        return value
    return value


def _dotted(section: str, key) -> str:
    return f"{section}.{key}" if section else str(key)


def build_dataclass(cls, data, section: str):
    """
    Instantiates dataclass `cls` from the mapping `data`; absent keys keep the class defaults,
    nested dataclass fields are built recursively. Unknown keys and type mismatches raise
    `ConfigError` naming the dotted key `section.key` and its line.
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        utils.logger.error(f"{__name__}: section `{section}` must be a mapping")
        raise ConfigError("expected a mapping", key=section or None)
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            utils.logger.error(f"{__name__}: unknown key `{_dotted(section, key)}`")
            raise ConfigError(f"unknown key, expected one of {sorted(fields)}", key=_dotted(section, key),
                              line=_line(data, key))

    values = {}
    for name, f in fields.items():
        if name not in data:
            continue
        key = _dotted(section, name)
        annotation = hints.get(name)
        if dataclasses.is_dataclass(annotation):
            values[name] = build_dataclass(annotation, data[name], key)
            continue
        value = data[name]
        if value is None and f.default is None:
            values[name] = None
            continue
        try:
            values[name] = _coerce(value, annotation, key, _line(data, name))
        except ConfigError as error:
            utils.logger.error(f"{__name__}: {error}")
            raise
    return cls(**values)


def set_dotted(data: dict, dotted_key: str, value) -> dict:
    """Sets `data[a][b][c] = value` for `dotted_key = "a.b.c"`, creating intermediate mappings."""
    parts = dotted_key.split(".")
    node = data
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = {}
            node[part] = child
        elif not isinstance(child, dict):
            utils.logger.error(f"{__name__}: `{dotted_key}` goes through the non-mapping `{part}`")
            raise ConfigError("cannot set through a non-mapping value", key=dotted_key)
        node = child
    node[parts[-1]] = value
    return data


def parse_scalar(text: str):
    """Parses a command-line value with YAML scalar rules (`2` -> int, `0.5` -> float, `rk4` -> str)."""
    return yaml.safe_load(text)
