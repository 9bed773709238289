# coding: utf-8

import os
import yaml
import json

from .cards import ConfigurationError
from .file import local_file
from .log import get_logger

__all__ = ["Conf", "agent_settings", "load_conf", "merge_dict", "DEFAULT_CONF_FILE"]

DEFAULT_CONF_FILE = local_file(__file__, "default.yaml")
AGENT_KINDS = ("dql", "a2c", "ppo")

logger = get_logger("chefshat.conf")


def merge_dict(base: dict, override: dict) -> dict:
    """
    deep merge, values of `override` win

    >>> merge_dict({'a': {'b': 1, 'c': 2}}, {'a': {'c': 3}})
    {'a': {'b': 1, 'c': 3}}
    """
    merged = dict(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_dict(merged[key], value)
        else:
            merged[key] = value
    return merged


class Conf(dict):

    """
    Configuration loaded from yaml, relative to $CONFPATH when set.

    Other files can be pulled in with a `# include <file>` comment line. Keys
    read as attributes; a missing key reads as None.
    """

    @classmethod
    def load_file(cls, conf_file: str = None):
        if conf_file is not None:
            conf_string = cls._read_file(conf_file)
            return cls.load_string(conf_string)
        else:
            return Conf()

    @classmethod
    def _read_file(cls, conf_file: str):
        conf_path = os.environ.get("CONFPATH")
        if conf_path is None or os.path.isabs(conf_file):
            conf_path = "."
        abspath = os.path.join(conf_path, conf_file)
        conf_lines = []
        with open(abspath, "r", encoding="utf-8") as f:
            for line in f:
                if line.startswith("# include"):
                    included_file = line.replace("# include", "").strip()
                    if not os.path.isabs(included_file):
                        included_file = os.path.abspath(
                            os.path.join(os.path.dirname(abspath), included_file)
                        )
                    conf_lines.append(cls._read_file(included_file))
                else:
                    conf_lines.append(line.rstrip("\n"))
        return "\n".join(conf_lines)

    @classmethod
    def load_string(cls, conf_string: str):
        try:
            conf_dict = yaml.safe_load(conf_string) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"bad yaml: {e}")
        if not isinstance(conf_dict, dict):
            raise ConfigurationError("configuration must be a mapping")
        return cls.from_dict(conf_dict)

    @classmethod
    def from_dict(cls, d):
        # load and dump and load, just to use object_hook
        return json.loads(json.dumps(d), object_hook=cls)

    @classmethod
    def merge(cls, conf, another_conf):
        return cls.from_dict(merge_dict(conf, another_conf))

    def __getattr__(self, key):
        if key.startswith("__"):
            raise AttributeError(key)
        return self.get(key, None)

    def __str__(self):
        return json.dumps(self, indent=4, ensure_ascii=False)

    __setattr__ = dict.__setitem__


def _check_count(conf, section, keys, minimum=1):
    for key in keys:
        value = conf[section].get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
            raise ConfigurationError(
                f"{section}.{key} must be an integer >= {minimum}, got {value!r}"
            )


def validate_conf(conf: Conf):
    for kind in AGENT_KINDS:
        if kind not in conf.agents:
            raise ConfigurationError(f"no agent block for {kind}")
    unknown = set(conf.agents) - set(AGENT_KINDS) - {"common"}
    if unknown:
        raise ConfigurationError(f"unknown agent kinds {sorted(unknown)}")
    # no training at all is the untrained baseline
    _check_count(conf, "experiment", ["training_games"], minimum=0)
    _check_count(
        conf,
        "experiment",
        ["eval_runs", "eval_games", "generations", "generation_games", "validation_games"],
    )
    p = conf.game.special_probability
    if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"game.special_probability must be in [0, 1], got {p!r}")
    return conf


def load_conf(conf_file: str = None, overrides: dict = None) -> Conf:
    """defaults, then the user file, then `overrides` (command line flags)"""
    conf = Conf.load_file(DEFAULT_CONF_FILE)
    if conf_file is not None:
        logger.info("loading configuration from %s", conf_file)
        try:
            user = Conf.load_file(conf_file)
        except OSError as e:
            raise ConfigurationError(f"cannot read {conf_file}: {e}")
        conf = Conf.merge(conf, user)
    if overrides:
        conf = Conf.merge(conf, overrides)
    return validate_conf(conf)


def agent_settings(conf: Conf, kind: str) -> dict:
    """the `common` block merged with the block of `kind`"""
    if kind not in AGENT_KINDS:
        raise ConfigurationError(f"unknown agent kind {kind!r}, expected one of {AGENT_KINDS}")
    return merge_dict(dict(conf.agents.common or {}), dict(conf.agents[kind]))


if __name__ == "__main__":
    import doctest

    doctest.testmod()
