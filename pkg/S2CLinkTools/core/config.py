"""
Immutable, fully defaulted configuration objects and their flat key=value files.

A config file looks like::

    # link under test
    tx_data_fps = 0.75
    cam_fps = 60
    aug_rotation_range_deg = -15, 15

Every key has a default, so an empty file is a valid configuration.
Keys are flat; configs nested inside another config read their keys
with a prefix (the dataset augmentation keys start with ``aug_``).
"""
import hashlib
from collections import OrderedDict

from S2CLinkTools.core.errors import ConfigurationError
from S2CLinkTools.core.utils import BaseObject


def read_config(path):
    """
    Read a flat key=value configuration file.

    Parameters
    ----------
    path : str
        Path of the file. Lines starting with '#' and blank lines are skipped.

    Returns
    -------
    OrderedDict of key (str) : raw value (str)
    """
    values = OrderedDict()
    with open(path, 'rt') as f:
        for lineno, line in enumerate(f, 1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigurationError(
                    '{}:{}: expected "key = value", got "{}"'.format(path, lineno, line))
            key, value = line.split('=', 1)
            key = key.strip()
            if not key:
                raise ConfigurationError('{}:{}: empty key'.format(path, lineno))
            values[key] = value.strip()
    return values


def write_config(path, values):
    """Write a mapping as a flat key=value file (keys in mapping order)."""
    with open(path, 'wt') as f:
        f.write(format_config(values))


def format_config(values):
    lines = ['{} = {}'.format(key, _check_text(key, _format_value(value)))
             for key, value in values.items()]
    return '\n'.join(lines) + '\n'


def _format_value(value):
    if isinstance(value, (tuple, list)):
        return ', '.join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# characters a one-line value of a config file cannot carry
_RESERVED = ('#', '\n', '\r')


def _check_text(key, text):
    bad = [c for c in _RESERVED if c in text]
    if bad:
        raise ConfigurationError('Value {!r} for "{}" contains {}, which a config file '
                                 'cannot hold.'.format(text, key, ', '.join(repr(c) for c in bad)))
    return text


def _coerce(key, value, default):
    """Convert value to the type of default."""
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered in ('1', 'true', 'yes', 'on'):
                    return True
                if lowered in ('0', 'false', 'no', 'off'):
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            if isinstance(value, str):
                items = [v.strip() for v in value.split(',') if v.strip()]
            else:
                items = list(value)
            item_type = type(default[0]) if default else str
            if item_type is str:
                return tuple(_check_text(key, str(v).strip()) for v in items)
            return tuple(item_type(v) for v in items)
        if default is None:
            return value
        return _check_text(key, str(value))
    except ConfigurationError:
        raise
    except (TypeError, ValueError):
        raise ConfigurationError('Cannot interpret {!r} as a value for "{}" (expected {}).'.format(
            value, key, type(default).__name__))


class ConfigBase(BaseObject):
    """
    Base class of every configuration object.

    Derived classes list their keys in ``_defaults`` as (key, default) pairs.
    Nested configurations are listed in ``_children`` as
    (attribute, class, key prefix, factory of the default instance).
    """
    _defaults = ()
    _children = ()

    def __init__(self, **kwargs):
        own_keys = [key for key, _ in self._defaults]
        child_names = [name for name, _, _, _ in self._children]
        unknown = [k for k in kwargs if k not in own_keys and k not in child_names]
        if unknown:
            raise ConfigurationError('Unknown key(s) for {}: {}'.format(
                type(self).__name__, ', '.join(sorted(unknown))))

        for key, default in self._defaults:
            value = kwargs.get(key, default)
            object.__setattr__(self, key, _coerce(key, value, default))

        for name, cls, _, factory in self._children:
            child = kwargs.get(name)
            if child is None:
                child = factory() if factory is not None else cls()
            elif not isinstance(child, cls):
                raise ConfigurationError('{} must be a {}, got {}'.format(
                    name, cls.__name__, type(child).__name__))
            object.__setattr__(self, name, child)

        self.validate_input()

    def validate_input(self):
        """ Optional method to be defined by derived class
        to check whether user input was valid. """
        pass

    def __setattr__(self, name, value):
        raise AttributeError('{} is immutable; use replace()'.format(type(self).__name__))

    def __delattr__(self, name):
        raise AttributeError('{} is immutable'.format(type(self).__name__))

    def __repr__(self):
        items = ', '.join('{}={!r}'.format(k, getattr(self, k)) for k, _ in self._defaults)
        return '{}({})'.format(type(self).__name__, items)

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash((type(self).__name__, tuple(self.to_dict().items())))

    @classmethod
    def keys(cls, prefix=''):
        """All flat keys understood by this config, nested ones included."""
        keys = [prefix + key for key, _ in cls._defaults]
        for _, child_cls, child_prefix, _ in cls._children:
            keys.extend(child_cls.keys(prefix + child_prefix))
        return keys

    def replace(self, **changes):
        """Return a copy with the given keys (or nested configs) changed."""
        values = dict((key, getattr(self, key)) for key, _ in self._defaults)
        values.update((name, getattr(self, name)) for name, _, _, _ in self._children)
        values.update(changes)
        return self._constructor(**values)

    def to_dict(self, prefix=''):
        """
        Flatten to an ordered mapping of prefixed key : value,
        nested configs included.
        """
        values = OrderedDict((prefix + key, getattr(self, key)) for key, _ in self._defaults)
        for name, _, child_prefix, _ in self._children:
            values.update(getattr(self, name).to_dict(prefix + child_prefix))
        return values

    @classmethod
    def from_dict(cls, values, prefix=''):
        """
        Build a config from a flat mapping.

        Keys that do not start with ``prefix`` or that belong to other configs are ignored,
        so one mapping can feed every config of a run.
        """
        kwargs = {}
        for key, _ in cls._defaults:
            if prefix + key in values:
                kwargs[key] = values[prefix + key]
        for name, child_cls, child_prefix, _ in cls._children:
            child_keys = child_cls.keys(prefix + child_prefix)
            if any(k in values for k in child_keys):
                kwargs[name] = child_cls.from_dict(values, prefix + child_prefix)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, prefix=''):
        return cls.from_dict(read_config(path), prefix)

    def to_config_text(self):
        """The snapshot of this config as key=value text."""
        return format_config(self.to_dict())

    def content_hash(self):
        """Hex sha1 of the snapshot text; equal configs have equal hashes."""
        text = type(self).__name__ + '\n' + self.to_config_text()
        return hashlib.sha1(text.encode('utf-8')).hexdigest()
