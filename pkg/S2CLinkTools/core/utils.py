import numpy as np


def to_list(obj):
    """
    Wrap a single value in a list; iterables other than strings become lists.

    None is returned unchanged.
    """
    if obj is None:
        return None
    if isinstance(obj, (str, bytes)) or not hasattr(obj, '__iter__'):
        return [obj]
    return list(obj)


def derive_seed(*keys):
    """
    Derive an independent 32-bit seed from a base seed and a path of integer keys.

    The same keys always give the same seed, whatever the order in which the
    seeds are requested, so work seeded this way can run in any order or in parallel.

    Parameters
    ----------
    keys : int
        Non-negative integers, typically (base seed, stream index, item index).

    Returns
    -------
    seed : int

    Examples
    --------
    >>> derive_seed(0, 3) == derive_seed(0, 3)
    True
    """
    if not keys:
        raise ValueError('At least one key is required to derive a seed.')
    entropy = [int(k) for k in keys]
    if any(k < 0 for k in entropy):
        raise ValueError('Seed keys must be non-negative. Encountered {}'.format(entropy))
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])


def rng_for(*keys):
    """A numpy Generator seeded with derive_seed(*keys)."""
    return np.random.default_rng(derive_seed(*keys))


class BaseObject(object):
    """
    Common base of the package's value and model objects.

    Subclasses that check their arguments override ``validate_input`` and call
    it at the end of ``__init__``.
    """

    def __repr__(self):
        return '<{0}>'.format(type(self).__name__)

    @property
    def _constructor(self):
        return self.__class__

    def validate_input(self):
        pass
