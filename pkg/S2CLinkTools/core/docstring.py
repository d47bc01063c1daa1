"""
Shared parameter descriptions for numpydoc docstrings.

A docstring names a snippet with a format field, e.g. ``{_codec_cfg}``, and the
decorator substitutes the registered text when the function is defined.
"""
import inspect


class _KeepMissing(dict):
    """Leaves unknown fields in place, so docstrings may be formatted in stages."""

    def __missing__(self, key):
        return '{' + key + '}'


class DocReplacer(object):
    """
    Decorator that fills docstring fields from a table of snippets.

    Parameters
    ----------
    auto_dedent : bool
        Strip the common indentation of the docstring before substitution.
    allow_partial_formatting : bool
        Leave fields without a snippet untouched instead of raising KeyError.
    snippets : str
        Field name to replacement text.

    Examples
    --------
    >>> doc = DocReplacer(_seed='seed : int')
    >>> @doc
    ... def render(seed):
    ...     '''Parameters
    ...     ----------
    ...     {_seed}
    ...     '''
    >>> render.__doc__.splitlines()[-1]
    'seed : int'
    """

    def __init__(self, auto_dedent=True, allow_partial_formatting=False, **snippets):
        self.doc_dict = dict(snippets)
        self.auto_dedent = auto_dedent
        self.allow_partial_formatting = allow_partial_formatting

    def __call__(self, func):
        if func.__doc__:
            doc = inspect.cleandoc(func.__doc__) if self.auto_dedent else func.__doc__
            func.__doc__ = self._format(doc)
        return func

    def replace(self):
        """Expand snippets that refer to other snippets."""
        table = _KeepMissing(self.doc_dict)
        self.doc_dict = {k: v.format_map(table) for k, v in self.doc_dict.items()}

    def update(self, *args, **kwargs):
        self.doc_dict.update(*args, **kwargs)

    def _format(self, doc):
        table = _KeepMissing(self.doc_dict) if self.allow_partial_formatting else self.doc_dict
        return doc.format_map(table)
