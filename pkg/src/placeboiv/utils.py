from __future__ import annotations

import hashlib
from typing import Any
from typing import AnyStr


try:
    import orjson as json

    def dumps(obj: Any, **kwargs) -> str:
        kwargs.pop("sort_keys", None)
        option = json.OPT_SORT_KEYS | json.OPT_SERIALIZE_NUMPY | json.OPT_INDENT_2
        return json.dumps(obj, option=option, default=kwargs.get("default")).decode()

except ImportError:
    import json

    def dumps(obj, **kwargs):
        return json.dumps(obj, sort_keys=True, indent=2, default=kwargs.get("default"))

finally:

    def loads(obj: AnyStr, **kwargs) -> Any:
        return json.loads(obj, **kwargs)


try:
    import ulid as unique

    def uid() -> str:
        return str(unique.ULID())

except ImportError:
    import uuid as unique

    def uid() -> str:
        return str(unique.uuid4())


def digest(obj: Any) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    return hashlib.sha256(dumps(obj).encode()).hexdigest()


def to_str(self: Any, **attrs) -> str:
    name = type(self).__name__
    attrs = ", ".join(f"{name}={value}" for name, value in attrs.items())
    return f"{name}({attrs})"
