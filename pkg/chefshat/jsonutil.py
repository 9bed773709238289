"""canonical json helpers for transcripts and weight files"""

import json


def json_dumps(obj, **kwargs):
    """
    Compact, key-sorted json, so equal objects always give equal bytes.

    >>> json_dumps({'b': 1, 'a': [1.5, None]})
    '{"a":[1.5,null],"b":1}'
    """
    kwargs.setdefault("sort_keys", True)
    kwargs.setdefault("separators", (",", ":"))
    return json.dumps(obj, default=str, **kwargs)


def json_load(path):
    """load json from a file name"""
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def json_dump(obj, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(json_dumps(obj))
        f.write("\n")


def write_jsonl(path, objs, append=False):
    """write one json object per line, returns the number of lines"""
    n = 0
    with open(path, "a" if append else "w", encoding="utf-8") as f:
        for obj in objs:
            f.write(json_dumps(obj))
            f.write("\n")
            n += 1
    return n


def read_jsonl(path):
    """
    yield the objects of a jsonl file, blank lines are skipped
    """
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: bad json line: {e}") from e


if __name__ == "__main__":
    import doctest

    doctest.testmod()
