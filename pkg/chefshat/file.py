"""utility for reading and writing result files"""


__all__ = [
    "read_dicts_from_csv",
    "write_dicts_to_csv",
    "mkdirp",
    "local_file",
]

import os
import csv


def write_dicts_to_csv(filename, fieldnames, rows, append=False):
    """
    write rows (dicts) to csv with a fixed header, lines end with \\n so the
    output is byte-stable across platforms. With `append` the rows go after
    those already in the file and no header is written.
    """
    with open(filename, "a" if append else "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        if not append:
            writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_dicts_from_csv(filename, fieldnames=None):
    """
    read a csv file written by `write_dicts_to_csv`, checking the header when
    `fieldnames` is given
    """
    with open(filename, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if fieldnames is not None and reader.fieldnames != list(fieldnames):
            raise ValueError(
                f"{filename}: unexpected header {reader.fieldnames}, "
                f"expected {list(fieldnames)}"
            )
        return list(reader)


def mkdirp(path):
    """mkdir -p"""
    os.makedirs(path, exist_ok=True)
    return path


def local_file(basefile, filename):
    dir_path = os.path.dirname(os.path.realpath(basefile))
    return os.path.join(dir_path, filename)
