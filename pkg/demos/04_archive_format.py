"""Poke at the tensor archive format with a hex dump and a corruption test.

An archive is: 4 magic bytes, a little-endian u64 header length, a JSON
header mapping names to dtype/shape/offset/len, then the raw row-major
float32 payload.  Names are written in sorted order and the JSON is
canonical, so writing the same tensors always produces the same bytes.
"""

import tempfile
from pathlib import Path

import numpy as np

from zprune import FormatError, read_archive, write_archive


def main():
    tensors = {
        "layers/0/weight": np.arange(6, dtype=np.float32).reshape(2, 3),
        "bias_like": np.array([[0.5, -0.5]], dtype=np.float32),
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "demo.ztf"
        write_archive(tensors, path)
        raw = path.read_bytes()

        print(f"archive size: {len(raw)} bytes")
        print(f"magic:        {raw[:4]!r}")
        header_len = int.from_bytes(raw[4:12], "little")
        print(f"header bytes: {header_len}")
        print(f"header JSON:  {raw[12:12 + header_len].decode()}")
        payload = raw[12 + header_len:]
        print(f"payload:      {len(payload)} bytes "
              f"({len(payload) // 4} float32 values)")

        back = read_archive(path)
        ok = all(np.array_equal(back[k], v) for k, v in tensors.items())
        print(f"round-trip bitwise equal: {ok}")

        write_archive(tensors, Path(tmp) / "again.ztf")
        print(f"same tensors, same bytes: {(Path(tmp) / 'again.ztf').read_bytes() == raw}")

        # chop the last 4 payload bytes: the reader must refuse, not truncate
        clipped = Path(tmp) / "clipped.ztf"
        clipped.write_bytes(raw[:-4])
        try:
            read_archive(clipped)
            print("corruption NOT caught (bug)")
        except FormatError as e:
            print(f"truncation rejected: {e}")


if __name__ == "__main__":
    main()
