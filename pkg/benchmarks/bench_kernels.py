"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--number N]
"""

import argparse
import random
import timeit

from evstream import _pykernels

try:
    from evstream import _ckernels
except ImportError:
    _ckernels = None


def cases(k):
    rng = random.Random(0)
    payload = rng.randbytes(512)
    frame = k.encode_event(b"bench", 42, 123456789, payload)
    stream = frame * 64
    body = frame[8:]
    subject = b"score:game:" + b"x" * 40 + b":final"
    return {
        "glob_match literal": lambda: k.glob_match(b"score:game:final", b"score:game:final"),
        "glob_match stars": lambda: k.glob_match(b"score:*:*x?:fin*", subject),
        "split_frames x64": lambda: k.split_frames(stream, 1 << 20),
        "encode_event 512B": lambda: k.encode_event(b"bench", 42, 123456789, payload),
        "decode_event 512B": lambda: k.decode_event(body),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--number", type=int, default=20000)
    args = ap.parse_args()
    impls = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    results = {name: {c: min(timeit.repeat(fn, number=args.number, repeat=3)) / args.number * 1e9
                      for c, fn in cases(mod).items()} for name, mod in impls}
    names = [n for n, _ in impls]
    print(f"{'kernel':<22}" + "".join(f"{n + ' ns':>14}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for c in results["python"]:
        row = f"{c:<22}" + "".join(f"{results[n][c]:>14.0f}" for n in names)
        if len(names) > 1:
            row += f"{results['python'][c] / results['cython'][c]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
