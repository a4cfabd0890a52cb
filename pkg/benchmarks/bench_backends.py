"""Compare the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_backends.py [--end-to-end]
"""
import argparse

from sppdm.bench import end_to_end, format_table, kernel_timings


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()
    print(format_table(kernel_timings(repeat=args.repeat)))
    if args.end_to_end:
        for name, secs in end_to_end().items():
            print(f"end-to-end 2000-iteration desk run, {name}: {secs:.2f} s")


if __name__ == "__main__":
    main()
