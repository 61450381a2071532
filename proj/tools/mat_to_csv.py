#!/usr/bin/env python3
"""Convert an ODDS-style .mat file (matrices X and y) into the CSV layout read by tricrlad."""

import argparse
import sys

import numpy as np
import scipy.io


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("mat", help="input .mat file with X (n x d) and y (n x 1, 1 = anomaly)")
    parser.add_argument("csv", help="output CSV path")
    parser.add_argument("--label-col", default="label")
    args = parser.parse_args()

    try:
        mat = scipy.io.loadmat(args.mat)
    except NotImplementedError:
        # MATLAB v7.3 files are HDF5 and store matrices transposed.
        import h5py

        with h5py.File(args.mat, "r") as f:
            mat = {k: np.array(f[k]).T for k in ("X", "y")}

    x = np.asarray(mat["X"], dtype=np.float64)
    y = np.asarray(mat["y"]).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        print(f"shape mismatch: X {x.shape}, y {y.shape}", file=sys.stderr)
        return 1
    if not np.isin(y, (0, 1)).all():
        print("y must be 0/1", file=sys.stderr)
        return 1

    header = ",".join([f"f{i}" for i in range(x.shape[1])] + [args.label_col])
    data = np.column_stack([x, y.astype(np.int64)])
    fmt = ["%.17g"] * x.shape[1] + ["%d"]
    np.savetxt(args.csv, data, delimiter=",", header=header, comments="", fmt=fmt)
    print(f"{args.csv}: {x.shape[0]} rows, {x.shape[1]} features, {int(y.sum())} anomalies")
    return 0


if __name__ == "__main__":
    sys.exit(main())
