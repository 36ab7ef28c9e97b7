#!/usr/bin/env python3
"""Wideband PESQ for pairs of 16 kHz mono WAV files.

Usage: pesq_score.py PAIRS_FILE
Each line of PAIRS_FILE is "<reference.wav>\t<degraded.wav>". One line is
printed per pair: the MOS-LQO score, or "error <message>".
"""
import sys
import wave

import numpy as np
from pesq import pesq


def read(path):
    with wave.open(path, "rb") as w:
        if w.getsampwidth() != 2 or w.getnchannels() != 1:
            raise ValueError(f"{path}: expected 16-bit mono")
        rate = w.getframerate()
        data = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2")
    return rate, data.astype(np.float32) / 32768.0


def main():
    if len(sys.argv) != 2:
        print(__doc__, file=sys.stderr)
        return 2
    with open(sys.argv[1]) as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            ref_path, deg_path = line.split("\t")
            try:
                rate, ref = read(ref_path)
                _, deg = read(deg_path)
                print(f"{pesq(rate, ref, deg, 'wb'):.6f}", flush=True)
            except Exception as e:  # report per pair, keep going
                print("error " + str(e).replace("\n", " "), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
