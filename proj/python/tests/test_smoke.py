#!/usr/bin/env python3
"""CLI smoke test: train a tiny model, stylize, eval, bench.

The binary under test comes from the UMFA_CLI environment variable.
"""

import json
import os
import struct
import subprocess
import sys
import tempfile
import zlib


def write_ppm(path, w, h, seed):
    rnd = zlib.crc32(str(seed).encode())
    body = bytearray()
    for i in range(w * h * 3):
        rnd = (rnd * 6364136223846793005 + 1442695040888963407) % (1 << 64)
        body.append((rnd >> 33) % 256)
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(bytes(body))


def run(cli, *args, expect=0):
    proc = subprocess.run([cli, *args], capture_output=True, text=True)
    if proc.returncode != expect:
        sys.stderr.write(proc.stdout + proc.stderr)
        raise SystemExit(
            f"{' '.join(args)} exited {proc.returncode}, expected {expect}"
        )
    return proc


def main():
    cli = os.environ.get("UMFA_CLI")
    if not cli:
        raise SystemExit("UMFA_CLI is not set")

    with tempfile.TemporaryDirectory() as tmp:
        data = os.path.join(tmp, "data")
        os.mkdir(data)
        for i in range(2):
            write_ppm(os.path.join(data, f"img{i}.ppm"), 36, 36, i)

        ckpt = os.path.join(tmp, "model.json")
        log = os.path.join(tmp, "train.log")
        run(
            cli, "train", "--data", data, "--out", ckpt,
            "--epochs", "2", "--size", "32", "--stem-width", "4",
            "--lr", "1e-3", "--seed", "7", "--log", log,
        )
        assert os.path.exists(ckpt), "missing checkpoint manifest"
        assert os.path.exists(ckpt + ".blob"), "missing checkpoint blob"
        with open(log) as f:
            lines = [json.loads(line) for line in f if line.strip()]
        steps = [l for l in lines if "step" in l]
        assert len(steps) == 2, f"expected 2 training steps, got {len(steps)}"
        assert all("total" in s for s in steps)

        content32 = os.path.join(tmp, "content32.ppm")
        style32 = os.path.join(tmp, "style32.ppm")
        write_ppm(content32, 32, 32, 10)
        write_ppm(style32, 32, 32, 11)

        out_img = os.path.join(tmp, "out.png")
        run(
            cli, "stylize", "--model", ckpt,
            "--content", content32, "--style", style32,
            "--out", out_img,
        )
        with open(out_img, "rb") as f:
            assert f.read(8) == b"\x89PNG\r\n\x1a\n", "stylize did not write a PNG"

        # Bad --size must fail with the runtime-error exit code.
        run(
            cli, "stylize", "--model", ckpt,
            "--content", content32, "--style", style32,
            "--out", out_img, "--size", "30",
            expect=1,
        )

        proc = run(
            cli, "eval",
            "--content", content32, "--style", style32,
            "--output", out_img, "--seed", "7",
        )
        scores = json.loads(proc.stdout)
        assert "ssim" in scores and "gram_loss" in scores

        proc = run(cli, "bench", "--model", ckpt, "--sizes", "16,32", "--seed", "1")
        rows = json.loads(proc.stdout.strip().splitlines()[-1])
        assert [r["size"] for r in rows] == [16, 32]
        assert all(r["median_s"] > 0 for r in rows)

        # Unknown flags are a usage error (exit 2).
        run(cli, "train", "--bogus", expect=2)
        run(cli, "--help", expect=0)

    print("smoke ok")


if __name__ == "__main__":
    main()
