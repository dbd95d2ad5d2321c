"""Command-line front end.

Subcommands: keygen, encrypt, pyramid, decrypt, extract, compare, certify,
run-all.  Settings come from (in order of precedence) command-line flags, a
flat key=value config file (--config), and built-in defaults.  All randomness
derives from the single configured seed.

Exit codes: 0 success, 2 config, 3 io, 4 bounds, 5 decrypt-failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds, fhe, keypoints, pipeline, reference, serial
from .errors import EXIT_CODES, BoundsError, CsurfError, FormatError, InvalidParams
from .geometry import PyramidConfig
from .params import FheParams, RationalParams
from .pgm import load_pgm

DEFAULTS = {
    "backend": "gsw",
    "q": 256**7,
    "n": 10,
    "sigma": 1,
    "V": 10000,
    "octaves": 3,
    "layers": 4,
    "threshold": keypoints.DEFAULT_THRESHOLD,
    "radius": keypoints.DEFAULT_MATCH_RADIUS,
    "refresh_rows": 4,
    "workers": 1,
    "seed": 0,
    "out_dir": "out",
}

_INT_KEYS = {"q", "n", "sigma", "V", "octaves", "layers", "refresh_rows", "workers", "seed"}
_FLOAT_KEYS = {"threshold", "radius"}


def read_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    return values


class Settings:
    """Merged defaults < config file < explicit flags."""

    def __init__(self, args: argparse.Namespace):
        merged = dict(DEFAULTS)
        if getattr(args, "config", None):
            merged.update(read_config_file(args.config))
        for key in list(merged) + ["image", "sk", "pk", "infile", "out", "ref", "enc",
                                   "pyramid_csv", "reference", "unsafe_skip_certify"]:
            flag = getattr(args, key, None)
            if flag is not None:
                merged[key] = flag
        self._values = merged

    def __getattr__(self, key):
        try:
            return self._values[key]
        except KeyError:
            return None

    def fhe_params(self) -> FheParams:
        label = "toy" if (self.q, self.n, self.sigma) == (256**7, 10, 1) else "custom"
        return FheParams(q=self.q, n=self.n, sigma=self.sigma, security_label=label)

    def pyramid_config(self) -> PyramidConfig:
        return PyramidConfig(octaves=self.octaves, layers=self.layers)

    def out_dir(self) -> Path:
        path = Path(self._values["out_dir"])
        path.mkdir(parents=True, exist_ok=True)
        return path

    def path_or_default(self, key: str, default_name: str) -> Path:
        value = self._values.get(key)
        return Path(value) if value else self.out_dir() / default_name


def _require_file(path: Path, hint: str) -> Path:
    if not Path(path).is_file():
        raise FormatError(f"missing {hint}: {path} (run the producing step first)")
    return Path(path)


def _certify_gate(cfg: Settings, B: int, m: int, n: int):
    report = bounds.check_theorem(cfg.q, cfg.V, B, m, n)
    if not report.passed:
        if cfg.unsafe_skip_certify:
            print("UNSAFE: certification failed but --unsafe-skip-certify is set",
                  file=sys.stderr)
            return
        raise BoundsError(
            "modulus certification failed; re-run `csurf certify` for details "
            "or pass --unsafe-skip-certify to proceed anyway"
        )


# ---------------------------------------------------------------------------
# subcommands


def cmd_keygen(cfg: Settings) -> int:
    params = cfg.fhe_params()
    sk, pk = fhe.keygen(params, seed=cfg.seed, backend=cfg.backend)
    out = cfg.out_dir()
    serial.save_secret_key(out / "sk.bin", sk)
    serial.save_public_key(out / "pk.bin", pk)
    print(f"wrote {out/'sk.bin'} and {out/'pk.bin'} "
          f"(backend={cfg.backend}, q={params.q}, n={params.n}, N={params.N})")
    return 0


def cmd_encrypt(cfg: Settings) -> int:
    if not cfg.image:
        raise InvalidParams("encrypt needs --image")
    img = load_pgm(_require_file(cfg.image, "input image"))
    pk = serial.load_public_key(_require_file(cfg.path_or_default("pk", "pk.bin"), "public key"))
    rng = np.random.default_rng(cfg.seed)
    enc = pipeline.encrypt_image(pk, img, rng)
    out = cfg.path_or_default("out", "image.enc")
    serial.save_encrypted_image(out, enc)
    print(f"wrote {out} ({img.height}x{img.width}, backend={pk.backend})")
    return 0


def cmd_pyramid(cfg: Settings) -> int:
    pk = serial.load_public_key(_require_file(cfg.path_or_default("pk", "pk.bin"), "public key"))
    enc = serial.load_encrypted_image(
        _require_file(cfg.path_or_default("infile", "image.enc"), "encrypted image"),
        pk.params,
    )
    RationalParams(V=cfg.V, q=pk.params.q)
    _certify_gate(cfg, enc.B, enc.m, enc.n)
    service = None
    if pk.backend == fhe.GSW:
        sk_path = cfg.path_or_default("sk", "sk.bin")
        if cfg.refresh_rows and Path(sk_path).is_file():
            sk = serial.load_secret_key(sk_path)
            service = fhe.RefreshService(sk, pk, seed=cfg.seed + 1)
        elif cfg.refresh_rows:
            raise FormatError(
                f"missing secret key for the refresh boundary: {sk_path} "
                "(pass --refresh-rows 0 to run without refresh)"
            )
    policy = pipeline.RefreshPolicy(
        row_interval=cfg.refresh_rows or None,
        final_refresh=bool(cfg.refresh_rows),
    )
    integral = pipeline.integral_image(enc, refresh=service, policy=policy)
    pyr = pipeline.build_pyramid(integral, cfg.pyramid_config(), cfg.V, workers=cfg.workers)
    out = cfg.path_or_default("out", "pyramid.enc")
    serial.save_pyramid(out, pyr)
    points = sum(
        1 for g in pyr.grids.values() for row in g for cell in row if cell is not None
    )
    print(f"wrote {out} ({points} pyramid points, V={cfg.V})")
    return 0


def cmd_decrypt(cfg: Settings) -> int:
    sk = serial.load_secret_key(_require_file(cfg.path_or_default("sk", "sk.bin"), "secret key"))
    pyr = serial.load_pyramid(
        _require_file(cfg.path_or_default("infile", "pyramid.enc"), "encrypted pyramid"),
        sk.params,
    )
    dec = pipeline.decrypt_pyramid(sk, pyr)
    out = cfg.path_or_default("out", "pyramid.csv")
    pipeline.write_pyramid_csv(out, dec)
    observed = dec.max_observed()
    print(f"wrote {out} (max |numerator| {observed['max_abs_numerator']}, "
          f"max denominator {observed['max_denominator']})")
    return 0


def cmd_extract(cfg: Settings) -> int:
    config = cfg.pyramid_config()
    if cfg.reference:
        if not cfg.image:
            raise InvalidParams("extract --reference needs --image")
        img = load_pgm(_require_file(cfg.image, "input image"))
        pyr = reference.reference_pyramid(img, config)
        default_out = "keypoints_reference.csv"
    else:
        csv_path = cfg.path_or_default("pyramid_csv", "pyramid.csv")
        if not cfg.image:
            raise InvalidParams("extract needs --image for the pyramid dimensions")
        img = load_pgm(_require_file(cfg.image, "input image"))
        pyr = pipeline.read_pyramid_csv(
            _require_file(csv_path, "decrypted pyramid CSV"), config, img.height, img.width
        )
        default_out = "keypoints.csv"
    found = keypoints.extract_keypoints(pyr, cfg.threshold)
    out = cfg.path_or_default("out", default_out)
    keypoints.write_keypoints_csv(out, found)
    print(f"wrote {out} ({len(found)} keypoints, threshold={cfg.threshold})")
    return 0


def cmd_compare(cfg: Settings) -> int:
    ref = keypoints.read_keypoints_csv(
        _require_file(cfg.path_or_default("ref", "keypoints_reference.csv"), "reference keypoints")
    )
    enc = keypoints.read_keypoints_csv(
        _require_file(cfg.path_or_default("enc", "keypoints.csv"), "keypoints")
    )
    stats = keypoints.compare_keypoints(ref, enc, cfg.radius)
    text = keypoints.render_stats(
        {
            "matched": stats.matched,
            "unmatched_reference": stats.unmatched_ref,
            "unmatched_encrypted": stats.unmatched_enc,
            "agreement": stats.agreement,
        }
    )
    out = cfg.path_or_default("out", "compare.txt")
    Path(out).write_text(text)
    print(text, end="")
    return 0


def cmd_certify(cfg: Settings) -> int:
    B, m, n = 255, 64, 64
    if cfg.image:
        img = load_pgm(_require_file(cfg.image, "input image"))
        B, m, n = img.B, img.height, img.width
    report = bounds.check_theorem(cfg.q, cfg.V, B, m, n)
    print(report.render())
    print(report.lines(), end="")
    out = cfg.out_dir() / "certify.txt"
    out.write_text(report.render() + report.lines())
    if not report.passed:
        raise BoundsError("certification failed (see report above)")
    return 0


def cmd_run_all(cfg: Settings) -> int:
    if not cfg.image:
        raise InvalidParams("run-all needs --image")
    img = load_pgm(_require_file(cfg.image, "input image"))
    config = cfg.pyramid_config()
    params = cfg.fhe_params()
    RationalParams(V=cfg.V, q=params.q)
    _certify_gate(cfg, img.B, img.height, img.width)
    out = cfg.out_dir()
    timings = {}

    def timed(label, fn):
        t0 = time.time()
        result = fn()
        timings[label] = time.time() - t0
        return result

    sk, pk = timed("keygen", lambda: fhe.keygen(params, seed=cfg.seed, backend=cfg.backend))
    serial.save_secret_key(out / "sk.bin", sk)
    serial.save_public_key(out / "pk.bin", pk)

    rng = np.random.default_rng(cfg.seed)
    enc = timed("encrypt", lambda: pipeline.encrypt_image(pk, img, rng))
    service = fhe.RefreshService(sk, pk, seed=cfg.seed + 1) if cfg.backend == fhe.GSW else None
    policy = pipeline.RefreshPolicy(
        row_interval=cfg.refresh_rows or None, final_refresh=bool(cfg.refresh_rows)
    )
    integral = timed("integral", lambda: pipeline.integral_image(enc, service, policy))
    pyr = timed(
        "pyramid",
        lambda: pipeline.build_pyramid(integral, config, cfg.V, workers=cfg.workers),
    )
    serial.save_pyramid(out / "pyramid.enc", pyr)
    dec = timed("decrypt", lambda: pipeline.decrypt_pyramid(sk, pyr))
    pipeline.write_pyramid_csv(out / "pyramid.csv", dec)

    dec_float = dec.to_float()
    ref_pyr = reference.reference_pyramid(img, config)
    enc_kp = keypoints.extract_keypoints(dec_float, cfg.threshold)
    ref_kp = keypoints.extract_keypoints(ref_pyr, cfg.threshold)
    keypoints.write_keypoints_csv(out / "keypoints.csv", enc_kp)
    keypoints.write_keypoints_csv(out / "keypoints_reference.csv", ref_kp)
    stats = keypoints.compare_keypoints(ref_kp, enc_kp, cfg.radius)

    # error vs the double-precision reference, against the worst-case envelope
    delta = 1.0 / (2.0 * cfg.V)
    det_bound, trace_bound = bounds.worst_case_error_bound(
        delta, img.B, img.height, img.width
    )
    max_det_err = max_trace_err = 0.0
    violations = 0
    for key, (det_grid, trace_grid) in dec_float.grids.items():
        ref_det, ref_trace = ref_pyr.grids[key]
        both = ~(np.isnan(det_grid) | np.isnan(ref_det))
        if both.any():
            det_err = np.abs(det_grid - ref_det)[both]
            trace_err = np.abs(trace_grid - ref_trace)[both]
            max_det_err = max(max_det_err, float(det_err.max()))
            max_trace_err = max(max_trace_err, float(trace_err.max()))
            violations += int((det_err > det_bound).sum())
            violations += int((trace_err > trace_bound).sum())

    observed = dec.max_observed()
    summary = {
        "image": str(cfg.image),
        "backend": cfg.backend,
        "seed": cfg.seed,
        "q": params.q,
        "V": cfg.V,
        **{f"time_{k}_s": round(v, 3) for k, v in timings.items()},
        "refresh_count": service.refresh_count if service else 0,
        "max_abs_numerator": observed["max_abs_numerator"],
        "numerator_bound": bounds.numerator_bound(img.B, img.height, img.width),
        "max_denominator": observed["max_denominator"],
        "denominator_bound": bounds.denominator_bound(cfg.V),
        "max_det_error": max_det_err,
        "det_error_bound": det_bound,
        "max_trace_error": max_trace_err,
        "trace_error_bound": trace_bound,
        "error_bound_violations": violations,
        "keypoints_reference": len(ref_kp),
        "keypoints_encrypted": len(enc_kp),
        "matched": stats.matched,
        "agreement": stats.agreement,
    }
    text = keypoints.render_stats(summary)
    (out / "summary.txt").write_text(text)
    print(text, end="")

    # dump intensity maps around the first unmatched keypoint, if any
    if stats.unmatched_ref or stats.unmatched_enc:
        quant_pyr = dec_float
        matched_enc = {
            (k.x, k.y, k.octave, k.layer) for k in enc_kp
        } & {(k.x, k.y, k.octave, k.layer) for k in ref_kp}
        oddballs = [k for k in ref_kp + enc_kp
                    if (k.x, k.y, k.octave, k.layer) not in matched_enc]
        if oddballs:
            kp = oddballs[0]
            for label, pyr_f in (("reference", ref_pyr), ("decrypted", quant_pyr)):
                for layer in {kp.layer, max(kp.layer - 1, 0)}:
                    try:
                        grid = keypoints.intensity_map(
                            pyr_f, kp.octave, layer, (kp.x, kp.y), radius=2
                        )
                    except CsurfError:
                        continue
                    keypoints.write_grid_csv(
                        out / f"intensity_{label}_o{kp.octave}_l{layer}.csv", grid
                    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csurf",
        description="Scale-space keypoint detection over encrypted images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--image", help="input PGM image (binary P5)")
        p.add_argument("--backend", choices=[fhe.GSW, fhe.MIRROR])
        p.add_argument("--q", type=int, help="ring modulus")
        p.add_argument("--n", type=int, help="lattice dimension")
        p.add_argument("--sigma", type=int, help="encryption noise magnitude")
        p.add_argument("--V", type=int, help="base denominator for constants")
        p.add_argument("--octaves", type=int)
        p.add_argument("--layers", type=int)
        p.add_argument("--threshold", type=float, help="keypoint detection threshold")
        p.add_argument("--radius", type=float, help="keypoint matching radius")
        p.add_argument("--refresh-rows", type=int, dest="refresh_rows",
                       help="refresh every R integral rows (0 disables)")
        p.add_argument("--workers", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--unsafe-skip-certify", action="store_const", const=True,
                       dest="unsafe_skip_certify")
        p.add_argument("--sk", help="secret key file")
        p.add_argument("--pk", help="public key file")
        p.add_argument("--in", dest="infile", help="input file for this step")
        p.add_argument("--out", help="output file for this step")
        return p

    add("keygen", cmd_keygen, "generate and store a key pair")
    add("encrypt", cmd_encrypt, "encrypt a PGM image pixel-wise")
    add("pyramid", cmd_pyramid, "build the encrypted response pyramid")
    add("decrypt", cmd_decrypt, "decrypt a pyramid to exact rationals (CSV)")
    p_extract = add("extract", cmd_extract, "extract keypoints from a pyramid")
    p_extract.add_argument("--pyramid-csv", dest="pyramid_csv",
                           help="decrypted pyramid CSV to extract from")
    p_extract.add_argument("--reference", action="store_const", const=True,
                           help="extract from the cleartext reference pyramid")
    p_compare = add("compare", cmd_compare, "compare two keypoint CSVs")
    p_compare.add_argument("--ref", help="reference keypoint CSV")
    p_compare.add_argument("--enc", help="encrypted-run keypoint CSV")
    add("certify", cmd_certify, "check the modulus against both bounds")
    add("run-all", cmd_run_all, "full pipeline plus comparison summary")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(Settings(args))
    except CsurfError as exc:
        print(f"error: category={exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    except OSError as exc:
        print(f"error: category=io: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]


if __name__ == "__main__":
    sys.exit(main())
