"""Command line front end: simulate, design, render, evaluate, pipeline.

Each stage reads and writes one output directory. Artifacts carry the run
digest (a hash of the resolved config plus any input files) both embedded
and in manifest.json, so a stage refuses to consume artifacts left over
from a different configuration instead of producing quietly wrong output.

Stage failures exit with a stage-specific code: 1 config, 2 simulate,
3 design, 4 render, 5 evaluate.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .containers import (canonical_json, read_binaural_spectrogram, read_sh_signal,
                         read_wav, update_manifest, verify_artifacts,
                         write_binaural_spectrogram, write_json, write_sh_signal,
                         write_wav)
from .evaluate import (EARS, NmseReport, band_summary, broadband, compare, nmse,
                       write_comparison, write_report)
from .geometry import FrequencyGrid
from .hrtf import evaluate_sh, flat_hrtf, load_hrtf, point_receiver_hrtf, sh_fit
from .render import (apply_filterbank, BinauralSpectrogram, decompose_measurement,
                     render_reference)
from .simulate import add_noise, render_mic_signals, render_reference_plane_waves, \
    scene_statistics
from .solvers import SolverConfig, design_filterbank, load_filterbank, \
    save_filterbank
from .sph import spiral_grid
from .stft import Spectrogram, istft, stft

EXIT_CODES = {"config": 1, "simulate": 2, "design": 3, "render": 4, "evaluate": 5}

SIM_ARTIFACTS = ("mics_full.wav", "mics_direct.wav",
                 "reference_sh.bsma", "reference_direct_sh.bsma")
BANK_ARTIFACTS = ("bank_direct.bsmf", "bank_reverb.bsmf")
SPECTRO_ARTIFACTS = ("bsm_standard.bsmg", "bsm_decomposed.bsmg",
                     "component_direct.bsmg", "component_reverb.bsmg",
                     "reference.bsmg", "reference_direct.bsmg")
REPORT_ARTIFACTS = ("nmse_direct.csv", "nmse_reverb.csv", "nmse_standard.csv",
                    "nmse_decomposed.csv", "comparison.csv", "verdict.json")

# binaural archive tag -> STFT origin tag it was built from
_TAG_ORIGIN = {"reference": "p", "reference-direct": "p",
               "reference-reverb": "p"}


def _grid(cfg, stft_cfg):
    return FrequencyGrid.from_fft(cfg["sample_rate"], stft_cfg.fft_size)


def _hrtf_coeffs(cfg, grid):
    """SH expansion of the configured HRTF model."""
    design = cfg["design"]
    kind = design["hrtf_kind"]
    if kind == "file":
        base = load_hrtf(design["hrtf_file"], fft_size=(grid.num_bins - 1) * 2)
        if int(base.sample_rate) != cfg["sample_rate"]:
            raise ValueError(f"HRTF sample rate {base.sample_rate} does not "
                             f"match the run sample rate {cfg['sample_rate']}")
    else:
        measured_on = spiral_grid(design["hrtf_grid_size"])
        if kind == "flat":
            base = flat_hrtf(grid, measured_on)
        else:
            base = point_receiver_hrtf(design["hrtf_ear_offset"], grid,
                                       measured_on)
    return sh_fit(base, design["hrtf_sh_order"])


def run_simulate(cfg, out_dir):
    scene_cfg = cfg["scene"]
    digest = cfgmod.run_digest(cfg)
    scene = cfgmod.build_scene(cfg)
    max_order = scene_cfg["max_reflection_order"]
    rir_s = scene_cfg["rir_seconds"]
    fs = cfg["sample_rate"]

    stats = scene_statistics(scene, max_order, rir_s)
    stats["scene_digest"] = digest
    write_json(out_dir / "scene_stats.json", stats)

    x, x_d, _ = render_mic_signals(scene, max_order, rir_s)
    if scene_cfg["noise_snr_db"] is not None:
        # sensor noise belongs to the measurement; the oracle direct
        # component stays clean
        x = add_noise(x, cfgmod.snr_linear(scene_cfg["noise_snr_db"]),
                      seed=scene.seed + 1)
    write_wav(out_dir / "mics_full.wav", x, fs, digest)
    write_wav(out_dir / "mics_direct.wav", x_d, fs, digest)

    order = cfg["design"]["reference_order"]
    for name, direct_only in (("reference_sh.bsma", False),
                              ("reference_direct_sh.bsma", True)):
        sh = render_reference_plane_waves(scene, order, max_order, rir_s,
                                          direct_only=direct_only,
                                          out_dtype=np.complex64)
        write_sh_signal(out_dir / name, sh, fs, order, digest)
        del sh

    entries = {n: out_dir / n for n in SIM_ARTIFACTS + ("scene_stats.json",)}
    update_manifest(out_dir, entries, digest)
    t60 = stats["t60_s"]
    t60_text = f"{t60:.3f} s" if t60 is not None else "n/a"
    drr = stats["drr_db"]
    drr_text = f"{drr:+.2f} dB" if drr is not None else "anechoic"
    print(f"simulate: {stats['image_count']} images, "
          f"drr {drr_text}, t60 {t60_text}")
    return stats


def run_design(cfg, out_dir):
    digest = cfgmod.run_digest(cfg)
    design = cfg["design"]
    stft_cfg = cfgmod.build_stft_config(cfg)
    grid = _grid(cfg, stft_cfg)
    geom = cfgmod.build_array(cfg)
    coeffs = _hrtf_coeffs(cfg, grid)

    direct_doas = [cfgmod.direct_direction(cfg)]
    reverb_doas = spiral_grid(design["reverb_grid_size"])

    # the direct bank serves a single known DOA where the plain LS solve is
    # already phase-exact, so MagLS is reserved for the reverberant bank
    direct_cfg = SolverConfig(snr=cfgmod.snr_linear(design["direct_snr_db"]),
                              magls_enabled=False)
    reverb_cfg = SolverConfig(snr=cfgmod.snr_linear(design["reverb_snr_db"]),
                              magls_enabled=design["magls_enabled"],
                              magls_cutoff_hz=design["magls_cutoff_hz"])

    bank_d = design_filterbank(geom, grid, direct_doas,
                               evaluate_sh(coeffs, direct_doas),
                               direct_cfg, tag="direct")
    bank_r = design_filterbank(geom, grid, reverb_doas,
                               evaluate_sh(coeffs, reverb_doas),
                               reverb_cfg, tag="reverberant")
    save_filterbank(out_dir / "bank_direct.bsmf", bank_d, digest)
    save_filterbank(out_dir / "bank_reverb.bsmf", bank_r, digest)
    update_manifest(out_dir, {n: out_dir / n for n in BANK_ARTIFACTS}, digest)
    print(f"design: {geom.num_mics} mics, {grid.num_bins} bins, "
          f"{len(reverb_doas)} coverage directions")
    return bank_d, bank_r


def _load_bank(path, expected_digest):
    bank, digest = load_filterbank(path)
    if digest != expected_digest:
        raise ValueError(f"{path}: bank digest {digest} does not match the "
                         f"current config ({expected_digest})")
    return bank


def run_render(cfg, out_dir):
    digest = cfgmod.run_digest(cfg)
    verify_artifacts(out_dir, SIM_ARTIFACTS + BANK_ARTIFACTS, digest, "render")
    fs = cfg["sample_rate"]
    stft_cfg = cfgmod.build_stft_config(cfg)

    def load_mics(name, origin):
        data, rate, embedded = read_wav(out_dir / name)
        if rate != fs or embedded != digest:
            raise ValueError(f"{name}: stale or foreign recording")
        return stft(np.asarray(data, float), stft_cfg, origin=origin)

    x = load_mics("mics_full.wav", "x")
    x_d = load_mics("mics_direct.wav", "x_d")
    x_r = decompose_measurement(x, x_d)

    bank_d = _load_bank(out_dir / "bank_direct.bsmf", digest)
    bank_r = _load_bank(out_dir / "bank_reverb.bsmf", digest)

    results = {
        "component_direct.bsmg": apply_filterbank(bank_d, x_d),
        "component_reverb.bsmg": apply_filterbank(bank_r, x_r),
        "bsm_standard.bsmg": apply_filterbank(bank_r, x),
    }
    results["bsm_decomposed.bsmg"] = (results["component_direct.bsmg"]
                                      + results["component_reverb.bsmg"])

    coeffs = _hrtf_coeffs(cfg, _grid(cfg, stft_cfg))
    for name, src, tag in (("reference.bsmg", "reference_sh.bsma", "reference"),
                           ("reference_direct.bsmg", "reference_direct_sh.bsma",
                            "reference-direct")):
        sh, rate, _, embedded = read_sh_signal(out_dir / src)
        if rate != fs or embedded != digest:
            raise ValueError(f"{src}: stale or foreign SH signal")
        results[name] = render_reference(sh, coeffs, stft_cfg, tag=tag)
        del sh

    entries = {}
    for name, bs in results.items():
        write_binaural_spectrogram(out_dir / name, bs.ear("left"),
                                   bs.ear("right"), stft_cfg, bs.tag, digest)
        entries[name] = out_dir / name

    wav_of = {"render_standard.wav": "bsm_standard.bsmg",
              "render_decomposed.wav": "bsm_decomposed.bsmg",
              "reference.wav": "reference.bsmg",
              "reference_direct.wav": "reference_direct.bsmg"}
    for wav_name, spec_name in wav_of.items():
        bs = results[spec_name]
        audio = np.hstack([istft(bs.left), istft(bs.right)])
        write_wav(out_dir / wav_name, audio, fs, digest)
        entries[wav_name] = out_dir / wav_name

    update_manifest(out_dir, entries, digest)
    print(f"render: {len(entries)} artifacts, "
          f"{results['reference.bsmg'].num_frames} frames")
    return results


def _read_binaural(path, stft_cfg, expected_digest):
    left, right, meta = read_binaural_spectrogram(path)
    if meta["digest"] != expected_digest:
        raise ValueError(f"{path}: digest {meta['digest']} does not match the "
                         f"current config ({expected_digest})")
    same = (meta["sample_rate"] == int(stft_cfg.sample_rate)
            and meta["window_length"] == stft_cfg.window_length
            and meta["hop"] == stft_cfg.hop
            and meta["fft_size"] == stft_cfg.fft_size)
    if not same:
        raise ValueError(f"{path}: STFT parameters differ from the config")
    origin = _TAG_ORIGIN.get(meta["tag"], "z")
    sides = [Spectrogram(data=side[None], config=stft_cfg, origin=origin)
             for side in (left, right)]
    return BinauralSpectrogram(left=sides[0], right=sides[1], tag=meta["tag"])


def near_ear(cfg):
    """Which ear faces the direct source (ears sit on the +/- y axis)."""
    return "left" if np.sin(cfg["design"]["direct_doa"][1]) >= 0 else "right"


def run_evaluate(cfg, out_dir, gnuplot=False):
    digest = cfgmod.run_digest(cfg)
    verify_artifacts(out_dir, SPECTRO_ARTIFACTS, digest, "evaluate")
    stft_cfg = cfgmod.build_stft_config(cfg)
    trim = cfg["evaluation"]["frame_trim"]

    spec = {name: _read_binaural(out_dir / name, stft_cfg, digest)
            for name in SPECTRO_ARTIFACTS}
    ref = spec["reference.bsmg"]
    ref_direct = spec["reference_direct.bsmg"]
    ref_reverb = ref - ref_direct

    meta = {"scene_digest": digest}
    try:
        rep_reverb = nmse(spec["component_reverb.bsmg"], ref_reverb, trim, meta)
    except ValueError as err:
        if "all-zero reference" not in str(err):
            raise
        # anechoic scene: there is no reverberant field to compare
        # against, so flag every bin instead of failing the stage
        freqs = np.fft.rfftfreq(stft_cfg.fft_size, 1.0 / stft_cfg.sample_rate)
        nbins = freqs.size
        rep_reverb = NmseReport(
            frequencies=freqs,
            linear={e: np.full(nbins, np.nan) for e in EARS},
            ref_energy={e: np.zeros(nbins) for e in EARS},
            flags={e: np.ones(nbins, bool) for e in EARS},
            frame_range=(trim, ref.num_frames - trim),
            metadata={**meta, "est_tag": spec["component_reverb.bsmg"].tag,
                      "ref_tag": ref_reverb.tag})
    reports = {
        "direct": nmse(spec["component_direct.bsmg"], ref_direct, trim, meta),
        "reverb": rep_reverb,
        "standard": nmse(spec["bsm_standard.bsmg"], ref, trim, meta),
        "decomposed": nmse(spec["bsm_decomposed.bsmg"], ref, trim, meta),
    }
    entries = {}
    for name, report in reports.items():
        fname = f"nmse_{name}.csv"
        write_report(out_dir / fname, report)
        entries[fname] = out_dir / fname
        if gnuplot:
            write_report(out_dir / f"nmse_{name}.dat", report, gnuplot=True)

    cmp_result = compare(reports["decomposed"], reports["standard"])
    write_comparison(out_dir / "comparison.csv", cmp_result)
    entries["comparison.csv"] = out_dir / "comparison.csv"

    bands = cfgmod.eval_bands(cfg, nyquist=cfg["sample_rate"] / 2)
    band_dec = band_summary(reports["decomposed"], bands)
    band_std = band_summary(reports["standard"], bands)
    ear_near = near_ear(cfg)
    band_gain = {ear: (band_std[ear] - band_dec[ear]).tolist() for ear in EARS}
    verdict = {
        "scene_digest": digest,
        "broadband_nmse_db": {
            name: {ear: (None if rep.flags[ear].all()
                         else float(broadband(rep, ear))) for ear in EARS}
            for name, rep in reports.items()},
        "improvement_db": cmp_result["broadband_db"],
        "fraction_improved": cmp_result["fraction_improved"],
        "decomposed_beats_standard": bool(
            all(cmp_result["broadband_db"][ear] > 0.0 for ear in EARS)),
        "bands_hz": [[float(lo), float(hi)] for lo, hi in bands],
        "band_improvement_db": band_gain,
        "near_ear": ear_near,
        "near_ear_bands_improved_1db": int(
            sum(1 for g in band_gain[ear_near] if g >= 1.0)),
    }
    write_json(out_dir / "verdict.json", verdict)
    entries["verdict.json"] = out_dir / "verdict.json"
    update_manifest(out_dir, entries, digest)

    imp = cmp_result["broadband_db"]
    print(f"evaluate: decomposed vs standard {imp['left']:+.2f} dB left, "
          f"{imp['right']:+.2f} dB right")
    return verdict


def _stage_plan(command):
    if command == "pipeline":
        return ("simulate", "design", "render", "evaluate")
    return (command,)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="bsmrender",
        description="Binaural rendering from a microphone array, with "
                    "direct/reverberant decomposition and NMSE evaluation.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="YAML file overriding profile defaults")
    common.add_argument("--out", type=Path, required=True,
                        help="artifact directory")
    common.add_argument("--profile", choices=sorted(cfgmod.PROFILES),
                        default="desk", help="base parameter set")
    common.add_argument("--seed", type=int, default=None,
                        help="override scene.seed")
    common.add_argument("--dry-run", action="store_true",
                        help="print the resolved config and exit")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "room simulation: mic recordings and SH references",
        "design": "solve the direct and reverberant filter banks",
        "render": "apply banks and decode references to binaural signals",
        "evaluate": "NMSE reports and the decomposed-vs-standard verdict",
        "pipeline": "all four stages in order",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text)
        if name in ("evaluate", "pipeline"):
            sp.add_argument("--gnuplot", action="store_true",
                            help="also write whitespace-separated reports")
    args = parser.parse_args(argv)

    try:
        cfg = cfgmod.resolve(args.profile, args.config, args.seed)
        digest = cfgmod.run_digest(cfg)
    except (ValueError, OSError) as err:
        print(f"error [config]: {err}", file=sys.stderr)
        return EXIT_CODES["config"]

    if args.dry_run:
        print(canonical_json({"command": args.command, "digest": digest,
                              "config": cfg}))
        return 0

    args.out.mkdir(parents=True, exist_ok=True)
    runners = {
        "simulate": lambda: run_simulate(cfg, args.out),
        "design": lambda: run_design(cfg, args.out),
        "render": lambda: run_render(cfg, args.out),
        "evaluate": lambda: run_evaluate(cfg, args.out,
                                         getattr(args, "gnuplot", False)),
    }
    for stage in _stage_plan(args.command):
        try:
            runners[stage]()
        except (ValueError, RuntimeError, OSError) as err:
            print(f"error [{stage}]: {err}", file=sys.stderr)
            return EXIT_CODES[stage]
    return 0


if __name__ == "__main__":
    sys.exit(main())
