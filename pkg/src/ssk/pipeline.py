"""Batch pipeline shared by the CLI: dataset simulation, feature extraction,
separation and evaluation over a manifest."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import synth
from .dataset_io import (Manifest, SourceEntry, UtteranceEntry, atomic_write_bytes,
                         read_manifest, read_wav, write_features, write_manifest,
                         write_wav)
from .geometry import (DirectionGrid, MicArray, PairSelection, angle_difference,
                       circular_array, min_angle_difference)
from .metrics import BIN_LABELS, EvalRecord, EvalReport, aggregate, bin_index, si_sdr
from .room_sim import render_mixture, sample_scene
from .separation import (MaskKind, apply_mask, das_beamform, directional_mask,
                         oracle_mask)
from .spatial_features import (angle_feature, assemble_features, cos_sin_ipd,
                               das_filterbank, dpr, multichannel_stft,
                               nearest_direction)
from .spectral import StftConfig, build_kernel, hann_periodic, lps

ORACLE_METHODS = {"ibm": MaskKind.IBM, "irm": MaskKind.IRM, "ipsm": MaskKind.IPSM}
METHODS = tuple(ORACLE_METHODS) + ("heuristic", "das")


@dataclass(frozen=True)
class PipelineConfig:
    """Array, pair selection, direction grid and analysis configs used by
    every stage. ``pairs`` is None for single-mic arrays, where pairwise
    features are unavailable."""

    array: MicArray
    pairs: PairSelection | None
    grid: DirectionGrid
    stft_cfg: StftConfig
    oracle_cfg: StftConfig

    @classmethod
    def default(cls, sample_rate: int = 16000, num_mics: int = 6,
                array_diameter: float = 0.07, grid_step: float = 10.0,
                fft_size: int = 64, win_len: int = 40, hop: int = 20) -> "PipelineConfig":
        array = circular_array(num_mics, array_diameter)
        if num_mics == 6:
            pairs = PairSelection.default_six()
        elif num_mics > 1:
            pairs = PairSelection(tuple((0, j) for j in range(1, num_mics)))
        else:
            pairs = None
        cfg = StftConfig(window=hann_periodic(win_len), fft_size=fft_size,
                         hop=hop, sample_rate=sample_rate)
        return cls(array=array, pairs=pairs, grid=DirectionGrid.uniform(grid_step),
                   stft_cfg=cfg, oracle_cfg=StftConfig.oracle_mask_default(sample_rate))

    def require_pairs(self) -> PairSelection:
        if self.pairs is None:
            raise ValueError("pairwise features need at least two microphones")
        return self.pairs


@dataclass(frozen=True)
class FeatureSelection:
    """Which feature blocks to compute and whether directional blocks cover
    the target only or target plus closest interferer."""

    lps: bool = True
    cosipd: bool = True
    sinipd: bool = False
    af: bool = True
    dpr: bool = True
    cond: str = "tgt"

    def __post_init__(self) -> None:
        if self.cond not in ("tgt", "tgt+intf"):
            raise ValueError(f"cond must be 'tgt' or 'tgt+intf', got {self.cond!r}")

    @classmethod
    def from_csv(cls, names: str, cond: str = "tgt") -> "FeatureSelection":
        wanted = {n.strip() for n in names.split(",") if n.strip()}
        known = {"lps", "cosipd", "sinipd", "af", "dpr"}
        unknown = wanted - known
        if unknown:
            raise ValueError(f"unknown feature names {sorted(unknown)}; known: {sorted(known)}")
        return cls(lps="lps" in wanted, cosipd="cosipd" in wanted,
                   sinipd="sinipd" in wanted, af="af" in wanted,
                   dpr="dpr" in wanted, cond=cond)


SYNTH_KINDS = {
    "speech": synth.speech_like,
    "noise": synth.noise_burst,
    "am": synth.am_tone,
    "chirp": synth.chirp,
}


def _angle_differences(azimuths: Sequence[float]) -> list[float]:
    out = []
    for i, az in enumerate(azimuths):
        others = [a for j, a in enumerate(azimuths) if j != i]
        out.append(min_angle_difference(az, others) if others else 180.0)
    return out


def _scene_gains(rng: np.random.Generator, n_sources: int) -> list[float]:
    # First source at 0 dB, others mixed in at 0..-5 dB below it.
    return [0.0] + [float(rng.uniform(-5.0, 0.0)) for _ in range(n_sources - 1)]


def simulate_dataset(out_dir, num_scenes: int, num_speakers: int, seed: int,
                     cfg: PipelineConfig, duration: float = 2.0,
                     synth_kind: str = "speech", source_dir=None,
                     jobs: int = 1) -> Manifest:
    """Render ``num_scenes`` reverberant scenes to ``out_dir`` and write a
    manifest. Deterministic (byte-identical) for a fixed seed."""
    out = Path(out_dir)
    wav_dir = out / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    sample_rate = cfg.stft_cfg.sample_rate
    seed_rng = np.random.default_rng(seed)
    scene_seeds = seed_rng.integers(0, 2 ** 31 - 1, size=num_scenes)

    source_pool = None
    if source_dir is not None:
        source_pool = sorted(Path(source_dir).glob("*.wav"))
        if not source_pool:
            raise FileNotFoundError(f"no WAV files in source dir {source_dir}")
    elif synth_kind not in SYNTH_KINDS:
        raise ValueError(f"unknown synthetic source kind {synth_kind!r}")

    def render_one(index: int) -> UtteranceEntry:
        utt_id = f"utt_{index:05d}"
        scene_seed = int(scene_seeds[index])
        rng = np.random.default_rng(scene_seed)
        room, azimuths = sample_scene(rng, num_speakers, sample_rate=sample_rate)
        dry = [_draw_source(rng, duration, sample_rate, synth_kind, source_pool)
               for _ in range(num_speakers)]
        gains = _scene_gains(rng, num_speakers)
        scene = render_mixture(dry, room, cfg.array, mixing_gains_db=gains)
        mix_rel = f"wav/{utt_id}_mix.wav"
        write_wav(out / mix_rel, scene.mixture, sample_rate)
        ads = _angle_differences(scene.azimuths)
        sources = []
        for c in range(num_speakers):
            img_rel = f"wav/{utt_id}_src{c}_img.wav"
            dry_rel = f"wav/{utt_id}_src{c}_dry.wav"
            write_wav(out / img_rel, scene.images[c], sample_rate)
            write_wav(out / dry_rel, scene.dry_sources[c], sample_rate)
            sources.append(SourceEntry(
                azimuth_deg=float(scene.azimuths[c]),
                angle_difference_deg=float(ads[c]),
                gain_db=float(gains[c]), image=img_rel, dry=dry_rel))
        return UtteranceEntry(
            id=utt_id, seed=scene_seed, mixture=mix_rel, sources=tuple(sources),
            t60=float(room.t60),
            room_dimensions=tuple(float(d) for d in room.dimensions),
            array_center=tuple(float(x) for x in room.array_center))

    if jobs > 1 and num_scenes > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            utterances = list(pool.map(render_one, range(num_scenes)))
    else:
        utterances = [render_one(i) for i in range(num_scenes)]

    manifest = Manifest(
        sample_rate=sample_rate,
        array={"num_mics": cfg.array.num_mics,
               "ref_index": cfg.array.ref_index,
               "positions": [[float(x) for x in p] for p in cfg.array.positions]},
        utterances=tuple(utterances))
    write_manifest(out / "manifest.json", manifest)
    return read_manifest(out / "manifest.json")


def _draw_source(rng: np.random.Generator, duration: float, sample_rate: int,
                 synth_kind: str, source_pool) -> np.ndarray:
    if source_pool is None:
        return SYNTH_KINDS[synth_kind](rng, duration, sample_rate)
    path = source_pool[int(rng.integers(len(source_pool)))]
    wav, _ = read_wav(path, expected_rate=sample_rate)
    mono = wav[0]
    need = int(round(duration * sample_rate))
    if mono.size >= need:
        start = int(rng.integers(0, mono.size - need + 1))
        return mono[start:start + need]
    reps = int(np.ceil(need / mono.size))
    return np.tile(mono, reps)[:need]


def angle_difference_histogram(manifest: Manifest) -> dict[str, int]:
    """Scene counts per angle-difference bin (first source's difference)."""
    counts = dict.fromkeys(BIN_LABELS, 0)
    for u in manifest.utterances:
        if not u.sources:
            continue
        counts[BIN_LABELS[bin_index(u.sources[0].angle_difference_deg)]] += 1
    return counts


# ---------------------------------------------------------------------------
# Features


def _closest_interferer(entry: UtteranceEntry, target_index: int) -> int:
    tgt_az = entry.sources[target_index].azimuth_deg
    others = [(angle_difference(tgt_az, s.azimuth_deg), c)
              for c, s in enumerate(entry.sources) if c != target_index]
    if not others:
        raise ValueError(f"utterance {entry.id} has a single source; no interferer")
    return min(others)[1]


def compute_feature_stack(mixture: np.ndarray, target_azimuth: float,
                          cfg: PipelineConfig, selection: FeatureSelection,
                          interferer_azimuth: float | None = None):
    """Assemble the selected feature blocks for one utterance/target."""
    kernel = build_kernel(cfg.stft_cfg)
    spec = multichannel_stft(mixture, kernel)
    blocks: list[tuple[str, np.ndarray]] = []
    if selection.lps:
        blocks.append(("lps", lps(spec.channel(cfg.array.ref_index))))
    if selection.cosipd or selection.sinipd:
        cos_map, sin_map = cos_sin_ipd(spec, cfg.require_pairs())
        if selection.cosipd:
            blocks.append(("cosipd", cos_map))
        if selection.sinipd:
            blocks.append(("sinipd", sin_map))
    want_intf = selection.cond == "tgt+intf"
    if want_intf and interferer_azimuth is None:
        raise ValueError("tgt+intf features need an interferer azimuth")
    if selection.af:
        pairs = cfg.require_pairs()
        blocks.append(("af:tgt", angle_feature(spec, target_azimuth, cfg.array, pairs)))
        if want_intf:
            blocks.append(("af:intf", angle_feature(spec, interferer_azimuth,
                                                    cfg.array, pairs)))
    if selection.dpr:
        bank = das_filterbank(cfg.array, cfg.grid, cfg.stft_cfg)
        blocks.append(("dpr:tgt", dpr(spec, bank, nearest_direction(cfg.grid, target_azimuth))))
        if want_intf:
            blocks.append(("dpr:intf", dpr(spec, bank,
                                           nearest_direction(cfg.grid, interferer_azimuth))))
    return assemble_features(blocks)


def build_features(manifest: Manifest, out_dir, cfg: PipelineConfig,
                   selection: FeatureSelection, jobs: int = 1) -> list[Path]:
    """One TSNF1 file per utterance per target speaker."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(task) -> Path:
        entry, target = task
        mixture, _ = read_wav(manifest.resolve(entry.mixture),
                              expected_rate=manifest.sample_rate)
        intf_az = None
        if selection.cond == "tgt+intf":
            intf_az = entry.sources[_closest_interferer(entry, target)].azimuth_deg
        stack = compute_feature_stack(mixture, entry.sources[target].azimuth_deg,
                                      cfg, selection, intf_az)
        path = out / f"{entry.id}_tgt{target}.tsnf"
        write_features(path, stack)
        return path

    tasks = [(entry, t) for entry in manifest.utterances
             for t in range(len(entry.sources))]
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, tasks))
    return [one(t) for t in tasks]


# ---------------------------------------------------------------------------
# Separation


def _perturbed_azimuth(azimuth: float, error_deg: float, seed_parts) -> float:
    if error_deg == 0.0:
        return azimuth
    rng = np.random.default_rng(seed_parts)
    sign = 1.0 if rng.integers(2) else -1.0
    return azimuth + sign * error_deg


def separate_utterance(entry: UtteranceEntry, manifest: Manifest, method: str,
                       cfg: PipelineConfig, target: int, cond: str = "tgt",
                       alpha: float = 1.0, beta: float = 1.0,
                       azimuth_override: float | None = None) -> np.ndarray:
    """Run one separation method for one utterance/target, returning the
    estimated reference-channel waveform."""
    mixture, _ = read_wav(manifest.resolve(entry.mixture),
                          expected_rate=manifest.sample_rate)
    ref = cfg.array.ref_index
    azimuth = entry.sources[target].azimuth_deg if azimuth_override is None \
        else azimuth_override

    if method in ORACLE_METHODS:
        tgt_img, _ = read_wav(manifest.resolve(entry.sources[target].image),
                              expected_rate=manifest.sample_rate)
        others = []
        for c, src in enumerate(entry.sources):
            if c == target:
                continue
            img, _ = read_wav(manifest.resolve(src.image),
                              expected_rate=manifest.sample_rate)
            others.append(img[ref])
        mask = oracle_mask(tgt_img[ref], others, ORACLE_METHODS[method],
                           oracle_cfg=cfg.oracle_cfg)
        return apply_mask(mixture[ref], mask, cfg.oracle_cfg).estimate
    if method == "heuristic":
        kernel = build_kernel(cfg.stft_cfg)
        spec = multichannel_stft(mixture, kernel)
        bank = das_filterbank(cfg.array, cfg.grid, cfg.stft_cfg)
        pairs = cfg.require_pairs()
        af_tgt = angle_feature(spec, azimuth, cfg.array, pairs)
        dpr_tgt = dpr(spec, bank, nearest_direction(cfg.grid, azimuth))
        af_intf = dpr_intf = None
        if cond == "tgt+intf" and len(entry.sources) > 1:
            intf_az = entry.sources[_closest_interferer(entry, target)].azimuth_deg
            af_intf = angle_feature(spec, intf_az, cfg.array, pairs)
            dpr_intf = dpr(spec, bank, nearest_direction(cfg.grid, intf_az))
        mask = directional_mask(af_tgt, dpr_tgt, af_intf, dpr_intf,
                                alpha=alpha, beta=beta, cfg=cfg.stft_cfg)
        return apply_mask(mixture[ref], mask, cfg.stft_cfg).estimate
    if method == "das":
        return das_beamform(mixture, azimuth, cfg.array, cfg.stft_cfg).estimate
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def separate_dataset(manifest: Manifest, out_dir, method: str, cfg: PipelineConfig,
                     cond: str = "tgt", alpha: float = 1.0, beta: float = 1.0,
                     direction_error_deg: float = 0.0, error_seed: int = 0,
                     jobs: int = 1) -> list[Path]:
    """Separate every (utterance, target); writes estimate WAVs plus JSON
    sidecars recording the method and the azimuth actually used."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(task) -> Path:
        index, entry, target = task
        azimuth = _perturbed_azimuth(entry.sources[target].azimuth_deg,
                                     direction_error_deg,
                                     [error_seed, index, target])
        est = separate_utterance(entry, manifest, method, cfg, target,
                                 cond=cond, alpha=alpha, beta=beta,
                                 azimuth_override=azimuth)
        path = out / f"{entry.id}_tgt{target}.wav"
        write_wav(path, est, manifest.sample_rate)
        sidecar = {
            "utterance": entry.id, "target_index": target, "method": method,
            "cond": cond, "azimuth_used_deg": float(azimuth),
            "direction_error_deg": float(direction_error_deg),
            "alpha": alpha, "beta": beta,
        }
        atomic_write_bytes(path.with_suffix(".json"),
                           (json.dumps(sidecar, indent=2) + "\n").encode("utf-8"))
        return path

    tasks = [(i, entry, t) for i, entry in enumerate(manifest.utterances)
             for t in range(len(entry.sources))]
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, tasks))
    return [one(t) for t in tasks]


# ---------------------------------------------------------------------------
# Evaluation


def evaluate_dataset(manifest: Manifest, estimates_dir, method: str = "",
                     ref_index: int = 0) -> tuple[EvalReport, list[EvalRecord], list[str]]:
    """Score every (utterance, target) estimate against its reverberant
    reference image. Returns (report, records, missing-estimate names)."""
    est_dir = Path(estimates_dir)
    records: list[EvalRecord] = []
    missing: list[str] = []
    for entry in manifest.utterances:
        mixture, _ = read_wav(manifest.resolve(entry.mixture),
                              expected_rate=manifest.sample_rate)
        for target, src in enumerate(entry.sources):
            est_path = est_dir / f"{entry.id}_tgt{target}.wav"
            if not est_path.exists():
                missing.append(str(est_path))
                continue
            est, _ = read_wav(est_path, expected_rate=manifest.sample_rate)
            ref_img, _ = read_wav(manifest.resolve(src.image),
                                  expected_rate=manifest.sample_rate)
            reference = ref_img[ref_index]
            records.append(EvalRecord(
                utterance_id=f"{entry.id}_tgt{target}",
                target_azimuth=src.azimuth_deg,
                angle_difference=src.angle_difference_deg,
                si_sdr_est=si_sdr(est[0], reference),
                si_sdr_mix=si_sdr(mixture[ref_index], reference),
                method=method))
    return aggregate(records, method=method), records, missing


# ---------------------------------------------------------------------------
# Direction-error sweep

PERTURB_VARIANTS = {"af": (1.0, 0.0), "af_dpr": (1.0, 1.0)}


def perturb_sweep(manifest: Manifest, out_dir, errors: Sequence[float], seed: int,
                  cfg: PipelineConfig, cond: str = "tgt",
                  jobs: int = 1) -> dict:
    """Heuristic separation under direction estimation error.

    For every error magnitude and both heuristic variants (AF only and
    AF+DPR) runs a full separate+evaluate pass; the error sign is random per
    utterance, drawn from a dedicated seeded stream.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sweep: dict = {"seed": seed, "cond": cond,
                   "errors_deg": [float(e) for e in errors], "variants": {},
                   "note": ("single-target separators have no output-permutation "
                            "freedom; rows are strictly comparable only above 15 "
                            "degrees of angle difference")}
    for variant, (alpha, beta) in PERTURB_VARIANTS.items():
        rows = []
        for error in errors:
            est_dir = out / variant / f"err{int(round(error)):02d}"
            separate_dataset(manifest, est_dir, "heuristic", cfg, cond=cond,
                             alpha=alpha, beta=beta,
                             direction_error_deg=float(error), error_seed=seed,
                             jobs=jobs)
            report, _, missing = evaluate_dataset(
                manifest, est_dir, method=f"heuristic/{variant}")
            if missing:
                raise RuntimeError(f"missing estimates during sweep: {missing}")
            count_gt15 = sum(b.count for b in report.bins if b.lo >= 15.0)
            rows.append({"error_deg": float(error), "report": report.to_dict(),
                         "mean_gt15": report.mean_above(15.0),
                         "count_gt15": count_gt15,
                         "overall": report.overall_mean})
        sweep["variants"][variant] = rows
    return sweep


def write_sweep_reports(sweep: dict, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "sweep.json"
    atomic_write_bytes(json_path, (json.dumps(sweep, indent=2) + "\n").encode("utf-8"))
    lines = ["variant,error_deg,bin,count,mean_si_sdri"]
    for variant, rows in sweep["variants"].items():
        for row in rows:
            for b in row["report"]["bins"]:
                mean = "" if b["mean_si_sdri"] is None else f"{b['mean_si_sdri']:.6f}"
                lines.append(f"{variant},{row['error_deg']:g},{b['label']},{b['count']},{mean}")
            gt15 = "" if row["mean_gt15"] is None else f"{row['mean_gt15']:.6f}"
            overall = "" if row["overall"] is None else f"{row['overall']:.6f}"
            count = row["report"]["overall"]["count"]
            lines.append(f"{variant},{row['error_deg']:g},>15,{row['count_gt15']},{gt15}")
            lines.append(f"{variant},{row['error_deg']:g},overall,{count},{overall}")
    csv_path = out / "sweep.csv"
    atomic_write_bytes(csv_path, ("\n".join(lines) + "\n").encode("utf-8"))
    return json_path, csv_path
