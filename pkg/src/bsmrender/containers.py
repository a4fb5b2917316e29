"""File formats and artifact bookkeeping.

Everything on disk is little-endian and timestamp-free so that repeated
runs with the same config produce byte-identical trees. WAV files carry a
private "bsmd" chunk holding the 16-hex-char scene digest; the custom
containers (BSMA for SH-domain signals, BSMG for binaural spectrograms)
embed the same digest in their headers. manifest.json maps artifact names
to content hashes so later stages can refuse stale or corrupted inputs.
"""

import hashlib
import json
import struct

import numpy as np

DIGEST_LEN = 16  # hex chars of sha256, enough to catch staleness


class ContainerError(ValueError):
    pass


class StaleArtifactError(RuntimeError):
    pass


# ---------------------------------------------------------------- digests

def canonical_json(obj):
    """Stable JSON encoding: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def scene_digest(config_dict, input_hashes=None):
    """Digest of the resolved run config plus any input file hashes."""
    payload = {"config": config_dict, "inputs": input_hashes or {}}
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:DIGEST_LEN]


def _check_digest(digest):
    if len(digest) != DIGEST_LEN:
        raise ContainerError(f"digest must be {DIGEST_LEN} hex chars")
    return digest.encode("ascii")


# ---------------------------------------------------------------- WAV

def write_wav(path, data, sample_rate, digest=None):
    """float32 RIFF WAV, any channel count, optional digest chunk."""
    arr = np.asarray(data)
    if arr.ndim == 1:
        arr = arr[:, None]
    frames, channels = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    block_align = channels * 4
    chunks = [
        (b"fmt ", struct.pack("<HHIIHH", 3, channels, int(sample_rate),
                              int(sample_rate) * block_align, block_align, 32)),
        (b"fact", struct.pack("<I", frames)),
    ]
    if digest is not None:
        chunks.append((b"bsmd", _check_digest(digest)))
    chunks.append((b"data", payload))
    body = b"WAVE"
    for tag, blob in chunks:
        body += tag + struct.pack("<I", len(blob)) + blob
        if len(blob) % 2:
            body += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


def read_wav(path):
    """Returns (data float32 (frames, channels), sample_rate, digest or None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise ContainerError(f"{path}: not a RIFF WAVE file")
    pos, end = 12, 8 + struct.unpack("<I", blob[4:8])[0]
    fmt = None
    data = None
    digest = None
    while pos + 8 <= end:
        tag = blob[pos : pos + 4]
        size = struct.unpack("<I", blob[pos + 4 : pos + 8])[0]
        body = blob[pos + 8 : pos + 8 + size]
        if tag == b"fmt ":
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif tag == b"data":
            data = body
        elif tag == b"bsmd":
            digest = body.decode("ascii")
        pos += 8 + size + (size % 2)
    if fmt is None or data is None:
        raise ContainerError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format != 3 or bits != 32:
        raise ContainerError(f"{path}: expected 32-bit float samples")
    arr = np.frombuffer(data, dtype="<f4").reshape(-1, channels)
    return arr, rate, digest


# ---------------------------------------------------------------- BSMA

def write_sh_signal(path, data, sample_rate, order, digest):
    """SH-domain time signal, complex64 on disk (quantization is far below
    every tolerance used downstream), shape (samples, channels)."""
    arr = np.asarray(data)
    channels = (order + 1) ** 2
    if arr.ndim != 2 or arr.shape[1] != channels:
        raise ContainerError("data shape does not match the SH order")
    header = (b"BSMA" + struct.pack("<IIIIQ", 1, int(sample_rate), int(order),
                                    channels, arr.shape[0]) + _check_digest(digest))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype="<c8").tobytes())


def read_sh_signal(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != b"BSMA":
        raise ContainerError(f"{path}: bad magic")
    version, rate, order, channels, samples = struct.unpack("<IIIIQ", blob[4:28])
    if version != 1:
        raise ContainerError(f"{path}: unsupported version {version}")
    digest = blob[28 : 28 + DIGEST_LEN].decode("ascii")
    arr = np.frombuffer(blob[28 + DIGEST_LEN :], dtype="<c8")
    arr = arr.reshape(samples, channels)
    return arr, rate, order, digest


# ---------------------------------------------------------------- BSMG

def write_binaural_spectrogram(path, left, right, config, tag, digest):
    """Binaural STFT archive: header, then left and right (frames, bins)
    complex128 blocks."""
    if left.shape != right.shape or left.ndim != 2:
        raise ContainerError("left/right must share a (frames, bins) shape")
    tag_b = tag.encode("ascii")
    header = (b"BSMG" + struct.pack("<IIIIIII", 1, int(config.sample_rate),
                                    config.window_length, config.hop,
                                    config.fft_size, left.shape[0], left.shape[1])
              + struct.pack("<I", len(tag_b)) + tag_b + _check_digest(digest))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(left, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(right, dtype="<c16").tobytes())


def read_binaural_spectrogram(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != b"BSMG":
        raise ContainerError(f"{path}: bad magic")
    (version, rate, window, hop, fft_size,
     frames, bins) = struct.unpack("<IIIIIII", blob[4:32])
    if version != 1:
        raise ContainerError(f"{path}: unsupported version {version}")
    tag_len = struct.unpack("<I", blob[32:36])[0]
    pos = 36 + tag_len
    tag = blob[36:pos].decode("ascii")
    digest = blob[pos : pos + DIGEST_LEN].decode("ascii")
    pos += DIGEST_LEN
    count = frames * bins
    flat = np.frombuffer(blob[pos:], dtype="<c16")
    if flat.size != 2 * count:
        raise ContainerError(f"{path}: truncated payload")
    meta = {"sample_rate": rate, "window_length": window, "hop": hop,
            "fft_size": fft_size, "tag": tag, "digest": digest}
    return flat[:count].reshape(frames, bins), flat[count:].reshape(frames, bins), meta


# ---------------------------------------------------------------- manifest

def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def update_manifest(out_dir, entries, digest):
    """Record artifact hashes. entries maps file name -> path."""
    path = out_dir / "manifest.json"
    manifest = read_json(path) if path.exists() else {"artifacts": {}}
    for name, p in sorted(entries.items()):
        manifest["artifacts"][name] = {"sha256": file_sha256(p),
                                       "scene_digest": digest}
    write_json(path, manifest)


def verify_artifacts(out_dir, names, expected_digest, stage):
    """Check that each named artifact exists, matches its recorded content
    hash, and was produced under the expected scene digest."""
    path = out_dir / "manifest.json"
    if not path.exists():
        raise StaleArtifactError(f"{stage}: no manifest in {out_dir}")
    manifest = read_json(path)["artifacts"]
    for name in names:
        if name not in manifest:
            raise StaleArtifactError(f"{stage}: {name} missing from manifest")
        entry = manifest[name]
        target = out_dir / name
        if not target.exists():
            raise StaleArtifactError(f"{stage}: artifact {name} not found")
        if file_sha256(target) != entry["sha256"]:
            raise StaleArtifactError(f"{stage}: artifact {name} corrupted "
                                     "(content hash mismatch)")
        if entry["scene_digest"] != expected_digest:
            raise StaleArtifactError(f"{stage}: artifact {name} is stale "
                                     f"(scene digest {entry['scene_digest']} != "
                                     f"{expected_digest})")
