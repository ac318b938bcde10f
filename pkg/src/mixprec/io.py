"""File formats: JSON documents for specs, profiles, allocations and
evaluation reports, plus a little-endian binary tensor format.

All JSON documents carry ``format_version`` and are serialized with sorted
keys, so identical payloads are byte-identical on disk.  Profile and
allocation documents embed a content hash of the network spec they were
computed from; consumers refuse hash mismatches instead of silently mixing
artifacts from different networks.

Binary tensors ("MXQT"): magic ``MXQT``, u32 rank, u32 dims[rank], f32
payload, all little-endian.  A weight container is a directory of one MXQT
file per parameter plus an ``index.json`` naming them.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .allocation import BitAllocation
from .importance import ImportanceProfile
from .network import NetworkSpec, toy_network_spec
from .profiling import LayerStats
from .synergy import SynergyProfile

FORMAT_VERSION = 1
_MAGIC = b"MXQT"


class DocumentError(ValueError):
    """Malformed or inconsistent on-disk document."""


class SpecHashMismatch(DocumentError):
    """Inputs were produced from different network specs."""


# ---------------------------------------------------------------------------
# network spec


def spec_to_dict(spec: NetworkSpec) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "network_spec",
        "blocks": spec.blocks,
        "tokens": spec.tokens,
        "embed": spec.embed,
        "heads": spec.heads,
        "mlp_dim": spec.mlp_dim,
        "classes": spec.classes,
        "patch_size": spec.patch_size,
    }


def spec_from_dict(doc: dict) -> NetworkSpec:
    try:
        if doc["kind"] != "network_spec":
            raise DocumentError(f"not a network spec document: kind={doc['kind']!r}")
        return toy_network_spec(
            blocks=int(doc["blocks"]), tokens=int(doc["tokens"]),
            embed=int(doc["embed"]), heads=int(doc["heads"]),
            mlp_dim=int(doc["mlp_dim"]), classes=int(doc["classes"]),
            patch_size=int(doc["patch_size"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DocumentError):
            raise
        raise DocumentError(f"malformed network spec document: {exc}") from exc


def spec_hash(spec: NetworkSpec) -> str:
    """sha256 over the full layer table, not just the constructor knobs."""
    payload = {
        "globals": spec_to_dict(spec),
        "layers": [
            {"id": l.id, "kind": l.kind, "name": l.name, "dims": l.dims,
             "quantizable": l.quantizable}
            for l in spec.layers
        ],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# binary tensors


def write_tensor(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise DocumentError(f"{path}: bad magic {blob[:4]!r}")
    (rank,) = struct.unpack_from("<I", blob, 4)
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    payload = blob[8 + 4 * rank:]
    expected = int(np.prod(dims, dtype=np.int64)) * 4
    if len(payload) != expected:
        raise DocumentError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)


def save_weights(dirpath, weights: dict[str, np.ndarray]) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    index = {"format_version": FORMAT_VERSION, "kind": "weights",
             "tensors": {name: name + ".mxqt" for name in sorted(weights)}}
    for name, arr in weights.items():
        write_tensor(d / (name + ".mxqt"), arr)
    (d / "index.json").write_text(json.dumps(index, sort_keys=True, indent=2) + "\n")


def load_weights(dirpath) -> dict[str, np.ndarray]:
    d = Path(dirpath)
    try:
        index = json.loads((d / "index.json").read_text())
        tensors = index["tensors"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DocumentError(f"cannot read weight index in {d}: {exc}") from exc
    return {name: read_tensor(d / fname) for name, fname in tensors.items()}


# ---------------------------------------------------------------------------
# profile document


@dataclass(frozen=True)
class ProfileDocument:
    spec_hash: str
    seed: int
    created: str
    importance: ImportanceProfile
    synergy: SynergyProfile
    stats: LayerStats
    overhead_bits: int

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "profile",
            "spec_hash": self.spec_hash,
            "seed": self.seed,
            "created": self.created,
            "T": self.importance.T,
            "layer_ids": list(self.importance.layer_ids),
            "importance": {
                "per_image": self.importance.per_image.tolist(),
                "raw": self.importance.raw.tolist(),
                "omega": self.importance.omega.tolist(),
            },
            "synergy": {
                "pairs": [list(p) for p in self.synergy.pairs],
                "s_hat": self.synergy.s_hat.tolist(),
                "epsilon": self.synergy.epsilon,
            },
            "stats": {
                "w_count": self.stats.w_count.tolist(),
                "macs": self.stats.macs.tolist(),
            },
            "unquantized_overhead_bits": self.overhead_bits,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProfileDocument":
        try:
            if doc["kind"] != "profile":
                raise DocumentError(f"not a profile document: kind={doc['kind']!r}")
            ids = tuple(int(i) for i in doc["layer_ids"])
            imp = ImportanceProfile(
                layer_ids=ids,
                per_image=np.asarray(doc["importance"]["per_image"], dtype=np.float64),
                raw=np.asarray(doc["importance"]["raw"], dtype=np.float64),
                omega=np.asarray(doc["importance"]["omega"], dtype=np.float64),
            )
            syn = SynergyProfile(
                pairs=tuple((int(a), int(b)) for a, b in doc["synergy"]["pairs"]),
                s_hat=np.asarray(doc["synergy"]["s_hat"], dtype=np.float64),
                epsilon=float(doc["synergy"]["epsilon"]),
                T=int(doc["T"]),
            )
            stats = LayerStats(
                layer_ids=ids,
                w_count=np.asarray(doc["stats"]["w_count"], dtype=np.int64),
                macs=np.asarray(doc["stats"]["macs"], dtype=np.int64),
            )
            return cls(spec_hash=str(doc["spec_hash"]), seed=int(doc["seed"]),
                       created=str(doc["created"]), importance=imp, synergy=syn,
                       stats=stats, overhead_bits=int(doc["unquantized_overhead_bits"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DocumentError):
                raise
            raise DocumentError(f"malformed profile document: {exc}") from exc


# ---------------------------------------------------------------------------
# allocation document


@dataclass(frozen=True)
class AllocationDocument:
    spec_hash: str
    mode: str
    target_bits: int
    bit_set: tuple[int, ...]
    lam: float
    allocation: BitAllocation
    slack_size: int | None
    slack_bitops: int | None

    def to_dict(self) -> dict:
        a = self.allocation
        return {
            "format_version": FORMAT_VERSION,
            "kind": "allocation",
            "spec_hash": self.spec_hash,
            "mode": self.mode,
            "target_bits": self.target_bits,
            "bit_set": list(self.bit_set),
            "lambda": self.lam,
            "feasible": a.feasible,
            "bits": list(a.bits) if a.bits is not None else None,
            "objective": a.objective,
            "size_bits": a.size_bits,
            "bitops": a.bitops,
            "slack_size": self.slack_size,
            "slack_bitops": self.slack_bitops,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AllocationDocument":
        try:
            if doc["kind"] != "allocation":
                raise DocumentError(f"not an allocation document: kind={doc['kind']!r}")
            bits = doc["bits"]
            alloc = BitAllocation(
                bits=tuple(int(b) for b in bits) if bits is not None else None,
                objective=doc["objective"],
                size_bits=doc["size_bits"],
                bitops=doc["bitops"],
                feasible=bool(doc["feasible"]),
            )
            return cls(spec_hash=str(doc["spec_hash"]), mode=str(doc["mode"]),
                       target_bits=int(doc["target_bits"]),
                       bit_set=tuple(int(b) for b in doc["bit_set"]),
                       lam=float(doc["lambda"]), allocation=alloc,
                       slack_size=doc["slack_size"], slack_bitops=doc["slack_bitops"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DocumentError):
                raise
            raise DocumentError(f"malformed allocation document: {exc}") from exc


# ---------------------------------------------------------------------------
# evaluation report


@dataclass(frozen=True)
class EvalRow:
    label: str
    bits: tuple[int, ...] | None
    mean_kl: float
    mean_logit_mse: float
    size_bits: int
    bitops: int


@dataclass(frozen=True)
class EvaluationReport:
    """Desk-scale stand-in for task-accuracy comparisons: quantized
    configurations are scored by output-distribution KL and logit MSE
    against the full-precision model, never by a benchmark metric."""

    spec_hash: str
    note: str
    rows: tuple[EvalRow, ...]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "evaluation",
            "spec_hash": self.spec_hash,
            "note": self.note,
            "rows": [
                {"label": r.label,
                 "bits": list(r.bits) if r.bits is not None else None,
                 "mean_kl": r.mean_kl, "mean_logit_mse": r.mean_logit_mse,
                 "size_bits": r.size_bits, "bitops": r.bitops}
                for r in self.rows
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvaluationReport":
        try:
            if doc["kind"] != "evaluation":
                raise DocumentError(f"not an evaluation document: kind={doc['kind']!r}")
            rows = tuple(
                EvalRow(label=str(r["label"]),
                        bits=tuple(int(b) for b in r["bits"]) if r["bits"] is not None else None,
                        mean_kl=float(r["mean_kl"]),
                        mean_logit_mse=float(r["mean_logit_mse"]),
                        size_bits=int(r["size_bits"]), bitops=int(r["bitops"]))
                for r in doc["rows"])
            return cls(spec_hash=str(doc["spec_hash"]), note=str(doc["note"]), rows=rows)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DocumentError):
                raise
            raise DocumentError(f"malformed evaluation document: {exc}") from exc

    def render_text(self) -> str:
        headers = ["label", "mean_kl", "mean_logit_mse", "size_bits", "bitops", "bits"]
        table = [headers]
        for r in self.rows:
            bits = "-" if r.bits is None else ",".join(str(b) for b in r.bits)
            table.append([r.label, f"{r.mean_kl:.6e}", f"{r.mean_logit_mse:.6e}",
                          str(r.size_bits), str(r.bitops), bits])
        widths = [max(len(row[c]) for row in table) for c in range(len(headers))]
        lines = [f"# {self.note}"]
        for i, row in enumerate(table):
            lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)))
            if i == 0:
                lines.append("  ".join("-" * widths[c] for c in range(len(headers))))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# generic json helpers


def dump_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DocumentError(f"cannot parse {path}: {exc}") from exc


def check_spec_hash(expected: str, found: str, what: str) -> None:
    if expected != found:
        raise SpecHashMismatch(
            f"{what} was computed from a different network spec "
            f"({found[:12]}... != {expected[:12]}...)")
