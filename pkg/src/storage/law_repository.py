"""Versioned JSON storage for explicit laws."""
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from control.models import CompactQP, ExplicitLaw, Region, SynthesisStats
from errors import FingerprintError, LawFileError, LawVersionError
from utils.serialization import as_matrix, jsonable_dict, to_jsonable

logger = logging.getLogger(__name__)

LAW_FORMAT_VERSION = 1

_PRIMAL_FIELDS = ("alpha_gain", "alpha_offset", "dual_gain", "dual_offset")
_DIGEST_FIELDS = ("version", "qp_fingerprint", "dims", "variant", "layout", "regions")


class LawRepository:
    """Reads and writes explicit laws as human-readable JSON documents."""

    def __init__(self, include_primal: bool = False):
        """
        Initialize the repository.

        Args:
            include_primal: Also store each region's primal and dual maps
        """
        self.include_primal = include_primal

    def _region_payload(self, region: Region) -> Dict[str, Any]:
        payload = {
            "active_set": region.active_set,
            "n_lambda": region.n_lambda,
            "F": region.F,
            "f": region.f,
            "Fseq": region.Fseq,
            "fseq": region.fseq,
            "E": region.E,
            "K": region.K,
        }
        if self.include_primal and region.alpha_gain is not None:
            payload.update({name: getattr(region, name) for name in _PRIMAL_FIELDS})
        return jsonable_dict(payload)

    @staticmethod
    def content_digest(document: Dict[str, Any]) -> str:
        """SHA-256 over every field except the stats and the digest itself."""
        covered = {key: document.get(key) for key in _DIGEST_FIELDS}
        canonical = json.dumps(covered, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def dumps(self, law: ExplicitLaw) -> str:
        document = {
            "version": LAW_FORMAT_VERSION,
            "qp_fingerprint": law.qp_fingerprint,
            "dims": {"m": law.m, "n_chi": law.n_chi},
            "variant": law.variant,
            "layout": to_jsonable({name: list(span) for name, span in law.layout.items()}),
            "stats": law.stats.model_dump(),
            "regions": [self._region_payload(region) for region in law.regions],
        }
        document["content_digest"] = self.content_digest(document)
        return json.dumps(document, indent=1)

    def export_law(self, law: ExplicitLaw, path: Union[str, Path]) -> Path:
        """Write a law file; floats use the shortest repr that reads back bit-exact."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(law))
        logger.info(f"Exported {len(law.regions)}-region law to {path} ({path.stat().st_size} bytes)")
        return path

    def import_law(self, path: Union[str, Path], expected_qp: Optional[CompactQP] = None) -> ExplicitLaw:
        """
        Read a law file and verify its integrity.

        Args:
            path: Law file location
            expected_qp: When given, the stored QP fingerprint must match it

        Raises:
            LawFileError: File missing or not a law document
            LawVersionError: Unsupported format version
            FingerprintError: Content digest or QP fingerprint mismatch
        """
        path = Path(path)
        try:
            document = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise LawFileError(f"cannot read law file {path}: {e}") from e

        version = document.get("version") if isinstance(document, dict) else None
        if version != LAW_FORMAT_VERSION:
            raise LawVersionError(f"{path}: unsupported law format version {version!r}")
        try:
            regions_payload = document["regions"]
            digest = document["content_digest"]
            fingerprint = document["qp_fingerprint"]
            m = int(document["dims"]["m"])
            n_chi = int(document["dims"]["n_chi"])
        except (KeyError, TypeError, ValueError) as e:
            raise LawFileError(f"{path}: malformed law document ({e})") from e

        if self.content_digest(document) != digest:
            raise FingerprintError(f"{path}: law content does not match the recorded digest")
        if expected_qp is not None and expected_qp.fingerprint() != fingerprint:
            raise FingerprintError(f"{path}: law was synthesized from a different QP")

        regions = [self._region_from_payload(item, m, n_chi) for item in regions_payload]
        layout = {name: (int(span[0]), int(span[1])) for name, span in document.get("layout", {}).items()}
        return ExplicitLaw(
            regions=regions,
            qp_fingerprint=fingerprint,
            m=m,
            n_chi=n_chi,
            variant=document.get("variant", "generic"),
            layout=layout,
            stats=SynthesisStats(**document.get("stats", {})),
        )

    @staticmethod
    def _region_from_payload(item: Dict[str, Any], m: int, n_chi: int) -> Region:
        fields: Dict[str, Any] = {
            "active_set": item["active_set"],
            "n_lambda": item["n_lambda"],
            "F": as_matrix(item["F"], n_chi),
            "f": item["f"],
            "Fseq": as_matrix(item["Fseq"], n_chi),
            "fseq": item["fseq"],
            "E": as_matrix(item["E"], n_chi),
            "K": item["K"],
        }
        if "alpha_gain" in item:
            fields.update({
                "alpha_gain": as_matrix(item["alpha_gain"], n_chi),
                "alpha_offset": item["alpha_offset"],
                "dual_gain": as_matrix(item["dual_gain"], n_chi),
                "dual_offset": item["dual_offset"],
            })
        return Region(**fields)
