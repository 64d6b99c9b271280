"""Param Store for saving and loading trained auction parameters."""

import os
import tempfile
from pathlib import Path
from typing import List, Union

import numpy as np

from .errors import ParamFormatError
from .log import get_logger
from .myerson_auction import AuctionNetParams

logger = get_logger(__name__)

FORMAT_TAG = "myerson-params"
FORMAT_VERSION = "v1"


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Write text through a temporary sibling file and rename it into place.

    Args:
        path: Destination file.
        text: Full file contents.

    Returns:
        The destination path.
    """
    path = Path(path)
    # Ensure parent directory exists
    path.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.info("wrote %s", path)
    return path


class ParamStore:
    """Reads and writes the versioned plain-text parameter format."""

    def __init__(self, params_file_path: str = "./params.txt") -> None:
        """Initialize the ParamStore.

        Args:
            params_file_path: Path to the parameter file.
                Defaults to './params.txt'.
        """
        self.params_file_path = Path(params_file_path)

    @staticmethod
    def dumps(params: AuctionNetParams) -> str:
        """Serialise parameters: a header line, then `n q s log_w beta` per piece."""
        N, Q, S = params.shape
        lines: List[str] = [f"{FORMAT_TAG} {FORMAT_VERSION} {N} {Q} {S}"]
        for n, q, s in np.ndindex(N, Q, S):
            lines.append(f"{n} {q} {s} {params.log_w[n, q, s]:.17g} {params.beta[n, q, s]:.17g}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def loads(text: str) -> AuctionNetParams:
        """Parse the text produced by dumps.

        Raises:
            ParamFormatError: On a bad header, version, piece count or number.
        """
        rows = text.splitlines()
        if not rows:
            raise ParamFormatError("empty parameter file", key="header", line=1)

        header = rows[0].split()
        if len(header) != 5 or header[0] != FORMAT_TAG:
            raise ParamFormatError(f"expected '{FORMAT_TAG} <version> N Q S'", key="header", line=1)
        if header[1] != FORMAT_VERSION:
            raise ParamFormatError(f"unsupported version {header[1]}", key="header", line=1)
        try:
            N, Q, S = (int(v) for v in header[2:])
        except ValueError as exc:
            raise ParamFormatError(f"bad shape: {exc}", key="header", line=1) from exc

        log_w = np.full((N, Q, S), np.nan)
        beta = np.full((N, Q, S), np.nan)
        body = [(number, line) for number, line in enumerate(rows[1:], start=2) if line.strip()]
        if len(body) != N * Q * S:
            raise ParamFormatError(f"expected {N * Q * S} pieces, found {len(body)}", key="body", line=len(rows))

        for number, line in body:
            fields = line.split()
            try:
                n, q, s = (int(v) for v in fields[:3])
                if not (0 <= n < N and 0 <= q < Q and 0 <= s < S):
                    raise IndexError("piece index out of range")
                log_w[n, q, s] = float(fields[3])
                beta[n, q, s] = float(fields[4])
            except (ValueError, IndexError) as exc:
                raise ParamFormatError(f"unparsable piece '{line}'", key="piece", line=number) from exc

        if np.isnan(log_w).any() or np.isnan(beta).any():
            raise ParamFormatError("duplicate or missing pieces", key="body", line=len(rows))
        return AuctionNetParams(log_w, beta)

    def save_params(self, params: AuctionNetParams) -> Path:
        """Save parameters to the file atomically."""
        return atomic_write_text(self.params_file_path, self.dumps(params))

    def load_params(self) -> AuctionNetParams:
        """Load parameters from the file.

        Raises:
            ParamFormatError: If the file is missing or malformed.
        """
        try:
            text = self.params_file_path.read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise ParamFormatError(f"no parameter file at {self.params_file_path}", key="path") from exc
        return self.loads(text)
