import hashlib
import json

from retstat import __version__
from retstat.manifest import MANIFEST_NAME, PlatformInfo, RunManifest, file_digest


def test_file_digest_matches_hashlib(tmp_path):
    """Chunked digests equal a one-shot SHA-256."""
    path = tmp_path / "digits.txt"
    data = b"3.14159" * 50_000
    path.write_bytes(data)
    assert file_digest(path) == hashlib.sha256(data).hexdigest()


def test_manifest_write_and_read(tmp_path):
    """A written manifest reads back unchanged."""
    digits = tmp_path / "e.txt"
    digits.write_bytes(b"2.71828")
    manifest = RunManifest("analyze", {"k": 5, "ell": 2}, seeds={"master": 3})
    manifest.add_input(digits)
    manifest.outputs = ["segments.csv"]
    path = manifest.write(tmp_path)
    assert path.name == MANIFEST_NAME
    data = json.loads(path.read_text())
    assert data["version"] == __version__
    assert data["inputs"][str(digits)] == file_digest(digits)
    assert RunManifest.read(path) == manifest


def test_platform_detect():
    """Platform fields are filled in."""
    info = PlatformInfo.detect()
    assert info.python
    assert info.numpy
