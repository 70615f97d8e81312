import pytest
import torch

from coral.tensorio import (
    MAGIC,
    BlobFormatError,
    ManifestError,
    blob_to_tensor,
    read_manifest,
    read_tensor,
    tensor_to_blob,
    write_manifest,
    write_tensor,
)


def test_blob_round_trip_bitwise(tmp_path):
    t = torch.randn(3, 5, 7, generator=torch.Generator().manual_seed(0))
    write_tensor(tmp_path / "t.f32", t)
    back = read_tensor(tmp_path / "t.f32")
    assert torch.equal(t, back)


def test_blob_scalar_and_empty():
    for t in (torch.tensor(3.5), torch.zeros(0)):
        assert torch.equal(blob_to_tensor(tensor_to_blob(t)), t)


def test_blob_bad_magic():
    raw = b"WRONGMAG" + tensor_to_blob(torch.ones(2))[8:]
    with pytest.raises(BlobFormatError):
        blob_to_tensor(raw)


def test_blob_truncated_payload():
    raw = tensor_to_blob(torch.ones(4))
    with pytest.raises(BlobFormatError):
        blob_to_tensor(raw[:-3])


def test_blob_truncated_header():
    with pytest.raises(BlobFormatError):
        blob_to_tensor(MAGIC + b"\x01")


def test_manifest_round_trip(tmp_path):
    entries = {"format_version": "1", "prompt": "blue eyes = nice", "seed": "42"}
    write_manifest(tmp_path / "m.txt", entries)
    assert read_manifest(tmp_path / "m.txt") == entries


def test_manifest_missing_file(tmp_path):
    with pytest.raises(ManifestError):
        read_manifest(tmp_path / "nope.txt")


def test_manifest_rejects_newline_value(tmp_path):
    with pytest.raises(ManifestError):
        write_manifest(tmp_path / "m.txt", {"a": "b\nc"})
