import numpy as np
import pytest

from scanseg.data import load_dataset, save_pair
from scanseg.errors import NetpbmError
from scanseg.netpbm import read_pgm, read_ppm, write_pgm, write_ppm
from scanseg.rng import SplitMix64
from scanseg.synth import ModalityPair, SceneConfig, generate_scene


def rand(shape, seed=0):
    return SplitMix64(seed).uniform_array(shape)


# ---------------------------------------------------------------- netpbm

def test_ppm_single_white_pixel_exact_bytes(tmp_path):
    path = str(tmp_path / "white.ppm")
    write_ppm(path, np.ones((3, 1, 1)))
    blob = open(path, "rb").read()
    # header "P6\n1 1\n255\n" is 11 bytes, payload 3 -> 14 total
    assert blob == b"P6\n1 1\n255\n\xff\xff\xff"
    assert len(blob) == 14


def test_ppm_roundtrip_bitwise(tmp_path):
    path = str(tmp_path / "img.ppm")
    img = rand((3, 5, 7), seed=1)
    write_ppm(path, img)
    once = read_ppm(path)
    write_ppm(path, once)
    assert np.array_equal(read_ppm(path), once)
    assert np.max(np.abs(once - img)) <= 0.5 / 255 + 1e-12


def test_pgm_roundtrip_8_and_16_bit(tmp_path):
    img = rand((4, 6), seed=2)
    p8 = str(tmp_path / "a.pgm")
    write_pgm(p8, img, maxval=255)
    r8 = read_pgm(p8)
    write_pgm(p8, r8, maxval=255)
    assert np.array_equal(read_pgm(p8), r8)

    p16 = str(tmp_path / "b.pgm")
    write_pgm(p16, img, maxval=65535)
    r16 = read_pgm(p16)
    write_pgm(p16, r16, maxval=65535)
    assert np.array_equal(read_pgm(p16), r16)
    assert np.max(np.abs(r16 - img)) <= 0.5 / 65535 + 1e-12


def test_pgm_16bit_big_endian_layout(tmp_path):
    path = str(tmp_path / "v.pgm")
    write_pgm(path, np.array([[1.0]]), maxval=65535)
    blob = open(path, "rb").read()
    assert blob == b"P5\n1 1\n65535\n\xff\xff"
    write_pgm(path, np.array([[256 / 65535]]), maxval=65535)
    assert open(path, "rb").read()[-2:] == b"\x01\x00"  # MSB first


def test_ppm_header_with_comments(tmp_path):
    path = str(tmp_path / "c.ppm")
    with open(path, "wb") as fh:
        fh.write(b"P6\n# a comment\n2 1\n# another\n255\n" + b"\x00" * 6)
    img = read_ppm(path)
    assert img.shape == (3, 1, 2)


def test_ppm_bad_magic_offset(tmp_path):
    path = str(tmp_path / "bad.ppm")
    open(path, "wb").write(b"P5\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(NetpbmError) as e:
        read_ppm(path)
    assert e.value.byte_offset == 0


def test_ppm_truncated_payload_offset(tmp_path):
    path = str(tmp_path / "short.ppm")
    open(path, "wb").write(b"P6\n2 2\n255\n" + b"\x00" * 5)
    with pytest.raises(NetpbmError) as e:
        read_ppm(path)
    assert "truncated" in str(e.value)
    assert e.value.byte_offset == 16  # end of buffer


def test_pgm_trailing_bytes_rejected(tmp_path):
    path = str(tmp_path / "long.pgm")
    open(path, "wb").write(b"P5\n1 1\n255\n\x00\x00")
    with pytest.raises(NetpbmError, match="trailing"):
        read_pgm(path)


# ---------------------------------------------------------------- scenes

def test_scene_determinism_bitwise():
    cfg = SceneConfig(seed=3)
    a = generate_scene(cfg, 5)
    b = generate_scene(cfg, 5)
    assert np.array_equal(a.rgb, b.rgb)
    assert np.array_equal(a.xmod, b.xmod)
    assert np.array_equal(a.mask, b.mask)


def test_scene_index_changes_content():
    cfg = SceneConfig(seed=3)
    a = generate_scene(cfg, 0)
    b = generate_scene(cfg, 1)
    assert not np.array_equal(a.rgb, b.rgb)


def test_scene_kappa_zero_visible_in_rgb():
    cfg = SceneConfig(resolution=(64, 64), kappa=0.0, seed=4)
    for i in range(4):
        p = generate_scene(cfg, i)
        gap = max(abs(p.rgb[c][p.mask].mean() - p.rgb[c][~p.objects].mean())
                  for c in range(3))
        assert gap > 0.2, (i, gap)


def test_scene_kappa_one_invisible_in_rgb():
    cfg = SceneConfig(resolution=(64, 64), kappa=1.0, seed=4)
    for i in range(4):
        p = generate_scene(cfg, i)
        clean_bg = ~(p.objects | p.occluders)
        gap = max(abs(p.rgb[c][p.mask].mean() - p.rgb[c][clean_bg].mean())
                  for c in range(3))
        assert gap < cfg.noise_sigma, (i, gap)
        xgap = p.xmod[0][p.mask].mean() - p.xmod[0][clean_bg].mean()
        assert xgap > 0.2


def test_scene_mask_inside_objects_and_nonempty():
    cfg = SceneConfig(seed=5, occluder_density=1.0)
    for i in range(8):
        p = generate_scene(cfg, i)
        assert p.mask.any()
        assert not (p.mask & ~p.objects).any()


def test_scene_value_ranges():
    cfg = SceneConfig(seed=6)
    p = generate_scene(cfg, 0)
    for arr in (p.rgb, p.xmod):
        assert arr.min() >= 0.0 and arr.max() <= 1.0


# ---------------------------------------------------------------- dataset io

def test_dataset_roundtrip(tmp_path):
    root = str(tmp_path / "ds")
    cfg = SceneConfig(resolution=(32, 32), seed=7)
    originals = [generate_scene(cfg, i) for i in range(3)]
    for p in originals:
        save_pair(root, p)
    pairs, report = load_dataset(root)
    assert report.ok()
    assert [p.id for p in pairs] == ["00000", "00001", "00002"]
    for loaded, orig in zip(pairs, originals):
        assert np.array_equal(loaded.mask, orig.mask)
        assert np.max(np.abs(loaded.rgb - orig.rgb)) <= 0.5 / 255 + 1e-12


def test_dataset_empty_dir(tmp_path):
    pairs, report = load_dataset(str(tmp_path))
    assert pairs == [] and report.ok()


def test_dataset_missing_counterpart_reported(tmp_path):
    root = str(tmp_path / "ds")
    cfg = SceneConfig(resolution=(32, 32), seed=8)
    save_pair(root, generate_scene(cfg, 0))
    save_pair(root, generate_scene(cfg, 1))
    import os
    os.remove(os.path.join(root, "mask", "00001.pgm"))
    pairs, report = load_dataset(root)
    assert [p.id for p in pairs] == ["00000"]
    assert report.errors == ["00001: missing mask"]


def test_dataset_16bit_depth_modality(tmp_path):
    root = str(tmp_path / "ds")
    cfg = SceneConfig(resolution=(32, 32), seed=9)
    save_pair(root, generate_scene(cfg, 0), depth_16bit=True)
    pairs, report = load_dataset(root)
    assert report.ok() and len(pairs) == 1
    assert pairs[0].xmod.shape == (1, 32, 32)
