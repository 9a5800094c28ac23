import numpy as np
import pytest
import rasterio
from rasterio.transform import from_origin

from habitat_cd.errors import ValidationError
from habitat_cd.raster import (
    CATEGORICAL,
    CONTINUOUS,
    Band,
    GeoGrid,
    read_raster,
    resample_to,
    stack,
    write_raster,
)

from conftest import dtm_grid, label_grid


def test_band_is_immutable():
    src = np.zeros((2, 2), dtype=np.uint8)
    band = Band(src, CATEGORICAL, "LABEL")
    src[0, 0] = 9
    assert band.values[0, 0] == 0
    with pytest.raises(ValueError):
        band.values[0, 0] = 1


@pytest.mark.parametrize("kind, tag", [("weird", "LABEL"), (CATEGORICAL, "BOGUS")])
def test_band_rejects_bad_kind_or_tag(kind, tag):
    with pytest.raises(ValidationError):
        Band(np.zeros((2, 2), dtype=np.uint8), kind, tag)


def test_score_tags_accepted():
    Band(np.zeros((2, 2)), CONTINUOUS, "SCORE:3")


def test_float_roundtrip_2x2(tmp_path):
    g = GeoGrid.from_array(np.array([[1.5, 2.0], [3.25, -4.0]], dtype=np.float32),
                           kind=CONTINUOUS, tag="DTM", pixel_size=1.0)
    write_raster(g, tmp_path / "a.tif")
    back = read_raster(tmp_path / "a.tif")
    assert (back.width, back.height, back.pixel_size) == (2, 2, 1.0)
    assert back.origin == (0.0, 0.0)
    assert back.values.dtype == np.float32
    np.testing.assert_array_equal(back.values, g.values)


def test_categorical_23_class_roundtrip(tmp_path, rs):
    values = rs.integers(0, 23, size=(40, 30)).astype(np.uint8)
    values[0, :5] = 255
    g = label_grid(values, nodata=255, origin=(500000.0, 5200000.0))
    write_raster(g, tmp_path / "l.tif")
    back = read_raster(tmp_path / "l.tif")
    assert back.bands[0].kind == CATEGORICAL
    assert back.bands[0].nodata == 255
    np.testing.assert_array_equal(back.values, values)
    assert back.is_aligned_with(g)


def test_float_nodata_preserved(tmp_path):
    v = np.arange(12, dtype=np.float32).reshape(3, 4)
    v[1, 2] = np.nan
    g = GeoGrid.from_array(v, kind=CONTINUOUS, tag="DSM", nodata=float("nan"))
    write_raster(g, tmp_path / "f.tif")
    back = read_raster(tmp_path / "f.tif")
    assert np.isnan(back.bands[0].nodata)
    assert not back.bands[0].valid_mask()[1, 2]
    np.testing.assert_array_equal(back.values, v)


def test_text_grid_roundtrip(tmp_path):
    g = dtm_grid([[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]], pixel_size=0.5, origin=(10.0, 20.0))
    write_raster(g, tmp_path / "g.txt")
    back = read_raster(tmp_path / "g.txt")
    assert back.pixel_size == 0.5 and back.origin == (10.0, 20.0)
    np.testing.assert_allclose(back.values, g.values)


def test_anisotropic_pixels_rejected(tmp_path):
    path = tmp_path / "aniso.tif"
    with rasterio.open(path, "w", driver="GTiff", width=4, height=4, count=1, dtype="uint8",
                       crs="EPSG:32633", transform=from_origin(0, 4, 1.0, 0.5)) as ds:
        ds.write(np.zeros((1, 4, 4), dtype=np.uint8))
    with pytest.raises(ValidationError, match="anisotropic pixels unsupported"):
        read_raster(path)


def test_untagged_rgb_file_bands(tmp_path, rs):
    # Written directly with rasterio, without any of our band tags.
    data = rs.integers(0, 256, size=(3, 6, 5)).astype(np.uint8)
    path = tmp_path / "rgb.tif"
    with rasterio.open(path, "w", driver="GTiff", width=5, height=6, count=3, dtype="uint8",
                       crs="EPSG:32633", transform=from_origin(0, 1.2, 0.2, 0.2)) as ds:
        ds.write(data)
    g = read_raster(path)
    assert g.tags == ["R", "G", "B"]
    assert all(b.kind == CONTINUOUS for b in g.bands)
    assert g.pixel_size == pytest.approx(0.2)
    for b, ref in zip(g.bands, data):
        np.testing.assert_array_equal(b.values, ref)


def test_unsupported_format(tmp_path):
    p = tmp_path / "x.png"
    p.write_bytes(b"not a raster")
    with pytest.raises(ValidationError):
        read_raster(p)


def test_unwritable_path(tmp_path):
    g = label_grid(np.zeros((2, 2)))
    (tmp_path / "file").write_text("")
    with pytest.raises(ValidationError):
        write_raster(g, tmp_path / "file" / "sub" / "x.tif")


def test_resample_nearest_blocks():
    src = np.array([[0, 1], [2, 3]], dtype=np.uint8)
    g = label_grid(src, pixel_size=1.0)
    out = resample_to(g, 0.2)
    assert out.shape == (10, 10)
    np.testing.assert_array_equal(out.values, np.kron(src, np.ones((5, 5), dtype=np.uint8)))
    assert set(np.unique(out.values)) <= set(np.unique(src))


@pytest.mark.parametrize("target", [0.2, 0.25, 0.5, 2.0])
def test_resample_constant(target):
    g = GeoGrid.from_array(np.full((8, 8), 7.5), kind=CONTINUOUS, tag="DTM", pixel_size=1.0)
    out = resample_to(g, target)
    np.testing.assert_allclose(out.values, 7.5, atol=1e-12)


@pytest.mark.parametrize("target", [0.2, 0.5, 2.0])
def test_resample_affine_ramp_interior(target):
    ps = 1.0
    n = 20
    xc = (np.arange(n) + 0.5) * ps
    g = GeoGrid.from_array(np.tile(xc, (n, 1)), kind=CONTINUOUS, tag="DTM", pixel_size=ps,
                           origin=(0.0, float(n)))
    out = resample_to(g, target)
    x_out = (np.arange(out.width) + 0.5) * target
    inner = (x_out > ps) & (x_out < n * ps - ps)
    np.testing.assert_allclose(out.values[:, inner], np.tile(x_out[inner], (out.height, 1)),
                               atol=1e-6)


def test_resample_nodata_propagates():
    v = np.ones((4, 4))
    v[1, 1] = np.nan
    g = GeoGrid.from_array(v, kind=CONTINUOUS, tag="DTM", nodata=float("nan"), pixel_size=1.0)
    out = resample_to(g, 0.5)
    assert np.isnan(out.values).any()
    assert np.isnan(out.values[2:4, 2:4]).all()
    np.testing.assert_allclose(out.values[~np.isnan(out.values)], 1.0)


def test_resample_empty_intersection():
    g = label_grid(np.zeros((4, 4)), pixel_size=1.0)
    with pytest.raises(ValidationError):
        resample_to(g, 1.0, (100.0, 100.0, 104.0, 104.0))


def test_resample_extent_subset():
    g = label_grid(np.arange(16).reshape(4, 4), pixel_size=1.0, origin=(0.0, 4.0))
    out = resample_to(g, 1.0, (1.0, 1.0, 3.0, 3.0))
    np.testing.assert_array_equal(out.values, [[5, 6], [9, 10]])
    assert out.origin == (1.0, 3.0)


def _cont(tag, value, origin=(0.0, 0.0)):
    return GeoGrid.from_array(np.full((4, 4), value, dtype=np.float32), kind=CONTINUOUS,
                              tag=tag, origin=origin)


def test_stack_rgb_nir_order():
    rgb = GeoGrid.from_array(np.stack([np.full((4, 4), i, np.float32) for i in range(3)]),
                             kind=CONTINUOUS, tag=["R", "G", "B"])
    nir = _cont("NIR", 3)
    out = stack([rgb, nir], ["R", "G", "B", "NIR"])
    assert out.tags == ["R", "G", "B", "NIR"]
    assert [float(b.values[0, 0]) for b in out.bands] == [0, 1, 2, 3]
    # reordering is honoured and the inputs are untouched
    out2 = stack([rgb, nir], ["NIR", "B"])
    assert out2.tags == ["NIR", "B"]
    assert rgb.tags == ["R", "G", "B"]


def test_stack_with_ndsm_level():
    grids = [_cont(t, i) for i, t in enumerate(["R", "G", "B", "NIR", "NDSM"])]
    assert len(stack(grids, ["R", "G", "B", "NIR", "NDSM"]).bands) == 5


def test_stack_misaligned():
    with pytest.raises(ValidationError, match="grids not co-registered"):
        stack([_cont("R", 0), _cont("NIR", 1, origin=(0.1, 0.0))], ["R", "NIR"])


def test_stack_missing_tag():
    with pytest.raises(ValidationError, match="missing"):
        stack([_cont("R", 0)], ["R", "NIR"])
