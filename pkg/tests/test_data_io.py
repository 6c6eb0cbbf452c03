import json

import numpy as np
import pytest

from tsf_tta import serialize
from tsf_tta.data import CsvDatasetSpec, SynthSpec, Tone, drift_profile, load_csv, synth_generate, write_csv
from tsf_tta.errors import NonFiniteValue, ParseError, SpecError
from tsf_tta.forecasters import DLinearForecaster, LinearForecaster, NormWrapper
from tsf_tta.gcm import Gcm
from tsf_tta.spectral import paas
from tsf_tta.series import make_windows


def test_load_plain_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("1,2\n3,4.5\n-1e-3,6\n")
    s = load_csv(CsvDatasetSpec(p))
    assert (s.T, s.C) == (3, 2)
    np.testing.assert_array_equal(s.values, [[1, 2], [3, 4.5], [-1e-3, 6]])


def test_load_with_header_and_timestamp(tmp_path):
    p = tmp_path / "ett.csv"
    p.write_text("date,HUFL,OT\n2016-07-01 00:00:00,5.8,30.5\n2016-07-01 01:00:00,5.7,27.8\n")
    s = load_csv(CsvDatasetSpec(p, has_timestamp_column=True, expected_columns=["HUFL", "OT"]))
    assert s.C == 2 and s.names == ("HUFL", "OT")
    np.testing.assert_array_equal(s.values[:, 1], [30.5, 27.8])


def test_parse_error_position(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,abc\n")
    with pytest.raises(ParseError) as info:
        load_csv(CsvDatasetSpec(p))
    assert (info.value.row, info.value.column) == (1, 1)
    assert "abc" in str(info.value)


def test_rejects_nan(tmp_path):
    p = tmp_path / "nan.csv"
    p.write_text("1,2\n3,nan\n")
    with pytest.raises(NonFiniteValue):
        load_csv(CsvDatasetSpec(p))


def test_ragged_rows(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(ParseError):
        load_csv(CsvDatasetSpec(p))


def test_pure_tone_synth_gives_quarter_window():
    spec = SynthSpec(T=500, C=1, tones=((Tone(4, 1.0),),), period_base=96)
    series = synth_generate(spec)
    np.testing.assert_allclose(series.values[:, 0], np.sin(2 * np.pi * 4 * np.arange(500) / 96))
    for w in make_windows(series, 96, 100, stride=37):
        assert paas(w.lookback, 720).pogt_length == 24


def test_linear_drift_endpoint():
    tones = ((Tone(3, 1.0),),)
    flat = synth_generate(SynthSpec(T=1000, C=1, tones=tones))
    drifted = synth_generate(SynthSpec(T=1000, C=1, tones=tones, drift={"kind": "linear", "total_shift": 5.0},
                                       drift_start_fraction=0.8))
    prof = drift_profile(SynthSpec(T=1000, C=1, tones=tones, drift={"kind": "linear", "total_shift": 5.0}))
    assert prof[999] == 5.0 and prof[800] == 0.0 and np.all(prof[:800] == 0.0)
    assert drifted.values[999, 0] - flat.values[999, 0] == pytest.approx(5.0, abs=1e-12)
    np.testing.assert_array_equal(drifted.values[:800], flat.values[:800])


def test_step_drift():
    spec = SynthSpec(T=10, C=1, tones=((),), drift={"kind": "step", "at_fraction": 0.5, "magnitude": 2.0})
    np.testing.assert_array_equal(synth_generate(spec).values[:, 0], [0] * 5 + [2] * 5)


def test_synth_deterministic():
    spec = SynthSpec(T=300, C=2, tones=((Tone(4),), (Tone(8, 0.5),)), noise_std=0.3, seed=11)
    np.testing.assert_array_equal(synth_generate(spec).values, synth_generate(spec).values)


@pytest.mark.parametrize("bad", [
    dict(T=0, C=1, tones=((),)),
    dict(T=10, C=2, tones=((),)),
    dict(T=10, C=1, tones=((),), noise_std=-1.0),
    dict(T=10, C=1, tones=((),), drift={"kind": "sawtooth"}),
])
def test_synth_spec_errors(bad):
    with pytest.raises(SpecError):
        synth_generate(SynthSpec(**bad))


def test_synth_spec_from_json(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps({"T": 50, "C": 1, "tones": [[{"frequency": 2, "amplitude": 1.0}]],
                             "noise_std": 0.1, "drift": {"kind": "linear", "total_shift": 1.0}}))
    assert synth_generate(SynthSpec.from_json(p)).T == 50


def test_csv_round_trip(tmp_path):
    spec = SynthSpec(T=200, C=3, tones=((Tone(4),), (Tone(8),), (Tone(12),)), noise_std=0.1,
                     drift={"kind": "linear", "total_shift": 2.0}, seed=5)
    series = synth_generate(spec)
    write_csv(series, tmp_path / "s.csv")
    back = load_csv(CsvDatasetSpec(tmp_path / "s.csv"))
    assert np.max(np.abs(back.values - series.values)) <= 1e-12
    assert back.names == series.names


@pytest.mark.parametrize("model", [
    LinearForecaster.initial(16, 8, seed=1),
    LinearForecaster.initial(16, 8, seed=1, n_vars=2),
    DLinearForecaster.initial(16, 8, kernel=7, seed=2),
    NormWrapper(DLinearForecaster.initial(16, 8, kernel=5, seed=3), epsilon=1e-4),
], ids=["linear", "linear-pervar", "dlinear", "norm-dlinear"])
def test_model_round_trip(tmp_path, rng, model):
    gin = Gcm(rng.normal(size=(2, 16, 16)), rng.normal(size=(16, 2)), rng.normal(size=2))
    serialize.save(tmp_path / "m.json", model, gcm_in=gin, meta={"L": 16})
    back, gin2, gout2, meta = serialize.load(tmp_path / "m.json")
    X = rng.normal(size=(16, 2))
    assert back.predict(X).tobytes() == model.predict(X).tobytes()
    assert gin2.W.tobytes() == gin.W.tobytes() and gout2 is None
    assert meta == {"L": 16}
    assert serialize.param_digest(back) == serialize.param_digest(model)


def test_model_document_version_check():
    text = serialize.dumps(LinearForecaster.initial(4, 2)).replace('"version": 1', '"version": 99')
    with pytest.raises(SpecError):
        serialize.loads(text)
