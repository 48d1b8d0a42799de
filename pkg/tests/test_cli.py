"""End-to-end CLI pipeline tests."""

import json

import numpy as np
import pytest
from scipy.io import wavfile

from chordlattice import chords
from chordlattice.cli import main


@pytest.fixture(scope='module')
def pipeline(tmp_path_factory):
    """Synthetic noiseless dataset plus trained n-gram and geometric models."""
    root = tmp_path_factory.mktemp('cli')
    data = root / 'data'
    assert main(['synth', '--out', str(data), '--songs', '3', '--frames',
                 '120', '--noise', '0', '--seed', '1']) == 0

    corpus = root / 'corpus.txt'
    lines = []
    for i in range(3):
        segs = chords.read_lab(data / f'song_{i:03d}.lab')
        lines.append(' '.join(chords.label_name(s.label) for s in segs))
    corpus.write_text('\n'.join(lines) + '\n')

    ngram = root / 'ngram.json'
    assert main(['lm', 'train-ngram', '--corpus', str(corpus), '--n', '2',
                 '--out', str(ngram)]) == 0
    geo = root / 'geo.json'
    assert main(['duration', 'fit', '--labs', str(data / '*.lab'),
                 '--family', 'geometric', '--out', str(geo)]) == 0
    return {'root': root, 'data': data, 'corpus': corpus,
            'ngram': ngram, 'geo': geo}


class TestDecodePipeline:
    def test_noiseless_round_trip_scores_one(self, pipeline):
        root, data = pipeline['root'], pipeline['data']
        out_lab = root / 'out.lab'
        score_json = root / 'score.json'
        assert main(['decode', '--posteriors', str(data / 'song_000.post.csv'),
                     '--lm', str(pipeline['ngram']),
                     '--duration', str(pipeline['geo']),
                     '--beam-width', '25', '--hash-count', '4',
                     '--hash-length', '5', '--out', str(out_lab),
                     '--score-json', str(score_json)]) == 0
        assert out_lab.exists()
        assert (root / 'out.lab.meta.json').exists()
        stats = json.loads(score_json.read_text())
        assert 'log_score' in stats

        report = root / 'report.json'
        csv_path = root / 'report.csv'
        fig = root / 'report.png'
        assert main(['evaluate', '--ref', str(data / 'song_000.lab'),
                     '--est', str(out_lab), '--out', str(report),
                     '--csv', str(csv_path), '--fig', str(fig)]) == 0
        summary = json.loads(report.read_text())
        assert summary['root'] == pytest.approx(1.0)
        assert summary['majmin'] == pytest.approx(1.0)
        assert summary['segmentation'] == pytest.approx(1.0)
        assert fig.exists() and fig.stat().st_size > 0
        assert csv_path.exists()

    def test_decode_is_deterministic(self, pipeline):
        root, data = pipeline['root'], pipeline['data']
        outs = []
        for name in ('d1.lab', 'd2.lab'):
            out = root / name
            assert main(['decode', '--posteriors',
                         str(data / 'song_001.post.csv'),
                         '--lm', str(pipeline['ngram']),
                         '--duration', str(pipeline['geo']),
                         '--out', str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_meta_sidecar_contents(self, pipeline):
        meta = json.loads((pipeline['root'] / 'out.lab.meta.json').read_text())
        assert 'command' in meta and 'seed' in meta
        assert str(pipeline['ngram']) in meta['model_hashes']


class TestModelCommands:
    def test_lm_eval_prints_avg_log_prob(self, pipeline, capsys):
        assert main(['lm', 'eval', '--model', str(pipeline['ngram']),
                     '--corpus', str(pipeline['corpus'])]) == 0
        out = capsys.readouterr().out
        assert 'avg log-prob' in out
        assert float(out.split(':')[1]) < 0.0

    def test_duration_eval(self, pipeline, capsys):
        assert main(['duration', 'eval', '--model', str(pipeline['geo']),
                     '--labs', str(pipeline['data'] / '*.lab')]) == 0
        assert 'avg duration log-prob' in capsys.readouterr().out

    def test_duration_fit_negbinomial(self, pipeline):
        out = pipeline['root'] / 'nb.json'
        assert main(['duration', 'fit', '--labs',
                     str(pipeline['data'] / '*.lab'),
                     '--family', 'negbinomial', '--out', str(out)]) == 0
        blob = json.loads(out.read_text())
        assert blob['family'] == 'negbinomial'

    def test_duration_trace_with_figure(self, pipeline):
        root = pipeline['root']
        trace_csv = root / 'trace.csv'
        fig = root / 'trace.png'
        assert main(['duration', 'trace', '--model', str(pipeline['geo']),
                     '--lab', str(pipeline['data'] / 'song_000.lab'),
                     '--out', str(trace_csv), '--fig', str(fig)]) == 0
        rows = np.loadtxt(trace_csv, delimiter=',', skiprows=1)
        assert rows.shape[1] == 2
        assert fig.exists() and fig.stat().st_size > 0

    def test_rnn_lm_train_and_pca(self, pipeline):
        root = pipeline['root']
        model = root / 'gru_lm.json'
        assert main(['lm', 'train-rnn', '--corpus', str(pipeline['corpus']),
                     '--out', str(model), '--hidden', '6', '--embed', '4',
                     '--epochs', '2', '--batch-size', '2', '--lr', '0.01',
                     '--anneal-from', '1']) == 0
        coords = root / 'pca.csv'
        fig = root / 'pca.png'
        assert main(['lm', 'pca', '--model', str(model), '--out', str(coords),
                     '--fig', str(fig)]) == 0
        lines = coords.read_text().strip().splitlines()
        assert len(lines) == 26   # header + 25 classes
        assert fig.exists() and fig.stat().st_size > 0

    def test_duration_train(self, pipeline):
        out = pipeline['root'] / 'gru_dur.json'
        assert main(['duration', 'train', '--labs',
                     str(pipeline['data'] / '*.lab'), '--out', str(out),
                     '--hidden', '4', '--epochs', '2', '--batch-size', '2',
                     '--lr', '0.01', '--clip', '1.0']) == 0
        assert json.loads(out.read_text())['family'] == 'gru'


class TestFeaturesAndAcoustic:
    def test_features_extract_and_acoustic(self, tmp_path):
        wav = tmp_path / 'tone.wav'
        t = np.arange(44100) / 44100
        tone = 0.4 * np.sin(2 * np.pi * 261.63 * t)
        wavfile.write(wav, 44100, (tone * 32767).astype(np.int16))
        spec_csv = tmp_path / 'spec.csv'
        assert main(['features', 'extract', '--in', str(wav),
                     '--out', str(spec_csv)]) == 0
        assert spec_csv.exists()

        lab = tmp_path / 'tone.lab'
        lab.write_text('0.0 1.0 C:maj\n')
        model = tmp_path / 'clf.json'
        assert main(['acoustic', 'train', '--features', str(spec_csv),
                     '--labs', str(lab), '--out', str(model),
                     '--context', '3', '--epochs', '30', '--lr', '0.05']) == 0
        post_csv = tmp_path / 'post.csv'
        assert main(['acoustic', 'predict', '--model', str(model),
                     '--features', str(spec_csv), '--out', str(post_csv)]) == 0
        probs = np.loadtxt(post_csv, delimiter=',')
        assert probs.shape == (10, 25)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_acoustic_import_validates(self, tmp_path):
        src = tmp_path / 'post.csv'
        np.savetxt(src, np.full((4, 25), 1 / 25), delimiter=',')
        out = tmp_path / 'validated.csv'
        assert main(['acoustic', 'import', '--in', str(src),
                     '--out', str(out)]) == 0
        bad = tmp_path / 'bad.csv'
        np.savetxt(bad, np.full((4, 24), 1 / 24), delimiter=',')
        assert main(['acoustic', 'import', '--in', str(bad),
                     '--out', str(out)]) == 2


class TestExitCodes:
    def test_usage_error(self):
        assert main(['decode', '--posteriors']) == 1
        assert main(['no-such-command']) == 1

    def test_validation_error_missing_file(self, tmp_path):
        assert main(['lm', 'eval', '--model', str(tmp_path / 'none.json'),
                     '--corpus', str(tmp_path / 'none.txt')]) == 2

    def test_validation_error_bad_corpus(self, tmp_path, pipeline):
        bad = tmp_path / 'bad.txt'
        bad.write_text('H:maj Q:min\n')
        assert main(['lm', 'eval', '--model', str(pipeline['ngram']),
                     '--corpus', str(bad)]) == 2

    def test_synth_deterministic(self, tmp_path):
        a, b = tmp_path / 'a', tmp_path / 'b'
        for out in (a, b):
            assert main(['synth', '--out', str(out), '--songs', '1',
                         '--frames', '30', '--noise', '0.5',
                         '--seed', '42']) == 0
        assert (a / 'song_000.post.csv').read_bytes() == \
            (b / 'song_000.post.csv').read_bytes()
