import json

import pytest
from click.testing import CliRunner

from app import create_app
from models import RunRecord, init_db
from services.errors import ProtocolFailure


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def app():
    return create_app()


def _records(path):
    with open(path) as f:
        return [json.loads(line) for line in f]


def test_dkg_command_writes_report_and_trace(runner, app, tmp_path):
    report = tmp_path / 'out' / 'dkg.jsonl'
    result = runner.invoke(app, ['dkg', '--n', '5', '--seed', '2', '--report', str(report), '--trace'])
    assert result.exit_code == 0, result.output
    assert 'consistency' in result.output
    records = _records(report)
    assert {r['scenario'] for r in records} == {'dkg'}
    assert {'verdict', 'output', 'cost', 'channel'} <= {r['phase'] for r in records}
    assert all(r['value'] for r in records if r['phase'] == 'verdict')
    assert _records(str(report) + '.trace.jsonl')


def test_same_seed_gives_identical_report_files(runner, app, tmp_path):
    paths = [tmp_path / 'a.jsonl', tmp_path / 'b.jsonl']
    for path in paths:
        result = runner.invoke(app, ['dkg', '--n', '5', '--seed', '9', '--adversary', 'malform-one',
                                     '--report', str(path)])
        assert result.exit_code == 0, result.output
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_run_ledger(runner, app, tmp_path):
    url = f'sqlite:///{tmp_path / "runs.db"}'
    result = runner.invoke(app, ['broadcast', '--n', '7', '--senders', '2', '--message-len', '64', '--db', url])
    assert result.exit_code == 0, result.output
    with init_db(url)() as session:
        records = RunRecord.for_seed(session, 'broadcast', 1)
        assert [(r.n, r.adversary) for r in records] == [(7, 'honest')]


def test_bad_parameters_exit_with_usage_error(runner, app):
    assert runner.invoke(app, ['dkg', '--n', '4', '--t', '2']).exit_code == 2
    assert runner.invoke(app, ['dkg', '--adversary', 'sneaky']).exit_code == 2
    assert runner.invoke(app, ['dkg', '--trace']).exit_code == 2
    assert runner.invoke(app, ['broadcast', '--sender-policy', 'rude']).exit_code == 2


def test_protocol_failure_exits_with_status_one(runner, app, monkeypatch):
    import commands

    def failing(config, strict=True):
        raise ProtocolFailure('qualified dealer set is empty')

    monkeypatch.setattr(commands, 'run', failing)
    result = runner.invoke(app, ['dkg', '--n', '5'])
    assert result.exit_code == 1
    assert 'qualified dealer set is empty' in result.output


def test_config_file(runner, app, tmp_path):
    cfg = tmp_path / 'sim.cfg'
    cfg.write_text('n = 5\nseed = 3\nbroadcast-mode = pbb\n')
    result = runner.invoke(app, ['dkg', '--config', str(cfg), '--seed', '4'])
    assert result.exit_code == 0, result.output
    assert 'n=5 t=2 seed=4' in result.output


def test_checkpoint_command(runner, app, tmp_path):
    weights = tmp_path / 'weights.txt'
    weights.write_text('3\n3\n3\n3\n')
    result = runner.invoke(app, ['checkpoint', '--weights-file', str(weights), '--epochs', '2'])
    assert result.exit_code == 0, result.output
    assert 'bootstrap' in result.output

    mismatch = runner.invoke(app, ['checkpoint', '--weights-file', str(weights), '--n', '5'])
    assert mismatch.exit_code == 2


def test_allocate_command(runner, app, tmp_path):
    weights = tmp_path / 'weights.txt'
    weights.write_text('4\n4\n4\n1\n')
    result = runner.invoke(app, ['allocate', str(weights), '--compare'])
    assert result.exit_code == 0, result.output
    assert 'divisor 4, 3 sub-IDs' in result.output
    assert 'perfect allocation: 13 sub-IDs' in result.output
    assert 'qualified: yes' in result.output

    weights.write_text('4\nzero\n')
    assert runner.invoke(app, ['allocate', str(weights)]).exit_code == 2


def test_bench_command(runner, app, tmp_path):
    rows_path = tmp_path / 'bench.jsonl'
    chart_path = tmp_path / 'bench.html'
    result = runner.invoke(app, ['bench', '--sizes', '4,6', '--s-expected', '3', '--report', str(rows_path),
                                 '--chart', str(chart_path)])
    assert result.exit_code == 0, result.output
    rows = _records(rows_path)
    assert [(r['case'], r['n']) for r in rows] == [('good', 4), ('bad', 4), ('good', 6), ('bad', 6)]
    assert all(r['exp_per_node'] > 0 for r in rows)
    assert 'plotly' in chart_path.read_text()

    assert runner.invoke(app, ['bench', '--sizes', 'four']).exit_code == 2
