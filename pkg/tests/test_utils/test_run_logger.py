"""
Test Run Logger
"""
from modcomb.utils.run_logger import get_run_history, log_event


def test_events_grouped_by_run(tmp_path, monkeypatch):
    """Test that history returns one run's events in order"""
    monkeypatch.setenv('MODCOMB_LOG_DIR', str(tmp_path))

    log_event('run-a', 'run_started', {'experiment': 'nu_rate'})
    log_event('run-b', 'run_started')
    log_event('run-a', 'run_finished', {'files': ['summary.json']})

    history = get_run_history('run-a')

    assert [e['action'] for e in history] == ['run_started', 'run_finished']
    assert history[0]['metadata'] == {'experiment': 'nu_rate'}
    assert len(list(tmp_path.glob('run_*.jsonl'))) == 1


def test_missing_log_directory(tmp_path, monkeypatch):
    """Test an empty history when nothing was logged"""
    monkeypatch.setenv('MODCOMB_LOG_DIR', str(tmp_path / 'absent'))

    assert get_run_history('run-a') == []
